//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured value. Tolerances are pinned in the assertions.
//!
//! Run with `cargo test -p mddx-cli --test acceptance -- --nocapture`.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use mddx_core::cohort::{self, ParticipantRecord, Value};
use mddx_core::features::Label;
use mddx_core::grpo::{
    self, grpo_objective, grpo_objective_and_grad, AdvantageMode, GrpoConfig, RolloutGroup,
    RolloutOutput,
};
use mddx_core::metrics;
use mddx_core::narrative::{self, make_qa, Tier};
use mddx_core::oracle::SimOracle;
use mddx_core::policy::{self, sample, PolicyGrad, PolicyParams, TokenSeq};
use mddx_core::reasoner::{self, PipelineConfig, SampleStatus};
use mddx_core::seed::{rng_for, subseed};
use mddx_core::tokenizer::CompactTokenizer;
use mddx_core::toytask::{generate_separable, sft_corpus, task_from_records};
use rand::Rng;

fn pass(criterion: u32, detail: impl std::fmt::Display) {
    println!("criterion {criterion:02} PASS: {detail}");
}

// ---------------------------------------------------------------------------
// 1. gradient oracles
// ---------------------------------------------------------------------------

fn max_rel_error_sft(params: &PolicyParams, batch: &[TokenSeq], probes: usize) -> f64 {
    let (_, grad) = policy::sft_loss_and_grad(params, batch).unwrap();
    let h = 1e-5;
    let n = params.num_params();
    let mut worst = 0.0f64;
    for probe in 0..probes {
        let i = (probe * 131 + 17) % n;
        let mut plus = params.clone();
        plus.set_param(i, params.get_param(i) + h);
        let mut minus = params.clone();
        minus.set_param(i, params.get_param(i) - h);
        let fd = (policy::sft_loss(&plus, batch).unwrap() - policy::sft_loss(&minus, batch).unwrap())
            / (2.0 * h);
        let g = grad.get_param(i);
        worst = worst.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
    }
    worst
}

fn sample_groups(params_old: &PolicyParams, n_groups: usize, g: usize, root: u64) -> Vec<RolloutGroup> {
    let tok = CompactTokenizer::get();
    let mut rng = rng_for(root, "acc-groups", &[]);
    (0..n_groups)
        .map(|i| {
            let prompt = vec![
                tok.bos(),
                tok.tok("tier_complex"),
                rng.gen_range(13..29),
                rng.gen_range(13..29),
                tok.sep(),
            ];
            let outputs: Vec<RolloutOutput> = (0..g)
                .map(|s| {
                    let (seq, lps) = sample(
                        params_old,
                        &prompt,
                        8,
                        1.0,
                        subseed(root, "acc-rollout", &[i as u64, s as u64]),
                        Some(tok.eos()),
                    )
                    .unwrap();
                    let text = tok.decode(seq.target());
                    RolloutOutput {
                        seq,
                        text,
                        old_log_prob: lps.iter().sum(),
                        reward: mddx_core::grpo::RewardBreakdown {
                            r_acc: 0.0,
                            r_fmt: 0.0,
                            combined: rng.gen(),
                        },
                        advantage: 0.0,
                    }
                })
                .collect();
            RolloutGroup::new(format!("g{i}"), outputs, AdvantageMode::StdNormalized).unwrap()
        })
        .collect()
}

#[test]
fn criterion_01_gradient_oracles() {
    let started = Instant::now();
    let v = CompactTokenizer::get().vocab_size();

    // SFT gradient against central finite differences
    let params = PolicyParams::random_init(v, 32, 6, 301);
    let mut rng = rng_for(302, "acc-sft", &[]);
    let batch: Vec<TokenSeq> = (0..4)
        .map(|_| {
            let len = rng.gen_range(4..12usize);
            let tokens: Vec<u32> = (0..len).map(|_| rng.gen_range(0..v as u32)).collect();
            TokenSeq::new(tokens, rng.gen_range(1..4)).unwrap()
        })
        .collect();
    let sft_err = max_rel_error_sft(&params, &batch, 100);
    assert!(sft_err < 1e-4, "SFT gradient error {sft_err}");

    // GRPO gradient against central finite differences
    let params_old = PolicyParams::random_init(v, 32, 6, 303);
    let mut params_new = PolicyParams::random_init(v, 32, 6, 304);
    for i in 0..params_new.num_params() {
        let blended = 0.9 * params_old.get_param(i) + 0.1 * params_new.get_param(i);
        params_new.set_param(i, blended);
    }
    let params_ref = PolicyParams::random_init(v, 32, 6, 305);
    let groups = sample_groups(&params_old, 3, 4, 306);
    let cfg = GrpoConfig {
        group_size: 4,
        kl_beta: 0.05,
        ..GrpoConfig::default()
    };
    let (_, grad) =
        grpo_objective_and_grad(&params_new, &params_old, &params_ref, &groups, &cfg).unwrap();
    let h = 1e-5;
    let n = params_new.num_params();
    let mut grpo_err = 0.0f64;
    for probe in 0..100 {
        let i = (probe * 257 + 11) % n;
        let mut plus = params_new.clone();
        plus.set_param(i, params_new.get_param(i) + h);
        let mut minus = params_new.clone();
        minus.set_param(i, params_new.get_param(i) - h);
        let fd = (grpo_objective(&plus, &params_old, &params_ref, &groups, &cfg).unwrap()
            - grpo_objective(&minus, &params_old, &params_ref, &groups, &cfg).unwrap())
            / (2.0 * h);
        let g = grad.get_param(i);
        grpo_err = grpo_err.max((fd - g).abs() / fd.abs().max(g.abs()).max(1e-8));
    }
    assert!(grpo_err < 1e-4, "GRPO gradient error {grpo_err}");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "gradient oracles took {elapsed:.1}s");
    pass(
        1,
        format!("SFT max rel err {sft_err:.2e}, GRPO max rel err {grpo_err:.2e}, {elapsed:.1}s"),
    );
}

// ---------------------------------------------------------------------------
// 2. uniform-policy exactness
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_uniform_policy_exactness() {
    let v = 16usize;
    let params = PolicyParams::uniform(v, 32, 4);
    let batch = vec![
        TokenSeq::new(vec![1, 2, 3, 4, 5], 1).unwrap(),
        TokenSeq::new(vec![7, 6, 5], 1).unwrap(),
    ];
    let (report, _) = policy::sft_loss_and_grad(&params, &batch).unwrap();
    let expected = (v as f64).ln();
    let err = (report.per_token_nll - expected).abs();
    assert!(err < 1e-9, "per-token NLL {} vs ln V {}", report.per_token_nll, expected);
    pass(2, format!("per-token NLL = ln {v} within {err:.1e}"));
}

// ---------------------------------------------------------------------------
// 3. GRPO structural checks
// ---------------------------------------------------------------------------

#[test]
fn criterion_03_grpo_structural() {
    // per-group advantage mean 0 +- 1e-9
    let mut rng = rng_for(401, "adv", &[]);
    for _ in 0..200 {
        let g = rng.gen_range(2..12usize);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen()).collect();
        for mode in [AdvantageMode::StdNormalized, AdvantageMode::MeanOnly] {
            let adv = grpo::group_advantages(&rewards, mode).unwrap();
            let mean = adv.iter().sum::<f64>() / g as f64;
            assert!(mean.abs() < 1e-9, "advantage mean {mean}");
        }
    }

    // scalar clip cases evaluate exactly
    let eps = 0.2;
    let clip_value = |rho: f64, a: f64| (rho * a).min(rho.clamp(1.0 - eps, 1.0 + eps) * a);
    assert_eq!(clip_value(1.5, 1.0), 1.2);
    assert_eq!(clip_value(0.5, -1.0), -0.8);

    // at pi_new = pi_old: zero clip fraction and gradient identical to an
    // independently coded advantage-weighted policy gradient
    let v = CompactTokenizer::get().vocab_size();
    let params = PolicyParams::random_init(v, 32, 6, 402);
    let groups = sample_groups(&params, 4, 4, 403);
    let cfg = GrpoConfig {
        group_size: 4,
        kl_beta: 0.3,
        ..GrpoConfig::default()
    };
    let (stats, grad) = grpo_objective_and_grad(&params, &params, &params, &groups, &cfg).unwrap();
    assert_eq!(stats.clip_fraction, 0.0);

    let mut reinforce = PolicyGrad::zeros_like(&params);
    for group in &groups {
        let scale = 1.0 / (groups.len() as f64 * group.outputs.len() as f64);
        for output in &group.outputs {
            let w = scale * output.advantage;
            let seq = &output.seq;
            for t in seq.split..seq.tokens.len() {
                let z = params.logits(&seq.tokens, t);
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = z.iter().map(|x| (x - max).exp()).sum();
                let p: Vec<f64> = z.iter().map(|x| (x - max).exp() / denom).collect();
                let mut dz: Vec<f64> = p.iter().map(|pi| -w * pi).collect();
                dz[seq.tokens[t] as usize] += w;
                reinforce.accumulate_logit_grad(&params, &seq.tokens, t, &dz);
            }
        }
    }
    let mut worst = 0.0f64;
    for i in 0..params.num_params() {
        worst = worst.max((grad.get_param(i) - reinforce.get_param(i)).abs());
    }
    assert!(worst < 1e-6, "REINFORCE mismatch {worst}");
    pass(3, format!("clip cases exact, clip fraction 0, REINFORCE match {worst:.1e}"));
}

// ---------------------------------------------------------------------------
// 4. toy RL convergence
// ---------------------------------------------------------------------------

/// Format-primed initialization: supervised training on the same prompts
/// with alternating (uninformative) labels teaches the output scaffold but
/// not the diagnosis rule, leaving the rule itself to reinforcement.
fn format_primed_policy(records: &[ParticipantRecord], seed: u64) -> PolicyParams {
    let tok = CompactTokenizer::get();
    let scrambled: Vec<ParticipantRecord> = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let mut r = r.clone();
            r.label = if i % 2 == 0 { Label::Mdd } else { Label::Hc };
            r
        })
        .collect();
    let corpus = sft_corpus(&scrambled, Tier::ComplexCot);
    let base = PolicyParams::random_init(tok.vocab_size(), 48, 16, subseed(seed, "base", &[]));
    let (primed, _) =
        policy::train_sft(base, &corpus, 150, 0.5, 16, subseed(seed, "prime", &[])).unwrap();
    primed
}

#[test]
fn criterion_04_toy_rl_convergence() {
    let started = Instant::now();
    let train_records = generate_separable(512, 1001);
    let eval_records = generate_separable(200, 1002);
    let task = task_from_records(&train_records, Tier::ComplexCot);
    let eval_task = task_from_records(&eval_records, Tier::ComplexCot);

    let primed = {
        let tok = CompactTokenizer::get();
        let scrambled: Vec<ParticipantRecord> = train_records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                r.label = if i % 2 == 0 { Label::Mdd } else { Label::Hc };
                r
            })
            .collect();
        let corpus = sft_corpus(&scrambled, Tier::ComplexCot);
        let base = PolicyParams::random_init(tok.vocab_size(), 48, 16, 1003);
        policy::train_sft(base, &corpus, 150, 0.5, 16, 1004).unwrap().0
    };

    let cfg = GrpoConfig {
        group_size: 8,
        clip_eps: 0.2,
        kl_beta: 0.01,
        mu: 0.9,
        nu: 0.1,
        lr: 5.0,
        updates: 55,
        sync_every: 1,
        advantage_mode: AdvantageMode::MeanOnly,
        max_new_tokens: 24,
        queries_per_update: 0,
        rollout_temperature: 0.7,
        reseed_rollouts: false,
        seed: 1005,
    };
    let run = grpo::train_rl(primed, &task, &cfg).unwrap();

    let rewards: Vec<f64> = run.stats.iter().map(|s| s.mean_reward).collect();
    for i in 1..50 {
        assert!(
            rewards[i] > rewards[i - 1],
            "mean reward not strictly increasing at update {i}: {} -> {}",
            rewards[i - 1],
            rewards[i]
        );
    }
    let accuracy = grpo::accuracy(&run.params, &eval_task).unwrap();
    assert!(accuracy >= 0.95, "final accuracy {accuracy}");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "toy RL run took {elapsed:.1}s");
    pass(
        4,
        format!(
            "reward {:.3} -> {:.3} strictly increasing over 50 updates, accuracy {accuracy:.3}, {elapsed:.1}s",
            rewards[0], rewards[49]
        ),
    );
}

// ---------------------------------------------------------------------------
// 5. ablation direction
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_ablation_direction() {
    let tok = CompactTokenizer::get();
    for root in [101u64, 202, 303] {
        let train = generate_separable(128, subseed(root, "train", &[]));
        let eval_records = generate_separable(200, subseed(root, "eval", &[]));
        let task = task_from_records(&train, Tier::ComplexCot);
        let eval_task = task_from_records(&eval_records, Tier::ComplexCot);

        let base = PolicyParams::random_init(tok.vocab_size(), 48, 16, subseed(root, "base", &[]));
        let corpus = sft_corpus(&train, Tier::ComplexCot);
        let (sft, _) =
            policy::train_sft(base.clone(), &corpus, 40, 0.3, 16, subseed(root, "sft", &[]))
                .unwrap();

        let rl_cfg = GrpoConfig {
            group_size: 8,
            lr: 3.0,
            updates: 40,
            rollout_temperature: 0.8,
            seed: subseed(root, "rl", &[]),
            ..GrpoConfig::default()
        };
        let sft_rl = grpo::train_rl(sft.clone(), &task, &rl_cfg).unwrap().params;
        let rl_only = grpo::train_rl(base.clone(), &task, &rl_cfg).unwrap().params;

        let acc = |p: &PolicyParams| grpo::accuracy(p, &eval_task).unwrap();
        let (a_base, a_sft, a_rl, a_both) = (acc(&base), acc(&sft), acc(&rl_only), acc(&sft_rl));
        assert!(
            a_both >= a_sft && a_sft >= a_base,
            "seed {root}: SFT+RL {a_both} >= SFT {a_sft} >= base {a_base} violated"
        );
        assert!(
            a_both >= a_rl && a_rl >= a_base,
            "seed {root}: SFT+RL {a_both} >= RL {a_rl} >= base {a_base} violated"
        );
        pass(
            5,
            format!(
                "seed {root}: base {a_base:.2} <= sft {a_sft:.2} <= sft+rl {a_both:.2}, rl-only {a_rl:.2}"
            ),
        );
    }
}

// ---------------------------------------------------------------------------
// 6. beta sweep
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_beta_sweep() {
    let records = generate_separable(64, 601);
    let task = task_from_records(&records, Tier::ComplexCot);
    let primed = format_primed_policy(&records, 602);

    let run = |beta: f64| {
        let cfg = GrpoConfig {
            group_size: 8,
            kl_beta: beta,
            lr: 0.01,
            updates: 60,
            rollout_temperature: 0.8,
            advantage_mode: AdvantageMode::MeanOnly,
            seed: 603, // paired: identical seed for both arms
            ..GrpoConfig::default()
        };
        let run = grpo::train_rl(primed.clone(), &task, &cfg).unwrap();
        run.stats.last().unwrap().kl
    };
    let kl_strong = run(100.0);
    let kl_free = run(0.0);
    assert!(kl_strong < 1e-2, "KL with beta=100 is {kl_strong}");
    assert!(
        kl_strong < kl_free,
        "KL(beta=100) {kl_strong} should be below KL(beta=0) {kl_free}"
    );
    pass(6, format!("KL beta=100: {kl_strong:.2e} < 1e-2 and < KL beta=0: {kl_free:.2e}"));
}

// ---------------------------------------------------------------------------
// 7. AUC equivalence
// ---------------------------------------------------------------------------

/// O(n^2) pair-counting oracle, ties worth 1/2.
fn brute_force_auc(labels: &[bool], scores: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

#[test]
fn criterion_07_auc_equivalence() {
    // worked case
    let roc = metrics::roc_auc(&[true, false, true, false], &[0.9, 0.8, 0.7, 0.2]).unwrap();
    assert_eq!(roc.auc, 0.75);

    let mut rng = rng_for(701, "auc", &[]);
    let mut checked = 0;
    while checked < 1000 {
        let n = rng.gen_range(4..=200usize);
        let labels: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        if labels.iter().all(|l| *l) || labels.iter().all(|l| !*l) {
            continue;
        }
        // coarse score grid forces plenty of ties
        let grid = rng.gen_range(2..12u32);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..grid) as f64 / grid as f64)
            .collect();
        let fast = metrics::roc_auc(&labels, &scores).unwrap().auc;
        let brute = brute_force_auc(&labels, &scores);
        assert_eq!(fast, brute, "n={n} grid={grid}");
        checked += 1;
    }
    pass(7, "fast AUC equals pair counting exactly on 1000 tie-heavy cases");
}

// ---------------------------------------------------------------------------
// 8. DeLong
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_delong() {
    // self-comparison null
    let labels: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
    let scores: Vec<f64> = (0..40).map(|i| (i * 7 % 13) as f64).collect();
    let null = metrics::delong_test(&labels, &scores, &scores).unwrap();
    assert_eq!(null.z, 0.0);
    assert_eq!(null.p_value, 1.0);

    // reporting schema includes a p-value field
    let json = serde_json::to_value(&null).unwrap();
    assert!(json.get("p_value").is_some());

    // variance against a stratified bootstrap oracle on simulated n = 200
    let mut rng = rng_for(801, "delong", &[]);
    let n = 200usize;
    let labels: Vec<bool> = (0..n).map(|i| i < 100).collect();
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let scores_a: Vec<f64> = labels
        .iter()
        .map(|l| if *l { 0.9 } else { 0.0 } + normal(&mut rng))
        .collect();
    // correlated second classifier: shares half the signal
    let scores_b: Vec<f64> = labels
        .iter()
        .zip(&scores_a)
        .map(|(l, a)| 0.5 * a + if *l { 0.2 } else { 0.0 } + 0.8 * normal(&mut rng))
        .collect();

    let analytic = metrics::delong_test(&labels, &scores_a, &scores_b).unwrap();

    let pos_idx: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let neg_idx: Vec<usize> = (0..n).filter(|&i| !labels[i]).collect();
    let replicates = 10_000;
    let mut diffs = Vec::with_capacity(replicates);
    for _ in 0..replicates {
        let mut boot_labels = Vec::with_capacity(n);
        let mut boot_a = Vec::with_capacity(n);
        let mut boot_b = Vec::with_capacity(n);
        for _ in 0..pos_idx.len() {
            let i = pos_idx[rng.gen_range(0..pos_idx.len())];
            boot_labels.push(true);
            boot_a.push(scores_a[i]);
            boot_b.push(scores_b[i]);
        }
        for _ in 0..neg_idx.len() {
            let i = neg_idx[rng.gen_range(0..neg_idx.len())];
            boot_labels.push(false);
            boot_a.push(scores_a[i]);
            boot_b.push(scores_b[i]);
        }
        let auc_a = metrics::roc_auc(&boot_labels, &boot_a).unwrap().auc;
        let auc_b = metrics::roc_auc(&boot_labels, &boot_b).unwrap().auc;
        diffs.push(auc_a - auc_b);
    }
    let mean = diffs.iter().sum::<f64>() / replicates as f64;
    let boot_var =
        diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (replicates - 1) as f64;
    let rel = (analytic.var_diff - boot_var).abs() / boot_var;
    assert!(
        rel < 0.10,
        "DeLong variance {} vs bootstrap {} (rel {rel:.3})",
        analytic.var_diff,
        boot_var
    );
    pass(
        8,
        format!(
            "self z=0 p=1; variance {:.3e} within {:.1}% of bootstrap {:.3e}",
            analytic.var_diff,
            rel * 100.0,
            boot_var
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. published-table F1 cross-check
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_table2_crosscheck() {
    // (method, reported F1, PPV, SENS)
    let rows = [
        ("SVM", 0.6517, 0.6438, 0.6596),
        ("RF", 0.6341, 0.6791, 0.5947),
        ("LightGBM", 0.6707, 0.6908, 0.6516),
        ("XGBoost", 0.6704, 0.6858, 0.6554),
        ("CatBoost", 0.6717, 0.6961, 0.6486),
        ("MLP", 0.6301, 0.6793, 0.5877),
        ("ResNet1D", 0.6644, 0.6945, 0.6369),
        ("LLaMA3.1 8B", 0.5229, 0.6013, 0.4625),
        ("Qwen2.5 7B", 0.5852, 0.6182, 0.5411),
        ("MDD-LLM 8B", 0.7642, 0.7524, 0.7763),
        ("MDD-Thinker 7B", 0.8081, 0.7838, 0.8291),
    ];
    let mut worst: (f64, &str) = (0.0, "");
    for (name, reported, ppv, sens) in rows {
        let recomputed = metrics::f1_from_ppv_sens(ppv, sens);
        let diff = (recomputed - reported).abs();
        assert!(diff < 0.01, "{name}: recomputed {recomputed:.4} vs reported {reported}");
        if diff > worst.0 {
            worst = (diff, name);
        }
    }
    pass(9, format!("11 rows within 0.01 (worst {:.4} at {})", worst.0, worst.1));
}

// ---------------------------------------------------------------------------
// 10. serializer fidelity
// ---------------------------------------------------------------------------

fn reference_record() -> ParticipantRecord {
    let mut values = BTreeMap::new();
    for (k, v) in [
        ("age", 60.0),
        ("bmi", 24.5),
        ("sleep_duration", 6.0),
        ("alcohol_per_week", 3.0),
        ("income", 45_000.0),
        ("work_hours_per_week", 38.0),
        ("hdl_cholesterol", 2.08),
        ("ldl_cholesterol", 2.61),
        ("total_cholesterol", 4.78),
        ("triglycerides", 1.33),
    ] {
        values.insert(k.to_string(), Value::Num(v));
    }
    for (k, v) in [
        ("sex", "female"),
        ("sleeplessness", "sometimes"),
        ("self_harm_history", "no"),
        ("employment_status", "employed"),
        ("education", "o_levels"),
        ("long_standing_illness", "no"),
    ] {
        values.insert(k.to_string(), Value::cat(v));
    }
    ParticipantRecord {
        id: "REF".into(),
        values,
        label: Label::Hc,
    }
}

const REFERENCE_PARAGRAPH: &str = "The participant is a 60-year-old female with a body mass index (BMI) of 24.5 kg/m². She experiences occasional sleeplessness and typically sleeps six hours per night. She consumes alcohol about three times per week and has no history of self-harm. She is employed in paid work, earning £45,000 annually, and works 38 hours per week. Her highest education level is O-levels, and she does not have any long-standing illnesses. Clinically, her HDL cholesterol is 2.08 mmol/L, LDL cholesterol is 2.61 mmol/L, total cholesterol is 4.78 mmol/L, and triglycerides are 1.33 mmol/L.";

#[test]
fn criterion_10_serializer_fidelity() {
    let doc = narrative::serialize(&reference_record()).unwrap();
    assert_eq!(doc.text, REFERENCE_PARAGRAPH, "worked paragraph must match token for token");

    // round-trip extraction over 1,000 generated records (with missingness)
    let records = cohort::generate_cohort(1000, 0.3, 1010).unwrap();
    let template = narrative::default_narrative_template();
    let mut spans_checked = 0usize;
    for record in &records {
        let doc = narrative::serialize(record).unwrap();
        for (feature, value) in &record.values {
            let span = doc
                .span_text(feature)
                .unwrap_or_else(|| panic!("{}: no span for {feature}", record.id));
            let parsed = narrative::parse_feature_span(template, feature, span)
                .unwrap_or_else(|| panic!("{}: unparseable span `{span}` for {feature}", record.id));
            assert_eq!(&parsed, value, "{}: {feature}", record.id);
            spans_checked += 1;
        }
    }
    pass(10, format!("worked paragraph exact; {spans_checked} spans round-tripped over 1000 records"));
}

// ---------------------------------------------------------------------------
// 11. reasoner state machine
// ---------------------------------------------------------------------------

#[test]
fn criterion_11_reasoner_state_machine() {
    use mddx_core::narrative::{PromptTemplate, QaPair};
    use mddx_core::oracle::ScriptOracle;

    let qa = QaPair {
        id: "A000001".into(),
        prompt: PromptTemplate::for_tier(Tier::SimpleCot),
        question: "case".into(),
        answer: Label::Mdd,
    };
    let t = 4;
    // acceptance iff a correct answer occurs within T attempts
    for k in 0..=t {
        let mut answers = vec!["HC"; k as usize];
        if k < t {
            answers.push("MDD");
        }
        let oracle = ScriptOracle::answering("s", &answers);
        let cfg = PipelineConfig {
            t_attempts: t,
            n_refine: 0,
            ..PipelineConfig::default()
        };
        let sample = reasoner::generate_path(&qa, &oracle, &cfg).unwrap();
        if k < t {
            assert_eq!(sample.status, SampleStatus::ValidGenerated, "k={k}");
            assert_eq!(sample.attempts_gen, k + 1);
        } else {
            assert_eq!(sample.status, SampleStatus::Discarded);
            assert_eq!(sample.attempts_gen, t);
        }
    }

    // fallback to the original pair after N failed refinements, exhaustively
    let n = 3;
    for fails in 0..=n {
        let gen_oracle = ScriptOracle::answering("s", &["MDD"]);
        let cfg = PipelineConfig {
            t_attempts: t,
            n_refine: n,
            ..PipelineConfig::default()
        };
        let sample = reasoner::generate_path(&qa, &gen_oracle, &cfg).unwrap();
        let mut steps = vec!["better prompt"];
        steps.extend(vec!["HC"; fails as usize]);
        if fails < n {
            steps.push("MDD");
        }
        let refine_oracle = ScriptOracle::answering("s", &steps);
        let refined = reasoner::refine_path(&sample, &refine_oracle, &cfg).unwrap();
        if fails < n {
            assert_eq!(refined.status, SampleStatus::ValidRefined, "fails={fails}");
            assert_eq!(refined.attempts_refine, fails + 1);
        } else {
            assert_eq!(refined.status, SampleStatus::FallbackOriginal);
            assert_eq!(refined.attempts_refine, n);
            assert_eq!(refined.path, sample.path, "original pair preserved");
            assert_eq!(refined.qa, sample.qa);
        }
    }

    // simulated discard rate at per-attempt success 0.5 and T = 4
    let records = generate_separable(2000, 1101);
    let qas: Vec<QaPair> = records
        .iter()
        .map(|r| make_qa(r, Tier::SimpleCot).unwrap())
        .collect();
    let answers: BTreeMap<String, Label> = qas
        .iter()
        .map(|qa| (qa.question.clone(), qa.answer))
        .collect();
    let sim = SimOracle::new("sim", answers, 0.5, 1102);
    let cfg = PipelineConfig {
        t_attempts: 4,
        n_refine: 0,
        seed: 1103,
        ..PipelineConfig::default()
    };
    let (_, report) = reasoner::run_corpus(&qas, &sim, &cfg).unwrap();
    let expected = 0.0625_f64;
    let band = 3.0 * (expected * (1.0 - expected) / 2000.0).sqrt();
    assert!(
        (report.discard_rate - expected).abs() <= band,
        "discard rate {} vs {expected} +- {band:.4}",
        report.discard_rate
    );
    pass(
        11,
        format!(
            "attempt sweeps exact; discard rate {:.4} within binomial band of {expected}",
            report.discard_rate
        ),
    );
}

// ---------------------------------------------------------------------------
// 12. cohort targets
// ---------------------------------------------------------------------------

#[test]
fn criterion_12_cohort_targets() {
    let n = 20_000;
    let prevalence = 9755.0 / 208_406.0;
    let records = cohort::generate_cohort(n, prevalence, 7).unwrap();

    let hc_ages: Vec<f64> = records
        .iter()
        .filter(|r| r.label == Label::Hc)
        .filter_map(|r| r.num("age"))
        .collect();
    let (_, median, _) = mddx_core::stats::median_iqr(&hc_ages).unwrap();
    assert!(
        (60.0..=62.0).contains(&median),
        "HC age median {median} outside [60, 62]"
    );

    let mdd_fraction =
        records.iter().filter(|r| r.label == Label::Mdd).count() as f64 / n as f64;
    assert!(
        (mdd_fraction - 0.0468).abs() <= 0.005,
        "MDD fraction {mdd_fraction}"
    );

    // exact filter boundary behavior: construct exactly 6 and 7 missing
    let mut six = records
        .iter()
        .find(|r| r.missing_count() == 0)
        .expect("fully observed record exists")
        .clone();
    let keys: Vec<String> = six.values.keys().cloned().collect();
    for key in keys.iter().take(6) {
        six.values.remove(key);
    }
    let mut seven = six.clone();
    seven.values.remove(&keys[6]);
    assert_eq!(six.missing_count(), 6);
    assert_eq!(seven.missing_count(), 7);
    let (kept, excluded) =
        cohort::filter_missing(vec![six.clone(), seven], cohort::DEFAULT_MISSING_THRESHOLD)
            .unwrap();
    assert_eq!(kept.len(), 1, "6/22 = 0.273 stays, 7/22 = 0.318 goes");
    assert_eq!(excluded.len(), 1);
    // a fraction exactly equal to the threshold is kept (strict >)
    let (kept, excluded) = cohort::filter_missing(vec![six], 6.0 / 22.0).unwrap();
    assert_eq!((kept.len(), excluded.len()), (1, 0));

    pass(
        12,
        format!("HC age median {median:.1}, MDD fraction {mdd_fraction:.4}, filter boundary exact"),
    );
}

// ---------------------------------------------------------------------------
// 13. CoT tier report
// ---------------------------------------------------------------------------

#[test]
fn criterion_13_cot_tier_report() {
    let records = generate_separable(150, 1301);
    let mut qas = Vec::new();
    for tier in Tier::ALL {
        for r in &records {
            qas.push(make_qa(r, tier).unwrap());
        }
    }
    let answers: BTreeMap<String, Label> = qas
        .iter()
        .map(|qa| (qa.question.clone(), qa.answer))
        .collect();
    let sim = SimOracle::new("sim", answers, 0.75, 1302);
    let cfg = PipelineConfig {
        seed: 1303,
        ..PipelineConfig::default()
    };
    let (samples, _) = reasoner::run_corpus(&qas, &sim, &cfg).unwrap();
    let rows = mddx_core::report::tier_report(&samples, CompactTokenizer::get());
    assert_eq!(rows.len(), 3, "one row per tier");
    for row in &rows {
        assert!(row.accuracy.is_some() && row.f1.is_some() && row.avg_tokens.is_some());
    }
    let by_tier: BTreeMap<Tier, f64> = rows
        .iter()
        .map(|r| (r.tier, r.avg_tokens.unwrap()))
        .collect();
    let (d, s, c) = (
        by_tier[&Tier::Direct],
        by_tier[&Tier::SimpleCot],
        by_tier[&Tier::ComplexCot],
    );
    assert!(d < s && s < c, "token ordering violated: {d} {s} {c}");
    pass(13, format!("avg tokens direct {d:.1} < simple {s:.1} < complex {c:.1}"));
}

// ---------------------------------------------------------------------------
// 14. end-to-end reproducibility
// ---------------------------------------------------------------------------

fn run_pipeline(config: &Path) -> String {
    let stages: [&[&str]; 7] = [
        &["synth"],
        &["reason"],
        &["train-sft"],
        &["train-rl"],
        &["train-rl", "--from-base"],
        &["eval"],
        &["report"],
    ];
    let mut bundle_hash = String::new();
    for args in stages {
        let out = std::process::Command::new(env!("CARGO_BIN_EXE_mddx"))
            .arg("--config")
            .arg(config)
            .args(args)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "stage {args:?} failed:\n{}",
            String::from_utf8_lossy(&out.stderr)
        );
        if args == ["report"] {
            let stdout = String::from_utf8_lossy(&out.stdout);
            bundle_hash = stdout
                .lines()
                .find_map(|l| l.strip_prefix("bundle "))
                .expect("report prints the bundle hash")
                .to_string();
        }
    }
    bundle_hash
}

#[test]
fn criterion_14_end_to_end_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let config_path = dir.path().join("config.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"seed = 7
out_dir = "{}"

[cohort]
n = 150
mode = "separable"

[sft]
epochs = 30
lr = 0.4
batch_size = 16

[grpo]
lr = 2.0
updates = 15
rollout_temperature = 0.8

[eval]
n_eval = 80
"#,
            out_dir.display()
        ),
    )
    .unwrap();

    let hash_one = run_pipeline(&config_path);
    let report_one = std::fs::read(out_dir.join("report.json")).unwrap();
    std::fs::remove_dir_all(&out_dir).unwrap();
    let hash_two = run_pipeline(&config_path);
    let report_two = std::fs::read(out_dir.join("report.json")).unwrap();

    assert_eq!(report_one, report_two, "report bundles must be byte-identical");
    assert_eq!(hash_one, hash_two);
    pass(14, format!("two pipeline runs agree: bundle {}", &hash_one[..16]));
}
