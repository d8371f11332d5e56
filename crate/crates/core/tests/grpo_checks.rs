//! Structural and gradient checks for the GRPO objective.

use mddx_core::grpo::{
    grpo_objective, grpo_objective_and_grad, AdvantageMode, GrpoConfig, RolloutGroup,
    RolloutOutput,
};
use mddx_core::policy::{sample, PolicyGrad, PolicyParams};
use mddx_core::seed;
use mddx_core::tokenizer::CompactTokenizer;
use rand::Rng;

fn test_config(beta: f64) -> GrpoConfig {
    GrpoConfig {
        group_size: 4,
        clip_eps: 0.2,
        kl_beta: beta,
        mu: 0.9,
        nu: 0.1,
        ..GrpoConfig::default()
    }
}

/// Sample rollout groups from `params_old` and attach synthetic advantages.
fn make_groups(
    params_old: &PolicyParams,
    n_groups: usize,
    group_size: usize,
    seed_root: u64,
) -> Vec<RolloutGroup> {
    let tok = CompactTokenizer::get();
    let mut rng = seed::rng_for(seed_root, "groups", &[]);
    (0..n_groups)
        .map(|g| {
            let prompt: Vec<u32> = vec![
                tok.bos(),
                tok.tok("tier_complex"),
                rng.gen_range(13..29),
                rng.gen_range(13..29),
                tok.sep(),
            ];
            let outputs: Vec<RolloutOutput> = (0..group_size)
                .map(|s| {
                    let (seq, lps) = sample(
                        params_old,
                        &prompt,
                        8,
                        1.0,
                        seed::subseed(seed_root, "rollout", &[g as u64, s as u64]),
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
                            combined: rng.gen::<f64>(),
                        },
                        advantage: 0.0,
                    }
                })
                .collect();
            RolloutGroup::new(format!("G{g}"), outputs, AdvantageMode::StdNormalized).unwrap()
        })
        .collect()
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let v = CompactTokenizer::get().vocab_size();
    let params_old = PolicyParams::random_init(v, 32, 6, 41);
    let mut params_new = PolicyParams::random_init(v, 32, 6, 42);
    let params_ref = PolicyParams::random_init(v, 32, 6, 43);
    // keep new close enough to old that ratios stay well-conditioned
    for i in 0..params_new.num_params() {
        let blended = 0.9 * params_old.get_param(i) + 0.1 * params_new.get_param(i);
        params_new.set_param(i, blended);
    }
    let groups = make_groups(&params_old, 3, 4, 7);
    let cfg = test_config(0.05);

    let (_, grad) =
        grpo_objective_and_grad(&params_new, &params_old, &params_ref, &groups, &cfg).unwrap();
    let h = 1e-5;
    let n = params_new.num_params();
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
        let denom = fd.abs().max(g.abs()).max(1e-8);
        assert!(
            (fd - g).abs() / denom < 1e-4,
            "coordinate {i}: fd {fd} vs analytic {g}"
        );
    }
}

#[test]
fn ratio_one_has_no_clipping_and_matches_reinforce() {
    let v = CompactTokenizer::get().vocab_size();
    let params = PolicyParams::random_init(v, 32, 6, 17);
    let groups = make_groups(&params, 4, 4, 23);
    let cfg = test_config(0.3);

    // just after a sync: new == old == ref, every ratio is exactly 1
    let (stats, grad) = grpo_objective_and_grad(&params, &params, &params, &groups, &cfg).unwrap();
    assert_eq!(stats.clip_fraction, 0.0);
    assert!((stats.mean_ratio - 1.0).abs() < 1e-12);
    assert!((stats.max_ratio - 1.0).abs() < 1e-12);
    assert!(stats.kl.abs() < 1e-12, "KL at new == ref must vanish");

    // independently coded advantage-weighted policy gradient
    // (REINFORCE with the group mean as baseline): for each output,
    // A/(B*G) * d log pi(o) / d theta, assembled from raw logits.
    let mut reinforce = PolicyGrad::zeros_like(&params);
    let scale_b = groups.len() as f64;
    for group in &groups {
        let scale = 1.0 / (scale_b * group.outputs.len() as f64);
        for output in &group.outputs {
            let w = scale * output.advantage;
            let seq = &output.seq;
            for t in seq.split..seq.tokens.len() {
                let z = params.logits(&seq.tokens, t);
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = z.iter().map(|x| (x - max).exp()).sum();
                let p: Vec<f64> = z.iter().map(|x| (x - max).exp() / denom).collect();
                let y = seq.tokens[t] as usize;
                let mut dz: Vec<f64> = p.iter().map(|pi| -w * pi).collect();
                dz[y] += w;
                reinforce.accumulate_logit_grad(&params, &seq.tokens, t, &dz);
            }
        }
    }
    let n = params.num_params();
    for i in 0..n {
        let a = grad.get_param(i);
        let b = reinforce.get_param(i);
        assert!(
            (a - b).abs() < 1e-6,
            "coordinate {i}: grpo {a} vs reinforce {b}"
        );
    }
}

#[test]
fn objective_equals_unclipped_at_ratio_one() {
    let v = CompactTokenizer::get().vocab_size();
    let params = PolicyParams::random_init(v, 32, 6, 29);
    let groups = make_groups(&params, 3, 4, 31);
    let mut cfg = test_config(0.0);
    // the clipped objective with ratio 1 reduces to the group-mean advantage
    let (stats, _) = grpo_objective_and_grad(&params, &params, &params, &groups, &cfg).unwrap();
    let mut expected = 0.0;
    for g in &groups {
        for o in &g.outputs {
            expected += o.advantage / (groups.len() as f64 * g.outputs.len() as f64);
        }
    }
    assert!((stats.objective - expected).abs() < 1e-12);
    // widening the clip cannot change anything at ratio 1
    cfg.clip_eps = 0.9;
    let (stats2, _) = grpo_objective_and_grad(&params, &params, &params, &groups, &cfg).unwrap();
    assert!((stats2.objective - stats.objective).abs() < 1e-12);
}

#[test]
fn kl_penalty_vanishes_when_new_equals_ref() {
    let v = CompactTokenizer::get().vocab_size();
    let params_old = PolicyParams::random_init(v, 32, 6, 51);
    let params_new = PolicyParams::random_init(v, 32, 6, 52);
    let groups = make_groups(&params_old, 2, 4, 53);
    let with_kl = grpo_objective(&params_new, &params_old, &params_new, &groups, &test_config(5.0))
        .unwrap();
    let without_kl =
        grpo_objective(&params_new, &params_old, &params_new, &groups, &test_config(0.0)).unwrap();
    assert!((with_kl - without_kl).abs() < 1e-9);
}

#[test]
fn kl_is_positive_when_policies_differ() {
    let v = CompactTokenizer::get().vocab_size();
    let params_old = PolicyParams::random_init(v, 32, 6, 61);
    let params_new = PolicyParams::random_init(v, 32, 6, 62);
    let params_ref = PolicyParams::random_init(v, 32, 6, 63);
    let groups = make_groups(&params_old, 2, 4, 64);
    let (stats, _) = grpo_objective_and_grad(&params_new, &params_old, &params_ref, &groups, &test_config(0.0))
        .unwrap();
    assert!(stats.kl > 0.0, "distinct random policies must have KL > 0");
}

#[test]
fn zero_learning_rate_training_is_a_no_op() {
    use mddx_core::grpo::train_rl;
    use mddx_core::narrative::Tier;
    use mddx_core::toytask::{generate_separable, task_from_records};

    let v = CompactTokenizer::get().vocab_size();
    let params = PolicyParams::random_init(v, 48, 8, 71);
    let records = generate_separable(8, 72);
    let task = task_from_records(&records, Tier::ComplexCot);
    let cfg = GrpoConfig {
        group_size: 4,
        lr: 0.0,
        updates: 5,
        seed: 73,
        ..GrpoConfig::default()
    };
    let run = train_rl(params.clone(), &task, &cfg).unwrap();
    assert_eq!(run.params, params);
    let rewards: Vec<f64> = run.stats.iter().map(|s| s.mean_reward).collect();
    assert!(
        rewards.windows(2).all(|w| w[0] == w[1]),
        "reward must stay flat with lr = 0 and common random numbers: {rewards:?}"
    );
}

#[test]
fn config_validation_rejects_bad_values() {
    let bad = [
        GrpoConfig {
            group_size: 1,
            ..GrpoConfig::default()
        },
        GrpoConfig {
            clip_eps: 0.0,
            ..GrpoConfig::default()
        },
        GrpoConfig {
            clip_eps: 1.0,
            ..GrpoConfig::default()
        },
        GrpoConfig {
            kl_beta: -0.1,
            ..GrpoConfig::default()
        },
        GrpoConfig {
            mu: 0.0,
            nu: 0.0,
            ..GrpoConfig::default()
        },
        GrpoConfig {
            sync_every: 0,
            ..GrpoConfig::default()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
    assert!(GrpoConfig::default().validate().is_ok());
}
