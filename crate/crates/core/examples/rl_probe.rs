// Scratch probe for RL hyperparameter exploration. Not part of the test
// suite; invoked manually while tuning.

use mddx_core::grpo::{train_rl, AdvantageMode, GrpoConfig};
use mddx_core::narrative::Tier;
use mddx_core::policy::{train_sft, PolicyParams};
use mddx_core::tokenizer::CompactTokenizer;
use mddx_core::toytask::{generate_separable, sft_corpus, task_from_records};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let get = |name: &str, default: f64| -> f64 {
        args.iter()
            .position(|a| a == name)
            .and_then(|i| args.get(i + 1))
            .and_then(|v| v.parse().ok())
            .unwrap_or(default)
    };
    let n_train = get("--train", 64.0) as usize;
    let sft_epochs = get("--sft-epochs", 2.0) as usize;
    let sft_lr = get("--sft-lr", 0.05);
    let rl_lr = get("--rl-lr", 0.05);
    let updates = get("--updates", 60.0) as usize;
    let beta = get("--beta", 0.01);
    let seed = get("--seed", 7.0) as u64;
    let reseed = get("--reseed", 0.0) > 0.5;
    let temp = get("--temp", 1.0);

    let scramble = get("--scramble", 0.0) > 0.5;
    let mean_only = get("--mean-only", 0.0) > 0.5;

    let tok = CompactTokenizer::get();
    let v = tok.vocab_size();

    let balance = get("--balance", 0.0) > 0.5;

    let start = std::time::Instant::now();
    let train_records = if balance {
        let pool = generate_separable(n_train * 3, seed * 1000 + 1);
        let mut mdd: Vec<_> = pool
            .iter()
            .filter(|r| r.label == mddx_core::features::Label::Mdd)
            .cloned()
            .collect();
        let mut hc: Vec<_> = pool
            .iter()
            .filter(|r| r.label == mddx_core::features::Label::Hc)
            .cloned()
            .collect();
        mdd.truncate(n_train / 2);
        hc.truncate(n_train / 2);
        let mut all = mdd;
        all.append(&mut hc);
        all
    } else {
        generate_separable(n_train, seed * 1000 + 1)
    };
    let eval_records = generate_separable(200, seed * 1000 + 2);
    let task = task_from_records(&train_records, Tier::ComplexCot);
    let eval_task = task_from_records(&eval_records, Tier::ComplexCot);
    let sft_records: Vec<_> = if scramble {
        train_records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mut r = r.clone();
                r.label = if i % 2 == 0 {
                    mddx_core::features::Label::Mdd
                } else {
                    mddx_core::features::Label::Hc
                };
                r
            })
            .collect()
    } else {
        train_records.clone()
    };
    let corpus = sft_corpus(&sft_records, Tier::ComplexCot);

    let base = PolicyParams::random_init(v, 48, 16, seed * 1000 + 3);
    let (sft, curve) = train_sft(base, &corpus, sft_epochs, sft_lr, 16, seed * 1000 + 4).unwrap();
    let sft_acc = mddx_core::grpo::accuracy(&sft, &eval_task).unwrap();
    println!(
        "sft: epochs={sft_epochs} lr={sft_lr} final_nll={:.4} eval_acc={:.3}",
        curve.last().unwrap(),
        sft_acc
    );

    let cfg = GrpoConfig {
        group_size: 8,
        clip_eps: 0.2,
        kl_beta: beta,
        mu: 0.9,
        nu: 0.1,
        lr: rl_lr,
        updates,
        sync_every: 1,
        advantage_mode: if mean_only {
            AdvantageMode::MeanOnly
        } else {
            AdvantageMode::StdNormalized
        },
        max_new_tokens: 24,
        queries_per_update: 0,
        rollout_temperature: temp,
        reseed_rollouts: reseed,
        seed: seed * 1000 + 5,
    };
    let run = train_rl(sft, &task, &cfg).unwrap();
    let rl_acc = mddx_core::grpo::accuracy(&run.params, &eval_task).unwrap();

    let rewards: Vec<f64> = run.stats.iter().map(|s| s.mean_reward).collect();
    let strict_prefix = rewards
        .windows(2)
        .take_while(|w| w[1] > w[0])
        .count()
        + 1;
    let violations: Vec<usize> = rewards
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] <= w[0])
        .map(|(i, _)| i + 1)
        .take(8)
        .collect();
    println!(
        "rl: lr={rl_lr} beta={beta} temp={temp} reseed={reseed} | strict_prefix={strict_prefix}/{} eval_acc={:.3} kl_final={:.5} elapsed={:.1}s",
        rewards.len(),
        rl_acc,
        run.stats.last().unwrap().kl,
        start.elapsed().as_secs_f64()
    );
    println!("first violations at updates: {violations:?}");
    let mut dips: Vec<(usize, f64)> = rewards
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] <= w[0])
        .map(|(i, w)| (i + 1, w[0] - w[1]))
        .collect();
    dips.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
    println!(
        "dips: n={} max={:?} all_in_first_50={:?}",
        dips.len(),
        dips.first(),
        dips.iter().filter(|(i, _)| *i < 50).map(|(i, d)| format!("{i}:{d:.4}")).collect::<Vec<_>>()
    );
    let shown: Vec<String> = rewards.iter().map(|r| format!("{r:.4}")).collect();
    println!("rewards: {}", shown.join(" "));
}
