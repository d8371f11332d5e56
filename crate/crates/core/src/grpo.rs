//! Group-relative policy optimization for the toy policy.
//!
//! Per query, G outputs are sampled from the frozen old policy, scored with
//! a composite accuracy + format reward, and normalized within the group.
//! The update ascends the clipped importance-ratio surrogate minus a KL
//! penalty to a frozen reference policy. The KL term is the exact
//! categorical KL between conditionals summed over target positions (no
//! sampled estimator), and the whole objective has a closed-form gradient.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::Label;
use crate::oracle::{extract_answer, ExtractedAnswer};
use crate::policy::{sample, PolicyGrad, PolicyParams, TokenSeq};
use crate::seed;
use crate::tokenizer::CompactTokenizer;
use crate::toytask::ToyExample;
use crate::Result;

/// Group-advantage estimator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// (r - mean) / (std + 1e-8), population std.
    StdNormalized,
    /// r - mean.
    MeanOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrpoConfig {
    /// Outputs sampled per query (G).
    pub group_size: usize,
    /// Clip width epsilon.
    pub clip_eps: f64,
    /// KL-to-reference coefficient beta.
    pub kl_beta: f64,
    /// Accuracy reward weight mu.
    pub mu: f64,
    /// Format reward weight nu.
    pub nu: f64,
    pub lr: f64,
    pub updates: usize,
    /// Old-policy sync cadence in updates (1 = fully on-policy).
    pub sync_every: usize,
    pub advantage_mode: AdvantageMode,
    pub max_new_tokens: usize,
    /// Queries used per update; 0 means the whole task set.
    pub queries_per_update: usize,
    pub rollout_temperature: f64,
    /// When false, rollout seeds depend only on (query, slot) so successive
    /// updates reuse the same underlying draws (common random numbers);
    /// when true they also mix in the update index.
    pub reseed_rollouts: bool,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 8,
            clip_eps: 0.2,
            kl_beta: 0.01,
            mu: 0.9,
            nu: 0.1,
            lr: 1e-6,
            updates: 50,
            sync_every: 1,
            advantage_mode: AdvantageMode::StdNormalized,
            max_new_tokens: 24,
            queries_per_update: 0,
            rollout_temperature: 1.0,
            reseed_rollouts: false,
            seed: 0,
        }
    }
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.group_size < 2 {
            return Err(Error::invalid("group_size must be >= 2"));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(Error::invalid("clip_eps must lie in (0, 1)"));
        }
        if self.kl_beta < 0.0 {
            return Err(Error::invalid("kl_beta must be >= 0"));
        }
        if self.mu < 0.0 || self.nu < 0.0 || self.mu + self.nu <= 0.0 {
            return Err(Error::invalid("reward weights must satisfy mu, nu >= 0 and mu + nu > 0"));
        }
        if !self.lr.is_finite() {
            return Err(Error::invalid("learning rate must be finite"));
        }
        if self.sync_every == 0 {
            return Err(Error::invalid("sync_every must be >= 1"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Rewards
// ---------------------------------------------------------------------------

/// Composite reward for one output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_acc: f64,
    pub r_fmt: f64,
    pub combined: f64,
}

/// Think-then-answer scaffold grammar: exactly one `<think>...</think>`
/// block followed by exactly one well-formed `<answer>` tag.
pub fn format_ok(text: &str) -> bool {
    let count = |needle: &str| text.match_indices(needle).count();
    if count("<think>") != 1
        || count("</think>") != 1
        || count("<answer>") != 1
        || count("</answer>") != 1
    {
        return false;
    }
    let think_open = text.find("<think>").expect("counted");
    let think_close = text.find("</think>").expect("counted");
    let answer_open = text.find("<answer>").expect("counted");
    let answer_close = text.find("</answer>").expect("counted");
    if !(think_open < think_close && think_close < answer_open && answer_open < answer_close) {
        return false;
    }
    let content = &text[answer_open + "<answer>".len()..answer_close];
    matches!(content.trim(), "MDD" | "HC")
}

/// r = mu * r_acc + nu * r_fmt; unparseable answers score r_acc = 0.
pub fn reward(text: &str, truth: Label, mu: f64, nu: f64) -> RewardBreakdown {
    let r_acc = if extract_answer(text).matches(truth) {
        1.0
    } else {
        0.0
    };
    let r_fmt = if format_ok(text) { 1.0 } else { 0.0 };
    RewardBreakdown {
        r_acc,
        r_fmt,
        combined: mu * r_acc + nu * r_fmt,
    }
}

/// Group-normalized advantages. Zero-variance groups yield all-zero
/// advantages in both modes.
pub fn group_advantages(rewards: &[f64], mode: AdvantageMode) -> Result<Vec<f64>> {
    if rewards.len() < 2 {
        return Err(Error::invalid("advantage groups need at least 2 rewards"));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    match mode {
        AdvantageMode::MeanOnly => Ok(rewards.iter().map(|r| r - mean).collect()),
        AdvantageMode::StdNormalized => {
            let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
            let std = var.sqrt();
            if std == 0.0 {
                return Ok(vec![0.0; rewards.len()]);
            }
            Ok(rewards.iter().map(|r| (r - mean) / (std + 1e-8)).collect())
        }
    }
}

// ---------------------------------------------------------------------------
// Rollouts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct RolloutOutput {
    pub seq: TokenSeq,
    pub text: String,
    pub old_log_prob: f64,
    pub reward: RewardBreakdown,
    pub advantage: f64,
}

/// One query's sampled group with normalized advantages.
#[derive(Debug, Clone)]
pub struct RolloutGroup {
    pub query_id: String,
    pub outputs: Vec<RolloutOutput>,
}

impl RolloutGroup {
    /// Build a group from scored outputs, filling in advantages.
    pub fn new(
        query_id: String,
        mut outputs: Vec<RolloutOutput>,
        mode: AdvantageMode,
    ) -> Result<RolloutGroup> {
        let rewards: Vec<f64> = outputs.iter().map(|o| o.reward.combined).collect();
        let advantages = group_advantages(&rewards, mode)?;
        for (o, a) in outputs.iter_mut().zip(advantages) {
            o.advantage = a;
        }
        Ok(RolloutGroup { query_id, outputs })
    }

    pub fn zero_variance(&self) -> bool {
        self.outputs.iter().all(|o| o.advantage == 0.0)
    }
}

/// Per-update optimizer diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UpdateStats {
    pub update: usize,
    /// Value of the full surrogate objective (clip term minus beta * KL).
    pub objective: f64,
    pub mean_reward: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    /// Share of outputs where the clipped branch was strictly smaller.
    pub clip_fraction: f64,
    /// Mean per-output exact KL(new || ref) summed over target positions.
    pub kl: f64,
}

/// Exact KL between two categorical distributions given as log-probs.
fn kl_exact(lp_new: &[f64], lp_ref: &[f64]) -> f64 {
    lp_new
        .iter()
        .zip(lp_ref)
        .map(|(ln, lr)| ln.exp() * (ln - lr))
        .sum()
}

/// Evaluate the GRPO objective and its gradient with respect to
/// `params_new`. Ratios are recomputed from `params_old`; the KL penalty is
/// taken against `params_ref`.
pub fn grpo_objective_and_grad(
    params_new: &PolicyParams,
    params_old: &PolicyParams,
    params_ref: &PolicyParams,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<(UpdateStats, PolicyGrad)> {
    cfg.validate()?;
    if groups.is_empty() {
        return Err(Error::invalid("no rollout groups"));
    }
    let mut grad = PolicyGrad::zeros_like(params_new);
    let mut objective = 0.0;
    let mut reward_sum = 0.0;
    let mut ratio_sum = 0.0;
    let mut ratio_max = f64::NEG_INFINITY;
    let mut clipped_count = 0usize;
    let mut kl_sum = 0.0;
    let mut n_outputs = 0usize;

    for group in groups {
        let group_scale = 1.0 / (groups.len() as f64 * group.outputs.len() as f64);
        for output in &group.outputs {
            n_outputs += 1;
            reward_sum += output.reward.combined;
            let seq = &output.seq;
            let lp_new = params_new.log_prob(seq)?;
            let lp_old = params_old.log_prob(seq)?;
            let ratio = (lp_new - lp_old).exp();
            if !ratio.is_finite() {
                return Err(Error::NonFiniteRatio {
                    id: group.query_id.clone(),
                });
            }
            ratio_sum += ratio;
            ratio_max = ratio_max.max(ratio);

            let a = output.advantage;
            let unclipped = ratio * a;
            let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
            objective += group_scale * unclipped.min(clipped);
            if clipped < unclipped {
                clipped_count += 1;
            }

            // surrogate gradient gate: zero where the clip is active
            let gate = if a > 0.0 {
                ratio <= 1.0 + cfg.clip_eps
            } else if a < 0.0 {
                ratio >= 1.0 - cfg.clip_eps
            } else {
                false
            };

            // accumulate per-position logit gradients
            let mut output_kl = 0.0;
            for t in seq.split..seq.tokens.len() {
                let lp_new_t = params_new.conditional_log_probs(&seq.tokens, t);
                let y = seq.tokens[t] as usize;
                let v = lp_new_t.len();
                let mut dz = vec![0.0; v];
                if gate {
                    // d/dz of ratio*A = A * ratio * (onehot - p)
                    let w = group_scale * a * ratio;
                    for (i, l) in lp_new_t.iter().enumerate() {
                        dz[i] -= w * l.exp();
                    }
                    dz[y] += w;
                }
                // exact KL (always reported) and its gradient (beta-scaled)
                let lp_ref_t = params_ref.conditional_log_probs(&seq.tokens, t);
                let kl_t = kl_exact(&lp_new_t, &lp_ref_t);
                output_kl += kl_t;
                if cfg.kl_beta > 0.0 {
                    let w = group_scale * cfg.kl_beta;
                    for i in 0..v {
                        let p = lp_new_t[i].exp();
                        dz[i] -= w * p * ((lp_new_t[i] - lp_ref_t[i]) - kl_t);
                    }
                }
                grad.accumulate_logit_grad(params_new, &seq.tokens, t, &dz);
            }
            kl_sum += output_kl;
            objective -= group_scale * cfg.kl_beta * output_kl;
        }
    }

    let stats = UpdateStats {
        update: 0,
        objective,
        mean_reward: reward_sum / n_outputs as f64,
        mean_ratio: ratio_sum / n_outputs as f64,
        max_ratio: ratio_max,
        clip_fraction: clipped_count as f64 / n_outputs as f64,
        kl: kl_sum / n_outputs as f64,
    };
    Ok((stats, grad))
}

/// Objective value only (used by finite-difference oracles in tests).
pub fn grpo_objective(
    params_new: &PolicyParams,
    params_old: &PolicyParams,
    params_ref: &PolicyParams,
    groups: &[RolloutGroup],
    cfg: &GrpoConfig,
) -> Result<f64> {
    let mut objective = 0.0;
    for group in groups {
        let group_scale = 1.0 / (groups.len() as f64 * group.outputs.len() as f64);
        for output in &group.outputs {
            let lp_new = params_new.log_prob(&output.seq)?;
            let lp_old = params_old.log_prob(&output.seq)?;
            let ratio = (lp_new - lp_old).exp();
            let a = output.advantage;
            let clipped = ratio.clamp(1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * a;
            objective += group_scale * (ratio * a).min(clipped);
            let mut output_kl = 0.0;
            for t in output.seq.split..output.seq.tokens.len() {
                let lp_new_t = params_new.conditional_log_probs(&output.seq.tokens, t);
                let lp_ref_t = params_ref.conditional_log_probs(&output.seq.tokens, t);
                output_kl += kl_exact(&lp_new_t, &lp_ref_t);
            }
            objective -= group_scale * cfg.kl_beta * output_kl;
        }
    }
    Ok(objective)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct RlRun {
    pub params: PolicyParams,
    pub stats: Vec<UpdateStats>,
    /// True if some update saw zero reward variance in every group.
    pub reward_collapse: bool,
}

/// Sample one group for a query from the old policy.
fn rollout_group(
    params_old: &PolicyParams,
    example: &ToyExample,
    query_index: usize,
    update: usize,
    cfg: &GrpoConfig,
) -> Result<RolloutGroup> {
    let tok = CompactTokenizer::get();
    let mut outputs = Vec::with_capacity(cfg.group_size);
    for slot in 0..cfg.group_size {
        let update_key = if cfg.reseed_rollouts { update as u64 } else { 0 };
        let roll_seed = seed::subseed(
            cfg.seed,
            "rl/rollout",
            &[update_key, query_index as u64, slot as u64],
        );
        let (seq, lps) = sample(
            params_old,
            &example.prompt,
            cfg.max_new_tokens,
            cfg.rollout_temperature,
            roll_seed,
            Some(tok.eos()),
        )?;
        let text = tok.decode(seq.target());
        let breakdown = reward(&text, example.truth, cfg.mu, cfg.nu);
        outputs.push(RolloutOutput {
            seq,
            text,
            old_log_prob: lps.iter().sum(),
            reward: breakdown,
            advantage: 0.0,
        });
    }
    RolloutGroup::new(example.id.clone(), outputs, cfg.advantage_mode)
}

/// GRPO training: sync the old policy, roll out G outputs per query, score,
/// normalize, ascend. Deterministic in `cfg.seed`.
pub fn train_rl(params: PolicyParams, task: &[ToyExample], cfg: &GrpoConfig) -> Result<RlRun> {
    cfg.validate()?;
    if task.is_empty() {
        return Err(Error::invalid("empty RL task set"));
    }
    let params_ref = params.clone();
    let mut params = params;
    let mut params_old = params.clone();
    let mut stats = Vec::with_capacity(cfg.updates);
    let mut reward_collapse = false;

    for update in 0..cfg.updates {
        if update % cfg.sync_every == 0 {
            params_old = params.clone();
        }
        let query_indices: Vec<usize> =
            if cfg.queries_per_update == 0 || cfg.queries_per_update >= task.len() {
                (0..task.len()).collect()
            } else {
                let mut rng = seed::rng_for(cfg.seed, "rl/queries", &[update as u64]);
                let mut all: Vec<usize> = (0..task.len()).collect();
                for i in (1..all.len()).rev() {
                    let j = rand::Rng::gen_range(&mut rng, 0..=i);
                    all.swap(i, j);
                }
                all.truncate(cfg.queries_per_update);
                all
            };

        let mut groups = Vec::with_capacity(query_indices.len());
        for &qi in &query_indices {
            groups.push(rollout_group(&params_old, &task[qi], qi, update, cfg)?);
        }
        if groups.iter().all(|g| g.zero_variance()) && !reward_collapse {
            log::warn!("reward collapse: zero advantage variance in every group at update {update}");
            reward_collapse = true;
        }

        let (mut update_stats, grad) =
            grpo_objective_and_grad(&params, &params_old, &params_ref, &groups, cfg)?;
        if !grad.is_finite() {
            return Err(Error::Diverged(format!("non-finite gradient at update {update}")));
        }
        params.ascend(&grad, cfg.lr);
        if !params.all_finite() {
            return Err(Error::Diverged(format!("non-finite parameters at update {update}")));
        }
        update_stats.update = update;
        stats.push(update_stats);
    }

    Ok(RlRun {
        params,
        stats,
        reward_collapse,
    })
}

/// Stream update statistics as CSV for plotting.
pub fn write_stats_csv(path: &Path, stats: &[UpdateStats]) -> Result<()> {
    let mut out =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(out, "update,reward,kl,clip_fraction,objective")
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    for s in stats {
        writeln!(
            out,
            "{},{},{},{},{}",
            s.update, s.mean_reward, s.kl, s.clip_fraction, s.objective
        )
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Evaluation helpers
// ---------------------------------------------------------------------------

/// Greedy decode and answer extraction for one example.
pub fn greedy_predict(params: &PolicyParams, example: &ToyExample) -> Result<(ExtractedAnswer, String)> {
    let tok = CompactTokenizer::get();
    let (seq, _) = sample(params, &example.prompt, 32, 0.0, 0, Some(tok.eos()))?;
    let text = tok.decode(seq.target());
    Ok((extract_answer(&text), text))
}

/// Fraction of examples whose greedy answer matches the truth.
pub fn accuracy(params: &PolicyParams, task: &[ToyExample]) -> Result<f64> {
    if task.is_empty() {
        return Err(Error::invalid("empty evaluation task"));
    }
    let mut correct = 0usize;
    for ex in task {
        if greedy_predict(params, ex)?.0.matches(ex.truth) {
            correct += 1;
        }
    }
    Ok(correct as f64 / task.len() as f64)
}

/// MDD probability at the answer slot of the forced minimal scaffold
/// `prompt <think> </think> <answer> _`; a label-free continuous score for
/// ROC analysis that is defined for untrained policies too.
pub fn mdd_score(params: &PolicyParams, example: &ToyExample) -> Result<f64> {
    let tok = CompactTokenizer::get();
    let mut tokens = example.prompt.clone();
    tokens.extend_from_slice(&[tok.think(), tok.end_think(), tok.answer()]);
    let t = tokens.len();
    if t >= params.context {
        return Err(Error::invalid("forced scaffold exceeds context"));
    }
    let lp = params.conditional_log_probs(&tokens, t);
    let p_mdd = lp[tok.label_token(Label::Mdd) as usize].exp();
    let p_hc = lp[tok.label_token(Label::Hc) as usize].exp();
    Ok(p_mdd / (p_mdd + p_hc))
}
