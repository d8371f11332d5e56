//! Toy autoregressive token policy.
//!
//! Architecture: per-position logits are the sum of a bias, a bigram table
//! row for the previous token, a position table row, and a linear head over
//! the mean-pooled embeddings of the whole preceding context. Small enough
//! that log-probabilities, losses, and every gradient are exact closed-form
//! f64 computations, which is what the gradient-oracle tests rely on.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::seed;
use crate::tokenizer::Token;
use crate::Result;

/// Token sequence with a prompt/target split: loss and sampling treat
/// positions `>= split` as the target region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
    pub split: usize,
}

impl TokenSeq {
    pub fn new(tokens: Vec<Token>, split: usize) -> Result<TokenSeq> {
        if split > tokens.len() {
            return Err(Error::invalid(format!(
                "split {split} exceeds sequence length {}",
                tokens.len()
            )));
        }
        Ok(TokenSeq { tokens, split })
    }

    pub fn target_len(&self) -> usize {
        self.tokens.len() - self.split
    }

    pub fn prompt(&self) -> &[Token] {
        &self.tokens[..self.split]
    }

    pub fn target(&self) -> &[Token] {
        &self.tokens[self.split..]
    }
}

/// Dense policy parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub vocab: usize,
    pub context: usize,
    pub dim: usize,
    pub init_seed: u64,
    /// V
    pub bias: Vec<f64>,
    /// V x V, row = previous token
    pub bigram: Vec<f64>,
    /// V x d token embeddings
    pub embed: Vec<f64>,
    /// d x V head over pooled context
    pub proj: Vec<f64>,
    /// context x V position table
    pub pos: Vec<f64>,
}

impl PolicyParams {
    /// All-zero parameters: every conditional is exactly uniform.
    pub fn uniform(vocab: usize, context: usize, dim: usize) -> PolicyParams {
        PolicyParams {
            vocab,
            context,
            dim,
            init_seed: 0,
            bias: vec![0.0; vocab],
            bigram: vec![0.0; vocab * vocab],
            embed: vec![0.0; vocab * dim],
            proj: vec![0.0; dim * vocab],
            pos: vec![0.0; context * vocab],
        }
    }

    /// Small random initialization (scale 0.05 normal-ish via uniform sum),
    /// deterministic in `seed`.
    pub fn random_init(vocab: usize, context: usize, dim: usize, seed: u64) -> PolicyParams {
        let mut params = PolicyParams::uniform(vocab, context, dim);
        params.init_seed = seed;
        let mut rng = seed::rng_for(seed, "policy/init", &[]);
        let mut fill = |v: &mut Vec<f64>| {
            for x in v.iter_mut() {
                *x = (rng.gen::<f64>() - 0.5) * 0.1;
            }
        };
        fill(&mut params.bias);
        fill(&mut params.bigram);
        fill(&mut params.embed);
        fill(&mut params.proj);
        fill(&mut params.pos);
        params
    }

    pub fn num_params(&self) -> usize {
        self.bias.len() + self.bigram.len() + self.embed.len() + self.proj.len() + self.pos.len()
    }

    fn blocks(&self) -> [&Vec<f64>; 5] {
        [&self.bias, &self.bigram, &self.embed, &self.proj, &self.pos]
    }

    fn blocks_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.bias,
            &mut self.bigram,
            &mut self.embed,
            &mut self.proj,
            &mut self.pos,
        ]
    }

    /// Flat coordinate access in block order (bias, bigram, embed, proj,
    /// pos); used by finite-difference oracles.
    pub fn get_param(&self, mut index: usize) -> f64 {
        for block in self.blocks() {
            if index < block.len() {
                return block[index];
            }
            index -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set_param(&mut self, mut index: usize, value: f64) {
        for block in self.blocks_mut() {
            if index < block.len() {
                block[index] = value;
                return;
            }
            index -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.blocks().iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn check_tokens(&self, tokens: &[Token]) -> Result<()> {
        if tokens.len() > self.context {
            return Err(Error::invalid(format!(
                "sequence length {} exceeds context {}",
                tokens.len(),
                self.context
            )));
        }
        if let Some(bad) = tokens.iter().find(|&&t| t as usize >= self.vocab) {
            return Err(Error::invalid(format!(
                "token id {bad} outside vocabulary of size {}",
                self.vocab
            )));
        }
        Ok(())
    }

    /// Mean-pooled embedding of `tokens[..t]`.
    fn pooled(&self, tokens: &[Token], t: usize) -> Vec<f64> {
        let mut h = vec![0.0; self.dim];
        if t == 0 {
            return h;
        }
        for &tok in &tokens[..t] {
            let base = tok as usize * self.dim;
            for k in 0..self.dim {
                h[k] += self.embed[base + k];
            }
        }
        for x in h.iter_mut() {
            *x /= t as f64;
        }
        h
    }

    /// Logits for predicting position `t` given `tokens[..t]`.
    pub fn logits(&self, tokens: &[Token], t: usize) -> Vec<f64> {
        debug_assert!(t < self.context);
        let v = self.vocab;
        let mut z = self.bias.clone();
        if t > 0 {
            let row = tokens[t - 1] as usize * v;
            for i in 0..v {
                z[i] += self.bigram[row + i];
            }
        }
        let row = t * v;
        for i in 0..v {
            z[i] += self.pos[row + i];
        }
        let h = self.pooled(tokens, t);
        for (k, hk) in h.iter().enumerate() {
            if *hk != 0.0 {
                let row = k * v;
                for i in 0..v {
                    z[i] += self.proj[row + i] * hk;
                }
            }
        }
        z
    }

    /// Log-softmax of the conditional distribution at position `t`.
    pub fn conditional_log_probs(&self, tokens: &[Token], t: usize) -> Vec<f64> {
        log_softmax(&self.logits(tokens, t))
    }

    /// Sum of target-position conditional log-probabilities (Σ log p(y_t |
    /// y_<t)); always <= 0, and exactly 0 for an empty target region.
    pub fn log_prob(&self, seq: &TokenSeq) -> Result<f64> {
        self.check_tokens(&seq.tokens)?;
        let mut total = 0.0;
        for t in seq.split..seq.tokens.len() {
            let lp = self.conditional_log_probs(&seq.tokens, t);
            total += lp[seq.tokens[t] as usize];
        }
        Ok(total)
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = z.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    z.iter().map(|x| x - log_sum).collect()
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

/// Gradient with the same layout as [`PolicyParams`].
#[derive(Debug, Clone)]
pub struct PolicyGrad {
    pub bias: Vec<f64>,
    pub bigram: Vec<f64>,
    pub embed: Vec<f64>,
    pub proj: Vec<f64>,
    pub pos: Vec<f64>,
    dim: usize,
    vocab: usize,
}

impl PolicyGrad {
    pub fn zeros_like(params: &PolicyParams) -> PolicyGrad {
        PolicyGrad {
            bias: vec![0.0; params.bias.len()],
            bigram: vec![0.0; params.bigram.len()],
            embed: vec![0.0; params.embed.len()],
            proj: vec![0.0; params.proj.len()],
            pos: vec![0.0; params.pos.len()],
            dim: params.dim,
            vocab: params.vocab,
        }
    }

    pub fn get_param(&self, mut index: usize) -> f64 {
        for block in [&self.bias, &self.bigram, &self.embed, &self.proj, &self.pos] {
            if index < block.len() {
                return block[index];
            }
            index -= block.len();
        }
        panic!("parameter index out of range");
    }

    pub fn l2_norm(&self) -> f64 {
        [&self.bias, &self.bigram, &self.embed, &self.proj, &self.pos]
            .iter()
            .flat_map(|b| b.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        [&self.bias, &self.bigram, &self.embed, &self.proj, &self.pos]
            .iter()
            .all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// Accumulate `d objective / d logits` at one position into the
    /// parameter gradient (shared by the SFT and RL objectives).
    pub fn accumulate_logit_grad(
        &mut self,
        params: &PolicyParams,
        tokens: &[Token],
        t: usize,
        dz: &[f64],
    ) {
        let v = self.vocab;
        for i in 0..v {
            self.bias[i] += dz[i];
        }
        if t > 0 {
            let row = tokens[t - 1] as usize * v;
            for i in 0..v {
                self.bigram[row + i] += dz[i];
            }
        }
        let row = t * v;
        for i in 0..v {
            self.pos[row + i] += dz[i];
        }
        if t > 0 {
            let h = params.pooled(tokens, t);
            for (k, hk) in h.iter().enumerate() {
                let row = k * v;
                for i in 0..v {
                    self.proj[row + i] += hk * dz[i];
                }
            }
            // q = proj * dz, distributed over pooled context embeddings
            let mut q = vec![0.0; self.dim];
            for (k, qk) in q.iter_mut().enumerate() {
                let row = k * v;
                for i in 0..v {
                    *qk += params.proj[row + i] * dz[i];
                }
            }
            let w = 1.0 / t as f64;
            for &tok in &tokens[..t] {
                let base = tok as usize * self.dim;
                for k in 0..self.dim {
                    self.embed[base + k] += q[k] * w;
                }
            }
        }
    }
}

impl PolicyParams {
    /// Gradient-ascent step: θ += lr * g.
    pub fn ascend(&mut self, grad: &PolicyGrad, lr: f64) {
        let apply = |dst: &mut [f64], src: &[f64]| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += lr * s;
            }
        };
        apply(&mut self.bias, &grad.bias);
        apply(&mut self.bigram, &grad.bigram);
        apply(&mut self.embed, &grad.embed);
        apply(&mut self.proj, &grad.proj);
        apply(&mut self.pos, &grad.pos);
    }

    /// Gradient-descent step: θ -= lr * g.
    pub fn descend(&mut self, grad: &PolicyGrad, lr: f64) {
        self.ascend(grad, -lr);
    }
}

// ---------------------------------------------------------------------------
// SFT loss
// ---------------------------------------------------------------------------

/// Batch negative log-likelihood report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LossReport {
    /// Sum of NLL over every target token in the batch.
    pub total_nll: f64,
    /// total_nll / token_count.
    pub per_token_nll: f64,
    pub token_count: usize,
    pub grad_norm: f64,
}

/// Mean-over-sequences NLL and its exact gradient. The returned gradient is
/// for the descent direction (gradient of the loss).
pub fn sft_loss_and_grad(
    params: &PolicyParams,
    batch: &[TokenSeq],
) -> Result<(LossReport, PolicyGrad)> {
    if batch.is_empty() {
        return Err(Error::invalid("empty SFT batch"));
    }
    let mut grad = PolicyGrad::zeros_like(params);
    let mut total_nll = 0.0;
    let mut token_count = 0usize;
    let weight = 1.0 / batch.len() as f64;
    for seq in batch {
        params.check_tokens(&seq.tokens)?;
        for t in seq.split..seq.tokens.len() {
            let lp = params.conditional_log_probs(&seq.tokens, t);
            let y = seq.tokens[t] as usize;
            total_nll -= lp[y];
            token_count += 1;
            // d(mean loss)/dz = weight * (p - onehot)
            let mut dz: Vec<f64> = lp.iter().map(|l| weight * l.exp()).collect();
            dz[y] -= weight;
            grad.accumulate_logit_grad(params, &seq.tokens, t, &dz);
        }
    }
    let per_token_nll = if token_count > 0 {
        total_nll / token_count as f64
    } else {
        0.0
    };
    let report = LossReport {
        total_nll,
        per_token_nll,
        token_count,
        grad_norm: grad.l2_norm(),
    };
    Ok((report, grad))
}

/// Mean-over-sequences loss value only.
pub fn sft_loss(params: &PolicyParams, batch: &[TokenSeq]) -> Result<f64> {
    let mut total = 0.0;
    for seq in batch {
        total -= params.log_prob(seq)?;
    }
    Ok(total / batch.len() as f64)
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Autoregressive sampling. Deterministic in `sample_seed`; temperature 0 is
/// greedy argmax (ties to the lowest id). Returned log-probs are the
/// untempered conditionals of the sampled continuation, so their sum equals
/// `log_prob` of the returned sequence.
pub fn sample(
    params: &PolicyParams,
    prompt: &[Token],
    max_new: usize,
    temperature: f64,
    sample_seed: u64,
    stop_token: Option<Token>,
) -> Result<(TokenSeq, Vec<f64>)> {
    if temperature < 0.0 {
        return Err(Error::invalid("temperature must be >= 0"));
    }
    params.check_tokens(prompt)?;
    let mut rng: ChaCha8Rng = seed::rng_for(sample_seed, "policy/sample", &[]);
    let mut tokens = prompt.to_vec();
    let mut log_probs = Vec::new();
    for _ in 0..max_new {
        let t = tokens.len();
        if t >= params.context {
            break;
        }
        let z = params.logits(&tokens, t);
        let lp = log_softmax(&z);
        let choice = if temperature == 0.0 {
            argmax(&z)
        } else {
            let tempered: Vec<f64> = z.iter().map(|x| x / temperature).collect();
            let p: Vec<f64> = log_softmax(&tempered).iter().map(|l| l.exp()).collect();
            let u: f64 = rng.gen();
            inverse_cdf(&p, u)
        };
        tokens.push(choice as Token);
        log_probs.push(lp[choice]);
        if stop_token == Some(choice as Token) {
            break;
        }
    }
    Ok((
        TokenSeq {
            tokens,
            split: prompt.len(),
        },
        log_probs,
    ))
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in z.iter().enumerate() {
        if *x > z[best] {
            best = i;
        }
    }
    best
}

fn inverse_cdf(p: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// Plain SGD next-token training. Deterministic in `seed` (epoch shuffles
/// and batch order derive from it). Returns the trained parameters and the
/// per-epoch mean per-token NLL.
pub fn train_sft(
    params: PolicyParams,
    corpus: &[TokenSeq],
    epochs: usize,
    lr: f64,
    batch_size: usize,
    seed: u64,
) -> Result<(PolicyParams, Vec<f64>)> {
    if corpus.is_empty() {
        return Err(Error::invalid("empty SFT corpus"));
    }
    let batch_size = batch_size.clamp(1, corpus.len());
    let mut params = params;
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = seed::rng_for(seed, "sft/epoch", &[epoch as u64]);
        // Fisher-Yates
        for i in (1..order.len()).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let mut epoch_nll = 0.0;
        let mut epoch_tokens = 0usize;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<TokenSeq> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let (report, grad) = sft_loss_and_grad(&params, &batch)?;
            if !report.total_nll.is_finite() || !grad.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss/gradient at epoch {epoch}"
                )));
            }
            params.descend(&grad, lr);
            epoch_nll += report.total_nll;
            epoch_tokens += report.token_count;
        }
        curve.push(if epoch_tokens > 0 {
            epoch_nll / epoch_tokens as f64
        } else {
            0.0
        });
    }
    Ok((params, curve))
}

/// Write a loss curve as `epoch,loss` CSV.
pub fn write_loss_csv(path: &Path, curve: &[f64]) -> Result<()> {
    let mut out =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    writeln!(out, "epoch,loss").map_err(|e| Error::io(path.display().to_string(), e))?;
    for (epoch, loss) in curve.iter().enumerate() {
        writeln!(out, "{epoch},{loss}").map_err(|e| Error::io(path.display().to_string(), e))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 8] = b"MDXPOL1\0";
const LAYOUT_POOLED_BIGRAM: u8 = 1;

/// Binary checkpoint: header {magic, version, V, context, dim, layout,
/// seed}, then the parameter blocks as little-endian f64.
pub fn save_checkpoint(path: &Path, params: &PolicyParams) -> Result<()> {
    let io_err = |e| Error::io(path.display().to_string(), e);
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    out.write_all(CKPT_MAGIC).map_err(io_err)?;
    out.write_all(&1u32.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(params.vocab as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(params.context as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&(params.dim as u32).to_le_bytes()).map_err(io_err)?;
    out.write_all(&[LAYOUT_POOLED_BIGRAM]).map_err(io_err)?;
    out.write_all(&params.init_seed.to_le_bytes()).map_err(io_err)?;
    for block in params.blocks() {
        out.write_all(&(block.len() as u64).to_le_bytes()).map_err(io_err)?;
        for x in block.iter() {
            out.write_all(&x.to_le_bytes()).map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    let io_err = |e| Error::io(path.display().to_string(), e);
    let bad = |reason: &str| Error::parse(path.display().to_string(), reason);
    let mut file = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);

    let mut magic = [0u8; 8];
    file.read_exact(&mut magic).map_err(io_err)?;
    if &magic != CKPT_MAGIC {
        return Err(bad("not a policy checkpoint"));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |file: &mut dyn Read| -> Result<u32> {
        file.read_exact(&mut u32buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut file)?;
    if version != 1 {
        return Err(bad("unsupported checkpoint version"));
    }
    let vocab = read_u32(&mut file)? as usize;
    let context = read_u32(&mut file)? as usize;
    let dim = read_u32(&mut file)? as usize;
    let mut layout = [0u8; 1];
    file.read_exact(&mut layout).map_err(io_err)?;
    if layout[0] != LAYOUT_POOLED_BIGRAM {
        return Err(bad("unsupported parameter layout"));
    }
    let mut u64buf = [0u8; 8];
    file.read_exact(&mut u64buf).map_err(io_err)?;
    let init_seed = u64::from_le_bytes(u64buf);

    let mut params = PolicyParams::uniform(vocab, context, dim);
    params.init_seed = init_seed;
    for block in params.blocks_mut() {
        file.read_exact(&mut u64buf).map_err(|e| Error::io(path.display().to_string(), e))?;
        let len = u64::from_le_bytes(u64buf) as usize;
        if len != block.len() {
            return Err(Error::parse(
                path.display().to_string(),
                "block length does not match header dimensions",
            ));
        }
        let mut f64buf = [0u8; 8];
        for x in block.iter_mut() {
            file.read_exact(&mut f64buf).map_err(|e| Error::io(path.display().to_string(), e))?;
            *x = f64::from_le_bytes(f64buf);
        }
    }
    if !params.all_finite() {
        return Err(bad("checkpoint contains non-finite parameters"));
    }
    Ok(params)
}
