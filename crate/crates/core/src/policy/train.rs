use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{PolicyParams, Scratch};
use super::PolicyError;

/// Sequences per parallel work unit. Fixed so the summation order of the
/// gradient does not depend on the thread count.
const GRAD_CHUNK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SftConfig {
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Global gradient-norm clip; `None` disables.
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for SftConfig {
    fn default() -> Self {
        SftConfig { lr: 0.5, momentum: 0.9, batch_size: 32, epochs: 10, clip_norm: Some(5.0), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpoConfig {
    pub beta: f64,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub clip_norm: Option<f64>,
    pub seed: u64,
}

impl Default for DpoConfig {
    fn default() -> Self {
        DpoConfig { beta: 0.5, lr: 0.05, momentum: 0.9, batch_size: 32, steps: 200, clip_norm: Some(5.0), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    pub loss: f64,
    pub reward_margin: f64,
}

/// Writes the `step,loss,reward_margin` training log.
pub fn write_train_log<W: std::io::Write>(rows: &[TrainLogRow], writer: W) -> Result<(), PolicyError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r).map_err(|e| PolicyError::Checkpoint(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceExample {
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpoOutput {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Mean of `beta * (r+ - r-)` over the batch.
    pub reward_margin: f64,
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_sequences<'a>(params: &PolicyParams, seqs: impl Iterator<Item = &'a Vec<u32>>) -> Result<(), PolicyError> {
    for s in seqs {
        if s.len() < 2 {
            return Err(PolicyError::SequenceTooShort { len: s.len() });
        }
        params.check_tokens(s)?;
    }
    Ok(())
}

/// Sums per-chunk gradients in chunk order.
fn chunked_grad<T: Sync>(
    params: &PolicyParams,
    items: &[T],
    work: impl Fn(&T, &mut [f64], &mut Scratch) -> f64 + Sync,
) -> (Vec<f64>, f64) {
    let n = params.n_params();
    let parts: Vec<(Vec<f64>, f64)> = items
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; n];
            let mut s = Scratch::new(&params.shape);
            let value = chunk.iter().map(|item| work(item, &mut grad, &mut s)).sum();
            (grad, value)
        })
        .collect();
    let mut grad = vec![0.0; n];
    let mut value = 0.0;
    for (g, v) in parts {
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
        value += v;
    }
    (grad, value)
}

/// Mean per-token negative log-likelihood over `batch` and its gradient.
pub fn sft_loss(params: &PolicyParams, batch: &[Vec<u32>]) -> Result<(f64, Vec<f64>), PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyCorpus);
    }
    check_sequences(params, batch.iter())?;
    let n_tokens: usize = batch.iter().map(|s| s.len() - 1).sum();
    let w = -1.0 / n_tokens as f64;
    let (grad, total_lp) = chunked_grad(params, batch, |seq, g, s| params.accumulate_logprob_grad(seq, w, g, s));
    Ok((-total_lp / n_tokens as f64, grad))
}

/// DPO objective against a frozen reference. `ref_logprobs[i]` holds the
/// reference sequence log-probabilities `(chosen, rejected)` for pair `i`.
fn dpo_loss_with_ref(
    params: &PolicyParams,
    batch: &[PreferenceExample],
    ref_logprobs: &[(f64, f64)],
    beta: f64,
) -> Result<DpoOutput, PolicyError> {
    let b = batch.len() as f64;
    let policy_lp: Vec<(f64, f64)> = batch
        .par_iter()
        .map(|p| Ok((params.sequence_logprob(&p.chosen)?, params.sequence_logprob(&p.rejected)?)))
        .collect::<Result<_, PolicyError>>()?;
    let mut loss = 0.0;
    let mut margin = 0.0;
    let mut coefs = Vec::with_capacity(batch.len());
    for ((pc, pr), (rc, rr)) in policy_lp.iter().zip(ref_logprobs) {
        let z = beta * ((pc - rc) - (pr - rr));
        loss += softplus(-z);
        margin += z;
        // d(-log sigmoid(z))/dz = -sigmoid(-z)
        coefs.push(beta * sigmoid(-z) / b);
    }
    let items: Vec<(&PreferenceExample, f64)> = batch.iter().zip(coefs).collect();
    let (grad, _) = chunked_grad(params, &items, |(pair, c), g, s| {
        params.accumulate_logprob_grad(&pair.chosen, -c, g, s);
        params.accumulate_logprob_grad(&pair.rejected, *c, g, s);
        0.0
    });
    let loss = loss / b;
    if !loss.is_finite() {
        return Err(PolicyError::NonFiniteLoss { step: 0 });
    }
    Ok(DpoOutput { loss, grad, reward_margin: margin / b })
}

/// Mean over pairs of `-log sigmoid(beta * ((log pi(y+) - log ref(y+)) - (log pi(y-) - log ref(y-))))`.
pub fn dpo_loss(
    params: &PolicyParams,
    ref_params: &PolicyParams,
    batch: &[PreferenceExample],
    beta: f64,
) -> Result<DpoOutput, PolicyError> {
    if batch.is_empty() {
        return Err(PolicyError::EmptyCorpus);
    }
    if !(beta > 0.0) {
        return Err(PolicyError::InvalidParameter(format!("beta {beta} must be positive")));
    }
    if params.shape != ref_params.shape {
        return Err(PolicyError::ShapeMismatch);
    }
    check_sequences(params, batch.iter().flat_map(|p| [&p.chosen, &p.rejected]))?;
    let refs = reference_logprobs(ref_params, batch)?;
    dpo_loss_with_ref(params, batch, &refs, beta)
}

fn reference_logprobs(ref_params: &PolicyParams, batch: &[PreferenceExample]) -> Result<Vec<(f64, f64)>, PolicyError> {
    batch
        .par_iter()
        .map(|p| Ok((ref_params.sequence_logprob(&p.chosen)?, ref_params.sequence_logprob(&p.rejected)?)))
        .collect()
}

struct Sgd {
    lr: f64,
    momentum: f64,
    clip_norm: Option<f64>,
    velocity: Vec<f64>,
}

impl Sgd {
    fn new(n: usize, lr: f64, momentum: f64, clip_norm: Option<f64>) -> Result<Sgd, PolicyError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(PolicyError::InvalidParameter(format!("learning rate {lr} must be positive")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(PolicyError::InvalidParameter(format!("momentum {momentum} must be in [0, 1)")));
        }
        Ok(Sgd { lr, momentum, clip_norm, velocity: vec![0.0; n] })
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        let mut scale = 1.0;
        if let Some(c) = self.clip_norm {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > c {
                scale = c / norm;
            }
        }
        for ((p, v), g) in params.iter_mut().zip(self.velocity.iter_mut()).zip(grad) {
            *v = self.momentum * *v + scale * g;
            *p -= self.lr * *v;
        }
    }
}

/// Minibatch gradient descent on the mean token NLL. Returns the trained
/// parameters and the mean NLL of each epoch, measured on the fly.
pub fn train_sft(
    params: &PolicyParams,
    corpus: &[Vec<u32>],
    cfg: &SftConfig,
) -> Result<(PolicyParams, Vec<f64>), PolicyError> {
    if corpus.is_empty() {
        return Err(PolicyError::EmptyCorpus);
    }
    if cfg.batch_size == 0 {
        return Err(PolicyError::InvalidParameter("batch_size must be at least 1".into()));
    }
    check_sequences(params, corpus.iter())?;
    let mut out = params.clone();
    let mut opt = Sgd::new(out.n_params(), cfg.lr, cfg.momentum, cfg.clip_norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut nll = 0.0;
        let mut tokens = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<Vec<u32>> = idx.iter().map(|&i| corpus[i].clone()).collect();
            let n_tok: usize = batch.iter().map(|s| s.len() - 1).sum();
            let (loss, grad) = sft_loss(&out, &batch)?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(PolicyError::NonFiniteLoss { step });
            }
            nll += loss * n_tok as f64;
            tokens += n_tok;
            opt.step(&mut out.data, &grad);
            step += 1;
        }
        let epoch_loss = nll / tokens as f64;
        log::info!("sft epoch {} loss {epoch_loss:.5}", epoch_losses.len());
        epoch_losses.push(epoch_loss);
    }
    Ok((out, epoch_losses))
}

/// Gradient descent on the DPO loss with `params_sft` as the frozen
/// reference. Minibatches cycle through a seeded shuffle of the pairs.
pub fn train_dpo(
    params_sft: &PolicyParams,
    pairs: &[PreferenceExample],
    cfg: &DpoConfig,
) -> Result<(PolicyParams, Vec<TrainLogRow>), PolicyError> {
    if pairs.is_empty() {
        return Err(PolicyError::EmptyCorpus);
    }
    if !(cfg.beta > 0.0) {
        return Err(PolicyError::InvalidParameter(format!("beta {} must be positive", cfg.beta)));
    }
    if cfg.batch_size == 0 {
        return Err(PolicyError::InvalidParameter("batch_size must be at least 1".into()));
    }
    check_sequences(params_sft, pairs.iter().flat_map(|p| [&p.chosen, &p.rejected]))?;
    let refs = reference_logprobs(params_sft, pairs)?;
    let mut out = params_sft.clone();
    let mut opt = Sgd::new(out.n_params(), cfg.lr, cfg.momentum, cfg.clip_norm)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut log = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let mut idx = Vec::with_capacity(cfg.batch_size);
        while idx.len() < cfg.batch_size.min(pairs.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch: Vec<PreferenceExample> = idx.iter().map(|&i| pairs[i].clone()).collect();
        let batch_refs: Vec<(f64, f64)> = idx.iter().map(|&i| refs[i]).collect();
        let o = dpo_loss_with_ref(&out, &batch, &batch_refs, cfg.beta).map_err(|e| match e {
            PolicyError::NonFiniteLoss { .. } => PolicyError::NonFiniteLoss { step },
            other => other,
        })?;
        if o.grad.iter().any(|g| !g.is_finite()) {
            return Err(PolicyError::NonFiniteLoss { step });
        }
        opt.step(&mut out.data, &o.grad);
        log::debug!("dpo step {step} loss {:.5} margin {:.5}", o.loss, o.reward_margin);
        log.push(TrainLogRow { step, loss: o.loss, reward_margin: o.reward_margin });
    }
    Ok((out, log))
}
