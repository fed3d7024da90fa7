use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PolicyError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyShape {
    pub vocab_size: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub hidden: usize,
}

impl PolicyShape {
    pub fn n_params(&self) -> usize {
        let PolicyShape { vocab_size: v, window: w, embed_dim: d, hidden: h } = *self;
        v * d + w * d * h + h + h * v + v
    }

    fn offsets(&self) -> Offsets {
        let PolicyShape { vocab_size: v, window: w, embed_dim: d, hidden: h } = *self;
        let w1 = v * d;
        let b1 = w1 + w * d * h;
        let w2 = b1 + h;
        let b2 = w2 + h * v;
        Offsets { w1, b1, w2, b2 }
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Fixed-window policy: the previous `window` tokens (PAD before the start)
/// are embedded, concatenated, passed through one tanh layer and projected
/// to vocabulary logits.
///
/// Flat layout: embedding `[vocab][d]`, hidden weights `[window*d][h]`,
/// hidden bias `[h]`, output weights `[h][vocab]`, output bias `[vocab]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub shape: PolicyShape,
    pub pad_id: u32,
    pub eos_id: u32,
    pub data: Vec<f64>,
}

/// Buffers reused across positions.
pub(crate) struct Scratch {
    x: Vec<f64>,
    hid: Vec<f64>,
    logp: Vec<f64>,
    dh: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(shape: &PolicyShape) -> Scratch {
        Scratch {
            x: vec![0.0; shape.window * shape.embed_dim],
            hid: vec![0.0; shape.hidden],
            logp: vec![0.0; shape.vocab_size],
            dh: vec![0.0; shape.hidden],
        }
    }
}

pub(crate) fn log_softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + v.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    for l in v.iter_mut() {
        *l -= lse;
    }
}

impl PolicyParams {
    /// Small random embedding and hidden weights; output layer zeroed so the
    /// initial policy is uniform.
    pub fn init(shape: PolicyShape, pad_id: u32, eos_id: u32, seed: u64) -> Result<PolicyParams, PolicyError> {
        if shape.vocab_size == 0 || shape.window == 0 || shape.embed_dim == 0 || shape.hidden == 0 {
            return Err(PolicyError::InvalidParameter(format!("degenerate policy shape {shape:?}")));
        }
        if pad_id as usize >= shape.vocab_size || eos_id as usize >= shape.vocab_size {
            return Err(PolicyError::InvalidParameter("special token id outside the vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let off = shape.offsets();
        let mut data = vec![0.0; shape.n_params()];
        let emb = Normal::new(0.0, 0.5).expect("valid sd");
        for p in &mut data[..off.w1] {
            *p = emb.sample(&mut rng);
        }
        let hid = Normal::new(0.0, 1.0 / ((shape.window * shape.embed_dim) as f64).sqrt()).expect("valid sd");
        for p in &mut data[off.w1..off.b1] {
            *p = hid.sample(&mut rng);
        }
        Ok(PolicyParams { shape, pad_id, eos_id, data })
    }

    /// Every entry drawn from `N(0, sd)`, output layer included.
    pub fn random(shape: PolicyShape, pad_id: u32, eos_id: u32, sd: f64, seed: u64) -> Result<PolicyParams, PolicyError> {
        let mut p = PolicyParams::init(shape, pad_id, eos_id, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let dist = Normal::new(0.0, sd).map_err(|e| PolicyError::InvalidParameter(e.to_string()))?;
        for v in &mut p.data {
            *v = dist.sample(&mut rng);
        }
        Ok(p)
    }

    pub fn n_params(&self) -> usize {
        self.data.len()
    }

    pub fn check_finite(&self) -> Result<(), PolicyError> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(PolicyError::InvalidParameter(format!("parameter {i} is not finite"))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_tokens(&self, seq: &[u32]) -> Result<(), PolicyError> {
        match seq.iter().find(|&&t| t as usize >= self.shape.vocab_size) {
            Some(t) => Err(PolicyError::InvalidParameter(format!("token id {t} outside vocabulary of {}", self.shape.vocab_size))),
            None => Ok(()),
        }
    }

    #[cfg(test)]
    pub(crate) fn output_bias_mut(&mut self) -> &mut [f64] {
        let off = self.shape.offsets();
        &mut self.data[off.b2..]
    }

    /// Log-distribution over the next token given `prefix`, written into `s.logp`.
    pub(crate) fn forward(&self, prefix: &[u32], s: &mut Scratch) {
        let PolicyShape { vocab_size: v, window: w, embed_dim: d, hidden: h } = self.shape;
        let off = self.shape.offsets();
        for j in 0..w {
            let tok = (prefix.len() + j).checked_sub(w).map_or(self.pad_id, |p| prefix[p]) as usize;
            s.x[j * d..(j + 1) * d].copy_from_slice(&self.data[tok * d..(tok + 1) * d]);
        }
        s.hid.copy_from_slice(&self.data[off.b1..off.b1 + h]);
        for (i, &xi) in s.x.iter().enumerate() {
            let row = &self.data[off.w1 + i * h..off.w1 + (i + 1) * h];
            for (a, wv) in s.hid.iter_mut().zip(row) {
                *a += xi * wv;
            }
        }
        for a in s.hid.iter_mut() {
            *a = a.tanh();
        }
        s.logp.copy_from_slice(&self.data[off.b2..off.b2 + v]);
        for (k, &hk) in s.hid.iter().enumerate() {
            let row = &self.data[off.w2 + k * v..off.w2 + (k + 1) * v];
            for (l, wv) in s.logp.iter_mut().zip(row) {
                *l += hk * wv;
            }
        }
        log_softmax_in_place(&mut s.logp);
    }

    /// Next-token log-distribution after `prefix`.
    pub fn next_logprobs(&self, prefix: &[u32]) -> Vec<f64> {
        let mut s = Scratch::new(&self.shape);
        self.forward(prefix, &mut s);
        s.logp
    }

    /// Adds `dlogits` (gradient w.r.t. the logits at the position last run
    /// through `forward`) back through the network into `grad`.
    fn backward(&self, prefix: &[u32], dlogits: &[f64], s: &mut Scratch, grad: &mut [f64]) {
        let PolicyShape { vocab_size: v, window: w, embed_dim: d, hidden: h } = self.shape;
        let off = self.shape.offsets();
        for (g, dl) in grad[off.b2..off.b2 + v].iter_mut().zip(dlogits) {
            *g += dl;
        }
        for k in 0..h {
            let hk = s.hid[k];
            let wrow = &self.data[off.w2 + k * v..off.w2 + (k + 1) * v];
            let grow = &mut grad[off.w2 + k * v..off.w2 + (k + 1) * v];
            let mut acc = 0.0;
            for ((g, wv), dl) in grow.iter_mut().zip(wrow).zip(dlogits) {
                *g += hk * dl;
                acc += wv * dl;
            }
            s.dh[k] = acc * (1.0 - hk * hk);
        }
        for (g, da) in grad[off.b1..off.b1 + h].iter_mut().zip(&s.dh) {
            *g += da;
        }
        for j in 0..w {
            let tok = (prefix.len() + j).checked_sub(w).map_or(self.pad_id, |p| prefix[p]) as usize;
            for c in 0..d {
                let i = j * d + c;
                let xi = s.x[i];
                let wrow = &self.data[off.w1 + i * h..off.w1 + (i + 1) * h];
                let grow = &mut grad[off.w1 + i * h..off.w1 + (i + 1) * h];
                let mut dx = 0.0;
                for ((g, wv), da) in grow.iter_mut().zip(wrow).zip(&s.dh) {
                    *g += xi * da;
                    dx += wv * da;
                }
                grad[tok * d + c] += dx;
            }
        }
    }

    /// Teacher-forced log-probabilities: entry `t - 1` is
    /// `log p(seq[t] | seq[..t])` for `t` in `1..len`.
    pub fn logprobs(&self, seq: &[u32]) -> Result<Vec<f64>, PolicyError> {
        if seq.len() < 2 {
            return Err(PolicyError::SequenceTooShort { len: seq.len() });
        }
        self.check_tokens(seq)?;
        let mut s = Scratch::new(&self.shape);
        Ok((1..seq.len())
            .map(|t| {
                self.forward(&seq[..t], &mut s);
                s.logp[seq[t] as usize]
            })
            .collect())
    }

    /// Sum of teacher-forced log-probabilities.
    pub fn sequence_logprob(&self, seq: &[u32]) -> Result<f64, PolicyError> {
        Ok(self.logprobs(seq)?.iter().sum())
    }

    /// Adds `weight * d(sum_t log p(seq[t] | seq[..t]))/d(params)` into `grad`
    /// and returns the sum of log-probabilities.
    pub(crate) fn accumulate_logprob_grad(&self, seq: &[u32], weight: f64, grad: &mut [f64], s: &mut Scratch) -> f64 {
        let mut total = 0.0;
        let mut dlogits = vec![0.0; self.shape.vocab_size];
        for t in 1..seq.len() {
            self.forward(&seq[..t], s);
            let target = seq[t] as usize;
            total += s.logp[target];
            for (dl, lp) in dlogits.iter_mut().zip(&s.logp) {
                *dl = -weight * lp.exp();
            }
            dlogits[target] += weight;
            self.backward(&seq[..t], &dlogits, s, grad);
        }
        total
    }

    /// Autoregressive sampling from `softmax(logits / temperature)` after
    /// `prompt`, stopping at EOS (kept) or after `max_len` new tokens.
    /// Returns the generated tokens and their log-probability under the
    /// tempered distribution.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        prompt: &[u32],
        temperature: f64,
        max_len: usize,
        rng: &mut R,
    ) -> Result<(Vec<u32>, f64), PolicyError> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(PolicyError::InvalidParameter(format!("temperature {temperature} must be positive")));
        }
        if max_len == 0 {
            return Err(PolicyError::InvalidParameter("max_len must be at least 1".into()));
        }
        self.check_tokens(prompt)?;
        let mut seq = prompt.to_vec();
        let mut s = Scratch::new(&self.shape);
        let mut logprob = 0.0;
        for _ in 0..max_len {
            self.forward(&seq, &mut s);
            for l in s.logp.iter_mut() {
                *l /= temperature;
            }
            log_softmax_in_place(&mut s.logp);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = None;
            for (i, lp) in s.logp.iter().enumerate() {
                let p = lp.exp();
                if p == 0.0 {
                    continue;
                }
                acc += p;
                pick = Some(i);
                if u < acc {
                    break;
                }
            }
            // Rounding can leave `acc` a hair under `u`; the last non-zero token absorbs it.
            let tok = pick.expect("softmax has a positive entry");
            logprob += s.logp[tok];
            seq.push(tok as u32);
            if tok as u32 == self.eos_id {
                break;
            }
        }
        Ok((seq.split_off(prompt.len()), logprob))
    }

    /// Argmax decoding; ties go to the lowest id.
    pub fn greedy(&self, prompt: &[u32], max_len: usize) -> Result<Vec<u32>, PolicyError> {
        self.check_tokens(prompt)?;
        let mut seq = prompt.to_vec();
        let mut s = Scratch::new(&self.shape);
        for _ in 0..max_len {
            self.forward(&seq, &mut s);
            let mut best = 0;
            for (i, lp) in s.logp.iter().enumerate() {
                if *lp > s.logp[best] {
                    best = i;
                }
            }
            seq.push(best as u32);
            if best as u32 == self.eos_id {
                break;
            }
        }
        Ok(seq.split_off(prompt.len()))
    }
}
