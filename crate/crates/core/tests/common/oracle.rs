//! Straight-line reimplementation of the window-MLP policy and both training
//! losses, used as a reference for the library's forward and backward passes.

#![allow(dead_code)]

use alloygen::policy::{PolicyParams, PreferenceExample};

/// `log p(seq[t] | seq[..t])` summed over `t >= 1`, computed token by token
/// from the documented parameter layout.
pub fn seq_logprob(p: &PolicyParams, data: &[f64], seq: &[u32]) -> f64 {
    let (v, w, d, h) = (p.shape.vocab_size, p.shape.window, p.shape.embed_dim, p.shape.hidden);
    let emb = |tok: usize, c: usize| data[tok * d + c];
    let w1 = v * d;
    let b1 = w1 + w * d * h;
    let w2 = b1 + h;
    let b2 = w2 + h * v;
    let mut total = 0.0;
    for t in 1..seq.len() {
        // slot j holds the token `w - j` positions back
        let mut ctx = vec![p.pad_id as usize; w];
        for (j, slot) in ctx.iter_mut().enumerate() {
            let back = w - j;
            if back <= t {
                *slot = seq[t - back] as usize;
            }
        }
        let mut hidden = vec![0.0; h];
        for (k, hk) in hidden.iter_mut().enumerate() {
            let mut a = data[b1 + k];
            for (j, &tok) in ctx.iter().enumerate() {
                for c in 0..d {
                    a += emb(tok, c) * data[w1 + (j * d + c) * h + k];
                }
            }
            *hk = a.tanh();
        }
        let logits: Vec<f64> = (0..v)
            .map(|o| data[b2 + o] + (0..h).map(|k| hidden[k] * data[w2 + k * v + o]).sum::<f64>())
            .collect();
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
        total += logits[seq[t] as usize] - lse;
    }
    total
}

pub fn sft_loss(p: &PolicyParams, data: &[f64], batch: &[Vec<u32>]) -> f64 {
    let tokens: usize = batch.iter().map(|s| s.len() - 1).sum();
    -batch.iter().map(|s| seq_logprob(p, data, s)).sum::<f64>() / tokens as f64
}

pub fn dpo_loss(p: &PolicyParams, data: &[f64], reference: &PolicyParams, batch: &[PreferenceExample], beta: f64) -> f64 {
    let total: f64 = batch
        .iter()
        .map(|pair| {
            let chosen = seq_logprob(p, data, &pair.chosen) - seq_logprob(reference, &reference.data, &pair.chosen);
            let rejected = seq_logprob(p, data, &pair.rejected) - seq_logprob(reference, &reference.data, &pair.rejected);
            let z = beta * (chosen - rejected);
            // -ln sigmoid(z), stable on both sides
            if z > 0.0 { (-z).exp().ln_1p() } else { -z + z.exp().ln_1p() }
        })
        .sum();
    total / batch.len() as f64
}

/// Central finite differences of `f` over every coordinate of `data`.
pub fn central_fd(data: &[f64], step: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut x = data.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(&x);
            x[i] = orig - step;
            let down = f(&x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / |b|` in the Euclidean norm.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    diff / norm.max(f64::MIN_POSITIVE)
}
