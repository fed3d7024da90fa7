use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::model::PolicyParams;
use super::PolicyError;

/// `sum_i p_i (log p_i - log q_i)` from log-probabilities.
pub fn kl_divergence(logp: &[f64], logq: &[f64]) -> f64 {
    logp.iter()
        .zip(logq)
        .filter(|(lp, _)| lp.is_finite())
        .map(|(lp, lq)| lp.exp() * (lp - lq))
        .sum::<f64>()
        .max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlTrace {
    /// Entry `t - 1` is the KL at the position predicting `seq[t]`.
    pub per_token: Vec<f64>,
    /// Mean over positions whose realized token passes the filter.
    pub filtered_mean: Option<f64>,
    /// Sequence positions (indices into the trimmed sequence) that passed.
    pub kept_positions: Vec<usize>,
}

fn trim_at_eos(seq: &[u32], eos: u32) -> &[u32] {
    match seq.iter().skip(1).position(|&t| t == eos) {
        Some(i) => &seq[..i + 2],
        None => seq,
    }
}

/// Teacher-forced per-position `KL(p || q)` along `seq`, trimmed after the
/// first EOS.
pub fn kl_per_token(
    p: &PolicyParams,
    q: &PolicyParams,
    seq: &[u32],
    filter: &dyn Fn(&[u32], usize) -> bool,
) -> Result<KlTrace, PolicyError> {
    if p.shape.vocab_size != q.shape.vocab_size {
        return Err(PolicyError::ShapeMismatch);
    }
    let seq = trim_at_eos(seq, p.eos_id);
    if seq.len() < 2 {
        return Err(PolicyError::SequenceTooShort { len: seq.len() });
    }
    p.check_tokens(seq)?;
    let mut per_token = Vec::with_capacity(seq.len() - 1);
    let mut kept_positions = Vec::new();
    for t in 1..seq.len() {
        per_token.push(kl_divergence(&p.next_logprobs(&seq[..t]), &q.next_logprobs(&seq[..t])));
        if filter(seq, t) {
            kept_positions.push(t);
        }
    }
    let filtered_mean = (!kept_positions.is_empty())
        .then(|| kept_positions.iter().map(|&t| per_token[t - 1]).sum::<f64>() / kept_positions.len() as f64);
    Ok(KlTrace { per_token, filtered_mean, kept_positions })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlCompareRow {
    pub token: u32,
    pub delta_kl: f64,
    pub mean_kl_a: f64,
    pub mean_kl_b: f64,
    pub count: usize,
}

/// For each token type, mean `KL(dpo_a || sft_a)` minus mean
/// `KL(dpo_b || sft_b)` over filtered positions realizing that token,
/// sorted by the difference, largest first (ties by token id).
pub fn kl_compare(
    run_a: (&PolicyParams, &PolicyParams),
    run_b: (&PolicyParams, &PolicyParams),
    sequences: &[Vec<u32>],
    filter: &dyn Fn(&[u32], usize) -> bool,
) -> Result<Vec<KlCompareRow>, PolicyError> {
    let (sft_a, dpo_a) = run_a;
    let (sft_b, dpo_b) = run_b;
    let mut acc: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for seq in sequences {
        let a = kl_per_token(dpo_a, sft_a, seq, filter)?;
        let b = kl_per_token(dpo_b, sft_b, seq, filter)?;
        for &t in &a.kept_positions {
            let e = acc.entry(seq[t]).or_insert((0.0, 0.0, 0));
            e.0 += a.per_token[t - 1];
            e.1 += b.per_token[t - 1];
            e.2 += 1;
        }
    }
    let mut rows: Vec<KlCompareRow> = acc
        .into_iter()
        .map(|(token, (sa, sb, n))| {
            let (mean_kl_a, mean_kl_b) = (sa / n as f64, sb / n as f64);
            KlCompareRow { token, delta_kl: mean_kl_a - mean_kl_b, mean_kl_a, mean_kl_b, count: n }
        })
        .collect();
    rows.sort_by(|x, y| y.delta_kl.total_cmp(&x.delta_kl).then(x.token.cmp(&y.token)));
    Ok(rows)
}
