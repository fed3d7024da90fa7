use std::collections::BTreeMap;

use alloygen::baselines::{b2_site_pairs, random_search};
use alloygen::chem::{RoleTable, Symbol};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const N: usize = 10_000;

/// Pearson goodness-of-fit p-value against category weights.
fn p_value(counts: &[usize], weights: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let wsum: f64 = weights.iter().sum();
    let stat: f64 = counts
        .iter()
        .zip(weights)
        .map(|(&c, w)| {
            let expected = total as f64 * w / wsum;
            (c as f64 - expected).powi(2) / expected
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

fn uniform_p_value(counts: &[usize]) -> f64 {
    p_value(counts, &vec![1.0; counts.len()])
}

#[test]
fn sampling_is_uniform_over_each_choice() {
    let roles = RoleTable::default_table();
    let out = random_search(&roles, N, 2024).unwrap();

    let mut sizes = [0usize; 4];
    for t in &out {
        sizes[t.bcc.len() - 1] += 1;
    }
    let p = uniform_p_value(&sizes);
    assert!(p > 0.01, "element count p = {p}");

    // an unordered pair is reachable once per site assignment
    let mut weights: BTreeMap<(Symbol, Symbol), f64> = BTreeMap::new();
    for (a, b) in b2_site_pairs(&roles) {
        *weights.entry((a.min(b), a.max(b))).or_default() += 1.0;
    }
    let mut counts: BTreeMap<(Symbol, Symbol), usize> = weights.keys().map(|k| (*k, 0)).collect();
    for t in &out {
        let els: Vec<Symbol> = t.b2.elements().collect();
        *counts.get_mut(&(els[0].min(els[1]), els[0].max(els[1]))).expect("B2 is a listed site pair") += 1;
    }
    let p = p_value(&counts.values().copied().collect::<Vec<_>>(), &weights.values().copied().collect::<Vec<_>>());
    assert!(p > 0.01, "B2 pair p = {p}");

    // 0.001 grid: 50 points per bin, the two end points carry half mass
    let mut bins = [0usize; 10];
    for t in &out {
        let k = ((t.b2_vol - 0.2) * 1000.0).round() as usize;
        bins[(k / 50).min(9)] += 1;
    }
    let mut weights = [50.0; 10];
    weights[0] = 49.5;
    weights[9] = 50.5;
    let p = p_value(&bins, &weights);
    assert!(p > 0.01, "volume p = {p}");
}
