//! Composition featurization and the generation-quality metrics: validity,
//! coverage, novelty, uniqueness, and a combined report.
//!
//! Features are 8 element properties x 5 mole-fraction-weighted statistics
//! (mean, std, min, max, range). A triple is featurized as its BCC vector
//! followed by its B2 vector. Distances are Euclidean after z-scoring on a
//! reference set.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{CandidateTriple, Composition, ElementRecord, ElementTable, Symbol};
use crate::reward::ScoredCandidate;

pub const FEATURIZER_VERSION: u32 = 1;

pub const PROPERTY_NAMES: [&str; 8] =
    ["electronegativity", "radius_pm", "atomic_number", "mass", "melting_point_k", "valence_electrons", "group", "period"];
pub const STATISTIC_NAMES: [&str; 5] = ["mean", "std", "min", "max", "range"];
pub const FEATURE_DIM: usize = PROPERTY_NAMES.len() * STATISTIC_NAMES.len();

pub const DEFAULT_UNIQUE_N: usize = 100;
pub const DEFAULT_DELTA_PERCENTILE: f64 = 0.05;
pub const MAX_DENOMINATOR: u32 = 1000;

/// Fractions must sit this close to `n / d` to integerize; half a unit of
/// the four-decimal formula text.
const INTEGERIZE_TOLERANCE: f64 = 5e-5;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("element {0} has no property record")]
    MissingProperty(Symbol),
    #[error("cannot integerize {0} with denominator <= {MAX_DENOMINATOR}")]
    IntegerizationFailure(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("feature vectors have different lengths")]
    DimensionMismatch,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn properties(r: &ElementRecord) -> [f64; 8] {
    [
        r.electronegativity,
        r.radius_pm,
        r.atomic_number as f64,
        r.mass,
        r.melting_point_k,
        r.valence_electrons as f64,
        r.group as f64,
        r.period as f64,
    ]
}

/// 40-dimensional property statistics, property-major.
pub fn featurize(c: &Composition, table: &ElementTable) -> Result<Vec<f64>, MetricError> {
    let rows: Vec<(f64, [f64; 8])> = c
        .iter()
        .map(|(s, x)| table.get(s).map(|r| (x, properties(r))).ok_or(MetricError::MissingProperty(s)))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(FEATURE_DIM);
    for p in 0..PROPERTY_NAMES.len() {
        let mean: f64 = rows.iter().map(|(x, v)| x * v[p]).sum();
        let var: f64 = rows.iter().map(|(x, v)| x * (v[p] - mean).powi(2)).sum();
        let min = rows.iter().map(|(_, v)| v[p]).fold(f64::INFINITY, f64::min);
        let max = rows.iter().map(|(_, v)| v[p]).fold(f64::NEG_INFINITY, f64::max);
        out.extend([mean, var.max(0.0).sqrt(), min, max, max - min]);
    }
    Ok(out)
}

/// BCC features followed by B2 features.
pub fn featurize_pair(t: &CandidateTriple, table: &ElementTable) -> Result<Vec<f64>, MetricError> {
    let mut f = featurize(&t.bcc, table)?;
    f.extend(featurize(&t.b2, table)?);
    Ok(f)
}

/// Per-dimension z-scoring fitted on a reference set. Constant dimensions
/// are centred but not scaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(reference: &[Vec<f64>]) -> Result<Normalizer, MetricError> {
        let first = reference.first().ok_or(MetricError::EmptyInput("reference features"))?;
        let dim = first.len();
        if reference.iter().any(|v| v.len() != dim) {
            return Err(MetricError::DimensionMismatch);
        }
        let n = reference.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|j| reference.iter().map(|v| v[j]).sum::<f64>() / n).collect();
        let std = (0..dim)
            .map(|j| {
                let s = (reference.iter().map(|v| (v[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Ok(Normalizer { mean, std })
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>, MetricError> {
        if v.len() != self.mean.len() {
            return Err(MetricError::DimensionMismatch);
        }
        Ok(v.iter().zip(&self.mean).zip(&self.std).map(|((x, m), s)| (x - m) / s).collect())
    }

    pub fn apply_all(&self, vs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, MetricError> {
        vs.iter().map(|v| self.apply(v)).collect()
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn min_distance(p: &[f64], set: &[Vec<f64>]) -> f64 {
    set.iter().map(|q| euclidean(p, q)).fold(f64::INFINITY, f64::min)
}

fn check_dims(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<(), MetricError> {
    let dim = a.first().or(b.first()).map_or(0, Vec::len);
    if a.iter().chain(b).any(|v| v.len() != dim) {
        return Err(MetricError::DimensionMismatch);
    }
    Ok(())
}

/// Integer counts for `c`: the smallest
/// denominator `d <= 1000` with every fraction within tolerance of `n / d`.
pub fn integerize(c: &Composition) -> Result<Vec<(Symbol, u32)>, MetricError> {
    for d in 1..=MAX_DENOMINATOR {
        let counts: Vec<(Symbol, u32)> = c.iter().map(|(s, x)| (s, (x * d as f64).round() as u32)).collect();
        let fits = c
            .iter()
            .zip(&counts)
            .all(|((_, x), (_, n))| *n > 0 && (x - *n as f64 / d as f64).abs() <= INTEGERIZE_TOLERANCE);
        if fits {
            return Ok(counts);
        }
    }
    Err(MetricError::IntegerizationFailure(c.to_formula()))
}

/// Alloy convention plus charge-neutrality screen. All-metal compositions
/// are valid. Otherwise some assignment of one allowed oxidation state per
/// element must balance the integerized formula, with every anion at least
/// as electronegative as every cation.
pub fn validity(c: &Composition, table: &ElementTable) -> Result<bool, MetricError> {
    let records: Vec<&ElementRecord> =
        c.elements().map(|s| table.get(s).ok_or(MetricError::MissingProperty(s))).collect::<Result<_, _>>()?;
    if records.iter().all(|r| r.is_metal) {
        return Ok(true);
    }
    let counts = integerize(c)?;
    let mut states = vec![0i32; records.len()];
    Ok(search_neutral(&records, &counts, 0, &mut states))
}

fn search_neutral(records: &[&ElementRecord], counts: &[(Symbol, u32)], i: usize, states: &mut [i32]) -> bool {
    if i == records.len() {
        let charge: i64 = counts.iter().zip(states.iter()).map(|((_, n), s)| *n as i64 * *s as i64).sum();
        if charge != 0 {
            return false;
        }
        let min_anion = records.iter().zip(states.iter()).filter(|(_, s)| **s < 0).map(|(r, _)| r.electronegativity).fold(f64::INFINITY, f64::min);
        let max_cation = records.iter().zip(states.iter()).filter(|(_, s)| **s > 0).map(|(r, _)| r.electronegativity).fold(f64::NEG_INFINITY, f64::max);
        return min_anion >= max_cation;
    }
    for &s in &records[i].oxidation_states {
        states[i] = s;
        if search_neutral(records, counts, i + 1, states) {
            return true;
        }
    }
    false
}

/// `(recall, precision)`: the fraction of reference points within `delta` of
/// some generated point, and of generated points within `delta` of some
/// reference point.
pub fn coverage(generated: &[Vec<f64>], reference: &[Vec<f64>], delta: f64) -> Result<(f64, f64), MetricError> {
    if generated.is_empty() {
        return Err(MetricError::EmptyInput("generated"));
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyInput("reference"));
    }
    check_dims(generated, reference)?;
    let recall = reference.par_iter().filter(|r| min_distance(r, generated) <= delta).count() as f64 / reference.len() as f64;
    let precision = generated.par_iter().filter(|g| min_distance(g, reference) <= delta).count() as f64 / generated.len() as f64;
    Ok((recall, precision))
}

/// `(mean nearest-known distance, fraction farther than delta)`.
pub fn novelty(generated: &[Vec<f64>], known: &[Vec<f64>], delta: f64) -> Result<(f64, f64), MetricError> {
    if generated.is_empty() {
        return Err(MetricError::EmptyInput("generated"));
    }
    if known.is_empty() {
        return Err(MetricError::EmptyInput("known"));
    }
    check_dims(generated, known)?;
    let dists: Vec<f64> = generated.par_iter().map(|g| min_distance(g, known)).collect();
    let n = dists.len() as f64;
    Ok((dists.iter().sum::<f64>() / n, dists.iter().filter(|d| **d > delta).count() as f64 / n))
}

/// Nearest-rank `percentile` of within-set nearest-neighbour distances.
pub fn default_delta(reference: &[Vec<f64>], percentile: f64) -> Result<f64, MetricError> {
    if reference.len() < 2 {
        return Err(MetricError::EmptyInput("reference needs at least two points"));
    }
    if !(percentile > 0.0 && percentile <= 1.0) {
        return Err(MetricError::InvalidParameter(format!("percentile {percentile} must be in (0, 1]")));
    }
    let mut nn: Vec<f64> = (0..reference.len())
        .into_par_iter()
        .map(|i| {
            reference
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| euclidean(&reference[i], q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let rank = ((percentile * nn.len() as f64).ceil() as usize).clamp(1, nn.len());
    Ok(nn[rank - 1])
}

/// Distinct `(bcc, b2)` pairs among the first `n` samples, over `n`.
pub fn unique_pairs(samples: &[CandidateTriple], n: usize) -> Result<f64, MetricError> {
    if n == 0 {
        return Err(MetricError::InvalidParameter("n must be at least 1".into()));
    }
    if samples.len() < n {
        return Err(MetricError::TooFewSamples { needed: n, got: samples.len() });
    }
    let distinct: HashSet<(String, String)> = samples[..n].iter().map(CandidateTriple::pair_key).collect();
    Ok(distinct.len() as f64 / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Coverage threshold; `None` uses the default percentile on the reference.
    pub coverage_delta: Option<f64>,
    /// Novelty threshold; `None` uses the default percentile on the known set.
    pub novelty_delta: Option<f64>,
    pub unique_n: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig { coverage_delta: None, novelty_delta: None, unique_n: DEFAULT_UNIQUE_N }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReportConfig {
    pub coverage_delta: f64,
    pub novelty_delta: f64,
    pub unique_n: usize,
    pub featurizer_version: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_samples: usize,
    pub n_scored: usize,
    pub n_reference: usize,
    pub n_known: usize,
    pub validity_rate: f64,
    pub coverage_recall: f64,
    pub coverage_precision: f64,
    pub novelty_mean_distance: f64,
    pub novelty_fraction: f64,
    pub unique_pairs: f64,
    pub mean_reward: Option<f64>,
    pub config: MetricReportConfig,
}

/// Every metric for one sample set. Coverage compares pair features with
/// the reference design space; novelty compares master-composition features
/// with the known alloys.
pub fn metric_report(
    samples: &[CandidateTriple],
    scored: &[ScoredCandidate],
    reference: &[CandidateTriple],
    known: &[Composition],
    table: &ElementTable,
    config: &MetricConfig,
) -> Result<MetricReport, MetricError> {
    if samples.is_empty() {
        return Err(MetricError::EmptyInput("samples"));
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyInput("reference"));
    }
    if known.is_empty() {
        return Err(MetricError::EmptyInput("known"));
    }
    let unique = unique_pairs(samples, config.unique_n)?;
    let valid = samples
        .iter()
        .map(|t| validity(&t.master(), table))
        .collect::<Result<Vec<bool>, _>>()?
        .iter()
        .filter(|v| **v)
        .count();

    let pair_feats = |ts: &[CandidateTriple]| ts.par_iter().map(|t| featurize_pair(t, table)).collect::<Result<Vec<_>, _>>();
    let ref_raw = pair_feats(reference)?;
    let norm = Normalizer::fit(&ref_raw)?;
    let ref_feats = norm.apply_all(&ref_raw)?;
    let gen_feats = norm.apply_all(&pair_feats(samples)?)?;
    let coverage_delta = match config.coverage_delta {
        Some(d) => d,
        None => default_delta(&ref_feats, DEFAULT_DELTA_PERCENTILE)?,
    };
    let (coverage_recall, coverage_precision) = coverage(&gen_feats, &ref_feats, coverage_delta)?;

    let known_raw = known.iter().map(|c| featurize(c, table)).collect::<Result<Vec<_>, _>>()?;
    let known_norm = Normalizer::fit(&known_raw)?;
    let known_feats = known_norm.apply_all(&known_raw)?;
    let gen_master = samples.iter().map(|t| featurize(&t.master(), table).and_then(|f| known_norm.apply(&f))).collect::<Result<Vec<_>, _>>()?;
    let novelty_delta = match config.novelty_delta {
        Some(d) => d,
        None if known_feats.len() >= 2 => default_delta(&known_feats, DEFAULT_DELTA_PERCENTILE)?,
        None => 0.0,
    };
    let (novelty_mean_distance, novelty_fraction) = novelty(&gen_master, &known_feats, novelty_delta)?;

    let mean_reward = (!scored.is_empty()).then(|| scored.iter().map(|s| s.reward).sum::<f64>() / scored.len() as f64);
    Ok(MetricReport {
        n_samples: samples.len(),
        n_scored: scored.len(),
        n_reference: reference.len(),
        n_known: known.len(),
        validity_rate: valid as f64 / samples.len() as f64,
        coverage_recall,
        coverage_precision,
        novelty_mean_distance,
        novelty_fraction,
        unique_pairs: unique,
        mean_reward,
        config: MetricReportConfig { coverage_delta, novelty_delta, unique_n: config.unique_n, featurizer_version: FEATURIZER_VERSION },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ElementTable {
        ElementTable::default_table()
    }

    fn comp(pairs: &[(&str, f64)]) -> Composition {
        Composition::of(pairs).unwrap()
    }

    #[test]
    fn single_element_statistics_are_degenerate() {
        let t = table();
        let f = featurize(&comp(&[("Mo", 1.0)]), &t).unwrap();
        let props = properties(t.lookup("Mo").unwrap());
        for (p, v) in props.iter().enumerate() {
            assert_eq!(&f[p * 5..p * 5 + 5], &[*v, 0.0, *v, *v, 0.0]);
        }
    }

    #[test]
    fn equal_binary_mean_is_midpoint() {
        let t = table();
        let f = featurize(&comp(&[("Mo", 0.5), ("Nb", 0.5)]), &t).unwrap();
        let (a, b) = (properties(t.lookup("Mo").unwrap()), properties(t.lookup("Nb").unwrap()));
        for p in 0..8 {
            assert!((f[p * 5] - (a[p] + b[p]) / 2.0).abs() < 1e-9);
            assert!((f[p * 5 + 1] - (a[p] - b[p]).abs() / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn three_element_fixture() {
        // Electronegativity of Mo 2.16, Al 1.61, Ni 1.91 at 0.5/0.25/0.25.
        let f = featurize(&comp(&[("Mo", 0.5), ("Al", 0.25), ("Ni", 0.25)]), &table()).unwrap();
        let mean = 0.5 * 2.16 + 0.25 * 1.61 + 0.25 * 1.91;
        let var = 0.5 * (2.16f64 - mean).powi(2) + 0.25 * (1.61f64 - mean).powi(2) + 0.25 * (1.91f64 - mean).powi(2);
        let expected = [mean, var.sqrt(), 1.61, 2.16, 2.16 - 1.61];
        for (a, b) in f[..5].iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn validity_cases() {
        let t = table();
        assert!(validity(&comp(&[("Mo", 0.5), ("Nb", 0.5)]), &t).unwrap());
        assert!(validity(&comp(&[("W", 1.0)]), &t).unwrap());
        assert!(!validity(&comp(&[("Al", 0.5), ("C", 0.5)]), &t).unwrap());
        assert!(validity(&comp(&[("Al", 4.0), ("C", 3.0)]), &t).unwrap());
        assert!(matches!(
            validity(&comp(&[("Al", 1.0), ("C", 2f64.sqrt()), ("B", 3f64.sqrt()), ("Si", std::f64::consts::PI)]), &t),
            Err(MetricError::IntegerizationFailure(_))
        ));
    }

    #[test]
    fn coverage_fixture_against_brute_force() {
        let gen = vec![vec![0.0, 0.0], vec![3.0, 4.0]];
        let reference = vec![vec![0.0, 1.0], vec![3.0, 5.5], vec![10.0, 10.0]];
        let (r, p) = coverage(&gen, &reference, 1.0).unwrap();
        assert_eq!((r, p), (1.0 / 3.0, 0.5));
        let (r, p) = coverage(&gen, &reference, 1.6).unwrap();
        assert_eq!((r, p), (2.0 / 3.0, 1.0));
        let (r, p) = coverage(&gen, &reference, 0.5).unwrap();
        assert_eq!((r, p), (0.0, 0.0));
        assert!(matches!(coverage(&[], &reference, 1.0), Err(MetricError::EmptyInput(_))));
    }

    #[test]
    fn novelty_cases() {
        let known = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(novelty(&known, &known, 0.1).unwrap(), (0.0, 0.0));
        let (m, f) = novelty(&[vec![4.0, 5.0]], &known, 0.1).unwrap();
        assert!((m - 5.0).abs() < 1e-12);
        assert_eq!(f, 1.0);
    }

    #[test]
    fn default_delta_percentile() {
        let pts: Vec<Vec<f64>> = [0.0, 1.0, 3.0, 6.0, 10.0].iter().map(|x| vec![*x]).collect();
        // Nearest-neighbour distances: 1, 1, 2, 3, 4.
        assert_eq!(default_delta(&pts, 0.05).unwrap(), 1.0);
        assert_eq!(default_delta(&pts, 0.6).unwrap(), 2.0);
        assert_eq!(default_delta(&pts, 1.0).unwrap(), 4.0);
    }

    fn triples(n_distinct: usize, copies: usize) -> Vec<CandidateTriple> {
        let bcc = crate::datasets::enumerate_bcc_pool(&crate::chem::RoleTable::default_table(), &crate::datasets::CONCENTRATION_GRID).unwrap();
        let b2 = comp(&[("Al", 0.5), ("Ni", 0.5)]);
        let mut out = Vec::new();
        for _ in 0..copies {
            for c in bcc.iter().take(n_distinct) {
                out.push(CandidateTriple::new(c.clone(), b2.clone(), 0.45).unwrap());
            }
        }
        out
    }

    #[test]
    fn unique_pair_fractions() {
        assert_eq!(unique_pairs(&triples(100, 1), 100).unwrap(), 1.0);
        assert_eq!(unique_pairs(&triples(1, 100), 100).unwrap(), 0.01);
        assert_eq!(unique_pairs(&triples(50, 2), 100).unwrap(), 0.5);
        assert!(matches!(unique_pairs(&triples(5, 1), 100), Err(MetricError::TooFewSamples { needed: 100, got: 5 })));
    }

    #[test]
    fn report_self_reference_and_round_trip() {
        let t = table();
        let samples = triples(120, 1);
        let known: Vec<Composition> = samples.iter().map(|s| s.master()).collect();
        let report = metric_report(&samples, &[], &samples, &known, &t, &MetricConfig::default()).unwrap();
        assert_eq!(report.coverage_recall, 1.0);
        assert_eq!(report.coverage_precision, 1.0);
        assert_eq!(report.novelty_mean_distance, 0.0);
        assert_eq!(report.validity_rate, 1.0);
        assert_eq!(report.mean_reward, None);
        let json = serde_json::to_string(&report).unwrap();
        assert_eq!(serde_json::from_str::<MetricReport>(&json).unwrap(), report);
        assert!(matches!(metric_report(&[], &[], &samples, &known, &t, &MetricConfig::default()), Err(MetricError::EmptyInput(_))));
    }
}
