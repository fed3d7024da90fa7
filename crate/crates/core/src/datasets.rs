//! Candidate pools, the SFT triple corpus and DPO preference pairs.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{
    parse_formula, quantize_volume, CandidateTriple, ChemError, Composition, ElementTable, RoleTable, Symbol,
    MAX_B2_VOLUME, MIN_B2_VOLUME,
};
use crate::phase::{PhaseClass, PhaseError, PhaseOracle, TemperatureGrid};
use crate::reward::ScoredCandidate;

/// Instruction shown before every completion. Changing the text changes the
/// token stream the policy is trained on, so it is versioned.
pub const SFT_PROMPT: &str =
    "Propose a BCC/B2 superalloy. Answer with the BCC composition/B2 composition/B2 volume percent, e.g. Mo0.5000Nb0.5000/Al0.5000Ni0.5000/45.0%:";
pub const SFT_PROMPT_VERSION: u32 = 1;

/// Concentration grid used for BCC enumeration and random search.
pub const CONCENTRATION_GRID: [f64; 7] = [0.20, 0.25, 0.33, 0.40, 0.50, 0.67, 0.75];

/// Grid points like 0.33 and 0.67 only approximately sum to one.
const GRID_SUM_TOLERANCE: f64 = 0.015;

const MAX_BCC_ELEMENTS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("role table has no elements for {0}")]
    EmptyRoleTable(&'static str),
    #[error("empty pool: {0}")]
    EmptyPool(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("chosen candidate at rank {rank} has only {available} strictly worse candidates, {requested} requested")]
    InsufficientRejectPool { rank: usize, available: usize, requested: usize },
    #[error("pool file line {line}: {message}")]
    PoolFormat { line: usize, message: String },
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn dedup_canonical(comps: Vec<Composition>) -> Vec<Composition> {
    let mut seen = HashSet::new();
    comps.into_iter().filter(|c| seen.insert(c.to_formula())).collect()
}

fn subsets<T: Copy>(items: &[T], k: usize) -> Vec<Vec<T>> {
    fn rec<T: Copy>(items: &[T], k: usize, start: usize, cur: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..items.len() {
            cur.push(items[i]);
            rec(items, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, k, 0, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Every assignment of grid values to `k` slots whose sum is one within tolerance.
fn grid_assignments(concentrations: &[f64], k: usize) -> Vec<Vec<f64>> {
    fn rec(conc: &[f64], k: usize, cur: &mut Vec<f64>, sum: f64, out: &mut Vec<Vec<f64>>) {
        if cur.len() == k {
            if (sum - 1.0).abs() <= GRID_SUM_TOLERANCE {
                out.push(cur.clone());
            }
            return;
        }
        for &c in conc {
            if sum + c > 1.0 + GRID_SUM_TOLERANCE {
                continue;
            }
            cur.push(c);
            rec(conc, k, cur, sum + c, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(concentrations, k, &mut Vec::with_capacity(k), 0.0, &mut out);
    out
}

/// All BCC-former compositions with 1-4 elements whose fractions come from
/// `concentrations`. Pure elements are always included.
pub fn enumerate_bcc_pool(roles: &RoleTable, concentrations: &[f64]) -> Result<Vec<Composition>, DatasetError> {
    let formers = roles.bcc_formers();
    if formers.is_empty() {
        return Err(DatasetError::EmptyRoleTable("bcc"));
    }
    if concentrations.is_empty() || concentrations.iter().any(|c| !(*c > 0.0 && *c < 1.0)) {
        return Err(DatasetError::InvalidParameter("concentrations must be non-empty and inside (0, 1)".into()));
    }
    let mut out: Vec<Composition> = formers.iter().map(|s| Composition::pure(*s)).collect();
    for k in 2..=MAX_BCC_ELEMENTS.min(formers.len()) {
        let assignments = grid_assignments(concentrations, k);
        for subset in subsets(&formers, k) {
            for fractions in &assignments {
                out.push(Composition::from_amounts(subset.iter().copied().zip(fractions.iter().copied()))?);
            }
        }
    }
    Ok(dedup_canonical(out))
}

/// All B2 compositions with A-site and B-site totals of 0.5, each site filled
/// by one element at 0.5 or two at 0.25. Sites never share an element.
pub fn enumerate_b2_pool(roles: &RoleTable) -> Result<Vec<Composition>, DatasetError> {
    let a_sites = roles.a_sites();
    let b_sites = roles.b_sites();
    if a_sites.is_empty() || b_sites.is_empty() {
        return Err(DatasetError::EmptyRoleTable("b2 sites"));
    }
    let site_fillings = |sites: &[Symbol]| -> Vec<Vec<(Symbol, f64)>> {
        let mut v: Vec<Vec<(Symbol, f64)>> = sites.iter().map(|s| vec![(*s, 0.5)]).collect();
        v.extend(subsets(sites, 2).into_iter().map(|p| vec![(p[0], 0.25), (p[1], 0.25)]));
        v
    };
    let mut out = Vec::new();
    for a in site_fillings(&a_sites) {
        for b in site_fillings(&b_sites) {
            if a.iter().any(|(sa, _)| b.iter().any(|(sb, _)| sa == sb)) {
                continue;
            }
            out.push(Composition::from_amounts(a.iter().chain(b.iter()).copied())?);
        }
    }
    Ok(dedup_canonical(out))
}

#[derive(Debug, Default)]
pub struct FilterOutcome {
    pub kept: Vec<Composition>,
    pub failed: Vec<(Composition, PhaseError)>,
}

/// Keeps compositions for which some grid temperature has at least
/// `min_frac` of the `target` phase class. Oracle failures are collected per
/// entry rather than aborting.
pub fn filter_single_phase(
    pool: &[Composition],
    oracle: &dyn PhaseOracle,
    grid: &TemperatureGrid,
    target: PhaseClass,
    min_frac: f64,
) -> Result<FilterOutcome, DatasetError> {
    if !(min_frac > 0.0 && min_frac <= 1.0) {
        return Err(DatasetError::InvalidParameter(format!("min_frac {min_frac} must be in (0, 1]")));
    }
    let verdicts: Vec<Result<bool, PhaseError>> = pool
        .par_iter()
        .map(|c| {
            let table = oracle.equilibrium(c, grid)?;
            Ok(table.class_fractions(target).iter().any(|(_, f)| *f >= min_frac))
        })
        .collect();
    let mut outcome = FilterOutcome::default();
    for (c, verdict) in pool.iter().zip(verdicts) {
        match verdict {
            Ok(true) => outcome.kept.push(c.clone()),
            Ok(false) => {}
            Err(e) => outcome.failed.push((c.clone(), e)),
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoolRole {
    Bcc,
    B2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub composition: Composition,
    pub provenance: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompositionPool {
    pub bcc: Vec<PoolEntry>,
    pub b2: Vec<PoolEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PoolRow {
    formula: String,
    role: PoolRole,
    #[serde(default)]
    provenance: Option<String>,
}

impl CompositionPool {
    /// Builds a pool, dropping canonical duplicates within each list.
    pub fn new(bcc: Vec<PoolEntry>, b2: Vec<PoolEntry>) -> CompositionPool {
        let dedup = |entries: Vec<PoolEntry>| {
            let mut seen = HashSet::new();
            entries.into_iter().filter(|e| seen.insert(e.composition.to_formula())).collect()
        };
        CompositionPool { bcc: dedup(bcc), b2: dedup(b2) }
    }

    pub fn from_compositions(bcc: Vec<Composition>, b2: Vec<Composition>, provenance: &str) -> CompositionPool {
        let wrap = |v: Vec<Composition>| {
            v.into_iter().map(|composition| PoolEntry { composition, provenance: provenance.to_string() }).collect()
        };
        CompositionPool::new(wrap(bcc), wrap(b2))
    }

    /// Reads `formula,role[,provenance]` CSV.
    pub fn read_csv<R: Read>(reader: R, table: &ElementTable) -> Result<CompositionPool, DatasetError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut bcc = Vec::new();
        let mut b2 = Vec::new();
        for (i, row) in rdr.deserialize::<PoolRow>().enumerate() {
            let row = row.map_err(|e| DatasetError::PoolFormat { line: i + 2, message: e.to_string() })?;
            let composition = parse_formula(&row.formula, table)?;
            let entry = PoolEntry { composition, provenance: row.provenance.unwrap_or_default() };
            match row.role {
                PoolRole::Bcc => bcc.push(entry),
                PoolRole::B2 => b2.push(entry),
            }
        }
        Ok(CompositionPool::new(bcc, b2))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_writer(writer);
        let lists = [(PoolRole::Bcc, &self.bcc), (PoolRole::B2, &self.b2)];
        for (role, entries) in lists {
            for e in entries {
                w.serialize(PoolRow { formula: e.composition.to_formula(), role, provenance: Some(e.provenance.clone()) })
                    .map_err(|e| DatasetError::PoolFormat { line: 0, message: e.to_string() })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VolumeSampler {
    /// Normal draw clamped to [0.20, 0.70].
    Normal { mean: f64, sd: f64 },
    Uniform,
}

impl Default for VolumeSampler {
    fn default() -> Self {
        VolumeSampler::Normal { mean: 0.45, sd: 0.15 }
    }
}

impl VolumeSampler {
    pub fn validate(&self) -> Result<(), DatasetError> {
        match *self {
            VolumeSampler::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) => {
                Err(DatasetError::InvalidParameter(format!("normal volume sampler needs finite mean and sd >= 0, got {mean}, {sd}")))
            }
            _ => Ok(()),
        }
    }

    /// One draw, clamped and quantized to the triple text grid.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let raw = match *self {
            VolumeSampler::Normal { mean, sd } => {
                Normal::new(mean, sd).map(|d| d.sample(rng)).unwrap_or(mean)
            }
            VolumeSampler::Uniform => rng.random_range(MIN_B2_VOLUME..=MAX_B2_VOLUME),
        };
        quantize_volume(raw.clamp(MIN_B2_VOLUME, MAX_B2_VOLUME))
    }
}

/// Candidate-triple JSON-lines record: `{"bcc": str, "b2": str, "b2_vol": f}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripleRecord {
    pub bcc: String,
    pub b2: String,
    pub b2_vol: f64,
}

impl From<&CandidateTriple> for TripleRecord {
    fn from(t: &CandidateTriple) -> Self {
        TripleRecord { bcc: t.bcc.to_formula(), b2: t.b2.to_formula(), b2_vol: t.b2_vol }
    }
}

impl TripleRecord {
    pub fn into_triple(self, table: &ElementTable) -> Result<CandidateTriple, ChemError> {
        CandidateTriple::new(parse_formula(&self.bcc, table)?, parse_formula(&self.b2, table)?, self.b2_vol)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftExample {
    pub prompt: String,
    pub completion: String,
}

/// Every `(bcc, b2)` pair of the pool with `volumes_per_pair` volume draws,
/// in pool order. Deterministic for a fixed seed; the seed only affects the
/// volumes.
pub fn build_sft_triples(
    pool: &CompositionPool,
    volumes_per_pair: usize,
    sampler: VolumeSampler,
    seed: u64,
) -> Result<Vec<CandidateTriple>, DatasetError> {
    if pool.bcc.is_empty() {
        return Err(DatasetError::EmptyPool("no BCC compositions"));
    }
    if pool.b2.is_empty() {
        return Err(DatasetError::EmptyPool("no B2 compositions"));
    }
    if volumes_per_pair == 0 {
        return Err(DatasetError::InvalidParameter("volumes_per_pair must be at least 1".into()));
    }
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(pool.bcc.len() * pool.b2.len() * volumes_per_pair);
    for bcc in &pool.bcc {
        for b2 in &pool.b2 {
            for _ in 0..volumes_per_pair {
                let vol = sampler.draw(&mut rng);
                out.push(CandidateTriple::new(bcc.composition.clone(), b2.composition.clone(), vol)?);
            }
        }
    }
    Ok(out)
}

pub fn build_sft_dataset(
    pool: &CompositionPool,
    volumes_per_pair: usize,
    sampler: VolumeSampler,
    seed: u64,
) -> Result<Vec<SftExample>, DatasetError> {
    let bcc_text: Vec<String> = pool.bcc.iter().map(|e| e.composition.to_formula()).collect();
    let b2_text: Vec<String> = pool.b2.iter().map(|e| e.composition.to_formula()).collect();
    let triples = build_sft_triples(pool, volumes_per_pair, sampler, seed)?;
    let per_bcc = pool.b2.len() * volumes_per_pair;
    Ok(triples
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let (bi, b2i) = (i / per_bcc, (i % per_bcc) / volumes_per_pair);
            SftExample {
                prompt: SFT_PROMPT.to_string(),
                completion: format!("{}/{}/{:.1}%", bcc_text[bi], b2_text[b2i], t.b2_vol * 100.0),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub prompt: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
}

/// Ranks candidates by reward (stable, ties in input order), takes the top
/// `ceil(top_frac * N)` as chosen and pairs each with `rejected_per_chosen`
/// distinct candidates drawn without replacement from the strictly worse
/// candidates ranked below it.
pub fn build_dpo_pairs(
    scored: &[ScoredCandidate],
    top_frac: f64,
    rejected_per_chosen: usize,
    seed: u64,
) -> Result<Vec<PreferencePair>, DatasetError> {
    if scored.is_empty() {
        return Err(DatasetError::EmptyPool("no scored candidates"));
    }
    if !(top_frac > 0.0 && top_frac <= 1.0) {
        return Err(DatasetError::InvalidParameter(format!("top_frac {top_frac} must be in (0, 1]")));
    }
    if rejected_per_chosen == 0 {
        return Err(DatasetError::InvalidParameter("rejected_per_chosen must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[b].reward.total_cmp(&scored[a].reward));
    let n_chosen = ((top_frac * scored.len() as f64) - 1e-9).ceil().max(1.0) as usize;
    let n_chosen = n_chosen.min(scored.len());
    let texts: Vec<String> = scored.iter().map(|s| s.triple.to_text()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_chosen * rejected_per_chosen);
    let mut worse_start = 0;
    for rank in 0..n_chosen {
        let chosen = &scored[order[rank]];
        // Sorted descending, so the strictly worse candidates form a suffix.
        worse_start = worse_start.max(rank + 1);
        while worse_start < order.len() && scored[order[worse_start]].reward >= chosen.reward {
            worse_start += 1;
        }
        let available = order.len() - worse_start;
        if available < rejected_per_chosen {
            return Err(DatasetError::InsufficientRejectPool { rank, available, requested: rejected_per_chosen });
        }
        for offset in index::sample(&mut rng, available, rejected_per_chosen) {
            let rejected = order[worse_start + offset];
            pairs.push(PreferencePair {
                prompt: SFT_PROMPT.to_string(),
                chosen: texts[order[rank]].clone(),
                rejected: texts[rejected].clone(),
                chosen_reward: chosen.reward,
                rejected_reward: scored[rejected].reward,
            });
        }
    }
    Ok(pairs)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], writer: W) -> Result<(), DatasetError> {
    let mut w = std::io::BufWriter::new(writer);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads one JSON object per non-empty line.
pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: Read>(reader: R) -> Result<Vec<T>, DatasetError> {
    use std::io::BufRead;
    let mut out = Vec::new();
    for line in std::io::BufReader::new(reader).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::{SurrogateOracle, DEFAULT_GRID_STEP_K};
    use crate::reward::CriteriaResult;

    fn formulas(v: &[Composition]) -> Vec<String> {
        let mut f: Vec<String> = v.iter().map(|c| c.to_formula()).collect();
        f.sort();
        f
    }

    #[test]
    fn bcc_enumeration_two_formers_half_grid() {
        let roles = RoleTable::from_lists(&["Mo", "Nb"], &[], &[]).unwrap();
        let pool = enumerate_bcc_pool(&roles, &[0.5]).unwrap();
        assert_eq!(formulas(&pool), ["Mo0.5000Nb0.5000", "Mo1.0000", "Nb1.0000"]);
    }

    #[test]
    fn bcc_enumeration_single_former() {
        let roles = RoleTable::from_lists(&["W"], &[], &[]).unwrap();
        assert_eq!(formulas(&enumerate_bcc_pool(&roles, &CONCENTRATION_GRID).unwrap()), ["W1.0000"]);
        let empty = RoleTable::from_lists(&[], &["Al"], &["Ni"]).unwrap();
        assert!(matches!(enumerate_bcc_pool(&empty, &CONCENTRATION_GRID), Err(DatasetError::EmptyRoleTable(_))));
    }

    #[test]
    fn bcc_enumeration_matches_brute_force_count() {
        // Independent count: ordered grid tuples per subset size summing to one.
        let grid = CONCENTRATION_GRID;
        let mut per_k = [0usize; 5];
        for a in grid {
            for b in grid {
                if (a + b - 1.0f64).abs() <= 0.015 {
                    per_k[2] += 1;
                }
                for c in grid {
                    if (a + b + c - 1.0f64).abs() <= 0.015 {
                        per_k[3] += 1;
                    }
                    for d in grid {
                        if (a + b + c + d - 1.0f64).abs() <= 0.015 {
                            per_k[4] += 1;
                        }
                    }
                }
            }
        }
        let roles = RoleTable::from_lists(&["Mo", "Nb", "Ta", "W", "V"], &[], &[]).unwrap();
        let n = 5;
        let choose = |k: usize| (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1));
        let expected = n + choose(2) * per_k[2] + choose(3) * per_k[3] + choose(4) * per_k[4];
        assert_eq!(enumerate_bcc_pool(&roles, &grid).unwrap().len(), expected);
    }

    #[test]
    fn b2_enumeration() {
        let roles = RoleTable::from_lists(&[], &["Al"], &["Ni"]).unwrap();
        assert_eq!(formulas(&enumerate_b2_pool(&roles).unwrap()), ["Al0.5000Ni0.5000"]);
        let roles = RoleTable::from_lists(&[], &["Al", "Hf"], &["Ni"]).unwrap();
        assert_eq!(
            formulas(&enumerate_b2_pool(&roles).unwrap()),
            ["Al0.5000Ni0.5000", "Hf0.5000Ni0.5000", "Ni0.5000Al0.2500Hf0.2500"]
        );
        let roles = RoleTable::from_lists(&["Mo"], &[], &[]).unwrap();
        assert!(matches!(enumerate_b2_pool(&roles), Err(DatasetError::EmptyRoleTable(_))));
    }

    #[test]
    fn b2_sites_never_share_an_element() {
        let roles = RoleTable::from_lists(&[], &["Al", "Mn"], &["Mn", "Fe"]).unwrap();
        for c in enumerate_b2_pool(&roles).unwrap() {
            assert!(c.len() >= 2, "{c}");
        }
    }

    #[test]
    fn single_phase_filter() {
        let oracle = SurrogateOracle::default();
        let grid = TemperatureGrid::standard(DEFAULT_GRID_STEP_K).unwrap();
        let pure = Composition::of(&[("Mo", 1.0)]).unwrap();
        let ordered = Composition::of(&[("Al", 0.5), ("Ni", 0.5)]).unwrap();
        let out = filter_single_phase(&[pure.clone(), ordered], &oracle, &grid, PhaseClass::Bcc, 0.99).unwrap();
        assert_eq!(out.kept, vec![pure.clone()]);
        assert!(out.failed.is_empty());
        assert!(matches!(
            filter_single_phase(&[pure], &oracle, &grid, PhaseClass::Bcc, 0.0),
            Err(DatasetError::InvalidParameter(_))
        ));
    }

    fn small_pool(n_bcc: usize, n_b2: usize) -> CompositionPool {
        let roles = RoleTable::default_table();
        let bcc = enumerate_bcc_pool(&roles, &CONCENTRATION_GRID).unwrap();
        let b2 = enumerate_b2_pool(&roles).unwrap();
        CompositionPool::from_compositions(bcc[..n_bcc].to_vec(), b2[..n_b2].to_vec(), "test")
    }

    #[test]
    fn sft_dataset_size_and_volume_range() {
        let pool = small_pool(2, 3);
        for sampler in [VolumeSampler::default(), VolumeSampler::Uniform] {
            let triples = build_sft_triples(&pool, 3, sampler, 7).unwrap();
            assert_eq!(triples.len(), 18);
            assert!(triples.iter().all(|t| (0.2..=0.7).contains(&t.b2_vol)));
        }
    }

    #[test]
    fn sft_dataset_is_seeded() {
        let pool = small_pool(3, 4);
        let a = build_sft_dataset(&pool, 3, VolumeSampler::default(), 1).unwrap();
        let b = build_sft_dataset(&pool, 3, VolumeSampler::default(), 1).unwrap();
        let c = build_sft_dataset(&pool, 3, VolumeSampler::default(), 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let pair = |e: &SftExample| e.completion.rsplit_once('/').unwrap().0.to_string();
        assert_eq!(a.iter().map(pair).collect::<Vec<_>>(), c.iter().map(pair).collect::<Vec<_>>());
        let table = ElementTable::default_table();
        for ex in &a {
            assert_eq!(crate::chem::parse_triple(&ex.completion, &table).unwrap().to_text(), ex.completion);
        }
    }

    #[test]
    fn sft_rejects_empty_pool() {
        let pool = CompositionPool::default();
        assert!(matches!(build_sft_triples(&pool, 3, VolumeSampler::Uniform, 0), Err(DatasetError::EmptyPool(_))));
    }

    #[test]
    fn pool_csv_round_trip() {
        let pool = small_pool(3, 2);
        let mut buf = Vec::new();
        pool.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("formula,role,provenance\n"));
        assert_eq!(CompositionPool::read_csv(buf.as_slice(), &ElementTable::default_table()).unwrap(), pool);
    }

    pub(crate) fn scored_with_rewards(rewards: &[f64]) -> Vec<ScoredCandidate> {
        let b2 = Composition::of(&[("Al", 0.5), ("Ni", 0.5)]).unwrap();
        rewards
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let vol = 0.2 + 0.001 * i as f64;
                let triple = CandidateTriple::new(Composition::of(&[("Mo", 1.0)]).unwrap(), b2.clone(), quantize_volume(vol)).unwrap();
                ScoredCandidate {
                    master: triple.master(),
                    triple,
                    criteria: CriteriaResult {
                        bcc_b2_exist: true,
                        bcc_forms_first: true,
                        b2_room_temp: true,
                        others_exceed_10pct: false,
                        min_lattice_mismatch: Some(0.0),
                    },
                    reward: *r,
                }
            })
            .collect()
    }

    #[test]
    fn dpo_pairs_small_case() {
        let scored = scored_with_rewards(&[-10.0, -0.1, -1000.0, -0.5, -100.0, -1.2, -0.01, -110.0]);
        let pairs = build_dpo_pairs(&scored, 0.25, 3, 3).unwrap();
        assert_eq!(pairs.len(), 6);
        assert!(pairs.iter().all(|p| p.chosen_reward > p.rejected_reward));
        assert!(pairs[..3].iter().all(|p| p.chosen_reward == -0.01));
        assert!(pairs[3..].iter().all(|p| p.chosen_reward == -0.1));
        let distinct: HashSet<&str> = pairs[..3].iter().map(|p| p.rejected.as_str()).collect();
        assert_eq!(distinct.len(), 3);
    }

    #[test]
    fn dpo_pairs_skip_ties() {
        let scored = scored_with_rewards(&[-1.0, -1.0, -1.0, -2.0]);
        let pairs = build_dpo_pairs(&scored, 0.25, 1, 0).unwrap();
        assert_eq!(pairs[0].rejected_reward, -2.0);
        assert!(matches!(build_dpo_pairs(&scored, 0.25, 2, 0), Err(DatasetError::InsufficientRejectPool { .. })));
    }

    #[test]
    fn dpo_pairs_insufficient_pool() {
        let scored = scored_with_rewards(&[-1.0, -2.0, -3.0, -4.0]);
        assert!(matches!(
            build_dpo_pairs(&scored, 0.25, 100, 0),
            Err(DatasetError::InsufficientRejectPool { available: 3, requested: 100, .. })
        ));
    }

    #[test]
    fn triple_record_round_trip() {
        let table = ElementTable::default_table();
        let t = crate::chem::parse_triple("Mo0.5000Nb0.5000/Al0.5000Ni0.5000/45.0%", &table).unwrap();
        let rec = TripleRecord::from(&t);
        assert_eq!(serde_json::to_string(&rec).unwrap(), r#"{"bcc":"Mo0.5000Nb0.5000","b2":"Al0.5000Ni0.5000","b2_vol":0.45}"#);
        assert_eq!(rec.into_triple(&table).unwrap(), t);
    }

    #[test]
    fn jsonl_round_trip() {
        let ex = vec![SftExample { prompt: "p".into(), completion: "c".into() }];
        let mut buf = Vec::new();
        write_jsonl(&ex, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "{\"prompt\":\"p\",\"completion\":\"c\"}\n");
        assert_eq!(read_jsonl::<SftExample, _>(buf.as_slice()).unwrap(), ex);
    }
}
