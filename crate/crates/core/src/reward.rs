//! Synthesis criteria on a phase table and the tiered scalar reward.
//!
//! ```text
//! reward = -1000 [no BCC+B2 coexistence]
//!          - 100 [BCC does not form first]
//!          -  10 [no B2 at room temperature]
//!          -   1 [other phases exceed 10%]
//!          - min lattice mismatch (Å, clamped below 1)
//! ```

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chem::{CandidateTriple, Composition};
use crate::phase::{PhaseClass, PhaseError, PhaseOracle, PhaseTable, TemperatureGrid, PRESENCE_EPSILON};

pub const PENALTY_NO_COEXISTENCE: f64 = 1000.0;
pub const PENALTY_BCC_NOT_FIRST: f64 = 100.0;
pub const PENALTY_NO_ROOM_TEMP_B2: f64 = 10.0;
pub const PENALTY_OTHERS: f64 = 1.0;

/// Maximum others fraction at a fully solid temperature.
pub const OTHERS_LIMIT: f64 = 0.10;

/// Largest mismatch that enters the reward. Kept strictly below the smallest
/// penalty so that a lower-tier failure always outweighs any mismatch.
pub const MISMATCH_CAP: f64 = 0.999;

pub const WORST_REWARD: f64 = -(PENALTY_NO_COEXISTENCE + PENALTY_BCC_NOT_FIRST + PENALTY_NO_ROOM_TEMP_B2 + PENALTY_OTHERS);

#[derive(Debug, thiserror::Error)]
pub enum RewardError {
    #[error("no lattice parameter for {class} at {temperature} K")]
    MissingLattice { temperature: f64, class: PhaseClass },
    #[error("candidate {candidate}: {source}")]
    Candidate {
        candidate: String,
        #[source]
        source: Box<RewardError>,
    },
    #[error(transparent)]
    Phase(#[from] PhaseError),
    #[error(transparent)]
    Chem(#[from] crate::chem::ChemError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriteriaResult {
    pub bcc_b2_exist: bool,
    pub bcc_forms_first: bool,
    pub b2_room_temp: bool,
    pub others_exceed_10pct: bool,
    /// Å; present iff `bcc_b2_exist`.
    pub min_lattice_mismatch: Option<f64>,
}

impl CriteriaResult {
    /// Satisfaction flags in priority order, with the others rule inverted so
    /// `true` always means "satisfied".
    pub fn satisfied(&self) -> [bool; 4] {
        [self.bcc_b2_exist, self.bcc_forms_first, self.b2_room_temp, !self.others_exceed_10pct]
    }
}

pub const CRITERIA_NAMES: [&str; 4] = ["bcc_b2_exist", "bcc_forms_first", "b2_room_temp", "others_within_10pct"];

/// Phase fractions by class at one temperature.
#[derive(Debug, Clone, Copy, Default)]
struct ClassTotals {
    bcc: f64,
    b2: f64,
    liquid: f64,
    other: f64,
}

pub fn evaluate_criteria(table: &PhaseTable) -> Result<CriteriaResult, RewardError> {
    let mut coexist_temps = Vec::new();
    let mut highest_bcc: Option<f64> = None;
    let mut highest_b2: Option<f64> = None;
    let mut others_exceed = false;
    let min_t = table.grid().temperatures().first().copied();
    let mut b2_at_min = false;
    let mut mismatch: Option<f64> = None;

    for (t, group) in table.by_temperature() {
        let mut totals = ClassTotals::default();
        for r in group {
            match r.class {
                PhaseClass::Bcc => totals.bcc += r.mole_fraction,
                PhaseClass::B2 => totals.b2 += r.mole_fraction,
                PhaseClass::Liquid => totals.liquid += r.mole_fraction,
                PhaseClass::Other => totals.other += r.mole_fraction,
            }
        }
        let bcc = totals.bcc >= PRESENCE_EPSILON;
        let b2 = totals.b2 >= PRESENCE_EPSILON;
        let solid = totals.liquid < PRESENCE_EPSILON;
        if bcc {
            highest_bcc = Some(highest_bcc.map_or(t, |h| h.max(t)));
        }
        if b2 {
            highest_b2 = Some(highest_b2.map_or(t, |h| h.max(t)));
        }
        if Some(t) == min_t && b2 {
            b2_at_min = true;
        }
        if solid && totals.other > OTHERS_LIMIT {
            others_exceed = true;
        }
        if bcc && b2 && solid {
            coexist_temps.push(t);
            let local = lattice_gap(t, group)?;
            mismatch = Some(mismatch.map_or(local, |m: f64| m.min(local)));
        }
    }

    let bcc_b2_exist = !coexist_temps.is_empty();
    let bcc_forms_first = match (highest_bcc, highest_b2) {
        (Some(bcc), Some(b2)) => bcc > b2,
        _ => false,
    };
    Ok(CriteriaResult {
        bcc_b2_exist,
        bcc_forms_first,
        b2_room_temp: b2_at_min,
        others_exceed_10pct: others_exceed,
        min_lattice_mismatch: mismatch,
    })
}

/// Smallest `|a_BCC - a_B2|` over the present BCC and B2 records at one temperature.
fn lattice_gap(t: f64, group: &[crate::phase::PhaseRecord]) -> Result<f64, RewardError> {
    let present = |class| group.iter().filter(move |r| r.class == class && r.mole_fraction >= PRESENCE_EPSILON);
    let lattices = |class| {
        present(class)
            .map(|r| r.lattice_param.ok_or(RewardError::MissingLattice { temperature: t, class }))
            .collect::<Result<Vec<f64>, _>>()
    };
    let bcc = lattices(PhaseClass::Bcc)?;
    let b2 = lattices(PhaseClass::B2)?;
    let mut best = f64::INFINITY;
    for a in &bcc {
        for b in &b2 {
            best = best.min((a - b).abs());
        }
    }
    Ok(best)
}

/// The tiered scalar reward. Always in `[-1111, 0]`.
pub fn reward_of(c: &CriteriaResult) -> f64 {
    let indicator = |fail: bool, weight: f64| if fail { weight } else { 0.0 };
    let mismatch = c.min_lattice_mismatch.map_or(0.0, |m| m.clamp(0.0, MISMATCH_CAP));
    -indicator(!c.bcc_b2_exist, PENALTY_NO_COEXISTENCE)
        - indicator(!c.bcc_forms_first, PENALTY_BCC_NOT_FIRST)
        - indicator(!c.b2_room_temp, PENALTY_NO_ROOM_TEMP_B2)
        - indicator(c.others_exceed_10pct, PENALTY_OTHERS)
        - mismatch
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub triple: CandidateTriple,
    pub master: Composition,
    pub criteria: CriteriaResult,
    pub reward: f64,
}

pub fn score_candidate(triple: &CandidateTriple, oracle: &dyn PhaseOracle, grid: &TemperatureGrid) -> Result<ScoredCandidate, RewardError> {
    let wrap = |e: RewardError| RewardError::Candidate { candidate: triple.to_text(), source: Box::new(e) };
    let master = triple.master();
    let table = oracle.equilibrium(&master, grid).map_err(|e| wrap(e.into()))?;
    let criteria = evaluate_criteria(&table).map_err(wrap)?;
    Ok(ScoredCandidate { triple: triple.clone(), master, reward: reward_of(&criteria), criteria })
}

/// Scores a batch, in input order. A failing candidate yields an `Err` in
/// its slot and does not affect the others. `workers == 0` uses rayon's
/// global pool; `1` runs on the calling thread.
pub fn score_batch(
    triples: &[CandidateTriple],
    oracle: &dyn PhaseOracle,
    grid: &TemperatureGrid,
    workers: usize,
) -> Vec<Result<ScoredCandidate, RewardError>> {
    match workers {
        1 => triples.iter().map(|t| score_candidate(t, oracle, grid)).collect(),
        0 => triples.par_iter().map(|t| score_candidate(t, oracle, grid)).collect(),
        n => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| triples.par_iter().map(|t| score_candidate(t, oracle, grid)).collect()),
            Err(_) => triples.par_iter().map(|t| score_candidate(t, oracle, grid)).collect(),
        },
    }
}

/// Scored-candidate JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub bcc: String,
    pub b2: String,
    pub b2_vol: f64,
    pub reward: f64,
    pub criteria: CriteriaResult,
}

impl From<&ScoredCandidate> for ScoredRecord {
    fn from(s: &ScoredCandidate) -> Self {
        ScoredRecord {
            bcc: s.triple.bcc.to_formula(),
            b2: s.triple.b2.to_formula(),
            b2_vol: s.triple.b2_vol,
            reward: s.reward,
            criteria: s.criteria,
        }
    }
}

impl ScoredRecord {
    pub fn into_scored(self, table: &crate::chem::ElementTable) -> Result<ScoredCandidate, RewardError> {
        let bcc = crate::chem::parse_formula(&self.bcc, table)?;
        let b2 = crate::chem::parse_formula(&self.b2, table)?;
        let triple = CandidateTriple::new(bcc, b2, self.b2_vol)?;
        Ok(ScoredCandidate { master: triple.master(), triple, criteria: self.criteria, reward: self.reward })
    }
}
