//! Deterministic stand-in for a CALPHAD equilibrium calculation.
//!
//! This is not a thermodynamic model. It turns a handful of composition
//! descriptors into a phase table with the same shape as real output, so the
//! scoring pipeline can be exercised end to end:
//!
//! * liquidus `T_L` is the mole-fraction-weighted melting point; the solid
//!   fraction ramps linearly from 0 at `T_L` to 1 at `T_L - freezing_range`;
//! * the BCC-stabilizer score `s = sum x_i w_i` sets the BCC onset
//!   `T_bcc = T_L * min(1, bcc_onset_base + s)`; solid that cannot be BCC yet
//!   is reported as an intermetallic (OTHER);
//! * B2 needs at least one A-site and one B-site element. Its capacity is
//!   `2 min(a, b)` where `a`, `b` are the site totals (dual-role elements
//!   count half on each site). It orders below `T_ord = ordering_ratio * T_L`
//!   and disorders again below `disorder_ratio * imbalance * T_L`, with
//!   `imbalance = |a - b| / (a + b)`;
//! * an OTHER fraction `clamp(gain * (spread - threshold), 0, other_max)`
//!   grows with the weighted standard deviation of electronegativity;
//! * lattice parameters follow Vegard's rule over the master composition.
//!   The B2 parameter is offset by a hash of the canonical formula, uniform in
//!   `[-b2_offset_max, b2_offset_max]`.

use sha2::{Digest, Sha256};

use super::{PhaseClass, PhaseError, PhaseOracle, PhaseRecord, PhaseTable, TemperatureGrid};
use crate::chem::{Composition, ElementTable, RoleTable};

pub const LABEL_LIQUID: &str = "LIQUID";
pub const LABEL_BCC: &str = "BCC_B2";
pub const LABEL_B2: &str = "BCC_B2#2";
pub const LABEL_OTHER: &str = "SIGMA";

/// Fractions at or below this are not written as records.
const MIN_RECORDED_FRACTION: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SurrogateConfig {
    pub roles: RoleTable,
    /// K between liquidus and solidus.
    pub freezing_range_k: f64,
    pub bcc_onset_base: f64,
    pub ordering_ratio: f64,
    pub disorder_ratio: f64,
    pub spread_threshold: f64,
    pub spread_gain: f64,
    pub other_max: f64,
    /// Å
    pub b2_offset_max: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            roles: RoleTable::default_table(),
            freezing_range_k: 150.0,
            bcc_onset_base: 0.45,
            ordering_ratio: 0.75,
            disorder_ratio: 1.2,
            spread_threshold: 0.25,
            spread_gain: 2.0,
            other_max: 0.6,
            b2_offset_max: 0.05,
        }
    }
}

/// Composition descriptors that drive the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Descriptors {
    liquidus: f64,
    solidus: f64,
    bcc_onset: f64,
    ordering: f64,
    disorder: f64,
    b2_capacity: f64,
    other: f64,
    bcc_lattice: f64,
    b2_lattice: f64,
}

fn descriptors(master: &Composition, elements: &ElementTable, cfg: &SurrogateConfig) -> Result<Descriptors, PhaseError> {
    let mut liquidus = 0.0;
    let mut bcc_score = 0.0;
    let mut a_site = 0.0;
    let mut b_site = 0.0;
    let mut lattice = 0.0;
    let mut en_mean = 0.0;
    for (sym, x) in master.iter() {
        let rec = elements
            .get(sym)
            .ok_or_else(|| PhaseError::Oracle(format!("element {sym} is not in the element table")))?;
        let role = cfg.roles.role(sym);
        liquidus += x * rec.melting_point_k;
        bcc_score += x * role.bcc_weight;
        match (role.a_site, role.b_site) {
            (true, true) => {
                a_site += 0.5 * x;
                b_site += 0.5 * x;
            }
            (true, false) => a_site += x,
            (false, true) => b_site += x,
            (false, false) => {}
        }
        lattice += x * rec.bcc_lattice_or_estimate();
        en_mean += x * rec.electronegativity;
    }
    let en_var: f64 = master
        .iter()
        .map(|(sym, x)| {
            let d = elements.get(sym).map(|r| r.electronegativity).unwrap_or(en_mean) - en_mean;
            x * d * d
        })
        .sum();
    let spread = en_var.max(0.0).sqrt();

    let has_b2 = a_site > 0.0 && b_site > 0.0;
    let b2_capacity = if has_b2 { (2.0 * a_site.min(b_site)).min(1.0) } else { 0.0 };
    let imbalance = if has_b2 { (a_site - b_site).abs() / (a_site + b_site) } else { 0.0 };
    let other = (cfg.spread_gain * (spread - cfg.spread_threshold)).clamp(0.0, cfg.other_max);

    Ok(Descriptors {
        liquidus,
        solidus: liquidus - cfg.freezing_range_k,
        bcc_onset: liquidus * (cfg.bcc_onset_base + bcc_score).min(1.0),
        ordering: cfg.ordering_ratio * liquidus,
        disorder: cfg.disorder_ratio * imbalance * liquidus,
        b2_capacity,
        other,
        bcc_lattice: lattice,
        b2_lattice: lattice + hash_offset(master, cfg.b2_offset_max),
    })
}

/// Deterministic offset in `[-max, max]` from the canonical formula.
fn hash_offset(master: &Composition, max: f64) -> f64 {
    let digest = Sha256::digest(master.to_formula().as_bytes());
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    let unit = (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64;
    max * (2.0 * unit - 1.0)
}

fn records_at(t: f64, d: &Descriptors) -> Vec<PhaseRecord> {
    let liquid = if t >= d.liquidus {
        1.0
    } else if t <= d.solidus {
        0.0
    } else {
        (t - d.solidus) / (d.liquidus - d.solidus)
    };
    let solid = 1.0 - liquid;

    let b2_stable = d.b2_capacity > 0.0 && t < d.ordering && t >= d.disorder;
    let b2 = if b2_stable { d.b2_capacity * (1.0 - d.other) } else { 0.0 };
    let remainder = 1.0 - d.other - b2;
    let (bcc, other) = if t < d.bcc_onset { (remainder, d.other) } else { (0.0, d.other + remainder) };

    let record = |label: &str, class, fraction: f64, lattice| PhaseRecord {
        temperature: t,
        label: label.to_string(),
        class,
        mole_fraction: fraction,
        lattice_param: lattice,
    };
    let mut out = Vec::with_capacity(4);
    if solid * bcc > MIN_RECORDED_FRACTION {
        out.push(record(LABEL_BCC, PhaseClass::Bcc, solid * bcc, Some(d.bcc_lattice)));
    }
    if solid * b2 > MIN_RECORDED_FRACTION {
        out.push(record(LABEL_B2, PhaseClass::B2, solid * b2, Some(d.b2_lattice)));
    }
    if liquid > MIN_RECORDED_FRACTION {
        out.push(record(LABEL_LIQUID, PhaseClass::Liquid, liquid, None));
    }
    if solid * other > MIN_RECORDED_FRACTION {
        out.push(record(LABEL_OTHER, PhaseClass::Other, solid * other, None));
    }
    out
}

/// Builds the surrogate table for `master` on `grid`.
pub fn surrogate_equilibrium(
    master: &Composition,
    grid: &TemperatureGrid,
    elements: &ElementTable,
    cfg: &SurrogateConfig,
) -> Result<PhaseTable, PhaseError> {
    let d = descriptors(master, elements, cfg)?;
    let records = grid.temperatures().iter().flat_map(|&t| records_at(t, &d)).collect();
    PhaseTable::new(Some(master.clone()), grid.clone(), records)
}

#[derive(Debug, Clone)]
pub struct SurrogateOracle {
    elements: ElementTable,
    config: SurrogateConfig,
}

impl SurrogateOracle {
    pub fn new(elements: ElementTable, config: SurrogateConfig) -> SurrogateOracle {
        SurrogateOracle { elements, config }
    }

    pub fn config(&self) -> &SurrogateConfig {
        &self.config
    }
}

impl Default for SurrogateOracle {
    fn default() -> Self {
        SurrogateOracle::new(ElementTable::default_table(), SurrogateConfig::default())
    }
}

impl PhaseOracle for SurrogateOracle {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        surrogate_equilibrium(master, grid, &self.elements, &self.config)
    }
}
