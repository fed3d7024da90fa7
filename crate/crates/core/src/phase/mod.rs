//! Phase-equilibrium tables and the oracles that produce them.
//!
//! A [`PhaseOracle`] maps a master composition and a temperature grid to a
//! [`PhaseTable`]. Three backends are provided: the deterministic
//! [`SurrogateOracle`], the memoizing [`CachedOracle`] wrapper and the
//! [`FileBridgeOracle`] client that exchanges request/response files with an
//! external CALPHAD process.

mod bridge;
mod cache;
mod classify;
mod surrogate;
mod table;

use sha2::{Digest, Sha256};

pub use bridge::{BridgeRequest, FileBridgeOracle};
pub use cache::CachedOracle;
pub use classify::{classify_phase, PhaseClass, PhaseClassifier};
pub use surrogate::{surrogate_equilibrium, SurrogateConfig, SurrogateOracle};
pub use table::{parse_phase_table, parse_phase_table_with, PhaseRecord, PhaseTable, CSV_HEADER};

use crate::chem::Composition;

pub const MIN_TEMPERATURE_K: f64 = 373.0;
pub const MAX_TEMPERATURE_K: f64 = 2273.0;
pub const DEFAULT_GRID_STEP_K: f64 = 25.0;

/// Mole fraction above which a phase counts as present.
pub const PRESENCE_EPSILON: f64 = 1e-6;

/// Sum tolerance for a validated table.
pub const TABLE_SUM_TOLERANCE: f64 = 1e-6;

/// Sum tolerance accepted when parsing external files; tables within it are
/// renormalized.
pub const PARSE_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum PhaseError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("phase fractions at {temperature} K sum to {sum}")]
    Normalization { temperature: f64, sum: f64 },
    #[error("empty phase table")]
    EmptyTable,
    #[error("value out of range: {0}")]
    Range(String),
    #[error("cache entry {path} is corrupt: {reason}")]
    StoreCorrupt { path: String, reason: String },
    #[error("oracle failure: {0}")]
    Oracle(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ascending temperature grid in kelvin.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureGrid(Vec<f64>);

impl TemperatureGrid {
    /// `373, 373 + step, ...` up to and including 2273 K. The top point is
    /// always included even when the step does not divide the range.
    pub fn standard(step: f64) -> Result<TemperatureGrid, PhaseError> {
        if !(step.is_finite() && step > 0.0) {
            return Err(PhaseError::Range(format!("grid step {step} must be positive")));
        }
        let n = ((MAX_TEMPERATURE_K - MIN_TEMPERATURE_K) / step).floor() as usize;
        let mut temps: Vec<f64> = (0..=n).map(|i| MIN_TEMPERATURE_K + step * i as f64).collect();
        if MAX_TEMPERATURE_K - temps[temps.len() - 1] > 1e-9 {
            temps.push(MAX_TEMPERATURE_K);
        }
        Ok(TemperatureGrid(temps))
    }

    pub fn new(temps: Vec<f64>) -> Result<TemperatureGrid, PhaseError> {
        if temps.is_empty() {
            return Err(PhaseError::EmptyTable);
        }
        for w in temps.windows(2) {
            if w[1] <= w[0] {
                return Err(PhaseError::Range("grid must be strictly ascending".into()));
            }
        }
        if let Some(t) = temps.iter().find(|t| !(MIN_TEMPERATURE_K..=MAX_TEMPERATURE_K).contains(*t)) {
            return Err(PhaseError::Range(format!("temperature {t} K outside [373, 2273]")));
        }
        Ok(TemperatureGrid(temps))
    }

    pub fn temperatures(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when the grid starts at 373 K and ends at 2273 K.
    pub fn spans_standard_range(&self) -> bool {
        self.0.first() == Some(&MIN_TEMPERATURE_K) && self.0.last() == Some(&MAX_TEMPERATURE_K)
    }

    /// Hex SHA-256 over the little-endian bytes of every temperature.
    pub fn hash_hex(&self) -> String {
        let mut hasher = Sha256::new();
        for t in &self.0 {
            hasher.update(t.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Produces equilibrium phase tables. Implementations must be deterministic
/// and safe to call from several threads.
pub trait PhaseOracle: Send + Sync {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError>;
}

impl<T: PhaseOracle + ?Sized> PhaseOracle for &T {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        (**self).equilibrium(master, grid)
    }
}

impl<T: PhaseOracle + ?Sized> PhaseOracle for Box<T> {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        (**self).equilibrium(master, grid)
    }
}

impl<T: PhaseOracle + ?Sized> PhaseOracle for std::sync::Arc<T> {
    fn equilibrium(&self, master: &Composition, grid: &TemperatureGrid) -> Result<PhaseTable, PhaseError> {
        (**self).equilibrium(master, grid)
    }
}

/// Key shared by the cache and the file bridge: canonical formula plus grid hash.
pub(crate) fn query_key(master: &Composition, grid: &TemperatureGrid) -> String {
    format!("{}|{}", master.to_formula(), grid.hash_hex())
}

pub(crate) fn query_digest(master: &Composition, grid: &TemperatureGrid) -> String {
    hex::encode(Sha256::digest(query_key(master, grid).as_bytes()))
}
