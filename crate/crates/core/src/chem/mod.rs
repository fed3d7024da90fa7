//! Element data, compositions and the candidate triple.

mod composition;
mod elements;
mod formula;
mod roles;
mod triple;

pub use composition::{combine_master, format_composition, Composition, FORMAT_DECIMALS, SUM_TOLERANCE};
pub use elements::{ElementRecord, ElementTable, Symbol};
pub use formula::parse_formula;
pub use roles::{ElementRole, RoleTable};
pub use triple::{parse_triple, quantize_volume, CandidateTriple, MAX_B2_VOLUME, MIN_B2_VOLUME};

#[derive(Debug, thiserror::Error)]
pub enum ChemError {
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("empty formula")]
    EmptyFormula,
    #[error("malformed number {0:?}")]
    MalformedNumber(String),
    #[error("unexpected character {found:?} at position {position}")]
    UnexpectedCharacter { position: usize, found: char },
    #[error("invalid amount {amount} for {element}")]
    InvalidAmount { element: String, amount: f64 },
    #[error("mixing fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("B2 volume fraction {0} outside [0.20, 0.70]")]
    VolumeOutOfRange(f64),
    #[error("malformed triple {0:?}")]
    MalformedTriple(String),
    #[error("element data: {0}")]
    ElementData(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
