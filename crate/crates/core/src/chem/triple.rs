//! The generation unit: a BCC matrix composition, a B2 precipitate
//! composition and the B2 volume fraction.
//!
//! Text form is `<bcc>/<b2>/<percent>%`, e.g.
//! `Mo0.5000Nb0.5000/Al0.5000Ni0.5000/45.0%`. The percent carries one
//! decimal, so volume fractions are kept on a 0.001 grid.

use serde::{Deserialize, Serialize};

use super::{combine_master, parse_formula, ChemError, Composition, ElementTable};

pub const MIN_B2_VOLUME: f64 = 0.20;
pub const MAX_B2_VOLUME: f64 = 0.70;

/// Rounds a volume fraction onto the grid representable by the text form.
pub fn quantize_volume(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTriple {
    pub bcc: Composition,
    pub b2: Composition,
    pub b2_vol: f64,
}

impl CandidateTriple {
    pub fn new(bcc: Composition, b2: Composition, b2_vol: f64) -> Result<CandidateTriple, ChemError> {
        if !(MIN_B2_VOLUME..=MAX_B2_VOLUME).contains(&b2_vol) {
            return Err(ChemError::VolumeOutOfRange(b2_vol));
        }
        Ok(CandidateTriple { bcc, b2, b2_vol })
    }

    pub fn master(&self) -> Composition {
        combine_master(&self.bcc, &self.b2, self.b2_vol).expect("b2_vol is within [0, 1] by construction")
    }

    pub fn to_text(&self) -> String {
        format!("{}/{}/{:.1}%", self.bcc.to_formula(), self.b2.to_formula(), self.b2_vol * 100.0)
    }

    /// `(bcc, b2)` canonical formulas, used wherever the volume is ignored.
    pub fn pair_key(&self) -> (String, String) {
        (self.bcc.to_formula(), self.b2.to_formula())
    }
}

pub fn parse_triple(text: &str, table: &ElementTable) -> Result<CandidateTriple, ChemError> {
    let malformed = || ChemError::MalformedTriple(text.to_string());
    let mut fields = text.trim().split('/');
    let (Some(bcc), Some(b2), Some(vol), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
        return Err(malformed());
    };
    let pct = vol.strip_suffix('%').ok_or_else(malformed)?;
    if pct.is_empty() || !pct.bytes().all(|b| b.is_ascii_digit() || b == b'.') || pct.matches('.').count() > 1 {
        return Err(ChemError::MalformedNumber(pct.to_string()));
    }
    let pct: f64 = pct.parse().map_err(|_| ChemError::MalformedNumber(pct.to_string()))?;
    CandidateTriple::new(parse_formula(bcc, table)?, parse_formula(b2, table)?, quantize_volume(pct / 100.0))
}
