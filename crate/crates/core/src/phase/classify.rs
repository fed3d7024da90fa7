use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::PhaseError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PhaseClass {
    Bcc,
    B2,
    Liquid,
    Other,
}

impl fmt::Display for PhaseClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseClass::Bcc => "BCC",
            PhaseClass::B2 => "B2",
            PhaseClass::Liquid => "LIQUID",
            PhaseClass::Other => "OTHER",
        })
    }
}

/// Ordered list of `(pattern, class)` rules; the first match wins and
/// anything unmatched is [`PhaseClass::Other`].
#[derive(Debug, Clone)]
pub struct PhaseClassifier {
    rules: Vec<(Regex, PhaseClass)>,
}

impl PhaseClassifier {
    /// Default rules for Thermo-Calc style labels, where the disordered and
    /// ordered BCC share the `BCC_B2` model name and composition sets carry
    /// `#n` suffixes:
    ///
    /// 1. anything containing `LIQ` is liquid;
    /// 2. an explicit `(ordered)` / `ORDERED` marker, `BCC_B2#2..9`, or a bare
    ///    `B2...` label is B2;
    /// 3. remaining labels starting with `BCC` (or marked disordered) are BCC.
    pub fn thermo_calc_default() -> PhaseClassifier {
        let rules = [
            (r"(?i)LIQ", PhaseClass::Liquid),
            (r"(?i)\bdisordered\b", PhaseClass::Bcc),
            (r"(?i)\bordered\b", PhaseClass::B2),
            (r"(?i)^BCC_B2#[2-9]\b", PhaseClass::B2),
            (r"(?i)^B2(\b|_)", PhaseClass::B2),
            (r"(?i)^BCC", PhaseClass::Bcc),
        ];
        PhaseClassifier {
            rules: rules.iter().map(|(p, c)| (Regex::new(p).expect("valid default rule"), *c)).collect(),
        }
    }

    pub fn from_rules<'a>(rules: impl IntoIterator<Item = (&'a str, PhaseClass)>) -> Result<PhaseClassifier, PhaseError> {
        let rules = rules
            .into_iter()
            .map(|(p, c)| Regex::new(p).map(|r| (r, c)).map_err(|e| PhaseError::Schema(format!("bad rule {p:?}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PhaseClassifier { rules })
    }

    pub fn classify(&self, label: &str) -> PhaseClass {
        self.rules
            .iter()
            .find(|(re, _)| re.is_match(label))
            .map(|(_, c)| *c)
            .unwrap_or(PhaseClass::Other)
    }
}

impl Default for PhaseClassifier {
    fn default() -> Self {
        PhaseClassifier::thermo_calc_default()
    }
}

/// Classifies with the default rule set.
pub fn classify_phase(label: &str) -> PhaseClass {
    static DEFAULT: OnceLock<PhaseClassifier> = OnceLock::new();
    DEFAULT.get_or_init(PhaseClassifier::thermo_calc_default).classify(label)
}
