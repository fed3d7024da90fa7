//! Element property table loaded from CSV.
//!
//! The shipped default covers the 26-element scope of a high-entropy-alloy
//! CALPHAD database. The list and the property values are assembled from
//! public reference tables; override with your own file when the exact
//! database scope matters.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ChemError;

const DEFAULT_ELEMENTS_CSV: &str = include_str!("../../data/elements.csv");

/// A one- or two-letter element symbol stored inline.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Symbol([u8; 2]);

impl Symbol {
    pub fn new(text: &str) -> Option<Symbol> {
        let bytes = text.as_bytes();
        match bytes {
            [a] if a.is_ascii_uppercase() => Some(Symbol([*a, 0])),
            [a, b] if a.is_ascii_uppercase() && b.is_ascii_lowercase() => Some(Symbol([*a, *b])),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &str {
        let len = if self.0[1] == 0 { 1 } else { 2 };
        // Only ASCII letters are ever stored.
        std::str::from_utf8(&self.0[..len]).expect("ascii symbol")
    }
}

impl Ord for Symbol {
    fn cmp(&self, other: &Self) -> Ordering {
        self.as_str().cmp(other.as_str())
    }
}

impl PartialOrd for Symbol {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Symbol {
    type Err = ChemError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Symbol::new(s).ok_or_else(|| ChemError::UnknownElement(s.to_string()))
    }
}

impl Serialize for Symbol {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Symbol {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Symbol::new(&s).ok_or_else(|| serde::de::Error::custom(format!("bad element symbol {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementRecord {
    pub symbol: Symbol,
    /// Pauling scale.
    pub electronegativity: f64,
    pub radius_pm: f64,
    pub atomic_number: u32,
    /// amu
    pub mass: f64,
    pub melting_point_k: f64,
    pub valence_electrons: u32,
    pub group: u32,
    pub period: u32,
    pub oxidation_states: Vec<i32>,
    pub is_metal: bool,
    /// Reference BCC lattice constant in Å, for elements with a BCC allotrope.
    pub bcc_lattice_a: Option<f64>,
}

impl ElementRecord {
    /// BCC lattice constant, falling back to the hard-sphere estimate
    /// `a = 4r/sqrt(3)` for elements without a tabulated BCC form.
    pub fn bcc_lattice_or_estimate(&self) -> f64 {
        self.bcc_lattice_a
            .unwrap_or_else(|| 4.0 * (self.radius_pm / 100.0) / 3f64.sqrt())
    }
}

#[derive(Debug, Deserialize)]
struct ElementRow {
    symbol: String,
    electronegativity: f64,
    radius_pm: f64,
    z: u32,
    mass: f64,
    #[serde(rename = "melt_K")]
    melt_k: f64,
    valence: u32,
    group: u32,
    period: u32,
    oxidation_states: String,
    is_metal: bool,
    bcc_a_angstrom: Option<f64>,
}

impl TryFrom<ElementRow> for ElementRecord {
    type Error = ChemError;

    fn try_from(row: ElementRow) -> Result<Self, Self::Error> {
        let symbol = Symbol::new(row.symbol.trim())
            .ok_or_else(|| ChemError::ElementData(format!("bad symbol {:?}", row.symbol)))?;
        let oxidation_states = row
            .oxidation_states
            .split(';')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<i32>()
                    .map_err(|_| ChemError::ElementData(format!("{symbol}: bad oxidation state {s:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let positive = [
            ("electronegativity", row.electronegativity),
            ("radius_pm", row.radius_pm),
            ("mass", row.mass),
            ("melt_K", row.melt_k),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ChemError::ElementData(format!("{symbol}: {name} must be positive, got {value}")));
            }
        }
        if let Some(a) = row.bcc_a_angstrom {
            if !(a.is_finite() && a > 0.0) {
                return Err(ChemError::ElementData(format!("{symbol}: bcc_a_angstrom must be positive")));
            }
        }
        if row.z == 0 || row.period == 0 || row.group == 0 {
            return Err(ChemError::ElementData(format!("{symbol}: z, group and period must be positive")));
        }
        Ok(ElementRecord {
            symbol,
            electronegativity: row.electronegativity,
            radius_pm: row.radius_pm,
            atomic_number: row.z,
            mass: row.mass,
            melting_point_k: row.melt_k,
            valence_electrons: row.valence,
            group: row.group,
            period: row.period,
            oxidation_states,
            is_metal: row.is_metal,
            bcc_lattice_a: row.bcc_a_angstrom,
        })
    }
}

/// Immutable whitelist of elements with their properties. Cheap to clone.
#[derive(Debug, Clone)]
pub struct ElementTable {
    records: Arc<BTreeMap<Symbol, ElementRecord>>,
}

impl ElementTable {
    /// The built-in 26-element table.
    pub fn default_table() -> ElementTable {
        ElementTable::from_reader(DEFAULT_ELEMENTS_CSV.as_bytes()).expect("bundled element table is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<ElementTable, ChemError> {
        let file = std::fs::File::open(path.as_ref())?;
        ElementTable::from_reader(file)
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<ElementTable, ChemError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut records = BTreeMap::new();
        for row in rdr.deserialize::<ElementRow>() {
            let row = row.map_err(|e| ChemError::ElementData(e.to_string()))?;
            let record = ElementRecord::try_from(row)?;
            if records.insert(record.symbol, record.clone()).is_some() {
                return Err(ChemError::ElementData(format!("duplicate symbol {}", record.symbol)));
            }
        }
        if records.is_empty() {
            return Err(ChemError::ElementData("element table is empty".into()));
        }
        Ok(ElementTable { records: Arc::new(records) })
    }

    /// Restricts the table to `symbols`; every symbol must be present.
    pub fn restricted_to(&self, symbols: &[Symbol]) -> Result<ElementTable, ChemError> {
        let mut records = BTreeMap::new();
        for s in symbols {
            let rec = self.get(*s).ok_or_else(|| ChemError::UnknownElement(s.to_string()))?;
            records.insert(*s, rec.clone());
        }
        Ok(ElementTable { records: Arc::new(records) })
    }

    pub fn get(&self, symbol: Symbol) -> Option<&ElementRecord> {
        self.records.get(&symbol)
    }

    pub fn lookup(&self, text: &str) -> Option<&ElementRecord> {
        Symbol::new(text).and_then(|s| self.records.get(&s))
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        self.records.contains_key(&symbol)
    }

    /// Symbols in alphabetical order.
    pub fn symbols(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.records.keys().copied()
    }

    pub fn records(&self) -> impl Iterator<Item = &ElementRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Default for ElementTable {
    fn default() -> Self {
        ElementTable::default_table()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_has_26_unique_elements() {
        let t = ElementTable::default_table();
        assert_eq!(t.len(), 26);
        for rec in t.records() {
            assert!(rec.electronegativity > 0.0 && rec.melting_point_k > 0.0);
            assert!(!rec.oxidation_states.is_empty(), "{}", rec.symbol);
        }
        assert_eq!(t.lookup("Mo").unwrap().bcc_lattice_a, Some(3.147));
        assert!(t.lookup("Pd").is_none());
    }

    #[test]
    fn symbol_ordering_matches_string_ordering() {
        let mut syms: Vec<Symbol> = ["Ba", "B", "Al", "C", "Co"].iter().map(|s| Symbol::new(s).unwrap()).collect();
        syms.sort();
        let names: Vec<&str> = syms.iter().map(|s| s.as_str()).collect();
        assert_eq!(names, ["Al", "B", "Ba", "C", "Co"]);
        assert!(Symbol::new("mo").is_none());
        assert!(Symbol::new("Moo").is_none());
    }

    #[test]
    fn duplicate_rows_are_rejected() {
        let csv = "symbol,electronegativity,radius_pm,z,mass,melt_K,valence,group,period,oxidation_states,is_metal,bcc_a_angstrom\n\
                   Mo,2.16,139,42,95.95,2896,6,6,5,4;6,true,3.147\n\
                   Mo,2.16,139,42,95.95,2896,6,6,5,4;6,true,3.147\n";
        assert!(matches!(ElementTable::from_reader(csv.as_bytes()), Err(ChemError::ElementData(_))));
    }

    #[test]
    fn hard_sphere_fallback() {
        let t = ElementTable::default_table();
        let al = t.lookup("Al").unwrap();
        assert!((al.bcc_lattice_or_estimate() - 4.0 * 1.43 / 3f64.sqrt()).abs() < 1e-12);
    }
}
