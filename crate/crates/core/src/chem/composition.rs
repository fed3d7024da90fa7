use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ChemError, Symbol};

/// Tolerance for the normalization invariant.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// Decimal places used by the canonical text form.
pub const FORMAT_DECIMALS: usize = 4;
const FORMAT_UNITS: u64 = 10_000;

/// A normalized element -> mole fraction map. Every fraction is strictly
/// positive and the fractions sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<Symbol, f64>", into = "BTreeMap<Symbol, f64>")]
pub struct Composition {
    entries: BTreeMap<Symbol, f64>,
}

impl Composition {
    /// Normalizes non-negative amounts into fractions. Zero amounts are
    /// dropped; repeated symbols accumulate.
    pub fn from_amounts<I>(amounts: I) -> Result<Composition, ChemError>
    where
        I: IntoIterator<Item = (Symbol, f64)>,
    {
        let mut entries: BTreeMap<Symbol, f64> = BTreeMap::new();
        for (sym, amount) in amounts {
            if !amount.is_finite() || amount < 0.0 {
                return Err(ChemError::InvalidAmount { element: sym.to_string(), amount });
            }
            if amount > 0.0 {
                *entries.entry(sym).or_insert(0.0) += amount;
            }
        }
        let total: f64 = entries.values().sum();
        if entries.is_empty() || total <= 0.0 {
            return Err(ChemError::EmptyFormula);
        }
        for v in entries.values_mut() {
            *v /= total;
        }
        Ok(Composition { entries })
    }

    pub fn pure(symbol: Symbol) -> Composition {
        Composition { entries: BTreeMap::from([(symbol, 1.0)]) }
    }

    /// Convenience for tests and fixtures: `Composition::of(&[("Mo", 0.5), ("Nb", 0.5)])`.
    pub fn of(pairs: &[(&str, f64)]) -> Result<Composition, ChemError> {
        let amounts = pairs
            .iter()
            .map(|(s, x)| Ok((s.parse::<Symbol>()?, *x)))
            .collect::<Result<Vec<_>, ChemError>>()?;
        Composition::from_amounts(amounts)
    }

    pub fn fraction(&self, symbol: Symbol) -> f64 {
        self.entries.get(&symbol).copied().unwrap_or(0.0)
    }

    pub fn get(&self, symbol: &str) -> f64 {
        Symbol::new(symbol).map(|s| self.fraction(s)).unwrap_or(0.0)
    }

    /// Entries in alphabetical symbol order.
    pub fn iter(&self) -> impl Iterator<Item = (Symbol, f64)> + '_ {
        self.entries.iter().map(|(s, x)| (*s, *x))
    }

    pub fn elements(&self) -> impl Iterator<Item = Symbol> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, symbol: Symbol) -> bool {
        self.entries.contains_key(&symbol)
    }

    /// Element-wise comparison within `tol`, treating missing elements as zero.
    pub fn approx_eq(&self, other: &Composition, tol: f64) -> bool {
        self.entries
            .keys()
            .chain(other.entries.keys())
            .all(|s| (self.fraction(*s) - other.fraction(*s)).abs() <= tol)
    }

    /// Fractions quantized to `FORMAT_UNITS` with largest-remainder rounding,
    /// so the printed values always sum to exactly one. Sorted by descending
    /// quantized fraction, then symbol.
    fn quantized(&self) -> Vec<(Symbol, u64)> {
        let scale = FORMAT_UNITS as f64;
        let mut parts: Vec<(Symbol, u64, f64)> = self
            .iter()
            .map(|(s, x)| {
                let scaled = x * scale;
                let floor = scaled.floor();
                (s, floor as u64, scaled - floor)
            })
            .collect();
        let assigned: u64 = parts.iter().map(|p| p.1).sum();
        let mut missing = FORMAT_UNITS.saturating_sub(assigned) as usize;
        let mut order: Vec<usize> = (0..parts.len()).collect();
        order.sort_by(|&a, &b| parts[b].2.total_cmp(&parts[a].2).then(parts[a].0.cmp(&parts[b].0)));
        for &i in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            parts[i].1 += 1;
            missing -= 1;
        }
        let mut out: Vec<(Symbol, u64)> = parts.into_iter().map(|(s, u, _)| (s, u)).collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Canonical text form, e.g. `Mo0.5000Nb0.5000`.
    pub fn to_formula(&self) -> String {
        let mut out = String::new();
        for (sym, units) in self.quantized() {
            let whole = units / FORMAT_UNITS;
            let frac = units % FORMAT_UNITS;
            out.push_str(sym.as_str());
            out.push_str(&format!("{whole}.{frac:0width$}", width = FORMAT_DECIMALS));
        }
        out
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_formula())
    }
}

impl TryFrom<BTreeMap<Symbol, f64>> for Composition {
    type Error = ChemError;

    fn try_from(map: BTreeMap<Symbol, f64>) -> Result<Self, Self::Error> {
        Composition::from_amounts(map)
    }
}

impl From<Composition> for BTreeMap<Symbol, f64> {
    fn from(c: Composition) -> Self {
        c.entries
    }
}

/// Canonical serialization; see [`Composition::to_formula`].
pub fn format_composition(c: &Composition) -> String {
    c.to_formula()
}

/// Linear molar mixing `x = (1 - v) x_bcc + v x_b2`.
pub fn combine_master(bcc: &Composition, b2: &Composition, b2_fraction: f64) -> Result<Composition, ChemError> {
    if !(0.0..=1.0).contains(&b2_fraction) {
        return Err(ChemError::FractionOutOfRange(b2_fraction));
    }
    let mixed = bcc
        .iter()
        .map(|(s, x)| (s, (1.0 - b2_fraction) * x))
        .chain(b2.iter().map(|(s, x)| (s, b2_fraction * x)));
    Composition::from_amounts(mixed)
}
