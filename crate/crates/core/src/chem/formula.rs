//! Parser for compact formula strings such as `Mo0.5Nb0.5` or `AlNi`.

use super::{ChemError, Composition, ElementTable, Symbol};

/// Parses a formula against the element whitelist. Counts are optional
/// (implicit 1), may be integers or decimals, and repeated elements
/// accumulate. The result is normalized.
pub fn parse_formula(text: &str, table: &ElementTable) -> Result<Composition, ChemError> {
    let bytes = text.trim().as_bytes();
    if bytes.is_empty() {
        return Err(ChemError::EmptyFormula);
    }
    let mut amounts = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        if !bytes[i].is_ascii_uppercase() {
            return Err(ChemError::UnexpectedCharacter { position: i, found: char::from(bytes[i]) });
        }
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_lowercase() {
            i += 1;
        }
        let token = &text.trim()[start..i];
        let symbol = Symbol::new(token)
            .filter(|s| table.contains(*s))
            .ok_or_else(|| ChemError::UnknownElement(token.to_string()))?;

        let num_start = i;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        let amount = if num_start == i {
            1.0
        } else {
            parse_count(&text.trim()[num_start..i])?
        };
        amounts.push((symbol, amount));
    }
    Composition::from_amounts(amounts)
}

fn parse_count(s: &str) -> Result<f64, ChemError> {
    let malformed = || ChemError::MalformedNumber(s.to_string());
    let mut parts = s.split('.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    if parts.next().is_some() || int_part.is_empty() || frac_part.is_some_and(str::is_empty) {
        return Err(malformed());
    }
    s.parse::<f64>().map_err(|_| malformed())
}
