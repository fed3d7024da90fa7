//! Element role table: which elements form BCC solid solutions and which sit
//! on the A or B sublattice of a B2 compound.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Deserialize;

use super::{ChemError, ElementTable, Symbol};

const DEFAULT_ROLES_CSV: &str = include_str!("../../data/roles.csv");

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ElementRole {
    pub bcc_former: bool,
    pub a_site: bool,
    pub b_site: bool,
    /// BCC-stabilizer weight used by the surrogate oracle, in [0, 1].
    pub bcc_weight: f64,
}

#[derive(Debug, Deserialize)]
struct RoleRow {
    symbol: String,
    bcc: bool,
    a_site: bool,
    b_site: bool,
    #[serde(default)]
    bcc_weight: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoleTable {
    roles: BTreeMap<Symbol, ElementRole>,
}

impl RoleTable {
    pub fn default_table() -> RoleTable {
        RoleTable::from_reader(DEFAULT_ROLES_CSV.as_bytes()).expect("bundled role table is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<RoleTable, ChemError> {
        RoleTable::from_reader(std::fs::File::open(path.as_ref())?)
    }

    /// Reads `symbol,bcc,a_site,b_site[,bcc_weight]`. A missing weight
    /// defaults to 1.0 for BCC formers and 0.0 otherwise.
    pub fn from_reader<R: Read>(reader: R) -> Result<RoleTable, ChemError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut roles = BTreeMap::new();
        for row in rdr.deserialize::<RoleRow>() {
            let row = row.map_err(|e| ChemError::ElementData(e.to_string()))?;
            let symbol = Symbol::new(&row.symbol)
                .ok_or_else(|| ChemError::ElementData(format!("bad symbol {:?}", row.symbol)))?;
            let bcc_weight = row.bcc_weight.unwrap_or(if row.bcc { 1.0 } else { 0.0 });
            if !(0.0..=1.0).contains(&bcc_weight) {
                return Err(ChemError::ElementData(format!("{symbol}: bcc_weight outside [0,1]")));
            }
            roles.insert(symbol, ElementRole { bcc_former: row.bcc, a_site: row.a_site, b_site: row.b_site, bcc_weight });
        }
        Ok(RoleTable { roles })
    }

    pub fn from_roles(roles: impl IntoIterator<Item = (Symbol, ElementRole)>) -> RoleTable {
        RoleTable { roles: roles.into_iter().collect() }
    }

    /// Builds a table from plain symbol lists; weights default as in `from_reader`.
    pub fn from_lists(bcc: &[&str], a_site: &[&str], b_site: &[&str]) -> Result<RoleTable, ChemError> {
        let mut roles: BTreeMap<Symbol, ElementRole> = BTreeMap::new();
        let parse = |s: &str| s.parse::<Symbol>();
        for s in bcc {
            let e = roles.entry(parse(s)?).or_default();
            e.bcc_former = true;
            e.bcc_weight = 1.0;
        }
        for s in a_site {
            roles.entry(parse(s)?).or_default().a_site = true;
        }
        for s in b_site {
            roles.entry(parse(s)?).or_default().b_site = true;
        }
        Ok(RoleTable { roles })
    }

    /// Checks every symbol is present in the element whitelist.
    pub fn validate_against(&self, table: &ElementTable) -> Result<(), ChemError> {
        match self.roles.keys().find(|s| !table.contains(**s)) {
            Some(s) => Err(ChemError::UnknownElement(s.to_string())),
            None => Ok(()),
        }
    }

    pub fn role(&self, symbol: Symbol) -> ElementRole {
        self.roles.get(&symbol).copied().unwrap_or_default()
    }

    pub fn bcc_formers(&self) -> Vec<Symbol> {
        self.roles.iter().filter(|(_, r)| r.bcc_former).map(|(s, _)| *s).collect()
    }

    pub fn a_sites(&self) -> Vec<Symbol> {
        self.roles.iter().filter(|(_, r)| r.a_site).map(|(s, _)| *s).collect()
    }

    pub fn b_sites(&self) -> Vec<Symbol> {
        self.roles.iter().filter(|(_, r)| r.b_site).map(|(s, _)| *s).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Symbol, ElementRole)> + '_ {
        self.roles.iter().map(|(s, r)| (*s, *r))
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roles_are_consistent_with_elements() {
        let roles = RoleTable::default_table();
        roles.validate_against(&ElementTable::default_table()).unwrap();
        assert!(roles.bcc_formers().iter().any(|s| s.as_str() == "Mo"));
        assert!(roles.a_sites().iter().any(|s| s.as_str() == "Al"));
        assert!(roles.b_sites().iter().any(|s| s.as_str() == "Ni"));
    }

    #[test]
    fn from_lists_sets_flags() {
        let roles = RoleTable::from_lists(&["Mo"], &["Al", "Hf"], &["Ni"]).unwrap();
        assert_eq!(roles.a_sites().len(), 2);
        let mo = roles.role("Mo".parse().unwrap());
        assert!(mo.bcc_former && !mo.a_site);
        assert_eq!(mo.bcc_weight, 1.0);
    }
}
