//! Random-search baseline in the style of a conventional parametric sweep.

use rand::seq::{index, IndexedRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chem::{quantize_volume, CandidateTriple, ChemError, Composition, RoleTable, Symbol, MAX_B2_VOLUME, MIN_B2_VOLUME};
use crate::datasets::CONCENTRATION_GRID;

const MAX_BCC_ELEMENTS: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("role table cannot generate candidates: {0}")]
    DegenerateRoles(&'static str),
    #[error("n must be at least 1")]
    EmptyRequest,
    #[error(transparent)]
    Chem(#[from] ChemError),
}

/// Valid `(A, B)` site pairs; an element never fills both sites.
pub fn b2_site_pairs(roles: &RoleTable) -> Vec<(Symbol, Symbol)> {
    let b_sites = roles.b_sites();
    roles
        .a_sites()
        .into_iter()
        .flat_map(|a| b_sites.iter().filter(move |b| **b != a).map(move |b| (a, *b)))
        .collect()
}

/// `n` triples: BCC from 1-4 distinct formers (count uniform) with grid
/// fractions normalized to one, B2 an equiatomic A/B pair drawn uniformly,
/// volume uniform on [0.20, 0.70].
pub fn random_search(roles: &RoleTable, n: usize, seed: u64) -> Result<Vec<CandidateTriple>, BaselineError> {
    if n == 0 {
        return Err(BaselineError::EmptyRequest);
    }
    let formers = roles.bcc_formers();
    if formers.is_empty() {
        return Err(BaselineError::DegenerateRoles("no BCC formers"));
    }
    let pairs = b2_site_pairs(roles);
    if pairs.is_empty() {
        return Err(BaselineError::DegenerateRoles("no A-site/B-site pair"));
    }
    let max_k = MAX_BCC_ELEMENTS.min(formers.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = rng.random_range(1..=max_k);
        let picks = index::sample(&mut rng, formers.len(), k);
        let amounts: Vec<(Symbol, f64)> = picks
            .iter()
            .map(|i| (formers[i], *CONCENTRATION_GRID.choose(&mut rng).expect("grid is non-empty")))
            .collect();
        let bcc = Composition::from_amounts(amounts)?;
        let (a, b) = *pairs.choose(&mut rng).expect("pairs checked non-empty");
        let b2 = Composition::from_amounts([(a, 0.5), (b, 0.5)])?;
        let vol = quantize_volume(rng.random_range(MIN_B2_VOLUME..=MAX_B2_VOLUME));
        out.push(CandidateTriple::new(bcc, b2, vol)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rules_hold() {
        let roles = RoleTable::default_table();
        let out = random_search(&roles, 500, 3).unwrap();
        assert_eq!(out.len(), 500);
        for t in &out {
            assert_eq!(t.b2.len(), 2);
            assert!(t.b2.iter().all(|(_, x)| x == 0.5));
            assert!((0.2..=0.7).contains(&t.b2_vol));
            assert!((1..=4).contains(&t.bcc.len()));
            assert!(t.bcc.elements().all(|s| roles.role(s).bcc_former));
        }
        assert_eq!(out, random_search(&roles, 500, 3).unwrap());
    }

    #[test]
    fn degenerate_roles() {
        let roles = RoleTable::from_lists(&["Mo"], &["Al"], &[]).unwrap();
        assert!(matches!(random_search(&roles, 1, 0), Err(BaselineError::DegenerateRoles(_))));
        let roles = RoleTable::from_lists(&[], &["Al"], &["Ni"]).unwrap();
        assert!(matches!(random_search(&roles, 1, 0), Err(BaselineError::DegenerateRoles(_))));
        let roles = RoleTable::from_lists(&["Mo"], &["Mn"], &["Mn"]).unwrap();
        assert!(matches!(random_search(&roles, 1, 0), Err(BaselineError::DegenerateRoles(_))));
    }
}
