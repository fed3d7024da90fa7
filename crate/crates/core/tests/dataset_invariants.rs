use std::collections::HashSet;

use alloygen::chem::{parse_triple, CandidateTriple, ElementTable, RoleTable};
use alloygen::datasets::{
    build_dpo_pairs, build_sft_dataset, enumerate_b2_pool, enumerate_bcc_pool, CompositionPool, DatasetError, VolumeSampler,
    CONCENTRATION_GRID,
};
use alloygen::metrics::{coverage, unique_pairs};
use alloygen::reward::{CriteriaResult, ScoredCandidate};
use proptest::prelude::*;

fn pool(n_bcc: usize, n_b2: usize) -> CompositionPool {
    let roles = RoleTable::default_table();
    let bcc = enumerate_bcc_pool(&roles, &CONCENTRATION_GRID).unwrap();
    let b2 = enumerate_b2_pool(&roles).unwrap();
    CompositionPool::from_compositions(bcc[..n_bcc].to_vec(), b2[..n_b2].to_vec(), "test")
}

fn scored(rewards: &[f64]) -> Vec<ScoredCandidate> {
    let p = pool(40, 40);
    let criteria = CriteriaResult {
        bcc_b2_exist: true,
        bcc_forms_first: true,
        b2_room_temp: true,
        others_exceed_10pct: false,
        min_lattice_mismatch: Some(0.0),
    };
    rewards
        .iter()
        .enumerate()
        .map(|(i, &reward)| {
            let triple = CandidateTriple::new(
                p.bcc[i % 40].composition.clone(),
                p.b2[i / 40 % 40].composition.clone(),
                0.2 + 0.001 * (i % 500) as f64,
            )
            .unwrap();
            ScoredCandidate { master: triple.master(), triple, criteria, reward }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn sft_cardinality_and_round_trip(n_bcc in 1usize..12, n_b2 in 1usize..12, vpp in 1usize..5, seed in any::<u64>()) {
        let table = ElementTable::default_table();
        let examples = build_sft_dataset(&pool(n_bcc, n_b2), vpp, VolumeSampler::default(), seed).unwrap();
        prop_assert_eq!(examples.len(), n_bcc * n_b2 * vpp);
        let mut pairs = HashSet::new();
        for e in &examples {
            let t = parse_triple(&e.completion, &table).unwrap();
            prop_assert!((0.2..=0.7).contains(&t.b2_vol));
            pairs.insert(t.pair_key());
        }
        prop_assert_eq!(pairs.len(), n_bcc * n_b2);
    }

    #[test]
    fn dpo_pairs_are_strictly_ordered(
        rewards in prop::collection::vec(prop::sample::select(vec![-1111.0, -112.5, -12.0, -11.25, -2.0, -1.5, -0.25]), 4..120),
        top_frac in 0.05..0.6f64,
        k in 1usize..6,
        seed in any::<u64>(),
    ) {
        let s = scored(&rewards);
        match build_dpo_pairs(&s, top_frac, k, seed) {
            Ok(pairs) => {
                let n_chosen = (top_frac * rewards.len() as f64 - 1e-9).ceil().max(1.0) as usize;
                prop_assert_eq!(pairs.len(), n_chosen * k);
                for p in &pairs {
                    prop_assert!(p.chosen_reward > p.rejected_reward);
                }
                for group in pairs.chunks(k) {
                    let distinct: HashSet<&str> = group.iter().map(|p| p.rejected.as_str()).collect();
                    prop_assert_eq!(distinct.len(), k);
                }
            }
            Err(DatasetError::InsufficientRejectPool { rank, available, requested }) => {
                let mut sorted = rewards.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let worse = sorted.iter().filter(|r| **r < sorted[rank]).count();
                prop_assert_eq!(worse, available);
                prop_assert!(available < requested);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn coverage_is_monotone_in_delta(
        gen in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 3), 1..30),
        reference in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 3), 1..30),
        deltas in prop::collection::vec(0.0..4.0f64, 3),
    ) {
        let mut deltas = deltas;
        deltas.sort_by(f64::total_cmp);
        let cov: Vec<(f64, f64)> = deltas.iter().map(|d| coverage(&gen, &reference, *d).unwrap()).collect();
        for w in cov.windows(2) {
            prop_assert!(w[0].0 <= w[1].0 && w[0].1 <= w[1].1);
        }
    }
}

#[test]
fn identical_samples_have_minimal_uniqueness() {
    let s = scored(&[0.0]);
    let same = vec![s[0].triple.clone(); 100];
    assert_eq!(unique_pairs(&same, 100).unwrap(), 0.01);
}
