use alloygen::reward::{reward_of, CriteriaResult, WORST_REWARD};
use proptest::prelude::*;

fn criteria() -> impl Strategy<Value = CriteriaResult> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>(), 0.0..5.0f64).prop_map(|(exist, first, room, others, m)| {
        CriteriaResult {
            bcc_b2_exist: exist,
            bcc_forms_first: first,
            b2_room_temp: room,
            others_exceed_10pct: others,
            min_lattice_mismatch: exist.then_some(m),
        }
    })
}

/// Priority position of the first criterion on which `a` and `b` differ.
fn first_difference(a: &CriteriaResult, b: &CriteriaResult) -> Option<usize> {
    a.satisfied().iter().zip(b.satisfied()).position(|(x, y)| *x != y)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn higher_tier_always_dominates(a in criteria(), b in criteria()) {
        let (ra, rb) = (reward_of(&a), reward_of(&b));
        if let Some(i) = first_difference(&a, &b) {
            if a.satisfied()[i] {
                prop_assert!(ra > rb, "{a:?} {ra} vs {b:?} {rb}");
            } else {
                prop_assert!(rb > ra, "{a:?} {ra} vs {b:?} {rb}");
            }
        }
    }

    #[test]
    fn reward_is_bounded(c in criteria()) {
        let r = reward_of(&c);
        prop_assert!((-1111.0..=0.0).contains(&r), "{r}");
        let penalties = c.satisfied().iter().zip([1000.0, 100.0, 10.0, 1.0]).filter(|(s, _)| !**s).map(|(_, w)| w).sum::<f64>();
        prop_assert!(-r >= penalties && -r < penalties + 1.0);
    }
}

#[test]
fn all_failed_is_exactly_the_worst() {
    let c = CriteriaResult {
        bcc_b2_exist: false,
        bcc_forms_first: false,
        b2_room_temp: false,
        others_exceed_10pct: true,
        min_lattice_mismatch: None,
    };
    assert_eq!(reward_of(&c), -1111.0);
    assert_eq!(WORST_REWARD, -1111.0);
}
