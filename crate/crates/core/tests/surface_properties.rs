use proptest::prelude::*;

use stratasim::surface::{
    assign_storage_site, lookup_resident_times, replay_oracle, retention_gaps, steady_gap_ok, ReplayOracle,
    SurfaceAnnotation, SurfaceConfig, SurfacePolicy,
};

fn policy() -> impl Strategy<Value = SurfacePolicy> {
    prop_oneof![Just(SurfacePolicy::Steady), Just(SurfacePolicy::Ring)]
}

fn sites() -> impl Strategy<Value = u64> {
    prop::sample::select(vec![2u64, 4, 8, 16, 64, 256])
}

proptest! {
    #[test]
    fn assignment_is_pure(policy in policy(), s in sites(), t in 0u64..1 << 40) {
        prop_assert_eq!(assign_storage_site(policy, s, t).unwrap(), assign_storage_site(policy, s, t).unwrap());
        if let Some(site) = assign_storage_site(policy, s, t).unwrap() {
            prop_assert!(site < s);
        }
    }

    #[test]
    fn lookup_matches_replay(policy in policy(), s in sites(), t in 0u64..5000) {
        prop_assert_eq!(lookup_resident_times(policy, s, t).unwrap(), replay_oracle(policy, s, t).unwrap());
    }

    #[test]
    fn ring_keeps_the_most_recent(s in sites(), t in 0u64..100_000) {
        let mut ranks: Vec<u64> = lookup_resident_times(SurfacePolicy::Ring, s, t).unwrap().into_iter().map(|(_, r)| r).collect();
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (t.saturating_sub(s)..t).collect::<Vec<_>>());
    }

    #[test]
    fn occupancy(s in sites(), t in 0u64..1 << 30) {
        let ring = lookup_resident_times(SurfacePolicy::Ring, s, t).unwrap().len() as u64;
        prop_assert_eq!(ring, t.min(s));
        let steady = lookup_resident_times(SurfacePolicy::Steady, s, t).unwrap().len() as u64;
        if t <= s {
            prop_assert_eq!(steady, t);
        } else {
            prop_assert!(steady > s / 2 && steady <= s, "{} occupied", steady);
        }
    }

    #[test]
    fn steady_gaps_are_bounded(s in prop::sample::select(vec![4u64, 8, 64, 256]), t in 0u64..1 << 40) {
        let mut ranks: Vec<u64> = lookup_resident_times(SurfacePolicy::Steady, s, t).unwrap().into_iter().map(|(_, r)| r).collect();
        ranks.sort_unstable();
        for gap in retention_gaps(&ranks, t) {
            prop_assert!(steady_gap_ok(gap, s, t), "gap {} at depth {}", gap, t);
        }
    }

    #[test]
    fn alleles_follow_lookup(policy in policy(), log_sites in 1u32..7, deposits in prop::collection::vec(any::<u64>(), 0..300)) {
        let config = SurfaceConfig::new(policy, 1 << log_sites, 8).unwrap();
        let mut annotation = SurfaceAnnotation::new(config).unwrap();
        for d in &deposits {
            annotation.deposit_masked(*d);
        }
        let alleles = annotation.extract_alleles();
        prop_assert!(alleles.windows(2).all(|w| w[0].rank < w[1].rank));
        let mut expected: Vec<u64> = lookup_resident_times(policy, 1 << log_sites, deposits.len() as u64)
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        expected.sort_unstable();
        prop_assert_eq!(alleles.iter().map(|a| a.rank).collect::<Vec<_>>(), expected);
        for a in alleles {
            prop_assert_eq!(a.differentia, deposits[a.rank as usize] & 0xff);
        }
    }
}

#[test]
fn replay_writes_the_assigned_site() {
    for policy in [SurfacePolicy::Steady, SurfacePolicy::Ring] {
        for s in [2u64, 4, 8, 16, 64, 256] {
            let mut oracle = ReplayOracle::new(policy, s).unwrap();
            for t in 0..20_000 {
                assert_eq!(oracle.step(), assign_storage_site(policy, s, t).unwrap(), "{policy} S={s} T={t}");
            }
        }
    }
}
