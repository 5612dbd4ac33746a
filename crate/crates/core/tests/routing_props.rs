mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use vipzone_core::registry::AspaVerdict;
use vipzone_core::routing::{dump_rib, parse_dump, propagate, Announcement, GaoRexford, LearnedRel, Rib};
use vipzone_core::synth::{random_topology, SynthParams};
use vipzone_core::vipzone::VipzoneHooks;
use vipzone_core::{Prefix, Relation, Topology};

use support::{add_random_injection, random_case, rng, valley_free};

fn workload(seed: u64, n: usize) -> (Topology, Vec<Announcement>) {
    let mut r = rng(seed);
    let topo = random_topology(&mut r, SynthParams::small(n));
    let anns = topo
        .asns()
        .iter()
        .step_by(3)
        .enumerate()
        .map(|(i, &a)| {
            let p: Prefix = format!("10.{}.{}.0/24", i / 256, i % 256).parse().unwrap();
            Announcement::originate(a, p)
        })
        .collect();
    (topo, anns)
}

fn with_workers(n: usize, f: impl FnOnce() -> Rib + Send) -> Rib {
    rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap().install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn best_paths_are_valley_free_and_loop_free(seed in any::<u64>(), n in 2usize..=50) {
        let (topo, anns) = workload(seed, n);
        let rib = propagate(&topo, &anns, &GaoRexford).unwrap();
        for (a, _, e) in rib.iter() {
            let r = &e.best;
            let unique: BTreeSet<_> = r.as_path.iter().collect();
            prop_assert_eq!(unique.len(), r.as_path.len());
            prop_assert!(!r.as_path.contains(&a) || r.learned_rel == LearnedRel::Origin);
            prop_assert!(valley_free(&topo, a, &r.as_path), "AS{} {:?}", a, r.as_path);
            prop_assert!(e.candidates.contains(r));
        }
    }

    #[test]
    fn worker_count_and_input_order_do_not_matter(seed in any::<u64>(), n in 2usize..=40) {
        let (topo, mut anns) = workload(seed, n);
        let one = with_workers(1, || propagate(&topo, &anns, &GaoRexford).unwrap());
        let four = with_workers(4, || propagate(&topo, &anns, &GaoRexford).unwrap());
        prop_assert_eq!(&one, &four);
        anns.reverse();
        let reversed = propagate(&topo, &anns, &GaoRexford).unwrap();
        prop_assert_eq!(&one, &reversed);
    }

    #[test]
    fn dumps_round_trip(seed in 0u64..500) {
        let case = random_case(seed);
        let rib = propagate(&case.topo, &case.anns, &VipzoneHooks::new(&case.cfg, &case.reg)).unwrap();
        let mut text = Vec::new();
        dump_rib(&rib, &mut text).unwrap();
        let rows = parse_dump(text.as_slice()).unwrap();
        let direct: Vec<_> = rib.iter().map(|(a, _, e)| (a, e.best.clone())).collect();
        let parsed: Vec<_> = rows.into_iter().map(|r| (r.asn, r.route)).collect();
        prop_assert_eq!(direct, parsed);
    }

    /// Every VERIFIED route at a member traces back to a member that was
    /// allowed to tag it, over an unbroken run of members.
    #[test]
    fn zone_hygiene(seed in 0u64..2000) {
        let mut case = random_case(seed);
        add_random_injection(&mut case);
        let (topo, cfg, reg) = (&case.topo, &case.cfg, &case.reg);
        let Ok(rib) = propagate(topo, &case.anns, &VipzoneHooks::new(cfg, reg)) else { return Ok(()) };
        for (m, _, e) in rib.iter() {
            let r = &e.best;
            if !cfg.is_member(m) || !r.is_verified() || r.learned_rel == LearnedRel::Origin {
                continue;
            }
            let full: Vec<_> = std::iter::once(m).chain(r.as_path.iter().copied()).collect();
            let verifies = |x, y| matches!(topo.relation(x, y), Some(Relation::Customer | Relation::Peer));
            match full.iter().position(|a| !cfg.is_member(*a)) {
                None => {
                    // member-originated, tagged next to the origin
                    let k = full.len();
                    prop_assert!(k >= 2 && verifies(full[k - 2], full[k - 1]), "{:?}", full);
                }
                Some(i) => {
                    let entry = full[i - 1];
                    let mut pre = full[i..].to_vec();
                    pre.dedup();
                    let outside = pre.iter().all(|a| !cfg.is_member(*a));
                    let r5 = pre.len() == 1 && verifies(entry, pre[0]);
                    let aspa = cfg.aspa_extension
                        && pre.len() == 2
                        && outside
                        && verifies(entry, pre[0])
                        && reg.aspa_pair_valid(pre[1], pre[0]) == AspaVerdict::Confirmed;
                    prop_assert!(r5 || aspa, "AS{} holds VERIFIED {:?}", m, full);
                }
            }
        }
    }
}
