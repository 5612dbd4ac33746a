//! Synthetic workloads for the benchmarks: a seeded topology with a few
//! hundred to a few thousand ASes, one prefix per sampled origin, ROAs for
//! every origination, and a zone made of the largest customer cones.

use std::collections::BTreeSet;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vipzone_core::analysis::{derive_connected_zone, growth_sequence, GrowthOrder};
use vipzone_core::registry::Roa;
use vipzone_core::routing::Announcement;
use vipzone_core::synth::{random_topology, SynthParams};
use vipzone_core::{Asn, Prefix, RegistrySet, Topology, ZoneConfig};

pub struct Workload {
    pub topo: Topology,
    pub reg: RegistrySet,
    pub cfg: ZoneConfig,
    pub anns: Vec<Announcement>,
}

impl Workload {
    /// `ases` ASes with about two peering links each, `prefixes`
    /// originations, and the `zone` largest cones as members.
    pub fn new(seed: u64, ases: usize, prefixes: usize, zone: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = SynthParams {
            ases,
            tier1: 3,
            max_providers: 3,
            peer_prob: 2.0 / ases as f64,
        };
        let topo = random_topology(&mut rng, params);
        let mut reg = RegistrySet::new();
        let mut anns = Vec::new();
        let origins = topo.asns().iter().copied().choose_multiple(&mut rng, prefixes);
        for (i, origin) in origins.into_iter().enumerate() {
            let prefix: Prefix = format!("10.{}.{}.0/24", i / 256, i % 256).parse().unwrap();
            reg.add_roa(Roa::new(prefix, origin, None).unwrap());
            anns.push(Announcement::originate(origin, prefix));
        }
        let roster: BTreeSet<Asn> = growth_sequence(&topo, GrowthOrder::ByConeSize, zone)
            .into_iter()
            .map(|(a, _)| a)
            .collect();
        let members = derive_connected_zone(&topo, &roster).connected_members;
        let cfg = ZoneConfig::unchecked(members);
        Workload { topo, reg, cfg, anns }
    }
}
