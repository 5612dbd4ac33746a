//! Random AS topologies for tests and benchmarks.
//!
//! ASes are numbered from 1. The first few form a fully meshed,
//! provider-free top tier; every later AS buys transit from one or two
//! lower-numbered ASes, which keeps the provider graph acyclic. Peering
//! links are then sprinkled between non-adjacent pairs below the top tier.

use std::collections::BTreeSet;

use rand::Rng;

use crate::topology::{Asn, Edge, Topology};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub ases: usize,
    /// Size of the provider-free top tier, at least 1.
    pub tier1: usize,
    pub max_providers: usize,
    /// Chance that a given eligible pair peers.
    pub peer_prob: f64,
}

impl SynthParams {
    pub fn small(ases: usize) -> Self {
        SynthParams {
            ases,
            tier1: 1 + ases / 6,
            max_providers: 2,
            peer_prob: 0.08,
        }
        .clamped()
    }

    fn clamped(mut self) -> Self {
        self.tier1 = self.tier1.clamp(1, 3.min(self.ases.max(1)));
        self.max_providers = self.max_providers.max(1);
        self
    }
}

fn asn(v: usize) -> Asn {
    Asn::new(v as u32).expect("positive")
}

pub fn random_topology<R: Rng + ?Sized>(rng: &mut R, params: SynthParams) -> Topology {
    let p = params.clamped();
    assert!(p.ases >= 2, "need at least two ASes");
    let mut edges = Vec::new();
    let mut linked: BTreeSet<(usize, usize)> = BTreeSet::new();
    for a in 1..=p.tier1 {
        for b in a + 1..=p.tier1 {
            edges.push(Edge::p2p(asn(a), asn(b)));
            linked.insert((a, b));
        }
    }
    for c in p.tier1 + 1..=p.ases {
        let want = rng.gen_range(1..=p.max_providers.min(c - 1));
        let mut chosen = BTreeSet::new();
        while chosen.len() < want {
            chosen.insert(rng.gen_range(1..c));
        }
        for pr in chosen {
            edges.push(Edge::c2p(asn(c), asn(pr)));
            linked.insert((pr, c));
        }
    }
    // A lone top-tier AS with no customers would be left out of the graph.
    if p.tier1 == 1 && !linked.iter().any(|&(a, _)| a == 1) {
        edges.push(Edge::c2p(asn(2), asn(1)));
    }
    for a in p.tier1 + 1..=p.ases {
        for b in a + 1..=p.ases {
            if !linked.contains(&(a, b)) && rng.gen_bool(p.peer_prob) {
                edges.push(Edge::p2p(asn(a), asn(b)));
                linked.insert((a, b));
            }
        }
    }
    Topology::from_edges(edges).expect("generator respects the invariants")
}
