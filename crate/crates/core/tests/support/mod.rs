//! Random scenario generators and brute-force oracles shared by the
//! integration tests and the acceptance suite.
//!
//! The oracles deliberately avoid the library's own algorithms: they work
//! on explicit path enumerations and recompute everything from scratch.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use vipzone_core::analysis::derive_connected_zone;
use vipzone_core::registry::{AspaRecord, KycEntry, Roa};
use vipzone_core::routing::{Announcement, Community, LearnedRel, PolicyHooks, Route};
use vipzone_core::synth::{random_topology, SynthParams};
use vipzone_core::{Asn, Prefix, RegistrySet, Relation, Topology, ZoneConfig};

pub mod checks;

pub fn asn(v: u32) -> Asn {
    Asn::new(v).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//------------ Random cases --------------------------------------------------

pub struct Case {
    pub seed: u64,
    pub topo: Topology,
    pub reg: RegistrySet,
    pub cfg: ZoneConfig,
    pub anns: Vec<Announcement>,
}

const BLOCKS: [&str; 3] = ["10.0.0.0/16", "10.1.0.0/16", "10.2.0.0/16"];

/// A random zone: a random roster grown into a connected zone.
pub fn random_zone<R: Rng>(rng: &mut R, topo: &Topology) -> ZoneConfig {
    let roster: BTreeSet<Asn> = topo
        .asns()
        .iter()
        .copied()
        .filter(|_| rng.gen_bool(0.5))
        .collect();
    let d = derive_connected_zone(topo, &roster);
    let mut cfg = ZoneConfig::unchecked(d.connected_members);
    cfg.aspa_extension = rng.gen_bool(0.5);
    for &a in topo.asns() {
        if !cfg.is_member(a) {
            match rng.gen_range(0..10) {
                0 => {
                    cfg.honor_verified.insert(a);
                }
                1 => {
                    cfg.honor_verified_after_relationship.insert(a);
                }
                _ => {}
            }
        }
    }
    cfg
}

/// Up to three legitimately originated prefixes, some with a more
/// specific, with a random mix of ROAs, IRR entries, KYC lists and ASPA
/// records.
pub fn random_case(seed: u64) -> Case {
    let mut rng = rng(seed);
    let n = rng.gen_range(3..=12);
    let topo = random_topology(&mut rng, SynthParams::small(n));
    let cfg = random_zone(&mut rng, &topo);
    let asns = topo.asns().to_vec();
    let mut reg = RegistrySet::new();
    let mut anns = Vec::new();
    let count = rng.gen_range(1..=3);
    for block in BLOCKS.iter().take(count) {
        let mut prefix: Prefix = block.parse().unwrap();
        if rng.gen_bool(0.3) {
            prefix = prefix.split().unwrap().1;
        }
        let origin = *asns.choose(&mut rng).unwrap();
        anns.push(Announcement::originate(origin, prefix));
        match rng.gen_range(0..6) {
            0 | 1 => reg.add_roa(Roa::new(prefix, origin, None).unwrap()),
            2 => {
                let other = *asns.choose(&mut rng).unwrap();
                reg.add_roa(Roa::new(prefix.truncate(prefix.len() - 1).unwrap(), other, Some(24)).unwrap());
            }
            3 => reg.add_irr(origin, prefix),
            _ => {}
        }
        if rng.gen_bool(0.3) {
            // a second, competing origination
            let other = *asns.choose(&mut rng).unwrap();
            if other != origin {
                anns.push(Announcement::originate(other, prefix));
            }
        }
    }
    for &a in &asns {
        for (nb, _) in topo.neighbors(a) {
            if cfg.is_member(a) && rng.gen_bool(0.2) {
                let allowed_prefixes = anns
                    .iter()
                    .filter(|x| x.speaker() == nb && rng.gen_bool(0.7))
                    .map(|x| x.prefix)
                    .collect();
                let allowed_asns = rng.gen_bool(0.2).then(|| [nb].into());
                reg.set_kyc(a, nb, KycEntry { allowed_asns, allowed_prefixes });
            }
        }
        let providers: BTreeSet<Asn> = topo.providers(a).collect();
        if !providers.is_empty() && rng.gen_bool(0.4) {
            // Records are truthful but may be incomplete.
            let listed: BTreeSet<Asn> = providers.iter().copied().filter(|_| rng.gen_bool(0.8)).collect();
            if !listed.is_empty() {
                reg.add_aspa(AspaRecord::new(a, listed).unwrap()).unwrap();
            }
        }
    }
    Case { seed, topo, reg, cfg, anns }
}

/// Adds a forged-path injection by a random non-member, if one exists.
pub fn add_random_injection(case: &mut Case) {
    let mut rng = rng(case.seed ^ 0x5eed);
    let outsiders: Vec<Asn> = case
        .topo
        .asns()
        .iter()
        .copied()
        .filter(|a| !case.cfg.is_member(*a))
        .collect();
    let Some(&attacker) = outsiders.choose(&mut rng) else { return };
    let target = case.anns[0].clone();
    if target.speaker() == attacker || case.anns.iter().any(|a| a.speaker() == attacker && a.prefix == target.prefix) {
        return;
    }
    let mut path = vec![attacker];
    if rng.gen_bool(0.7) {
        path.push(target.speaker());
    }
    let communities = if rng.gen_bool(0.8) { [Community::Verified].into() } else { BTreeSet::new() };
    case.anns.push(Announcement::inject(target.prefix, path, communities));
}

//------------ Propagation oracle --------------------------------------------

fn rank(rel: LearnedRel) -> u8 {
    match rel {
        LearnedRel::Origin => 3,
        LearnedRel::Customer => 2,
        LearnedRel::Peer => 1,
        LearnedRel::Provider => 0,
    }
}

/// Preference written out independently of the library's comparator.
fn better(order: vipzone_core::routing::PreferenceOrder, a: &Route, b: &Route) -> bool {
    use vipzone_core::routing::VerifiedRank;
    let key = |r: &Route| {
        let v = r.communities.contains(&Community::Verified);
        (
            r.learned_rel == LearnedRel::Origin,
            v && order.verified == VerifiedRank::First,
            rank(r.learned_rel),
            v && order.verified == VerifiedRank::AfterRelationship,
            std::cmp::Reverse(r.as_path.len()),
            std::cmp::Reverse(r.learned_from),
        )
    };
    key(a) > key(b)
}

fn relation_of(topo: &Topology, of: Asn, to: Asn) -> Relation {
    topo.relation(to, of).expect("adjacent")
}

/// One hop: what `next` ends up with when `at` offers it `held`.
fn step<H: PolicyHooks>(topo: &Topology, hooks: &H, at: Asn, next: Asn, held: &Route) -> Option<Route> {
    let next_is = topo.relation(at, next)?;
    // Valley-free: only customer-learned or own routes go up or sideways.
    let allowed = matches!(held.learned_rel, LearnedRel::Origin | LearnedRel::Customer)
        || next_is == Relation::Customer;
    let sent = hooks.export(at, next, next_is, held, allowed)?;
    let mut path = Vec::new();
    if sent.learned_rel != LearnedRel::Origin {
        path.push(at);
    }
    path.extend(sent.as_path.iter().copied());
    if path.contains(&next) {
        return None;
    }
    let rel = relation_of(topo, at, next);
    let route = Route {
        prefix: sent.prefix,
        as_path: path,
        communities: sent.communities,
        learned_from: Some(at),
        learned_rel: rel.into(),
    };
    hooks.import(next, at, rel, route)
}

fn starts<H: PolicyHooks>(anns: &[&Announcement], hooks: &H) -> BTreeMap<Asn, Route> {
    let mut out = BTreeMap::new();
    for ann in anns {
        let start = Route {
            prefix: ann.prefix,
            as_path: ann.as_path.clone(),
            communities: ann.communities.clone(),
            learned_from: None,
            learned_rel: LearnedRel::Origin,
        };
        let start = if ann.injected {
            Some(start)
        } else {
            hooks.originate(ann.speaker(), start)
        };
        if let Some(start) = start {
            out.insert(ann.speaker(), start);
        }
    }
    out
}

/// Every route each AS could hold for one prefix, one per valley-free
/// simple path from a speaker, with the hooks replayed hop by hop.
pub fn enumerate_paths<H: PolicyHooks>(
    topo: &Topology,
    anns: &[&Announcement],
    hooks: &H,
) -> BTreeMap<Asn, Vec<Route>> {
    fn walk<H: PolicyHooks>(
        topo: &Topology,
        hooks: &H,
        at: Asn,
        held: &Route,
        out: &mut BTreeMap<Asn, Vec<Route>>,
    ) {
        for (next, _) in topo.neighbors(at) {
            if let Some(route) = step(topo, hooks, at, next, held) {
                out.entry(next).or_default().push(route.clone());
                walk(topo, hooks, next, &route, out);
            }
        }
    }
    let mut out: BTreeMap<Asn, Vec<Route>> = BTreeMap::new();
    for (speaker, start) in starts(anns, hooks) {
        out.entry(speaker).or_default().push(start.clone());
        walk(topo, hooks, speaker, &start, &mut out);
    }
    out
}

/// Best route per (AS, prefix), computed independently of the engine.
///
/// A stable assignment gives each AS its most preferred route among those
/// its neighbors' own choices offer it. This solves for one by
/// asynchronous sweeps in descending ASN order, and checks that every
/// route ever offered is one of the enumerated valley-free simple paths.
pub fn oracle_propagate<H: PolicyHooks>(
    topo: &Topology,
    anns: &[Announcement],
    hooks: &H,
) -> BTreeMap<(Asn, Prefix), Route> {
    let mut by_prefix: BTreeMap<Prefix, Vec<&Announcement>> = BTreeMap::new();
    for a in anns {
        by_prefix.entry(a.prefix).or_default().push(a);
    }
    let mut result = BTreeMap::new();
    for (prefix, group) in by_prefix {
        let domain = enumerate_paths(topo, &group, hooks);
        let local = starts(&group, hooks);
        let mut chosen: BTreeMap<Asn, Route> = BTreeMap::new();
        let mut sweeps = 0;
        loop {
            sweeps += 1;
            assert!(sweeps < 500, "oracle did not settle for {prefix}");
            let mut changed = false;
            for &x in topo.asns().iter().rev() {
                let order = hooks.preference(x);
                let mut best: Option<Route> = local.get(&x).cloned();
                for (y, _) in topo.neighbors(x) {
                    let Some(held) = chosen.get(&y) else { continue };
                    let Some(r) = step(topo, hooks, y, x, held) else { continue };
                    assert!(
                        domain.get(&x).is_some_and(|d| d.contains(&r)),
                        "AS{x} offered {:?}, not a valley-free simple path",
                        r.as_path
                    );
                    if best.as_ref().is_none_or(|b| better(order, &r, b)) {
                        best = Some(r);
                    }
                }
                if best.as_ref() != chosen.get(&x) {
                    changed = true;
                    match best {
                        Some(r) => chosen.insert(x, r),
                        None => chosen.remove(&x),
                    };
                }
            }
            if !changed {
                break;
            }
        }
        for (a, r) in chosen {
            result.insert((a, prefix), r);
        }
    }
    result
}

//------------ Path checks ---------------------------------------------------

/// Whether `[holder] + path` is valley-free when read in the direction the
/// announcement travelled.
pub fn valley_free(topo: &Topology, holder: Asn, path: &[Asn]) -> bool {
    // travel order: origin ... holder
    let mut hops: Vec<Asn> = path.iter().rev().copied().collect();
    if hops.last() != Some(&holder) {
        hops.push(holder);
    }
    // phase 0: going up, 1: after the peer edge or going down
    let mut descending = false;
    for w in hops.windows(2) {
        let Some(rel) = topo.relation(w[0], w[1]) else {
            return false;
        };
        match rel {
            Relation::Provider => {
                if descending {
                    return false;
                }
            }
            Relation::Peer => {
                if descending {
                    return false;
                }
                descending = true;
            }
            Relation::Customer => descending = true,
        }
    }
    true
}

//------------ Topology oracles ----------------------------------------------

pub fn brute_cone(topo: &Topology, a: Asn) -> BTreeSet<Asn> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![a];
    while let Some(x) = stack.pop() {
        for c in topo.customers(x) {
            if c != a && seen.insert(c) {
                stack.push(c);
            }
        }
    }
    seen
}

/// Connected members: roster ASes with a chain of roster providers up to
/// a provider-free roster AS.
pub fn brute_connected(topo: &Topology, roster: &BTreeSet<Asn>) -> BTreeSet<Asn> {
    roster
        .iter()
        .copied()
        .filter(|&m| topo.contains(m))
        .filter(|&m| {
            let mut queue = VecDeque::from([m]);
            let mut seen = BTreeSet::from([m]);
            while let Some(x) = queue.pop_front() {
                if topo.providers(x).next().is_none() {
                    return true;
                }
                for p in topo.providers(x) {
                    if roster.contains(&p) && seen.insert(p) {
                        queue.push_back(p);
                    }
                }
            }
            false
        })
        .collect()
}

pub fn brute_protected(topo: &Topology, zone: &BTreeSet<Asn>) -> usize {
    topo.asns()
        .iter()
        .filter(|a| zone.contains(a) || topo.providers(**a).any(|p| zone.contains(&p)))
        .count()
}

/// Local region by enumerating every simple path from each candidate
/// origin to the customer.
pub fn brute_local_region(
    topo: &Topology,
    members: &BTreeSet<Asn>,
    customer: Asn,
    blocked_peerings: &BTreeSet<(Asn, Asn)>,
) -> BTreeSet<Asn> {
    fn dfs(
        topo: &Topology,
        members: &BTreeSet<Asn>,
        blocked: &BTreeSet<(Asn, Asn)>,
        at: Asn,
        target: Asn,
        descending: bool,
        visited: &mut Vec<Asn>,
    ) -> bool {
        if at == target {
            return true;
        }
        for (next, rel) in topo.neighbors(at) {
            if members.contains(&next) || visited.contains(&next) {
                continue;
            }
            let next_desc = match rel {
                Relation::Provider if descending => continue,
                Relation::Provider => false,
                Relation::Peer if descending => continue,
                Relation::Peer => {
                    if blocked.contains(&(at.min(next), at.max(next))) {
                        continue;
                    }
                    true
                }
                Relation::Customer => true,
            };
            visited.push(next);
            let ok = dfs(topo, members, blocked, next, target, next_desc, visited);
            visited.pop();
            if ok {
                return true;
            }
        }
        false
    }
    topo.asns()
        .iter()
        .copied()
        .filter(|&a| a != customer && !members.contains(&a))
        .filter(|&a| dfs(topo, members, blocked_peerings, a, customer, false, &mut vec![a]))
        .collect()
}
