//! Topology-level analyses: connected-zone derivation, protected-AS
//! counts and growth curves, local regions, and routing exceptions.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::net::Ipv6Addr;

use log::warn;
use rayon::prelude::*;
use serde::Serialize;

use crate::prefix::Prefix;
use crate::registry::{RegistrySet, Roa};
use crate::routing::{
    propagate, Announcement, LearnedRel, PolicyHooks, PreferenceOrder, Route, RoutingError,
};
use crate::topology::{Asn, Relation, Topology};
use crate::vipzone::{VipzoneHooks, ZoneConfig};

//------------ Zone derivation -----------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ZoneDerivation {
    pub input_roster: BTreeSet<Asn>,
    pub connected_members: BTreeSet<Asn>,
    /// Non-members with at least one provider in the zone.
    pub attached_customers: BTreeSet<Asn>,
}

/// Grows a connected zone from a roster: start with provider-free roster
/// ASes, then keep adding roster ASes that have a provider already in the
/// zone.
pub fn derive_connected_zone(topo: &Topology, roster: &BTreeSet<Asn>) -> ZoneDerivation {
    let n = topo.len();
    let mut in_roster = vec![false; n];
    for &a in roster {
        match topo.idx(a) {
            Some(i) => in_roster[i] = true,
            None => warn!("roster AS{a} is not in the topology"),
        }
    }
    let mut in_zone = vec![false; n];
    let mut stack: Vec<usize> = (0..n)
        .filter(|&i| in_roster[i] && topo.providers_idx(i).is_empty())
        .collect();
    for &i in &stack {
        in_zone[i] = true;
    }
    while let Some(x) = stack.pop() {
        for &c in topo.customers_idx(x) {
            if in_roster[c] && !in_zone[c] {
                in_zone[c] = true;
                stack.push(c);
            }
        }
    }
    let connected_members: BTreeSet<Asn> =
        (0..n).filter(|&i| in_zone[i]).map(|i| topo.asn_at(i)).collect();
    let attached_customers = attached(topo, &in_zone);
    ZoneDerivation {
        input_roster: roster.clone(),
        connected_members,
        attached_customers,
    }
}

fn attached(topo: &Topology, in_zone: &[bool]) -> BTreeSet<Asn> {
    (0..topo.len())
        .filter(|&i| !in_zone[i] && topo.providers_idx(i).iter().any(|&p| in_zone[p]))
        .map(|i| topo.asn_at(i))
        .collect()
}

/// Zone members plus non-members with a provider in the zone.
pub fn protected_count(topo: &Topology, zone: &BTreeSet<Asn>) -> usize {
    let mut in_zone = vec![false; topo.len()];
    for a in zone {
        if let Some(i) = topo.idx(*a) {
            in_zone[i] = true;
        }
    }
    in_zone.iter().filter(|&&z| z).count() + attached(topo, &in_zone).len()
}

//------------ Growth curves -------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum GrowthOrder {
    /// Descending customer-cone size, lower ASN first on ties.
    ByConeSize,
    /// Each step adds the AS with the largest marginal gain in protected
    /// ASes; ties go to the larger cone, then the lower ASN.
    GreedyProtectedGain,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CurvePoint {
    pub zone_size: usize,
    pub protected_count: usize,
}

/// The first `limit` ASes in the order they would be added to the zone,
/// together with the protected count after each addition.
pub fn growth_sequence(topo: &Topology, order: GrowthOrder, limit: usize) -> Vec<(Asn, usize)> {
    let n = topo.len();
    let limit = limit.min(n);
    let cones = topo.cone_sizes();
    let mut protected = vec![false; n];
    let mut count = 0;
    let mut out = Vec::with_capacity(limit);
    let add = |i: usize, protected: &mut Vec<bool>, count: &mut usize| {
        for j in std::iter::once(i).chain(topo.customers_idx(i).iter().copied()) {
            if !protected[j] {
                protected[j] = true;
                *count += 1;
            }
        }
    };
    match order {
        GrowthOrder::ByConeSize => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by_key(|&i| (Reverse(cones[i]), topo.asn_at(i)));
            for &i in idx.iter().take(limit) {
                add(i, &mut protected, &mut count);
                out.push((topo.asn_at(i), count));
            }
        }
        GrowthOrder::GreedyProtectedGain => {
            let gain = |i: usize, protected: &[bool]| {
                std::iter::once(i)
                    .chain(topo.customers_idx(i).iter().copied())
                    .filter(|&j| !protected[j])
                    .count()
            };
            // Gains never increase as the zone grows, so a stale heap entry
            // is an upper bound and lazy re-evaluation finds the true argmax.
            let mut heap: BinaryHeap<(usize, usize, Reverse<Asn>, usize)> = (0..n)
                .map(|i| (gain(i, &protected), cones[i], Reverse(topo.asn_at(i)), i))
                .collect();
            let mut chosen = vec![false; n];
            while out.len() < limit {
                let Some((_, cone, asn, i)) = heap.pop() else { break };
                if chosen[i] {
                    continue;
                }
                let fresh = (gain(i, &protected), cone, asn, i);
                if heap.peek().is_none_or(|top| fresh >= *top) {
                    chosen[i] = true;
                    add(i, &mut protected, &mut count);
                    out.push((asn.0, count));
                } else {
                    heap.push(fresh);
                }
            }
        }
    }
    out
}

/// Protected counts at the requested zone sizes. Sizes beyond the number
/// of ASes report the count for the whole topology.
pub fn zone_growth_curve(topo: &Topology, order: GrowthOrder, steps: &[usize]) -> Vec<CurvePoint> {
    let max = steps.iter().copied().max().unwrap_or(0);
    let seq = growth_sequence(topo, order, max);
    steps
        .iter()
        .map(|&size| CurvePoint {
            zone_size: size,
            protected_count: match size.min(seq.len()) {
                0 => 0,
                k => seq[k - 1].1,
            },
        })
        .collect()
}

//------------ Local regions -------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LocalRegion {
    pub customer: Asn,
    /// Excludes the customer itself and every zone member.
    pub region: BTreeSet<Asn>,
}

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("AS{0} is not in the topology")]
    UnknownAsn(Asn),
    #[error("AS{0} is a zone member")]
    IsMember(Asn),
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

/// Peering links assumed to filter everything crossing them. Pairs are
/// unordered.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PeerFilters(BTreeSet<(Asn, Asn)>);

impl PeerFilters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, a: Asn, b: Asn) {
        self.0.insert((a.min(b), a.max(b)));
    }

    pub fn blocks(&self, a: Asn, b: Asn) -> bool {
        self.0.contains(&(a.min(b), a.max(b)))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// ASes that can get an announcement to `customer` along a valley-free path
/// that avoids every zone member.
pub fn local_region(
    topo: &Topology,
    cfg: &ZoneConfig,
    customer: Asn,
) -> Result<LocalRegion, AnalysisError> {
    local_region_filtered(topo, cfg, customer, &PeerFilters::default())
}

/// [`local_region`] with some peering links treated as filtered.
pub fn local_region_filtered(
    topo: &Topology,
    cfg: &ZoneConfig,
    customer: Asn,
    filters: &PeerFilters,
) -> Result<LocalRegion, AnalysisError> {
    let c = topo.idx(customer).ok_or(AnalysisError::UnknownAsn(customer))?;
    if cfg.is_member(customer) {
        return Err(AnalysisError::IsMember(customer));
    }
    let n = topo.len();
    let open = |i: usize| !cfg.is_member(topo.asn_at(i));

    // The announcement's final, downhill leg reversed: the customer and its
    // non-member providers, recursively.
    let mut uphill = vec![false; n];
    uphill[c] = true;
    let mut stack = vec![c];
    while let Some(x) = stack.pop() {
        for &p in topo.providers_idx(x) {
            if open(p) && !uphill[p] {
                uphill[p] = true;
                stack.push(p);
            }
        }
    }

    // At most one peering hop before that leg.
    let mut reached = uphill.clone();
    for x in (0..n).filter(|&x| uphill[x]) {
        for &p in topo.peers_idx(x) {
            if open(p) && !filters.blocks(topo.asn_at(x), topo.asn_at(p)) {
                reached[p] = true;
            }
        }
    }

    // Origins climb to any of those through non-member providers, so
    // descend through non-member customers.
    let mut stack: Vec<usize> = (0..n).filter(|&x| reached[x]).collect();
    while let Some(x) = stack.pop() {
        for &d in topo.customers_idx(x) {
            if open(d) && !reached[d] {
                reached[d] = true;
                stack.push(d);
            }
        }
    }
    reached[c] = false;
    Ok(LocalRegion {
        customer,
        region: (0..n).filter(|&i| reached[i]).map(|i| topo.asn_at(i)).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegionRow {
    pub zone_size: usize,
    pub customer_asn: Asn,
    /// Region size, not counting the customer itself.
    pub region_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionSummary {
    pub zone_size: usize,
    pub customers: usize,
    pub p10: usize,
    pub p50: usize,
    pub p90: usize,
    pub frac_leq_1: f64,
    /// Counts per bucket; a bucket key `k` holds sizes in `(k/2, k]`, with
    /// key 0 holding empty regions.
    pub histogram: BTreeMap<usize, usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RegionDistribution {
    pub rows: Vec<RegionRow>,
    pub summaries: Vec<RegionSummary>,
}

/// Nearest-rank quantile of sorted data.
fn quantile(sorted: &[usize], q: f64) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn bucket(size: usize) -> usize {
    if size == 0 {
        0
    } else {
        size.next_power_of_two()
    }
}

/// Local-region sizes of every attached customer, for zones made of the
/// largest-cone ASes at each requested size.
pub fn local_region_distribution(
    topo: &Topology,
    zone_sizes: &[usize],
    with_ix_augmentation: bool,
) -> RegionDistribution {
    let augmented;
    let topo = if with_ix_augmentation {
        augmented = topo.augment_with_ix_peering();
        &augmented
    } else {
        topo
    };
    let max = zone_sizes.iter().copied().max().unwrap_or(0);
    let order = growth_sequence(topo, GrowthOrder::ByConeSize, max);
    let mut out = RegionDistribution::default();
    for &size in zone_sizes {
        let zone: BTreeSet<Asn> = order.iter().take(size).map(|&(a, _)| a).collect();
        let cfg = ZoneConfig::unchecked(zone);
        let customers: Vec<Asn> = topo
            .asns()
            .iter()
            .copied()
            .filter(|&a| !cfg.is_member(a) && topo.providers(a).any(|p| cfg.is_member(p)))
            .collect();
        let rows: Vec<RegionRow> = customers
            .par_iter()
            .map(|&c| RegionRow {
                zone_size: size,
                customer_asn: c,
                region_size: local_region(topo, &cfg, c)
                    .expect("attached customers are non-members")
                    .region
                    .len(),
            })
            .collect();
        let mut sizes: Vec<usize> = rows.iter().map(|r| r.region_size).collect();
        sizes.sort_unstable();
        let mut histogram = BTreeMap::new();
        for &s in &sizes {
            *histogram.entry(bucket(s)).or_insert(0) += 1;
        }
        out.summaries.push(RegionSummary {
            zone_size: size,
            customers: sizes.len(),
            p10: quantile(&sizes, 0.10),
            p50: quantile(&sizes, 0.50),
            p90: quantile(&sizes, 0.90),
            frac_leq_1: if sizes.is_empty() {
                0.0
            } else {
                sizes.iter().filter(|&&s| s <= 1).count() as f64 / sizes.len() as f64
            },
            histogram,
        });
        out.rows.extend(rows);
    }
    out
}

//------------ Routing exceptions --------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RoutingExceptions {
    pub member: Asn,
    pub destinations: Vec<Asn>,
}

impl RoutingExceptions {
    pub fn count(&self) -> usize {
        self.destinations.len()
    }
}

/// A prefix standing in for "everything AS `asn` originates".
pub fn destination_prefix(asn: Asn) -> Prefix {
    let v = asn.get();
    let addr = Ipv6Addr::new(0xfc00, (v >> 16) as u16, (v & 0xffff) as u16, 0, 0, 0, 0, 0);
    Prefix::new(addr.into(), 48).expect("canonical by construction")
}

struct PlainAt<'a> {
    inner: VipzoneHooks<'a>,
    at: Asn,
}

impl PolicyHooks for PlainAt<'_> {
    fn originate(&self, at: Asn, route: Route) -> Option<Route> {
        self.inner.originate(at, route)
    }

    fn import(&self, at: Asn, from: Asn, rel: Relation, route: Route) -> Option<Route> {
        self.inner.import(at, from, rel, route)
    }

    fn preference(&self, at: Asn) -> PreferenceOrder {
        if at == self.at {
            PreferenceOrder::GAO_REXFORD
        } else {
            self.inner.preference(at)
        }
    }

    fn export(&self, at: Asn, to: Asn, rel: Relation, route: &Route, permitted: bool) -> Option<Route> {
        self.inner.export(at, to, rel, route, permitted)
    }
}

/// Destinations for which `member` reaches the destination through a
/// provider only because it prefers VERIFIED routes, where plain
/// relationship preference would have used a customer or peer.
///
/// Every other AS originates one synthetic prefix covered by a ROA in its
/// own name, added to `reg`.
pub fn routing_exceptions(
    topo: &Topology,
    cfg: &ZoneConfig,
    reg: &RegistrySet,
    member: Asn,
) -> Result<RoutingExceptions, AnalysisError> {
    if !topo.contains(member) {
        return Err(AnalysisError::UnknownAsn(member));
    }
    let mut reg = reg.clone();
    let mut anns = Vec::with_capacity(topo.len());
    for &d in topo.asns() {
        if d == member {
            continue;
        }
        let p = destination_prefix(d);
        reg.add_roa(Roa::new(p, d, None).expect("valid ROA"));
        anns.push(Announcement::originate(d, p));
    }
    let hooks = VipzoneHooks::new(cfg, &reg);
    let with = propagate(topo, &anns, &hooks)?;
    let without = propagate(topo, &anns, &PlainAt { inner: hooks, at: member })?;
    let destinations = anns
        .iter()
        .filter(|a| {
            let w = with.best(member, &a.prefix).map(|r| r.learned_rel);
            let wo = without.best(member, &a.prefix).map(|r| r.learned_rel);
            w == Some(LearnedRel::Provider)
                && matches!(wo, Some(LearnedRel::Customer | LearnedRel::Peer))
        })
        .map(|a| a.speaker())
        .collect();
    Ok(RoutingExceptions {
        member,
        destinations,
    })
}
