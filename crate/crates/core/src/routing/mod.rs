//! Route propagation over the AS graph.
//!
//! [`propagate`] computes the steady-state RIB reached by synchronous
//! rounds of import, selection and export. Policy is pluggable through
//! [`PolicyHooks`]; the default hooks implement plain Gao-Rexford routing.
//! Prefixes are independent and are propagated in parallel, each with its
//! own sequence of rounds.

mod dump;
mod engine;
mod trace;

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::prefix::Prefix;
use crate::topology::{Asn, Relation};

pub use dump::{dump_rib, dump_rows, load_originations, parse_dump, DumpError, DumpRow};
pub use engine::propagate;
pub use trace::{data_plane_trace, Trace, TraceEnd};

//------------ Community -----------------------------------------------------

/// A BGP community attached to a route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Community {
    /// The zone's verification marker, written `VERIFIED:1`.
    Verified,
    Standard(u16, u16),
}

impl fmt::Display for Community {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        match self {
            Community::Verified => f.write_str("VERIFIED:1"),
            Community::Standard(a, b) => write!(f, "{a}:{b}"),
        }
    }
}

impl FromStr for Community {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "VERIFIED:1" {
            return Ok(Community::Verified);
        }
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("malformed community {s:?}"))?;
        match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok(Community::Standard(a, b)),
            _ => Err(format!("malformed community {s:?}")),
        }
    }
}

impl Serialize for Community {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

//------------ Route ---------------------------------------------------------

/// How the holder of a route learned it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnedRel {
    Customer,
    Peer,
    Provider,
    /// Originated by the holder itself.
    #[serde(rename = "self")]
    Origin,
}

impl LearnedRel {
    pub fn as_str(self) -> &'static str {
        match self {
            LearnedRel::Customer => "customer",
            LearnedRel::Peer => "peer",
            LearnedRel::Provider => "provider",
            LearnedRel::Origin => "self",
        }
    }

    fn rank(self) -> u8 {
        match self {
            LearnedRel::Origin => 3,
            LearnedRel::Customer => 2,
            LearnedRel::Peer => 1,
            LearnedRel::Provider => 0,
        }
    }
}

impl From<Relation> for LearnedRel {
    fn from(rel: Relation) -> Self {
        match rel {
            Relation::Customer => LearnedRel::Customer,
            Relation::Peer => LearnedRel::Peer,
            Relation::Provider => LearnedRel::Provider,
        }
    }
}

impl FromStr for LearnedRel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "customer" => Ok(LearnedRel::Customer),
            "peer" => Ok(LearnedRel::Peer),
            "provider" => Ok(LearnedRel::Provider),
            "self" => Ok(LearnedRel::Origin),
            other => Err(format!("unknown relationship {other:?}")),
        }
    }
}

/// A route as held in some AS's RIB.
///
/// `as_path` lists the ASes the announcement traversed, most recent first
/// and origin last. It does not include the holder unless the holder
/// originated the route.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Route {
    pub prefix: Prefix,
    pub as_path: Vec<Asn>,
    pub communities: BTreeSet<Community>,
    pub learned_from: Option<Asn>,
    pub learned_rel: LearnedRel,
}

impl Route {
    pub fn origin(&self) -> Asn {
        *self.as_path.last().expect("AS path is never empty")
    }

    pub fn is_verified(&self) -> bool {
        self.communities.contains(&Community::Verified)
    }

    /// Number of distinct ASNs in the path; prepending counts once.
    pub fn unique_path_len(&self) -> usize {
        self.as_path.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn path_string(&self) -> String {
        join(self.as_path.iter(), " ")
    }

    pub fn communities_string(&self) -> String {
        join(self.communities.iter(), ";")
    }
}

pub(crate) fn join<T: fmt::Display>(items: impl Iterator<Item = T>, sep: &str) -> String {
    items.map(|i| i.to_string()).collect::<Vec<_>>().join(sep)
}

//------------ Announcements -------------------------------------------------

/// A route entering the system at `as_path[0]`.
///
/// Legitimate originations have a single-element path and pass through the
/// originator's [`PolicyHooks::originate`]. Injections carry an arbitrary,
/// possibly forged path and bypass it.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Announcement {
    pub prefix: Prefix,
    pub as_path: Vec<Asn>,
    pub communities: BTreeSet<Community>,
    pub injected: bool,
}

impl Announcement {
    pub fn originate(asn: Asn, prefix: Prefix) -> Self {
        Announcement {
            prefix,
            as_path: vec![asn],
            communities: BTreeSet::new(),
            injected: false,
        }
    }

    pub fn inject(prefix: Prefix, as_path: Vec<Asn>, communities: BTreeSet<Community>) -> Self {
        Announcement {
            prefix,
            as_path,
            communities,
            injected: true,
        }
    }

    pub fn speaker(&self) -> Asn {
        self.as_path[0]
    }

    pub(crate) fn to_route(&self) -> Route {
        Route {
            prefix: self.prefix,
            as_path: self.as_path.clone(),
            communities: self.communities.clone(),
            learned_from: None,
            learned_rel: LearnedRel::Origin,
        }
    }
}

//------------ Preference ----------------------------------------------------

/// Where the VERIFIED marker sits in an AS's decision process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub enum VerifiedRank {
    #[default]
    Ignored,
    /// Above relationship preference.
    First,
    /// Between relationship and path length.
    AfterRelationship,
}

/// Route selection order. Self-originated routes always win; then, in
/// order: VERIFIED (if ranked first), relationship (customer > peer >
/// provider), VERIFIED (if ranked after relationship), shorter AS path,
/// lower neighbor ASN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
pub struct PreferenceOrder {
    pub verified: VerifiedRank,
}

impl PreferenceOrder {
    pub const GAO_REXFORD: Self = PreferenceOrder {
        verified: VerifiedRank::Ignored,
    };

    pub const VERIFIED_FIRST: Self = PreferenceOrder {
        verified: VerifiedRank::First,
    };

    #[allow(clippy::type_complexity)]
    fn key(&self, r: &Route) -> (bool, bool, u8, bool, Reverse<usize>, Reverse<Option<Asn>>) {
        let v = r.is_verified();
        (
            r.learned_rel == LearnedRel::Origin,
            v && self.verified == VerifiedRank::First,
            r.learned_rel.rank(),
            v && self.verified == VerifiedRank::AfterRelationship,
            Reverse(r.as_path.len()),
            Reverse(r.learned_from),
        )
    }

    /// `Greater` means `a` is preferred.
    pub fn compare(&self, a: &Route, b: &Route) -> Ordering {
        self.key(a).cmp(&self.key(b))
    }

    pub fn select<'a, I>(&self, candidates: I) -> Option<&'a Route>
    where
        I: IntoIterator<Item = &'a Route>,
    {
        candidates.into_iter().max_by(|a, b| self.compare(a, b))
    }
}

//------------ Policy hooks --------------------------------------------------

/// Per-AS policy consulted by the engine.
///
/// All methods must be pure: the engine may call them in any order and
/// from several threads.
pub trait PolicyHooks: Sync {
    /// Filters or rewrites a route the AS originates itself.
    fn originate(&self, _at: Asn, route: Route) -> Option<Route> {
        Some(route)
    }

    /// Filters or rewrites a route `at` receives from `from`. `rel` is what
    /// `from` is to `at`. Looped paths are dropped before this is called.
    fn import(&self, _at: Asn, _from: Asn, _rel: Relation, route: Route) -> Option<Route> {
        Some(route)
    }

    fn preference(&self, _at: Asn) -> PreferenceOrder {
        PreferenceOrder::GAO_REXFORD
    }

    /// Decides whether `at` exports its best `route` to `to`, returning the
    /// route to send before `at` prepends itself. `rel` is what `to` is to
    /// `at`; `permitted` is the Gao-Rexford export verdict.
    fn export(
        &self,
        _at: Asn,
        _to: Asn,
        _rel: Relation,
        route: &Route,
        permitted: bool,
    ) -> Option<Route> {
        permitted.then(|| route.clone())
    }
}

impl<H: PolicyHooks + ?Sized> PolicyHooks for &H {
    fn originate(&self, at: Asn, route: Route) -> Option<Route> {
        (**self).originate(at, route)
    }

    fn import(&self, at: Asn, from: Asn, rel: Relation, route: Route) -> Option<Route> {
        (**self).import(at, from, rel, route)
    }

    fn preference(&self, at: Asn) -> PreferenceOrder {
        (**self).preference(at)
    }

    fn export(&self, at: Asn, to: Asn, rel: Relation, route: &Route, permitted: bool) -> Option<Route> {
        (**self).export(at, to, rel, route, permitted)
    }
}

/// Plain Gao-Rexford policy with no filtering.
#[derive(Clone, Copy, Debug, Default)]
pub struct GaoRexford;

impl PolicyHooks for GaoRexford {}

/// Gao-Rexford export rule: routes from customers (or originated locally)
/// go to everyone, everything else only to customers.
pub fn export_permitted(learned: LearnedRel, to: Relation) -> bool {
    matches!(learned, LearnedRel::Origin | LearnedRel::Customer) || to == Relation::Customer
}

//------------ Rib -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RibEntry {
    pub best: Route,
    /// Every route that survived import, ordered by neighbor ASN with the
    /// local origination first.
    pub candidates: Vec<Route>,
}

/// Per-AS, per-prefix routing state.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Rib {
    per_as: BTreeMap<Asn, BTreeMap<Prefix, RibEntry>>,
}

impl Rib {
    pub(crate) fn insert(&mut self, asn: Asn, prefix: Prefix, entry: RibEntry) {
        self.per_as.entry(asn).or_default().insert(prefix, entry);
    }

    pub fn entry(&self, asn: Asn, prefix: &Prefix) -> Option<&RibEntry> {
        self.per_as.get(&asn)?.get(prefix)
    }

    pub fn best(&self, asn: Asn, prefix: &Prefix) -> Option<&Route> {
        self.entry(asn, prefix).map(|e| &e.best)
    }

    pub fn routes_of(&self, asn: Asn) -> impl Iterator<Item = (&Prefix, &RibEntry)> {
        self.per_as.get(&asn).into_iter().flat_map(|m| m.iter())
    }

    pub fn asns(&self) -> impl Iterator<Item = Asn> + '_ {
        self.per_as.keys().copied()
    }

    /// All (asn, prefix, entry) triples in (asn, prefix) order.
    pub fn iter(&self) -> impl Iterator<Item = (Asn, &Prefix, &RibEntry)> {
        self.per_as
            .iter()
            .flat_map(|(&a, m)| m.iter().map(move |(p, e)| (a, p, e)))
    }

    /// Longest-prefix match among the best routes held by `asn`.
    pub fn lookup(&self, asn: Asn, addr: IpAddr) -> Option<&Route> {
        self.routes_of(asn)
            .filter(|(p, _)| p.contains_addr(addr))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, e)| &e.best)
    }

    pub fn is_empty(&self) -> bool {
        self.per_as.is_empty()
    }
}

//------------ Errors --------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum RoutingError {
    #[error("announcement from AS{0}, which is not in the topology")]
    UnknownAsn(Asn),
    #[error("AS{asn} announces {prefix} more than once")]
    DuplicateOrigination { asn: Asn, prefix: Prefix },
    #[error("announcement for {0} has an empty AS path")]
    EmptyPath(Prefix),
    #[error("no convergence after {rounds} rounds for {}", join(.prefixes.iter(), ", "))]
    NonConvergence { rounds: usize, prefixes: Vec<Prefix> },
}
