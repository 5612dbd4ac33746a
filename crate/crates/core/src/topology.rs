//! AS-level topology: relationship graph, customer cones and the
//! provider-free clique.
//!
//! The graph is loaded from the pipe-separated AS-relationship format
//! (`provider|customer|-1`, `peer|peer|0`) and validated once at
//! construction. After that it is immutable and shared by reference
//! between the routing engine and the analyses.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use log::warn;
use serde::Serialize;

//------------ Asn -----------------------------------------------------------

/// An autonomous system number.
///
/// Zero is reserved and rejected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct Asn(u32);

impl Asn {
    pub fn new(value: u32) -> Result<Self, AsnError> {
        if value == 0 {
            Err(AsnError::Zero)
        } else {
            Ok(Asn(value))
        }
    }

    pub const fn get(self) -> u32 {
        self.0
    }
}

impl fmt::Display for Asn {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Asn {
    type Err = AsnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let s = s
            .strip_prefix("AS")
            .or_else(|| s.strip_prefix("as"))
            .unwrap_or(s);
        let value = s
            .parse::<u32>()
            .map_err(|_| AsnError::Malformed(s.to_string()))?;
        Asn::new(value)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum AsnError {
    #[error("AS number 0 is reserved")]
    Zero,
    #[error("malformed AS number {0:?}")]
    Malformed(String),
}

//------------ Relationships -------------------------------------------------

/// Kind of an edge in the topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Relationship {
    CustomerToProvider,
    PeerToPeer,
}

/// One topology edge. For `CustomerToProvider`, `a` is the customer and `b`
/// the provider.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub a: Asn,
    pub b: Asn,
    pub rel: Relationship,
}

impl Edge {
    pub fn c2p(customer: Asn, provider: Asn) -> Self {
        Edge {
            a: customer,
            b: provider,
            rel: Relationship::CustomerToProvider,
        }
    }

    pub fn p2p(a: Asn, b: Asn) -> Self {
        Edge {
            a,
            b,
            rel: Relationship::PeerToPeer,
        }
    }

    fn unordered_pair(&self) -> (Asn, Asn) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

/// What a neighbor is to a given AS.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Customer,
    Peer,
    Provider,
}

//------------ Errors --------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum TopologyError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: self-loop on AS{asn}")]
    SelfLoop { line: usize, asn: Asn },
    #[error("line {line}: duplicate edge between AS{a} and AS{b}")]
    DuplicateEdge { line: usize, a: Asn, b: Asn },
    #[error("customer-to-provider cycle through AS{0}")]
    ProviderCycle(Asn),
    #[error("unknown AS{0}")]
    UnknownAsn(Asn),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

//------------ Topology ------------------------------------------------------

/// A validated AS relationship graph.
///
/// Internally every AS has a dense index; indices are assigned in ascending
/// ASN order, so iterating indices visits ASNs in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    asns: Vec<Asn>,
    index: HashMap<Asn, usize>,
    providers: Vec<Vec<usize>>,
    customers: Vec<Vec<usize>>,
    peers: Vec<Vec<usize>>,
    ix_memberships: BTreeMap<String, BTreeSet<Asn>>,
}

/// Result of [`Topology::tier1_clique`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tier1Clique {
    pub members: BTreeSet<Asn>,
    /// Pairs of provider-free ASes that are not connected by a peering edge.
    pub unmeshed_pairs: Vec<(Asn, Asn)>,
}

impl Tier1Clique {
    pub fn is_full_mesh(&self) -> bool {
        self.unmeshed_pairs.is_empty()
    }
}

impl Topology {
    /// Builds a topology from edges, enforcing the graph invariants.
    pub fn from_edges<I>(edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = Edge>,
    {
        Self::build(edges.into_iter().enumerate().map(|(i, e)| (i + 1, e)))
    }

    fn build<I>(edges: I) -> Result<Self, TopologyError>
    where
        I: IntoIterator<Item = (usize, Edge)>,
    {
        let mut seen: BTreeMap<(Asn, Asn), Edge> = BTreeMap::new();
        let mut checked = Vec::new();
        for (line, edge) in edges {
            if edge.a == edge.b {
                return Err(TopologyError::SelfLoop { line, asn: edge.a });
            }
            let pair = edge.unordered_pair();
            if let Some(prev) = seen.get(&pair) {
                let reversed_transit = prev.rel == Relationship::CustomerToProvider
                    && edge.rel == Relationship::CustomerToProvider
                    && prev.a == edge.b;
                if reversed_transit {
                    return Err(TopologyError::ProviderCycle(pair.0));
                }
                return Err(TopologyError::DuplicateEdge {
                    line,
                    a: pair.0,
                    b: pair.1,
                });
            }
            seen.insert(pair, edge);
            checked.push(edge);
        }

        let asns: Vec<Asn> = seen
            .keys()
            .flat_map(|&(a, b)| [a, b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: HashMap<Asn, usize> =
            asns.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let n = asns.len();
        let mut providers = vec![Vec::new(); n];
        let mut customers = vec![Vec::new(); n];
        let mut peers = vec![Vec::new(); n];
        for edge in &checked {
            let a = index[&edge.a];
            let b = index[&edge.b];
            match edge.rel {
                Relationship::CustomerToProvider => {
                    providers[a].push(b);
                    customers[b].push(a);
                }
                Relationship::PeerToPeer => {
                    peers[a].push(b);
                    peers[b].push(a);
                }
            }
        }
        for list in providers
            .iter_mut()
            .chain(customers.iter_mut())
            .chain(peers.iter_mut())
        {
            list.sort_unstable();
        }

        let topo = Topology {
            asns,
            index,
            providers,
            customers,
            peers,
            ix_memberships: BTreeMap::new(),
        };
        topo.check_acyclic()?;
        Ok(topo)
    }

    /// Kahn's algorithm over customer→provider edges.
    fn check_acyclic(&self) -> Result<(), TopologyError> {
        let n = self.asns.len();
        let mut pending: Vec<usize> = self.customers.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| pending[i] == 0).collect();
        let mut done = 0;
        while let Some(i) = queue.pop_front() {
            done += 1;
            for &p in &self.providers[i] {
                pending[p] -= 1;
                if pending[p] == 0 {
                    queue.push_back(p);
                }
            }
        }
        if done == n {
            Ok(())
        } else {
            let culprit = (0..n).find(|&i| pending[i] > 0).unwrap();
            Err(TopologyError::ProviderCycle(self.asns[culprit]))
        }
    }

    /// Parses the pipe-separated AS-relationship format.
    ///
    /// Lines starting with `#` and blank lines are skipped. A data line is
    /// `A|B|-1` (A is the provider of B) or `A|B|0` (A and B peer). A
    /// trailing fourth field, as in the serial-2 files, is ignored.
    pub fn load<R: Read>(source: R) -> Result<Self, TopologyError> {
        let mut edges = Vec::new();
        for (i, line) in BufReader::new(source).lines().enumerate() {
            let line_no = i + 1;
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let malformed = |reason: String| TopologyError::Malformed {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('|').collect();
            if fields.len() != 3 && fields.len() != 4 {
                return Err(malformed(format!("expected 3 fields, got {}", fields.len())));
            }
            let a: Asn = fields[0].parse().map_err(|e: AsnError| malformed(e.to_string()))?;
            let b: Asn = fields[1].parse().map_err(|e: AsnError| malformed(e.to_string()))?;
            let edge = match fields[2].trim() {
                "-1" => Edge::c2p(b, a),
                "0" => Edge::p2p(a, b),
                other => return Err(malformed(format!("unknown relationship code {other:?}"))),
            };
            edges.push((line_no, edge));
        }
        Self::build(edges)
    }

    /// Serializes back to the relationship format. Output is sorted, so
    /// equal topologies serialize identically.
    pub fn to_relationship_text(&self) -> String {
        let mut out = String::new();
        for edge in self.edges() {
            match edge.rel {
                Relationship::CustomerToProvider => {
                    out.push_str(&format!("{}|{}|-1\n", edge.b, edge.a))
                }
                Relationship::PeerToPeer => out.push_str(&format!("{}|{}|0\n", edge.a, edge.b)),
            }
        }
        out
    }

    /// Attaches IX memberships. ASNs absent from the graph are dropped with
    /// a warning, since they have no routing presence.
    pub fn with_ix_memberships(mut self, memberships: BTreeMap<String, BTreeSet<Asn>>) -> Self {
        let mut kept = BTreeMap::new();
        for (ix, members) in memberships {
            let (known, unknown): (BTreeSet<Asn>, BTreeSet<Asn>) =
                members.into_iter().partition(|a| self.contains(*a));
            if !unknown.is_empty() {
                warn!("IX {ix}: ignoring {} ASNs not in the topology", unknown.len());
            }
            kept.insert(ix, known);
        }
        self.ix_memberships = kept;
        self
    }

    pub fn ix_memberships(&self) -> &BTreeMap<String, BTreeSet<Asn>> {
        &self.ix_memberships
    }

    /// All edges, canonical orientation, sorted.
    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for (i, provs) in self.providers.iter().enumerate() {
            for &p in provs {
                edges.push(Edge::c2p(self.asns[i], self.asns[p]));
            }
        }
        for (i, peers) in self.peers.iter().enumerate() {
            for &p in peers.iter().filter(|&&p| p > i) {
                edges.push(Edge::p2p(self.asns[i], self.asns[p]));
            }
        }
        edges.sort();
        edges
    }

    pub fn asns(&self) -> &[Asn] {
        &self.asns
    }

    pub fn len(&self) -> usize {
        self.asns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asns.is_empty()
    }

    pub fn contains(&self, asn: Asn) -> bool {
        self.index.contains_key(&asn)
    }

    pub fn providers(&self, asn: Asn) -> impl Iterator<Item = Asn> + '_ {
        self.list_of(&self.providers, asn)
    }

    pub fn customers(&self, asn: Asn) -> impl Iterator<Item = Asn> + '_ {
        self.list_of(&self.customers, asn)
    }

    pub fn peers(&self, asn: Asn) -> impl Iterator<Item = Asn> + '_ {
        self.list_of(&self.peers, asn)
    }

    /// All neighbors of `asn` with their relation to it, ascending by ASN.
    pub fn neighbors(&self, asn: Asn) -> Vec<(Asn, Relation)> {
        match self.idx(asn) {
            Some(i) => self
                .neighbors_idx(i)
                .map(|(j, rel)| (self.asns[j], rel))
                .collect(),
            None => Vec::new(),
        }
    }

    /// What `neighbor` is to `asn`, if they are adjacent.
    pub fn relation(&self, asn: Asn, neighbor: Asn) -> Option<Relation> {
        let i = self.idx(asn)?;
        let j = self.idx(neighbor)?;
        self.relation_idx(i, j)
    }

    fn list_of<'a>(&'a self, lists: &'a [Vec<usize>], asn: Asn) -> impl Iterator<Item = Asn> + 'a {
        let slice: &[usize] = match self.idx(asn) {
            Some(i) => &lists[i],
            None => &[],
        };
        slice.iter().map(move |&j| self.asns[j])
    }

    /// ASes reachable from `asn` by repeatedly descending provider→customer
    /// edges, excluding `asn` itself.
    pub fn customer_cone(&self, asn: Asn) -> Result<BTreeSet<Asn>, TopologyError> {
        let i = self.idx(asn).ok_or(TopologyError::UnknownAsn(asn))?;
        let mut seen = vec![false; self.len()];
        seen[i] = true;
        let mut stack = vec![i];
        let mut cone = BTreeSet::new();
        while let Some(x) = stack.pop() {
            for &c in &self.customers[x] {
                if !seen[c] {
                    seen[c] = true;
                    cone.insert(self.asns[c]);
                    stack.push(c);
                }
            }
        }
        Ok(cone)
    }

    /// Customer cone size of every AS, indexed like [`Topology::asns`].
    pub fn cone_sizes(&self) -> Vec<usize> {
        let n = self.len();
        let mut stamp = vec![usize::MAX; n];
        let mut stack = Vec::new();
        let mut sizes = vec![0; n];
        for root in 0..n {
            stamp[root] = root;
            stack.push(root);
            let mut size = 0;
            while let Some(x) = stack.pop() {
                for &c in &self.customers[x] {
                    if stamp[c] != root {
                        stamp[c] = root;
                        size += 1;
                        stack.push(c);
                    }
                }
            }
            sizes[root] = size;
        }
        sizes
    }

    /// Provider-free ASes. Missing peering edges between them are reported
    /// in the result and logged, but are not an error.
    pub fn tier1_clique(&self) -> Tier1Clique {
        let tops: Vec<usize> = (0..self.len())
            .filter(|&i| self.providers[i].is_empty())
            .collect();
        let mut unmeshed_pairs = Vec::new();
        for (k, &a) in tops.iter().enumerate() {
            for &b in &tops[k + 1..] {
                if self.peers[a].binary_search(&b).is_err() {
                    unmeshed_pairs.push((self.asns[a], self.asns[b]));
                }
            }
        }
        if !unmeshed_pairs.is_empty() {
            warn!(
                "{} pairs of provider-free ASes are not peered (e.g. AS{} and AS{})",
                unmeshed_pairs.len(),
                unmeshed_pairs[0].0,
                unmeshed_pairs[0].1
            );
        }
        Tier1Clique {
            members: tops.iter().map(|&i| self.asns[i]).collect(),
            unmeshed_pairs,
        }
    }

    /// Adds a peering edge between every pair of ASes co-located at an IX
    /// that is not already connected. Existing edges, in particular transit
    /// edges, are left untouched.
    pub fn augment_with_ix_peering(&self) -> Topology {
        let mut out = self.clone();
        let mut added = 0usize;
        for members in self.ix_memberships.values() {
            let idx: Vec<usize> = members.iter().filter_map(|&a| self.idx(a)).collect();
            for (k, &a) in idx.iter().enumerate() {
                for &b in &idx[k + 1..] {
                    if out.relation_idx(a, b).is_none() {
                        out.peers[a].push(b);
                        out.peers[b].push(a);
                        added += 1;
                    }
                }
            }
        }
        if added > 0 {
            for list in &mut out.peers {
                list.sort_unstable();
                list.dedup();
            }
        }
        out
    }

    //--- Index-level access for the engine and the analyses.

    pub(crate) fn idx(&self, asn: Asn) -> Option<usize> {
        self.index.get(&asn).copied()
    }

    pub(crate) fn asn_at(&self, i: usize) -> Asn {
        self.asns[i]
    }

    pub(crate) fn providers_idx(&self, i: usize) -> &[usize] {
        &self.providers[i]
    }

    pub(crate) fn customers_idx(&self, i: usize) -> &[usize] {
        &self.customers[i]
    }

    pub(crate) fn peers_idx(&self, i: usize) -> &[usize] {
        &self.peers[i]
    }

    pub(crate) fn neighbors_idx(&self, i: usize) -> impl Iterator<Item = (usize, Relation)> + '_ {
        self.customers[i]
            .iter()
            .map(|&j| (j, Relation::Customer))
            .chain(self.peers[i].iter().map(|&j| (j, Relation::Peer)))
            .chain(self.providers[i].iter().map(|&j| (j, Relation::Provider)))
    }

    pub(crate) fn relation_idx(&self, i: usize, j: usize) -> Option<Relation> {
        if self.customers[i].binary_search(&j).is_ok() {
            Some(Relation::Customer)
        } else if self.peers[i].binary_search(&j).is_ok() {
            Some(Relation::Peer)
        } else if self.providers[i].binary_search(&j).is_ok() {
            Some(Relation::Provider)
        } else {
            None
        }
    }
}

/// Parses an IX membership file: `<ix-id>|<asn>` per line, `#` comments.
pub fn load_ix_memberships<R: Read>(
    source: R,
) -> Result<BTreeMap<String, BTreeSet<Asn>>, TopologyError> {
    let mut out: BTreeMap<String, BTreeSet<Asn>> = BTreeMap::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (ix, asn) = line.split_once('|').ok_or_else(|| TopologyError::Malformed {
            line: i + 1,
            reason: "expected <ix-id>|<asn>".into(),
        })?;
        let asn: Asn = asn.parse().map_err(|e: AsnError| TopologyError::Malformed {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.entry(ix.trim().to_string()).or_default().insert(asn);
    }
    Ok(out)
}
