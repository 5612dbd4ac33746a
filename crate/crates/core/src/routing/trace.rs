use std::collections::BTreeSet;
use std::net::IpAddr;

use serde::Serialize;

use super::{LearnedRel, Rib};
use crate::topology::Asn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TraceEnd {
    /// Reached an AS holding its own route for the address.
    Delivered,
    NoRoute,
    Loop,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Trace {
    /// ASes visited, starting at the source. For `Delivered` the last hop is
    /// the AS that terminated the packet; for `Loop` the repeated AS is not
    /// appended a second time.
    pub hops: Vec<Asn>,
    pub end: TraceEnd,
}

impl Trace {
    /// The delivering AS, if the trace was delivered.
    pub fn terminal(&self) -> Option<Asn> {
        match self.end {
            TraceEnd::Delivered => self.hops.last().copied(),
            _ => None,
        }
    }
}

/// Follows longest-prefix-match best routes hop by hop from `src`.
pub fn data_plane_trace(rib: &Rib, src: Asn, dst: IpAddr) -> Trace {
    let mut hops = vec![src];
    let mut seen = BTreeSet::from([src]);
    let mut at = src;
    loop {
        let Some(route) = rib.lookup(at, dst) else {
            return Trace {
                hops,
                end: TraceEnd::NoRoute,
            };
        };
        let next = match (route.learned_rel, route.learned_from) {
            (LearnedRel::Origin, _) | (_, None) => {
                return Trace {
                    hops,
                    end: TraceEnd::Delivered,
                }
            }
            (_, Some(next)) => next,
        };
        if !seen.insert(next) {
            return Trace {
                hops,
                end: TraceEnd::Loop,
            };
        }
        hops.push(next);
        at = next;
    }
}
