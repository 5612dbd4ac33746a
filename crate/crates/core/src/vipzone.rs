//! Zone membership and the member-side import rules, packaged as policy
//! hooks for the routing engine.
//!
//! Import at a member runs a fixed sequence: strip VERIFIED from
//! non-member neighbors (R1), drop RPKI-invalid origins (R2), drop paths
//! whose first AS fails the neighbor's KYC list (R3), keep the tag on
//! routes from members (R4), verify single-AS announcements from customers
//! and peers (R5), optionally verify two-AS paths backed by an ASPA record,
//! and otherwise forward unverified (R6).

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader, Read};

use log::debug;
use serde::Serialize;

use crate::registry::{AspaVerdict, OriginVerdict, RegistrySet, RovState};
use crate::routing::{Community, PolicyHooks, PreferenceOrder, Route, VerifiedRank};
use crate::topology::{Asn, Relation, Topology};

/// The community members attach to perimeter-verified routes.
pub const VERIFIED_TAG: Community = Community::Verified;

//------------ ZoneConfig ----------------------------------------------------

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZoneConfig {
    members: BTreeSet<Asn>,
    pub aspa_extension: bool,
    /// Non-members that rank VERIFIED above relationship. They accept the
    /// tag only from member neighbors.
    pub honor_verified: BTreeSet<Asn>,
    /// Non-members that rank VERIFIED between relationship and path length.
    pub honor_verified_after_relationship: BTreeSet<Asn>,
}

#[derive(Debug, thiserror::Error)]
pub enum ZoneError {
    #[error("AS{0} is not in the topology")]
    UnknownAsn(Asn),
    #[error("members without a provider in the zone: {}", list(.0))]
    Disconnected(Vec<Asn>),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

fn list(asns: &[Asn]) -> String {
    asns.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(", ")
}

impl ZoneConfig {
    /// A configuration without any connectivity check. Use
    /// [`validate_zone`] for member sets taken from input.
    pub fn unchecked(members: BTreeSet<Asn>) -> Self {
        ZoneConfig {
            members,
            ..Default::default()
        }
    }

    pub fn members(&self) -> &BTreeSet<Asn> {
        &self.members
    }

    pub fn is_member(&self, asn: Asn) -> bool {
        self.members.contains(&asn)
    }

    pub fn with_aspa_extension(mut self, on: bool) -> Self {
        self.aspa_extension = on;
        self
    }

    fn honors_verified(&self, asn: Asn) -> bool {
        self.honor_verified.contains(&asn) || self.honor_verified_after_relationship.contains(&asn)
    }
}

/// Checks that every member is provider-free or has a member provider.
pub fn validate_zone(topo: &Topology, members: &BTreeSet<Asn>) -> Result<ZoneConfig, ZoneError> {
    if let Some(&unknown) = members.iter().find(|&&m| !topo.contains(m)) {
        return Err(ZoneError::UnknownAsn(unknown));
    }
    let disconnected: Vec<Asn> = members
        .iter()
        .copied()
        .filter(|&m| {
            let mut providers = topo.providers(m).peekable();
            providers.peek().is_some() && !providers.any(|p| members.contains(&p))
        })
        .collect();
    if disconnected.is_empty() {
        Ok(ZoneConfig::unchecked(members.clone()))
    } else {
        Err(ZoneError::Disconnected(disconnected))
    }
}

/// Contents of a zone file: members plus header options.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ZoneFile {
    pub members: BTreeSet<Asn>,
    pub aspa_extension: bool,
    pub honor_verified: BTreeSet<Asn>,
    pub honor_verified_after_relationship: BTreeSet<Asn>,
}

impl ZoneFile {
    /// Parses one ASN per line. `key=value` lines set options:
    /// `aspa_extension=true|false`, and `honor_verified=` /
    /// `honor_verified_after_relationship=` with `;`-separated ASNs.
    pub fn parse<R: Read>(source: R) -> Result<Self, ZoneError> {
        let mut out = ZoneFile::default();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let bad = |reason: String| ZoneError::Malformed { line: n + 1, reason };
            let parse_set = |v: &str| {
                v.split(';')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Asn>().map_err(|e| bad(e.to_string())))
                    .collect::<Result<BTreeSet<_>, _>>()
            };
            match text.split_once('=') {
                Some((key, value)) => match key.trim() {
                    "aspa_extension" => {
                        out.aspa_extension = match value.trim() {
                            "true" => true,
                            "false" => false,
                            v => return Err(bad(format!("expected true or false, got {v:?}"))),
                        }
                    }
                    "honor_verified" => out.honor_verified = parse_set(value)?,
                    "honor_verified_after_relationship" => {
                        out.honor_verified_after_relationship = parse_set(value)?
                    }
                    k => return Err(bad(format!("unknown key {k:?}"))),
                },
                None => {
                    out.members.insert(text.parse().map_err(|e: crate::topology::AsnError| {
                        bad(e.to_string())
                    })?);
                }
            }
        }
        Ok(out)
    }

    /// Validates membership against `topo` and builds the configuration.
    pub fn into_config(self, topo: &Topology) -> Result<ZoneConfig, ZoneError> {
        let mut cfg = validate_zone(topo, &self.members)?;
        cfg.aspa_extension = self.aspa_extension;
        cfg.honor_verified = self.honor_verified;
        cfg.honor_verified_after_relationship = self.honor_verified_after_relationship;
        Ok(cfg)
    }
}

//------------ Import rules --------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Action {
    Drop,
    ForwardVerified,
    ForwardUnverified,
}

/// The rule that decided an import.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Rule {
    R1,
    R2,
    R3,
    R4,
    R5,
    R6,
    AspaExt,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            Rule::R1 => "R1",
            Rule::R2 => "R2",
            Rule::R3 => "R3",
            Rule::R4 => "R4",
            Rule::R5 => "R5",
            Rule::R6 => "R6",
            Rule::AspaExt => "ASPA-EXT",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct VerificationOutcome {
    pub action: Action,
    pub reason: Rule,
    /// A VERIFIED tag arrived from a non-member and was removed.
    pub stripped: bool,
}

/// Applies the member import rules to `route`, received by `member` from
/// `neighbor`. `rel` is what the neighbor is to the member. Returns the
/// outcome and, unless dropped, the route to install.
pub fn member_import(
    cfg: &ZoneConfig,
    reg: &RegistrySet,
    member: Asn,
    neighbor: Asn,
    rel: Relation,
    mut route: Route,
) -> (VerificationOutcome, Option<Route>) {
    let neighbor_is_member = cfg.is_member(neighbor);
    let stripped = !neighbor_is_member && route.communities.remove(&VERIFIED_TAG);
    let done = |action, reason, route: Option<Route>| {
        (
            VerificationOutcome {
                action,
                reason,
                stripped,
            },
            route,
        )
    };

    // A stripped route that is not re-verified is attributed to R1.
    let unverified = if stripped { Rule::R1 } else { Rule::R6 };
    let origin = route.origin();
    if reg.rov_validate(&route.prefix, origin) == RovState::Invalid {
        if reg.irr_lists(origin, &route.prefix) {
            debug!(
                "AS{member}: {} from AS{origin} is in the IRR but RPKI-invalid",
                route.prefix
            );
        }
        return done(Action::Drop, Rule::R2, None);
    }
    if !reg.kyc_permits(member, neighbor, route.as_path[0]) {
        return done(Action::Drop, Rule::R3, None);
    }
    if neighbor_is_member && route.is_verified() {
        return done(Action::ForwardVerified, Rule::R4, Some(route));
    }

    let verifies_for = matches!(rel, Relation::Customer | Relation::Peer);
    let unique = route.unique_path_len();
    if verifies_for && unique == 1 {
        return match reg.verify_customer_origin(member, neighbor, &route.prefix, origin) {
            OriginVerdict::Verified => {
                route.communities.insert(VERIFIED_TAG);
                done(Action::ForwardVerified, Rule::R5, Some(route))
            }
            OriginVerdict::Rejected => done(Action::Drop, Rule::R5, None),
            OriginVerdict::Unknown => done(Action::ForwardUnverified, unverified, Some(route)),
        };
    }

    if cfg.aspa_extension && verifies_for && !neighbor_is_member && unique == 2 {
        let adjacent = route.as_path[0];
        let outside = route.as_path.iter().all(|a| !cfg.is_member(*a));
        if outside
            && adjacent != origin
            && reg.aspa_pair_valid(origin, adjacent) == AspaVerdict::Confirmed
        {
            route.communities.insert(VERIFIED_TAG);
            return done(Action::ForwardVerified, Rule::AspaExt, Some(route));
        }
    }

    done(Action::ForwardUnverified, unverified, Some(route))
}

/// Member export transform. The tag travels unchanged to every neighbor;
/// export scope is left to the engine.
pub fn member_export(_cfg: &ZoneConfig, _member: Asn, _to: Asn, route: &Route) -> Route {
    route.clone()
}

pub fn member_preference(cfg: &ZoneConfig, asn: Asn) -> PreferenceOrder {
    if cfg.is_member(asn) || cfg.honor_verified.contains(&asn) {
        PreferenceOrder::VERIFIED_FIRST
    } else if cfg.honor_verified_after_relationship.contains(&asn) {
        PreferenceOrder {
            verified: VerifiedRank::AfterRelationship,
        }
    } else {
        PreferenceOrder::GAO_REXFORD
    }
}

//------------ Hooks ---------------------------------------------------------

/// The zone rules as engine hooks.
///
/// Members also refuse to originate routes that are themselves
/// RPKI-invalid. Non-members that opted in to honoring VERIFIED discard the
/// tag on routes from non-member neighbors; all other non-members pass
/// routes through untouched.
#[derive(Clone, Copy, Debug)]
pub struct VipzoneHooks<'a> {
    pub cfg: &'a ZoneConfig,
    pub reg: &'a RegistrySet,
}

impl<'a> VipzoneHooks<'a> {
    pub fn new(cfg: &'a ZoneConfig, reg: &'a RegistrySet) -> Self {
        VipzoneHooks { cfg, reg }
    }
}

impl PolicyHooks for VipzoneHooks<'_> {
    fn originate(&self, at: Asn, route: Route) -> Option<Route> {
        if self.cfg.is_member(at) && self.reg.rov_validate(&route.prefix, at) == RovState::Invalid {
            debug!("AS{at}: not originating RPKI-invalid {}", route.prefix);
            return None;
        }
        Some(route)
    }

    fn import(&self, at: Asn, from: Asn, rel: Relation, mut route: Route) -> Option<Route> {
        if self.cfg.is_member(at) {
            member_import(self.cfg, self.reg, at, from, rel, route).1
        } else {
            if self.cfg.honors_verified(at) && !self.cfg.is_member(from) {
                route.communities.remove(&VERIFIED_TAG);
            }
            Some(route)
        }
    }

    fn preference(&self, at: Asn) -> PreferenceOrder {
        member_preference(self.cfg, at)
    }

    fn export(&self, at: Asn, to: Asn, _rel: Relation, route: &Route, permitted: bool) -> Option<Route> {
        if !permitted {
            return None;
        }
        Some(if self.cfg.is_member(at) {
            member_export(self.cfg, at, to, route)
        } else {
            route.clone()
        })
    }
}
