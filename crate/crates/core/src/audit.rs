//! Conformance checking from member route views.
//!
//! Each member exports its best routes as a view. The auditor looks for
//! three kinds of evidence: a VERIFIED route that had too many ASes before
//! it entered the zone (R1), an RPKI-invalid route inside the zone (R2),
//! and a VERIFIED tag that disappeared on a member-to-member hop (R3).
//!
//! The accountable member for R1 and R2 is where the route last entered
//! the zone: walking the observed path from the viewer toward the origin,
//! the last member before the first non-member.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{self, Read, Write};

use log::warn;
use serde::Serialize;

use crate::prefix::Prefix;
use crate::registry::{AspaVerdict, RegistrySet, RovState};
use crate::routing::{
    dump_rows, parse_dump, DumpError, DumpRow, LearnedRel, PolicyHooks, PreferenceOrder, Rib,
    Route,
};
use crate::topology::{Asn, Relation, Topology};
use crate::vipzone::{member_import, Action, Rule, VipzoneHooks, ZoneConfig, VERIFIED_TAG};

//------------ Views ---------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemberView {
    pub member: Asn,
    pub routes: Vec<Route>,
    pub snapshot_id: String,
}

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("view mixes routes of AS{0} and AS{1}")]
    MixedView(Asn, Asn),
    #[error("view names no member and holds no routes")]
    Anonymous,
    #[error("AS{0} is not a zone member")]
    NotMember(Asn),
    #[error("views come from different snapshots ({0:?} and {1:?})")]
    SnapshotMismatch(String, String),
    #[error("two views for AS{0}")]
    DuplicateView(Asn),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<DumpError> for AuditError {
    fn from(e: DumpError) -> Self {
        match e {
            DumpError::Malformed { line, reason } => AuditError::Malformed { line, reason },
            DumpError::Io(e) => AuditError::Io(e),
        }
    }
}

impl MemberView {
    /// Reads a view file: a RIB dump restricted to one AS, optionally
    /// preceded by `# member=<asn>` and `# snapshot=<id>` lines.
    pub fn parse<R: Read>(mut source: R) -> Result<Self, AuditError> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let mut member: Option<Asn> = None;
        let mut snapshot_id = String::new();
        for (n, line) in text.lines().enumerate() {
            let Some(comment) = line.trim().strip_prefix('#') else {
                continue;
            };
            match comment.trim().split_once('=') {
                Some(("snapshot", v)) => snapshot_id = v.trim().to_string(),
                Some(("member", v)) => {
                    member = Some(v.trim().parse().map_err(|e| AuditError::Malformed {
                        line: n + 1,
                        reason: format!("{e}"),
                    })?)
                }
                _ => {}
            }
        }
        let rows = parse_dump(text.as_bytes())?;
        let member = match (member, rows.first()) {
            (Some(m), _) => m,
            (None, Some(r)) => r.asn,
            (None, None) => return Err(AuditError::Anonymous),
        };
        if let Some(r) = rows.iter().find(|r| r.asn != member) {
            return Err(AuditError::MixedView(member, r.asn));
        }
        Ok(MemberView {
            member,
            routes: rows.into_iter().map(|r| r.route).collect(),
            snapshot_id,
        })
    }

    pub fn write<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# member={}", self.member)?;
        writeln!(out, "# snapshot={}", self.snapshot_id)?;
        for route in &self.routes {
            let row = DumpRow {
                asn: self.member,
                route: route.clone(),
            };
            writeln!(out, "{}", row.to_line())?;
        }
        Ok(())
    }
}

/// The view every member would export from `rib`.
pub fn member_views(rib: &Rib, cfg: &ZoneConfig, snapshot_id: &str) -> Vec<MemberView> {
    let mut by_member: BTreeMap<Asn, Vec<Route>> =
        cfg.members().iter().map(|&m| (m, Vec::new())).collect();
    for row in dump_rows(rib) {
        if let Some(routes) = by_member.get_mut(&row.asn) {
            routes.push(row.route);
        }
    }
    by_member
        .into_iter()
        .map(|(member, routes)| MemberView {
            member,
            routes,
            snapshot_id: snapshot_id.to_string(),
        })
        .collect()
}

//------------ Findings ------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum AuditRule {
    #[serde(rename = "R1-FalseVerified")]
    R1FalseVerified,
    #[serde(rename = "R2-InvalidOrigin")]
    R2InvalidOrigin,
    #[serde(rename = "R3-TagStripped")]
    R3TagStripped,
}

impl fmt::Display for AuditRule {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(match self {
            AuditRule::R1FalseVerified => "R1-FalseVerified",
            AuditRule::R2InvalidOrigin => "R2-InvalidOrigin",
            AuditRule::R3TagStripped => "R3-TagStripped",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditFinding {
    pub rule: AuditRule,
    pub culprit: Asn,
    pub observed_at: Asn,
    /// The offending route as it appears in `observed_at`'s view.
    pub evidence: Route,
    pub waived: bool,
    pub note: String,
}

/// A member's declared intent to announce a non-conformant route.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Waiver {
    pub member: Asn,
    pub prefix: Prefix,
    pub note: String,
}

pub fn register_exception(
    cfg: &ZoneConfig,
    member: Asn,
    prefix: Prefix,
    note: &str,
) -> Result<Waiver, AuditError> {
    if !cfg.is_member(member) {
        return Err(AuditError::NotMember(member));
    }
    Ok(Waiver {
        member,
        prefix,
        note: note.to_string(),
    })
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub findings: Vec<AuditFinding>,
    /// Checks that could not be made for lack of a view.
    pub warnings: Vec<String>,
}

impl AuditReport {
    pub fn unwaived(&self) -> impl Iterator<Item = &AuditFinding> {
        self.findings.iter().filter(|f| !f.waived)
    }
}

/// The path as seen from the viewer, viewer first.
fn full_path(viewer: Asn, route: &Route) -> Vec<Asn> {
    if route.learned_rel == LearnedRel::Origin {
        route.as_path.clone()
    } else {
        std::iter::once(viewer).chain(route.as_path.iter().copied()).collect()
    }
}

fn dedup_consecutive(path: &[Asn]) -> Vec<Asn> {
    let mut out: Vec<Asn> = path.to_vec();
    out.dedup();
    out
}

/// Index in `full` of the member through which the route last entered the
/// zone.
fn entry_index(cfg: &ZoneConfig, full: &[Asn]) -> usize {
    full.iter()
        .position(|a| !cfg.is_member(*a))
        .map_or(full.len() - 1, |i| i - 1)
}

type Hits = BTreeMap<(AuditRule, Asn, Prefix, Vec<Asn>), BTreeMap<Asn, Route>>;

pub fn audit_views(
    cfg: &ZoneConfig,
    topo: &Topology,
    reg: &RegistrySet,
    views: &[MemberView],
    waivers: &[Waiver],
) -> Result<AuditReport, AuditError> {
    let mut by_member: BTreeMap<Asn, &MemberView> = BTreeMap::new();
    for v in views {
        if !cfg.is_member(v.member) {
            return Err(AuditError::NotMember(v.member));
        }
        if by_member.insert(v.member, v).is_some() {
            return Err(AuditError::DuplicateView(v.member));
        }
    }
    if let Some(first) = views.first() {
        if let Some(other) = views.iter().find(|v| v.snapshot_id != first.snapshot_id) {
            return Err(AuditError::SnapshotMismatch(
                first.snapshot_id.clone(),
                other.snapshot_id.clone(),
            ));
        }
    }
    let best: BTreeMap<(Asn, Prefix), &Route> = views
        .iter()
        .flat_map(|v| v.routes.iter().map(move |r| ((v.member, r.prefix), r)))
        .collect();

    // (rule, culprit, prefix, path from culprit) -> viewers and evidence
    let mut hits: Hits = BTreeMap::new();
    let mut warnings = Vec::new();

    for v in views {
        for r in &v.routes {
            let full = full_path(v.member, r);
            let e = entry_index(cfg, &full);
            let from_entry = full[e..].to_vec();
            let pre = dedup_consecutive(&full[e + 1..]);
            let pre_unique: BTreeSet<Asn> = pre.iter().copied().collect();

            if r.is_verified() {
                let allowed = if cfg.aspa_extension
                    && pre_unique.len() == 2
                    && pre.len() == 2
                    && matches!(
                        topo.relation(full[e], pre[0]),
                        Some(Relation::Customer | Relation::Peer)
                    )
                    && reg.aspa_pair_valid(pre[1], pre[0]) == AspaVerdict::Confirmed
                {
                    2
                } else {
                    1
                };
                if pre_unique.len() > allowed {
                    hits.entry((AuditRule::R1FalseVerified, full[e], r.prefix, from_entry.clone()))
                        .or_default()
                        .insert(v.member, r.clone());
                }
            }

            if reg.rov_validate(&r.prefix, r.origin()) == RovState::Invalid {
                hits.entry((AuditRule::R2InvalidOrigin, full[e], r.prefix, from_entry.clone()))
                    .or_default()
                    .insert(v.member, r.clone());
            }

            if r.is_verified() || r.learned_rel == LearnedRel::Origin {
                continue;
            }
            let upstream = r.as_path[0];
            if !cfg.is_member(upstream) {
                continue;
            }
            if topo.relation(v.member, upstream).is_none() {
                warnings.push(format!(
                    "AS{}: route for {} names non-adjacent AS{upstream}",
                    v.member, r.prefix
                ));
                continue;
            }
            let Some(up_view) = by_member.get(&upstream) else {
                warnings.push(format!(
                    "AS{}: no view from member AS{upstream} to check {}",
                    v.member, r.prefix
                ));
                continue;
            };
            let Some(up_route) = best.get(&(up_view.member, r.prefix)) else {
                continue;
            };
            if up_route.is_verified() && full_path(upstream, up_route) == r.as_path {
                hits.entry((AuditRule::R3TagStripped, v.member, r.prefix, full.clone()))
                    .or_default()
                    .insert(v.member, r.clone());
            }
        }
    }

    let mut findings: Vec<AuditFinding> = hits
        .into_iter()
        .map(|((rule, culprit, prefix, _), seen)| {
            // Prefer a view other than the culprit's own.
            let (observed_at, evidence) = seen
                .iter()
                .find(|(a, _)| **a != culprit)
                .or_else(|| seen.iter().next())
                .map(|(a, r)| (*a, r.clone()))
                .expect("at least one viewer");
            let waiver = waivers
                .iter()
                .find(|w| w.member == culprit && w.prefix == prefix);
            AuditFinding {
                rule,
                culprit,
                observed_at,
                evidence,
                waived: waiver.is_some(),
                note: waiver.map(|w| w.note.clone()).unwrap_or_default(),
            }
        })
        .collect();
    findings.sort_by(|a, b| {
        (a.rule, a.culprit, a.evidence.prefix, &a.evidence.as_path, a.observed_at).cmp(&(
            b.rule,
            b.culprit,
            b.evidence.prefix,
            &b.evidence.as_path,
            b.observed_at,
        ))
    });
    warnings.sort();
    warnings.dedup();
    for w in &warnings {
        warn!("{w}");
    }
    Ok(AuditReport { findings, warnings })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes `rule,culprit,observed_at,prefix,as_path,waived,note`.
pub fn write_findings_csv<W: Write>(findings: &[AuditFinding], mut out: W) -> io::Result<()> {
    writeln!(out, "rule,culprit,observed_at,prefix,as_path,waived,note")?;
    for f in findings {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            f.rule,
            f.culprit,
            f.observed_at,
            f.evidence.prefix,
            f.evidence.path_string(),
            f.waived,
            csv_field(&f.note)
        )?;
    }
    Ok(())
}

/// Reads a waiver CSV: `member_asn,prefix,note`.
pub fn load_waivers<R: Read>(cfg: &ZoneConfig, source: R) -> Result<Vec<Waiver>, AuditError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source);
    let mut out = Vec::new();
    for (n, rec) in reader.records().enumerate() {
        let line = n + 2;
        let rec = rec.map_err(|e| AuditError::Malformed {
            line,
            reason: e.to_string(),
        })?;
        let bad = |reason: String| AuditError::Malformed { line, reason };
        let member: Asn = rec.get(0).unwrap_or("").parse().map_err(|e| bad(format!("{e}")))?;
        let prefix: Prefix = rec.get(1).unwrap_or("").parse().map_err(|e| bad(format!("{e}")))?;
        out.push(register_exception(cfg, member, prefix, rec.get(2).unwrap_or(""))?);
    }
    Ok(out)
}

//------------ Fault injection -----------------------------------------------

/// A deliberate violation of one rule by one member, for one prefix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Fault {
    pub rule: AuditRule,
    pub member: Asn,
    pub prefix: Prefix,
}

/// Zone hooks with one member misbehaving:
///
/// * R1: tags routes from non-members that the rules leave unverified.
/// * R2: skips origin validation.
/// * R3: strips the tag from routes learned from members.
pub struct FaultyHooks<'a> {
    inner: VipzoneHooks<'a>,
    no_roas: RegistrySet,
    fault: Fault,
}

impl<'a> FaultyHooks<'a> {
    pub fn new(cfg: &'a ZoneConfig, reg: &'a RegistrySet, fault: Fault) -> Self {
        FaultyHooks {
            inner: VipzoneHooks::new(cfg, reg),
            no_roas: reg.without_roas(),
            fault,
        }
    }
}

impl PolicyHooks for FaultyHooks<'_> {
    fn originate(&self, at: Asn, route: Route) -> Option<Route> {
        self.inner.originate(at, route)
    }

    fn import(&self, at: Asn, from: Asn, rel: Relation, route: Route) -> Option<Route> {
        if at != self.fault.member || route.prefix != self.fault.prefix {
            return self.inner.import(at, from, rel, route);
        }
        let cfg = self.inner.cfg;
        let (outcome, imported) = member_import(cfg, self.inner.reg, at, from, rel, route.clone());
        match self.fault.rule {
            AuditRule::R1FalseVerified => imported.map(|mut r| {
                if !cfg.is_member(from) && r.unique_path_len() > 1 {
                    r.communities.insert(VERIFIED_TAG);
                }
                r
            }),
            AuditRule::R2InvalidOrigin => {
                if outcome.action == Action::Drop && outcome.reason == Rule::R2 {
                    member_import(cfg, &self.no_roas, at, from, rel, route).1
                } else {
                    imported
                }
            }
            AuditRule::R3TagStripped => imported.map(|mut r| {
                if cfg.is_member(from) {
                    r.communities.remove(&VERIFIED_TAG);
                }
                r
            }),
        }
    }

    fn preference(&self, at: Asn) -> PreferenceOrder {
        self.inner.preference(at)
    }

    fn export(&self, at: Asn, to: Asn, rel: Relation, route: &Route, permitted: bool) -> Option<Route> {
        self.inner.export(at, to, rel, route, permitted)
    }
}

/// Whether `fault` actually shaped the faulty member's selected route, so
/// that its view shows the violation.
pub fn fault_manifested(
    fault: &Fault,
    topo: &Topology,
    cfg: &ZoneConfig,
    reg: &RegistrySet,
    rib: &Rib,
) -> bool {
    let Some(best) = rib.best(fault.member, &fault.prefix) else {
        return false;
    };
    let Some(from) = best.learned_from else {
        return false;
    };
    match fault.rule {
        AuditRule::R1FalseVerified => {
            if !best.is_verified() || cfg.is_member(from) {
                return false;
            }
            let rel = topo.relation(fault.member, from).expect("adjacent");
            let (_, conformant) = member_import(cfg, reg, fault.member, from, rel, best.clone());
            !conformant.is_some_and(|r| r.is_verified())
        }
        AuditRule::R2InvalidOrigin => {
            reg.rov_validate(&best.prefix, best.origin()) == RovState::Invalid
        }
        AuditRule::R3TagStripped => {
            !best.is_verified()
                && cfg.is_member(from)
                && rib.best(from, &fault.prefix).is_some_and(|up| {
                    up.is_verified() && full_path(from, up) == best.as_path
                })
        }
    }
}
