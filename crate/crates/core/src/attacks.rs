//! Hijack and leak scenarios and their harm.
//!
//! A scenario adds one misbehaving AS to an otherwise legitimate set of
//! originations. After propagation with the zone hooks, every AS traces
//! toward the lowest address of the attacked prefix; ASes whose traffic is
//! drawn to the attacker count as misdirected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::prefix::Prefix;
use crate::registry::RegistrySet;
use crate::routing::{
    data_plane_trace, propagate, Announcement, LearnedRel, PolicyHooks, PreferenceOrder, Rib,
    Route, RoutingError, TraceEnd,
};
use crate::topology::{Asn, Relation, Topology};
use crate::vipzone::{VipzoneHooks, ZoneConfig, VERIFIED_TAG};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    OriginHijack,
    ForgedOriginPathHijack,
    SubPrefixHijack,
    RouteLeak,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::OriginHijack => "origin_hijack",
            AttackKind::ForgedOriginPathHijack => "forged_origin_path_hijack",
            AttackKind::SubPrefixHijack => "sub_prefix_hijack",
            AttackKind::RouteLeak => "route_leak",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "origin_hijack" => Ok(AttackKind::OriginHijack),
            "forged_origin_path_hijack" | "forged_origin" => Ok(AttackKind::ForgedOriginPathHijack),
            "sub_prefix_hijack" | "sub_prefix" => Ok(AttackKind::SubPrefixHijack),
            "route_leak" => Ok(AttackKind::RouteLeak),
            other => Err(format!("unknown attack kind {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AttackScenario {
    pub kind: AttackKind,
    /// The hijacker, or the leaking AS for route leaks.
    pub attacker: Asn,
    /// The attacked prefix. For sub-prefix hijacks this is the more
    /// specific the attacker announces.
    pub victim_prefix: Prefix,
    pub victim_origin: Asn,
    /// Path claimed behind the attacker, ending at the victim origin.
    pub forged_path: Option<Vec<Asn>>,
    /// The provider whose route the leaker passes on.
    pub leaked_from: Option<Asn>,
    /// Whether injected routes claim VERIFIED. Defaults to true: attackers
    /// lie whenever lying is free.
    pub tag_verified: bool,
    /// ASes whose selection counts toward owner harm; `None` means all.
    pub watch: Option<BTreeSet<Asn>>,
}

impl AttackScenario {
    pub fn new(kind: AttackKind, attacker: Asn, victim_prefix: Prefix, victim_origin: Asn) -> Self {
        AttackScenario {
            kind,
            attacker,
            victim_prefix,
            victim_origin,
            forged_path: match kind {
                AttackKind::ForgedOriginPathHijack => Some(vec![victim_origin]),
                _ => None,
            },
            leaked_from: None,
            tag_verified: true,
            watch: None,
        }
    }

    /// Parses `key=value` lines: `kind`, `attacker`, `victim_prefix`,
    /// `victim_origin`, and optionally `forged_path` (ASNs separated by
    /// spaces or `;`), `leaked_from`, `tag_verified` and `watch`.
    pub fn parse<R: Read>(source: R) -> Result<Self, AttackError> {
        let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (n, line) in BufReader::new(source).lines().enumerate() {
            let line = line.map_err(|e| AttackError::Malformed { line: n + 1, reason: e.to_string() })?;
            let text = line.trim();
            if text.is_empty() || text.starts_with('#') {
                continue;
            }
            let (k, v) = text.split_once('=').ok_or_else(|| AttackError::Malformed {
                line: n + 1,
                reason: "expected key=value".into(),
            })?;
            fields.insert(k.trim().to_string(), (n + 1, v.trim().to_string()));
        }
        fn get<T: FromStr>(
            fields: &BTreeMap<String, (usize, String)>,
            key: &str,
        ) -> Result<Option<T>, AttackError>
        where
            T::Err: fmt::Display,
        {
            match fields.get(key) {
                None => Ok(None),
                Some((line, v)) => v.parse().map(Some).map_err(|e: T::Err| AttackError::Malformed {
                    line: *line,
                    reason: format!("{key}: {e}"),
                }),
            }
        }
        fn asn_list(
            fields: &BTreeMap<String, (usize, String)>,
            key: &str,
        ) -> Result<Option<Vec<Asn>>, AttackError> {
            match fields.get(key) {
                None => Ok(None),
                Some((line, v)) => v
                    .split(|c: char| c == ';' || c.is_whitespace())
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Asn>())
                    .collect::<Result<Vec<_>, _>>()
                    .map(Some)
                    .map_err(|e| AttackError::Malformed {
                        line: *line,
                        reason: format!("{key}: {e}"),
                    }),
            }
        }
        let missing = |key: &str| AttackError::Malformed {
            line: 0,
            reason: format!("missing {key}"),
        };
        if let Some(key) = fields.keys().find(|k| {
            !matches!(
                k.as_str(),
                "kind" | "attacker" | "victim_prefix" | "victim_origin" | "forged_path"
                    | "leaked_from" | "tag_verified" | "watch"
            )
        }) {
            return Err(AttackError::Malformed {
                line: fields[key].0,
                reason: format!("unknown key {key:?}"),
            });
        }
        let kind: AttackKind = get(&fields, "kind")?.ok_or_else(|| missing("kind"))?;
        let attacker = get(&fields, "attacker")?.ok_or_else(|| missing("attacker"))?;
        let victim_prefix = get(&fields, "victim_prefix")?.ok_or_else(|| missing("victim_prefix"))?;
        let victim_origin = get(&fields, "victim_origin")?.ok_or_else(|| missing("victim_origin"))?;
        let mut s = AttackScenario::new(kind, attacker, victim_prefix, victim_origin);
        if let Some(path) = asn_list(&fields, "forged_path")? {
            s.forged_path = Some(path);
        }
        s.leaked_from = get(&fields, "leaked_from")?;
        if let Some(t) = get::<bool>(&fields, "tag_verified")? {
            s.tag_verified = t;
        }
        s.watch = asn_list(&fields, "watch")?.map(|v| v.into_iter().collect());
        Ok(s)
    }

    /// The path the attacker announces, for injection kinds.
    fn injected_path(&self) -> Vec<Asn> {
        match (&self.kind, &self.forged_path) {
            (AttackKind::ForgedOriginPathHijack, Some(p)) => {
                let mut path = vec![self.attacker];
                path.extend(p.iter().copied().skip_while(|&a| a == self.attacker));
                path
            }
            _ => vec![self.attacker],
        }
    }

    /// Whether a route held by `holder` carries the attack.
    fn taints(&self, holder: Asn, route: &Route, topo: &Topology) -> bool {
        match self.kind {
            AttackKind::RouteLeak => {
                let leaked_from = self.leaked_from.expect("validated");
                let full: Vec<Asn> = std::iter::once(holder).chain(route.as_path.iter().copied()).collect();
                full.windows(3).any(|w| {
                    w[1] == self.attacker
                        && w[2] == leaked_from
                        && w[0] != leaked_from
                        && topo.relation(self.attacker, w[0]) == Some(Relation::Provider)
                })
            }
            _ => route.as_path.contains(&self.attacker),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AttackError {
    #[error("invalid scenario: {0}")]
    InvalidShape(String),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Routing(#[from] RoutingError),
}

//------------ Harm ----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BestRow {
    pub asn: Asn,
    pub prefix: Prefix,
    pub as_path: Vec<Asn>,
    pub verified: bool,
    pub learned_rel: LearnedRel,
    pub attacked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct HarmReport {
    pub attacker: Asn,
    /// Some watched AS other than the attacker selected the attack route.
    pub owner_harm: bool,
    /// ASes, other than the attacker, whose traffic toward the attacked
    /// address is drawn to the attacker.
    pub misdirected: BTreeSet<Asn>,
    /// Best route for the attacked prefix at every AS holding one.
    pub per_as_best: Vec<BestRow>,
}

/// Hooks that let one AS pass a provider-learned route to its other
/// providers.
struct LeakHooks<H> {
    inner: H,
    leaker: Asn,
    leaked_from: Asn,
    prefix: Prefix,
}

impl<H: PolicyHooks> PolicyHooks for LeakHooks<H> {
    fn originate(&self, at: Asn, route: Route) -> Option<Route> {
        self.inner.originate(at, route)
    }

    fn import(&self, at: Asn, from: Asn, rel: Relation, route: Route) -> Option<Route> {
        self.inner.import(at, from, rel, route)
    }

    fn preference(&self, at: Asn) -> PreferenceOrder {
        self.inner.preference(at)
    }

    fn export(&self, at: Asn, to: Asn, rel: Relation, route: &Route, permitted: bool) -> Option<Route> {
        let leak = at == self.leaker
            && route.prefix == self.prefix
            && route.learned_from == Some(self.leaked_from)
            && rel == Relation::Provider
            && to != self.leaked_from;
        self.inner.export(at, to, rel, route, permitted || leak)
    }
}

fn validate(
    topo: &Topology,
    originations: &[Announcement],
    s: &AttackScenario,
) -> Result<(), AttackError> {
    let bad = |m: String| Err(AttackError::InvalidShape(m));
    if !topo.contains(s.attacker) {
        return bad(format!("attacker AS{} is not in the topology", s.attacker));
    }
    if s.attacker == s.victim_origin {
        return bad("attacker and victim origin are the same AS".into());
    }
    match s.kind {
        AttackKind::OriginHijack => {}
        AttackKind::ForgedOriginPathHijack => {
            let Some(path) = &s.forged_path else {
                return bad("forged_path is required".into());
            };
            if path.last() != Some(&s.victim_origin) {
                return bad("forged_path must end with the victim origin".into());
            }
            if path.iter().skip(1).any(|&a| a == s.attacker) {
                return bad("attacker appears inside forged_path".into());
            }
        }
        AttackKind::SubPrefixHijack => {
            let covered = originations.iter().any(|a| {
                a.prefix.covers(&s.victim_prefix) && a.prefix != s.victim_prefix && !a.injected
            });
            if !covered {
                return bad(format!(
                    "{} is not strictly inside a legitimately originated prefix",
                    s.victim_prefix
                ));
            }
        }
        AttackKind::RouteLeak => {
            let Some(from) = s.leaked_from else {
                return bad("leaked_from is required".into());
            };
            if topo.relation(s.attacker, from) != Some(Relation::Provider) {
                return bad(format!("AS{from} is not a provider of AS{}", s.attacker));
            }
        }
    }
    Ok(())
}

/// Announcements for one run: the legitimate ones plus the attacker's.
fn announcements(originations: &[Announcement], s: &AttackScenario) -> Vec<Announcement> {
    let mut anns: Vec<Announcement> = originations
        .iter()
        .filter(|a| !(a.speaker() == s.attacker && a.prefix == s.victim_prefix))
        .cloned()
        .collect();
    if s.kind != AttackKind::RouteLeak {
        let communities = if s.tag_verified {
            [VERIFIED_TAG].into()
        } else {
            BTreeSet::new()
        };
        anns.push(Announcement::inject(s.victim_prefix, s.injected_path(), communities));
    }
    anns
}

/// Propagates the scenario and returns the resulting RIB.
pub fn scenario_rib(
    topo: &Topology,
    reg: &RegistrySet,
    cfg: &ZoneConfig,
    originations: &[Announcement],
    scenario: &AttackScenario,
) -> Result<Rib, AttackError> {
    validate(topo, originations, scenario)?;
    let hooks = VipzoneHooks::new(cfg, reg);
    let anns = announcements(originations, scenario);
    let rib = match (scenario.kind, scenario.leaked_from) {
        (AttackKind::RouteLeak, Some(leaked_from)) => propagate(
            topo,
            &anns,
            &LeakHooks {
                inner: hooks,
                leaker: scenario.attacker,
                leaked_from,
                prefix: scenario.victim_prefix,
            },
        )?,
        _ => propagate(topo, &anns, &hooks)?,
    };
    Ok(rib)
}

/// Classifies the harm a scenario does once propagation has settled.
pub fn assess(topo: &Topology, rib: &Rib, scenario: &AttackScenario) -> HarmReport {
    let s = scenario;
    let dst = s.victim_prefix.network();
    let mut misdirected = BTreeSet::new();
    for &a in topo.asns() {
        if a == s.attacker {
            continue;
        }
        let t = data_plane_trace(rib, a, dst);
        if t.end != TraceEnd::Delivered {
            continue;
        }
        let hit = match s.kind {
            AttackKind::RouteLeak => {
                let leaked_from = s.leaked_from.expect("validated");
                t.hops.windows(2).any(|w| {
                    w[1] == s.attacker
                        && w[0] != leaked_from
                        && topo.relation(s.attacker, w[0]) == Some(Relation::Provider)
                })
            }
            _ => t.terminal() == Some(s.attacker),
        };
        if hit {
            misdirected.insert(a);
        }
    }
    let per_as_best: Vec<BestRow> = topo
        .asns()
        .iter()
        .filter_map(|&a| {
            rib.best(a, &s.victim_prefix).map(|r| BestRow {
                asn: a,
                prefix: r.prefix,
                as_path: r.as_path.clone(),
                verified: r.is_verified(),
                learned_rel: r.learned_rel,
                attacked: s.taints(a, r, topo),
            })
        })
        .collect();
    let owner_harm = per_as_best.iter().any(|row| {
        row.attacked
            && row.asn != s.attacker
            && s.watch.as_ref().is_none_or(|w| w.contains(&row.asn))
    });
    HarmReport {
        attacker: s.attacker,
        owner_harm,
        misdirected,
        per_as_best,
    }
}

pub fn run_scenario(
    topo: &Topology,
    reg: &RegistrySet,
    cfg: &ZoneConfig,
    originations: &[Announcement],
    scenario: &AttackScenario,
) -> Result<HarmReport, AttackError> {
    let rib = scenario_rib(topo, reg, cfg, originations, scenario)?;
    Ok(assess(topo, &rib, scenario))
}

//------------ Sweeps --------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepRow {
    pub attacker: Asn,
    pub owner_harm: bool,
    pub misdirected: BTreeSet<Asn>,
}

impl From<HarmReport> for SweepRow {
    fn from(r: HarmReport) -> Self {
        SweepRow {
            attacker: r.attacker,
            owner_harm: r.owner_harm,
            misdirected: r.misdirected,
        }
    }
}

/// Runs `template` once for every possible attacker position.
///
/// Positions are every AS except the victim origin. For route leaks the
/// leaked route is whatever the position learned from a provider in the
/// attack-free run; positions without such a route, or without a second
/// provider, are skipped.
pub fn sweep_attackers(
    topo: &Topology,
    reg: &RegistrySet,
    cfg: &ZoneConfig,
    originations: &[Announcement],
    template: &AttackScenario,
) -> Result<Vec<SweepRow>, AttackError> {
    let baseline = if template.kind == AttackKind::RouteLeak {
        Some(propagate(topo, originations, &VipzoneHooks::new(cfg, reg))?)
    } else {
        None
    };
    let scenarios: Vec<AttackScenario> = topo
        .asns()
        .iter()
        .copied()
        .filter(|&a| a != template.victim_origin)
        .filter_map(|a| {
            let mut s = template.clone();
            s.attacker = a;
            if s.forged_path.as_ref().is_some_and(|p| p.contains(&a)) {
                return None;
            }
            if let Some(base) = &baseline {
                let best = base.best(a, &s.victim_prefix)?;
                if best.learned_rel != LearnedRel::Provider || topo.providers(a).count() < 2 {
                    return None;
                }
                s.leaked_from = best.learned_from;
            }
            Some(s)
        })
        .collect();
    scenarios
        .par_iter()
        .map(|s| run_scenario(topo, reg, cfg, originations, s).map(SweepRow::from))
        .collect()
}

/// Writes `attacker,owner_harm,misdirected_count,misdirected_asns`.
pub fn write_harm_csv<W: Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "attacker,owner_harm,misdirected_count,misdirected_asns")?;
    for r in rows {
        let asns: Vec<String> = r.misdirected.iter().map(|a| a.to_string()).collect();
        writeln!(
            out,
            "{},{},{},{}",
            r.attacker,
            r.owner_harm,
            r.misdirected.len(),
            asns.join(";")
        )?;
    }
    Ok(())
}
