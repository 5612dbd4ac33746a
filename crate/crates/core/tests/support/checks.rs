//! Per-seed property checks. Each returns `Err` with a description of the
//! first counterexample found.

use std::collections::{BTreeMap, BTreeSet};
use std::net::IpAddr;

use rand::seq::SliceRandom;
use rand::Rng;

use vipzone_core::analysis::{
    derive_connected_zone, growth_sequence, local_region_filtered, protected_count,
    zone_growth_curve, GrowthOrder, PeerFilters,
};
use vipzone_core::attacks::{sweep_attackers, AttackKind, AttackScenario};
use vipzone_core::audit::{audit_views, fault_manifested, member_views, AuditRule, Fault, FaultyHooks};
use vipzone_core::registry::{AspaVerdict, Roa};
use vipzone_core::routing::{propagate, Announcement, Community, GaoRexford, RoutingError};
use vipzone_core::synth::{random_topology, SynthParams};
use vipzone_core::vipzone::VipzoneHooks;
use vipzone_core::{Asn, Prefix, Route, Topology, ZoneConfig};

use super::*;

pub enum Compared {
    Agreed,
    /// The engine hit its round cap; there is nothing to compare.
    NonConvergent,
}

fn compare<H: PolicyHooks>(case: &Case, hooks: &H, label: &str) -> Result<Compared, String> {
    let rib = match propagate(&case.topo, &case.anns, hooks) {
        Ok(rib) => rib,
        Err(RoutingError::NonConvergence { .. }) => return Ok(Compared::NonConvergent),
        Err(e) => return Err(format!("seed {}: {label}: {e}", case.seed)),
    };
    let expected = oracle_propagate(&case.topo, &case.anns, hooks);
    let got: BTreeMap<(Asn, Prefix), Route> = rib
        .iter()
        .map(|(a, p, e)| ((a, *p), e.best.clone()))
        .collect();
    if got != expected {
        let diff = expected
            .keys()
            .chain(got.keys())
            .find(|k| expected.get(k) != got.get(k))
            .unwrap();
        return Err(format!(
            "seed {}: {label}: AS{} {}: engine {:?}, oracle {:?}",
            case.seed,
            diff.0,
            diff.1,
            got.get(diff).map(|r| (&r.as_path, &r.communities)),
            expected.get(diff).map(|r| (&r.as_path, &r.communities)),
        ));
    }
    Ok(Compared::Agreed)
}

/// Engine against the path-enumeration oracle, under plain Gao-Rexford and
/// under the zone rules. Odd seeds add a forged injection.
pub fn oracle_equivalence(seed: u64) -> Result<Compared, String> {
    let mut case = random_case(seed);
    if seed % 2 == 1 {
        add_random_injection(&mut case);
    }
    let plain = compare(&case, &GaoRexford, "gao-rexford")?;
    let zoned = compare(&case, &VipzoneHooks::new(&case.cfg, &case.reg), "vipzone")?;
    Ok(match (plain, zoned) {
        (Compared::Agreed, Compared::Agreed) => Compared::Agreed,
        _ => Compared::NonConvergent,
    })
}

//------------ Attacks -------------------------------------------------------

/// Trace written against the oracle's route table.
fn oracle_trace(best: &BTreeMap<(Asn, Prefix), Route>, src: Asn, dst: IpAddr) -> Option<Asn> {
    let mut at = src;
    let mut seen = BTreeSet::new();
    loop {
        if !seen.insert(at) {
            return None;
        }
        let route = best
            .iter()
            .filter(|((a, p), _)| *a == at && p.contains_addr(dst))
            .max_by_key(|((_, p), _)| p.len())
            .map(|(_, r)| r)?;
        match route.learned_from {
            None => return Some(at),
            Some(next) => at = next,
        }
    }
}

fn injection(s: &AttackScenario) -> Announcement {
    let mut path = vec![s.attacker];
    if let Some(f) = &s.forged_path {
        path.extend(f.iter().copied().skip_while(|&a| a == s.attacker));
    }
    let tags = if s.tag_verified {
        [Community::Verified].into()
    } else {
        BTreeSet::new()
    };
    Announcement::inject(s.victim_prefix, path, tags)
}

/// Misdirected ASes for one attacker position, recomputed with the oracle.
fn oracle_misdirected(
    topo: &Topology,
    hooks: &VipzoneHooks,
    legit: &[Announcement],
    s: &AttackScenario,
) -> BTreeSet<Asn> {
    let mut anns: Vec<Announcement> = legit.to_vec();
    anns.push(injection(s));
    let best = oracle_propagate(topo, &anns, hooks);
    topo.asns()
        .iter()
        .copied()
        .filter(|&a| a != s.attacker)
        .filter(|&a| oracle_trace(&best, a, s.victim_prefix.network()) == Some(s.attacker))
        .collect()
}

#[derive(Default, Debug)]
pub struct SecurityStats {
    pub positions: usize,
    pub protected_cases: usize,
    pub subprefix_misdirected: usize,
}

/// Exhaustive attacker sweeps for one random case:
///
/// * every position's misdirected set matches the oracle recomputation;
/// * (a) when the victim is a customer whose route a member verifies, no
///   member is misdirected by a forged-origin path hijack from outside;
/// * (b) with a ROA for the victim, no member holds an origin hijack;
/// * (c) without ROAs, a sub-prefix hijack captures every AS that hears it.
pub fn security(seed: u64) -> Result<SecurityStats, String> {
    let case = random_case(seed);
    let topo = &case.topo;
    let cfg = &case.cfg;
    let victim = case.anns[0].clone();
    let (prefix, origin) = (victim.prefix, victim.speaker());
    let legit: Vec<Announcement> = case
        .anns
        .iter()
        .filter(|a| a.prefix != prefix || a.speaker() == origin)
        .cloned()
        .collect();
    let mut stats = SecurityStats::default();
    let err = |m: String| Err(format!("seed {seed}: {m}"));
    let outsider = |a: Asn| !cfg.is_member(a);
    // A provider of the victim that the victim lists in ASPA can make the
    // two-hop claim legitimately; it is not forging anything.
    let plausible = |reg: &RegistrySet, a: Asn| reg.aspa_pair_valid(origin, a) == AspaVerdict::Confirmed;

    // Forged-origin path hijack.
    let reg = &case.reg;
    let hooks = VipzoneHooks::new(cfg, reg);
    let Ok(baseline) = propagate(topo, &legit, &hooks) else { return Ok(stats) };
    let verified_at_perimeter = !cfg.is_member(origin)
        && cfg.members().iter().any(|&m| {
            baseline
                .best(m, &prefix)
                .is_some_and(|r| r.is_verified() && r.learned_rel == LearnedRel::Customer && r.as_path == [origin])
        });
    let template = AttackScenario::new(AttackKind::ForgedOriginPathHijack, origin, prefix, origin);
    let Ok(rows) = sweep_attackers(topo, reg, cfg, &legit, &template) else { return Ok(stats) };
    for row in &rows {
        stats.positions += 1;
        let mut s = template.clone();
        s.attacker = row.attacker;
        let expected = oracle_misdirected(topo, &hooks, &legit, &s);
        if expected != row.misdirected {
            return err(format!(
                "forged-origin by AS{}: harness {:?}, oracle {:?}",
                row.attacker, row.misdirected, expected
            ));
        }
        if verified_at_perimeter && outsider(row.attacker) && !plausible(reg, row.attacker) {
            stats.protected_cases += 1;
            if let Some(m) = row.misdirected.iter().find(|&&a| cfg.is_member(a)) {
                return err(format!("member AS{m} misdirected by AS{} despite VERIFIED route", row.attacker));
            }
        }
    }

    // Origin hijack against a ROA-covered prefix.
    let mut covered = case.reg.without_roas();
    covered.add_roa(Roa::new(prefix, origin, None).unwrap());
    let template = AttackScenario::new(AttackKind::OriginHijack, origin, prefix, origin);
    for &a in topo.asns() {
        if a == origin || !outsider(a) {
            continue;
        }
        let mut s = template.clone();
        s.attacker = a;
        let Ok(rib) = vipzone_core::attacks::scenario_rib(topo, &covered, cfg, &legit, &s) else {
            continue;
        };
        for &m in cfg.members() {
            if let Some(entry) = rib.entry(m, &prefix) {
                if entry.candidates.iter().any(|r| r.origin() == a) {
                    return err(format!("member AS{m} holds the origin hijack by AS{a}"));
                }
            }
        }
    }

    // Sub-prefix hijack with no ROAs anywhere.
    let bare = case.reg.without_roas();
    let bare_hooks = VipzoneHooks::new(cfg, &bare);
    let sub = prefix.split().unwrap().0;
    let template = AttackScenario::new(AttackKind::SubPrefixHijack, origin, sub, origin);
    for &a in topo.asns() {
        if a == origin {
            continue;
        }
        let mut s = template.clone();
        s.attacker = a;
        let Ok(rib) = vipzone_core::attacks::scenario_rib(topo, &bare, cfg, &legit, &s) else {
            continue;
        };
        let report = vipzone_core::attacks::assess(topo, &rib, &s);
        let heard: BTreeSet<Asn> = topo
            .asns()
            .iter()
            .copied()
            .filter(|&x| x != a && rib.best(x, &sub).is_some())
            .collect();
        if heard != report.misdirected {
            return err(format!(
                "sub-prefix by AS{a}: heard by {heard:?} but misdirected {:?}",
                report.misdirected
            ));
        }
        let expected = oracle_misdirected(topo, &bare_hooks, &legit, &s);
        if expected != report.misdirected {
            return err(format!("sub-prefix by AS{a}: harness {:?}, oracle {expected:?}", report.misdirected));
        }
        stats.subprefix_misdirected += report.misdirected.len();
    }
    Ok(stats)
}

/// Attackers outside a customer's local region cannot capture it with a
/// path hijack against a prefix the zone verifies.
pub fn region_soundness(seed: u64) -> Result<usize, String> {
    let case = random_case(seed);
    let (topo, cfg, reg) = (&case.topo, &case.cfg, &case.reg);
    let victim = &case.anns[0];
    let (prefix, origin) = (victim.prefix, victim.speaker());
    let legit: Vec<Announcement> = case
        .anns
        .iter()
        .filter(|a| a.prefix != prefix || a.speaker() == origin)
        .cloned()
        .collect();
    let Ok(baseline) = propagate(topo, &legit, &VipzoneHooks::new(cfg, reg)) else { return Ok(0) };
    let protected = !cfg.is_member(origin)
        && cfg.members().iter().any(|&m| {
            baseline
                .best(m, &prefix)
                .is_some_and(|r| r.is_verified() && r.learned_rel == LearnedRel::Customer && r.as_path == [origin])
        });
    if !protected {
        return Ok(0);
    }
    let template = AttackScenario::new(AttackKind::ForgedOriginPathHijack, origin, prefix, origin);
    let Ok(rows) = sweep_attackers(topo, reg, cfg, &legit, &template) else { return Ok(0) };
    let mut checked = 0;
    for &c in topo.asns() {
        if cfg.is_member(c) || c == origin {
            continue;
        }
        let region = local_region_filtered(topo, cfg, c, &PeerFilters::new()).unwrap().region;
        for row in &rows {
            let a = row.attacker;
            if cfg.is_member(a) || region.contains(&a) || a == c {
                continue;
            }
            if reg.aspa_pair_valid(origin, a) == AspaVerdict::Confirmed {
                continue;
            }
            checked += 1;
            if row.misdirected.contains(&c) {
                return Err(format!("seed {seed}: AS{c} captured by AS{a}, which is outside its region"));
            }
        }
    }
    Ok(checked)
}

//------------ Audit ---------------------------------------------------------

/// Conformant runs yield no unwaived findings.
pub fn audit_soundness(seed: u64) -> Result<(), String> {
    let case = random_case(seed);
    let Ok(rib) = propagate(&case.topo, &case.anns, &VipzoneHooks::new(&case.cfg, &case.reg)) else {
        return Ok(());
    };
    let views = member_views(&rib, &case.cfg, "s");
    let report = audit_views(&case.cfg, &case.topo, &case.reg, &views, &[]).map_err(|e| e.to_string())?;
    let result = match report.unwaived().next() {
        None => Ok(()),
        Some(f) => Err(format!(
            "seed {seed}: conformant run flagged {} against AS{} ({:?})",
            f.rule, f.culprit, f.evidence.as_path
        )),
    };
    result
}

/// Injects one random fault. Returns whether it showed up in the faulty
/// member's view; when it did, the audit must name exactly that fault, and
/// when it did not, the audit must stay silent.
pub fn audit_fault(seed: u64) -> Result<bool, String> {
    let case = random_case(seed);
    let mut rng = rng(seed ^ 0xfa017);
    let Some(&member) = case.cfg.members().iter().collect::<Vec<_>>().choose(&mut rng) else {
        return Ok(false);
    };
    let rule = *[AuditRule::R1FalseVerified, AuditRule::R2InvalidOrigin, AuditRule::R3TagStripped]
        .choose(&mut rng)
        .unwrap();
    let mut anns = case.anns.clone();
    let prefix = anns.choose(&mut rng).unwrap().prefix;
    let mut reg = case.reg.clone();
    if rule == AuditRule::R2InvalidOrigin {
        // Make sure some origin of the prefix is invalid.
        let other = *case.topo.asns().choose(&mut rng).unwrap();
        reg.add_roa(Roa::new(prefix, other, None).unwrap());
        if rng.gen_bool(0.5) {
            let outsider = case.topo.asns().iter().copied().find(|a| !case.cfg.is_member(*a));
            if let Some(o) = outsider.filter(|o| !anns.iter().any(|a| a.prefix == prefix && a.speaker() == *o)) {
                anns.push(Announcement::originate(o, prefix));
            }
        }
    }
    let fault = Fault { rule, member: *member, prefix };
    let Ok(rib) = propagate(&case.topo, &anns, &FaultyHooks::new(&case.cfg, &reg, fault)) else {
        return Ok(false);
    };
    let views = member_views(&rib, &case.cfg, "s");
    let report = audit_views(&case.cfg, &case.topo, &reg, &views, &[]).map_err(|e| e.to_string())?;
    let found: BTreeSet<(AuditRule, Asn)> = report.unwaived().map(|f| (f.rule, f.culprit)).collect();
    let manifested = fault_manifested(&fault, &case.topo, &case.cfg, &reg, &rib);
    let expected: BTreeSet<(AuditRule, Asn)> = if manifested {
        [(rule, *member)].into()
    } else {
        BTreeSet::new()
    };
    if found != expected {
        return Err(format!(
            "seed {seed}: injected {rule} at AS{member} for {prefix} (manifested: {manifested}), found {found:?}"
        ));
    }
    Ok(manifested)
}

//------------ Analysis ------------------------------------------------------

fn greedy_oracle(topo: &Topology, steps: usize) -> Vec<usize> {
    let mut zone = BTreeSet::new();
    let mut out = Vec::new();
    let cones: BTreeMap<Asn, usize> = topo.asns().iter().map(|&a| (a, brute_cone(topo, a).len())).collect();
    for _ in 0..steps.min(topo.len()) {
        let base = brute_protected(topo, &zone);
        let pick = topo
            .asns()
            .iter()
            .copied()
            .filter(|a| !zone.contains(a))
            .max_by_key(|&a| {
                let mut z = zone.clone();
                z.insert(a);
                (brute_protected(topo, &z) - base, cones[&a], std::cmp::Reverse(a))
            })
            .unwrap();
        zone.insert(pick);
        out.push(brute_protected(topo, &zone));
    }
    out
}

/// Zone derivation, protected counts, greedy growth, curve monotonicity and
/// local regions against brute force, on a random topology of up to 15
/// ASes.
pub fn analysis_oracles(seed: u64) -> Result<usize, String> {
    let mut rng = rng(seed);
    let n = rng.gen_range(3..=15);
    let mut params = SynthParams::small(n);
    params.peer_prob = rng.gen_range(0.0..0.3);
    let topo = random_topology(&mut rng, params);
    let err = |m: String| Err(format!("seed {seed}: {m}"));
    let mut checks = 0;

    let roster: BTreeSet<Asn> = topo.asns().iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    let d = derive_connected_zone(&topo, &roster);
    checks += 1;
    if d.connected_members != brute_connected(&topo, &roster) {
        return err(format!("derivation {:?} vs {:?}", d.connected_members, brute_connected(&topo, &roster)));
    }
    let mut bigger = roster.clone();
    bigger.extend(topo.asns().iter().copied().filter(|_| rng.gen_bool(0.3)));
    if !derive_connected_zone(&topo, &bigger).connected_members.is_superset(&d.connected_members) {
        return err("derivation shrank when the roster grew".into());
    }
    if protected_count(&topo, &d.connected_members) != brute_protected(&topo, &d.connected_members) {
        return err("protected count".into());
    }

    let greedy: Vec<usize> = growth_sequence(&topo, GrowthOrder::GreedyProtectedGain, n)
        .iter()
        .map(|&(_, p)| p)
        .collect();
    checks += 1;
    if greedy != greedy_oracle(&topo, n) {
        return err(format!("greedy {greedy:?} vs oracle {:?}", greedy_oracle(&topo, n)));
    }
    let steps: Vec<usize> = (0..=n).collect();
    for order in [GrowthOrder::ByConeSize, GrowthOrder::GreedyProtectedGain] {
        let curve = zone_growth_curve(&topo, order, &steps);
        checks += 1;
        if curve.windows(2).any(|w| w[1].protected_count < w[0].protected_count) {
            return err(format!("{order:?} curve is not monotone"));
        }
    }

    let cfg = ZoneConfig::unchecked(d.connected_members.clone());
    let mut filters = PeerFilters::new();
    let mut blocked = BTreeSet::new();
    for e in topo.edges() {
        if e.rel == vipzone_core::Relationship::PeerToPeer && rng.gen_bool(0.3) {
            filters.insert(e.a, e.b);
            blocked.insert((e.a.min(e.b), e.a.max(e.b)));
        }
    }
    let augmented = with_random_ixes(&topo, &mut rng);
    for &c in topo.asns() {
        if cfg.is_member(c) {
            continue;
        }
        let plain = local_region_filtered(&topo, &cfg, c, &PeerFilters::new()).unwrap().region;
        checks += 1;
        let expected = brute_local_region(&topo, cfg.members(), c, &BTreeSet::new());
        if plain != expected {
            return err(format!("region of AS{c}: {plain:?} vs oracle {expected:?}"));
        }
        let filtered = local_region_filtered(&topo, &cfg, c, &filters).unwrap().region;
        if filtered != brute_local_region(&topo, cfg.members(), c, &blocked) {
            return err(format!("filtered region of AS{c}"));
        }
        let wider = local_region_filtered(&augmented, &cfg, c, &PeerFilters::new()).unwrap().region;
        if !wider.is_superset(&plain) {
            return err(format!("IX augmentation shrank the region of AS{c}"));
        }
    }
    Ok(checks)
}

pub fn with_random_ixes<R: Rng>(topo: &Topology, rng: &mut R) -> Topology {
    let mut ixes: BTreeMap<String, BTreeSet<Asn>> = BTreeMap::new();
    for i in 0..rng.gen_range(0..3) {
        let members: BTreeSet<Asn> = topo.asns().iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
        ixes.insert(format!("ix{i}"), members);
    }
    topo.clone().with_ix_memberships(ixes).augment_with_ix_peering()
}
