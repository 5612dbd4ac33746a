//! Loading input files. Errors name the file; the core parsers add the
//! line.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use vipzone_core::analysis::PeerFilters;
use vipzone_core::attacks::AttackScenario;
use vipzone_core::audit::{load_waivers, MemberView, Waiver};
use vipzone_core::routing::{load_originations, Announcement};
use vipzone_core::topology::load_ix_memberships;
use vipzone_core::vipzone::ZoneFile;
use vipzone_core::{Asn, RegistrySet, Topology, ZoneConfig};

use crate::manifest::Manifest;
use crate::Common;

fn open(path: &Path, manifest: &mut Manifest) -> Result<BufReader<File>> {
    manifest.add_input(path)?;
    let f = File::open(path).with_context(|| format!("{}: cannot open", path.display()))?;
    Ok(BufReader::new(f))
}

fn at(path: &Path) -> impl Fn(String) -> anyhow::Error + '_ {
    move |e| anyhow!("{}: {e}", path.display())
}

pub fn topology(common: &Common, manifest: &mut Manifest) -> Result<Topology> {
    let Some(path) = &common.topology else {
        bail!("--topology is required");
    };
    let topo = Topology::load(open(path, manifest)?).map_err(|e| at(path)(e.to_string()))?;
    match &common.ix {
        Some(ix) => {
            let m = load_ix_memberships(open(ix, manifest)?).map_err(|e| at(ix)(e.to_string()))?;
            Ok(topo.with_ix_memberships(m))
        }
        None => Ok(topo),
    }
}

pub fn registries(common: &Common, topo: &Topology, manifest: &mut Manifest) -> Result<RegistrySet> {
    let mut reg = RegistrySet::new();
    if let Some(p) = &common.roas {
        reg.load_roas(open(p, manifest)?).map_err(|e| at(p)(e.to_string()))?;
    }
    if let Some(p) = &common.aspas {
        reg.load_aspas(open(p, manifest)?).map_err(|e| at(p)(e.to_string()))?;
    }
    if let Some(p) = &common.irr {
        reg.load_irr(open(p, manifest)?).map_err(|e| at(p)(e.to_string()))?;
    }
    if let Some(p) = &common.kyc {
        reg.load_kyc(open(p, manifest)?).map_err(|e| at(p)(e.to_string()))?;
    }
    reg.check_against(topo).map_err(|e| anyhow!("registries: {e}"))?;
    Ok(reg)
}

/// The zone from `--zone`, or an empty one.
pub fn zone(common: &Common, topo: &Topology, manifest: &mut Manifest) -> Result<ZoneConfig> {
    match &common.zone {
        Some(p) => {
            let file = ZoneFile::parse(open(p, manifest)?).map_err(|e| at(p)(e.to_string()))?;
            file.into_config(topo).map_err(|e| at(p)(e.to_string()))
        }
        None => Ok(ZoneConfig::unchecked(BTreeSet::new())),
    }
}

pub fn originations(path: Option<&Path>, manifest: &mut Manifest) -> Result<Vec<Announcement>> {
    match path {
        Some(p) => load_originations(open(p, manifest)?).map_err(|e| at(p)(e.to_string())),
        None => Ok(Vec::new()),
    }
}

pub fn scenario(path: &Path, manifest: &mut Manifest) -> Result<AttackScenario> {
    AttackScenario::parse(open(path, manifest)?).map_err(|e| at(path)(e.to_string()))
}

/// One ASN per line; `#` comments and blank lines ignored.
pub fn roster(path: &Path, manifest: &mut Manifest) -> Result<BTreeSet<Asn>> {
    let mut out = BTreeSet::new();
    for (n, line) in open(path, manifest)?.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let asn = text
            .parse()
            .map_err(|e| anyhow!("{}: line {}: {e}", path.display(), n + 1))?;
        out.insert(asn);
    }
    Ok(out)
}

/// `a|b` lines naming filtered peering links.
pub fn peer_filters(path: &Path, manifest: &mut Manifest) -> Result<PeerFilters> {
    let mut out = PeerFilters::new();
    for (n, line) in open(path, manifest)?.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let bad = || anyhow!("{}: line {}: expected a|b", path.display(), n + 1);
        let (a, b) = text.split_once('|').ok_or_else(bad)?;
        out.insert(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    }
    Ok(out)
}

pub fn view(path: &Path, manifest: &mut Manifest) -> Result<MemberView> {
    MemberView::parse(open(path, manifest)?).map_err(|e| at(path)(e.to_string()))
}

pub fn waivers(path: &Path, cfg: &ZoneConfig, manifest: &mut Manifest) -> Result<Vec<Waiver>> {
    load_waivers(cfg, open(path, manifest)?).map_err(|e| at(path)(e.to_string()))
}
