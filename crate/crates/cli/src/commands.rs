use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use vipzone_core::analysis::{
    derive_connected_zone, local_region_distribution, local_region_filtered, routing_exceptions,
    zone_growth_curve, GrowthOrder, PeerFilters,
};
use vipzone_core::attacks::{assess, scenario_rib, sweep_attackers, write_harm_csv, SweepRow};
use vipzone_core::audit::{audit_views, member_views, write_findings_csv, AuditFinding};
use vipzone_core::routing::{dump_rib, propagate};
use vipzone_core::vipzone::VipzoneHooks;
use vipzone_core::Asn;

use crate::manifest::Manifest;
use crate::{inputs, Cli, Command, Format, Order};

fn path_str(p: Option<&Path>) -> serde_json::Value {
    p.map_or(serde_json::Value::Null, |p| json!(p.display().to_string()))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

/// Runs the parsed command and returns the exit status.
pub fn run(cli: &Cli) -> Result<u8> {
    let common = &cli.common;
    let format = match common.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    match &cli.command {
        Command::Simulate {
            originations,
            scenario,
            sweep,
            fail_on_harm,
            views,
            snapshot,
        } => {
            let params = json!({
                "format": format,
                "originations": path_str(originations.as_deref()),
                "scenario": path_str(scenario.as_deref()),
                "sweep": sweep,
                "fail_on_harm": fail_on_harm,
                "views": views,
                "snapshot": snapshot,
            });
            let mut m = Manifest::new("simulate", params, &common.out_dir);
            let topo = inputs::topology(common, &mut m)?;
            let reg = inputs::registries(common, &topo, &mut m)?;
            let cfg = inputs::zone(common, &topo, &mut m)?;
            let anns = inputs::originations(originations.as_deref(), &mut m)?;
            let scenario = match scenario {
                Some(p) => Some(inputs::scenario(p, &mut m)?),
                None => None,
            };

            let mut harmed = false;
            let rib = match &scenario {
                Some(s) if *sweep => {
                    let rows = sweep_attackers(&topo, &reg, &cfg, &anns, s)?;
                    harmed = rows.iter().any(|r| !r.misdirected.is_empty());
                    write_sweep(&mut m, common.format, &rows)?;
                    println!(
                        "swept {} attacker positions, {} caused misdirection",
                        rows.len(),
                        rows.iter().filter(|r| !r.misdirected.is_empty()).count()
                    );
                    propagate(&topo, &anns, &VipzoneHooks::new(&cfg, &reg))?
                }
                Some(s) => {
                    let rib = scenario_rib(&topo, &reg, &cfg, &anns, s)?;
                    let report = assess(&topo, &rib, s);
                    harmed = !report.misdirected.is_empty();
                    println!(
                        "{} by AS{}: owner harm {}, {} misdirected",
                        s.kind,
                        s.attacker,
                        report.owner_harm,
                        report.misdirected.len()
                    );
                    match common.format {
                        Format::Json => m.write("harm.json", &to_json(&report)?)?,
                        Format::Csv => {
                            let mut buf = Vec::new();
                            write_harm_csv(&[SweepRow::from(report.clone())], &mut buf)?;
                            m.write("harm.csv", &buf)?;
                            let mut best = String::from("asn,prefix,as_path,verified,learned_rel,attacked\n");
                            for r in &report.per_as_best {
                                let path = r.as_path.iter().map(|a| a.to_string()).collect::<Vec<_>>();
                                writeln!(
                                    best,
                                    "{},{},{},{},{},{}",
                                    r.asn,
                                    r.prefix,
                                    path.join(" "),
                                    r.verified,
                                    r.learned_rel.as_str(),
                                    r.attacked
                                )?;
                            }
                            m.write("per_as_best.csv", best.as_bytes())?;
                        }
                    }
                    rib
                }
                None => propagate(&topo, &anns, &VipzoneHooks::new(&cfg, &reg))?,
            };
            let mut dump = Vec::new();
            dump_rib(&rib, &mut dump)?;
            m.write("rib.txt", &dump)?;
            if *views {
                for v in member_views(&rib, &cfg, snapshot) {
                    let mut buf = Vec::new();
                    v.write(&mut buf)?;
                    m.write(&format!("views/AS{}.txt", v.member), &buf)?;
                }
            }
            println!("{} best routes at {} ASes", rib.iter().count(), rib.asns().count());
            m.finish()?;
            Ok(if harmed && *fail_on_harm { 2 } else { 0 })
        }

        Command::Zone { roster } => {
            let params = json!({ "format": format, "roster": roster.display().to_string() });
            let mut m = Manifest::new("zone", params, &common.out_dir);
            let topo = inputs::topology(common, &mut m)?;
            let roster = inputs::roster(roster, &mut m)?;
            let d = derive_connected_zone(&topo, &roster);
            println!(
                "roster: {} ASNs, connected members: {}, attached customers: {}",
                d.input_roster.len(),
                d.connected_members.len(),
                d.attached_customers.len()
            );
            match common.format {
                Format::Json => m.write("zone.json", &to_json(&d)?)?,
                Format::Csv => {
                    let mut out = String::from("asn,role\n");
                    for a in &d.connected_members {
                        writeln!(out, "{a},member")?;
                    }
                    for a in d.input_roster.difference(&d.connected_members) {
                        writeln!(out, "{a},disconnected")?;
                    }
                    for a in &d.attached_customers {
                        writeln!(out, "{a},attached")?;
                    }
                    m.write("zone.csv", out.as_bytes())?;
                }
            }
            let members: String = d.connected_members.iter().map(|a| format!("{a}\n")).collect();
            m.write("zone.txt", members.as_bytes())?;
            m.finish()?;
            Ok(0)
        }

        Command::Curve { order, sizes, max, with_ix } => {
            let params = json!({
                "format": format,
                "order": format!("{order:?}"),
                "sizes": sizes,
                "max": max,
                "with_ix": with_ix,
            });
            let mut m = Manifest::new("curve", params, &common.out_dir);
            let mut topo = inputs::topology(common, &mut m)?;
            if *with_ix {
                topo = topo.augment_with_ix_peering();
            }
            let steps: Vec<usize> = match (max, sizes.is_empty()) {
                (Some(k), _) => (0..=*k).collect(),
                (None, false) => sizes.clone(),
                (None, true) => (0..=topo.len()).collect(),
            };
            let order = match order {
                Order::ByCone => GrowthOrder::ByConeSize,
                Order::Greedy => GrowthOrder::GreedyProtectedGain,
            };
            let curve = zone_growth_curve(&topo, order, &steps);
            match common.format {
                Format::Json => m.write("curve.json", &to_json(&curve)?)?,
                Format::Csv => {
                    let mut out = String::from("zone_size,protected_count\n");
                    for p in &curve {
                        writeln!(out, "{},{}", p.zone_size, p.protected_count)?;
                    }
                    m.write("curve.csv", out.as_bytes())?;
                }
            }
            m.finish()?;
            Ok(0)
        }

        Command::LocalRegion { customer, sizes, with_ix, peer_filters } => {
            let params = json!({
                "format": format,
                "customer": customer,
                "sizes": sizes,
                "with_ix": with_ix,
                "peer_filters": path_str(peer_filters.as_deref()),
            });
            let mut m = Manifest::new("local-region", params, &common.out_dir);
            let mut topo = inputs::topology(common, &mut m)?;
            if let Some(c) = customer {
                if *with_ix {
                    topo = topo.augment_with_ix_peering();
                }
                let cfg = inputs::zone(common, &topo, &mut m)?;
                let filters = match peer_filters {
                    Some(p) => inputs::peer_filters(p, &mut m)?,
                    None => PeerFilters::new(),
                };
                let region = local_region_filtered(&topo, &cfg, *c, &filters)?;
                println!("AS{c}: local region of {} ASes", region.region.len());
                match common.format {
                    Format::Json => m.write("region.json", &to_json(&region)?)?,
                    Format::Csv => {
                        let mut out = String::from("customer_asn,region_asn\n");
                        for a in &region.region {
                            writeln!(out, "{c},{a}")?;
                        }
                        m.write("region.csv", out.as_bytes())?;
                    }
                }
            } else {
                if sizes.is_empty() {
                    bail!("local-region needs --customer or --sizes");
                }
                if peer_filters.is_some() {
                    bail!("--peer-filters applies to a single --customer");
                }
                let dist = local_region_distribution(&topo, sizes, *with_ix);
                match common.format {
                    Format::Json => m.write("distribution.json", &to_json(&dist)?)?,
                    Format::Csv => {
                        let mut rows = String::from("zone_size,customer_asn,region_size\n");
                        for r in &dist.rows {
                            writeln!(rows, "{},{},{}", r.zone_size, r.customer_asn, r.region_size)?;
                        }
                        m.write("distribution.csv", rows.as_bytes())?;
                        let mut summary = String::from("zone_size,p10,p50,p90,frac_leq_1\n");
                        let mut hist = String::from("zone_size,bucket_max,customers\n");
                        for s in &dist.summaries {
                            writeln!(summary, "{},{},{},{},{:.4}", s.zone_size, s.p10, s.p50, s.p90, s.frac_leq_1)?;
                            for (b, n) in &s.histogram {
                                writeln!(hist, "{},{b},{n}", s.zone_size)?;
                            }
                        }
                        m.write("summary.csv", summary.as_bytes())?;
                        m.write("histogram.csv", hist.as_bytes())?;
                    }
                }
                for s in &dist.summaries {
                    println!(
                        "zone size {}: {} customers, median region {}, {:.1}% at most 1",
                        s.zone_size,
                        s.customers,
                        s.p50,
                        100.0 * s.frac_leq_1
                    );
                }
            }
            m.finish()?;
            Ok(0)
        }

        Command::Exceptions { member } => {
            let params = json!({ "format": format, "member": member });
            let mut m = Manifest::new("exceptions", params, &common.out_dir);
            let topo = inputs::topology(common, &mut m)?;
            let reg = inputs::registries(common, &topo, &mut m)?;
            let cfg = inputs::zone(common, &topo, &mut m)?;
            let members: Vec<Asn> = if member.is_empty() {
                cfg.members().iter().copied().collect()
            } else {
                member.clone()
            };
            let results = members
                .par_iter()
                .map(|&a| routing_exceptions(&topo, &cfg, &reg, a))
                .collect::<Result<Vec<_>, _>>()?;
            match common.format {
                Format::Json => m.write("exceptions.json", &to_json(&results)?)?,
                Format::Csv => {
                    let mut out = String::from("member,exception_count,destinations\n");
                    for r in &results {
                        writeln!(out, "{},{},{}", r.member, r.count(), join(&r.destinations))?;
                    }
                    m.write("exceptions.csv", out.as_bytes())?;
                }
            }
            for r in &results {
                println!("AS{}: {} routing exceptions", r.member, r.count());
            }
            m.finish()?;
            Ok(0)
        }

        Command::Audit { views, waivers } => {
            let params = json!({
                "format": format,
                "views": views.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
                "waivers": path_str(waivers.as_deref()),
            });
            let mut m = Manifest::new("audit", params, &common.out_dir);
            let topo = inputs::topology(common, &mut m)?;
            let reg = inputs::registries(common, &topo, &mut m)?;
            if common.zone.is_none() {
                bail!("--zone is required");
            }
            let cfg = inputs::zone(common, &topo, &mut m)?;
            let loaded = views
                .iter()
                .map(|p| inputs::view(p, &mut m))
                .collect::<Result<Vec<_>>>()?;
            let waivers = match waivers {
                Some(p) => inputs::waivers(p, &cfg, &mut m)?,
                None => Vec::new(),
            };
            let report = audit_views(&cfg, &topo, &reg, &loaded, &waivers).context("audit")?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            match common.format {
                Format::Json => m.write("findings.json", &to_json(&report)?)?,
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_findings_csv(&report.findings, &mut buf)?;
                    m.write("findings.csv", &buf)?;
                }
            }
            let open: Vec<&AuditFinding> = report.unwaived().collect();
            println!(
                "{} findings ({} waived) across {} views",
                report.findings.len(),
                report.findings.len() - open.len(),
                loaded.len()
            );
            m.finish()?;
            Ok(if open.is_empty() { 0 } else { 3 })
        }
    }
}

fn write_sweep(m: &mut Manifest, format: Format, rows: &[SweepRow]) -> Result<()> {
    match format {
        Format::Json => m.write("harm.json", &to_json(&rows)?),
        Format::Csv => {
            let mut buf = Vec::new();
            write_harm_csv(rows, &mut buf)?;
            m.write("harm.csv", &buf)
        }
    }
}
