//! Text RIB dumps: `asn|prefix|as_path|communities|learned_rel`, one best
//! route per line, sorted by ASN then prefix.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Read, Write};

use super::{Announcement, Community, LearnedRel, Rib, Route};
use crate::prefix::Prefix;
use crate::topology::Asn;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DumpRow {
    pub asn: Asn,
    pub route: Route,
}

impl DumpRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}",
            self.asn,
            self.route.prefix,
            self.route.path_string(),
            self.route.communities_string(),
            self.route.learned_rel.as_str()
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum DumpError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Best routes of every AS, in dump order.
pub fn dump_rows(rib: &Rib) -> Vec<DumpRow> {
    rib.iter()
        .map(|(asn, _, entry)| DumpRow {
            asn,
            route: entry.best.clone(),
        })
        .collect()
}

pub fn dump_rib<W: Write>(rib: &Rib, mut out: W) -> io::Result<()> {
    for row in dump_rows(rib) {
        writeln!(out, "{}", row.to_line())?;
    }
    Ok(())
}

/// Parses a dump. Blank lines and `#` comments are skipped. The neighbor a
/// route was learned from is taken to be the first AS in its path.
pub fn parse_dump<R: BufRead>(source: R) -> Result<Vec<DumpRow>, DumpError> {
    let mut rows = Vec::new();
    for (n, line) in source.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let bad = |reason: String| DumpError::Malformed { line: n + 1, reason };
        let fields: Vec<&str> = text.split('|').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", fields.len())));
        }
        let asn: Asn = fields[0].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let prefix = fields[1].trim().parse().map_err(|e| bad(format!("{e}")))?;
        let as_path = fields[2]
            .split_whitespace()
            .map(|a| a.parse::<Asn>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| bad(format!("{e}")))?;
        if as_path.is_empty() {
            return Err(bad("empty AS path".into()));
        }
        let communities = fields[3]
            .split(';')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::parse::<Community>)
            .collect::<Result<BTreeSet<_>, _>>()
            .map_err(bad)?;
        let learned_rel: LearnedRel = fields[4].parse().map_err(bad)?;
        let learned_from = match learned_rel {
            LearnedRel::Origin => None,
            _ => Some(as_path[0]),
        };
        rows.push(DumpRow {
            asn,
            route: Route {
                prefix,
                as_path,
                communities,
                learned_from,
                learned_rel,
            },
        });
    }
    Ok(rows)
}

/// Reads an originations CSV (`asn,prefix`), one legitimate announcement
/// per row.
pub fn load_originations<R: Read>(source: R) -> Result<Vec<Announcement>, DumpError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(source);
    let bad = |line: u64, reason: String| DumpError::Malformed { line: line as usize, reason };
    let header = reader.headers().map_err(|e| bad(1, e.to_string()))?;
    if header.iter().ne(["asn", "prefix"]) {
        return Err(bad(1, "expected header asn,prefix".into()));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let asn: Asn = record[0].parse().map_err(|e| bad(line, format!("{e}")))?;
        let prefix: Prefix = record[1].parse().map_err(|e| bad(line, format!("{e}")))?;
        out.push(Announcement::originate(asn, prefix));
    }
    Ok(out)
}
