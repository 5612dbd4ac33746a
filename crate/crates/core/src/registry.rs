//! Trusted out-of-band registries: ROAs, ASPA records, authenticated IRR
//! entries and per-neighbor KYC allow-lists.
//!
//! The registries are plain in-memory stores. Signatures and repository
//! fetching are not modeled; whatever is in a [`RegistrySet`] is taken as
//! ground truth.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;

use serde::Serialize;

use crate::prefix::{Family, Prefix};
use crate::topology::{Asn, Topology};

pub use crate::prefix::PrefixError;

//------------ Records -------------------------------------------------------

/// A route origin authorization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Roa {
    prefix: Prefix,
    origin: Asn,
    max_length: Option<u8>,
}

impl Roa {
    pub fn new(prefix: Prefix, origin: Asn, max_length: Option<u8>) -> Result<Self, RegistryError> {
        if let Some(max) = max_length {
            if max < prefix.len() || max > prefix.family().bits() {
                return Err(RegistryError::BadMaxLength { prefix, max_length: max });
            }
        }
        Ok(Roa {
            prefix,
            origin,
            max_length,
        })
    }

    pub fn prefix(&self) -> Prefix {
        self.prefix
    }

    pub fn origin(&self) -> Asn {
        self.origin
    }

    pub fn max_length(&self) -> Option<u8> {
        self.max_length
    }

    /// The longest announced length this ROA authorizes. Without an explicit
    /// maxLength only the exact ROA prefix length is authorized.
    pub fn effective_max_length(&self) -> u8 {
        self.max_length.unwrap_or(self.prefix.len())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum RovState {
    Valid,
    Invalid,
    NotFound,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AspaRecord {
    customer: Asn,
    providers: BTreeSet<Asn>,
}

impl AspaRecord {
    pub fn new(customer: Asn, providers: BTreeSet<Asn>) -> Result<Self, RegistryError> {
        if providers.is_empty() {
            return Err(RegistryError::EmptyAspa(customer));
        }
        if providers.contains(&customer) {
            return Err(RegistryError::SelfProvider(customer));
        }
        Ok(AspaRecord {
            customer,
            providers,
        })
    }

    pub fn customer(&self) -> Asn {
        self.customer
    }

    pub fn providers(&self) -> &BTreeSet<Asn> {
        &self.providers
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum AspaVerdict {
    Confirmed,
    Contradicted,
    NoRecord,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum OriginVerdict {
    Verified,
    Rejected,
    Unknown,
}

/// What a member has established about one directly attached neighbor.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KycEntry {
    /// ASNs the neighbor may legitimately use. `None` means only the
    /// neighbor's own ASN.
    pub allowed_asns: Option<BTreeSet<Asn>>,
    pub allowed_prefixes: BTreeSet<Prefix>,
}

//------------ Errors --------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("maxLength {max_length} is invalid for {prefix}")]
    BadMaxLength { prefix: Prefix, max_length: u8 },
    #[error("ASPA for AS{0} lists no providers")]
    EmptyAspa(Asn),
    #[error("ASPA for AS{0} lists itself as provider")]
    SelfProvider(Asn),
    #[error("duplicate ASPA record for AS{0}")]
    DuplicateAspa(Asn),
    #[error("KYC entry for AS{member}/AS{neighbor} names non-adjacent ASes")]
    KycNotAdjacent { member: Asn, neighbor: Asn },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

//------------ RegistrySet ---------------------------------------------------

#[derive(Clone, Debug, Default)]
pub struct RegistrySet {
    roas: BTreeSet<Roa>,
    roa_index: HashMap<Prefix, Vec<Roa>>,
    roa_lengths: BTreeSet<(Family, u8)>,
    aspas: BTreeMap<Asn, AspaRecord>,
    irr: BTreeMap<Asn, BTreeSet<Prefix>>,
    kyc: BTreeMap<(Asn, Asn), KycEntry>,
}

impl RegistrySet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_roa(&mut self, roa: Roa) {
        if self.roas.insert(roa) {
            self.roa_index.entry(roa.prefix).or_default().push(roa);
            self.roa_lengths.insert((roa.prefix.family(), roa.prefix.len()));
        }
    }

    pub fn add_aspa(&mut self, record: AspaRecord) -> Result<(), RegistryError> {
        if self.aspas.contains_key(&record.customer) {
            return Err(RegistryError::DuplicateAspa(record.customer));
        }
        self.aspas.insert(record.customer, record);
        Ok(())
    }

    pub fn add_irr(&mut self, asn: Asn, prefix: Prefix) {
        self.irr.entry(asn).or_default().insert(prefix);
    }

    pub fn set_kyc(&mut self, member: Asn, neighbor: Asn, entry: KycEntry) {
        self.kyc.insert((member, neighbor), entry);
    }

    pub fn roas(&self) -> impl Iterator<Item = &Roa> {
        self.roas.iter()
    }

    pub fn aspas(&self) -> impl Iterator<Item = &AspaRecord> {
        self.aspas.values()
    }

    /// A copy of this registry with every ROA removed.
    pub fn without_roas(&self) -> RegistrySet {
        RegistrySet {
            roas: BTreeSet::new(),
            roa_index: HashMap::new(),
            roa_lengths: BTreeSet::new(),
            ..self.clone()
        }
    }

    pub fn irr_lists(&self, asn: Asn, prefix: &Prefix) -> bool {
        self.irr.get(&asn).is_some_and(|s| s.contains(prefix))
    }

    pub fn kyc(&self, member: Asn, neighbor: Asn) -> Option<&KycEntry> {
        self.kyc.get(&(member, neighbor))
    }

    /// Checks that every KYC entry refers to adjacent ASes.
    pub fn check_against(&self, topo: &Topology) -> Result<(), RegistryError> {
        for &(member, neighbor) in self.kyc.keys() {
            if topo.relation(member, neighbor).is_none() {
                return Err(RegistryError::KycNotAdjacent { member, neighbor });
            }
        }
        Ok(())
    }

    /// Route origin validation.
    ///
    /// A ROA covers an announcement if the announced prefix lies within the
    /// ROA prefix. The result is `Valid` if any covering ROA names `origin`
    /// and permits the announced length, `Invalid` if there are covering
    /// ROAs but none matches, and `NotFound` if nothing covers.
    pub fn rov_validate(&self, prefix: &Prefix, origin: Asn) -> RovState {
        let mut covered = false;
        for &(family, len) in &self.roa_lengths {
            if family != prefix.family() {
                continue;
            }
            let Some(cover) = prefix.truncate(len) else {
                break;
            };
            if let Some(roas) = self.roa_index.get(&cover) {
                covered = true;
                if roas
                    .iter()
                    .any(|r| r.origin == origin && prefix.len() <= r.effective_max_length())
                {
                    return RovState::Valid;
                }
            }
        }
        if covered {
            RovState::Invalid
        } else {
            RovState::NotFound
        }
    }

    pub fn aspa_pair_valid(&self, customer: Asn, alleged_provider: Asn) -> AspaVerdict {
        match self.aspas.get(&customer) {
            None => AspaVerdict::NoRecord,
            Some(rec) if rec.providers.contains(&alleged_provider) => AspaVerdict::Confirmed,
            Some(_) => AspaVerdict::Contradicted,
        }
    }

    /// Whether `used` is an ASN the member has established as legitimate
    /// for `neighbor`.
    pub fn kyc_permits(&self, member: Asn, neighbor: Asn, used: Asn) -> bool {
        match self.kyc(member, neighbor).and_then(|e| e.allowed_asns.as_ref()) {
            Some(allowed) => allowed.contains(&used),
            None => used == neighbor,
        }
    }

    /// Verifies a single-AS announcement from a directly attached neighbor.
    ///
    /// An RPKI-invalid origin is rejected before any positive source is
    /// consulted. Otherwise any one of ROA, authenticated IRR or the
    /// member's allowed-prefix list suffices.
    pub fn verify_customer_origin(
        &self,
        member: Asn,
        neighbor: Asn,
        prefix: &Prefix,
        origin: Asn,
    ) -> OriginVerdict {
        let rov = self.rov_validate(prefix, origin);
        if rov == RovState::Invalid {
            return OriginVerdict::Rejected;
        }
        let kyc = self.kyc(member, neighbor);
        if let Some(allowed) = kyc.and_then(|e| e.allowed_asns.as_ref()) {
            if !allowed.contains(&origin) {
                return OriginVerdict::Rejected;
            }
        }
        let in_irr = self.irr_lists(origin, prefix);
        let in_acl = kyc.is_some_and(|e| e.allowed_prefixes.contains(prefix));
        if rov == RovState::Valid || in_irr || in_acl {
            OriginVerdict::Verified
        } else {
            OriginVerdict::Unknown
        }
    }

    //--- File loading

    /// Reads a ROA CSV (`prefix,maxlen,asn`).
    pub fn load_roas<R: Read>(&mut self, source: R) -> Result<(), RegistryError> {
        for_each_record(source, &["prefix", "maxlen", "asn"], |line, rec| {
            let prefix: Prefix = parse_field(line, rec[0])?;
            let max_length = if rec[1].is_empty() {
                None
            } else {
                Some(parse_field::<u8>(line, rec[1])?)
            };
            let origin: Asn = parse_field(line, rec[2])?;
            let roa = Roa::new(prefix, origin, max_length).map_err(|e| malformed(line, e))?;
            self.add_roa(roa);
            Ok(())
        })
    }

    /// Reads an ASPA CSV (`customer_asn,provider_asns`, providers `;`-separated).
    pub fn load_aspas<R: Read>(&mut self, source: R) -> Result<(), RegistryError> {
        for_each_record(source, &["customer_asn", "provider_asns"], |line, rec| {
            let customer: Asn = parse_field(line, rec[0])?;
            let providers = parse_list(line, rec[1])?;
            let record = AspaRecord::new(customer, providers).map_err(|e| malformed(line, e))?;
            self.add_aspa(record).map_err(|e| malformed(line, e))
        })
    }

    /// Reads an IRR CSV (`asn,prefix`).
    pub fn load_irr<R: Read>(&mut self, source: R) -> Result<(), RegistryError> {
        for_each_record(source, &["asn", "prefix"], |line, rec| {
            let asn: Asn = parse_field(line, rec[0])?;
            let prefix: Prefix = parse_field(line, rec[1])?;
            self.add_irr(asn, prefix);
            Ok(())
        })
    }

    /// Reads a KYC CSV (`member_asn,neighbor_asn,allowed_asns,allowed_prefixes`).
    /// An empty list field means the field is absent.
    pub fn load_kyc<R: Read>(&mut self, source: R) -> Result<(), RegistryError> {
        let header = ["member_asn", "neighbor_asn", "allowed_asns", "allowed_prefixes"];
        for_each_record(source, &header, |line, rec| {
            let member: Asn = parse_field(line, rec[0])?;
            let neighbor: Asn = parse_field(line, rec[1])?;
            let allowed_asns = if rec[2].is_empty() {
                None
            } else {
                Some(parse_list(line, rec[2])?)
            };
            let allowed_prefixes = parse_list(line, rec[3])?;
            self.set_kyc(
                member,
                neighbor,
                KycEntry {
                    allowed_asns,
                    allowed_prefixes,
                },
            );
            Ok(())
        })
    }
}

fn malformed(line: u64, reason: impl ToString) -> RegistryError {
    RegistryError::Malformed {
        line,
        reason: reason.to_string(),
    }
}

fn parse_field<T>(line: u64, text: &str) -> Result<T, RegistryError>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    text.parse::<T>().map_err(|e| malformed(line, format!("{text:?}: {e}")))
}

fn parse_list<T>(line: u64, text: &str) -> Result<BTreeSet<T>, RegistryError>
where
    T: std::str::FromStr + Ord,
    T::Err: std::fmt::Display,
{
    text.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_field(line, s))
        .collect()
}

fn for_each_record<R, F>(source: R, header: &[&str], mut f: F) -> Result<(), RegistryError>
where
    R: Read,
    F: FnMut(u64, &[&str]) -> Result<(), RegistryError>,
{
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source);
    let found = reader.headers().map_err(|e| malformed(1, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(malformed(
            1,
            format!("expected header {:?}, found {:?}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(malformed(
                line,
                format!("expected {} fields, got {}", header.len(), record.len()),
            ));
        }
        let fields: Vec<&str> = record.iter().collect();
        f(line, &fields)?;
    }
    Ok(())
}
