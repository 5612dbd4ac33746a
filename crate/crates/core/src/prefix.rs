//! IP prefixes in canonical form.

use std::fmt;
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use serde::{Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Family {
    V4,
    V6,
}

impl Family {
    pub const fn bits(self) -> u8 {
        match self {
            Family::V4 => 32,
            Family::V6 => 128,
        }
    }
}

/// An address block. Host bits beyond `len` are always zero; parsing
/// rejects non-canonical input instead of silently masking it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    family: Family,
    // Address right-aligned in the family's width.
    bits: u128,
    len: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PrefixError {
    #[error("malformed prefix {0:?}")]
    Malformed(String),
    #[error("prefix length {len} exceeds {max} in {text:?}")]
    LengthOutOfRange { text: String, len: u8, max: u8 },
    #[error("prefix {0:?} has host bits set")]
    NotCanonical(String),
}

fn mask(family: Family, len: u8) -> u128 {
    if len == 0 {
        return 0;
    }
    let ones = if len == 128 { u128::MAX } else { (1u128 << len) - 1 };
    ones << (family.bits() - len)
}

impl Prefix {
    pub fn new(addr: IpAddr, len: u8) -> Result<Self, PrefixError> {
        let (family, bits) = match addr {
            IpAddr::V4(a) => (Family::V4, u32::from(a) as u128),
            IpAddr::V6(a) => (Family::V6, u128::from(a)),
        };
        if len > family.bits() {
            return Err(PrefixError::LengthOutOfRange {
                text: format!("{addr}/{len}"),
                len,
                max: family.bits(),
            });
        }
        if bits & !mask(family, len) != 0 {
            return Err(PrefixError::NotCanonical(format!("{addr}/{len}")));
        }
        Ok(Prefix { family, bits, len })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn len(&self) -> u8 {
        self.len
    }

    /// Whether this is the default route (length zero).
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn network(&self) -> IpAddr {
        match self.family {
            Family::V4 => IpAddr::V4(Ipv4Addr::from(self.bits as u32)),
            Family::V6 => IpAddr::V6(Ipv6Addr::from(self.bits)),
        }
    }

    /// Whether `other` lies within this prefix (equal prefixes included).
    pub fn covers(&self, other: &Prefix) -> bool {
        self.family == other.family
            && self.len <= other.len
            && other.bits & mask(self.family, self.len) == self.bits
    }

    pub fn contains_addr(&self, addr: IpAddr) -> bool {
        match (self.family, addr) {
            (Family::V4, IpAddr::V4(a)) => {
                (u32::from(a) as u128) & mask(Family::V4, self.len) == self.bits
            }
            (Family::V6, IpAddr::V6(a)) => u128::from(a) & mask(Family::V6, self.len) == self.bits,
            _ => false,
        }
    }

    /// The covering prefix of length `len`, or `None` if `len` is longer.
    pub fn truncate(&self, len: u8) -> Option<Prefix> {
        (len <= self.len).then(|| Prefix {
            family: self.family,
            bits: self.bits & mask(self.family, len),
            len,
        })
    }

    /// The two halves of this prefix, if it is not a host route.
    pub fn split(&self) -> Option<(Prefix, Prefix)> {
        if self.len >= self.family.bits() {
            return None;
        }
        let len = self.len + 1;
        let high = 1u128 << (self.family.bits() - len);
        Some((
            Prefix {
                family: self.family,
                bits: self.bits,
                len,
            },
            Prefix {
                family: self.family,
                bits: self.bits | high,
                len,
            },
        ))
    }
}

impl FromStr for Prefix {
    type Err = PrefixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (addr, len) = s
            .split_once('/')
            .ok_or_else(|| PrefixError::Malformed(s.to_string()))?;
        let addr: IpAddr = addr
            .parse()
            .map_err(|_| PrefixError::Malformed(s.to_string()))?;
        let len: u8 = len
            .parse()
            .map_err(|_| PrefixError::Malformed(s.to_string()))?;
        Prefix::new(addr, len)
    }
}

impl fmt::Display for Prefix {
    fn fmt(&self, f: &mut fmt::Formatter) -> fmt::Result {
        write!(f, "{}/{}", self.network(), self.len)
    }
}

impl Serialize for Prefix {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}
