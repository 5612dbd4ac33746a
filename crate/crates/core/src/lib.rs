//! AS-level routing simulation for verified-route trust zones.
//!
//! The crate models interdomain routing at the granularity of autonomous
//! systems. [`routing::propagate`] computes the steady state of Gao-Rexford
//! route exchange over a [`Topology`], with per-AS policy supplied through
//! [`routing::PolicyHooks`]. The [`vipzone`] module provides hooks for a
//! zone of member ASes that verify routes at the zone perimeter and tag
//! them with a VERIFIED community, which members then prefer.
//!
//! On top of that sit topology analyses ([`analysis`]), hijack and leak
//! scenarios ([`attacks`]) and an off-path conformance auditor
//! ([`audit`]).
//!
//! ```
//! use vipzone_core::routing::{propagate, Announcement, GaoRexford};
//! use vipzone_core::{Asn, Topology};
//!
//! let topo = Topology::load("1|2|-1\n2|3|-1".as_bytes()).unwrap();
//! let p = "192.0.2.0/24".parse().unwrap();
//! let origin = Asn::new(3).unwrap();
//! let rib = propagate(&topo, &[Announcement::originate(origin, p)], &GaoRexford).unwrap();
//! let best = rib.best(Asn::new(1).unwrap(), &p).unwrap();
//! assert_eq!(best.path_string(), "2 3");
//! ```

pub mod analysis;
pub mod attacks;
pub mod audit;
pub mod prefix;
pub mod registry;
pub mod routing;
pub mod synth;
pub mod topology;
pub mod vipzone;

pub use prefix::{Family, Prefix};
pub use registry::{AspaRecord, KycEntry, RegistrySet, Roa, RovState};
pub use routing::{Announcement, Community, LearnedRel, Rib, Route};
pub use topology::{Asn, Relation, Relationship, Topology};
pub use vipzone::ZoneConfig;
