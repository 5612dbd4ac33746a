//! `vipzone` command-line front end.
//!
//! Every subcommand reads plain files, writes its results into `--out-dir`
//! together with a `manifest.json` of input and output digests, and signals
//! its verdict through the exit status:
//!
//! | code | meaning                                      |
//! |------|----------------------------------------------|
//! | 0    | success                                      |
//! | 1    | bad input or a failed run                    |
//! | 2    | `simulate --fail-on-harm` found misdirection |
//! | 3    | `audit` found non-waived violations          |

mod commands;
mod inputs;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use vipzone_core::Asn;

#[derive(Parser, Debug)]
#[command(name = "vipzone", version, about = "AS-level routing simulator for verified routing zones")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct Common {
    /// AS-relationship file (`A|B|-1` or `A|B|0` lines).
    #[arg(long, global = true)]
    pub topology: Option<PathBuf>,
    /// ROA CSV: `prefix,maxlen,asn`.
    #[arg(long, global = true)]
    pub roas: Option<PathBuf>,
    /// ASPA CSV: `customer_asn,provider_asns`.
    #[arg(long, global = true)]
    pub aspas: Option<PathBuf>,
    /// IRR CSV: `asn,prefix`.
    #[arg(long, global = true)]
    pub irr: Option<PathBuf>,
    /// KYC CSV: `member_asn,neighbor_asn,allowed_asns,allowed_prefixes`.
    #[arg(long, global = true)]
    pub kyc: Option<PathBuf>,
    /// Zone file: one member ASN per line plus `key=value` options.
    #[arg(long, global = true)]
    pub zone: Option<PathBuf>,
    /// IX membership file (`ix|asn` lines).
    #[arg(long, global = true)]
    pub ix: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Order {
    ByCone,
    Greedy,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Propagate originations (and optionally an attack) and dump the RIB.
    Simulate {
        /// Originations CSV: `asn,prefix`.
        #[arg(long)]
        originations: Option<PathBuf>,
        /// Attack scenario file.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Run the scenario from every attacker position.
        #[arg(long, requires = "scenario")]
        sweep: bool,
        /// Exit with 2 if any AS is misdirected.
        #[arg(long)]
        fail_on_harm: bool,
        /// Also write one view file per zone member.
        #[arg(long)]
        views: bool,
        #[arg(long, default_value = "snapshot")]
        snapshot: String,
    },
    /// Derive the connected zone from a membership roster.
    Zone {
        /// One ASN per line.
        #[arg(long)]
        roster: PathBuf,
    },
    /// Protected-AS counts as the zone grows.
    Curve {
        #[arg(long, value_enum, default_value_t = Order::ByCone)]
        order: Order,
        /// Zone sizes to report, comma-separated.
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        /// Report every size from 0 up to this one.
        #[arg(long)]
        max: Option<usize>,
        /// Add a peering link between every two ASes sharing an IX first.
        #[arg(long, requires = "ix")]
        with_ix: bool,
    },
    /// Local regions: one customer's against `--zone`, or the distribution
    /// over all attached customers for largest-cone zones of each size.
    LocalRegion {
        #[arg(long, requires = "zone")]
        customer: Option<Asn>,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, requires = "ix")]
        with_ix: bool,
        /// Peering links assumed to filter, as `a|b` lines.
        #[arg(long)]
        peer_filters: Option<PathBuf>,
    },
    /// Count destinations a member reaches via a provider only because it
    /// prefers VERIFIED routes.
    Exceptions {
        /// Members to check; defaults to all.
        #[arg(long, value_delimiter = ',')]
        member: Vec<Asn>,
    },
    /// Check member views against the audit rules.
    Audit {
        /// View files, one per member.
        #[arg(required = true)]
        views: Vec<PathBuf>,
        /// Registered exceptions CSV: `member_asn,prefix,note`.
        #[arg(long)]
        waivers: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
