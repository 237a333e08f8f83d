//! Config documents for the subcommands. All of them are JSON; the schema
//! is documented in configs/README.md at the repository root.

use rab_core::channel::{Channel, CollisionChannelNxM};
use rab_core::regions::{Boundary2Kind, SolverSettings};
use serde::Deserialize;
use std::path::Path;

use crate::CliError;

/// `rates`: closed-form service rates at one policy.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub channel: Channel,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum RegionKindArg {
    StabilityExact,
    Throughput,
}

impl RegionKindArg {
    pub fn to_kind(self) -> Boundary2Kind {
        match self {
            RegionKindArg::StabilityExact => Boundary2Kind::StabilityExact,
            RegionKindArg::Throughput => Boundary2Kind::Throughput,
        }
    }
}

/// `region2`: two-source boundary sweep.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region2Config {
    pub channel: Channel,
    pub kind: RegionKindArg,
    /// Number of swept lambda_1 values (default 50); `--grid` overrides.
    #[serde(default)]
    pub grid_points: Option<usize>,
    /// Upper end of the lambda_1 sweep; default is 99.9% of the largest
    /// supportable lambda_1.
    #[serde(default)]
    pub lambda1_max: Option<f64>,
    #[serde(default)]
    pub solver: Option<SolverSettings>,
}

/// `bounds`: stability bounds and throughput for fixed-rate rows.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub channel: CollisionChannelNxM,
    /// Each row fixes lambda_1..lambda_{N-1}; lambda_N is optimized.
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub solver: Option<SolverSettings>,
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}
