//! Stability and throughput analysis for random-access broadcast systems.
//!
//! N bursty sources share a slotted random-access channel and each packet
//! must reach all M destinations, with retransmissions until the last
//! destination has a copy. The crate computes per-source service rates for
//! two channel models (a two-source, two-destination model with multipacket
//! reception, and an N-source collision model with M symmetric
//! destinations), exact two-source stability/throughput regions, inner and
//! outer bounds for general N, and provides a seeded discrete-event
//! simulator for cross-validation.

pub mod channel;
pub mod error;
pub mod exec;
mod optim;
pub mod rates;
pub mod reception;
pub mod regions;
pub mod sim;

pub use channel::{ArrivalRates, Channel, ChannelModel2x2, CollisionChannelNxM, TransmitPolicy};
pub use error::{Error, Result};
pub use exec::Mode;
pub use rates::{service_rates_2x2, service_rates_collision, ServiceRates};
pub use reception::{alpha_for, solve_chain, ReceiverChainM};
pub use regions::{
    boundary_2src, necessary_bound, optimize_lambda_n, rank_sources, stability_condition_2src,
    sufficient_bound, throughput_condition, BoundObjective, RegionBoundary, RegionKind,
    SolverSettings,
};
pub use sim::{estimate_service_rate, run, SimConfig, SimResult, SlottedSim, Verdict};
