//! Processor-sharing queues with hyper-exponential job sizes.
//!
//! - [`distributions`]: hyper-exponential laws, truncated moments, sampling.
//! - [`spectral`]: roots of the secular equation `Ψ(s) = 0`.
//! - [`cauchy`]: the Cauchy linear system behind the response-time coefficients.
//! - [`bps`]: expected conditional response time of the batch-arrival PS queue.
//! - [`tlps`]: two-level PS with a size threshold, and threshold search.
//! - [`sim`]: discrete-event simulation of both disciplines.

// `!(x < 1.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bps;
pub mod cauchy;
pub mod distributions;
pub mod error;
pub mod sim;
pub mod spectral;
pub mod tlps;

pub use bps::{solve_bps, BpsInput, BpsSolution};
pub use cauchy::{CauchySolution, CauchySystem};
pub use distributions::{HyperExp, Phase, TruncatedStats};
pub use error::{Error, Result};
pub use sim::{
    simulate, simulate_bps, simulate_tlps, BatchLaw, BinStat, SimConfig, SimResult, SimScenario,
};
pub use spectral::{Anchor, Root, SecularProblem, SpectralRoots};
pub use tlps::{SweepReport, ThresholdOptimum, TlpsEvaluation, TlpsModel};
