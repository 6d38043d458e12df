//! Certification and Monte Carlo simulation of first-order consensus under
//! multiplicative measurement noise.
//!
//! Agent `i` integrates `u_i = a * sum_{j in N_i} (y_ji - x_i)` where the
//! measurement `y_ji = x_j + sigma_ji |x_j - x_i| xi_ji` carries noise whose
//! intensity scales with the disagreement, so it vanishes at consensus.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`graph`] | Digraphs, Laplacians, spanning-tree and balance predicates |
//! | [`spectral`] | Stationary distribution, Lyapunov certificate, gain bounds |
//! | [`dynamics`] | Euler–Maruyama ensembles on fixed or switching topologies |
//! | [`analysis`] | Mean-square curves, rate fits, consensus verdicts |
//! | [`rng`] | Counter-based per-step random streams |

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod rng;
pub mod spectral;

pub use analysis::{
    analyze, average_consensus_check, consensus_error, disagreement, fit_rate, limit_statistics,
    ms_curve, strong_consensus_check, sum_conservation_check, AnalysisOptions,
    AverageConsensusVerdict, ConsensusReport, CurveMode, LimitStatistics, StrongConsensusVerdict,
    SumConservation,
};
pub use dynamics::{
    simulate_ensemble, simulate_path, Segment, SimulationParams, SwitchingSchedule, Topology,
    TrajectoryEnsemble,
};
pub use error::{Error, Result};
pub use graph::{Digraph, Edge, GraphPartition, NoiseProfile};
pub use spectral::{
    decompose, fixed_gain_bound, rate_gamma1, stationary_distribution, switching_gain_bound,
    union_constants, DenseMatrix, GainBound, SpectralDecomposition, UnionConstants,
};
