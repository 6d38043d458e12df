//! Ensemble statistics for mean-square, strong and average consensus.
//!
//! All reductions run over paths in index order so that results are
//! bitwise reproducible regardless of how the ensemble was produced.

use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::graph::{is_balanced, Digraph};

/// Curve values below this are treated as floored by round-off in rate fits.
pub const CURVE_FLOOR: f64 = 1e-14;
pub const MIN_FIT_POINTS: usize = 10;
/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.96;
/// Terminal mean-square error relative to its initial value below which the
/// ensemble counts as converged.
pub const CONVERGED_RATIO: f64 = 1e-6;

/// `U(x) = 1/2 sum_i sum_j |x_j - x_i|^2`.
pub fn disagreement(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for (i, xi) in x.iter().enumerate() {
        for xj in &x[i + 1..] {
            s += (xj - xi) * (xj - xi);
        }
    }
    s
}

/// `|x - (pi . x) 1|^2`.
pub fn consensus_error(x: &[f64], pi: &[f64]) -> f64 {
    let z: f64 = pi.iter().zip(x).map(|(p, v)| p * v).sum();
    x.iter().map(|v| (v - z) * (v - z)).sum()
}

/// What the mean-square curve measures and how per-path limits are read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Fixed topology: distance to `pi x` and limit `pi x(t_end)`.
    Fixed { pi: Vec<f64> },
    /// Switching topology: `U(x)` and limit `mean(x(t_end))`.
    Switching,
}

impl CurveMode {
    fn error(&self, x: &[f64]) -> f64 {
        match self {
            CurveMode::Fixed { pi } => consensus_error(x, pi),
            CurveMode::Switching => disagreement(x),
        }
    }

    fn limit(&self, x: &[f64]) -> f64 {
        match self {
            CurveMode::Fixed { pi } => pi.iter().zip(x).map(|(p, v)| p * v).sum(),
            CurveMode::Switching => x.iter().sum::<f64>() / x.len() as f64,
        }
    }
}

/// Pointwise ensemble mean of the consensus error.
pub fn ms_curve(ens: &TrajectoryEnsemble, mode: &CurveMode) -> Vec<f64> {
    let r = ens.n_paths() as f64;
    (0..ens.n_times())
        .map(|k| {
            (0..ens.n_paths())
                .map(|p| mode.error(ens.state(p, k)))
                .sum::<f64>()
                / r
        })
        .collect()
}

/// Decay rate `-slope` of the least-squares line through `ln(curve)` on `[t_lo, t_hi]`.
pub fn fit_rate(times: &[f64], curve: &[f64], t_lo: f64, t_hi: f64) -> Result<f64> {
    let (first, last) = match (times.first(), times.last()) {
        (Some(&f), Some(&l)) if times.len() == curve.len() => (f, l),
        _ => {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: curve.len(),
            })
        }
    };
    if !(t_lo < t_hi && t_lo >= first && t_hi <= last) {
        return Err(Error::InvalidParams(format!(
            "fit window [{t_lo}, {t_hi}] outside curve support [{first}, {last}]"
        )));
    }
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(curve)
        .filter(|(&t, &c)| t >= t_lo && t <= t_hi && c.is_finite() && c >= CURVE_FLOOR)
        .map(|(&t, &c)| (t, c.ln()))
        .collect();
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::CurveFloored {
            usable: pts.len(),
            required: MIN_FIT_POINTS,
        });
    }
    let n = pts.len() as f64;
    let t_mean = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_mean = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(t, y)| (t - t_mean) * (y - y_mean)).sum();
    let sxx: f64 = pts.iter().map(|(t, _)| (t - t_mean).powi(2)).sum();
    Ok(-sxy / sxx)
}

/// Largest `curve(t) / (curve(0) e^{-rate t})` over `t <= t_hi`.
pub fn exponential_bound_ratio(times: &[f64], curve: &[f64], rate: f64, t_hi: f64) -> f64 {
    let c0 = curve[0];
    times
        .iter()
        .zip(curve)
        .filter(|(&t, _)| t <= t_hi)
        .map(|(&t, &c)| {
            if c0 > 0.0 {
                c / (c0 * (-rate * t).exp())
            } else if c > 0.0 {
                f64::MAX
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

/// Monte Carlo summary of the per-path limit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitStatistics {
    pub mean: f64,
    /// Unbiased sample variance (zero for a single path).
    pub variance: f64,
    pub ci_halfwidth: f64,
    pub per_path: Vec<f64>,
    /// Terminal mean-square error fell below `CONVERGED_RATIO` of its initial value.
    pub converged: bool,
}

pub fn limit_statistics(ens: &TrajectoryEnsemble, mode: &CurveMode) -> LimitStatistics {
    let r = ens.n_paths();
    let per_path: Vec<f64> = (0..r).map(|p| mode.limit(ens.terminal(p))).collect();
    let mean = per_path.iter().sum::<f64>() / r as f64;
    let variance = if r > 1 {
        per_path.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1) as f64
    } else {
        0.0
    };
    let initial = mode.error(&ens.params.x0);
    let terminal = (0..r).map(|p| mode.error(ens.terminal(p))).sum::<f64>() / r as f64;
    let converged = terminal <= CONVERGED_RATIO * initial || terminal <= CURVE_FLOOR;
    LimitStatistics {
        mean,
        variance,
        ci_halfwidth: Z_95 * (variance / r as f64).sqrt(),
        per_path,
        converged,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageConsensusVerdict {
    pub pass: bool,
    /// Mean of the initial states.
    pub target: f64,
    pub deviation: f64,
    pub ci_halfwidth: f64,
}

/// Unbiasedness: the Monte Carlo limit mean is within its CI of `mean(x0)`.
pub fn average_consensus_check(stats: &LimitStatistics, x0: &[f64]) -> AverageConsensusVerdict {
    let target = x0.iter().sum::<f64>() / x0.len() as f64;
    let deviation = (stats.mean - target).abs();
    AverageConsensusVerdict {
        pass: deviation <= stats.ci_halfwidth + 1e-9 && stats.variance.is_finite(),
        target,
        deviation,
        ci_halfwidth: stats.ci_halfwidth,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrongConsensusVerdict {
    pub pass: bool,
    pub worst_path: usize,
    /// Largest tail disagreement relative to the initial one (absolute when
    /// the initial disagreement is zero).
    pub worst_ratio: f64,
}

/// Sample-path proxy for almost-sure consensus: on every path, the
/// disagreement over the final `tail_fraction` of the horizon stays below
/// `tol` times its initial value.
pub fn strong_consensus_check(
    ens: &TrajectoryEnsemble,
    tail_fraction: f64,
    tol: f64,
) -> StrongConsensusVerdict {
    let t_end = *ens.times.last().unwrap();
    let tail_start = t_end * (1.0 - tail_fraction) - 1e-12 * t_end.max(1.0);
    let first = ens.times.partition_point(|&t| t < tail_start);
    let u0 = disagreement(&ens.params.x0);
    let mut worst = (0, f64::NEG_INFINITY);
    for p in 0..ens.n_paths() {
        let peak = (first..ens.n_times())
            .map(|k| disagreement(ens.state(p, k)))
            .fold(0.0, f64::max);
        let ratio = if u0 > 0.0 { peak / u0 } else { peak };
        if ratio > worst.1 {
            worst = (p, ratio);
        }
    }
    StrongConsensusVerdict {
        pass: worst.1 <= tol,
        worst_path: worst.0,
        worst_ratio: worst.1,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumConservation {
    /// `|mean_r 1^T x_r(t_end) - 1^T x0|`.
    pub deviation: f64,
    pub standard_error: f64,
    pub within_three_se: bool,
}

/// Under balanced graphs `1^T x(t)` is a martingale, so its ensemble mean
/// stays at `1^T x0`.
pub fn sum_conservation_check(
    ens: &TrajectoryEnsemble,
    graphs: &[Digraph],
) -> Result<SumConservation> {
    if !graphs.iter().all(is_balanced) {
        return Err(Error::RequiresBalanced);
    }
    let r = ens.n_paths();
    let initial: f64 = ens.params.x0.iter().sum();
    let sums: Vec<f64> = (0..r).map(|p| ens.terminal(p).iter().sum()).collect();
    let mean = sums.iter().sum::<f64>() / r as f64;
    let var = if r > 1 {
        sums.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (r - 1) as f64
    } else {
        0.0
    };
    let standard_error = (var / r as f64).sqrt();
    let deviation = (mean - initial).abs();
    Ok(SumConservation {
        deviation,
        standard_error,
        within_three_se: deviation <= 3.0 * standard_error + 1e-9 * initial.abs().max(1.0),
    })
}

/// Tunables for [`analyze`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    /// Rate-fit window as fractions of `t_end`.
    pub fit_window: (f64, f64),
    pub tail_fraction: f64,
    pub strong_tol: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            fit_window: (0.1, 0.6),
            tail_fraction: 0.1,
            strong_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusReport {
    pub times: Vec<f64>,
    pub ms_error_curve: Vec<f64>,
    /// `None` when the fit window holds too few points above the floor.
    pub fitted_rate: Option<f64>,
    pub certified_rate: Option<f64>,
    pub limit_mean: f64,
    pub limit_variance: f64,
    pub ci_halfwidth: f64,
    pub converged: bool,
    pub strong_consensus_pass: bool,
    pub strong_consensus: StrongConsensusVerdict,
    pub n_paths: usize,
}

pub fn analyze(
    ens: &TrajectoryEnsemble,
    mode: &CurveMode,
    certified_rate: Option<f64>,
    opts: &AnalysisOptions,
) -> ConsensusReport {
    let curve = ms_curve(ens, mode);
    let t_end = *ens.times.last().unwrap();
    let fitted_rate = fit_rate(
        &ens.times,
        &curve,
        opts.fit_window.0 * t_end,
        opts.fit_window.1 * t_end,
    )
    .ok();
    let stats = limit_statistics(ens, mode);
    let strong = strong_consensus_check(ens, opts.tail_fraction, opts.strong_tol);
    ConsensusReport {
        times: ens.times.clone(),
        ms_error_curve: curve,
        fitted_rate,
        certified_rate,
        limit_mean: stats.mean,
        limit_variance: stats.variance,
        ci_halfwidth: stats.ci_halfwidth,
        converged: stats.converged,
        strong_consensus_pass: strong.pass,
        strong_consensus: strong,
        n_paths: ens.n_paths(),
    }
}
