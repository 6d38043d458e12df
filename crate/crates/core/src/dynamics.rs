//! Euler–Maruyama integration of the closed loop
//!
//! ```text
//! dx_i = a * sum_{j in N_i} (x_j - x_i) dt + a * sum_{j in N_i} sigma_ji |x_j - x_i| dW_ji
//! ```
//!
//! with one independent Wiener increment per directed edge. The dense
//! `N x N^2` diffusion matrix is never formed; the per-edge sum has the
//! same law and costs `O(|E|)` per step.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{has_spanning_tree, union, Digraph, NoiseProfile};
use crate::rng::{PathKey, StepStream};

/// Paths whose sup-norm exceeds this are treated as diverged.
pub const BLOW_UP_LIMIT: f64 = 1e12;

/// Relative slack used when comparing segment durations and window times.
const TIME_TOL: f64 = 1e-9;

/// One activation of a graph in a switching schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Index into [`SwitchingSchedule::graphs`].
    pub graph: usize,
    pub duration: f64,
}

/// Piecewise-constant switching signal over a fixed set of graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchingSchedule {
    graphs: Vec<Digraph>,
    segments: Vec<Segment>,
    /// Segment start times; `starts[0] == 0`.
    starts: Vec<f64>,
    min_dwell: f64,
    window: f64,
}

impl SwitchingSchedule {
    /// Validates node counts, segment references, the dwell time (every
    /// segment but the last) and the joint spanning-tree condition on every
    /// length-`window` time window.
    pub fn new(
        graphs: Vec<Digraph>,
        segments: Vec<Segment>,
        min_dwell: f64,
        window: f64,
    ) -> Result<Self> {
        let n = graphs
            .first()
            .ok_or_else(|| Error::InvalidSchedule("no graphs".into()))?
            .n_nodes();
        if let Some(g) = graphs.iter().find(|g| g.n_nodes() != n) {
            return Err(Error::NodeCountMismatch {
                expected: n,
                found: g.n_nodes(),
            });
        }
        if segments.is_empty() {
            return Err(Error::InvalidSchedule("no segments".into()));
        }
        if !(min_dwell > 0.0 && min_dwell.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "min_dwell must be positive, got {min_dwell}"
            )));
        }
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::InvalidSchedule(format!(
                "window must be positive, got {window}"
            )));
        }
        let mut starts = Vec::with_capacity(segments.len());
        let mut t = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            if seg.graph >= graphs.len() {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i} references graph {} but only {} graphs are listed",
                    seg.graph + 1,
                    graphs.len()
                )));
            }
            if !(seg.duration > 0.0 && seg.duration.is_finite()) {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i} has non-positive duration {}",
                    seg.duration
                )));
            }
            let last = i + 1 == segments.len();
            if !last && seg.duration < min_dwell * (1.0 - TIME_TOL) {
                return Err(Error::InvalidSchedule(format!(
                    "segment {i} lasts {} < min_dwell {min_dwell}",
                    seg.duration
                )));
            }
            starts.push(t);
            t += seg.duration;
        }
        let schedule = Self {
            graphs,
            segments,
            starts,
            min_dwell,
            window,
        };
        schedule.check_windows()?;
        Ok(schedule)
    }

    /// Repeats `pattern` until `horizon` is covered, truncating the final segment.
    pub fn periodic(
        graphs: Vec<Digraph>,
        pattern: &[Segment],
        min_dwell: f64,
        window: f64,
        horizon: f64,
    ) -> Result<Self> {
        if pattern.is_empty() {
            return Err(Error::InvalidSchedule("empty pattern".into()));
        }
        let mut segments = Vec::new();
        let mut t = 0.0;
        'outer: loop {
            for seg in pattern {
                let remaining = horizon - t;
                if remaining <= horizon * TIME_TOL {
                    break 'outer;
                }
                if seg.duration.is_nan() || seg.duration <= 0.0 {
                    return Err(Error::InvalidSchedule(format!(
                        "non-positive duration {}",
                        seg.duration
                    )));
                }
                let duration = if seg.duration >= remaining * (1.0 - TIME_TOL) {
                    remaining
                } else {
                    seg.duration
                };
                segments.push(Segment {
                    graph: seg.graph,
                    duration,
                });
                t += duration;
            }
        }
        Self::new(graphs, segments, min_dwell, window)
    }

    fn check_windows(&self) -> Result<()> {
        let total = self.total_duration();
        let span = self.window.min(total);
        let last_start = total - span;
        let ends: Vec<f64> = self
            .starts
            .iter()
            .zip(&self.segments)
            .map(|(s, seg)| s + seg.duration)
            .collect();
        // The set of segments overlapping [s, s + span] only changes where a
        // segment enters (s = start - span) or leaves (s = end).
        let mut breaks: Vec<f64> = vec![0.0, last_start];
        breaks.extend(self.starts.iter().map(|s| s - span));
        breaks.extend(ends.iter().copied());
        breaks.retain(|&b| (0.0..=last_start).contains(&b));
        breaks.sort_by(f64::total_cmp);
        breaks.dedup_by(|a, b| (*a - *b).abs() <= TIME_TOL * total.max(1.0));
        let mut probes = breaks.clone();
        probes.extend(breaks.windows(2).map(|w| 0.5 * (w[0] + w[1])));

        for &s in &probes {
            let active: Vec<Digraph> = self
                .starts
                .iter()
                .zip(&ends)
                .zip(&self.segments)
                .filter(|((&st, &en), _)| st < s + span && en > s)
                .map(|(_, seg)| self.graphs[seg.graph].clone())
                .collect();
            if active.is_empty() || !has_spanning_tree(&union(&active)?) {
                return Err(Error::InvalidSchedule(format!(
                    "graphs active during [{s}, {}] have no joint spanning tree",
                    s + span
                )));
            }
        }
        Ok(())
    }

    pub fn graphs(&self) -> &[Digraph] {
        &self.graphs
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn min_dwell(&self) -> f64 {
        self.min_dwell
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn n_nodes(&self) -> usize {
        self.graphs[0].n_nodes()
    }

    pub fn total_duration(&self) -> f64 {
        self.starts.last().unwrap() + self.segments.last().unwrap().duration
    }

    /// Index of the segment active at `t`; a boundary belongs to the segment it starts.
    pub fn segment_at(&self, t: f64) -> Result<usize> {
        let total = self.total_duration();
        if !(t >= 0.0 && t <= total * (1.0 + TIME_TOL)) {
            return Err(Error::TimeOutOfRange(t));
        }
        Ok(self.starts.partition_point(|&s| s <= t).saturating_sub(1))
    }

    pub fn graph_at(&self, t: f64) -> Result<&Digraph> {
        let seg = self.segment_at(t)?;
        Ok(&self.graphs[self.segments[seg].graph])
    }
}

/// Fixed graph or switching schedule driving the closed loop.
#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Fixed(Digraph),
    Switching(SwitchingSchedule),
}

impl Topology {
    pub fn n_nodes(&self) -> usize {
        match self {
            Topology::Fixed(g) => g.n_nodes(),
            Topology::Switching(s) => s.n_nodes(),
        }
    }

    pub fn graphs(&self) -> &[Digraph] {
        match self {
            Topology::Fixed(g) => std::slice::from_ref(g),
            Topology::Switching(s) => s.graphs(),
        }
    }

    pub fn graph_at(&self, t: f64) -> Result<&Digraph> {
        match self {
            Topology::Fixed(g) => Ok(g),
            Topology::Switching(s) => s.graph_at(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub gain: f64,
    pub x0: Vec<f64>,
    /// Store every `record_every`-th integrator state; must divide the step count.
    pub record_every: usize,
}

impl SimulationParams {
    /// Number of integrator steps covering `[0, t_end]`.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end >= self.dt && self.t_end.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "t_end must be at least dt, got {}",
                self.t_end
            )));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::InvalidParams(format!(
                "t_end {} is not a multiple of dt {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn validate(&self, topology: &Topology) -> Result<usize> {
        let steps = self.n_steps()?;
        if self.n_paths == 0 {
            return Err(Error::InvalidParams("need at least one path".into()));
        }
        if !(self.gain >= 0.0 && self.gain.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "gain must be finite and nonnegative, got {}",
                self.gain
            )));
        }
        if self.x0.len() != topology.n_nodes() {
            return Err(Error::DimensionMismatch {
                expected: topology.n_nodes(),
                found: self.x0.len(),
            });
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("x0 must be finite".into()));
        }
        if self.record_every == 0 || steps % self.record_every != 0 {
            return Err(Error::InvalidParams(format!(
                "record_every {} must divide the step count {steps}",
                self.record_every
            )));
        }
        if let Topology::Switching(s) = topology {
            if self.dt > s.min_dwell() / 10.0 * (1.0 + TIME_TOL) {
                return Err(Error::InvalidParams(format!(
                    "dt {} exceeds min_dwell / 10 = {}",
                    self.dt,
                    s.min_dwell() / 10.0
                )));
            }
            if s.total_duration() < self.t_end * (1.0 - TIME_TOL) {
                return Err(Error::InvalidSchedule(format!(
                    "schedule covers {} but t_end is {}",
                    s.total_duration(),
                    self.t_end
                )));
            }
        }
        Ok(steps)
    }

    /// Recorded time grid.
    pub fn times(&self) -> Result<Vec<f64>> {
        let steps = self.n_steps()?;
        let every = self.record_every.max(1);
        Ok((0..=steps / every)
            .map(|k| (k * every) as f64 * self.dt)
            .collect())
    }
}

/// Graph edges flattened with their noise intensities.
#[derive(Debug, Clone)]
struct Kernel {
    edges: Vec<(usize, usize, f64)>,
}

impl Kernel {
    fn new(g: &Digraph, noise: &NoiseProfile) -> Self {
        Self {
            edges: g.edges().map(|e| (e.from, e.to, noise.get(e))).collect(),
        }
    }

    /// Writes the Euler–Maruyama increment into `dx`; `eta(k)` is the
    /// standard normal for the `k`-th edge and is called once per edge in order.
    #[inline(always)]
    fn increment(
        &self,
        x: &[f64],
        dx: &mut [f64],
        a: f64,
        h: f64,
        sqrt_h: f64,
        mut eta: impl FnMut(usize) -> f64,
    ) {
        dx.fill(0.0);
        for (k, &(from, to, sigma)) in self.edges.iter().enumerate() {
            let diff = x[from] - x[to];
            let z = eta(k);
            dx[to] += a * diff * h + a * sigma * diff.abs() * sqrt_h * z;
        }
    }
}

#[inline]
fn diverged(x: &[f64]) -> bool {
    x.iter().any(|v| v.is_nan() || v.abs() > BLOW_UP_LIMIT)
}

/// Drift `-a L x` computed edge by edge, without the `dt` factor.
pub fn drift(x: &[f64], g: &Digraph, a: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for e in g.edges() {
        out[e.to] += a * (x[e.from] - x[e.to]);
    }
    out
}

/// One Euler–Maruyama step of length `dt` from time `t`.
///
/// `noise` holds one standard normal per edge of `g`, in [`Digraph::edges`] order.
pub fn step(
    x: &[f64],
    g: &Digraph,
    np: &NoiseProfile,
    a: f64,
    t: f64,
    dt: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if x.len() != g.n_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.n_nodes(),
            found: x.len(),
        });
    }
    if noise.len() != g.n_edges() {
        return Err(Error::DimensionMismatch {
            expected: g.n_edges(),
            found: noise.len(),
        });
    }
    let kernel = Kernel::new(g, np);
    let mut dx = vec![0.0; x.len()];
    kernel.increment(x, &mut dx, a, dt, dt.sqrt(), |k| noise[k]);
    let out: Vec<f64> = x.iter().zip(&dx).map(|(xi, di)| xi + di).collect();
    if diverged(&out) {
        return Err(Error::BlowUp {
            path: 0,
            time: t + dt,
        });
    }
    Ok(out)
}

/// Topology switch falling on step `step`: at its start (`frac == 0`) or a
/// fraction `frac` of the way through it.
#[derive(Debug, Clone, Copy)]
struct Switch {
    step: usize,
    frac: f64,
    kernel: usize,
}

struct Plan {
    kernels: Vec<Kernel>,
    initial: usize,
    switches: Vec<Switch>,
}

impl Plan {
    fn new(
        topology: &Topology,
        noise: &NoiseProfile,
        params: &SimulationParams,
        steps: usize,
    ) -> Self {
        match topology {
            Topology::Fixed(g) => Plan {
                kernels: vec![Kernel::new(g, noise)],
                initial: 0,
                switches: Vec::new(),
            },
            Topology::Switching(s) => {
                let kernels = s.graphs().iter().map(|g| Kernel::new(g, noise)).collect();
                let mut switches = Vec::new();
                for (seg, &start) in s.segments().iter().zip(&s.starts).skip(1) {
                    let pos = start / params.dt;
                    let nearest = pos.round();
                    let (step, frac) = if (pos - nearest).abs() <= 1e-6 {
                        (nearest as usize, 0.0)
                    } else {
                        (pos.floor() as usize, pos - pos.floor())
                    };
                    if step < steps {
                        switches.push(Switch {
                            step,
                            frac,
                            kernel: seg.graph,
                        });
                    }
                }
                Plan {
                    kernels,
                    initial: s.segments()[0].graph,
                    switches,
                }
            }
        }
    }
}

/// Integrates one path; returns the recorded states, row-major by time.
fn integrate(
    plan: &Plan,
    params: &SimulationParams,
    steps: usize,
    path: usize,
) -> Result<Vec<f64>> {
    let n = params.x0.len();
    let every = params.record_every;
    let mut out = Vec::with_capacity((steps / every + 1) * n);
    let mut x = params.x0.clone();
    let mut dx = vec![0.0; n];
    out.extend_from_slice(&x);

    let key = PathKey::new(params.seed, path as u64);
    let a = params.gain;
    let dt = params.dt;
    let sqrt_dt = dt.sqrt();
    let mut current = plan.initial;
    let mut next_switch = 0;

    let mut advance =
        |x: &mut Vec<f64>, kernel: &Kernel, h: f64, sqrt_h: f64, stream: &mut StepStream| {
            kernel.increment(x, &mut dx, a, h, sqrt_h, |_| stream.normal());
            for (xi, di) in x.iter_mut().zip(&dx) {
                *xi += di;
            }
        };

    for k in 0..steps {
        let mut split = None;
        while let Some(sw) = plan.switches.get(next_switch).filter(|sw| sw.step == k) {
            if sw.frac == 0.0 {
                current = sw.kernel;
            } else {
                split = Some(*sw);
            }
            next_switch += 1;
        }
        match split {
            None => {
                let mut stream = key.stream(k as u64, 0);
                advance(&mut x, &plan.kernels[current], dt, sqrt_dt, &mut stream);
            }
            Some(sw) => {
                let h1 = sw.frac * dt;
                let h2 = dt - h1;
                let mut first = key.stream(k as u64, 0);
                advance(&mut x, &plan.kernels[current], h1, h1.sqrt(), &mut first);
                current = sw.kernel;
                let mut second = key.stream(k as u64, 1);
                advance(&mut x, &plan.kernels[current], h2, h2.sqrt(), &mut second);
            }
        }
        if diverged(&x) {
            return Err(Error::BlowUp {
                path,
                time: (k + 1) as f64 * dt,
            });
        }
        if (k + 1) % every == 0 {
            out.extend_from_slice(&x);
        }
    }
    Ok(out)
}

/// A single simulated sample path on the recorded grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    n_nodes: usize,
    states: Vec<f64>,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.n_nodes..(k + 1) * self.n_nodes]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.times.len() - 1)
    }
}

/// Simulates path `path_index`; bit-reproducible given `(seed, path_index)`.
pub fn simulate_path(
    topology: &Topology,
    noise: &NoiseProfile,
    params: &SimulationParams,
    path_index: usize,
) -> Result<Trajectory> {
    let steps = params.validate(topology)?;
    let plan = Plan::new(topology, noise, params, steps);
    let states = integrate(&plan, params, steps, path_index)?;
    Ok(Trajectory {
        times: params.times()?,
        n_nodes: topology.n_nodes(),
        states,
    })
}

/// `R` independent sample paths stored path-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub times: Vec<f64>,
    pub params: SimulationParams,
    n_nodes: usize,
    states: Vec<f64>,
}

impl TrajectoryEnsemble {
    pub fn n_paths(&self) -> usize {
        self.params.n_paths
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn state(&self, path: usize, k: usize) -> &[f64] {
        let start = (path * self.times.len() + k) * self.n_nodes;
        &self.states[start..start + self.n_nodes]
    }

    pub fn terminal(&self, path: usize) -> &[f64] {
        self.state(path, self.times.len() - 1)
    }
}

/// Simulates all paths on the current rayon pool. Path `r` draws from the
/// stream keyed by `(seed, r)`, so the result is independent of the pool size.
pub fn simulate_ensemble(
    topology: &Topology,
    noise: &NoiseProfile,
    params: &SimulationParams,
) -> Result<TrajectoryEnsemble> {
    let steps = params.validate(topology)?;
    let plan = Plan::new(topology, noise, params, steps);
    let per_path: Vec<Result<Vec<f64>>> = (0..params.n_paths)
        .into_par_iter()
        .map(|r| integrate(&plan, params, steps, r))
        .collect();
    let times = params.times()?;
    let mut states = Vec::with_capacity(params.n_paths * times.len() * topology.n_nodes());
    for path in per_path {
        states.extend(path?);
    }
    Ok(TrajectoryEnsemble {
        times,
        params: params.clone(),
        n_nodes: topology.n_nodes(),
        states,
    })
}
