//! certify -> simulate -> analyze orchestration and artifact emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use stoch_consensus::analysis::{exponential_bound_ratio, CURVE_FLOOR};
use stoch_consensus::graph::{has_spanning_tree, is_balanced, laplacian, union};
use stoch_consensus::spectral::average_subspace;
use stoch_consensus::{
    analyze, average_consensus_check, decompose, fixed_gain_bound, limit_statistics, rate_gamma1,
    simulate_ensemble, strong_consensus_check, sum_conservation_check, switching_gain_bound,
    union_constants, AnalysisOptions, CurveMode, DenseMatrix, Error, GainBound,
    StrongConsensusVerdict, Topology, TrajectoryEnsemble, UnionConstants,
};

use crate::scenario::{CheckKind, CheckSpec, GainSpec, Scenario};

/// Fraction of the applicable bound used for `"gain": "auto"`.
pub const AUTO_GAIN_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyMode {
    Fixed,
    Switching,
}

/// Change-of-basis and Lyapunov matrices for a fixed topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionMatrices {
    pub phi2: DenseMatrix,
    pub psi2: DenseMatrix,
    pub l_tilde: DenseMatrix,
    pub q: DenseMatrix,
}

/// Everything that can be said about a scenario without simulating it.
/// Fields that only make sense for a fixed topology are `null` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub scenario: String,
    pub mode: TopologyMode,
    pub n: usize,
    pub pi: Option<Vec<f64>>,
    pub kappa: Option<usize>,
    /// Every graph is balanced.
    pub balanced: bool,
    /// The fixed graph (or the union of the switching graphs) has a directed spanning tree.
    pub spanning_tree: bool,
    pub c1: Option<f64>,
    pub a_bar: Option<GainBound>,
    pub c4: f64,
    pub a_bar_bar: GainBound,
    pub requested_gain: GainSpec,
    /// Gain used for simulation; `null` when refused.
    pub gain: Option<f64>,
    pub gamma1_at_chosen_a: Option<f64>,
    pub q_lambda_max: Option<f64>,
    pub union_constants: Option<UnionConstants>,
    pub laplacians: Vec<DenseMatrix>,
    pub decomposition: Option<DecompositionMatrices>,
    /// Why no gain could be certified.
    pub refusal: Option<String>,
}

impl Certificate {
    /// Bound that applies to the scenario's topology.
    pub fn applicable_bound(&self) -> Option<GainBound> {
        match self.mode {
            TopologyMode::Fixed => self.a_bar,
            TopologyMode::Switching => Some(self.a_bar_bar),
        }
    }
}

fn fmt_bound(b: GainBound) -> String {
    match b {
        GainBound::Finite(v) => format!("{v}"),
        GainBound::Unbounded => "infinity".into(),
    }
}

pub fn certify(s: &Scenario) -> Certificate {
    let n = s.n_nodes();
    let graphs = s.topology.graphs();
    let balanced = graphs.iter().all(is_balanced);
    let (c4, a_bar_bar) = switching_gain_bound(n, &s.noise).unwrap_or((0.0, GainBound::Unbounded));
    let laplacians = graphs
        .iter()
        .map(|g| DenseMatrix::from(&laplacian(g)))
        .collect();
    let union_constants = union_constants(graphs).ok();

    let mut cert = Certificate {
        scenario: s.spec.name.clone(),
        mode: if s.is_switching() {
            TopologyMode::Switching
        } else {
            TopologyMode::Fixed
        },
        n,
        pi: None,
        kappa: None,
        balanced,
        spanning_tree: union(graphs)
            .map(|u| has_spanning_tree(&u))
            .unwrap_or(false),
        c1: None,
        a_bar: None,
        c4,
        a_bar_bar,
        requested_gain: s.spec.gain,
        gain: None,
        gamma1_at_chosen_a: None,
        q_lambda_max: None,
        union_constants,
        laplacians,
        decomposition: None,
        refusal: None,
    };

    let mut spectral_failure = None;
    if let Topology::Fixed(g) = &s.topology {
        match decompose(&laplacian(g)) {
            Ok(d) => {
                let (c1, a_bar) = fixed_gain_bound(&d, g, &s.noise);
                cert.pi = Some(d.pi.iter().copied().collect());
                cert.kappa = Some(average_subspace(&d.pi).kappa);
                cert.c1 = Some(c1);
                cert.a_bar = Some(a_bar);
                cert.q_lambda_max = Some(d.q_lambda_max);
                cert.decomposition = Some(DecompositionMatrices {
                    phi2: (&d.phi2).into(),
                    psi2: (&d.psi2).into(),
                    l_tilde: (&d.l_tilde).into(),
                    q: (&d.q).into(),
                });
            }
            Err(e) => spectral_failure = Some(e),
        }
    }

    let symbol = match cert.mode {
        TopologyMode::Fixed => "a_bar",
        TopologyMode::Switching => "a_bar_bar",
    };
    let gain = match (cert.applicable_bound(), s.spec.gain) {
        (None, _) => Err(format!(
            "no admissible gain: {}",
            spectral_failure.map_or_else(|| "spectral certificate unavailable".into(), |e| e.to_string())
        )),
        (Some(GainBound::Unbounded), GainSpec::Auto) => Err(
            "gain \"auto\" needs a finite bound, but the noise is zero on every edge; give an explicit gain"
                .into(),
        ),
        (Some(GainBound::Finite(b)), GainSpec::Auto) => Ok(AUTO_GAIN_FRACTION * b),
        (Some(bound), GainSpec::Value(a)) if bound.admits(a) => Ok(a),
        (Some(bound), GainSpec::Value(a)) => Err(format!(
            "gain {a} is inadmissible: it must lie in (0, {symbol}) with {symbol} = {}",
            fmt_bound(bound)
        )),
    };
    match gain {
        Ok(a) => {
            cert.gain = Some(a);
            if let (Some(bound), Some(lambda)) = (cert.a_bar, cert.q_lambda_max) {
                cert.gamma1_at_chosen_a = rate_gamma1(a, bound, lambda).ok();
            }
        }
        Err(msg) => cert.refusal = Some(msg),
    }
    cert
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Pass,
    Fail,
    BlowUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub fitted_rate: Option<f64>,
    pub certified_rate: Option<f64>,
    pub limit_mean: f64,
    pub limit_variance: f64,
    pub ci_halfwidth: f64,
    pub converged: bool,
    pub initial_error: f64,
    pub terminal_error: f64,
    pub strong_consensus: StrongConsensusVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub kind: CheckKind,
    pub expect: bool,
    /// Whether the property was observed to hold.
    pub holds: bool,
    /// `holds == expect`.
    pub pass: bool,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario: String,
    pub status: RunStatus,
    pub gain: f64,
    pub seed: u64,
    pub paths: usize,
    pub dt: f64,
    pub t_end: f64,
    pub error: Option<String>,
    pub summary: Option<Summary>,
    pub checks: Vec<CheckOutcome>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            RunStatus::Pass => 0,
            RunStatus::Fail => 1,
            RunStatus::BlowUp => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Certify,
    Simulate,
    Run,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub certificate: Certificate,
    pub ensemble: Option<TrajectoryEnsemble>,
    /// Times and ensemble mean-square error.
    pub curve: Option<(Vec<f64>, Vec<f64>)>,
    pub report: Option<Report>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.certificate.refusal.is_some() {
            return 2;
        }
        self.report.as_ref().map_or(0, Report::exit_code)
    }
}

pub fn curve_mode(s: &Scenario, cert: &Certificate) -> CurveMode {
    match (&s.topology, &cert.pi) {
        (Topology::Fixed(_), Some(pi)) => CurveMode::Fixed { pi: pi.clone() },
        _ => CurveMode::Switching,
    }
}

/// Runs the pipeline up to `stage` on the current rayon pool.
pub fn execute(s: &Scenario, stage: Stage) -> Outcome {
    let certificate = certify(s);
    let mut out = Outcome {
        scenario: s.clone(),
        certificate,
        ensemble: None,
        curve: None,
        report: None,
    };
    let Some(gain) = out.certificate.gain else {
        warn!(
            "{}",
            out.certificate.refusal.as_deref().unwrap_or("gain refused")
        );
        return out;
    };
    if stage == Stage::Certify {
        return out;
    }
    let params = s.params(gain);
    info!(
        "simulating {} paths x {} steps at a = {gain}",
        params.n_paths,
        (params.t_end / params.dt).round()
    );
    let report_base = |status, error| Report {
        scenario: s.spec.name.clone(),
        status,
        gain,
        seed: params.seed,
        paths: params.n_paths,
        dt: params.dt,
        t_end: params.t_end,
        error,
        summary: None,
        checks: Vec::new(),
    };
    let ens = match simulate_ensemble(&s.topology, &s.noise, &params) {
        Ok(ens) => ens,
        Err(e) => {
            warn!("simulation failed: {e}");
            let status = if matches!(e, Error::BlowUp { .. }) {
                RunStatus::BlowUp
            } else {
                RunStatus::Fail
            };
            out.report = Some(report_base(status, Some(e.to_string())));
            return out;
        }
    };
    if stage == Stage::Run {
        let mode = curve_mode(s, &out.certificate);
        let report = analyze(
            &ens,
            &mode,
            out.certificate.gamma1_at_chosen_a,
            &AnalysisOptions::default(),
        );
        let summary = Summary {
            fitted_rate: report.fitted_rate,
            certified_rate: report.certified_rate,
            limit_mean: report.limit_mean,
            limit_variance: report.limit_variance,
            ci_halfwidth: report.ci_halfwidth,
            converged: report.converged,
            initial_error: report.ms_error_curve[0],
            terminal_error: *report.ms_error_curve.last().unwrap(),
            strong_consensus: report.strong_consensus,
        };
        let checks: Vec<CheckOutcome> = s
            .spec
            .checks
            .iter()
            .map(|c| {
                evaluate(
                    c,
                    s,
                    &out.certificate,
                    &ens,
                    &mode,
                    &report.ms_error_curve,
                    &summary,
                )
            })
            .collect();
        let status = if checks.iter().all(|c| c.pass) {
            RunStatus::Pass
        } else {
            RunStatus::Fail
        };
        let mut r = report_base(status, None);
        r.summary = Some(summary);
        r.checks = checks;
        out.curve = Some((report.times, report.ms_error_curve));
        out.report = Some(r);
    }
    out.ensemble = Some(ens);
    out
}

/// Like [`execute`] on a dedicated pool of `workers` threads (all cores when `None`).
pub fn execute_with_workers(
    s: &Scenario,
    stage: Stage,
    workers: Option<usize>,
) -> Result<Outcome, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()?;
    Ok(pool.install(|| execute(s, stage)))
}

fn evaluate(
    c: &CheckSpec,
    s: &Scenario,
    cert: &Certificate,
    ens: &TrajectoryEnsemble,
    mode: &CurveMode,
    curve: &[f64],
    summary: &Summary,
) -> CheckOutcome {
    let p = |k: &str| c.param(k).expect("validated parameter");
    let mut m = BTreeMap::new();
    let holds = match c.kind {
        CheckKind::MeanSquareConvergence => {
            let (c0, c_end) = (curve[0], *curve.last().unwrap());
            let ratio = p("ratio");
            m.insert("initial".into(), c0);
            m.insert("terminal".into(), c_end);
            m.insert("ratio".into(), ratio);
            c_end <= ratio * c0 || c_end <= CURVE_FLOOR
        }
        CheckKind::StrongConsensus => {
            let v = strong_consensus_check(ens, p("tail_fraction"), p("tol"));
            m.insert("tol".into(), p("tol"));
            m.insert("worst_ratio".into(), v.worst_ratio);
            m.insert("worst_path".into(), v.worst_path as f64);
            v.pass
        }
        CheckKind::AverageConsensus => {
            let stats = limit_statistics(ens, mode);
            let v = average_consensus_check(&stats, &s.spec.x0);
            m.insert("target".into(), v.target);
            m.insert("deviation".into(), v.deviation);
            m.insert("ci_halfwidth".into(), v.ci_halfwidth);
            v.pass
        }
        CheckKind::LimitMean => {
            let target = c
                .params
                .get("target")
                .copied()
                .unwrap_or_else(|| match &cert.pi {
                    Some(pi) => pi.iter().zip(&s.spec.x0).map(|(p, x)| p * x).sum(),
                    None => s.spec.x0.iter().sum::<f64>() / s.spec.x0.len() as f64,
                });
            let allowed = p("tol").max(summary.ci_halfwidth);
            let deviation = (summary.limit_mean - target).abs();
            m.insert("target".into(), target);
            m.insert("mean".into(), summary.limit_mean);
            m.insert("deviation".into(), deviation);
            m.insert("allowed".into(), allowed);
            deviation <= allowed
        }
        CheckKind::DecayBound => match cert.gamma1_at_chosen_a {
            Some(gamma1) => {
                let t_end = *ens.times.last().unwrap();
                let ratio = exponential_bound_ratio(
                    &ens.times,
                    curve,
                    gamma1,
                    p("horizon_fraction") * t_end,
                );
                let fitted = summary.fitted_rate.unwrap_or(f64::NAN);
                m.insert("gamma1".into(), gamma1);
                m.insert("bound_ratio".into(), ratio);
                m.insert("slack".into(), p("slack"));
                if fitted.is_finite() {
                    m.insert("fitted_rate".into(), fitted);
                }
                ratio <= p("slack") && fitted >= p("rate_fraction") * gamma1
            }
            None => false,
        },
        CheckKind::SumConservation => match sum_conservation_check(ens, s.topology.graphs()) {
            Ok(v) => {
                m.insert("deviation".into(), v.deviation);
                m.insert("standard_error".into(), v.standard_error);
                v.within_three_se
            }
            Err(_) => false,
        },
    };
    CheckOutcome {
        kind: c.kind,
        expect: c.expect,
        holds,
        pass: holds == c.expect,
        metrics: m,
    }
}

/// Shortest round-trip scientific notation.
fn num(v: f64) -> String {
    format!("{v:e}")
}

pub fn ms_curve_csv(times: &[f64], curve: &[f64]) -> String {
    let mut out = String::from("t,ms_error\n");
    for (t, c) in times.iter().zip(curve) {
        let _ = writeln!(out, "{},{}", num(*t), num(*c));
    }
    out
}

pub fn paths_csv(ens: &TrajectoryEnsemble) -> String {
    let mut out = String::from("path,t");
    for i in 1..=ens.n_nodes() {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for p in 0..ens.n_paths() {
        for (k, t) in ens.times.iter().enumerate() {
            let _ = write!(out, "{p},{}", num(*t));
            for v in ens.state(p, k) {
                let _ = write!(out, ",{}", num(*v));
            }
            out.push('\n');
        }
    }
    out
}

fn json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s
}

/// Writes `scenario.json` (the effective scenario), `certificate.json` and,
/// when present, `report.json`, `ms_curve.csv` and `paths.csv`.
pub fn write_artifacts(out: &Outcome, dir: &Path, dump_paths: bool) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scenario.json"), json(&out.scenario.spec))?;
    fs::write(dir.join("certificate.json"), json(&out.certificate))?;
    if let Some(r) = &out.report {
        fs::write(dir.join("report.json"), json(r))?;
    }
    if let Some((t, c)) = &out.curve {
        fs::write(dir.join("ms_curve.csv"), ms_curve_csv(t, c))?;
    }
    if dump_paths {
        if let Some(ens) = &out.ensemble {
            fs::write(dir.join("paths.csv"), paths_csv(ens))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{parse_scenario, Overrides};

    fn example(extra_checks: &str, gain: &str) -> Scenario {
        let text = format!(
            r#"{{
            "name": "ex",
            "graphs": [{{"n": 4, "edges": [[3,1],[1,2],[1,3],[2,3],[3,4]]}}],
            "sigma": 1, "gain": {gain}, "x0": [1, 20, 50, -5],
            "sim": {{"dt": 0.01, "t_end": 2, "paths": 8, "seed": 42, "record_interval": 0.1}},
            "checks": [{extra_checks}]
        }}"#
        );
        parse_scenario(&text).unwrap()
    }

    #[test]
    fn certificate_for_fixed_graph() {
        let c = certify(&example("", "0.05"));
        let pi = c.pi.unwrap();
        for (p, want) in pi.iter().zip([0.5, 0.25, 0.25, 0.0]) {
            assert!((p - want).abs() < 1e-10);
        }
        assert_eq!(c.kappa, Some(2));
        assert!(!c.balanced && c.spanning_tree);
        let a_bar = c.a_bar.unwrap().finite().unwrap();
        assert!((c.c1.unwrap() * a_bar - 1.0).abs() < 1e-12);
        assert_eq!(c.gain, Some(0.05));
        assert!(c.gamma1_at_chosen_a.unwrap() > 0.0);
        assert_eq!(c.a_bar_bar, GainBound::Finite(4.0 / 3.0));
        assert_eq!(c.decomposition.unwrap().q.rows, 3);
    }

    #[test]
    fn auto_gain_is_half_the_bound() {
        let c = certify(&example("", "\"auto\""));
        let a_bar = c.a_bar.unwrap().finite().unwrap();
        assert_eq!(c.gain, Some(0.5 * a_bar));
    }

    #[test]
    fn inadmissible_gain_is_refused_with_the_bound() {
        let c = certify(&example("", "10"));
        let msg = c.refusal.clone().unwrap();
        let a_bar = c.a_bar.unwrap().finite().unwrap();
        assert!(msg.contains(&format!("{a_bar}")), "{msg}");
        let out = execute(&example("", "10"), Stage::Run);
        assert_eq!(out.exit_code(), 2);
        assert!(out.report.is_none());
    }

    #[test]
    fn graph_without_spanning_tree_is_refused() {
        let text = r#"{
            "name": "split", "graphs": [{"n": 3, "edges": [[1,2]]}],
            "sigma": 1, "gain": 0.1, "x0": [1, 2, 3],
            "sim": {"dt": 0.1, "t_end": 1, "paths": 1, "seed": 1}
        }"#;
        let c = certify(&parse_scenario(text).unwrap());
        assert!(!c.spanning_tree);
        assert!(c.pi.is_none() && c.gain.is_none());
        assert!(c.refusal.unwrap().contains("spanning tree"));
    }

    #[test]
    fn exit_status_follows_check_verdicts() {
        let ok = execute(
            &example(r#"{"kind": "limit_mean", "params": {"tol": 1e6}}"#, "0.05"),
            Stage::Run,
        );
        assert_eq!(ok.exit_code(), 0);
        let bad = execute(
            &example(
                r#"{"kind": "limit_mean", "params": {"tol": 1e6}, "expect": false}"#,
                "0.05",
            ),
            Stage::Run,
        );
        assert_eq!(bad.exit_code(), 1);
        assert_eq!(bad.report.unwrap().status, RunStatus::Fail);
    }

    #[test]
    fn seed_does_not_change_the_certificate() {
        let s = example("", "0.05");
        let t = s
            .with_overrides(&Overrides {
                seed: Some(99),
                ..Default::default()
            })
            .unwrap();
        assert_eq!(certify(&s), certify(&t));
    }

    #[test]
    fn csv_uses_round_trip_floats() {
        let text = ms_curve_csv(&[0.0, 0.1], &[1.0 / 3.0, 1e-300]);
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows[0], "t,ms_error");
        let back: Vec<f64> = rows[1..]
            .iter()
            .flat_map(|r| r.split(',').map(|v| v.parse::<f64>().unwrap()))
            .collect();
        assert_eq!(back, vec![0.0, 1.0 / 3.0, 0.1, 1e-300]);
    }
}
