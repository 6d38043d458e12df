//! JSON scenario schema, loading and validation.
//!
//! Node indices in scenario files are 1-based. Validation collects every
//! problem it can find instead of stopping at the first one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use stoch_consensus::graph::{is_balanced, union};
use stoch_consensus::{
    Digraph, Edge, NoiseProfile, Segment, SimulationParams, SwitchingSchedule, Topology,
};

use crate::CliError;

/// Consensus gain: a number or `"auto"` (half the applicable bound).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSpec {
    Auto,
    Value(f64),
}

impl Serialize for GainSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            GainSpec::Auto => s.serialize_str("auto"),
            GainSpec::Value(a) => s.serialize_f64(*a),
        }
    }
}

impl<'de> Deserialize<'de> for GainSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(a) => Ok(GainSpec::Value(a)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

impl FromStr for GainSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "auto" {
            return Ok(GainSpec::Auto);
        }
        s.parse::<f64>()
            .map(GainSpec::Value)
            .map_err(|_| format!("gain must be a number or \"auto\", got {s:?}"))
    }
}

impl fmt::Display for GainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainSpec::Auto => f.write_str("auto"),
            GainSpec::Value(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    pub n: usize,
    /// `[sender, receiver]`, 1-based.
    pub edges: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSigma {
    pub edge: [usize; 2],
    pub sigma: f64,
}

/// Uniform intensity on every edge, or an explicit per-edge list (unlisted
/// edges are noise-free).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    Uniform(f64),
    PerEdge(Vec<EdgeSigma>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    /// 1-based index into `graphs`.
    pub graph: usize,
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub segments: Vec<SegmentSpec>,
    /// Repeat `segments` until `t_end` is covered.
    #[serde(default)]
    pub periodic: bool,
    pub min_dwell: f64,
    /// Length of the windows over which the union must hold a spanning tree.
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt: f64,
    pub t_end: f64,
    pub paths: usize,
    pub seed: u64,
    /// Spacing of recorded states; defaults to `dt`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_interval: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    MeanSquareConvergence,
    StrongConsensus,
    AverageConsensus,
    LimitMean,
    DecayBound,
    SumConservation,
}

impl CheckKind {
    /// Tunable parameters and their defaults. `limit_mean.target` has no
    /// static default; it is derived from the topology when omitted.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            CheckKind::MeanSquareConvergence => &[("ratio", 1e-6)],
            CheckKind::StrongConsensus => &[("tol", 1e-2), ("tail_fraction", 0.1)],
            CheckKind::AverageConsensus => &[],
            CheckKind::LimitMean => &[("tol", 0.5)],
            CheckKind::DecayBound => &[
                ("slack", 1.2),
                ("horizon_fraction", 0.6),
                ("rate_fraction", 0.8),
            ],
            CheckKind::SumConservation => &[],
        }
    }

    fn accepts(self, key: &str) -> bool {
        (self == CheckKind::LimitMean && key == "target")
            || self.defaults().iter().any(|(k, _)| *k == key)
    }
}

impl fmt::Display for CheckKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant serializes");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

fn yes() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub kind: CheckKind,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Expected verdict; `false` asserts that the property fails.
    #[serde(default = "yes", skip_serializing_if = "is_true")]
    pub expect: bool,
}

impl CheckSpec {
    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.get(key).copied().or_else(|| {
            self.kind
                .defaults()
                .iter()
                .find(|(k, _)| *k == key)
                .map(|&(_, v)| v)
        })
    }
}

/// Complete, serializable scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub graphs: Vec<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    pub sigma: SigmaSpec,
    pub gain: GainSpec,
    pub x0: Vec<f64>,
    pub sim: SimSpec,
    #[serde(default)]
    pub checks: Vec<CheckSpec>,
}

/// Same shape with every required field optional, so that all missing
/// fields are reported together.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    graphs: Option<Vec<GraphSpec>>,
    schedule: Option<ScheduleSpec>,
    sigma: Option<SigmaSpec>,
    gain: Option<GainSpec>,
    x0: Option<Vec<f64>>,
    sim: Option<SimSpec>,
    #[serde(default)]
    checks: Vec<CheckSpec>,
}

impl RawScenario {
    fn complete(self) -> Result<ScenarioSpec, Vec<String>> {
        let mut missing = Vec::new();
        macro_rules! take {
            ($f:ident) => {
                match self.$f {
                    Some(v) => Some(v),
                    None => {
                        missing.push(format!("{}: missing field", stringify!($f)));
                        None
                    }
                }
            };
        }
        let name = take!(name);
        let graphs = take!(graphs);
        let sigma = take!(sigma);
        let gain = take!(gain);
        let x0 = take!(x0);
        let sim = take!(sim);
        match (name, graphs, sigma, gain, x0, sim) {
            (Some(name), Some(graphs), Some(sigma), Some(gain), Some(x0), Some(sim)) => {
                Ok(ScenarioSpec {
                    name,
                    graphs,
                    schedule: self.schedule,
                    sigma,
                    gain,
                    x0,
                    sim,
                    checks: self.checks,
                })
            }
            _ => Err(missing),
        }
    }
}

/// Command-line replacements for scenario fields.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub paths: Option<usize>,
    pub dt: Option<f64>,
    pub gain: Option<GainSpec>,
}

/// A validated scenario together with the objects built from it.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub topology: Topology,
    pub noise: NoiseProfile,
    /// Integrator steps between recorded states.
    pub record_every: usize,
}

impl Scenario {
    pub fn n_nodes(&self) -> usize {
        self.topology.n_nodes()
    }

    pub fn is_switching(&self) -> bool {
        matches!(self.topology, Topology::Switching(_))
    }

    pub fn all_balanced(&self) -> bool {
        self.topology.graphs().iter().all(is_balanced)
    }

    /// Simulation parameters for gain `a`.
    pub fn params(&self, gain: f64) -> SimulationParams {
        SimulationParams {
            dt: self.spec.sim.dt,
            t_end: self.spec.sim.t_end,
            n_paths: self.spec.sim.paths,
            seed: self.spec.sim.seed,
            gain,
            x0: self.spec.x0.clone(),
            record_every: self.record_every,
        }
    }

    /// Re-validates with the overridden fields replaced.
    pub fn with_overrides(&self, o: &Overrides) -> Result<Scenario, CliError> {
        let mut spec = self.spec.clone();
        if let Some(seed) = o.seed {
            spec.sim.seed = seed;
        }
        if let Some(paths) = o.paths {
            spec.sim.paths = paths;
        }
        if let Some(dt) = o.dt {
            spec.sim.dt = dt;
        }
        if let Some(gain) = o.gain {
            spec.gain = gain;
        }
        validate(spec).map_err(CliError::Invalid)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(vec![format!("{}: {e}", path.display())]))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let spec = parse_spec(text).map_err(|e| CliError::Invalid(vec![e]))?;
    let spec = spec.complete().map_err(CliError::Invalid)?;
    validate(spec).map_err(CliError::Invalid)
}

fn parse_spec(text: &str) -> Result<RawScenario, String> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = format!("line {} column {}", inner.line(), inner.column());
        if path == "." || path.is_empty() {
            format!("parse error at {at}: {inner}")
        } else {
            format!("parse error in {path} at {at}: {inner}")
        }
    })?;
    de.end().map_err(|e| {
        format!(
            "parse error at line {} column {}: {e}",
            e.line(),
            e.column()
        )
    })?;
    Ok(raw)
}

/// Builds the topology and noise profile, collecting every validation error.
pub fn validate(spec: ScenarioSpec) -> Result<Scenario, Vec<String>> {
    let mut errs = Vec::new();

    if spec.name.trim().is_empty() {
        errs.push("name: must not be empty".to_string());
    }

    let mut graphs = Vec::new();
    if spec.graphs.is_empty() {
        errs.push("graphs: at least one graph is required".into());
    }
    for (i, g) in spec.graphs.iter().enumerate() {
        match build_graph(g) {
            Ok(d) => graphs.push(d),
            Err(e) => errs.push(format!("graphs[{i}]: {e}")),
        }
    }
    let n = spec.graphs.first().map(|g| g.n);
    if let Some(n) = n {
        for (i, g) in spec.graphs.iter().enumerate().skip(1) {
            if g.n != n {
                errs.push(format!(
                    "graphs[{i}].n: {} differs from graphs[0].n = {n}",
                    g.n
                ));
            }
        }
        if spec.x0.len() != n {
            errs.push(format!(
                "x0: length {} but the graphs have {n} nodes",
                spec.x0.len()
            ));
        }
    }
    if spec.x0.iter().any(|v| !v.is_finite()) {
        errs.push("x0: entries must be finite".into());
    }

    let sim = &spec.sim;
    if !(sim.dt > 0.0 && sim.dt.is_finite()) {
        errs.push(format!("sim.dt: must be positive, got {}", sim.dt));
    }
    if !(sim.t_end > 0.0 && sim.t_end.is_finite()) {
        errs.push(format!("sim.t_end: must be positive, got {}", sim.t_end));
    }
    if sim.paths == 0 {
        errs.push("sim.paths: must be at least 1".into());
    }
    let record_every = record_every(sim).unwrap_or_else(|e| {
        errs.push(e);
        1
    });

    if let GainSpec::Value(a) = spec.gain {
        if !(a > 0.0 && a.is_finite()) {
            errs.push(format!("gain: must be positive or \"auto\", got {a}"));
        }
    }

    let graphs_ok = graphs.len() == spec.graphs.len() && !graphs.is_empty();
    let noise = if graphs_ok {
        build_noise(&spec.sigma, &graphs).unwrap_or_else(|e| {
            errs.push(format!("sigma: {e}"));
            NoiseProfile::zero()
        })
    } else {
        NoiseProfile::zero()
    };
    if let (SigmaSpec::Uniform(s), false) = (&spec.sigma, graphs_ok) {
        if !(s.is_finite() && *s >= 0.0) {
            errs.push(format!("sigma: must be finite and nonnegative, got {s}"));
        }
    }

    let topology = match (&spec.schedule, graphs_ok) {
        (None, true) => {
            if graphs.len() != 1 {
                errs.push(format!(
                    "graphs: fixed topology needs exactly one graph, got {}; add a schedule to switch",
                    graphs.len()
                ));
            }
            Some(Topology::Fixed(graphs[0].clone()))
        }
        (Some(sched), true) => match build_schedule(sched, &graphs, sim.t_end) {
            Ok(s) => Some(Topology::Switching(s)),
            Err(es) => {
                errs.extend(es);
                None
            }
        },
        (_, false) => None,
    };

    if let Some(top) = &topology {
        let params = SimulationParams {
            dt: sim.dt,
            t_end: sim.t_end,
            n_paths: sim.paths.max(1),
            seed: sim.seed,
            gain: 0.0,
            x0: spec.x0.clone(),
            record_every,
        };
        if errs.is_empty() {
            if let Err(e) = params.validate(top) {
                errs.push(format!("sim: {e}"));
            }
        }
        check_checks(&spec.checks, top, &mut errs);
    }

    match topology {
        Some(topology) if errs.is_empty() => Ok(Scenario {
            spec,
            topology,
            noise,
            record_every,
        }),
        _ => Err(errs),
    }
}

fn record_every(sim: &SimSpec) -> Result<usize, String> {
    let Some(interval) = sim.record_interval else {
        return Ok(1);
    };
    if !(interval > 0.0 && interval.is_finite()) {
        return Err(format!(
            "sim.record_interval: must be positive, got {interval}"
        ));
    }
    let k = (interval / sim.dt).round();
    if k < 1.0 || (k * sim.dt - interval).abs() > 1e-9 * interval {
        return Err(format!(
            "sim.record_interval: {interval} is not a multiple of dt {}",
            sim.dt
        ));
    }
    Ok(k as usize)
}

fn build_graph(g: &GraphSpec) -> Result<Digraph, String> {
    let mut edges = Vec::with_capacity(g.edges.len());
    for &[u, v] in &g.edges {
        if u == 0 || v == 0 || u > g.n || v > g.n {
            return Err(format!("edge [{u}, {v}] outside node range 1..={}", g.n));
        }
        edges.push(Edge::new(u - 1, v - 1));
    }
    Digraph::new(g.n, edges).map_err(|e| e.to_string())
}

fn build_noise(sigma: &SigmaSpec, graphs: &[Digraph]) -> Result<NoiseProfile, String> {
    let merged = union(graphs).map_err(|e| e.to_string())?;
    match sigma {
        SigmaSpec::Uniform(s) => NoiseProfile::uniform(&merged, *s).map_err(|e| e.to_string()),
        SigmaSpec::PerEdge(list) => {
            let mut entries = Vec::with_capacity(list.len());
            for es in list {
                let [u, v] = es.edge;
                let e = (u >= 1 && v >= 1)
                    .then(|| Edge::new(u - 1, v - 1))
                    .filter(|e| merged.contains(*e))
                    .ok_or_else(|| format!("edge [{u}, {v}] is not an edge of any graph"))?;
                entries.push((e, es.sigma));
            }
            NoiseProfile::new(entries).map_err(|e| e.to_string())
        }
    }
}

fn build_schedule(
    s: &ScheduleSpec,
    graphs: &[Digraph],
    t_end: f64,
) -> Result<SwitchingSchedule, Vec<String>> {
    let mut errs = Vec::new();
    let mut segments = Vec::with_capacity(s.segments.len());
    for (i, seg) in s.segments.iter().enumerate() {
        if seg.graph == 0 || seg.graph > graphs.len() {
            errs.push(format!(
                "schedule.segments[{i}].graph: {} is not in 1..={}",
                seg.graph,
                graphs.len()
            ));
        } else {
            segments.push(Segment {
                graph: seg.graph - 1,
                duration: seg.duration,
            });
        }
    }
    if !errs.is_empty() {
        return Err(errs);
    }
    let built = if s.periodic {
        SwitchingSchedule::periodic(graphs.to_vec(), &segments, s.min_dwell, s.window, t_end)
    } else {
        SwitchingSchedule::new(graphs.to_vec(), segments, s.min_dwell, s.window)
    };
    built.map_err(|e| vec![format!("schedule: {e}")])
}

fn check_checks(checks: &[CheckSpec], top: &Topology, errs: &mut Vec<String>) {
    let switching = matches!(top, Topology::Switching(_));
    let balanced = top.graphs().iter().all(is_balanced);
    for (i, c) in checks.iter().enumerate() {
        for (k, v) in &c.params {
            if !c.kind.accepts(k) {
                errs.push(format!(
                    "checks[{i}].params.{k}: not a parameter of {}",
                    c.kind
                ));
            } else if !v.is_finite() {
                errs.push(format!("checks[{i}].params.{k}: must be finite"));
            }
        }
        match c.kind {
            CheckKind::DecayBound if switching => errs.push(format!(
                "checks[{i}]: decay_bound applies to fixed topologies only"
            )),
            CheckKind::SumConservation if !balanced => errs.push(format!(
                "checks[{i}]: sum_conservation requires balanced graphs"
            )),
            CheckKind::LimitMean
                if switching && !balanced && !c.params.contains_key("target") =>
            {
                errs.push(format!(
                    "checks[{i}]: limit_mean on unbalanced switching graphs needs an explicit target"
                ))
            }
            _ => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXED: &str = r#"{
        "name": "demo",
        "graphs": [{"n": 4, "edges": [[3,1],[1,2],[1,3],[2,3],[3,4]]}],
        "sigma": 1.0,
        "gain": 0.05,
        "x0": [1, 20, 50, -5],
        "sim": {"dt": 0.01, "t_end": 1.0, "paths": 2, "seed": 42}
    }"#;

    fn errors(text: &str) -> Vec<String> {
        match parse_scenario(text) {
            Err(CliError::Invalid(es)) => es,
            other => panic!("expected validation errors, got {other:?}"),
        }
    }

    #[test]
    fn loads_fixed_scenario() {
        let s = parse_scenario(FIXED).unwrap();
        assert_eq!(s.n_nodes(), 4);
        assert!(!s.is_switching());
        assert_eq!(s.spec.gain, GainSpec::Value(0.05));
        assert_eq!(s.noise.iter().count(), 5);
        assert_eq!(s.record_every, 1);
    }

    #[test]
    fn wrong_x0_length_names_the_field() {
        let es = errors(&FIXED.replace("[1, 20, 50, -5]", "[1, 20, 50]"));
        assert!(es.iter().any(|e| e.starts_with("x0:")), "{es:?}");
    }

    #[test]
    fn reports_every_missing_field() {
        let es = errors(r#"{"name": "x", "graphs": []}"#);
        for f in ["sigma", "gain", "x0", "sim"] {
            assert!(es.iter().any(|e| e.starts_with(f)), "{f} not in {es:?}");
        }
    }

    #[test]
    fn reports_several_semantic_errors_at_once() {
        let text = FIXED
            .replace("[1, 20, 50, -5]", "[1, 20]")
            .replace("\"gain\": 0.05", "\"gain\": -1")
            .replace("\"paths\": 2", "\"paths\": 0");
        let es = errors(&text);
        assert!(es.len() >= 3, "{es:?}");
    }

    #[test]
    fn parse_errors_carry_a_position() {
        let es = errors("{\n  \"name\": \"x\",\n  \"graphs\": [oops]\n}");
        assert_eq!(es.len(), 1);
        assert!(es[0].contains("line 3"), "{es:?}");

        let es = errors(&FIXED.replace("\"dt\": 0.01", "\"dt\": \"fast\""));
        assert!(es[0].contains("sim.dt"), "{es:?}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let es = errors(&FIXED.replace("\"name\"", "\"colour\": 1, \"name\""));
        assert!(es[0].contains("colour"), "{es:?}");
    }

    #[test]
    fn fixed_mode_requires_one_graph() {
        let text = FIXED.replace(
            "\"graphs\": [",
            "\"graphs\": [{\"n\": 4, \"edges\": [[1,2]]}, ",
        );
        let es = errors(&text);
        assert!(es.iter().any(|e| e.contains("exactly one graph")), "{es:?}");
    }

    #[test]
    fn schedule_violations_are_reported() {
        let base = r#"{
            "name": "sw",
            "graphs": [{"n": 4, "edges": [[1,2],[2,1],[2,3],[3,2]]},
                       {"n": 4, "edges": [[3,4],[4,3],[1,3],[3,1]]}],
            "schedule": {"segments": [{"graph": 1, "duration": 1}, {"graph": 2, "duration": 1}],
                         "periodic": true, "min_dwell": 1, "window": 2},
            "sigma": 1, "gain": "auto", "x0": [1, 2, 5, -10],
            "sim": {"dt": 0.01, "t_end": 4, "paths": 1, "seed": 1}
        }"#;
        let s = parse_scenario(base).unwrap();
        assert!(s.is_switching());
        assert!(s.all_balanced());
        assert_eq!(s.spec.gain, GainSpec::Auto);

        // a dwell shorter than min_dwell
        let es = errors(&base.replace("\"min_dwell\": 1", "\"min_dwell\": 1.5"));
        assert!(es.iter().any(|e| e.contains("min_dwell")), "{es:?}");
        // a window too short for the union to hold a spanning tree
        let es = errors(&base.replace("\"window\": 2", "\"window\": 1"));
        assert!(es.iter().any(|e| e.starts_with("schedule:")), "{es:?}");
        // a reference to a graph that does not exist
        let es = errors(&base.replace("{\"graph\": 2,", "{\"graph\": 3,"));
        assert!(es.iter().any(|e| e.contains("segments[1].graph")), "{es:?}");
    }

    #[test]
    fn per_edge_sigma_must_name_edges() {
        let text = FIXED.replace(
            "\"sigma\": 1.0",
            "\"sigma\": [{\"edge\": [1,2], \"sigma\": 0.5}, {\"edge\": [4,1], \"sigma\": 1}]",
        );
        let es = errors(&text);
        assert!(es.iter().any(|e| e.contains("[4, 1]")), "{es:?}");

        let text = FIXED.replace(
            "\"sigma\": 1.0",
            "\"sigma\": [{\"edge\": [1,2], \"sigma\": 0.5}]",
        );
        let s = parse_scenario(&text).unwrap();
        assert_eq!(s.noise.get(Edge::new(0, 1)), 0.5);
        assert_eq!(s.noise.get(Edge::new(2, 0)), 0.0);
    }

    #[test]
    fn check_params_are_strict() {
        let text = FIXED.replace(
            "\"sim\"",
            "\"checks\": [{\"kind\": \"strong_consensus\", \"params\": {\"target\": 3}}], \"sim\"",
        );
        let es = errors(&text);
        assert!(es[0].contains("params.target"), "{es:?}");

        let text = FIXED.replace(
            "\"sim\"",
            "\"checks\": [{\"kind\": \"sum_conservation\"}], \"sim\"",
        );
        let es = errors(&text);
        assert!(es[0].contains("balanced"), "{es:?}");
    }

    #[test]
    fn record_interval_must_be_a_multiple_of_dt() {
        let text = FIXED.replace("\"seed\": 42", "\"seed\": 42, \"record_interval\": 0.1");
        assert_eq!(parse_scenario(&text).unwrap().record_every, 10);
        let es = errors(&FIXED.replace("\"seed\": 42", "\"seed\": 42, \"record_interval\": 0.015"));
        assert!(es[0].contains("record_interval"), "{es:?}");
    }

    #[test]
    fn overrides_touch_only_their_fields() {
        let s = parse_scenario(FIXED).unwrap();
        let o = Overrides {
            seed: Some(7),
            paths: Some(9),
            ..Default::default()
        };
        let t = s.with_overrides(&o).unwrap();
        assert_eq!(t.spec.sim.seed, 7);
        assert_eq!(t.spec.sim.paths, 9);
        let mut back = t.spec.clone();
        back.sim.seed = 42;
        back.sim.paths = 2;
        assert_eq!(back, s.spec);
    }

    #[test]
    fn spec_round_trips_through_json() {
        let s = parse_scenario(FIXED).unwrap();
        let text = serde_json::to_string_pretty(&s.spec).unwrap();
        assert_eq!(parse_scenario(&text).unwrap().spec, s.spec);
    }

    #[test]
    fn gain_spec_parses() {
        assert_eq!("auto".parse::<GainSpec>().unwrap(), GainSpec::Auto);
        assert_eq!("0.5".parse::<GainSpec>().unwrap(), GainSpec::Value(0.5));
        assert!("fast".parse::<GainSpec>().is_err());
    }
}
