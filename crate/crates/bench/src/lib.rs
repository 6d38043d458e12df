//! Shared fixtures for the criterion benches.

use stoch_consensus::{Digraph, NoiseProfile, SimulationParams};

/// Four-agent directed graph with stationary distribution (1/2, 1/4, 1/4, 0).
pub fn four_agent_graph() -> Digraph {
    Digraph::from_pairs(4, &[(2, 0), (0, 1), (0, 2), (1, 2), (2, 3)]).expect("valid graph")
}

/// Directed ring on `n` agents with one chord, so it has a spanning tree.
pub fn ring_with_chord(n: usize) -> Digraph {
    let mut pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    pairs.push((0, n / 2));
    Digraph::from_pairs(n, &pairs).expect("valid graph")
}

pub fn unit_noise(g: &Digraph) -> NoiseProfile {
    NoiseProfile::uniform(g, 1.0).expect("nonnegative sigma")
}

pub fn short_run(n: usize, paths: usize) -> SimulationParams {
    SimulationParams {
        dt: 1e-3,
        t_end: 1.0,
        n_paths: paths,
        seed: 42,
        gain: 0.05,
        x0: (0..n).map(|i| i as f64).collect(),
        record_every: 100,
    }
}
