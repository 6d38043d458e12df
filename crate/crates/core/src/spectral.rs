//! Spectral certification of the consensus protocol.
//!
//! For a Laplacian `L` whose digraph has a spanning tree, `-L` generates a
//! Markov chain with a unique stationary distribution `pi`. With
//! `Phi = [1, Phi2]` and `Phi^{-1} = [pi; Psi2]`,
//!
//! ```text
//! Phi^{-1} (-L) Phi = [[0, 0], [0, L~]]      L~ Hurwitz
//! Q L~ + L~^T Q = -I                          Q > 0
//! ```
//!
//! `Phi2` is an orthonormal basis of the kernel of `pi`, built from a single
//! Householder reflection so the output is deterministic. The admissible
//! gain bound and certified rate do not depend on which orthonormal basis
//! is used; only the printed matrices do.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    disagreement_form, edge_multiplicity, has_spanning_tree, union, Digraph, NoiseProfile,
};

/// Entries of `pi` above this (in magnitude) below zero are a numerical failure.
const PI_NEGATIVE_TOL: f64 = 1e-12;
const HURWITZ_MARGIN: f64 = 1e-9;
/// `|pi_i - 1/N|` above this counts towards `kappa`.
const KAPPA_TOL: f64 = 1e-10;

/// Upper limit on an admissible consensus gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainBound {
    Finite(f64),
    /// Noise-free case: every positive gain is admissible.
    Unbounded,
}

impl GainBound {
    pub fn finite(self) -> Option<f64> {
        match self {
            GainBound::Finite(b) => Some(b),
            GainBound::Unbounded => None,
        }
    }

    /// `0 < a < bound`.
    pub fn admits(self, a: f64) -> bool {
        a > 0.0
            && match self {
                GainBound::Finite(b) => a < b,
                GainBound::Unbounded => a.is_finite(),
            }
    }
}

/// Row-major dense matrix with explicit dimensions, for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&DMatrix<f64>> for DenseMatrix {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl From<&DenseMatrix> for DMatrix<f64> {
    fn from(m: &DenseMatrix) -> Self {
        DMatrix::from_row_slice(m.rows, m.cols, &m.data)
    }
}

/// Stationary distribution, change of basis and Lyapunov matrix for one Laplacian.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDecomposition {
    pub pi: DVector<f64>,
    /// `N x (N-1)`, orthonormal columns spanning `ker(pi)`.
    pub phi2: DMatrix<f64>,
    /// `(N-1) x N`, the lower block of `Phi^{-1}`.
    pub psi2: DMatrix<f64>,
    /// `(N-1) x (N-1)` Hurwitz block `Psi2 (-L) Phi2`.
    pub l_tilde: DMatrix<f64>,
    /// Solution of `Q L~ + L~^T Q = -I`.
    pub q: DMatrix<f64>,
    pub q_lambda_max: f64,
}

/// Unique `pi >= 0` with `pi L = 0`, `sum(pi) = 1`.
///
/// Taken as the right singular vector of `L^T` for its smallest singular
/// value; fails when the null space of `L^T` is more than one-dimensional.
pub fn stationary_distribution(l: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = l.nrows();
    if n == 0 || l.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: l.ncols(),
        });
    }
    if n == 1 {
        return Ok(DVector::from_element(1, 1.0));
    }
    let svd = l.transpose().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let scale = svd.singular_values[order[n - 1]].max(1.0);
    if svd.singular_values[order[1]] <= 1e-8 * scale {
        return Err(Error::NoSpanningTree);
    }
    let mut pi: DVector<f64> = v_t.row(order[0]).transpose();
    let total = pi.sum();
    if total.abs() < f64::EPSILON {
        return Err(Error::NoSpanningTree);
    }
    pi /= total;
    if pi.iter().any(|&p| p < -1e-9) {
        return Err(Error::NoSpanningTree);
    }
    for p in pi.iter_mut() {
        if *p < PI_NEGATIVE_TOL {
            *p = p.max(0.0);
        }
    }
    let total = pi.sum();
    Ok(pi / total)
}

/// Orthonormal basis (as columns) of the orthogonal complement of `v`.
///
/// Columns `1..N` of the Householder reflector mapping `v/|v|` onto the
/// first axis, each flipped so that its first nonzero entry is positive.
pub fn complement_basis(v: &DVector<f64>) -> DMatrix<f64> {
    let n = v.len();
    let unit = v / v.norm();
    let mut w = unit.clone();
    w[0] += if unit[0] >= 0.0 { 1.0 } else { -1.0 };
    let reflector = DMatrix::identity(n, n) - (&w * w.transpose()) * (2.0 / w.norm_squared());
    let mut basis = reflector.columns(1, n - 1).into_owned();
    for mut col in basis.column_iter_mut() {
        if let Some(&lead) = col.iter().find(|x| x.abs() > 1e-12) {
            if lead < 0.0 {
                col.neg_mut();
            }
        }
    }
    basis
}

/// Solves `Q A + A^T Q = -I` through the `(n^2) x (n^2)` Kronecker system,
/// then symmetrizes.
pub fn solve_lyapunov(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    // column-major vec: vec(Q A) = (A^T kron I) vec(Q), vec(A^T Q) = (I kron A^T) vec(Q)
    let system = a.transpose().kronecker(&eye) + eye.kronecker(&a.transpose());
    let rhs = -DVector::from_column_slice(eye.as_slice());
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Lyapunov("singular Kronecker system".into()))?;
    let q = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&q + q.transpose()) * 0.5)
}

/// Full decomposition of a Laplacian; needs a spanning tree and `N >= 2`.
pub fn decompose(l: &DMatrix<f64>) -> Result<SpectralDecomposition> {
    let n = l.nrows();
    if n < 2 {
        return Err(Error::InvalidGraph(
            "decomposition needs at least two agents".into(),
        ));
    }
    let pi = stationary_distribution(l)?;
    let phi2 = complement_basis(&pi);

    let mut phi = DMatrix::zeros(n, n);
    phi.column_mut(0).fill(1.0);
    phi.columns_mut(1, n - 1).copy_from(&phi2);
    let phi_inv = phi
        .try_inverse()
        .ok_or_else(|| Error::Lyapunov("Phi is singular".into()))?;
    let psi2 = phi_inv.rows(1, n - 1).into_owned();

    let l_tilde = &psi2 * (-l) * &phi2;
    let eigs = l_tilde.complex_eigenvalues();
    if let Some(worst) = eigs
        .iter()
        .max_by(|a, b| a.re.total_cmp(&b.re))
        .filter(|z| z.re >= -HURWITZ_MARGIN)
    {
        return Err(Error::NotHurwitz {
            re: worst.re,
            im: worst.im,
        });
    }

    let q = solve_lyapunov(&l_tilde)?;
    let q_eigs = q.clone().symmetric_eigenvalues();
    if q_eigs.min() <= 0.0 {
        return Err(Error::Lyapunov(format!(
            "Q is not positive definite (min eigenvalue {})",
            q_eigs.min()
        )));
    }
    Ok(SpectralDecomposition {
        pi,
        phi2,
        psi2,
        l_tilde,
        q,
        q_lambda_max: q_eigs.max(),
    })
}

/// `c1 = sum_i [Psi2^T Q Psi2]_ii * sum_{j in N_i} (sigma_ji |phi_j - phi_i|)^2`
/// and the fixed-topology bound `1 / c1`.
pub fn fixed_gain_bound(
    d: &SpectralDecomposition,
    g: &Digraph,
    noise: &NoiseProfile,
) -> (f64, GainBound) {
    let weights = d.psi2.transpose() * &d.q * &d.psi2;
    let mut c1 = 0.0;
    for e in g.edges() {
        let sigma = noise.get(e);
        if sigma == 0.0 {
            continue;
        }
        let gap = (d.phi2.row(e.from) - d.phi2.row(e.to)).norm();
        c1 += weights[(e.to, e.to)] * (sigma * gap).powi(2);
    }
    let bound = if c1 > 0.0 {
        GainBound::Finite(1.0 / c1)
    } else {
        GainBound::Unbounded
    };
    (c1, bound)
}

/// Certified mean-square rate `(a*abar - a^2) / (abar * lambda_max(Q))`,
/// or `a / lambda_max(Q)` when the bound is unbounded.
pub fn rate_gamma1(a: f64, bound: GainBound, q_lambda_max: f64) -> Result<f64> {
    if !bound.admits(a) {
        return Err(Error::GainInadmissible {
            gain: a,
            bound: bound.finite().unwrap_or(f64::INFINITY),
        });
    }
    Ok(match bound {
        GainBound::Finite(abar) => (a * abar - a * a) / (abar * q_lambda_max),
        GainBound::Unbounded => a / q_lambda_max,
    })
}

/// `c4 = 2 (N-1) max sigma^2` and the switching bound `2N / c4`.
pub fn switching_gain_bound(n: usize, noise: &NoiseProfile) -> Result<(f64, GainBound)> {
    if n < 2 {
        return Err(Error::InvalidGraph(
            "switching bound needs at least two agents".into(),
        ));
    }
    let max_sigma = noise.max_sigma();
    let c4 = 2.0 * (n as f64 - 1.0) * max_sigma * max_sigma;
    let bound = if c4 > 0.0 {
        GainBound::Finite(2.0 * n as f64 / c4)
    } else {
        GainBound::Unbounded
    };
    Ok((c4, bound))
}

/// Constants relating the summed per-graph disagreement forms to `U(x) = x^T (N I - 1 1^T) x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnionConstants {
    pub c_star: f64,
    pub c_star_star: f64,
    pub e: usize,
}

/// Extremal Rayleigh quotients of `sum_k H_k` against `U` on `1^perp`.
///
/// On `1^perp` the form `U` is `N |x|^2`, so the quotients are the extreme
/// eigenvalues of the restricted sum divided by `N`.
pub fn union_constants(gs: &[Digraph]) -> Result<UnionConstants> {
    let merged = union(gs)?;
    if !has_spanning_tree(&merged) {
        return Err(Error::NoSpanningTree);
    }
    let n = merged.n_nodes();
    let e = edge_multiplicity(gs)?;
    let h_sum = gs
        .iter()
        .fold(DMatrix::zeros(n, n), |acc, g| acc + disagreement_form(g));
    let basis = complement_basis(&DVector::from_element(n, 1.0));
    let restricted = basis.transpose() * h_sum * &basis;
    let eigs = restricted.symmetric_eigenvalues();
    Ok(UnionConstants {
        c_star: eigs.min() / n as f64,
        c_star_star: eigs.max() / n as f64,
        e,
    })
}

/// Initial states whose stationary-weighted mean equals their plain mean.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageSubspace {
    /// Number of nodes with `pi_i != 1/N`.
    pub kappa: usize,
    /// `pi_i - 1/N`.
    pub weights: DVector<f64>,
}

impl AverageSubspace {
    pub fn contains(&self, x0: &[f64]) -> bool {
        let norm = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let dot: f64 = self.weights.iter().zip(x0).map(|(w, x)| w * x).sum();
        dot.abs() <= 1e-9 * norm
    }
}

pub fn average_subspace(pi: &DVector<f64>) -> AverageSubspace {
    let uniform = 1.0 / pi.len() as f64;
    let weights = pi.map(|p| p - uniform);
    let kappa = weights.iter().filter(|w| w.abs() > KAPPA_TOL).count();
    AverageSubspace { kappa, weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{is_balanced, laplacian, Edge};
    use approx::assert_abs_diff_eq;

    fn example_5_1() -> Digraph {
        Digraph::from_pairs(4, &[(2, 0), (0, 1), (0, 2), (1, 2), (2, 3)]).unwrap()
    }

    fn complete(n: usize) -> Digraph {
        Digraph::new(
            n,
            (0..n).flat_map(|i| {
                (0..n)
                    .filter(move |&j| j != i)
                    .map(move |j| Edge::new(i, j))
            }),
        )
        .unwrap()
    }

    #[test]
    fn stationary_distribution_examples() {
        let pi = stationary_distribution(&laplacian(&example_5_1())).unwrap();
        let expected = DVector::from_vec(vec![0.5, 0.25, 0.25, 0.0]);
        assert!((&pi - expected).amax() <= 1e-10);

        let pi = stationary_distribution(&laplacian(&complete(3))).unwrap();
        assert!(pi.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-12));

        let cycle = Digraph::from_pairs(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let pi = stationary_distribution(&laplacian(&cycle)).unwrap();
        assert!(pi.iter().all(|&p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn stationary_distribution_rejects_forests() {
        let two = Digraph::undirected(4, &[(0, 1), (2, 3)]).unwrap();
        assert_eq!(
            stationary_distribution(&laplacian(&two)),
            Err(Error::NoSpanningTree)
        );
        assert!(decompose(&laplacian(&two)).is_err());
    }

    #[test]
    fn two_node_decomposition_by_hand() {
        let g = Digraph::undirected(2, &[(0, 1)]).unwrap();
        let d = decompose(&laplacian(&g)).unwrap();
        assert_abs_diff_eq!(d.pi[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(d.l_tilde[(0, 0)], -2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.q[(0, 0)], 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(d.q_lambda_max, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn phi2_is_canonical() {
        let d = decompose(&laplacian(&example_5_1())).unwrap();
        let again = decompose(&laplacian(&example_5_1())).unwrap();
        assert_eq!(d, again);
        for col in d.phi2.column_iter() {
            let lead = col.iter().find(|x| x.abs() > 1e-12).unwrap();
            assert!(*lead > 0.0);
        }
        let gram = d.phi2.transpose() * &d.phi2;
        assert!((gram - DMatrix::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn psi2_matches_closed_form() {
        // With orthonormal Phi2 and pi Phi2 = 0: Psi2 = Phi2^T (I - 1 pi).
        let d = decompose(&laplacian(&example_5_1())).unwrap();
        let ones_pi = DMatrix::from_element(4, 1, 1.0) * d.pi.transpose();
        let closed = d.phi2.transpose() * (DMatrix::identity(4, 4) - ones_pi);
        assert!((closed - &d.psi2).amax() < 1e-12);
    }

    #[test]
    fn lyapunov_residual_is_small() {
        let a = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 0.0, -1.0, 0.5, 0.3, 0.0, -3.0]);
        let q = solve_lyapunov(&a).unwrap();
        let residual = &q * &a + a.transpose() * &q + DMatrix::identity(3, 3);
        assert!(residual.amax() < 1e-12);
    }

    #[test]
    fn fixed_gain_bound_examples() {
        let g = example_5_1();
        let d = decompose(&laplacian(&g)).unwrap();
        let (c1, bound) = fixed_gain_bound(&d, &g, &NoiseProfile::zero());
        assert_eq!(c1, 0.0);
        assert_eq!(bound, GainBound::Unbounded);

        let (c1, bound) = fixed_gain_bound(&d, &g, &NoiseProfile::uniform(&g, 1.0).unwrap());
        let abar = bound.finite().unwrap();
        assert!(abar > 0.05);
        assert_abs_diff_eq!(abar, 1.0 / c1, epsilon = 1e-15);

        let (c1_doubled, bound2) =
            fixed_gain_bound(&d, &g, &NoiseProfile::uniform(&g, 2.0).unwrap());
        assert_abs_diff_eq!(c1_doubled, 4.0 * c1, epsilon = 1e-12);
        assert_abs_diff_eq!(bound2.finite().unwrap(), abar / 4.0, epsilon = 1e-12);
    }

    #[test]
    fn gamma1_examples() {
        let bound = GainBound::Finite(0.4);
        let lam = 0.5;
        assert_abs_diff_eq!(
            rate_gamma1(0.2, bound, lam).unwrap(),
            0.4 / (4.0 * lam),
            epsilon = 1e-15
        );
        assert!(rate_gamma1(1e-9, bound, lam).unwrap() < 1e-8);
        assert!(matches!(
            rate_gamma1(0.4, bound, lam),
            Err(Error::GainInadmissible { .. })
        ));
        assert!(rate_gamma1(0.0, bound, lam).is_err());
        assert_abs_diff_eq!(
            rate_gamma1(2.0, GainBound::Unbounded, lam).unwrap(),
            4.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn switching_bound_examples() {
        let g4 = complete(4);
        let (c4, bound) =
            switching_gain_bound(4, &NoiseProfile::uniform(&g4, 1.0).unwrap()).unwrap();
        assert_eq!(c4, 6.0);
        assert_abs_diff_eq!(bound.finite().unwrap(), 4.0 / 3.0, epsilon = 1e-15);

        let g2 = complete(2);
        let (_, bound) =
            switching_gain_bound(2, &NoiseProfile::uniform(&g2, 1.0).unwrap()).unwrap();
        assert_eq!(bound, GainBound::Finite(2.0));

        let (_, bound) = switching_gain_bound(4, &NoiseProfile::zero()).unwrap();
        assert_eq!(bound, GainBound::Unbounded);
    }

    #[test]
    fn union_constants_examples() {
        let k = union_constants(&[complete(5)]).unwrap();
        assert_abs_diff_eq!(k.c_star, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(k.c_star_star, 1.0, epsilon = 1e-12);
        assert_eq!(k.e, 1);

        let a = Digraph::undirected(4, &[(0, 1), (1, 2)]).unwrap();
        let b = Digraph::undirected(4, &[(2, 3), (0, 2)]).unwrap();
        let k = union_constants(&[a, b]).unwrap();
        assert!(k.c_star > 0.0 && k.c_star <= k.c_star_star);
        assert_eq!(k.e, 1);

        let tree = Digraph::from_pairs(4, &[(0, 1), (0, 2), (2, 3)]).unwrap();
        let one = union_constants(std::slice::from_ref(&tree)).unwrap();
        let two = union_constants(&[tree.clone(), tree]).unwrap();
        assert_eq!(two.e, 2);
        assert_abs_diff_eq!(two.c_star, 2.0 * one.c_star, epsilon = 1e-12);
        assert_abs_diff_eq!(two.c_star_star, 2.0 * one.c_star_star, epsilon = 1e-12);

        let fork_in = Digraph::from_pairs(3, &[(0, 2), (1, 2)]).unwrap();
        assert_eq!(union_constants(&[fork_in]), Err(Error::NoSpanningTree));
    }

    #[test]
    fn average_subspace_examples() {
        let pi = stationary_distribution(&laplacian(&example_5_1())).unwrap();
        let sub = average_subspace(&pi);
        assert_eq!(sub.kappa, 2);
        assert!(sub.contains(&[-5.0, 20.0, 50.0, -5.0]));
        assert!(sub.contains(&[3.0, -1.0, 7.0, 3.0]));
        assert!(!sub.contains(&[1.0, 20.0, 50.0, -5.0]));
        let x0 = [-5.0, 20.0, 50.0, -5.0];
        let weighted: f64 = pi.iter().zip(&x0).map(|(p, x)| p * x).sum();
        assert_abs_diff_eq!(weighted, 15.0, epsilon = 1e-12);

        let uniform = DVector::from_element(4, 0.25);
        let sub = average_subspace(&uniform);
        assert_eq!(sub.kappa, 0);
        assert!(sub.contains(&[1.0, 2.0, 3.0, 100.0]));
    }

    #[test]
    fn balanced_strongly_connected_graphs_have_uniform_pi() {
        let cycle =
            Digraph::from_pairs(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2), (2, 0)])
                .unwrap();
        assert!(is_balanced(&cycle));
        let d = decompose(&laplacian(&cycle)).unwrap();
        assert!(d.pi.iter().all(|&p| (p - 0.2).abs() <= 1e-10));
    }
}
