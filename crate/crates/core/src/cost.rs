//! Per-node least-squares costs, restricted curvature bounds and contraction
//! factors.
//!
//! Node `v` holds `f_v(z) = ||y_v - Phi_v z||^2` with constant Hessian
//! `2 Phi_v^t Phi_v`. The restricted curvature constants `(alpha_k, beta_k)`
//! sandwich the Hessian quadratic form over all k-sparse directions; for a
//! quadratic cost they are the extreme eigenvalues of `2 Phi_S^t Phi_S` over
//! supports `S` of size k. Exact mode enumerates every support (bounded by an
//! enumeration budget); sampled mode inspects random supports and yields
//! inner, non-certified bounds.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, for_each_combination};
use crate::error::{Error, Result};
use crate::signals::SparseSignal;

/// Exact-mode enumeration is refused above this many supports.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

/// Default number of random supports in sampled mode.
pub const DEFAULT_CURVATURE_SAMPLES: usize = 500;

/// One node's least-squares measurement model.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresCost {
    node: usize,
    phi: DMatrix<f64>,
    y: DVector<f64>,
}

impl LeastSquaresCost {
    pub fn new(node: usize, phi: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if phi.nrows() != y.len() {
            return Err(Error::invalid(format!(
                "measurement matrix has {} rows but y has {} entries",
                phi.nrows(),
                y.len()
            )));
        }
        Ok(LeastSquaresCost { node, phi, y })
    }

    pub fn node(&self) -> usize {
        self.node
    }

    /// Number of measurements (rows of Phi).
    pub fn measurements(&self) -> usize {
        self.phi.nrows()
    }

    /// Ambient dimension (columns of Phi).
    pub fn dimension(&self) -> usize {
        self.phi.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn value(&self, z: &DVector<f64>) -> Result<f64> {
        self.check_dim(z)?;
        Ok((&self.y - &self.phi * z).norm_squared())
    }

    /// Gradient `2 Phi^t (Phi z - y)`. The factor two from differentiating
    /// the squared norm is kept so that the Hessian is `2 Phi^t Phi` and the
    /// curvature constants below are consistent with it.
    pub fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        let residual = &self.phi * z - &self.y;
        Ok(2.0 * self.phi.transpose() * residual)
    }

    /// The constant Hessian `2 Phi^t Phi`.
    pub fn gram(&self) -> DMatrix<f64> {
        2.0 * self.phi.transpose() * &self.phi
    }

    /// Stacks several nodes' measurements into one centralized cost.
    pub fn stack(costs: &[LeastSquaresCost]) -> Result<LeastSquaresCost> {
        let first = costs
            .first()
            .ok_or_else(|| Error::invalid("cannot stack zero costs"))?;
        let n = first.dimension();
        let total_m: usize = costs.iter().map(|c| c.measurements()).sum();
        let mut phi = DMatrix::zeros(total_m, n);
        let mut y = DVector::zeros(total_m);
        let mut row = 0;
        for c in costs {
            if c.dimension() != n {
                return Err(Error::invalid("cannot stack costs of different dimensions"));
            }
            phi.view_mut((row, 0), (c.measurements(), n))
                .copy_from(&c.phi);
            y.rows_mut(row, c.measurements()).copy_from(&c.y);
            row += c.measurements();
        }
        LeastSquaresCost::new(0, phi, y)
    }

    pub fn to_json(&self) -> CostJson {
        CostJson {
            node: self.node,
            m: self.measurements(),
            n: self.dimension(),
            phi: self.phi.transpose().as_slice().to_vec(),
            y: self.y.as_slice().to_vec(),
        }
    }

    pub fn from_json(doc: &CostJson) -> Result<Self> {
        if doc.phi.len() != doc.m * doc.n {
            return Err(Error::invalid(format!(
                "Phi array has {} entries, expected {}",
                doc.phi.len(),
                doc.m * doc.n
            )));
        }
        if doc.y.len() != doc.m {
            return Err(Error::invalid("y length does not match M"));
        }
        LeastSquaresCost::new(
            doc.node,
            DMatrix::from_row_slice(doc.m, doc.n, &doc.phi),
            DVector::from_row_slice(&doc.y),
        )
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.dimension() {
            return Err(Error::invalid(format!(
                "vector of length {} against cost of dimension {}",
                z.len(),
                self.dimension()
            )));
        }
        Ok(())
    }
}

/// Measurement set serialization: `Phi` is stored row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostJson {
    pub node: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Phi")]
    pub phi: Vec<f64>,
    pub y: Vec<f64>,
}

/// Two-sided restricted curvature bounds at a given sparsity order.
///
/// `alpha` may be zero when the order exceeds the number of measurements (any
/// such support is rank deficient); the positive-definiteness assumption then
/// fails at that order and downstream stability conditions cannot hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    pub alpha: f64,
    pub beta: f64,
    pub order: usize,
    /// True when every support of the given order was enumerated; sampled
    /// bounds are inner estimates and not certified.
    pub exact: bool,
}

impl CurvatureBounds {
    /// The step size minimizing the contraction factor, `2/(alpha + beta)`.
    pub fn optimal_step(&self) -> f64 {
        2.0 / (self.alpha + self.beta)
    }

    /// Contraction factor at the optimal step, `(beta - alpha)/(beta + alpha)`.
    pub fn optimal_contraction(&self) -> f64 {
        (self.beta - self.alpha) / (self.beta + self.alpha)
    }
}

/// How restricted curvature is explored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurvatureMode {
    /// Enumerate all C(N, k) supports. Refused when the count exceeds
    /// [`ENUMERATION_BUDGET`].
    Exact,
    /// Inspect `samples` random supports (inner bounds, not certified).
    Sampled { samples: usize },
}

/// Extreme eigenvalues of the Hessian restricted to `support`.
pub(crate) fn restricted_extremes(gram: &DMatrix<f64>, support: &[usize]) -> (f64, f64) {
    let k = support.len();
    if k == 0 {
        return (0.0, 0.0);
    }
    if k == 1 {
        let d = gram[(support[0], support[0])];
        return (d, d);
    }
    let sub = DMatrix::from_fn(k, k, |i, j| gram[(support[i], support[j])]);
    let eig = sub.symmetric_eigen();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &e in eig.eigenvalues.iter() {
        lo = lo.min(e);
        hi = hi.max(e);
    }
    (lo, hi)
}

/// Computes `(alpha_k, beta_k)` for `cost` at order `k`.
///
/// Exact mode enumerates every size-k support of the Hessian and is the only
/// certified route; sampled mode draws supports from a seeded generator and
/// can only shrink the reported range. Results are deterministic given the
/// mode and seed; exact enumeration is parallelized internally.
pub fn restricted_curvature(
    cost: &LeastSquaresCost,
    k: usize,
    mode: CurvatureMode,
    seed: u64,
) -> Result<CurvatureBounds> {
    let n = cost.dimension();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "curvature order {k} outside 1..={n}"
        )));
    }
    let gram = cost.gram();
    let (alpha, beta, exact) = match mode {
        CurvatureMode::Exact => {
            let count = binomial(n, k);
            if count > ENUMERATION_BUDGET {
                return Err(Error::BudgetExceeded {
                    n,
                    k,
                    count,
                    budget: ENUMERATION_BUDGET,
                });
            }
            // Parallelize over the first support element; each worker
            // enumerates the lexicographic tail. Min/max reduction is order
            // independent, so the result is deterministic.
            let (lo, hi) = (0..=(n - k))
                .into_par_iter()
                .map(|first| {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    let mut support = vec![0usize; k];
                    support[0] = first;
                    for_each_combination(n - first - 1, k - 1, |rest| {
                        for (slot, &r) in support[1..].iter_mut().zip(rest) {
                            *slot = first + 1 + r;
                        }
                        let (a, b) = restricted_extremes(&gram, &support);
                        lo = lo.min(a);
                        hi = hi.max(b);
                    });
                    if k == 1 {
                        let (a, b) = restricted_extremes(&gram, &support[..1]);
                        lo = lo.min(a);
                        hi = hi.max(b);
                    }
                    (lo, hi)
                })
                .reduce(
                    || (f64::INFINITY, f64::NEG_INFINITY),
                    |x, y| (x.0.min(y.0), x.1.max(y.1)),
                );
            (lo, hi, true)
        }
        CurvatureMode::Sampled { samples } => {
            if samples == 0 {
                return Err(Error::invalid("sampled mode needs at least one sample"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut scratch: Vec<usize> = (0..n).collect();
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for _ in 0..samples {
                for i in 0..k {
                    let j = rng.gen_range(i..n);
                    scratch.swap(i, j);
                }
                let (a, b) = restricted_extremes(&gram, &scratch[..k]);
                lo = lo.min(a);
                hi = hi.max(b);
            }
            (lo, hi, false)
        }
    };
    Ok(CurvatureBounds {
        alpha: alpha.max(0.0), // clip eigensolver noise around singular supports
        beta,
        order: k,
        exact,
    })
}

/// Per-node contraction factor of the thresholded gradient step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionFactor {
    pub omega: f64,
    pub mu: f64,
    pub order: usize,
}

/// Evaluates `omega = |1 - mu (beta + alpha)/2| + mu (beta - alpha)/2`, the
/// worst-case distortion of `I - mu H` over directions restricted to the
/// curvature order.
pub fn contraction_factor(bounds: &CurvatureBounds, mu: f64) -> Result<ContractionFactor> {
    if !(mu > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {mu}")));
    }
    let mid = (bounds.beta + bounds.alpha) / 2.0;
    let half_width = (bounds.beta - bounds.alpha) / 2.0;
    Ok(ContractionFactor {
        omega: (1.0 - mu * mid).abs() + mu * half_width,
        mu,
        order: bounds.order,
    })
}

/// Outcome of checking the gradient-perturbation inequalities on one triple.
#[derive(Debug, Clone)]
pub struct GradientPerturbationReport {
    pub rho: f64,
    /// `|1 - rho (alpha+beta)/2| + rho (beta-alpha)/2` on the union support.
    pub rho_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    pub union_support_size: usize,
    /// `<x, g(y,z)>` and its bound `rho' ||x|| ||y - z||`.
    pub inner_lhs: f64,
    pub inner_rhs: f64,
    /// `||g(y,z) restricted to supp(x)||` and its bound `rho' ||y - z||`.
    pub restricted_lhs: f64,
    pub restricted_rhs: f64,
    pub inner_slack: f64,
    pub restricted_slack: f64,
    pub pass: bool,
}

/// Tolerance below which a slack is considered a failure.
const PERTURBATION_SLACK_TOL: f64 = -1e-9;

/// Checks, for `g(y,z) = y - z - rho (grad f(y) - grad f(z))`, that
///
/// * `<x, g(y,z)> <= rho' ||x|| ||y - z||`, and
/// * `||g(y,z)_supp(x)|| <= rho' ||y - z||`,
///
/// where `rho'` is computed from the exact curvature extremes on the union of
/// the three supports (exact for quadratic costs, whose Hessian is constant).
pub fn check_gradient_perturbation(
    cost: &LeastSquaresCost,
    rho: f64,
    x: &SparseSignal,
    y: &SparseSignal,
    z: &SparseSignal,
) -> Result<GradientPerturbationReport> {
    if rho < 0.0 {
        return Err(Error::invalid("rho must be nonnegative"));
    }
    let n = cost.dimension();
    for (name, s) in [("x", x), ("y", y), ("z", z)] {
        if s.len() != n {
            return Err(Error::invalid(format!(
                "{name} has length {} but cost dimension is {n}",
                s.len()
            )));
        }
    }
    let union = x.support().union(y.support()).union(z.support());
    let gram = cost.gram();
    let (alpha, beta) = restricted_extremes(&gram, union.as_slice());
    let alpha = alpha.max(0.0);
    let mid = (beta + alpha) / 2.0;
    let half_width = (beta - alpha) / 2.0;
    let rho_prime = (1.0 - rho * mid).abs() + rho * half_width;

    let grad_diff = cost.gradient(y.values())? - cost.gradient(z.values())?;
    let g = y.values() - z.values() - rho * grad_diff;
    let yz_dist = (y.values() - z.values()).norm();

    let inner_lhs = x.values().dot(&g);
    let inner_rhs = rho_prime * x.norm() * yz_dist;
    let restricted_lhs = crate::signals::restrict(&g, x.support())?.norm();
    let restricted_rhs = rho_prime * yz_dist;

    let inner_slack = inner_rhs - inner_lhs;
    let restricted_slack = restricted_rhs - restricted_lhs;
    Ok(GradientPerturbationReport {
        rho,
        rho_prime,
        alpha,
        beta,
        union_support_size: union.len(),
        inner_lhs,
        inner_rhs,
        restricted_lhs,
        restricted_rhs,
        inner_slack,
        restricted_slack,
        pass: inner_slack >= PERTURBATION_SLACK_TOL
            && restricted_slack >= PERTURBATION_SLACK_TOL,
    })
}
