//! Synchronous execution of the distributed hard-thresholding algorithms.
//!
//! One step of the diffusion algorithms has every (participating) node take a
//! local gradient step, exchange the intermediate with its neighbors, combine
//! the received intermediates through the columns of the combination matrix,
//! and project the combination back onto K-sparse vectors:
//!
//! * DiFIGHT exchanges raw intermediates (estimate support, values, and the
//!   gradient: `2K + N` scalars per message).
//! * MoDiFIGHT hard-thresholds the intermediate before the exchange, so only
//!   the estimate travels (`2K` scalars per message).
//! * Consensus IHT combines neighbors' previous estimates first and then
//!   applies the local gradient and threshold to the combination.
//! * Non-cooperative IHT never communicates; centralized IHT stacks every
//!   node's measurements into one solver.
//!
//! Under a selection strategy only the drawn group `G` combines and updates;
//! nodes adjacent to `G` still compute intermediates for their participating
//! neighbors, and everyone else carries its estimate forward unchanged.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::LeastSquaresCost;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::signals::{hard_threshold, SparseSignal};
use crate::strategies::SelectionStrategy;

/// The algorithm variants the engine can execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AlgorithmKind {
    #[serde(rename = "difight")]
    Difight,
    #[serde(rename = "modifight")]
    Modifight,
    #[serde(rename = "consensus")]
    ConsensusIht,
    #[serde(rename = "noncooperative")]
    NonCooperativeIht,
    #[serde(rename = "centralized")]
    CentralizedIht,
}

impl AlgorithmKind {
    pub fn label(&self) -> &'static str {
        match self {
            AlgorithmKind::Difight => "difight",
            AlgorithmKind::Modifight => "modifight",
            AlgorithmKind::ConsensusIht => "consensus",
            AlgorithmKind::NonCooperativeIht => "noncooperative",
            AlgorithmKind::CentralizedIht => "centralized",
        }
    }

    /// Scalars carried by one neighbor message: support indices and values
    /// (`2K`) plus, for DiFIGHT, the dense gradient (`N`). `None` for the
    /// variants that never communicate.
    pub fn values_per_message(&self, sparsity: usize, dimension: usize) -> Option<usize> {
        match self {
            AlgorithmKind::Difight => Some(2 * sparsity + dimension),
            AlgorithmKind::Modifight | AlgorithmKind::ConsensusIht => Some(2 * sparsity),
            AlgorithmKind::NonCooperativeIht | AlgorithmKind::CentralizedIht => None,
        }
    }

    /// Amplification constant of the error-recursion bound: 2 for DiFIGHT,
    /// 4 for MoDiFIGHT, undefined for the baselines.
    pub fn error_amplification(&self) -> Option<f64> {
        match self {
            AlgorithmKind::Difight => Some(2.0),
            AlgorithmKind::Modifight => Some(4.0),
            _ => None,
        }
    }

    fn runs_over_network(&self) -> bool {
        matches!(
            self,
            AlgorithmKind::Difight | AlgorithmKind::Modifight | AlgorithmKind::ConsensusIht
        )
    }
}

/// Full description of a run: algorithm, sparsity, steps, schedule.
#[derive(Debug, Clone)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub sparsity: usize,
    /// One step size per node (a single entry for the centralized variant).
    pub step_sizes: Vec<f64>,
    pub max_iterations: usize,
    /// `None` runs the deterministic schedule where every node participates.
    pub strategy: Option<SelectionStrategy>,
    /// Deterministic runs halt once no estimate moves by more than this.
    /// Ignored under a selection strategy: a step that updates only an
    /// already-converged group would otherwise stop the whole network early.
    pub convergence_tol: Option<f64>,
    /// Optional halt once the relative mean-square deviation from the target
    /// signal drops below this threshold.
    pub msd_target: Option<f64>,
    /// Record the full estimate history every this many iterations.
    pub record_estimates: Option<usize>,
}

/// Default movement tolerance for the deterministic convergence exit.
pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-12;

impl AlgorithmSpec {
    pub fn new(
        kind: AlgorithmKind,
        sparsity: usize,
        step_sizes: Vec<f64>,
        max_iterations: usize,
    ) -> Self {
        AlgorithmSpec {
            kind,
            sparsity,
            step_sizes,
            max_iterations,
            strategy: None,
            convergence_tol: Some(DEFAULT_CONVERGENCE_TOL),
            msd_target: None,
            record_estimates: None,
        }
    }

    pub fn with_strategy(mut self, strategy: SelectionStrategy) -> Self {
        self.strategy = Some(strategy);
        self
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    MaxIterations,
    /// No estimate moved more than the convergence tolerance.
    Converged { iteration: usize },
    /// Relative mean-square deviation crossed the requested target.
    ReachedTarget { iteration: usize },
}

/// Everything recorded during a run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub seed: u64,
    pub algorithm: AlgorithmKind,
    pub strategy: Option<String>,
    /// Norm of the target signal, used for relative error metrics.
    pub x_star_norm: f64,
    /// Per-node error norms, one vector per recorded iteration (index 0 is
    /// the initial state).
    pub errors: Vec<DVector<f64>>,
    /// Cumulative scalar values transmitted per node, aligned with `errors`.
    pub transmitted: Vec<Vec<u64>>,
    /// Cumulative scalar values received per node, aligned with `errors`.
    pub received: Vec<Vec<u64>>,
    /// Participation group per executed step.
    pub groups: Vec<Vec<usize>>,
    /// Thinned estimate history as `(iteration, estimates)` pairs.
    pub estimates: Vec<(usize, Vec<DVector<f64>>)>,
    pub final_estimates: Vec<DVector<f64>>,
    pub gradient_evaluations: u64,
    pub stop: StopReason,
}

impl RunTrace {
    /// Number of executed iterations.
    pub fn iterations(&self) -> usize {
        self.errors.len() - 1
    }

    pub fn node_count(&self) -> usize {
        self.errors[0].len()
    }

    /// Relative mean-square deviation at iteration `n`:
    /// `sum_i h_i(n)^2 / (L ||x*||^2)`.
    pub fn msd(&self, n: usize) -> f64 {
        let l = self.node_count() as f64;
        self.errors[n].norm_squared() / (l * self.x_star_norm * self.x_star_norm)
    }

    pub fn final_msd(&self) -> f64 {
        self.msd(self.errors.len() - 1)
    }

    /// First iteration whose relative MSD falls below `threshold`.
    pub fn iterations_to_msd(&self, threshold: f64) -> Option<usize> {
        (0..self.errors.len()).find(|&n| self.msd(n) < threshold)
    }

    pub fn total_transmitted(&self) -> u64 {
        self.transmitted.last().map(|row| row.iter().sum()).unwrap_or(0)
    }

    pub fn total_received(&self) -> u64 {
        self.received.last().map(|row| row.iter().sum()).unwrap_or(0)
    }

    /// One row per recorded iteration: iteration index, per-node error
    /// norms, relative MSD, cumulative transmit/receive totals.
    pub fn to_csv(&self) -> String {
        let l = self.node_count();
        let mut out = String::from("n");
        for i in 1..=l {
            out.push_str(&format!(",h_{i}"));
        }
        out.push_str(",msd,T_total,R_total\n");
        for n in 0..self.errors.len() {
            out.push_str(&n.to_string());
            for i in 0..l {
                out.push_str(&format!(",{}", self.errors[n][i]));
            }
            let t: u64 = self.transmitted[n].iter().sum();
            let r: u64 = self.received[n].iter().sum();
            out.push_str(&format!(",{},{},{}\n", self.msd(n), t, r));
        }
        out
    }

    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            algorithm: self.algorithm.label().to_string(),
            strategy: self.strategy.clone(),
            seed: self.seed,
            iterations: self.iterations(),
            stop: self.stop,
            final_msd: self.final_msd(),
            transmitted_total: self.total_transmitted(),
            received_total: self.total_received(),
            gradient_evaluations: self.gradient_evaluations,
        }
    }
}

/// Compact JSON summary of a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSummary {
    pub algorithm: String,
    pub strategy: Option<String>,
    pub seed: u64,
    pub iterations: usize,
    pub stop: StopReason,
    pub final_msd: f64,
    pub transmitted_total: u64,
    pub received_total: u64,
    pub gradient_evaluations: u64,
}

fn check_node_dims(
    network: &Network,
    costs: &[LeastSquaresCost],
    step_sizes: &[f64],
    estimates: &[DVector<f64>],
) -> Result<usize> {
    let l = network.node_count();
    if costs.len() != l || step_sizes.len() != l || estimates.len() != l {
        return Err(Error::invalid(format!(
            "expected {l} costs/steps/estimates, got {}/{}/{}",
            costs.len(),
            step_sizes.len(),
            estimates.len()
        )));
    }
    let n = costs[0].dimension();
    for c in costs {
        if c.dimension() != n {
            return Err(Error::invalid("inconsistent cost dimensions"));
        }
    }
    for x in estimates {
        if x.len() != n {
            return Err(Error::invalid("estimate dimension mismatch"));
        }
    }
    if step_sizes.iter().any(|&mu| !(mu > 0.0)) {
        return Err(Error::invalid("step sizes must be positive"));
    }
    Ok(n)
}

/// Group membership and the set of nodes that must compute an intermediate
/// (the group and everyone adjacent to it).
struct Participation {
    in_group: Vec<bool>,
    active: Vec<bool>,
}

fn participation(network: &Network, group: Option<&[usize]>) -> Result<Participation> {
    let l = network.node_count();
    match group {
        None => Ok(Participation {
            in_group: vec![true; l],
            active: vec![true; l],
        }),
        Some(g) => {
            let mut in_group = vec![false; l];
            for &v in g {
                if v >= l {
                    return Err(Error::invalid(format!("group node {v} out of range")));
                }
                in_group[v] = true;
            }
            let mut active = in_group.clone();
            for &v in g {
                for &u in network.neighbors(v) {
                    active[u] = true;
                }
            }
            Ok(Participation { in_group, active })
        }
    }
}

/// Shared update for DiFIGHT and MoDiFIGHT. Nodes in the group (or adjacent
/// to it) take the gradient step; MoDiFIGHT thresholds the intermediate
/// before it is combined. Group members combine over their closed
/// neighborhood and re-threshold; everyone else keeps its estimate.
fn diffusion_step(
    network: &Network,
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
    group: Option<&[usize]>,
    threshold_before_exchange: bool,
) -> Result<Vec<DVector<f64>>> {
    let n = check_node_dims(network, costs, step_sizes, estimates)?;
    let l = network.node_count();
    let part = participation(network, group)?;

    let mut intermediates: Vec<Option<DVector<f64>>> = vec![None; l];
    for v in 0..l {
        if part.active[v] {
            let mut psi = estimates[v].clone();
            psi.axpy(-step_sizes[v], &costs[v].gradient(&estimates[v])?, 1.0);
            if threshold_before_exchange {
                psi = hard_threshold(&psi, sparsity)?.into_vector();
            }
            intermediates[v] = Some(psi);
        }
    }

    let a = network.combination();
    let mut next = estimates.to_vec();
    for v in 0..l {
        if !part.in_group[v] {
            continue;
        }
        let mut combined = DVector::zeros(n);
        if let Some(psi) = &intermediates[v] {
            combined.axpy(a[(v, v)], psi, 1.0);
        }
        for &u in network.neighbors(v) {
            let psi = intermediates[u]
                .as_ref()
                .ok_or_else(|| Error::Internal("missing intermediate for active neighbor".into()))?;
            combined.axpy(a[(u, v)], psi, 1.0);
        }
        next[v] = hard_threshold(&combined, sparsity)?.into_vector();
    }
    Ok(next)
}

/// Consensus baseline: group members average their closed neighborhood's
/// previous estimates, then apply their own gradient and threshold.
fn consensus_step(
    network: &Network,
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
    group: Option<&[usize]>,
) -> Result<Vec<DVector<f64>>> {
    let _ = check_node_dims(network, costs, step_sizes, estimates)?;
    let l = network.node_count();
    let part = participation(network, group)?;
    let a = network.combination();
    let mut next = estimates.to_vec();
    for v in 0..l {
        if !part.in_group[v] {
            continue;
        }
        let mut averaged = estimates[v].clone() * a[(v, v)];
        for &u in network.neighbors(v) {
            averaged.axpy(a[(u, v)], &estimates[u], 1.0);
        }
        averaged.axpy(-step_sizes[v], &costs[v].gradient(&averaged)?, 1.0);
        next[v] = hard_threshold(&averaged, sparsity)?.into_vector();
    }
    Ok(next)
}

/// One deterministic DiFIGHT step over the whole network.
pub fn step_difight(
    network: &Network,
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
) -> Result<Vec<DVector<f64>>> {
    diffusion_step(network, costs, estimates, step_sizes, sparsity, None, false)
}

/// One deterministic MoDiFIGHT step over the whole network.
pub fn step_modifight(
    network: &Network,
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
) -> Result<Vec<DVector<f64>>> {
    diffusion_step(network, costs, estimates, step_sizes, sparsity, None, true)
}

/// One deterministic consensus-IHT step over the whole network.
pub fn step_consensus_iht(
    network: &Network,
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
) -> Result<Vec<DVector<f64>>> {
    consensus_step(network, costs, estimates, step_sizes, sparsity, None)
}

/// One randomized step restricted to the participation group `group`.
/// With `group` covering every node this coincides exactly with the
/// deterministic step.
pub fn step_randomized(
    network: &Network,
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
    group: &[usize],
    kind: AlgorithmKind,
) -> Result<Vec<DVector<f64>>> {
    match kind {
        AlgorithmKind::Difight => diffusion_step(
            network, costs, estimates, step_sizes, sparsity, Some(group), false,
        ),
        AlgorithmKind::Modifight => diffusion_step(
            network, costs, estimates, step_sizes, sparsity, Some(group), true,
        ),
        AlgorithmKind::ConsensusIht => {
            consensus_step(network, costs, estimates, step_sizes, sparsity, Some(group))
        }
        other => Err(Error::invalid(format!(
            "{} has no randomized participation variant",
            other.label()
        ))),
    }
}

fn noncooperative_step(
    costs: &[LeastSquaresCost],
    estimates: &[DVector<f64>],
    step_sizes: &[f64],
    sparsity: usize,
) -> Result<Vec<DVector<f64>>> {
    estimates
        .iter()
        .zip(costs)
        .zip(step_sizes)
        .map(|((x, cost), &mu)| {
            let mut z = x.clone();
            z.axpy(-mu, &cost.gradient(x)?, 1.0);
            Ok(hard_threshold(&z, sparsity)?.into_vector())
        })
        .collect()
}

/// Message-value increments for one step in which `group` participated.
fn accumulate_comms(
    network: &Network,
    group: &[usize],
    l_algo: u64,
    transmitted: &mut [u64],
    received: &mut [u64],
) {
    let l = network.node_count();
    let mut member = vec![false; l];
    for &v in group {
        member[v] = true;
    }
    for &v in group {
        received[v] += network.degree(v) as u64 * l_algo;
    }
    for u in 0..l {
        let participating_neighbors = network
            .neighbors(u)
            .iter()
            .filter(|&&w| member[w])
            .count() as u64;
        transmitted[u] += participating_neighbors * l_algo;
    }
}

/// Executes `spec` and records the full trace.
///
/// Estimates start at zero. The run is bit-reproducible given the seed: the
/// group schedule is drawn from a counter-based generator seeded with `seed`,
/// and all node updates are evaluated in index order.
pub fn run(
    spec: &AlgorithmSpec,
    network: &Network,
    costs: &[LeastSquaresCost],
    x_star: &SparseSignal,
    seed: u64,
) -> Result<RunTrace> {
    if spec.strategy.is_some() && !spec.kind.runs_over_network() {
        return Err(Error::invalid(format!(
            "{} does not support selection strategies",
            spec.kind.label()
        )));
    }
    if let Some(s) = &spec.strategy {
        s.validate(network.node_count())?;
    }
    let dimension = x_star.len();

    // The centralized baseline collapses every node's measurements into one.
    let stacked;
    let (costs, step_sizes, node_count): (&[LeastSquaresCost], Vec<f64>, usize) =
        if spec.kind == AlgorithmKind::CentralizedIht {
            let mu = *spec
                .step_sizes
                .first()
                .ok_or_else(|| Error::invalid("centralized run needs one step size"))?;
            stacked = [LeastSquaresCost::stack(costs)?];
            (&stacked, vec![mu], 1)
        } else {
            let l = network.node_count();
            if costs.len() != l || spec.step_sizes.len() != l {
                return Err(Error::invalid(format!(
                    "expected {l} costs and step sizes, got {} and {}",
                    costs.len(),
                    spec.step_sizes.len()
                )));
            }
            (costs, spec.step_sizes.clone(), l)
        };
    for c in costs {
        if c.dimension() != dimension {
            return Err(Error::invalid(
                "target signal dimension does not match the costs",
            ));
        }
    }
    if spec.msd_target.is_some() && x_star.norm() == 0.0 {
        return Err(Error::invalid("msd target requires a nonzero target signal"));
    }

    let l_algo = spec
        .kind
        .values_per_message(spec.sparsity, dimension)
        .unwrap_or(0) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimates: Vec<DVector<f64>> = vec![DVector::zeros(dimension); node_count];

    let error_of = |xs: &[DVector<f64>]| {
        DVector::from_fn(node_count, |i, _| (&xs[i] - x_star.values()).norm())
    };

    let mut trace = RunTrace {
        seed,
        algorithm: spec.kind,
        strategy: spec.strategy.as_ref().map(|s| s.label().to_string()),
        x_star_norm: x_star.norm(),
        errors: vec![error_of(&estimates)],
        transmitted: vec![vec![0; node_count]],
        received: vec![vec![0; node_count]],
        groups: Vec::new(),
        estimates: Vec::new(),
        final_estimates: Vec::new(),
        gradient_evaluations: 0,
        stop: StopReason::MaxIterations,
    };
    if spec.record_estimates.is_some() {
        trace.estimates.push((0, estimates.clone()));
    }

    let all_nodes: Vec<usize> = (0..node_count).collect();
    for n in 0..spec.max_iterations {
        let group: Vec<usize> = match &spec.strategy {
            Some(strategy) => strategy.sample_group(network, &mut rng)?,
            None => all_nodes.clone(),
        };

        let next = match spec.kind {
            AlgorithmKind::Difight | AlgorithmKind::Modifight | AlgorithmKind::ConsensusIht => {
                step_randomized(
                    network,
                    costs,
                    &estimates,
                    &step_sizes,
                    spec.sparsity,
                    &group,
                    spec.kind,
                )?
            }
            AlgorithmKind::NonCooperativeIht => {
                noncooperative_step(costs, &estimates, &step_sizes, spec.sparsity)?
            }
            AlgorithmKind::CentralizedIht => {
                let mut z = estimates[0].clone();
                z.axpy(-step_sizes[0], &costs[0].gradient(&estimates[0])?, 1.0);
                vec![hard_threshold(&z, spec.sparsity)?.into_vector()]
            }
        };

        for (node, x) in next.iter().enumerate() {
            if !x.iter().all(|v| v.is_finite()) {
                return Err(Error::Diverged {
                    iteration: n + 1,
                    node,
                });
            }
            debug_assert!(
                x.iter().filter(|&&v| v != 0.0).count() <= spec.sparsity,
                "iterate lost K-sparsity"
            );
        }

        trace.gradient_evaluations += match spec.kind {
            AlgorithmKind::Difight | AlgorithmKind::Modifight => {
                let part = participation(network, Some(&group))?;
                part.active.iter().filter(|&&a| a).count() as u64
            }
            AlgorithmKind::ConsensusIht => group.len() as u64,
            AlgorithmKind::NonCooperativeIht => node_count as u64,
            AlgorithmKind::CentralizedIht => 1,
        };

        let mut t_row = trace.transmitted.last().unwrap().clone();
        let mut r_row = trace.received.last().unwrap().clone();
        if spec.kind.runs_over_network() {
            accumulate_comms(network, &group, l_algo, &mut t_row, &mut r_row);
        }
        trace.transmitted.push(t_row);
        trace.received.push(r_row);

        let movement = estimates
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, f64::max);
        estimates = next;
        trace.errors.push(error_of(&estimates));
        if spec.kind.runs_over_network() {
            trace.groups.push(group);
        }
        if let Some(stride) = spec.record_estimates {
            if stride > 0 && (n + 1) % stride == 0 {
                trace.estimates.push((n + 1, estimates.clone()));
            }
        }

        if let Some(target) = spec.msd_target {
            if trace.msd(trace.errors.len() - 1) < target {
                trace.stop = StopReason::ReachedTarget { iteration: n + 1 };
                break;
            }
        }
        if spec.strategy.is_none() {
            if let Some(tol) = spec.convergence_tol {
                if movement <= tol {
                    trace.stop = StopReason::Converged { iteration: n + 1 };
                    break;
                }
            }
        }
    }

    if let Some(stride) = spec.record_estimates {
        let last_iter = trace.errors.len() - 1;
        let already = trace.estimates.last().map(|(n, _)| *n) == Some(last_iter);
        if stride > 0 && !already {
            trace.estimates.push((last_iter, estimates.clone()));
        }
    }
    trace.final_estimates = estimates;
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_combination_matrix, Network};
    use crate::strategies::SelectionStrategy;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn single_node_network() -> Network {
        Network::from_parts(DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap()
    }

    fn path_network(l: usize) -> Network {
        let mut adj = DMatrix::zeros(l, l);
        for i in 0..l - 1 {
            adj[(i, i + 1)] = 1.0;
            adj[(i + 1, i)] = 1.0;
        }
        let a = build_combination_matrix(&adj).unwrap();
        Network::from_parts(adj, a).unwrap()
    }

    fn complete_network(l: usize) -> Network {
        let mut adj = DMatrix::zeros(l, l);
        for i in 0..l {
            for j in 0..l {
                if i != j {
                    adj[(i, j)] = 1.0;
                }
            }
        }
        let a = build_combination_matrix(&adj).unwrap();
        Network::from_parts(adj, a).unwrap()
    }

    fn random_cost(m: usize, n: usize, rng: &mut ChaCha8Rng) -> LeastSquaresCost {
        let scale = 1.0 / (m as f64).sqrt();
        let phi = DMatrix::from_fn(m, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        LeastSquaresCost::new(0, phi, y).unwrap()
    }

    fn consistent_costs(
        l: usize,
        m: usize,
        x_star: &SparseSignal,
        rng: &mut ChaCha8Rng,
    ) -> Vec<LeastSquaresCost> {
        let n = x_star.len();
        (0..l)
            .map(|v| {
                let scale = 1.0 / (m as f64).sqrt();
                let phi =
                    DMatrix::from_fn(m, n, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
                let y = &phi * x_star.values();
                LeastSquaresCost::new(v, phi, y).unwrap()
            })
            .collect()
    }

    #[test]
    fn single_node_diffusion_is_plain_iht() {
        let net = single_node_network();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cost = random_cost(6, 4, &mut rng);
        let x = DVector::from_fn(4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let mu = 0.2;
        let expected = {
            let mut z = x.clone();
            z.axpy(-mu, &cost.gradient(&x).unwrap(), 1.0);
            hard_threshold(&z, 2).unwrap().into_vector()
        };
        let difight =
            step_difight(&net, std::slice::from_ref(&cost), &[x.clone()], &[mu], 2).unwrap();
        assert!((expected.clone() - &difight[0]).norm() < 1e-14);
        // MoDiFIGHT applies the threshold twice; idempotence gives the same
        let modifight =
            step_modifight(&net, std::slice::from_ref(&cost), &[x.clone()], &[mu], 2).unwrap();
        assert!((expected.clone() - &modifight[0]).norm() < 1e-14);
        let consensus =
            step_consensus_iht(&net, std::slice::from_ref(&cost), &[x], &[mu], 2).unwrap();
        assert!((expected - &consensus[0]).norm() < 1e-14);
    }

    #[test]
    fn consistent_point_is_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = complete_network(4);
        let x_star = SparseSignal::from_pairs(8, &[(1, 1.5), (5, -0.5)]).unwrap();
        let costs = consistent_costs(4, 10, &x_star, &mut rng);
        let estimates = vec![x_star.values().clone(); 4];
        let mus = vec![0.3; 4];
        for step in [step_difight, step_modifight, step_consensus_iht] {
            let next = step(&net, &costs, &estimates, &mus, 2).unwrap();
            for x in &next {
                assert!((x - x_star.values()).norm() < 1e-12);
            }
        }
    }

    /// Straight-line two-node transcription of the update rules, kept
    /// independent of the engine's code path.
    fn two_node_oracle(
        a: &DMatrix<f64>,
        costs: &[LeastSquaresCost],
        xs: &[DVector<f64>],
        mus: &[f64],
        k: usize,
        inner_threshold: bool,
    ) -> Vec<DVector<f64>> {
        let psi: Vec<DVector<f64>> = (0..2)
            .map(|i| {
                let g = costs[i].gradient(&xs[i]).unwrap();
                let p = &xs[i] - mus[i] * g;
                if inner_threshold {
                    hard_threshold(&p, k).unwrap().into_vector()
                } else {
                    p
                }
            })
            .collect();
        (0..2)
            .map(|i| {
                let combined = a[(0, i)] * &psi[0] + a[(1, i)] * &psi[1];
                hard_threshold(&combined, k).unwrap().into_vector()
            })
            .collect()
    }

    #[test]
    fn two_node_hand_case_matches_oracle() {
        let net = complete_network(2);
        let phi1 = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let phi2 = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 1.0, 1.0, 0.0, 1.0]);
        let x_star = DVector::from_row_slice(&[0.0, 2.0, 0.0]);
        let costs = vec![
            LeastSquaresCost::new(0, phi1.clone(), &phi1 * &x_star).unwrap(),
            LeastSquaresCost::new(1, phi2.clone(), &phi2 * &x_star).unwrap(),
        ];
        let xs = vec![
            DVector::from_row_slice(&[1.0, 0.0, 0.0]),
            DVector::from_row_slice(&[0.0, 0.0, 1.0]),
        ];
        let mus = [0.1, 0.2];

        let expected = two_node_oracle(net.combination(), &costs, &xs, &mus, 1, false);
        let got = step_difight(&net, &costs, &xs, &mus, 1).unwrap();
        for i in 0..2 {
            assert!((&expected[i] - &got[i]).norm() < 1e-14);
        }

        let expected = two_node_oracle(net.combination(), &costs, &xs, &mus, 1, true);
        let got = step_modifight(&net, &costs, &xs, &mus, 1).unwrap();
        for i in 0..2 {
            assert!((&expected[i] - &got[i]).norm() < 1e-14);
        }

        // consensus: average estimates first, then gradient at the average
        let a = net.combination();
        let expected: Vec<DVector<f64>> = (0..2)
            .map(|i| {
                let avg = a[(0, i)] * &xs[0] + a[(1, i)] * &xs[1];
                let stepped = &avg - mus[i] * costs[i].gradient(&avg).unwrap();
                hard_threshold(&stepped, 1).unwrap().into_vector()
            })
            .collect();
        let got = step_consensus_iht(&net, &costs, &xs, &mus, 1).unwrap();
        for i in 0..2 {
            assert!((&expected[i] - &got[i]).norm() < 1e-14);
        }
    }

    #[test]
    fn full_group_randomized_step_equals_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = path_network(5);
        let x_star = SparseSignal::from_pairs(12, &[(0, 1.0), (7, -2.0), (9, 0.5)]).unwrap();
        let costs = consistent_costs(5, 8, &x_star, &mut rng);
        let mus = vec![0.25; 5];
        let all: Vec<usize> = (0..5).collect();
        for _ in 0..100 {
            let estimates: Vec<DVector<f64>> = (0..5)
                .map(|_| {
                    let dense = DVector::from_fn(12, |_, _| rng.sample::<f64, _>(StandardNormal));
                    hard_threshold(&dense, 3).unwrap().into_vector()
                })
                .collect();
            for kind in [
                AlgorithmKind::Difight,
                AlgorithmKind::Modifight,
                AlgorithmKind::ConsensusIht,
            ] {
                let deterministic = match kind {
                    AlgorithmKind::Difight => {
                        step_difight(&net, &costs, &estimates, &mus, 3).unwrap()
                    }
                    AlgorithmKind::Modifight => {
                        step_modifight(&net, &costs, &estimates, &mus, 3).unwrap()
                    }
                    _ => step_consensus_iht(&net, &costs, &estimates, &mus, 3).unwrap(),
                };
                let randomized =
                    step_randomized(&net, &costs, &estimates, &mus, 3, &all, kind).unwrap();
                for i in 0..5 {
                    assert_eq!(deterministic[i], randomized[i]);
                }
            }
        }
    }

    #[test]
    fn empty_group_changes_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let net = path_network(3);
        let x_star = SparseSignal::from_pairs(6, &[(2, 1.0)]).unwrap();
        let costs = consistent_costs(3, 4, &x_star, &mut rng);
        let estimates: Vec<DVector<f64>> = vec![DVector::zeros(6); 3];
        let next = step_randomized(
            &net,
            &costs,
            &estimates,
            &[0.1, 0.1, 0.1],
            1,
            &[],
            AlgorithmKind::Difight,
        )
        .unwrap();
        assert_eq!(next, estimates);
    }

    #[test]
    fn single_member_group_on_path_updates_and_counts_correctly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = path_network(3);
        let x_star = SparseSignal::from_pairs(6, &[(1, 2.0)]).unwrap();
        let costs = consistent_costs(3, 8, &x_star, &mut rng);
        let estimates: Vec<DVector<f64>> = (0..3)
            .map(|_| {
                let dense = DVector::from_fn(6, |_, _| rng.sample::<f64, _>(StandardNormal));
                hard_threshold(&dense, 1).unwrap().into_vector()
            })
            .collect();
        let mus = [0.2, 0.2, 0.2];
        // middle node participates alone
        let next =
            step_randomized(&net, &costs, &estimates, &mus, 1, &[1], AlgorithmKind::Difight)
                .unwrap();
        assert_eq!(next[0], estimates[0]);
        assert_eq!(next[2], estimates[2]);
        assert_ne!(next[1], estimates[1]);

        // hand-check the middle node's update from the rule itself
        let a = net.combination();
        let psi: Vec<DVector<f64>> = (0..3)
            .map(|j| &estimates[j] - mus[j] * costs[j].gradient(&estimates[j]).unwrap())
            .collect();
        let combined = a[(0, 1)] * &psi[0] + a[(1, 1)] * &psi[1] + a[(2, 1)] * &psi[2];
        let expected = hard_threshold(&combined, 1).unwrap().into_vector();
        assert!((&next[1] - expected).norm() < 1e-14);

        // counters: node 1 receives d_1 * l_algo; its neighbors each send one
        let l_algo = 10u64;
        let mut t = vec![0u64; 3];
        let mut r = vec![0u64; 3];
        accumulate_comms(&net, &[1], l_algo, &mut t, &mut r);
        assert_eq!(r, vec![0, 2 * l_algo, 0]);
        assert_eq!(t, vec![l_algo, 0, l_algo]);
    }

    #[test]
    fn transmit_and_receive_totals_balance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let net = path_network(6);
        let x_star = SparseSignal::from_pairs(10, &[(3, 1.0), (8, -1.0)]).unwrap();
        let costs = consistent_costs(6, 6, &x_star, &mut rng);
        for strategy in [
            SelectionStrategy::rp_uniform(),
            SelectionStrategy::rnp_uniform(),
            SelectionStrategy::rgp_uniform(2),
            SelectionStrategy::rgnp_uniform(2),
        ] {
            let mut spec = AlgorithmSpec::new(
                AlgorithmKind::Modifight,
                2,
                vec![0.2; 6],
                200,
            )
            .with_strategy(strategy);
            spec.convergence_tol = None;
            let trace = run(&spec, &net, &costs, &x_star, 99).unwrap();
            assert_eq!(trace.total_transmitted(), trace.total_received());
        }
    }

    #[test]
    fn overdetermined_runs_recover_the_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = complete_network(3);
        let x_star = SparseSignal::from_pairs(8, &[(0, 1.0), (4, -2.0)]).unwrap();
        let costs = consistent_costs(3, 12, &x_star, &mut rng);
        for kind in [
            AlgorithmKind::Difight,
            AlgorithmKind::Modifight,
            AlgorithmKind::ConsensusIht,
            AlgorithmKind::NonCooperativeIht,
            AlgorithmKind::CentralizedIht,
        ] {
            let spec = AlgorithmSpec::new(kind, 2, vec![0.3; 3], 200);
            let trace = run(&spec, &net, &costs, &x_star, 5).unwrap();
            assert!(
                trace.final_msd() < 1e-8,
                "{} reached only {}",
                kind.label(),
                trace.final_msd()
            );
        }
    }

    #[test]
    fn zero_iterations_records_initial_error_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = path_network(3);
        let x_star = SparseSignal::from_pairs(5, &[(1, 3.0)]).unwrap();
        let costs = consistent_costs(3, 5, &x_star, &mut rng);
        let spec = AlgorithmSpec::new(AlgorithmKind::Difight, 1, vec![0.1; 3], 0);
        let trace = run(&spec, &net, &costs, &x_star, 1).unwrap();
        assert_eq!(trace.iterations(), 0);
        for i in 0..3 {
            assert!((trace.errors[0][i] - 3.0).abs() < 1e-15);
        }
        assert_eq!(trace.stop, StopReason::MaxIterations);
    }

    #[test]
    fn identical_seeds_give_identical_traces() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = path_network(4);
        let x_star = SparseSignal::from_pairs(10, &[(2, 1.0), (7, 2.0)]).unwrap();
        let costs = consistent_costs(4, 6, &x_star, &mut rng);
        let mut spec = AlgorithmSpec::new(AlgorithmKind::Difight, 2, vec![0.2; 4], 120)
            .with_strategy(SelectionStrategy::rnp_uniform());
        spec.record_estimates = Some(10);
        let a = run(&spec, &net, &costs, &x_star, 2024).unwrap();
        let b = run(&spec, &net, &costs, &x_star, 2024).unwrap();
        assert_eq!(a.errors, b.errors);
        assert_eq!(a.groups, b.groups);
        assert_eq!(a.transmitted, b.transmitted);
        assert_eq!(a.final_estimates, b.final_estimates);
    }

    #[test]
    fn iterates_stay_k_sparse() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = path_network(4);
        let x_star = SparseSignal::from_pairs(12, &[(0, 1.0), (5, 1.0), (9, -1.0)]).unwrap();
        let costs = consistent_costs(4, 7, &x_star, &mut rng);
        let mut spec = AlgorithmSpec::new(AlgorithmKind::Difight, 3, vec![0.25; 4], 50);
        spec.record_estimates = Some(1);
        let trace = run(&spec, &net, &costs, &x_star, 3).unwrap();
        for (_, snapshot) in &trace.estimates {
            for x in snapshot {
                assert!(x.iter().filter(|&&v| v != 0.0).count() <= 3);
            }
        }
    }

    #[test]
    fn oversized_step_size_reports_divergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = path_network(3);
        let x_star = SparseSignal::from_pairs(6, &[(0, 1.0)]).unwrap();
        let costs = consistent_costs(3, 5, &x_star, &mut rng);
        let mut spec = AlgorithmSpec::new(AlgorithmKind::Difight, 1, vec![1e12; 3], 5000);
        spec.convergence_tol = None;
        match run(&spec, &net, &costs, &x_star, 12) {
            Err(Error::Diverged { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn strategies_rejected_for_local_algorithms() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let net = path_network(3);
        let x_star = SparseSignal::from_pairs(6, &[(0, 1.0)]).unwrap();
        let costs = consistent_costs(3, 5, &x_star, &mut rng);
        let spec = AlgorithmSpec::new(AlgorithmKind::NonCooperativeIht, 1, vec![0.1; 3], 10)
            .with_strategy(SelectionStrategy::rp_uniform());
        assert!(run(&spec, &net, &costs, &x_star, 1).is_err());
    }

    #[test]
    fn deterministic_counters_accumulate_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let net = path_network(4);
        let x_star = SparseSignal::from_pairs(8, &[(1, 1.0), (6, -1.0)]).unwrap();
        let costs = consistent_costs(4, 5, &x_star, &mut rng);
        let mut spec = AlgorithmSpec::new(AlgorithmKind::Difight, 2, vec![0.2; 4], 10);
        spec.convergence_tol = None;
        let trace = run(&spec, &net, &costs, &x_star, 7).unwrap();
        let l_algo = (2 * 2 + 8) as u64;
        for v in 0..4 {
            let d = net.degree(v) as u64;
            assert_eq!(trace.transmitted[10][v], 10 * d * l_algo);
            assert_eq!(trace.received[10][v], 10 * d * l_algo);
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let net = path_network(3);
        let x_star = SparseSignal::from_pairs(6, &[(0, 2.0)]).unwrap();
        let costs = consistent_costs(3, 8, &x_star, &mut rng);
        let spec = AlgorithmSpec::new(AlgorithmKind::Difight, 1, vec![0.2; 3], 20);
        let trace = run(&spec, &net, &costs, &x_star, 4).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "n,h_1,h_2,h_3,msd,T_total,R_total");
        let first = lines.next().unwrap();
        assert!(first.starts_with("0,2,2,2,1,0,0"), "{first}");
    }
}
