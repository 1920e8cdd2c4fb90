//! Randomized node-selection strategies and their communication profiles.
//!
//! Each step of a randomized run activates a participation group `G`:
//!
//! * RP: one node drawn from a node distribution, `G = {v}`.
//! * RNP: a drawn node plus its neighborhood, `G = {v} ∪ N_v`.
//! * RGP_r: an r-subset of nodes drawn from a group distribution, `G = C`.
//! * RGNP_r: an r-subset plus the union of its neighborhoods.
//!
//! Distributions default to uniform. Every node (or group) must carry
//! positive probability so that each node keeps participating in the long
//! run. The analytic participation probability `pi_v` drives the expected
//! message counts per step: a participating node receives `d_v` messages and
//! transmits one to each participating neighbor, each message carrying
//! `values_per_message` scalars.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combinatorics::{binomial, unrank_combination};
use crate::engine::AlgorithmKind;
use crate::error::{Error, Result};
use crate::network::Network;

/// Largest node count for which non-uniform group distributions are
/// supported (the C(L, r) table is held in memory).
pub const MAX_WEIGHTED_GROUP_NODES: usize = 20;

/// Probability distribution over nodes.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum NodeDistribution {
    #[default]
    Uniform,
    /// One positive weight per node, summing to one.
    Weighted(Vec<f64>),
}

/// Probability distribution over all size-r groups, in lexicographic order.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum GroupDistribution {
    #[default]
    Uniform,
    Weighted(Vec<f64>),
}

/// A randomized node-selection strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum SelectionStrategy {
    /// Random persistence: a single node.
    Rp(NodeDistribution),
    /// Random neighborhood persistence: a node and its neighborhood.
    Rnp(NodeDistribution),
    /// Random group persistence of order r.
    Rgp(usize, GroupDistribution),
    /// Random group neighborhood persistence of order r.
    Rgnp(usize, GroupDistribution),
}

impl SelectionStrategy {
    pub fn rp_uniform() -> Self {
        SelectionStrategy::Rp(NodeDistribution::Uniform)
    }

    pub fn rnp_uniform() -> Self {
        SelectionStrategy::Rnp(NodeDistribution::Uniform)
    }

    pub fn rgp_uniform(r: usize) -> Self {
        SelectionStrategy::Rgp(r, GroupDistribution::Uniform)
    }

    pub fn rgnp_uniform(r: usize) -> Self {
        SelectionStrategy::Rgnp(r, GroupDistribution::Uniform)
    }

    pub fn label(&self) -> &'static str {
        match self {
            SelectionStrategy::Rp(_) => "rp",
            SelectionStrategy::Rnp(_) => "rnp",
            SelectionStrategy::Rgp(..) => "rgp",
            SelectionStrategy::Rgnp(..) => "rgnp",
        }
    }

    pub fn group_order(&self) -> usize {
        match self {
            SelectionStrategy::Rp(_) | SelectionStrategy::Rnp(_) => 1,
            SelectionStrategy::Rgp(r, _) | SelectionStrategy::Rgnp(r, _) => *r,
        }
    }

    /// Validates the strategy against a network of `l` nodes.
    pub fn validate(&self, l: usize) -> Result<()> {
        match self {
            SelectionStrategy::Rp(dist) | SelectionStrategy::Rnp(dist) => {
                if let NodeDistribution::Weighted(w) = dist {
                    validate_weights(w, l as u128, "node")?;
                }
            }
            SelectionStrategy::Rgp(r, dist) | SelectionStrategy::Rgnp(r, dist) => {
                if *r == 0 || *r > l {
                    return Err(Error::invalid(format!(
                        "group order {r} outside 1..={l}"
                    )));
                }
                if let GroupDistribution::Weighted(w) = dist {
                    if l > MAX_WEIGHTED_GROUP_NODES {
                        return Err(Error::invalid(format!(
                            "weighted group distributions support at most {MAX_WEIGHTED_GROUP_NODES} nodes, got {l}"
                        )));
                    }
                    validate_weights(w, binomial(l, *r), "group")?;
                }
            }
        }
        Ok(())
    }

    /// Draws the participation group for one step. Sorted, duplicate free,
    /// deterministic given the generator state.
    pub fn sample_group(&self, network: &Network, rng: &mut impl Rng) -> Result<Vec<usize>> {
        let l = network.node_count();
        self.validate(l)?;
        let group = match self {
            SelectionStrategy::Rp(dist) => vec![sample_node(dist, l, rng)],
            SelectionStrategy::Rnp(dist) => {
                let v = sample_node(dist, l, rng);
                let mut g = vec![v];
                g.extend_from_slice(network.neighbors(v));
                g
            }
            SelectionStrategy::Rgp(r, dist) => sample_group_of(dist, l, *r, rng),
            SelectionStrategy::Rgnp(r, dist) => {
                let core = sample_group_of(dist, l, *r, rng);
                let mut g = core.clone();
                for &v in &core {
                    g.extend_from_slice(network.neighbors(v));
                }
                g
            }
        };
        let mut group = group;
        group.sort_unstable();
        group.dedup();
        Ok(group)
    }

    /// Analytic probability that node `v` participates in a step.
    pub fn participation_probability(&self, network: &Network, v: usize) -> Result<f64> {
        let l = network.node_count();
        self.validate(l)?;
        if v >= l {
            return Err(Error::invalid(format!("node {v} out of range for L={l}")));
        }
        let d = network.degree(v);
        Ok(match self {
            SelectionStrategy::Rp(dist) => node_probability(dist, l, v),
            SelectionStrategy::Rnp(dist) => {
                let mut p = node_probability(dist, l, v);
                for &u in network.neighbors(v) {
                    p += node_probability(dist, l, u);
                }
                p
            }
            SelectionStrategy::Rgp(r, GroupDistribution::Uniform) => *r as f64 / l as f64,
            SelectionStrategy::Rgp(r, GroupDistribution::Weighted(w)) => {
                sum_over_groups(l, *r, w, |group| group.contains(&v))
            }
            SelectionStrategy::Rgnp(r, GroupDistribution::Uniform) => rgnp_uniform_pi(l, *r, d),
            SelectionStrategy::Rgnp(r, GroupDistribution::Weighted(w)) => {
                sum_over_groups(l, *r, w, |group| {
                    group
                        .iter()
                        .any(|&u| u == v || network.has_edge(u, v))
                })
            }
        })
    }

    /// Participation probabilities for every node.
    pub fn participation_vector(&self, network: &Network) -> Result<Vec<f64>> {
        (0..network.node_count())
            .map(|v| self.participation_probability(network, v))
            .collect()
    }
}

fn validate_weights(w: &[f64], expected: u128, what: &str) -> Result<()> {
    if w.len() as u128 != expected {
        return Err(Error::invalid(format!(
            "{what} distribution has {} weights, expected {expected}",
            w.len()
        )));
    }
    if w.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::invalid(format!(
            "every {what} must have strictly positive probability"
        )));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "{what} distribution sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

fn node_probability(dist: &NodeDistribution, l: usize, v: usize) -> f64 {
    match dist {
        NodeDistribution::Uniform => 1.0 / l as f64,
        NodeDistribution::Weighted(w) => w[v],
    }
}

fn sample_node(dist: &NodeDistribution, l: usize, rng: &mut impl Rng) -> usize {
    match dist {
        NodeDistribution::Uniform => rng.gen_range(0..l),
        NodeDistribution::Weighted(w) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, &p) in w.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            l - 1
        }
    }
}

fn sample_group_of(
    dist: &GroupDistribution,
    l: usize,
    r: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    match dist {
        GroupDistribution::Uniform => {
            // partial Fisher-Yates: uniform over all C(l, r) subsets
            let mut pool: Vec<usize> = (0..l).collect();
            for i in 0..r {
                let j = rng.gen_range(i..l);
                pool.swap(i, j);
            }
            pool.truncate(r);
            pool
        }
        GroupDistribution::Weighted(w) => {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            let mut index = w.len() - 1;
            for (i, &p) in w.iter().enumerate() {
                acc += p;
                if u < acc {
                    index = i;
                    break;
                }
            }
            unrank_combination(l, r, index as u128)
        }
    }
}

fn sum_over_groups(l: usize, r: usize, weights: &[f64], pred: impl Fn(&[usize]) -> bool) -> f64 {
    let mut total = 0.0;
    for (rank, &p) in weights.iter().enumerate() {
        let group = unrank_combination(l, r, rank as u128);
        if pred(&group) {
            total += p;
        }
    }
    total
}

/// Participation probability of a degree-`d` node under uniform RGNP_r:
/// the chance that a uniform r-subset meets the closed neighborhood,
/// `1 - prod_{k=0}^{r-1} (1 - (d+1)/(L-k))`. A node whose closed
/// neighborhood leaves fewer than `r` outsiders participates always.
pub fn rgnp_uniform_pi(l: usize, r: usize, d: usize) -> f64 {
    let closed = d + 1;
    if l - closed < r {
        return 1.0;
    }
    let mut missing = 1.0;
    for k in 0..r {
        missing *= 1.0 - closed as f64 / (l - k) as f64;
    }
    1.0 - missing
}

/// The transmit rate for RNP under a general node distribution as printed in
/// the source table, `sum_{u in N_v} pi_u + sum_{u in N_v, w in N_u} p_w`.
/// Its second term double counts relative to the indicator-model derivation
/// used by [`expected_comms`]; kept only for comparison, unverified.
pub fn rnp_transmit_alternative(
    dist: &NodeDistribution,
    network: &Network,
    v: usize,
) -> Result<f64> {
    let l = network.node_count();
    let strategy = SelectionStrategy::Rnp(dist.clone());
    let mut total = 0.0;
    for &u in network.neighbors(v) {
        total += strategy.participation_probability(network, u)?;
        for &w in network.neighbors(u) {
            total += node_probability(dist, l, w);
        }
    }
    Ok(total)
}

/// Expected per-step participation and message-value counts for every node.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticipationProfile {
    /// Participation probability per node.
    pub pi: Vec<f64>,
    /// Expected scalar values transmitted per step, per node.
    pub transmit: Vec<f64>,
    /// Expected scalar values received per step, per node.
    pub receive: Vec<f64>,
    /// Scalars exchanged per neighbor message for the chosen algorithm.
    pub values_per_message: usize,
}

/// Expected communication per step. `strategy = None` is the deterministic
/// schedule where every node participates in every step, giving
/// `T(v) = R(v) = d_v * values_per_message` exactly.
pub fn expected_comms(
    strategy: Option<&SelectionStrategy>,
    network: &Network,
    kind: AlgorithmKind,
    sparsity: usize,
    dimension: usize,
) -> Result<ParticipationProfile> {
    let l_algo = kind.values_per_message(sparsity, dimension).ok_or_else(|| {
        Error::invalid(format!(
            "{} exchanges no messages, no communication profile exists",
            kind.label()
        ))
    })?;
    let l = network.node_count();
    let pi = match strategy {
        None => vec![1.0; l],
        Some(s) => s.participation_vector(network)?,
    };
    let mut transmit = vec![0.0; l];
    let mut receive = vec![0.0; l];
    for v in 0..l {
        receive[v] = pi[v] * network.degree(v) as f64 * l_algo as f64;
        transmit[v] = network.neighbors(v).iter().map(|&u| pi[u]).sum::<f64>() * l_algo as f64;
    }
    Ok(ParticipationProfile {
        pi,
        transmit,
        receive,
        values_per_message: l_algo,
    })
}

/// Strategy description as it appears in experiment configuration files.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct StrategyConfig {
    /// One of "rp", "rnp", "rgp", "rgnp".
    pub kind: String,
    /// Group order for rgp/rgnp.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    /// Only "uniform" is accepted here; weighted distributions are built
    /// programmatically.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<String>,
}

impl StrategyConfig {
    pub fn to_strategy(&self) -> Result<SelectionStrategy> {
        if let Some(d) = &self.distribution {
            if d != "uniform" {
                return Err(Error::invalid(format!(
                    "unsupported strategy distribution {d:?} in config (only \"uniform\")"
                )));
            }
        }
        let r = self.r;
        let need_r = || {
            r.ok_or_else(|| Error::invalid(format!("strategy {:?} requires group order r", self.kind)))
        };
        match self.kind.as_str() {
            "rp" => Ok(SelectionStrategy::rp_uniform()),
            "rnp" => Ok(SelectionStrategy::rnp_uniform()),
            "rgp" => Ok(SelectionStrategy::rgp_uniform(need_r()?)),
            "rgnp" => Ok(SelectionStrategy::rgnp_uniform(need_r()?)),
            other => Err(Error::invalid(format!("unknown strategy kind {other:?}"))),
        }
    }
}
