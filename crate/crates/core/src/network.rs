//! Erdős–Rényi network generation and the left-stochastic combination matrix.
//!
//! Graphs are undirected and must be connected before they are usable; the
//! generator resamples until depth-first search certifies connectivity. The
//! combination matrix is built by column-normalizing `adjacency + I`, so each
//! node weights its own intermediate estimate along with its neighbors'
//! (uniform weights, `a_{ji} = 1/(d_i + 1)` for `j` in the closed
//! neighborhood of `i`). A variant without the self-loop term is provided for
//! comparison and exposed through the CLI.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of resampling attempts before giving up on connectivity.
pub const DEFAULT_RETRY_BUDGET: usize = 10_000;

/// Tolerance on column sums of a combination matrix.
const COLUMN_SUM_TOL: f64 = 1e-9;

/// A connected undirected graph with its left-stochastic combination matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    adjacency: DMatrix<f64>,
    neighborhoods: Vec<Vec<usize>>,
    degrees: Vec<usize>,
    combination: DMatrix<f64>,
    retries: usize,
}

impl Network {
    /// Assembles a network from an adjacency matrix and a matching
    /// combination matrix, validating both.
    pub fn from_parts(adjacency: DMatrix<f64>, combination: DMatrix<f64>) -> Result<Self> {
        let l = validate_adjacency(&adjacency)?;
        if combination.nrows() != l || combination.ncols() != l {
            return Err(Error::invalid("combination matrix dimension mismatch"));
        }
        for j in 0..l {
            let sum: f64 = combination.column(j).iter().sum();
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::invalid(format!(
                    "column {j} of combination matrix sums to {sum}, expected 1"
                )));
            }
            for i in 0..l {
                let a = combination[(i, j)];
                if a < 0.0 {
                    return Err(Error::invalid("combination matrix has a negative entry"));
                }
                if a > 0.0 && i != j && adjacency[(i, j)] == 0.0 {
                    return Err(Error::invalid(format!(
                        "combination weight on non-edge ({i},{j})"
                    )));
                }
            }
        }
        let neighborhoods = neighborhoods_of(&adjacency);
        let degrees = neighborhoods.iter().map(Vec::len).collect();
        Ok(Network {
            adjacency,
            neighborhoods,
            degrees,
            combination,
            retries: 0,
        })
    }

    pub fn node_count(&self) -> usize {
        self.degrees.len()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// The left-stochastic combination matrix `A` (columns sum to one);
    /// `A[(j, i)]` weights node `j`'s contribution to node `i`.
    pub fn combination(&self) -> &DMatrix<f64> {
        &self.combination
    }

    /// Open neighborhood of `v` (excludes `v` itself), sorted.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighborhoods[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.degrees[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[(u, v)] > 0.0
    }

    /// How many graphs were discarded before a connected one appeared.
    pub fn generation_retries(&self) -> usize {
        self.retries
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let l = self.node_count();
        let mut edges = Vec::new();
        for i in 0..l {
            for j in (i + 1)..l {
                if self.adjacency[(i, j)] > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }

    pub fn to_json(&self) -> NetworkJson {
        NetworkJson {
            l: self.node_count(),
            edges: self.edges(),
            combination: self.combination.transpose().as_slice().to_vec(),
        }
    }

    pub fn from_json(doc: &NetworkJson) -> Result<Self> {
        let l = doc.l;
        if l < 2 {
            return Err(Error::invalid("network must have at least 2 nodes"));
        }
        if doc.combination.len() != l * l {
            return Err(Error::invalid(format!(
                "combination array has {} entries, expected {}",
                doc.combination.len(),
                l * l
            )));
        }
        let mut adjacency = DMatrix::zeros(l, l);
        for &(i, j) in &doc.edges {
            if i >= l || j >= l || i == j {
                return Err(Error::invalid(format!("bad edge ({i},{j}) for L={l}")));
            }
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
        // stored row-major
        let combination = DMatrix::from_row_slice(l, l, &doc.combination);
        Network::from_parts(adjacency, combination)
    }
}

/// JSON document describing a network: node count, undirected edge list and
/// the combination matrix in row-major order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkJson {
    #[serde(rename = "L")]
    pub l: usize,
    pub edges: Vec<(usize, usize)>,
    pub combination: Vec<f64>,
}

fn validate_adjacency(adjacency: &DMatrix<f64>) -> Result<usize> {
    if adjacency.nrows() != adjacency.ncols() {
        return Err(Error::invalid("adjacency matrix must be square"));
    }
    let l = adjacency.nrows();
    for i in 0..l {
        if adjacency[(i, i)] != 0.0 {
            return Err(Error::invalid("adjacency matrix must have a zero diagonal"));
        }
        for j in 0..l {
            let a = adjacency[(i, j)];
            if a != 0.0 && a != 1.0 {
                return Err(Error::invalid("adjacency entries must be 0 or 1"));
            }
            if (a - adjacency[(j, i)]).abs() != 0.0 {
                return Err(Error::invalid("adjacency matrix must be symmetric"));
            }
        }
    }
    Ok(l)
}

fn neighborhoods_of(adjacency: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let l = adjacency.nrows();
    (0..l)
        .map(|v| (0..l).filter(|&u| adjacency[(u, v)] > 0.0).collect())
        .collect()
}

/// Samples an Erdős–Rényi graph: each unordered node pair carries an edge
/// independently with probability `p`.
pub fn generate_er_graph(l: usize, p: f64, rng: &mut impl Rng) -> Result<DMatrix<f64>> {
    if l < 2 {
        return Err(Error::invalid(format!("need at least 2 nodes, got {l}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("edge probability {p} outside [0, 1]")));
    }
    let mut adjacency = DMatrix::zeros(l, l);
    for i in 0..l {
        for j in (i + 1)..l {
            if rng.gen::<f64>() < p {
                adjacency[(i, j)] = 1.0;
                adjacency[(j, i)] = 1.0;
            }
        }
    }
    Ok(adjacency)
}

/// Depth-first search connectivity test: true iff every node is reachable
/// from node 0.
pub fn is_connected(adjacency: &DMatrix<f64>) -> Result<bool> {
    if adjacency.nrows() != adjacency.ncols() {
        return Err(Error::invalid("adjacency matrix must be square"));
    }
    let l = adjacency.nrows();
    if l == 0 {
        return Ok(false);
    }
    let mut seen = vec![false; l];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for v in 0..l {
            if adjacency[(u, v)] > 0.0 && !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    Ok(count == l)
}

/// Column-normalizes `adjacency + I` into the combination matrix, so each
/// node retains a self weight alongside its neighbors.
pub fn build_combination_matrix(adjacency: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    normalize_columns(adjacency, true)
}

/// Column-normalizes the bare adjacency (no self weight). Every node must
/// have at least one neighbor, otherwise its column cannot be normalized.
pub fn build_combination_matrix_without_self_loops(
    adjacency: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    normalize_columns(adjacency, false)
}

fn normalize_columns(adjacency: &DMatrix<f64>, self_loops: bool) -> Result<DMatrix<f64>> {
    let l = validate_adjacency(adjacency)?;
    let mut a = adjacency.clone();
    if self_loops {
        for i in 0..l {
            a[(i, i)] = 1.0;
        }
    }
    for j in 0..l {
        let sum: f64 = a.column(j).iter().sum();
        if sum == 0.0 {
            return Err(Error::Internal(format!(
                "column {j} of the combination matrix sums to zero (isolated node)"
            )));
        }
        for i in 0..l {
            a[(i, j)] /= sum;
        }
    }
    Ok(a)
}

/// Resamples Erdős–Rényi graphs until one is connected, then builds the
/// combination matrix. The number of discarded graphs is recorded on the
/// returned network. Fails after `DEFAULT_RETRY_BUDGET` attempts, which at
/// the usual `p = ln L / L` signals a misconfigured caller.
pub fn generate_connected_network(l: usize, p: f64, rng: &mut impl Rng) -> Result<Network> {
    generate_connected_network_with(l, p, rng, DEFAULT_RETRY_BUDGET, true)
}

/// As [`generate_connected_network`], with an explicit retry budget and the
/// option to skip the self-loop term in the combination matrix.
pub fn generate_connected_network_with(
    l: usize,
    p: f64,
    rng: &mut impl Rng,
    retry_budget: usize,
    self_loops: bool,
) -> Result<Network> {
    let mut retries = 0;
    for _ in 0..retry_budget {
        let adjacency = generate_er_graph(l, p, rng)?;
        if is_connected(&adjacency)? {
            let combination = normalize_columns(&adjacency, self_loops)?;
            let mut network = Network::from_parts(adjacency, combination)?;
            network.retries = retries;
            return Ok(network);
        }
        retries += 1;
    }
    Err(Error::GenerationFailed {
        nodes: l,
        edge_probability: p,
        attempts: retry_budget,
    })
}
