//! Sparse vectors, support sets, and the K-best-approximation operator.
//!
//! The hard-thresholding operator `H_K` keeps the K largest-magnitude entries
//! of a vector and zeroes the rest, which is exactly the Euclidean projection
//! onto the set of K-sparse vectors. Ties at the K-th magnitude are broken
//! toward the lower index so that runs are reproducible under fixed seeds;
//! any fixed tie-break yields a valid projection.

use nalgebra::DVector;

use crate::error::{Error, Result};

/// An ordered, duplicate-free set of 0-based coordinate indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportSet {
    indices: Vec<usize>,
}

impl SupportSet {
    /// Builds a support set, sorting and deduplicating the given indices.
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        SupportSet { indices }
    }

    pub fn empty() -> Self {
        SupportSet::default()
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.indices
    }

    /// Set union, used to form the joint support of several sparse vectors.
    pub fn union(&self, other: &SupportSet) -> SupportSet {
        let mut merged = Vec::with_capacity(self.len() + other.len());
        merged.extend_from_slice(&self.indices);
        merged.extend_from_slice(&other.indices);
        SupportSet::new(merged)
    }

    /// Largest index present, if any; callers validate it against a dimension.
    pub fn max_index(&self) -> Option<usize> {
        self.indices.last().copied()
    }

    fn validate_for_len(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(max) if max >= n => Err(Error::invalid(format!(
                "support index {max} out of range for vector of length {n}"
            ))),
            _ => Ok(()),
        }
    }
}

impl FromIterator<usize> for SupportSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        SupportSet::new(iter.into_iter().collect())
    }
}

/// A length-N vector together with the support of its nonzero entries.
///
/// The vector is stored dense: ambient dimensions in this crate are at most a
/// few hundred and dense arithmetic dominates, so compressed storage would
/// only complicate the combination steps. Entries off the support are exactly
/// zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSignal {
    values: DVector<f64>,
    support: SupportSet,
}

impl SparseSignal {
    /// The all-zero signal of dimension `n`.
    pub fn zero(n: usize) -> Self {
        SparseSignal {
            values: DVector::zeros(n),
            support: SupportSet::empty(),
        }
    }

    /// Builds a signal from `(index, value)` pairs; remaining entries are zero.
    ///
    /// Zero-valued pairs are dropped from the support. Errors if an index is
    /// out of range or duplicated.
    pub fn from_pairs(n: usize, pairs: &[(usize, f64)]) -> Result<Self> {
        let mut values = DVector::zeros(n);
        let mut indices = Vec::with_capacity(pairs.len());
        for &(i, v) in pairs {
            if i >= n {
                return Err(Error::invalid(format!(
                    "index {i} out of range for dimension {n}"
                )));
            }
            if indices.contains(&i) {
                return Err(Error::invalid(format!("duplicate index {i}")));
            }
            indices.push(i);
            values[i] = v;
        }
        Ok(SparseSignal::from_dense_exact(values))
    }

    /// Wraps an arbitrary dense vector, taking its exact nonzero pattern as
    /// the support.
    pub fn from_dense_exact(values: DVector<f64>) -> Self {
        let support = (0..values.len()).filter(|&i| values[i] != 0.0).collect();
        SparseSignal { values, support }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.len() == 0
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.values
    }

    pub fn support(&self) -> &SupportSet {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.norm()
    }

    pub fn into_vector(self) -> DVector<f64> {
        self.values
    }
}

/// Keeps the `k` largest-magnitude entries of `x` and zeroes the rest.
///
/// Among equal magnitudes the lower index wins, and exact zeros are never
/// admitted to the support, so the result has at most `k` nonzeros and is the
/// closest k-sparse vector to `x` in the Euclidean norm.
pub fn hard_threshold(x: &DVector<f64>, k: usize) -> Result<SparseSignal> {
    let n = x.len();
    if k > n {
        return Err(Error::invalid(format!(
            "sparsity {k} exceeds dimension {n}"
        )));
    }
    if k == 0 {
        return Ok(SparseSignal::zero(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        x[b].abs()
            .total_cmp(&x[a].abs())
            .then_with(|| a.cmp(&b))
    });
    let mut values = DVector::zeros(n);
    let mut kept = Vec::with_capacity(k);
    for &i in order.iter().take(k) {
        if x[i] != 0.0 {
            values[i] = x[i];
            kept.push(i);
        }
    }
    Ok(SparseSignal {
        values,
        support: SupportSet::new(kept),
    })
}

/// Zeroes every entry of `x` whose index lies outside `s` (embedded form:
/// the result keeps the full length of `x`).
pub fn restrict(x: &DVector<f64>, s: &SupportSet) -> Result<DVector<f64>> {
    s.validate_for_len(x.len())?;
    let mut out = DVector::zeros(x.len());
    for i in s.iter() {
        out[i] = x[i];
    }
    Ok(out)
}

/// Euclidean norm of the `k` largest-magnitude entries of `g`.
///
/// Equals the norm of the hard-thresholded vector, and therefore also the
/// maximum of the restricted norm over all supports of size `k`.
pub fn top_k_norm(g: &DVector<f64>, k: usize) -> Result<f64> {
    Ok(hard_threshold(g, k)?.norm())
}
