use crate::error::{KnhError, Result};

/// Three-way tensor in coordinate format.
///
/// Entries are kept sorted by `(i, j, k)` with duplicates summed and exact
/// zeros dropped, so equal tensors always have equal entry lists.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor3 {
    dims: [usize; 3],
    entries: Vec<(usize, usize, usize, f64)>,
}

impl SparseTensor3 {
    pub fn new(dims: [usize; 3], mut entries: Vec<(usize, usize, usize, f64)>) -> Result<Self> {
        for &(i, j, k, v) in &entries {
            if i >= dims[0] || j >= dims[1] || k >= dims[2] {
                return Err(KnhError::validation(format!(
                    "entry ({i}, {j}, {k}) outside dims {dims:?}"
                )));
            }
            if !v.is_finite() {
                return Err(KnhError::validation(format!(
                    "non-finite value at ({i}, {j}, {k})"
                )));
            }
        }
        entries.sort_by_key(|&(i, j, k, _)| (i, j, k));
        let mut merged: Vec<(usize, usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (i, j, k, v) in entries {
            match merged.last_mut() {
                Some(last) if (last.0, last.1, last.2) == (i, j, k) => last.3 += v,
                _ => merged.push((i, j, k, v)),
            }
        }
        merged.retain(|e| e.3 != 0.0);
        Ok(Self {
            dims,
            entries: merged,
        })
    }

    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            entries: Vec::new(),
        }
    }

    /// Builds a tensor by evaluating `f` at every coordinate.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let mut entries = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    entries.push((i, j, k, f(i, j, k)));
                }
            }
        }
        Self::new(dims, entries)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn entries(&self) -> &[(usize, usize, usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j, k), |&(a, b, c, _)| (a, b, c))
            .map_or(0.0, |pos| self.entries[pos].3)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|e| e.3 * e.3).sum::<f64>().sqrt()
    }
}
