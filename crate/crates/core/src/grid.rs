//! Axis-aligned task-space lattices holding sampled field values.
//!
//! The box is split into `n_k` equal cells per axis and each value is taken
//! at a cell centre, `lower_k + (i + 1/2) (upper_k - lower_k) / n_k`.
//! Refining `n -> 3n` keeps every coarse centre. Storage is row-major with
//! axis 0 varying fastest; "node" below means a cell centre.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::field::{FieldError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl GridBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(FieldError::InvalidGrid("bounds must have matching, non-zero dimension".into()));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(FieldError::InvalidGrid(format!("axis {k}: lower {lo} must be below upper {hi}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Square box of half-width `half` around `center`.
    pub fn around(center: &[f64], half: f64) -> Result<Self> {
        Self::new(center.iter().map(|c| c - half).collect(), center.iter().map(|c| c + half).collect())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter().zip(self.lower.iter().zip(&self.upper)).all(|(x, (lo, hi))| x >= lo && x <= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    bounds: GridBounds,
    resolution: Vec<usize>,
    values: Vec<f64>,
    reachable: Vec<bool>,
    penalty_value: f64,
}

impl FieldGrid {
    /// Grid with every node marked unreachable at `penalty_value`.
    pub fn empty(bounds: GridBounds, resolution: Vec<usize>, penalty_value: f64) -> Result<Self> {
        if resolution.len() != bounds.dim() {
            return Err(FieldError::InvalidGrid(format!(
                "resolution has {} axes, bounds have {}",
                resolution.len(),
                bounds.dim()
            )));
        }
        if let Some(k) = resolution.iter().position(|&n| n < 2) {
            return Err(FieldError::InvalidGrid(format!("axis {k} needs at least 2 nodes")));
        }
        if !penalty_value.is_finite() || penalty_value <= 0.0 {
            return Err(FieldError::InvalidGrid(format!("penalty value {penalty_value} must be positive")));
        }
        let len = resolution
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .ok_or_else(|| FieldError::InvalidGrid("node count overflows".into()))?;
        Ok(Self { bounds, resolution, values: vec![penalty_value; len], reachable: vec![false; len], penalty_value })
    }

    /// Assembles a grid from explicit node data. Unreachable nodes must hold
    /// the penalty value.
    pub fn from_parts(
        bounds: GridBounds,
        resolution: Vec<usize>,
        penalty_value: f64,
        values: Vec<f64>,
        reachable: Vec<bool>,
    ) -> Result<Self> {
        let grid = Self::empty(bounds, resolution, penalty_value)?;
        if values.len() != grid.len() || reachable.len() != grid.len() {
            return Err(FieldError::InvalidGrid(format!(
                "expected {} nodes, got {} values and {} flags",
                grid.len(),
                values.len(),
                reachable.len()
            )));
        }
        for (i, (v, r)) in values.iter().zip(&reachable).enumerate() {
            if !v.is_finite() || *v < 0.0 {
                return Err(FieldError::InvalidGrid(format!(
                    "node {i}: value {v} is not a finite non-negative number"
                )));
            }
            if !r && *v != penalty_value {
                return Err(FieldError::InvalidGrid(format!("node {i}: unreachable node must hold the penalty value")));
            }
        }
        Ok(Self { values, reachable, ..grid })
    }

    pub(crate) fn with_cells(mut self, cells: Vec<(f64, bool)>) -> Self {
        debug_assert_eq!(cells.len(), self.len());
        for (i, (v, r)) in cells.into_iter().enumerate() {
            self.values[i] = if r { v } else { self.penalty_value };
            self.reachable[i] = r;
        }
        self
    }

    pub fn bounds(&self) -> &GridBounds {
        &self.bounds
    }

    pub fn resolution(&self) -> &[usize] {
        &self.resolution
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reachable(&self) -> &[bool] {
        &self.reachable
    }

    pub fn penalty_value(&self) -> f64 {
        self.penalty_value
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.resolution.len()
    }

    /// Cell width along `axis`.
    pub fn spacing(&self, axis: usize) -> f64 {
        (self.bounds.upper[axis] - self.bounds.lower[axis]) / self.resolution[axis] as f64
    }

    /// Centre of cell `i` along `axis`. The fraction `(2i + 1) / 2n` is a
    /// single rounded division, so refining `n` to `3n` reproduces every
    /// coarse centre bit for bit.
    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let (l, u) = (self.bounds.lower[axis], self.bounds.upper[axis]);
        let frac = (2 * i + 1) as f64 / (2 * self.resolution[axis]) as f64;
        l + (u - l) * frac
    }

    pub fn multi_index(&self, mut idx: usize) -> Vec<usize> {
        self.resolution
            .iter()
            .map(|&n| {
                let i = idx % n;
                idx /= n;
                i
            })
            .collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.resolution).rev().fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node_position(&self, idx: usize) -> DVector<f64> {
        let multi = self.multi_index(idx);
        DVector::from_iterator(self.dim(), multi.iter().enumerate().map(|(k, &i)| self.coordinate(k, i)))
    }

    /// Index of the node whose cell contains `p`, or `None` outside the bounds.
    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        if !self.bounds.contains(p) {
            return None;
        }
        let multi: Vec<usize> = (0..self.dim())
            .map(|k| {
                let t = (p[k] - self.bounds.lower[k]) / self.spacing(k);
                (t.floor() as usize).min(self.resolution[k] - 1)
            })
            .collect();
        Some(self.flat_index(&multi))
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    pub fn is_reachable(&self, idx: usize) -> bool {
        self.reachable[idx]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        let b = GridBounds::new(vec![0.0, 0.0, 0.0], vec![1.0, 2.0, 3.0]).unwrap();
        let g = FieldGrid::empty(b, vec![3, 4, 5], 1.0).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.flat_index(&g.multi_index(idx)), idx);
        }
        assert_eq!(g.multi_index(1), vec![1, 0, 0]);
        let last = g.node_position(g.len() - 1);
        for (x, want) in last.iter().zip([1.0 - 1.0 / 6.0, 1.75, 2.7]) {
            assert!((x - want).abs() < 1e-15);
        }
    }

    #[test]
    fn nearest_node_finds_containing_cell() {
        let b = GridBounds::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        let g = FieldGrid::empty(b, vec![5, 5], 1.0).unwrap();
        let idx = g.nearest_node(&[0.26, -0.9]).unwrap();
        assert_eq!(g.multi_index(idx), vec![3, 0]);
        assert_eq!(g.nearest_node(&[1.5, 0.0]), None);
    }

    #[test]
    fn rejects_bad_shapes() {
        let b = GridBounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(FieldGrid::empty(b.clone(), vec![1, 4], 1.0).is_err());
        assert!(FieldGrid::empty(b.clone(), vec![4], 1.0).is_err());
        assert!(GridBounds::new(vec![1.0], vec![1.0]).is_err());
        assert!(FieldGrid::from_parts(b, vec![2, 2], 5.0, vec![0.0; 4], vec![false; 4]).is_err());
    }
}
