use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};

use super::{covariance, KernelSpec};
use crate::error::Result;

/// Covariance matrix on a grid, optionally with per-entry standard errors
/// (for Monte Carlo estimates). Stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CovMatrix {
    grid: Vec<f64>,
    entries: Vec<f64>,
    stderr: Option<Vec<f64>>,
}

impl CovMatrix {
    pub fn new(grid: Vec<f64>, entries: Vec<f64>, stderr: Option<Vec<f64>>) -> Self {
        let n = grid.len();
        assert_eq!(entries.len(), n * n, "entries must be n×n");
        if let Some(se) = &stderr {
            assert_eq!(se.len(), n * n, "stderr must be n×n");
        }
        CovMatrix { grid, entries, stderr }
    }

    /// The model covariance `G(grid_i, grid_j)`.
    pub fn from_kernel(k: &KernelSpec, grid: &[f64]) -> Result<Self> {
        let n = grid.len();
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = covariance(k, grid[i], grid[j])?;
                entries[i * n + j] = v;
                entries[j * n + i] = v;
            }
        }
        Ok(CovMatrix::new(grid.to_vec(), entries, None))
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.len() + j]
    }

    pub fn stderr(&self, i: usize, j: usize) -> Option<f64> {
        self.stderr.as_ref().map(|s| s[i * self.len() + j])
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.len(), &self.entries)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = SymmetricEigen::new(self.to_dmatrix()).eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// CSV with header `s,t,cov,stderr` (empty stderr for model matrices).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,t,cov,stderr")?;
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                let se = self.stderr(i, j).map(|s| format!("{s:e}")).unwrap_or_default();
                writeln!(w, "{},{},{:e},{}", self.grid[i], self.grid[j], self.get(i, j), se)?;
            }
        }
        Ok(())
    }
}
