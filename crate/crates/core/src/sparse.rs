//! Thin wrapper over the sparse direct solvers used for the globally
//! coupled systems: Cholesky for the symmetric positive definite forms,
//! with an LU fallback for matrices that lose definiteness in the last
//! digits.

use faer::prelude::SpSolver;
use faer::sparse::SparseColMat;
use faer::Mat;
use nalgebra::DVector;

use crate::error::{Error, Result};

/// Triplet accumulator for an n x n sparse matrix.
pub struct TripletBuffer {
    pub n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuffer {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn extend(&mut self, other: TripletBuffer) {
        self.entries.extend(other.entries);
    }

    pub fn build(&self) -> Result<SparseColMat<usize, f64>> {
        SparseColMat::try_new_from_triplets(self.n, self.n, &self.entries)
            .map_err(|e| Error::SingularSystem(format!("sparse assembly: {e:?}")))
    }
}

/// Factorized sparse matrix.
pub enum Factorization {
    Cholesky(faer::sparse::linalg::solvers::Cholesky<usize, f64>),
    Lu(faer::sparse::linalg::solvers::Lu<usize, f64>),
}

impl Factorization {
    /// Factor a symmetric matrix, preferring Cholesky.
    pub fn symmetric(matrix: &SparseColMat<usize, f64>) -> Result<Self> {
        match matrix.sp_cholesky(faer::Side::Lower) {
            Ok(chol) => Ok(Factorization::Cholesky(chol)),
            Err(_) => matrix
                .sp_lu()
                .map(Factorization::Lu)
                .map_err(|e| Error::Solver(format!("sparse factorization failed: {e:?}"))),
        }
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let n = rhs.len();
        let b = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let x = match self {
            Factorization::Cholesky(f) => f.solve(&b),
            Factorization::Lu(f) => f.solve(&b),
        };
        DVector::from_fn(n, |i, _| x[(i, 0)])
    }
}
