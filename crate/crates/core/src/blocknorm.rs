//! Block-structured matrix views and the M-block matrix norms.
//!
//! A [`BlockMatrix`] is a dense `(p·M) × (p·M)` matrix interpreted as a
//! `p × p` grid of `M × M` blocks. The block norms defined here treat each
//! block's Frobenius norm as a single scalar entry:
//!
//! ```text
//! ‖A‖_∞^(M)   = max_j Σ_l ‖A_jl‖_F      (block row sums)
//! ‖A‖_max^(M) = max_{j,l} ‖A_jl‖_F
//! ‖A‖_1^(M)   = max_l Σ_j ‖A_jl‖_F      (block column sums)
//! ```
//!
//! Block indices are 1-based in the public API; storage is 0-based.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};

/// Dense square matrix carrying its block structure: `p × p` blocks of size
/// `M × M` each.
///
/// Symmetry is deliberately not an invariant; dual iterates of the ADMM are
/// transiently asymmetric and call sites that need symmetry check it there.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockMatrix {
    data: DMatrix<f64>,
    p: usize,
    m: usize,
}

impl BlockMatrix {
    /// Wraps a dense matrix, checking that it is square with side `p·m`.
    pub fn new(data: DMatrix<f64>, p: usize, m: usize) -> Result<Self> {
        if p == 0 || m == 0 {
            return Err(Error::Input(format!(
                "block structure must be nonempty, got p={p}, m={m}"
            )));
        }
        if data.nrows() != p * m || data.ncols() != p * m {
            return Err(Error::Input(format!(
                "expected a {0}x{0} matrix for p={p}, m={m}, got {1}x{2}",
                p * m,
                data.nrows(),
                data.ncols()
            )));
        }
        Ok(Self { data, p, m })
    }

    /// All-zero block matrix.
    pub fn zeros(p: usize, m: usize) -> Self {
        Self {
            data: DMatrix::zeros(p * m, p * m),
            p,
            m,
        }
    }

    /// Identity block matrix (identity diagonal blocks, zero elsewhere).
    pub fn identity(p: usize, m: usize) -> Self {
        Self {
            data: DMatrix::identity(p * m, p * m),
            p,
            m,
        }
    }

    /// Number of block rows/columns (graph nodes).
    pub fn p(&self) -> usize {
        self.p
    }

    /// Block edge length.
    pub fn m(&self) -> usize {
        self.m
    }

    /// Full matrix side `p·M`.
    pub fn size(&self) -> usize {
        self.p * self.m
    }

    /// Underlying dense matrix.
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    /// Consumes the wrapper and returns the dense matrix.
    pub fn into_inner(self) -> DMatrix<f64> {
        self.data
    }

    fn check_block_index(&self, j: usize, l: usize) {
        assert!(
            (1..=self.p).contains(&j) && (1..=self.p).contains(&l),
            "block index ({j},{l}) out of range for p={}",
            self.p
        );
    }

    /// View of block `(j, l)`, 1-indexed.
    pub fn block_view(&self, j: usize, l: usize) -> DMatrixView<'_, f64> {
        self.check_block_index(j, l);
        self.data
            .view(((j - 1) * self.m, (l - 1) * self.m), (self.m, self.m))
    }

    /// Block `(j, l)` by value, 1-indexed.
    ///
    /// # Panics
    /// Panics if `j` or `l` is outside `1..=p`.
    pub fn block(&self, j: usize, l: usize) -> DMatrix<f64> {
        self.block_view(j, l).into_owned()
    }

    /// Overwrites block `(j, l)` with `value`.
    ///
    /// # Panics
    /// Panics if the index is out of range or `value` is not `M × M`.
    pub fn set_block(&mut self, j: usize, l: usize, value: &DMatrix<f64>) {
        self.check_block_index(j, l);
        assert!(
            value.nrows() == self.m && value.ncols() == self.m,
            "block value must be {0}x{0}, got {1}x{2}",
            self.m,
            value.nrows(),
            value.ncols()
        );
        self.data
            .view_mut(((j - 1) * self.m, (l - 1) * self.m), (self.m, self.m))
            .copy_from(value);
    }

    /// Frobenius norm of block `(j, l)`; zero iff the block is all-zero.
    pub fn block_frobenius(&self, j: usize, l: usize) -> f64 {
        self.block_view(j, l).norm()
    }

    /// True iff block `(j, l)` contains a nonzero entry (exact comparison).
    pub fn block_is_nonzero(&self, j: usize, l: usize) -> bool {
        self.block_view(j, l).iter().any(|&x| x != 0.0)
    }

    /// `‖A‖_∞^(M)`: max over block rows of the block-row Frobenius sums.
    pub fn block_norm_inf(&self) -> f64 {
        (1..=self.p)
            .map(|j| (1..=self.p).map(|l| self.block_frobenius(j, l)).sum())
            .fold(0.0, f64::max)
    }

    /// `‖A‖_max^(M)`: largest single-block Frobenius norm.
    pub fn block_norm_max(&self) -> f64 {
        let mut best = 0.0;
        for j in 1..=self.p {
            for l in 1..=self.p {
                best = f64::max(best, self.block_frobenius(j, l));
            }
        }
        best
    }

    /// `‖A‖_1^(M)`: max over block columns of the block-column Frobenius sums.
    pub fn block_norm_one(&self) -> f64 {
        (1..=self.p)
            .map(|l| (1..=self.p).map(|j| self.block_frobenius(j, l)).sum())
            .fold(0.0, f64::max)
    }

    /// Frobenius norm of the full matrix.
    pub fn frobenius(&self) -> f64 {
        self.data.norm()
    }

    /// Maximum absolute entrywise asymmetry `max |a_rs - a_sr|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.data.nrows();
        let mut worst = 0.0;
        for r in 0..n {
            for s in (r + 1)..n {
                worst = f64::max(worst, (self.data[(r, s)] - self.data[(s, r)]).abs());
            }
        }
        worst
    }

    /// Transposed copy with the same block structure.
    pub fn transpose(&self) -> Self {
        Self {
            data: self.data.transpose(),
            p: self.p,
            m: self.m,
        }
    }
}

/// `‖u‖_max^(M)` for a block vector: max Euclidean norm over length-`m` blocks.
///
/// # Panics
/// Panics if the vector length is not a positive multiple of `m`.
pub fn vec_block_norm_max(u: &DVector<f64>, m: usize) -> f64 {
    assert!(m > 0 && u.len() % m == 0 && !u.is_empty(), "bad block size");
    (0..u.len() / m)
        .map(|j| u.rows(j * m, m).norm())
        .fold(0.0, f64::max)
}

/// `‖x‖_max^(M)` for a block-column matrix `x` of shape `(p·m) × m`:
/// max Frobenius norm over the stacked `m × m` blocks.
pub fn col_block_norm_max(x: &DMatrix<f64>, m: usize) -> f64 {
    assert!(
        m > 0 && x.ncols() == m && x.nrows() % m == 0 && x.nrows() > 0,
        "block-column matrix must be (p*m) x m"
    );
    (0..x.nrows() / m)
        .map(|j| x.view((j * m, 0), (m, m)).norm())
        .fold(0.0, f64::max)
}

/// `‖x‖_1^(M)` for a block-column matrix: sum of block Frobenius norms.
pub fn col_block_norm_one(x: &DMatrix<f64>, m: usize) -> f64 {
    assert!(
        m > 0 && x.ncols() == m && x.nrows() % m == 0 && x.nrows() > 0,
        "block-column matrix must be (p*m) x m"
    );
    (0..x.nrows() / m)
        .map(|j| x.view((j * m, 0), (m, m)).norm())
        .sum()
}
