//! Discretized functional PCA for one subpopulation.
//!
//! Curves are observed at `ν` equally spaced time points with gap
//! `w = (t_end − t_start)/(ν − 1)`. For each variable `j` the discretized
//! covariance `K̂_j = n⁻¹ G_jᵀ G_j` is eigendecomposed under the constraint
//! `‖u‖₂ = 1`; the eigenvalue estimate is `λ̂_jm = w · u_mᵀ K̂_j u_m` (the
//! scaling that makes `w K̂ φ = λ φ` self-consistent) and the eigenfunction
//! values at the grid are the eigenvector coordinates. Scores are the
//! Riemann-sum projections `â_ijm = w Σ_q g_ij(t_q) φ̂_jm(t_q)`, and their
//! sample covariance `Σ̂ = n⁻¹ Σ_i â_i â_iᵀ` (divisor `n`, not `n − 1`)
//! feeds the solver.

use nalgebra::{DMatrix, SymmetricEigen, QR};
use rayon::prelude::*;

use crate::blocknorm::BlockMatrix;
use crate::error::{Error, Result};

/// Curves of one subpopulation on a shared equally spaced grid: for each of
/// `p` variables, an `n × ν` matrix of values (subjects in rows).
#[derive(Debug, Clone)]
pub struct CurvePanel {
    curves: Vec<DMatrix<f64>>,
    t_start: f64,
    t_end: f64,
    group_id: String,
}

impl CurvePanel {
    /// Builds a panel from per-variable `n × ν` matrices.
    pub fn new(
        curves: Vec<DMatrix<f64>>,
        t_start: f64,
        t_end: f64,
        group_id: impl Into<String>,
    ) -> Result<Self> {
        if curves.is_empty() {
            return Err(Error::Input("panel needs at least one variable".into()));
        }
        let (n, nu) = (curves[0].nrows(), curves[0].ncols());
        if n == 0 {
            return Err(Error::Input("panel needs at least one subject".into()));
        }
        if nu < 2 {
            return Err(Error::Input(format!("grid needs at least 2 points, got {nu}")));
        }
        if curves.iter().any(|g| g.nrows() != n || g.ncols() != nu) {
            return Err(Error::Input("all variables must share n and ν".into()));
        }
        if !(t_end > t_start) {
            return Err(Error::Input(format!(
                "grid endpoints must satisfy t_start < t_end, got [{t_start}, {t_end}]"
            )));
        }
        Ok(Self {
            curves,
            t_start,
            t_end,
            group_id: group_id.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.curves[0].nrows()
    }

    pub fn p(&self) -> usize {
        self.curves.len()
    }

    pub fn nu(&self) -> usize {
        self.curves[0].ncols()
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn group_id(&self) -> &str {
        &self.group_id
    }

    /// Gap between adjacent time points.
    pub fn gap(&self) -> f64 {
        (self.t_end - self.t_start) / (self.nu() as f64 - 1.0)
    }

    /// The time grid `t_1, …, t_ν`.
    pub fn grid(&self) -> Vec<f64> {
        let w = self.gap();
        (0..self.nu()).map(|q| self.t_start + q as f64 * w).collect()
    }

    /// `n × ν` value matrix of variable `j`, 1-indexed.
    ///
    /// # Panics
    /// Panics if `j` is outside `1..=p`.
    pub fn variable(&self, j: usize) -> &DMatrix<f64> {
        assert!(
            (1..=self.p()).contains(&j),
            "variable index {j} out of range for p={}",
            self.p()
        );
        &self.curves[j - 1]
    }

    /// Panel with per-(variable, time) means over subjects removed.
    /// Idempotent.
    pub fn centered(&self) -> CurvePanel {
        let n = self.n() as f64;
        let curves = self
            .curves
            .iter()
            .map(|g| {
                let mut c = g.clone();
                for q in 0..c.ncols() {
                    let mean = c.column(q).sum() / n;
                    c.column_mut(q).add_scalar_mut(-mean);
                }
                c
            })
            .collect();
        CurvePanel {
            curves,
            t_start: self.t_start,
            t_end: self.t_end,
            group_id: self.group_id.clone(),
        }
    }

    /// True when every (variable, time) column mean is within `tol` of zero.
    pub fn is_centered(&self, tol: f64) -> bool {
        let n = self.n() as f64;
        self.curves
            .iter()
            .all(|g| (0..g.ncols()).all(|q| (g.column(q).sum() / n).abs() <= tol))
    }

    /// Discretized covariance estimate `K̂_j = n⁻¹ G_jᵀ G_j` of variable `j`
    /// (1-indexed). The panel is assumed centered.
    ///
    /// # Panics
    /// Panics if `j` is outside `1..=p`.
    pub fn covariance_matrix(&self, j: usize) -> DMatrix<f64> {
        let g = self.variable(j);
        (g.transpose() * g) / self.n() as f64
    }
}

/// Estimated eigenpairs of the per-variable covariance operators.
#[derive(Debug, Clone)]
pub struct FpcaBasis {
    /// `p` lists of `M` eigenvalue estimates, nonincreasing.
    eigenvalues: Vec<Vec<f64>>,
    /// Per variable, an `M × ν` matrix whose rows are eigenfunction values
    /// at the grid, orthonormal in Euclidean norm.
    eigenfunctions: Vec<DMatrix<f64>>,
    w: f64,
    nu: usize,
}

impl FpcaBasis {
    /// Validates orthonormality (Gram within 1e-8 of identity) and ordering.
    pub fn new(
        eigenvalues: Vec<Vec<f64>>,
        eigenfunctions: Vec<DMatrix<f64>>,
        w: f64,
    ) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.len() != eigenfunctions.len() {
            return Err(Error::Input(
                "eigenvalues and eigenfunctions must cover the same variables".into(),
            ));
        }
        if !(w > 0.0) {
            return Err(Error::Input(format!("grid gap must be positive, got {w}")));
        }
        let m = eigenvalues[0].len();
        let nu = eigenfunctions[0].ncols();
        for (vals, funcs) in eigenvalues.iter().zip(&eigenfunctions) {
            if vals.len() != m || funcs.nrows() != m || funcs.ncols() != nu {
                return Err(Error::Input("inconsistent basis shapes across variables".into()));
            }
            if vals.windows(2).any(|v| v[1] > v[0]) || vals.iter().any(|&v| v < 0.0) {
                return Err(Error::Input(
                    "eigenvalues must be nonnegative and nonincreasing".into(),
                ));
            }
            let gram = funcs * funcs.transpose();
            if (&gram - DMatrix::identity(m, m)).amax() > 1e-8 {
                return Err(Error::Input(
                    "eigenfunction rows must be orthonormal in Euclidean norm".into(),
                ));
            }
        }
        Ok(Self {
            eigenvalues,
            eigenfunctions,
            w,
            nu,
        })
    }

    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn m(&self) -> usize {
        self.eigenvalues[0].len()
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    /// Eigenvalue estimates of variable `j`, 1-indexed.
    pub fn eigenvalues(&self, j: usize) -> &[f64] {
        &self.eigenvalues[j - 1]
    }

    /// `M × ν` eigenfunction values of variable `j`, 1-indexed.
    pub fn eigenfunctions(&self, j: usize) -> &DMatrix<f64> {
        &self.eigenfunctions[j - 1]
    }

    /// Variables whose trailing eigenvalue is (numerically) zero, i.e. where
    /// `M` exceeds the rank of the covariance estimate. 1-indexed.
    pub fn rank_deficient_variables(&self) -> Vec<usize> {
        self.eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, vals)| {
                let scale = vals.first().copied().unwrap_or(0.0).max(1.0);
                vals.last().copied().unwrap_or(0.0) <= 1e-12 * scale
            })
            .map(|(j, _)| j + 1)
            .collect()
    }
}

/// Karhunen–Loève score estimates: `n × (p·M)`, subject-major, columns
/// ordered variable-then-component so that column block `j` matches block
/// `j` of every downstream [`BlockMatrix`].
#[derive(Debug, Clone)]
pub struct ScoreMatrix {
    scores: DMatrix<f64>,
    p: usize,
    m: usize,
}

impl ScoreMatrix {
    pub fn new(scores: DMatrix<f64>, p: usize, m: usize) -> Result<Self> {
        if p == 0 || m == 0 || scores.ncols() != p * m || scores.nrows() == 0 {
            return Err(Error::Input(format!(
                "scores must be n x (p*m) with n >= 1, got {}x{} for p={p}, m={m}",
                scores.nrows(),
                scores.ncols()
            )));
        }
        Ok(Self { scores, p, m })
    }

    pub fn n(&self) -> usize {
        self.scores.nrows()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.scores
    }
}

/// Top-`m` eigenpairs of the discretized operator `w·K̂`.
///
/// Returns eigenvalues `λ̂ = w·uᵀK̂u` (clamped at zero, nonincreasing) and an
/// `m × ν` matrix of eigenvectors with `‖u‖₂ = 1`, each with its first
/// nonzero coordinate made positive.
pub fn eigenpairs(khat: &DMatrix<f64>, w: f64, m: usize) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let nu = khat.nrows();
    if khat.ncols() != nu || nu == 0 {
        return Err(Error::Input("covariance matrix must be square".into()));
    }
    if m == 0 || m > nu {
        return Err(Error::Config(format!(
            "number of components must satisfy 1 <= M <= ν, got M={m}, ν={nu}"
        )));
    }
    if !(w > 0.0) {
        return Err(Error::Input(format!("grid gap must be positive, got {w}")));
    }
    let sym = (khat + khat.transpose()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..nu).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .expect("symmetric eigenvalues are finite")
    });

    let mut values = Vec::with_capacity(m);
    let mut vectors = DMatrix::zeros(m, nu);
    for (rank, &idx) in order.iter().take(m).enumerate() {
        values.push(f64::max(0.0, w * eig.eigenvalues[idx]));
        let mut u = eig.eigenvectors.column(idx).into_owned();
        if let Some(first) = u.iter().find(|&&x| x != 0.0) {
            if *first < 0.0 {
                u.neg_mut();
            }
        }
        vectors.row_mut(rank).copy_from(&u.transpose());
    }
    Ok((values, vectors))
}

/// Runs the per-variable eigenproblems and assembles the basis.
/// The panel is assumed centered.
pub fn fit_basis(panel: &CurvePanel, m: usize) -> Result<FpcaBasis> {
    if m == 0 || m > panel.nu() {
        return Err(Error::Config(format!(
            "number of components must satisfy 1 <= M <= ν, got M={m}, ν={}",
            panel.nu()
        )));
    }
    let w = panel.gap();
    let per_variable: Vec<(Vec<f64>, DMatrix<f64>)> = (1..=panel.p())
        .into_par_iter()
        .map(|j| eigenpairs(&panel.covariance_matrix(j), w, m))
        .collect::<Result<_>>()?;
    let (eigenvalues, eigenfunctions) = per_variable.into_iter().unzip();
    FpcaBasis::new(eigenvalues, eigenfunctions, w)
}

/// Score estimates `â_ijm = w Σ_q g_ij(t_q) φ̂_jm(t_q)` for every subject.
pub fn compute_scores(panel: &CurvePanel, basis: &FpcaBasis) -> Result<ScoreMatrix> {
    if basis.p() != panel.p() {
        return Err(Error::Config(format!(
            "basis covers {} variables but the panel has {}",
            basis.p(),
            panel.p()
        )));
    }
    if basis.nu() != panel.nu() || (basis.w() - panel.gap()).abs() > 1e-10 * basis.w() {
        return Err(Error::Config(format!(
            "grid mismatch: basis (ν={}, w={}) vs panel (ν={}, w={})",
            basis.nu(),
            basis.w(),
            panel.nu(),
            panel.gap()
        )));
    }
    let (n, p, m) = (panel.n(), panel.p(), basis.m());
    let mut scores = DMatrix::zeros(n, p * m);
    for j in 1..=p {
        let block = panel.variable(j) * basis.eigenfunctions(j).transpose() * basis.w();
        scores.view_mut((0, (j - 1) * m), (n, m)).copy_from(&block);
    }
    ScoreMatrix::new(scores, p, m)
}

/// Sample covariance `Σ̂ = n⁻¹ Σ_i â_i â_iᵀ` of the stacked scores.
pub fn score_covariance(scores: &ScoreMatrix) -> BlockMatrix {
    let s = scores.matrix().transpose() * scores.matrix() / scores.n() as f64;
    BlockMatrix::new(s, scores.p(), scores.m()).expect("score shape fixes the block structure")
}

/// Orthonormalizes the rows of `raw` (`M × ν`, assumed linearly independent)
/// with respect to the grid inner product `⟨f, g⟩ = w Σ_q f(t_q) g(t_q)`,
/// so that `w Σ_q φ_m(t_q) φ_m'(t_q) = δ_mm'`. Signs follow the
/// first-nonzero-positive convention.
pub fn grid_orthonormal_basis(raw: &DMatrix<f64>, w: f64) -> Result<DMatrix<f64>> {
    if !(w > 0.0) {
        return Err(Error::Input(format!("grid gap must be positive, got {w}")));
    }
    let m = raw.nrows();
    let qr = QR::new(raw.transpose());
    let q = qr.q();
    let r = qr.r();
    for i in 0..m {
        if r[(i, i)].abs() < 1e-12 {
            return Err(Error::Numeric(
                "basis functions are linearly dependent at the grid".into(),
            ));
        }
    }
    let mut out = q.transpose() / w.sqrt();
    for i in 0..m {
        let mut row = out.row_mut(i);
        if let Some(first) = row.iter().find(|&&x| x != 0.0) {
            if *first < 0.0 {
                row.neg_mut();
            }
        }
    }
    Ok(out)
}
