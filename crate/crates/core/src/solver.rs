//! Weighted blockwise group graphical lasso solved with ADMM.
//!
//! The primal problem for one subpopulation with score covariance `S` is
//!
//! ```text
//! minimize  tr(SΩ) − log det(Ω) + λ Σ_{j≠l} τ_jl ‖Ω_jl‖_F   over Ω ≻ 0,
//! ```
//!
//! split as `Ω − Z = 0`. Each iteration performs
//! - Ω-update: eigendecompose `Z − (S + V)/b = Y Λ Yᵀ` and map the spectrum
//!   through `λᵢ ↦ ½(λᵢ + √(λᵢ² + 4/b))`, which is strictly positive, so
//!   every Ω iterate is positive definite;
//! - Z-update: keep diagonal blocks, group-soft-threshold off-diagonal
//!   blocks of `Ω + V/b` at level `λ τ_jl / b`;
//! - V-update: `V ← V + b(Ω − Z)`.
//!
//! The estimated graph is read off the exact zero blocks of the dual
//! iterate `Z`, which is a hard-thresholding output.

use std::collections::BTreeSet;

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::blocknorm::BlockMatrix;
use crate::error::{Error, Result};

/// Edges of an undirected graph over 1-indexed nodes, stored as `(j, l)`
/// with `j < l`.
pub type EdgeSet = BTreeSet<(usize, usize)>;

/// Symmetric nonnegative penalty weights `τ_jl` with zero diagonal.
///
/// `+∞` is a legal weight and forces the corresponding block to zero for
/// every positive `λ`.
#[derive(Debug, Clone)]
pub struct WeightMatrix {
    tau: DMatrix<f64>,
}

impl WeightMatrix {
    /// Validates and wraps a `p × p` weight matrix.
    pub fn new(tau: DMatrix<f64>) -> Result<Self> {
        let p = tau.nrows();
        if p == 0 || tau.ncols() != p {
            return Err(Error::Input(format!(
                "weight matrix must be square and nonempty, got {}x{}",
                tau.nrows(),
                tau.ncols()
            )));
        }
        for j in 0..p {
            if tau[(j, j)] != 0.0 {
                return Err(Error::Input(format!(
                    "weight diagonal must be zero, got tau[{j},{j}] = {}",
                    tau[(j, j)]
                )));
            }
            for l in 0..p {
                let t = tau[(j, l)];
                if t.is_nan() || t < 0.0 {
                    return Err(Error::Input(format!(
                        "weights must be nonnegative (or +inf), got tau[{j},{l}] = {t}"
                    )));
                }
                if tau[(j, l)] != tau[(l, j)] {
                    return Err(Error::Input(format!(
                        "weights must be symmetric, mismatch at ({j},{l})"
                    )));
                }
            }
        }
        Ok(Self { tau })
    }

    /// Unit off-diagonal weights: the unweighted functional graphical lasso.
    pub fn unit(p: usize) -> Self {
        let mut tau = DMatrix::from_element(p, p, 1.0);
        tau.fill_diagonal(0.0);
        Self { tau }
    }

    pub fn p(&self) -> usize {
        self.tau.nrows()
    }

    /// Weight `τ_jl`, 1-indexed.
    pub fn get(&self, j: usize, l: usize) -> f64 {
        self.tau[(j - 1, l - 1)]
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.tau
    }
}

/// ADMM controls. `b` is the augmented-Lagrangian constant; tolerances are
/// relative (`‖Ω−Z‖_F ≤ tol_primal·(1+‖Z‖_F)` and
/// `b‖Z_t−Z_{t−1}‖_F ≤ tol_dual·(1+‖V‖_F)`).
#[derive(Debug, Clone)]
pub struct AdmmSettings {
    pub b: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
}

impl Default for AdmmSettings {
    fn default() -> Self {
        Self {
            b: 1.0,
            tol_primal: 1e-6,
            tol_dual: 1e-6,
            max_iter: 500,
        }
    }
}

impl AdmmSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.b > 0.0) {
            return Err(Error::Config(format!("b must be positive, got {}", self.b)));
        }
        if !(self.tol_primal > 0.0) || !(self.tol_dual > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Output of one ADMM solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    /// Primal iterate; positive definite by construction of the Ω-update.
    pub omega: BlockMatrix,
    /// Dual iterate; carries the sparsity pattern (exact zero blocks).
    pub z: BlockMatrix,
    /// Scaled multiplier.
    pub v: BlockMatrix,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

/// Effective penalty level for one off-diagonal block.
///
/// `τ = +∞` forces the block to zero whenever `λ > 0`; at `λ = 0` the block
/// is unpenalized (the convention `0·∞ = 0` would otherwise be ambiguous).
fn penalty_level(lambda: f64, tau: f64) -> f64 {
    if tau.is_infinite() {
        if lambda > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        lambda * tau
    }
}

/// Solves the weighted blockwise group graphical lasso for one covariance.
///
/// `s` must be symmetric (up to 1e-8, it is re-symmetrized internally) with
/// strictly positive diagonal. Initial values follow the splitting scheme:
/// `Z` starts at the all-ones matrix and `V` at zero. Reaching `max_iter`
/// yields `converged = false`, not an error.
pub fn admm_solve(
    s: &BlockMatrix,
    weights: &WeightMatrix,
    lambda: f64,
    settings: &AdmmSettings,
) -> Result<SolveResult> {
    let n = s.size();
    let (p, m) = (s.p(), s.m());
    solve_checks(s, weights, lambda, settings)?;

    let z0 = DMatrix::from_element(n, n, 1.0);
    let v0 = DMatrix::zeros(n, n);
    let (z, v, omega, iterations, primal, dual, converged) =
        solve_inner(s.data(), weights, lambda, settings, z0, v0);

    Ok(SolveResult {
        omega: BlockMatrix::new(omega, p, m).expect("solver preserves shape"),
        z: BlockMatrix::new(z, p, m).expect("solver preserves shape"),
        v: BlockMatrix::new(v, p, m).expect("solver preserves shape"),
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
    })
}

fn solve_checks(
    s: &BlockMatrix,
    weights: &WeightMatrix,
    lambda: f64,
    settings: &AdmmSettings,
) -> Result<()> {
    settings.validate()?;
    if weights.p() != s.p() {
        return Err(Error::Input(format!(
            "weight matrix is {}x{} but the covariance has p={} blocks",
            weights.p(),
            weights.p(),
            s.p()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::Input(format!("lambda must be >= 0, got {lambda}")));
    }
    if s.asymmetry() > 1e-8 {
        return Err(Error::Input(format!(
            "covariance must be symmetric, max asymmetry {:.3e}",
            s.asymmetry()
        )));
    }
    for i in 0..s.size() {
        if !(s.data()[(i, i)] > 0.0) {
            return Err(Error::Input(format!(
                "covariance diagonal must be strictly positive, got s[{i},{i}] = {}",
                s.data()[(i, i)]
            )));
        }
    }
    Ok(())
}

#[allow(clippy::type_complexity)]
fn solve_inner(
    s_raw: &DMatrix<f64>,
    weights: &WeightMatrix,
    lambda: f64,
    settings: &AdmmSettings,
    mut z: DMatrix<f64>,
    mut v: DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, usize, f64, f64, bool) {
    let n = s_raw.nrows();
    let p = weights.p();
    let m = n / p;
    let b = settings.b;
    // Exact symmetry for the eigendecomposition input.
    let s = (s_raw + s_raw.transpose()).scale(0.5);

    let mut omega = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0;
    let mut primal = f64::INFINITY;
    let mut dual = f64::INFINITY;
    let mut converged = false;

    for t in 1..=settings.max_iter {
        iterations = t;

        // Ω-update via the positive spectral map.
        let a = {
            let mut a = &z - (&s + &v).scale(1.0 / b);
            let at = a.transpose();
            a += at;
            a.scale_mut(0.5);
            a
        };
        let eig = SymmetricEigen::new(a);
        let mapped = eig
            .eigenvalues
            .map(|lam| 0.5 * (lam + (lam * lam + 4.0 / b).sqrt()));
        debug_assert!(
            mapped.iter().all(|&d| d > 0.0),
            "spectral map must produce a positive definite iterate"
        );
        let mut scaled = eig.eigenvectors.clone();
        for (c, &d) in mapped.iter().enumerate() {
            scaled.column_mut(c).scale_mut(d);
        }
        omega = &scaled * eig.eigenvectors.transpose();
        let omega_t = omega.transpose();
        omega += omega_t;
        omega.scale_mut(0.5);

        // Z-update: blockwise shrinkage of C = Ω + V/b, mirrored across the
        // diagonal so exact zeros land symmetrically.
        let c = &omega + v.scale(1.0 / b);
        let z_prev = z.clone();
        for j in 1..=p {
            let r0 = (j - 1) * m;
            z.view_mut((r0, r0), (m, m))
                .copy_from(&c.view((r0, r0), (m, m)));
            for l in (j + 1)..=p {
                let c0 = (l - 1) * m;
                let cjl = c.view((r0, c0), (m, m));
                let level = penalty_level(lambda, weights.get(j, l));
                let norm = cjl.norm();
                let shrink = if level.is_infinite() || norm == 0.0 {
                    0.0
                } else {
                    f64::max(0.0, 1.0 - level / (b * norm))
                };
                if shrink == 0.0 {
                    z.view_mut((r0, c0), (m, m)).fill(0.0);
                    z.view_mut((c0, r0), (m, m)).fill(0.0);
                } else {
                    let block = cjl.into_owned().scale(shrink);
                    z.view_mut((r0, c0), (m, m)).copy_from(&block);
                    z.view_mut((c0, r0), (m, m)).copy_from(&block.transpose());
                }
            }
        }

        // V-update.
        let gap = &omega - &z;
        v += gap.scale(b);

        primal = gap.norm();
        dual = b * (&z - &z_prev).norm();
        if primal <= settings.tol_primal * (1.0 + z.norm())
            && dual <= settings.tol_dual * (1.0 + v.norm())
        {
            converged = true;
            break;
        }
    }

    (z, v, omega, iterations, primal, dual, converged)
}

/// Stationarity residual `‖S − Ω⁻¹ + λ(T ⊗ 1_M 1_Mᵀ) ∘ Ẑ‖_max^(M)` for a
/// candidate solution.
///
/// The subgradient `Ẑ` is implied by the pair `(Ω, Z)`:
/// - diagonal blocks: 0;
/// - off-diagonal blocks where `Z_jl ≠ 0`: `Ω_jl / ‖Ω_jl‖_F`;
/// - off-diagonal blocks where `Z_jl = 0`: the element derived from the
///   stationarity equation, `(Ω⁻¹ − S)_jl / (λτ_jl)`, projected onto the unit
///   Frobenius ball. The block then contributes `max(0, ‖(S − Ω⁻¹)_jl‖_F −
///   λτ_jl)`, so dual-feasibility violations show up in the residual.
///
/// Blocks with `λτ_jl = 0` contribute the raw gradient `(S − Ω⁻¹)_jl`, and
/// blocks forced to zero by `τ_jl = +∞` contribute nothing.
pub fn kkt_residual(
    s: &BlockMatrix,
    omega: &BlockMatrix,
    z: &BlockMatrix,
    weights: &WeightMatrix,
    lambda: f64,
) -> Result<f64> {
    let (p, m) = (s.p(), s.m());
    if omega.p() != p || omega.m() != m || z.p() != p || z.m() != m || weights.p() != p {
        return Err(Error::Input("kkt_residual: shape mismatch".into()));
    }
    let chol = Cholesky::new(omega.data().clone())
        .ok_or_else(|| Error::Numeric("omega is not positive definite".into()))?;
    let omega_inv = chol.inverse();

    let mut worst = 0.0_f64;
    for j in 1..=p {
        for l in 1..=p {
            let grad = s.block_view(j, l).into_owned()
                - omega_inv.view(((j - 1) * m, (l - 1) * m), (m, m));
            let contribution = if j == l {
                grad.norm()
            } else {
                let level = penalty_level(lambda, weights.get(j, l));
                if level.is_infinite() {
                    0.0
                } else if level == 0.0 {
                    grad.norm()
                } else if z.block_is_nonzero(j, l) && omega.block_frobenius(j, l) > 0.0 {
                    let ow = omega.block_view(j, l).into_owned();
                    let sub = ow.scale(level / omega.block_frobenius(j, l));
                    (grad + sub).norm()
                } else {
                    // Zero block: witness (Ω⁻¹ − S)_jl/(λτ) clipped to the
                    // unit ball; only the dual-infeasible excess remains.
                    f64::max(0.0, grad.norm() - level)
                }
            };
            worst = worst.max(contribution);
        }
    }
    Ok(worst)
}

/// Edges supported by the dual iterate: `(j, l)` with `j < l` is present iff
/// block `Z_jl` has a nonzero entry. No tolerance is applied; the Z-update is
/// a hard-thresholding rule and produces exact zeros.
pub fn extract_edges(result: &SolveResult) -> EdgeSet {
    edges_from_dual(&result.z)
}

/// Edge set read off the exact zero blocks of a dual matrix.
pub fn edges_from_dual(z: &BlockMatrix) -> EdgeSet {
    let p = z.p();
    let mut edges = EdgeSet::new();
    for j in 1..=p {
        for l in (j + 1)..=p {
            if z.block_is_nonzero(j, l) {
                edges.insert((j, l));
            }
        }
    }
    edges
}
