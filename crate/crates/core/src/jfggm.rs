//! Joint estimation across K subpopulations.
//!
//! The joint objective couples the groups through a square-root group
//! penalty `λ Σ_{j≠l} (Σ_k ‖Ω_jl^(k)‖_F)^{1/2}`, the collapsed form of a
//! hierarchical common/individual penalty (see [`objective_q1`],
//! [`objective_q2`], [`objective_q3`] for the three equivalent objective
//! evaluators). The square root makes the problem nonconvex; it is handled
//! by local linear approximation: starting from separate per-group fits,
//! each step freezes blockwise weights
//! `τ_jl = ½ (Σ_k ‖Ω_jl^(k)‖_F)^{-1/2}` at the previous iterate and solves
//! K independent weighted problems. One step from a reasonable initializer
//! already gives a good sparse estimate and is the default.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::blocknorm::BlockMatrix;
use crate::error::{Error, Result};
use crate::solver::{admm_solve, extract_edges, AdmmSettings, EdgeSet, SolveResult, WeightMatrix};

/// Cap on finite LLA weights. True `+∞` (from exactly-zero initial blocks)
/// is kept; merely tiny block sums are clipped here so a dense initializer
/// cannot produce effectively-infinite weights everywhere.
pub const DEFAULT_WEIGHT_CAP: f64 = 1e12;

/// Per-group score covariances sharing one block structure.
#[derive(Debug, Clone)]
pub struct JointProblem {
    sigmas: Vec<BlockMatrix>,
}

impl JointProblem {
    /// Validates that all covariances share `p`, `M`, are symmetric up to
    /// 1e-8 and have strictly positive diagonals.
    pub fn new(sigmas: Vec<BlockMatrix>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Input("need at least one subpopulation".into()));
        }
        let (p, m) = (sigmas[0].p(), sigmas[0].m());
        for (k, s) in sigmas.iter().enumerate() {
            if s.p() != p || s.m() != m {
                return Err(Error::Input(format!(
                    "covariance {k} has blocks ({}, {}), expected ({p}, {m})",
                    s.p(),
                    s.m()
                )));
            }
            if s.asymmetry() > 1e-8 {
                return Err(Error::Input(format!("covariance {k} is not symmetric")));
            }
            if (0..s.size()).any(|i| !(s.data()[(i, i)] > 0.0)) {
                return Err(Error::Input(format!(
                    "covariance {k} must have a strictly positive diagonal"
                )));
            }
        }
        Ok(Self { sigmas })
    }

    pub fn k(&self) -> usize {
        self.sigmas.len()
    }

    pub fn p(&self) -> usize {
        self.sigmas[0].p()
    }

    pub fn m(&self) -> usize {
        self.sigmas[0].m()
    }

    pub fn sigmas(&self) -> &[BlockMatrix] {
        &self.sigmas
    }
}

/// Result of a joint fit.
#[derive(Debug, Clone)]
pub struct JointEstimate {
    /// Final per-group solver outputs, in group order.
    pub omegas: Vec<SolveResult>,
    /// Weights used in the last LLA step.
    pub weights: WeightMatrix,
    pub lambda: f64,
    /// Per-group edge sets read off the dual iterates.
    pub edge_sets: Vec<EdgeSet>,
    /// Intersection of all per-group edge sets.
    pub common_edges: EdgeSet,
}

fn solve_all(
    problem: &JointProblem,
    weights: &WeightMatrix,
    lambda: f64,
    settings: &AdmmSettings,
) -> Result<Vec<SolveResult>> {
    problem
        .sigmas
        .par_iter()
        .map(|s| admm_solve(s, weights, lambda, settings))
        .collect()
}

/// Separate unweighted (unit off-diagonal weight) fits per group — the
/// functional graphical lasso baseline and the LLA initializer.
pub fn initial_fit(
    problem: &JointProblem,
    lambda0: f64,
    settings: &AdmmSettings,
) -> Result<Vec<SolveResult>> {
    solve_all(problem, &WeightMatrix::unit(problem.p()), lambda0, settings)
}

/// LLA weights `τ_jl = ½ (Σ_k ‖Ω_jl^(k)‖_F)^{-1/2}` from the dual (`Z`)
/// blocks of the previous iterate.
///
/// The dual iterate carries the exact zeros, so "zero sum → infinite
/// weight" is well defined; finite weights are clipped at `cap`.
pub fn compute_weights(initial: &[SolveResult], cap: f64) -> Result<WeightMatrix> {
    if initial.is_empty() {
        return Err(Error::Input("need at least one initial estimate".into()));
    }
    if !(cap > 0.0) {
        return Err(Error::Input(format!("weight cap must be positive, got {cap}")));
    }
    let (p, m) = (initial[0].z.p(), initial[0].z.m());
    if initial.iter().any(|r| r.z.p() != p || r.z.m() != m) {
        return Err(Error::Input("initial estimates have mismatched shapes".into()));
    }
    let mut tau = DMatrix::zeros(p, p);
    for j in 1..=p {
        for l in (j + 1)..=p {
            let sum: f64 = initial.iter().map(|r| r.z.block_frobenius(j, l)).sum();
            let t = if sum == 0.0 {
                f64::INFINITY
            } else {
                f64::min(0.5 / sum.sqrt(), cap)
            };
            tau[(j - 1, l - 1)] = t;
            tau[(l - 1, j - 1)] = t;
        }
    }
    WeightMatrix::new(tau)
}

/// Joint fit: initializer at `lambda0`, then `steps` LLA iterations at
/// `lambda`, recomputing weights from the previous iterate each step.
///
/// `steps = 1` (one-step LLA) is the intended default; `lambda0 = lambda`
/// when no separate initializer level is wanted.
pub fn fit(
    problem: &JointProblem,
    lambda0: f64,
    lambda: f64,
    steps: usize,
    settings: &AdmmSettings,
) -> Result<JointEstimate> {
    if steps == 0 {
        return Err(Error::Config("LLA needs at least one step".into()));
    }
    if !(lambda >= 0.0) || !(lambda0 >= 0.0) {
        return Err(Error::Input("penalty levels must be nonnegative".into()));
    }
    let mut current = initial_fit(problem, lambda0, settings)?;
    let mut weights = WeightMatrix::unit(problem.p());
    for _ in 0..steps {
        weights = compute_weights(&current, DEFAULT_WEIGHT_CAP)?;
        current = solve_all(problem, &weights, lambda, settings)?;
    }
    let edge_sets: Vec<EdgeSet> = current.iter().map(extract_edges).collect();
    let common_edges = edge_sets
        .iter()
        .skip(1)
        .fold(edge_sets[0].clone(), |acc, e| &acc & e);
    Ok(JointEstimate {
        omegas: current,
        weights,
        lambda,
        edge_sets,
        common_edges,
    })
}

/// `tr(ΣΩ) − log det Ω` for a symmetric positive definite `Ω`.
fn gaussian_loss(sigma: &BlockMatrix, omega: &DMatrix<f64>) -> Result<f64> {
    // tr(ΣΩ) as an elementwise product sum; Σ is symmetric.
    let trace = sigma.data().dot(omega);
    let chol = nalgebra::Cholesky::new(omega.clone())
        .ok_or_else(|| Error::Numeric("objective needs a positive definite matrix".into()))?;
    let logdet: f64 = (0..omega.nrows())
        .map(|i| chol.l_dirty()[(i, i)].ln())
        .sum::<f64>()
        * 2.0;
    Ok(trace - logdet)
}

fn check_theta_gamma_shapes(
    sigmas: &[BlockMatrix],
    theta: &DMatrix<f64>,
    gammas: &[BlockMatrix],
) -> Result<(usize, usize)> {
    if sigmas.is_empty() || sigmas.len() != gammas.len() {
        return Err(Error::Input(
            "need matching, nonempty covariance and factor lists".into(),
        ));
    }
    let (p, m) = (sigmas[0].p(), sigmas[0].m());
    if theta.nrows() != p || theta.ncols() != p {
        return Err(Error::Input(format!(
            "theta must be {p}x{p}, got {}x{}",
            theta.nrows(),
            theta.ncols()
        )));
    }
    for x in sigmas.iter().chain(gammas.iter()) {
        if x.p() != p || x.m() != m {
            return Err(Error::Input("mismatched block structures".into()));
        }
    }
    Ok((p, m))
}

/// Reconstruction `Ω_jl^(k) = θ_jl Γ_jl^(k)` (all blocks, diagonal included).
fn reconstruct(theta: &DMatrix<f64>, gamma: &BlockMatrix) -> DMatrix<f64> {
    let (p, m) = (gamma.p(), gamma.m());
    let mut omega = DMatrix::zeros(p * m, p * m);
    for j in 1..=p {
        for l in 1..=p {
            let block = gamma.block_view(j, l).into_owned() * theta[(j - 1, l - 1)];
            omega
                .view_mut(((j - 1) * m, (l - 1) * m), (m, m))
                .copy_from(&block);
        }
    }
    omega
}

/// Hierarchical objective: loss of the reconstructed `Ω^(k) = θΓ^(k)` plus
/// `λ₁ Σ_{j≠l} θ_jl + λ₂ Σ_{j≠l} Σ_k ‖Γ_jl^(k)‖_F` (ordered pairs).
pub fn objective_q1(
    sigmas: &[BlockMatrix],
    theta: &DMatrix<f64>,
    gammas: &[BlockMatrix],
    lambda1: f64,
    lambda2: f64,
) -> Result<f64> {
    let (p, _) = check_theta_gamma_shapes(sigmas, theta, gammas)?;
    let mut total = 0.0;
    for (sigma, gamma) in sigmas.iter().zip(gammas) {
        total += gaussian_loss(sigma, &reconstruct(theta, gamma))?;
    }
    for j in 1..=p {
        for l in 1..=p {
            if j != l {
                total += lambda1 * theta[(j - 1, l - 1)];
                total += lambda2
                    * gammas
                        .iter()
                        .map(|g| g.block_frobenius(j, l))
                        .sum::<f64>();
            }
        }
    }
    Ok(total)
}

/// Rescaled hierarchical objective with unit weight on `Σ θ_jl` and
/// `lambda` (the product `λ₁λ₂`) on the individual term.
pub fn objective_q2(
    sigmas: &[BlockMatrix],
    theta: &DMatrix<f64>,
    gammas: &[BlockMatrix],
    lambda: f64,
) -> Result<f64> {
    let (p, _) = check_theta_gamma_shapes(sigmas, theta, gammas)?;
    let mut total = 0.0;
    for (sigma, gamma) in sigmas.iter().zip(gammas) {
        total += gaussian_loss(sigma, &reconstruct(theta, gamma))?;
    }
    for j in 1..=p {
        for l in 1..=p {
            if j != l {
                total += theta[(j - 1, l - 1)];
                total += lambda
                    * gammas
                        .iter()
                        .map(|g| g.block_frobenius(j, l))
                        .sum::<f64>();
            }
        }
    }
    Ok(total)
}

/// Collapsed square-root objective:
/// `Σ_k loss + λ Σ_{j≠l} (Σ_k ‖Ω_jl^(k)‖_F)^{1/2}` where `lambda` plays the
/// role of `2(λ₁λ₂)^{1/2}`.
pub fn objective_q3(sigmas: &[BlockMatrix], omegas: &[BlockMatrix], lambda: f64) -> Result<f64> {
    if sigmas.is_empty() || sigmas.len() != omegas.len() {
        return Err(Error::Input(
            "need matching, nonempty covariance and estimate lists".into(),
        ));
    }
    let (p, m) = (sigmas[0].p(), sigmas[0].m());
    if sigmas
        .iter()
        .chain(omegas.iter())
        .any(|x| x.p() != p || x.m() != m)
    {
        return Err(Error::Input("mismatched block structures".into()));
    }
    let mut total = 0.0;
    for (sigma, omega) in sigmas.iter().zip(omegas) {
        total += gaussian_loss(sigma, omega.data())?;
    }
    for j in 1..=p {
        for l in 1..=p {
            if j != l {
                let sum: f64 = omegas.iter().map(|o| o.block_frobenius(j, l)).sum();
                total += lambda * sum.sqrt();
            }
        }
    }
    Ok(total)
}

/// Factorizes estimates into the hierarchical parameterization:
/// `θ_jl = (λ_prod Σ_k ‖Ω_jl^(k)‖_F)^{1/2}` off the diagonal (`θ_jj = 1`),
/// `Γ_jl^(k) = Ω_jl^(k) / θ_jl` where `θ_jl > 0` and zero otherwise,
/// `Γ_jj^(k) = Ω_jj^(k)`. Under this map `Q2(λ_prod, Θ, Γ) =
/// Q3(2√λ_prod, Ω)`, and zero blocks of `Ω` correspond exactly to
/// `θ_jl = 0`.
pub fn theta_gamma_from_omegas(
    omegas: &[BlockMatrix],
    lambda_prod: f64,
) -> Result<(DMatrix<f64>, Vec<BlockMatrix>)> {
    if omegas.is_empty() {
        return Err(Error::Input("need at least one estimate".into()));
    }
    if !(lambda_prod > 0.0) {
        return Err(Error::Input(format!(
            "lambda product must be positive, got {lambda_prod}"
        )));
    }
    let (p, m) = (omegas[0].p(), omegas[0].m());
    if omegas.iter().any(|o| o.p() != p || o.m() != m) {
        return Err(Error::Input("mismatched block structures".into()));
    }
    let mut theta = DMatrix::identity(p, p);
    let mut gammas = vec![BlockMatrix::zeros(p, m); omegas.len()];
    for j in 1..=p {
        for l in 1..=p {
            if j == l {
                for (g, o) in gammas.iter_mut().zip(omegas) {
                    g.set_block(j, j, &o.block(j, j));
                }
                continue;
            }
            let sum: f64 = omegas.iter().map(|o| o.block_frobenius(j, l)).sum();
            let t = (lambda_prod * sum).sqrt();
            theta[(j - 1, l - 1)] = t;
            if t > 0.0 {
                for (g, o) in gammas.iter_mut().zip(omegas) {
                    g.set_block(j, l, &(o.block(j, l) / t));
                }
            }
        }
    }
    Ok((theta, gammas))
}

/// Smallest eigenvalue of the symmetric part; used by diagnostics and tests.
pub fn min_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()).scale(0.5);
    SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .fold(f64::INFINITY, |acc, &v| acc.min(v))
}
