//! Synthetic data with known graph structure.
//!
//! Edge sets are drawn in two stages: a common set `A` shared by all K
//! groups (a fraction `s` of all `C(p,2)` pairs) and per-group individual
//! sets `B^(k)` (a fraction `ρ` of `|A|` each) that avoid `A` and each
//! other, giving `E^(k) = A ∪ B^(k)`. Precision matrices place random
//! `a · I_M` blocks on the edges, symmetrize, and rescale off-diagonal
//! entries so strict diagonal dominance (hence positive definiteness)
//! holds. Curves are synthesized from scores `a_i ~ N(0, (Ω^(k))⁻¹)` on a
//! fixed basis plus white noise.
//!
//! All randomness flows from the single config seed through fixed
//! per-purpose substreams, so identical configs reproduce bit-identical
//! datasets and per-group generation can run in parallel.

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::blocknorm::BlockMatrix;
use crate::error::{Error, Result};
use crate::fpca::{CurvePanel, ScoreMatrix};
use crate::solver::EdgeSet;

/// Off-diagonal rescaling margin. The plain row normalization gives weak
/// diagonal dominance with ratio exactly 1, which admits singular matrices
/// (a single isolated edge already produces one); dividing by `(1 + δ)`
/// times the row sum makes dominance strict.
pub const GERSHGORIN_DELTA: f64 = 0.01;

/// Scenario description for the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of variables (graph nodes).
    pub p: usize,
    /// Subjects per group.
    pub n: usize,
    /// Number of subpopulations.
    pub k: usize,
    /// Principal components per variable.
    pub m: usize,
    /// Time points per curve.
    pub nu: usize,
    /// Common-edge density as a fraction of `C(p,2)`.
    pub s: f64,
    /// Individual edges per group as a fraction of the common count.
    pub rho: f64,
    /// Observation noise variance.
    pub sigma2: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            p: 20,
            n: 100,
            k: 3,
            m: 3,
            nu: 100,
            s: 0.05,
            rho: 0.0,
            sigma2: 0.05,
            t_start: 0.0,
            t_end: 1.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    /// Number of common edges `round(s · C(p,2))`.
    pub fn common_edge_count(&self) -> usize {
        (self.s * total_pairs(self.p) as f64).round() as usize
    }

    /// Individual edges per group `round(ρ · |A|)`.
    pub fn individual_edge_count(&self) -> usize {
        (self.rho * self.common_edge_count() as f64).round() as usize
    }

    pub fn gap(&self) -> f64 {
        (self.t_end - self.t_start) / (self.nu as f64 - 1.0)
    }

    pub fn grid(&self) -> Vec<f64> {
        let w = self.gap();
        (0..self.nu).map(|q| self.t_start + q as f64 * w).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 {
            return Err(Error::Config(format!("need p >= 2 variables, got {}", self.p)));
        }
        if self.n == 0 || self.k == 0 || self.m == 0 {
            return Err(Error::Config("n, K and M must be at least 1".into()));
        }
        if self.nu < 2 {
            return Err(Error::Config(format!("need nu >= 2 time points, got {}", self.nu)));
        }
        if self.m > self.nu {
            return Err(Error::Config(format!(
                "M = {} components cannot exceed nu = {} grid points",
                self.m, self.nu
            )));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Config(format!("s must lie in (0,1), got {}", self.s)));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::Config(format!("rho must lie in [0,1], got {}", self.rho)));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::Config(format!(
                "noise variance must be nonnegative, got {}",
                self.sigma2
            )));
        }
        if !(self.t_end > self.t_start) {
            return Err(Error::Config(format!(
                "grid endpoints must satisfy t_start < t_end, got [{}, {}]",
                self.t_start, self.t_end
            )));
        }
        let total = total_pairs(self.p);
        let common = self.common_edge_count();
        let individual = self.individual_edge_count();
        if common == 0 {
            return Err(Error::Config(format!(
                "s = {} rounds to zero common edges for p = {}",
                self.s, self.p
            )));
        }
        if common + self.k * individual > total {
            return Err(Error::Config(format!(
                "infeasible edge budget: |A| + K·|B| = {} + {}·{} exceeds C(p,2) = {total}",
                common, self.k, individual
            )));
        }
        Ok(())
    }
}

fn total_pairs(p: usize) -> usize {
    p * (p - 1) / 2
}

/// True structure underlying a simulated dataset.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// Common edges `A`.
    pub common: EdgeSet,
    /// Per-group individual edges `B^(k)`.
    pub individual: Vec<EdgeSet>,
    /// Per-group full edge sets `E^(k) = A ∪ B^(k)`.
    pub full: Vec<EdgeSet>,
    /// Per-group precision matrices with support exactly `E^(k)`.
    pub omegas: Vec<BlockMatrix>,
}

impl GroundTruth {
    pub fn p(&self) -> usize {
        self.omegas[0].p()
    }

    pub fn m(&self) -> usize {
        self.omegas[0].m()
    }

    pub fn k(&self) -> usize {
        self.omegas.len()
    }
}

/// One simulated subpopulation: observed curves plus the generating scores.
#[derive(Debug, Clone)]
pub struct GroupSample {
    pub panel: CurvePanel,
    pub scores: ScoreMatrix,
}

/// Complete simulated dataset.
#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub config: SimConfig,
    pub truth: GroundTruth,
    pub groups: Vec<GroupSample>,
}

// Substream tags; group k (0-based) owns tag BASE + k.
const STREAM_EDGES: u64 = 0x01;
const STREAM_PRECISION_BASE: u64 = 0x100;
const STREAM_SCORES_BASE: u64 = 0x200;
const STREAM_NOISE_BASE: u64 = 0x300;

/// RNG substream `purpose` of the dataset seed.
pub fn substream(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose);
    rng
}

/// Draws the common set `A` and the individual sets `B^(k)` uniformly
/// without replacement, with `(∪_k B^(k)) ∩ A = ∅` and the `B^(k)` pairwise
/// disjoint (which implies `∩_k B^(k) = ∅`).
pub fn generate_edge_sets(
    config: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(EdgeSet, Vec<EdgeSet>)> {
    config.validate()?;
    let mut pool: Vec<(usize, usize)> = (1..=config.p)
        .flat_map(|j| ((j + 1)..=config.p).map(move |l| (j, l)))
        .collect();

    let draw = |pool: &mut Vec<(usize, usize)>, count: usize, rng: &mut ChaCha8Rng| {
        let idx = rand::seq::index::sample(rng, pool.len(), count);
        let mut chosen: Vec<usize> = idx.into_vec();
        chosen.sort_unstable();
        let set: EdgeSet = chosen.iter().map(|&i| pool[i]).collect();
        for &i in chosen.iter().rev() {
            pool.swap_remove(i);
        }
        pool.sort_unstable();
        set
    };

    let common = draw(&mut pool, config.common_edge_count(), rng);
    let individual: Vec<EdgeSet> = (0..config.k)
        .map(|_| draw(&mut pool, config.individual_edge_count(), rng))
        .collect();
    Ok((common, individual))
}

/// Builds one precision matrix per edge set.
///
/// Per group: blocks `a_jl · I_M` with `a_jl ~ U(0,1)` on the edges and
/// `I_M` on the diagonal, symmetrized (halving the off-diagonal draws), then
/// off-diagonal entries are divided by `(1 + δ)` times the larger of the two
/// incident row sums. Using the larger row sum keeps the matrix symmetric —
/// rows normalized independently are not — while strict diagonal dominance,
/// unit diagonal, and the block support are all preserved.
pub fn build_precision_matrices(
    edge_sets: &[EdgeSet],
    p: usize,
    m: usize,
    rng: &mut impl Rng,
) -> Result<Vec<BlockMatrix>> {
    if p < 2 || m == 0 {
        return Err(Error::Input(format!("need p >= 2 and m >= 1, got p={p}, m={m}")));
    }
    edge_sets
        .iter()
        .map(|edges| {
            for &(j, l) in edges {
                if !(1 <= j && j < l && l <= p) {
                    return Err(Error::Input(format!(
                        "edge ({j},{l}) out of range for p={p}"
                    )));
                }
            }
            // Symmetrized block coefficients c_jl = a_jl / 2.
            let mut coeff = std::collections::BTreeMap::new();
            for &(j, l) in edges {
                let mut a: f64 = rng.random();
                while a == 0.0 {
                    a = rng.random();
                }
                coeff.insert((j, l), a / 2.0);
            }
            let mut row_sums = vec![0.0_f64; p + 1];
            for (&(j, l), &c) in &coeff {
                row_sums[j] += c;
                row_sums[l] += c;
            }
            let mut omega = DMatrix::identity(p * m, p * m);
            for (&(j, l), &c) in &coeff {
                let scale = (1.0 + GERSHGORIN_DELTA) * f64::max(row_sums[j], row_sums[l]);
                let value = c / scale;
                for i in 0..m {
                    omega[((j - 1) * m + i, (l - 1) * m + i)] = value;
                    omega[((l - 1) * m + i, (j - 1) * m + i)] = value;
                }
            }
            BlockMatrix::new(omega, p, m)
        })
        .collect()
}

/// Basis used in the simulations: `{1, sin t, cos t, sin 2t, cos 2t, …}`
/// truncated to `m` functions, evaluated on the grid as an `m × ν` matrix.
pub fn default_basis(m: usize, grid: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(m, grid.len(), |r, q| {
        let t = grid[q];
        if r == 0 {
            1.0
        } else {
            let freq = r.div_ceil(2) as f64;
            if r % 2 == 1 {
                (freq * t).sin()
            } else {
                (freq * t).cos()
            }
        }
    })
}

/// Synthesizes observed curves `h_ij(t_q) = a_ijᵀ φ_j(t_q) + ε_ijq` for all
/// groups, with `a_i ~ N(0, (Ω^(k))⁻¹)` and `ε ~ N(0, σ²)` i.i.d.
///
/// The same `m × ν` basis is used for every variable. Score and noise
/// substreams are derived from `config.seed` per group.
pub fn generate_curves(
    omegas: &[BlockMatrix],
    basis: &DMatrix<f64>,
    config: &SimConfig,
) -> Result<Vec<GroupSample>> {
    config.validate()?;
    if omegas.len() != config.k {
        return Err(Error::Input(format!(
            "got {} precision matrices for K = {}",
            omegas.len(),
            config.k
        )));
    }
    if basis.nrows() != config.m || basis.ncols() != config.nu {
        return Err(Error::Input(format!(
            "basis must be {}x{}, got {}x{}",
            config.m,
            config.nu,
            basis.nrows(),
            basis.ncols()
        )));
    }
    (0..config.k)
        .map(|k| {
            let scores = sample_scores(&omegas[k], config.n, config.seed, k)?;
            let panel = synthesize_panel(&scores, basis, config, k)?;
            Ok(GroupSample { panel, scores })
        })
        .collect()
}

fn sample_scores(omega: &BlockMatrix, n: usize, seed: u64, group: usize) -> Result<ScoreMatrix> {
    let chol = Cholesky::new(omega.data().clone()).ok_or_else(|| {
        Error::Input("precision matrix must be positive definite".into())
    })?;
    let dim = omega.size();
    let mut rng = substream(seed, STREAM_SCORES_BASE + group as u64);
    let mut scores = DMatrix::zeros(n, dim);
    let l_t = chol.l().transpose();
    for i in 0..n {
        let z = DMatrix::from_fn(dim, 1, |_, _| StandardNormal.sample(&mut rng));
        // a = L⁻ᵀ z has covariance (L Lᵀ)⁻¹ = Ω⁻¹; solve instead of inverting.
        let a = l_t
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
        scores.row_mut(i).copy_from(&a.transpose());
    }
    ScoreMatrix::new(scores, omega.p(), omega.m())
}

fn synthesize_panel(
    scores: &ScoreMatrix,
    basis: &DMatrix<f64>,
    config: &SimConfig,
    group: usize,
) -> Result<CurvePanel> {
    let (n, p, m, nu) = (scores.n(), scores.p(), scores.m(), config.nu);
    let mut noise_rng = substream(config.seed, STREAM_NOISE_BASE + group as u64);
    let sd = config.sigma2.sqrt();
    let mut curves = Vec::with_capacity(p);
    for j in 0..p {
        let block = scores.matrix().view((0, j * m), (n, m));
        let mut g = block * basis;
        if sd > 0.0 {
            for i in 0..n {
                for q in 0..nu {
                    let e: f64 = StandardNormal.sample(&mut noise_rng);
                    g[(i, q)] += sd * e;
                }
            }
        }
        curves.push(g);
    }
    CurvePanel::new(
        curves,
        config.t_start,
        config.t_end,
        group_label(group, config.k),
    )
}

/// Group labels `g1, g2, …` zero-padded to a fixed width so lexicographic
/// and numeric order agree.
pub fn group_label(group: usize, k: usize) -> String {
    let width = k.to_string().len();
    format!("g{:0width$}", group + 1)
}

/// Runs the full generator: edge sets, precision matrices, curves.
pub fn generate_dataset(config: &SimConfig) -> Result<SimulatedData> {
    config.validate()?;
    let mut edge_rng = substream(config.seed, STREAM_EDGES);
    let (common, individual) = generate_edge_sets(config, &mut edge_rng)?;
    let full: Vec<EdgeSet> = individual.iter().map(|b| &common | b).collect();

    let mut omegas = Vec::with_capacity(config.k);
    for (k, edges) in full.iter().enumerate() {
        let mut rng = substream(config.seed, STREAM_PRECISION_BASE + k as u64);
        omegas.extend(build_precision_matrices(
            std::slice::from_ref(edges),
            config.p,
            config.m,
            &mut rng,
        )?);
    }

    let basis = default_basis(config.m, &config.grid());
    let groups = generate_curves(&omegas, &basis, config)?;
    Ok(SimulatedData {
        config: config.clone(),
        truth: GroundTruth {
            common,
            individual,
            full,
            omegas,
        },
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jfggm::min_eigenvalue;

    fn config(p: usize, s: f64, rho: f64, k: usize, seed: u64) -> SimConfig {
        SimConfig {
            p,
            n: 5,
            k,
            m: 2,
            nu: 10,
            s,
            rho,
            sigma2: 0.05,
            t_start: 0.0,
            t_end: 1.0,
            seed,
        }
    }

    #[test]
    fn validation_rejects_infeasible_configs() {
        assert!(config(1, 0.5, 0.0, 1, 0).validate().is_err());
        assert!(config(10, 0.001, 0.0, 1, 0).validate().is_err()); // rounds to 0 edges
        assert!(config(4, 0.9, 1.0, 5, 0).validate().is_err()); // budget overflow
        let mut c = config(10, 0.2, 0.5, 2, 0);
        c.rho = 1.5;
        assert!(c.validate().is_err());
        c = config(10, 0.2, 0.5, 2, 0);
        c.sigma2 = -1.0;
        assert!(c.validate().is_err());
        assert!(config(10, 0.2, 0.5, 2, 0).validate().is_ok());
    }

    #[test]
    fn paper_scale_common_edge_count() {
        let c = SimConfig {
            p: 80,
            s: 0.05,
            ..SimConfig::default()
        };
        assert_eq!(c.common_edge_count(), 158);
    }

    #[test]
    fn rho_zero_gives_identical_edge_sets() {
        let c = config(10, 0.2, 0.0, 3, 42);
        let (common, individual) = generate_edge_sets(&c, &mut substream(42, 1)).unwrap();
        assert_eq!(common.len(), 9); // round(0.2 * 45)
        for b in &individual {
            assert!(b.is_empty());
        }
    }

    #[test]
    fn edge_set_constraints_hold_across_seeds() {
        for seed in 0..200 {
            let c = config(10, 0.2, 0.5, 3, seed);
            let (common, individual) =
                generate_edge_sets(&c, &mut substream(seed, 1)).unwrap();
            assert_eq!(common.len(), c.common_edge_count());
            let mut seen = EdgeSet::new();
            for b in &individual {
                assert_eq!(b.len(), c.individual_edge_count());
                assert!(b.is_disjoint(&common), "seed {seed}: B intersects A");
                assert!(seen.is_disjoint(b), "seed {seed}: B sets overlap");
                seen.extend(b.iter().copied());
            }
            for &(j, l) in common.iter().chain(seen.iter()) {
                assert!(1 <= j && j < l && l <= 10);
            }
        }
    }

    #[test]
    fn empty_edge_set_gives_identity() {
        let mut rng = substream(0, 2);
        let out = build_precision_matrices(&[EdgeSet::new()], 4, 2, &mut rng).unwrap();
        assert_eq!(out[0].data(), &DMatrix::identity(8, 8));
    }

    #[test]
    fn single_edge_normalizes_to_strict_dominance() {
        // One edge (1,2) with draw a: both row sums are a/2, so the entry is
        // 1/(1+δ) regardless of a — the boundary case the δ margin fixes.
        let mut rng = substream(7, 2);
        let edges: EdgeSet = [(1, 2)].into_iter().collect();
        let out = build_precision_matrices(&[edges], 2, 1, &mut rng).unwrap();
        let expect = 1.0 / (1.0 + GERSHGORIN_DELTA);
        assert!((out[0].data()[(0, 1)] - expect).abs() < 1e-15);
        assert!((out[0].data()[(1, 0)] - expect).abs() < 1e-15);
        assert!(min_eigenvalue(out[0].data()) > 0.0);
    }

    #[test]
    fn precision_matrices_are_spd_with_exact_support() {
        for seed in 0..100 {
            let c = config(10, 0.1, 0.5, 2, seed);
            let mut rng = substream(seed, 1);
            let (common, individual) = generate_edge_sets(&c, &mut rng).unwrap();
            let full: Vec<EdgeSet> = individual.iter().map(|b| &common | b).collect();
            let mut prng = substream(seed, 2);
            let omegas = build_precision_matrices(&full, c.p, c.m, &mut prng).unwrap();
            for (k, om) in omegas.iter().enumerate() {
                assert!(om.asymmetry() == 0.0);
                assert!(
                    min_eigenvalue(om.data()) > 0.0,
                    "seed {seed} group {k}: not PD"
                );
                for j in 1..=c.p {
                    assert!((om.block(j, j) - DMatrix::identity(c.m, c.m)).amax() == 0.0);
                    for l in (j + 1)..=c.p {
                        assert_eq!(
                            om.block_is_nonzero(j, l),
                            full[k].contains(&(j, l)),
                            "seed {seed} group {k} block ({j},{l})"
                        );
                        // Blocks are scalar multiples of the identity.
                        let b = om.block(j, l);
                        let scalar = b[(0, 0)];
                        assert!((b - DMatrix::identity(c.m, c.m) * scalar).amax() == 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn default_basis_matches_trig_family() {
        let grid = vec![0.0, 0.5, 1.0];
        let b = default_basis(3, &grid);
        for (q, &t) in grid.iter().enumerate() {
            assert_eq!(b[(0, q)], 1.0);
            assert!((b[(1, q)] - t.sin()).abs() < 1e-15);
            assert!((b[(2, q)] - t.cos()).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_basis_gives_constant_curves() {
        // σ² = 0, M = 1, basis {1}: curves are constant in t, equal to a_ij.
        let c = SimConfig {
            p: 3,
            n: 4,
            k: 1,
            m: 1,
            nu: 5,
            s: 0.4,
            rho: 0.0,
            sigma2: 0.0,
            t_start: 0.0,
            t_end: 1.0,
            seed: 3,
        };
        let data = generate_dataset(&c).unwrap();
        let g = &data.groups[0];
        for j in 1..=c.p {
            let mat = g.panel.variable(j);
            for i in 0..c.n {
                let a = g.scores.matrix()[(i, j - 1)];
                for q in 0..c.nu {
                    assert!((mat[(i, q)] - a).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn identity_precision_scores_have_identity_covariance() {
        let c = SimConfig {
            p: 4,
            n: 10_000,
            k: 1,
            m: 1,
            nu: 3,
            s: 0.2,
            rho: 0.0,
            sigma2: 0.0,
            t_start: 0.0,
            t_end: 1.0,
            seed: 11,
        };
        let omegas = vec![BlockMatrix::identity(c.p, c.m)];
        let basis = default_basis(c.m, &c.grid());
        let groups = generate_curves(&omegas, &basis, &c).unwrap();
        let s = groups[0].scores.matrix();
        let cov = s.transpose() * s / c.n as f64;
        let bound = 3.0 / (c.n as f64).sqrt();
        for r in 0..c.p {
            for q in 0..c.p {
                let want = if r == q { 1.0 } else { 0.0 };
                assert!(
                    (cov[(r, q)] - want).abs() < bound,
                    "cov[{r},{q}] = {}",
                    cov[(r, q)]
                );
            }
        }
    }

    #[test]
    fn same_seed_reproduces_bitwise() {
        let c = config(8, 0.2, 0.5, 2, 99);
        let a = generate_dataset(&c).unwrap();
        let b = generate_dataset(&c).unwrap();
        assert_eq!(a.truth.common, b.truth.common);
        assert_eq!(a.truth.individual, b.truth.individual);
        for (x, y) in a.truth.omegas.iter().zip(&b.truth.omegas) {
            assert_eq!(x.data(), y.data());
        }
        for (x, y) in a.groups.iter().zip(&b.groups) {
            assert_eq!(x.scores.matrix(), y.scores.matrix());
            for j in 1..=c.p {
                assert_eq!(x.panel.variable(j), y.panel.variable(j));
            }
        }
        // A different seed changes the draw.
        let other = generate_dataset(&SimConfig { seed: 100, ..c }).unwrap();
        assert_ne!(a.truth.common, other.truth.common);
    }

    #[test]
    fn group_labels_are_lexicographically_ordered() {
        assert_eq!(group_label(0, 3), "g1");
        assert_eq!(group_label(2, 3), "g3");
        assert_eq!(group_label(0, 12), "g01");
        assert_eq!(group_label(11, 12), "g12");
    }
}
