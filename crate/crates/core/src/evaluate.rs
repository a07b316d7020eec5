//! Support-recovery evaluation: AFPR/ATPR, ROC curves, trapezoidal AUC.
//!
//! For each penalty level, the average true/false positive rates over the K
//! groups compare the estimated block supports with the ground truth on
//! upper-triangle pairs. Curves from several simulation replicates are
//! averaged pointwise in λ, and the AUC is the trapezoid area of the
//! averaged curve anchored at (0,0) and (1,1).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::jfggm::JointProblem;
use crate::simulate::GroundTruth;
use crate::solver::EdgeSet;

/// One evaluated penalty level. `afpr`/`atpr` are averages over the groups
/// for which the rate is defined; `None` means no group defined it.
#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub lambda: f64,
    pub afpr: f64,
    pub atpr: f64,
}

/// Replicate-averaged ROC curve.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// Averaged points, sorted by λ.
    pub points: Vec<RocPoint>,
    /// Trapezoid AUC of the averaged curve, anchored at (0,0) and (1,1).
    pub auc: f64,
    /// Number of replicates that contributed.
    pub replicates: usize,
    /// AUC of each contributing replicate's own curve.
    pub per_replicate_auc: Vec<f64>,
    /// Replicates dropped because the fitter failed, with the error text.
    pub failures: Vec<(usize, String)>,
}

/// Average false/true positive rates of per-group edge estimates against
/// the truth, over upper-triangle pairs `j < l`.
///
/// A group with no true edges has an undefined TPR (and one with no true
/// non-edges an undefined FPR); such groups are excluded from the average
/// and `None` is returned when every group is excluded.
pub fn afpr_atpr(
    truth: &GroundTruth,
    estimates: &[EdgeSet],
) -> Result<(Option<f64>, Option<f64>)> {
    if estimates.len() != truth.k() {
        return Err(Error::Input(format!(
            "got {} estimated edge sets for K = {}",
            estimates.len(),
            truth.k()
        )));
    }
    let p = truth.p();
    for edges in estimates {
        for &(j, l) in edges {
            if !(1 <= j && j < l && l <= p) {
                return Err(Error::Input(format!(
                    "estimated edge ({j},{l}) out of range for p={p}"
                )));
            }
        }
    }
    let total = p * (p - 1) / 2;
    let mut fpr_parts = Vec::new();
    let mut tpr_parts = Vec::new();
    for (true_edges, est) in truth.full.iter().zip(estimates) {
        let positives = true_edges.len();
        let negatives = total - positives;
        let tp = est.intersection(true_edges).count();
        let fp = est.len() - tp;
        if positives > 0 {
            tpr_parts.push(tp as f64 / positives as f64);
        }
        if negatives > 0 {
            fpr_parts.push(fp as f64 / negatives as f64);
        }
    }
    let avg = |parts: Vec<f64>| {
        if parts.is_empty() {
            None
        } else {
            Some(parts.iter().sum::<f64>() / parts.len() as f64)
        }
    };
    Ok((avg(fpr_parts), avg(tpr_parts)))
}

/// The 100-value penalty grid used in the simulations: 90 equally spaced
/// values on [0, 0.67] followed by 10 on [0.6784, 1.5], all endpoints
/// included.
pub fn lambda_grid() -> Vec<f64> {
    let mut grid = Vec::with_capacity(100);
    grid.extend((0..90).map(|i| 0.67 * i as f64 / 89.0));
    grid.extend((0..10).map(|i| 0.6784 + (1.5 - 0.6784) * i as f64 / 9.0));
    grid
}

/// Trapezoid area under `(afpr, atpr)` points augmented with (0,0) and
/// (1,1) anchors, clamped to [0, 1]. Points are sorted internally, so input
/// order and duplicates do not matter.
pub fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len() + 2);
    pts.push((0.0, 0.0));
    pts.extend_from_slice(points);
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.partial_cmp(b).expect("rates are finite"));
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    area.clamp(0.0, 1.0)
}

/// Sweeps the fitter over the grid for every replicate and averages.
///
/// Each replicate pairs a ground truth with the joint problem built from its
/// data; the fitter maps `(problem, λ)` to per-group edge sets. A fitter
/// error drops the whole replicate (recorded in `failures`); at least one
/// replicate must survive.
pub fn roc<F>(
    replicates: &[(GroundTruth, JointProblem)],
    fitter: F,
    grid: &[f64],
) -> Result<RocCurve>
where
    F: Fn(&JointProblem, f64) -> Result<Vec<EdgeSet>> + Sync + Send,
{
    if replicates.is_empty() {
        return Err(Error::Input("need at least one replicate".into()));
    }
    if grid.is_empty() {
        return Err(Error::Input("need at least one penalty level".into()));
    }

    // (replicate, lambda) work items in one parallel sweep.
    type PointOutcome = std::result::Result<(Option<f64>, Option<f64>), String>;
    let fitter = &fitter;
    let outcomes: Vec<PointOutcome> = replicates
        .par_iter()
        .flat_map(|(truth, problem)| {
            grid.par_iter().map(move |&lambda| {
                fitter(problem, lambda)
                    .and_then(|edges| afpr_atpr(truth, &edges))
                    .map_err(|e| e.to_string())
            })
        })
        .collect();

    let mut per_replicate: Vec<Vec<(Option<f64>, Option<f64>)>> = Vec::new();
    let mut failures = Vec::new();
    for (r, chunk) in outcomes.chunks(grid.len()).enumerate() {
        match chunk.iter().cloned().collect::<std::result::Result<Vec<_>, _>>() {
            Ok(points) => per_replicate.push(points),
            Err(msg) => {
                per_replicate.push(Vec::new());
                failures.push((r, msg));
            }
        }
    }

    let survivors: Vec<usize> = (0..replicates.len())
        .filter(|&r| !per_replicate[r].is_empty())
        .collect();
    if survivors.is_empty() {
        return Err(Error::Numeric(format!(
            "all {} replicates failed; first error: {}",
            replicates.len(),
            failures[0].1
        )));
    }

    let mut points = Vec::with_capacity(grid.len());
    for (g, &lambda) in grid.iter().enumerate() {
        let mut fprs = Vec::new();
        let mut tprs = Vec::new();
        for &r in &survivors {
            let (fpr, tpr) = per_replicate[r][g];
            if let Some(v) = fpr {
                fprs.push(v);
            }
            if let Some(v) = tpr {
                tprs.push(v);
            }
        }
        if fprs.is_empty() || tprs.is_empty() {
            continue;
        }
        points.push(RocPoint {
            lambda,
            afpr: fprs.iter().sum::<f64>() / fprs.len() as f64,
            atpr: tprs.iter().sum::<f64>() / tprs.len() as f64,
        });
    }
    points.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("grid is finite"));

    let auc = trapezoid_auc(&points.iter().map(|p| (p.afpr, p.atpr)).collect::<Vec<_>>());
    let per_replicate_auc = survivors
        .iter()
        .map(|&r| {
            let pts: Vec<(f64, f64)> = per_replicate[r]
                .iter()
                .filter_map(|&(f, t)| Some((f?, t?)))
                .collect();
            trapezoid_auc(&pts)
        })
        .collect();

    Ok(RocCurve {
        points,
        auc,
        replicates: survivors.len(),
        per_replicate_auc,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocknorm::BlockMatrix;

    fn truth(p: usize, full: Vec<EdgeSet>) -> GroundTruth {
        let k = full.len();
        let common = full
            .iter()
            .skip(1)
            .fold(full[0].clone(), |acc, e| &acc & e);
        GroundTruth {
            common: common.clone(),
            individual: full.iter().map(|e| e - &common).collect(),
            full,
            omegas: vec![BlockMatrix::identity(p, 1); k],
        }
    }

    fn edges(list: &[(usize, usize)]) -> EdgeSet {
        list.iter().copied().collect()
    }

    #[test]
    fn perfect_and_empty_estimates() {
        let t = truth(4, vec![edges(&[(1, 2), (2, 3)])]);
        let (afpr, atpr) = afpr_atpr(&t, &[t.full[0].clone()]).unwrap();
        assert_eq!((afpr, atpr), (Some(0.0), Some(1.0)));
        let (afpr, atpr) = afpr_atpr(&t, &[EdgeSet::new()]).unwrap();
        assert_eq!((afpr, atpr), (Some(0.0), Some(0.0)));
    }

    #[test]
    fn single_false_positive_rates() {
        // p=4: C(4,2)=6 pairs, truth {(1,2)}: 5 true non-edges.
        let t = truth(4, vec![edges(&[(1, 2)])]);
        let (afpr, atpr) = afpr_atpr(&t, &[edges(&[(1, 2), (3, 4)])]).unwrap();
        assert!((afpr.unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(atpr, Some(1.0));
    }

    #[test]
    fn group_without_true_edges_is_excluded() {
        let t = truth(3, vec![edges(&[]), edges(&[(1, 2)])]);
        let (afpr, atpr) = afpr_atpr(&t, &[edges(&[]), edges(&[(1, 2)])]).unwrap();
        // TPR averages only over the second group.
        assert_eq!(atpr, Some(1.0));
        assert_eq!(afpr, Some(0.0));
        // A single group with no true edges: ATPR is missing, not zero.
        let t2 = truth(3, vec![edges(&[])]);
        let (afpr2, atpr2) = afpr_atpr(&t2, &[edges(&[])]).unwrap();
        assert_eq!(atpr2, None);
        assert_eq!(afpr2, Some(0.0));
    }

    #[test]
    fn wrong_group_count_is_an_error() {
        let t = truth(3, vec![edges(&[(1, 2)])]);
        assert!(afpr_atpr(&t, &[]).is_err());
        assert!(afpr_atpr(&t, &[edges(&[(1, 5)])]).is_err());
    }

    #[test]
    fn grid_matches_published_layout() {
        let g = lambda_grid();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 0.0);
        assert!((g[89] - 0.67).abs() < 1e-15);
        assert!((g[90] - 0.6784).abs() < 1e-15);
        assert!((g[99] - 1.5).abs() < 1e-15);
        let step = 0.67 / 89.0;
        assert!((g[1] - step).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn auc_anchoring_and_invariances() {
        // Single point at the origin: area of the anchored triangle.
        assert!((trapezoid_auc(&[(0.0, 0.0)]) - 0.5).abs() < 1e-15);
        // Oracle point (0,1) gives full area.
        assert!((trapezoid_auc(&[(0.0, 1.0)]) - 1.0).abs() < 1e-15);
        // Duplicates and ordering do not matter.
        let a = trapezoid_auc(&[(0.2, 0.6), (0.8, 0.9)]);
        let b = trapezoid_auc(&[(0.8, 0.9), (0.2, 0.6), (0.2, 0.6)]);
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn roc_with_oracle_and_empty_fitters() {
        let t = truth(4, vec![edges(&[(1, 2), (2, 4)])]);
        let problem = JointProblem::new(vec![BlockMatrix::identity(4, 1)]).unwrap();
        let grid = [0.1, 0.5, 1.0];
        let full = t.full.clone();
        let curve = roc(
            std::slice::from_ref(&(t, problem)),
            |_, _| Ok(full.clone()),
            &grid,
        )
        .unwrap();
        assert!((curve.auc - 1.0).abs() < 1e-15);
        assert_eq!(curve.replicates, 1);
        assert!(curve.failures.is_empty());

        let t2 = truth(4, vec![edges(&[(1, 2)])]);
        let problem2 = JointProblem::new(vec![BlockMatrix::identity(4, 1)]).unwrap();
        let curve2 = roc(
            std::slice::from_ref(&(t2, problem2)),
            |_, _| Ok(vec![EdgeSet::new()]),
            &grid,
        )
        .unwrap();
        assert!((curve2.auc - 0.5).abs() < 1e-15);
    }

    #[test]
    fn failing_replicate_is_dropped_and_reported() {
        // Replicates are told apart by their problem size; the p = 5 one
        // always fails and must be dropped without poisoning the average.
        let reps = vec![
            (
                truth(4, vec![edges(&[(1, 2)])]),
                JointProblem::new(vec![BlockMatrix::identity(4, 1)]).unwrap(),
            ),
            (
                truth(5, vec![edges(&[(1, 2)])]),
                JointProblem::new(vec![BlockMatrix::identity(5, 1)]).unwrap(),
            ),
        ];
        let fitter = |p: &JointProblem, _: f64| {
            if p.p() == 5 {
                Err(Error::Numeric("boom".into()))
            } else {
                Ok(vec![edges(&[(1, 2)])])
            }
        };
        let curve = roc(&reps, fitter, &[0.1, 1.0]).unwrap();
        assert_eq!(curve.replicates, 1);
        assert_eq!(curve.failures.len(), 1);
        assert_eq!(curve.failures[0].0, 1);
        assert!(curve.failures[0].1.contains("boom"));
        assert!((curve.auc - 1.0).abs() < 1e-15);

        // When every replicate fails, the sweep itself is an error.
        let all_fail = roc(&reps, |_, _| Err::<Vec<EdgeSet>, _>(Error::Numeric("x".into())), &[0.1]);
        assert!(all_fail.is_err());
    }
}
