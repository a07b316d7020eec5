//! On-disk formats.
//!
//! - Curves: long-format CSV with header `group,subject,variable,time_index,value`
//!   (subject, variable and time index all 1-based), plus a JSON grid sidecar
//!   `{t_start, t_end, nu}`.
//! - Matrices: row-major flattened JSON with `p`/`m` block metadata.
//! - Ground truth and estimates: JSON documents built from those pieces.
//!
//! Floating-point values in CSV are written with 17 significant digits so a
//! read-back is bit-exact; JSON numbers use serde_json's shortest
//! round-trip encoding. All writes go through a write-temp-then-rename so
//! partial files never appear under the final name.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::blocknorm::BlockMatrix;
use crate::error::{Error, Result};
use crate::evaluate::RocCurve;
use crate::fpca::CurvePanel;
use crate::simulate::GroundTruth;
use crate::solver::{EdgeSet, SolveResult};

/// Grid metadata sidecar for a curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub t_start: f64,
    pub t_end: f64,
    pub nu: usize,
}

/// `f64` with 17 significant digits: enough to round-trip exactly.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes bytes to `path` atomically (temp file in the same directory, then
/// rename).
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `value` as pretty JSON (trailing newline) and writes it
/// atomically.
pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes panels to one long-format CSV, groups in the given order.
pub fn write_curves_csv(path: &Path, panels: &[CurvePanel]) -> Result<()> {
    let mut out = String::from("group,subject,variable,time_index,value\n");
    for panel in panels {
        for j in 1..=panel.p() {
            let values = panel.variable(j);
            for i in 0..panel.n() {
                for q in 0..panel.nu() {
                    out.push_str(panel.group_id());
                    out.push(',');
                    out.push_str(&(i + 1).to_string());
                    out.push(',');
                    out.push_str(&j.to_string());
                    out.push(',');
                    out.push_str(&(q + 1).to_string());
                    out.push(',');
                    out.push_str(&fmt_f64(values[(i, q)]));
                    out.push('\n');
                }
            }
        }
    }
    write_atomic(path, out.as_bytes())
}

/// Reads a long-format curve CSV back into panels, one per group in order
/// of first appearance. Every `(subject, variable, time)` cell must be
/// present exactly once and indices must be contiguous from 1.
pub fn read_curves_csv(path: &Path, grid: &GridMeta) -> Result<Vec<CurvePanel>> {
    if grid.nu < 2 {
        return Err(Error::Format(format!("grid sidecar needs nu >= 2, got {}", grid.nu)));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let expect = ["group", "subject", "variable", "time_index", "value"];
    if headers.iter().collect::<Vec<_>>() != expect {
        return Err(Error::Format(format!(
            "unexpected CSV header {:?}, expected {:?}",
            headers, expect
        )));
    }

    struct GroupAccum {
        rows: Vec<(usize, usize, usize, f64)>,
        n_max: usize,
        p_max: usize,
    }
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, GroupAccum> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let group = record.get(0).unwrap_or_default().to_string();
        let parse_idx = |field: usize, name: &str| -> Result<usize> {
            record
                .get(field)
                .unwrap_or_default()
                .parse::<usize>()
                .map_err(|_| Error::Format(format!("bad {name} in row {record:?}")))
        };
        let i = parse_idx(1, "subject")?;
        let j = parse_idx(2, "variable")?;
        let q = parse_idx(3, "time_index")?;
        let v: f64 = record
            .get(4)
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::Format(format!("bad value in row {record:?}")))?;
        if i == 0 || j == 0 || q == 0 || q > grid.nu {
            return Err(Error::Format(format!(
                "indices must be 1-based and time_index <= nu={}, got row {record:?}",
                grid.nu
            )));
        }
        if !v.is_finite() {
            return Err(Error::Format(format!("non-finite value in row {record:?}")));
        }
        let entry = groups.entry(group.clone()).or_insert_with(|| {
            order.push(group.clone());
            GroupAccum {
                rows: Vec::new(),
                n_max: 0,
                p_max: 0,
            }
        });
        entry.n_max = entry.n_max.max(i);
        entry.p_max = entry.p_max.max(j);
        entry.rows.push((i, j, q, v));
    }
    if order.is_empty() {
        return Err(Error::Format("curve CSV contains no data rows".into()));
    }

    let p_all = groups[&order[0]].p_max;
    let mut panels = Vec::with_capacity(order.len());
    for id in &order {
        let acc = &groups[id];
        if acc.p_max != p_all {
            return Err(Error::Format(format!(
                "group {id} has {} variables, expected {p_all}",
                acc.p_max
            )));
        }
        let (n, p) = (acc.n_max, acc.p_max);
        let mut curves = vec![DMatrix::from_element(n, grid.nu, f64::NAN); p];
        for &(i, j, q, v) in &acc.rows {
            let cell = &mut curves[j - 1][(i - 1, q - 1)];
            if !cell.is_nan() {
                return Err(Error::Format(format!(
                    "duplicate cell (group {id}, subject {i}, variable {j}, time {q})"
                )));
            }
            *cell = v;
        }
        if curves.iter().any(|c| c.iter().any(|x| x.is_nan())) {
            return Err(Error::Format(format!(
                "group {id} is missing cells; need all of {n} x {p} x {}",
                grid.nu
            )));
        }
        panels.push(CurvePanel::new(curves, grid.t_start, grid.t_end, id.clone())?);
    }
    Ok(panels)
}

/// Row-major flattened matrix with block metadata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixJson {
    pub p: usize,
    pub m: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn from_block(b: &BlockMatrix) -> Self {
        let n = b.size();
        let mut data = Vec::with_capacity(n * n);
        for r in 0..n {
            for c in 0..n {
                data.push(b.data()[(r, c)]);
            }
        }
        Self { p: b.p(), m: b.m(), data }
    }

    pub fn to_block(&self) -> Result<BlockMatrix> {
        let n = self.p * self.m;
        if self.data.len() != n * n {
            return Err(Error::Format(format!(
                "matrix payload has {} entries, expected {}",
                self.data.len(),
                n * n
            )));
        }
        BlockMatrix::new(DMatrix::from_row_slice(n, n, &self.data), self.p, self.m)
    }
}

fn edges_to_json(edges: &EdgeSet) -> Vec<[usize; 2]> {
    edges.iter().map(|&(j, l)| [j, l]).collect()
}

fn edges_from_json(edges: &[[usize; 2]]) -> EdgeSet {
    edges.iter().map(|&[j, l]| (j, l)).collect()
}

/// Serialized ground truth: edge lists plus flattened precision matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthJson {
    pub p: usize,
    pub m: usize,
    pub k: usize,
    pub common: Vec<[usize; 2]>,
    pub individual: Vec<Vec<[usize; 2]>>,
    pub full: Vec<Vec<[usize; 2]>>,
    pub omegas: Vec<MatrixJson>,
}

impl GroundTruthJson {
    pub fn from_truth(t: &GroundTruth) -> Self {
        Self {
            p: t.p(),
            m: t.m(),
            k: t.k(),
            common: edges_to_json(&t.common),
            individual: t.individual.iter().map(edges_to_json).collect(),
            full: t.full.iter().map(edges_to_json).collect(),
            omegas: t.omegas.iter().map(MatrixJson::from_block).collect(),
        }
    }

    pub fn to_truth(&self) -> Result<GroundTruth> {
        if self.k == 0
            || self.individual.len() != self.k
            || self.full.len() != self.k
            || self.omegas.len() != self.k
        {
            return Err(Error::Format("inconsistent group counts in ground truth".into()));
        }
        let omegas: Vec<BlockMatrix> = self
            .omegas
            .iter()
            .map(|m| {
                let b = m.to_block()?;
                if b.p() != self.p || b.m() != self.m {
                    return Err(Error::Format("precision matrix shape mismatch".into()));
                }
                Ok(b)
            })
            .collect::<Result<_>>()?;
        Ok(GroundTruth {
            common: edges_from_json(&self.common),
            individual: self.individual.iter().map(|e| edges_from_json(e)).collect(),
            full: self.full.iter().map(|e| edges_from_json(e)).collect(),
            omegas,
        })
    }
}

/// One group's fit at one penalty level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroupFitJson {
    pub group: String,
    pub edges: Vec<[usize; 2]>,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
    /// Flattened Ω; omitted in grid sweeps to keep files small.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub omega: Option<MatrixJson>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub z: Option<MatrixJson>,
}

impl GroupFitJson {
    pub fn from_result(group: &str, r: &SolveResult, with_matrices: bool) -> Self {
        Self {
            group: group.to_string(),
            edges: edges_to_json(&crate::solver::extract_edges(r)),
            iterations: r.iterations,
            primal_residual: r.primal_residual,
            dual_residual: r.dual_residual,
            converged: r.converged,
            omega: with_matrices.then(|| MatrixJson::from_block(&r.omega)),
            z: with_matrices.then(|| MatrixJson::from_block(&r.z)),
        }
    }

    pub fn edge_set(&self) -> EdgeSet {
        edges_from_json(&self.edges)
    }
}

/// All groups at one penalty level.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaFitJson {
    pub lambda: f64,
    pub groups: Vec<GroupFitJson>,
}

/// A fit run: one or many penalty levels for one method.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimatesJson {
    pub method: String,
    pub p: usize,
    pub m: usize,
    pub k: usize,
    /// Initializer penalty (joint method only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub steps: Option<usize>,
    pub b: f64,
    pub tol_primal: f64,
    pub tol_dual: f64,
    pub max_iter: usize,
    pub fits: Vec<LambdaFitJson>,
}

/// ROC CSV with header `lambda,afpr,atpr`.
pub fn write_roc_csv(path: &Path, curve: &RocCurve) -> Result<()> {
    let mut out = String::from("lambda,afpr,atpr\n");
    for p in &curve.points {
        out.push_str(&fmt_f64(p.lambda));
        out.push(',');
        out.push_str(&fmt_f64(p.afpr));
        out.push(',');
        out.push_str(&fmt_f64(p.atpr));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate_dataset, SimConfig};

    fn small_config() -> SimConfig {
        SimConfig {
            p: 4,
            n: 3,
            k: 2,
            m: 2,
            nu: 5,
            s: 0.3,
            rho: 0.5,
            sigma2: 0.05,
            t_start: 0.0,
            t_end: 1.0,
            seed: 5,
        }
    }

    #[test]
    fn curves_round_trip_exactly() {
        let data = generate_dataset(&small_config()).unwrap();
        let panels: Vec<CurvePanel> = data.groups.iter().map(|g| g.panel.clone()).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.csv");
        write_curves_csv(&path, &panels).unwrap();
        let grid = GridMeta {
            t_start: 0.0,
            t_end: 1.0,
            nu: 5,
        };
        let back = read_curves_csv(&path, &grid).unwrap();
        assert_eq!(back.len(), panels.len());
        for (a, b) in panels.iter().zip(&back) {
            assert_eq!(a.group_id(), b.group_id());
            for j in 1..=a.p() {
                assert_eq!(a.variable(j), b.variable(j), "bit-exact round trip");
            }
        }
    }

    #[test]
    fn csv_reader_rejects_malformed_input() {
        let dir = tempfile::tempdir().unwrap();
        let grid = GridMeta {
            t_start: 0.0,
            t_end: 1.0,
            nu: 2,
        };
        let write = |name: &str, body: &str| {
            let p = dir.path().join(name);
            fs::write(&p, body).unwrap();
            p
        };
        let bad_header = write("a.csv", "grp,subject,variable,time_index,value\n");
        assert!(read_curves_csv(&bad_header, &grid).is_err());
        let missing = write(
            "b.csv",
            "group,subject,variable,time_index,value\ng1,1,1,1,0.5\n",
        );
        assert!(read_curves_csv(&missing, &grid).is_err());
        let dup = write(
            "c.csv",
            "group,subject,variable,time_index,value\n\
             g1,1,1,1,0.5\ng1,1,1,1,0.5\ng1,1,1,2,0.5\n",
        );
        assert!(read_curves_csv(&dup, &grid).is_err());
        let zero_based = write(
            "d.csv",
            "group,subject,variable,time_index,value\ng1,0,1,1,0.5\n",
        );
        assert!(read_curves_csv(&zero_based, &grid).is_err());
        let ok = write(
            "e.csv",
            "group,subject,variable,time_index,value\n\
             g1,1,1,1,0.5\ng1,1,1,2,0.25\n",
        );
        let panels = read_curves_csv(&ok, &grid).unwrap();
        assert_eq!(panels[0].variable(1)[(0, 1)], 0.25);
    }

    #[test]
    fn ground_truth_round_trip() {
        let data = generate_dataset(&small_config()).unwrap();
        let json = GroundTruthJson::from_truth(&data.truth);
        let text = serde_json::to_string(&json).unwrap();
        let parsed: GroundTruthJson = serde_json::from_str(&text).unwrap();
        let back = parsed.to_truth().unwrap();
        assert_eq!(back.common, data.truth.common);
        assert_eq!(back.individual, data.truth.individual);
        assert_eq!(back.full, data.truth.full);
        for (a, b) in back.omegas.iter().zip(&data.truth.omegas) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn matrix_json_validates_payload() {
        let ok = MatrixJson {
            p: 2,
            m: 1,
            data: vec![1.0, 0.0, 0.0, 1.0],
        };
        assert!(ok.to_block().is_ok());
        let bad = MatrixJson {
            p: 2,
            m: 1,
            data: vec![1.0; 3],
        };
        assert!(bad.to_block().is_err());
    }

    #[test]
    fn fmt_f64_round_trips() {
        for &x in &[
            0.0,
            1.0,
            -1.5,
            std::f64::consts::PI,
            6.02214076e23,
            5e-324,
            -2.2250738585072014e-308,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s}");
        }
    }

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("x.txt");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert!(!path.with_extension("txt.tmp").exists());
    }
}
