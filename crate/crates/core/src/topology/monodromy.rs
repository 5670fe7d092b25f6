use std::f64::consts::{PI, TAU};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::bundles::GrFiber;
use crate::error::{Error, Result};
use crate::geometry::{grass_dist, GrPlane};

/// Largest plane change allowed between consecutive loop samples.
pub const JUMP_TOL: f64 = 0.5;

/// Eigenvalues of the mean projection above `1 − COMMON_TOL` span the common subspace.
pub const COMMON_TOL: f64 = 1e-6;

/// Accumulated double angles further than this fraction of a turn from an integer are rejected.
const WINDING_RESIDUAL: f64 = 0.1;

/// A closed loop of samples with the Gr-fiber seen at each one.
#[derive(Clone, Debug)]
pub struct LoopPath {
    samples: Vec<usize>,
    fibers: Vec<GrFiber>,
}

impl LoopPath {
    /// `samples[k]` carries `fibers[k]`; the last sample is adjacent to the first.
    pub fn new(samples: Vec<usize>, fibers: Vec<GrFiber>) -> Result<Self> {
        if samples.len() != fibers.len() {
            return Err(Error::Dimension(format!("{} samples but {} fibers", samples.len(), fibers.len())));
        }
        if samples.len() < 3 {
            return Err(Error::Input("a loop needs at least three samples".into()));
        }
        let (n, d) = (fibers[0].forced.nrows(), fibers[0].d);
        if fibers.iter().any(|f| f.forced.nrows() != n || f.d != d) {
            return Err(Error::Dimension("loop fibers live in different Grassmannians".into()));
        }
        Ok(Self { samples, fibers })
    }

    /// Loop of singleton fibers given directly by planes; samples are numbered `0..len`.
    pub fn from_planes(planes: &[GrPlane]) -> Result<Self> {
        let fibers = planes
            .iter()
            .enumerate()
            .map(|(k, p)| GrFiber { sample: k, d: p.dim(), forced: p.basis(), witness_frame: 0 })
            .collect();
        Self::new((0..planes.len()).collect(), fibers)
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    pub fn fibers(&self) -> &[GrFiber] {
        &self.fibers
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.fibers[0].forced.nrows()
    }

    pub fn d(&self) -> usize {
        self.fibers[0].d
    }

    /// True when every fiber along the loop is a single plane.
    pub fn is_singleton(&self) -> bool {
        self.fibers.iter().all(GrFiber::is_singleton)
    }

    /// Same loop started at position `k`.
    pub fn rotated(&self, k: usize) -> Self {
        let mut out = self.clone();
        out.samples.rotate_left(k % self.len());
        out.fibers.rotate_left(k % self.len());
        out
    }

    /// Same loop traversed backwards from the same basepoint.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.samples[1..].reverse();
        out.fibers[1..].reverse();
        out
    }

    /// The loop traversed `times` times in a row.
    pub fn repeated(&self, times: usize) -> Self {
        let mut out = self.clone();
        for _ in 1..times {
            out.samples.extend_from_slice(&self.samples);
            out.fibers.extend_from_slice(&self.fibers);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LoopVerdict {
    Obstructed,
    Passes,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mechanism {
    /// Degree of the line loop in ℝP¹.
    Winding { winding: i64 },
    /// Holonomy sign of the line loop in ℝP^{k−1}, `k ≥ 3`.
    Parity { sign: i8 },
    None,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObstructionReport {
    pub verdict: LoopVerdict,
    pub mechanism: Mechanism,
    pub samples: Vec<usize>,
    /// `(n − l, d − l)` for the smallest forced dimension `l` on the loop.
    pub free_factor: (usize, usize),
    pub common_dim: usize,
    /// Dimension `k` of the space the moving line lives in.
    pub quotient_dim: usize,
    pub diagnostic: Option<String>,
}

impl ObstructionReport {
    fn inconclusive(lp: &LoopPath, reason: String) -> Self {
        Self {
            verdict: LoopVerdict::Inconclusive,
            mechanism: Mechanism::None,
            samples: lp.samples.clone(),
            free_factor: free_factor(lp),
            common_dim: 0,
            quotient_dim: 0,
            diagnostic: Some(reason),
        }
    }

    /// A loop whose check itself failed, reported as INCONCLUSIVE.
    pub fn failed(lp: &LoopPath, err: &Error) -> Self {
        Self::inconclusive(lp, err.to_string())
    }
}

fn free_factor(lp: &LoopPath) -> (usize, usize) {
    let l = lp.fibers.iter().map(GrFiber::l).min().unwrap_or(0);
    (lp.ambient_dim() - l, lp.d() - l)
}

enum Moving {
    Unsupported(String),
    Constant { common: usize },
    Lines { common: usize, lines: Vec<DVector<f64>> },
}

/// Splits the loop planes into their common subspace and one moving line in its complement.
fn moving_lines(lp: &LoopPath) -> Result<Moving> {
    if !lp.is_singleton() {
        return Ok(Moving::Unsupported("loop passes through non-singleton fibers".into()));
    }
    let planes: Vec<GrPlane> = lp.fibers.iter().map(|f| f.plane().expect("singleton")).collect();
    for k in 0..planes.len() {
        let next = (k + 1) % planes.len();
        let dist = grass_dist(&planes[k], &planes[next]);
        if dist >= JUMP_TOL {
            return Err(Error::Resolution(format!(
                "planes at samples {} and {} are {dist:.3} apart",
                lp.samples[k], lp.samples[next]
            )));
        }
    }
    let n = lp.ambient_dim();
    let d = lp.d();
    let mut mean = DMatrix::zeros(n, n);
    for p in &planes {
        mean += p.projection();
    }
    mean /= planes.len() as f64;
    let eig = SymmetricEigen::new(mean);
    let quotient: Vec<DVector<f64>> = (0..n)
        .filter(|&j| eig.eigenvalues[j] < 1.0 - COMMON_TOL)
        .map(|j| eig.eigenvectors.column(j).into_owned())
        .collect();
    let common = n - quotient.len();
    if common >= d {
        return Ok(Moving::Constant { common });
    }
    let k = quotient.len();
    let moving = d - common;
    if moving != 1 && moving + 1 != k {
        return Ok(Moving::Unsupported(format!(
            "moving factor is a {moving}-plane in a {k}-dimensional quotient"
        )));
    }
    let basis = oriented(DMatrix::from_columns(&quotient));
    let lines = planes
        .iter()
        .map(|p| {
            let r = basis.tr_mul(&(p.projection() * &basis));
            let e = SymmetricEigen::new(r);
            let pick = if moving == 1 { e.eigenvalues.imax() } else { e.eigenvalues.imin() };
            e.eigenvectors.column(pick).into_owned()
        })
        .collect();
    Ok(Moving::Lines { common, lines })
}

/// Fixes the orientation of a quotient basis so that windings have a reproducible sign.
fn oriented(mut basis: DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = basis.shape();
    if k == 0 {
        return basis;
    }
    let mut best: Option<(f64, Vec<usize>)> = None;
    for rows in combinations(n, k) {
        let det = basis.select_rows(rows.iter()).determinant();
        let better = best.as_ref().map_or(true, |(b, _)| det.abs() > b.abs() + 1e-9);
        if better {
            best = Some((det, rows));
        }
    }
    if best.is_some_and(|(det, _)| det < 0.0) {
        let last = k - 1;
        basis.column_mut(last).neg_mut();
    }
    basis
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

fn check_line_steps(lp: &LoopPath, lines: &[DVector<f64>]) -> Result<()> {
    for k in 0..lines.len() {
        let next = (k + 1) % lines.len();
        let c = lines[k].dot(&lines[next]).abs().min(1.0);
        let sin = (1.0 - c * c).sqrt();
        if sin >= JUMP_TOL {
            return Err(Error::Resolution(format!(
                "moving line turns by {sin:.3} between samples {} and {}",
                lp.samples[k], lp.samples[next]
            )));
        }
    }
    Ok(())
}

fn wrap(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Continued double angles of a planar line loop, one per sample plus the closing value.
fn double_angles(lines: &[DVector<f64>]) -> Vec<f64> {
    let raw: Vec<f64> = lines.iter().map(|u| 2.0 * u[1].atan2(u[0])).collect();
    let mut out = Vec::with_capacity(raw.len() + 1);
    out.push(raw[0]);
    for k in 1..=raw.len() {
        let prev = out[k - 1];
        out.push(prev + wrap(raw[k % raw.len()] - raw[k - 1]));
    }
    out
}

/// Unit lifts by sign continuation, plus the closing lift back at the basepoint.
fn lifts(lines: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(lines.len() + 1);
    out.push(lines[0].clone());
    for k in 1..=lines.len() {
        let u = &lines[k % lines.len()];
        let prev = &out[k - 1];
        out.push(if prev.dot(u) < 0.0 { -u } else { u.clone() });
    }
    out
}

/// Monodromy of the moving line along a loop of singleton fibers.
pub fn line_monodromy(lp: &LoopPath) -> Result<ObstructionReport> {
    let (common, lines) = match moving_lines(lp)? {
        Moving::Unsupported(reason) => return Ok(ObstructionReport::inconclusive(lp, reason)),
        Moving::Constant { common } => {
            return Ok(ObstructionReport {
                verdict: LoopVerdict::Passes,
                mechanism: Mechanism::None,
                samples: lp.samples.clone(),
                free_factor: free_factor(lp),
                common_dim: common,
                quotient_dim: lp.ambient_dim() - common,
                diagnostic: None,
            })
        }
        Moving::Lines { common, lines } => (common, lines),
    };
    check_line_steps(lp, &lines)?;
    let k = lp.ambient_dim() - common;
    let mechanism = if k == 2 {
        let angles = double_angles(&lines);
        let turns = (angles[angles.len() - 1] - angles[0]) / TAU;
        let winding = turns.round();
        if (turns - winding).abs() > WINDING_RESIDUAL {
            return Err(Error::Resolution(format!("winding residual {:.3} of a turn", turns - winding)));
        }
        Mechanism::Winding { winding: winding as i64 }
    } else {
        let lifted = lifts(&lines);
        let sign = if lifted[lifted.len() - 1].dot(&lifted[0]) < 0.0 { -1 } else { 1 };
        Mechanism::Parity { sign }
    };
    let obstructed = match mechanism {
        Mechanism::Winding { winding } => winding != 0,
        Mechanism::Parity { sign } => sign < 0,
        Mechanism::None => false,
    };
    Ok(ObstructionReport {
        verdict: if obstructed { LoopVerdict::Obstructed } else { LoopVerdict::Passes },
        mechanism,
        samples: lp.samples.clone(),
        free_factor: free_factor(lp),
        common_dim: common,
        quotient_dim: k,
        diagnostic: None,
    })
}

/// One row of the per-sample loop trace.
#[derive(Clone, Debug, Serialize)]
pub struct TraceRow {
    pub position: usize,
    pub sample: usize,
    /// Plane distance to the previous sample on the loop.
    pub step: f64,
    /// Continued line angle in the quotient plane; only for a two-dimensional quotient.
    pub angle: Option<f64>,
    /// Continued unit lift of the moving line, in quotient coordinates, space separated.
    pub line: String,
}

/// Per-sample plane data along the loop, for plotting.
pub fn loop_trace(lp: &LoopPath) -> Result<Vec<TraceRow>> {
    let planes: Vec<Option<GrPlane>> = lp.fibers.iter().map(GrFiber::plane).collect();
    let step = |k: usize| -> f64 {
        let prev = (k + lp.len() - 1) % lp.len();
        match (&planes[prev], &planes[k]) {
            (Some(a), Some(b)) => grass_dist(a, b),
            _ => f64::NAN,
        }
    };
    let (angles, lifted) = match moving_lines(lp)? {
        Moving::Lines { lines, .. } if lines[0].len() == 2 => {
            let a = double_angles(&lines);
            (Some(a), lifts(&lines))
        }
        Moving::Lines { lines, .. } => (None, lifts(&lines)),
        _ => (None, Vec::new()),
    };
    Ok((0..lp.len())
        .map(|k| TraceRow {
            position: k,
            sample: lp.samples[k],
            step: step(k),
            angle: angles.as_ref().map(|a| a[k] / 2.0),
            line: lifted
                .get(k)
                .map(|v| v.iter().map(|x| format!("{x:.12}")).collect::<Vec<_>>().join(" "))
                .unwrap_or_default(),
        })
        .collect())
}

/// Writes [`loop_trace`] as CSV.
pub fn write_trace_csv<W: std::io::Write>(lp: &LoopPath, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in loop_trace(lp)? {
        w.serialize(row).map_err(|e| Error::Numerical(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
