use std::collections::HashMap;

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Points closer than this are treated as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;

/// A finite sample of `E ⊂ ℝⁿ` with an exact ball-query index.
///
/// Distances are measured on the first `metric_dims` coordinates, which is all of
/// them unless the set was built with [`SampledSet::with_metric_dims`].
#[derive(Clone, Debug)]
pub struct SampledSet {
    points: Vec<DVector<f64>>,
    n: usize,
    metric_dims: usize,
    grid: Grid,
}

#[derive(Clone, Debug)]
struct Grid {
    cell: f64,
    cells: HashMap<Vec<i64>, Vec<usize>>,
}

impl SampledSet {
    pub fn new(points: Vec<DVector<f64>>) -> Result<Self> {
        let n = points.first().map(|p| p.len()).unwrap_or(0);
        Self::build(points, n)
    }

    /// Same points, but neighbourhoods only look at the first `k` coordinates.
    pub fn with_metric_dims(points: Vec<DVector<f64>>, k: usize) -> Result<Self> {
        Self::build(points, k)
    }

    fn build(points: Vec<DVector<f64>>, metric_dims: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Input("sample set is empty".into()));
        }
        let n = points[0].len();
        if n == 0 || metric_dims == 0 || metric_dims > n {
            return Err(Error::Dimension(format!("bad ambient/metric dimension {n}/{metric_dims}")));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != n {
                return Err(Error::Dimension(format!("point {i} has length {}, expected {n}", p.len())));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("point {i} has a non-finite coordinate")));
            }
        }
        let cell = default_cell(&points, metric_dims);
        let mut set = Self { grid: Grid::build(&points, metric_dims, cell), points, n, metric_dims };
        set.check_duplicates()?;
        Ok(set.reindexed_in_place(cell))
    }

    fn check_duplicates(&mut self) -> Result<()> {
        for i in 0..self.points.len() {
            let near = self.grid.query(&self.points, self.metric_dims, &self.points[i], DUPLICATE_TOL);
            for (j, _) in near {
                if j != i && (&self.points[i] - &self.points[j]).norm() <= DUPLICATE_TOL {
                    return Err(Error::Input(format!("duplicate samples {} and {}", i.min(j), i.max(j))));
                }
            }
        }
        Ok(())
    }

    fn reindexed_in_place(mut self, cell: f64) -> Self {
        self.grid = Grid::build(&self.points, self.metric_dims, cell);
        self
    }

    /// Rebuilds the grid with the given cell size; queries up to that radius touch `3^k` cells.
    pub fn reindexed(&self, cell: f64) -> Self {
        self.clone().reindexed_in_place(cell.max(1e-12))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.n
    }

    pub fn metric_dims(&self) -> usize {
        self.metric_dims
    }

    pub fn point(&self, i: usize) -> &DVector<f64> {
        &self.points[i]
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        metric(&self.points[i], &self.points[j], self.metric_dims)
    }

    /// Samples within closed distance `r` of sample `i`, excluding `i`,
    /// sorted by distance then index.
    pub fn ball(&self, i: usize, r: f64) -> Vec<(usize, f64)> {
        let mut out = self.ball_at(&self.points[i], r);
        out.retain(|&(j, _)| j != i);
        out
    }

    pub fn ball_at(&self, x: &DVector<f64>, r: f64) -> Vec<(usize, f64)> {
        let mut out = self.grid.query(&self.points, self.metric_dims, x, r);
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }

    /// Distance from each sample to its nearest other sample.
    pub fn nearest_distances(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let mut r = self.grid.cell;
                loop {
                    let b = self.ball(i, r);
                    if let Some(&(_, dist)) = b.first() {
                        return dist;
                    }
                    if self.len() == 1 || r > 1e12 {
                        return f64::INFINITY;
                    }
                    r *= 2.0;
                }
            })
            .collect()
    }
}

fn metric(a: &DVector<f64>, b: &DVector<f64>, k: usize) -> f64 {
    (0..k).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

fn default_cell(points: &[DVector<f64>], k: usize) -> f64 {
    let mut lo = vec![f64::INFINITY; k];
    let mut hi = vec![f64::NEG_INFINITY; k];
    for p in points {
        for i in 0..k {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    let diag = lo.iter().zip(&hi).map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt();
    let per_axis = (points.len() as f64).powf(1.0 / k as f64);
    (diag / per_axis).max(1e-9)
}

impl Grid {
    fn build(points: &[DVector<f64>], k: usize, cell: f64) -> Self {
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(key(p, k, cell)).or_default().push(i);
        }
        Self { cell, cells }
    }

    fn query(&self, points: &[DVector<f64>], k: usize, x: &DVector<f64>, r: f64) -> Vec<(usize, f64)> {
        let reach = (r / self.cell).ceil() as i64;
        let center = key(x, k, self.cell);
        let mut out = Vec::new();
        let span = (2 * reach + 1) as usize;
        let total = span.checked_pow(k as u32).unwrap_or(usize::MAX);
        if total > self.cells.len() {
            for bucket in self.cells.values() {
                collect(bucket, points, k, x, r, &mut out);
            }
            return out;
        }
        let mut offset = vec![-reach; k];
        loop {
            let probe: Vec<i64> = center.iter().zip(&offset).map(|(c, o)| c + o).collect();
            if let Some(bucket) = self.cells.get(&probe) {
                collect(bucket, points, k, x, r, &mut out);
            }
            let mut axis = 0;
            loop {
                if axis == k {
                    return out;
                }
                offset[axis] += 1;
                if offset[axis] <= reach {
                    break;
                }
                offset[axis] = -reach;
                axis += 1;
            }
        }
    }
}

fn collect(bucket: &[usize], points: &[DVector<f64>], k: usize, x: &DVector<f64>, r: f64, out: &mut Vec<(usize, f64)>) {
    for &j in bucket {
        let dist = metric(&points[j], x, k);
        if dist <= r {
            out.push((j, dist));
        }
    }
}

fn key(p: &DVector<f64>, k: usize, cell: f64) -> Vec<i64> {
    (0..k).map(|i| (p[i] / cell).floor() as i64).collect()
}
