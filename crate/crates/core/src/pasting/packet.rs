use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::graph::GraphFn;
use crate::error::{Error, Result};
use crate::geometry::{frame_to_plane, grass_dist, Frame};

/// One local graph: `z ↦ center + Q·(x, F(x))`.
#[derive(Clone, Debug)]
pub struct LocalPatch {
    pub center: DVector<f64>,
    pub frame: Frame,
    pub graph: Arc<dyn GraphFn>,
}

impl LocalPatch {
    pub fn new(center: DVector<f64>, frame: Frame, graph: Arc<dyn GraphFn>) -> Result<Self> {
        if center.len() != frame.n() || graph.d() != frame.d() || graph.codim() != frame.codim() {
            return Err(Error::Dimension("patch center, frame and graph disagree on (n, d)".into()));
        }
        let f0 = graph.value(&DVector::zeros(frame.d()));
        if f0.norm() > 1e-12 {
            return Err(Error::Input(format!("patch graph must vanish at the origin, |F(0)| = {:.3e}", f0.norm())));
        }
        Ok(Self { center, frame, graph })
    }

    /// Local coordinates `(x, y) = Qᵀ(z − center)`.
    pub fn local(&self, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        self.frame.split(&(z - &self.center))
    }

    /// The graph point over local parameter `s`.
    pub fn graph_point(&self, s: &DVector<f64>) -> DVector<f64> {
        &self.center + self.frame.merge(s, &self.graph.value(s))
    }

    /// `n × d` derivative of [`LocalPatch::graph_point`].
    pub fn graph_differential(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let d = self.frame.d();
        let mut stacked = DMatrix::zeros(self.frame.n(), d);
        stacked.rows_mut(0, d).fill_with_identity();
        stacked.rows_mut(d, self.frame.codim()).copy_from(&self.graph.jacobian(s));
        self.frame.matrix() * stacked
    }

    /// Whether `z` lies in the cylinder of radius `r·δ₀`.
    pub fn in_cylinder(&self, z: &DVector<f64>, r: f64, delta0: f64) -> bool {
        let (x, y) = self.local(z);
        x.norm() < r * delta0 && y.norm() < r * delta0
    }

    /// Rigid motion `z ↦ R·z + b` applied to the patch.
    pub fn moved(&self, r: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        Ok(Self { center: r * &self.center + b, frame: self.frame.rotated(r)?, graph: self.graph.clone() })
    }
}

/// Tunables of the gluing construction.
#[derive(Clone, Debug, Serialize)]
pub struct PacketConfig {
    pub delta0: f64,
    /// Slope and frame-proximity bound.
    pub c0: f64,
    /// Radius factor of the tube around the tangent planes.
    pub c2: f64,
    /// Smoothness order; the bump is `(1 − |v|²)^{m+3}`.
    pub m: usize,
    /// Required ratio between Hessian eigenvalues of rank `n − d` and `n − d + 1`.
    pub eigengap: f64,
    /// Newton stops once the normal part of `∇G` is below this.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self { delta0: 1.0, c0: 0.05, c2: 0.25, m: 1, eigengap: 10.0, newton_tol: 1e-9, newton_max_iter: 60 }
    }
}

/// Spot-check violations of the packet hypotheses; none of them stop the construction.
#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PacketWarning {
    SteepGraph { patch: usize, slope: f64 },
    FramesApart { a: usize, b: usize, distance: f64 },
    CrowdedOverlap { patch: usize, neighbours: usize },
}

/// Overlapping frame-aligned cylinders carrying local graphs.
#[derive(Clone, Debug)]
pub struct CylinderPacket {
    patches: Vec<LocalPatch>,
    config: PacketConfig,
    overlaps: Vec<Vec<usize>>,
    warnings: Vec<PacketWarning>,
}

/// Overlap count above which the packet is reported as crowded.
const OVERLAP_LIMIT: usize = 64;

impl CylinderPacket {
    pub fn new(patches: Vec<LocalPatch>, config: PacketConfig) -> Result<Self> {
        let Some(first) = patches.first() else {
            return Err(Error::Input("a packet needs at least one patch".into()));
        };
        let (n, d) = (first.frame.n(), first.frame.d());
        if patches.iter().any(|p| p.frame.n() != n || p.frame.d() != d) {
            return Err(Error::Dimension("patches disagree on (n, d)".into()));
        }
        if !(config.delta0 > 0.0) || !(config.c0 > 0.0) || !(config.c2 > 0.0) {
            return Err(Error::Input("delta0, c0 and c2 must be positive".into()));
        }
        let delta0 = config.delta0;
        let reach = 24.0 * delta0;
        let overlaps: Vec<Vec<usize>> = (0..patches.len())
            .map(|i| {
                (0..patches.len())
                    .filter(|&j| j != i && (&patches[i].center - &patches[j].center).norm() < reach)
                    .collect()
            })
            .collect();
        let mut warnings = Vec::new();
        for (i, p) in patches.iter().enumerate() {
            let slope = probe_slope(p, 12.0 * delta0);
            if slope > config.c0 {
                warnings.push(PacketWarning::SteepGraph { patch: i, slope });
            }
            if overlaps[i].len() > OVERLAP_LIMIT {
                warnings.push(PacketWarning::CrowdedOverlap { patch: i, neighbours: overlaps[i].len() });
            }
            let pi = frame_to_plane(&p.frame);
            for &j in overlaps[i].iter().filter(|&&j| j > i) {
                let distance = grass_dist(&pi, &frame_to_plane(&patches[j].frame));
                if distance >= config.c0 {
                    warnings.push(PacketWarning::FramesApart { a: i, b: j, distance });
                }
            }
        }
        Ok(Self { patches, config, overlaps, warnings })
    }

    pub fn patches(&self) -> &[LocalPatch] {
        &self.patches
    }

    pub fn config(&self) -> &PacketConfig {
        &self.config
    }

    pub fn overlaps(&self) -> &[Vec<usize>] {
        &self.overlaps
    }

    pub fn warnings(&self) -> &[PacketWarning] {
        &self.warnings
    }

    pub fn n(&self) -> usize {
        self.patches[0].frame.n()
    }

    pub fn d(&self) -> usize {
        self.patches[0].frame.d()
    }

    /// Same packet after the rigid motion `z ↦ R·z + b`.
    pub fn moved(&self, r: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self> {
        let patches = self.patches.iter().map(|p| p.moved(r, b)).collect::<Result<Vec<_>>>()?;
        Self::new(patches, self.config.clone())
    }
}

/// Largest Jacobian norm over a few probe points of the ball of radius `r`.
fn probe_slope(p: &LocalPatch, r: f64) -> f64 {
    let d = p.frame.d();
    let mut probes = vec![DVector::zeros(d)];
    for k in 0..d {
        for s in [-0.5, 0.5, -0.95, 0.95] {
            let mut v = DVector::zeros(d);
            v[k] = s * r;
            probes.push(v);
        }
    }
    probes.iter().map(|x| p.graph.jacobian(x).norm()).fold(0.0, f64::max)
}

/// The bump `θ(v) = (1 − |v|²)^p` for `|v| < 1`, zero outside, with gradient and Hessian.
pub(crate) fn bump(v: &DVector<f64>, p: i32) -> (f64, DVector<f64>, DMatrix<f64>) {
    let d = v.len();
    let s = 1.0 - v.norm_squared();
    if s <= 0.0 {
        return (0.0, DVector::zeros(d), DMatrix::zeros(d, d));
    }
    let pf = p as f64;
    let value = s.powi(p);
    let grad = v * (-2.0 * pf * s.powi(p - 1));
    let hess = v * v.transpose() * (4.0 * pf * (pf - 1.0) * s.powi(p - 2))
        - DMatrix::identity(d, d) * (2.0 * pf * s.powi(p - 1));
    (value, grad, hess)
}

/// Value, gradient and Hessian of the weighted squared distance `G`.
#[derive(Clone, Debug)]
pub struct GValue {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
    /// Patches whose six-fold cylinder contains the point.
    pub active: Vec<usize>,
}

impl CylinderPacket {
    /// Weights `θ(x_i/(6δ₀))` of the patches whose six-fold cylinder contains `z`.
    pub fn blend_weights(&self, z: &DVector<f64>) -> Vec<(usize, f64)> {
        let delta0 = self.config.delta0;
        let p = self.config.m as i32 + 3;
        self.patches
            .iter()
            .enumerate()
            .filter(|(_, pt)| pt.in_cylinder(z, 6.0, delta0))
            .map(|(i, pt)| (i, bump(&(pt.local(z).0 / (6.0 * delta0)), p).0))
            .collect()
    }

    /// `G(z) = Σ |y_i|² θ_i / Σ θ_i` over the six-fold cylinders containing `z`.
    pub fn weighted_sq_dist(&self, z: &DVector<f64>) -> Result<GValue> {
        let n = self.n();
        if z.len() != n {
            return Err(Error::Dimension(format!("point has length {}, expected {n}", z.len())));
        }
        let delta0 = self.config.delta0;
        if !self.patches.iter().any(|p| p.in_cylinder(z, 5.0, delta0)) {
            return Err(Error::Precondition("point lies outside every five-fold cylinder".into()));
        }
        let p = self.config.m as i32 + 3;
        let scale = 6.0 * delta0;
        let mut num = 0.0;
        let mut den = 0.0;
        let mut dnum = DVector::zeros(n);
        let mut dden = DVector::zeros(n);
        let mut hnum = DMatrix::zeros(n, n);
        let mut hden = DMatrix::zeros(n, n);
        let mut active = Vec::new();
        for (i, pt) in self.patches.iter().enumerate() {
            if !pt.in_cylinder(z, 6.0, delta0) {
                continue;
            }
            let (x, _) = pt.local(z);
            let (w, gw, hw) = bump(&(x / scale), p);
            if w == 0.0 {
                continue;
            }
            active.push(i);
            let tb = pt.frame.tangent_block();
            let nb = pt.frame.normal_block();
            let normal_proj = &nb * nb.transpose();
            let r = z - &pt.center;
            let phi = r.dot(&(&normal_proj * &r));
            let dphi = &normal_proj * &r * 2.0;
            let hphi = &normal_proj * 2.0;
            let dw = &tb * gw / scale;
            let hw = &tb * hw * tb.transpose() / (scale * scale);
            num += phi * w;
            den += w;
            dnum += &dphi * w + &dw * phi;
            dden += &dw;
            hnum += hphi * w + &dphi * dw.transpose() + &dw * dphi.transpose() + &hw * phi;
            hden += hw;
        }
        if den <= 0.0 {
            return Err(Error::Precondition("all blending weights vanish at this point".into()));
        }
        let value = num / den;
        let gradient = (&dnum - &dden * value) / den;
        let hessian = (&hnum - &hden * value - &gradient * dden.transpose() - &dden * gradient.transpose()) / den;
        Ok(GValue { value, gradient, hessian, active })
    }
}
