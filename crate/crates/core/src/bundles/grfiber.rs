use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use super::MBundle;
use crate::geometry::{grass_dist, gram_schmidt, GrPlane};

/// Thresholds for forced-vector extraction.
#[derive(Clone, Debug)]
pub struct GrFiberOptions {
    /// Singular values below `zero_tol · max(σ_max, 1)` count as zero.
    pub zero_tol: f64,
    /// Required ratio between the smallest nonzero and largest zero singular value.
    pub gap_ratio: f64,
    /// Cross-frame disagreement above this raises a diagnostic.
    pub consistency_tol: f64,
    /// Frames whose forced plane is steeper than this slope are not cross-checked.
    pub max_slope: f64,
}

impl Default for GrFiberOptions {
    fn default() -> Self {
        Self { zero_tol: 1e-7, gap_ratio: 1e3, consistency_tol: 1e-6, max_slope: 1.0 }
    }
}

/// Sub-Grassmannian `{W : v₁, …, v_l ∈ W}` of candidate tangent planes at one sample.
#[derive(Clone, Debug)]
pub struct GrFiber {
    pub sample: usize,
    pub d: usize,
    /// Orthonormal forced vectors, `n × l`.
    pub forced: DMatrix<f64>,
    pub witness_frame: usize,
}

impl GrFiber {
    pub fn l(&self) -> usize {
        self.forced.ncols()
    }

    pub fn is_singleton(&self) -> bool {
        self.l() == self.d
    }

    /// Span of the forced vectors, `None` when `l = 0`.
    pub fn forced_span(&self) -> Option<GrPlane> {
        (self.l() > 0).then(|| GrPlane::from_orthonormal(&self.forced))
    }

    /// The unique candidate plane of a singleton fiber.
    pub fn plane(&self) -> Option<GrPlane> {
        if self.is_singleton() {
            self.forced_span()
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GrDiagnostic {
    /// No clear separation between pinned and free directions.
    NoGap { frame: usize, ratio: f64 },
    /// Free gradient directions do not form the full block the forced vectors predict.
    StructureMismatch { frame: usize, expected: usize, found: usize },
    /// Two well-conditioned frames see different numbers of forced vectors.
    DimensionDisagreement { frame: usize, l: usize, witness_l: usize },
    /// Two well-conditioned frames see different forced spans.
    SpanDisagreement { frame: usize, distance: f64 },
}

#[derive(Clone, Debug)]
pub struct GrFiberResult {
    /// `None` when every frame fiber is EMPTY.
    pub fiber: Option<GrFiber>,
    pub diagnostics: Vec<GrDiagnostic>,
}

struct FrameForced {
    frame: usize,
    forced: DMatrix<f64>,
    slope: f64,
}

/// Forced vectors at one sample, merged across frames.
pub fn gr_fiber(bundle: &MBundle, sample: usize, opts: &GrFiberOptions) -> GrFiberResult {
    let mut diagnostics = Vec::new();
    let mut per_frame = Vec::new();
    for q in 0..bundle.frames().len() {
        if let Some(ff) = frame_forced(bundle, sample, q, opts, &mut diagnostics) {
            per_frame.push(ff);
        }
    }
    let Some(witness) = per_frame
        .iter()
        .min_by(|a, b| b.forced.ncols().cmp(&a.forced.ncols()).then(a.slope.total_cmp(&b.slope)))
    else {
        return GrFiberResult { fiber: None, diagnostics };
    };
    let wl = witness.forced.ncols();
    let wspan = (wl > 0).then(|| GrPlane::from_orthonormal(&witness.forced));
    for other in &per_frame {
        if other.frame == witness.frame || other.slope > opts.max_slope {
            continue;
        }
        let l = other.forced.ncols();
        if l != wl {
            diagnostics.push(GrDiagnostic::DimensionDisagreement { frame: other.frame, l, witness_l: wl });
        } else if let Some(ws) = &wspan {
            let dist = grass_dist(ws, &GrPlane::from_orthonormal(&other.forced));
            if dist > opts.consistency_tol {
                diagnostics.push(GrDiagnostic::SpanDisagreement { frame: other.frame, distance: dist });
            }
        }
    }
    let fiber = GrFiber {
        sample,
        d: bundle.d(),
        forced: witness.forced.clone(),
        witness_frame: witness.frame,
    };
    GrFiberResult { fiber: Some(fiber), diagnostics }
}

/// All samples; convenience wrapper.
pub fn gr_fibers(bundle: &MBundle, opts: &GrFiberOptions) -> Vec<GrFiberResult> {
    (0..bundle.len()).map(|i| gr_fiber(bundle, i, opts)).collect()
}

fn frame_forced(
    bundle: &MBundle,
    sample: usize,
    q: usize,
    opts: &GrFiberOptions,
    diags: &mut Vec<GrDiagnostic>,
) -> Option<FrameForced> {
    let fiber = bundle.fiber(sample, q);
    let space = fiber.space()?;
    let frame = &bundle.frames()[q];
    let d = bundle.d();
    let k = fiber.codim();
    let terms = fiber.indices().len();
    let grad_of = |flat: &DVector<f64>| -> DMatrix<f64> {
        DMatrix::from_fn(k, d, |l, i| if bundle.m() == 0 { 0.0 } else { flat[l * terms + 1 + i] })
    };
    let g0 = grad_of(&space.base);
    let variations: Vec<DMatrix<f64>> = (0..space.dim()).map(|j| grad_of(&space.basis.column(j).into_owned())).collect();

    let mut gram = DMatrix::<f64>::zeros(d, d);
    for g in &variations {
        gram += g.transpose() * g;
    }
    let eig = SymmetricEigen::new(gram);
    let sv: Vec<f64> = eig.eigenvalues.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let cut = opts.zero_tol * smax.max(1.0);
    let mut kernel = Vec::new();
    let mut smallest_live = f64::INFINITY;
    let mut largest_dead: f64 = 0.0;
    for (i, &s) in sv.iter().enumerate() {
        if s < cut {
            kernel.push(eig.eigenvectors.column(i).into_owned());
            largest_dead = largest_dead.max(s);
        } else {
            smallest_live = smallest_live.min(s);
        }
    }
    if smallest_live.is_finite() && largest_dead > 0.0 && smallest_live / largest_dead < opts.gap_ratio {
        diags.push(GrDiagnostic::NoGap { frame: q, ratio: smallest_live / largest_dead });
    }
    let l = kernel.len();

    let expected = k * (d - l);
    let found = variation_rank(&variations, opts.zero_tol);
    if found != expected {
        diags.push(GrDiagnostic::StructureMismatch { frame: q, expected, found });
    }

    let n = frame.n();
    let mut vecs = DMatrix::zeros(n, l);
    let mut slope: f64 = 0.0;
    for (c, u) in kernel.iter().enumerate() {
        let gu = &g0 * u;
        slope = slope.max(gu.norm());
        let mut local = DVector::zeros(n);
        local.rows_mut(0, d).copy_from(u);
        local.rows_mut(d, k).copy_from(&gu);
        vecs.set_column(c, &(frame.matrix() * local));
    }
    let forced = gram_schmidt(&vecs, 1e-12);
    Some(FrameForced { frame: q, forced, slope })
}

fn variation_rank(vars: &[DMatrix<f64>], tol: f64) -> usize {
    if vars.is_empty() {
        return 0;
    }
    let len = vars[0].len();
    let cols: Vec<DVector<f64>> = vars.iter().map(|g| DVector::from_column_slice(g.as_slice())).collect();
    let m = DMatrix::from_columns(&cols);
    let gram = m.transpose() * &m;
    let eig = SymmetricEigen::new(gram);
    let smax = eig.eigenvalues.iter().map(|v| v.max(0.0).sqrt()).fold(0.0, f64::max);
    let cut = tol * smax.max(1.0);
    eig.eigenvalues.iter().filter(|&&v| v.max(0.0).sqrt() >= cut).count().min(len)
}
