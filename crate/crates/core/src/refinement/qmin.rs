use nalgebra::{DMatrix, DVector};

use crate::bundles::{AffineSpace, MBundle};
use crate::error::{Error, Result};
use crate::jets::{JetPoly, MultiIndexSet};
use crate::linalg::thin_svd;

/// Projections closer than this (relative) count as coincident.
pub(crate) const COINCIDENT_TOL: f64 = 1e-12;

/// One cluster member: its Q-coordinates and its fiber.
pub(crate) struct Member<'a> {
    pub t: &'a DVector<f64>,
    pub space: &'a AffineSpace,
}

/// The quadratic form of a cluster, split into anchor and non-anchor unknowns.
pub(crate) struct Assembled {
    pub m0: DMatrix<f64>,
    pub rest: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Column offset of each non-anchor member inside `rest`.
    pub offsets: Vec<usize>,
}

/// `𝒬_min(a₀) = ‖k·a₀ + c‖²` after eliminating the non-anchor members.
#[derive(Clone, Debug)]
pub(crate) struct Reduced {
    pub k: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Size of the roundoff left in `k` by the elimination, before the unit roundoff factor.
    pub scale: f64,
}

impl Reduced {
    pub fn value(&self, a0: &DVector<f64>) -> f64 {
        (&self.k * a0 + &self.c).norm_squared()
    }
}

/// Builds the residual rows of `𝒬` for members `[anchor, x₁, …]`.
pub(crate) fn assemble(idx: &MultiIndexSet, codim: usize, members: &[Member]) -> Result<Assembled> {
    let terms = idx.len();
    let flat = terms * codim;
    let m = idx.m();
    let count = members.len();
    let r0 = members[0].space.dim();
    let mut offsets = Vec::with_capacity(count.saturating_sub(1));
    let mut width = 0;
    for mem in &members[1..] {
        offsets.push(width);
        width += mem.space.dim();
    }
    let rows = count * (count - 1) * flat;
    let mut m0 = DMatrix::zeros(rows, r0);
    let mut rest = DMatrix::zeros(rows, width);
    let mut c = DVector::zeros(rows);

    let mut row = 0;
    let mut own = DVector::zeros(flat);
    let mut other = DVector::zeros(flat);
    for a in 0..count {
        for b in 0..count {
            if a == b {
                continue;
            }
            let (ta, tb) = (members[a].t, members[b].t);
            let dist = (ta - tb).norm();
            if dist <= COINCIDENT_TOL * (1.0 + ta.norm().max(tb.norm())) {
                return Err(Error::DegenerateCluster);
            }
            let h = ta - tb;
            for (ai, alpha) in idx.iter().enumerate() {
                let order = idx.order(ai);
                let scale = dist.powi((m - order) as i32);
                let w = idx.derivative_weights(alpha, &h);
                for l in 0..codim {
                    own.fill(0.0);
                    other.fill(0.0);
                    own[l * terms + ai] = idx.factorial(ai) / scale;
                    for bi in 0..terms {
                        other[l * terms + bi] = -w[bi] / scale;
                    }
                    let sa = members[a].space;
                    let sb = members[b].space;
                    c[row] = own.dot(&sa.base) + other.dot(&sb.base);
                    place(&mut m0, &mut rest, &offsets, a, row, &own, sa);
                    place(&mut m0, &mut rest, &offsets, b, row, &other, sb);
                    row += 1;
                }
            }
        }
    }
    Ok(Assembled { m0, rest, c, offsets })
}

fn place(
    m0: &mut DMatrix<f64>,
    rest: &mut DMatrix<f64>,
    offsets: &[usize],
    member: usize,
    row: usize,
    coeffs: &DVector<f64>,
    space: &AffineSpace,
) {
    let dim = space.dim();
    if dim == 0 {
        return;
    }
    let proj = space.basis.tr_mul(coeffs);
    if member == 0 {
        for j in 0..dim {
            m0[(row, j)] += proj[j];
        }
    } else {
        let off = offsets[member - 1];
        for j in 0..dim {
            rest[(row, off + j)] += proj[j];
        }
    }
}

/// Eliminates the non-anchor unknowns by projecting onto the orthogonal complement of their range.
pub(crate) fn reduce(asm: &Assembled) -> Reduced {
    if asm.rest.ncols() == 0 {
        return Reduced { k: asm.m0.clone(), c: asm.c.clone(), scale: asm.m0.norm() };
    }
    let (range, kappa) = range_basis(&asm.rest);
    let k = &asm.m0 - &range * range.tr_mul(&asm.m0);
    let c = &asm.c - &range * range.tr_mul(&asm.c);
    Reduced { k, c, scale: asm.m0.norm() * kappa }
}

/// Orthonormal basis of the numerical range and the condition number of the kept part.
fn range_basis(a: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let svd = thin_svd(a);
    let smax = svd.max();
    let kept: Vec<usize> = (0..svd.s.len()).filter(|&k| svd.s[k] > 1e-12 * smax && svd.s[k] > 0.0).collect();
    if kept.is_empty() {
        return (DMatrix::zeros(a.nrows(), 0), 1.0);
    }
    let smin = kept.iter().map(|&k| svd.s[k]).fold(f64::INFINITY, f64::min);
    let cols: Vec<DVector<f64>> = kept.iter().map(|&k| svd.u.column(k).into_owned()).collect();
    (DMatrix::from_columns(&cols), smax / smin)
}

/// Minimum of `𝒬` over the fibers of the cluster, with the anchor jet held fixed.
#[derive(Clone, Debug)]
pub struct QminValue {
    pub value: f64,
    /// Minimizing jets for the cluster members, in cluster order.
    pub witnesses: Vec<JetPoly>,
}

/// `𝒬_min` at `anchor` in frame `frame` for the fixed jet `p0` and the given cluster.
pub fn qmin(bundle: &MBundle, frame: usize, anchor: usize, p0: &JetPoly, cluster: &[usize]) -> Result<QminValue> {
    let f0 = bundle.fiber(anchor, frame);
    let s0 = f0.space().ok_or_else(|| Error::Precondition("anchor fiber is EMPTY".into()))?;
    let p0 = p0.recentered(f0.center());
    let flat0 = p0.flat();
    if s0.distance(&flat0) > 1e-9 * (1.0 + flat0.norm()) {
        return Err(Error::Precondition("p0 is not in the anchor fiber".into()));
    }
    let mut members = vec![Member { t: f0.center(), space: s0 }];
    for &j in cluster {
        if j == anchor {
            return Err(Error::Precondition("cluster must not contain the anchor".into()));
        }
        let fj = bundle.fiber(j, frame);
        let sj = fj.space().ok_or_else(|| Error::Precondition(format!("fiber of sample {j} is EMPTY")))?;
        members.push(Member { t: fj.center(), space: sj });
    }
    let idx = f0.indices().clone();
    let asm = assemble(&idx, f0.codim(), &members)?;
    let a0 = s0.coordinates(&flat0);
    let fixed = &asm.m0 * &a0 + &asm.c;
    let rest_sol = if asm.rest.ncols() == 0 {
        DVector::zeros(0)
    } else {
        let svd = thin_svd(&asm.rest);
        let cut = 1e-12 * svd.max();
        let mut x = DVector::zeros(asm.rest.ncols());
        for (k, &s) in svd.s.iter().enumerate() {
            if s > cut && s > 0.0 {
                x += svd.vt.row(k).transpose() * (svd.u.column(k).dot(&fixed) / -s);
            }
        }
        x
    };
    let value = (fixed + &asm.rest * &rest_sol).norm_squared();
    let mut witnesses = Vec::with_capacity(cluster.len());
    for (k, &j) in cluster.iter().enumerate() {
        let fj = bundle.fiber(j, frame);
        let sj = fj.space().expect("checked above");
        let off = asm.offsets[k];
        let aj = rest_sol.rows(off, sj.dim()).into_owned();
        witnesses.push(fj.jet(&sj.at(&aj)));
    }
    Ok(QminValue { value, witnesses })
}
