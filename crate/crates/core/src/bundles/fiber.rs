use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::gram_schmidt;
use crate::jets::{JetPoly, MultiIndexSet};
use crate::linalg::thin_svd;

/// Inconsistent constraint systems are detected when the least-squares
/// residual exceeds this multiple of the data scale.
pub const INCONSISTENT_TOL: f64 = 1e-8;

/// `base + span(basis)` in flat coefficient space. Basis columns are orthonormal.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSpace {
    pub base: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl AffineSpace {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Point of the space at parameter `a`.
    pub fn at(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.base + &self.basis * a
    }

    /// Orthogonal projection of `p` onto the space.
    pub fn project(&self, p: &DVector<f64>) -> DVector<f64> {
        let off = p - &self.base;
        &self.base + &self.basis * self.basis.tr_mul(&off)
    }

    pub fn distance(&self, p: &DVector<f64>) -> f64 {
        (p - self.project(p)).norm()
    }

    /// Parameters of the orthogonal projection of `p`.
    pub fn coordinates(&self, p: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(&(p - &self.base))
    }

    /// True when `other ⊆ self` within `tol`.
    pub fn contains_space(&self, other: &AffineSpace, tol: f64) -> bool {
        if self.distance(&other.base) > tol {
            return false;
        }
        (0..other.dim()).all(|j| {
            let v = other.basis.column(j).into_owned();
            (&v - &self.basis * self.basis.tr_mul(&v)).norm() <= tol
        })
    }
}

/// One fiber `H^Q(x)`: an affine space of jets centered at `x_Q`, or EMPTY.
#[derive(Clone, Debug)]
pub struct AffineJetFiber {
    idx: Arc<MultiIndexSet>,
    codim: usize,
    center: DVector<f64>,
    space: Option<AffineSpace>,
}

impl AffineJetFiber {
    pub fn empty(d: usize, m: usize, codim: usize, center: DVector<f64>) -> Self {
        Self { idx: MultiIndexSet::shared(d, m), codim, center, space: None }
    }

    pub fn from_space(d: usize, m: usize, codim: usize, center: DVector<f64>, space: Option<AffineSpace>) -> Self {
        Self { idx: MultiIndexSet::shared(d, m), codim, center, space }
    }

    /// The whole jet space, with no constraints.
    pub fn full(d: usize, m: usize, codim: usize, center: DVector<f64>) -> Self {
        let idx = MultiIndexSet::shared(d, m);
        let dim = idx.len() * codim;
        let space = AffineSpace { base: DVector::zeros(dim), basis: DMatrix::identity(dim, dim) };
        Self { idx, codim, center, space: Some(space) }
    }

    /// Solution set of `C·p = rhs`; EMPTY when inconsistent.
    pub fn from_constraints(
        d: usize,
        m: usize,
        codim: usize,
        center: DVector<f64>,
        c: &DMatrix<f64>,
        rhs: &DVector<f64>,
    ) -> Result<Self> {
        let idx = MultiIndexSet::shared(d, m);
        let dim = idx.len() * codim;
        if c.ncols() != dim || c.nrows() != rhs.len() {
            return Err(Error::Dimension("constraint matrix does not match the jet space".into()));
        }
        let space = solve_affine(c, rhs, dim);
        Ok(Self { idx, codim, center, space })
    }

    /// Jets with `P(x_Q) = value`.
    pub fn proper(d: usize, m: usize, center: DVector<f64>, value: &DVector<f64>) -> Self {
        let idx = MultiIndexSet::shared(d, m);
        let codim = value.len();
        let k = idx.len();
        let dim = k * codim;
        let mut base = DVector::zeros(dim);
        let mut cols = Vec::with_capacity(dim - codim);
        for l in 0..codim {
            base[l * k] = value[l];
            for row in 1..k {
                let mut e = DVector::zeros(dim);
                e[l * k + row] = 1.0;
                cols.push(e);
            }
        }
        let basis = if cols.is_empty() { DMatrix::zeros(dim, 0) } else { DMatrix::from_columns(&cols) };
        Self { idx, codim, center, space: Some(AffineSpace { base, basis }) }
    }

    pub fn d(&self) -> usize {
        self.idx.d()
    }

    pub fn m(&self) -> usize {
        self.idx.m()
    }

    pub fn codim(&self) -> usize {
        self.codim
    }

    pub fn indices(&self) -> &Arc<MultiIndexSet> {
        &self.idx
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn space(&self) -> Option<&AffineSpace> {
        self.space.as_ref()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_none()
    }

    /// Fiber dimension, `None` for EMPTY.
    pub fn dim(&self) -> Option<usize> {
        self.space.as_ref().map(|s| s.dim())
    }

    pub fn with_space(&self, space: Option<AffineSpace>) -> Self {
        Self { idx: self.idx.clone(), codim: self.codim, center: self.center.clone(), space }
    }

    pub fn jet(&self, flat: &DVector<f64>) -> JetPoly {
        JetPoly::from_flat(self.d(), self.m(), self.codim, self.center.clone(), flat).expect("flat length matches fiber layout")
    }

    pub fn base_jet(&self) -> Option<JetPoly> {
        self.space.as_ref().map(|s| self.jet(&s.base))
    }

    pub fn contains(&self, p: &JetPoly, tol: f64) -> bool {
        match &self.space {
            None => false,
            Some(s) => {
                let p = if (p.center() - &self.center).norm() > 0.0 { p.recentered(&self.center) } else { p.clone() };
                s.distance(&p.flat()) <= tol * (1.0 + p.flat().norm())
            }
        }
    }
}

/// `A ∩ B` for fibers with the same center and layout.
pub fn intersect_fiber(a: &AffineJetFiber, b: &AffineJetFiber) -> Result<AffineJetFiber> {
    if a.idx.d() != b.idx.d() || a.idx.m() != b.idx.m() || a.codim != b.codim {
        return Err(Error::Dimension("fibers live in different jet spaces".into()));
    }
    if (a.center() - b.center()).norm() > 1e-12 * (1.0 + a.center().norm()) {
        return Err(Error::Input("fibers are anchored at different points".into()));
    }
    let (sa, sb) = match (&a.space, &b.space) {
        (Some(x), Some(y)) => (x, y),
        _ => return Ok(a.with_space(None)),
    };
    let dim = sa.base.len();
    // Constraints of B: its orthogonal complement applied to (p − base_b) vanishes.
    let comp_b = DMatrix::identity(dim, dim) - &sb.basis * sb.basis.transpose();
    // p = base_a + basis_a·u, so comp_b·basis_a·u = comp_b·(base_b − base_a).
    let lhs = &comp_b * &sa.basis;
    let rhs = &comp_b * (&sb.base - &sa.base);
    let scale = 1.0 + sa.base.norm() + sb.base.norm();
    let reduced = match solve_affine(&lhs, &rhs, sa.dim()) {
        Some(s) => s,
        None => return Ok(a.with_space(None)),
    };
    let base = sa.at(&reduced.base);
    if sb.distance(&base) > INCONSISTENT_TOL * scale {
        return Ok(a.with_space(None));
    }
    let basis = gram_schmidt(&(&sa.basis * &reduced.basis), 1e-10);
    let basis = if basis.ncols() == 0 { DMatrix::zeros(dim, 0) } else { basis };
    Ok(a.with_space(Some(AffineSpace { base, basis })))
}

/// Minimum-norm solution and null space of `C·x = rhs`, or `None` when inconsistent.
pub(crate) fn solve_affine(c: &DMatrix<f64>, rhs: &DVector<f64>, dim: usize) -> Option<AffineSpace> {
    if c.nrows() == 0 || dim == 0 {
        return Some(AffineSpace { base: DVector::zeros(dim), basis: DMatrix::identity(dim, dim) });
    }
    let svd = thin_svd(c);
    let (u, vt) = (&svd.u, &svd.vt);
    let smax = svd.max();
    let cut = smax * 1e-10;
    let mut x = DVector::zeros(dim);
    let mut rank = 0;
    let mut pinned = vec![false; vt.nrows()];
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cut && s > 0.0 {
            rank += 1;
            pinned[k] = true;
            let coef = u.column(k).dot(rhs) / s;
            x += vt.row(k).transpose() * coef;
        }
    }
    let resid = (c * &x - rhs).norm();
    if resid > INCONSISTENT_TOL * (1.0 + rhs.norm()) {
        return None;
    }
    let mut null_cols: Vec<DVector<f64>> = Vec::new();
    let rows: Vec<DVector<f64>> = (0..vt.nrows()).filter(|&k| pinned[k]).map(|k| vt.row(k).transpose()).collect();
    let row_space = if rows.is_empty() { DMatrix::zeros(dim, 0) } else { DMatrix::from_columns(&rows) };
    let proj = DMatrix::identity(dim, dim) - &row_space * row_space.transpose();
    for j in 0..dim {
        let mut v = proj.column(j).into_owned();
        for _ in 0..2 {
            for u in &null_cols {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let r = v.norm();
        if r > 1e-6 {
            null_cols.push(v / r);
        }
    }
    debug_assert_eq!(rank + null_cols.len(), dim);
    let basis = if null_cols.is_empty() { DMatrix::zeros(dim, 0) } else { DMatrix::from_columns(&null_cols) };
    Some(AffineSpace { base: x, basis })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_and_gradient_constraints_leave_the_square() {
        let center = DVector::zeros(1);
        let value = AffineJetFiber::proper(1, 2, center.clone(), &DVector::zeros(1));
        let c = DMatrix::from_row_slice(1, 3, &[0.0, 1.0, 0.0]);
        let grad = AffineJetFiber::from_constraints(1, 2, 1, center, &c, &DVector::zeros(1)).unwrap();
        let both = intersect_fiber(&value, &grad).unwrap();
        let s = both.space().unwrap();
        assert_eq!(s.dim(), 1);
        assert!(s.base.norm() < 1e-14);
        let dir = s.basis.column(0);
        assert!((dir[2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_constraints_are_empty() {
        let center = DVector::zeros(1);
        let a = AffineJetFiber::proper(1, 1, center.clone(), &DVector::from_element(1, 0.0));
        let b = AffineJetFiber::proper(1, 1, center, &DVector::from_element(1, 1.0));
        assert!(intersect_fiber(&a, &b).unwrap().is_empty());
    }

    #[test]
    fn proper_fiber_dimension() {
        let f = AffineJetFiber::proper(2, 2, DVector::zeros(2), &DVector::zeros(3));
        assert_eq!(f.dim(), Some(3 * 5));
    }
}
