//! Polynomial jets `P: ℝ^d → ℝ^{n−d}` of degree at most `m`.
//!
//! Coefficients are monomial coefficients about a center `c`, i.e.
//! `P(t) = Σ_α c_α (t − c)^α`, with multi-indices in graded lexicographic order.

mod multi_index;
mod realize;
mod series;

pub use multi_index::{binomial, MultiIndexSet};
pub use realize::{compatible, realize_jet, Compatibility, COMPAT_TOL, MARGINAL_TOL};
pub use series::TruncPoly;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{oplus, Frame, GrPlane};

/// Polynomial map in `d` variables with `codim` outputs, stored about `center`.
#[derive(Clone, Debug)]
pub struct JetPoly {
    idx: Arc<MultiIndexSet>,
    codim: usize,
    center: DVector<f64>,
    /// `num_terms × codim`, column `l` holds output `l`.
    coeffs: DMatrix<f64>,
}

impl JetPoly {
    pub fn zeros(d: usize, m: usize, codim: usize, center: DVector<f64>) -> Self {
        let idx = MultiIndexSet::shared(d, m);
        let k = idx.len();
        Self::from_parts(idx, codim, center, DMatrix::zeros(k, codim))
    }

    pub fn new(d: usize, m: usize, center: DVector<f64>, coeffs: DMatrix<f64>) -> Result<Self> {
        let idx = MultiIndexSet::shared(d, m);
        if center.len() != d || coeffs.nrows() != idx.len() {
            return Err(Error::Dimension(format!(
                "jet with d={d}, m={m} needs a length-{d} center and {} coefficient rows",
                idx.len()
            )));
        }
        let codim = coeffs.ncols();
        Ok(Self::from_parts(idx, codim, center, coeffs))
    }

    pub(crate) fn from_parts(idx: Arc<MultiIndexSet>, codim: usize, center: DVector<f64>, coeffs: DMatrix<f64>) -> Self {
        debug_assert_eq!(coeffs.nrows(), idx.len());
        debug_assert_eq!(coeffs.ncols(), codim);
        Self { idx, codim, center, coeffs }
    }

    /// Builds a jet from a flat coefficient vector (output-major).
    pub fn from_flat(d: usize, m: usize, codim: usize, center: DVector<f64>, flat: &DVector<f64>) -> Result<Self> {
        let idx = MultiIndexSet::shared(d, m);
        if flat.len() != idx.len() * codim || center.len() != d {
            return Err(Error::Dimension("flat coefficient vector has the wrong length".into()));
        }
        let coeffs = DMatrix::from_column_slice(idx.len(), codim, flat.as_slice());
        Ok(Self::from_parts(idx, codim, center, coeffs))
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

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn coeffs(&self) -> &DMatrix<f64> {
        &self.coeffs
    }

    pub fn indices(&self) -> &Arc<MultiIndexSet> {
        &self.idx
    }

    /// Coefficients flattened output-major (`l * num_terms + k`).
    pub fn flat(&self) -> DVector<f64> {
        DVector::from_column_slice(self.coeffs.as_slice())
    }

    pub fn eval(&self, t: &DVector<f64>) -> DVector<f64> {
        let zero = vec![0u8; self.d()];
        self.eval_derivative_unchecked(&zero, t)
    }

    /// `∂^α P(t)`; fails when `|α| > m`.
    pub fn eval_derivative(&self, alpha: &[u8], t: &DVector<f64>) -> Result<DVector<f64>> {
        if alpha.len() != self.d() || t.len() != self.d() {
            return Err(Error::Dimension("multi-index or point has the wrong length".into()));
        }
        let order: usize = alpha.iter().map(|&a| a as usize).sum();
        if order > self.m() {
            return Err(Error::Input(format!("derivative order {order} exceeds jet degree {}", self.m())));
        }
        Ok(self.eval_derivative_unchecked(alpha, t))
    }

    fn eval_derivative_unchecked(&self, alpha: &[u8], t: &DVector<f64>) -> DVector<f64> {
        let w = self.idx.derivative_weights(alpha, &(t - &self.center));
        self.coeffs.tr_mul(&w)
    }

    /// Gradient at `t` as a `codim × d` matrix.
    pub fn gradient(&self, t: &DVector<f64>) -> DMatrix<f64> {
        let d = self.d();
        let mut g = DMatrix::zeros(self.codim, d);
        for i in 0..d {
            let mut a = vec![0u8; d];
            a[i] = 1;
            if self.m() == 0 {
                continue;
            }
            g.set_column(i, &self.eval_derivative_unchecked(&a, t));
        }
        g
    }

    /// Same polynomial re-expanded about another center.
    pub fn recentered(&self, c: &DVector<f64>) -> JetPoly {
        let k = self.idx.len();
        let mut out = DMatrix::zeros(k, self.codim);
        for (row, alpha) in self.idx.iter().enumerate() {
            let w = self.idx.derivative_weights(alpha, &(c - &self.center));
            let val = self.coeffs.tr_mul(&w);
            let fact = self.idx.factorial(row);
            for l in 0..self.codim {
                out[(row, l)] = val[l] / fact;
            }
        }
        Self::from_parts(self.idx.clone(), self.codim, c.clone(), out)
    }
}

/// A jet `(Q, P)` attached to a basepoint.
#[derive(Clone, Debug)]
pub struct Jet {
    pub frame: Frame,
    pub poly: JetPoly,
    pub basepoint: DVector<f64>,
}

impl Jet {
    /// Checks that `P` is centered at `x_Q` and passes through `x_Q^⊥`.
    pub fn new(frame: Frame, poly: JetPoly, basepoint: DVector<f64>) -> Result<Self> {
        if poly.d() != frame.d() || poly.codim() != frame.codim() || basepoint.len() != frame.n() {
            return Err(Error::Dimension("jet, frame and basepoint disagree in dimension".into()));
        }
        let (xq, xp) = frame.split(&basepoint);
        let scale = 1.0 + basepoint.norm();
        if (poly.center() - &xq).norm() > 1e-9 * scale {
            return Err(Error::Input("jet must be centered at the basepoint's Q-coordinates".into()));
        }
        if (poly.eval(&xq) - xp).norm() > 1e-9 * scale {
            return Err(Error::Input("jet is not proper at its basepoint".into()));
        }
        Ok(Self { frame, poly, basepoint })
    }

    /// Candidate tangent plane `Q ⊕ ∇P(x_Q)`.
    pub fn tangent_plane(&self) -> Result<GrPlane> {
        oplus(&self.frame, &self.poly.gradient(self.poly.center()))
    }
}

/// One `(i, j)` block of the quadratic form, evaluated at `t_i`:
/// `Σ_{|α|≤m} Σ_l [∂^α(P_i − P_j)(t_i) / |t_i − t_j|^{m−|α|}]²`.
pub fn taylor_residual(p_i: &JetPoly, p_j: &JetPoly, t_i: &DVector<f64>, t_j: &DVector<f64>) -> Result<f64> {
    if p_i.d() != p_j.d() || p_i.m() != p_j.m() || p_i.codim() != p_j.codim() {
        return Err(Error::Dimension("jets live in different spaces".into()));
    }
    let dist = (t_i - t_j).norm();
    if dist == 0.0 {
        return Err(Error::DegenerateCluster);
    }
    let m = p_i.m();
    let mut total = 0.0;
    for alpha in p_i.idx.iter() {
        let order: usize = alpha.iter().map(|&a| a as usize).sum();
        let diff = p_i.eval_derivative_unchecked(alpha, t_i) - p_j.eval_derivative_unchecked(alpha, t_i);
        total += diff.norm_squared() / dist.powi(2 * (m - order) as i32);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(coeffs: &[f64], center: f64) -> JetPoly {
        let m = coeffs.len() - 1;
        JetPoly::new(1, m, DVector::from_element(1, center), DMatrix::from_column_slice(m + 1, 1, coeffs)).unwrap()
    }

    #[test]
    fn second_power_derivative() {
        let p = scalar(&[0.0, 0.0, 1.0], 0.0);
        let v = p.eval_derivative(&[1], &DVector::from_element(1, 3.0)).unwrap();
        assert!((v[0] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_above_degree_fails() {
        let p = scalar(&[1.0, 2.0], 0.0);
        assert!(p.eval_derivative(&[2], &DVector::from_element(1, 0.0)).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let idx = MultiIndexSet::shared(2, 3);
        let coeffs = DMatrix::from_fn(idx.len(), 2, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.3 - 0.6);
        let p = JetPoly::new(2, 3, DVector::from_vec(vec![0.2, -0.1]), coeffs).unwrap();
        let t = DVector::from_vec(vec![0.5, 0.4]);
        let h = 1e-5;
        for i in 0..2 {
            let mut e = DVector::zeros(2);
            e[i] = h;
            let fd = (p.eval(&(&t + &e)) - p.eval(&(&t - &e))) / (2.0 * h);
            let mut a = vec![0u8; 2];
            a[i] = 1;
            let exact = p.eval_derivative(&a, &t).unwrap();
            assert!((fd - exact).norm() < 1e-8);
        }
    }

    #[test]
    fn recentering_preserves_values() {
        let p = scalar(&[1.0, -2.0, 0.5, 0.25], 0.3);
        let q = p.recentered(&DVector::from_element(1, -1.1));
        for &x in &[-2.0, 0.0, 0.7, 3.0] {
            let t = DVector::from_element(1, x);
            assert!((p.eval(&t) - q.eval(&t)).norm() < 1e-10);
        }
    }

    #[test]
    fn residual_of_offset_lines() {
        let pi = scalar(&[0.0, 0.0], 0.0);
        let pj = scalar(&[0.0, 1.0], 1.0);
        let r = taylor_residual(&pi, &pj, &DVector::from_element(1, 0.0), &DVector::from_element(1, 1.0)).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn residual_rejects_coincident_points() {
        let p = scalar(&[0.0, 1.0], 0.0);
        let t = DVector::from_element(1, 0.5);
        assert!(matches!(taylor_residual(&p, &p, &t, &t), Err(Error::DegenerateCluster)));
    }

    #[test]
    fn improper_jet_rejected() {
        let f = Frame::identity(2, 1).unwrap();
        let p = scalar(&[0.5, 0.0], 1.0);
        assert!(Jet::new(f, p, DVector::from_vec(vec![1.0, 1.0])).is_err());
    }
}
