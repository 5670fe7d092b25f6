use nalgebra::{DMatrix, DVector};

use super::{Jet, JetPoly, TruncPoly};
use crate::error::{Error, Result};
use crate::geometry::Frame;

/// Normalized minors at or below this value count as singular.
pub const COMPAT_TOL: f64 = 1e-8;

/// Normalized minors below this value are flagged as marginal.
pub const MARGINAL_TOL: f64 = 1e-5;

/// Outcome of the graph-compatibility test between a jet and a frame.
#[derive(Clone, Debug)]
pub struct Compatibility {
    pub compatible: bool,
    /// Set when the minor is nonsingular but close to the cutoff.
    pub marginal: bool,
    /// `|det|` of the top `d × d` block divided by the product of its column norms in `A`.
    pub normalized_det: f64,
    pub minor: DMatrix<f64>,
}

/// Tests whether the tangent plane of `jet` is a graph over the first `d` axes of `r`.
pub fn compatible(jet: &Jet, r: &Frame) -> Result<Compatibility> {
    check_frames(&jet.frame, r)?;
    let d = jet.frame.d();
    let n = jet.frame.n();
    let grad = jet.poly.gradient(jet.poly.center());
    let mut stacked = DMatrix::zeros(n, d);
    stacked.rows_mut(0, d).fill_with_identity();
    stacked.rows_mut(d, n - d).copy_from(&grad);
    let a = r.matrix().tr_mul(&(jet.frame.matrix() * stacked));
    let minor = a.rows(0, d).into_owned();
    let scale: f64 = (0..d).map(|j| a.column(j).norm()).product();
    let normalized_det = minor.determinant().abs() / scale;
    let ok = normalized_det > COMPAT_TOL;
    Ok(Compatibility {
        compatible: ok,
        marginal: ok && normalized_det < MARGINAL_TOL,
        normalized_det,
        minor,
    })
}

/// Expresses the graph germ of `jet` as a jet in frame `r` at the same basepoint.
///
/// The new polynomial solves `A₃ s + A₄ g(s) = P(A₁ s + A₂ g(s))` with
/// `QᵀR = [[A₁, A₂], [A₃, A₄]]` by fixed-point iteration in truncated power series.
pub fn realize_jet(jet: &Jet, r: &Frame) -> Result<Jet> {
    let comp = compatible(jet, r)?;
    if !comp.compatible {
        return Err(Error::Incompatible(comp.normalized_det));
    }
    let d = jet.frame.d();
    let n = jet.frame.n();
    let k = n - d;
    let poly = &jet.poly;
    let idx = poly.indices().clone();
    let m = idx.m();

    let mm = jet.frame.matrix().tr_mul(r.matrix());
    let a1 = mm.view((0, 0), (d, d)).into_owned();
    let a2 = mm.view((0, d), (d, k)).into_owned();
    let a3 = mm.view((d, 0), (k, d)).into_owned();
    let a4 = mm.view((d, d), (k, k)).into_owned();

    let (xr, xr_perp) = r.split(&jet.basepoint);
    let c = poly.center();

    let lin = poly.gradient(c) * &a2 - &a4;
    let lin_inv = lin
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("implicit-function Jacobian is singular".into()))?;

    let vars: Vec<TruncPoly> = (0..d).map(|i| TruncPoly::variable(&idx, i)).collect();
    // s(h) = x_R + h
    let s: Vec<TruncPoly> = (0..d)
        .map(|i| &TruncPoly::constant(&idx, xr[i]) + &vars[i])
        .collect();
    let mut g: Vec<TruncPoly> = (0..k).map(|j| TruncPoly::constant(&idx, xr_perp[j])).collect();

    for _ in 0..(m + 2) {
        let phi = residual(poly, &a1, &a2, &a3, &a4, &s, &g, c);
        let mut next = g.clone();
        for (j, nj) in next.iter_mut().enumerate() {
            for (l, pl) in phi.iter().enumerate() {
                nj.axpy(-lin_inv[(j, l)], pl);
            }
        }
        g = next;
    }

    let mut coeffs = DMatrix::zeros(idx.len(), k);
    for (j, gj) in g.iter().enumerate() {
        coeffs.set_column(j, gj.coeffs());
    }
    let new_poly = JetPoly::from_parts(idx, k, xr, coeffs);
    Ok(Jet { frame: r.clone(), poly: new_poly, basepoint: jet.basepoint.clone() })
}

#[allow(clippy::too_many_arguments)]
fn residual(
    poly: &JetPoly,
    a1: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    a3: &DMatrix<f64>,
    a4: &DMatrix<f64>,
    s: &[TruncPoly],
    g: &[TruncPoly],
    center: &DVector<f64>,
) -> Vec<TruncPoly> {
    let idx = poly.indices();
    let d = s.len();
    let k = g.len();
    // u = A₁ s + A₂ g − c, the argument of P relative to its center.
    let u: Vec<TruncPoly> = (0..d)
        .map(|i| {
            let mut acc = TruncPoly::constant(idx, -center[i]);
            for (j, sj) in s.iter().enumerate() {
                acc.axpy(a1[(i, j)], sj);
            }
            for (j, gj) in g.iter().enumerate() {
                acc.axpy(a2[(i, j)], gj);
            }
            acc
        })
        .collect();
    let powers: Vec<Vec<TruncPoly>> = u
        .iter()
        .map(|ui| (0..=idx.m()).map(|e| ui.pow(e)).collect())
        .collect();
    let mut out: Vec<TruncPoly> = (0..k).map(|_| TruncPoly::zero(idx)).collect();
    for (row, beta) in idx.iter().enumerate() {
        let mut mono = TruncPoly::constant(idx, 1.0);
        for (i, &b) in beta.iter().enumerate() {
            if b > 0 {
                mono = &mono * &powers[i][b as usize];
            }
        }
        for (l, ol) in out.iter_mut().enumerate() {
            let c = poly.coeffs()[(row, l)];
            if c != 0.0 {
                ol.axpy(c, &mono);
            }
        }
    }
    for (l, ol) in out.iter_mut().enumerate() {
        for (j, sj) in s.iter().enumerate() {
            ol.axpy(-a3[(l, j)], sj);
        }
        for (j, gj) in g.iter().enumerate() {
            ol.axpy(-a4[(l, j)], gj);
        }
    }
    out
}

fn check_frames(q: &Frame, r: &Frame) -> Result<()> {
    if q.n() != r.n() || q.d() != r.d() {
        return Err(Error::Dimension("frames must share n and d".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::grass_dist;

    fn rot(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    fn line_jet(slope: f64) -> Jet {
        let f = Frame::identity(2, 1).unwrap();
        let p = JetPoly::new(1, 1, DVector::zeros(1), DMatrix::from_column_slice(2, 1, &[0.0, slope])).unwrap();
        Jet::new(f, p, DVector::zeros(2)).unwrap()
    }

    #[test]
    fn swap_frame_is_incompatible_with_flat_jet() {
        let swap = Frame::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 1).unwrap();
        let c = compatible(&line_jet(0.0), &swap).unwrap();
        assert!(!c.compatible);
        assert!(realize_jet(&line_jet(0.0), &swap).is_err());
    }

    #[test]
    fn quarter_turn_minor() {
        let r = Frame::new(rot(std::f64::consts::FRAC_PI_2), 1).unwrap();
        let c = compatible(&line_jet(1.0), &r).unwrap();
        assert!(c.compatible);
        assert!((c.minor[(0, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((c.normalized_det - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn diagonal_line_becomes_flat() {
        let r = Frame::new(rot(std::f64::consts::FRAC_PI_4), 1).unwrap();
        let j = realize_jet(&line_jet(1.0), &r).unwrap();
        assert!(j.poly.coeffs().norm() < 1e-12);
    }

    #[test]
    fn same_frame_is_identity() {
        let f = Frame::new(rot(0.3), 1).unwrap();
        let base = DVector::from_vec(vec![0.4, 0.9]);
        let (xq, xp) = f.split(&base);
        let p = JetPoly::new(1, 3, xq, DMatrix::from_column_slice(4, 1, &[xp[0], 0.2, -0.7, 0.05])).unwrap();
        let jet = Jet::new(f.clone(), p, base).unwrap();
        let back = realize_jet(&jet, &f).unwrap();
        assert!((back.poly.coeffs() - jet.poly.coeffs()).norm() < 1e-13);
    }

    #[test]
    fn parabola_germ_matches_after_rotation() {
        let f = Frame::identity(2, 1).unwrap();
        let p = JetPoly::new(1, 3, DVector::zeros(1), DMatrix::from_column_slice(4, 1, &[0.0, 0.3, 0.5, 0.0])).unwrap();
        let jet = Jet::new(f, p.clone(), DVector::zeros(2)).unwrap();
        let r = Frame::new(rot(0.4), 1).unwrap();
        let out = realize_jet(&jet, &r).unwrap();
        for &h in &[1e-2, 5e-3] {
            let y = DVector::from_vec(vec![h, p.eval(&DVector::from_element(1, h))[0]]);
            let (yr, yp) = r.split(&y);
            let err = (out.poly.eval(&yr) - yp).norm();
            assert!(err < 10.0 * h.powi(4), "germ error {err} at h={h}");
        }
        let t0 = jet.tangent_plane().unwrap();
        let t1 = out.tangent_plane().unwrap();
        assert!(grass_dist(&t0, &t1) < 1e-12);
    }
}
