use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// `A = U·diag(s)·Vᵀ` with `k = min(rows, cols)` singular values in decreasing order.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub vt: DMatrix<f64>,
}

impl ThinSvd {
    pub fn max(&self) -> f64 {
        self.s.iter().copied().fold(0.0, f64::max)
    }
}

/// Thin SVD through a QR factor of the taller side. Falls back to a symmetric
/// eigensolver when the factorization does not reproduce its input.
pub(crate) fn thin_svd(a: &DMatrix<f64>) -> ThinSvd {
    if a.nrows() < a.ncols() {
        let t = thin_svd(&a.transpose());
        return ThinSvd { u: t.vt.transpose(), s: t.s, vt: t.u.transpose() };
    }
    let k = a.ncols();
    if k == 0 {
        return ThinSvd { u: DMatrix::zeros(a.nrows(), 0), s: DVector::zeros(0), vt: DMatrix::zeros(0, 0) };
    }
    let qr = a.clone().qr();
    let (q, r) = (qr.q(), qr.r());
    let small = square_svd(&r);
    sorted(ThinSvd { u: q * small.u, s: small.s, vt: small.vt })
}

fn square_svd(r: &DMatrix<f64>) -> ThinSvd {
    let scale = r.norm();
    let svd = r.clone().svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let rebuilt = &u * DMatrix::from_diagonal(&svd.singular_values) * &vt;
    if (rebuilt - r).norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return ThinSvd { u, s: svd.singular_values, vt };
    }
    let e = SymmetricEigen::new(r.tr_mul(r));
    let k = r.ncols();
    let s = e.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut u = DMatrix::zeros(k, k);
    for j in 0..k {
        if s[j] > 1e-14 * scale {
            u.set_column(j, &(r * e.eigenvectors.column(j) / s[j]));
        }
    }
    ThinSvd { u, s, vt: e.eigenvectors.transpose() }
}

fn sorted(svd: ThinSvd) -> ThinSvd {
    let mut order: Vec<usize> = (0..svd.s.len()).collect();
    order.sort_by(|&x, &y| svd.s[y].total_cmp(&svd.s[x]));
    ThinSvd {
        u: DMatrix::from_fn(svd.u.nrows(), order.len(), |i, j| svd.u[(i, order[j])]),
        s: DVector::from_fn(order.len(), |j, _| svd.s[order[j]]),
        vt: DMatrix::from_fn(order.len(), svd.vt.ncols(), |i, j| svd.vt[(order[i], j)]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rebuild(svd: &ThinSvd) -> DMatrix<f64> {
        &svd.u * DMatrix::from_diagonal(&svd.s) * &svd.vt
    }

    #[test]
    fn tall_rank_one_stack_is_exact() {
        let a = DMatrix::from_column_slice(36, 2, &[
            0.4902903378454599, 0.48076923076923095, 0.09615384615384606, -0.49029033784545994,
            0.48076923076923117, 0.09615384615384596, -0.9805806756909202, -0.48076923076923095,
            -0.09615384615384615, -0.4902903378454598, 1.2433190006327475e-16, -1.8527157057601207e-16,
            0.9805806756909203, -0.48076923076923117, -0.09615384615384596, 0.4902903378454599,
            -1.2433190006327475e-16, 1.8527157057601207e-16, -0.49029033784545983, 0.4807692307692303,
            0.0961538461538463, 0.49029033784546056, 0.4807692307692303, 0.09615384615384592,
            0.9805806756909203, -0.48076923076923095, -0.0961538461538462, 0.4902903378454606,
            -4.3268630485765977e-16, -1.3574107410353804e-16, -0.9805806756909202, -0.4807692307692303,
            -0.09615384615384592, -0.49029033784546, 4.3268630485765977e-16, 1.3574107410353804e-16,
            0.09805806756909206, 0.09615384615384612, 0.019230769230769273, -0.0980580675690922,
            0.09615384615384595, 0.019230769230769496, -0.19611613513818404, -0.09615384615384609,
            -0.019230769230769496, -0.098058067569092, 3.6146967968791203e-19, 8.547023754963049e-17,
            0.19611613513818377, -0.09615384615384595, -0.019230769230769496, 0.09805806756909191,
            -3.6146967968791203e-19, -8.547023754963049e-17, -0.09805806756909183, 0.09615384615384606,
            0.01923076923076872, 0.09805806756909216, 0.0961538461538461, 0.01923076923076905,
            0.19611613513818377, -0.09615384615384595, -0.01923076923076883, 0.09805806756909184,
            1.6310453280243507e-16, 1.5494219411335585e-16, -0.19611613513818404, -0.0961538461538461,
            -0.01923076923076905, -0.09805806756909191, -1.6310453280243507e-16, -1.5494219411335585e-16,
        ]);
        let svd = thin_svd(&a);
        assert!((rebuild(&svd) - &a).norm() < 1e-13);
        assert!(svd.s[1] < 1e-14);
    }

    #[test]
    fn wide_and_square_inputs_round_trip() {
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.0, -1.0, 0.5, 0.0, 3.0, 1.0]);
        for m in [a.clone(), a.transpose(), a.tr_mul(&a)] {
            let svd = thin_svd(&m);
            assert!((rebuild(&svd) - &m).norm() < 1e-12);
            assert!(svd.s.as_slice().windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
