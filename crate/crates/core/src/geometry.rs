//! Frames, Grassmannian planes and the constructions built on them.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Tolerance used when deciding that two planes are the same.
pub const PLANE_EQ_TOL: f64 = 1e-9;

/// Largest admissible deviation `‖QᵀQ − I‖` accepted by [`Frame::new`].
pub const ORTHO_REJECT_TOL: f64 = 1e-6;

/// Default neighbourhood radius for [`align_frames`].
pub const ALIGN_EPS0: f64 = 0.5;

/// An orthogonal `n × n` matrix with a split index `d`.
///
/// The first `d` columns span the independent coordinates, the remaining
/// `n − d` the dependent ones.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    q: DMatrix<f64>,
    d: usize,
}

impl Frame {
    /// Builds a frame, re-orthonormalizing `q` with modified Gram–Schmidt.
    pub fn new(q: DMatrix<f64>, d: usize) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return Err(Error::Dimension(format!("frame must be square, got {}x{}", n, q.ncols())));
        }
        if d == 0 || d >= n {
            return Err(Error::Dimension(format!("split index {d} outside 1..{n}")));
        }
        let dev = (q.transpose() * &q - DMatrix::identity(n, n)).norm();
        if !dev.is_finite() || dev > ORTHO_REJECT_TOL {
            return Err(Error::NotOrthogonal(dev));
        }
        let q = gram_schmidt(&q, 0.0);
        if q.ncols() != n {
            return Err(Error::NotOrthogonal(dev));
        }
        Ok(Self { q, d })
    }

    pub fn identity(n: usize, d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(n, n), d)
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn codim(&self) -> usize {
        self.n() - self.d
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// First `d` columns.
    pub fn tangent_block(&self) -> DMatrix<f64> {
        self.q.columns(0, self.d).into_owned()
    }

    /// Last `n − d` columns.
    pub fn normal_block(&self) -> DMatrix<f64> {
        self.q.columns(self.d, self.codim()).into_owned()
    }

    /// Q-coordinates `(x_Q, x_Q^⊥)` of a point.
    pub fn split(&self, x: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let y = self.q.tr_mul(x);
        (y.rows(0, self.d).into_owned(), y.rows(self.d, self.codim()).into_owned())
    }

    pub fn merge(&self, xq: &DVector<f64>, xperp: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.n());
        y.rows_mut(0, self.d).copy_from(xq);
        y.rows_mut(self.d, self.codim()).copy_from(xperp);
        &self.q * y
    }

    /// The frame `S·Q` for an orthogonal `S`.
    pub fn rotated(&self, s: &DMatrix<f64>) -> Result<Self> {
        Self::new(s * &self.q, self.d)
    }
}

/// A `d`-dimensional linear subspace, stored as its orthogonal projection.
#[derive(Clone, Debug)]
pub struct GrPlane {
    proj: DMatrix<f64>,
    d: usize,
}

impl GrPlane {
    /// Span of the columns of `basis`. Columns must be linearly independent.
    pub fn from_basis(basis: &DMatrix<f64>) -> Result<Self> {
        let d = basis.ncols();
        let onb = gram_schmidt(basis, 1e-10);
        if onb.ncols() != d {
            return Err(Error::Input("plane basis is rank deficient".into()));
        }
        Ok(Self::from_orthonormal(&onb))
    }

    /// Span of columns already known to be orthonormal.
    pub fn from_orthonormal(onb: &DMatrix<f64>) -> Self {
        let proj = onb * onb.transpose();
        Self { proj: symmetrize(proj), d: onb.ncols() }
    }

    /// Accepts a symmetric idempotent matrix.
    pub fn from_projection(p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != p.ncols() {
            return Err(Error::Dimension("projection must be square".into()));
        }
        let sym = (&p - p.transpose()).norm();
        let idem = (&p * &p - &p).norm();
        if sym > 1e-8 || idem > 1e-8 {
            return Err(Error::Input(format!("not an orthogonal projection (sym {sym:.1e}, idem {idem:.1e})")));
        }
        let d = p.trace().round() as usize;
        Ok(Self { proj: symmetrize(p), d })
    }

    pub fn ambient_dim(&self) -> usize {
        self.proj.nrows()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn projection(&self) -> &DMatrix<f64> {
        &self.proj
    }

    /// Orthonormal basis of the plane (`n × d`).
    pub fn basis(&self) -> DMatrix<f64> {
        eigen_split(&self.proj, self.d).0
    }

    /// Orthonormal basis of the orthogonal complement (`n × (n − d)`).
    pub fn complement_basis(&self) -> DMatrix<f64> {
        eigen_split(&self.proj, self.d).1
    }

    /// Image of the plane under an orthogonal map.
    pub fn transformed(&self, q: &DMatrix<f64>) -> Self {
        Self { proj: symmetrize(q * &self.proj * q.transpose()), d: self.d }
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        (v - &self.proj * v).norm() <= tol * v.norm().max(1.0)
    }
}

/// A translated plane `point + W`.
#[derive(Clone, Debug)]
pub struct AffinePlane {
    pub point: DVector<f64>,
    pub plane: GrPlane,
}

impl AffinePlane {
    pub fn distance_to(&self, z: &DVector<f64>) -> f64 {
        let v = z - &self.point;
        (&v - self.plane.projection() * &v).norm()
    }
}

/// Spectral norm of the difference of the two projections.
pub fn grass_dist(a: &GrPlane, b: &GrPlane) -> f64 {
    assert_eq!(a.ambient_dim(), b.ambient_dim(), "planes live in different ambient spaces");
    let diff = a.projection() - b.projection();
    SymmetricEigen::new(diff)
        .eigenvalues
        .iter()
        .fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

pub fn planes_equal(a: &GrPlane, b: &GrPlane) -> bool {
    a.dim() == b.dim() && grass_dist(a, b) <= PLANE_EQ_TOL
}

/// Orthogonal `Q` with `Q·W′ = W` and `Q → I` as `W′ → W`.
///
/// Requires `grass_dist(W, W′) < eps0`.
pub fn align_frames(w: &GrPlane, w_prime: &GrPlane, eps0: f64) -> Result<DMatrix<f64>> {
    if w.dim() != w_prime.dim() || w.ambient_dim() != w_prime.ambient_dim() {
        return Err(Error::Dimension("align_frames needs planes of equal dimension".into()));
    }
    let dist = grass_dist(w, w_prime);
    if dist >= eps0 {
        return Err(Error::Precondition(format!("planes too far apart: {dist:.3} >= {eps0}")));
    }
    let n = w.ambient_dim();
    let d = w.dim();
    let (tb, nb) = eigen_split(w_prime.projection(), d);
    let mut src = DMatrix::zeros(n, n);
    src.columns_mut(0, d).copy_from(&tb);
    src.columns_mut(d, n - d).copy_from(&nb);

    let comp = DMatrix::identity(n, n) - w.projection();
    let head = gram_schmidt(&(w.projection() * &tb), 0.0);
    let tail = gram_schmidt(&(&comp * &nb), 0.0);
    if head.ncols() != d || tail.ncols() != n - d {
        return Err(Error::Numerical("projected frame lost rank".into()));
    }
    let mut dst = DMatrix::zeros(n, n);
    dst.columns_mut(0, d).copy_from(&head);
    dst.columns_mut(d, n - d).copy_from(&tail);
    Ok(dst * src.transpose())
}

/// Span of the first `d` columns of the frame.
pub fn frame_to_plane(frame: &Frame) -> GrPlane {
    GrPlane::from_orthonormal(&frame.tangent_block())
}

/// The plane `Q ⊕ A`: column span of `Q·[I_d; A]` for an `(n−d) × d` matrix `A`.
pub fn oplus(frame: &Frame, a: &DMatrix<f64>) -> Result<GrPlane> {
    let d = frame.d();
    if a.nrows() != frame.codim() || a.ncols() != d {
        return Err(Error::Dimension(format!(
            "oplus expects a {}x{} matrix, got {}x{}",
            frame.codim(),
            d,
            a.nrows(),
            a.ncols()
        )));
    }
    let mut stacked = DMatrix::zeros(frame.n(), d);
    stacked.rows_mut(0, d).fill_with_identity();
    stacked.rows_mut(d, frame.codim()).copy_from(a);
    GrPlane::from_basis(&(frame.matrix() * stacked))
}

/// Modified Gram–Schmidt on the columns of `m`.
///
/// Columns whose residual norm falls below `tol` times their original norm are dropped.
pub fn gram_schmidt(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(m.ncols());
    for j in 0..m.ncols() {
        let orig = m.column(j).into_owned();
        let scale = orig.norm();
        let mut v = orig;
        for _ in 0..2 {
            for u in &out {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let r = v.norm();
        if r > tol * scale && r > 0.0 {
            out.push(v / r);
        }
    }
    if out.is_empty() {
        return DMatrix::zeros(m.nrows(), 0);
    }
    DMatrix::from_columns(&out)
}

/// Eigenvectors of a symmetric matrix split into the top `k` and the rest.
pub(crate) fn eigen_split(sym: &DMatrix<f64>, k: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top: Vec<_> = order[..k].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let rest: Vec<_> = order[k..].iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
    let pack = |cols: Vec<DVector<f64>>| {
        if cols.is_empty() {
            DMatrix::zeros(n, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    };
    (pack(top), pack(rest))
}

fn symmetrize(p: DMatrix<f64>) -> DMatrix<f64> {
    (&p + p.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(theta: f64) -> GrPlane {
        GrPlane::from_basis(&DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()])).unwrap()
    }

    fn rot(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn split_merge_round_trip() {
        let f = Frame::new(rot(0.3), 1).unwrap();
        let x = DVector::from_vec(vec![0.7, -2.0]);
        let (a, b) = f.split(&x);
        assert!((f.merge(&a, &b) - x).norm() < 1e-12);
    }

    #[test]
    fn frame_rejects_far_from_orthogonal() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(matches!(Frame::new(q, 1), Err(Error::NotOrthogonal(_))));
        assert!(Frame::identity(3, 3).is_err());
    }

    #[test]
    fn frame_reorthonormalizes_tiny_noise() {
        let mut q = rot(0.4);
        q[(0, 1)] += 1e-8;
        let f = Frame::new(q, 1).unwrap();
        let m = f.matrix();
        assert!((m.transpose() * m - DMatrix::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn distance_of_axes_and_lines() {
        assert!((grass_dist(&line(0.0), &line(std::f64::consts::FRAC_PI_2)) - 1.0).abs() < 1e-12);
        for &t in &[0.1, 0.7, 2.0, -1.2] {
            assert!((grass_dist(&line(0.0), &line(t)) - t.sin().abs()).abs() < 1e-12);
        }
        assert!(grass_dist(&line(0.4), &line(0.4)) < 1e-15);
    }

    #[test]
    fn align_equal_planes_is_identity() {
        let w = line(0.8);
        let q = align_frames(&w, &w, ALIGN_EPS0).unwrap();
        assert!((q - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn align_small_rotation() {
        let q = align_frames(&line(0.1), &line(0.0), ALIGN_EPS0).unwrap();
        assert!((q - rot(0.1)).norm() < 1e-12);
    }

    #[test]
    fn align_rejects_distant_planes() {
        let r = align_frames(&line(0.0), &line(1.2), ALIGN_EPS0);
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn oplus_diagonal_line() {
        let f = Frame::identity(2, 1).unwrap();
        let w = oplus(&f, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!(grass_dist(&w, &line(std::f64::consts::FRAC_PI_4)) < 1e-12);
    }

    #[test]
    fn frame_plane_matches_zero_oplus() {
        let f = Frame::new(rot(1.1), 1).unwrap();
        let a = frame_to_plane(&f);
        let b = oplus(&f, &DMatrix::zeros(1, 1)).unwrap();
        assert!((a.projection() - b.projection()).norm() < 1e-12);
    }
}
