use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use nalgebra::DVector;

use super::MultiIndexSet;

/// Multivariate power series truncated above total degree `m`.
#[derive(Clone, Debug)]
pub struct TruncPoly {
    idx: Arc<MultiIndexSet>,
    c: DVector<f64>,
}

impl TruncPoly {
    pub fn zero(idx: &Arc<MultiIndexSet>) -> Self {
        Self { idx: idx.clone(), c: DVector::zeros(idx.len()) }
    }

    pub fn constant(idx: &Arc<MultiIndexSet>, v: f64) -> Self {
        let mut p = Self::zero(idx);
        p.c[0] = v;
        p
    }

    /// The variable `h_i`.
    pub fn variable(idx: &Arc<MultiIndexSet>, i: usize) -> Self {
        let mut p = Self::zero(idx);
        if idx.m() >= 1 {
            let mut a = vec![0u8; idx.d()];
            a[i] = 1;
            p.c[idx.index_of(&a).expect("degree-one index")] = 1.0;
        }
        p
    }

    pub fn from_coeffs(idx: &Arc<MultiIndexSet>, c: DVector<f64>) -> Self {
        assert_eq!(c.len(), idx.len());
        Self { idx: idx.clone(), c }
    }

    pub fn coeffs(&self) -> &DVector<f64> {
        &self.c
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { idx: self.idx.clone(), c: &self.c * s }
    }

    pub fn axpy(&mut self, a: f64, other: &TruncPoly) {
        self.c.axpy(a, &other.c, 1.0);
    }

    pub fn pow(&self, k: usize) -> Self {
        let mut out = Self::constant(&self.idx, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }
}

impl Add for &TruncPoly {
    type Output = TruncPoly;
    fn add(self, rhs: &TruncPoly) -> TruncPoly {
        TruncPoly { idx: self.idx.clone(), c: &self.c + &rhs.c }
    }
}

impl Sub for &TruncPoly {
    type Output = TruncPoly;
    fn sub(self, rhs: &TruncPoly) -> TruncPoly {
        TruncPoly { idx: self.idx.clone(), c: &self.c - &rhs.c }
    }
}

impl Mul for &TruncPoly {
    type Output = TruncPoly;
    fn mul(self, rhs: &TruncPoly) -> TruncPoly {
        let mut c = DVector::zeros(self.idx.len());
        for &(i, j, k) in self.idx.products() {
            c[k] += self.c[i] * rhs.c[j];
        }
        TruncPoly { idx: self.idx.clone(), c }
    }
}
