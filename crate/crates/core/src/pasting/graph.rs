use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

/// A graph function `F: ℝ^d → ℝ^{n−d}` with its first derivatives.
pub trait GraphFn: Send + Sync + fmt::Debug {
    fn d(&self) -> usize;
    fn codim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> DVector<f64>;
    /// `codim × d` Jacobian.
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

/// `F(x) = A·x`.
#[derive(Clone, Debug)]
pub struct LinearGraph {
    pub slope: DMatrix<f64>,
}

impl LinearGraph {
    pub fn new(slope: DMatrix<f64>) -> Self {
        Self { slope }
    }

    pub fn flat(d: usize, codim: usize) -> Self {
        Self { slope: DMatrix::zeros(codim, d) }
    }
}

impl GraphFn for LinearGraph {
    fn d(&self) -> usize {
        self.slope.ncols()
    }

    fn codim(&self) -> usize {
        self.slope.nrows()
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.slope * x
    }

    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.slope.clone()
    }
}

type ValueFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;
type JacobianFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;

/// Graph given by closures.
#[derive(Clone)]
pub struct FnGraph {
    d: usize,
    codim: usize,
    value: Arc<ValueFn>,
    jacobian: Arc<JacobianFn>,
}

impl FnGraph {
    pub fn new(
        d: usize,
        codim: usize,
        value: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jacobian: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self { d, codim, value: Arc::new(value), jacobian: Arc::new(jacobian) }
    }
}

impl fmt::Debug for FnGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FnGraph(d={}, codim={})", self.d, self.codim)
    }
}

impl GraphFn for FnGraph {
    fn d(&self) -> usize {
        self.d
    }

    fn codim(&self) -> usize {
        self.codim
    }

    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.value)(x)
    }

    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jacobian)(x)
    }
}
