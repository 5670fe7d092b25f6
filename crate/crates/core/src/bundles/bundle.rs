use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{AffineJetFiber, SampledSet};
use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::jets::{binomial, MultiIndexSet};

pub const BUNDLE_SCHEMA: &str = "manifold-fit/bundle";
pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

/// Fibers indexed by `(sample, frame)`, plus a generation counter.
#[derive(Clone, Debug)]
pub struct MBundle {
    set: Arc<SampledSet>,
    d: usize,
    m: usize,
    frames: Arc<Vec<Frame>>,
    fibers: Vec<Vec<AffineJetFiber>>,
    generation: usize,
}

impl MBundle {
    pub fn new(
        set: Arc<SampledSet>,
        d: usize,
        m: usize,
        frames: Arc<Vec<Frame>>,
        fibers: Vec<Vec<AffineJetFiber>>,
        generation: usize,
    ) -> Result<Self> {
        if fibers.len() != set.len() {
            return Err(Error::Dimension("one fiber row per sample required".into()));
        }
        if frames.is_empty() {
            return Err(Error::Input("at least one frame is required".into()));
        }
        for f in frames.iter() {
            if f.n() != set.ambient_dim() || f.d() != d {
                return Err(Error::Dimension("frame does not match (n, d)".into()));
            }
        }
        if fibers.iter().any(|row| row.len() != frames.len()) {
            return Err(Error::Dimension("one fiber per frame required".into()));
        }
        Ok(Self { set, d, m, frames, fibers, generation })
    }

    pub fn set(&self) -> &Arc<SampledSet> {
        &self.set
    }

    pub fn n(&self) -> usize {
        self.set.ambient_dim()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn frames(&self) -> &Arc<Vec<Frame>> {
        &self.frames
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    pub fn fiber(&self, sample: usize, frame: usize) -> &AffineJetFiber {
        &self.fibers[sample][frame]
    }

    pub fn fibers_at(&self, sample: usize) -> &[AffineJetFiber] {
        &self.fibers[sample]
    }

    /// A copy with one fiber replaced; used by tests and synthetic bundles.
    pub fn with_fiber(&self, sample: usize, frame: usize, fiber: AffineJetFiber) -> Self {
        let mut out = self.clone();
        out.fibers[sample][frame] = fiber;
        out
    }

    pub(crate) fn next_generation(&self, fibers: Vec<Vec<AffineJetFiber>>) -> Self {
        Self {
            set: self.set.clone(),
            d: self.d,
            m: self.m,
            frames: self.frames.clone(),
            fibers,
            generation: self.generation + 1,
        }
    }

    pub fn has_nonempty_fiber(&self, sample: usize) -> bool {
        self.fibers[sample].iter().any(|f| !f.is_empty())
    }

    /// Counts of fiber dimensions over all `(sample, frame)`; key `None` is EMPTY.
    pub fn dim_histogram(&self) -> BTreeMap<Option<usize>, usize> {
        let mut h = BTreeMap::new();
        for row in &self.fibers {
            for f in row {
                *h.entry(f.dim()).or_insert(0) += 1;
            }
        }
        h
    }

    pub fn snapshot(&self) -> BundleSnapshot {
        let idx = MultiIndexSet::shared(self.d, self.m);
        BundleSnapshot {
            schema: BUNDLE_SCHEMA.into(),
            version: BUNDLE_SCHEMA_VERSION,
            n: self.n(),
            d: self.d,
            m: self.m,
            generation: self.generation,
            multi_indices: idx.iter().map(|a| a.to_vec()).collect(),
            frames: self.frames.iter().map(|f| matrix_rows(f.matrix())).collect(),
            samples: (0..self.len())
                .map(|i| SampleSnapshot {
                    index: i,
                    point: self.set.point(i).iter().copied().collect(),
                    fibers: self.fibers[i]
                        .iter()
                        .enumerate()
                        .map(|(q, f)| FiberSnapshot {
                            frame: q,
                            empty: f.is_empty(),
                            dimension: f.dim(),
                            base: f.space().map(|s| s.base.iter().copied().collect()),
                            basis: f.space().map(|s| {
                                (0..s.dim()).map(|j| s.basis.column(j).iter().copied().collect()).collect()
                            }),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Serialized form of an [`MBundle`]. Coefficient vectors are output-major over `multi_indices`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BundleSnapshot {
    pub schema: String,
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub generation: usize,
    pub multi_indices: Vec<Vec<u8>>,
    pub frames: Vec<Vec<Vec<f64>>>,
    pub samples: Vec<SampleSnapshot>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SampleSnapshot {
    pub index: usize,
    pub point: Vec<f64>,
    pub fibers: Vec<FiberSnapshot>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FiberSnapshot {
    pub frame: usize,
    pub empty: bool,
    pub dimension: Option<usize>,
    pub base: Option<Vec<f64>>,
    pub basis: Option<Vec<Vec<f64>>>,
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// One permutation frame per coordinate `d`-plane: `C(n, d)` frames in lexicographic order of the subsets.
pub fn default_frames(n: usize, d: usize) -> Result<Vec<Frame>> {
    if d == 0 || d >= n {
        return Err(Error::Dimension(format!("need 1 <= d < n, got d={d}, n={n}")));
    }
    let mut out = Vec::with_capacity(binomial(n, d));
    let mut subset: Vec<usize> = (0..d).collect();
    loop {
        let rest: Vec<usize> = (0..n).filter(|i| !subset.contains(i)).collect();
        let mut q = DMatrix::zeros(n, n);
        for (col, &axis) in subset.iter().chain(rest.iter()).enumerate() {
            q[(axis, col)] = 1.0;
        }
        out.push(Frame::new(q, d)?);
        // next subset in lexicographic order
        let mut i = d;
        loop {
            if i == 0 {
                return Ok(out);
            }
            i -= 1;
            if subset[i] < n - d + i {
                subset[i] += 1;
                for j in i + 1..d {
                    subset[j] = subset[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// The bundle `H₀`: at every sample and frame, all jets with `P(x_Q) = x_Q^⊥`.
pub fn initial_bundle(set: Arc<SampledSet>, d: usize, m: usize, frames: Option<Vec<Frame>>) -> Result<MBundle> {
    let frames = match frames {
        Some(f) => f,
        None => default_frames(set.ambient_dim(), d)?,
    };
    let fibers = (0..set.len())
        .map(|i| {
            frames
                .iter()
                .map(|f| {
                    let (xq, xp) = f.split(set.point(i));
                    AffineJetFiber::proper(d, m, xq, &xp)
                })
                .collect()
        })
        .collect();
    MBundle::new(set, d, m, Arc::new(frames), fibers, 0)
}

/// Every fiber is the whole jet space; a fixed point of refinement.
pub fn full_bundle(set: Arc<SampledSet>, d: usize, m: usize, frames: Vec<Frame>) -> Result<MBundle> {
    let fibers = (0..set.len())
        .map(|i| {
            frames
                .iter()
                .map(|f| {
                    let (xq, _) = f.split(set.point(i));
                    AffineJetFiber::full(d, m, f.codim(), xq)
                })
                .collect()
        })
        .collect();
    MBundle::new(set, d, m, Arc::new(frames), fibers, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn frame_counts() {
        assert_eq!(default_frames(2, 1).unwrap().len(), 2);
        assert_eq!(default_frames(4, 3).unwrap().len(), 4);
        assert_eq!(default_frames(5, 3).unwrap().len(), 10);
    }

    #[test]
    fn frames_cover_distinct_coordinate_planes() {
        let frames = default_frames(4, 2).unwrap();
        for (i, a) in frames.iter().enumerate() {
            for b in &frames[i + 1..] {
                let pa = a.tangent_block() * a.tangent_block().transpose();
                let pb = b.tangent_block() * b.tangent_block().transpose();
                assert!((pa - pb).norm() > 0.5);
            }
        }
    }

    #[test]
    fn initial_fiber_at_unit_point() {
        let set = Arc::new(SampledSet::new(vec![DVector::from_vec(vec![1.0, 1.0])]).unwrap());
        let b = initial_bundle(set, 1, 1, Some(vec![Frame::identity(2, 1).unwrap()])).unwrap();
        let f = b.fiber(0, 0);
        assert_eq!(f.dim(), Some(1));
        let s = f.space().unwrap();
        // 1 + a(t − 1): constant coefficient 1, free slope.
        assert!((s.base[0] - 1.0).abs() < 1e-15 && s.base[1] == 0.0);
        assert_eq!(s.basis.column(0).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);
        assert_eq!(f.center()[0], 1.0);
    }

    #[test]
    fn initial_dimension_formula() {
        let pts = vec![DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]), DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])];
        let set = Arc::new(SampledSet::new(pts).unwrap());
        let b = initial_bundle(set, 2, 2, None).unwrap();
        for i in 0..2 {
            for q in 0..b.frames().len() {
                assert_eq!(b.fiber(i, q).dim(), Some(2 * (binomial(4, 2) - 1)));
            }
        }
    }
}
