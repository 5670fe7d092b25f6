//! Sampled sets, affine jet fibers, M-bundles and their Grassmannian shadows.

mod bundle;
mod fiber;
mod grfiber;
mod sampled;

pub use bundle::{
    default_frames, full_bundle, initial_bundle, BundleSnapshot, FiberSnapshot, MBundle, SampleSnapshot,
    BUNDLE_SCHEMA, BUNDLE_SCHEMA_VERSION,
};
pub use fiber::{intersect_fiber, AffineJetFiber, AffineSpace, INCONSISTENT_TOL};
pub use grfiber::{gr_fiber, gr_fibers, GrDiagnostic, GrFiber, GrFiberOptions, GrFiberResult};
pub use sampled::{SampledSet, DUPLICATE_TOL};
