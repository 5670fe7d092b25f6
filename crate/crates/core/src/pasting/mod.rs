//! Gluing local graphs into one manifold: blended squared distances to the patch
//! planes, the zero set of their projected gradient, and averaged normal sections.

mod graph;
mod mput;
mod packet;
mod sections;

pub use graph::{FnGraph, GraphFn, LinearGraph};
pub use mput::{Extraction, MputPoint, RejectedSeed};
pub use packet::{CylinderPacket, GValue, LocalPatch, PacketConfig, PacketWarning};
pub use sections::{ExportRow, GluedPoint, Pasted, PastedExport, EXPORT_SCHEMA, EXPORT_SCHEMA_VERSION};

#[cfg(test)]
mod tests;
