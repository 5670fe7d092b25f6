use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::mput::{MputPoint, RejectedSeed};
use super::packet::{bump, CylinderPacket, LocalPatch};
use crate::error::{Error, Result};
use crate::geometry::{Frame, GrPlane};
use crate::jets::JetPoly;

pub const EXPORT_SCHEMA: &str = "manifold-fit/pasted";
pub const EXPORT_SCHEMA_VERSION: u32 = 1;

/// A putative-manifold point lifted onto the glued graph.
#[derive(Clone, Debug)]
pub struct GluedPoint {
    pub base: MputPoint,
    /// Normal offset `J(x)`.
    pub offset: DVector<f64>,
    /// Normalized partition-of-unity weights of the contributing patches.
    pub weights: Vec<(usize, f64)>,
}

impl GluedPoint {
    pub fn point(&self) -> DVector<f64> {
        &self.base.point + &self.offset
    }
}

#[derive(Clone, Debug)]
pub struct Pasted {
    pub points: Vec<GluedPoint>,
    /// Inputs outside every three-fold cylinder.
    pub dropped: usize,
}

/// The offset `v ∈ N(x)` with `x + v` on the patch graph.
fn patch_section(patch: &LocalPatch, x: &DVector<f64>, tangent: &DMatrix<f64>) -> Result<DVector<f64>> {
    let mut s = patch.local(x).0;
    for _ in 0..60 {
        let g = patch.graph_point(&s);
        let r = tangent.tr_mul(&(&g - x));
        if r.norm() <= 1e-14 * x.norm().max(1.0) {
            return Ok(g - x);
        }
        let jac = tangent.tr_mul(&patch.graph_differential(&s));
        let step = jac.lu().solve(&r).ok_or_else(|| Error::Numerical("patch graph is tangent to the normal space".into()))?;
        s -= step;
    }
    Err(Error::Numerical("section solve did not converge".into()))
}

impl CylinderPacket {
    /// Partition-of-unity weights `θ(x_j/(3δ₀))` over the three-fold cylinders, normalized.
    pub fn section_weights(&self, x: &DVector<f64>) -> Vec<(usize, f64)> {
        let delta0 = self.config().delta0;
        let p = self.config().m as i32 + 3;
        let raw: Vec<(usize, f64)> = self
            .patches()
            .iter()
            .enumerate()
            .filter(|(_, pt)| pt.in_cylinder(x, 3.0, delta0))
            .map(|(j, pt)| (j, bump(&(pt.local(x).0 / (3.0 * delta0)), p).0))
            .filter(|&(_, w)| w > 0.0)
            .collect();
        let total: f64 = raw.iter().map(|w| w.1).sum();
        raw.into_iter().map(|(j, w)| (j, w / total)).collect()
    }

    /// Glued offset at a putative-manifold point; `None` outside every three-fold cylinder.
    pub fn glue(&self, base: &MputPoint) -> Result<Option<GluedPoint>> {
        let weights = self.section_weights(&base.point);
        if weights.is_empty() {
            return Ok(None);
        }
        let tangent = base.tangent.basis();
        let mut offset = DVector::zeros(self.n());
        for &(j, w) in &weights {
            offset += patch_section(&self.patches()[j], &base.point, &tangent)? * w;
        }
        Ok(Some(GluedPoint { base: base.clone(), offset, weights }))
    }

    /// Partition-of-unity average of the patch sections over the given manifold points.
    pub fn paste_sections(&self, mput: &[MputPoint]) -> Result<Pasted> {
        let mut points = Vec::with_capacity(mput.len());
        let mut dropped = 0;
        for x in mput {
            match self.glue(x)? {
                Some(g) => points.push(g),
                None => dropped += 1,
            }
        }
        Ok(Pasted { points, dropped })
    }

    /// Glued point over the foot point of `z`.
    pub fn glue_near(&self, z: &DVector<f64>) -> Result<Option<GluedPoint>> {
        self.glue(&self.closest_on_mput(z)?)
    }

    /// Tangent plane of the glued graph by central differences of step `h` along the manifold.
    pub fn glued_tangent(&self, base: &MputPoint, h: f64) -> Result<GrPlane> {
        let t = base.tangent.basis();
        let mut cols = Vec::with_capacity(t.ncols());
        for k in 0..t.ncols() {
            let dir = t.column(k).into_owned();
            let plus = self.project_to_mput(&(&base.point + &dir * h))?;
            let minus = self.project_to_mput(&(&base.point - &dir * h))?;
            let (Some(a), Some(b)) = (self.glue(&plus)?, self.glue(&minus)?) else {
                return Err(Error::Precondition("difference stencil leaves the glued region".into()));
            };
            cols.push((a.point() - b.point()) / (2.0 * h));
        }
        GrPlane::from_basis(&DMatrix::from_columns(&cols))
    }

    /// First-order jet of the glued graph at `base`, written over the frame `q`.
    pub fn glued_jet(&self, base: &MputPoint, q: &Frame, h: f64) -> Result<JetPoly> {
        let g = self
            .glue(base)?
            .ok_or_else(|| Error::Precondition("point lies outside the glued region".into()))?;
        let plane = self.glued_tangent(base, h)?;
        let (xq, xperp) = q.split(&g.point());
        let local = q.matrix().tr_mul(&plane.basis());
        let d = q.d();
        let top = local.rows(0, d).into_owned();
        let bottom = local.rows(d, q.codim()).into_owned();
        let inv = top.try_inverse().ok_or_else(|| Error::Incompatible(0.0))?;
        let slope = bottom * inv;
        let mut coeffs = DMatrix::zeros(d + 1, q.codim());
        coeffs.row_mut(0).copy_from(&xperp.transpose());
        for l in 0..q.codim() {
            for i in 0..d {
                coeffs[(1 + i, l)] = slope[(l, i)];
            }
        }
        JetPoly::new(d, 1, xq, coeffs)
    }

    /// Marches along a one-dimensional putative manifold with step `h`, gluing as it goes.
    pub fn trace_curve(&self, start: &DVector<f64>, h: f64, steps: usize) -> Result<Vec<GluedPoint>> {
        if self.d() != 1 {
            return Err(Error::Input("curve tracing needs d = 1".into()));
        }
        let mut x = self.project_to_mput(start)?;
        let mut dir = x.tangent.basis().column(0).into_owned();
        let mut out = Vec::with_capacity(steps + 1);
        for _ in 0..=steps {
            match self.glue(&x)? {
                Some(g) => out.push(g),
                None => break,
            }
            let next = self.project_to_mput(&(&x.point + &dir * h))?;
            let mut t = next.tangent.basis().column(0).into_owned();
            if t.dot(&dir) < 0.0 {
                t.neg_mut();
            }
            dir = t;
            x = next;
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExportRow {
    pub point: Vec<f64>,
    /// Orthonormal tangent basis vectors.
    pub tangent: Vec<Vec<f64>>,
    pub glued: Vec<f64>,
    pub patches: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PastedExport {
    pub schema: String,
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub config: super::PacketConfig,
    pub rows: Vec<ExportRow>,
    pub dropped: usize,
    pub rejected: Vec<RejectedSeed>,
}

impl Pasted {
    pub fn export(&self, packet: &CylinderPacket, rejected: &[RejectedSeed]) -> PastedExport {
        let rows = self
            .points
            .iter()
            .map(|g| {
                let t = g.base.tangent.basis();
                ExportRow {
                    point: g.base.point.iter().copied().collect(),
                    tangent: t.column_iter().map(|c| c.iter().copied().collect()).collect(),
                    glued: g.point().iter().copied().collect(),
                    patches: g.weights.iter().map(|w| w.0).collect(),
                }
            })
            .collect();
        PastedExport {
            schema: EXPORT_SCHEMA.to_string(),
            version: EXPORT_SCHEMA_VERSION,
            n: packet.n(),
            d: packet.d(),
            config: packet.config().clone(),
            rows,
            dropped: self.dropped,
            rejected: rejected.to_vec(),
        }
    }
}

impl PastedExport {
    /// One CSV row per point: manifold point, glued point, then tangent basis entries.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["schema_version".to_string()];
        header.extend((0..self.n).map(|k| format!("x{k}")));
        header.extend((0..self.n).map(|k| format!("g{k}")));
        for a in 0..self.d {
            header.extend((0..self.n).map(|k| format!("t{a}_{k}")));
        }
        let csv_err = |e: csv::Error| Error::Numerical(e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.rows {
            let mut rec = vec![self.version.to_string()];
            rec.extend(r.point.iter().map(|v| v.to_string()));
            rec.extend(r.glued.iter().map(|v| v.to_string()));
            for t in &r.tangent {
                rec.extend(t.iter().map(|v| v.to_string()));
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
