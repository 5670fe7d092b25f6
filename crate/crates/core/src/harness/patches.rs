use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{Error, Result};
use crate::geometry::Frame;
use crate::pasting::{CylinderPacket, FnGraph, LinearGraph, LocalPatch, PacketConfig};

/// A cylinder packet with the samples its patches were built from and seeds for extraction.
#[derive(Clone, Debug)]
pub struct PasteExample {
    pub name: &'static str,
    pub packet: CylinderPacket,
    pub samples: Vec<DVector<f64>>,
    pub seeds: Vec<DVector<f64>>,
}

pub const PASTE_EXAMPLES: [&str; 3] = ["two_lines", "circle", "plane_fan"];

fn steps(lo: f64, hi: f64, h: f64) -> Vec<f64> {
    let count = ((hi - lo) / h).round() as usize;
    (0..=count).map(|k| lo + (hi - lo) * k as f64 / count as f64).collect()
}

fn direction(a: f64) -> DVector<f64> {
    DVector::from_vec(vec![a.cos(), a.sin()])
}

fn line_patch(a: f64, at: f64) -> Result<LocalPatch> {
    let q = DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()]);
    LocalPatch::new(direction(a) * at, Frame::new(q, 1)?, Arc::new(LinearGraph::flat(1, 1)))
}

/// Two lines through the origin at angles `±c₀`, one patch on each, samples kept
/// where only their own patch reaches.
pub fn two_lines(cfg: &PacketConfig) -> Result<PasteExample> {
    let (delta, c0) = (cfg.delta0, cfg.c0);
    let packet = CylinderPacket::new(vec![line_patch(c0, -2.0 * delta)?, line_patch(-c0, 2.0 * delta)?], cfg.clone())?;
    let mut samples: Vec<DVector<f64>> = steps(-4.5, -1.1, 0.1).into_iter().map(|s| direction(c0) * (s * delta)).collect();
    samples.extend(steps(1.1, 4.5, 0.1).into_iter().map(|s| direction(-c0) * (s * delta)));
    let seeds = steps(-4.5, 4.5, 0.05)
        .into_iter()
        .map(|s| if s < 0.0 { direction(c0) * (s * delta) } else { direction(-c0) * (s * delta) })
        .collect();
    Ok(PasteExample { name: "two_lines", packet, samples, seeds })
}

fn arc_patch(r: f64, a: f64) -> Result<LocalPatch> {
    let q = DMatrix::from_row_slice(2, 2, &[-a.sin(), a.cos(), a.cos(), a.sin()]);
    let graph = FnGraph::new(
        1,
        1,
        move |x| DVector::from_element(1, (r * r - x[0] * x[0]).sqrt() - r),
        move |x| DMatrix::from_element(1, 1, -x[0] / (r * r - x[0] * x[0]).sqrt()),
    );
    LocalPatch::new(direction(a) * r, Frame::new(q, 1)?, Arc::new(graph))
}

/// Nine overlapping patches of one circle of radius `500δ₀`, all cut from the same global graph.
pub fn circle_arcs(cfg: &PacketConfig) -> Result<PasteExample> {
    let r = 500.0 * cfg.delta0;
    let patches = (-4..=4).map(|k| arc_patch(r, 2.0 * cfg.delta0 * k as f64 / r)).collect::<Result<Vec<_>>>()?;
    let packet = CylinderPacket::new(patches, cfg.clone())?;
    let samples: Vec<DVector<f64>> =
        steps(-9.0, 9.0, 0.1).into_iter().map(|s| direction(s * cfg.delta0 / r) * r).collect();
    Ok(PasteExample { name: "circle", packet, seeds: samples.clone(), samples })
}

/// Axis of the fan in [`plane_fan`].
pub fn fan_axis() -> DVector<f64> {
    DVector::from_vec(vec![1.0, 0.3, 0.2]).normalize()
}

/// Planes in `ℝ³` that all contain one line, tilted about it by `±0.4c₀` in turn.
/// The samples lie on the line, so any blend of the planes passes through them.
pub fn plane_fan(cfg: &PacketConfig) -> Result<PasteExample> {
    let delta = cfg.delta0;
    let l = Vector3::new(1.0, 0.3, 0.2).normalize();
    let u = l.cross(&Vector3::z()).normalize();
    let w = l.cross(&u);
    let patches = (-2i32..=2)
        .map(|k| {
            let a = 0.4 * cfg.c0 * if k % 2 == 0 { 1.0 } else { -1.0 };
            let v = u * a.cos() + w * a.sin();
            let nrm = w * a.cos() - u * a.sin();
            let q = DMatrix::from_columns(&[l, v, nrm].map(|c| DVector::from_column_slice(c.as_slice())));
            let center = DVector::from_column_slice((l * (2.0 * k as f64 * delta)).as_slice());
            LocalPatch::new(center, Frame::new(q, 2)?, Arc::new(LinearGraph::flat(2, 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let packet = CylinderPacket::new(patches, cfg.clone())?;
    let axis = fan_axis();
    let samples: Vec<DVector<f64>> = steps(-3.0, 3.0, 0.1).into_iter().map(|s| &axis * (s * delta)).collect();
    Ok(PasteExample { name: "plane_fan", packet, seeds: samples.clone(), samples })
}

pub fn paste_example(name: &str, cfg: &PacketConfig) -> Result<PasteExample> {
    match name {
        "two_lines" => two_lines(cfg),
        "circle" => circle_arcs(cfg),
        "plane_fan" => plane_fan(cfg),
        other => Err(Error::Input(format!("unknown pasting example {other}; expected one of {PASTE_EXAMPLES:?}"))),
    }
}
