use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::*;
use crate::geometry::{grass_dist, Frame, GrPlane};

fn rot(a: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a.cos(), -a.sin(), a.sin(), a.cos()])
}

fn v2(x: f64, y: f64) -> DVector<f64> {
    DVector::from_vec(vec![x, y])
}

/// Line through the origin at angle `a`, patch centered at arclength `at`.
fn line_patch(a: f64, at: f64) -> LocalPatch {
    let q = rot(a);
    let center = q.column(0) * at;
    LocalPatch::new(center, Frame::new(q, 1).unwrap(), Arc::new(LinearGraph::flat(1, 1))).unwrap()
}

/// Arc of the circle of radius `r` about the origin, centered at angle `a`.
fn circle_patch(r: f64, a: f64) -> LocalPatch {
    let q = DMatrix::from_row_slice(2, 2, &[-a.sin(), a.cos(), a.cos(), a.sin()]);
    let center = v2(r * a.cos(), r * a.sin());
    let graph = FnGraph::new(
        1,
        1,
        move |x| DVector::from_element(1, (r * r - x[0] * x[0]).sqrt() - r),
        move |x| DMatrix::from_element(1, 1, -x[0] / (r * r - x[0] * x[0]).sqrt()),
    );
    LocalPatch::new(center, Frame::new(q, 1).unwrap(), Arc::new(graph)).unwrap()
}

fn config(delta0: f64) -> PacketConfig {
    PacketConfig { delta0, ..PacketConfig::default() }
}

#[test]
fn single_flat_patch_gives_squared_distance() {
    let packet = CylinderPacket::new(vec![line_patch(0.3, 0.0)], config(1.0)).unwrap();
    let z = rot(0.3) * v2(1.2, 0.7);
    let g = packet.weighted_sq_dist(&z).unwrap();
    assert!((g.value - 0.49).abs() < 1e-12);
    let m = packet.project_to_mput(&z).unwrap();
    let plane = GrPlane::from_basis(&rot(0.3).columns(0, 1).into_owned()).unwrap();
    assert!(grass_dist(&m.tangent, &plane) < 1e-12);
    assert!((rot(0.3).tr_mul(&m.point)[1]).abs() < 1e-9);
}

#[test]
fn identical_patches_blend_to_one_distance() {
    let packet = CylinderPacket::new(vec![line_patch(0.0, -1.0), line_patch(0.0, 1.5)], config(1.0)).unwrap();
    for x in [-2.0, 0.0, 0.4, 2.2] {
        let g = packet.weighted_sq_dist(&v2(x, 0.3)).unwrap();
        assert!((g.value - 0.09).abs() < 1e-12, "{x}: {}", g.value);
    }
}

#[test]
fn crossing_lines_blend_strictly_between() {
    let c0 = 0.05;
    let packet = CylinderPacket::new(vec![line_patch(c0, -2.0), line_patch(-c0, 2.0)], config(1.0)).unwrap();
    let z = v2(0.3, 0.2);
    let d1 = (rot(c0).tr_mul(&z)[1]).powi(2);
    let d2 = (rot(-c0).tr_mul(&z)[1]).powi(2);
    let g = packet.weighted_sq_dist(&z).unwrap().value;
    assert!(g > d1.min(d2) && g < d1.max(d2), "{d1} {g} {d2}");
}

#[test]
fn derivatives_of_g_match_differences() {
    let packet =
        CylinderPacket::new(vec![circle_patch(10.0, 0.0), circle_patch(10.0, 0.2), circle_patch(10.0, -0.25)], config(1.0))
            .unwrap();
    let z = v2(9.9, 0.7);
    let g = packet.weighted_sq_dist(&z).unwrap();
    let eps = 1e-6;
    for k in 0..2 {
        let mut a = z.clone();
        let mut b = z.clone();
        a[k] += eps;
        b[k] -= eps;
        let ga = packet.weighted_sq_dist(&a).unwrap();
        let gb = packet.weighted_sq_dist(&b).unwrap();
        assert!(((ga.value - gb.value) / (2.0 * eps) - g.gradient[k]).abs() < 1e-7);
        let col = (ga.gradient - gb.gradient) / (2.0 * eps);
        assert!((col - g.hessian.column(k)).norm() < 1e-6);
    }
}

#[test]
fn outside_the_cylinders_is_a_domain_error() {
    let packet = CylinderPacket::new(vec![line_patch(0.0, 0.0)], config(1.0)).unwrap();
    assert!(packet.weighted_sq_dist(&v2(0.0, 5.5)).is_err());
    assert!(packet.weighted_sq_dist(&v2(0.0, 4.9)).is_ok());
}

#[test]
fn section_weights_sum_to_one() {
    let patches: Vec<LocalPatch> = (-3..=3).map(|k| circle_patch(12.0, 0.1 * k as f64)).collect();
    let packet = CylinderPacket::new(patches, config(1.0)).unwrap();
    for k in 0..20 {
        let a = -0.3 + 0.03 * k as f64;
        let w = packet.section_weights(&v2(12.0 * a.cos(), 12.0 * a.sin()));
        assert!((w.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn single_curved_patch_is_reproduced() {
    let patch = circle_patch(8.0, 0.4);
    let packet = CylinderPacket::new(vec![patch.clone()], config(1.0)).unwrap();
    for s in [-2.0, -0.5, 0.0, 1.3, 2.5] {
        let target = patch.graph_point(&DVector::from_element(1, s));
        let g = packet.glue_near(&target).unwrap().unwrap();
        assert!((g.point() - &target).norm() < 1e-12, "{s}: {:e}", (g.point() - &target).norm());
    }
}

#[test]
fn overlapping_circle_patches_contain_the_circle() {
    let r = 12.0;
    let patches: Vec<LocalPatch> = (-4..=4).map(|k| circle_patch(r, 0.15 * k as f64)).collect();
    let packet = CylinderPacket::new(patches, config(1.0)).unwrap();
    for k in 0..25 {
        let a = -0.36 + 0.03 * k as f64;
        let e = v2(r * a.cos(), r * a.sin());
        let g = packet.glue_near(&e).unwrap().unwrap();
        assert!(g.weights.len() >= 2);
        assert!((g.point() - &e).norm() < 1e-9);
    }
}

#[test]
fn rigid_motion_moves_everything_alike() {
    let patches: Vec<LocalPatch> = (-2..=2).map(|k| circle_patch(9.0, 0.2 * k as f64)).collect();
    let packet = CylinderPacket::new(patches, config(1.0)).unwrap();
    let r = rot(1.1);
    let b = v2(-3.0, 0.5);
    let moved = packet.moved(&r, &b).unwrap();
    for seed in [v2(9.1, 0.3), v2(8.8, -1.0), v2(9.0, 1.4)] {
        let a = packet.glue_near(&seed).unwrap().unwrap();
        let m = moved.glue_near(&(&r * &seed + &b)).unwrap().unwrap();
        assert!((&r * a.base.point.clone() + &b - &m.base.point).norm() < 1e-9);
        assert!((&r * a.point() + &b - m.point()).norm() < 1e-9);
    }
}

#[test]
fn crossing_lines_trace_a_smooth_curve() {
    let c0 = 0.05;
    let packet = CylinderPacket::new(vec![line_patch(c0, -2.0), line_patch(-c0, 2.0)], config(1.0)).unwrap();
    let curve = packet.trace_curve(&v2(-4.0, -4.0 * c0.tan()), 1e-3, 8000).unwrap();
    assert!(curve.len() > 7000);
    let pts: Vec<DVector<f64>> = curve.iter().map(GluedPoint::point).collect();
    let dirs: Vec<DVector<f64>> = pts.windows(2).map(|w| (&w[1] - &w[0]).normalize()).collect();
    let jump = dirs.windows(2).map(|w| (&w[1] - &w[0]).norm()).fold(0.0, f64::max);
    assert!(jump < 1e-3, "{jump}");
    for g in &curve {
        let x = &g.base.point;
        let to1 = rot(c0).tr_mul(x)[1].abs();
        let to2 = rot(-c0).tr_mul(x)[1].abs();
        if x[0].abs() < 1.0 {
            assert!(to1 < 4.0 * c0 && to2 < 4.0 * c0);
        }
    }
}

#[test]
fn export_has_schema_and_rows() {
    let packet = CylinderPacket::new(vec![circle_patch(5.0, 0.0)], config(1.0)).unwrap();
    let ex = packet.extract_mput(&[v2(5.05, 0.0), v2(5.0, 1.0), v2(50.0, 0.0)]);
    assert_eq!(ex.points.len(), 2);
    assert_eq!(ex.rejected.len(), 1);
    let mput: Vec<MputPoint> = ex.points.iter().map(|p| p.1.clone()).collect();
    let pasted = packet.paste_sections(&mput).unwrap();
    let export = pasted.export(&packet, &ex.rejected);
    assert_eq!(export.rows.len(), 2);
    let mut buf = Vec::new();
    export.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("schema_version,x0,x1,g0,g1,t0_0,t0_1"));
    assert_eq!(text.lines().count(), 3);
}
