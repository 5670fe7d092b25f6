use std::f64::consts::TAU;

use nalgebra::DMatrix;

use super::*;
use crate::geometry::GrPlane;

/// span{e₁, e₂, (0, 0, cos(wt), sin(wt), 0…)} in ℝⁿ.
fn twisted_planes(n: usize, w: f64, count: usize) -> Vec<GrPlane> {
    (0..count)
        .map(|k| {
            let t = TAU * k as f64 / count as f64;
            let mut b = DMatrix::zeros(n, 3);
            b[(0, 0)] = 1.0;
            b[(1, 1)] = 1.0;
            b[(2, 2)] = (w * t).cos();
            b[(3, 2)] = (w * t).sin();
            GrPlane::from_basis(&b).unwrap()
        })
        .collect()
}

fn mech(n: usize, w: f64, count: usize) -> Mechanism {
    line_monodromy(&LoopPath::from_planes(&twisted_planes(n, w, count)).unwrap()).unwrap().mechanism
}

#[test]
fn half_twist_winds_once() {
    let r = line_monodromy(&LoopPath::from_planes(&twisted_planes(4, 0.5, 64)).unwrap()).unwrap();
    assert_eq!(r.mechanism, Mechanism::Winding { winding: 1 });
    assert_eq!(r.verdict, LoopVerdict::Obstructed);
    assert_eq!((r.common_dim, r.quotient_dim), (2, 2));
    assert_eq!(r.free_factor, (1, 0));
}

#[test]
fn full_twist_winds_twice() {
    assert_eq!(mech(4, 1.0, 64), Mechanism::Winding { winding: 2 });
}

#[test]
fn lifted_loops_keep_only_parity() {
    assert_eq!(mech(5, 1.0, 64), Mechanism::Parity { sign: 1 });
    assert_eq!(mech(5, 0.5, 64), Mechanism::Parity { sign: -1 });
}

#[test]
fn winding_ignores_basepoint_and_refinement() {
    let lp = LoopPath::from_planes(&twisted_planes(4, 1.5, 80)).unwrap();
    let w = line_monodromy(&lp).unwrap().mechanism;
    assert_eq!(w, Mechanism::Winding { winding: 3 });
    assert_eq!(line_monodromy(&lp.rotated(17)).unwrap().mechanism, w);
    assert_eq!(mech(4, 1.5, 160), w);
}

#[test]
fn reversal_and_repetition() {
    let lp = LoopPath::from_planes(&twisted_planes(4, 0.5, 48)).unwrap();
    assert_eq!(line_monodromy(&lp.reversed()).unwrap().mechanism, Mechanism::Winding { winding: -1 });
    assert_eq!(line_monodromy(&lp.repeated(2)).unwrap().mechanism, Mechanism::Winding { winding: 2 });
    let lifted = LoopPath::from_planes(&twisted_planes(5, 0.5, 48)).unwrap();
    assert_eq!(line_monodromy(&lifted.reversed()).unwrap().mechanism, Mechanism::Parity { sign: -1 });
    assert_eq!(line_monodromy(&lifted.repeated(2)).unwrap().mechanism, Mechanism::Parity { sign: 1 });
}

#[test]
fn coarse_loop_is_a_resolution_error() {
    let lp = LoopPath::from_planes(&twisted_planes(4, 1.0, 6)).unwrap();
    assert!(matches!(line_monodromy(&lp), Err(Error::Resolution(_))));
    assert_eq!(check_loop(&lp).verdict, LoopVerdict::Inconclusive);
}

#[test]
fn constant_plane_passes() {
    let planes = twisted_planes(4, 0.0, 10);
    let r = line_monodromy(&LoopPath::from_planes(&planes).unwrap()).unwrap();
    assert_eq!(r.verdict, LoopVerdict::Passes);
    assert_eq!(r.mechanism, Mechanism::None);
}

#[test]
fn normal_line_of_a_turning_surface() {
    // Tangent planes of a cone-like surface in ℝ³ whose normal circles once: the normal
    // returns to itself, so the planes give a trivial loop in ℝP².
    let planes: Vec<GrPlane> = (0..60)
        .map(|k| {
            let t = TAU * k as f64 / 60.0;
            let normal = nalgebra::DVector::from_vec(vec![0.6 * t.cos(), 0.6 * t.sin(), 0.8]);
            let a = nalgebra::DVector::from_vec(vec![-t.sin(), t.cos(), 0.0]);
            let b = normal.cross(&a);
            GrPlane::from_basis(&DMatrix::from_columns(&[a, b])).unwrap()
        })
        .collect();
    let r = line_monodromy(&LoopPath::from_planes(&planes).unwrap()).unwrap();
    assert_eq!((r.common_dim, r.quotient_dim), (0, 3));
    assert_eq!(r.mechanism, Mechanism::Parity { sign: 1 });
}

#[test]
fn wide_moving_factor_is_unsupported() {
    // 2-planes in ℝ⁴ with no common direction: a 2-plane moving in a 4-dimensional quotient.
    let planes: Vec<GrPlane> = (0..40)
        .map(|k| {
            let t = TAU * k as f64 / 40.0;
            let mut b = DMatrix::zeros(4, 2);
            b[(0, 0)] = t.cos();
            b[(2, 0)] = t.sin();
            b[(1, 1)] = t.cos();
            b[(3, 1)] = t.sin();
            GrPlane::from_basis(&b).unwrap()
        })
        .collect();
    let r = line_monodromy(&LoopPath::from_planes(&planes).unwrap()).unwrap();
    assert_eq!(r.verdict, LoopVerdict::Inconclusive);
}

#[test]
fn trace_has_one_row_per_sample() {
    let lp = LoopPath::from_planes(&twisted_planes(4, 0.5, 16)).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&lp, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(text.starts_with("position,sample,step,angle,line"));
}
