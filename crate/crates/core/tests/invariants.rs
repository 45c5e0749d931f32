use std::sync::Arc;

use bilinear_core::fiber::{self, FiberMatrix};
use bilinear_core::fields::{BilinearField, Mesh, TangentField};
use bilinear_core::geodesics::{
    christoffel_point, domain_time, geodesic_exp, geodesic_point, geodesic_velocity_endomorphism, integrate_point_rk4,
    DirectionInvariants,
};
use bilinear_core::metric::MetricParams;
use bilinear_core::random::InstanceRng;
use bilinear_core::splitting::{decompose_tangent, phi_split, slice_geodesic, DistributionFrame};

fn rel(a: &FiberMatrix, b: &FiberMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

fn bounded_direction(rng: &mut InstanceRng, b: &FiberMatrix) -> FiberMatrix {
    let h = rng.matrix(b.nrows(), b.ncols());
    let norm = fiber::left_divide(b, &h).unwrap().norm();
    if norm > 1.0 {
        h / norm
    } else {
        h
    }
}

fn alphas(n: usize) -> [f64; 3] {
    [-1.0, 1.0, 1.0 / n as f64]
}

/// `b'(t) = b(t)·(a'·Id + b'·H₀)`.
fn velocity(b0: &FiberMatrix, h: &FiberMatrix, p: &MetricParams, t: f64) -> FiberMatrix {
    let hh = fiber::left_divide(b0, h).unwrap();
    geodesic_point(b0, h, p, t).unwrap() * geodesic_velocity_endomorphism(&hh, p, t).unwrap()
}

#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), 1e-13, 40)
}

#[test]
fn closed_form_solves_the_geodesic_equation() {
    let mut rng = InstanceRng::new(11);
    let step = 1e-4;
    for i in 0..30 {
        let n = 1 + i % 3;
        let p = MetricParams::new(alphas(n)[i % 3], n).unwrap();
        let b0 = rng.structure(n);
        let h = bounded_direction(&mut rng, &b0);
        let root = DirectionInvariants::new(&fiber::left_divide(&b0, &h).unwrap(), &p).first_root();
        // Far out, ‖b''‖ ≪ ‖b‖ and the 1e-4 stencil only sees rounding.
        let t = (0.5 * root).min(1.0);
        let at = |s: f64| geodesic_point(&b0, &h, &p, s).unwrap();
        let second = (at(t + step) - at(t) * 2.0 + at(t - step)) / (step * step);
        let bt = at(t);
        let vt = velocity(&b0, &h, &p, t);
        let gamma = christoffel_point(&bt, &vt, &vt, &p).unwrap();
        assert!(rel(&second, &gamma) <= 1e-5, "instance {i}: {:e}", rel(&second, &gamma));
    }
}

#[test]
fn christoffel_is_the_initial_acceleration() {
    let mut rng = InstanceRng::new(12);
    let d = 1e-4;
    for i in 0..30 {
        let n = 1 + i % 3;
        let p = MetricParams::new(alphas(n)[i % 3], n).unwrap();
        let b0 = rng.structure(n);
        let h = bounded_direction(&mut rng, &b0);
        let v = |s: f64| velocity(&b0, &h, &p, s);
        let accel = (v(0.0) * -3.0 + v(d) * 4.0 - v(2.0 * d)) / (2.0 * d);
        let gamma = christoffel_point(&b0, &h, &h, &p).unwrap();
        if gamma.norm() < 1e-12 {
            assert!(accel.norm() < 1e-6);
            continue;
        }
        assert!(rel(&accel, &gamma) <= 1e-6, "instance {i}: {:e}", rel(&accel, &gamma));
    }
}

#[test]
fn b_coefficient_integrates_one_over_p() {
    let mut rng = InstanceRng::new(13);
    let mut crossings = 0;
    for i in 0..60 {
        let n = 2 + i % 2;
        let p = MetricParams::new(alphas(n)[i % 3], n).unwrap();
        let hh = rng.matrix(n, n) * 2.0;
        let inv = DirectionInvariants::new(&hh, &p);
        let root = inv.first_root();
        let t = if root.is_finite() { 0.9 * root } else { 3.0 };
        let c = inv.coefficients(t).unwrap();
        crossings += usize::from(c.branch == 1);
        let quad = integrate(&|s| 1.0 / inv.p(s), 0.0, t);
        assert!(
            (c.b_coef - quad).abs() <= 1e-9 * quad.abs().max(1.0),
            "instance {i}: {} vs {quad}",
            c.b_coef
        );
    }
    assert!(crossings > 0, "no instance crossed the arctan branch");
}

fn assert_degenerates(b0: &FiberMatrix, h: &FiberMatrix, p: &MetricParams, label: &str) {
    let mesh = Arc::new(Mesh::uniform(1).unwrap());
    let bf = BilinearField::constant(mesh.clone(), b0.clone()).unwrap();
    let hf = TangentField::constant(mesh, h.clone()).unwrap();
    let domain = domain_time(&bf, &hf, p).unwrap();
    assert_eq!(domain.per_point[0].class.name(), Some(label));
    let m_h = domain.m_h;
    assert!(m_h.is_finite(), "{label}");
    let inv = &domain.per_point[0].invariants;
    let ts: Vec<f64> = (2..=7).map(|j| m_h * (1.0 - 10f64.powi(-j))).collect();
    let ps: Vec<f64> = ts.iter().map(|&t| inv.p(t)).collect();
    // At least a simple root: p falls tenfold per decade.
    assert!(
        ps.windows(2).all(|w| w[1] < w[0]) && ps[5] < 1e-4 * ps[0],
        "{label}: p = {ps:?}"
    );
    let states: Vec<FiberMatrix> = ts.iter().map(|&t| geodesic_point(b0, h, p, t).unwrap()).collect();
    let dets: Vec<f64> = states.iter().map(|b| b.determinant().abs()).collect();
    let norms: Vec<f64> = states.iter().map(|b| b.norm()).collect();
    let degenerates = dets[5] < 1e-6 * dets[0] || norms[5] > 1e3 * norms[0];
    assert!(degenerates, "{label}: det {dets:?} norm {norms:?}");
}

#[test]
fn every_blow_up_class_degenerates_at_m_h() {
    let mut rng = InstanceRng::new(14);
    // Z: tr H₀² = 0, tr H < 0. A negative multiple of Id plus a nilpotent part.
    for n in 2..=3 {
        let b0 = rng.structure(n);
        let mut hh = FiberMatrix::identity(n, n) * -0.7;
        hh[(0, n - 1)] = 0.9;
        assert_degenerates(&b0, &(&b0 * hh), &MetricParams::new(1.0, n).unwrap(), "Z");
    }
    // E: α⁻¹·tr H₀² = −(tr H)². With α = −1, n = 2, H = diag(x, y) needs
    // x − y = √2·(x + y).
    let r2 = 2f64.sqrt();
    let b0 = rng.structure(2);
    let hh = FiberMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-1.0, -(1.0 - r2) / (1.0 + r2)]));
    let inv = DirectionInvariants::new(&hh, &MetricParams::new(-1.0, 2).unwrap());
    assert!((inv.c + inv.trace * inv.trace).abs() < 1e-15);
    assert_degenerates(&b0, &(&b0 * hh), &MetricParams::new(-1.0, 2).unwrap(), "E");

    // G and L occur on open sets; draw until both have appeared.
    let mut seen = [false; 2];
    for _ in 0..2000 {
        let n = 2 + rng.index(2);
        let p = MetricParams::new([-1.0, 1.0, 0.5, -0.5][rng.index(4)], n).unwrap();
        let b0 = rng.structure(n);
        let h = rng.matrix(n, n);
        let hh = fiber::left_divide(&b0, &h).unwrap();
        let inv = DirectionInvariants::new(&hh, &p);
        if !inv.first_root().is_finite() {
            continue;
        }
        let bf = BilinearField::constant(Arc::new(Mesh::uniform(1).unwrap()), b0.clone()).unwrap();
        let hf = TangentField::constant(bf.mesh().clone(), h.clone()).unwrap();
        let label = domain_time(&bf, &hf, &p).unwrap().per_point[0].class.name();
        let slot = match label {
            Some("G") => 0,
            Some("L") => 1,
            _ => continue,
        };
        if !seen[slot] {
            seen[slot] = true;
            assert_degenerates(&b0, &h, &p, label.unwrap());
        }
        if seen == [true; 2] {
            break;
        }
    }
    assert_eq!(seen, [true; 2], "G and L found");
}

#[test]
fn rk4_converges_at_fourth_order() {
    let p = MetricParams::new(0.5, 2).unwrap();
    let b0 = FiberMatrix::from_row_slice(2, 2, &[1.1, 0.2, 0.2, 0.9]);
    let h = FiberMatrix::from_row_slice(2, 2, &[0.3, -0.6, 0.5, -0.4]);
    let root = DirectionInvariants::new(&fiber::left_divide(&b0, &h).unwrap(), &p).first_root();
    let t = if root.is_finite() { 0.8 * root } else { 4.0 };
    let exact = geodesic_point(&b0, &h, &p, t).unwrap();
    let errs: Vec<f64> = [32, 64, 128]
        .iter()
        .map(|&steps| rel(&integrate_point_rk4(&b0, &h, &p, t, steps).unwrap(), &exact))
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((12.0..20.0).contains(&ratio), "errors {errs:?}");
    }
}

fn riemannian_field(rng: &mut InstanceRng, n: usize, points: usize) -> BilinearField {
    let mesh = rng.mesh(points);
    BilinearField::new(mesh, (0..points).map(|_| rng.riemannian(n)).collect()).unwrap()
}

fn symmetric_field(rng: &mut InstanceRng, mesh: &Arc<Mesh>, n: usize) -> TangentField {
    TangentField::new(
        mesh.clone(),
        (0..mesh.point_count()).map(|_| rng.symmetric(n)).collect(),
    )
    .unwrap()
}

#[test]
fn slices_preserve_volume() {
    let mut rng = InstanceRng::new(15);
    let d = 1e-5;
    for n in 2..=4 {
        for k in 1..n {
            let g = riemannian_field(&mut rng, n, 2);
            let v = DistributionFrame::canonical(n, k, 2).unwrap();
            let (_, h2) = decompose_tangent(&g, &symmetric_field(&mut rng, g.mesh(), n), &v).unwrap();
            for t in [0.1, 0.4, 0.8] {
                let at = |s: f64| slice_geodesic(&g, &h2, &v, s).unwrap();
                let (gp, gm, g0) = (at(t + d), at(t - d), at(t));
                for x in 0..2 {
                    let deriv = (gp.at(x) - gm.at(x)) / (2.0 * d);
                    let tr = fiber::trace(&fiber::left_divide(g0.at(x), &deriv).unwrap());
                    assert!(tr.abs() <= 1e-9 * deriv.norm().max(1.0), "n={n} k={k} t={t}: {tr:e}");
                }
            }
        }
    }
}

#[test]
fn d1_leaves_are_totally_geodesic() {
    let mut rng = InstanceRng::new(16);
    for n in 2..=4 {
        let p = MetricParams::standard(n).unwrap();
        for k in 1..n {
            let g = riemannian_field(&mut rng, n, 2);
            let v = DistributionFrame::canonical(n, k, 2).unwrap();
            let (h1, _) = decompose_tangent(&g, &symmetric_field(&mut rng, g.mesh(), n), &v).unwrap();
            let m_h = domain_time(&g, &h1, &p).unwrap().m_h;
            let horizon = if m_h.is_finite() { 0.9 * m_h } else { 1.5 };
            let p0 = phi_split(&g, &v).unwrap().p;
            for j in 1..=5 {
                let t = horizon * j as f64 / 5.0;
                let gt = geodesic_exp(&g, &h1, &p, t).unwrap();
                let velocity = TangentField::new(
                    g.mesh().clone(),
                    (0..2)
                        .map(|x| {
                            let hh = fiber::left_divide(g.at(x), h1.at(x)).unwrap();
                            let vx = gt.at(x) * geodesic_velocity_endomorphism(&hh, &p, t).unwrap();
                            (&vx + vx.transpose()) * 0.5
                        })
                        .collect(),
                )
                .unwrap();
                let (a, b) = decompose_tangent(&gt, &velocity, &v).unwrap();
                let pt = phi_split(&gt, &v).unwrap().p;
                for x in 0..2 {
                    let ratio = b.at(x).norm() / a.at(x).norm().max(1e-300);
                    assert!(ratio <= 1e-9, "n={n} k={k} t={t}: D2 part {ratio:e}");
                    assert!((pt.at(x) - p0.at(x)).norm() <= 1e-9, "P drifted");
                }
            }
        }
    }
}

#[test]
fn d2_directions_leave_the_volume_level() {
    let mut rng = InstanceRng::new(17);
    for n in 2..=4 {
        let p = MetricParams::standard(n).unwrap();
        for k in 1..n {
            let g = riemannian_field(&mut rng, n, 1);
            let v = DistributionFrame::canonical(n, k, 1).unwrap();
            let (_, h2) = decompose_tangent(&g, &symmetric_field(&mut rng, g.mesh(), n), &v).unwrap();
            let hh = fiber::left_divide(g.at(0), h2.at(0)).unwrap();
            assert!(fiber::trace(&hh).abs() < 1e-12);
            let m_h = domain_time(&g, &h2, &p).unwrap().m_h;
            let horizon = if m_h.is_finite() { 0.9 * m_h } else { 2.0 };
            let signs: Vec<f64> = (1..=10)
                .map(|j| {
                    let t = horizon * j as f64 / 10.0;
                    fiber::trace(&geodesic_velocity_endomorphism(&hh, &p, t).unwrap()).signum()
                })
                .collect();
            assert!(
                signs.iter().all(|s| *s == signs[0] && *s != 0.0),
                "n={n} k={k}: {signs:?}"
            );
        }
    }
}
