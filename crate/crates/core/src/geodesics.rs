//! Christoffel symbol, closed-form geodesics with their exact existence
//! time, the exponential map and its inverse, an RK4 oracle for the
//! geodesic equation, and the discrete energy functional.
//!
//! Along a geodesic from `b⁰` in direction `h` the matrix part stays in the
//! plane spanned by `Id` and `H₀` (`H = (b⁰)⁻¹h`):
//!
//! ```text
//! b(t) = b⁰ · exp(a(t)·Id + b(t)·H₀)
//! p(t) = 1 + (t/2)·tr H + (t²/16)·(tr(H)² + α⁻¹·tr(H₀²)) = exp(n·a(t)/2)
//! b'(t) = 1 / p(t),  b(0) = 0
//! ```
//!
//! so the geodesic lives exactly as long as `p` stays positive.

use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix};
use crate::fields::{BilinearField, TangentField};
use crate::metric::{metric_g_alpha, MetricParams};

/// Relative threshold below which `tr(H₀²)` is treated as zero.
pub const RATIONAL_THRESHOLD: f64 = 1e-13;
/// `‖B‖` above which the RK4 oracle reports a blow-up.
pub const OVERFLOW_GUARD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CoefficientCase {
    /// `α⁻¹·tr(H₀²) > 0`.
    Arctan,
    /// `α⁻¹·tr(H₀²) < 0`.
    Artanh,
    /// `tr(H₀²) = 0`.
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeodesicCoefficients {
    pub a: f64,
    pub b_coef: f64,
    /// 0 while `4 + t·tr H ≥ 0`, 1 once the arctan argument has crossed its pole.
    pub branch: u8,
    pub case: CoefficientCase,
}

/// The scalar data of a direction at one point: `tr H`, `tr(H₀²)` and `α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionInvariants {
    pub trace: f64,
    pub traceless_sq: f64,
    pub alpha: f64,
    pub n: usize,
    /// `α⁻¹·tr(H₀²)`, set to exactly zero in the rational case.
    pub c: f64,
    pub case: CoefficientCase,
}

impl DirectionInvariants {
    pub fn new(hh: &FiberMatrix, p: &MetricParams) -> Self {
        let trace = hh.trace();
        let h0 = fiber::traceless_part(hh);
        let traceless_sq = fiber::trace_of_product(&h0, &h0);
        let scale = hh.norm_squared();
        let (case, c) = if traceless_sq.abs() <= RATIONAL_THRESHOLD * scale {
            (CoefficientCase::Rational, 0.0)
        } else {
            let c = traceless_sq / p.alpha();
            if c > 0.0 {
                (CoefficientCase::Arctan, c)
            } else {
                (CoefficientCase::Artanh, c)
            }
        };
        DirectionInvariants {
            trace,
            traceless_sq,
            alpha: p.alpha(),
            n: p.n(),
            c,
            case,
        }
    }

    /// Coefficients `(1, tr(H)/2, (tr(H)² + α⁻¹tr(H₀²))/16)` of `p`.
    pub fn p_coeffs(&self) -> [f64; 3] {
        [1.0, self.trace / 2.0, (self.trace * self.trace + self.c) / 16.0]
    }

    pub fn p(&self, t: f64) -> f64 {
        let lin = 1.0 + t * self.trace / 4.0;
        lin * lin + t * t * self.c / 16.0
    }

    pub fn p_prime(&self, t: f64) -> f64 {
        let [_, c1, c2] = self.p_coeffs();
        c1 + 2.0 * c2 * t
    }

    /// Smallest positive root of `p`, or `+∞`.
    ///
    /// Writing `r = √(−α⁻¹tr H₀²)` (zero in the rational case),
    /// `16·p(t) = (4 + t·tr H − t·r)(4 + t·tr H + t·r)` and the first factor
    /// always vanishes first.
    pub fn first_root(&self) -> f64 {
        if self.c > 0.0 {
            return f64::INFINITY;
        }
        let r = (-self.c).sqrt();
        if r > self.trace {
            4.0 / (r - self.trace)
        } else {
            f64::INFINITY
        }
    }

    pub fn coefficients(&self, t: f64) -> Result<GeodesicCoefficients> {
        let limit = self.first_root();
        if !(t >= 0.0 && t < limit) {
            return Err(GeometryError::OutOfDomain { t, limit });
        }
        let denom = 4.0 + t * self.trace;
        let (b_coef, branch) = match self.case {
            CoefficientCase::Arctan => {
                let w = self.c.sqrt();
                // atan2 keeps the angle continuous through the pole at
                // 4 + t·tr H = 0: [0, π/2) before, π/2 at, (π/2, π) after.
                let angle = (t * w).atan2(denom);
                (4.0 / w * angle, u8::from(denom < 0.0))
            }
            CoefficientCase::Artanh => {
                let r = (-self.c).sqrt();
                (4.0 / r * (t * r / denom).atanh(), 0)
            }
            CoefficientCase::Rational => (4.0 * t / denom, 0),
        };
        let a = 2.0 / self.n as f64 * self.p(t).ln();
        Ok(GeodesicCoefficients {
            a,
            b_coef,
            branch,
            case: self.case,
        })
    }

    /// `(a'(t), b'(t)) = ((2/n)·p'/p, 1/p)`.
    pub fn coefficient_rates(&self, t: f64) -> (f64, f64) {
        let p = self.p(t);
        (2.0 / self.n as f64 * self.p_prime(t) / p, 1.0 / p)
    }
}

/// Closed-form `a(t)`, `b(t)` for the endomorphism `H = (b⁰)⁻¹h`.
pub fn geodesic_coeffs(hh: &FiberMatrix, p: &MetricParams, t: f64) -> Result<GeodesicCoefficients> {
    check_dim(hh, p)?;
    DirectionInvariants::new(hh, p).coefficients(t)
}

fn check_dim(m: &FiberMatrix, p: &MetricParams) -> Result<()> {
    if m.nrows() != p.n() || m.ncols() != p.n() {
        return Err(GeometryError::Shape(format!(
            "fiber is {}×{} but the metric has n = {}",
            m.nrows(),
            m.ncols(),
            p.n()
        )));
    }
    Ok(())
}

/// Membership of one point in the sets `Z`, `G`, `E`, `L`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct DomainClass {
    pub z: bool,
    pub g: bool,
    pub e: bool,
    pub l: bool,
}

impl DomainClass {
    pub fn is_empty(&self) -> bool {
        !(self.z || self.g || self.e || self.l)
    }

    pub fn name(&self) -> Option<&'static str> {
        match (self.z, self.g, self.e, self.l) {
            (true, ..) => Some("Z"),
            (_, true, ..) => Some("G"),
            (_, _, true, _) => Some("E"),
            (.., true) => Some("L"),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointDomain {
    pub class: DomainClass,
    /// Membership recomputed from the signs of `γ(h,h) = tr H²` and `γ^α(h,h)`.
    pub class_from_gamma: DomainClass,
    pub first_root: f64,
    pub p_coeffs: [f64; 3],
    /// The closed-form bound attached to the point's set (`z`, `g`, `e` or `l`).
    pub set_bound: Option<f64>,
    pub invariants: DirectionInvariants,
}

/// A point where the set-wise closed-form bound and the root of `p` disagree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainDiscrepancy {
    pub point: usize,
    pub set: &'static str,
    pub set_bound: f64,
    pub first_root: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeodesicDomain {
    pub m_h: f64,
    pub per_point: Vec<PointDomain>,
    pub discrepancies: Vec<DomainDiscrepancy>,
}

impl GeodesicDomain {
    pub fn contains(&self, t: f64) -> bool {
        t >= 0.0 && t < self.m_h
    }
}

fn near_zero(x: f64, scale: f64) -> bool {
    x.abs() <= RATIONAL_THRESHOLD * scale.max(f64::MIN_POSITIVE)
}

fn classify(inv: &DirectionInvariants, hh: &FiberMatrix) -> (DomainClass, DomainClass, Option<f64>) {
    let tau = inv.trace;
    let scale = hh.norm_squared();
    let c = inv.c;
    let on_light_cone = near_zero(c + tau * tau, scale / inv.alpha.abs());
    let mut class = DomainClass::default();
    if inv.case == CoefficientCase::Rational {
        class.z = tau < 0.0;
    } else if on_light_cone {
        class.e = tau < 0.0;
    } else if c < 0.0 && c > -tau * tau {
        class.g = tau < 0.0;
    } else if -tau * tau > c {
        class.l = true;
    }

    let alpha = inv.alpha;
    let s = inv.traceless_sq;
    let gamma = s + tau * tau / inv.n as f64;
    let gamma_alpha = s + alpha * tau * tau;
    let mut by_gamma = DomainClass::default();
    if inv.case == CoefficientCase::Rational {
        by_gamma.z = tau < 0.0;
    } else if near_zero(gamma_alpha, scale) {
        by_gamma.e = tau < 0.0;
    } else if (alpha < 0.0 && gamma_alpha > 0.0) || (alpha > 0.0 && gamma_alpha < 0.0) {
        by_gamma.l = true;
    } else if tau < 0.0
        && ((alpha < 0.0 && alpha * gamma < gamma_alpha && gamma_alpha < 0.0)
            || (alpha > 0.0 && alpha * gamma > gamma_alpha && gamma_alpha > 0.0))
    {
        by_gamma.g = true;
    }

    let bound = if class.z {
        Some(-4.0 / tau)
    } else if class.e {
        Some(-2.0 / tau)
    } else if class.g || class.l {
        Some(4.0 * (-alpha * tau - (-alpha * s).sqrt()) / (s + alpha * tau * tau))
    } else {
        None
    };
    (class, by_gamma, bound)
}

/// Per-point domain data and `m_h = min_x first_root(x)`.
///
/// The first positive root of `p` is authoritative. The set-wise bounds are
/// reported alongside, and any point where they differ from the root by more
/// than `1e−9` (relative) is recorded as a discrepancy.
pub fn domain_time(b0: &BilinearField, h: &TangentField, p: &MetricParams) -> Result<GeodesicDomain> {
    b0.check_compatible(h)?;
    let mut per_point = Vec::with_capacity(b0.len());
    let mut discrepancies = Vec::new();
    let mut m_h = f64::INFINITY;
    for (i, (bx, hx)) in b0.matrices().iter().zip(h.matrices()).enumerate() {
        check_dim(bx, p)?;
        let hh = fiber::left_divide(bx, hx)?;
        let inv = DirectionInvariants::new(&hh, p);
        let (class, class_from_gamma, set_bound) = classify(&inv, &hh);
        let first_root = inv.first_root();
        if let (Some(bound), Some(set)) = (set_bound, class.name()) {
            let agree = (bound - first_root).abs() <= 1e-9 * first_root.abs().max(1.0);
            if !agree {
                discrepancies.push(DomainDiscrepancy {
                    point: i,
                    set,
                    set_bound: bound,
                    first_root,
                });
            }
        }
        m_h = m_h.min(first_root);
        per_point.push(PointDomain {
            class,
            class_from_gamma,
            first_root,
            p_coeffs: inv.p_coeffs(),
            set_bound,
            invariants: inv,
        });
    }
    Ok(GeodesicDomain {
        m_h,
        per_point,
        discrepancies,
    })
}

/// The geodesic at one point: `b⁰ · exp(a(t)·Id + b(t)·H₀)`.
pub fn geodesic_point(b0: &FiberMatrix, h: &FiberMatrix, p: &MetricParams, t: f64) -> Result<FiberMatrix> {
    check_dim(b0, p)?;
    let hh = fiber::left_divide(b0, h)?;
    geodesic_point_from_endomorphism(b0, &hh, p, t)
}

fn geodesic_point_from_endomorphism(
    b0: &FiberMatrix,
    hh: &FiberMatrix,
    p: &MetricParams,
    t: f64,
) -> Result<FiberMatrix> {
    let inv = DirectionInvariants::new(hh, p);
    let coeffs = inv.coefficients(t)?;
    let n = hh.nrows();
    let mut x = fiber::traceless_part(hh) * coeffs.b_coef;
    for i in 0..n {
        x[(i, i)] += coeffs.a;
    }
    Ok(b0 * fiber::matrix_exp(&x))
}

/// `Exp^α_{b⁰}(t·h)` for `0 ≤ t < m_h`.
pub fn geodesic_exp(b0: &BilinearField, h: &TangentField, p: &MetricParams, t: f64) -> Result<BilinearField> {
    let domain = domain_time(b0, h, p)?;
    if !domain.contains(t) {
        return Err(GeometryError::OutOfDomain { t, limit: domain.m_h });
    }
    let mut out = Vec::with_capacity(b0.len());
    for (bx, hx) in b0.matrices().iter().zip(h.matrices()) {
        out.push(geodesic_point(bx, hx, p, t)?);
    }
    BilinearField::new(b0.mesh().clone(), out)
}

/// `g^{-1}g'(t) = a'(t)·Id + b'(t)·H₀` along the closed-form geodesic at one point.
pub fn geodesic_velocity_endomorphism(hh: &FiberMatrix, p: &MetricParams, t: f64) -> Result<FiberMatrix> {
    let inv = DirectionInvariants::new(hh, p);
    inv.coefficients(t)?;
    let (da, db) = inv.coefficient_rates(t);
    let n = hh.nrows();
    let mut x = fiber::traceless_part(hh) * db;
    for i in 0..n {
        x[(i, i)] += da;
    }
    Ok(x)
}

/// `Γ^α_b(h, k)` at one point.
pub fn christoffel_point(b: &FiberMatrix, h: &FiberMatrix, k: &FiberMatrix, p: &MetricParams) -> Result<FiberMatrix> {
    let lu = fiber::invertible_lu(b)?;
    let hh = lu.solve(h).ok_or_else(|| GeometryError::domain("singular structure"))?;
    let kk = lu.solve(k).ok_or_else(|| GeometryError::domain("singular structure"))?;
    let (alpha, n) = (p.alpha(), p.nf());
    let (th, tk) = (hh.trace(), kk.trace());
    let thk = fiber::trace_of_product(&hh, &kk);
    let scalar = thk / (4.0 * alpha * n) + (alpha * n - 1.0) / (4.0 * alpha * n * n) * th * tk;
    Ok((h * &kk + k * &hh) * 0.5 - k * (0.25 * th) - h * (0.25 * tk) + b * scalar)
}

/// `Γ^α_b(h, k)`, pointwise over the mesh.
pub fn christoffel(b: &BilinearField, h: &TangentField, k: &TangentField, p: &MetricParams) -> Result<TangentField> {
    b.check_compatible(h)?;
    b.check_compatible(k)?;
    let out = b
        .matrices()
        .iter()
        .zip(h.matrices())
        .zip(k.matrices())
        .map(|((bx, hx), kx)| christoffel_point(bx, hx, kx, p))
        .collect::<Result<Vec<_>>>()?;
    TangentField::new(b.mesh().clone(), out)
}

/// `(cos u, sin u / u)` with `u = √w / 4`, continued analytically to `w < 0`.
fn psi_factors(w: f64) -> (f64, f64) {
    if w >= 0.0 {
        let u = w.sqrt() / 4.0;
        if u < 1e-6 {
            (1.0 - u * u / 2.0, 1.0 - u * u / 6.0)
        } else {
            (u.cos(), u.sin() / u)
        }
    } else {
        // cos(iz) = cosh z, sin(iz)/(iz) = sinh z / z.
        let u = (-w).sqrt() / 4.0;
        if u < 1e-6 {
            (1.0 + u * u / 2.0, 1.0 + u * u / 6.0)
        } else {
            (u.cosh(), u.sinh() / u)
        }
    }
}

/// Inverse `ψ` of `H ↦ a_{α,H}(1)·Id + b_{α,H}(1)·H₀` on its image.
pub fn psi(l: &FiberMatrix, p: &MetricParams) -> Result<FiberMatrix> {
    check_dim(l, p)?;
    let n = p.nf();
    let l0 = fiber::traceless_part(l);
    let w = fiber::trace_of_product(&l0, &l0) / p.alpha();
    if w > 0.0 && w.sqrt() / 4.0 >= std::f64::consts::PI {
        return Err(GeometryError::NotInImage(format!(
            "arctan angle {} exceeds π",
            w.sqrt() / 4.0
        )));
    }
    let (cos_like, sinc_like) = psi_factors(w);
    let e = (l.trace() / 4.0).exp();
    let mut out = l0 * (e * sinc_like);
    let diag = 4.0 / n * (e * cos_like - 1.0);
    for i in 0..p.n() {
        out[(i, i)] += diag;
    }
    Ok(out)
}

/// Inverse of the exponential map: the `h` with `Exp_{b⁰}(h) = b¹`.
pub fn log_map(b0: &BilinearField, b1: &BilinearField, p: &MetricParams) -> Result<TangentField> {
    b0.check_compatible(b1)?;
    let mut out = Vec::with_capacity(b0.len());
    for (i, (bx, cx)) in b0.matrices().iter().zip(b1.matrices()).enumerate() {
        check_dim(bx, p)?;
        let l = fiber::matrix_log(&fiber::left_divide(bx, cx)?)?;
        let hh = psi(&l, p)?;
        let root = DirectionInvariants::new(&hh, p).first_root();
        if !(root > 1.0) {
            return Err(GeometryError::NotInImage(format!(
                "point {i}: recovered direction only lives until t = {root}"
            )));
        }
        out.push(bx * hh);
    }
    TangentField::new(b0.mesh().clone(), out)
}

/// `B' = (1/(4αn))·tr(B²)·Id − ½·tr(B)·B + ((αn−1)/(4αn²))·tr(B)²·Id`.
fn b_frame_rhs(bb: &FiberMatrix, alpha: f64, n: f64) -> FiberMatrix {
    let tr = bb.trace();
    let tr2 = fiber::trace_of_product(bb, bb);
    let scalar = tr2 / (4.0 * alpha * n) + (alpha * n - 1.0) / (4.0 * alpha * n * n) * tr * tr;
    let mut out = bb * (-0.5 * tr);
    for i in 0..bb.nrows() {
        out[(i, i)] += scalar;
    }
    out
}

/// Fixed-step RK4 for the first-order system `b' = bB`, `B' = f(B)` at one point.
pub fn integrate_point_rk4(
    b0: &FiberMatrix,
    h: &FiberMatrix,
    p: &MetricParams,
    t_end: f64,
    steps: usize,
) -> Result<FiberMatrix> {
    check_dim(b0, p)?;
    let (alpha, n) = (p.alpha(), p.nf());
    let mut b = b0.clone();
    let mut bb = fiber::left_divide(b0, h)?;
    let dt = t_end / steps as f64;
    for step in 0..steps {
        let k1b = &b * &bb;
        let k1 = b_frame_rhs(&bb, alpha, n);

        let b2 = &b + &k1b * (0.5 * dt);
        let bb2 = &bb + &k1 * (0.5 * dt);
        let k2b = &b2 * &bb2;
        let k2 = b_frame_rhs(&bb2, alpha, n);

        let b3 = &b + &k2b * (0.5 * dt);
        let bb3 = &bb + &k2 * (0.5 * dt);
        let k3b = &b3 * &bb3;
        let k3 = b_frame_rhs(&bb3, alpha, n);

        let b4 = &b + &k3b * dt;
        let bb4 = &bb + &k3 * dt;
        let k4b = &b4 * &bb4;
        let k4 = b_frame_rhs(&bb4, alpha, n);

        b += (k1b + (k2b + k3b) * 2.0 + k4b) * (dt / 6.0);
        bb += (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0);

        let norm = bb.norm();
        if !(norm <= OVERFLOW_GUARD) {
            return Err(GeometryError::BlowupDetected {
                t: dt * (step + 1) as f64,
                norm,
            });
        }
    }
    Ok(b)
}

/// RK4 integration of the geodesic equation in the `B = b⁻¹b_t` framing.
pub fn integrate_geodesic_numeric(
    b0: &BilinearField,
    h: &TangentField,
    p: &MetricParams,
    t_end: f64,
    steps: usize,
) -> Result<BilinearField> {
    if steps == 0 {
        return Err(GeometryError::domain("at least one step is required"));
    }
    let domain = domain_time(b0, h, p)?;
    if !domain.contains(t_end) {
        return Err(GeometryError::OutOfDomain {
            t: t_end,
            limit: domain.m_h,
        });
    }
    let out = b0
        .matrices()
        .iter()
        .zip(h.matrices())
        .map(|(bx, hx)| integrate_point_rk4(bx, hx, p, t_end, steps))
        .collect::<Result<Vec<_>>>()?;
    BilinearField::new(b0.mesh().clone(), out)
}

/// Trapezoidal `½∫G^α_b(b_t, b_t) dt` over samples on a uniform grid of spacing `dt`.
///
/// Velocities use central differences inside and second-order one-sided
/// differences at the ends.
pub fn discrete_energy(curve: &[BilinearField], dt: f64, p: &MetricParams) -> Result<f64> {
    if curve.len() < 3 {
        return Err(GeometryError::domain("discrete energy needs at least 3 samples"));
    }
    if !(dt > 0.0) {
        return Err(GeometryError::domain("time step must be positive"));
    }
    for c in &curve[1..] {
        curve[0].check_compatible(c)?;
    }
    let last = curve.len() - 1;
    let mesh = curve[0].mesh().clone();
    let mut integrand = Vec::with_capacity(curve.len());
    for j in 0..=last {
        let vel: Vec<FiberMatrix> = (0..mesh.point_count())
            .map(|x| {
                let at = |k: usize| curve[k].at(x);
                if j == 0 {
                    (at(0) * -3.0 + at(1) * 4.0 - at(2)) / (2.0 * dt)
                } else if j == last {
                    (at(last) * 3.0 - at(last - 1) * 4.0 + at(last - 2)) / (2.0 * dt)
                } else {
                    (at(j + 1) - at(j - 1)) / (2.0 * dt)
                }
            })
            .collect();
        let v = TangentField::new(mesh.clone(), vel)?;
        integrand.push(metric_g_alpha(&curve[j], &v, &v, p)?);
    }
    let mut total = 0.0;
    for w in integrand.windows(2) {
        total += 0.5 * (w[0] + w[1]) * dt;
    }
    Ok(0.5 * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Mesh;
    use nalgebra::dmatrix;
    use std::sync::Arc;

    fn single(m: FiberMatrix) -> (Arc<Mesh>, FiberMatrix) {
        (Arc::new(Mesh::uniform(1).unwrap()), m)
    }

    fn id2() -> FiberMatrix {
        FiberMatrix::identity(2, 2)
    }

    /// Composite Simpson quadrature of `1/p` on [0, t].
    fn quad_inv_p(inv: &DirectionInvariants, t: f64, panels: usize) -> f64 {
        let hstep = t / panels as f64;
        let f = |s: f64| 1.0 / inv.p(s);
        let mut acc = f(0.0) + f(t);
        for i in 1..panels {
            let s = i as f64 * hstep;
            acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(s);
        }
        acc * hstep / 3.0
    }

    #[test]
    fn christoffel_examples() {
        for alpha in [0.25, -1.0, 3.0] {
            let p = MetricParams::new(alpha, 2).unwrap();
            let g = christoffel_point(&id2(), &id2(), &id2(), &p).unwrap();
            assert!((g - id2() * 0.5).norm() < 1e-15);
        }
        let p = MetricParams::new(0.25, 2).unwrap();
        let s = dmatrix![0.0, 1.0; 1.0, 0.0];
        let g = christoffel_point(&id2(), &s, &s, &p).unwrap();
        assert!((g - id2() * 2.0).norm() < 1e-15);
        let z = FiberMatrix::zeros(2, 2);
        assert_eq!(christoffel_point(&id2(), &z, &s, &p).unwrap(), z);
    }

    #[test]
    fn coefficient_examples() {
        let p = MetricParams::new(0.7, 2).unwrap();
        let c = geodesic_coeffs(&id2(), &p, 1.0).unwrap();
        assert_eq!(c.case, CoefficientCase::Rational);
        assert!((c.a - 2.25f64.ln()).abs() < 1e-15);
        assert!((c.b_coef - 2.0 / 3.0).abs() < 1e-15);
        let inv = DirectionInvariants::new(&id2(), &p);
        assert!((quad_inv_p(&inv, 1.0, 2000) - 2.0 / 3.0).abs() < 1e-12);

        let c0 = geodesic_coeffs(&dmatrix![0.3, 1.0; -2.0, 0.1], &p, 0.0).unwrap();
        assert_eq!((c0.a, c0.b_coef), (0.0, 0.0));
    }

    #[test]
    fn arctan_branch_crossing() {
        let p = MetricParams::new(1.0, 2).unwrap();
        let hh = dmatrix![-3.0, 0.0; 0.0, 1.0];
        let inv = DirectionInvariants::new(&hh, &p);
        assert_eq!(inv.case, CoefficientCase::Arctan);
        let want = 4.0 / 8f64.sqrt() * std::f64::consts::FRAC_PI_2;
        let at = inv.coefficients(2.0).unwrap();
        assert!((at.b_coef - want).abs() < 1e-14);
        assert_eq!(at.branch, 0);
        // p(s) = 1 − s + 0.75 s²
        assert!((inv.p(1.3) - (1.0 - 1.3 + 0.75 * 1.69)).abs() < 1e-15);
        assert!((quad_inv_p(&inv, 2.0, 4000) - want).abs() < 1e-11);
        let before = inv.coefficients(2.0 - 1e-9).unwrap();
        let after = inv.coefficients(2.0 + 1e-9).unwrap();
        assert_eq!(after.branch, 1);
        assert!((after.b_coef - before.b_coef).abs() < 1e-8);
        assert!((inv.coefficients(5.0).unwrap().b_coef - quad_inv_p(&inv, 5.0, 8000)).abs() < 1e-10);
    }

    #[test]
    fn closed_form_examples() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh.clone(), id.clone()).unwrap();
        let h = TangentField::constant(mesh.clone(), id.clone()).unwrap();
        let p = MetricParams::new(-0.4, 2).unwrap();
        let b1 = geodesic_exp(&b0, &h, &p, 1.0).unwrap();
        assert!((b1.at(0) - &id * 2.25).norm() < 1e-14);

        let zero = TangentField::zeros(mesh.clone(), 2);
        let same = geodesic_exp(&b0, &zero, &p, 17.0).unwrap();
        assert_eq!(same.at(0), b0.at(0));

        let p1 = MetricParams::new(1.0, 2).unwrap();
        let d = dmatrix![1.0, 0.0; 0.0, -1.0];
        let hd = TangentField::constant(mesh, d.clone()).unwrap();
        let c = geodesic_coeffs(&d, &p1, 1.0).unwrap();
        assert!((c.a - 1.125f64.ln()).abs() < 1e-15);
        let want_b = 4.0 / 2f64.sqrt() * (2f64.sqrt() / 4.0).atan();
        assert!((c.b_coef - want_b).abs() < 1e-15);
        let got = geodesic_exp(&b0, &hd, &p1, 1.0).unwrap();
        let want = dmatrix![(c.a + want_b).exp(), 0.0; 0.0, (c.a - want_b).exp()];
        assert!((got.at(0) - want).norm() < 1e-13);
        let rk = integrate_geodesic_numeric(&b0, &hd, &p1, 1.0, 200).unwrap();
        assert!((rk.at(0) - got.at(0)).norm() < 1e-6);
    }

    #[test]
    fn domain_examples() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh.clone(), id.clone()).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();

        let neg = TangentField::constant(mesh.clone(), -&id).unwrap();
        let d = domain_time(&b0, &neg, &p).unwrap();
        assert_eq!(d.m_h, 2.0);
        assert!(d.per_point[0].class.z);
        assert!(d.discrepancies.is_empty());

        let pos = TangentField::constant(mesh.clone(), id.clone()).unwrap();
        let d = domain_time(&b0, &pos, &p).unwrap();
        assert_eq!(d.m_h, f64::INFINITY);
        assert!(d.per_point[0].class.is_empty());

        let pm = MetricParams::new(-1.0, 2).unwrap();
        let h = TangentField::constant(mesh, dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap();
        let d = domain_time(&b0, &h, &pm).unwrap();
        assert!((d.m_h - 2.0 * 2f64.sqrt()).abs() < 1e-15);
        assert!(d.per_point[0].class.l);
        assert!(d.per_point[0].class_from_gamma.l);
        // The set-wise bound carries the opposite sign here.
        assert_eq!(d.discrepancies.len(), 1);
        assert!((d.discrepancies[0].set_bound + 2.0 * 2f64.sqrt()).abs() < 1e-14);
        assert_eq!(d.per_point[0].p_coeffs, [1.0, 0.0, -1.0 / 8.0]);
    }

    #[test]
    fn evaluation_at_m_h_is_out_of_domain() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh.clone(), id.clone()).unwrap();
        let neg = TangentField::constant(mesh, -&id).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        assert!(matches!(
            geodesic_exp(&b0, &neg, &p, 2.0),
            Err(GeometryError::OutOfDomain { .. })
        ));
        assert!(geodesic_exp(&b0, &neg, &p, 1.999).is_ok());
        assert!(matches!(
            integrate_geodesic_numeric(&b0, &neg, &p, 3.0, 10),
            Err(GeometryError::OutOfDomain { .. })
        ));
        assert!(geodesic_exp(&b0, &neg, &p, -0.1).is_err());
    }

    #[test]
    fn log_map_examples() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh.clone(), id.clone()).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        let h = log_map(&b0, &b0, &p).unwrap();
        assert_eq!(h.at(0), &FiberMatrix::zeros(2, 2));

        let b1 = BilinearField::constant(mesh.clone(), &id * 2.25).unwrap();
        let h = log_map(&b0, &b1, &p).unwrap();
        assert!((h.at(0) - &id).norm() < 1e-12);

        let d = TangentField::constant(mesh, dmatrix![1.0, 0.0; 0.0, -1.0]).unwrap();
        let b1 = geodesic_exp(&b0, &d, &p, 1.0).unwrap();
        let back = log_map(&b0, &b1, &p).unwrap();
        assert!((back.at(0) - d.at(0)).norm() < 1e-8);
    }

    #[test]
    fn log_map_handles_hyperbolic_and_nilpotent_directions() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh.clone(), id).unwrap();
        let pm = MetricParams::new(-1.0, 2).unwrap();
        let d = TangentField::constant(mesh.clone(), dmatrix![0.4, 0.0; 0.0, -0.2]).unwrap();
        let b1 = geodesic_exp(&b0, &d, &pm, 1.0).unwrap();
        let back = log_map(&b0, &b1, &pm).unwrap();
        assert!((back.at(0) - d.at(0)).norm() < 1e-10);

        let nil = TangentField::constant(mesh, dmatrix![0.2, 0.5; 0.0, 0.2]).unwrap();
        let b1 = geodesic_exp(&b0, &nil, &pm, 1.0).unwrap();
        let back = log_map(&b0, &b1, &pm).unwrap();
        assert!((back.at(0) - nil.at(0)).norm() < 1e-10);
    }

    #[test]
    fn rk4_examples() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh.clone(), id.clone()).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        let zero = TangentField::zeros(mesh.clone(), 2);
        assert_eq!(integrate_geodesic_numeric(&b0, &zero, &p, 1.0, 10).unwrap().at(0), &id);
        let h = TangentField::constant(mesh, id.clone()).unwrap();
        let b1 = integrate_geodesic_numeric(&b0, &h, &p, 1.0, 1000).unwrap();
        assert!((b1.at(0) - &id * 2.25).norm() < 1e-9);
        assert!(integrate_geodesic_numeric(&b0, &h, &p, 1.0, 0).is_err());
    }

    #[test]
    fn energy_needs_three_samples() {
        let (mesh, id) = single(id2());
        let b0 = BilinearField::constant(mesh, id).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        assert!(discrete_energy(&[b0.clone(), b0.clone()], 0.1, &p).is_err());
        assert_eq!(discrete_energy(&[b0.clone(), b0.clone(), b0], 0.1, &p).unwrap(), 0.0);
    }
}
