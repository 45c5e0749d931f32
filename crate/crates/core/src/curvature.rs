//! Curvature of `(𝔅, G^α)`: a closed form, pointwise in the base, and a
//! finite-difference oracle built from the Christoffel symbol alone.

use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix};
use crate::fields::{BilinearField, TangentField};
use crate::geodesics::christoffel_point;
use crate::metric::{gamma_endomorphisms, MetricParams};

pub const DEFAULT_EPS: f64 = 1e-4;

/// Coefficients of the four term groups in
///
/// ```text
/// b⁻¹R(h,k)l = c₁[[H,K],L]
///            + c₂(−tr(HL)K + tr(KL)H)
///            + c₃(tr H tr L·K − tr K tr L·H)
///            + c₄(tr(HL)tr K − tr(KL)tr H)·Id
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureCoefficients {
    pub commutator: f64,
    pub trace_pair: f64,
    pub trace_trace: f64,
    pub identity: f64,
}

impl CurvatureCoefficients {
    /// `c₁ = 1/4`, `c₂ = 1/(16α)`, `c₃ = c₄ = 1/(16αn)`.
    ///
    /// These are the values forced by the Christoffel symbol. They reduce to
    /// `(1/4, n/16, 1/16, 1/16)` at `α = 1/n`.
    pub fn for_metric(p: &MetricParams) -> Self {
        let (alpha, n) = (p.alpha(), p.nf());
        CurvatureCoefficients {
            commutator: 0.25,
            trace_pair: 1.0 / (16.0 * alpha),
            trace_trace: 1.0 / (16.0 * alpha * n),
            identity: 1.0 / (16.0 * alpha * n),
        }
    }
}

fn bracket(a: &FiberMatrix, b: &FiberMatrix) -> FiberMatrix {
    a * b - b * a
}

/// `b⁻¹R(h,k)l` from the endomorphisms `H, K, L`.
pub fn curvature_endomorphism(
    hh: &FiberMatrix,
    kk: &FiberMatrix,
    ll: &FiberMatrix,
    c: &CurvatureCoefficients,
) -> FiberMatrix {
    let (th, tk, tl) = (hh.trace(), kk.trace(), ll.trace());
    let thl = fiber::trace_of_product(hh, ll);
    let tkl = fiber::trace_of_product(kk, ll);
    let mut out = bracket(&bracket(hh, kk), ll) * c.commutator
        + (hh * tkl - kk * thl) * c.trace_pair
        + (kk * (th * tl) - hh * (tk * tl)) * c.trace_trace;
    let diag = c.identity * (thl * tk - tkl * th);
    for i in 0..out.nrows() {
        out[(i, i)] += diag;
    }
    out
}

/// Closed-form `R_b(h,k)l` at one point with explicit coefficients.
pub fn curvature_point_with(
    b: &FiberMatrix,
    h: &FiberMatrix,
    k: &FiberMatrix,
    l: &FiberMatrix,
    c: &CurvatureCoefficients,
) -> Result<FiberMatrix> {
    let lu = fiber::invertible_lu(b)?;
    let solve = |m: &FiberMatrix| lu.solve(m).ok_or_else(|| GeometryError::domain("singular structure"));
    let (hh, kk, ll) = (solve(h)?, solve(k)?, solve(l)?);
    Ok(b * curvature_endomorphism(&hh, &kk, &ll, c))
}

pub fn curvature_point(
    b: &FiberMatrix,
    h: &FiberMatrix,
    k: &FiberMatrix,
    l: &FiberMatrix,
    p: &MetricParams,
) -> Result<FiberMatrix> {
    curvature_point_with(b, h, k, l, &CurvatureCoefficients::for_metric(p))
}

fn pointwise<F>(b: &BilinearField, h: &TangentField, k: &TangentField, l: &TangentField, f: F) -> Result<TangentField>
where
    F: Fn(&FiberMatrix, &FiberMatrix, &FiberMatrix, &FiberMatrix) -> Result<FiberMatrix>,
{
    b.check_compatible(h)?;
    b.check_compatible(k)?;
    b.check_compatible(l)?;
    let out = (0..b.len())
        .map(|x| f(b.at(x), h.at(x), k.at(x), l.at(x)))
        .collect::<Result<Vec<_>>>()?;
    TangentField::new(b.mesh().clone(), out)
}

pub fn curvature_closed_form(
    b: &BilinearField,
    h: &TangentField,
    k: &TangentField,
    l: &TangentField,
    p: &MetricParams,
) -> Result<TangentField> {
    let c = CurvatureCoefficients::for_metric(p);
    pointwise(b, h, k, l, |bx, hx, kx, lx| curvature_point_with(bx, hx, kx, lx, &c))
}

/// `dΓ(h)(k,l)` by central differences of the Christoffel symbol in the base point.
fn christoffel_derivative(
    b: &FiberMatrix,
    dir: &FiberMatrix,
    k: &FiberMatrix,
    l: &FiberMatrix,
    p: &MetricParams,
    eps: f64,
) -> Result<FiberMatrix> {
    let plus = christoffel_point(&(b + dir * eps), k, l, p)?;
    let minus = christoffel_point(&(b - dir * eps), k, l, p)?;
    Ok((plus - minus) / (2.0 * eps))
}

/// `R(h,k)l = dΓ(h)(k,l) − dΓ(k)(h,l) − Γ(h,Γ(k,l)) + Γ(k,Γ(h,l))` at one point.
pub fn curvature_fd_point(
    b: &FiberMatrix,
    h: &FiberMatrix,
    k: &FiberMatrix,
    l: &FiberMatrix,
    p: &MetricParams,
    eps: f64,
) -> Result<FiberMatrix> {
    if !(eps > 0.0) {
        return Err(GeometryError::domain("finite-difference step must be positive"));
    }
    let d_h = christoffel_derivative(b, h, k, l, p, eps)?;
    let d_k = christoffel_derivative(b, k, h, l, p, eps)?;
    let g_kl = christoffel_point(b, k, l, p)?;
    let g_hl = christoffel_point(b, h, l, p)?;
    Ok(d_h - d_k - christoffel_point(b, h, &g_kl, p)? + christoffel_point(b, k, &g_hl, p)?)
}

/// One Richardson step on top of [`curvature_fd_point`]: `(4R(ε/2) − R(ε))/3`.
pub fn curvature_fd_point_richardson(
    b: &FiberMatrix,
    h: &FiberMatrix,
    k: &FiberMatrix,
    l: &FiberMatrix,
    p: &MetricParams,
    eps: f64,
) -> Result<FiberMatrix> {
    let coarse = curvature_fd_point(b, h, k, l, p, eps)?;
    let fine = curvature_fd_point(b, h, k, l, p, eps / 2.0)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

pub fn curvature_fd_oracle(
    b: &BilinearField,
    h: &TangentField,
    k: &TangentField,
    l: &TangentField,
    p: &MetricParams,
    eps: f64,
) -> Result<TangentField> {
    pointwise(b, h, k, l, |bx, hx, kx, lx| curvature_fd_point(bx, hx, kx, lx, p, eps))
}

/// Residuals of the algebraic identities at one point, each relative to the
/// size of the curvature terms involved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvatureResiduals {
    pub antisymmetry: f64,
    pub bianchi: f64,
    /// `|γ^α(b⁻¹R(h,k)l, L)| / (‖H‖·‖K‖·‖L‖²)`.
    pub compatibility: f64,
}

pub fn curvature_residuals(
    b: &FiberMatrix,
    h: &FiberMatrix,
    k: &FiberMatrix,
    l: &FiberMatrix,
    p: &MetricParams,
    c: &CurvatureCoefficients,
) -> Result<CurvatureResiduals> {
    let r_hk = curvature_point_with(b, h, k, l, c)?;
    let r_kh = curvature_point_with(b, k, h, l, c)?;
    let r_kl = curvature_point_with(b, k, l, h, c)?;
    let r_lh = curvature_point_with(b, l, h, k, c)?;
    let scale = r_hk.norm().max(r_kl.norm()).max(r_lh.norm()).max(f64::MIN_POSITIVE);
    let antisymmetry = (&r_hk + &r_kh).norm() / scale;
    let bianchi = (&r_hk + &r_kl + &r_lh).norm() / scale;

    let lu = fiber::invertible_lu(b)?;
    let solve = |m: &FiberMatrix| lu.solve(m).ok_or_else(|| GeometryError::domain("singular structure"));
    let rr = solve(&r_hk)?;
    let ll = solve(l)?;
    // b⁻¹R(h,k)l is cubic in H, K, L; its own norm is no scale when R ≡ 0.
    let pair_scale = (solve(h)?.norm() * solve(k)?.norm() * ll.norm() * ll.norm()).max(f64::MIN_POSITIVE);
    let compatibility = gamma_endomorphisms(&rr, &ll, p.alpha()).abs() / pair_scale;
    Ok(CurvatureResiduals {
        antisymmetry,
        bianchi,
        compatibility,
    })
}

/// `‖a − b‖ / ‖b‖`, or the absolute deviation when `b` vanishes.
pub fn relative_deviation(a: &FiberMatrix, b: &FiberMatrix) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s > 0.0 {
        d / s
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn sample() -> (FiberMatrix, FiberMatrix, FiberMatrix, FiberMatrix) {
        (
            dmatrix![1.1, 0.2; 0.2, 0.9],
            dmatrix![0.3, -0.7; 0.5, 0.1],
            dmatrix![-0.4, 0.2; 0.9, 0.6],
            dmatrix![0.8, 0.1; -0.3, -0.5],
        )
    }

    #[test]
    fn vanishes_for_equal_directions_and_scalars() {
        let (b, h, _, l) = sample();
        let p = MetricParams::new(0.5, 2).unwrap();
        assert_eq!(curvature_point(&b, &h, &h, &l, &p).unwrap().norm(), 0.0);
        let p1 = MetricParams::new(1.0, 1).unwrap();
        let s = |x: f64| dmatrix![x];
        let r = curvature_point(&s(2.0), &s(0.3), &s(-1.2), &s(0.7), &p1).unwrap();
        assert!(r.norm() < 1e-15);
        let fd = curvature_fd_point(&s(2.0), &s(0.3), &s(-1.2), &s(0.7), &p1, 1e-4).unwrap();
        assert!(fd.norm() < 1e-7);
    }

    #[test]
    fn closed_form_matches_oracle() {
        let (b, h, k, l) = sample();
        for alpha in [0.5, -1.0, 1.0, 2.0] {
            let p = MetricParams::new(alpha, 2).unwrap();
            let closed = curvature_point(&b, &h, &k, &l, &p).unwrap();
            let fd = curvature_fd_point(&b, &h, &k, &l, &p, 1e-4).unwrap();
            assert!(relative_deviation(&fd, &closed) < 1e-6, "α = {alpha}");
        }
    }

    #[test]
    fn eps_sweep_converges_quadratically() {
        let (b, h, k, l) = sample();
        let p = MetricParams::new(0.5, 2).unwrap();
        let closed = curvature_point(&b, &h, &k, &l, &p).unwrap();
        let dev: Vec<f64> = [1e-2, 1e-3]
            .iter()
            .map(|&e| relative_deviation(&curvature_fd_point(&b, &h, &k, &l, &p, e).unwrap(), &closed))
            .collect();
        let ratio = dev[0] / dev[1];
        assert!(ratio > 60.0 && ratio < 160.0, "ratio {ratio}");
        let rich = curvature_fd_point_richardson(&b, &h, &k, &l, &p, 1e-2).unwrap();
        assert!(relative_deviation(&rich, &closed) < dev[0] / 10.0);
    }

    #[test]
    fn identities_hold() {
        let (b, h, k, l) = sample();
        for alpha in [1.0, -1.0, 0.5] {
            let p = MetricParams::new(alpha, 2).unwrap();
            let r = curvature_residuals(&b, &h, &k, &l, &p, &CurvatureCoefficients::for_metric(&p)).unwrap();
            assert!(r.antisymmetry <= 1e-14);
            assert!(r.bianchi <= 1e-10);
            assert!(r.compatibility <= 1e-9);
        }
    }

    #[test]
    fn perturbed_identity_coefficient_breaks_compatibility_not_bianchi() {
        // The term groups are each Bianchi-symmetric on their own, so only the
        // oracle and the metric pairing can pin the constants.
        let (b, h, k, l) = sample();
        let p = MetricParams::new(0.5, 2).unwrap();
        let mut c = CurvatureCoefficients::for_metric(&p);
        c.identity = (4.0 - 2.0 + 1.0 + 3.0) / 8.0;
        let r = curvature_residuals(&b, &h, &k, &l, &p, &c).unwrap();
        assert!(r.bianchi <= 1e-10);
        assert!(r.compatibility > 1e-3);
        let fd = curvature_fd_point(&b, &h, &k, &l, &p, 1e-4).unwrap();
        let bad = curvature_point_with(&b, &h, &k, &l, &c).unwrap();
        assert!(relative_deviation(&fd, &bad) > 1e-2);
    }
}
