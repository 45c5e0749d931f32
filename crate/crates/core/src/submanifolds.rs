//! Geodesic closedness of the symmetric and skew submanifolds, signature
//! tracking along geodesics, and the top-degree identities for 2-forms.

use itertools::Itertools;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix, SymmetryCharacter, TAU_SYM};
use crate::fields::{BilinearField, TangentField};
use crate::geodesics::{domain_time, geodesic_point};
use crate::metric::MetricParams;

pub const TAU_CLOSED: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SubmanifoldKind {
    Symmetric,
    Skew,
}

impl SubmanifoldKind {
    pub fn sigma(self) -> f64 {
        match self {
            SubmanifoldKind::Symmetric => 1.0,
            SubmanifoldKind::Skew => -1.0,
        }
    }

    fn character(self) -> SymmetryCharacter {
        match self {
            SubmanifoldKind::Symmetric => SymmetryCharacter::Symmetric,
            SubmanifoldKind::Skew => SymmetryCharacter::Skew,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" => Some(SubmanifoldKind::Symmetric),
            "skew" => Some(SubmanifoldKind::Skew),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureReport {
    pub times: Vec<f64>,
    pub max_symmetry_defect: f64,
    /// Negative-eigenvalue count summed over mesh points, one entry per time.
    pub signature_trace: Vec<usize>,
    /// Per time, the negative-eigenvalue count at each mesh point.
    pub point_signatures: Vec<Vec<usize>>,
    pub verdict: bool,
}

/// Number of negative eigenvalues of a symmetric invertible `b`.
pub fn signature_of_pseudometric(b: &FiberMatrix) -> Result<usize> {
    fiber::check_square(b)?;
    let defect = fiber::symmetry_defect(b, 1.0);
    if defect > TAU_SYM {
        return Err(GeometryError::NotSymmetric { defect });
    }
    fiber::invertible_lu(b)?;
    let eigs = fiber::symmetric_eigenvalues(b);
    let scale = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    Ok(fiber::negative_count(&eigs, 1e-14 * scale))
}

/// `count` Chebyshev nodes of the first kind on `[0, upper)`, ascending.
pub fn chebyshev_times(count: usize, upper: f64) -> Vec<f64> {
    (0..count)
        .map(|j| {
            let theta = std::f64::consts::PI * (j as f64 + 0.5) / count as f64;
            0.5 * upper * (1.0 - theta.cos())
        })
        .collect()
}

/// Sample times for closure checks: Chebyshev nodes in `[0, 0.9·m_h)`, or
/// `[0, horizon)` when the geodesic lives forever.
pub fn closure_sample_times(m_h: f64, count: usize, horizon: f64) -> Vec<f64> {
    let upper = if m_h.is_finite() { 0.9 * m_h } else { horizon };
    chebyshev_times(count, upper)
}

pub fn geodesic_closure_report(
    b0: &BilinearField,
    h: &TangentField,
    p: &MetricParams,
    kind: SubmanifoldKind,
    times: &[f64],
) -> Result<ClosureReport> {
    b0.check_compatible(h)?;
    let want = kind.character();
    for (i, (bx, hx)) in b0.matrices().iter().zip(h.matrices()).enumerate() {
        let b_kind = fiber::symmetry_character(bx, bx)?;
        let h_kind = fiber::symmetry_character(bx, hx)?;
        let zero_h = hx.norm() == 0.0;
        if b_kind != want || !(zero_h || h_kind == want) {
            return Err(GeometryError::KindMismatch(format!(
                "point {i}: expected {kind:?}, structure is {b_kind:?} and direction is {h_kind:?}"
            )));
        }
    }
    let domain = domain_time(b0, h, p)?;
    for &t in times {
        if !domain.contains(t) {
            return Err(GeometryError::OutOfDomain { t, limit: domain.m_h });
        }
    }

    let mut max_defect = 0.0f64;
    let mut signature_trace = Vec::new();
    let mut point_signatures = Vec::new();
    for &t in times {
        let mut counts = Vec::with_capacity(b0.len());
        for (bx, hx) in b0.matrices().iter().zip(h.matrices()) {
            let bt = geodesic_point(bx, hx, p, t)?;
            max_defect = max_defect.max(fiber::symmetry_defect(&bt, kind.sigma()));
            if kind == SubmanifoldKind::Symmetric {
                // Count on the symmetric part so a defect shows up in the
                // defect column rather than as a signature error.
                let eigs = fiber::symmetric_eigenvalues(&bt);
                let scale = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
                counts.push(fiber::negative_count(&eigs, 1e-14 * scale));
            }
        }
        if kind == SubmanifoldKind::Symmetric {
            signature_trace.push(counts.iter().sum());
            point_signatures.push(counts);
        }
    }
    let constant = point_signatures.windows(2).all(|w| w[0] == w[1]);
    Ok(ClosureReport {
        times: times.to_vec(),
        max_symmetry_defect: max_defect,
        signature_trace,
        point_signatures,
        verdict: max_defect <= TAU_CLOSED && constant,
    })
}

/// `max_t ‖b(t) − σb(t)ᵗ‖/‖b(t)‖` along the geodesic, without any
/// precondition on the kind of `b⁰` or `h`.
pub fn max_symmetry_defect_along(
    b0: &BilinearField,
    h: &TangentField,
    p: &MetricParams,
    sigma: f64,
    times: &[f64],
) -> Result<f64> {
    b0.check_compatible(h)?;
    let mut worst = 0.0f64;
    for &t in times {
        for (bx, hx) in b0.matrices().iter().zip(h.matrices()) {
            worst = worst.max(fiber::symmetry_defect(&geodesic_point(bx, hx, p, t)?, sigma));
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityPair {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityPair {
    pub fn relative_gap(&self) -> f64 {
        let scale = self.lhs.abs().max(self.rhs.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.lhs - self.rhs).abs() / scale
        }
    }
}

fn permutation_sign(perm: &[usize]) -> f64 {
    let mut inversions = 0usize;
    for i in 0..perm.len() {
        for j in i + 1..perm.len() {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Coefficient of `e¹∧…∧eⁿ` in `β₁∧…∧β_m` for 2-forms `β_j = ½Σ β_j[a,b] eᵃ∧eᵇ`.
fn wedge_top_coefficient(forms: &[&FiberMatrix]) -> f64 {
    let n = 2 * forms.len();
    let mut acc = 0.0;
    for perm in (0..n).permutations(n) {
        let mut term = permutation_sign(&perm);
        for (j, f) in forms.iter().enumerate() {
            term *= f[(perm[2 * j], perm[2 * j + 1])];
        }
        acc += term;
    }
    acc / 2f64.powi(forms.len() as i32)
}

fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// Both sides of `Vol(ω) = (1/m!)|ω^m|` and `m·φ∧ω^{m−1} = ½tr(ω⁻¹φ)·ω^m`
/// (top-degree coefficients), for `n = 2m ∈ {2, 4}`.
pub fn two_form_volume_identities(omega: &FiberMatrix, phi: &FiberMatrix) -> Result<Vec<IdentityPair>> {
    let n = fiber::check_square(omega)?;
    if n != 2 && n != 4 {
        return Err(GeometryError::UnsupportedDimension(n));
    }
    if phi.shape() != omega.shape() {
        return Err(GeometryError::Shape("ω and φ differ in size".into()));
    }
    for m in [omega, phi] {
        let defect = fiber::symmetry_defect(m, -1.0);
        if defect > TAU_SYM {
            return Err(GeometryError::NotSkew { defect });
        }
    }
    let m = n / 2;
    let lu = fiber::invertible_lu(omega)?;
    let omega_inv_phi = lu.solve(phi).ok_or_else(|| GeometryError::domain("singular 2-form"))?;

    let top = wedge_top_coefficient(&vec![omega; m]);
    let mut mixed_forms = vec![phi];
    mixed_forms.extend(std::iter::repeat_n(omega, m - 1));
    let mixed = wedge_top_coefficient(&mixed_forms);

    Ok(vec![
        IdentityPair {
            name: "volume",
            lhs: omega.determinant().abs().sqrt(),
            rhs: top.abs() / factorial(m),
        },
        IdentityPair {
            name: "variation",
            lhs: m as f64 * mixed,
            rhs: 0.5 * omega_inv_phi.trace() * top,
        },
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Mesh;
    use crate::metric::darboux;
    use nalgebra::dmatrix;
    use std::sync::Arc;

    fn mesh1() -> Arc<Mesh> {
        Arc::new(Mesh::uniform(1).unwrap())
    }

    #[test]
    fn signature_examples() {
        assert_eq!(signature_of_pseudometric(&FiberMatrix::identity(3, 3)).unwrap(), 0);
        let d = FiberMatrix::from_diagonal(&nalgebra::dvector![-1.0, 1.0, 1.0]);
        assert_eq!(signature_of_pseudometric(&d).unwrap(), 1);
        assert_eq!(signature_of_pseudometric(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap(), 1);
        assert!(matches!(
            signature_of_pseudometric(&dmatrix![0.0, 1.0; -1.0, 0.0]),
            Err(GeometryError::NotSymmetric { .. })
        ));
    }

    #[test]
    fn symmetric_closure_example() {
        let b0 = BilinearField::constant(mesh1(), dmatrix![-1.0, 0.0; 0.0, 1.0]).unwrap();
        let h = TangentField::constant(mesh1(), FiberMatrix::identity(2, 2)).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        let m_h = domain_time(&b0, &h, &p).unwrap().m_h;
        let times = closure_sample_times(m_h, 20, 2.0);
        let r = geodesic_closure_report(&b0, &h, &p, SubmanifoldKind::Symmetric, &times).unwrap();
        assert!(r.verdict);
        assert!(r.signature_trace.iter().all(|&q| q == 1));
    }

    #[test]
    fn skew_closure_example() {
        let j = dmatrix![0.0, 1.0; -1.0, 0.0];
        let b0 = BilinearField::constant(mesh1(), j.clone()).unwrap();
        let h = TangentField::constant(mesh1(), &j * 0.7).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        let r = geodesic_closure_report(&b0, &h, &p, SubmanifoldKind::Skew, &chebyshev_times(20, 2.0)).unwrap();
        assert!(r.verdict);
        assert!(r.signature_trace.is_empty());
    }

    #[test]
    fn kind_mismatch() {
        let b0 = BilinearField::constant(mesh1(), FiberMatrix::identity(2, 2)).unwrap();
        let h = TangentField::constant(mesh1(), dmatrix![0.0, 1.0; -1.0, 0.0]).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        assert!(matches!(
            geodesic_closure_report(&b0, &h, &p, SubmanifoldKind::Symmetric, &[0.5]),
            Err(GeometryError::KindMismatch(_))
        ));
    }

    #[test]
    fn chebyshev_nodes_stay_inside() {
        let t = chebyshev_times(20, 1.8);
        assert!(t[0] > 0.0 && *t.last().unwrap() < 1.8);
        assert!(t.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn volume_identity_examples() {
        let j2 = darboux(2);
        let r = two_form_volume_identities(&j2, &j2).unwrap();
        assert_eq!((r[0].lhs, r[0].rhs), (1.0, 1.0));
        let j4 = darboux(4);
        let r = two_form_volume_identities(&j4, &j4).unwrap();
        assert!((r[0].rhs - 1.0).abs() < 1e-15);
        assert!(r[1].relative_gap() < 1e-14);
        let w = dmatrix![0.0, 0.3, -1.2, 0.5; -0.3, 0.0, 0.7, 0.9; 1.2, -0.7, 0.0, -0.4; -0.5, -0.9, 0.4, 0.0];
        let f = dmatrix![0.0, -0.2, 0.1, 0.8; 0.2, 0.0, -0.6, 0.3; -0.1, 0.6, 0.0, 1.1; -0.8, -0.3, -1.1, 0.0];
        for pair in two_form_volume_identities(&w, &f).unwrap() {
            assert!(pair.relative_gap() < 1e-12, "{pair:?}");
        }
        assert!(matches!(
            two_form_volume_identities(&darboux(6), &darboux(6)),
            Err(GeometryError::UnsupportedDimension(6))
        ));
    }
}
