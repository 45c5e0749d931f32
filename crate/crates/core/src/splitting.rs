//! Splitting of the Riemannian metrics along a fixed vertical distribution
//! `V ⊂ TM`: a metric `g` corresponds to a triple `(g₁, g₂, P)` of a metric
//! on the normal bundle, a metric on `V` and an almost product structure
//! with `+1`-eigenbundle `V`.
//!
//! Frames are per point: `i: V → TM` (n×k) and `p: TM → N` (n−k × n) with
//! `p·i = 0`. `ĩ = (iᵗi)⁻¹iᵗ` is the left inverse used to read a vector of
//! `V` back in the frame of `i`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix, TAU_SYM};
use crate::fields::{pointwise_volume, BilinearField, Mesh, TangentField};
use crate::format::{matrix_rows, Num17};
use crate::metric::{metric_g_alpha, MetricParams};

pub const TAU_P: f64 = 1e-12;
pub const TAU_TANGENT: f64 = 1e-12;
pub const TAU_D2: f64 = 1e-10;

/// Inclusion, left inverse and normal projection at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFrame {
    pub i: FiberMatrix,
    pub i_left: FiberMatrix,
    pub p: FiberMatrix,
    /// `pᵗ(ppᵗ)⁻¹`, the right inverse of `p`.
    pub p_right: FiberMatrix,
}

impl PointFrame {
    fn from_parts(i: FiberMatrix, p: FiberMatrix) -> Result<Self> {
        let iti = i.transpose() * &i;
        let i_left = iti
            .try_inverse()
            .ok_or_else(|| GeometryError::Validation("frame i is rank deficient".into()))?
            * i.transpose();
        let ppt = &p * p.transpose();
        let p_right = p.transpose()
            * ppt
                .try_inverse()
                .ok_or_else(|| GeometryError::Validation("projection p is rank deficient".into()))?;
        Ok(PointFrame { i, i_left, p, p_right })
    }

    /// Coordinate frame: `i` the first `k` basis vectors, `p` the last `n−k` coordinates.
    pub fn canonical(n: usize, k: usize) -> Result<Self> {
        check_rank(n, k)?;
        let mut i = FiberMatrix::zeros(n, k);
        for c in 0..k {
            i[(c, c)] = 1.0;
        }
        let mut p = FiberMatrix::zeros(n - k, n);
        for r in 0..n - k {
            p[(r, k + r)] = 1.0;
        }
        Self::from_parts(i, p)
    }

    /// Takes `i` as given and builds `p` from an orthonormal basis of `(im i)^⊥`.
    pub fn from_basis(i: FiberMatrix) -> Result<Self> {
        let (n, k) = i.shape();
        check_rank(n, k)?;
        let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
        for c in 0..k {
            let v = orthogonalize(i.column(c).into_owned(), &basis);
            let norm = v.norm();
            if norm <= 1e-10 * i.column(c).norm().max(f64::MIN_POSITIVE) {
                return Err(GeometryError::Validation("frame columns are linearly dependent".into()));
            }
            basis.push(v / norm);
        }
        // Adjoin the coordinate vectors that keep most of their length.
        let mut normals = Vec::with_capacity(n - k);
        while normals.len() < n - k {
            let mut best: Option<nalgebra::DVector<f64>> = None;
            for e in 0..n {
                let v = orthogonalize(nalgebra::DVector::from_fn(n, |r, _| f64::from(r == e)), &basis);
                if best.as_ref().is_none_or(|b| v.norm() > b.norm()) {
                    best = Some(v);
                }
            }
            let v = best.expect("n > 0");
            let v = &v / v.norm();
            basis.push(v.clone());
            normals.push(v);
        }
        let mut p = FiberMatrix::zeros(n - k, n);
        for (r, v) in normals.iter().enumerate() {
            p.row_mut(r).copy_from(&v.transpose());
        }
        Self::from_parts(i, p)
    }
}

fn orthogonalize(mut v: nalgebra::DVector<f64>, basis: &[nalgebra::DVector<f64>]) -> nalgebra::DVector<f64> {
    // Two passes of modified Gram–Schmidt.
    for _ in 0..2 {
        for b in basis {
            let c = b.dot(&v);
            v -= b * c;
        }
    }
    v
}

fn check_rank(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(GeometryError::Validation(format!(
            "vertical rank k = {k} must satisfy 0 < k < n = {n}"
        )));
    }
    Ok(())
}

/// A rank-`k` distribution given by frames over a mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionFrame {
    n: usize,
    k: usize,
    frames: Vec<PointFrame>,
}

impl DistributionFrame {
    pub fn canonical(n: usize, k: usize, points: usize) -> Result<Self> {
        let f = PointFrame::canonical(n, k)?;
        Ok(DistributionFrame {
            n,
            k,
            frames: vec![f; points],
        })
    }

    pub fn from_bases(bases: Vec<FiberMatrix>) -> Result<Self> {
        let first = bases
            .first()
            .ok_or_else(|| GeometryError::Validation("no frames given".into()))?;
        let (n, k) = first.shape();
        let mut frames = Vec::with_capacity(bases.len());
        for b in bases {
            if b.shape() != (n, k) {
                return Err(GeometryError::Shape("frames differ in shape".into()));
            }
            frames.push(PointFrame::from_basis(b)?);
        }
        Ok(DistributionFrame { n, k, frames })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn at(&self, x: usize) -> &PointFrame {
        &self.frames[x]
    }

    fn check_points(&self, count: usize, n: usize) -> Result<()> {
        if self.frames.len() != count {
            return Err(GeometryError::MeshMismatch);
        }
        if self.n != n {
            return Err(GeometryError::Shape(format!(
                "distribution lives in dimension {} but the field has n = {n}",
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct DistributionSpec {
    k: usize,
    #[serde(default)]
    frame: Option<Vec<Vec<Vec<f64>>>>,
}

/// Parses `{"k": int, "frame": optional per-point n×k bases}`.
///
/// A single frame is broadcast over all points. Without `frame` the
/// canonical coordinate split is used.
pub fn parse_distribution(text: &str, n: usize, points: usize) -> Result<DistributionFrame> {
    let spec: DistributionSpec = serde_json::from_str(text).map_err(|e| GeometryError::Parse(e.to_string()))?;
    match spec.frame {
        None => DistributionFrame::canonical(n, spec.k, points),
        Some(frames) => {
            let mut bases = Vec::with_capacity(frames.len());
            for (x, rows) in frames.into_iter().enumerate() {
                if rows.len() != n || rows.iter().any(|r| r.len() != spec.k) {
                    return Err(GeometryError::Shape(format!("frame {x} is not {n}×{}", spec.k)));
                }
                let flat: Vec<f64> = rows.into_iter().flatten().collect();
                bases.push(FiberMatrix::from_row_slice(n, spec.k, &flat));
            }
            if bases.len() == 1 {
                bases = vec![bases[0].clone(); points];
            }
            if bases.len() != points {
                return Err(GeometryError::MeshMismatch);
            }
            DistributionFrame::from_bases(bases)
        }
    }
}

/// Per-point almost product structures `P` with `P² = Id` and `ker(P − Id) = V`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlmostProductField {
    ps: Vec<FiberMatrix>,
}

impl AlmostProductField {
    pub fn new(ps: Vec<FiberMatrix>, v: &DistributionFrame) -> Result<Self> {
        if ps.len() != v.len() {
            return Err(GeometryError::MeshMismatch);
        }
        let n = v.n();
        let id = FiberMatrix::identity(n, n);
        for (x, pm) in ps.iter().enumerate() {
            if pm.shape() != (n, n) {
                return Err(GeometryError::InvalidP(format!("point {x}: P is not {n}×{n}")));
            }
            let scale = pm.norm().max(1.0);
            let square = (pm * pm - &id).norm();
            if square > TAU_P * scale * scale {
                return Err(GeometryError::InvalidP(format!("point {x}: |P² − Id| = {square:.3e}")));
            }
            let fixes = ((pm - &id) * &v.at(x).i).norm();
            if fixes > TAU_P * scale * v.at(x).i.norm() {
                return Err(GeometryError::InvalidP(format!(
                    "point {x}: V is not fixed by P (|(P − Id)i| = {fixes:.3e})"
                )));
            }
            // With (P − Id)i = 0 and P² = Id, rank(P − Id) = n − k iff tr P = 2k − n.
            let tr = pm.trace();
            if (tr - (2.0 * v.k() as f64 - n as f64)).abs() > 1e-8 {
                return Err(GeometryError::InvalidP(format!(
                    "point {x}: +1-eigenspace has the wrong dimension (tr P = {tr})"
                )));
            }
        }
        Ok(AlmostProductField { ps })
    }

    pub fn at(&self, x: usize) -> &FiberMatrix {
        &self.ps[x]
    }

    pub fn matrices(&self) -> &[FiberMatrix] {
        &self.ps
    }

    pub fn len(&self) -> usize {
        self.ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ps.is_empty()
    }
}

/// `(v^P, h^P) = (½(P + Id), ½(Id − P))` at one point.
pub fn projector_pair(pm: &FiberMatrix) -> (FiberMatrix, FiberMatrix) {
    let n = pm.nrows();
    let id = FiberMatrix::identity(n, n);
    ((pm + &id) * 0.5, (id - pm) * 0.5)
}

pub fn projectors(pf: &AlmostProductField) -> Vec<(FiberMatrix, FiberMatrix)> {
    pf.ps.iter().map(projector_pair).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitTriple {
    pub mesh: Arc<Mesh>,
    pub g1: Vec<FiberMatrix>,
    pub g2: Vec<FiberMatrix>,
    pub p: AlmostProductField,
}

fn is_spd(m: &FiberMatrix) -> bool {
    fiber::symmetry_defect(m, 1.0) <= TAU_SYM && m.clone().cholesky().is_some()
}

impl SplitTriple {
    pub fn new(
        mesh: Arc<Mesh>,
        g1: Vec<FiberMatrix>,
        g2: Vec<FiberMatrix>,
        p: AlmostProductField,
        v: &DistributionFrame,
    ) -> Result<Self> {
        let count = mesh.point_count();
        if g1.len() != count || g2.len() != count || p.len() != count || v.len() != count {
            return Err(GeometryError::InvalidTriple(
                "component lengths differ from the mesh".into(),
            ));
        }
        let (n, k) = (v.n(), v.k());
        for x in 0..count {
            if g1[x].shape() != (n - k, n - k) || g2[x].shape() != (k, k) {
                return Err(GeometryError::InvalidTriple(format!("point {x}: wrong block sizes")));
            }
            if !is_spd(&g1[x]) || !is_spd(&g2[x]) {
                return Err(GeometryError::InvalidTriple(format!(
                    "point {x}: g1 and g2 must be symmetric positive definite"
                )));
            }
        }
        Ok(SplitTriple { mesh, g1, g2, p })
    }

    pub fn to_json(&self, v: &DistributionFrame) -> String {
        #[derive(Serialize)]
        struct PointOut {
            weight: Num17,
            g1: Vec<Vec<Num17>>,
            g2: Vec<Vec<Num17>>,
            #[serde(rename = "P")]
            p: Vec<Vec<Num17>>,
        }
        #[derive(Serialize)]
        struct Out {
            n: usize,
            k: usize,
            points: Vec<PointOut>,
        }
        let out = Out {
            n: v.n(),
            k: v.k(),
            points: (0..self.mesh.point_count())
                .map(|x| PointOut {
                    weight: Num17(self.mesh.weight(x)),
                    g1: matrix_rows(&self.g1[x]),
                    g2: matrix_rows(&self.g2[x]),
                    p: matrix_rows(self.p.at(x)),
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&out).expect("triple serialization");
        s.push('\n');
        s
    }
}

fn check_riemannian(g: &FiberMatrix, x: usize) -> Result<()> {
    if !is_spd(g) {
        return Err(GeometryError::NotRiemannian(format!(
            "point {x} is not symmetric positive definite"
        )));
    }
    Ok(())
}

fn inverse(m: &FiberMatrix) -> Result<FiberMatrix> {
    fiber::invertible_lu(m)?
        .try_inverse()
        .ok_or_else(|| GeometryError::domain("singular matrix"))
}

/// `(g₁, g₂, P)` at one point.
fn phi_point(g: &FiberMatrix, f: &PointFrame) -> Result<(FiberMatrix, FiberMatrix, FiberMatrix)> {
    let n = g.nrows();
    let g2 = f.i.transpose() * g * &f.i;
    let g2_inv = inverse(&g2)?;
    let pm = (&f.i * g2_inv * f.i.transpose() * g) * 2.0 - FiberMatrix::identity(n, n);
    let lift = horizontal_lift(&pm, f);
    let g1 = lift.transpose() * g * &lift;
    Ok((symmetrize(g1), symmetrize(g2), pm))
}

/// `C = h^P·p⁺`, the lift `N → TM` onto the horizontal bundle.
fn horizontal_lift(pm: &FiberMatrix, f: &PointFrame) -> FiberMatrix {
    let (_, h) = projector_pair(pm);
    h * &f.p_right
}

fn symmetrize(m: FiberMatrix) -> FiberMatrix {
    (&m + m.transpose()) * 0.5
}

pub fn phi_split(g: &BilinearField, v: &DistributionFrame) -> Result<SplitTriple> {
    v.check_points(g.len(), g.n())?;
    let mut g1 = Vec::with_capacity(g.len());
    let mut g2 = Vec::with_capacity(g.len());
    let mut ps = Vec::with_capacity(g.len());
    for (x, gx) in g.matrices().iter().enumerate() {
        check_riemannian(gx, x)?;
        let (a, b, pm) = phi_point(gx, v.at(x))?;
        g1.push(a);
        g2.push(b);
        ps.push(pm);
    }
    let p = AlmostProductField::new(ps, v)?;
    SplitTriple::new(g.mesh().clone(), g1, g2, p, v)
}

fn psi_point(g1: &FiberMatrix, g2: &FiberMatrix, pm: &FiberMatrix, f: &PointFrame) -> FiberMatrix {
    let (vp, _) = projector_pair(pm);
    let iv = &f.i_left * vp;
    let g = f.p.transpose() * g1 * &f.p + iv.transpose() * g2 * iv;
    symmetrize(g)
}

/// `Ψ(g₁, g₂, P) = pᵗg₁p + (ĩv^P)ᵗg₂(ĩv^P)`.
pub fn psi_assemble(t: &SplitTriple, v: &DistributionFrame) -> Result<BilinearField> {
    if v.len() != t.mesh.point_count() || v.len() != t.p.len() {
        return Err(GeometryError::InvalidTriple(
            "triple and distribution differ in length".into(),
        ));
    }
    let out = (0..v.len())
        .map(|x| psi_point(&t.g1[x], &t.g2[x], t.p.at(x), v.at(x)))
        .collect();
    BilinearField::new(t.mesh.clone(), out)
}

fn split_endomorphism(hh: &FiberMatrix, pm: &FiberMatrix) -> (FiberMatrix, FiberMatrix) {
    let (vp, hp) = projector_pair(pm);
    let h1 = &vp * hh * &vp + &hp * hh * &hp;
    let h2 = &vp * hh * &hp + &hp * hh * &vp;
    (h1, h2)
}

fn check_symmetric_tangent(h: &FiberMatrix) -> Result<()> {
    let defect = fiber::symmetry_defect(h, 1.0);
    if defect > TAU_SYM {
        return Err(GeometryError::NotSymmetric { defect });
    }
    Ok(())
}

/// `h = h₁ + h₂` with `h_i = g·H_i`, `H₁` block-diagonal and `H₂`
/// off-block-diagonal with respect to `P = Π₃Φ(g)`.
pub fn decompose_tangent(
    g: &BilinearField,
    h: &TangentField,
    v: &DistributionFrame,
) -> Result<(TangentField, TangentField)> {
    g.check_compatible(h)?;
    v.check_points(g.len(), g.n())?;
    let mut d1 = Vec::with_capacity(g.len());
    let mut d2 = Vec::with_capacity(g.len());
    for (x, (gx, hx)) in g.matrices().iter().zip(h.matrices()).enumerate() {
        check_riemannian(gx, x)?;
        check_symmetric_tangent(hx)?;
        let (_, _, pm) = phi_point(gx, v.at(x))?;
        let hh = fiber::left_divide(gx, hx)?;
        let (h1, h2) = split_endomorphism(&hh, &pm);
        d1.push(symmetrize(gx * h1));
        d2.push(symmetrize(gx * h2));
    }
    Ok((
        TangentField::new(g.mesh().clone(), d1)?,
        TangentField::new(g.mesh().clone(), d2)?,
    ))
}

/// `ξ = 2v^P·g⁻¹h·h^P`, the image of `h` under the tangent map of `Π₃Φ`.
pub fn slice_direction(g: &FiberMatrix, h: &FiberMatrix, pm: &FiberMatrix) -> Result<FiberMatrix> {
    let (vp, hp) = projector_pair(pm);
    Ok(vp * fiber::left_divide(g, h)? * hp * 2.0)
}

fn check_slice_tangent(xi: &FiberMatrix, f: &PointFrame, x: usize) -> Result<()> {
    let scale = xi.norm().max(1.0);
    let kernel = (xi * &f.i).norm();
    if kernel > TAU_TANGENT * scale * f.i.norm() {
        return Err(GeometryError::NotTangentToPV(format!(
            "point {x}: V ⊄ ker ξ (|ξi| = {kernel:.3e})"
        )));
    }
    let image = (xi - &f.i * (&f.i_left * xi)).norm();
    if image > TAU_TANGENT * scale {
        return Err(GeometryError::NotTangentToPV(format!(
            "point {x}: im ξ ⊄ V (distance {image:.3e})"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HatMetricValue {
    pub value: f64,
    /// Set when `α ≠ 1/n`; the splitting identities only refer to the
    /// standard metric.
    pub nonstandard_alpha: bool,
}

/// `Ĝ(ξ, η) = G_g(h, k)` with `g = Ψ(t)` and `2h = (ĩv)ᵗg₂(ĩξ) + (ĩξ)ᵗg₂(ĩv)`.
pub fn hat_metric(
    t: &SplitTriple,
    xi: &[FiberMatrix],
    eta: &[FiberMatrix],
    v: &DistributionFrame,
    p: &MetricParams,
) -> Result<HatMetricValue> {
    let count = t.mesh.point_count();
    if xi.len() != count || eta.len() != count {
        return Err(GeometryError::MeshMismatch);
    }
    let g = psi_assemble(t, v)?;
    let mut hs = Vec::with_capacity(count);
    let mut ks = Vec::with_capacity(count);
    for x in 0..count {
        let f = v.at(x);
        check_slice_tangent(&xi[x], f, x)?;
        check_slice_tangent(&eta[x], f, x)?;
        let (vp, _) = projector_pair(t.p.at(x));
        let iv = &f.i_left * vp;
        let lift = |d: &FiberMatrix| {
            let id = &f.i_left * d;
            (iv.transpose() * &t.g2[x] * &id + id.transpose() * &t.g2[x] * &iv) * 0.5
        };
        hs.push(lift(&xi[x]));
        ks.push(lift(&eta[x]));
    }
    let h = TangentField::new(t.mesh.clone(), hs)?;
    let k = TangentField::new(t.mesh.clone(), ks)?;
    Ok(HatMetricValue {
        value: metric_g_alpha(&g, &h, &k, p)?,
        nonstandard_alpha: !p.is_standard(),
    })
}

/// Tangent vector `(h₁, h₂)` to `ℳ(N) × ℳ(V)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitTangent {
    pub h1: Vec<FiberMatrix>,
    pub h2: Vec<FiberMatrix>,
}

/// `Ǧ((h₁,h₂),(k₁,k₂)) = Σ_x (tr(g₁⁻¹h₁g₁⁻¹k₁) + tr(g₂⁻¹h₂g₂⁻¹k₂))·vol(Ψ(g₁,g₂,P))_x`.
pub fn check_metric(t: &SplitTriple, a: &SplitTangent, b: &SplitTangent, v: &DistributionFrame) -> Result<f64> {
    let count = t.mesh.point_count();
    if [a.h1.len(), a.h2.len(), b.h1.len(), b.h2.len()]
        .iter()
        .any(|&l| l != count)
    {
        return Err(GeometryError::MeshMismatch);
    }
    let g = psi_assemble(t, v)?;
    let mut total = 0.0;
    for x in 0..count {
        for m in [&a.h1[x], &a.h2[x], &b.h1[x], &b.h2[x]] {
            check_symmetric_tangent(m)?;
        }
        let g1_inv = inverse(&t.g1[x])?;
        let g2_inv = inverse(&t.g2[x])?;
        let first = fiber::trace_of_product(&(&g1_inv * &a.h1[x]), &(&g1_inv * &b.h1[x]));
        let second = fiber::trace_of_product(&(&g2_inv * &a.h2[x]), &(&g2_inv * &b.h2[x]));
        total += (first + second) * pointwise_volume(g.at(x))? * t.mesh.weight(x);
    }
    Ok(total)
}

fn d2_ratio(g: &BilinearField, h: &TangentField, v: &DistributionFrame) -> Result<(f64, Vec<FiberMatrix>)> {
    let mut worst = 0.0f64;
    let mut ps = Vec::with_capacity(g.len());
    for (x, (gx, hx)) in g.matrices().iter().zip(h.matrices()).enumerate() {
        check_riemannian(gx, x)?;
        let (_, _, pm) = phi_point(gx, v.at(x))?;
        let hh = fiber::left_divide(gx, hx)?;
        let (h1, _) = split_endomorphism(&hh, &pm);
        let norm = hh.norm();
        if norm > 0.0 {
            worst = worst.max(h1.norm() / norm);
        }
        ps.push(pm);
    }
    Ok((worst, ps))
}

/// `g(t) = g·(Id + tH + t²H²h^P)` for `h ∈ D₂(g)`.
pub fn slice_geodesic(g: &BilinearField, h: &TangentField, v: &DistributionFrame, t: f64) -> Result<BilinearField> {
    g.check_compatible(h)?;
    v.check_points(g.len(), g.n())?;
    let (ratio, ps) = d2_ratio(g, h, v)?;
    if ratio > TAU_D2 {
        return Err(GeometryError::NotInD2(ratio));
    }
    let out = (0..g.len())
        .map(|x| {
            let gx = g.at(x);
            let n = gx.nrows();
            let hh = fiber::left_divide(gx, h.at(x))?;
            let (_, hp) = projector_pair(&ps[x]);
            let factor = FiberMatrix::identity(n, n) + &hh * t + &hh * &hh * &hp * (t * t);
            Ok(gx * factor)
        })
        .collect::<Result<Vec<_>>>()?;
    BilinearField::new(g.mesh().clone(), out)
}

/// The same curve through the splitting: `Ψ(g₁, g₂, P + tξ)` with `ξ = 2v^P g⁻¹h h^P`.
pub fn slice_geodesic_via_split(
    g: &BilinearField,
    h: &TangentField,
    v: &DistributionFrame,
    t: f64,
) -> Result<BilinearField> {
    g.check_compatible(h)?;
    let (ratio, _) = d2_ratio(g, h, v)?;
    if ratio > TAU_D2 {
        return Err(GeometryError::NotInD2(ratio));
    }
    let triple = phi_split(g, v)?;
    let moved = (0..g.len())
        .map(|x| Ok(triple.p.at(x) + slice_direction(g.at(x), h.at(x), triple.p.at(x))? * t))
        .collect::<Result<Vec<_>>>()?;
    let shifted = SplitTriple {
        p: AlmostProductField::new(moved, v)?,
        ..triple
    };
    psi_assemble(&shifted, v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubmersionTerms {
    pub full: f64,
    pub check_term: f64,
    pub hat_term: f64,
    pub residual: f64,
}

/// Compares `G_g(h,k)` with `Ǧ(TΦh, TΦk) + Ĝ(TΠ₃Φh, TΠ₃Φk)`.
pub fn submersion_terms(
    g: &BilinearField,
    h: &TangentField,
    k: &TangentField,
    v: &DistributionFrame,
    p: &MetricParams,
) -> Result<SubmersionTerms> {
    if !p.is_standard() {
        return Err(GeometryError::domain("the submersion identity holds for α = 1/n only"));
    }
    g.check_compatible(h)?;
    g.check_compatible(k)?;
    v.check_points(g.len(), g.n())?;
    let triple = phi_split(g, v)?;
    let mut a = SplitTangent { h1: vec![], h2: vec![] };
    let mut b = SplitTangent { h1: vec![], h2: vec![] };
    let mut xi = Vec::with_capacity(g.len());
    let mut eta = Vec::with_capacity(g.len());
    for x in 0..g.len() {
        let (gx, hx, kx) = (g.at(x), h.at(x), k.at(x));
        check_symmetric_tangent(hx)?;
        check_symmetric_tangent(kx)?;
        let f = v.at(x);
        let pm = triple.p.at(x);
        let lift = horizontal_lift(pm, f);
        let push = |m: &FiberMatrix| {
            (
                symmetrize(lift.transpose() * m * &lift),
                symmetrize(f.i.transpose() * m * &f.i),
            )
        };
        let (h1, h2) = push(hx);
        let (k1, k2) = push(kx);
        a.h1.push(h1);
        a.h2.push(h2);
        b.h1.push(k1);
        b.h2.push(k2);
        xi.push(slice_direction(gx, hx, pm)?);
        eta.push(slice_direction(gx, kx, pm)?);
    }
    let full = metric_g_alpha(g, h, k, p)?;
    let check_term = check_metric(&triple, &a, &b, v)?;
    let hat_term = hat_metric(&triple, &xi, &eta, v, p)?.value;
    let residual = (full - check_term - hat_term).abs() / (1.0 + full.abs());
    Ok(SubmersionTerms {
        full,
        check_term,
        hat_term,
        residual,
    })
}

pub fn submersion_check(
    g: &BilinearField,
    h: &TangentField,
    k: &TangentField,
    v: &DistributionFrame,
    p: &MetricParams,
) -> Result<f64> {
    Ok(submersion_terms(g, h, k, v, p)?.residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn mesh1() -> Arc<Mesh> {
        Arc::new(Mesh::uniform(1).unwrap())
    }

    fn field(m: FiberMatrix) -> BilinearField {
        BilinearField::constant(mesh1(), m).unwrap()
    }

    #[test]
    fn projector_examples() {
        let (v, h) = projector_pair(&dmatrix![1.0, 0.0; 0.0, -1.0]);
        assert_eq!(v, dmatrix![1.0, 0.0; 0.0, 0.0]);
        assert_eq!(h, dmatrix![0.0, 0.0; 0.0, 1.0]);
        let (v, h) = projector_pair(&FiberMatrix::identity(2, 2));
        assert_eq!((v, h), (FiberMatrix::identity(2, 2), FiberMatrix::zeros(2, 2)));
        let c = 0.35;
        let (v, h) = projector_pair(&dmatrix![1.0, 2.0 * c; 0.0, -1.0]);
        assert_eq!(v, dmatrix![1.0, c; 0.0, 0.0]);
        assert_eq!(h, dmatrix![0.0, -c; 0.0, 1.0]);
    }

    #[test]
    fn phi_examples() {
        let v = DistributionFrame::canonical(2, 1, 1).unwrap();
        let t = phi_split(&field(FiberMatrix::identity(2, 2)), &v).unwrap();
        assert_eq!((t.g1[0][(0, 0)], t.g2[0][(0, 0)]), (1.0, 1.0));
        assert_eq!(t.p.at(0), &dmatrix![1.0, 0.0; 0.0, -1.0]);

        let t = phi_split(&field(dmatrix![4.0, 0.0; 0.0, 9.0]), &v).unwrap();
        assert_eq!((t.g1[0][(0, 0)], t.g2[0][(0, 0)]), (9.0, 4.0));

        let c = 0.4;
        let g = field(dmatrix![1.0, c; c, 2.0]);
        let t = phi_split(&g, &v).unwrap();
        assert!((t.p.at(0) - dmatrix![1.0, 2.0 * c; 0.0, -1.0]).norm() < 1e-15);
        let horizontal = nalgebra::dvector![-c, 1.0];
        assert!((g.at(0) * &horizontal)[0].abs() < 1e-15);
        let back = psi_assemble(&t, &v).unwrap();
        assert!((back.at(0) - g.at(0)).norm() < 1e-12);
    }

    #[test]
    fn psi_examples() {
        let v = DistributionFrame::canonical(2, 1, 1).unwrap();
        let p = AlmostProductField::new(vec![dmatrix![1.0, 0.0; 0.0, -1.0]], &v).unwrap();
        let t = SplitTriple::new(mesh1(), vec![dmatrix![9.0]], vec![dmatrix![4.0]], p, &v).unwrap();
        assert_eq!(psi_assemble(&t, &v).unwrap().at(0), &dmatrix![4.0, 0.0; 0.0, 9.0]);
        let bad = AlmostProductField::new(vec![FiberMatrix::identity(2, 2)], &v);
        assert!(matches!(bad, Err(GeometryError::InvalidP(_))));
    }

    #[test]
    fn decomposition_examples() {
        let v = DistributionFrame::canonical(2, 1, 1).unwrap();
        let g = field(FiberMatrix::identity(2, 2));
        let h = TangentField::constant(mesh1(), dmatrix![0.3, 0.7; 0.7, -1.1]).unwrap();
        let (d1, d2) = decompose_tangent(&g, &h, &v).unwrap();
        assert_eq!(d1.at(0), &dmatrix![0.3, 0.0; 0.0, -1.1]);
        assert_eq!(d2.at(0), &dmatrix![0.0, 0.7; 0.7, 0.0]);
    }

    #[test]
    fn check_metric_single_point() {
        let v = DistributionFrame::canonical(2, 1, 1).unwrap();
        let t = phi_split(&field(FiberMatrix::identity(2, 2)), &v).unwrap();
        let a = SplitTangent {
            h1: vec![dmatrix![1.0]],
            h2: vec![dmatrix![0.0]],
        };
        assert!((check_metric(&t, &a, &a, &v).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slice_geodesic_example() {
        let v = DistributionFrame::canonical(2, 1, 1).unwrap();
        let g = field(FiberMatrix::identity(2, 2));
        let h = TangentField::constant(mesh1(), dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        for t in [0.0, 0.5, 3.0] {
            let gt = slice_geodesic(&g, &h, &v, t).unwrap();
            assert!((gt.at(0) - dmatrix![1.0, t; t, 1.0 + t * t]).norm() < 1e-14);
            assert!((gt.at(0).determinant() - 1.0).abs() < 1e-12);
            let other = slice_geodesic_via_split(&g, &h, &v, t).unwrap();
            assert!((other.at(0) - gt.at(0)).norm() < 1e-12);
        }
        let d1 = TangentField::constant(mesh1(), FiberMatrix::identity(2, 2)).unwrap();
        assert!(matches!(
            slice_geodesic(&g, &d1, &v, 1.0),
            Err(GeometryError::NotInD2(_))
        ));
    }

    #[test]
    fn hat_metric_rejects_non_tangent() {
        let v = DistributionFrame::canonical(2, 1, 1).unwrap();
        let t = phi_split(&field(FiberMatrix::identity(2, 2)), &v).unwrap();
        let p = MetricParams::standard(2).unwrap();
        let zero = vec![FiberMatrix::zeros(2, 2)];
        assert_eq!(hat_metric(&t, &zero, &zero, &v, &p).unwrap().value, 0.0);
        let bad = vec![dmatrix![1.0, 0.0; 0.0, 0.0]];
        assert!(matches!(
            hat_metric(&t, &bad, &zero, &v, &p),
            Err(GeometryError::NotTangentToPV(_))
        ));
    }

    #[test]
    fn arbitrary_frame_builds_orthogonal_complement() {
        let f = PointFrame::from_basis(dmatrix![1.0, 0.5; 2.0, -1.0; 0.3, 0.2]).unwrap();
        assert!((&f.p * &f.i).norm() < 1e-14);
        assert!((&f.i_left * &f.i - FiberMatrix::identity(2, 2)).norm() < 1e-14);
        assert!(PointFrame::from_basis(dmatrix![1.0, 2.0; 2.0, 4.0; 0.0, 0.0]).is_err());
    }

    #[test]
    fn distribution_json() {
        let v = parse_distribution(r#"{"k": 1}"#, 2, 3).unwrap();
        assert_eq!((v.k(), v.len()), (1, 3));
        let v = parse_distribution(r#"{"k": 1, "frame": [[[1.0], [1.0]]]}"#, 2, 2).unwrap();
        assert!((&v.at(1).p * &v.at(1).i).norm() < 1e-15);
        assert!(parse_distribution(r#"{"k": 2}"#, 2, 1).is_err());
    }
}
