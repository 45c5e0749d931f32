//! The pointwise form `γ^α`, the integrated metric `G^α`, the transform
//! between `G^α` and `G = G^{1/n}`, and signature counts of `γ^α` on
//! subspaces of matrices.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix};
use crate::fields::{vol_density, BilinearField, TangentField};

/// The parameter `α ≠ 0` of the metric family together with `n = dim M`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    alpha: f64,
    n: usize,
}

impl MetricParams {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha != 0.0) {
            return Err(GeometryError::domain(format!(
                "alpha must be finite and nonzero, got {alpha}"
            )));
        }
        if n == 0 {
            return Err(GeometryError::domain("dimension must be positive"));
        }
        Ok(MetricParams { alpha, n })
    }

    /// `α = 1/n`, the metric `G` itself.
    pub fn standard(n: usize) -> Result<Self> {
        Self::new(1.0 / n as f64, n)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn is_standard(&self) -> bool {
        (self.alpha * self.nf() - 1.0).abs() <= 1e-14
    }
}

/// `tr(H₀K₀) + α·tr(H)·tr(K)` on endomorphisms.
pub fn gamma_endomorphisms(hh: &FiberMatrix, kk: &FiberMatrix, alpha: f64) -> f64 {
    let n = hh.nrows() as f64;
    let (th, tk) = (hh.trace(), kk.trace());
    fiber::trace_of_product(hh, kk) - th * tk / n + alpha * th * tk
}

/// `γ^α_b(h, k)` at one point.
pub fn gamma_alpha(b: &FiberMatrix, h: &FiberMatrix, k: &FiberMatrix, p: &MetricParams) -> Result<f64> {
    let lu = fiber::invertible_lu(b)?;
    let hh = lu.solve(h).ok_or_else(|| GeometryError::domain("singular structure"))?;
    let kk = lu.solve(k).ok_or_else(|| GeometryError::domain("singular structure"))?;
    Ok(gamma_endomorphisms(&hh, &kk, p.alpha()))
}

/// `G^α_b(h, k) = Σ_x γ^α(b_x, h_x, k_x) · vol(b)_x`, summed in point order.
pub fn metric_g_alpha(b: &BilinearField, h: &TangentField, k: &TangentField, p: &MetricParams) -> Result<f64> {
    b.check_compatible(h)?;
    b.check_compatible(k)?;
    let vol = vol_density(b)?;
    let mut total = 0.0;
    for (i, v) in vol.iter().enumerate() {
        total += gamma_alpha(b.at(i), h.at(i), k.at(i), p)? * v;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TransformDirection {
    /// `h ↦ h + ((αn−1)/n)·tr(b⁻¹h)·b`, so that `G^α(h,k) = G(ToG(h),k)`.
    ToG,
    /// The inverse map `h ↦ h − ((αn−1)/(αn²))·tr(b⁻¹h)·b`.
    FromG,
}

pub fn g_alpha_transform(
    h: &TangentField,
    b: &BilinearField,
    p: &MetricParams,
    direction: TransformDirection,
) -> Result<TangentField> {
    b.check_compatible(h)?;
    let (alpha, n) = (p.alpha(), p.nf());
    let coeff = match direction {
        TransformDirection::ToG => (alpha * n - 1.0) / n,
        TransformDirection::FromG => -(alpha * n - 1.0) / (alpha * n * n),
    };
    let mut out = Vec::with_capacity(h.len());
    for (bx, hx) in b.matrices().iter().zip(h.matrices()) {
        let tr = fiber::left_divide(bx, hx)?.trace();
        out.push(hx + bx * (coeff * tr));
    }
    TangentField::new(h.mesh().clone(), out)
}

/// Matrix subspaces on which the signature of `γ^α` is counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixSpace {
    /// All n×n matrices at `b = Id`.
    FullMatrices,
    /// Symmetric forms at `b = diag(−Id_q, Id_{n−q})`.
    SymmetricWithSignature(usize),
    /// Skew forms at the Darboux structure `J` (n even).
    SkewForms,
}

impl MatrixSpace {
    pub fn name(&self) -> &'static str {
        match self {
            MatrixSpace::FullMatrices => "full",
            MatrixSpace::SymmetricWithSignature(_) => "symmetric",
            MatrixSpace::SkewForms => "skew",
        }
    }
}

fn unit(n: usize, i: usize, j: usize) -> FiberMatrix {
    let mut m = FiberMatrix::zeros(n, n);
    m[(i, j)] = 1.0;
    m
}

/// `J = [[0, Id_m], [−Id_m, 0]]` for `n = 2m`.
pub fn darboux(n: usize) -> FiberMatrix {
    let m = n / 2;
    let mut j = FiberMatrix::zeros(n, n);
    for i in 0..m {
        j[(i, m + i)] = 1.0;
        j[(m + i, i)] = -1.0;
    }
    j
}

/// The reference structure and basis on which the Gram matrix is built.
pub fn reference_basis(space: MatrixSpace, n: usize) -> Result<(FiberMatrix, Vec<FiberMatrix>)> {
    if n == 0 {
        return Err(GeometryError::domain("dimension must be positive"));
    }
    match space {
        MatrixSpace::FullMatrices => {
            let basis = (0..n).flat_map(|i| (0..n).map(move |j| unit(n, i, j))).collect();
            Ok((FiberMatrix::identity(n, n), basis))
        }
        MatrixSpace::SymmetricWithSignature(q) => {
            if q > n {
                return Err(GeometryError::domain(format!("signature q = {q} exceeds n = {n}")));
            }
            let b = FiberMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |i, _| if i < q { -1.0 } else { 1.0 }));
            let mut basis: Vec<FiberMatrix> = (0..n).map(|i| unit(n, i, i)).collect();
            for i in 0..n {
                for j in (i + 1)..n {
                    basis.push(unit(n, i, j) + unit(n, j, i));
                }
            }
            Ok((b, basis))
        }
        MatrixSpace::SkewForms => {
            if n % 2 != 0 {
                return Err(GeometryError::domain(format!("skew forms need even n, got {n}")));
            }
            let mut basis = Vec::new();
            for i in 0..n {
                for j in (i + 1)..n {
                    basis.push(unit(n, i, j) - unit(n, j, i));
                }
            }
            Ok((darboux(n), basis))
        }
    }
}

/// Gram matrix of `γ^α_b` on the reference basis of `space`.
pub fn gram_matrix(space: MatrixSpace, n: usize, alpha: f64) -> Result<DMatrix<f64>> {
    let p = MetricParams::new(alpha, n)?;
    let (b, basis) = reference_basis(space, n)?;
    let lu = fiber::invertible_lu(&b)?;
    let endos: Vec<FiberMatrix> = basis
        .iter()
        .map(|h| lu.solve(h).expect("reference structure is invertible"))
        .collect();
    let d = endos.len();
    let mut gram = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i..d {
            let v = gamma_endomorphisms(&endos[i], &endos[j], p.alpha());
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    Ok(gram)
}

/// Zero threshold for Gram eigenvalues.
pub const SIGNATURE_THRESHOLD: f64 = 1e-10;

/// Ascending Gram spectrum of `γ^α` on `space`.
pub fn signature_spectrum(space: MatrixSpace, n: usize, alpha: f64) -> Result<Vec<f64>> {
    let gram = gram_matrix(space, n, alpha)?;
    Ok(fiber::symmetric_eigenvalues(&gram))
}

/// Number of negative eigenvalues of the Gram matrix of `γ^α` on `space`.
pub fn signature_count(space: MatrixSpace, n: usize, alpha: f64) -> Result<usize> {
    let eigs = signature_spectrum(space, n, alpha)?;
    Ok(fiber::negative_count(&eigs, SIGNATURE_THRESHOLD))
}

/// Closed-form signature: `n(n−1)/2`, `q(n−q)` or `m² − m`, plus one for `α < 0`.
pub fn predicted_signature(space: MatrixSpace, n: usize, alpha: f64) -> Result<usize> {
    MetricParams::new(alpha, n)?;
    let extra = usize::from(alpha < 0.0);
    match space {
        MatrixSpace::FullMatrices => Ok(n * (n - 1) / 2 + extra),
        MatrixSpace::SymmetricWithSignature(q) => {
            if q > n {
                return Err(GeometryError::domain(format!("signature q = {q} exceeds n = {n}")));
            }
            Ok(q * (n - q) + extra)
        }
        MatrixSpace::SkewForms => {
            if n % 2 != 0 {
                return Err(GeometryError::domain(format!("skew forms need even n, got {n}")));
            }
            let m = n / 2;
            Ok(m * m - m + extra)
        }
    }
}

/// One row of the signature table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignatureRow {
    pub space: &'static str,
    pub n: usize,
    /// `q` for symmetric forms, `m = n/2` for skew forms.
    pub q_or_m: Option<usize>,
    pub alpha: f64,
    pub predicted: usize,
    pub counted: usize,
}

impl SignatureRow {
    pub fn matches(&self) -> bool {
        self.predicted == self.counted
    }
}

/// Predicted and counted signatures for every space available in dimension `n`.
pub fn signature_rows(n: usize, alpha: f64) -> Result<Vec<SignatureRow>> {
    let mut spaces = vec![(MatrixSpace::FullMatrices, None)];
    spaces.extend((0..=n).map(|q| (MatrixSpace::SymmetricWithSignature(q), Some(q))));
    if n % 2 == 0 {
        spaces.push((MatrixSpace::SkewForms, Some(n / 2)));
    }
    spaces
        .into_iter()
        .map(|(space, q_or_m)| {
            Ok(SignatureRow {
                space: space.name(),
                n,
                q_or_m,
                alpha,
                predicted: predicted_signature(space, n, alpha)?,
                counted: signature_count(space, n, alpha)?,
            })
        })
        .collect()
}
