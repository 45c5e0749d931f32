//! Single-fiber linear algebra: traces, traceless parts, the matrix
//! exponential and principal logarithm, and symmetry tests for bilinear
//! structures at one point of the base.

use nalgebra::{Complex, DMatrix, LU};

use crate::error::{GeometryError, Result};

/// A real n×n matrix at one point of the base manifold.
///
/// Bilinear structures `b`, tangent vectors `h` and the endomorphisms
/// `H = b⁻¹h` all share this representation.
pub type FiberMatrix = DMatrix<f64>;

/// Default relative tolerance for symmetry tests.
pub const TAU_SYM: f64 = 1e-10;
/// Default relative determinant threshold: `|det b| > TAU_DET · ‖b‖ⁿ`.
pub const TAU_DET: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SymmetryCharacter {
    Symmetric,
    Skew,
    Neither,
}

pub fn trace(a: &FiberMatrix) -> f64 {
    a.trace()
}

/// `tr(AB)` without forming the product.
pub fn trace_of_product(a: &FiberMatrix, b: &FiberMatrix) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `H₀ = H − (tr H / n)·Id`.
pub fn traceless_part(h: &FiberMatrix) -> FiberMatrix {
    let n = h.nrows();
    let shift = h.trace() / n as f64;
    let mut out = h.clone();
    for i in 0..n {
        out[(i, i)] -= shift;
    }
    out
}

pub fn is_finite(a: &FiberMatrix) -> bool {
    a.iter().all(|v| v.is_finite())
}

pub fn check_square(a: &FiberMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(GeometryError::Shape(format!(
            "expected a non-empty square matrix, got {}×{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !is_finite(a) {
        return Err(GeometryError::Validation("matrix has non-finite entries".into()));
    }
    Ok(a.nrows())
}

/// LU factorisation of `b`, refusing structures with `|det b| ≤ τ_det·‖b‖ⁿ`.
pub fn invertible_lu(b: &FiberMatrix) -> Result<LU<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    let n = check_square(b)?;
    let lu = b.clone().lu();
    let det = lu.determinant();
    let scale = b.norm().powi(n as i32);
    if !(det.abs() > TAU_DET * scale) || scale == 0.0 {
        return Err(GeometryError::domain(format!("singular structure (det = {det:.3e})")));
    }
    Ok(lu)
}

pub fn is_invertible(b: &FiberMatrix) -> bool {
    invertible_lu(b).is_ok()
}

/// `b⁻¹h` for an invertible `b`.
pub fn left_divide(b: &FiberMatrix, h: &FiberMatrix) -> Result<FiberMatrix> {
    let lu = invertible_lu(b)?;
    lu.solve(h).ok_or_else(|| GeometryError::domain("singular structure"))
}

/// Classifies `h` as symmetric, skew or neither, relative to `τ_sym·‖h‖`.
pub fn symmetry_character(b: &FiberMatrix, h: &FiberMatrix) -> Result<SymmetryCharacter> {
    symmetry_character_with(b, h, TAU_SYM)
}

pub fn symmetry_character_with(b: &FiberMatrix, h: &FiberMatrix, tau: f64) -> Result<SymmetryCharacter> {
    invertible_lu(b)?;
    if h.shape() != b.shape() {
        return Err(GeometryError::Shape("h and b differ in size".into()));
    }
    let scale = h.norm();
    let ht = h.transpose();
    if (h - &ht).norm() <= tau * scale {
        Ok(SymmetryCharacter::Symmetric)
    } else if (h + &ht).norm() <= tau * scale {
        Ok(SymmetryCharacter::Skew)
    } else {
        Ok(SymmetryCharacter::Neither)
    }
}

/// `‖b − σbᵗ‖ / ‖b‖` with `σ = +1` (symmetric) or `−1` (skew).
pub fn symmetry_defect(b: &FiberMatrix, sigma: f64) -> f64 {
    let norm = b.norm();
    if norm == 0.0 {
        return 0.0;
    }
    (b - b.transpose() * sigma).norm() / norm
}

fn one_norm(a: &FiberMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

// Padé coefficients and switching thresholds for the degree-m diagonal
// approximants used by scaling and squaring (Higham 2005).
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA: [f64; 4] = [
    1.495585217958292e-2,
    2.53939833006323e-1,
    9.504178996162932e-1,
    2.097847961257068e0,
];
const THETA13: f64 = 5.371920351148152;

fn pade_low(a: &FiberMatrix, coeffs: &[f64]) -> (FiberMatrix, FiberMatrix) {
    let n = a.nrows();
    let id = FiberMatrix::identity(n, n);
    let a2 = a * a;
    let mut power = id.clone();
    let mut u = FiberMatrix::zeros(n, n);
    let mut v = FiberMatrix::zeros(n, n);
    for k in (0..coeffs.len()).step_by(2) {
        v += &power * coeffs[k];
        u += &power * coeffs[k + 1];
        power = &power * &a2;
    }
    (a * u, v)
}

fn pade13(a: &FiberMatrix) -> (FiberMatrix, FiberMatrix) {
    let b = &PADE13;
    let n = a.nrows();
    let id = FiberMatrix::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a diagonal Padé kernel.
pub fn matrix_exp(a: &FiberMatrix) -> FiberMatrix {
    let n = a.nrows();
    if a.iter().all(|&v| v == 0.0) {
        return FiberMatrix::identity(n, n);
    }
    let norm = one_norm(a);
    let (u, v, squarings) = if norm <= THETA[0] {
        let (u, v) = pade_low(a, &PADE3);
        (u, v, 0)
    } else if norm <= THETA[1] {
        let (u, v) = pade_low(a, &PADE5);
        (u, v, 0)
    } else if norm <= THETA[2] {
        let (u, v) = pade_low(a, &PADE7);
        (u, v, 0)
    } else if norm <= THETA[3] {
        let (u, v) = pade_low(a, &PADE9);
        (u, v, 0)
    } else {
        let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
        let scaled = a * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is invertible within the switching thresholds");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Eigenvalues of a real square matrix (via the real Schur form).
pub fn eigenvalues(a: &FiberMatrix) -> Vec<Complex<f64>> {
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Eigenvalues of the symmetric part of `a`, ascending.
pub fn symmetric_eigenvalues(a: &FiberMatrix) -> Vec<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Number of eigenvalues below `−threshold`.
pub fn negative_count(eigs: &[f64], threshold: f64) -> usize {
    eigs.iter().filter(|&&l| l < -threshold).count()
}

/// Principal square root by the Denman–Beavers iteration.
fn sqrt_denman_beavers(a: &FiberMatrix) -> Result<FiberMatrix> {
    let n = a.nrows();
    let mut y = a.clone();
    let mut z = FiberMatrix::identity(n, n);
    for _ in 0..100 {
        let y_inv = y
            .clone()
            .try_inverse()
            .ok_or_else(|| GeometryError::domain("square-root iteration hit a singular iterate"))?;
        let z_inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| GeometryError::domain("square-root iteration hit a singular iterate"))?;
        let y_next = (&y + z_inv) * 0.5;
        let z_next = (&z + y_inv) * 0.5;
        let delta = (&y_next - &y).norm();
        y = y_next;
        z = z_next;
        if delta <= 1e-15 * y.norm() {
            break;
        }
    }
    Ok(y)
}

/// Gauss–Legendre nodes and weights on [0, 1].
fn gauss_legendre_unit(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((0.5 * (x + 1.0), 0.5 * w));
    }
    out
}

/// Principal matrix logarithm by inverse scaling and squaring.
///
/// Refuses matrices with an eigenvalue on the closed negative real axis
/// rather than choosing a branch.
pub fn matrix_log(a: &FiberMatrix) -> Result<FiberMatrix> {
    let n = check_square(a)?;
    invertible_lu(a)?;
    for lambda in eigenvalues(a) {
        let tol = 1e-10 * lambda.norm().max(f64::MIN_POSITIVE);
        if lambda.re <= 0.0 && lambda.im.abs() <= tol {
            return Err(GeometryError::EigenvalueOnCut {
                re: lambda.re,
                im: lambda.im,
            });
        }
    }
    let id = FiberMatrix::identity(n, n);
    let mut x = a.clone();
    let mut squarings = 0;
    while one_norm(&(&x - &id)) > 0.25 {
        if squarings >= 64 {
            return Err(GeometryError::domain("matrix logarithm failed to converge"));
        }
        x = sqrt_denman_beavers(&x)?;
        squarings += 1;
    }
    let y = &x - &id;
    if y.iter().all(|&v| v == 0.0) {
        return Ok(FiberMatrix::zeros(n, n));
    }
    // log(I + Y) = ∫₀¹ Y (I + sY)⁻¹ ds, i.e. the diagonal Padé approximant.
    let mut log = FiberMatrix::zeros(n, n);
    for (node, weight) in gauss_legendre_unit(12) {
        let shifted = &id + &y * node;
        let term = shifted
            .lu()
            .solve(&y)
            .ok_or_else(|| GeometryError::domain("logarithm quadrature hit a singular shift"))?;
        log += term * weight;
    }
    Ok(log * 2f64.powi(squarings))
}
