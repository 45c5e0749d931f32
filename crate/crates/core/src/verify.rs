//! Seeded verification suites. Each suite draws its own random stream from
//! the run seed and reports, per property, the worst residual against its
//! threshold.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::curvature::{curvature_fd_point, relative_deviation, DEFAULT_EPS};
use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix};
use crate::fields::{pointwise_volume, BilinearField, Mesh, TangentField};
use crate::format::Num17;
use crate::geodesics::{
    discrete_energy, domain_time, geodesic_exp, geodesic_point, geodesic_velocity_endomorphism, log_map,
};
use crate::metric::{gamma_endomorphisms, metric_g_alpha, signature_rows, MetricParams};
use crate::random::InstanceRng;
use crate::splitting::{
    check_metric, decompose_tangent, hat_metric, phi_split, psi_assemble, slice_direction, slice_geodesic,
    slice_geodesic_via_split, submersion_check, AlmostProductField, DistributionFrame, SplitTangent, SplitTriple,
};
use crate::strategy::{curvature_models, geodesic_solvers, CurvatureModel, GeodesicSolver, Registry, Rk4Geodesic};
use crate::submanifolds::{
    closure_sample_times, geodesic_closure_report, max_symmetry_defect_along, two_form_volume_identities,
    SubmanifoldKind,
};

pub const DEFAULT_SEED: u64 = 20240611;

/// Named thresholds, overridable from the command line as `--tol-<name>`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    values: BTreeMap<&'static str, f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        let values = [
            ("geodesic", 1e-6),
            ("blowup", 1e-9),
            ("divergence", 1e-6),
            ("curvature", 1e-5),
            ("antisymmetry", 1e-14),
            ("bianchi", 1e-10),
            ("compatibility", 1e-9),
            ("closure", 1e-10),
            ("negative-control", 1e-3),
            ("exp-log", 1e-8),
            ("volume", 1e-12),
            ("roundtrip", 1e-12),
            ("orthogonality", 1e-10),
            ("independence", 1e-10),
            ("tangent", 1e-12),
            ("slice", 1e-12),
            ("submersion", 1e-10),
            ("energy", 1e-4),
        ]
        .into_iter()
        .collect();
        Tolerances { values }
    }
}

impl Tolerances {
    pub fn get(&self, name: &str) -> f64 {
        self.values[name]
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(GeometryError::Validation(format!(
                "tolerance {name} must be a non-negative number"
            )));
        }
        match self.values.get_mut(name) {
            Some(slot) => {
                *slot = value;
                Ok(())
            }
            None => Err(GeometryError::Validation(format!(
                "unknown tolerance '{name}' (known: {})",
                self.names().join(", ")
            ))),
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.values.keys().copied().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when the residual is at most the threshold.
    AtMost,
    /// Passes when the residual exceeds the threshold (negative controls).
    Exceeds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub instances: usize,
}

impl Check {
    pub fn at_most(name: &str, residual: f64, threshold: f64, instances: usize) -> Self {
        Check {
            name: name.to_string(),
            residual,
            threshold,
            bound: Bound::AtMost,
            instances,
        }
    }

    pub fn exceeds(name: &str, residual: f64, threshold: f64, instances: usize) -> Self {
        Check {
            bound: Bound::Exceeds,
            ..Check::at_most(name, residual, threshold, instances)
        }
    }

    pub fn passed(&self) -> bool {
        match self.bound {
            Bound::AtMost => self.residual <= self.threshold,
            Bound::Exceeds => self.residual > self.threshold,
        }
    }
}

impl Serialize for Check {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a> {
            name: &'a str,
            residual: Num17,
            threshold: Num17,
            bound: Bound,
            instances: usize,
            passed: bool,
        }
        Out {
            name: &self.name,
            residual: Num17(self.residual),
            threshold: Num17(self.threshold),
            bound: self.bound,
            instances: self.instances,
            passed: self.passed(),
        }
        .serialize(s)
    }
}

/// Running maximum of a residual across instances. NaN poisons it.
#[derive(Debug, Clone, Copy)]
struct Worst {
    value: f64,
    count: usize,
}

impl Worst {
    fn new() -> Self {
        Worst { value: 0.0, count: 0 }
    }

    fn add(&mut self, x: f64) {
        self.value = if x.is_nan() || self.value.is_nan() {
            f64::NAN
        } else {
            self.value.max(x)
        };
        self.count += 1;
    }

    fn check(&self, name: &str, tol: &Tolerances, key: &str) -> Check {
        Check::at_most(name, self.value, tol.get(key), self.count)
    }
}

pub struct SuiteContext<'a> {
    pub seed: u64,
    pub tolerances: &'a Tolerances,
    pub curvature: &'a dyn CurvatureModel,
}

pub trait Suite: Send + Sync {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>>;
}

fn alpha_cycle(i: usize, n: usize) -> f64 {
    [-1.0, 1.0 / n as f64, 1.0][i % 3]
}

fn field_norm(ms: &[FiberMatrix]) -> f64 {
    ms.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt()
}

fn field_deviation(a: &[FiberMatrix], b: &[FiberMatrix]) -> f64 {
    let diff: Vec<FiberMatrix> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = field_norm(b);
    if scale > 0.0 {
        field_norm(&diff) / scale
    } else {
        field_norm(&diff)
    }
}

fn random_bilinear(rng: &mut InstanceRng, mesh: &Arc<Mesh>, n: usize) -> Result<BilinearField> {
    let ms = (0..mesh.point_count()).map(|_| rng.structure(n)).collect();
    BilinearField::new(mesh.clone(), ms)
}

fn random_tangent(rng: &mut InstanceRng, mesh: &Arc<Mesh>, n: usize) -> Result<TangentField> {
    let ms = (0..mesh.point_count()).map(|_| rng.matrix(n, n)).collect();
    TangentField::new(mesh.clone(), ms)
}

/// Random `h` with entries in `[−1, 1]`, scaled down where needed so that
/// `‖(b⁰)⁻¹h‖_F ≤ 1` at every point.
fn unit_bounded_direction(rng: &mut InstanceRng, b0: &BilinearField) -> Result<TangentField> {
    let n = b0.n();
    let hs = b0
        .matrices()
        .iter()
        .map(|bx| {
            let h = rng.matrix(n, n);
            let norm = fiber::left_divide(bx, &h)?.norm();
            Ok(if norm > 1.0 { h / norm } else { h })
        })
        .collect::<Result<Vec<_>>>()?;
    TangentField::new(b0.mesh().clone(), hs)
}

/// Closed-form geodesic against RK4 on random instances.
pub struct GeodesicOracleSuite {
    pub instances: usize,
    pub steps: usize,
}

impl Suite for GeodesicOracleSuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "geodesic-oracle");
        let solvers = geodesic_solvers();
        let closed = solvers.get("closed-form")?;
        let rk4 = Rk4Geodesic { steps: self.steps };
        let mut worst = Worst::new();
        for i in 0..self.instances {
            let n = 1 + i % 3;
            let p = MetricParams::new(alpha_cycle(i / 3, n), n)?;
            let mesh = rng.mesh(2);
            let b0 = random_bilinear(&mut rng, &mesh, n)?;
            let h = unit_bounded_direction(&mut rng, &b0)?;
            let m_h = domain_time(&b0, &h, &p)?.m_h;
            let t = if m_h.is_finite() { 0.9 * m_h } else { 2.0 };
            let mut exact = Vec::with_capacity(2);
            let mut numeric = Vec::with_capacity(2);
            for (bx, hx) in b0.matrices().iter().zip(h.matrices()) {
                exact.push(closed.solve_point(bx, hx, &p, t)?);
                numeric.push(rk4.solve_point(bx, hx, &p, t)?);
            }
            worst.add(field_deviation(&numeric, &exact));
        }
        Ok(vec![worst.check("closed-form vs rk4", ctx.tolerances, "geodesic")])
    }
}

/// The three worked existence-time examples and the blow-up as `t ↑ m_h`.
pub struct BlowupSuite;

impl Suite for BlowupSuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mesh = Arc::new(Mesh::uniform(1)?);
        let id = FiberMatrix::identity(2, 2);
        let b0 = BilinearField::constant(mesh.clone(), id.clone())?;
        let cases = [
            (-&id, 1.0, 2.0),
            (id.clone(), 1.0, f64::INFINITY),
            (nalgebra::dmatrix![1.0, 0.0; 0.0, -1.0], -1.0, 2.0 * 2f64.sqrt()),
        ];
        let mut m_h_err = Worst::new();
        let mut divergence = Worst::new();
        for (hm, alpha, expected) in cases {
            let p = MetricParams::new(alpha, 2)?;
            let h = TangentField::constant(mesh.clone(), hm.clone())?;
            let m_h = domain_time(&b0, &h, &p)?.m_h;
            m_h_err.add(if expected.is_finite() {
                (m_h - expected).abs() / expected
            } else if m_h == f64::INFINITY {
                0.0
            } else {
                f64::INFINITY
            });
            if !expected.is_finite() {
                continue;
            }
            // |det b(t)| must fall monotonically towards 0, or ‖b⁻¹b_t‖ grow without bound.
            let mut dets = Vec::new();
            let mut speeds = Vec::new();
            for j in 1..=6 {
                let t = m_h * (1.0 - 10f64.powi(-j));
                // Per point: near m_h the state is too ill-conditioned to pass field validation.
                dets.push(geodesic_point(b0.at(0), &hm, &p, t)?.determinant().abs());
                speeds.push(geodesic_velocity_endomorphism(&hm, &p, t)?.norm());
            }
            let det_vanishes = dets.windows(2).all(|w| w[1] < w[0]);
            let speed_diverges = speeds.windows(2).all(|w| w[1] > w[0]);
            let last_det = *dets.last().expect("six samples");
            let last_speed = *speeds.last().expect("six samples");
            let score = match (det_vanishes, speed_diverges) {
                (true, true) => last_det.min(1.0 / last_speed),
                (true, false) => last_det,
                (false, true) => 1.0 / last_speed,
                (false, false) => f64::INFINITY,
            };
            divergence.add(score);
        }
        Ok(vec![
            m_h_err.check("m_h of worked examples", ctx.tolerances, "blowup"),
            divergence.check("|det| or 1/|b^-1 b_t| near m_h", ctx.tolerances, "divergence"),
        ])
    }
}

/// The selected curvature model against the Christoffel finite-difference oracle.
pub struct CurvatureSuite {
    pub instances: usize,
}

impl Suite for CurvatureSuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "curvature");
        let model = ctx.curvature;
        let (mut dev, mut anti, mut bianchi, mut compat) = (Worst::new(), Worst::new(), Worst::new(), Worst::new());
        for i in 0..self.instances {
            let n = 2 + i % 2;
            let alpha = [1.0, -1.0, 1.0 / n as f64][(i / 2) % 3];
            let p = MetricParams::new(alpha, n)?;
            let b = rng.structure(n);
            let (h, k, l) = (rng.matrix(n, n), rng.matrix(n, n), rng.matrix(n, n));

            let r_hk = model.evaluate(&b, &h, &k, &l, &p)?;
            let oracle = curvature_fd_point(&b, &h, &k, &l, &p, DEFAULT_EPS)?;
            dev.add(relative_deviation(&r_hk, &oracle));

            let r_kh = model.evaluate(&b, &k, &h, &l, &p)?;
            let r_kl = model.evaluate(&b, &k, &l, &h, &p)?;
            let r_lh = model.evaluate(&b, &l, &h, &k, &p)?;
            let scale = r_hk.norm().max(r_kl.norm()).max(r_lh.norm()).max(f64::MIN_POSITIVE);
            anti.add((&r_hk + &r_kh).norm() / scale);
            bianchi.add((&r_hk + &r_kl + &r_lh).norm() / scale);

            let rr = fiber::left_divide(&b, &r_hk)?;
            let ll = fiber::left_divide(&b, &l)?;
            compat.add(gamma_endomorphisms(&rr, &ll, alpha).abs() / (rr.norm() * ll.norm()).max(f64::MIN_POSITIVE));
        }
        let tol = ctx.tolerances;
        Ok(vec![
            dev.check("closed form vs finite differences", tol, "curvature"),
            anti.check("antisymmetry", tol, "antisymmetry"),
            bianchi.check("first Bianchi identity", tol, "bianchi"),
            compat.check("metric compatibility", tol, "compatibility"),
        ])
    }
}

/// Predicted against counted signatures for `n ≤ 5`, `α ∈ {±1, ±1/n}`.
pub struct SignatureSuite {
    pub max_n: usize,
}

impl Suite for SignatureSuite {
    fn run(&self, _ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rows = 0;
        let mut mismatches = 0;
        for n in 1..=self.max_n {
            let inv = 1.0 / n as f64;
            for alpha in [1.0, -1.0, inv, -inv] {
                for row in signature_rows(n, alpha)? {
                    rows += 1;
                    mismatches += usize::from(!row.matches());
                }
            }
        }
        Ok(vec![Check::at_most("mismatched rows", mismatches as f64, 0.0, rows)])
    }
}

/// Sampling horizon for a geodesic that never blows up: `horizon`, halved
/// until every sample `b(t)` has condition number below 1e10. Past that the
/// small eigenvalues are rounding noise and their signs mean nothing.
fn resolvable_horizon(
    b0: &BilinearField,
    h: &TangentField,
    p: &MetricParams,
    m_h: f64,
    horizon: f64,
    count: usize,
) -> Result<f64> {
    if m_h.is_finite() {
        return Ok(horizon);
    }
    let mut upper = horizon;
    for _ in 0..30 {
        let mut resolvable = true;
        for t in closure_sample_times(m_h, count, upper) {
            for (bx, hx) in b0.matrices().iter().zip(h.matrices()) {
                let eigs = fiber::symmetric_eigenvalues(&geodesic_point(bx, hx, p, t)?);
                let big = eigs.iter().fold(0.0f64, |m, e| m.max(e.abs()));
                let small = eigs.iter().fold(f64::INFINITY, |m, e| m.min(e.abs()));
                resolvable &= big <= 1e10 * small;
            }
        }
        if resolvable {
            break;
        }
        upper *= 0.5;
    }
    Ok(upper)
}

/// Closedness of the symmetric and skew submanifolds, with a negative control.
pub struct ClosureSuite {
    pub instances: usize,
    pub times: usize,
}

impl Suite for ClosureSuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "closure");
        let (mut sym, mut skew) = (Worst::new(), Worst::new());
        let mut unstable = 0usize;
        let mut control = f64::INFINITY;
        for i in 0..self.instances {
            let n = 2 + i % 2;
            let p = MetricParams::new(alpha_cycle(i / 2, n), n)?;
            let mesh = rng.mesh(2);
            let b0 = BilinearField::new(mesh.clone(), (0..2).map(|_| rng.pseudo_riemannian(n)).collect())?;
            let h = TangentField::new(mesh.clone(), (0..2).map(|_| rng.symmetric(n)).collect())?;
            let m_h = domain_time(&b0, &h, &p)?.m_h;
            let times = closure_sample_times(m_h, self.times, resolvable_horizon(&b0, &h, &p, m_h, 2.0, self.times)?);
            let report = geodesic_closure_report(&b0, &h, &p, SubmanifoldKind::Symmetric, &times)?;
            sym.add(report.max_symmetry_defect);
            unstable += usize::from(!report.point_signatures.windows(2).all(|w| w[0] == w[1]));

            let generic = random_tangent(&mut rng, &mesh, n)?;
            let times = closure_sample_times(domain_time(&b0, &generic, &p)?.m_h, self.times, 2.0);
            control = control.min(max_symmetry_defect_along(&b0, &generic, &p, 1.0, &times)?);

            let n = 2 + 2 * (i % 2);
            let p = MetricParams::new(alpha_cycle(i / 2, n), n)?;
            let b0 = BilinearField::new(mesh.clone(), (0..2).map(|_| rng.symplectic(n)).collect())?;
            let h = TangentField::new(mesh.clone(), (0..2).map(|_| rng.skew(n)).collect())?;
            let times = closure_sample_times(domain_time(&b0, &h, &p)?.m_h, self.times, 2.0);
            skew.add(geodesic_closure_report(&b0, &h, &p, SubmanifoldKind::Skew, &times)?.max_symmetry_defect);
        }
        let tol = ctx.tolerances;
        Ok(vec![
            sym.check("symmetric defect", tol, "closure"),
            Check::at_most("non-constant signature traces", unstable as f64, 0.0, self.instances),
            skew.check("skew defect", tol, "closure"),
            Check::exceeds(
                "generic direction defect",
                control,
                tol.get("negative-control"),
                self.instances,
            ),
        ])
    }
}

/// `log_map(b⁰, Exp(h)) = h` for `‖H‖ ≤ 0.5`.
pub struct ExpLogSuite {
    pub instances: usize,
}

impl Suite for ExpLogSuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "exp-log");
        let mut worst = Worst::new();
        for i in 0..self.instances {
            let n = 1 + i % 3;
            let p = MetricParams::new(alpha_cycle(i / 3, n), n)?;
            let mesh = rng.mesh(2);
            let b0 = random_bilinear(&mut rng, &mesh, n)?;
            let hs = b0
                .matrices()
                .iter()
                .map(|bx| {
                    let a = rng.matrix(n, n);
                    let target = rng.range(0.05, 0.5);
                    bx * (&a * (target / a.norm()))
                })
                .collect();
            let h = TangentField::new(mesh, hs)?;
            let b1 = geodesic_exp(&b0, &h, &p, 1.0)?;
            let back = log_map(&b0, &b1, &p)?;
            worst.add(field_deviation(back.matrices(), h.matrices()));
        }
        Ok(vec![worst.check("log(exp(h)) = h", ctx.tolerances, "exp-log")])
    }
}

/// Top-degree identities for random 2-forms at `n = 2, 4`.
pub struct VolumeIdentitySuite {
    pub instances: usize,
}

impl Suite for VolumeIdentitySuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "volume");
        let mut worst = Worst::new();
        for n in [2, 4] {
            for _ in 0..self.instances {
                let omega = loop {
                    let w = rng.skew(n);
                    if w.determinant().abs() > 1e-3 {
                        break w;
                    }
                };
                let phi = rng.skew(n);
                for pair in two_form_volume_identities(&omega, &phi)? {
                    worst.add(pair.relative_gap());
                }
            }
        }
        Ok(vec![worst.check("2-form volume identities", ctx.tolerances, "volume")])
    }
}

fn random_frame(
    rng: &mut InstanceRng,
    n: usize,
    k: usize,
    points: usize,
    canonical: bool,
) -> Result<DistributionFrame> {
    if canonical {
        return DistributionFrame::canonical(n, k, points);
    }
    let basis = loop {
        let b = rng.matrix(n, k);
        let gram = b.transpose() * &b;
        if gram.determinant() > 0.05 {
            break b;
        }
    };
    DistributionFrame::from_bases(vec![basis; points])
}

fn random_riemannian(rng: &mut InstanceRng, mesh: &Arc<Mesh>, n: usize) -> Result<BilinearField> {
    BilinearField::new(
        mesh.clone(),
        (0..mesh.point_count()).map(|_| rng.riemannian(n)).collect(),
    )
}

fn symmetric_tangent(rng: &mut InstanceRng, mesh: &Arc<Mesh>, n: usize) -> Result<TangentField> {
    TangentField::new(
        mesh.clone(),
        (0..mesh.point_count()).map(|_| rng.symmetric(n)).collect(),
    )
}

fn triple_deviation(a: &SplitTriple, b: &SplitTriple) -> f64 {
    field_deviation(&a.g1, &b.g1)
        .max(field_deviation(&a.g2, &b.g2))
        .max(field_deviation(a.p.matrices(), b.p.matrices()))
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

/// Identities of the splitting for `n ∈ {2,3,4}` and every `0 < k < n`.
pub struct SplittingSuite {
    pub seeds: usize,
}

impl Suite for SplittingSuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "splitting");
        let mut round_g = Worst::new();
        let mut round_t = Worst::new();
        let mut orth = Worst::new();
        let mut check_ind = Worst::new();
        let mut hat_ind = Worst::new();
        let mut tangent = Worst::new();
        let mut slice = Worst::new();
        let mut submersion = Worst::new();
        for n in 2..=4 {
            let p = MetricParams::standard(n)?;
            for k in 1..n {
                for s in 0..self.seeds {
                    let mesh = rng.mesh(3);
                    let v = random_frame(&mut rng, n, k, 3, s % 2 == 0)?;
                    let g = random_riemannian(&mut rng, &mesh, n)?;
                    let triple = phi_split(&g, &v)?;
                    round_g.add(field_deviation(psi_assemble(&triple, &v)?.matrices(), g.matrices()));

                    let other = phi_split(&random_riemannian(&mut rng, &mesh, n)?, &v)?;
                    let mixed = SplitTriple::new(
                        mesh.clone(),
                        (0..3).map(|_| rng.riemannian(n - k)).collect(),
                        (0..3).map(|_| rng.riemannian(k)).collect(),
                        other.p.clone(),
                        &v,
                    )?;
                    round_t.add(triple_deviation(&phi_split(&psi_assemble(&mixed, &v)?, &v)?, &mixed));

                    let h = symmetric_tangent(&mut rng, &mesh, n)?;
                    let kk = symmetric_tangent(&mut rng, &mesh, n)?;
                    let (h1, h2) = decompose_tangent(&g, &h, &v)?;
                    let (k1, k2) = decompose_tangent(&g, &kk, &v)?;
                    let full = metric_g_alpha(&g, &h, &kk, &p)?;
                    let split = metric_g_alpha(&g, &h1, &k1, &p)? + metric_g_alpha(&g, &h2, &k2, &p)?;
                    orth.add(relative_gap(full, split));

                    // Same (g1, g2), two different P.
                    let with_p = |pf: &AlmostProductField| SplitTriple {
                        p: pf.clone(),
                        ..mixed.clone()
                    };
                    let (ta, tb) = (with_p(&triple.p), with_p(&other.p));
                    let tangent_pair = |rng: &mut InstanceRng| SplitTangent {
                        h1: (0..3).map(|_| rng.symmetric(n - k)).collect(),
                        h2: (0..3).map(|_| rng.symmetric(k)).collect(),
                    };
                    let (a, b) = (tangent_pair(&mut rng), tangent_pair(&mut rng));
                    check_ind.add(relative_gap(
                        check_metric(&ta, &a, &b, &v)?,
                        check_metric(&tb, &a, &b, &v)?,
                    ));

                    let slice_tangent = |rng: &mut InstanceRng| -> Vec<FiberMatrix> {
                        (0..3).map(|x| &v.at(x).i * rng.matrix(k, n - k) * &v.at(x).p).collect()
                    };
                    let (xi, eta) = (slice_tangent(&mut rng), slice_tangent(&mut rng));
                    let at_a = hat_metric(&ta, &xi, &eta, &v, &p)?.value;
                    hat_ind.add(relative_gap(at_a, hat_metric(&tb, &xi, &eta, &v, &p)?.value));
                    let step = rng.range(0.2, 1.0);
                    let shifted = AlmostProductField::new((0..3).map(|x| ta.p.at(x) + &xi[x] * step).collect(), &v)?;
                    hat_ind.add(relative_gap(
                        at_a,
                        hat_metric(&with_p(&shifted), &xi, &eta, &v, &p)?.value,
                    ));

                    for x in 0..3 {
                        let zeta = slice_direction(g.at(x), h2.at(x), triple.p.at(x))?;
                        let f = v.at(x);
                        let scale = zeta.norm().max(1.0);
                        tangent.add((&zeta * &f.i).norm() / scale);
                        tangent.add((&zeta - &f.i * (&f.i_left * &zeta)).norm() / scale);
                    }

                    let t = rng.range(0.2, 1.5);
                    let direct = slice_geodesic(&g, &h2, &v, t)?;
                    let routed = slice_geodesic_via_split(&g, &h2, &v, t)?;
                    slice.add(field_deviation(routed.matrices(), direct.matrices()));

                    submersion.add(submersion_check(&g, &h, &kk, &v, &p)?);
                }
            }
        }
        let tol = ctx.tolerances;
        Ok(vec![
            round_g.check("psi(phi(g)) = g", tol, "roundtrip"),
            round_t.check("phi(psi(t)) = t", tol, "roundtrip"),
            orth.check("D1 orthogonal to D2", tol, "orthogonality"),
            check_ind.check("check metric independent of P", tol, "independence"),
            hat_ind.check("hat metric independent of P and flat", tol, "independence"),
            tangent.check("D2 pushes into im in V in ker", tol, "tangent"),
            slice.check("slice geodesic vs split route", tol, "slice"),
            submersion.check("submersion identity", tol, "submersion"),
        ])
    }
}

/// The integrand scale `∫Σ vol·‖B‖(‖b⁻¹δ_t‖ + ‖B‖‖b⁻¹δ‖) dt`, used to make
/// the first variation dimensionless.
fn variation_scale(curve: &[BilinearField], deltas: &[Vec<FiberMatrix>], dt: f64) -> Result<f64> {
    let last = curve.len() - 1;
    let diff = |j: usize, get: &dyn Fn(usize) -> FiberMatrix| -> FiberMatrix {
        if j == 0 {
            (get(0) * -3.0 + get(1) * 4.0 - get(2)) / (2.0 * dt)
        } else if j == last {
            (get(last) * 3.0 - get(last - 1) * 4.0 + get(last - 2)) / (2.0 * dt)
        } else {
            (get(j + 1) - get(j - 1)) / (2.0 * dt)
        }
    };
    let mut values = Vec::with_capacity(curve.len());
    for j in 0..=last {
        let mut acc = 0.0;
        for x in 0..curve[j].len() {
            let bx = curve[j].at(x);
            let bt = diff(j, &|k| curve[k].at(x).clone());
            let dtx = diff(j, &|k| deltas[k][x].clone());
            let speed = fiber::left_divide(bx, &bt)?.norm();
            let d = fiber::left_divide(bx, &deltas[j][x])?.norm();
            let d_t = fiber::left_divide(bx, &dtx)?.norm();
            acc += pointwise_volume(bx)? * curve[j].mesh().weight(x) * speed * (d_t + speed * d);
        }
        values.push(acc);
    }
    Ok(values.windows(2).map(|w| 0.5 * (w[0] + w[1]) * dt).sum())
}

/// First variation of the discrete energy at a geodesic vanishes for endpoint-fixed perturbations.
pub struct EnergySuite {
    pub perturbations: usize,
    pub samples: usize,
}

impl Suite for EnergySuite {
    fn run(&self, ctx: &SuiteContext<'_>) -> Result<Vec<Check>> {
        let mut rng = InstanceRng::derived(ctx.seed, "energy");
        let n = 2;
        let p = MetricParams::standard(n)?;
        let mesh = rng.mesh(2);
        let b0 = random_riemannian(&mut rng, &mesh, n)?;
        let h = symmetric_tangent(&mut rng, &mesh, n)?;
        let m_h = domain_time(&b0, &h, &p)?.m_h;
        let horizon = if m_h.is_finite() { (0.5 * m_h).min(1.0) } else { 1.0 };
        let dt = horizon / (self.samples - 1) as f64;
        let curve = (0..self.samples)
            .map(|j| geodesic_exp(&b0, &h, &p, j as f64 * dt))
            .collect::<Result<Vec<_>>>()?;
        let energy = discrete_energy(&curve, dt, &p)?;

        let eps = 1e-4;
        let mut worst = Worst::new();
        for _ in 0..self.perturbations {
            let shape: Vec<FiberMatrix> = (0..mesh.point_count()).map(|_| rng.matrix(n, n)).collect();
            let modes = 1 + rng.index(3);
            let deltas: Vec<Vec<FiberMatrix>> = (0..self.samples)
                .map(|j| {
                    let s = (std::f64::consts::PI * modes as f64 * j as f64 / (self.samples - 1) as f64).sin();
                    shape.iter().map(|m| m * s).collect()
                })
                .collect();
            let moved = |sign: f64| -> Result<Vec<BilinearField>> {
                curve
                    .iter()
                    .zip(&deltas)
                    .map(|(c, d)| {
                        let ms = c
                            .matrices()
                            .iter()
                            .zip(d)
                            .map(|(b, dm)| b + dm * (sign * eps))
                            .collect();
                        BilinearField::new(mesh.clone(), ms)
                    })
                    .collect()
            };
            let derivative =
                (discrete_energy(&moved(1.0)?, dt, &p)? - discrete_energy(&moved(-1.0)?, dt, &p)?) / (2.0 * eps);
            worst.add(derivative.abs() / variation_scale(&curve, &deltas, dt)?);
        }
        Ok(vec![
            worst.check("scaled first variation", ctx.tolerances, "energy"),
            Check::exceeds("energy of the Riemannian instance", energy, 0.0, 1),
        ])
    }
}

pub fn default_suites() -> Registry<dyn Suite> {
    let mut r: Registry<dyn Suite> = Registry::default();
    r.register(
        "geodesic-oracle",
        Box::new(GeodesicOracleSuite {
            instances: 100,
            steps: 4096,
        }),
    );
    r.register("blowup", Box::new(BlowupSuite));
    r.register("curvature", Box::new(CurvatureSuite { instances: 50 }));
    r.register("signature", Box::new(SignatureSuite { max_n: 5 }));
    r.register(
        "closure",
        Box::new(ClosureSuite {
            instances: 20,
            times: 20,
        }),
    );
    r.register("exp-log", Box::new(ExpLogSuite { instances: 50 }));
    r.register("volume-identities", Box::new(VolumeIdentitySuite { instances: 100 }));
    r.register("splitting", Box::new(SplittingSuite { seeds: 20 }));
    r.register(
        "energy",
        Box::new(EnergySuite {
            perturbations: 10,
            samples: 200,
        }),
    );
    r
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub curvature_model: String,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

impl VerifyReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteReport> {
        self.suites.iter().find(|s| s.suite == name)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub seed: u64,
    pub tolerances: Tolerances,
    pub curvature_model: String,
    /// Subset of suites by name; all registered suites when empty.
    pub suites: Vec<String>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            seed: DEFAULT_SEED,
            tolerances: Tolerances::default(),
            curvature_model: "closed-form".to_string(),
            suites: Vec::new(),
        }
    }
}

pub fn run_suite(suite: &dyn Suite, name: &str, ctx: &SuiteContext<'_>) -> SuiteReport {
    match suite.run(ctx) {
        Ok(checks) => SuiteReport {
            suite: name.to_string(),
            passed: checks.iter().all(Check::passed),
            error: None,
            checks,
        },
        Err(e) => SuiteReport {
            suite: name.to_string(),
            passed: false,
            error: Some(e.to_string()),
            checks: Vec::new(),
        },
    }
}

pub fn run_verify(config: &VerifyConfig) -> Result<VerifyReport> {
    run_verify_with(config, &default_suites(), &curvature_models())
}

pub fn run_verify_with(
    config: &VerifyConfig,
    suites: &Registry<dyn Suite>,
    models: &Registry<dyn CurvatureModel>,
) -> Result<VerifyReport> {
    let model = models.get(&config.curvature_model)?;
    let selected: Vec<&str> = if config.suites.is_empty() {
        suites.names()
    } else {
        config.suites.iter().map(String::as_str).collect()
    };
    let ctx = SuiteContext {
        seed: config.seed,
        tolerances: &config.tolerances,
        curvature: model,
    };
    let mut reports = Vec::with_capacity(selected.len());
    for name in selected {
        reports.push(run_suite(suites.get(name)?, name, &ctx));
    }
    Ok(VerifyReport {
        seed: config.seed,
        curvature_model: config.curvature_model.clone(),
        passed: reports.iter().all(|r| r.passed),
        suites: reports,
    })
}
