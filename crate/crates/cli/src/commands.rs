use std::path::Path;

use serde::Serialize;

use bilinear_core::curvature::{curvature_fd_point, relative_deviation};
use bilinear_core::fiber::{self, FiberMatrix};
use bilinear_core::fields::{load_field, BilinearField, TangentField};
use bilinear_core::format::{fmt17, nums, Num17};
use bilinear_core::geodesics::{domain_time, DirectionInvariants};
use bilinear_core::metric::{gamma_endomorphisms, signature_rows, MetricParams};
use bilinear_core::random::InstanceRng;
use bilinear_core::splitting::{parse_distribution, phi_split};
use bilinear_core::strategy::{curvature_models, geodesic_solvers, CurvatureModel};
use bilinear_core::submanifolds::{closure_sample_times, geodesic_closure_report, SubmanifoldKind};
use bilinear_core::verify::{run_verify, Tolerances, VerifyConfig};
use bilinear_core::{GeometryError, Result};

use crate::output::{csv_line, csv_num, emit, pretty_json};
use crate::{
    ClosureArgs, CurvatureArgs, GeodesicArgs, SignatureArgs, SplitArgs, VerifyArgs, EXIT_DOMAIN, EXIT_FAILED, EXIT_OK,
    EXIT_USAGE,
};

pub fn exit_code(e: &GeometryError) -> u8 {
    match e {
        GeometryError::Domain(_)
        | GeometryError::OutOfDomain { .. }
        | GeometryError::BlowupDetected { .. }
        | GeometryError::NotInImage(_)
        | GeometryError::EigenvalueOnCut { .. }
        | GeometryError::NotInD2(_) => EXIT_DOMAIN,
        _ => EXIT_USAGE,
    }
}

fn load_pair(input: &Path, direction: &Path) -> Result<(BilinearField, TangentField)> {
    let b0 = load_field(input)?.into_bilinear()?;
    let h = load_field(direction)?.into_tangent()?;
    b0.check_compatible(&h)?;
    Ok((b0, h))
}

fn corrupted_or(method: &str, corrupt: bool) -> &str {
    if corrupt {
        "corrupted"
    } else {
        method
    }
}

/// α = 0 is a bad argument rather than a geometric condition.
fn metric(alpha: f64, n: usize) -> Result<MetricParams> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(GeometryError::Validation(format!(
            "--alpha must be finite and non-zero, got {alpha}"
        )));
    }
    MetricParams::new(alpha, n)
}

fn sample_times(t_max: f64, samples: usize) -> Vec<f64> {
    if samples == 1 {
        return vec![t_max];
    }
    let last = (samples - 1) as f64;
    (0..samples).map(|j| t_max * j as f64 / last).collect()
}

pub fn geodesic(a: GeodesicArgs) -> Result<u8> {
    if a.samples == 0 || !a.t_max.is_finite() || a.t_max < 0.0 {
        return Err(GeometryError::Validation(
            "need samples ≥ 1 and a finite t_max ≥ 0".into(),
        ));
    }
    let solvers = geodesic_solvers();
    let solver = solvers.get(&a.method)?;
    let (b0, h) = load_pair(&a.input, &a.direction)?;
    let n = b0.n();
    let p = metric(a.metric.alpha, n)?;
    let m_h = domain_time(&b0, &h, &p)?.m_h;
    println!("m_h={}", fmt17(m_h));

    let mut t_max = a.t_max;
    if t_max >= m_h {
        if !a.clip {
            return Err(GeometryError::OutOfDomain { t: t_max, limit: m_h });
        }
        t_max = 0.99 * m_h;
    }

    let invariants = b0
        .matrices()
        .iter()
        .zip(h.matrices())
        .map(|(bx, hx)| Ok(DirectionInvariants::new(&fiber::left_divide(bx, hx)?, &p)))
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::new();
    let mut header = vec!["t".to_string()];
    for x in 0..b0.len() {
        for i in 0..n {
            for j in 0..n {
                header.push(format!("b{x}_{i}_{j}"));
            }
        }
        header.push(format!("det{x}"));
        header.push(format!("trace{x}"));
        header.push(format!("p{x}"));
    }
    csv_line(&mut csv, header);

    for t in sample_times(t_max, a.samples) {
        let mut row = vec![csv_num(t)];
        for ((bx, hx), inv) in b0.matrices().iter().zip(h.matrices()).zip(&invariants) {
            let bt = solver.solve_point(bx, hx, &p, t)?;
            for i in 0..n {
                for j in 0..n {
                    row.push(csv_num(bt[(i, j)]));
                }
            }
            let pt = inv.p(t);
            row.push(csv_num(bt.determinant()));
            // tr(b⁻¹b_t) = (d/dt) ln |det b| = 2p'/p.
            row.push(csv_num(2.0 * inv.p_prime(t) / pt));
            row.push(csv_num(pt));
        }
        csv_line(&mut csv, row);
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(EXIT_OK)
}

pub fn verify(a: VerifyArgs, tolerances: Tolerances) -> Result<u8> {
    let config = VerifyConfig {
        seed: a.seed,
        tolerances,
        curvature_model: corrupted_or(&a.method, a.corrupt_curvature).to_string(),
        suites: a.suites,
    };
    let report = run_verify(&config)?;
    emit(a.out.as_deref(), &report.to_json())?;
    if a.out.is_some() {
        for s in &report.suites {
            println!("{} {}", if s.passed { "PASS" } else { "FAIL" }, s.suite);
        }
    }
    Ok(if report.passed { EXIT_OK } else { EXIT_FAILED })
}

pub fn signature_table(a: SignatureArgs) -> Result<u8> {
    if a.max_n == 0 || a.max_n > 6 {
        return Err(GeometryError::Validation("--max-n must lie in 1..=6".into()));
    }
    let mut csv = String::new();
    csv_line(
        &mut csv,
        [
            "space",
            "n",
            "q_or_m",
            "sign_alpha",
            "alpha",
            "predicted",
            "counted",
            "match",
        ]
        .map(String::from),
    );
    let mut all_match = true;
    for n in 1..=a.max_n {
        let alphas = match a.alpha {
            Some(alpha) if alpha != 0.0 && alpha.is_finite() => vec![alpha.abs(), -alpha.abs()],
            Some(alpha) => {
                return Err(GeometryError::Validation(format!(
                    "--alpha must be finite and non-zero, got {alpha}"
                )));
            }
            None => {
                let inv = 1.0 / n as f64;
                if n == 1 {
                    vec![1.0, -1.0]
                } else {
                    vec![1.0, -1.0, inv, -inv]
                }
            }
        };
        for alpha in alphas {
            for row in signature_rows(n, alpha)? {
                all_match &= row.matches();
                csv_line(
                    &mut csv,
                    [
                        row.space.to_string(),
                        row.n.to_string(),
                        row.q_or_m.map(|q| q.to_string()).unwrap_or_default(),
                        if row.alpha > 0.0 { "+" } else { "-" }.to_string(),
                        csv_num(row.alpha),
                        row.predicted.to_string(),
                        row.counted.to_string(),
                        row.matches().to_string(),
                    ],
                );
            }
        }
    }
    emit(a.out.as_deref(), &csv)?;
    Ok(if all_match { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct CurvatureOut {
    alpha: Num17,
    eps: Num17,
    method: String,
    instances: usize,
    max_rel_dev: Num17,
    bianchi_residual: Num17,
    antisymmetry_residual: Num17,
    compatibility_residual: Num17,
    passed: bool,
}

struct CurvatureWorst {
    rel_dev: f64,
    bianchi: f64,
    antisymmetry: f64,
    compatibility: f64,
}

fn curvature_at(
    model: &dyn CurvatureModel,
    b: &FiberMatrix,
    hkl: [&FiberMatrix; 3],
    p: &MetricParams,
    eps: f64,
    worst: &mut CurvatureWorst,
) -> Result<()> {
    let [h, k, l] = hkl;
    let r_hk = model.evaluate(b, h, k, l, p)?;
    let r_kh = model.evaluate(b, k, h, l, p)?;
    let r_kl = model.evaluate(b, k, l, h, p)?;
    let r_lh = model.evaluate(b, l, h, k, p)?;
    let oracle = curvature_fd_point(b, h, k, l, p, eps)?;
    let scale = r_hk.norm().max(r_kl.norm()).max(r_lh.norm()).max(f64::MIN_POSITIVE);
    worst.rel_dev = worst.rel_dev.max(relative_deviation(&r_hk, &oracle));
    worst.antisymmetry = worst.antisymmetry.max((&r_hk + &r_kh).norm() / scale);
    worst.bianchi = worst.bianchi.max((&r_hk + &r_kl + &r_lh).norm() / scale);
    let rr = fiber::left_divide(b, &r_hk)?;
    let ll = fiber::left_divide(b, l)?;
    let cubic = fiber::left_divide(b, h)?.norm() * fiber::left_divide(b, k)?.norm() * ll.norm();
    let pair = (cubic * ll.norm()).max(f64::MIN_POSITIVE);
    worst.compatibility = worst
        .compatibility
        .max(gamma_endomorphisms(&rr, &ll, p.alpha()).abs() / pair);
    Ok(())
}

pub fn curvature_check(a: CurvatureArgs, tol: &Tolerances) -> Result<u8> {
    if a.samples == 0 || !a.eps.is_finite() || a.eps <= 0.0 {
        return Err(GeometryError::Validation("need samples ≥ 1 and eps > 0".into()));
    }
    let models = curvature_models();
    let method = corrupted_or(&a.method, a.corrupt_curvature);
    let model = models.get(method)?;
    let b = load_field(&a.input)?.into_bilinear()?;
    let n = b.n();
    let p = metric(a.metric.alpha, n)?;
    let mut rng = InstanceRng::derived(a.seed, "curvature-check");
    let mut worst = CurvatureWorst {
        rel_dev: 0.0,
        bianchi: 0.0,
        antisymmetry: 0.0,
        compatibility: 0.0,
    };
    for bx in b.matrices() {
        for _ in 0..a.samples {
            let (h, k, l) = (rng.matrix(n, n), rng.matrix(n, n), rng.matrix(n, n));
            curvature_at(model, bx, [&h, &k, &l], &p, a.eps, &mut worst)?;
        }
    }
    let passed = worst.rel_dev <= tol.get("curvature")
        && worst.bianchi <= tol.get("bianchi")
        && worst.antisymmetry <= tol.get("antisymmetry")
        && worst.compatibility <= tol.get("compatibility");
    let out = CurvatureOut {
        alpha: Num17(p.alpha()),
        eps: Num17(a.eps),
        method: method.to_string(),
        instances: b.len() * a.samples,
        max_rel_dev: Num17(worst.rel_dev),
        bianchi_residual: Num17(worst.bianchi),
        antisymmetry_residual: Num17(worst.antisymmetry),
        compatibility_residual: Num17(worst.compatibility),
        passed,
    };
    emit(a.out.as_deref(), &pretty_json(&out))?;
    Ok(if passed { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct ClosureOut {
    kind: SubmanifoldKind,
    alpha: Num17,
    m_h: Num17,
    times: Vec<Num17>,
    max_symmetry_defect: Num17,
    signature_trace: Vec<usize>,
    point_signatures: Vec<Vec<usize>>,
    verdict: bool,
}

pub fn closure(a: ClosureArgs, tol: &Tolerances) -> Result<u8> {
    let kind = SubmanifoldKind::parse(&a.kind)
        .ok_or_else(|| GeometryError::Validation(format!("--kind must be symmetric or skew, got '{}'", a.kind)))?;
    if a.samples == 0 || !a.t_max.is_finite() || a.t_max <= 0.0 {
        return Err(GeometryError::Validation(
            "need samples ≥ 1 and a finite t_max > 0".into(),
        ));
    }
    let (b0, h) = load_pair(&a.input, &a.direction)?;
    let p = metric(a.metric.alpha, b0.n())?;
    let m_h = domain_time(&b0, &h, &p)?.m_h;
    let times = closure_sample_times(m_h, a.samples, a.t_max);
    let report = geodesic_closure_report(&b0, &h, &p, kind, &times)?;
    let constant = report.signature_trace.windows(2).all(|w| w[0] == w[1])
        && report.point_signatures.windows(2).all(|w| w[0] == w[1]);
    let verdict = report.max_symmetry_defect <= tol.get("closure") && constant;
    let out = ClosureOut {
        kind,
        alpha: Num17(p.alpha()),
        m_h: Num17(m_h),
        times: nums(&report.times),
        max_symmetry_defect: Num17(report.max_symmetry_defect),
        signature_trace: report.signature_trace,
        point_signatures: report.point_signatures,
        verdict,
    };
    emit(a.out.as_deref(), &pretty_json(&out))?;
    Ok(if verdict { EXIT_OK } else { EXIT_FAILED })
}

pub fn split(a: SplitArgs) -> Result<u8> {
    let g = load_field(&a.input)?.into_bilinear()?;
    let text = std::fs::read_to_string(&a.distribution)
        .map_err(|e| GeometryError::Io(format!("{}: {e}", a.distribution.display())))?;
    let v = parse_distribution(&text, g.n(), g.len())?;
    let triple = phi_split(&g, &v)?;
    emit(a.out.as_deref(), &triple.to_json(&v))?;
    Ok(EXIT_OK)
}
