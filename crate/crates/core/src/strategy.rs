//! Interchangeable algorithm variants behind common traits, looked up by name.

use crate::curvature::{curvature_fd_point, curvature_point_with, CurvatureCoefficients, DEFAULT_EPS};
use crate::error::{GeometryError, Result};
use crate::fiber::FiberMatrix;
use crate::fields::{BilinearField, TangentField};
use crate::geodesics::{geodesic_exp, geodesic_point, integrate_geodesic_numeric, integrate_point_rk4};
use crate::metric::MetricParams;

/// Name-keyed table of boxed strategies, kept in registration order.
pub struct Registry<T: ?Sized> {
    entries: Vec<(String, Box<T>)>,
}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Registry { entries: Vec::new() }
    }
}

impl<T: ?Sized> Registry<T> {
    /// Adds or replaces the entry under `name`.
    pub fn register(&mut self, name: impl Into<String>, item: Box<T>) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = item,
            None => self.entries.push((name, item)),
        }
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, item)| item.as_ref())
            .ok_or_else(|| GeometryError::UnknownStrategy(name.to_string()))
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &T)> {
        self.entries.iter().map(|(n, item)| (n.as_str(), item.as_ref()))
    }
}

pub trait GeodesicSolver: Send + Sync {
    fn solve(&self, b0: &BilinearField, h: &TangentField, p: &MetricParams, t: f64) -> Result<BilinearField>;

    /// The geodesic at a single point, without validating the result as a
    /// structure. Callers must already know `t < m_h`.
    fn solve_point(&self, b0: &FiberMatrix, h: &FiberMatrix, p: &MetricParams, t: f64) -> Result<FiberMatrix>;
}

pub struct ClosedFormGeodesic;

impl GeodesicSolver for ClosedFormGeodesic {
    fn solve(&self, b0: &BilinearField, h: &TangentField, p: &MetricParams, t: f64) -> Result<BilinearField> {
        geodesic_exp(b0, h, p, t)
    }

    fn solve_point(&self, b0: &FiberMatrix, h: &FiberMatrix, p: &MetricParams, t: f64) -> Result<FiberMatrix> {
        geodesic_point(b0, h, p, t)
    }
}

pub struct Rk4Geodesic {
    pub steps: usize,
}

impl GeodesicSolver for Rk4Geodesic {
    fn solve(&self, b0: &BilinearField, h: &TangentField, p: &MetricParams, t: f64) -> Result<BilinearField> {
        integrate_geodesic_numeric(b0, h, p, t, self.steps)
    }

    fn solve_point(&self, b0: &FiberMatrix, h: &FiberMatrix, p: &MetricParams, t: f64) -> Result<FiberMatrix> {
        integrate_point_rk4(b0, h, p, t, self.steps)
    }
}

pub fn geodesic_solvers() -> Registry<dyn GeodesicSolver> {
    let mut r: Registry<dyn GeodesicSolver> = Registry::default();
    r.register("closed-form", Box::new(ClosedFormGeodesic));
    r.register("rk4", Box::new(Rk4Geodesic { steps: 4096 }));
    r
}

pub trait CurvatureModel: Send + Sync {
    fn evaluate(
        &self,
        b: &FiberMatrix,
        h: &FiberMatrix,
        k: &FiberMatrix,
        l: &FiberMatrix,
        p: &MetricParams,
    ) -> Result<FiberMatrix>;

    /// Term-group coefficients, when the model is a closed form.
    fn coefficients(&self, _p: &MetricParams) -> Option<CurvatureCoefficients> {
        None
    }
}

pub struct ClosedFormCurvature;

impl CurvatureModel for ClosedFormCurvature {
    fn evaluate(
        &self,
        b: &FiberMatrix,
        h: &FiberMatrix,
        k: &FiberMatrix,
        l: &FiberMatrix,
        p: &MetricParams,
    ) -> Result<FiberMatrix> {
        curvature_point_with(b, h, k, l, &CurvatureCoefficients::for_metric(p))
    }

    fn coefficients(&self, p: &MetricParams) -> Option<CurvatureCoefficients> {
        Some(CurvatureCoefficients::for_metric(p))
    }
}

/// Closed form with the trace-trace and identity coefficients scaled by
/// `factor`. Used as a negative control for the verification suites.
pub struct CorruptedCurvature {
    pub factor: f64,
}

impl CurvatureModel for CorruptedCurvature {
    fn evaluate(
        &self,
        b: &FiberMatrix,
        h: &FiberMatrix,
        k: &FiberMatrix,
        l: &FiberMatrix,
        p: &MetricParams,
    ) -> Result<FiberMatrix> {
        curvature_point_with(b, h, k, l, &self.coefficients(p).expect("closed form"))
    }

    fn coefficients(&self, p: &MetricParams) -> Option<CurvatureCoefficients> {
        let mut c = CurvatureCoefficients::for_metric(p);
        c.trace_trace *= self.factor;
        c.identity *= self.factor;
        Some(c)
    }
}

pub struct FiniteDifferenceCurvature {
    pub eps: f64,
}

impl CurvatureModel for FiniteDifferenceCurvature {
    fn evaluate(
        &self,
        b: &FiberMatrix,
        h: &FiberMatrix,
        k: &FiberMatrix,
        l: &FiberMatrix,
        p: &MetricParams,
    ) -> Result<FiberMatrix> {
        curvature_fd_point(b, h, k, l, p, self.eps)
    }
}

pub fn curvature_models() -> Registry<dyn CurvatureModel> {
    let mut r: Registry<dyn CurvatureModel> = Registry::default();
    r.register("closed-form", Box::new(ClosedFormCurvature));
    r.register(
        "finite-difference",
        Box::new(FiniteDifferenceCurvature { eps: DEFAULT_EPS }),
    );
    r.register("corrupted", Box::new(CorruptedCurvature { factor: 1.5 }));
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Mesh;
    use nalgebra::dmatrix;
    use std::sync::Arc;

    #[test]
    fn lookup_by_name() {
        let solvers = geodesic_solvers();
        assert_eq!(solvers.names(), vec!["closed-form", "rk4"]);
        assert!(matches!(solvers.get("euler"), Err(GeometryError::UnknownStrategy(_))));

        let mesh = Arc::new(Mesh::uniform(1).unwrap());
        let b0 = BilinearField::constant(mesh.clone(), FiberMatrix::identity(2, 2)).unwrap();
        let h = TangentField::constant(mesh, dmatrix![0.2, 0.1; -0.3, 0.4]).unwrap();
        let p = MetricParams::new(1.0, 2).unwrap();
        let a = solvers.get("closed-form").unwrap().solve(&b0, &h, &p, 1.0).unwrap();
        let b = solvers.get("rk4").unwrap().solve(&b0, &h, &p, 1.0).unwrap();
        assert!((a.at(0) - b.at(0)).norm() < 1e-10);
    }

    #[test]
    fn register_replaces() {
        let mut models = curvature_models();
        models.register("closed-form", Box::new(CorruptedCurvature { factor: 2.0 }));
        assert_eq!(models.names().len(), 3);
        let p = MetricParams::new(1.0, 2).unwrap();
        let c = models.get("closed-form").unwrap().coefficients(&p).unwrap();
        assert_eq!(c.identity, 2.0 / 32.0);
    }
}
