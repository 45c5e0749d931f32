//! The discretized base manifold and fields of bilinear structures or
//! tangent vectors over it.
//!
//! Every formula in this crate is zeroth-order along the base, so a finite
//! weighted point cloud reproduces integrals over `M` exactly: the integral
//! of a density becomes `Σ_x f(x) · w_x`, where the weight `w_x` absorbs the
//! coordinate volume `|dx¹∧…∧dxⁿ|`. On a finite mesh every field has compact
//! support.

use std::fmt;
use std::marker::PhantomData;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::fiber::{self, FiberMatrix};
use crate::format::{matrix_rows, Num17};

/// Quadrature weights (and optional labels) standing in for the base manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    weights: Vec<f64>,
    labels: Vec<Option<String>>,
}

impl Mesh {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        let labels = vec![None; weights.len()];
        Self::with_labels(weights, labels)
    }

    pub fn with_labels(weights: Vec<f64>, labels: Vec<Option<String>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(GeometryError::Validation("mesh has no points".into()));
        }
        if labels.len() != weights.len() {
            return Err(GeometryError::Shape("labels and weights differ in length".into()));
        }
        if let Some((i, w)) = weights.iter().enumerate().find(|(_, w)| !(w.is_finite() && **w > 0.0)) {
            return Err(GeometryError::Validation(format!(
                "weight {w} at point {i} is not positive"
            )));
        }
        Ok(Mesh { weights, labels })
    }

    /// `count` points of unit weight.
    pub fn uniform(count: usize) -> Result<Self> {
        Self::new(vec![1.0; count])
    }

    pub fn point_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn label(&self, i: usize) -> Option<&str> {
        self.labels[i].as_deref()
    }
}

pub fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub trait FieldKind: fmt::Debug + Clone + Copy + 'static {
    const NAME: &'static str;
    /// Whether every point must carry an invertible matrix.
    const INVERTIBLE: bool;
}

#[derive(Debug, Clone, Copy)]
pub struct Bilinear;
#[derive(Debug, Clone, Copy)]
pub struct Tangent;

impl FieldKind for Bilinear {
    const NAME: &'static str = "bilinear";
    const INVERTIBLE: bool = true;
}

impl FieldKind for Tangent {
    const NAME: &'static str = "tangent";
    const INVERTIBLE: bool = false;
}

/// One n×n matrix per mesh point.
#[derive(Debug, Clone)]
pub struct Field<K: FieldKind> {
    mesh: Arc<Mesh>,
    n: usize,
    matrices: Vec<FiberMatrix>,
    _kind: PhantomData<K>,
}

/// A section `b` of non-degenerate bilinear structures.
pub type BilinearField = Field<Bilinear>;
/// A tangent vector `h` to the space of bilinear structures.
pub type TangentField = Field<Tangent>;

impl<K: FieldKind> Field<K> {
    pub fn new(mesh: Arc<Mesh>, matrices: Vec<FiberMatrix>) -> Result<Self> {
        if matrices.len() != mesh.point_count() {
            return Err(GeometryError::Shape(format!(
                "{} matrices for a mesh of {} points",
                matrices.len(),
                mesh.point_count()
            )));
        }
        let n = fiber::check_square(&matrices[0])?;
        for (i, m) in matrices.iter().enumerate() {
            if fiber::check_square(m)? != n {
                return Err(GeometryError::Shape(format!(
                    "point {i} has dimension {} but the field has n = {n}",
                    m.nrows()
                )));
            }
            if K::INVERTIBLE && !fiber::is_invertible(m) {
                return Err(GeometryError::Validation(format!(
                    "singular {} matrix at point {i}",
                    K::NAME
                )));
            }
        }
        Ok(Field {
            mesh,
            n,
            matrices,
            _kind: PhantomData,
        })
    }

    /// The same matrix at every point of `mesh`.
    pub fn constant(mesh: Arc<Mesh>, m: FiberMatrix) -> Result<Self> {
        let count = mesh.point_count();
        Self::new(mesh, vec![m; count])
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn matrices(&self) -> &[FiberMatrix] {
        &self.matrices
    }

    pub fn at(&self, i: usize) -> &FiberMatrix {
        &self.matrices[i]
    }

    pub fn into_matrices(self) -> Vec<FiberMatrix> {
        self.matrices
    }

    /// Checks that `other` lives on the same mesh with the same fiber dimension.
    pub fn check_compatible<L: FieldKind>(&self, other: &Field<L>) -> Result<()> {
        if !same_mesh(&self.mesh, &other.mesh) {
            return Err(GeometryError::MeshMismatch);
        }
        if self.n != other.n {
            return Err(GeometryError::Shape(format!(
                "fiber dimensions differ: {} vs {}",
                self.n, other.n
            )));
        }
        Ok(())
    }

    /// Reinterprets the matrices as a field of another kind, revalidating.
    pub fn recast<L: FieldKind>(&self) -> Result<Field<L>> {
        Field::new(self.mesh.clone(), self.matrices.clone())
    }
}

impl TangentField {
    pub fn zeros(mesh: Arc<Mesh>, n: usize) -> Self {
        let count = mesh.point_count();
        Field {
            mesh,
            n,
            matrices: vec![FiberMatrix::zeros(n, n); count],
            _kind: PhantomData,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Field {
            mesh: self.mesh.clone(),
            n: self.n,
            matrices: self.matrices.iter().map(|m| m * s).collect(),
            _kind: PhantomData,
        }
    }
}

/// Per-point `√|det b_x| · w_x`.
pub fn vol_density(b: &BilinearField) -> Result<Vec<f64>> {
    b.matrices()
        .iter()
        .zip(b.mesh().weights())
        .map(|(m, w)| Ok(pointwise_volume(m)? * w))
        .collect()
}

/// `√|det b|` at one point, before the quadrature weight.
pub fn pointwise_volume(b: &FiberMatrix) -> Result<f64> {
    let lu = fiber::invertible_lu(b)?;
    Ok(lu.determinant().abs().sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Bilinear,
    Tangent,
}

#[derive(Debug, Deserialize)]
struct PointRecord {
    #[serde(default)]
    label: Option<String>,
    weight: f64,
    matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct FieldFile {
    n: usize,
    points: Vec<PointRecord>,
    kind: FileKind,
}

#[derive(Serialize)]
struct PointRecordOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'a str>,
    weight: Num17,
    matrix: Vec<Vec<Num17>>,
}

#[derive(Serialize)]
struct FieldFileOut<'a> {
    n: usize,
    points: Vec<PointRecordOut<'a>>,
    kind: FileKind,
}

/// A field read from disk, tagged by its declared kind.
#[derive(Debug, Clone)]
pub enum LoadedField {
    Bilinear(BilinearField),
    Tangent(TangentField),
}

impl LoadedField {
    pub fn mesh(&self) -> &Arc<Mesh> {
        match self {
            LoadedField::Bilinear(f) => f.mesh(),
            LoadedField::Tangent(f) => f.mesh(),
        }
    }

    pub fn matrices(&self) -> &[FiberMatrix] {
        match self {
            LoadedField::Bilinear(f) => f.matrices(),
            LoadedField::Tangent(f) => f.matrices(),
        }
    }

    /// Any field can serve as a tangent vector.
    pub fn into_tangent(self) -> Result<TangentField> {
        match self {
            LoadedField::Bilinear(f) => f.recast(),
            LoadedField::Tangent(f) => Ok(f),
        }
    }

    pub fn into_bilinear(self) -> Result<BilinearField> {
        match self {
            LoadedField::Bilinear(f) => Ok(f),
            LoadedField::Tangent(f) => f.recast(),
        }
    }
}

/// Parses the JSON field schema
/// `{ "n", "points": [{ "label"?, "weight", "matrix" }], "kind" }`.
pub fn parse_field(text: &str) -> Result<LoadedField> {
    let file: FieldFile = serde_json::from_str(text).map_err(|e| GeometryError::Parse(e.to_string()))?;
    if file.n == 0 {
        return Err(GeometryError::Shape("n must be positive".into()));
    }
    let mut weights = Vec::with_capacity(file.points.len());
    let mut labels = Vec::with_capacity(file.points.len());
    let mut matrices = Vec::with_capacity(file.points.len());
    for (i, p) in file.points.into_iter().enumerate() {
        if p.matrix.len() != file.n || p.matrix.iter().any(|row| row.len() != file.n) {
            return Err(GeometryError::Shape(format!(
                "point {i}: matrix is not {n}×{n}",
                n = file.n
            )));
        }
        let flat: Vec<f64> = p.matrix.into_iter().flatten().collect();
        matrices.push(FiberMatrix::from_row_slice(file.n, file.n, &flat));
        weights.push(p.weight);
        labels.push(p.label);
    }
    let mesh = Arc::new(Mesh::with_labels(weights, labels)?);
    Ok(match file.kind {
        FileKind::Bilinear => LoadedField::Bilinear(Field::new(mesh, matrices)?),
        FileKind::Tangent => LoadedField::Tangent(Field::new(mesh, matrices)?),
    })
}

pub fn load_field(path: impl AsRef<Path>) -> Result<LoadedField> {
    let text = std::fs::read_to_string(path)?;
    parse_field(&text)
}

pub fn field_to_json<K: FieldKind>(field: &Field<K>) -> String {
    let kind = if K::INVERTIBLE {
        FileKind::Bilinear
    } else {
        FileKind::Tangent
    };
    let out = FieldFileOut {
        n: field.n(),
        points: field
            .matrices()
            .iter()
            .enumerate()
            .map(|(i, m)| PointRecordOut {
                label: field.mesh().label(i),
                weight: Num17(field.mesh().weight(i)),
                matrix: matrix_rows(m),
            })
            .collect(),
        kind,
    };
    let mut s = serde_json::to_string_pretty(&out).expect("field serialization");
    s.push('\n');
    s
}

pub fn save_field<K: FieldKind>(field: &Field<K>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, field_to_json(field))?;
    Ok(())
}
