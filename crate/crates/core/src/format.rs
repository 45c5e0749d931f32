//! Fixed-precision number formatting shared by every on-disk artifact.

use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

/// 17 significant digits in scientific notation; `inf`/`-inf`/`nan` for
/// non-finite values.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".to_string()
        } else {
            "-inf".to_string()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// An `f64` that serializes into JSON with 17 significant digits
/// (`null` when not finite).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num17(pub f64);

impl Serialize for Num17 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let raw = RawValue::from_string(fmt17(self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub fn nums(xs: &[f64]) -> Vec<Num17> {
    xs.iter().copied().map(Num17).collect()
}

pub fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<Num17>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| Num17(m[(i, j)])).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(2.0), "2.0000000000000000e0");
        assert_eq!(fmt17(f64::INFINITY), "inf");
        let x = 0.1f64 + 0.2;
        assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn json_numbers_round_trip() {
        let v = vec![Num17(1.0 / 3.0), Num17(-2.5e-300), Num17(f64::INFINITY)];
        let s = serde_json::to_string(&v).unwrap();
        let back: Vec<Option<f64>> = serde_json::from_str(&s).unwrap();
        assert_eq!(back, vec![Some(1.0 / 3.0), Some(-2.5e-300), None]);
    }
}
