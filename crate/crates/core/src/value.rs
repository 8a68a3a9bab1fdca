//! Runtime values flowing through the autodiff tape: scalars, vectors,
//! and matrices over f64.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape descriptor used for compatibility checks and serialization headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(n) => write!(f, "[{n}]"),
            Shape::Matrix(r, c) => write!(f, "[{r}x{c}]"),
        }
    }
}

/// A tape value. Elementwise arithmetic requires matching shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Scalar(f64),
    Vector(Array1<f64>),
    Matrix(Array2<f64>),
}

impl Value {
    pub fn shape(&self) -> Shape {
        match self {
            Value::Scalar(_) => Shape::Scalar,
            Value::Vector(v) => Shape::Vector(v.len()),
            Value::Matrix(m) => Shape::Matrix(m.nrows(), m.ncols()),
        }
    }

    pub fn zeros(shape: Shape) -> Value {
        match shape {
            Shape::Scalar => Value::Scalar(0.0),
            Shape::Vector(n) => Value::Vector(Array1::zeros(n)),
            Shape::Matrix(r, c) => Value::Matrix(Array2::zeros((r, c))),
        }
    }

    pub fn zeros_like(&self) -> Value {
        Value::zeros(self.shape())
    }

    /// Number of scalar elements.
    pub fn len(&self) -> usize {
        match self.shape() {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_scalar(&self) -> Result<f64> {
        match self {
            Value::Scalar(x) => Ok(*x),
            other => Err(Error::usage(format!("expected scalar, got {}", other.shape()))),
        }
    }

    pub fn as_vector(&self) -> Result<&Array1<f64>> {
        match self {
            Value::Vector(v) => Ok(v),
            other => Err(Error::usage(format!("expected vector, got {}", other.shape()))),
        }
    }

    pub fn as_matrix(&self) -> Result<&Array2<f64>> {
        match self {
            Value::Matrix(m) => Ok(m),
            other => Err(Error::usage(format!("expected matrix, got {}", other.shape()))),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Scalar(x) => x.is_finite(),
            Value::Vector(v) => v.iter().all(|x| x.is_finite()),
            Value::Matrix(m) => m.iter().all(|x| x.is_finite()),
        }
    }

    /// Visit every element in a stable (row-major) order.
    pub fn for_each(&self, mut f: impl FnMut(f64)) {
        match self {
            Value::Scalar(x) => f(*x),
            Value::Vector(v) => v.iter().for_each(|x| f(*x)),
            Value::Matrix(m) => m.iter().for_each(|x| f(*x)),
        }
    }

    /// Apply `f` elementwise, producing a new value of the same shape.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Value {
        match self {
            Value::Scalar(x) => Value::Scalar(f(*x)),
            Value::Vector(v) => Value::Vector(v.mapv(&f)),
            Value::Matrix(m) => Value::Matrix(m.mapv(&f)),
        }
    }

    /// Elementwise combine; shapes must match.
    pub fn zip(&self, other: &Value, f: impl Fn(f64, f64) -> f64) -> Result<Value> {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => Ok(Value::Scalar(f(*a, *b))),
            (Value::Vector(a), Value::Vector(b)) if a.len() == b.len() => {
                Ok(Value::Vector(ndarray::Zip::from(a).and(b).map_collect(|x, y| f(*x, *y))))
            }
            (Value::Matrix(a), Value::Matrix(b)) if a.dim() == b.dim() => {
                Ok(Value::Matrix(ndarray::Zip::from(a).and(b).map_collect(|x, y| f(*x, *y))))
            }
            _ => Err(Error::config(format!(
                "shape mismatch: {} vs {}",
                self.shape(),
                other.shape()
            ))),
        }
    }

    /// self + c * other, elementwise.
    pub fn add_scaled(&self, other: &Value, c: f64) -> Result<Value> {
        self.zip(other, |a, b| a + c * b)
    }

    /// In-place self += other; shapes must match.
    pub fn accumulate(&mut self, other: &Value) -> Result<()> {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => {
                *a += b;
                Ok(())
            }
            (Value::Vector(a), Value::Vector(b)) if a.len() == b.len() => {
                *a += b;
                Ok(())
            }
            (Value::Matrix(a), Value::Matrix(b)) if a.dim() == b.dim() => {
                *a += b;
                Ok(())
            }
            (a, b) => Err(Error::config(format!(
                "shape mismatch: {} vs {}",
                a.shape(),
                b.shape()
            ))),
        }
    }
}

impl From<f64> for Value {
    fn from(x: f64) -> Self {
        Value::Scalar(x)
    }
}

impl From<Array1<f64>> for Value {
    fn from(v: Array1<f64>) -> Self {
        Value::Vector(v)
    }
}

impl From<Array2<f64>> for Value {
    fn from(m: Array2<f64>) -> Self {
        Value::Matrix(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn shape_roundtrip() {
        assert_eq!(Value::Scalar(1.0).shape(), Shape::Scalar);
        assert_eq!(Value::Vector(array![1.0, 2.0]).shape(), Shape::Vector(2));
        assert_eq!(Value::zeros(Shape::Matrix(2, 3)).shape(), Shape::Matrix(2, 3));
    }

    #[test]
    fn zip_rejects_mismatched_shapes() {
        let a = Value::Vector(array![1.0, 2.0]);
        let b = Value::Vector(array![1.0, 2.0, 3.0]);
        assert!(a.zip(&b, |x, y| x + y).is_err());
        assert!(a.zip(&Value::Scalar(1.0), |x, y| x + y).is_err());
    }

    #[test]
    fn add_scaled_matches_manual() {
        let a = Value::Vector(array![1.0, 2.0]);
        let b = Value::Vector(array![10.0, 20.0]);
        let c = a.add_scaled(&b, -0.1).unwrap();
        assert_eq!(c, Value::Vector(array![0.0, 0.0]));
    }

    #[test]
    fn finite_detects_nan_and_inf() {
        assert!(Value::Vector(array![1.0, 2.0]).is_finite());
        assert!(!Value::Scalar(f64::NAN).is_finite());
        assert!(!Value::Vector(array![1.0, f64::INFINITY]).is_finite());
    }
}
