//! Points and directions in `F^d`, stored as coordinate vectors of [`Scalar`]s.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Vector {
    coords: Vec<Scalar>,
}

impl Vector {
    /// Builds a vector after checking every coordinate lives in one field.
    pub fn new(coords: Vec<Scalar>) -> Result<Self> {
        let mut it = coords.iter();
        if let Some(first) = it.next() {
            let f = first.field();
            for c in it {
                if c.field() != f {
                    return Err(Error::MixedFields(f.to_string(), c.field().to_string()));
                }
            }
        }
        Ok(Vector { coords })
    }

    pub fn from_i64(field: FieldSpec, coords: &[i64]) -> Self {
        Vector { coords: coords.iter().map(|&v| field.from_i64(v)).collect() }
    }

    pub fn zero(field: FieldSpec, dim: usize) -> Self {
        Vector { coords: vec![field.zero(); dim] }
    }

    /// Standard basis vector `e_i`.
    pub fn unit(field: FieldSpec, dim: usize, i: usize) -> Self {
        let mut v = Self::zero(field, dim);
        v.coords[i] = field.one();
        v
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn field(&self) -> Option<FieldSpec> {
        self.coords.first().map(Scalar::field)
    }

    pub fn coords(&self) -> &[Scalar] {
        &self.coords
    }

    pub fn get(&self, i: usize) -> &Scalar {
        &self.coords[i]
    }

    pub fn set(&mut self, i: usize, v: Scalar) {
        self.coords[i] = v;
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(Scalar::is_zero)
    }

    /// Index of the first nonzero coordinate, if any.
    pub fn pivot(&self) -> Option<usize> {
        self.coords.iter().position(|c| !c.is_zero())
    }

    pub fn add(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn sub(&self, other: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), other.dim());
        Vector {
            coords: self.coords.iter().zip(&other.coords).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn scale(&self, t: &Scalar) -> Vector {
        Vector { coords: self.coords.iter().map(|c| c * t).collect() }
    }

    /// `self + t * dir`, the workhorse of line parametrization.
    pub fn add_scaled(&self, t: &Scalar, dir: &Vector) -> Vector {
        debug_assert_eq!(self.dim(), dir.dim());
        Vector {
            coords: self
                .coords
                .iter()
                .zip(&dir.coords)
                .map(|(a, b)| a + &(b * t))
                .collect(),
        }
    }
}

impl fmt::Display for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coords.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_fields_rejected() {
        let f5 = FieldSpec::prime(5).unwrap();
        let a = f5.from_i64(1);
        let b = FieldSpec::Rational.from_i64(1);
        assert!(matches!(Vector::new(vec![a, b]), Err(Error::MixedFields(..))));
    }

    #[test]
    fn affine_ops() {
        let f = FieldSpec::prime(5).unwrap();
        let p = Vector::from_i64(f, &[2, 3, 1]);
        let d = Vector::from_i64(f, &[0, 2, 4]);
        let q = p.add_scaled(&f.from_i64(3), &d);
        assert_eq!(q, Vector::from_i64(f, &[2, 4, 3]));
        assert_eq!(q.sub(&p), d.scale(&f.from_i64(3)));
        assert_eq!(p.pivot(), Some(0));
        assert_eq!(Vector::zero(f, 3).pivot(), None);
        assert_eq!(Vector::unit(f, 3, 2).pivot(), Some(2));
    }
}
