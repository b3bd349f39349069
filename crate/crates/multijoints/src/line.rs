//! Affine lines in canonical form.
//!
//! A line `{ base + t * dir }` has many parametrizations. The canonical
//! representative fixes both vectors:
//!
//! * the direction is scaled so its first nonzero coordinate is 1 (over `Q`
//!   this is the same vector one gets by clearing denominators to a primitive
//!   integer direction with positive leading entry, then normalizing);
//! * the base point is slid along the line so its coordinate at the
//!   direction's pivot index is 0.
//!
//! Both conditions pin a unique pair, so structural equality of canonical
//! lines is equality of point sets.

use std::fmt;

use crate::error::{Error, Result};
use crate::field::{FieldSpec, Scalar};
use crate::vector::Vector;

#[derive(Clone, PartialEq, Eq, Hash, Debug, PartialOrd, Ord)]
pub struct Line {
    base: Vector,
    dir: Vector,
}

/// Canonicalizes the line through `point` with direction `direction`.
///
/// Errors: zero direction, mixed fields, dimension mismatch, dimension < 2.
pub fn canonical_line(point: &Vector, direction: &Vector) -> Result<Line> {
    if point.dim() != direction.dim() {
        return Err(Error::DimensionMismatch { expected: point.dim(), got: direction.dim() });
    }
    if point.dim() < 2 {
        return Err(Error::DimensionTooSmall(point.dim()));
    }
    match (point.field(), direction.field()) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::MixedFields(a.to_string(), b.to_string()))
        }
        _ => {}
    }
    let pivot = direction.pivot().ok_or(Error::ZeroDirection)?;
    let lead_inv = direction.get(pivot).inv()?;
    let dir = direction.scale(&lead_inv);
    // dir[pivot] = 1, so t = -point[pivot] lands the base at pivot coordinate 0.
    let t = -point.get(pivot);
    let base = point.add_scaled(&t, &dir);
    debug_assert!(base.get(pivot).is_zero());
    Ok(Line { base, dir })
}

impl Line {
    pub fn base(&self) -> &Vector {
        &self.base
    }

    pub fn direction(&self) -> &Vector {
        &self.dir
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn field(&self) -> FieldSpec {
        self.dir.field().expect("lines have positive dimension")
    }

    /// Exact membership test: solves for the parameter at the pivot
    /// coordinate and verifies the remaining coordinates.
    pub fn contains(&self, point: &Vector) -> bool {
        if point.dim() != self.dim() {
            return false;
        }
        let pivot = self.dir.pivot().expect("canonical direction is nonzero");
        // dir[pivot] = 1 forces t = point[pivot] - base[pivot].
        let t = point.get(pivot) - self.base.get(pivot);
        &self.base.add_scaled(&t, &self.dir) == point
    }

    /// Point at parameter `t`.
    pub fn at(&self, t: &Scalar) -> Vector {
        self.base.add_scaled(t, &self.dir)
    }

    /// All `p` points of the line over `F_p`.
    pub fn points(&self) -> Vec<Vector> {
        self.field().elements().iter().map(|t| self.at(t)).collect()
    }

    /// The line through the origin with this line's direction.
    pub fn through_origin(&self) -> Line {
        let field = self.field();
        canonical_line(&Vector::zero(field, self.dim()), &self.dir)
            .expect("canonical direction stays valid")
    }

    /// Intersection point of two lines with distinct directions, if any.
    ///
    /// Returns `None` for parallel or equal directions (no unique point) and
    /// for skew lines. Solved exactly: pick an invertible 2x2 minor of
    /// `[dir, -other.dir]`, solve for the parameters, verify all coordinates.
    pub fn intersect(&self, other: &Line) -> Option<Vector> {
        if self.dir == other.dir {
            return None;
        }
        let d = self.dim();
        let rhs = other.base.sub(&self.base);
        // Find i < j with dir_i * (-odir_j) - (-odir_i) * dir_j invertible.
        for i in 0..d {
            for j in (i + 1)..d {
                let a = self.dir.get(i);
                let b = &-other.dir.get(i);
                let c = self.dir.get(j);
                let e = &-other.dir.get(j);
                let det = &(a * e) - &(b * c);
                if det.is_zero() {
                    continue;
                }
                let det_inv = det.inv().expect("nonzero determinant");
                let r0 = rhs.get(i);
                let r1 = rhs.get(j);
                let t = &(&(e * r0) - &(b * r1)) * &det_inv;
                let s = &(&(a * r1) - &(c * r0)) * &det_inv;
                let p = self.at(&t);
                if p == other.at(&s) {
                    return Some(p);
                }
                return None;
            }
        }
        // No invertible minor: directions are proportional after all.
        None
    }
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + t*{}", self.base, self.dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f5() -> FieldSpec {
        FieldSpec::prime(5).unwrap()
    }

    /// Oracle: enumerate every parametrization of the input line over F_p
    /// (each of the p points as base, each nonzero multiple of the direction)
    /// and collect all pairs already in canonical position. Exactly one pair
    /// qualifies, and `canonical_line` must return it from every start.
    #[test]
    fn canonical_is_unique_among_parametrizations() {
        let f = f5();
        let point = Vector::from_i64(f, &[2, 3, 1]);
        let dir = Vector::from_i64(f, &[0, 2, 4]);
        let line = canonical_line(&point, &dir).unwrap();

        let mut canonical_pairs = Vec::new();
        for t in f.elements() {
            let base = point.add_scaled(&t, &dir);
            for c in f.elements() {
                if c.is_zero() {
                    continue;
                }
                let d2 = dir.scale(&c);
                let piv = d2.pivot().unwrap();
                if d2.get(piv).is_one() && base.get(piv).is_zero() {
                    canonical_pairs.push((base.clone(), d2.clone()));
                }
                // Every parametrization canonicalizes to the same line.
                assert_eq!(canonical_line(&base, &d2).unwrap(), line);
            }
        }
        assert_eq!(canonical_pairs.len(), 1);
        assert_eq!(canonical_pairs[0].0, *line.base());
        assert_eq!(canonical_pairs[0].1, *line.direction());
    }

    #[test]
    fn canonical_line_worked_example() {
        let f = f5();
        let line = canonical_line(
            &Vector::from_i64(f, &[2, 3, 1]),
            &Vector::from_i64(f, &[0, 2, 4]),
        )
        .unwrap();
        assert_eq!(line.base(), &Vector::from_i64(f, &[2, 0, 0]));
        assert_eq!(line.direction(), &Vector::from_i64(f, &[0, 1, 2]));
    }

    #[test]
    fn same_point_set_same_line() {
        let f = f5();
        let a = canonical_line(
            &Vector::from_i64(f, &[2, 3, 1]),
            &Vector::from_i64(f, &[0, 2, 4]),
        )
        .unwrap();
        let b = canonical_line(
            &Vector::from_i64(f, &[2, 1, 2]),
            &Vector::from_i64(f, &[0, 3, 1]),
        )
        .unwrap();
        assert_eq!(a, b);
        // Oracle: compare the two 5-point sets directly.
        let mut pa = a.points();
        let mut pb = b.points();
        pa.sort();
        pb.sort();
        assert_eq!(pa, pb);
    }

    #[test]
    fn rational_direction_normalizes_to_primitive_representative() {
        let f = FieldSpec::Rational;
        let p = Vector::new(vec![
            crate::field::parse_scalar(f, "1/2").unwrap(),
            crate::field::parse_scalar(f, "3").unwrap(),
        ])
        .unwrap();
        let d = Vector::new(vec![
            crate::field::parse_scalar(f, "-2/3").unwrap(),
            crate::field::parse_scalar(f, "4/5").unwrap(),
        ])
        .unwrap();
        let line = canonical_line(&p, &d).unwrap();
        // -2/3 scales to 1; 4/5 / (-2/3) = -6/5.
        assert_eq!(line.direction().get(0).to_string(), "1");
        assert_eq!(line.direction().get(1).to_string(), "-6/5");
        assert!(line.base().get(0).is_zero());
        assert!(line.contains(&p));
        // Primitive integer direction (5,-6) with positive leading entry
        // normalizes to the same canonical direction.
        let prim = Vector::from_i64(f, &[5, -6]);
        let line2 = canonical_line(&p, &prim).unwrap();
        assert_eq!(line, line2);
    }

    #[test]
    fn degenerate_inputs() {
        let f = f5();
        let zero = Vector::zero(f, 3);
        let p = Vector::from_i64(f, &[1, 2, 3]);
        assert!(matches!(canonical_line(&p, &zero), Err(Error::ZeroDirection)));
        let q = Vector::from_i64(FieldSpec::Rational, &[1, 2, 3]);
        assert!(matches!(
            canonical_line(&q, &Vector::from_i64(f, &[1, 0, 0])),
            Err(Error::MixedFields(..))
        ));
        let short = Vector::from_i64(f, &[1]);
        assert!(matches!(
            canonical_line(&short, &Vector::from_i64(f, &[1])),
            Err(Error::DimensionTooSmall(1))
        ));
    }

    #[test]
    fn contains_matches_enumeration() {
        let f = f5();
        let line = canonical_line(
            &Vector::from_i64(f, &[2, 3, 1]),
            &Vector::from_i64(f, &[0, 2, 4]),
        )
        .unwrap();
        let pts: std::collections::BTreeSet<_> = line.points().into_iter().collect();
        assert_eq!(pts.len(), 5);
        // Exhaustive over F_5^3.
        for a in 0..5 {
            for b in 0..5 {
                for c in 0..5 {
                    let v = Vector::from_i64(f, &[a, b, c]);
                    assert_eq!(line.contains(&v), pts.contains(&v));
                }
            }
        }
    }

    #[test]
    fn intersections_exhaustive_small() {
        let f = FieldSpec::prime(3).unwrap();
        // All lines through pairs of points of F_3^2.
        let mut pts = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                pts.push(Vector::from_i64(f, &[a, b]));
            }
        }
        let mut lines = std::collections::BTreeSet::new();
        for p in &pts {
            for q in &pts {
                if p != q {
                    lines.insert(canonical_line(p, &q.sub(p)).unwrap());
                }
            }
        }
        assert_eq!(lines.len(), 12); // p^2 + p lines in the affine plane
        for a in &lines {
            for b in &lines {
                let meet = a.intersect(b);
                let expect: Vec<_> =
                    pts.iter().filter(|p| a.contains(p) && b.contains(p)).collect();
                if a == b {
                    assert_eq!(meet, None);
                    assert_eq!(expect.len(), 3);
                } else if a.direction() == b.direction() {
                    assert_eq!(meet, None);
                    assert!(expect.is_empty());
                } else {
                    // Distinct directions in the plane always meet once.
                    assert_eq!(expect.len(), 1);
                    assert_eq!(meet.as_ref(), Some(expect[0]));
                }
            }
        }
    }
}
