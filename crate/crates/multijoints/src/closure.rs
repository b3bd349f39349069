//! The finite closure family of lines attached to a finite point support.
//!
//! Starting from the lines through two or more support points, the family is
//! augmented at every support point until the directions available there
//! span the whole space.  Three consequences carry the default extension
//! rule of factorisation certificates:
//!
//! * every support point is a joint of the closure;
//! * any independent set of directions seen at a support point completes to
//!   a full independent set inside that point's augmentation;
//! * a line outside the closure meets the support in at most one point,
//!   because every two-point line is already a member.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::joints::{joint_summary, LineFamily};
use crate::line::{canonical_line, Line};
use crate::subspace::extend_to_basis_pool;
use crate::vector::Vector;

/// Pair lines, per-point augmentations, their union, and the joint set of
/// the union.  Construction is deterministic: all members are canonical
/// lines in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureFamily {
    field: FieldSpec,
    dim: usize,
    support: Vec<Vector>,
    pair_lines: Vec<Line>,
    augmented: Vec<Vec<Line>>,
    lines: Vec<Line>,
    joints: BTreeMap<Vector, u128>,
}

/// Builds the closure family of `support` in `field^dim`.
///
/// An empty support yields an empty closure.  Duplicate points merge; the
/// weights of the density the support came from play no role here.
pub fn line_closure(field: FieldSpec, dim: usize, support: &[Vector]) -> Result<ClosureFamily> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    let mut set = BTreeSet::new();
    for p in support {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
        }
        let pf = p.field().expect("positive dimension");
        if pf != field {
            return Err(Error::MixedFields(field.to_string(), pf.to_string()));
        }
        set.insert(p.clone());
    }
    let support: Vec<Vector> = set.into_iter().collect();

    let mut pair_set = BTreeSet::new();
    for (i, p) in support.iter().enumerate() {
        for q in &support[i + 1..] {
            pair_set.insert(canonical_line(p, &q.sub(p))?);
        }
    }
    let pair_lines: Vec<Line> = pair_set.iter().cloned().collect();

    let mut lines = pair_set.clone();
    let mut augmented = Vec::with_capacity(support.len());
    for x in &support {
        let dirs: Vec<Vector> = pair_lines
            .iter()
            .filter(|l| l.contains(x))
            .map(|l| l.direction().clone())
            .collect();
        let pool = extend_to_basis_pool(field, dim, &dirs)?;
        let mut at_x = BTreeSet::new();
        for v in &pool {
            at_x.insert(canonical_line(x, v)?);
        }
        lines.extend(at_x.iter().cloned());
        augmented.push(at_x.into_iter().collect());
    }
    let lines: Vec<Line> = lines.into_iter().collect();

    let mut family = LineFamily::new(field, dim)?;
    for l in &lines {
        family.insert(l.clone(), 1)?;
    }
    let joints = joint_summary(&family).counts;

    Ok(ClosureFamily { field, dim, support, pair_lines, augmented, lines, joints })
}

impl ClosureFamily {
    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Deduplicated support points in sorted order.
    pub fn support(&self) -> &[Vector] {
        &self.support
    }

    /// Lines through at least two support points.
    pub fn pair_lines(&self) -> &[Line] {
        &self.pair_lines
    }

    /// Augmentation at the `i`-th support point: the pair lines through it
    /// plus completion lines whose directions extend them to a spanning set.
    pub fn augmented(&self, i: usize) -> &[Line] {
        &self.augmented[i]
    }

    /// The whole family: pair lines united with every augmentation.
    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Joint points of the family with their ordered-tuple counts.
    pub fn joints(&self) -> &BTreeMap<Vector, u128> {
        &self.joints
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn contains_line(&self, line: &Line) -> bool {
        self.lines.binary_search(line).is_ok()
    }

    pub fn support_index(&self, x: &Vector) -> Option<usize> {
        self.support.binary_search(x).ok()
    }

    /// Members passing through `x`, as indices into `lines()`.
    pub fn lines_through(&self, x: &Vector) -> Vec<usize> {
        (0..self.lines.len()).filter(|&i| self.lines[i].contains(x)).collect()
    }

    /// The family as a multiplicity-one [`LineFamily`].
    pub fn to_family(&self) -> Result<LineFamily> {
        let mut family = LineFamily::new(self.field, self.dim)?;
        for l in &self.lines {
            family.insert(l.clone(), 1)?;
        }
        Ok(family)
    }
}
