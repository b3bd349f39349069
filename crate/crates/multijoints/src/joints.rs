//! Joints of line families: the indicator kernel, tuple counts with
//! multiplicity, the sharp counting ratio, and the associated multilinear
//! operator.
//!
//! A point `x` is a joint of `d` lines in `F^d` when every line passes
//! through `x` and the directions are linearly independent. `N(x)` counts
//! ordered `d`-tuples forming a joint at `x`, with repeated family members
//! (multiplicities) counted separately.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::line::Line;
use crate::subspace::independent;
use crate::vector::Vector;

/// A finite multiset of lines: canonical line -> multiplicity >= 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineFamily {
    field: FieldSpec,
    dim: usize,
    members: BTreeMap<Line, u64>,
}

impl LineFamily {
    pub fn new(field: FieldSpec, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        Ok(LineFamily { field, dim, members: BTreeMap::new() })
    }

    /// Adds `mult` copies of a line, merging with an existing entry.
    pub fn insert(&mut self, line: Line, mult: u64) -> Result<()> {
        if line.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: line.dim() });
        }
        if line.field() != self.field {
            return Err(Error::MixedFields(self.field.to_string(), line.field().to_string()));
        }
        if mult == 0 {
            return Err(Error::NonPositiveWeight("multiplicity 0".into()));
        }
        *self.members.entry(line).or_insert(0) += mult;
        Ok(())
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of members counted with multiplicity.
    pub fn size(&self) -> u64 {
        self.members.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Line, u64)> {
        self.members.iter().map(|(l, m)| (l, *m))
    }

    pub fn distinct(&self) -> usize {
        self.members.len()
    }

    fn through(&self, x: &Vector) -> Vec<(&Line, u64)> {
        self.members
            .iter()
            .filter(|(l, _)| l.contains(x))
            .map(|(l, m)| (l, *m))
            .collect()
    }
}

/// One family per slot of the multilinear problem; `d` families in `F^d`.
#[derive(Clone, Debug)]
pub struct MultiFamily {
    families: Vec<LineFamily>,
}

impl MultiFamily {
    pub fn new(families: Vec<LineFamily>) -> Result<Self> {
        let Some(first) = families.first() else {
            return Err(Error::EmptyWeights);
        };
        let d = first.dim();
        if families.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: families.len() });
        }
        for fam in &families {
            if fam.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: fam.dim() });
            }
            if fam.field() != first.field() {
                return Err(Error::MixedFields(
                    first.field().to_string(),
                    fam.field().to_string(),
                ));
            }
        }
        Ok(MultiFamily { families })
    }

    pub fn families(&self) -> &[LineFamily] {
        &self.families
    }

    pub fn dim(&self) -> usize {
        self.families.len()
    }

    pub fn field(&self) -> FieldSpec {
        self.families[0].field()
    }
}

/// Joint indicator: 1 iff `x` lies on every line and the `d` directions are
/// linearly independent. Requires exactly `d = dim(x)` lines.
pub fn delta(x: &Vector, lines: &[&Line]) -> Result<bool> {
    let d = x.dim();
    if lines.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: lines.len() });
    }
    for l in lines {
        if l.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, got: l.dim() });
        }
        if Some(l.field()) != x.field() {
            return Err(Error::MixedFields(
                x.field().map(|f| f.to_string()).unwrap_or_default(),
                l.field().to_string(),
            ));
        }
    }
    if !lines.iter().all(|l| l.contains(x)) {
        return Ok(false);
    }
    let dirs: Vec<Vector> = lines.iter().map(|l| l.direction().clone()).collect();
    independent(lines[0].field(), d, &dirs)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FamilyKind {
    Joint,
    Multijoint,
}

/// Joint points and their ordered-tuple counts `N(x)`.
#[derive(Clone, Debug)]
pub struct JointSummary {
    pub kind: FamilyKind,
    pub dim: usize,
    /// Joint point -> number of ordered tuples with independent directions,
    /// weighted by the product of member multiplicities.
    pub counts: BTreeMap<Vector, u128>,
}

impl JointSummary {
    pub fn total_tuples(&self) -> u128 {
        self.counts.values().sum()
    }
}

/// Candidate joints: intersection points of pairs of distinct canonical
/// lines with distinct directions. Every joint of `d >= 2` lines lies on two
/// such lines, so the candidate set covers all joints.
fn candidate_points<'a>(lines: impl Iterator<Item = &'a Line> + Clone) -> BTreeSet<Vector> {
    let all: Vec<&Line> = lines.collect();
    let mut out = BTreeSet::new();
    for (i, a) in all.iter().enumerate() {
        for b in &all[i + 1..] {
            if let Some(p) = a.intersect(b) {
                out.insert(p);
            }
        }
    }
    out
}

fn count_at_point_single(family: &LineFamily, x: &Vector) -> u128 {
    let through = family.through(x);
    let d = family.dim();
    let field = family.field();
    let mut total: u128 = 0;
    // Unordered d-subsets of distinct lines; each independent subset yields
    // d! ordered tuples, all with the same multiplicity product.
    let idx: Vec<usize> = (0..through.len()).collect();
    for combo in combinations(&idx, d) {
        let dirs: Vec<Vector> =
            combo.iter().map(|&i| through[i].0.direction().clone()).collect();
        if independent(field, d, &dirs).unwrap_or(false) {
            let mult: u128 = combo.iter().map(|&i| through[i].1 as u128).product();
            total += factorial(d) * mult;
        }
    }
    total
}

fn count_at_point_multi(multi: &MultiFamily, x: &Vector) -> u128 {
    let d = multi.dim();
    let field = multi.field();
    let per_family: Vec<Vec<(&Line, u64)>> =
        multi.families.iter().map(|fam| fam.through(x)).collect();
    let mut total: u128 = 0;
    let mut pick = vec![0usize; d];
    loop {
        if pick.iter().zip(&per_family).all(|(&i, t)| i < t.len()) {
            let dirs: Vec<Vector> = pick
                .iter()
                .zip(&per_family)
                .map(|(&i, t)| t[i].0.direction().clone())
                .collect();
            if independent(field, d, &dirs).unwrap_or(false) {
                total += pick
                    .iter()
                    .zip(&per_family)
                    .map(|(&i, t)| t[i].1 as u128)
                    .product::<u128>();
            }
        }
        // Odometer increment over the cartesian product.
        let mut j = 0;
        loop {
            if j == d {
                return total;
            }
            pick[j] += 1;
            if pick[j] < per_family[j].len().max(1) {
                break;
            }
            pick[j] = 0;
            j += 1;
        }
    }
}

fn factorial(d: usize) -> u128 {
    (1..=d as u128).product()
}

fn combinations(idx: &[usize], k: usize) -> Vec<Vec<usize>> {
    use itertools::Itertools;
    idx.iter().copied().combinations(k).collect()
}

/// Joints of a single family: `N(x)` over ordered `d`-tuples from the family.
pub fn joint_summary(family: &LineFamily) -> JointSummary {
    let mut counts = BTreeMap::new();
    for x in candidate_points(family.members.keys()) {
        let n = count_at_point_single(family, &x);
        if n > 0 {
            counts.insert(x, n);
        }
    }
    JointSummary { kind: FamilyKind::Joint, dim: family.dim(), counts }
}

/// Multijoints: one line from each family per slot.
pub fn multijoint_summary(multi: &MultiFamily) -> JointSummary {
    let mut counts = BTreeMap::new();
    let all_lines = multi.families.iter().flat_map(|f| f.members.keys());
    for x in candidate_points(all_lines) {
        let n = count_at_point_multi(multi, &x);
        if n > 0 {
            counts.insert(x, n);
        }
    }
    JointSummary { kind: FamilyKind::Multijoint, dim: multi.dim(), counts }
}

/// Empirical check of the sharp counting inequality. `ratio = lhs / rhs`
/// is reported as-is: the inequality carries an unspecified constant, so no
/// pass/fail verdict is attached.
#[derive(Clone, Debug)]
pub struct ZhangReport {
    pub kind: FamilyKind,
    pub dim: usize,
    pub joints: usize,
    /// `sum_x N(x)^(1/(d-1))`
    pub lhs: f64,
    /// `|L|^(d/(d-1))` for one family, `(prod_j |L_j|)^(1/(d-1))` for many.
    pub rhs: f64,
    pub ratio: f64,
}

fn zhang_from_counts(summary: &JointSummary, sizes: &[u64]) -> ZhangReport {
    let d = summary.dim as f64;
    let lhs: f64 = summary
        .counts
        .values()
        .map(|&n| (n as f64).powf(1.0 / (d - 1.0)))
        .sum();
    let rhs = match summary.kind {
        FamilyKind::Joint => (sizes[0] as f64).powf(d / (d - 1.0)),
        FamilyKind::Multijoint => sizes
            .iter()
            .map(|&s| s as f64)
            .product::<f64>()
            .powf(1.0 / (d - 1.0)),
    };
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    ZhangReport {
        kind: summary.kind.clone(),
        dim: summary.dim,
        joints: summary.counts.len(),
        lhs,
        rhs,
        ratio,
    }
}

pub fn zhang_report(family: &LineFamily) -> ZhangReport {
    zhang_from_counts(&joint_summary(family), &[family.size()])
}

pub fn zhang_report_multi(multi: &MultiFamily) -> ZhangReport {
    let sizes: Vec<u64> = multi.families.iter().map(LineFamily::size).collect();
    zhang_from_counts(&multijoint_summary(multi), &sizes)
}

/// The multilinear operator `T(f_1,...,f_d)(x) = sum delta * prod f_j(l_j)`,
/// evaluated exactly at every point where it is nonzero. Lines absent from
/// an `f_j` map are treated as weight zero; member multiplicities multiply
/// the slot weight.
pub fn apply_t(
    multi: &MultiFamily,
    fs: &[BTreeMap<Line, BigRational>],
) -> Result<BTreeMap<Vector, BigRational>> {
    let d = multi.dim();
    if fs.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: fs.len() });
    }
    let field = multi.field();
    let mut out = BTreeMap::new();
    let all_lines = multi.families.iter().flat_map(|f| f.members.keys());
    for x in candidate_points(all_lines) {
        let per_family: Vec<Vec<(&Line, u64)>> =
            multi.families.iter().map(|fam| fam.through(&x)).collect();
        let mut acc = BigRational::zero();
        let mut pick = vec![0usize; d];
        'tuples: loop {
            if pick.iter().zip(&per_family).all(|(&i, t)| i < t.len()) {
                let dirs: Vec<Vector> = pick
                    .iter()
                    .zip(&per_family)
                    .map(|(&i, t)| t[i].0.direction().clone())
                    .collect();
                if independent(field, d, &dirs)? {
                    let mut term = BigRational::from_integer(1.into());
                    let mut nonzero = true;
                    for (j, (&i, t)) in pick.iter().zip(&per_family).enumerate() {
                        let (line, mult) = t[i];
                        match fs[j].get(line) {
                            Some(w) if !w.is_zero() => {
                                term *= w * BigRational::from_integer(mult.into());
                            }
                            _ => {
                                nonzero = false;
                                break;
                            }
                        }
                    }
                    if nonzero {
                        acc += term;
                    }
                }
            }
            let mut j = 0;
            loop {
                if j == d {
                    break 'tuples;
                }
                pick[j] += 1;
                if pick[j] < per_family[j].len().max(1) {
                    break;
                }
                pick[j] = 0;
                j += 1;
            }
        }
        if !acc.is_zero() {
            out.insert(x, acc);
        }
    }
    Ok(out)
}

/// Symmetric convenience: the same family and weight in every slot.
pub fn apply_t_symmetric(
    family: &LineFamily,
    f: &BTreeMap<Line, BigRational>,
) -> Result<BTreeMap<Vector, BigRational>> {
    let d = family.dim();
    let multi = MultiFamily::new(vec![family.clone(); d])?;
    apply_t(&multi, &vec![f.clone(); d])
}

/// `lhs` as an f64 is fine for reports, but ratios should stay reproducible:
/// expose the counting data for exact post-processing too.
pub fn count_vector(summary: &JointSummary) -> Vec<(Vector, u128)> {
    summary.counts.iter().map(|(v, n)| (v.clone(), *n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::line::canonical_line;

    fn f5() -> FieldSpec {
        FieldSpec::prime(5).unwrap()
    }

    fn axes(field: FieldSpec, d: usize) -> LineFamily {
        let mut fam = LineFamily::new(field, d).unwrap();
        for i in 0..d {
            let l = canonical_line(&Vector::zero(field, d), &Vector::unit(field, d, i)).unwrap();
            fam.insert(l, 1).unwrap();
        }
        fam
    }

    /// Independent oracle: scan every point of F_p^d and every ordered tuple
    /// of members (expanded by multiplicity), testing containment and
    /// independence with a coefficient-enumeration rank check.
    fn oracle_summary(family: &LineFamily) -> BTreeMap<Vector, u128> {
        let FieldSpec::Fp(p) = family.field() else { panic!("oracle needs F_p") };
        let d = family.dim();
        let field = family.field();
        let mut expanded: Vec<&Line> = Vec::new();
        for (l, m) in family.iter() {
            for _ in 0..m {
                expanded.push(l);
            }
        }
        let mut out = BTreeMap::new();
        let total_points = (p as usize).pow(d as u32);
        for code in 0..total_points {
            let mut c = code;
            let mut coords = Vec::new();
            for _ in 0..d {
                coords.push(field.from_i64((c % p as usize) as i64));
                c /= p as usize;
            }
            let x = Vector::new(coords).unwrap();
            let mut n: u128 = 0;
            let k = expanded.len();
            let mut tuple = vec![0usize; d];
            'outer: loop {
                if tuple.iter().all(|&i| i < k) {
                    let lines: Vec<&Line> = tuple.iter().map(|&i| expanded[i]).collect();
                    if lines.iter().all(|l| l.contains(&x)) && oracle_rank_full(field, &lines) {
                        n += 1;
                    }
                }
                let mut j = 0;
                loop {
                    if j == d {
                        break 'outer;
                    }
                    tuple[j] += 1;
                    if tuple[j] < k.max(1) {
                        break;
                    }
                    tuple[j] = 0;
                    j += 1;
                }
            }
            if n > 0 {
                out.insert(x, n);
            }
        }
        out
    }

    /// Rank-d check by enumerating all nontrivial coefficient combinations.
    fn oracle_rank_full(field: FieldSpec, lines: &[&Line]) -> bool {
        let FieldSpec::Fp(p) = field else { panic!() };
        let n = lines.len();
        let total = (p as usize).pow(n as u32);
        for code in 1..total {
            let mut c = code;
            let mut acc = Vector::zero(field, lines[0].dim());
            for l in lines {
                let t = field.from_i64((c % p as usize) as i64);
                c /= p as usize;
                acc = acc.add_scaled(&t, l.direction());
            }
            if acc.is_zero() {
                return false;
            }
        }
        true
    }

    #[test]
    fn three_axes_summary() {
        let fam = axes(f5(), 3);
        let s = joint_summary(&fam);
        assert_eq!(s.counts.len(), 1);
        assert_eq!(s.counts[&Vector::zero(f5(), 3)], 6);
        assert_eq!(oracle_summary(&fam), s.counts);
    }

    #[test]
    fn multiplicity_doubles_count() {
        let field = f5();
        let mut fam = axes(field, 3);
        let first =
            canonical_line(&Vector::zero(field, 3), &Vector::unit(field, 3, 0)).unwrap();
        fam.insert(first, 1).unwrap(); // now multiplicity 2
        let s = joint_summary(&fam);
        assert_eq!(s.counts[&Vector::zero(field, 3)], 12);
        assert_eq!(oracle_summary(&fam), s.counts);
    }

    fn grid_family(field: FieldSpec, n: i64, d: usize) -> LineFamily {
        let mut fam = LineFamily::new(field, d).unwrap();
        let mut coords = vec![0i64; d];
        loop {
            for axis in 0..d {
                if coords[axis] == 0 {
                    let base = Vector::from_i64(field, &coords);
                    let l = canonical_line(&base, &Vector::unit(field, d, axis)).unwrap();
                    fam.insert(l, 1).unwrap();
                }
            }
            let mut j = 0;
            loop {
                if j == d {
                    return fam;
                }
                coords[j] += 1;
                if coords[j] < n {
                    break;
                }
                coords[j] = 0;
                j += 1;
            }
        }
    }

    #[test]
    fn grid_2_summary_and_ratio() {
        let fam = grid_family(f5(), 2, 3);
        assert_eq!(fam.size(), 12);
        let s = joint_summary(&fam);
        assert_eq!(s.counts.len(), 8);
        assert!(s.counts.values().all(|&n| n == 6));
        assert_eq!(oracle_summary(&fam), s.counts);

        let z = zhang_report(&fam);
        assert!((z.lhs - 8.0 * 6f64.sqrt()).abs() < 1e-9);
        assert!((z.rhs - 12f64.powf(1.5)).abs() < 1e-9);
        // sqrt(6)/(3 sqrt(3)) = sqrt(2)/3
        assert!((z.ratio - 2f64.sqrt() / 3.0).abs() < 1e-9);
    }

    #[test]
    fn delta_checks_dimensions_and_symmetry() {
        let field = f5();
        let fam = axes(field, 3);
        let lines: Vec<&Line> = fam.iter().map(|(l, _)| l).collect();
        let origin = Vector::zero(field, 3);
        assert!(delta(&origin, &lines).unwrap());
        // Permutation invariance.
        let perm = vec![lines[2], lines[0], lines[1]];
        assert!(delta(&origin, &perm).unwrap());
        // Wrong arity.
        assert!(delta(&origin, &lines[..2]).is_err());
        // Repeated line has dependent directions.
        let rep = vec![lines[0], lines[0], lines[1]];
        assert!(!delta(&origin, &rep).unwrap());
        let off = Vector::from_i64(field, &[1, 1, 1]);
        assert!(!delta(&off, &lines).unwrap());
    }

    #[test]
    fn multijoint_of_axis_families() {
        let field = f5();
        let d = 3;
        let mut fams = Vec::new();
        for i in 0..d {
            let mut fam = LineFamily::new(field, d).unwrap();
            let l = canonical_line(&Vector::zero(field, d), &Vector::unit(field, d, i)).unwrap();
            fam.insert(l, 1).unwrap();
            fams.push(fam);
        }
        let multi = MultiFamily::new(fams).unwrap();
        let s = multijoint_summary(&multi);
        // One choice per slot, independent: a single ordered tuple.
        assert_eq!(s.counts[&Vector::zero(field, 3)], 1);
        let z = zhang_report_multi(&multi);
        assert!((z.rhs - 1.0).abs() < 1e-12);
        assert!((z.lhs - 1.0).abs() < 1e-12);
    }

    #[test]
    fn apply_t_with_unit_weights_reproduces_counts() {
        // Exhaustive equivalence on small families (<= 12 lines).
        for fam in [axes(f5(), 3), grid_family(f5(), 2, 3)] {
            let ones: BTreeMap<Line, BigRational> = fam
                .iter()
                .map(|(l, _)| (l.clone(), BigRational::from_integer(1.into())))
                .collect();
            let t = apply_t_symmetric(&fam, &ones).unwrap();
            let s = joint_summary(&fam);
            assert_eq!(t.len(), s.counts.len());
            for (x, n) in &s.counts {
                assert_eq!(t[x], BigRational::from_integer((*n).into()));
            }
        }
    }

    #[test]
    fn apply_t_is_multilinear_in_each_slot() {
        let field = f5();
        let fam = axes(field, 3);
        let multi = MultiFamily::new(vec![fam.clone(); 3]).unwrap();
        let lines: Vec<Line> = fam.iter().map(|(l, _)| l.clone()).collect();
        let w = |vals: &[(usize, i64)]| -> BTreeMap<Line, BigRational> {
            vals.iter()
                .map(|&(i, v)| (lines[i].clone(), BigRational::from_integer(v.into())))
                .collect()
        };
        let f0 = w(&[(0, 2), (1, 3), (2, 5)]);
        let g0 = w(&[(0, 7), (1, 1), (2, 4)]);
        let rest = w(&[(0, 1), (1, 1), (2, 1)]);
        let sum: BTreeMap<Line, BigRational> = lines
            .iter()
            .map(|l| (l.clone(), f0[l].clone() + g0[l].clone()))
            .collect();
        let t_sum = apply_t(&multi, &[sum, rest.clone(), rest.clone()]).unwrap();
        let t_f = apply_t(&multi, &[f0, rest.clone(), rest.clone()]).unwrap();
        let t_g = apply_t(&multi, &[g0, rest.clone(), rest]).unwrap();
        let origin = Vector::zero(field, 3);
        assert_eq!(
            t_sum[&origin],
            t_f[&origin].clone() + t_g[&origin].clone()
        );
    }

    #[test]
    fn empty_family_is_quiet() {
        let fam = LineFamily::new(f5(), 3).unwrap();
        let s = joint_summary(&fam);
        assert!(s.counts.is_empty());
        let z = zhang_report(&fam);
        assert_eq!(z.ratio, 0.0);
        assert_eq!(z.lhs, 0.0);
    }
}
