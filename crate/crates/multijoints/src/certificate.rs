//! Factorisation certificates for the joints and multijoints inequalities.
//!
//! A certificate for a finitely supported density `M` is a nonnegative table
//! `g` on (supp M) x ℒ together with a bound `V` such that
//!
//! * `M(x)^d <= g(x,l_1) ... g(x,l_d)` whenever the `d` lines pass through
//!   `x` with independent directions, and
//! * `sum_{x in l} g(x,l) <= V` for every line `l`.
//!
//! In all-lines mode ℒ is the closure family of supp M and the two bounds
//! extend to arbitrary lines by the default rule: a line outside ℒ meets the
//! support at most once, and `g` is `V` at that point and `0` elsewhere.
//! The table is kept in the raw scale of `M`, so every check is a rational
//! comparison; the scale-free constant is `C_d = V / ||M||_d` with
//! `||M||_d = (sum M(x)^d)^{1/d}`, and the line-sum bound reads
//! `C_d * ||M||_d` exactly as stated by the factorisation theorem.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::closure::{line_closure, ClosureFamily};
use crate::duality::{
    primal_solve, DiscreteInstance, KernelEntry, SolveMode, SolveReport, SolverOptions,
};
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::joints::{joint_summary, LineFamily, MultiFamily};
use crate::line::{canonical_line, Line};
use crate::rootexpr::RootExpr;
use crate::subspace::{independent, span};
use crate::vector::Vector;

/// A finitely supported nonnegative density on points.
pub type PointWeights = BTreeMap<Vector, BigRational>;

/// Which lines the certificate's conclusions quantify over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateScope {
    /// All lines of the space: the table covers the closure family and the
    /// default rule covers the rest.
    AllLines,
    /// Only the lines of an explicitly given family.
    Explicit,
}

/// Line source for `factorise`.
#[derive(Clone, Copy, Debug)]
pub enum FactorMode<'a> {
    /// Build the closure family of supp M; conclusions hold for all lines.
    AllLines,
    /// Use the union of the given families; conclusions hold on the union.
    Explicit(&'a MultiFamily),
}

/// The verified object: density, line family, table, and the raw bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FactorCertificate {
    field: FieldSpec,
    dim: usize,
    scope: CertificateScope,
    support: Vec<Vector>,
    weights: Vec<BigRational>,
    lines: Vec<Line>,
    table: Vec<Vec<BigRational>>,
    value: BigRational,
}

impl FactorCertificate {
    /// Validates raw parts into a certificate: sorted deduplicated support
    /// with positive weights, sorted lines, a nonnegative table supported on
    /// incidences, and a nonnegative bound.  Mathematical soundness is the
    /// verifier's job, not the constructor's.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        field: FieldSpec,
        dim: usize,
        scope: CertificateScope,
        support: Vec<Vector>,
        weights: Vec<BigRational>,
        lines: Vec<Line>,
        table: Vec<Vec<BigRational>>,
        value: BigRational,
    ) -> Result<Self> {
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        for p in &support {
            if p.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
            }
            let pf = p.field().expect("positive dimension");
            if pf != field {
                return Err(Error::MixedFields(field.to_string(), pf.to_string()));
            }
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadCertificate("support must be sorted and distinct".into()));
        }
        if weights.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: weights.len() });
        }
        for w in &weights {
            if !w.is_positive() {
                return Err(Error::NonPositiveWeight(format!("support weight {w}")));
            }
        }
        for l in &lines {
            if l.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: l.dim() });
            }
            if l.field() != field {
                return Err(Error::MixedFields(field.to_string(), l.field().to_string()));
            }
        }
        if lines.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::BadCertificate("lines must be sorted and distinct".into()));
        }
        if table.len() != support.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), got: table.len() });
        }
        for (i, row) in table.iter().enumerate() {
            if row.len() != lines.len() {
                return Err(Error::DimensionMismatch { expected: lines.len(), got: row.len() });
            }
            for (j, v) in row.iter().enumerate() {
                if v.is_negative() {
                    return Err(Error::NegativeWeight(format!("table entry {v}")));
                }
                if !v.is_zero() && !lines[j].contains(&support[i]) {
                    return Err(Error::BadCertificate(format!(
                        "nonzero entry at non-incident pair ({}, {})",
                        support[i], lines[j]
                    )));
                }
            }
        }
        if value.is_negative() {
            return Err(Error::NegativeWeight(format!("certificate bound {value}")));
        }
        Ok(FactorCertificate { field, dim, scope, support, weights, lines, table, value })
    }

    pub fn field(&self) -> FieldSpec {
        self.field
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn scope(&self) -> CertificateScope {
        self.scope
    }

    /// Support of `M`, sorted.
    pub fn support(&self) -> &[Vector] {
        &self.support
    }

    /// `M` on the support, in the raw input scale.
    pub fn weights(&self) -> &[BigRational] {
        &self.weights
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    pub fn table(&self) -> &[Vec<BigRational>] {
        &self.table
    }

    /// Raw line-sum bound `V = C_d * ||M||_d`; also the default-rule entry.
    pub fn value(&self) -> &BigRational {
        &self.value
    }

    pub fn support_index(&self, x: &Vector) -> Option<usize> {
        self.support.binary_search(x).ok()
    }

    pub fn line_index(&self, l: &Line) -> Option<usize> {
        self.lines.binary_search(l).ok()
    }

    /// `sum_x M(x)^d`, the `d`-th power of the normalization norm.
    pub fn norm_pow(&self) -> BigRational {
        self.weights.iter().map(|w| pow_d(w, self.dim)).sum()
    }

    /// `||M||_d` as an exact root expression.
    pub fn norm(&self) -> Result<RootExpr> {
        let p = self.norm_pow();
        if p.is_zero() {
            return Ok(RootExpr::zero());
        }
        RootExpr::new(p, 1, self.dim as u32)
    }

    /// The scale-free constant `C_d = V / ||M||_d = (V^d / sum M^d)^{1/d}`.
    pub fn constant(&self) -> Result<RootExpr> {
        let p = self.norm_pow();
        if p.is_zero() {
            return Ok(RootExpr::zero());
        }
        RootExpr::new(pow_d(&self.value, self.dim) / p, 1, self.dim as u32)
    }

    /// Exact test `C_d <= c` without leaving rational arithmetic.
    pub fn constant_at_most(&self, c: &BigRational) -> bool {
        let p = self.norm_pow();
        if p.is_zero() {
            return !c.is_negative();
        }
        pow_d(&self.value, self.dim) <= pow_d(c, self.dim) * p
    }

    /// `sum_{x in l} g(x, l)` for the `j`-th line.
    pub fn line_sum(&self, j: usize) -> BigRational {
        let mut sum = BigRational::zero();
        for (i, x) in self.support.iter().enumerate() {
            if self.lines[j].contains(x) {
                sum += &self.table[i][j];
            }
        }
        sum
    }

    pub fn is_trivial(&self) -> bool {
        self.support.is_empty() || self.value.is_zero()
    }

    /// The certificate rescaled so that `sup M = 1`.  `factorise` commutes
    /// with positive scaling of `M` up to exactly this normalization.
    pub fn normalized(&self) -> FactorCertificate {
        let Some(s) = self.weights.iter().max().cloned() else {
            return self.clone();
        };
        let mut out = self.clone();
        for w in &mut out.weights {
            *w /= &s;
        }
        for row in &mut out.table {
            for v in row.iter_mut() {
                *v /= &s;
            }
        }
        out.value /= &s;
        out
    }
}

/// Where an evaluated `g(x, l)` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GSource {
    /// `l` is a member line: stored table entry.
    Table,
    /// `l` is outside the family and `x` is its unique support point: the
    /// default constant.
    DefaultRule,
    /// `l` is outside the family and misses `x` (or all of the support).
    OffClosure,
    /// `x` is not a support point; the value is zero by convention.
    OffSupport,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GValue {
    pub value: BigRational,
    pub source: GSource,
}

/// Evaluates the extended table at any point/line pair, in raw scale.
///
/// Off-family lines follow the default rule only for all-lines certificates;
/// an explicit-scope certificate makes no claim there and returns zero.
/// An off-family line through two or more support points means the family is
/// not a closure, which is an inconsistency, not a value.
pub fn evaluate_g(cert: &FactorCertificate, x: &Vector, l: &Line) -> Result<GValue> {
    if l.dim() != cert.dim || x.dim() != cert.dim {
        return Err(Error::DimensionMismatch { expected: cert.dim, got: l.dim().min(x.dim()) });
    }
    if l.field() != cert.field {
        return Err(Error::MixedFields(cert.field.to_string(), l.field().to_string()));
    }
    let idx = cert.support_index(x);
    if let Some(j) = cert.line_index(l) {
        return Ok(match idx {
            Some(i) => GValue { value: cert.table[i][j].clone(), source: GSource::Table },
            None => GValue { value: BigRational::zero(), source: GSource::OffSupport },
        });
    }
    if cert.scope == CertificateScope::Explicit {
        return Ok(GValue {
            value: BigRational::zero(),
            source: if idx.is_some() { GSource::OffClosure } else { GSource::OffSupport },
        });
    }
    let on_line: Vec<&Vector> = cert.support.iter().filter(|p| l.contains(p)).collect();
    if on_line.len() > 1 {
        return Err(Error::BadCertificate(format!(
            "line {l} is outside the family but meets {} support points",
            on_line.len()
        )));
    }
    Ok(match (idx, on_line.first()) {
        (Some(_), Some(p)) if *p == x => {
            GValue { value: cert.value.clone(), source: GSource::DefaultRule }
        }
        (Some(_), _) => GValue { value: BigRational::zero(), source: GSource::OffClosure },
        (None, _) => GValue { value: BigRational::zero(), source: GSource::OffSupport },
    })
}

/// How much of the conclusion space a verification pass covers.
#[derive(Clone, Debug)]
pub enum VerifyScope {
    /// Every line sum, every independent member tuple at every support
    /// point, and (for all-lines certificates) every mixed tuple class with
    /// synthetic off-family lines.
    Exhaustive,
    /// Seeded random spot checks of the same inequalities.
    Sampled { seed: u64, samples: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessKind {
    /// A table entry exceeds the bound `V`.
    EntryBound,
    /// A line sum exceeds `V`.
    LineSum,
    /// `M(x)^d` exceeds the product over an independent member tuple.
    TupleBound,
    /// `M(x)^d` exceeds the product over a mixed member/synthetic tuple.
    MixedTuple,
    /// The family misses a line through two support points, so the default
    /// rule is unsound.
    Closure,
}

/// A failed check: the point and tuple involved, with both sides exact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub kind: WitnessKind,
    pub point: Option<Vector>,
    pub lines: Vec<Line>,
    pub lhs: BigRational,
    pub rhs: BigRational,
}

impl std::fmt::Display for Witness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let what = match self.kind {
            WitnessKind::EntryBound => "table entry exceeds the bound",
            WitnessKind::LineSum => "line sum exceeds the bound",
            WitnessKind::TupleBound => "tuple product below M^d",
            WitnessKind::MixedTuple => "mixed tuple product below M^d",
            WitnessKind::Closure => "missing two-point line",
        };
        write!(f, "{what}: lhs {} vs rhs {}", self.lhs, self.rhs)?;
        if let Some(p) = &self.point {
            write!(f, " at {p}")?;
        }
        for l in &self.lines {
            write!(f, "; {l}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail(Box<Witness>),
}

#[derive(Clone, Debug)]
pub struct VerifyReport {
    /// Number of exact comparisons performed.
    pub checks: u64,
    pub verdict: Verdict,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        matches!(self.verdict, Verdict::Pass)
    }
}

/// Result of a factorisation run.
#[derive(Clone, Debug)]
pub struct Factorisation {
    pub certificate: FactorCertificate,
    /// The closure family, in all-lines mode.
    pub closure: Option<ClosureFamily>,
    /// Solver diagnostics, in the sup-normalized scale of the solve.
    pub report: SolveReport,
}

fn pow_d(r: &BigRational, d: usize) -> BigRational {
    let mut out = BigRational::one();
    for _ in 0..d {
        out *= r;
    }
    out
}

/// Validates a density and splits it into sorted support and weights,
/// dropping zero entries.
fn positive_support(
    field: FieldSpec,
    dim: usize,
    m: &PointWeights,
) -> Result<(Vec<Vector>, Vec<BigRational>)> {
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for (p, w) in m {
        if p.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: p.dim() });
        }
        let pf = p.field().expect("positive dimension");
        if pf != field {
            return Err(Error::MixedFields(field.to_string(), pf.to_string()));
        }
        if w.is_negative() {
            return Err(Error::NegativeWeight(format!("M({p}) = {w}")));
        }
        if w.is_positive() {
            support.push(p.clone());
            weights.push(w.clone());
        }
    }
    Ok((support, weights))
}

fn empty_report(opts: &SolverOptions) -> SolveReport {
    SolveReport {
        primal: 0.0,
        dual: 0.0,
        gap: 0.0,
        iterations: 0,
        tolerance: opts.rel_tol,
        lifted_exact: true,
        primal_trace: Vec::new(),
        dual_trace: Vec::new(),
    }
}

/// Computes a factorisation certificate for `M`.
///
/// The line family is either the closure of supp M (all-lines mode) or the
/// union of the given families.  The discrete instance puts the support
/// points that are joints of the family against the family's lines with the
/// joint indicator as kernel, solves the single-table problem at exponent 1,
/// and rescales the lifted exact tables back to the raw scale of `M`.  The
/// achieved bound is the certificate's `V`; `M ≡ 0` yields the zero
/// certificate.
pub fn factorise(
    field: FieldSpec,
    dim: usize,
    m: &PointWeights,
    mode: FactorMode<'_>,
    opts: &SolverOptions,
) -> Result<Factorisation> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    let (support, weights) = positive_support(field, dim, m)?;

    let (scope, lines, joints, closure) = match mode {
        FactorMode::AllLines => {
            let c = line_closure(field, dim, &support)?;
            (CertificateScope::AllLines, c.lines().to_vec(), c.joints().clone(), Some(c))
        }
        FactorMode::Explicit(multi) => {
            if multi.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: multi.dim() });
            }
            if multi.field() != field {
                return Err(Error::MixedFields(field.to_string(), multi.field().to_string()));
            }
            let mut set = BTreeSet::new();
            for fam in multi.families() {
                for (l, _) in fam.iter() {
                    set.insert(l.clone());
                }
            }
            let lines: Vec<Line> = set.into_iter().collect();
            let mut family = LineFamily::new(field, dim)?;
            for l in &lines {
                family.insert(l.clone(), 1)?;
            }
            (CertificateScope::Explicit, lines, joint_summary(&family).counts, None)
        }
    };

    // Saturation pruning: only support points that are joints of the family
    // meet the kernel; the rest keep a zero row, where the first conclusion
    // is vacuous.
    let xs: Vec<usize> =
        (0..support.len()).filter(|&i| joints.contains_key(&support[i])).collect();
    if xs.is_empty() {
        let table = vec![vec![BigRational::zero(); lines.len()]; support.len()];
        let certificate = FactorCertificate::from_parts(
            field,
            dim,
            scope,
            support,
            weights,
            lines,
            table,
            BigRational::zero(),
        )?;
        return Ok(Factorisation { certificate, closure, report: empty_report(opts) });
    }

    // Canonical rescale before the solve: dividing by sup M makes the run
    // invariant under positive scaling of the input.
    let norm_scale = weights.iter().max().expect("nonempty support").clone();
    let one = BigRational::one();

    let cols_at: Vec<Vec<usize>> = xs
        .iter()
        .map(|&i| {
            (0..lines.len()).filter(|&j| lines[j].contains(&support[i])).collect::<Vec<_>>()
        })
        .collect();
    let mut kernel = Vec::new();
    for (xi, cols) in cols_at.iter().enumerate() {
        for combo in cols.iter().copied().combinations(dim) {
            let dirs: Vec<Vector> =
                combo.iter().map(|&j| lines[j].direction().clone()).collect();
            if independent(field, dim, &dirs)? {
                for perm in combo.iter().copied().permutations(dim) {
                    kernel.push(KernelEntry { x: xi, y: perm, value: one.clone() });
                }
            }
        }
    }

    let density: Vec<BigRational> = xs.iter().map(|&i| &weights[i] / &norm_scale).collect();
    let inst = DiscreteInstance::new(
        dim,
        vec![one.clone(); xs.len()],
        density,
        vec![vec![one.clone(); lines.len()]; dim],
        kernel,
        one,
        true,
    )?;
    let (tables, report) = primal_solve(&inst, SolveMode::Symmetric, opts)?;

    let value = &tables.value * &norm_scale;
    let mut table = vec![vec![BigRational::zero(); lines.len()]; support.len()];
    for (xi, &i) in xs.iter().enumerate() {
        for (j, v) in tables.tables[0][xi].iter().enumerate() {
            if !v.is_zero() {
                table[i][j] = v * &norm_scale;
            }
        }
    }
    let certificate =
        FactorCertificate::from_parts(field, dim, scope, support, weights, lines, table, value)?;
    Ok(Factorisation { certificate, closure, report })
}

/// Candidate synthetic directions at `x`: directions whose line through `x`
/// lies outside the family.  Over a prime field the list is exhaustive (one
/// representative per direction); over the rationals it walks the moment
/// curve `(1, t, t^2, ...)`, of which any proper subspace contains at most
/// `d - 1` members, so `d^2 + 1` of them make the greedy completion search
/// below conclusive.
fn synthetic_pool(
    field: FieldSpec,
    dim: usize,
    lines: &[Line],
    x: &Vector,
) -> Result<Vec<Vector>> {
    let outside = |v: &Vector| -> Result<bool> {
        Ok(lines.binary_search(&canonical_line(x, v)?).is_err())
    };
    let mut pool = Vec::new();
    match field {
        FieldSpec::Fp(p) => {
            // All direction representatives: leading coordinate 1 at each pivot.
            for pivot in 0..dim {
                let free = dim - 1 - pivot;
                let total = (p as usize).pow(free as u32);
                for code in 0..total {
                    let mut coords = vec![field.zero(); dim];
                    coords[pivot] = field.one();
                    let mut c = code;
                    for k in pivot + 1..dim {
                        coords[k] = field.from_i64((c % p as usize) as i64);
                        c /= p as usize;
                    }
                    let v = Vector::new(coords)?;
                    if outside(&v)? {
                        pool.push(v);
                    }
                }
            }
        }
        FieldSpec::Rational => {
            let need = dim * dim + 1;
            let mut t: i64 = 0;
            while pool.len() < need {
                let coords: Vec<i64> =
                    (0..dim).map(|k| t.pow(k as u32)).collect();
                let v = Vector::from_i64(field, &coords);
                if outside(&v)? {
                    pool.push(v);
                }
                t += 1;
            }
        }
    }
    Ok(pool)
}

/// Greedily extends `current` to `d` independent directions using members of
/// `pool`.  Exact: while the span is proper, some completion exists within
/// the pool if and only if some pool member leaves the span, so the greedy
/// choice never dead-ends.
fn complete_within(
    field: FieldSpec,
    dim: usize,
    current: &[Vector],
    pool: &[Vector],
) -> Result<Option<Vec<Vector>>> {
    let mut sub = span(field, dim, current)?;
    let mut picked = Vec::new();
    for v in pool {
        if sub.is_full() {
            break;
        }
        if !sub.contains(v) {
            sub = sub.extend(std::slice::from_ref(v))?;
            picked.push(v.clone());
        }
    }
    Ok(sub.is_full().then_some(picked))
}

struct PointCheck {
    checks: u64,
    witness: Option<Witness>,
}

/// First-conclusion checks at one support point: every independent member
/// tuple, and in all-lines scope every mixed class with the default rule.
fn check_point(cert: &FactorCertificate, i: usize) -> Result<PointCheck> {
    let d = cert.dim;
    let x = &cert.support[i];
    let cols: Vec<usize> =
        (0..cert.lines.len()).filter(|&j| cert.lines[j].contains(x)).collect();
    let md = pow_d(&cert.weights[i], d);
    let mut checks = 0u64;

    for combo in cols.iter().copied().combinations(d) {
        let dirs: Vec<Vector> =
            combo.iter().map(|&j| cert.lines[j].direction().clone()).collect();
        if !independent(cert.field, d, &dirs)? {
            continue;
        }
        checks += 1;
        let mut prod = BigRational::one();
        for &j in &combo {
            prod *= &cert.table[i][j];
        }
        if md > prod {
            return Ok(PointCheck {
                checks,
                witness: Some(Witness {
                    kind: WitnessKind::TupleBound,
                    point: Some(x.clone()),
                    lines: combo.iter().map(|&j| cert.lines[j].clone()).collect(),
                    lhs: md,
                    rhs: prod,
                }),
            });
        }
    }

    if cert.scope == CertificateScope::AllLines {
        let pool = synthetic_pool(cert.field, d, &cert.lines, x)?;
        for k in 0..d {
            for combo in cols.iter().copied().combinations(k) {
                let dirs: Vec<Vector> =
                    combo.iter().map(|&j| cert.lines[j].direction().clone()).collect();
                if !independent(cert.field, d, &dirs)? {
                    continue;
                }
                let Some(extra) = complete_within(cert.field, d, &dirs, &pool)? else {
                    continue;
                };
                checks += 1;
                let mut prod = pow_d(&cert.value, d - k);
                for &j in &combo {
                    prod *= &cert.table[i][j];
                }
                if md > prod {
                    let mut tuple: Vec<Line> =
                        combo.iter().map(|&j| cert.lines[j].clone()).collect();
                    for v in &extra {
                        tuple.push(canonical_line(x, v)?);
                    }
                    return Ok(PointCheck {
                        checks,
                        witness: Some(Witness {
                            kind: WitnessKind::MixedTuple,
                            point: Some(x.clone()),
                            lines: tuple,
                            lhs: md,
                            rhs: prod,
                        }),
                    });
                }
            }
        }
    }
    Ok(PointCheck { checks, witness: None })
}

/// Checks both conclusions of a certificate against the density `m`.
///
/// Table dominance (`g <= V`) comes first, since the mixed-tuple rule leans
/// on it; then line sums, the two-point-line closure property, and the
/// per-point tuple checks (parallel over support points).  A mathematical
/// violation is returned as a witness, not an error; errors mean the inputs
/// don't describe a checkable certificate at all.
pub fn verify_certificate(
    cert: &FactorCertificate,
    m: &PointWeights,
    scope: &VerifyScope,
) -> Result<VerifyReport> {
    let (support, weights) = positive_support(cert.field, cert.dim, m)?;
    if support != cert.support || weights != cert.weights {
        return Err(Error::BadCertificate(
            "certificate was issued for a different density".into(),
        ));
    }
    let mut checks = 0u64;
    let fail = |kind, point, lines, lhs, rhs, checks| {
        Ok(VerifyReport {
            checks,
            verdict: Verdict::Fail(Box::new(Witness { kind, point, lines, lhs, rhs })),
        })
    };

    for (i, row) in cert.table.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if v.is_zero() {
                continue;
            }
            checks += 1;
            if v > &cert.value {
                return fail(
                    WitnessKind::EntryBound,
                    Some(cert.support[i].clone()),
                    vec![cert.lines[j].clone()],
                    v.clone(),
                    cert.value.clone(),
                    checks,
                );
            }
        }
    }

    for j in 0..cert.lines.len() {
        checks += 1;
        let sum = cert.line_sum(j);
        if sum > cert.value {
            return fail(
                WitnessKind::LineSum,
                None,
                vec![cert.lines[j].clone()],
                sum,
                cert.value.clone(),
                checks,
            );
        }
    }

    if cert.scope == CertificateScope::AllLines {
        // Default-rule soundness: every two-point line must be a member.
        for (i, p) in cert.support.iter().enumerate() {
            for q in &cert.support[i + 1..] {
                checks += 1;
                let l = canonical_line(p, &q.sub(p))?;
                if cert.line_index(&l).is_none() {
                    return fail(
                        WitnessKind::Closure,
                        Some(p.clone()),
                        vec![l],
                        BigRational::from_integer(2.into()),
                        BigRational::one(),
                        checks,
                    );
                }
            }
        }
    }

    match scope {
        VerifyScope::Exhaustive => {
            let results: Result<Vec<PointCheck>> =
                (0..cert.support.len()).into_par_iter().map(|i| check_point(cert, i)).collect();
            for r in results? {
                checks += r.checks;
                if let Some(w) = r.witness {
                    return Ok(VerifyReport { checks, verdict: Verdict::Fail(Box::new(w)) });
                }
            }
        }
        VerifyScope::Sampled { seed, samples } => {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let d = cert.dim;
            for _ in 0..*samples {
                if cert.support.is_empty() {
                    break;
                }
                let i = rng.gen_range(0..cert.support.len());
                let x = &cert.support[i];
                let cols: Vec<usize> =
                    (0..cert.lines.len()).filter(|&j| cert.lines[j].contains(x)).collect();
                if cols.len() < d {
                    continue;
                }
                let mut picked = BTreeSet::new();
                while picked.len() < d {
                    picked.insert(cols[rng.gen_range(0..cols.len())]);
                }
                let combo: Vec<usize> = picked.into_iter().collect();
                let dirs: Vec<Vector> =
                    combo.iter().map(|&j| cert.lines[j].direction().clone()).collect();
                if !independent(cert.field, d, &dirs)? {
                    continue;
                }
                checks += 1;
                let md = pow_d(&cert.weights[i], d);
                let mut prod = BigRational::one();
                for &j in &combo {
                    prod *= &cert.table[i][j];
                }
                if md > prod {
                    return fail(
                        WitnessKind::TupleBound,
                        Some(x.clone()),
                        combo.iter().map(|&j| cert.lines[j].clone()).collect(),
                        md,
                        prod,
                        checks,
                    );
                }
            }
        }
    }
    Ok(VerifyReport { checks, verdict: Verdict::Pass })
}

/// A joints certificate for the union of `d` families, restricted per slot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultijointCertificate {
    joint: FactorCertificate,
    /// Per slot: indices into the union's lines.
    slots: Vec<Vec<usize>>,
}

impl MultijointCertificate {
    /// Validates slot structure over a joints certificate: one sorted index
    /// list per dimension, in range, jointly covering every union line.
    pub fn from_parts(joint: FactorCertificate, slots: Vec<Vec<usize>>) -> Result<Self> {
        if slots.len() != joint.dim() {
            return Err(Error::DimensionMismatch { expected: joint.dim(), got: slots.len() });
        }
        let mut covered = vec![false; joint.lines().len()];
        for slot in &slots {
            if slot.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::BadCertificate(
                    "slot indices must be sorted and distinct".into(),
                ));
            }
            for &j in slot {
                if j >= joint.lines().len() {
                    return Err(Error::BadCertificate(format!("slot index {j} out of range")));
                }
                covered[j] = true;
            }
        }
        if !covered.iter().all(|&c| c) {
            return Err(Error::BadCertificate("slots must cover the union family".into()));
        }
        Ok(MultijointCertificate { joint, slots })
    }

    pub fn joint(&self) -> &FactorCertificate {
        &self.joint
    }

    pub fn slots(&self) -> &[Vec<usize>] {
        &self.slots
    }

    pub fn slot_lines(&self, j: usize) -> Vec<&Line> {
        self.slots[j].iter().map(|&k| &self.joint.lines[k]).collect()
    }

    /// `g_j(x, l) = g(x, l)` for `l` in the `j`-th family, zero off-slot.
    pub fn slot_entry(&self, j: usize, x: &Vector, l: &Line) -> BigRational {
        let Some(i) = self.joint.support_index(x) else {
            return BigRational::zero();
        };
        match self.joint.line_index(l) {
            Some(k) if self.slots[j].binary_search(&k).is_ok() => self.joint.table[i][k].clone(),
            _ => BigRational::zero(),
        }
    }

    /// Verifies the underlying joints certificate and then both corollary
    /// conclusions directly: one line per slot with independent directions,
    /// and per-slot line sums.
    pub fn verify(&self, m: &PointWeights, scope: &VerifyScope) -> Result<VerifyReport> {
        let base = verify_certificate(&self.joint, m, scope)?;
        if !base.passed() {
            return Ok(base);
        }
        let mut checks = base.checks;
        let cert = &self.joint;
        let d = cert.dim;

        for slot in &self.slots {
            for &j in slot {
                checks += 1;
                let sum = cert.line_sum(j);
                if sum > cert.value {
                    return Ok(VerifyReport {
                        checks,
                        verdict: Verdict::Fail(Box::new(Witness {
                            kind: WitnessKind::LineSum,
                            point: None,
                            lines: vec![cert.lines[j].clone()],
                            lhs: sum,
                            rhs: cert.value.clone(),
                        })),
                    });
                }
            }
        }

        if matches!(scope, VerifyScope::Exhaustive) {
            for (i, x) in cert.support.iter().enumerate() {
                let per_slot: Vec<Vec<usize>> = self
                    .slots
                    .iter()
                    .map(|slot| {
                        slot.iter().copied().filter(|&j| cert.lines[j].contains(x)).collect()
                    })
                    .collect();
                let md = pow_d(&cert.weights[i], d);
                let mut pick = vec![0usize; d];
                'tuples: loop {
                    if pick.iter().zip(&per_slot).all(|(&k, s)| k < s.len()) {
                        let combo: Vec<usize> =
                            pick.iter().zip(&per_slot).map(|(&k, s)| s[k]).collect();
                        let dirs: Vec<Vector> = combo
                            .iter()
                            .map(|&j| cert.lines[j].direction().clone())
                            .collect();
                        if independent(cert.field, d, &dirs)? {
                            checks += 1;
                            let mut prod = BigRational::one();
                            for &j in &combo {
                                prod *= &cert.table[i][j];
                            }
                            if md > prod {
                                return Ok(VerifyReport {
                                    checks,
                                    verdict: Verdict::Fail(Box::new(Witness {
                                        kind: WitnessKind::TupleBound,
                                        point: Some(x.clone()),
                                        lines: combo
                                            .iter()
                                            .map(|&j| cert.lines[j].clone())
                                            .collect(),
                                        lhs: md,
                                        rhs: prod,
                                    })),
                                });
                            }
                        }
                    }
                    let mut j = 0;
                    loop {
                        if j == d {
                            break 'tuples;
                        }
                        pick[j] += 1;
                        if pick[j] < per_slot[j].len().max(1) {
                            break;
                        }
                        pick[j] = 0;
                        j += 1;
                    }
                }
            }
        }
        Ok(VerifyReport { checks, verdict: Verdict::Pass })
    }
}

#[derive(Clone, Debug)]
pub struct MultijointFactorisation {
    pub certificate: MultijointCertificate,
    pub report: SolveReport,
}

/// Corollary-style certificate: factorises against the union of the slot
/// families and restricts the single table to each slot.
pub fn multijoint_factorise(
    m: &PointWeights,
    multi: &MultiFamily,
    opts: &SolverOptions,
) -> Result<MultijointFactorisation> {
    let fac = factorise(multi.field(), multi.dim(), m, FactorMode::Explicit(multi), opts)?;
    let joint = fac.certificate;
    let slots: Vec<Vec<usize>> = multi
        .families()
        .iter()
        .map(|fam| {
            fam.iter()
                .map(|(l, _)| joint.line_index(l).expect("slot lines embed in the union"))
                .collect::<BTreeSet<usize>>()
                .into_iter()
                .collect()
        })
        .collect();
    Ok(MultijointFactorisation {
        certificate: MultijointCertificate { joint, slots },
        report: fac.report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::joints::apply_t_symmetric;
    use num_traits::ToPrimitive;

    fn f5() -> FieldSpec {
        FieldSpec::prime(5).unwrap()
    }

    fn f7() -> FieldSpec {
        FieldSpec::prime(7).unwrap()
    }

    fn rat(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    fn weights(field: FieldSpec, pts: &[(&[i64], i64)]) -> PointWeights {
        pts.iter().map(|&(c, w)| (Vector::from_i64(field, c), rat(w))).collect()
    }

    fn grid_m(field: FieldSpec, n: i64) -> PointWeights {
        let mut m = PointWeights::new();
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    m.insert(Vector::from_i64(field, &[a, b, c]), rat(1));
                }
            }
        }
        m
    }

    #[test]
    fn singleton_indicator_certificate() {
        let m = weights(f5(), &[(&[0, 0, 0], 1)]);
        let fac =
            factorise(f5(), 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        assert_eq!(cert.lines().len(), 3, "closure of a point is the three axes");
        // Optimal bound is exactly 1; the lift may sit a hair above.
        assert!(cert.value() >= &rat(1));
        assert!(cert.value().to_f64().unwrap() < 1.0 + 1e-6);
        for j in 0..3 {
            let g = &cert.table()[0][j];
            assert!((g.to_f64().unwrap() - 1.0).abs() < 1e-6);
        }
        let report = verify_certificate(cert, &m, &VerifyScope::Exhaustive).unwrap();
        assert!(report.passed());
        assert!(report.checks > 3, "mixed classes checked too");
        // C_d = value / ||M||_3 with ||M||_3 = 1.
        assert!(cert.constant_at_most(&BigRational::new(101.into(), 100.into())));
        assert!(!cert.constant_at_most(&BigRational::new(99.into(), 100.into())));
    }

    #[test]
    fn evaluate_g_covers_all_rules() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 1)]);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        let origin = Vector::zero(field, 3);
        let axis = canonical_line(&origin, &Vector::unit(field, 3, 0)).unwrap();
        assert_eq!(evaluate_g(cert, &origin, &axis).unwrap().source, GSource::Table);

        // Off-closure line through the unique support point: default rule.
        let diag = canonical_line(&origin, &Vector::from_i64(field, &[1, 1, 1])).unwrap();
        let g = evaluate_g(cert, &origin, &diag).unwrap();
        assert_eq!(g.source, GSource::DefaultRule);
        assert_eq!(&g.value, cert.value());

        // Off-closure line missing the support entirely.
        let far = canonical_line(
            &Vector::from_i64(field, &[0, 1, 2]),
            &Vector::from_i64(field, &[1, 1, 1]),
        )
        .unwrap();
        let g = evaluate_g(cert, &origin, &far).unwrap();
        assert_eq!(g.source, GSource::OffClosure);
        assert!(g.value.is_zero());

        // Queries at non-support points are flagged.
        let elsewhere = Vector::from_i64(field, &[1, 2, 3]);
        let g = evaluate_g(cert, &elsewhere, &axis).unwrap();
        assert_eq!(g.source, GSource::OffSupport);
        assert!(g.value.is_zero());

        // The singleton mixed-tuple identity: one member axis plus two
        // synthetic lines must dominate M(0)^3.
        let axis_g = evaluate_g(cert, &origin, &axis).unwrap().value;
        let v = cert.value();
        assert!(axis_g * v * v >= rat(1));
    }

    #[test]
    fn zero_density_trivial_certificate() {
        let m = PointWeights::new();
        let fac =
            factorise(f5(), 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        assert!(cert.is_trivial());
        assert!(cert.value().is_zero());
        assert!(cert.support().is_empty());
        assert!(verify_certificate(cert, &m, &VerifyScope::Exhaustive).unwrap().passed());

        let mut with_zero = PointWeights::new();
        with_zero.insert(Vector::zero(f5(), 3), rat(0));
        let fac2 =
            factorise(f5(), 3, &with_zero, FactorMode::AllLines, &SolverOptions::default())
                .unwrap();
        assert!(fac2.certificate.is_trivial());
    }

    #[test]
    fn grid2_all_ones_certificate() {
        let field = f7();
        let m = grid_m(field, 2);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        assert_eq!(cert.lines().len(), 28);
        // ||M||_3 = 2 and the all-ones table gives line sums 2, so the
        // normalized constant is 1; the solver must come within a percent.
        assert!(cert.value() >= &rat(2));
        assert!(cert.constant_at_most(&BigRational::new(101.into(), 100.into())));
        let report = verify_certificate(cert, &m, &VerifyScope::Exhaustive).unwrap();
        assert!(report.passed());
        for j in 0..cert.lines().len() {
            assert!(cert.line_sum(j) <= *cert.value());
        }
    }

    #[test]
    fn tampering_is_witnessed() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 1)]);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;

        // Lower one entry: some independent triple through it goes below M^3.
        let mut low = cert.table().to_vec();
        low[0][0] = BigRational::new(1.into(), 2.into());
        let bad = FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            cert.support().to_vec(),
            cert.weights().to_vec(),
            cert.lines().to_vec(),
            low,
            cert.value().clone(),
        )
        .unwrap();
        let report = verify_certificate(&bad, &m, &VerifyScope::Exhaustive).unwrap();
        let Verdict::Fail(w) = report.verdict else { panic!("expected a witness") };
        assert_eq!(w.kind, WitnessKind::TupleBound);
        assert_eq!(w.point.as_ref(), Some(&Vector::zero(field, 3)));
        assert_eq!(w.lines.len(), 3);
        assert!(w.lhs > w.rhs);

        // Raise one entry above the bound: dominance fires first.
        let mut high = cert.table().to_vec();
        high[0][1] = cert.value() * rat(2);
        let bad = FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            cert.support().to_vec(),
            cert.weights().to_vec(),
            cert.lines().to_vec(),
            high,
            cert.value().clone(),
        )
        .unwrap();
        let report = verify_certificate(&bad, &m, &VerifyScope::Exhaustive).unwrap();
        let Verdict::Fail(w) = report.verdict else { panic!("expected a witness") };
        assert_eq!(w.kind, WitnessKind::EntryBound);
    }

    /// A family that is not closed under two-point lines cannot carry an
    /// all-lines certificate: either the closure check or the mixed rule
    /// reports it.
    #[test]
    fn broken_closure_is_witnessed() {
        for field in [f5(), FieldSpec::Rational] {
            let p = Vector::zero(field, 3);
            let q = Vector::from_i64(field, &[1, 0, 0]);
            let pq = canonical_line(&p, &Vector::unit(field, 3, 0)).unwrap();

            // Missing pair line: closure witness.
            let e1 = canonical_line(&p, &Vector::unit(field, 3, 1)).unwrap();
            let cert = FactorCertificate::from_parts(
                field,
                3,
                CertificateScope::AllLines,
                vec![p.clone(), q.clone()],
                vec![rat(1), rat(1)],
                vec![e1.clone()],
                vec![vec![rat(1)], vec![rat(0)]],
                rat(1),
            )
            .unwrap();
            let m: PointWeights =
                [(p.clone(), rat(1)), (q.clone(), rat(1))].into_iter().collect();
            let report = verify_certificate(&cert, &m, &VerifyScope::Exhaustive).unwrap();
            let Verdict::Fail(w) = report.verdict else { panic!("expected a witness") };
            assert_eq!(w.kind, WitnessKind::Closure);
            assert_eq!(w.lines, vec![pq.clone()]);

            // Pair line present but value too small for the all-synthetic
            // class: V^3 < M^3 is caught by the mixed rule.
            let t = BigRational::new(2.into(), 5.into());
            let cert = FactorCertificate::from_parts(
                field,
                3,
                CertificateScope::AllLines,
                vec![p.clone(), q.clone()],
                vec![rat(1), rat(1)],
                vec![pq.clone()],
                vec![vec![t.clone()], vec![t.clone()]],
                &t * rat(2),
            )
            .unwrap();
            let report = verify_certificate(&cert, &m, &VerifyScope::Exhaustive).unwrap();
            let Verdict::Fail(w) = report.verdict else { panic!("expected a witness") };
            assert_eq!(w.kind, WitnessKind::MixedTuple);
            assert_eq!(w.lines.len(), 3, "synthetic completions are reported");
        }
    }

    #[test]
    fn scale_covariance_exact() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 2), (&[1, 2, 3], 5), (&[4, 4, 1], 1)]);
        let tm: PointWeights = m.iter().map(|(p, w)| (p.clone(), w * rat(7))).collect();
        let opts = SolverOptions::default();
        let a = factorise(field, 3, &m, FactorMode::AllLines, &opts).unwrap().certificate;
        let b = factorise(field, 3, &tm, FactorMode::AllLines, &opts).unwrap().certificate;
        assert_eq!(a.normalized(), b.normalized());
        assert_eq!(b.value(), &(a.value() * rat(7)));
        // Same scale-free constant: value_a^3 * norm_b = value_b^3 * norm_a.
        assert_eq!(
            pow_d(a.value(), 3) * b.norm_pow(),
            pow_d(b.value(), 3) * a.norm_pow()
        );
    }

    /// Hoelder chain from a verified certificate to the counting bound
    /// `sum_x M(x) T(f,..,f)(x)^{1/d} <= V * sum_l f(l)`: the per-point step
    /// `M^d T <= (sum_l g f)^d` and the line-sum step are exact; the
    /// assembled statement is checked in floats.
    #[test]
    fn certificate_implies_counting_bound() {
        let field = f7();
        let m = grid_m(field, 2);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        let closure = fac.closure.as_ref().unwrap();
        let family = closure.to_family().unwrap();

        let mut rng = ChaCha20Rng::seed_from_u64(23);
        for _ in 0..5 {
            let f: BTreeMap<Line, BigRational> = cert
                .lines()
                .iter()
                .map(|l| (l.clone(), BigRational::new(rng.gen_range(0..8).into(), 3.into())))
                .collect();
            let t = apply_t_symmetric(&family, &f).unwrap();

            let mut float_lhs = 0.0f64;
            for (i, x) in cert.support().iter().enumerate() {
                let tx = t.get(x).cloned().unwrap_or_else(BigRational::zero);
                let mut inner = BigRational::zero();
                for (j, l) in cert.lines().iter().enumerate() {
                    if l.contains(x) {
                        inner += &cert.table()[i][j] * &f[l];
                    }
                }
                let md_t = pow_d(&cert.weights()[i], 3) * &tx;
                assert!(md_t <= pow_d(&inner, 3), "pointwise Hoelder step fails");
                float_lhs += cert.weights()[i].to_f64().unwrap()
                    * tx.to_f64().unwrap().powf(1.0 / 3.0);
            }
            let mut mass = BigRational::zero();
            let mut weighted = BigRational::zero();
            for (j, l) in cert.lines().iter().enumerate() {
                weighted += cert.line_sum(j) * &f[l];
                mass += &f[l];
            }
            assert!(weighted <= cert.value() * &mass, "line-sum step fails");
            let float_rhs = cert.value().to_f64().unwrap() * mass.to_f64().unwrap();
            assert!(float_lhs <= float_rhs + 1e-9);
        }
    }

    fn axis_families(field: FieldSpec) -> MultiFamily {
        let origin = Vector::zero(field, 3);
        let fams: Vec<LineFamily> = (0..3)
            .map(|i| {
                let mut fam = LineFamily::new(field, 3).unwrap();
                let l = canonical_line(&origin, &Vector::unit(field, 3, i)).unwrap();
                fam.insert(l, 1).unwrap();
                fam
            })
            .collect();
        MultiFamily::new(fams).unwrap()
    }

    #[test]
    fn multijoint_axis_singletons() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 1)]);
        let multi = axis_families(field);
        let out = multijoint_factorise(&m, &multi, &SolverOptions::default()).unwrap();
        let cert = &out.certificate;
        assert_eq!(cert.joint().lines().len(), 3);
        assert!(cert.joint().value() >= &rat(1));
        assert!(cert.joint().value().to_f64().unwrap() < 1.0 + 1e-6);
        let origin = Vector::zero(field, 3);
        for j in 0..3 {
            let l = cert.slot_lines(j)[0].clone();
            let g = cert.slot_entry(j, &origin, &l);
            assert!((g.to_f64().unwrap() - 1.0).abs() < 1e-6);
            // Off-slot lookups vanish even for union members.
            let other = cert.slot_lines((j + 1) % 3)[0].clone();
            assert!(cert.slot_entry(j, &origin, &other).is_zero());
        }
        assert!(cert.verify(&m, &VerifyScope::Exhaustive).unwrap().passed());
    }

    #[test]
    fn multijoint_grid_axis_families() {
        let field = f7();
        let m = grid_m(field, 2);
        // The 12 grid lines of {0,1}^3, split by axis direction.
        let mut fams: Vec<LineFamily> =
            (0..3).map(|_| LineFamily::new(field, 3).unwrap()).collect();
        for a in 0..2 {
            for b in 0..2 {
                for axis in 0..3 {
                    let mut coords = [0i64; 3];
                    let mut k = 0;
                    for t in 0..3 {
                        if t != axis {
                            coords[t] = if k == 0 { a } else { b };
                            k += 1;
                        }
                    }
                    let base = Vector::from_i64(field, &coords);
                    let l = canonical_line(&base, &Vector::unit(field, 3, axis)).unwrap();
                    fams[axis].insert(l, 1).unwrap();
                }
            }
        }
        let multi = MultiFamily::new(fams).unwrap();
        let out = multijoint_factorise(&m, &multi, &SolverOptions::default()).unwrap();
        let cert = &out.certificate;
        assert_eq!(cert.joint().lines().len(), 12);
        for slot in cert.slots() {
            assert_eq!(slot.len(), 4);
        }
        // Each corner meets one line per slot; g = 1 and line sums 2 = ||M||_3.
        assert!(cert.joint().value() >= &rat(2));
        assert!(cert.joint().constant_at_most(&BigRational::new(101.into(), 100.into())));
        assert!(cert.verify(&m, &VerifyScope::Exhaustive).unwrap().passed());
    }

    #[test]
    fn explicit_mode_prunes_non_joints() {
        let field = f5();
        // The far point lies on no family line; its row stays zero and the
        // first conclusion is vacuous there.
        let m = weights(field, &[(&[0, 0, 0], 1), (&[2, 2, 2], 3)]);
        let multi = axis_families(field);
        let fac =
            factorise(field, 3, &m, FactorMode::Explicit(&multi), &SolverOptions::default())
                .unwrap();
        let cert = &fac.certificate;
        assert_eq!(cert.support().len(), 2);
        let far = Vector::from_i64(field, &[2, 2, 2]);
        let i = cert.support_index(&far).unwrap();
        assert!(cert.table()[i].iter().all(|v| v.is_zero()));
        assert!(verify_certificate(cert, &m, &VerifyScope::Exhaustive).unwrap().passed());

        // All support pruned: the zero certificate.
        let lonely = weights(field, &[(&[2, 2, 2], 3)]);
        let fac =
            factorise(field, 3, &lonely, FactorMode::Explicit(&multi), &SolverOptions::default())
                .unwrap();
        assert!(fac.certificate.is_trivial());
        assert!(verify_certificate(&fac.certificate, &lonely, &VerifyScope::Exhaustive)
            .unwrap()
            .passed());
    }

    #[test]
    fn rational_supports_verify_exhaustively() {
        let field = FieldSpec::Rational;
        let half = crate::field::parse_scalar(field, "1/2").unwrap();
        let third = crate::field::parse_scalar(field, "1/3").unwrap();
        let zero = field.zero();
        let supports: Vec<Vec<Vector>> = vec![
            vec![Vector::from_i64(field, &[1, 2, 3])],
            vec![Vector::zero(field, 3), Vector::new(vec![half.clone(), third.clone(), zero.clone()]).unwrap()],
            vec![
                Vector::zero(field, 3),
                Vector::from_i64(field, &[1, 0, 0]),
                Vector::new(vec![half, third, zero]).unwrap(),
            ],
        ];
        for (k, sup) in supports.iter().enumerate() {
            let m: PointWeights =
                sup.iter().enumerate().map(|(i, p)| (p.clone(), rat(i as i64 + 1))).collect();
            let fac =
                factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
            let report =
                verify_certificate(&fac.certificate, &m, &VerifyScope::Exhaustive).unwrap();
            assert!(report.passed(), "support {k} fails");
            assert!(report.checks > 0);
        }
    }

    #[test]
    fn sampled_scope_agrees_on_sound_and_tampered() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 1), (&[1, 2, 3], 2)]);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        let sampled = VerifyScope::Sampled { seed: 9, samples: 200 };
        assert!(verify_certificate(cert, &m, &sampled).unwrap().passed());

        let mut low = cert.table().to_vec();
        for row in &mut low {
            for v in row.iter_mut() {
                if !v.is_zero() {
                    *v /= rat(10);
                }
            }
        }
        let bad = FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            cert.support().to_vec(),
            cert.weights().to_vec(),
            cert.lines().to_vec(),
            low,
            cert.value().clone(),
        )
        .unwrap();
        let report = verify_certificate(&bad, &m, &sampled).unwrap();
        assert!(!report.passed(), "200 samples find a uniformly broken table");
    }

    #[test]
    fn verify_rejects_foreign_density() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 1)]);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let other = weights(field, &[(&[0, 0, 0], 2)]);
        assert!(matches!(
            verify_certificate(&fac.certificate, &other, &VerifyScope::Exhaustive),
            Err(Error::BadCertificate(_))
        ));
        let negative: PointWeights =
            [(Vector::zero(field, 3), rat(-1))].into_iter().collect();
        assert!(matches!(
            verify_certificate(&fac.certificate, &negative, &VerifyScope::Exhaustive),
            Err(Error::NegativeWeight(_))
        ));
    }

    #[test]
    fn from_parts_validations() {
        let field = f5();
        let p = Vector::zero(field, 3);
        let l = canonical_line(&p, &Vector::unit(field, 3, 0)).unwrap();
        let ok = FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            vec![p.clone()],
            vec![rat(1)],
            vec![l.clone()],
            vec![vec![rat(1)]],
            rat(1),
        );
        assert!(ok.is_ok());

        // Negative entry.
        assert!(FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            vec![p.clone()],
            vec![rat(1)],
            vec![l.clone()],
            vec![vec![rat(-1)]],
            rat(1),
        )
        .is_err());

        // Nonzero entry off the incidence.
        let off = canonical_line(
            &Vector::from_i64(field, &[0, 1, 0]),
            &Vector::unit(field, 3, 0),
        )
        .unwrap();
        let mut lines = vec![l.clone(), off];
        lines.sort();
        let bad_col = lines.iter().position(|x| !x.contains(&p)).unwrap();
        let mut row = vec![rat(1), rat(1)];
        row[1 - bad_col] = rat(1);
        assert!(matches!(
            FactorCertificate::from_parts(
                field,
                3,
                CertificateScope::AllLines,
                vec![p.clone()],
                vec![rat(1)],
                lines,
                vec![row],
                rat(1),
            ),
            Err(Error::BadCertificate(_))
        ));

        // Unsorted support.
        let q = Vector::from_i64(field, &[1, 1, 1]);
        assert!(FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            vec![q, p.clone()],
            vec![rat(1), rat(1)],
            vec![l.clone()],
            vec![vec![rat(0)], vec![rat(0)]],
            rat(1),
        )
        .is_err());

        // Zero weight in the support.
        assert!(FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            vec![p],
            vec![rat(0)],
            vec![l],
            vec![vec![rat(0)]],
            rat(1),
        )
        .is_err());
    }

    #[test]
    fn evaluate_g_flags_two_point_off_family_line() {
        let field = f5();
        let p = Vector::zero(field, 3);
        let q = Vector::from_i64(field, &[1, 0, 0]);
        let e1 = canonical_line(&p, &Vector::unit(field, 3, 1)).unwrap();
        // Certificate whose family misses the two-point line pq.
        let cert = FactorCertificate::from_parts(
            field,
            3,
            CertificateScope::AllLines,
            vec![p.clone(), q],
            vec![rat(1), rat(1)],
            vec![e1],
            vec![vec![rat(1)], vec![rat(0)]],
            rat(1),
        )
        .unwrap();
        let pq = canonical_line(&p, &Vector::unit(field, 3, 0)).unwrap();
        assert!(matches!(evaluate_g(&cert, &p, &pq), Err(Error::BadCertificate(_))));
    }

    /// The factorisation norm bookkeeping: `norm_pow = sum M^d` and the
    /// constant-versus-rational comparison square exactly.
    #[test]
    fn norm_and_constant_accessors() {
        let field = f5();
        let m = weights(field, &[(&[0, 0, 0], 1), (&[1, 0, 0], 2)]);
        let fac =
            factorise(field, 3, &m, FactorMode::AllLines, &SolverOptions::default()).unwrap();
        let cert = &fac.certificate;
        assert_eq!(cert.norm_pow(), rat(9));
        let norm = cert.norm().unwrap();
        assert!((norm.to_f64() - 9f64.powf(1.0 / 3.0)).abs() < 1e-12);
        let c = cert.constant().unwrap();
        let v = cert.value().to_f64().unwrap();
        assert!((c.to_f64() - v / 9f64.powf(1.0 / 3.0)).abs() < 1e-9);
    }
}
