//! Finite discrete multilinear duality.
//!
//! An instance packages a weighted point set `X`, axis sets `Y_1, ..., Y_d`
//! carrying weighted `l^1` norms, a nonnegative kernel `K(x, y_1, ..., y_d)`,
//! a density `M`, and an exponent `q >= 1`.  The primal problem finds factor
//! tables `g_j` with `M(x)^d K(x,y) <= g_1(x,y_1) ... g_d(x,y_d)` minimising
//! the largest weighted line sum `sum_x mu(x) g_j(x,y) / w_j(y)`; the dual
//! problem maximises `sum_x mu(x) * inner(x, f)` over tuples `f` in the unit
//! ball of the product norm.  Weak duality holds for every bound pair the
//! solvers emit, because primal bounds come from feasible tables and dual
//! bounds from certified lower bounds on the per-point inner problems.

mod dual;
mod inner;
mod primal;

pub use dual::{dual_value, DualSolution};
pub use inner::{inner_min, InnerSolution};
pub use primal::{primal_solve, FactorTables};

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::rootexpr::RootExpr;

/// Whether a solve treats the kernel multilinearly (one table per axis) or
/// symmetrically (a single table; requires a symmetric instance).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    Multilinear,
    Symmetric,
}

/// One sparse kernel entry `K(x, y_1, ..., y_d) = value`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelEntry {
    pub x: usize,
    pub y: Vec<usize>,
    pub value: BigRational,
}

/// A finite weighted instance of the multilinear duality problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteInstance {
    dim: usize,
    mu: Vec<BigRational>,
    density: Vec<BigRational>,
    axis_weights: Vec<Vec<BigRational>>,
    kernel: Vec<KernelEntry>,
    q: BigRational,
    symmetric: bool,
}

impl DiscreteInstance {
    /// Validates and canonicalises an instance.
    ///
    /// Zero kernel entries are dropped and the rest sorted; points whose
    /// density vanishes and which no kernel entry touches are pruned; a point
    /// with positive density that no kernel entry touches is rejected, since
    /// the factorisation conclusion is empty there.
    pub fn new(
        dim: usize,
        mu: Vec<BigRational>,
        density: Vec<BigRational>,
        axis_weights: Vec<Vec<BigRational>>,
        kernel: Vec<KernelEntry>,
        q: BigRational,
        symmetric: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionTooSmall(dim));
        }
        if mu.len() != density.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), got: density.len() });
        }
        if axis_weights.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: axis_weights.len() });
        }
        for m in &mu {
            if !m.is_positive() {
                return Err(Error::NonPositiveWeight(format!("point weight {m}")));
            }
        }
        for m in &density {
            if m.is_negative() {
                return Err(Error::NegativeWeight(format!("density {m}")));
            }
        }
        for weights in &axis_weights {
            if weights.is_empty() {
                return Err(Error::EmptyWeights);
            }
            for w in weights {
                if !w.is_positive() {
                    return Err(Error::NonPositiveWeight(format!("axis weight {w}")));
                }
            }
        }
        if q < BigRational::one() {
            return Err(Error::BadExponent(format!("exponent q = {q} is below 1")));
        }

        let mut kernel: Vec<KernelEntry> = kernel
            .into_iter()
            .filter(|e| !e.value.is_zero())
            .collect();
        for entry in &kernel {
            if entry.value.is_negative() {
                return Err(Error::NegativeWeight(format!("kernel value {}", entry.value)));
            }
            if entry.x >= mu.len() {
                return Err(Error::Degenerate(format!("kernel point index {} out of range", entry.x)));
            }
            if entry.y.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: entry.y.len() });
            }
            for (j, &y) in entry.y.iter().enumerate() {
                if y >= axis_weights[j].len() {
                    return Err(Error::Degenerate(format!(
                        "kernel axis index {y} out of range on axis {j}"
                    )));
                }
            }
        }
        kernel.sort_by(|a, b| (a.x, &a.y).cmp(&(b.x, &b.y)));
        for pair in kernel.windows(2) {
            if pair[0].x == pair[1].x && pair[0].y == pair[1].y {
                return Err(Error::Degenerate(format!(
                    "duplicate kernel entry at point {} tuple {:?}",
                    pair[0].x, pair[0].y
                )));
            }
        }

        if symmetric {
            check_symmetric(dim, &axis_weights, &kernel)?;
        }

        // Saturation: a positive-density point must meet the kernel.
        let mut touched = vec![false; mu.len()];
        for entry in &kernel {
            touched[entry.x] = true;
        }
        let mut keep = Vec::new();
        for x in 0..mu.len() {
            if touched[x] {
                keep.push(x);
            } else if density[x].is_positive() {
                return Err(Error::SaturationViolated(format!(
                    "point {x} has positive density but the kernel vanishes on every tuple at it"
                )));
            }
        }
        let inst = DiscreteInstance { dim, mu, density, axis_weights, kernel, q, symmetric };
        Ok(inst.restrict_points(&keep))
    }

    /// Convenience constructor from integer data; `q` is given as `num/den`.
    pub fn from_integers(
        dim: usize,
        mu: &[i64],
        density: &[i64],
        axis_weights: &[&[i64]],
        kernel: &[(usize, &[usize], i64)],
        q: (i64, i64),
        symmetric: bool,
    ) -> Result<Self> {
        let rat = |n: i64| BigRational::from_integer(n.into());
        DiscreteInstance::new(
            dim,
            mu.iter().copied().map(rat).collect(),
            density.iter().copied().map(rat).collect(),
            axis_weights.iter().map(|ws| ws.iter().copied().map(rat).collect()).collect(),
            kernel
                .iter()
                .map(|&(x, y, v)| KernelEntry { x, y: y.to_vec(), value: rat(v) })
                .collect(),
            BigRational::new(q.0.into(), q.1.into()),
            symmetric,
        )
    }

    /// Keeps the points listed in `keep` (strictly increasing) and drops the
    /// kernel entries at all others.
    fn restrict_points(&self, keep: &[usize]) -> DiscreteInstance {
        let mut index = vec![usize::MAX; self.mu.len()];
        for (new, &old) in keep.iter().enumerate() {
            index[old] = new;
        }
        DiscreteInstance {
            dim: self.dim,
            mu: keep.iter().map(|&x| self.mu[x].clone()).collect(),
            density: keep.iter().map(|&x| self.density[x].clone()).collect(),
            axis_weights: self.axis_weights.clone(),
            kernel: self
                .kernel
                .iter()
                .filter(|e| index[e.x] != usize::MAX)
                .map(|e| KernelEntry { x: index[e.x], y: e.y.clone(), value: e.value.clone() })
                .collect(),
            q: self.q.clone(),
            symmetric: self.symmetric,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[BigRational] {
        &self.mu
    }

    pub fn density(&self) -> &[BigRational] {
        &self.density
    }

    pub fn axis_weights(&self) -> &[Vec<BigRational>] {
        &self.axis_weights
    }

    pub fn kernel(&self) -> &[KernelEntry] {
        &self.kernel
    }

    pub fn q(&self) -> &BigRational {
        &self.q
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// Scales every point weight by `t > 0`.
    pub fn scale_mu(&self, t: &BigRational) -> Result<DiscreteInstance> {
        if !t.is_positive() {
            return Err(Error::NonPositiveWeight(format!("scale {t}")));
        }
        let mut out = self.clone();
        for m in &mut out.mu {
            *m *= t;
        }
        Ok(out)
    }

    /// Effective constraint constant `M(x)^d K(x,y)` of a kernel entry.
    pub fn constraint_constant(&self, entry: &KernelEntry) -> BigRational {
        let mut c = entry.value.clone();
        let m = &self.density[entry.x];
        for _ in 0..self.dim {
            c *= m;
        }
        c
    }

    fn blocks(&self, mode: SolveMode) -> Result<usize> {
        match mode {
            SolveMode::Multilinear => Ok(self.dim),
            SolveMode::Symmetric => {
                if !self.symmetric {
                    Err(Error::NotSymmetric)
                } else {
                    Ok(1)
                }
            }
        }
    }

    fn require_q1(&self) -> Result<()> {
        if self.q != BigRational::one() {
            return Err(Error::BadExponent(format!(
                "solver requires q = 1, got q = {}; apply the q -> 1 reduction first",
                self.q
            )));
        }
        Ok(())
    }
}

fn check_symmetric(
    dim: usize,
    axis_weights: &[Vec<BigRational>],
    kernel: &[KernelEntry],
) -> Result<()> {
    for weights in &axis_weights[1..] {
        if weights != &axis_weights[0] {
            return Err(Error::NotSymmetric);
        }
    }
    let table: std::collections::BTreeMap<(usize, &[usize]), &BigRational> =
        kernel.iter().map(|e| ((e.x, e.y.as_slice()), &e.value)).collect();
    let mut perm: Vec<usize> = (0..dim).collect();
    for entry in kernel {
        loop {
            let image: Vec<usize> = perm.iter().map(|&j| entry.y[j]).collect();
            match table.get(&(entry.x, image.as_slice())) {
                Some(v) if **v == entry.value => {}
                _ => return Err(Error::NotSymmetric),
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
    }
    Ok(())
}

/// Advances `perm` to the next lexicographic permutation, wrapping to the
/// identity and returning false at the end.
fn next_permutation(perm: &mut [usize]) -> bool {
    let n = perm.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && perm[i - 1] >= perm[i] {
        i -= 1;
    }
    if i == 0 {
        perm.sort_unstable();
        return false;
    }
    let mut j = n - 1;
    while perm[j] <= perm[i - 1] {
        j -= 1;
    }
    perm.swap(i - 1, j);
    perm[i..].reverse();
    true
}

/// Deterministic solver parameters.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Iteration cap for the primal subgradient phase.
    pub max_iterations: usize,
    /// Relative tolerance on the primal/dual agreement.
    pub rel_tol: f64,
    /// Subgradient step scale: step `c / sqrt(t)`.
    pub step_c: f64,
    /// Iteration cap for the dual ascent over the unit ball.
    pub dual_iterations: usize,
    /// Iteration cap per inner problem.
    pub inner_iterations: usize,
    /// Relative gap at which an inner solve stops.
    pub inner_tol: f64,
    /// Rounds of alternating primal/dual polishing after the first pass.
    pub refine_rounds: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 100_000,
            rel_tol: 1e-6,
            step_c: 2.0,
            dual_iterations: 4_000,
            inner_iterations: 400,
            inner_tol: 1e-12,
            refine_rounds: 8,
        }
    }
}

/// Joint primal/dual outcome.  The traces list, per iteration, the best
/// certified bound so far, so `dual_trace[t] <= primal_trace[t]` throughout.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub lifted_exact: bool,
    pub primal_trace: Vec<f64>,
    pub dual_trace: Vec<f64>,
}

/// An exact norm when the exponent allows one, otherwise a float.
#[derive(Debug, Clone)]
pub enum NormValue {
    Exact(RootExpr),
    Approx(f64),
}

impl NormValue {
    pub fn as_f64(&self) -> f64 {
        match self {
            NormValue::Exact(r) => r.to_f64(),
            NormValue::Approx(v) => *v,
        }
    }
}

/// Result of the reduction to exponent 1: the reduced instance, the norm
/// `||M||_{q'}` the original conclusion is measured against, and the map
/// from reduced point indices back to the original ones.
#[derive(Debug, Clone)]
pub struct Reduction {
    pub instance: DiscreteInstance,
    pub scale: NormValue,
    pub kept: Vec<usize>,
}

/// Replaces `d mu` by `M d mu`, sets `M = 1` and `q = 1`.
///
/// The reduced instance keeps rational data by leaving its weights
/// unnormalised; `scale` carries `||M||_{q'}` so that a value `V` for the
/// reduced instance certifies `V / scale` per unit of the original norm.
/// Points where `M` vanishes drop out (their constraints are vacuous and
/// their new weight is zero).
pub fn reduce_to_q1(inst: &DiscreteInstance) -> Result<Reduction> {
    if inst.density.iter().all(|m| m.is_zero()) {
        return Err(Error::Degenerate("vacuous instance: the density vanishes identically".into()));
    }
    let scale = density_norm(inst)?;
    let kept: Vec<usize> =
        (0..inst.points()).filter(|&x| inst.density[x].is_positive()).collect();
    let mut reduced = inst.restrict_points(&kept);
    for (i, &x) in kept.iter().enumerate() {
        reduced.mu[i] = &inst.mu[x] * &inst.density[x];
        reduced.density[i] = BigRational::one();
    }
    reduced.q = BigRational::one();
    Ok(Reduction { instance: reduced, scale, kept })
}

/// `||M||_{L^{q'}(d mu)}` where `1/q + 1/q' = 1`; the supremum norm when
/// `q = 1`.
fn density_norm(inst: &DiscreteInstance) -> Result<NormValue> {
    if inst.q.is_one() {
        let max = inst.density.iter().max().expect("nonempty instance").clone();
        return Ok(NormValue::Exact(RootExpr::from_rational(max)?));
    }
    let q_prime = &inst.q / (&inst.q - BigRational::one());
    if q_prime.is_integer() {
        let e = q_prime.to_integer().to_u32().ok_or_else(|| {
            Error::BadExponent(format!("conjugate exponent {q_prime} too large"))
        })?;
        let mut sum = BigRational::zero();
        for (m, mu) in inst.density.iter().zip(&inst.mu) {
            let mut p = mu.clone();
            for _ in 0..e {
                p *= m;
            }
            sum += p;
        }
        return Ok(NormValue::Exact(RootExpr::new(sum, 1, e)?));
    }
    let qp = q_prime.to_f64().ok_or_else(|| {
        Error::BadExponent(format!("conjugate exponent {q_prime} out of float range"))
    })?;
    let mut sum = 0.0;
    for (m, mu) in inst.density.iter().zip(&inst.mu) {
        sum += mu.to_f64().unwrap_or(f64::INFINITY)
            * m.to_f64().unwrap_or(f64::INFINITY).powf(qp);
    }
    Ok(NormValue::Approx(sum.powf(1.0 / qp)))
}

/// Transfers tables for the reduced instance back to the original one:
/// `g_j(x, y) = M(x) * g~_j(x, y)`, zero where `M` vanishes.  Feasibility
/// `M^d K <= prod g_j` and the weighted line sums are preserved exactly.
pub fn map_tables_back(
    original: &DiscreteInstance,
    reduction: &Reduction,
    tables: &FactorTables,
) -> Result<FactorTables> {
    let blocks = tables.tables.len();
    let mut out: Vec<Vec<Vec<BigRational>>> = Vec::with_capacity(blocks);
    for (b, table) in tables.tables.iter().enumerate() {
        let cols = reduction.instance.axis_weights[if blocks == 1 { 0 } else { b }].len();
        let mut rows = vec![vec![BigRational::zero(); cols]; original.points()];
        for (i, &x) in reduction.kept.iter().enumerate() {
            for y in 0..cols {
                rows[x][y] = &original.density[x] * &table[i][y];
            }
        }
        out.push(rows);
    }
    FactorTables::with_tables(original, tables.mode, out)
}

/// Relative primal/dual disagreement `|primal - dual| / max(primal, dual, 1)`.
pub fn minimax_gap(inst: &DiscreteInstance, mode: SolveMode, opts: &SolverOptions) -> Result<f64> {
    let (_, report) = solve(inst, mode, opts)?;
    Ok(report.gap)
}

/// Runs the primal solver and the dual ascent against each other until the
/// certified bounds agree to tolerance, then lifts the primal tables to exact
/// rational feasibility.
pub fn solve(
    inst: &DiscreteInstance,
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<(FactorTables, SolveReport)> {
    inst.require_q1()?;
    let blocks = inst.blocks(mode)?;
    let numeric = Numeric::build(inst, mode, blocks);

    let mut primal = primal::PrimalState::new(inst, &numeric, mode, opts);
    primal.run(opts.max_iterations, primal::StepRule::SqrtT(opts.step_c));
    let mut primal_trace = primal.trace().to_vec();

    let mut dual_best = 0.0f64;
    let mut dual_trace: Vec<f64> = Vec::new();

    let sol = dual::ascend(inst, &numeric, opts, Some(primal.best_value()), dual_best, None)?;
    dual_trace.extend_from_slice(&sol.trace);
    dual_best = dual_best.max(sol.value);
    let mut dual_f = sol.f;

    for _ in 0..opts.refine_rounds {
        let scale = primal.best_value().abs().max(dual_best.abs()).max(1.0);
        if primal.best_value() - dual_best <= 0.1 * opts.rel_tol * scale {
            break;
        }
        primal.run(opts.max_iterations / 10, primal::StepRule::Polyak(dual_best));
        primal_trace.extend_from_slice(&primal.trace()[primal_trace.len()..]);
        let sol = dual::ascend(
            inst,
            &numeric,
            opts,
            Some(primal.best_value()),
            dual_best,
            Some(&dual_f),
        )?;
        dual_trace.extend_from_slice(&sol.trace);
        dual_best = dual_best.max(sol.value);
        dual_f = sol.f;
    }

    primal.polish();
    primal_trace.extend_from_slice(&primal.trace()[primal_trace.len()..]);

    let tables = primal.lift(inst)?;
    let primal_exact = tables.value_f64();
    let dual_final = dual_best;
    let gap = (primal_exact - dual_final).abs() / primal_exact.abs().max(dual_final.abs()).max(1.0);

    // Per-iteration certified bound pairs: each entry is the best bound so
    // far, extended to a common length with the final values.
    let len = primal_trace.len().max(dual_trace.len()).max(1);
    let mut best = f64::INFINITY;
    for v in &mut primal_trace {
        best = best.min(*v);
        *v = best;
    }
    primal_trace.resize(len, if best.is_finite() { best } else { primal_exact });
    let mut best = 0.0f64;
    for v in &mut dual_trace {
        best = best.max(*v);
        *v = best;
    }
    dual_trace.resize(len, best);

    let iterations = primal.iterations();
    let report = SolveReport {
        primal: primal_exact,
        dual: dual_final,
        gap,
        iterations,
        tolerance: opts.rel_tol,
        lifted_exact: true,
        primal_trace,
        dual_trace,
    };
    Ok((tables, report))
}

/// Symmetrised factor table, stored as the exact product `G = g_1 ... g_d`
/// so that the geometric mean `g = G^{1/d}` never leaves closed form.
#[derive(Debug, Clone)]
pub struct SymmetricTable {
    dim: usize,
    pow: Vec<Vec<BigRational>>,
}

impl SymmetricTable {
    /// `g(x, y)` as an exact d-th root.
    pub fn entry(&self, x: usize, y: usize) -> Result<RootExpr> {
        RootExpr::new(self.pow[x][y].clone(), 1, self.dim as u32)
    }

    /// `g(x, y)^d`, the stored rational.
    pub fn entry_pow(&self, x: usize, y: usize) -> &BigRational {
        &self.pow[x][y]
    }

    /// Largest weighted line sum `sum_x mu(x) g(x,y) / w(y)`.
    pub fn value_f64(&self, inst: &DiscreteInstance) -> f64 {
        let d = 1.0 / self.dim as f64;
        let mut best = 0.0f64;
        for (y, w) in inst.axis_weights[0].iter().enumerate() {
            let mut sum = 0.0;
            for (x, mu) in inst.mu.iter().enumerate() {
                sum += mu.to_f64().unwrap() * self.pow[x][y].to_f64().unwrap().powf(d);
            }
            best = best.max(sum / w.to_f64().unwrap());
        }
        best
    }

    /// Exact feasibility: `(M^d K)^d <= prod_j G(x, y_j)` for every kernel
    /// entry, which is the d-th power of `M^d K <= prod_j g(x, y_j)`.
    pub fn feasible_exact(&self, inst: &DiscreteInstance) -> Result<()> {
        for entry in &inst.kernel {
            let c = inst.constraint_constant(entry);
            let mut lhs = BigRational::one();
            for _ in 0..inst.dim {
                lhs *= &c;
            }
            let mut rhs = BigRational::one();
            for &y in &entry.y {
                rhs *= &self.pow[entry.x][y];
            }
            if lhs > rhs {
                return Err(Error::BadCertificate(format!(
                    "symmetrised table infeasible at point {} tuple {:?}",
                    entry.x, entry.y
                )));
            }
        }
        Ok(())
    }
}

/// Geometric mean of multilinear tables on a symmetric instance.
///
/// Feasibility survives because the kernel is permutation-invariant: taking
/// the product of the tuple constraint over all cyclic shifts of `y` turns
/// `prod_j g_j(x, y_j)` into `prod_j G(x, y_j)^{1/d}`.  The achieved value
/// does not increase, by Holder's inequality across the point sum.
pub fn symmetrize_tables(
    inst: &DiscreteInstance,
    tables: &FactorTables,
) -> Result<SymmetricTable> {
    if !inst.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if tables.mode != SolveMode::Multilinear || tables.tables.len() != inst.dim {
        return Err(Error::BadCertificate(
            "symmetrisation expects one table per axis of a symmetric instance".into(),
        ));
    }
    let cols = inst.axis_weights[0].len();
    let mut pow = vec![vec![BigRational::one(); cols]; inst.points()];
    for table in &tables.tables {
        for (x, row) in table.iter().enumerate() {
            for (y, v) in row.iter().enumerate() {
                pow[x][y] *= v;
            }
        }
    }
    Ok(SymmetricTable { dim: inst.dim, pow })
}

/// Diagonal and off-diagonal norm constants of a symmetric form, in both the
/// root convention of the norm inequality and the form convention in which
/// the sharp two-point example has constants 1/2 and 1.
#[derive(Debug, Clone)]
pub struct DiagOffdiag {
    /// `sup { ||T(f,...,f)^{1/d}||_q : ||f|| <= 1 }`.
    pub diag_root: f64,
    /// `sup { ||T(f_1,...,f_d)^{1/d}||_q : ||f_j|| <= 1 }`.
    pub offdiag_root: f64,
    /// `diag_root^d`; exact when the instance is a single unweighted point.
    pub diag_form: f64,
    /// `offdiag_root^d`; exact under the same condition.
    pub offdiag_form: f64,
    pub diag_form_exact: Option<BigRational>,
    pub offdiag_form_exact: Option<BigRational>,
}

/// Computes the diagonal and off-diagonal constants of a symmetric instance
/// with unit density.
///
/// The off-diagonal supremum is multilinear in each argument, hence attained
/// at vertices of the unit balls; enumerating scaled indicator tuples is
/// exact whenever the point set is a singleton.  The diagonal supremum is a
/// homogeneous form maximisation over the weighted simplex: exact support
/// enumeration for bilinear singleton instances, monotone multiplicative
/// ascent from a deterministic family of starts otherwise.  The root-scale
/// ordering `diag <= offdiag <= d * diag` is checked before returning.
pub fn diag_offdiag_constants(inst: &DiscreteInstance) -> Result<DiagOffdiag> {
    if !inst.is_symmetric() {
        return Err(Error::NotSymmetric);
    }
    if inst.density.iter().any(|m| !m.is_one()) {
        return Err(Error::Degenerate(
            "diagonal/off-diagonal constants expect unit density".into(),
        ));
    }
    let singleton = inst.points() == 1 && inst.mu[0].is_one();
    let d = inst.dim;
    let q = inst.q.to_f64().unwrap();

    // Off-diagonal: evaluate every vertex tuple.
    let mut off_root = 0.0f64;
    let mut off_exact: Option<BigRational> = None;
    {
        let mut best_exact = BigRational::zero();
        for entry in &inst.kernel {
            let mut wprod = BigRational::one();
            for (j, &y) in entry.y.iter().enumerate() {
                wprod *= &inst.axis_weights[j][y];
            }
            // All kernel mass at the same tuple from every point.
            let mut sum = 0.0;
            for other in &inst.kernel {
                if other.y == entry.y {
                    sum += inst.mu[other.x].to_f64().unwrap()
                        * other.value.to_f64().unwrap().powf(q / d as f64);
                }
            }
            let val = sum.powf(1.0 / q) / wprod.to_f64().unwrap().powf(1.0 / d as f64);
            off_root = off_root.max(val);
            if singleton {
                let form = &entry.value / &wprod;
                if form > best_exact {
                    best_exact = form;
                }
            }
        }
        if singleton {
            off_root = best_exact.to_f64().unwrap().powf(1.0 / d as f64);
            off_exact = Some(best_exact);
        }
    }

    // Diagonal: maximise over the weighted simplex.  For a singleton the
    // maximised quantity is the form itself, otherwise the root-scale norm.
    let (diag_max, diag_exact) = diag_form_max(inst, singleton)?;
    let diag_root = if singleton { diag_max.powf(1.0 / d as f64) } else { diag_max };

    let slack = 1e-9 * (1.0 + diag_root.abs() + off_root.abs());
    if !(diag_root <= off_root + slack && off_root <= d as f64 * diag_root + slack) {
        return Err(Error::NonConvergence(format!(
            "diagonal/off-diagonal ordering failed: diag {diag_root}, offdiag {off_root}, d {d}"
        )));
    }

    Ok(DiagOffdiag {
        diag_root,
        offdiag_root: off_root,
        diag_form: diag_root.powi(d as i32),
        offdiag_form: off_root.powi(d as i32),
        diag_form_exact: diag_exact,
        offdiag_form_exact: off_exact,
    })
}

/// Maximum of `sum_y K(y) f(y_1) ... f(y_d)` over the weighted simplex for a
/// singleton instance, or of the full q-norm expression otherwise.
fn diag_form_max(
    inst: &DiscreteInstance,
    singleton: bool,
) -> Result<(f64, Option<BigRational>)> {
    let d = inst.dim;
    if singleton && d == 2 {
        return stqp_exact(inst).map(|v| (v.to_f64().unwrap(), Some(v)));
    }
    // Monotone multiplicative ascent on the form with nonnegative
    // coefficients, from the uniform point and every vertex.
    let n = inst.axis_weights[0].len();
    let w: Vec<f64> = inst.axis_weights[0].iter().map(|v| v.to_f64().unwrap()).collect();
    let q = inst.q.to_f64().unwrap();
    let mu: Vec<f64> = inst.mu.iter().map(|v| v.to_f64().unwrap()).collect();
    let eval = |f: &[f64]| -> f64 {
        let mut per_x = vec![0.0; inst.points()];
        for e in &inst.kernel {
            let mut t = e.value.to_f64().unwrap();
            for &y in &e.y {
                t *= f[y];
            }
            per_x[e.x] += t;
        }
        if singleton {
            per_x[0]
        } else {
            let mut s = 0.0;
            for (x, v) in per_x.iter().enumerate() {
                s += mu[x] * v.powf(q / d as f64);
            }
            s.powf(1.0 / q)
        }
    };
    let grad = |f: &[f64], g: &mut [f64]| {
        g.iter_mut().for_each(|v| *v = 0.0);
        for e in &inst.kernel {
            let base = e.value.to_f64().unwrap();
            for (slot, &y) in e.y.iter().enumerate() {
                let mut t = base;
                for (s2, &y2) in e.y.iter().enumerate() {
                    if s2 != slot {
                        t *= f[y2];
                    }
                }
                g[y] += t * if singleton { 1.0 } else { mu[e.x] } ;
            }
        }
    };
    let total_w: f64 = w.iter().sum();
    // Uniform in the normalised variable plus each vertex, slightly mixed in.
    let mut starts: Vec<Vec<f64>> = vec![w.iter().map(|wi| 1.0 / (n as f64 * wi)).collect()];
    for y in 0..n {
        let mut f = vec![1e-6; n];
        f[y] = (1.0 - 1e-6 * (total_w - w[y])) / w[y];
        starts.push(f);
    }
    let mut best = 0.0f64;
    for mut f in starts {
        let mut g = vec![0.0; n];
        for _ in 0..20_000 {
            grad(&f, &mut g);
            // Multiplicative update in the simplex variable h = w f.
            let mut num: Vec<f64> = (0..n).map(|y| w[y] * f[y] * (g[y] / w[y]).max(0.0)).collect();
            let z: f64 = num.iter().sum();
            if z <= 0.0 {
                break;
            }
            for v in &mut num {
                *v /= z;
            }
            let mut delta = 0.0f64;
            for y in 0..n {
                let nf = num[y] / w[y];
                delta = delta.max((nf - f[y]).abs());
                f[y] = nf;
            }
            if delta < 1e-15 {
                break;
            }
        }
        best = best.max(eval(&f));
    }
    Ok((best, None))
}

/// Exact maximisation of a bilinear form over the weighted simplex by
/// enumerating supports of interior critical points together with all
/// vertices.
fn stqp_exact(inst: &DiscreteInstance) -> Result<BigRational> {
    let n = inst.axis_weights[0].len();
    let w = &inst.axis_weights[0];
    let mut k = vec![vec![BigRational::zero(); n]; n];
    for e in &inst.kernel {
        k[e.y[0]][e.y[1]] = e.value.clone();
    }
    let form = |f: &[BigRational]| -> BigRational {
        let mut s = BigRational::zero();
        for a in 0..n {
            if f[a].is_zero() {
                continue;
            }
            for b in 0..n {
                if !f[b].is_zero() {
                    s += &k[a][b] * &f[a] * &f[b];
                }
            }
        }
        s
    };
    let mut best = BigRational::zero();
    for mask in 1u32..(1 << n) {
        let support: Vec<usize> = (0..n).filter(|y| mask >> y & 1 == 1).collect();
        let m = support.len();
        if m == 1 {
            let y = support[0];
            let mut f = vec![BigRational::zero(); n];
            f[y] = BigRational::one() / &w[y];
            let v = form(&f);
            if v > best {
                best = v;
            }
            continue;
        }
        // Interior critical point: 2 K_S f = lambda w_S, w . f = 1.  Solve
        // K_S u = w_S; if a solution exists, scale it onto the simplex.
        let mut a: Vec<Vec<BigRational>> = support
            .iter()
            .map(|&r| {
                let mut row: Vec<BigRational> = support.iter().map(|&c| k[r][c].clone()).collect();
                row.push(w[r].clone());
                row
            })
            .collect();
        if let Some(u) = solve_rational(&mut a, m) {
            if u.iter().all(|v| !v.is_negative()) {
                let mut denom = BigRational::zero();
                for (i, &y) in support.iter().enumerate() {
                    denom += &w[y] * &u[i];
                }
                if denom.is_positive() {
                    let mut f = vec![BigRational::zero(); n];
                    for (i, &y) in support.iter().enumerate() {
                        f[y] = &u[i] / &denom;
                    }
                    let v = form(&f);
                    if v > best {
                        best = v;
                    }
                }
            }
        }
    }
    Ok(best)
}

/// Gaussian elimination on an augmented `m x (m+1)` rational system; returns
/// the solution when the matrix is nonsingular.
fn solve_rational(a: &mut [Vec<BigRational>], m: usize) -> Option<Vec<BigRational>> {
    for col in 0..m {
        let pivot = (col..m).find(|&r| !a[r][col].is_zero())?;
        a.swap(col, pivot);
        let p = a[col][col].clone();
        for v in &mut a[col] {
            *v /= &p;
        }
        for r in 0..m {
            if r != col && !a[r][col].is_zero() {
                let factor = a[r][col].clone();
                for c in 0..=m {
                    let delta = &factor * &a[col][c];
                    a[r][c] -= delta;
                }
            }
        }
    }
    Some((0..m).map(|r| a[r][m].clone()).collect())
}

/// Shared numeric view of an instance for the iterative solvers.
pub(crate) struct Numeric {
    pub d: usize,
    pub blocks: usize,
    pub mu: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub rows: Vec<NumRow>,
    pub rows_by_x: Vec<Vec<usize>>,
}

/// One active constraint `prod over coords of S_block(y)^mult >= c` with
/// `c = M(x)^d K(x, y) > 0`.
pub(crate) struct NumRow {
    pub x: usize,
    pub coords: Vec<(usize, usize, u32)>,
    pub c: f64,
    pub ln_c: f64,
    pub c_exact: BigRational,
}

impl Numeric {
    pub(crate) fn build(inst: &DiscreteInstance, mode: SolveMode, blocks: usize) -> Numeric {
        let w: Vec<Vec<f64>> = (0..blocks)
            .map(|b| inst.axis_weights[b].iter().map(|v| v.to_f64().unwrap()).collect())
            .collect();
        let mut rows = Vec::new();
        let mut rows_by_x = vec![Vec::new(); inst.points()];
        // In symmetric mode the d! orderings of a kernel tuple aggregate to
        // the same (y, multiplicity) profile, hence the same constraint; one
        // copy per point suffices.
        let mut seen: std::collections::BTreeSet<(Vec<(usize, usize, u32)>, BigRational)> =
            std::collections::BTreeSet::new();
        let mut seen_x = usize::MAX;
        for entry in &inst.kernel {
            let c_exact = inst.constraint_constant(entry);
            if c_exact.is_zero() {
                continue;
            }
            let coords: Vec<(usize, usize, u32)> = match mode {
                SolveMode::Multilinear => {
                    entry.y.iter().enumerate().map(|(j, &y)| (j, y, 1)).collect()
                }
                SolveMode::Symmetric => {
                    let mut counts = std::collections::BTreeMap::new();
                    for &y in &entry.y {
                        *counts.entry(y).or_insert(0u32) += 1;
                    }
                    counts.into_iter().map(|(y, m)| (0, y, m)).collect()
                }
            };
            if mode == SolveMode::Symmetric {
                if entry.x != seen_x {
                    seen.clear();
                    seen_x = entry.x;
                }
                if !seen.insert((coords.clone(), c_exact.clone())) {
                    continue;
                }
            }
            let c = c_exact.to_f64().unwrap();
            rows_by_x[entry.x].push(rows.len());
            rows.push(NumRow { x: entry.x, coords, c, ln_c: c.ln(), c_exact });
        }
        Numeric {
            d: inst.dim,
            blocks,
            mu: inst.mu.iter().map(|v| v.to_f64().unwrap()).collect(),
            w,
            rows,
            rows_by_x,
        }
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;

    /// One point, three singleton axes, unit kernel; optimal value 1.
    pub(crate) fn axes3() -> DiscreteInstance {
        DiscreteInstance::from_integers(
            3,
            &[1],
            &[1],
            &[&[1], &[1], &[1]],
            &[(0, &[0, 0, 0], 1)],
            (1, 1),
            true,
        )
        .unwrap()
    }

    /// One point, bilinear kernel supported off the diagonal (the sharp
    /// two-point example); optimal value 1.
    pub(crate) fn exchange2() -> DiscreteInstance {
        DiscreteInstance::from_integers(
            2,
            &[1],
            &[1],
            &[&[1, 1], &[1, 1]],
            &[(0, &[0, 1], 1), (0, &[1, 0], 1)],
            (1, 1),
            true,
        )
        .unwrap()
    }

    /// One point, the squared constraint `S(0)^2 >= 4`.
    pub(crate) fn squared4() -> DiscreteInstance {
        DiscreteInstance::from_integers(
            2,
            &[1],
            &[1],
            &[&[1, 1], &[1, 1]],
            &[(0, &[0, 0], 4)],
            (1, 1),
            true,
        )
        .unwrap()
    }

    /// Axis-parallel lines through the 2 x 2 x 2 grid: one tuple per point,
    /// unit weights; optimal value 2 (each line meets two points).
    pub(crate) fn grid2() -> DiscreteInstance {
        let tuples: Vec<(usize, Vec<usize>)> = (0..8usize)
            .map(|x| {
                let (a, b, c) = (x & 1, (x >> 1) & 1, (x >> 2) & 1);
                (x, vec![b + 2 * c, a + 2 * c, a + 2 * b])
            })
            .collect();
        let entries: Vec<(usize, &[usize], i64)> =
            tuples.iter().map(|(x, y)| (*x, y.as_slice(), 1)).collect();
        DiscreteInstance::from_integers(
            3,
            &[1; 8],
            &[1; 8],
            &[&[1; 4], &[1; 4], &[1; 4]],
            &entries,
            (1, 1),
            false,
        )
        .unwrap()
    }
}
