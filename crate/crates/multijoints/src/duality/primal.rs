//! Primal solver.
//!
//! Minimises the largest weighted line sum `sum_x mu(x) g_j(x,y) / w_j(y)`
//! over tables satisfying `M(x)^d K(x,y) <= prod_j g_j(x, y_j)`.  The search
//! runs in the log domain: a subgradient step on the soft objective followed
//! by cyclic block projections that raise the coordinates of each violated
//! tuple constraint equally.  Entries outside every constraint stay at zero.
//! The final table is lifted to exact rational feasibility by a single
//! rational scaling that covers the worst residual.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::duality::{DiscreteInstance, Numeric, SolveMode, SolveReport, SolverOptions};
use crate::error::{Error, Result};

/// Feasible factor tables with their exact achieved value.
#[derive(Debug, Clone)]
pub struct FactorTables {
    pub mode: SolveMode,
    /// One table per axis (multilinear) or a single table (symmetric),
    /// indexed `[block][x][y]`.
    pub tables: Vec<Vec<Vec<BigRational>>>,
    /// Largest weighted line sum.
    pub value: BigRational,
}

impl FactorTables {
    /// Wraps externally produced tables, checking shapes and recomputing the
    /// exact value.  Feasibility is not checked here; see `feasible_exact`.
    pub fn with_tables(
        inst: &DiscreteInstance,
        mode: SolveMode,
        tables: Vec<Vec<Vec<BigRational>>>,
    ) -> Result<FactorTables> {
        let blocks = match mode {
            SolveMode::Multilinear => inst.dim(),
            SolveMode::Symmetric => 1,
        };
        if tables.len() != blocks {
            return Err(Error::DimensionMismatch { expected: blocks, got: tables.len() });
        }
        for (b, table) in tables.iter().enumerate() {
            if table.len() != inst.points() {
                return Err(Error::DimensionMismatch { expected: inst.points(), got: table.len() });
            }
            let cols = inst.axis_weights()[if blocks == 1 { 0 } else { b }].len();
            for row in table {
                if row.len() != cols {
                    return Err(Error::DimensionMismatch { expected: cols, got: row.len() });
                }
                if row.iter().any(|v| v.is_negative()) {
                    return Err(Error::NegativeWeight("factor table entry".into()));
                }
            }
        }
        let mut out = FactorTables { mode, tables, value: BigRational::zero() };
        out.value = out.compute_value(inst);
        Ok(out)
    }

    fn compute_value(&self, inst: &DiscreteInstance) -> BigRational {
        let mut best = BigRational::zero();
        for (b, table) in self.tables.iter().enumerate() {
            let weights = &inst.axis_weights()[if self.tables.len() == 1 { 0 } else { b }];
            for (y, w) in weights.iter().enumerate() {
                let mut sum = BigRational::zero();
                for (x, mu) in inst.mu().iter().enumerate() {
                    sum += mu * &table[x][y];
                }
                let ratio = sum / w;
                if ratio > best {
                    best = ratio;
                }
            }
        }
        best
    }

    /// Weighted line sums `sum_x mu(x) g_b(x,y) / w_b(y)`.
    pub fn line_ratios(&self, inst: &DiscreteInstance) -> Vec<Vec<BigRational>> {
        self.tables
            .iter()
            .enumerate()
            .map(|(b, table)| {
                let weights = &inst.axis_weights()[if self.tables.len() == 1 { 0 } else { b }];
                weights
                    .iter()
                    .enumerate()
                    .map(|(y, w)| {
                        let mut sum = BigRational::zero();
                        for (x, mu) in inst.mu().iter().enumerate() {
                            sum += mu * &table[x][y];
                        }
                        sum / w
                    })
                    .collect()
            })
            .collect()
    }

    /// Exact feasibility of every tuple constraint.
    pub fn feasible_exact(&self, inst: &DiscreteInstance) -> Result<()> {
        for entry in inst.kernel() {
            let c = inst.constraint_constant(entry);
            if c.is_zero() {
                continue;
            }
            let mut prod = BigRational::one();
            for (j, &y) in entry.y.iter().enumerate() {
                let b = if self.tables.len() == 1 { 0 } else { j };
                prod *= &self.tables[b][entry.x][y];
            }
            if prod < c {
                return Err(Error::BadCertificate(format!(
                    "tuple constraint violated at point {} tuple {:?}: {} < {}",
                    entry.x, entry.y, prod, c
                )));
            }
        }
        Ok(())
    }

    pub fn value_f64(&self) -> f64 {
        self.value.to_f64().unwrap_or(f64::INFINITY)
    }
}

/// Step-size rule for the subgradient phase: `c / sqrt(t)`, or Polyak steps
/// towards a known certified target value.
pub(crate) enum StepRule {
    SqrtT(f64),
    Polyak(f64),
}

pub(crate) struct PrimalState<'a> {
    numeric: &'a Numeric,
    mode: SolveMode,
    rel_tol: f64,
    /// Variable cells `(block, x, y)` reachable by some constraint.
    cells: Vec<(usize, usize, usize)>,
    /// Constraint rows as (cell, multiplicity) lists with log constants.
    rows: Vec<(Vec<(usize, u32)>, f64)>,
    /// Cells of each weighted column `(block, y)`, with the column weight.
    columns: Vec<(f64, Vec<usize>)>,
    u: Vec<f64>,
    steps: usize,
    trace: Vec<f64>,
    best_value: f64,
    best_u: Vec<f64>,
}

impl<'a> PrimalState<'a> {
    pub(crate) fn new(
        inst: &DiscreteInstance,
        numeric: &'a Numeric,
        mode: SolveMode,
        opts: &SolverOptions,
    ) -> PrimalState<'a> {
        let blocks = numeric.blocks;
        let mut cell_of: Vec<Vec<Vec<usize>>> = (0..blocks)
            .map(|b| vec![vec![usize::MAX; numeric.w[b].len()]; inst.points()])
            .collect();
        let mut cells = Vec::new();
        let mut rows = Vec::new();
        for row in &numeric.rows {
            let coords: Vec<(usize, u32)> = row
                .coords
                .iter()
                .map(|&(b, y, m)| {
                    if cell_of[b][row.x][y] == usize::MAX {
                        cell_of[b][row.x][y] = cells.len();
                        cells.push((b, row.x, y));
                    }
                    (cell_of[b][row.x][y], m)
                })
                .collect();
            rows.push((coords, row.ln_c));
        }
        let mut columns = Vec::new();
        for b in 0..blocks {
            for y in 0..numeric.w[b].len() {
                let members: Vec<usize> = (0..inst.points())
                    .filter_map(|x| {
                        let c = cell_of[b][x][y];
                        (c != usize::MAX).then_some(c)
                    })
                    .collect();
                if !members.is_empty() {
                    columns.push((numeric.w[b][y], members));
                }
            }
        }
        // Deterministic start: a constant table large enough to be feasible.
        let c_max = numeric.rows.iter().map(|r| r.c).fold(1.0f64, f64::max);
        let u0 = c_max.ln() / numeric.d as f64;
        let u = vec![u0; cells.len()];
        let mut state = PrimalState {
            numeric,
            mode,
            rel_tol: opts.rel_tol,
            cells,
            rows,
            columns,
            u,
            steps: 0,
            trace: Vec::new(),
            best_value: f64::INFINITY,
            best_u: Vec::new(),
        };
        let v = state.current_value();
        state.record(v);
        state
    }

    fn record(&mut self, value: f64) {
        self.trace.push(value);
        if value < self.best_value {
            self.best_value = value;
            self.best_u = self.u.clone();
        }
    }

    /// Largest log line ratio and the column attaining it.
    fn objective(&self) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (idx, (w, members)) in self.columns.iter().enumerate() {
            let sum: f64 = members
                .iter()
                .map(|&c| self.numeric.mu[self.cells[c].1] * self.u[c].exp())
                .sum();
            let v = sum.ln() - w.ln();
            if v > best {
                best = v;
                arg = idx;
            }
        }
        (best, arg)
    }

    fn max_violation(&self) -> f64 {
        let mut v: f64 = 0.0;
        for (coords, b) in &self.rows {
            let s: f64 = coords.iter().map(|&(c, m)| m as f64 * self.u[c]).sum();
            v = v.max(b - s);
        }
        v
    }

    /// Cyclic sweeps raising the slots of each violated constraint equally.
    fn project(&mut self) {
        for _ in 0..64 {
            let mut worst: f64 = 0.0;
            for (coords, b) in &self.rows {
                let s: f64 = coords.iter().map(|&(c, m)| m as f64 * self.u[c]).sum();
                let v = b - s;
                if v > 0.0 {
                    worst = worst.max(v);
                    let shift = v / self.numeric.d as f64;
                    for &(c, m) in coords {
                        self.u[c] += shift * m as f64;
                    }
                }
            }
            if worst <= 1e-13 {
                break;
            }
        }
    }

    /// Value of the current iterate once scaled to cover any residual
    /// violation, so every trace entry tracks a feasible table.
    fn current_value(&self) -> f64 {
        if self.columns.is_empty() {
            return 0.0;
        }
        let (obj, _) = self.objective();
        (obj + self.max_violation().max(0.0) / self.numeric.d as f64).exp()
    }

    pub(crate) fn run(&mut self, iterations: usize, rule: StepRule) {
        if self.rows.is_empty() || self.columns.is_empty() {
            return;
        }
        let stall_window = 2_500usize;
        let mut since_best = 0usize;
        for _ in 0..iterations {
            self.steps += 1;
            let (obj, arg) = self.objective();
            let (w_arg, members) = &self.columns[arg];
            let _ = w_arg;
            let total: f64 = members
                .iter()
                .map(|&c| self.numeric.mu[self.cells[c].1] * self.u[c].exp())
                .sum();
            let grad: Vec<(usize, f64)> = members
                .iter()
                .map(|&c| (c, self.numeric.mu[self.cells[c].1] * self.u[c].exp() / total))
                .collect();
            let grad_sq: f64 = grad.iter().map(|&(_, p)| p * p).sum();
            let eta = match rule {
                StepRule::SqrtT(c) => c / (self.steps as f64).sqrt(),
                StepRule::Polyak(target) if target > 0.0 => {
                    ((obj - target.ln()) / grad_sq.max(1e-12)).clamp(0.0, 5.0)
                }
                StepRule::Polyak(_) => 1.0 / (self.steps as f64).sqrt(),
            };
            if eta == 0.0 {
                break;
            }
            for &(c, p) in &grad {
                self.u[c] -= eta * p;
            }
            self.project();
            let before = self.best_value;
            let v = self.current_value();
            self.record(v);
            if self.best_value < before - self.rel_tol * before.abs().max(1e-300) {
                since_best = 0;
            } else {
                since_best += 1;
                if since_best > stall_window {
                    break;
                }
            }
        }
    }

    /// Interior-point finisher for small instances.  In the log domain the
    /// problem is the smooth epigraph program `min t` over `r_q(u) <= t`
    /// (log line ratios) and the linear tuple rows; damped Newton on the
    /// barrier `eta t - sum ln(t - r_q) - sum ln(row slack)` with an
    /// annealed `eta` closes the gap the subgradient phase leaves.  The
    /// subgradient path stays in place for larger instances, where the
    /// dense Hessian would not pay for itself.
    pub(crate) fn polish(&mut self) {
        let n = self.cells.len();
        if n == 0 || n > 160 || self.rows.is_empty() || self.columns.is_empty() {
            return;
        }
        if !self.best_u.is_empty() {
            self.u = self.best_u.clone();
        }
        // Strictly feasible start: every row has total multiplicity d, so a
        // uniform bump gives all of them positive slack.
        let mut u = self.u.clone();
        for ui in u.iter_mut() {
            *ui = if ui.is_finite() { *ui + 1e-6 } else { 0.0 };
        }
        let a: Vec<f64> = self.cells.iter().map(|&(_, x, _)| self.numeric.mu[x]).collect();
        let columns = self.columns.clone();
        let rows = self.rows.clone();
        let ratios = {
            let a = a.clone();
            let columns = columns.clone();
            move |u: &[f64]| -> Vec<f64> {
                columns
                    .iter()
                    .map(|(w, members)| {
                        let s: f64 = members.iter().map(|&c| a[c] * u[c].exp()).sum();
                        s.ln() - w.ln()
                    })
                    .collect()
            }
        };
        let slacks = {
            let rows = rows.clone();
            move |u: &[f64]| -> Vec<f64> {
                rows.iter()
                    .map(|(coords, b)| {
                        coords.iter().map(|&(c, m)| m as f64 * u[c]).sum::<f64>() - b
                    })
                    .collect()
            }
        };
        let barrier = |eta: f64, t: f64, r: &[f64], s: &[f64]| -> f64 {
            let mut v = eta * t;
            for &rq in r {
                let gap = t - rq;
                if gap.is_finite() {
                    v -= gap.ln();
                }
            }
            for &sr in s {
                v -= sr.ln();
            }
            v
        };

        let mut r = ratios(&u);
        let mut s = slacks(&u);
        if r.iter().any(|v| !v.is_finite() && *v != f64::NEG_INFINITY)
            || s.iter().any(|v| !(*v > 0.0))
        {
            return;
        }
        let mut t = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        if !t.is_finite() {
            return;
        }

        let planes = (self.columns.len() + self.rows.len()) as f64;
        let mut eta = 1.0f64;
        let eta_cap = planes / 1e-10;
        while eta < eta_cap {
            for _ in 0..60 {
                // Gradient and Hessian over z = (u, t).
                let mut g = vec![0.0f64; n + 1];
                let mut h = vec![vec![0.0f64; n + 1]; n + 1];
                g[n] = eta;
                for (q, (_, members)) in columns.iter().enumerate() {
                    let gap = t - r[q];
                    if !gap.is_finite() {
                        continue; // an all-zero column never binds
                    }
                    let total: f64 = members.iter().map(|&c| a[c] * u[c].exp()).sum();
                    let p: Vec<(usize, f64)> =
                        members.iter().map(|&c| (c, a[c] * u[c].exp() / total)).collect();
                    let inv = 1.0 / gap;
                    let inv2 = inv * inv;
                    g[n] -= inv;
                    h[n][n] += inv2;
                    for &(c, pc) in &p {
                        g[c] += inv * pc;
                        h[c][n] -= inv2 * pc;
                        h[n][c] -= inv2 * pc;
                        // d2 r_q = diag(p) - p p^T, plus the rank-one from
                        // the reciprocal gap.
                        h[c][c] += inv * pc;
                        for &(c2, pc2) in &p {
                            h[c][c2] += (inv2 - inv) * pc * pc2;
                        }
                    }
                }
                for (i, (coords, _)) in rows.iter().enumerate() {
                    let inv = 1.0 / s[i];
                    let inv2 = inv * inv;
                    for &(c, m) in coords {
                        g[c] -= inv * m as f64;
                        for &(c2, m2) in coords {
                            h[c][c2] += inv2 * (m as f64) * (m2 as f64);
                        }
                    }
                }
                let Some(dir) = solve_spd(h, g.iter().map(|v| -v).collect()) else {
                    break;
                };
                let decrement: f64 = -g.iter().zip(&dir).map(|(gi, di)| gi * di).sum::<f64>();
                if !(decrement > 1e-12) {
                    break;
                }
                // Backtracking: stay strictly feasible, then Armijo.
                let phi0 = barrier(eta, t, &r, &s);
                let mut step = 1.0f64;
                let mut accepted = false;
                for _ in 0..60 {
                    let ut: Vec<f64> =
                        u.iter().zip(&dir).map(|(ui, di)| ui + step * di).collect();
                    let tt = t + step * dir[n];
                    let rt = ratios(&ut);
                    let st = slacks(&ut);
                    let feasible = rt.iter().all(|&rq| tt - rq > 0.0)
                        && st.iter().all(|&sr| sr > 0.0)
                        && tt.is_finite();
                    if feasible {
                        let phi = barrier(eta, tt, &rt, &st);
                        if phi <= phi0 - 0.25 * step * decrement {
                            u = ut;
                            t = tt;
                            r = rt;
                            s = st;
                            accepted = true;
                            break;
                        }
                    }
                    step *= 0.5;
                }
                if !accepted {
                    break;
                }
                if decrement < 1e-10 {
                    break;
                }
            }
            self.u = u.clone();
            let v = self.current_value();
            self.record(v);
            eta *= 8.0;
        }
    }

    pub(crate) fn best_value(&self) -> f64 {
        if self.best_value.is_finite() {
            self.best_value
        } else {
            0.0
        }
    }

    pub(crate) fn trace(&self) -> &[f64] {
        &self.trace
    }

    pub(crate) fn iterations(&self) -> usize {
        self.steps
    }

    /// Converts the best iterate to rational tables and scales once so every
    /// constraint holds exactly.
    pub(crate) fn lift(&self, inst: &DiscreteInstance) -> Result<FactorTables> {
        let blocks = self.numeric.blocks;
        let mut tables: Vec<Vec<Vec<BigRational>>> = (0..blocks)
            .map(|b| vec![vec![BigRational::zero(); self.numeric.w[b].len()]; inst.points()])
            .collect();
        let source = if self.best_u.is_empty() { &self.u } else { &self.best_u };
        for (i, &(b, x, y)) in self.cells.iter().enumerate() {
            let v = source[i];
            let g = if v.is_finite() { v.clamp(-700.0, 700.0).exp() } else { 1.0 };
            tables[b][x][y] =
                BigRational::from_float(g).expect("finite positive table entry");
        }

        // Worst multiplicative deficit across all constraints.
        let mut worst = BigRational::one();
        for row in &self.numeric.rows {
            let mut prod = BigRational::one();
            for &(b, y, m) in &row.coords {
                for _ in 0..m {
                    prod *= &tables[b][row.x][y];
                }
            }
            let need = &row.c_exact / prod;
            if need > worst {
                worst = need;
            }
        }
        if worst > BigRational::one() {
            let scale = rational_dth_root_cover(&worst, self.numeric.d as u32);
            for table in &mut tables {
                for row in table {
                    for v in row {
                        if !v.is_zero() {
                            *v *= &scale;
                        }
                    }
                }
            }
        }
        FactorTables::with_tables(inst, self.mode, tables)
    }
}

/// Cholesky solve of a symmetric positive semidefinite system, with a ridge
/// retry when the factorisation meets a non-positive pivot.
fn solve_spd(a: Vec<Vec<f64>>, b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    let trace: f64 = (0..n).map(|i| a[i][i].abs()).sum::<f64>().max(1e-300);
    let mut ridge = 0.0f64;
    'attempt: for _ in 0..8 {
        let mut l = a.clone();
        for i in 0..n {
            l[i][i] += ridge;
        }
        for j in 0..n {
            for k in 0..j {
                let ljk = l[j][k];
                for i in j..n {
                    l[i][j] -= l[i][k] * ljk;
                }
            }
            let pivot = l[j][j];
            if !(pivot > trace * 1e-14) {
                ridge = if ridge == 0.0 { trace * 1e-12 } else { ridge * 100.0 };
                continue 'attempt;
            }
            let root = pivot.sqrt();
            for i in j..n {
                l[i][j] /= root;
            }
        }
        let mut x = b.clone();
        for i in 0..n {
            for k in 0..i {
                x[i] = x[i] - l[i][k] * x[k];
            }
            x[i] /= l[i][i];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                x[i] = x[i] - l[k][i] * x[k];
            }
            x[i] /= l[i][i];
        }
        if x.iter().all(|v| v.is_finite()) {
            return Some(x);
        }
        ridge = if ridge == 0.0 { trace * 1e-12 } else { ridge * 100.0 };
    }
    None
}

/// A rational `s` with `s^d >= r`, within a factor `1 + 2^-20` of `r^{1/d}`.
fn rational_dth_root_cover(r: &BigRational, d: u32) -> BigRational {
    let approx = r.to_f64().unwrap_or(1.0).max(1.0).powf(1.0 / d as f64) * (1.0 + 1e-12);
    let mut s = BigRational::from_float(approx)
        .unwrap_or_else(BigRational::one)
        .max(BigRational::one());
    let bump = BigRational::new(1_048_577.into(), 1_048_576.into());
    loop {
        let mut p = BigRational::one();
        for _ in 0..d {
            p *= &s;
        }
        if &p >= r {
            return s;
        }
        s *= &bump;
    }
}

/// Runs the pinned subgradient method and lifts the result.  The report's
/// dual fields carry the trivial certified bound zero; use `solve` for a
/// matched primal/dual pair.
pub fn primal_solve(
    inst: &DiscreteInstance,
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<(FactorTables, SolveReport)> {
    inst.require_q1()?;
    let blocks = inst.blocks(mode)?;
    let numeric = Numeric::build(inst, mode, blocks);
    let mut state = PrimalState::new(inst, &numeric, mode, opts);
    state.run(opts.max_iterations, StepRule::SqrtT(opts.step_c));
    let tables = state.lift(inst)?;
    let primal = tables.value_f64();
    let report = SolveReport {
        primal,
        dual: 0.0,
        gap: primal.abs() / primal.abs().max(1.0),
        iterations: state.iterations(),
        tolerance: opts.rel_tol,
        lifted_exact: true,
        primal_trace: state.trace().to_vec(),
        dual_trace: vec![0.0; state.trace().len()],
    };
    Ok((tables, report))
}
