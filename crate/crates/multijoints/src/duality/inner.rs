//! Per-point inner problems.
//!
//! For a fixed point `x` and fixed nonnegative `f`, the inner problem asks
//! for factor values `S` minimising `sum f * S` subject to the pointwise
//! constraints `prod_j S(y_j) >= M(x)^d K(x, y)`.  In log variables this is
//! minimising a positively weighted sum of exponentials over a polyhedron,
//! and the Lagrange dual has a closed form whose value certifies a lower
//! bound for any nonnegative multipliers.  Upper bounds come from repaired
//! feasible points, so the reported bracket is honest regardless of how far
//! the ascent has converged.

use crate::duality::{DiscreteInstance, Numeric, SolveMode, SolverOptions};
use crate::error::{Error, Result};

/// Constraint `sum over coords of mult * u_var >= b` in log variables.
pub(crate) struct ExpRow {
    pub coords: Vec<(usize, u32)>,
    pub b: f64,
}

/// Minimise `sum_i c_i exp(u_i)` with all `c_i > 0` subject to `rows`; every
/// row's multiplicities sum to `d`.
pub(crate) struct ExpProgram {
    pub c: Vec<f64>,
    pub rows: Vec<ExpRow>,
    pub d: u32,
    /// Block of each variable, used for the mean-rebalancing step; `None`
    /// when rows may touch a block more than once.
    pub blocks: Option<Vec<usize>>,
}

pub(crate) struct ExpOutcome {
    pub upper: f64,
    pub lower: f64,
    pub u: Vec<f64>,
    pub iterations: usize,
}

const LN_FLOOR: f64 = -700.0;

impl ExpProgram {
    fn t_values(&self, lambda: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.c.len()];
        for (a, row) in self.rows.iter().enumerate() {
            if lambda[a] == 0.0 {
                continue;
            }
            for &(i, m) in &row.coords {
                t[i] += lambda[a] * m as f64;
            }
        }
        t
    }

    /// Lagrange dual value at `lambda >= 0`.
    fn dual_value(&self, lambda: &[f64], t: &[f64]) -> f64 {
        let mut g = 0.0;
        for (a, row) in self.rows.iter().enumerate() {
            g += lambda[a] * row.b;
        }
        for (i, &ti) in t.iter().enumerate() {
            if ti > 0.0 {
                g += ti - ti * (ti / self.c[i]).ln();
            }
        }
        g
    }

    fn primal_from(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(&self.c)
            .map(|(&ti, &ci)| if ti > 0.0 { (ti / ci).ln().max(LN_FLOOR) } else { LN_FLOOR })
            .collect()
    }

    fn max_violation(&self, u: &[f64]) -> f64 {
        let mut v: f64 = 0.0;
        for row in &self.rows {
            let mut s = 0.0;
            for &(i, m) in &row.coords {
                s += m as f64 * u[i];
            }
            v = v.max(row.b - s);
        }
        v
    }

    /// Feasible objective value after raising every variable by the worst
    /// violation split over the d slots, then rebalancing block sums to
    /// their geometric mean (valid because scaling block j by `t_j` with
    /// `prod t_j = 1` preserves every constraint).
    fn repaired_value(&self, u: &mut [f64]) -> f64 {
        let v = self.max_violation(u);
        if v > 0.0 {
            let shift = v / self.d as f64;
            for ui in u.iter_mut() {
                *ui += shift;
            }
        }
        if let Some(blocks) = &self.blocks {
            let nb = blocks.iter().max().map_or(0, |&b| b + 1);
            if nb > 1 {
                let mut sums = vec![0.0f64; nb];
                for (i, &b) in blocks.iter().enumerate() {
                    sums[b] += self.c[i] * u[i].exp();
                }
                if sums.iter().all(|&s| s > 0.0) {
                    let ln_gm = sums.iter().map(|s| s.ln()).sum::<f64>() / nb as f64;
                    for (i, &b) in blocks.iter().enumerate() {
                        u[i] += ln_gm - sums[b].ln();
                    }
                }
            }
        }
        self.c.iter().zip(u.iter()).map(|(&c, &ui)| c * ui.exp()).sum()
    }

    /// Projected gradient ascent with backtracking on the concave dual.
    pub(crate) fn solve(
        &self,
        lambda: &mut Vec<f64>,
        max_iterations: usize,
        tol: f64,
    ) -> ExpOutcome {
        let n = self.c.len();
        if self.rows.is_empty() || n == 0 {
            return ExpOutcome {
                upper: 0.0,
                lower: 0.0,
                u: vec![LN_FLOOR; n],
                iterations: 0,
            };
        }
        if lambda.len() != self.rows.len() || lambda.iter().any(|&l| !(l >= 0.0) || !l.is_finite())
        {
            let c_mean = self.c.iter().sum::<f64>() / n as f64;
            *lambda = self
                .rows
                .iter()
                .map(|row| (c_mean * (row.b / self.d as f64).exp()).max(1e-30))
                .collect();
        }

        let mut t = self.t_values(lambda);
        let mut g = self.dual_value(lambda, &t);
        let mut best_lower = g;
        let mut best_upper = f64::INFINITY;
        let mut best_u = self.primal_from(&t);
        let mut step = 1.0;
        let mut iterations = 0;

        for iter in 0..max_iterations {
            iterations = iter + 1;
            let u = self.primal_from(&t);
            let mut cand = u.clone();
            let upper = self.repaired_value(&mut cand);
            if upper < best_upper {
                best_upper = upper;
                best_u = cand;
            }
            if best_upper - best_lower <= tol * best_upper.abs().max(1.0) {
                break;
            }

            // Gradient of the dual is the constraint violation at u(lambda).
            let mut grad = vec![0.0; self.rows.len()];
            let mut grad_norm: f64 = 0.0;
            for (a, row) in self.rows.iter().enumerate() {
                let mut s = 0.0;
                for &(i, m) in &row.coords {
                    s += m as f64 * u[i];
                }
                let d = (row.b - s).clamp(-1e6, 1e6);
                grad[a] = d;
                grad_norm = grad_norm.max(d.abs());
            }
            if grad_norm == 0.0 {
                break;
            }

            let mut accepted = false;
            let mut alpha = step;
            for _ in 0..60 {
                let cand: Vec<f64> = lambda
                    .iter()
                    .zip(&grad)
                    .map(|(&l, &gr)| (l + alpha * gr).max(0.0))
                    .collect();
                let t_cand = self.t_values(&cand);
                let g_cand = self.dual_value(&cand, &t_cand);
                if g_cand > g + 1e-12 * g.abs() {
                    *lambda = cand;
                    t = t_cand;
                    g = g_cand;
                    step = alpha * 2.0;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if g > best_lower {
                best_lower = g;
            }
            if !accepted {
                break;
            }
        }

        // One final repair so the bracket closes at the stopping point.
        let mut cand = self.primal_from(&t);
        let upper = self.repaired_value(&mut cand);
        if upper < best_upper {
            best_upper = upper;
            best_u = cand;
        }
        ExpOutcome { upper: best_upper, lower: best_lower.min(best_upper), u: best_u, iterations }
    }
}

/// Inner solution: a feasible factor tuple, its objective value, and a
/// certified lower bound on the true minimum.
#[derive(Debug, Clone)]
pub struct InnerSolution {
    pub value: f64,
    pub lower: f64,
    pub s: Vec<Vec<f64>>,
    pub iterations: usize,
}

/// Solves the inner problem at point `x` for the weight tuple `f` (one slice
/// per axis, or a single slice in symmetric mode).  Returns value 0 with a
/// zero tuple when no constraint is active on the support of `f`.
pub fn inner_min(
    inst: &DiscreteInstance,
    x: usize,
    f: &[Vec<f64>],
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<InnerSolution> {
    let blocks = inst.blocks(mode)?;
    if x >= inst.points() {
        return Err(Error::Degenerate(format!("point index {x} out of range")));
    }
    if f.len() != blocks {
        return Err(Error::DimensionMismatch { expected: blocks, got: f.len() });
    }
    for (b, fb) in f.iter().enumerate() {
        let want = inst.axis_weights()[if blocks == 1 { 0 } else { b }].len();
        if fb.len() != want {
            return Err(Error::DimensionMismatch { expected: want, got: fb.len() });
        }
        if fb.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NegativeWeight("inner weights must be finite and nonnegative".into()));
        }
    }
    let numeric = Numeric::build(inst, mode, blocks);
    let mut warm = Vec::new();
    Ok(inner_min_cached(&numeric, x, f, opts, &mut warm))
}

/// Engine shared with the dual ascent; `warm` carries multipliers between
/// calls at the same point.
pub(crate) fn inner_min_cached(
    numeric: &Numeric,
    x: usize,
    f: &[Vec<f64>],
    opts: &SolverOptions,
    warm: &mut Vec<f64>,
) -> InnerSolution {
    let shape: Vec<usize> = f.iter().map(|fb| fb.len()).collect();
    let mut var_of = vec![Vec::new(); f.len()];
    for (b, &len) in shape.iter().enumerate() {
        var_of[b] = vec![usize::MAX; len];
    }
    let mut c = Vec::new();
    let mut var_coord = Vec::new();
    let mut rows = Vec::new();
    let mut amgm = 0.0f64;
    for &r in &numeric.rows_by_x[x] {
        let row = &numeric.rows[r];
        let mut prod = row.c;
        for &(b, y, m) in &row.coords {
            prod *= f[b][y].powi(m as i32);
        }
        amgm += prod;
        if prod == 0.0 {
            // A zero weight somewhere in the tuple: the constraint costs
            // nothing to satisfy and is handled by the final repair.
            continue;
        }
        let coords: Vec<(usize, u32)> = row
            .coords
            .iter()
            .map(|&(b, y, m)| {
                if var_of[b][y] == usize::MAX {
                    var_of[b][y] = c.len();
                    c.push(f[b][y]);
                    var_coord.push((b, y));
                }
                (var_of[b][y], m)
            })
            .collect();
        rows.push(ExpRow { coords, b: row.ln_c });
    }

    let multilinear = numeric.blocks > 1;
    let amgm_lower = if multilinear {
        numeric.d as f64 * amgm.powf(1.0 / numeric.d as f64)
    } else {
        amgm.powf(1.0 / numeric.d as f64)
    };

    let program = ExpProgram {
        c,
        rows,
        d: numeric.d as u32,
        blocks: if multilinear {
            Some(var_coord.iter().map(|&(b, _)| b).collect())
        } else {
            None
        },
    };
    let outcome = program.solve(warm, opts.inner_iterations, opts.inner_tol);

    let mut s = shape.iter().map(|&len| vec![0.0; len]).collect::<Vec<_>>();
    for (i, &(b, y)) in var_coord.iter().enumerate() {
        s[b][y] = outcome.u[i].exp();
    }
    // Cover the constraints skipped above (and any numeric residue) so the
    // returned tuple is feasible outright.  Raising values only helps later
    // rows, so one pass suffices.
    let mut value = outcome.upper;
    for &r in &numeric.rows_by_x[x] {
        let row = &numeric.rows[r];
        let mut prod_pos = 1.0f64;
        let mut zero_mult = 0u32;
        // Floor-level entries left by the log-domain solver count as zero.
        let tiny = 1e-300;
        for &(b, y, m) in &row.coords {
            if s[b][y] > tiny {
                prod_pos *= s[b][y].powi(m as i32);
            } else {
                zero_mult += m;
            }
        }
        if zero_mult > 0 {
            let need = (row.c / prod_pos).max(1.0);
            let fill = need.powf(1.0 / zero_mult as f64);
            for &(b, y, _) in &row.coords {
                if s[b][y] <= tiny {
                    s[b][y] = fill;
                    value += f[b][y] * fill;
                }
            }
        } else if prod_pos < row.c {
            let scale = (row.c / prod_pos).powf(1.0 / numeric.d as f64) * (1.0 + 1e-15);
            for &(b, y, _) in &row.coords {
                let before = s[b][y];
                s[b][y] *= scale;
                value += f[b][y] * (s[b][y] - before);
            }
        }
    }

    InnerSolution {
        value,
        lower: outcome.lower.max(amgm_lower).min(value),
        s,
        iterations: outcome.iterations,
    }
}
