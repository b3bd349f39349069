//! Dual ascent: maximise `D(f) = sum_x mu(x) * inner(x, f)` over the unit
//! ball of the product norm (`sum_j ||f_j|| <= 1`, or `||f|| <= 1` in the
//! symmetric case).
//!
//! `D` is concave — it is an infimum of functions linear in `f` — and the
//! feasible factor tuple returned by each inner solve supplies a
//! supergradient.  Mirror ascent with entropy geometry keeps the iterates in
//! the interior of the weighted simplex; since `D` is monotone in `f`, the
//! supremum over the ball is attained on that simplex.  Every reported value
//! is a certified lower bound assembled from the inner problems' dual
//! certificates, so the ascent can stop anywhere without overstating.

use crate::duality::inner::inner_min_cached;
use crate::duality::{DiscreteInstance, Numeric, SolveMode, SolverOptions};
use crate::error::Result;

/// Best certified dual value found, the weights attaining it, and the
/// per-iteration certified values.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub value: f64,
    pub f: Vec<Vec<f64>>,
    pub iterations: usize,
    pub trace: Vec<f64>,
}

/// Maximises the dual functional; see the module notes.  The `target`, when
/// known (for example a primal value), sizes the mirror steps.
pub fn dual_value(
    inst: &DiscreteInstance,
    mode: SolveMode,
    opts: &SolverOptions,
) -> Result<DualSolution> {
    inst.require_q1()?;
    let blocks = inst.blocks(mode)?;
    let numeric = Numeric::build(inst, mode, blocks);
    ascend(inst, &numeric, opts, None, 0.0, None)
}

pub(crate) fn ascend(
    inst: &DiscreteInstance,
    numeric: &Numeric,
    opts: &SolverOptions,
    target: Option<f64>,
    mut best: f64,
    init: Option<&[Vec<f64>]>,
) -> Result<DualSolution> {
    let blocks = numeric.blocks;
    let shape: Vec<usize> = (0..blocks).map(|b| numeric.w[b].len()).collect();
    let total_w: f64 = numeric.w.iter().map(|wb| wb.iter().sum::<f64>()).sum();
    if inst.points() == 0 || numeric.rows.is_empty() || total_w <= 0.0 {
        return Ok(DualSolution { value: 0.0, f: shape.iter().map(|&n| vec![0.0; n]).collect(), iterations: 0, trace: vec![0.0] });
    }

    let mut f: Vec<Vec<f64>> = match init {
        Some(start) if start.len() == blocks => start.to_vec(),
        _ => (0..blocks).map(|b| vec![1.0 / total_w; shape[b]]).collect(),
    };
    if init.is_none() {
        if let Some(cand) = newton_candidate(numeric) {
            let certify = |f: &[Vec<f64>]| -> f64 {
                let mut total = 0.0;
                for x in 0..inst.points() {
                    let mut warm = Vec::new();
                    total +=
                        numeric.mu[x] * inner_min_cached(numeric, x, f, opts, &mut warm).lower;
                }
                total
            };
            if certify(&cand) > certify(&f) {
                f = cand;
            }
        }
    }
    let mut best_f = f.clone();
    let mut warm: Vec<Vec<f64>> = vec![Vec::new(); inst.points()];
    let mut trace = Vec::with_capacity(opts.dual_iterations);
    let mut iterations = 0;
    let mut since_best = 0usize;

    for iter in 0..opts.dual_iterations {
        iterations = iter + 1;
        let mut certified = 0.0;
        let mut grad: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
        for x in 0..inst.points() {
            let sol = inner_min_cached(numeric, x, &f, opts, &mut warm[x]);
            certified += numeric.mu[x] * sol.lower;
            for (b, sb) in sol.s.iter().enumerate() {
                for (y, &v) in sb.iter().enumerate() {
                    grad[b][y] += numeric.mu[x] * v;
                }
            }
        }
        trace.push(certified);
        if certified > best + 1e-10 * best.abs().max(1.0) {
            best = certified.max(best);
            best_f = f.clone();
            since_best = 0;
        } else {
            if certified > best {
                best = certified;
                best_f = f.clone();
            }
            since_best += 1;
            if since_best > 600 {
                break;
            }
        }
        if let Some(t) = target {
            if t - best <= 0.05 * opts.rel_tol * t.abs().max(1.0) {
                break;
            }
        }

        // Mirror step on h = w * f with gradient grad / w.
        let mut ghat_max: f64 = 0.0;
        for b in 0..blocks {
            for y in 0..shape[b] {
                let gh = grad[b][y] / numeric.w[b][y];
                ghat_max = ghat_max.max(gh.abs());
            }
        }
        if ghat_max == 0.0 {
            break;
        }
        // Entropic geometry sizes Polyak steps by the max-norm of the
        // gradient in the simplex variable.
        let eta = match target {
            Some(t) if t > certified => {
                ((t - certified) / (ghat_max * ghat_max)).min(8.0 / ghat_max)
            }
            _ => 1.0 / (ghat_max * ((iter + 1) as f64).sqrt()),
        };

        // Floor before normalising so the iterate stays interior while the
        // weighted mass remains exactly one.
        let mut z = 0.0;
        let mut shifted: Vec<Vec<f64>> = shape.iter().map(|&n| vec![0.0; n]).collect();
        for b in 0..blocks {
            for y in 0..shape[b] {
                let gh = grad[b][y] / numeric.w[b][y];
                let h = (eta * (gh - ghat_max)).exp() * numeric.w[b][y] * f[b][y];
                shifted[b][y] = h.max(1e-140);
                z += shifted[b][y];
            }
        }
        if z <= 0.0 || !z.is_finite() {
            break;
        }
        for b in 0..blocks {
            for y in 0..shape[b] {
                f[b][y] = shifted[b][y] / (z * numeric.w[b][y]);
            }
        }
    }

    Ok(DualSolution { value: best, f: best_f, iterations, trace })
}

/// Dual candidate from an interior-point solve of the smoothed program.
///
/// In log variables the primal is `min t` subject to `t >= lse_k(u)` for
/// every weighted column `k` and the tuple constraints on `u`.  A standard
/// logarithmic barrier is minimised by Newton's method for a decreasing
/// barrier weight; the barrier multipliers `kappa / slack_k` of the column
/// constraints converge to the optimal mixing weights of the max, which are
/// exactly the simplex weights the dual maximises over.  The returned `f`
/// (weighted-l1 normalised) is only a candidate: the caller certifies it
/// through the inner lower bounds, so a poor solve costs time, never
/// correctness.
fn newton_candidate(numeric: &Numeric) -> Option<Vec<Vec<f64>>> {
    let blocks = numeric.blocks;
    let mut cell_of: Vec<std::collections::HashMap<(usize, usize), usize>> =
        vec![std::collections::HashMap::new(); blocks];
    let mut cells: Vec<(usize, usize, usize)> = Vec::new();
    let mut rows: Vec<(Vec<(usize, u32)>, f64)> = Vec::new();
    for row in &numeric.rows {
        let coords: Vec<(usize, u32)> = row
            .coords
            .iter()
            .map(|&(b, y, m)| {
                let idx = *cell_of[b].entry((row.x, y)).or_insert_with(|| {
                    cells.push((b, row.x, y));
                    cells.len() - 1
                });
                (idx, m)
            })
            .collect();
        rows.push((coords, row.ln_c));
    }
    let n = cells.len();
    if n == 0 {
        return None;
    }
    // Columns (b, y) with their member cells and coefficients mu / w.
    let mut columns: Vec<(usize, usize, Vec<(usize, f64)>)> = Vec::new();
    {
        let mut by_col: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64)>> =
            std::collections::BTreeMap::new();
        for (i, &(b, x, y)) in cells.iter().enumerate() {
            by_col
                .entry((b, y))
                .or_default()
                .push((i, numeric.mu[x] / numeric.w[b][y]));
        }
        for ((b, y), members) in by_col {
            columns.push((b, y, members));
        }
    }

    let d = numeric.d as f64;
    let c_max = numeric.rows.iter().map(|r| r.c).fold(1.0f64, f64::max);
    let mut u = vec![c_max.ln() / d + 1.0; n];
    let lse = |u: &[f64], members: &[(usize, f64)]| -> f64 {
        let m = members.iter().map(|&(i, _)| u[i]).fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = members.iter().map(|&(i, a)| a * (u[i] - m).exp()).sum();
        m + s.ln()
    };
    let mut t = columns.iter().map(|(_, _, mem)| lse(&u, mem)).fold(f64::NEG_INFINITY, f64::max)
        + 1.0;

    let phi = |u: &[f64], t: f64, kappa: f64| -> Option<f64> {
        let mut v = t;
        for (_, _, mem) in &columns {
            let s = t - lse(u, mem);
            if s <= 0.0 {
                return None;
            }
            v -= kappa * s.ln();
        }
        for (coords, b) in &rows {
            let slack: f64 = coords.iter().map(|&(i, m)| m as f64 * u[i]).sum::<f64>() - b;
            if slack <= 0.0 {
                return None;
            }
            v -= kappa * slack.ln();
        }
        Some(v)
    };

    let mut kappa = 1.0f64;
    let mut last_kappa = kappa;
    for _outer in 0..14 {
        for _newton in 0..50 {
            // Gradient and Hessian over (u, t); index n is t.
            let mut g = vec![0.0f64; n + 1];
            let mut h = vec![vec![0.0f64; n + 1]; n + 1];
            g[n] = 1.0;
            for (_, _, mem) in &columns {
                let l = lse(&u, mem);
                let s = t - l;
                if s <= 0.0 {
                    return None;
                }
                let shift = mem.iter().map(|&(i, _)| u[i]).fold(f64::NEG_INFINITY, f64::max);
                let total: f64 = mem.iter().map(|&(i, a)| a * (u[i] - shift).exp()).sum();
                let p: Vec<(usize, f64)> = mem
                    .iter()
                    .map(|&(i, a)| (i, a * (u[i] - shift).exp() / total))
                    .collect();
                g[n] -= kappa / s;
                h[n][n] += kappa / (s * s);
                for &(i, pi) in &p {
                    g[i] += kappa * pi / s;
                    h[i][n] -= kappa * pi / (s * s);
                    h[n][i] -= kappa * pi / (s * s);
                    for &(j, pj) in &p {
                        h[i][j] += kappa * (pi * pj / (s * s) - pi * pj / s);
                    }
                    h[i][i] += kappa * pi / s;
                }
            }
            for (coords, b) in &rows {
                let slack: f64 =
                    coords.iter().map(|&(i, m)| m as f64 * u[i]).sum::<f64>() - b;
                if slack <= 0.0 {
                    return None;
                }
                for &(i, mi) in coords {
                    g[i] -= kappa * mi as f64 / slack;
                    for &(j, mj) in coords {
                        h[i][j] += kappa * (mi as f64) * (mj as f64) / (slack * slack);
                    }
                }
            }
            let ridge = 1e-12 * (1.0 + kappa);
            for (i, row) in h.iter_mut().enumerate() {
                row[i] += ridge;
            }
            let delta = solve_spd(&mut h, &g)?;
            let decrement: f64 = delta.iter().zip(&g).map(|(d, g)| d * g).sum();
            if !decrement.is_finite() {
                return None;
            }
            if decrement.abs() <= 1e-14 * (1.0 + t.abs()) {
                break;
            }
            let base = phi(&u, t, kappa)?;
            let mut alpha = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                let u_new: Vec<f64> =
                    u.iter().zip(&delta).map(|(ui, di)| ui - alpha * di).collect();
                let t_new = t - alpha * delta[n];
                if let Some(v) = phi(&u_new, t_new, kappa) {
                    if v <= base - 1e-4 * alpha * decrement {
                        u = u_new;
                        t = t_new;
                        moved = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
        last_kappa = kappa;
        kappa *= 0.15;
        if kappa < 1e-10 {
            break;
        }
    }

    // Multipliers of the column constraints, mapped back to f = ftilde / w.
    let mut f: Vec<Vec<f64>> = (0..blocks).map(|b| vec![0.0; numeric.w[b].len()]).collect();
    let mut mass = 0.0;
    for (b, y, mem) in &columns {
        let s = t - lse(&u, mem);
        if s <= 0.0 {
            return None;
        }
        let ft = last_kappa / s;
        f[*b][*y] = ft / numeric.w[*b][*y];
        mass += ft;
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return None;
    }
    for fb in &mut f {
        for v in fb.iter_mut() {
            *v /= mass;
        }
    }
    Some(f)
}

/// Solves the symmetric positive definite system `h x = g` in place by
/// unpivoted elimination; `None` on breakdown.
fn solve_spd(h: &mut [Vec<f64>], g: &[f64]) -> Option<Vec<f64>> {
    let n = g.len();
    let mut aug: Vec<f64> = g.to_vec();
    for col in 0..n {
        let pivot = h[col][col];
        if !(pivot > 0.0) || !pivot.is_finite() {
            return None;
        }
        for r in col + 1..n {
            let factor = h[r][col] / pivot;
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                h[r][c] -= factor * h[col][c];
            }
            aug[r] -= factor * aug[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut v = aug[col];
        for c in col + 1..n {
            v -= h[col][c] * x[c];
        }
        x[col] = v / h[col][col];
    }
    Some(x)
}
