//! Independent reference solvers used by the acceptance checks.

use cutlab_core::milp::{MilpInstance, Row};

pub const MAXN: usize = 8;

/// Outcome of vertex enumeration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Oracle {
    Optimal(f64),
    Infeasible,
    Unbounded,
}

/// Gaussian elimination with partial pivoting on a fixed-size system.
fn solve_square(a: &mut [[f64; MAXN]; MAXN], b: &mut [f64; MAXN], n: usize) -> Option<[f64; MAXN]> {
    for k in 0..n {
        let mut p = k;
        for i in k + 1..n {
            if a[i][k].abs() > a[p][k].abs() {
                p = i;
            }
        }
        if a[p][k].abs() < 1e-10 {
            return None;
        }
        a.swap(k, p);
        b.swap(k, p);
        for i in k + 1..n {
            let f = a[i][k] / a[k][k];
            if f != 0.0 {
                for c in k..n {
                    a[i][c] -= f * a[k][c];
                }
                b[i] -= f * b[k];
            }
        }
    }
    let mut x = [0.0; MAXN];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|c| a[i][c] * x[c]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// Best vertex of `{a·x ≤ b}` over all `n`-subsets of constraints taken as
/// equalities; `None` when no basic solution is feasible.
fn best_vertex(obj: &[f64], cons: &[([f64; MAXN], f64)]) -> Option<f64> {
    let n = obj.len();
    let k = cons.len();
    if k < n {
        return None;
    }
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut a = [[0.0; MAXN]; MAXN];
        let mut b = [0.0; MAXN];
        for (r, &i) in idx.iter().enumerate() {
            a[r] = cons[i].0;
            b[r] = cons[i].1;
        }
        if let Some(x) = solve_square(&mut a, &mut b, n) {
            let feasible = cons.iter().all(|(a, b)| {
                let mut lhs = 0.0;
                let mut scale = b.abs();
                for j in 0..n {
                    lhs += a[j] * x[j];
                    scale += (a[j] * x[j]).abs();
                }
                lhs <= b + 1e-9 * scale.max(1.0)
            });
            if feasible {
                let z: f64 = (0..n).map(|j| obj[j] * x[j]).sum();
                best = Some(best.map_or(z, |v: f64| v.min(z)));
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - n + i {
                idx[i] += 1;
                for t in i + 1..n {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn constraints(inst: &MilpInstance, big: f64) -> Vec<([f64; MAXN], f64)> {
    let n = inst.n_vars();
    let mut cons = Vec::new();
    for row in &inst.rows {
        let mut a = [0.0; MAXN];
        for &(j, v) in &row.coeffs {
            a[j] = v;
        }
        cons.push((a, row.rhs));
    }
    for j in 0..n {
        let mut e = [0.0; MAXN];
        e[j] = 1.0;
        cons.push((e, inst.var_upper[j].min(big)));
        e[j] = -1.0;
        cons.push((e, -inst.var_lower[j].max(-big)));
    }
    cons
}

/// Minimizes a `≤`-form LP with at most `MAXN` variables by enumerating
/// basic solutions. Infinite bounds are replaced by a box of half-width
/// `1e6`; the LP is declared unbounded when quadrupling the box moves the
/// optimum.
pub fn vertex_enumeration(inst: &MilpInstance) -> Oracle {
    assert!(inst.n_vars() <= MAXN);
    let boxed = inst
        .var_lower
        .iter()
        .chain(&inst.var_upper)
        .any(|v| !v.is_finite());
    let Some(z) = best_vertex(&inst.objective, &constraints(inst, 1e6)) else {
        return Oracle::Infeasible;
    };
    if boxed {
        let wide = best_vertex(&inst.objective, &constraints(inst, 4e6))
            .expect("wider box stays feasible");
        if (wide - z).abs() > 1e-6 * z.abs().max(1.0) {
            return Oracle::Unbounded;
        }
    }
    Oracle::Optimal(z)
}

/// Minimum over all 0/1 points satisfying the rows.
pub fn brute_force_binary(inst: &MilpInstance) -> Option<f64> {
    let n = inst.n_vars();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << n) {
        let x: Vec<f64> = (0..n).map(|j| ((mask >> j) & 1) as f64).collect();
        if inst.rows.iter().all(|r| r.activity(&x) <= r.rhs + 1e-9) {
            let z: f64 = inst.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
            best = Some(best.map_or(z, |b: f64| b.min(z)));
        }
    }
    best
}

/// The feasible set of a bounded instance whose integer variables come
/// first, with at most one trailing continuous variable. Every integer
/// assignment contributes the segment of feasible continuous values, given
/// by its two endpoints (equal for a pure integer instance).
pub fn feasible_points(inst: &MilpInstance) -> Vec<Vec<f64>> {
    let n = inst.n_vars();
    let n_int = inst.integrality.len();
    assert!(inst.integrality.iter().enumerate().all(|(i, &j)| i == j));
    assert!(n - n_int <= 1);
    let lo: Vec<i64> = (0..n_int)
        .map(|j| inst.var_lower[j].ceil() as i64)
        .collect();
    let hi: Vec<i64> = (0..n_int)
        .map(|j| inst.var_upper[j].floor() as i64)
        .collect();
    let mut x: Vec<i64> = lo.clone();
    let mut out = Vec::new();
    loop {
        let mut point: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        if n == n_int {
            if inst.rows.iter().all(|r| r.activity(&point) <= r.rhs + 1e-9) {
                out.push(point);
            }
        } else {
            let (mut ylo, mut yhi) = (inst.var_lower[n_int], inst.var_upper[n_int]);
            point.push(0.0);
            for r in &inst.rows {
                let rest = r.activity(&point);
                let b = coef(r, n_int);
                if b > 0.0 {
                    yhi = yhi.min((r.rhs - rest) / b);
                } else if b < 0.0 {
                    ylo = ylo.max((r.rhs - rest) / b);
                } else if rest > r.rhs + 1e-9 {
                    yhi = f64::NEG_INFINITY;
                }
            }
            if ylo <= yhi + 1e-9 {
                for y in [ylo, yhi.max(ylo)] {
                    let mut p = point.clone();
                    p[n_int] = y;
                    out.push(p);
                }
            }
        }
        let mut j = 0;
        loop {
            if j == n_int {
                return out;
            }
            if x[j] < hi[j] {
                x[j] += 1;
                break;
            }
            x[j] = lo[j];
            j += 1;
        }
    }
}

fn coef(row: &Row, j: usize) -> f64 {
    row.coeffs
        .iter()
        .find(|&&(k, _)| k == j)
        .map_or(0.0, |&(_, v)| v)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    (a + b) / 2.0
}
