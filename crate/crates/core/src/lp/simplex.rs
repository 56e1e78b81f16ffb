//! Bounded revised simplex on a dense explicit basis inverse.
//!
//! Rows are `Ax + s = b` with one slack per row. Columns `0..n` are structural,
//! `n..n+m` are slacks. The basis inverse is updated in product form after
//! every pivot and rebuilt from LU factors periodically.

use super::{
    BasisStatus, LpError, LpSolution, LpStatus, LuFactors, DUAL_TOL, FEAS_TOL, INF_BOUND, PIVOT_TOL,
};
use crate::milp::{LpRelaxation, Row};

const REFACTOR_EVERY: usize = 100;
const DEGENERATE_BEFORE_BLAND: usize = 150;
/// Internal feasibility tolerance; tighter than `FEAS_TOL` so that reported
/// solutions satisfy the public tolerance with margin.
const PRIMAL_TOL: f64 = 1e-9;
const REDUCED_TOL: f64 = 1e-9;

fn finite(v: f64) -> bool {
    v.abs() < INF_BOUND
}

fn to_lp_bound(v: f64) -> f64 {
    v.clamp(-INF_BOUND, INF_BOUND)
}

fn ptol(bound: f64) -> f64 {
    PRIMAL_TOL * (1.0 + bound.abs())
}

#[derive(Clone, Copy, PartialEq)]
enum Pass {
    Done,
    Infeasible,
    Unbounded,
}

/// Structural bounds and basis of a [`Simplex`], enough to restart it later
/// on the same rows.
#[derive(Clone, Debug)]
pub struct WarmBasis {
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<BasisStatus>,
    head: Vec<usize>,
}

/// A simplex workspace that keeps its basis between solves.
#[derive(Clone, Debug)]
pub struct Simplex {
    m: usize,
    n: usize,
    /// Column-major structural matrix, `a[j * m + i]`.
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    status: Vec<BasisStatus>,
    head: Vec<usize>,
    /// Row-major `m × m` basis inverse.
    binv: Vec<f64>,
    x: Vec<f64>,
    since_refactor: usize,
    iterations: usize,
    outcome: Option<LpStatus>,
    certificate: Option<Vec<f64>>,
}

impl Simplex {
    pub fn new(relaxation: &LpRelaxation) -> Self {
        let base = &relaxation.base;
        let n = base.n_vars();
        let m = relaxation.n_rows();
        let mut a = vec![0.0; m * n];
        let mut b = Vec::with_capacity(m);
        for (i, row) in relaxation.rows().enumerate() {
            for &(j, v) in &row.coeffs {
                a[j * m + i] = v;
            }
            b.push(row.rhs);
        }
        let mut lower: Vec<f64> = base.var_lower.iter().map(|&v| to_lp_bound(v)).collect();
        let mut upper: Vec<f64> = base.var_upper.iter().map(|&v| to_lp_bound(v)).collect();
        lower.extend(std::iter::repeat_n(0.0, m));
        upper.extend(std::iter::repeat_n(INF_BOUND, m));
        let mut s = Simplex {
            m,
            n,
            a,
            b,
            cost: base.objective.clone(),
            lower,
            upper,
            status: Vec::new(),
            head: Vec::new(),
            binv: Vec::new(),
            x: vec![0.0; n + m],
            since_refactor: 0,
            iterations: 0,
            outcome: None,
            certificate: None,
        };
        s.slack_basis();
        s
    }

    pub fn n_rows(&self) -> usize {
        self.m
    }

    pub fn n_cols(&self) -> usize {
        self.n
    }

    pub fn status(&self) -> Option<LpStatus> {
        self.outcome
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn objective(&self) -> f64 {
        match self.outcome {
            Some(LpStatus::Optimal) => self.primal_objective(),
            Some(LpStatus::Infeasible) => f64::INFINITY,
            Some(LpStatus::Unbounded) => f64::NEG_INFINITY,
            None => f64::NAN,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }

    fn primal_objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    fn col_cost(&self, j: usize) -> f64 {
        if j < self.n {
            self.cost[j]
        } else {
            0.0
        }
    }

    fn col_dot(&self, j: usize, v: &[f64]) -> f64 {
        if j < self.n {
            let col = &self.a[j * self.m..(j + 1) * self.m];
            col.iter().zip(v).map(|(a, b)| a * b).sum()
        } else {
            v[j - self.n]
        }
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut w = vec![0.0; m];
        if j < self.n {
            let nz: Vec<(usize, f64)> = self.a[j * m..(j + 1) * m]
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i, *v))
                .collect();
            for (r, wr) in w.iter_mut().enumerate() {
                let row = &self.binv[r * m..(r + 1) * m];
                *wr = nz.iter().map(|&(i, v)| row[i] * v).sum();
            }
        } else {
            let i = j - self.n;
            for (r, wr) in w.iter_mut().enumerate() {
                *wr = self.binv[r * m + i];
            }
        }
        w
    }

    /// `y = c_Bᵀ B⁻¹` for the given basic costs.
    fn btran(&self, cb: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &c) in cb.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            for (yi, bi) in y.iter_mut().zip(row) {
                *yi += c * bi;
            }
        }
        y
    }

    fn phase2_duals(&self) -> Vec<f64> {
        let cb: Vec<f64> = self.head.iter().map(|&v| self.col_cost(v)).collect();
        self.btran(&cb)
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.upper[j] - self.lower[j] <= 0.0
    }

    fn nonbasic_value(&self, j: usize) -> f64 {
        match self.status[j] {
            BasisStatus::AtLower => self.lower[j],
            BasisStatus::AtUpper => self.upper[j],
            BasisStatus::NonbasicFree => 0.0,
            BasisStatus::Basic => self.x[j],
        }
    }

    fn default_status(&self, j: usize) -> BasisStatus {
        if finite(self.lower[j]) {
            BasisStatus::AtLower
        } else if finite(self.upper[j]) {
            BasisStatus::AtUpper
        } else {
            BasisStatus::NonbasicFree
        }
    }

    fn slack_basis(&mut self) {
        let (m, n) = (self.m, self.n);
        self.status = (0..n).map(|j| self.default_status(j)).collect();
        self.status
            .extend(std::iter::repeat_n(BasisStatus::Basic, m));
        self.head = (n..n + m).collect();
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = 1.0;
        }
        self.since_refactor = 0;
        self.recompute_primal();
    }

    /// Recomputes basic values from the nonbasic ones with the current inverse.
    fn recompute_primal(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut rhs = self.b.clone();
        for j in 0..n + m {
            if self.status[j] == BasisStatus::Basic {
                continue;
            }
            let v = self.nonbasic_value(j);
            self.x[j] = v;
            if v == 0.0 {
                continue;
            }
            if j < n {
                for (i, r) in rhs.iter_mut().enumerate() {
                    *r -= self.a[j * m + i] * v;
                }
            } else {
                rhs[j - n] -= v;
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x[self.head[r]] = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
        }
    }

    fn refactor(&mut self) -> Result<(), LpError> {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        for (k, &v) in self.head.iter().enumerate() {
            if v < self.n {
                for i in 0..m {
                    dense[i * m + k] = self.a[v * m + i];
                }
            } else {
                dense[(v - self.n) * m + k] = 1.0;
            }
        }
        let lu = LuFactors::factorize(m, dense)?;
        self.binv = lu.inverse();
        self.since_refactor = 0;
        self.recompute_primal();
        Ok(())
    }

    fn pivot(&mut self, r: usize, q: usize, w: &[f64]) {
        let m = self.m;
        let pr = w[r];
        let mut pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
        for v in &mut pivot_row {
            *v /= pr;
        }
        for (i, &wi) in w.iter().enumerate() {
            if i == r || wi == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (a, p) in row.iter_mut().zip(&pivot_row) {
                *a -= wi * p;
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);
        self.head[r] = q;
        self.status[q] = BasisStatus::Basic;
        self.since_refactor += 1;
        self.iterations += 1;
    }

    fn iteration_limit(&self) -> usize {
        100 * (self.n + self.m) + 10_000
    }

    fn max_primal_infeasibility(&self) -> f64 {
        self.head
            .iter()
            .map(|&v| {
                let x = self.x[v];
                (self.lower[v] - x).max(x - self.upper[v]).max(0.0)
            })
            .fold(0.0, f64::max)
    }

    fn is_primal_feasible(&self, tol_scale: f64) -> bool {
        self.head.iter().all(|&v| {
            let x = self.x[v];
            x >= self.lower[v] - tol_scale * ptol(self.lower[v])
                && x <= self.upper[v] + tol_scale * ptol(self.upper[v])
        })
    }

    fn is_dual_feasible(&self, tol: f64) -> bool {
        let y = self.phase2_duals();
        (0..self.n + self.m).all(|j| {
            if self.status[j] == BasisStatus::Basic || self.is_fixed(j) {
                return true;
            }
            let d = self.col_cost(j) - self.col_dot(j, &y);
            match self.status[j] {
                BasisStatus::AtLower => d >= -tol,
                BasisStatus::AtUpper => d <= tol,
                BasisStatus::NonbasicFree => d.abs() <= tol,
                BasisStatus::Basic => true,
            }
        })
    }

    /// Primal simplex with a composite phase 1 (sum of infeasibilities).
    fn primal(&mut self) -> Result<Pass, LpError> {
        let (m, n) = (self.m, self.n);
        let limit = self.iterations + self.iteration_limit();
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let mut phase1 = false;
            let mut cb = vec![0.0; m];
            for (r, &v) in self.head.iter().enumerate() {
                let x = self.x[v];
                if x < self.lower[v] - ptol(self.lower[v]) {
                    cb[r] = -1.0;
                    phase1 = true;
                } else if x > self.upper[v] + ptol(self.upper[v]) {
                    cb[r] = 1.0;
                    phase1 = true;
                }
            }
            if !phase1 {
                for (r, &v) in self.head.iter().enumerate() {
                    cb[r] = self.col_cost(v);
                }
            }
            let y = self.btran(&cb);

            let mut entering: Option<(usize, f64)> = None;
            for j in 0..n + m {
                if self.status[j] == BasisStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let cj = if phase1 { 0.0 } else { self.col_cost(j) };
                let d = cj - self.col_dot(j, &y);
                let improving = match self.status[j] {
                    BasisStatus::AtLower => d < -REDUCED_TOL,
                    BasisStatus::AtUpper => d > REDUCED_TOL,
                    BasisStatus::NonbasicFree => d.abs() > REDUCED_TOL,
                    BasisStatus::Basic => false,
                };
                if !improving {
                    continue;
                }
                if bland {
                    entering = Some((j, d));
                    break;
                }
                if entering.is_none_or(|(_, best)| d.abs() > best.abs()) {
                    entering = Some((j, d));
                }
            }
            let Some((q, dq)) = entering else {
                if phase1 {
                    self.certificate = Some(y);
                    return Ok(Pass::Infeasible);
                }
                return Ok(Pass::Done);
            };
            let dir = if dq < 0.0 { 1.0 } else { -1.0 };
            let w = self.ftran(q);

            // Harris two-pass ratio test; each candidate records (row, ratio, leaves_at_upper).
            let mut candidates: Vec<(usize, f64, bool)> = Vec::new();
            let mut theta_max = f64::INFINITY;
            for (r, &wr) in w.iter().enumerate() {
                if wr.abs() < PIVOT_TOL {
                    continue;
                }
                let rate = -dir * wr;
                let v = self.head[r];
                let (x, l, u) = (self.x[v], self.lower[v], self.upper[v]);
                let below = x < l - ptol(l);
                let above = x > u + ptol(u);
                let hit = if phase1 && below {
                    (rate > 0.0).then(|| ((l - x) / rate, (l - x + ptol(l)) / rate, false))
                } else if phase1 && above {
                    (rate < 0.0).then(|| ((x - u) / -rate, (x - u + ptol(u)) / -rate, true))
                } else if rate < 0.0 && finite(l) {
                    Some(((x - l) / -rate, (x - l + ptol(l)) / -rate, false))
                } else if rate > 0.0 && finite(u) {
                    Some(((u - x) / rate, (u - x + ptol(u)) / rate, true))
                } else {
                    None
                };
                if let Some((ratio, relaxed, at_upper)) = hit {
                    theta_max = theta_max.min(relaxed);
                    candidates.push((r, ratio.max(0.0), at_upper));
                }
            }
            let span = if finite(self.lower[q]) && finite(self.upper[q]) {
                Some(self.upper[q] - self.lower[q])
            } else {
                None
            };

            let chosen = if bland {
                candidates.iter().copied().min_by(|a, b| {
                    a.1.partial_cmp(&b.1)
                        .unwrap()
                        .then(self.head[a.0].cmp(&self.head[b.0]))
                })
            } else {
                candidates
                    .iter()
                    .copied()
                    .filter(|c| c.1 <= theta_max)
                    .fold(None, |best: Option<(usize, f64, bool)>, c| match best {
                        Some(b) if w[b.0].abs() >= w[c.0].abs() => Some(b),
                        _ => Some(c),
                    })
            };

            let flip = match (span, chosen) {
                (Some(s), Some(c)) => s <= c.1,
                (Some(_), None) => true,
                (None, _) => false,
            };
            if flip {
                let s = span.unwrap();
                for (r, &wr) in w.iter().enumerate() {
                    let v = self.head[r];
                    self.x[v] -= dir * s * wr;
                }
                self.status[q] = if dir > 0.0 {
                    BasisStatus::AtUpper
                } else {
                    BasisStatus::AtLower
                };
                self.x[q] = self.nonbasic_value(q);
                self.iterations += 1;
                degenerate = 0;
                continue;
            }
            let Some((r, theta, at_upper)) = chosen else {
                if phase1 {
                    return Err(LpError::NumericalBreakdown {
                        pivot_tol: PIVOT_TOL,
                    });
                }
                let mut ray = vec![0.0; n];
                if q < n {
                    ray[q] = dir;
                }
                for (r, &v) in self.head.iter().enumerate() {
                    if v < n {
                        ray[v] = -dir * w[r];
                    }
                }
                self.certificate = Some(ray);
                return Ok(Pass::Unbounded);
            };

            for (i, &wi) in w.iter().enumerate() {
                let v = self.head[i];
                self.x[v] -= dir * theta * wi;
            }
            self.x[q] += dir * theta;
            let leaving = self.head[r];
            self.status[leaving] = if at_upper {
                BasisStatus::AtUpper
            } else {
                BasisStatus::AtLower
            };
            self.x[leaving] = self.nonbasic_value(leaving);
            self.pivot(r, q, &w);

            if theta <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    /// Dual simplex; assumes the current basis is dual feasible.
    fn dual(&mut self) -> Result<Pass, LpError> {
        let (m, n) = (self.m, self.n);
        let limit = self.iterations + self.iteration_limit();
        let mut degenerate = 0usize;
        let mut bland = false;
        let mut retries = 0usize;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let mut leave: Option<(usize, f64)> = None;
            for (r, &v) in self.head.iter().enumerate() {
                let x = self.x[v];
                let infeas = if x < self.lower[v] - ptol(self.lower[v]) {
                    self.lower[v] - x
                } else if x > self.upper[v] + ptol(self.upper[v]) {
                    x - self.upper[v]
                } else {
                    continue;
                };
                let better = match leave {
                    None => true,
                    Some((br, bi)) => {
                        if bland {
                            v < self.head[br]
                        } else {
                            infeas > bi
                        }
                    }
                };
                if better {
                    leave = Some((r, infeas));
                }
            }
            let Some((r, _)) = leave else {
                return Ok(Pass::Done);
            };
            let v = self.head[r];
            let below = self.x[v] < self.lower[v];
            let rho: Vec<f64> = self.binv[r * m..(r + 1) * m].to_vec();
            let y = self.phase2_duals();

            let mut candidates: Vec<(usize, f64, f64)> = Vec::new();
            let mut t_max = f64::INFINITY;
            for j in 0..n + m {
                if self.status[j] == BasisStatus::Basic || self.is_fixed(j) {
                    continue;
                }
                let alpha = self.col_dot(j, &rho);
                let a = if below { -alpha } else { alpha };
                let d = self.col_cost(j) - self.col_dot(j, &y);
                let hit = match self.status[j] {
                    BasisStatus::AtLower if a > PIVOT_TOL => {
                        Some((d.max(0.0) / a, (d + REDUCED_TOL) / a))
                    }
                    BasisStatus::AtUpper if a < -PIVOT_TOL => {
                        Some((d.min(0.0) / a, (d - REDUCED_TOL) / a))
                    }
                    BasisStatus::NonbasicFree if a.abs() > PIVOT_TOL => {
                        Some((0.0, REDUCED_TOL / a.abs()))
                    }
                    _ => None,
                };
                if let Some((ratio, relaxed)) = hit {
                    t_max = t_max.min(relaxed);
                    candidates.push((j, ratio, a));
                }
            }
            let chosen = if bland {
                candidates
                    .iter()
                    .copied()
                    .min_by(|x, z| x.1.partial_cmp(&z.1).unwrap().then(x.0.cmp(&z.0)))
            } else {
                candidates.iter().copied().filter(|c| c.1 <= t_max).fold(
                    None,
                    |best: Option<(usize, f64, f64)>, c| match best {
                        Some(b) if b.2.abs() >= c.2.abs() => Some(b),
                        _ => Some(c),
                    },
                )
            };
            let Some((q, t, alpha_q)) = chosen else {
                self.certificate = Some(if below {
                    rho.iter().map(|v| -v).collect()
                } else {
                    rho
                });
                return Ok(Pass::Infeasible);
            };
            let w = self.ftran(q);
            let alpha_expected = if below { -alpha_q } else { alpha_q };
            if (w[r] - alpha_expected).abs() > 1e-7 * (1.0 + w[r].abs()) {
                retries += 1;
                if retries > 3 {
                    return Err(LpError::NumericalBreakdown {
                        pivot_tol: PIVOT_TOL,
                    });
                }
                self.refactor()?;
                continue;
            }
            let target_upper = !below;
            let target = if below { self.lower[v] } else { self.upper[v] };
            let delta = (self.x[v] - target) / w[r];
            for (i, &wi) in w.iter().enumerate() {
                let hv = self.head[i];
                self.x[hv] -= wi * delta;
            }
            self.x[q] += delta;
            self.status[v] = if target_upper {
                BasisStatus::AtUpper
            } else {
                BasisStatus::AtLower
            };
            self.x[v] = target;
            self.pivot(r, q, &w);

            if t <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_BEFORE_BLAND {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor()?;
            }
        }
    }

    /// Re-optimizes from the current basis: dual simplex when the basis is
    /// dual feasible, primal simplex otherwise.
    pub fn reoptimize(&mut self) -> Result<LpStatus, LpError> {
        self.certificate = None;
        for _ in 0..4 {
            let use_dual = self.is_dual_feasible(DUAL_TOL * 1e-2) && !self.is_primal_feasible(1.0);
            let pass = if use_dual {
                self.dual()?
            } else {
                self.primal()?
            };
            match pass {
                Pass::Infeasible => {
                    self.outcome = Some(LpStatus::Infeasible);
                    return Ok(LpStatus::Infeasible);
                }
                Pass::Unbounded => {
                    self.outcome = Some(LpStatus::Unbounded);
                    return Ok(LpStatus::Unbounded);
                }
                Pass::Done => {
                    if self.since_refactor > 30 {
                        self.refactor()?;
                    } else {
                        self.recompute_primal();
                    }
                    if self.is_primal_feasible(10.0) && self.is_dual_feasible(DUAL_TOL) {
                        self.outcome = Some(LpStatus::Optimal);
                        return Ok(LpStatus::Optimal);
                    }
                    log::debug!(
                        "simplex clean-up pass, primal infeasibility {:.3e}",
                        self.max_primal_infeasibility()
                    );
                }
            }
        }
        Err(LpError::NumericalBreakdown {
            pivot_tol: PIVOT_TOL,
        })
    }

    /// Rebuilds the basis inverse from scratch and recomputes the primal point.
    pub fn refresh(&mut self) -> Result<(), LpError> {
        self.refactor()
    }

    /// Solves from a cold slack basis.
    pub fn solve(&mut self) -> Result<LpStatus, LpError> {
        self.slack_basis();
        self.reoptimize()
    }

    /// Re-optimizes from the current basis and falls back to a cold start if
    /// the warm path breaks down numerically. A warm infeasibility verdict
    /// is confirmed from scratch, since a drifted basis inverse can produce
    /// a spurious one after many appended rows.
    pub fn resolve(&mut self) -> Result<LpStatus, LpError> {
        match self.reoptimize() {
            Ok(LpStatus::Infeasible) => {
                log::debug!("warm start reports infeasible, confirming from scratch");
                self.solve()
            }
            Ok(s) => Ok(s),
            Err(e) => {
                log::debug!("warm start failed ({e}), solving from scratch");
                self.solve()
            }
        }
    }

    /// Appends the row `rowᵀx ≤ rhs` with its slack basic, keeping the
    /// current basis (bordered inverse).
    pub fn add_row(&mut self, row: &Row) {
        let (m, n) = (self.m, self.n);
        let mut dense = vec![0.0; n];
        for &(j, v) in &row.coeffs {
            dense[j] = v;
        }
        let mut a = Vec::with_capacity((m + 1) * n);
        for (j, &dj) in dense.iter().enumerate() {
            a.extend_from_slice(&self.a[j * m..(j + 1) * m]);
            a.push(dj);
        }
        self.a = a;
        self.b.push(row.rhs);
        self.lower.push(0.0);
        self.upper.push(INF_BOUND);
        self.status.push(BasisStatus::Basic);

        let r_b: Vec<f64> = self
            .head
            .iter()
            .map(|&v| if v < n { dense[v] } else { 0.0 })
            .collect();
        let mut last = vec![0.0; m + 1];
        for (k, &rk) in r_b.iter().enumerate() {
            if rk == 0.0 {
                continue;
            }
            let row_k = &self.binv[k * m..(k + 1) * m];
            for (l, bk) in last.iter_mut().zip(row_k) {
                *l -= rk * bk;
            }
        }
        last[m] = 1.0;
        let mut binv = Vec::with_capacity((m + 1) * (m + 1));
        for r in 0..m {
            binv.extend_from_slice(&self.binv[r * m..(r + 1) * m]);
            binv.push(0.0);
        }
        binv.extend_from_slice(&last);
        self.binv = binv;
        self.head.push(n + m);
        let activity: f64 = row.coeffs.iter().map(|&(j, v)| v * self.x[j]).sum();
        self.x.push(row.rhs - activity);
        self.m = m + 1;
        self.outcome = None;
    }

    /// Changes the bounds of a structural variable, keeping the basis.
    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = to_lp_bound(lower);
        self.upper[j] = to_lp_bound(upper);
        if self.status[j] != BasisStatus::Basic {
            let keep = match self.status[j] {
                BasisStatus::AtLower => finite(self.lower[j]),
                BasisStatus::AtUpper => finite(self.upper[j]),
                _ => false,
            };
            if !keep {
                self.status[j] = self.default_status(j);
            }
            self.recompute_primal();
        }
        self.outcome = None;
    }

    /// Reduced costs `c_j − yᵀa_j` of the structural columns, zero when basic.
    pub fn reduced_costs(&self) -> Vec<f64> {
        let y = self.phase2_duals();
        (0..self.n)
            .map(|j| {
                if self.status[j] == BasisStatus::Basic {
                    0.0
                } else {
                    self.cost[j] - self.col_dot(j, &y)
                }
            })
            .collect()
    }

    pub fn var_status(&self, j: usize) -> BasisStatus {
        self.status[j]
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn solution(&self) -> LpSolution {
        let (m, n) = (self.m, self.n);
        let status = self.outcome.unwrap_or(LpStatus::Infeasible);
        let y = self.phase2_duals();
        let reduced_costs = (0..n)
            .map(|j| {
                if self.status[j] == BasisStatus::Basic {
                    0.0
                } else {
                    self.cost[j] - self.col_dot(j, &y)
                }
            })
            .collect();
        LpSolution {
            status,
            objective: self.objective(),
            primal: self.x[..n].to_vec(),
            slacks: self.x[n..n + m].to_vec(),
            duals: y,
            reduced_costs,
            var_status: self.status[..n].to_vec(),
            row_status: self.status[n..n + m].to_vec(),
            iterations: self.iterations,
            certificate: self.certificate.clone(),
        }
    }

    pub fn snapshot(&self) -> WarmBasis {
        WarmBasis {
            lower: self.lower[..self.n].to_vec(),
            upper: self.upper[..self.n].to_vec(),
            status: self.status.clone(),
            head: self.head.clone(),
        }
    }

    /// Installs a snapshot taken on a workspace with the same rows. A basis
    /// that no longer factorizes is replaced by the slack basis.
    pub fn restore(&mut self, warm: &WarmBasis) {
        assert_eq!(warm.head.len(), self.m, "snapshot taken on different rows");
        self.lower[..self.n].copy_from_slice(&warm.lower);
        self.upper[..self.n].copy_from_slice(&warm.upper);
        self.status.clone_from(&warm.status);
        self.head.clone_from(&warm.head);
        self.outcome = None;
        self.certificate = None;
        if self.refactor().is_err() {
            self.slack_basis();
        }
    }

    /// Basic variable indices in basis order.
    pub fn basis_head(&self) -> &[usize] {
        &self.head
    }

    /// True when the stored solution is optimal within the public tolerances.
    pub fn certified(&self) -> bool {
        self.outcome == Some(LpStatus::Optimal)
            && self.max_primal_infeasibility() <= FEAS_TOL
            && self.is_dual_feasible(DUAL_TOL)
    }
}
