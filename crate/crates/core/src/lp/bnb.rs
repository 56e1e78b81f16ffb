//! Branch and bound used as the `z^OPT` oracle.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BasisStatus, LpError, LpStatus, Simplex, WarmBasis, INT_TOL};
use crate::milp::{normalize, LpRelaxation, MilpError, MilpInstance};
use crate::separators::{parallelism, separate, Cut};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BnbError {
    #[error("node limit of {0} reached without an integer-feasible point")]
    NodeLimitReached(usize),
    #[error("instance is integer infeasible")]
    Infeasible,
    #[error("relaxation is unbounded")]
    Unbounded,
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Milp(#[from] MilpError),
}

/// Best integer solution found, in the normalized (minimization) sense.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MilpBound {
    pub z_opt: f64,
    pub incumbent: Vec<f64>,
    pub nodes_explored: usize,
    pub proved_optimal: bool,
}

/// An open node: its parent's bound, a creation stamp for deterministic
/// ordering, and the parent's basis with the branching bound applied.
struct Open {
    bound: f64,
    stamp: usize,
    warm: WarmBasis,
    from: Branch,
}

/// The branching step that created a node.
#[derive(Clone, Copy)]
struct Branch {
    var: usize,
    up: bool,
    /// Distance the variable was pushed, `f` down or `1 − f` up.
    delta: f64,
    parent_z: f64,
}

/// Average objective gain per unit of rounding, per variable and direction.
struct Pseudocosts {
    sum: [Vec<f64>; 2],
    count: [Vec<u32>; 2],
}

impl Pseudocosts {
    fn new(n: usize) -> Self {
        Pseudocosts {
            sum: [vec![0.0; n], vec![0.0; n]],
            count: [vec![0; n], vec![0; n]],
        }
    }

    fn record(&mut self, b: &Branch, z: f64) {
        let d = b.up as usize;
        self.sum[d][b.var] += (z - b.parent_z).max(0.0) / b.delta;
        self.count[d][b.var] += 1;
    }

    /// Pseudocost of `j`, falling back to the mean over initialized
    /// variables (or 1) when `j` has no history yet.
    fn get(&self, j: usize, up: bool) -> f64 {
        let d = up as usize;
        if self.count[d][j] > 0 {
            return self.sum[d][j] / self.count[d][j] as f64;
        }
        let (mut s, mut k) = (0.0, 0u32);
        for (v, &c) in self.sum[d].iter().zip(&self.count[d]) {
            if c > 0 {
                s += v / c as f64;
                k += 1;
            }
        }
        if k == 0 {
            1.0
        } else {
            s / k as f64
        }
    }
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Open {}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Open {
    // Max-heap on the reversed key: smallest bound first, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(other.stamp.cmp(&self.stamp))
    }
}

fn integral_objective(inst: &MilpInstance) -> bool {
    let mask = inst.integer_mask();
    inst.objective
        .iter()
        .zip(&mask)
        .all(|(&c, &int)| if int { c == c.round() } else { c == 0.0 })
}

/// Tightens integer bounds of nonbasic columns whose reduced cost alone
/// would push the bound past the cutoff. The basis stays optimal.
fn fix_by_reduced_cost(lp: &mut Simplex, integer: &[usize], slack: f64) {
    if slack < 0.0 {
        return;
    }
    let d = lp.reduced_costs();
    for &j in integer {
        let (l, u) = lp.bounds(j);
        if l == u {
            continue;
        }
        match lp.var_status(j) {
            BasisStatus::AtLower if d[j] > 1e-9 => {
                let reach = (slack / d[j] + 1e-9).floor();
                if l + reach < u {
                    lp.set_bounds(j, l, l + reach);
                }
            }
            BasisStatus::AtUpper if d[j] < -1e-9 => {
                let reach = (slack / -d[j] + 1e-9).floor();
                if u - reach > l {
                    lp.set_bounds(j, u - reach, u);
                }
            }
            _ => {}
        }
    }
}

const ROOT_CUT_ROUNDS: usize = 10;
const ROOT_CUTS_PER_ROUND: usize = 8;
const ROOT_MAX_PARALLELISM: f64 = 0.9;

/// Strengthens the root relaxation with a few rounds of Gomory cuts, taking
/// the most efficacious, pairwise non-parallel cuts of each round. `lp` must
/// hold an optimal basis for `relax`.
fn root_cuts(relax: &mut LpRelaxation, lp: &mut Simplex) -> Result<(), BnbError> {
    for _ in 0..ROOT_CUT_ROUNDS {
        let z = lp.objective();
        let solution = lp.solution();
        let mut pool = separate(&solution, relax)?.cuts;
        let eff = |c: &Cut| c.violation(&solution.primal) / c.row.norm();
        pool.sort_by(|a, b| eff(b).total_cmp(&eff(a)));
        let mut chosen: Vec<Cut> = Vec::new();
        for cut in pool {
            if chosen.len() == ROOT_CUTS_PER_ROUND {
                break;
            }
            let parallel = chosen
                .iter()
                .any(|c| parallelism(&c.row, &cut.row).map_or(true, |p| p > ROOT_MAX_PARALLELISM));
            if !parallel {
                chosen.push(cut);
            }
        }
        if chosen.is_empty() {
            break;
        }
        for cut in chosen {
            lp.add_row(&cut.row);
            relax.push_cut(cut.row)?;
        }
        match lp.resolve()? {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Err(BnbError::Infeasible),
            LpStatus::Unbounded => return Err(BnbError::Unbounded),
        }
        if lp.objective() - z <= 1e-6 * (1.0 + z.abs()) {
            break;
        }
    }
    Ok(())
}

/// Solves the instance by branch and bound with pseudocost branching:
/// plunges into one child and otherwise picks the open node with the best
/// bound. The objective is that of the normalized instance.
pub fn solve_milp_bnb(instance: &MilpInstance, node_limit: usize) -> Result<MilpBound, BnbError> {
    let inst = if instance.is_normalized() {
        instance.clone()
    } else {
        normalize(instance)?
    };
    let int_obj = integral_objective(&inst);
    let all_integer = inst.integrality.len() == inst.n_vars();
    let integer = inst.integrality.clone();
    let mut inst = inst;
    for &j in &integer {
        inst.var_lower[j] = inst.var_lower[j].ceil();
        inst.var_upper[j] = inst.var_upper[j].floor();
        if inst.var_lower[j] > inst.var_upper[j] {
            return Err(BnbError::Infeasible);
        }
    }
    let mut relax = LpRelaxation::new(Arc::new(inst))?;
    let objective = relax.base.objective.clone();

    let mut lp = Simplex::new(&relax);
    match lp.solve()? {
        LpStatus::Infeasible => return Err(BnbError::Infeasible),
        LpStatus::Unbounded => return Err(BnbError::Unbounded),
        LpStatus::Optimal => root_cuts(&mut relax, &mut lp)?,
    }
    let mut open: BinaryHeap<Open> = BinaryHeap::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut nodes = 0usize;
    let mut stamp = 0usize;
    let mut plunging = true;
    let mut current: Option<Branch> = None;
    let mut pseudo = Pseudocosts::new(objective.len());
    let cutoff_of = |inc: f64| {
        if int_obj {
            inc - 1.0 + 1e-6
        } else {
            inc - 1e-9 * (1.0 + inc.abs())
        }
    };

    loop {
        if !plunging {
            let Some(node) = open.pop() else { break };
            if let Some((inc, _)) = &best {
                if node.bound > cutoff_of(*inc) {
                    continue;
                }
            }
            lp.restore(&node.warm);
            current = Some(node.from);
        }
        if nodes >= node_limit {
            return match best {
                Some((z, x)) => Ok(MilpBound {
                    z_opt: z,
                    incumbent: x,
                    nodes_explored: nodes,
                    proved_optimal: false,
                }),
                None => Err(BnbError::NodeLimitReached(node_limit)),
            };
        }
        nodes += 1;
        plunging = false;
        match lp.resolve()? {
            LpStatus::Infeasible | LpStatus::Unbounded => continue,
            LpStatus::Optimal => {}
        }
        let z = lp.objective();
        if let Some(b) = current.take() {
            pseudo.record(&b, z);
        }
        if let Some((inc, _)) = &best {
            if z > cutoff_of(*inc) {
                continue;
            }
            let cutoff = if int_obj { inc - 1.0 + 1e-6 } else { *inc };
            fix_by_reduced_cost(&mut lp, &integer, cutoff - z);
        }
        let x = lp.values();
        let mut pick: Option<(usize, f64)> = None;
        for &j in &integer {
            let f = x[j] - x[j].floor();
            if f.min(1.0 - f) <= INT_TOL {
                continue;
            }
            let score =
                (pseudo.get(j, false) * f).max(1e-6) * (pseudo.get(j, true) * (1.0 - f)).max(1e-6);
            if pick.is_none_or(|(_, s)| score > s) {
                pick = Some((j, score));
            }
        }
        let Some((j, _)) = pick else {
            let mut point = x.to_vec();
            for &k in &integer {
                point[k] = point[k].round();
            }
            let value = if all_integer {
                objective.iter().zip(&point).map(|(c, v)| c * v).sum()
            } else {
                z
            };
            if best.as_ref().is_none_or(|(inc, _)| value < *inc) {
                best = Some((value, point));
            }
            continue;
        };
        let v = x[j];
        let f = v - v.floor();
        let (l, u) = lp.bounds(j);
        let down = (l, v.floor(), false, f);
        let up = (v.ceil(), u, true, 1.0 - f);
        let (first, second) = if f >= 0.5 { (up, down) } else { (down, up) };
        let branch = |(_, _, up, delta): (f64, f64, bool, f64)| Branch {
            var: j,
            up,
            delta,
            parent_z: z,
        };
        if second.0 <= second.1 {
            lp.set_bounds(j, second.0, second.1);
            stamp += 1;
            open.push(Open {
                bound: z,
                stamp,
                warm: lp.snapshot(),
                from: branch(second),
            });
        }
        if first.0 <= first.1 {
            lp.set_bounds(j, first.0, first.1);
            current = Some(branch(first));
            plunging = true;
        }
    }
    match best {
        Some((z, x)) => Ok(MilpBound {
            z_opt: z,
            incumbent: x,
            nodes_explored: nodes,
            proved_optimal: true,
        }),
        None => Err(BnbError::Infeasible),
    }
}
