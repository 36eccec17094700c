//! Best-bound branch-and-bound with most-fractional branching.

use super::{
    check_feasible, Instance, LpModel, LpStatus, MilpError, MipSolution, MipStatus, TOL_FEAS,
    TOL_GAP, TOL_INT,
};
use crate::metrics::BoundEvent;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbLimits {
    pub max_nodes: usize,
    pub max_seconds: f64,
}

impl Default for BnbLimits {
    fn default() -> Self {
        BnbLimits { max_nodes: 100_000, max_seconds: 60.0 }
    }
}

struct Node {
    bound: f64,
    id: u64,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: smallest bound first, then oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.id.cmp(&self.id))
    }
}

fn most_fractional(inst: &Instance, x: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for j in inst.integer_vars() {
        let f = x[j] - x[j].floor();
        let dist = f.min(1.0 - f);
        if dist <= TOL_INT {
            continue;
        }
        if best.is_none_or(|(_, d)| dist > d) {
            best = Some((j, dist));
        }
    }
    best.map(|(j, _)| j)
}

fn prunable(bound: f64, incumbent: f64) -> bool {
    bound >= incumbent - TOL_GAP * incumbent.abs().max(1.0)
}

pub fn solve_bnb(inst: &Instance, limits: BnbLimits) -> Result<MipSolution, MilpError> {
    solve_bnb_traced(inst, limits).map(|(sol, _)| sol)
}

/// Like [`solve_bnb`], additionally returning the primal/dual bound history
/// with wall-clock timestamps.
pub fn solve_bnb_traced(
    inst: &Instance,
    limits: BnbLimits,
) -> Result<(MipSolution, Vec<BoundEvent>), MilpError> {
    let start = Instant::now();
    let model = LpModel::new(inst);
    let mut trace: Vec<BoundEvent> = Vec::new();
    let record = |primal: f64, dual: f64, trace: &mut Vec<BoundEvent>| {
        let time = start.elapsed().as_secs_f64();
        if let Some(last) = trace.last() {
            if last.primal == primal && last.dual == dual {
                return;
            }
        }
        let time = match trace.last() {
            Some(last) if time <= last.time => last.time + 1e-9,
            _ => time,
        };
        trace.push(BoundEvent { time, primal, dual });
    };

    let root = model.solve(&inst.lb, &inst.ub);
    let mut nodes = 1;
    match root.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => {
            return Ok((
                MipSolution {
                    status: MipStatus::Infeasible,
                    incumbent: None,
                    objective: None,
                    dual_bound: f64::INFINITY,
                    nodes,
                },
                trace,
            ))
        }
        LpStatus::Unbounded => return Err(MilpError::Unbounded),
        LpStatus::IterLimit => return Err(MilpError::IterLimit),
    }

    let mut incumbent: Option<Vec<f64>> = None;
    let mut inc_obj = f64::INFINITY;
    let mut next_id = 1;
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: root.objective,
        id: 0,
        lb: inst.lb.clone(),
        ub: inst.ub.clone(),
        x: root.x,
    });
    record(f64::INFINITY, root.objective, &mut trace);

    let mut limit_hit = false;
    while let Some(node) = heap.pop() {
        if prunable(node.bound, inc_obj) {
            continue;
        }
        if nodes >= limits.max_nodes || start.elapsed().as_secs_f64() > limits.max_seconds {
            heap.push(node);
            limit_hit = true;
            break;
        }
        let Some(j) = most_fractional(inst, &node.x) else {
            let mut x = node.x;
            for k in inst.integer_vars() {
                x[k] = x[k].round();
            }
            let z = inst.objective_value(&x);
            if z < inc_obj && check_feasible(inst, &x, TOL_FEAS.max(1e-7))? {
                inc_obj = z;
                incumbent = Some(x);
                let dual = heap.peek().map_or(z, |n| n.bound.min(z));
                record(z, dual, &mut trace);
            }
            continue;
        };
        let v = node.x[j];
        for (child_lb, child_ub) in [(node.lb[j], v.floor()), (v.ceil(), node.ub[j])] {
            if child_lb > child_ub {
                continue;
            }
            let mut lb = node.lb.clone();
            let mut ub = node.ub.clone();
            lb[j] = child_lb;
            ub[j] = child_ub;
            let sol = model.solve(&lb, &ub);
            nodes += 1;
            match sol.status {
                LpStatus::Optimal => {
                    if !prunable(sol.objective, inc_obj) {
                        heap.push(Node { bound: sol.objective, id: next_id, lb, ub, x: sol.x });
                        next_id += 1;
                    }
                }
                LpStatus::Infeasible => {}
                LpStatus::Unbounded => return Err(MilpError::Unbounded),
                LpStatus::IterLimit => return Err(MilpError::IterLimit),
            }
        }
        if let Some(top) = heap.peek() {
            record(inc_obj, top.bound.min(inc_obj), &mut trace);
        }
    }

    let sol = if limit_hit {
        let dual = heap.iter().map(|n| n.bound).fold(inc_obj, f64::min);
        MipSolution {
            status: if incumbent.is_some() { MipStatus::Feasible } else { MipStatus::Limit },
            objective: incumbent.as_ref().map(|_| inc_obj),
            incumbent,
            dual_bound: dual,
            nodes,
        }
    } else if let Some(x) = incumbent {
        record(inc_obj, inc_obj, &mut trace);
        MipSolution {
            status: MipStatus::Optimal,
            incumbent: Some(x),
            objective: Some(inc_obj),
            dual_bound: inc_obj,
            nodes,
        }
    } else {
        MipSolution {
            status: MipStatus::Infeasible,
            incumbent: None,
            objective: None,
            dual_bound: f64::INFINITY,
            nodes,
        }
    };
    Ok((sol, trace))
}
