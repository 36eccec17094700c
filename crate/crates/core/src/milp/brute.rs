//! Exhaustive enumeration over integer assignments. Used as an independent
//! oracle for the branch-and-bound solver.

use super::{
    check_feasible, Instance, LpModel, LpStatus, MilpError, MipSolution, MipStatus, TOL_FEAS,
};

/// Largest number of integer assignments the oracle will enumerate.
pub const BRUTE_FORCE_MAX_POINTS: f64 = (1u64 << 20) as f64;

pub fn brute_force_opt(inst: &Instance) -> Result<MipSolution, MilpError> {
    let ints: Vec<usize> = inst.integer_vars().collect();
    let mut points = 1.0f64;
    for &j in &ints {
        if !inst.lb[j].is_finite() || !inst.ub[j].is_finite() {
            return Err(MilpError::UnboundedDomain(j));
        }
        points *= inst.ub[j] - inst.lb[j] + 1.0;
    }
    if points > BRUTE_FORCE_MAX_POINTS {
        return Err(MilpError::TooLarge(points));
    }
    let has_continuous = ints.len() < inst.num_vars;
    let model = LpModel::new(inst);

    let mut assign: Vec<f64> = ints.iter().map(|&j| inst.lb[j]).collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut visited = 0usize;
    loop {
        visited += 1;
        let candidate = if has_continuous {
            let mut lb = inst.lb.clone();
            let mut ub = inst.ub.clone();
            for (&j, &v) in ints.iter().zip(&assign) {
                lb[j] = v;
                ub[j] = v;
            }
            let sol = model.solve(&lb, &ub);
            match sol.status {
                LpStatus::Optimal => Some((sol.objective, sol.x)),
                LpStatus::Infeasible => None,
                LpStatus::Unbounded => return Err(MilpError::Unbounded),
                LpStatus::IterLimit => return Err(MilpError::IterLimit),
            }
        } else {
            let x = assign.clone();
            if check_feasible(inst, &x, TOL_FEAS)? {
                Some((inst.objective_value(&x), x))
            } else {
                None
            }
        };
        if let Some((z, x)) = candidate {
            if best.as_ref().is_none_or(|(bz, _)| z < *bz) {
                best = Some((z, x));
            }
        }

        // Odometer increment, first integer variable fastest.
        let mut pos = 0;
        loop {
            if pos == ints.len() {
                return Ok(finish(best, visited));
            }
            let j = ints[pos];
            if assign[pos] < inst.ub[j] {
                assign[pos] += 1.0;
                break;
            }
            assign[pos] = inst.lb[j];
            pos += 1;
        }
    }
}

fn finish(best: Option<(f64, Vec<f64>)>, nodes: usize) -> MipSolution {
    match best {
        Some((z, x)) => MipSolution {
            status: MipStatus::Optimal,
            incumbent: Some(x),
            objective: Some(z),
            dual_bound: z,
            nodes,
        },
        None => MipSolution {
            status: MipStatus::Infeasible,
            incumbent: None,
            objective: None,
            dual_bound: f64::INFINITY,
            nodes,
        },
    }
}
