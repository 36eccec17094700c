//! MILP data model and the reference solvers built on it.
//!
//! An [`Instance`] is a minimization problem in sparse triplet form:
//!
//! ```text
//! min  c·x
//! s.t. A_i·x  {<=, >=, =}  b_i        for every row i
//!      lb <= x <= ub
//!      x_j integer                     for j with is_int[j]
//! ```

mod bnb;
mod brute;
mod lp;

pub use bnb::{solve_bnb, solve_bnb_traced, BnbLimits};
pub use brute::{brute_force_opt, BRUTE_FORCE_MAX_POINTS};
pub use lp::{solve_lp, BoundOverrides, LpModel, LpSolution, LpStatus};

use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

/// Primal feasibility tolerance used by the LP solver.
pub const TOL_FEAS: f64 = 1e-9;
/// Distance to the nearest integer below which a value counts as integral.
pub const TOL_INT: f64 = 1e-7;
/// Optimality gap under which a MIP status is reported as proven.
pub const TOL_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MilpError {
    #[error("duplicate matrix entry at ({row}, {col})")]
    DuplicateEntry { row: usize, col: usize },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("empty bound box for variable {0}")]
    EmptyBoundBox(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("instance must have at least one variable")]
    NoVariables,
    #[error("enumeration space of {0} points exceeds the brute-force limit")]
    TooLarge(f64),
    #[error("integer variable {0} has an infinite bound; cannot enumerate")]
    UnboundedDomain(usize),
    #[error("problem is unbounded")]
    Unbounded,
    #[error("LP iteration limit reached")]
    IterLimit,
    #[error("instance could not be solved to optimality")]
    Unsolved,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sense {
    #[serde(rename = "LE")]
    Le,
    #[serde(rename = "GE")]
    Ge,
    #[serde(rename = "EQ")]
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triplet {
    pub row: usize,
    pub col: usize,
    pub coef: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub num_vars: usize,
    pub num_cons: usize,
    pub obj: Vec<f64>,
    pub cons: Vec<Triplet>,
    pub rhs: Vec<f64>,
    pub sense: Vec<Sense>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub is_int: Vec<bool>,
}

impl Instance {
    /// An instance with `num_vars` continuous variables in `[0, +inf)`, zero
    /// objective and no rows.
    pub fn new(name: impl Into<String>, num_vars: usize) -> Self {
        Instance {
            name: name.into(),
            num_vars,
            num_cons: 0,
            obj: vec![0.0; num_vars],
            cons: Vec::new(),
            rhs: Vec::new(),
            sense: Vec::new(),
            lb: vec![0.0; num_vars],
            ub: vec![f64::INFINITY; num_vars],
            is_int: vec![false; num_vars],
        }
    }

    /// Appends a row and returns its index.
    pub fn add_row(&mut self, coefs: &[(usize, f64)], sense: Sense, rhs: f64) -> usize {
        let row = self.num_cons;
        for &(col, coef) in coefs {
            self.cons.push(Triplet { row, col, coef });
        }
        self.sense.push(sense);
        self.rhs.push(rhs);
        self.num_cons += 1;
        row
    }

    pub fn set_binary(&mut self, j: usize) {
        self.is_int[j] = true;
        self.lb[j] = 0.0;
        self.ub[j] = 1.0;
    }

    pub fn integer_vars(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_vars).filter(move |&j| self.is_int[j])
    }

    pub fn is_binary(&self, j: usize) -> bool {
        self.is_int[j] && self.lb[j] == 0.0 && self.ub[j] == 1.0
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.obj.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Row activities `A·x`.
    pub fn activities(&self, x: &[f64]) -> Vec<f64> {
        let mut act = vec![0.0; self.num_cons];
        for t in &self.cons {
            act[t.row] += t.coef * x[t.col];
        }
        act
    }

    /// Number of nonzero matrix entries per column.
    pub fn column_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_vars];
        for t in &self.cons {
            if t.coef != 0.0 {
                counts[t.col] += 1;
            }
        }
        counts
    }
}

/// Checks every structural invariant and rounds the bounds of integer
/// variables inward.
pub fn validate_instance(inst: &mut Instance) -> Result<(), MilpError> {
    if inst.num_vars == 0 {
        return Err(MilpError::NoVariables);
    }
    let n = inst.num_vars;
    let m = inst.num_cons;
    for (what, len, expected) in [
        ("obj", inst.obj.len(), n),
        ("lb", inst.lb.len(), n),
        ("ub", inst.ub.len(), n),
        ("is_int", inst.is_int.len(), n),
        ("rhs", inst.rhs.len(), m),
        ("sense", inst.sense.len(), m),
    ] {
        if len != expected {
            return Err(MilpError::IndexOutOfRange(format!(
                "{what} has length {len}, expected {expected}"
            )));
        }
    }
    let mut seen = HashSet::with_capacity(inst.cons.len());
    for t in &inst.cons {
        if t.row >= m || t.col >= n {
            return Err(MilpError::IndexOutOfRange(format!(
                "triplet ({}, {}) outside {m}x{n}",
                t.row, t.col
            )));
        }
        if !t.coef.is_finite() {
            return Err(MilpError::NonFinite(format!("coefficient ({}, {})", t.row, t.col)));
        }
        if !seen.insert((t.row, t.col)) {
            return Err(MilpError::DuplicateEntry { row: t.row, col: t.col });
        }
    }
    if let Some(j) = inst.obj.iter().position(|c| !c.is_finite()) {
        return Err(MilpError::NonFinite(format!("objective coefficient {j}")));
    }
    if let Some(i) = inst.rhs.iter().position(|b| !b.is_finite()) {
        return Err(MilpError::NonFinite(format!("rhs {i}")));
    }
    for j in 0..n {
        let (lb, ub) = (inst.lb[j], inst.ub[j]);
        if lb.is_nan() || ub.is_nan() || lb == f64::INFINITY || ub == f64::NEG_INFINITY {
            return Err(MilpError::NonFinite(format!("bounds of variable {j}")));
        }
        if inst.is_int[j] {
            if lb.is_finite() {
                inst.lb[j] = (lb - TOL_INT).ceil() + 0.0; // no -0.0
            }
            if ub.is_finite() {
                inst.ub[j] = (ub + TOL_INT).floor() + 0.0;
            }
        }
        if inst.lb[j] > inst.ub[j] {
            return Err(MilpError::EmptyBoundBox(j));
        }
    }
    Ok(())
}

/// Per-variable lock counts: how many rows may become violated when the
/// variable moves down or up.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LockCounts {
    pub nlocksdown: Vec<usize>,
    pub nlocksup: Vec<usize>,
}

impl LockCounts {
    pub fn may_round_down(&self, j: usize) -> bool {
        self.nlocksdown[j] == 0
    }

    pub fn may_round_up(&self, j: usize) -> bool {
        self.nlocksup[j] == 0
    }
}

pub fn compute_locks(inst: &Instance) -> LockCounts {
    let mut down = vec![0; inst.num_vars];
    let mut up = vec![0; inst.num_vars];
    for t in &inst.cons {
        if t.coef == 0.0 {
            continue;
        }
        let positive = t.coef > 0.0;
        match inst.sense[t.row] {
            Sense::Le if positive => up[t.col] += 1,
            Sense::Le => down[t.col] += 1,
            Sense::Ge if positive => down[t.col] += 1,
            Sense::Ge => up[t.col] += 1,
            Sense::Eq => {
                up[t.col] += 1;
                down[t.col] += 1;
            }
        }
    }
    LockCounts { nlocksdown: down, nlocksup: up }
}

/// `true` iff `x` satisfies every row, every bound, and integrality of every
/// integer variable, each within `tol`.
pub fn check_feasible(inst: &Instance, x: &[f64], tol: f64) -> Result<bool, MilpError> {
    if x.len() != inst.num_vars {
        return Err(MilpError::DimensionMismatch { expected: inst.num_vars, found: x.len() });
    }
    for j in 0..inst.num_vars {
        let v = x[j];
        if !v.is_finite() || v < inst.lb[j] - tol || v > inst.ub[j] + tol {
            return Ok(false);
        }
        if inst.is_int[j] && (v - v.round()).abs() > tol {
            return Ok(false);
        }
    }
    let act = inst.activities(x);
    for (i, a) in act.iter().enumerate() {
        let b = inst.rhs[i];
        let ok = match inst.sense[i] {
            Sense::Le => *a <= b + tol,
            Sense::Ge => *a >= b - tol,
            Sense::Eq => (a - b).abs() <= tol,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `|z*_LP - z*|`, the distance between the root relaxation and the MILP
/// optimum.
pub fn integrality_gap(inst: &Instance) -> Result<f64, MilpError> {
    let root = solve_lp(inst, None);
    if root.status != LpStatus::Optimal {
        return Err(MilpError::Unsolved);
    }
    let mip = solve_bnb(inst, BnbLimits::default()).map_err(|_| MilpError::Unsolved)?;
    match (mip.status, mip.objective) {
        (MipStatus::Optimal, Some(z)) => Ok((root.objective - z).abs()),
        _ => Err(MilpError::Unsolved),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MipStatus {
    Optimal,
    Feasible,
    Infeasible,
    Limit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipSolution {
    pub status: MipStatus,
    pub incumbent: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Valid lower bound on the optimum. `+inf` once infeasibility is proven.
    pub dual_bound: f64,
    pub nodes: usize,
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// min -x1 - x2  s.t.  2x1 + 2x2 <= 3,  x in [0,1]^2.
    pub fn two_var(binary: bool) -> Instance {
        let mut inst = Instance::new("two_var", 2);
        inst.obj = vec![-1.0, -1.0];
        inst.ub = vec![1.0, 1.0];
        if binary {
            inst.set_binary(0);
            inst.set_binary(1);
        }
        inst.add_row(&[(0, 2.0), (1, 2.0)], Sense::Le, 3.0);
        inst
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::two_var;
    use super::*;

    #[test]
    fn validate_accepts_knapsack() {
        let mut inst = two_var(true);
        assert_eq!(validate_instance(&mut inst), Ok(()));
    }

    #[test]
    fn validate_rejects_duplicate() {
        let mut inst = two_var(true);
        inst.cons.push(Triplet { row: 0, col: 1, coef: 1.0 });
        assert_eq!(
            validate_instance(&mut inst),
            Err(MilpError::DuplicateEntry { row: 0, col: 1 })
        );
    }

    #[test]
    fn validate_rejects_out_of_range() {
        let mut inst = two_var(true);
        inst.cons.push(Triplet { row: 3, col: 0, coef: 1.0 });
        assert!(matches!(validate_instance(&mut inst), Err(MilpError::IndexOutOfRange(_))));
    }

    #[test]
    fn validate_rounds_integer_bounds() {
        let mut inst = two_var(true);
        inst.lb[0] = 0.4;
        validate_instance(&mut inst).unwrap();
        assert_eq!(inst.lb[0], 1.0);

        let mut inst = two_var(true);
        inst.lb[0] = 0.4;
        inst.ub[0] = 0.9;
        assert_eq!(validate_instance(&mut inst), Err(MilpError::EmptyBoundBox(0)));
    }

    #[test]
    fn validate_rejects_nan() {
        let mut inst = two_var(false);
        inst.obj[1] = f64::NAN;
        assert!(matches!(validate_instance(&mut inst), Err(MilpError::NonFinite(_))));
    }

    #[test]
    fn locks_follow_sign_rule() {
        let locks = compute_locks(&two_var(true));
        assert_eq!(locks.nlocksup, vec![1, 1]);
        assert_eq!(locks.nlocksdown, vec![0, 0]);

        let mut inst = Instance::new("eq", 3);
        inst.add_row(&[(0, 1.0), (1, -1.0)], Sense::Eq, 1.0);
        let locks = compute_locks(&inst);
        assert_eq!((locks.nlocksdown[0], locks.nlocksup[0]), (1, 1));
        assert_eq!((locks.nlocksdown[1], locks.nlocksup[1]), (1, 1));
        assert_eq!((locks.nlocksdown[2], locks.nlocksup[2]), (0, 0));

        let mut inst = Instance::new("ge", 2);
        inst.add_row(&[(0, 1.0), (1, -2.0)], Sense::Ge, 1.0);
        let locks = compute_locks(&inst);
        assert_eq!((locks.nlocksdown[0], locks.nlocksup[0]), (1, 0));
        assert_eq!((locks.nlocksdown[1], locks.nlocksup[1]), (0, 1));
    }

    #[test]
    fn feasibility_check() {
        let inst = two_var(true);
        assert_eq!(check_feasible(&inst, &[1.0, 0.0], TOL_FEAS), Ok(true));
        assert_eq!(check_feasible(&inst, &[1.0, 1.0], TOL_FEAS), Ok(false));
        assert_eq!(check_feasible(&inst, &[0.5, 0.0], TOL_FEAS), Ok(false));
        assert_eq!(
            check_feasible(&inst, &[0.5], TOL_FEAS),
            Err(MilpError::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn integrality_gap_of_two_var() {
        let gap = integrality_gap(&two_var(true)).unwrap();
        assert!((gap - 0.5).abs() < 1e-9);
    }

    #[test]
    fn integrality_gap_zero_when_lp_integral() {
        let mut inst = Instance::new("integral", 2);
        inst.obj = vec![1.0, 1.0];
        inst.set_binary(0);
        inst.set_binary(1);
        inst.add_row(&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.0);
        assert!(integrality_gap(&inst).unwrap().abs() < 1e-12);
    }

    #[test]
    fn integrality_gap_of_infeasible_is_unsolved() {
        let mut inst = two_var(true);
        inst.add_row(&[(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(integrality_gap(&inst), Err(MilpError::Unsolved));
    }
}
