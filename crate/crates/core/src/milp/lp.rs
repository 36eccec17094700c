//! Bounded-variable primal simplex with a dense explicit basis inverse.
//!
//! Every row `i` gets a slack `s_i` so that `A_i·x + s_i = b_i`, with the
//! slack's bounds encoding the row sense (`<=`: `s >= 0`, `>=`: `s <= 0`,
//! `=`: `s = 0`). Rows whose slack cannot absorb the starting residual get an
//! artificial variable and phase one minimizes their sum. Entering and
//! leaving variables are chosen by Bland's smallest-index rule, so the method
//! terminates without cycling and is bit-for-bit deterministic.

use super::{Instance, Sense, TOL_FEAS};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Per-variable `(lb, ub)` replacements. They are intersected with the
/// instance bounds, so an override can only tighten.
pub type BoundOverrides = BTreeMap<usize, (f64, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values of the structural variables; empty unless `Optimal`.
    pub x: Vec<f64>,
    /// `c·x` when `Optimal`, `+inf` when infeasible, `-inf` when unbounded.
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn failed(status: LpStatus, iterations: usize) -> Self {
        let objective = match status {
            LpStatus::Unbounded => f64::NEG_INFINITY,
            _ => f64::INFINITY,
        };
        LpSolution { status, x: Vec::new(), objective, iterations }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Solves the LP relaxation of `inst`, optionally under tightened bounds.
pub fn solve_lp(inst: &Instance, overrides: Option<&BoundOverrides>) -> LpSolution {
    let model = LpModel::new(inst);
    let (mut lb, mut ub) = (inst.lb.clone(), inst.ub.clone());
    if let Some(ov) = overrides {
        for (&j, &(l, u)) in ov {
            if j < inst.num_vars {
                lb[j] = lb[j].max(l);
                ub[j] = ub[j].min(u);
            }
        }
    }
    model.solve(&lb, &ub)
}

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-9;
const PHASE_ONE_TOL: f64 = 1e-7;
const REFACTOR_EVERY: usize = 64;

/// Column-major copy of an instance, reusable across many solves that differ
/// only in variable bounds.
#[derive(Debug, Clone)]
pub struct LpModel<'a> {
    inst: &'a Instance,
    cols: Vec<Vec<(usize, f64)>>,
    max_iters: usize,
}

impl<'a> LpModel<'a> {
    pub fn new(inst: &'a Instance) -> Self {
        let mut cols = vec![Vec::new(); inst.num_vars];
        for t in &inst.cons {
            if t.coef != 0.0 {
                cols[t.col].push((t.row, t.coef));
            }
        }
        for c in &mut cols {
            c.sort_by_key(|&(r, _)| r);
        }
        LpModel { inst, cols, max_iters: 50 * (inst.num_vars + inst.num_cons).max(1) }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn instance(&self) -> &Instance {
        self.inst
    }

    /// Solves with the given structural bounds in place of the instance's.
    pub fn solve(&self, lb: &[f64], ub: &[f64]) -> LpSolution {
        assert_eq!(lb.len(), self.inst.num_vars);
        assert_eq!(ub.len(), self.inst.num_vars);
        if lb.iter().zip(ub).any(|(l, u)| l > u) {
            return LpSolution::failed(LpStatus::Infeasible, 0);
        }
        let mut tab = Simplex::new(self, lb, ub);
        match tab.run() {
            Ok(()) => tab.solution(),
            Err(status) => LpSolution::failed(status, tab.iters),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum NonBasic {
    Lower,
    Upper,
    /// Free variable resting at zero.
    Zero,
    Basic,
}

struct Simplex<'m, 'a> {
    model: &'m LpModel<'a>,
    n: usize,
    m: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Sign of each row's artificial column (`0.0` when unused).
    art_sign: Vec<f64>,
    state: Vec<NonBasic>,
    /// Current value of every variable (basic and nonbasic).
    value: Vec<f64>,
    basis: Vec<usize>,
    binv: Vec<Vec<f64>>,
    iters: usize,
    since_refactor: usize,
}

impl<'m, 'a> Simplex<'m, 'a> {
    fn new(model: &'m LpModel<'a>, lb: &[f64], ub: &[f64]) -> Self {
        let inst = model.inst;
        let n = inst.num_vars;
        let m = inst.num_cons;
        let total = n + 2 * m;
        let mut lo = Vec::with_capacity(total);
        let mut hi = Vec::with_capacity(total);
        lo.extend_from_slice(lb);
        hi.extend_from_slice(ub);
        for s in &inst.sense {
            let (l, h) = match s {
                Sense::Le => (0.0, f64::INFINITY),
                Sense::Ge => (f64::NEG_INFINITY, 0.0),
                Sense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        lo.extend(std::iter::repeat_n(0.0, m));
        hi.extend(std::iter::repeat_n(0.0, m));

        let mut state = vec![NonBasic::Lower; total];
        let mut value = vec![0.0; total];
        for j in 0..n {
            let (s, v) = if lo[j].is_finite() {
                (NonBasic::Lower, lo[j])
            } else if hi[j].is_finite() {
                (NonBasic::Upper, hi[j])
            } else {
                (NonBasic::Zero, 0.0)
            };
            state[j] = s;
            value[j] = v;
        }
        for i in 0..m {
            if !lo[n + i].is_finite() {
                state[n + i] = NonBasic::Upper;
            }
        }

        let mut resid = inst.rhs.clone();
        for (j, col) in model.cols.iter().enumerate() {
            if value[j] != 0.0 {
                for &(r, a) in col {
                    resid[r] -= a * value[j];
                }
            }
        }

        let mut basis = Vec::with_capacity(m);
        let mut art_sign = vec![0.0; m];
        let mut binv = vec![vec![0.0; m]; m];
        for i in 0..m {
            let r = resid[i];
            let slack = n + i;
            if r >= lo[slack] - TOL_FEAS && r <= hi[slack] + TOL_FEAS {
                basis.push(slack);
                state[slack] = NonBasic::Basic;
                value[slack] = r;
                binv[i][i] = 1.0;
            } else {
                let art = n + m + i;
                let sign = if r > 0.0 { 1.0 } else { -1.0 };
                art_sign[i] = sign;
                hi[art] = f64::INFINITY;
                basis.push(art);
                state[art] = NonBasic::Basic;
                value[art] = r.abs();
                state[slack] = if lo[slack].is_finite() { NonBasic::Lower } else { NonBasic::Upper };
                value[slack] = 0.0;
                binv[i][i] = sign;
            }
        }

        Simplex {
            model,
            n,
            m,
            lo,
            hi,
            art_sign,
            state,
            value,
            basis,
            binv,
            iters: 0,
            since_refactor: 0,
        }
    }

    /// Sparse column of variable `k`.
    fn column(&self, k: usize) -> Vec<(usize, f64)> {
        if k < self.n {
            self.model.cols[k].clone()
        } else if k < self.n + self.m {
            vec![(k - self.n, 1.0)]
        } else {
            let i = k - self.n - self.m;
            vec![(i, self.art_sign[i])]
        }
    }

    fn dot_column(&self, y: &[f64], k: usize) -> f64 {
        if k < self.n {
            self.model.cols[k].iter().map(|&(r, a)| y[r] * a).sum()
        } else if k < self.n + self.m {
            y[k - self.n]
        } else {
            let i = k - self.n - self.m;
            y[i] * self.art_sign[i]
        }
    }

    fn run(&mut self) -> Result<(), LpStatus> {
        let total = self.n + 2 * self.m;
        if self.art_sign.iter().any(|&s| s != 0.0) {
            let mut cost = vec![0.0; total];
            for i in 0..self.m {
                if self.art_sign[i] != 0.0 {
                    cost[self.n + self.m + i] = 1.0;
                }
            }
            match self.optimize(&cost) {
                Ok(()) => {}
                Err(LpStatus::Unbounded) => unreachable!("phase one is bounded below by zero"),
                Err(e) => return Err(e),
            }
            self.refactor();
            let infeas: f64 = (0..self.m).map(|i| self.value[self.n + self.m + i]).sum();
            if infeas > PHASE_ONE_TOL {
                return Err(LpStatus::Infeasible);
            }
            for i in 0..self.m {
                let art = self.n + self.m + i;
                self.hi[art] = 0.0;
                self.value[art] = 0.0;
                if self.state[art] != NonBasic::Basic {
                    self.state[art] = NonBasic::Lower;
                }
            }
        }
        let mut cost = vec![0.0; total];
        cost[..self.n].copy_from_slice(&self.model.inst.obj);
        self.optimize(&cost)?;
        self.refactor();
        Ok(())
    }

    fn optimize(&mut self, cost: &[f64]) -> Result<(), LpStatus> {
        let total = self.n + 2 * self.m;
        loop {
            if self.iters >= self.model.max_iters {
                return Err(LpStatus::IterLimit);
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }

            let mut y = vec![0.0; self.m];
            for (i, &b) in self.basis.iter().enumerate() {
                let cb = cost[b];
                if cb != 0.0 {
                    for (yr, br) in y.iter_mut().zip(&self.binv[i]) {
                        *yr += cb * br;
                    }
                }
            }

            // Bland: first eligible index enters.
            let mut entering = None;
            for k in 0..total {
                let st = self.state[k];
                if st == NonBasic::Basic || self.lo[k] == self.hi[k] {
                    continue;
                }
                let d = cost[k] - self.dot_column(&y, k);
                let can_up = matches!(st, NonBasic::Lower | NonBasic::Zero);
                let can_down = matches!(st, NonBasic::Upper | NonBasic::Zero);
                if can_up && d < -DUAL_TOL {
                    entering = Some((k, 1.0));
                    break;
                }
                if can_down && d > DUAL_TOL {
                    entering = Some((k, -1.0));
                    break;
                }
            }
            let Some((k, dir)) = entering else {
                return Ok(());
            };

            let mut alpha = vec![0.0; self.m];
            for (r, a) in self.column(k) {
                for (i, al) in alpha.iter_mut().enumerate() {
                    *al += self.binv[i][r] * a;
                }
            }

            // Ratio test; ties go to the smallest variable index.
            let mut best_t = self.hi[k] - self.lo[k];
            let mut best_var = k;
            let mut leave_row = None;
            for (i, &al) in alpha.iter().enumerate() {
                let rate = -dir * al;
                let b = self.basis[i];
                let lim = if rate < -PIVOT_TOL && self.lo[b].is_finite() {
                    (self.value[b] - self.lo[b]) / -rate
                } else if rate > PIVOT_TOL && self.hi[b].is_finite() {
                    (self.hi[b] - self.value[b]) / rate
                } else {
                    continue;
                };
                let lim = lim.max(0.0);
                if lim < best_t || (lim == best_t && b < best_var) {
                    best_t = lim;
                    best_var = b;
                    leave_row = Some(i);
                }
            }
            if best_t == f64::INFINITY {
                return Err(LpStatus::Unbounded);
            }

            let t = best_t;
            for (i, &al) in alpha.iter().enumerate() {
                let b = self.basis[i];
                self.value[b] -= t * dir * al;
            }
            self.value[k] += dir * t;

            match leave_row {
                None => {
                    self.state[k] = if dir > 0.0 { NonBasic::Upper } else { NonBasic::Lower };
                    self.value[k] = if dir > 0.0 { self.hi[k] } else { self.lo[k] };
                }
                Some(r) => {
                    let leaving = self.basis[r];
                    let rate = -dir * alpha[r];
                    if rate < 0.0 {
                        self.state[leaving] = NonBasic::Lower;
                        self.value[leaving] = self.lo[leaving];
                    } else {
                        self.state[leaving] = NonBasic::Upper;
                        self.value[leaving] = self.hi[leaving];
                    }
                    self.state[k] = NonBasic::Basic;
                    self.basis[r] = k;
                    self.pivot(r, &alpha);
                }
            }
            self.iters += 1;
            self.since_refactor += 1;
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let piv = alpha[r];
        let row_r: Vec<f64> = self.binv[r].iter().map(|v| v / piv).collect();
        for (i, row) in self.binv.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = alpha[i];
            if f != 0.0 {
                for (v, rv) in row.iter_mut().zip(&row_r) {
                    *v -= f * rv;
                }
            }
        }
        self.binv[r] = row_r;
    }

    /// Recomputes the basis inverse by Gauss-Jordan elimination and the basic
    /// values from the nonbasic ones.
    fn refactor(&mut self) {
        self.since_refactor = 0;
        let m = self.m;
        if m == 0 {
            return;
        }
        let mut mat = vec![vec![0.0; 2 * m]; m];
        for (c, &b) in self.basis.iter().enumerate() {
            for (r, a) in self.column(b) {
                mat[r][c] = a;
            }
        }
        for (i, row) in mat.iter_mut().enumerate() {
            row[m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &b| mat[a][c].abs().total_cmp(&mat[b][c].abs()).then(b.cmp(&a)))
                .expect("non-empty range");
            if mat[p][c].abs() < 1e-12 {
                // Numerically singular; keep the product-form inverse.
                return;
            }
            mat.swap(c, p);
            let piv = mat[c][c];
            for v in mat[c].iter_mut() {
                *v /= piv;
            }
            let pivot_row = mat[c].clone();
            for (r, row) in mat.iter_mut().enumerate() {
                if r != c && row[c] != 0.0 {
                    let f = row[c];
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        for (i, row) in mat.into_iter().enumerate() {
            self.binv[i] = row[m..].to_vec();
        }

        let mut resid = self.model.inst.rhs.clone();
        let total = self.n + 2 * self.m;
        for k in 0..total {
            if self.state[k] == NonBasic::Basic || self.value[k] == 0.0 {
                continue;
            }
            for (r, a) in self.column(k) {
                resid[r] -= a * self.value[k];
            }
        }
        for i in 0..m {
            let v: f64 = self.binv[i].iter().zip(&resid).map(|(b, r)| b * r).sum();
            self.value[self.basis[i]] = v;
        }
    }

    fn solution(&self) -> LpSolution {
        let x: Vec<f64> = (0..self.n)
            .map(|j| {
                let mut v = self.value[j];
                // Snap round-off at the bounds.
                if (v - self.lo[j]).abs() <= TOL_FEAS {
                    v = self.lo[j];
                } else if (v - self.hi[j]).abs() <= TOL_FEAS {
                    v = self.hi[j];
                }
                if v == 0.0 {
                    0.0
                } else {
                    v
                }
            })
            .collect();
        let objective = self.model.inst.objective_value(&x);
        LpSolution { status: LpStatus::Optimal, x, objective, iterations: self.iters }
    }
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::two_var;
    use super::super::{check_feasible, Instance, Sense};
    use super::*;

    #[test]
    fn two_var_relaxation() {
        let sol = solve_lp(&two_var(true), None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 1.5).abs() < 1e-12);
        // Bland pushes x1 to its upper bound first.
        assert_eq!(sol.x, vec![1.0, 0.5]);
    }

    #[test]
    fn row_bound_conflict_is_infeasible() {
        let mut inst = Instance::new("inf", 1);
        inst.ub[0] = 1.0;
        inst.add_row(&[(0, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&inst, None).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut inst = Instance::new("unb", 1);
        inst.obj[0] = -1.0;
        assert_eq!(solve_lp(&inst, None).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x0 + 2 x1  s.t. x0 - x1 = 1, x0 + x1 >= 3, x free.
        let mut inst = Instance::new("free", 2);
        inst.obj = vec![1.0, 2.0];
        inst.lb = vec![f64::NEG_INFINITY; 2];
        inst.add_row(&[(0, 1.0), (1, -1.0)], Sense::Eq, 1.0);
        inst.add_row(&[(0, 1.0), (1, 1.0)], Sense::Ge, 3.0);
        let sol = solve_lp(&inst, None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.x[0] - 2.0).abs() < 1e-9 && (sol.x[1] - 1.0).abs() < 1e-9);
        assert!((sol.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn overrides_only_tighten() {
        let inst = two_var(false);
        let mut ov = BoundOverrides::new();
        ov.insert(0, (-5.0, 0.0));
        let sol = solve_lp(&inst, Some(&ov));
        assert_eq!(sol.x[0], 0.0);
        assert!((sol.objective + 1.0).abs() < 1e-12);

        ov.insert(1, (2.0, 3.0));
        assert_eq!(solve_lp(&inst, Some(&ov)).status, LpStatus::Infeasible);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Classic cycling example (Beale) under the textbook rule.
        let mut inst = Instance::new("beale", 4);
        inst.obj = vec![-0.75, 150.0, -0.02, 6.0];
        inst.add_row(&[(0, 0.25), (1, -60.0), (2, -0.04), (3, 9.0)], Sense::Le, 0.0);
        inst.add_row(&[(0, 0.5), (1, -90.0), (2, -0.02), (3, 3.0)], Sense::Le, 0.0);
        inst.add_row(&[(2, 1.0)], Sense::Le, 1.0);
        let sol = solve_lp(&inst, None);
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective + 0.05).abs() < 1e-9);
        assert_eq!(check_feasible(&inst, &sol.x, 1e-9), Ok(true));
    }

    #[test]
    fn deterministic() {
        let inst = two_var(false);
        let a = solve_lp(&inst, None);
        let b = solve_lp(&inst, None);
        assert_eq!(a, b);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
