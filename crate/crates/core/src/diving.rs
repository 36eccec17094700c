//! Root-node diving: repeatedly tighten the bound of one fractional integer
//! variable chosen by a scorer, re-solve the LP, and collect every point that
//! simple rounding turns into a feasible solution.

use crate::dsl::{EvalOutput, Program};
use crate::milp::{check_feasible, compute_locks, Instance, LockCounts, LpModel, LpStatus, TOL_INT};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DivingError {
    #[error("variable {0} is not fractional")]
    NotFractional(usize),
    #[error("unknown scorer '{0}'")]
    UnknownScorer(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub mayrounddown: bool,
    pub mayroundup: bool,
    pub candsfrac: f64,
    pub candsol: f64,
    pub nlocksdown: usize,
    pub nlocksup: usize,
    pub obj: f64,
    pub objnorm: f64,
    pub pscostdown: f64,
    pub pscostup: f64,
    pub rootsolval: f64,
    #[serde(rename = "nNonz")]
    pub n_nonz: usize,
    #[serde(rename = "isBinary")]
    pub is_binary: bool,
}

/// Running averages of objective change per unit of bound movement.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudocostState {
    down_sum: Vec<f64>,
    down_count: Vec<u32>,
    up_sum: Vec<f64>,
    up_count: Vec<u32>,
}

impl PseudocostState {
    pub fn new(num_vars: usize) -> Self {
        PseudocostState {
            down_sum: vec![0.0; num_vars],
            down_count: vec![0; num_vars],
            up_sum: vec![0.0; num_vars],
            up_count: vec![0; num_vars],
        }
    }

    /// Records that moving `j` by `moved` (> 0) in direction `up` changed the
    /// LP objective by `delta_obj`.
    pub fn update(&mut self, j: usize, up: bool, delta_obj: f64, moved: f64) {
        if moved.is_nan() || moved <= 0.0 || !delta_obj.is_finite() {
            return;
        }
        let per_unit = delta_obj.max(0.0) / moved;
        if up {
            self.up_sum[j] += per_unit;
            self.up_count[j] += 1;
        } else {
            self.down_sum[j] += per_unit;
            self.down_count[j] += 1;
        }
    }

    pub fn down(&self, j: usize) -> f64 {
        match self.down_count[j] {
            0 => 0.0,
            c => self.down_sum[j] / c as f64,
        }
    }

    pub fn up(&self, j: usize) -> f64 {
        match self.up_count[j] {
            0 => 0.0,
            c => self.up_sum[j] / c as f64,
        }
    }
}

/// Instance-level data shared by every feature extraction in a dive.
#[derive(Debug, Clone)]
pub struct FeatureContext {
    pub locks: LockCounts,
    pub col_counts: Vec<usize>,
    pub objnorm: f64,
}

impl FeatureContext {
    pub fn new(inst: &Instance) -> Self {
        FeatureContext {
            locks: compute_locks(inst),
            col_counts: inst.column_counts(),
            objnorm: inst.obj.iter().map(|c| c * c).sum::<f64>().sqrt(),
        }
    }

    pub fn features(
        &self,
        inst: &Instance,
        x: &[f64],
        root_x: Option<&[f64]>,
        pscost: &PseudocostState,
        j: usize,
    ) -> Result<FeatureVector, DivingError> {
        let v = x[j];
        let frac = v - v.floor();
        if !inst.is_int[j] || frac <= TOL_INT || frac >= 1.0 - TOL_INT {
            return Err(DivingError::NotFractional(j));
        }
        Ok(FeatureVector {
            mayrounddown: self.locks.may_round_down(j),
            mayroundup: self.locks.may_round_up(j),
            candsfrac: frac,
            candsol: v,
            nlocksdown: self.locks.nlocksdown[j],
            nlocksup: self.locks.nlocksup[j],
            obj: inst.obj[j],
            objnorm: self.objnorm,
            pscostdown: pscost.down(j),
            pscostup: pscost.up(j),
            rootsolval: root_x.map_or(0.0, |r| r[j]),
            n_nonz: self.col_counts[j],
            is_binary: inst.is_binary(j),
        })
    }
}

pub fn extract_features(
    inst: &Instance,
    lp_x: &[f64],
    root_x: Option<&[f64]>,
    locks: &LockCounts,
    pscost: &PseudocostState,
    j: usize,
) -> Result<FeatureVector, DivingError> {
    let ctx = FeatureContext { locks: locks.clone(), ..FeatureContext::new(inst) };
    ctx.features(inst, lp_x, root_x, pscost, j)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Fractional,
    Coefficient,
    Pseudocost,
    Random,
}

impl Builtin {
    pub const ALL: [Builtin; 4] =
        [Builtin::Fractional, Builtin::Coefficient, Builtin::Pseudocost, Builtin::Random];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Fractional => "fractional",
            Builtin::Coefficient => "coefficient",
            Builtin::Pseudocost => "pseudocost",
            Builtin::Random => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scorer {
    Builtin { kind: Builtin, seed: u64 },
    Dsl(Program),
}

fn fractional_rule(fv: &FeatureVector) -> EvalOutput {
    EvalOutput {
        score: -(fv.candsol - fv.candsol.round()).abs(),
        roundup: fv.candsfrac > 0.5,
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Scorer {
    pub fn builtin(name: &str) -> Result<Self, DivingError> {
        Builtin::ALL
            .iter()
            .find(|b| b.name() == name)
            .map(|&kind| Scorer::Builtin { kind, seed: 0 })
            .ok_or_else(|| DivingError::UnknownScorer(name.to_string()))
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            Scorer::Builtin { kind, .. } => Scorer::Builtin { kind, seed },
            other => other,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Scorer::Builtin { kind, .. } => format!("builtin:{}", kind.name()),
            Scorer::Dsl(_) => "dsl".to_string(),
        }
    }

    /// Score and direction for candidate `j` at dive depth `depth`.
    pub fn evaluate(&self, fv: &FeatureVector, j: usize, depth: usize) -> EvalOutput {
        match self {
            Scorer::Dsl(p) => p.eval(fv),
            Scorer::Builtin { kind, seed } => match kind {
                Builtin::Fractional => fractional_rule(fv),
                Builtin::Coefficient => {
                    let roundup = match fv.nlocksup.cmp(&fv.nlocksdown) {
                        std::cmp::Ordering::Less => true,
                        std::cmp::Ordering::Greater => false,
                        std::cmp::Ordering::Equal => fv.candsfrac > 0.5,
                    };
                    EvalOutput { score: -(fv.nlocksdown.min(fv.nlocksup) as f64), roundup }
                }
                Builtin::Pseudocost => {
                    let down = fv.pscostdown * fv.candsfrac;
                    let up = fv.pscostup * (1.0 - fv.candsfrac);
                    EvalOutput { score: -down.min(up), roundup: up < down }
                }
                Builtin::Random => {
                    let h = splitmix(seed ^ splitmix(j as u64 ^ ((depth as u64) << 32)));
                    let score = (h >> 11) as f64 / (1u64 << 53) as f64;
                    EvalOutput { score, roundup: fv.candsfrac > 0.5 }
                }
            },
        }
    }

    /// Secondary key used only to break exact score ties.
    fn tiebreak(&self, fv: &FeatureVector) -> f64 {
        match self {
            Scorer::Builtin { kind: Builtin::Coefficient, .. } => fractional_rule(fv).score,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Integral,
    Infeasible,
    DepthLimit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiveSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiveResult {
    pub solutions: Vec<DiveSolution>,
    pub best_objective: Option<f64>,
    pub depth_reached: usize,
    /// LP solves that returned an optimal solution, the root included.
    pub lp_resolves: usize,
    pub terminated_by: Termination,
    /// Objective of every optimal LP along the dive, root first.
    pub lp_objectives: Vec<f64>,
}

impl DiveResult {
    fn empty(terminated_by: Termination) -> Self {
        DiveResult {
            solutions: Vec::new(),
            best_objective: None,
            depth_reached: 0,
            lp_resolves: 0,
            terminated_by,
            lp_objectives: Vec::new(),
        }
    }

    fn push(&mut self, inst: &Instance, x: Vec<f64>) {
        if self.solutions.iter().any(|s| s.x == x) {
            return;
        }
        let objective = inst.objective_value(&x);
        if self.best_objective.is_none_or(|b| objective < b) {
            self.best_objective = Some(objective);
        }
        self.solutions.push(DiveSolution { x, objective });
    }
}

pub fn default_d_max(inst: &Instance) -> usize {
    500.min(inst.integer_vars().count() + 10)
}

/// Rounds every fractional integer variable in a direction without locks and
/// returns the result if it is feasible.
pub fn simple_round(inst: &Instance, x: &[f64]) -> Option<Vec<f64>> {
    simple_round_with(inst, x, &compute_locks(inst))
}

pub fn simple_round_with(inst: &Instance, x: &[f64], locks: &LockCounts) -> Option<Vec<f64>> {
    let mut out = x.to_vec();
    for j in inst.integer_vars() {
        let v = x[j];
        if (v - v.round()).abs() <= TOL_INT {
            out[j] = v.round();
            continue;
        }
        out[j] = match (locks.may_round_down(j), locks.may_round_up(j)) {
            (true, true) if inst.obj[j] < 0.0 => v.ceil(),
            (true, _) => v.floor(),
            (false, true) => v.ceil(),
            (false, false) => return None,
        };
    }
    match check_feasible(inst, &out, TOL_INT) {
        Ok(true) => Some(out),
        _ => None,
    }
}

fn fractional(inst: &Instance, x: &[f64]) -> Vec<usize> {
    inst.integer_vars()
        .filter(|&j| {
            let f = x[j] - x[j].floor();
            f > TOL_INT && f < 1.0 - TOL_INT
        })
        .collect()
}

/// Runs a dive from the root LP. At most `d_max` LP solves are attempted,
/// the root included.
pub fn dive(inst: &Instance, scorer: &Scorer, d_max: usize) -> DiveResult {
    if d_max == 0 {
        return DiveResult::empty(Termination::DepthLimit);
    }
    let ctx = FeatureContext::new(inst);
    let model = LpModel::new(inst);
    let mut lb = inst.lb.clone();
    let mut ub = inst.ub.clone();
    let root = model.solve(&lb, &ub);
    if root.status != LpStatus::Optimal {
        return DiveResult::empty(Termination::Infeasible);
    }
    let mut attempts = 1;
    let mut result = DiveResult::empty(Termination::DepthLimit);
    result.lp_resolves = 1;
    result.lp_objectives.push(root.objective);
    let root_x = root.x.clone();
    let mut x = root.x;
    let mut z = root.objective;
    let mut pscost = PseudocostState::new(inst.num_vars);

    loop {
        if let Some(r) = simple_round_with(inst, &x, &ctx.locks) {
            result.push(inst, r);
        }
        let cands = fractional(inst, &x);
        if cands.is_empty() {
            result.terminated_by = Termination::Integral;
            break;
        }
        if attempts >= d_max {
            result.terminated_by = Termination::DepthLimit;
            break;
        }

        let mut best: Option<(usize, f64, f64, bool, f64)> = None;
        for &j in &cands {
            let fv = match ctx.features(inst, &x, Some(&root_x), &pscost, j) {
                Ok(fv) => fv,
                Err(_) => continue,
            };
            let out = scorer.evaluate(&fv, j, result.depth_reached);
            let tb = scorer.tiebreak(&fv);
            let better = best.is_none_or(|(_, s, t, _, _)| {
                out.score > s || (out.score == s && tb > t)
            });
            if better {
                best = Some((j, out.score, tb, out.roundup, fv.candsfrac));
            }
        }
        let Some((j, _, _, up, frac)) = best else {
            result.terminated_by = Termination::Integral;
            break;
        };
        if up {
            lb[j] = x[j].ceil();
        } else {
            ub[j] = x[j].floor();
        }
        result.depth_reached += 1;
        attempts += 1;
        let sol = model.solve(&lb, &ub);
        if sol.status != LpStatus::Optimal {
            result.terminated_by = Termination::Infeasible;
            break;
        }
        result.lp_resolves += 1;
        result.lp_objectives.push(sol.objective);
        let moved = if up { 1.0 - frac } else { frac };
        pscost.update(j, up, sol.objective - z, moved);
        x = sol.x;
        z = sol.objective;
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::fixtures::two_var;
    use crate::milp::Sense;

    #[test]
    fn features_of_two_var_example() {
        let inst = two_var(true);
        let locks = compute_locks(&inst);
        let ps = PseudocostState::new(2);
        let fv = extract_features(&inst, &[0.75, 0.75], None, &locks, &ps, 0).unwrap();
        assert_eq!(fv.candsfrac, 0.75);
        assert_eq!((fv.nlocksdown, fv.nlocksup), (0, 1));
        assert!(fv.mayrounddown && !fv.mayroundup);
        assert_eq!(fv.obj, -1.0);
        assert_eq!(fv.objnorm, 2f64.sqrt());
        assert_eq!(fv.n_nonz, 1);
        assert!(fv.is_binary);
        assert_eq!((fv.pscostdown, fv.pscostup, fv.rootsolval), (0.0, 0.0, 0.0));
        assert_eq!(
            extract_features(&inst, &[1.0, 0.5], None, &locks, &ps, 0),
            Err(DivingError::NotFractional(0))
        );
    }

    #[test]
    fn builtin_formulas() {
        let fv = FeatureVector { candsfrac: 0.75, candsol: 0.75, ..Default::default() };
        let frac = Scorer::builtin("fractional").unwrap();
        assert_eq!(frac.evaluate(&fv, 0, 0), EvalOutput { score: -0.25, roundup: true });

        let fv = FeatureVector { nlocksdown: 0, nlocksup: 1, candsfrac: 0.3, ..Default::default() };
        let coef = Scorer::builtin("coefficient").unwrap();
        assert_eq!(coef.evaluate(&fv, 0, 0), EvalOutput { score: 0.0, roundup: false });

        let fv = FeatureVector { pscostdown: 2.0, pscostup: 1.0, candsfrac: 0.5, ..Default::default() };
        let ps = Scorer::builtin("pseudocost").unwrap();
        assert_eq!(ps.evaluate(&fv, 0, 0), EvalOutput { score: -0.5, roundup: true });

        assert_eq!(Scorer::builtin("farkas"), Err(DivingError::UnknownScorer("farkas".into())));
    }

    #[test]
    fn random_scorer_is_seeded() {
        let fv = FeatureVector { candsfrac: 0.2, ..Default::default() };
        let a = Scorer::builtin("random").unwrap().with_seed(7);
        let b = Scorer::builtin("random").unwrap().with_seed(8);
        assert_eq!(a.evaluate(&fv, 3, 1), a.evaluate(&fv, 3, 1));
        assert_ne!(a.evaluate(&fv, 3, 1).score, b.evaluate(&fv, 3, 1).score);
        let s = a.evaluate(&fv, 3, 1).score;
        assert!((0.0..1.0).contains(&s));
    }

    #[test]
    fn two_var_fractional_dive() {
        let inst = two_var(true);
        let r = dive(&inst, &Scorer::builtin("fractional").unwrap(), default_d_max(&inst));
        assert_eq!(r.terminated_by, Termination::Integral);
        assert_eq!(r.best_objective, Some(-1.0));
        assert_eq!(r.lp_resolves, 2);
        assert_eq!(r.solutions[0].x, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_depth_does_nothing() {
        let r = dive(&two_var(true), &Scorer::builtin("fractional").unwrap(), 0);
        assert_eq!((r.depth_reached, r.lp_resolves), (0, 0));
        assert_eq!(r.terminated_by, Termination::DepthLimit);
    }

    #[test]
    fn fixing_can_empty_the_polytope() {
        // x1 + x2 >= 1.5 with a scorer that always rounds down.
        let mut inst = Instance::new("cover", 2);
        inst.obj = vec![1.0, 1.0];
        inst.set_binary(0);
        inst.set_binary(1);
        inst.add_row(&[(0, 1.0), (1, 1.0)], Sense::Ge, 1.5);
        let down = Scorer::Dsl(Program::parse("score: 0 roundup: false").unwrap());
        let r = dive(&inst, &down, 10);
        assert_eq!(r.terminated_by, Termination::Infeasible);
        // Rounding the root point up is still allowed before the dive fails.
        for s in &r.solutions {
            assert_eq!(check_feasible(&inst, &s.x, TOL_INT), Ok(true));
        }
    }

    #[test]
    fn simple_round_cases() {
        let inst = two_var(true);
        assert_eq!(simple_round(&inst, &[1.0, 0.0]), Some(vec![1.0, 0.0]));
        assert_eq!(simple_round(&inst, &[0.75, 0.75]), Some(vec![0.0, 0.0]));

        let mut eq = two_var(true);
        eq.add_row(&[(0, 1.0), (1, -1.0)], Sense::Eq, 0.0);
        assert_eq!(simple_round(&eq, &[0.5, 0.5]), None);
    }

    #[test]
    fn pseudocost_average() {
        let mut ps = PseudocostState::new(1);
        ps.update(0, true, 1.0, 0.5);
        ps.update(0, true, 3.0, 1.0);
        assert_eq!(ps.up(0), 2.5);
        assert_eq!(ps.down(0), 0.0);
    }
}
