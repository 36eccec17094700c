//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

use dhevo_cli::{cmd_eval, cmd_evolve, cmd_gen, cmd_report, EvalArgs, EvolveArgs, GenArgs, ReportArgs};
use dhevo_core::diving::{dive, FeatureVector, Scorer, Termination};
use dhevo_core::dsl::{random_program, Program};
use dhevo_core::evolution::{
    self, archive_diff, build_provider, non_pathway_differences, prepare_instances, run_baseline_ec, run_dhevo,
    select_topk_pairs, topk_strict, Archive, DataCodePair, EvolveConfig, Silent,
};
use dhevo_core::gen::{Family, FamilyParams, GenSpec};
use dhevo_core::metrics::{diversity_index, primal_dual_gap, primal_dual_integral, primal_gap, BoundEvent};
use dhevo_core::milp::{
    brute_force_opt, check_feasible, solve_bnb, solve_lp, BnbLimits, Instance, LpStatus, Sense, TOL_FEAS,
};
use dhevo_core::rng::stream;
use rand::Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Instant;

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let checks: [(&str, Check); 11] = [
        ("oracle equivalence", c1_oracle),
        ("LP correctness", c2_lp),
        ("dive soundness", c3_dive),
        ("worked trace", c4_trace),
        ("metric identities", c5_metrics),
        ("DSL round-trip and totality", c6_dsl),
        ("evolution monotonicity", c7_elitism),
        ("selection limit", c8_selection),
        ("ablation harness", c9_ablation),
        ("reproducibility", c10_repro),
        ("end-to-end report", c11_report),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check))
            .unwrap_or_else(|p| Err(p.downcast_ref::<String>().cloned().unwrap_or_else(|| "panic".into())));
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(note) => println!("PASS {:>2} {name}: {note} ({secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

/// Scaled-down parameters that keep each family within 12 binaries and 10 rows.
fn oracle_params() -> [FamilyParams; 4] {
    [
        FamilyParams::Setcover { rows: 8, cols: 12, density: 0.25 },
        FamilyParams::Cauctions { items: 6, bids: 12 },
        FamilyParams::Indset { nodes: 11, affinity: 1 },
        FamilyParams::Facilities { n_fac: 2, n_cust: 4 },
    ]
}

fn c1_oracle() -> Result<String, String> {
    let t = Instant::now();
    let mut count = 0;
    for (f, params) in oracle_params().into_iter().enumerate() {
        let n = if f < 2 { 13 } else { 12 };
        for seed in 0..n {
            let inst = GenSpec::new(params, 1000 + seed).generate().map_err(|e| e.to_string())?;
            let bins = inst.integer_vars().filter(|&j| inst.is_binary(j)).count();
            ensure!(bins <= 12 && inst.num_cons <= 10, "{} too large: {bins} binaries, {} rows", inst.name, inst.num_cons);
            let a = solve_bnb(&inst, BnbLimits::default()).map_err(|e| e.to_string())?;
            let b = brute_force_opt(&inst).map_err(|e| e.to_string())?;
            match (a.objective, b.objective) {
                (Some(x), Some(y)) => ensure!((x - y).abs() <= 1e-6, "{}: bnb {x} vs brute {y}", inst.name),
                (None, None) => {}
                (x, y) => return Err(format!("{}: bnb {x:?} vs brute {y:?}", inst.name)),
            }
            count += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(count == 50, "ran {count} instances");
    ensure!(secs < 30.0, "took {secs:.1}s");
    Ok(format!("{count} instances agree"))
}

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Le,
    Ge,
    Eq,
}

/// Minimum of `c·x` over the vertices of `{x : rows}`; `None` if there are none.
fn vertex_min(n: usize, rows: &[(Vec<f64>, Kind, f64)], c: &[f64]) -> Option<f64> {
    let mut best: Option<f64> = None;
    let m = rows.len();
    if m < n {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    loop {
        let mut a: Vec<Vec<f64>> = idx.iter().map(|&r| rows[r].0.clone()).collect();
        let mut b: Vec<f64> = idx.iter().map(|&r| rows[r].2).collect();
        if let Some(x) = solve_square(&mut a, &mut b) {
            let feasible = rows.iter().all(|(row, k, rhs)| {
                let v: f64 = row.iter().zip(&x).map(|(p, q)| p * q).sum();
                match k {
                    Kind::Le => v <= rhs + 1e-7,
                    Kind::Ge => v >= rhs - 1e-7,
                    Kind::Eq => (v - rhs).abs() <= 1e-7,
                }
            });
            if feasible {
                let z: f64 = c.iter().zip(&x).map(|(p, q)| p * q).sum();
                best = Some(best.map_or(z, |w: f64| w.min(z)));
            }
        }
        // Next n-subset in lexicographic order.
        let mut i = n;
        while i > 0 && idx[i - 1] == m - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        idx[i - 1] += 1;
        for j in i..n {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn solve_square(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-9 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for k in col..n {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Status and objective by vertex and extreme-ray enumeration. All lower
/// bounds are finite, so the feasible region is pointed.
fn enumerate_lp(inst: &Instance) -> (LpStatus, f64) {
    let n = inst.num_vars;
    let mut rows: Vec<(Vec<f64>, Kind, f64)> = Vec::new();
    let mut dense = vec![vec![0.0; n]; inst.num_cons];
    for t in &inst.cons {
        dense[t.row][t.col] += t.coef;
    }
    for (i, row) in dense.iter().enumerate() {
        let k = match inst.sense[i] {
            Sense::Le => Kind::Le,
            Sense::Ge => Kind::Ge,
            Sense::Eq => Kind::Eq,
        };
        rows.push((row.clone(), k, inst.rhs[i]));
    }
    let unit = |j: usize| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect::<Vec<f64>>();
    for j in 0..n {
        rows.push((unit(j), Kind::Ge, inst.lb[j]));
        if inst.ub[j].is_finite() {
            rows.push((unit(j), Kind::Le, inst.ub[j]));
        }
    }
    let Some(z) = vertex_min(n, &rows, &inst.obj) else { return (LpStatus::Infeasible, f64::INFINITY) };
    // Recession cone, normalized by sum(d) = 1.
    let mut cone: Vec<(Vec<f64>, Kind, f64)> = rows.iter().map(|(r, k, _)| (r.clone(), *k, 0.0)).collect();
    cone.push((vec![1.0; n], Kind::Eq, 1.0));
    match vertex_min(n, &cone, &inst.obj) {
        Some(dz) if dz < -1e-9 => (LpStatus::Unbounded, f64::NEG_INFINITY),
        _ => (LpStatus::Optimal, z),
    }
}

fn c2_lp() -> Result<String, String> {
    let mut rng = stream(2, &[]);
    let mut tally = [0usize; 3];
    for trial in 0..100 {
        let n = rng.random_range(1..=4);
        let mut inst = Instance::new(format!("lp{trial}"), n);
        for j in 0..n {
            inst.obj[j] = rng.random_range(-5..=5) as f64;
            inst.lb[j] = if rng.random_bool(0.3) { -3.0 } else { 0.0 };
            inst.ub[j] = if rng.random_bool(0.3) { f64::INFINITY } else { rng.random_range(0..=6) as f64 };
        }
        for _ in 0..rng.random_range(1..=4) {
            let coefs: Vec<(usize, f64)> = (0..n).map(|j| (j, rng.random_range(-4..=4) as f64)).collect();
            let sense = [Sense::Le, Sense::Ge, Sense::Eq][rng.random_range(0..3)];
            inst.add_row(&coefs, sense, rng.random_range(-5..=10) as f64);
        }
        let got = solve_lp(&inst, None);
        let (status, z) = enumerate_lp(&inst);
        ensure!(got.status == status, "{}: solver {:?}, enumeration {:?}", inst.name, got.status, status);
        if status == LpStatus::Optimal {
            ensure!((got.objective - z).abs() <= 1e-7, "{}: solver {} vs enumeration {z}", inst.name, got.objective);
            ensure!(check_feasible(&inst, &got.x, 1e-7) == Ok(true), "{}: solver point infeasible", inst.name);
        }
        tally[match status {
            LpStatus::Optimal => 0,
            LpStatus::Infeasible => 1,
            _ => 2,
        }] += 1;
    }
    Ok(format!("100 LPs: {} optimal, {} infeasible, {} unbounded", tally[0], tally[1], tally[2]))
}

fn c3_dive() -> Result<String, String> {
    let mut rng = stream(3, &[]);
    let mut scorers: Vec<Scorer> =
        ["fractional", "coefficient", "pseudocost"].iter().map(|s| Scorer::builtin(s).unwrap()).collect();
    for _ in 0..20 {
        scorers.push(Scorer::Dsl(random_program(&mut rng, 4)));
    }
    let (mut dives, mut sols) = (0, 0);
    for i in 0..200u64 {
        let family = Family::ALL[(i % 4) as usize];
        let params = FamilyParams::preset(family, "tiny").unwrap();
        let inst = GenSpec::new(params, 3000 + i).generate().map_err(|e| e.to_string())?;
        let d_max = dhevo_core::diving::default_d_max(&inst);
        for s in &scorers {
            let r = dive(&inst, s, d_max);
            dives += 1;
            ensure!(r.lp_resolves <= d_max, "{}: {} solves > d_max {d_max}", inst.name, r.lp_resolves);
            ensure!(
                r.terminated_by != Termination::DepthLimit || r.depth_reached <= d_max,
                "{}: depth {} beyond {d_max}",
                inst.name,
                r.depth_reached
            );
            for sol in &r.solutions {
                sols += 1;
                let integral = inst.integer_vars().all(|j| sol.x[j] == sol.x[j].round());
                ensure!(integral, "{}: non-integral solution from {}", inst.name, s.label());
                ensure!(
                    check_feasible(&inst, &sol.x, TOL_FEAS) == Ok(true),
                    "{}: infeasible solution from {}",
                    inst.name,
                    s.label()
                );
            }
        }
    }
    Ok(format!("{dives} dives, {sols} solutions, 0 violations"))
}

fn c4_trace() -> Result<String, String> {
    let mut inst = Instance::new("two_var", 2);
    inst.obj = vec![-1.0, -1.0];
    inst.add_row(&[(0, 2.0), (1, 2.0)], Sense::Le, 3.0);
    inst.set_binary(0);
    inst.set_binary(1);
    let r = dive(&inst, &Scorer::builtin("fractional").unwrap(), 10);
    ensure!(r.solutions.len() == 1, "{} solutions", r.solutions.len());
    ensure!(r.solutions[0].x == vec![1.0, 0.0], "solution {:?}", r.solutions[0].x);
    ensure!(r.best_objective == Some(-1.0), "objective {:?}", r.best_objective);
    ensure!(r.lp_resolves == 2, "lp_resolves {}", r.lp_resolves);
    let z_ref = brute_force_opt(&inst).map_err(|e| e.to_string())?.objective.unwrap();
    let g = primal_gap(r.best_objective.unwrap(), z_ref);
    ensure!(g == 0.0, "gap {g}");
    Ok("x = (1, 0), objective -1, 2 LP solves, gap 0".into())
}

/// Entropy in bits of explicit bin counts.
fn entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    counts.iter().filter(|&&c| c > 0).map(|&c| c as f64 / n as f64).map(|p| -p * p.log2()).sum()
}

fn c5_metrics() -> Result<String, String> {
    let mut rng = stream(5, &[]);
    for _ in 0..1000 {
        let z = rng.random_range(-1e4..1e4);
        ensure!(primal_gap(z, z) == 0.0, "gap({z}, {z}) != 0");
        let w = rng.random_range(-1e4..1e4);
        ensure!(primal_dual_gap(z, w) == primal_dual_gap(w, z), "gap_pd not symmetric at ({z}, {w})");
        let g = primal_dual_gap(z, w);
        ensure!((0.0..=1.0).contains(&g), "gap_pd {g} out of range");
    }
    ensure!(primal_dual_gap(5.0, -3.0) == 1.0, "opposite signs");
    ensure!((primal_dual_gap(10.0, 8.0) - 0.2).abs() < 1e-15, "10 vs 8");
    let trace = [BoundEvent { time: 2.0, primal: 7.0, dual: 7.0 }];
    let pdi = primal_dual_integral(&trace, 5.0).map_err(|e| e.to_string())?;
    ensure!((pdi - 2.0).abs() <= 1e-12, "piecewise integral {pdi}");
    ensure!(primal_dual_integral(&[], 3.0) == Ok(3.0), "empty trace");
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let di = diversity_index(&scores);
        ensure!((0.0..=1.0).contains(&di), "DI {di} out of range");
    }
    ensure!(diversity_index(&[0.0, 1.0]) == 1.0, "one per bin");
    ensure!(diversity_index(&[4.2; 9]) == 0.0, "constant scores");
    // {1,1,2,3}: bins [1,2) and [2,3] hold 2 and 2.
    let expect = entropy(&[2, 2]) / 4f64.log2();
    let di = diversity_index(&[1.0, 1.0, 2.0, 3.0]);
    ensure!((di - expect).abs() < 1e-12, "DI(1,1,2,3) = {di}, expected {expect}");
    Ok("gap, gap_pd, integral and DI identities hold".into())
}

fn random_features<R: Rng>(rng: &mut R) -> FeatureVector {
    let real = |rng: &mut R| match rng.random_range(0..6) {
        0 => 0.0,
        1 => rng.random_range(-1e15..1e15),
        2 => 1e300 * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
        3 => 1e-300,
        _ => rng.random_range(-100.0..100.0),
    };
    FeatureVector {
        mayrounddown: rng.random_bool(0.5),
        mayroundup: rng.random_bool(0.5),
        candsfrac: rng.random_range(0.0..1.0),
        candsol: real(rng),
        nlocksdown: rng.random_range(0..40),
        nlocksup: rng.random_range(0..40),
        obj: real(rng),
        objnorm: real(rng).abs(),
        pscostdown: real(rng),
        pscostup: real(rng),
        rootsolval: real(rng),
        n_nonz: rng.random_range(0..100),
        is_binary: rng.random_bool(0.5),
    }
}

fn c6_dsl() -> Result<String, String> {
    let mut rng = stream(6, &[]);
    let programs: Vec<Program> = (0..1000).map(|_| random_program(&mut rng, 6)).collect();
    for p in &programs {
        let text = p.render();
        let back = Program::parse(&text).map_err(|e| format!("{text}: {e}"))?;
        ensure!(&back == p, "round-trip changed {text}");
    }
    for i in 0..10_000 {
        let p = &programs[i % programs.len()];
        let fv = random_features(&mut rng);
        let out = catch_unwind(|| p.eval(&fv)).map_err(|_| format!("eval panicked on {}", p.render()))?;
        ensure!(out.score.is_finite(), "non-finite score {} from {}", out.score, p.render());
    }
    Ok("1000 round-trips, 10000 evaluations finite".into())
}

fn pair_monotone(a: &Archive) -> Result<(), String> {
    for w in a.generations.windows(2) {
        for &i in &w[0].selected {
            let (before, after) = (w[0].pairs[i].fitness, w[1].pairs[i].fitness);
            ensure!(after >= before, "instance {i}: {before} -> {after} in generation {}", w[1].index);
        }
        for (p, q) in w[0].pairs.iter().zip(&w[1].pairs) {
            ensure!(q.fitness >= p.fitness, "instance {}: {} -> {}", p.instance, p.fitness, q.fitness);
        }
        ensure!(w[1].best_fitness >= w[0].best_fitness, "best fitness dropped");
    }
    Ok(())
}

fn c7_elitism() -> Result<String, String> {
    let t = Instant::now();
    let mut notes = Vec::new();
    for family in [Family::Setcover, Family::Facilities] {
        let cfg = EvolveConfig::mock(family, 4, 6, 3, 4, 7);
        let inst = prepare_instances(&cfg).map_err(|e| e.to_string())?;
        let provider = build_provider(&cfg.provider).map_err(|e| e.to_string())?;
        let a = run_dhevo(&cfg, &inst, provider.as_ref(), &Default::default(), &mut Silent).map_err(|e| e.to_string())?;
        ensure!(a.complete && a.generations.len() == 4, "{}: incomplete run", family.name());
        pair_monotone(&a).map_err(|e| format!("{}: {e}", family.name()))?;
        ensure!(a.episodes_used == cfg.episode_budget(), "episodes {} != {}", a.episodes_used, cfg.episode_budget());
        let first: f64 = a.generations[0].pairs.iter().map(|p| p.fitness).sum();
        let last: f64 = a.generations[3].pairs.iter().map(|p| p.fitness).sum();
        notes.push(format!("{} pair fitness sum {first:.3} -> {last:.3}", family.name()));
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(notes.join("; "))
}

fn c8_selection() -> Result<String, String> {
    let mut rng = stream(8, &[]);
    for trial in 0..1000 {
        let n = rng.random_range(1..30);
        let k = rng.random_range(1..=n);
        let pairs: Vec<DataCodePair> = (0..n)
            .map(|i| DataCodePair { instance: i, candidate: i, fitness: -rng.random_range(0.0..10.0) })
            .collect();
        let mut hot: Vec<usize> = select_topk_pairs(&pairs, k, 1e-9, &mut rng)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|p| p.instance)
            .collect();
        let mut exact: Vec<usize> = pairs.clone().into_iter().map(|p| p.instance).collect();
        exact.sort_by(|&a, &b| pairs[b].fitness.total_cmp(&pairs[a].fitness));
        exact.truncate(k);
        hot.sort();
        exact.sort();
        ensure!(hot == exact, "trial {trial}: {hot:?} vs {exact:?}");
        let strict: Vec<usize> = topk_strict(&pairs, k).unwrap().iter().map(|p| p.instance).collect();
        ensure!(strict.iter().all(|i| exact.contains(i)), "strict top-k disagrees");
    }
    Ok("1000 lists match exact top-k".into())
}

fn c9_ablation() -> Result<String, String> {
    let cfg = EvolveConfig::mock(Family::Facilities, 4, 6, 3, 3, 9);
    let inst = prepare_instances(&cfg).map_err(|e| e.to_string())?;
    let provider = build_provider(&cfg.provider).map_err(|e| e.to_string())?;
    let t = Default::default();
    let d = run_dhevo(&cfg, &inst, provider.as_ref(), &t, &mut Silent).map_err(|e| e.to_string())?;
    let b = run_baseline_ec(&cfg, &inst, provider.as_ref(), &t, &mut Silent).map_err(|e| e.to_string())?;
    ensure!(d.complete && b.complete, "a run did not complete");
    ensure!(d.episodes_used == b.episodes_used, "budgets differ: {} vs {}", d.episodes_used, b.episodes_used);
    let diff = archive_diff(&d, &b);
    ensure!(!diff.is_empty(), "archives are identical");
    let bad = non_pathway_differences(&d, &diff);
    ensure!(bad.is_empty(), "differences outside selection/fitness: {:?}", &bad[..bad.len().min(5)]);
    let d_best = d.portfolio[0].f_avg;
    let b_best = b.portfolio[0].f_avg;
    Ok(format!("{} differing paths, all in selection/fitness; best f_avg {d_best:.4} vs {b_best:.4}", diff.len()))
}

const EVOLVE_TOML: &str = r#"
m = 4
n = 5
k = 2
t_iters = 3
seed = 12
[instances]
source = "generate"
family = "cauctions"
preset = "tiny"
seed = 3
[provider]
kind = "mock"
seed = 4
"#;

fn evolve_in(dir: &Path, config: &Path) -> Result<Vec<u8>, String> {
    let args = EvolveArgs { config: config.to_path_buf(), out: dir.to_path_buf(), stop_after: None, resume: false };
    let o = cmd_evolve(&args, None, Arc::new(AtomicBool::new(false))).map_err(|e| e.to_string())?;
    ensure!(o.complete, "run incomplete");
    std::fs::read(&o.archive).map_err(|e| e.to_string())
}

fn c10_repro() -> Result<String, String> {
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = d.path().join("evolve.toml");
    std::fs::write(&cfg, EVOLVE_TOML).map_err(|e| e.to_string())?;
    let a = evolve_in(&d.path().join("a"), &cfg)?;
    let b = evolve_in(&d.path().join("b"), &cfg)?;
    ensure!(a == b, "archives differ");
    Ok(format!("two runs, identical {}-byte archives", a.len()))
}

fn c11_report() -> Result<String, String> {
    let d = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = d.path();
    let gen = |out: &str, count: usize| GenArgs {
        family: Some(Family::Cauctions),
        preset: "tiny".into(),
        params: None,
        count,
        out: root.join(out),
        no_reference: false,
        bnb_nodes: BnbLimits::default().max_nodes,
        bnb_seconds: BnbLimits::default().max_seconds,
    };
    cmd_gen(&gen("train", 5), 21).map_err(|e| e.to_string())?;
    cmd_gen(&gen("test", 12), 22).map_err(|e| e.to_string())?;
    let cfg = root.join("evolve.toml");
    let text = EVOLVE_TOML.replace(
        "source = \"generate\"\nfamily = \"cauctions\"\npreset = \"tiny\"\nseed = 3",
        &format!("source = \"dir\"\npath = {:?}", root.join("train").to_str().unwrap()),
    );
    std::fs::write(&cfg, text).map_err(|e| e.to_string())?;
    evolve_in(&root.join("run"), &cfg)?;
    let eval = EvalArgs {
        portfolio: Some(root.join("run/portfolio.json")),
        instances: root.join("test"),
        out: root.join("eval"),
        baselines: vec!["fractional".into(), "coefficient".into(), "pseudocost".into()],
        d_max: None,
        gap_cap: 10.0,
    };
    let summaries = cmd_eval(&eval, 0).map_err(|e| e.to_string())?;
    let rep = ReportArgs { inputs: vec![root.join("eval/per_instance.csv")], out: root.join("report") };
    let again = cmd_report(&rep).map_err(|e| e.to_string())?;
    ensure!(again == summaries, "report recomputation differs from eval summary");

    // Independent recomputation from the per-instance CSV.
    let csv = std::fs::read_to_string(root.join("eval/per_instance.csv")).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let (mi, gi) = (
        header.iter().position(|h| *h == "method").ok_or("no method column")?,
        header.iter().position(|h| *h == "gamma_p").ok_or("no gamma_p column")?,
    );
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for line in lines {
        let cells: Vec<&str> = line.split(',').collect();
        let g: f64 = cells[gi].parse().map_err(|_| format!("bad gamma_p in {line}"))?;
        match groups.iter_mut().find(|(m, _)| m == cells[mi]) {
            Some((_, v)) => v.push(g),
            None => groups.push((cells[mi].to_string(), vec![g])),
        }
    }
    let md = std::fs::read_to_string(root.join("report/report.md")).map_err(|e| e.to_string())?;
    ensure!(groups.len() == summaries.len(), "{} methods in CSV, {} in summary", groups.len(), summaries.len());
    for ((m, v), s) in groups.iter().zip(&summaries) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
        let se = (var / n).sqrt();
        ensure!(m == &s.method && v.len() == s.n, "row mismatch for {m}");
        ensure!((mean - s.mean).abs() <= 1e-12 && (se - s.se).abs() <= 1e-12, "{m}: ({mean}, {se}) vs ({}, {})", s.mean, s.se);
        ensure!(md.contains(&format!("{mean:.4} ({se:.4})")), "{m}: markdown lacks {mean:.4} ({se:.4})");
    }
    ensure!(md.lines().next().unwrap_or("").contains("mean (SE)"), "no mean (SE) header");
    let archive = evolution::load_archive(&root.join("run/archive.json")).map_err(|e| e.to_string())?;
    ensure!(archive.complete, "archive incomplete");
    Ok(format!("{} methods x 12 instances, summaries match recomputation", summaries.len()))
}
