use dhevo_core::agents::{MockFault, Origin, Templates};
use dhevo_core::diving::{default_d_max, dive, Scorer};
use dhevo_core::dsl::random_program;
use dhevo_core::evolution::{build_provider, prepare_instances, run_dhevo, EvolveConfig, ProviderConfig, Silent};
use dhevo_core::gen::{Family, FamilyParams, GenSpec};
use dhevo_core::io::{self, load_instance, load_program, save_instance, save_program, Reference};
use dhevo_core::metrics::summarize;
use dhevo_core::parallel::{par_map, seq_map};
use dhevo_core::report::{evaluate_methods, scorer_from_spec, summarize_rows};
use dhevo_core::rng::stream;

#[test]
fn instance_files_round_trip_for_every_family() {
    let d = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let params = FamilyParams::preset(family, "tiny").unwrap();
        for inst in GenSpec::generate_batch(params, 11, 3).unwrap() {
            let path = d.path().join(format!("{}.json", inst.name));
            let r = Reference { objective: -1.25, proven: false };
            save_instance(&path, &inst, Some(r)).unwrap();
            let (back, r2) = load_instance(&path).unwrap();
            assert_eq!(back, inst);
            assert_eq!(r2, Some(r));
            let again = d.path().join("again.json");
            save_instance(&again, &back, r2).unwrap();
            assert_eq!(std::fs::read_to_string(&path).unwrap(), std::fs::read_to_string(&again).unwrap());
        }
    }
    let loaded = io::load_instance_dir(d.path()).unwrap();
    assert_eq!(loaded.len(), 13);
}

#[test]
fn program_files_round_trip() {
    let d = tempfile::tempdir().unwrap();
    let mut rng = stream(4, &[]);
    for i in 0..50 {
        let p = random_program(&mut rng, 5);
        let path = d.path().join(format!("p{i}.dh"));
        save_program(&path, &p).unwrap();
        assert_eq!(load_program(&path).unwrap(), p);
    }
}

#[test]
fn parallel_batch_matches_sequential() {
    let params = FamilyParams::preset(Family::Indset, "tiny").unwrap();
    let batch = GenSpec::generate_batch(params, 3, 12).unwrap();
    let scorer = Scorer::builtin("pseudocost").unwrap();
    let run = |inst: &_| {
        let r = dive(inst, &scorer, default_d_max(inst));
        (r.best_objective, r.lp_resolves, r.lp_objectives)
    };
    assert_eq!(par_map(&batch, run), seq_map(&batch, run));
}

#[test]
fn garbage_provider_still_fills_every_slot() {
    let mut cfg = EvolveConfig::mock(Family::Cauctions, 3, 4, 2, 2, 1);
    cfg.provider = ProviderConfig::Mock { seed: 1, fault: MockFault::Garbage };
    let inst = prepare_instances(&cfg).unwrap();
    let p = build_provider(&cfg.provider).unwrap();
    let a = run_dhevo(&cfg, &inst, p.as_ref(), &Templates::builtin(), &mut Silent).unwrap();
    assert!(a.complete);
    assert_eq!(a.candidates.len(), cfg.episode_budget());
    assert!(a.candidates.iter().all(|c| c.origin == Origin::Random && c.fallback.is_some()));
}

#[test]
fn evolved_portfolio_evaluates_like_the_report_says() {
    let cfg = EvolveConfig::mock(Family::Facilities, 4, 5, 2, 3, 2);
    let inst = prepare_instances(&cfg).unwrap();
    let p = build_provider(&cfg.provider).unwrap();
    let a = run_dhevo(&cfg, &inst, p.as_ref(), &Templates::builtin(), &mut Silent).unwrap();
    let mut methods: Vec<_> =
        a.portfolio.iter().map(|e| (format!("c{}", e.candidate), scorer_from_spec(&e.scorer).unwrap())).collect();
    methods.push(("builtin:fractional".into(), scorer_from_spec("builtin:fractional").unwrap()));
    let rows = evaluate_methods(&methods, &inst, cfg.d_max, cfg.gap_cap);
    assert_eq!(rows.len(), methods.len() * inst.len());
    let summary = summarize_rows(&rows);
    for (s, (name, _)) in summary.iter().zip(&methods) {
        assert_eq!(&s.method, name);
        let gaps: Vec<f64> = rows.iter().filter(|r| &r.method == name).map(|r| r.gamma_p).collect();
        let expect = summarize(&gaps);
        assert_eq!((s.mean, s.se), (expect.mean, expect.std_error));
    }
    // Training fitness is the negated capped gap, so the archive and the
    // evaluation must agree on every training instance.
    for e in &a.portfolio {
        let c = &a.candidates[e.candidate];
        let name = format!("c{}", e.candidate);
        for (i, r) in rows.iter().filter(|r| r.method == name).enumerate() {
            assert_eq!(c.fitness[i], 0.0 - r.gamma_p, "{name} on {}", r.instance);
        }
    }
}
