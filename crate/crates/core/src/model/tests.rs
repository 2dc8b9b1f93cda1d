use proptest::prelude::*;

use super::*;
use crate::domain::tests::table_ii_household;
use crate::domain::{build_time_grid, TimeGrid};

fn small() -> (HouseholdModel, ApplianceScenarioSet, RenewableScenarioSet) {
    let grid = build_time_grid(60, 24).unwrap();
    let mut model = table_ii_household(grid);
    model.appliances.push(Appliance {
        id: "ev".into(),
        category: ApplianceCategory::PowerAndTimeShiftable,
        alpha: 3,
        beta: 10,
        p_min: 0.5,
        p_max: 3.0,
        energy: 8.0,
        power_factor: 0.97,
    });
    model.baseline.p_sc = (0..24).map(|t| 0.2 + 0.01 * t as f64).collect();
    model.baseline.q_sc = vec![0.05; 24];
    let app = ApplianceScenarioSet {
        p: vec![vec![0.3; 24], vec![0.1; 24]],
        q: vec![vec![0.1; 24], vec![0.0; 24]],
        rho: vec![0.25, 0.75],
    };
    let ren = RenewableScenarioSet {
        labels: vec!["a".into(), "b".into()],
        p_g: vec![vec![0.5; 24], vec![0.0; 24]],
        rho: vec![0.5, 0.5],
    };
    (model, app, ren)
}

fn built() -> (HouseholdModel, ApplianceScenarioSet, MilpProblem) {
    let (model, app, ren) = small();
    let problem = build_problem(&model, &app, &ren, BuildOptions::default()).unwrap();
    (model, app, problem)
}

#[test]
fn variable_count_matches_formula() {
    let (_, _, problem) = built();
    // T = 24, two appliances (one time-shiftable), two PV scenarios.
    assert_eq!(problem.num_variables(), 24 * (8 + 4 + 2) + 24 + 4 * 23 + 1);
    assert_eq!(expected_variable_count(4, 1, 1, 1), 4 * 11 + 4 + 12 + 1);
    let binaries = problem.variables().iter().filter(|v| v.binary).count();
    assert_eq!(binaries, 24);
}

#[test]
fn discomfort_is_squared_lag_over_energy() {
    let mut a = table_ii_household(build_time_grid(15, 24).unwrap()).appliances[0].clone();
    a.alpha = 3;
    a.beta = 10;
    a.energy = 2.0;
    assert_eq!(discomfort_coefficient(&a, 5).unwrap(), 2.0);
    assert_eq!(discomfort_coefficient(&a, 3).unwrap(), 0.0);
    assert!(matches!(
        discomfort_coefficient(&a, 11),
        Err(ModelError::OutsideWindow { t: 11, .. })
    ));
}

#[test]
fn reactive_power_from_power_factor() {
    assert!((reactive_from_pf(2.0, 0.8).unwrap() - 1.5).abs() < 1e-12);
    assert_eq!(reactive_from_pf(3.0, 1.0).unwrap(), 0.0);
    assert!(reactive_from_pf(1.0, 0.0).is_err());
    assert!(reactive_from_pf(1.0, 1.2).is_err());
}

#[test]
fn earliest_schedule_is_feasible() {
    let (model, app, problem) = built();
    let x = assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
    let report = check_solution(&problem, &x, 1e-9).unwrap();
    assert!(report.is_feasible(), "{report:?}");
    assert!(report.warnings.is_empty());
}

#[test]
fn unbalanced_battery_is_tagged() {
    let (model, app, problem) = built();
    let mut x =
        assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
    x[problem.id(VarRef::BatteryCharge(5)).0] = 0.1;
    let report = check_solution(&problem, &x, 1e-6).unwrap();
    assert!(report
        .violations
        .iter()
        .any(|v| v.provenance == Provenance::BatteryDayBalance));
    assert!(report
        .violations
        .iter()
        .any(|v| v.provenance == Provenance::RealBalance));
}

#[test]
fn simultaneous_flows_warn() {
    let (model, app, problem) = built();
    let mut x =
        assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
    x[problem.id(VarRef::BatteryCharge(2)).0] = 0.2;
    x[problem.id(VarRef::BatteryDischarge(2)).0] = 0.2;
    let report = check_solution(&problem, &x, 1e-6).unwrap();
    assert_eq!(report.warnings.len(), 1);
}

#[test]
fn objectives_match_direct_formulas() {
    let (model, app, problem) = built();
    let x = assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
    let pm = problem.series(&x, VarRef::MeteredP);
    let qm = problem.series(&x, VarRef::MeteredQ);
    let dt = model.time_grid.slot_hours();

    let o1: f64 = pm.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let o2: f64 = qm.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    let o3: f64 = pm
        .iter()
        .zip(&model.tariff.price_per_slot)
        .map(|(p, c)| p * c * dt)
        .sum();
    let mut o4 = 0.0;
    for (a, app) in model.appliances.iter().enumerate() {
        for t in app.window() {
            let lag = (t - app.alpha) as f64;
            o4 += lag * lag / app.energy * x[problem.id(VarRef::ApplianceP(a, t)).0];
        }
    }
    let got = problem.evaluate_all(&x).unwrap();
    for (g, want) in got.iter().zip([o1, o2, o3, o4]) {
        assert!((g - want).abs() < 1e-9, "{g} vs {want}");
    }
}

#[test]
fn storage_penalty_weights() {
    let (model, app, problem) = built();
    let mut x =
        assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
    let base = problem.evaluate_all(&x).unwrap();
    x[problem.id(VarRef::CapacitorCharge(1)).0] += 1.0;
    let bumped = problem.evaluate_all(&x).unwrap();
    // Slot 1 carries no variation term in the privacy objectives.
    assert_eq!(bumped[0], base[0]);
    assert_eq!(bumped[2], base[2]);
    assert!((bumped[3] - base[3] - 2.0 * EPSILON).abs() < 1e-12);
    x[problem.id(VarRef::CapacitorCharge(2)).0] += 1.0;
    let again = problem.evaluate_all(&x).unwrap();
    assert!((again[0] - base[0] - EPSILON).abs() < 1e-12);
    assert!((again[1] - base[1] - EPSILON).abs() < 1e-12);
}

#[test]
fn export_lower_bound_toggles() {
    let (model, app, ren) = small();
    let closed = build_problem(&model, &app, &ren, BuildOptions::default()).unwrap();
    let open = build_problem(
        &model,
        &app,
        &ren,
        BuildOptions {
            allow_export: true,
            ..BuildOptions::default()
        },
    )
    .unwrap();
    let pm1 = closed.id(VarRef::MeteredP(1));
    assert_eq!(closed.variables()[pm1.0].lower, 0.0);
    assert_eq!(open.variables()[pm1.0].lower, f64::NEG_INFINITY);
}

#[test]
fn mismatched_scenarios_rejected() {
    let (model, _, ren) = small();
    let app = ApplianceScenarioSet::empty(&TimeGrid::new(0.25, 96).unwrap());
    assert!(matches!(
        build_problem(&model, &app, &ren, BuildOptions::default()),
        Err(ModelError::GridMismatch(_))
    ));
}

#[test]
fn lp_export_is_reproducible() {
    let (_, _, problem) = built();
    let mut a = Vec::new();
    let mut b = Vec::new();
    write_lp(&problem, Objective::Cost, &mut a).unwrap();
    write_lp(&problem, Objective::Cost, &mut b).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("\\ privshape"));
    assert!(text.contains("Binaries\n y_1_1 "));
    assert!(text.contains(" Z free"));
    assert!(text.contains("battery_day_balance"));
    assert!(text.trim_end().ends_with("End"));
}

#[test]
fn canonicalize_merges_terms() {
    let mut e = LinearExpr::new()
        .term(VarId(3), 1.0)
        .term(VarId(1), 2.0)
        .term(VarId(3), -1.0)
        .term(VarId(1), 0.5);
    e.canonicalize();
    assert_eq!(e.terms, vec![(VarId(1), 2.5)]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_households_build_and_admit_earliest_schedule(
        slot in prop::sample::select(vec![60u32, 120, 240]),
        alpha_frac in 0.0f64..0.5,
        len_frac in 0.3f64..0.5,
        run in 1usize..3,
        p_max in 0.5f64..3.0,
        pf in 0.5f64..1.0,
        base in 0.0f64..2.0,
    ) {
        let grid = build_time_grid(slot, 24).unwrap();
        let t_len = grid.num_slots();
        let mut model = table_ii_household(grid);
        let alpha = 1 + (alpha_frac * t_len as f64) as usize;
        let beta = (alpha + (len_frac * t_len as f64) as usize).min(t_len);
        let a = &mut model.appliances[0];
        a.alpha = alpha;
        a.beta = beta;
        a.p_max = p_max;
        a.power_factor = pf;
        a.energy = p_max * grid.slot_hours() * run.min(beta - alpha + 1) as f64;
        model.baseline.p_sc = vec![base; t_len];
        let app = ApplianceScenarioSet::empty(&grid);
        let ren = RenewableScenarioSet::none(&grid);
        let problem = build_problem(&model, &app, &ren, BuildOptions::default()).unwrap();
        let x = assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
        let report = check_solution(&problem, &x, 1e-9).unwrap();
        prop_assert!(report.is_feasible(), "{:?}", report);
        let o = problem.evaluate_all(&x).unwrap();
        prop_assert!(o.iter().all(|v| *v >= -1e-12));
    }
}

#[test]
fn exclusive_storage_adds_modes() {
    let (model, app, ren) = small();
    let problem = build_problem(
        &model,
        &app,
        &ren,
        BuildOptions {
            exclusive_storage: true,
            ..BuildOptions::default()
        },
    )
    .unwrap();
    assert_eq!(
        problem.num_variables(),
        expected_variable_count(24, 2, 1, 2) + 48
    );
    assert_eq!(
        problem.variables().iter().filter(|v| v.binary).count(),
        24 + 48
    );
    let x = assignment_from_schedule(&problem, &model, &app, &model.earliest_schedule()).unwrap();
    assert!(check_solution(&problem, &x, 1e-9).unwrap().is_feasible());

    let mut both = x.clone();
    both[problem.id(VarRef::BatteryCharge(3)).0] = 0.1;
    both[problem.id(VarRef::BatteryDischarge(3)).0] = 0.1;
    let report = check_solution(&problem, &both, 1e-9).unwrap();
    assert!(report
        .violations
        .iter()
        .any(|v| v.provenance == Provenance::StorageExclusion));
}
