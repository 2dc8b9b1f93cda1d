//! Tiny households whose optima lie on the oracle grid, so the MILP and the
//! exhaustive oracle must agree exactly.

use std::time::Instant;

use serde::Serialize;

use super::{
    brute_force_oracle, minimax_value, solve_minimax, CaseSpec, OracleGrid, SolverBackend,
    StandaloneOptima,
};
use crate::domain::{
    Appliance, ApplianceCategory, BaselineProfiles, Battery, Capacitor, HouseholdModel, PvPanel,
    Tariff, TimeGrid,
};
use crate::error::SolveError;
use crate::model::{build_problem, check_solution, BuildOptions};
use crate::scenarios::{ApplianceScenarioSet, RenewableScenarioSet};

#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub name: &'static str,
    pub model: HouseholdModel,
    pub appliances: ApplianceScenarioSet,
    pub renewables: RenewableScenarioSet,
    pub grid: OracleGrid,
    /// Minimax weights to compare as well, if any.
    pub weights: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MicroCheck {
    pub name: &'static str,
    pub milp: [f64; 4],
    pub oracle: [f64; 4],
    pub milp_minimax: Option<f64>,
    pub oracle_minimax: Option<f64>,
    pub candidates: u128,
    pub runtime_s: f64,
}

impl MicroCheck {
    /// Largest absolute difference between MILP and oracle values.
    pub fn max_abs_diff(&self) -> f64 {
        let mut d = self
            .milp
            .iter()
            .zip(&self.oracle)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if let (Some(a), Some(b)) = (self.milp_minimax, self.oracle_minimax) {
            d = d.max((a - b).abs());
        }
        d
    }
}

fn hourly(n: usize) -> TimeGrid {
    TimeGrid::new(1.0, n).expect("micro grid")
}

fn bare(n: usize) -> HouseholdModel {
    let grid = hourly(n);
    HouseholdModel {
        time_grid: grid,
        appliances: Vec::new(),
        battery: Battery::none(),
        capacitor: Capacitor::none(),
        pv: PvPanel {
            efficiency: 0.18,
            area_m2: 10.0,
        },
        tariff: Tariff::flat(0.1, &grid),
        baseline: BaselineProfiles::zeros(&grid),
        p_max: 10.0,
    }
}

fn shiftable(id: &str, alpha: usize, beta: usize, p_max: f64, slots: f64, pf: f64) -> Appliance {
    Appliance {
        id: id.into(),
        category: ApplianceCategory::TimeShiftable,
        alpha,
        beta,
        p_min: 0.0,
        p_max,
        energy: p_max * slots,
        power_factor: pf,
    }
}

fn ev(alpha: usize, beta: usize, p_min: f64, p_max: f64, energy: f64) -> Appliance {
    Appliance {
        id: "ev".into(),
        category: ApplianceCategory::PowerAndTimeShiftable,
        alpha,
        beta,
        p_min,
        p_max,
        energy,
        power_factor: 1.0,
    }
}

fn lossless_battery(e_init: f64, e_max: f64, rate: f64) -> Battery {
    Battery {
        e_init,
        e_max,
        eta_c: 1.0,
        eta_d: 1.0,
        r_charge_max: rate,
        r_discharge_max: rate,
    }
}

fn no_pv(model: &HouseholdModel) -> RenewableScenarioSet {
    RenewableScenarioSet::none(&model.time_grid)
}

fn pv(profiles: &[(&str, Vec<f64>, f64)]) -> RenewableScenarioSet {
    RenewableScenarioSet {
        labels: profiles.iter().map(|(l, _, _)| l.to_string()).collect(),
        p_g: profiles.iter().map(|(_, p, _)| p.clone()).collect(),
        rho: profiles.iter().map(|(_, _, r)| *r).collect(),
    }
}

fn instance(
    name: &'static str,
    model: HouseholdModel,
    appliances: Option<ApplianceScenarioSet>,
    renewables: Option<RenewableScenarioSet>,
    grid: OracleGrid,
    weights: Option<[f64; 4]>,
) -> MicroInstance {
    let appliances = appliances.unwrap_or_else(|| ApplianceScenarioSet::empty(&model.time_grid));
    let renewables = renewables.unwrap_or_else(|| no_pv(&model));
    MicroInstance {
        name,
        model,
        appliances,
        renewables,
        grid,
        weights,
    }
}

/// The fixed micro-instance suite.
pub fn micro_instances() -> Vec<MicroInstance> {
    let mut out = Vec::new();

    let mut m = bare(3);
    m.appliances.push(shiftable("kettle", 1, 3, 1.0, 1.0, 1.0));
    out.push(instance(
        "shiftable_flat_price",
        m,
        None,
        None,
        OracleGrid::default(),
        None,
    ));

    let mut m = bare(3);
    m.appliances.push(shiftable("kettle", 1, 3, 1.0, 1.0, 1.0));
    m.tariff.price_per_slot = vec![1.0, 2.0, 3.0];
    out.push(instance(
        "shiftable_rising_price",
        m,
        None,
        None,
        OracleGrid::default(),
        None,
    ));

    let mut m = bare(4);
    m.baseline.p_sc = vec![0.2, 0.6, 0.2, 0.6];
    m.battery = lossless_battery(0.0, 1.0, 0.4);
    let grid = OracleGrid {
        battery_levels: vec![0.0, 0.2, 0.4],
        ..OracleGrid::default()
    };
    out.push(instance(
        "battery_only_smoothing",
        m,
        None,
        None,
        grid,
        None,
    ));

    let mut m = bare(4);
    m.baseline.p_sc = vec![0.5, 0.5, 0.5, 0.5];
    m.tariff.price_per_slot = vec![0.1, 0.1, 0.3, 0.3];
    m.battery = lossless_battery(0.0, 0.8, 0.4);
    let grid = OracleGrid {
        battery_levels: vec![0.0, 0.2, 0.4],
        ..OracleGrid::default()
    };
    out.push(instance("battery_arbitrage", m, None, None, grid, None));

    let mut m = bare(4);
    m.baseline.p_sc = vec![0.1; 4];
    m.baseline.q_sc = vec![0.01, 0.02, 0.01, 0.02];
    m.capacitor = Capacitor {
        e_init: 0.0,
        e_max: 0.02,
        eta_c: 1.0,
        eta_d: 1.0,
        r_charge_max: 0.01,
        r_discharge_max: 0.01,
    };
    let grid = OracleGrid {
        capacitor_levels: vec![0.0, 0.005, 0.01],
        ..OracleGrid::default()
    };
    out.push(instance("capacitor_smoothing", m, None, None, grid, None));

    let mut m = bare(5);
    m.baseline.p_sc = vec![1.0, 0.5, 0.5, 0.0, 1.0];
    m.appliances.push(ev(2, 4, 0.5, 1.0, 2.0));
    let grid = OracleGrid {
        pts_levels: vec![0.5, 1.0],
        ..OracleGrid::default()
    };
    out.push(instance("ev_fills_valley", m, None, None, grid, None));

    let mut m = bare(4);
    m.baseline.p_sc = vec![0.5; 4];
    let ren = pv(&[("sunny", vec![0.0, 0.5, 0.5, 0.0], 1.0)]);
    out.push(instance(
        "pv_curtailment",
        m,
        None,
        Some(ren),
        OracleGrid::default(),
        None,
    ));

    let mut m = bare(4);
    m.baseline.p_sc = vec![0.6; 4];
    m.tariff.price_per_slot = vec![0.1, 0.2, 0.2, 0.1];
    let ren = pv(&[
        ("clear", vec![0.0, 0.4, 0.4, 0.0], 0.5),
        ("overcast", vec![0.0, 0.2, 0.0, 0.0], 0.5),
    ]);
    out.push(instance(
        "two_pv_scenarios",
        m,
        None,
        Some(ren),
        OracleGrid::default(),
        None,
    ));

    let mut m = bare(4);
    m.appliances.push(shiftable("washer", 1, 4, 0.8, 2.0, 0.8));
    m.baseline.p_sc = vec![0.8, 0.0, 0.0, 0.8];
    m.baseline.q_sc = vec![0.0, 0.6, 0.6, 0.0];
    let app = ApplianceScenarioSet {
        p: vec![vec![0.0, 0.2, 0.0, 0.0], vec![0.0; 4]],
        q: vec![vec![0.0; 4], vec![0.0; 4]],
        rho: vec![0.5, 0.5],
    };
    out.push(instance(
        "shiftable_with_on_demand",
        m,
        Some(app),
        None,
        OracleGrid::default(),
        None,
    ));

    let mut m = bare(6);
    m.appliances
        .push(shiftable("dishwasher", 1, 6, 1.0, 2.0, 1.0));
    m.appliances.push(ev(3, 5, 0.5, 1.0, 2.0));
    m.baseline.p_sc = vec![0.5, 0.5, 1.0, 1.0, 0.5, 0.5];
    m.tariff.price_per_slot = vec![0.3, 0.2, 0.1, 0.1, 0.2, 0.3];
    let grid = OracleGrid {
        pts_levels: vec![0.5, 1.0],
        ..OracleGrid::default()
    };
    out.push(instance("two_appliances", m, None, None, grid, None));

    let mut m = bare(4);
    m.appliances.push(shiftable("kettle", 1, 4, 1.0, 1.0, 1.0));
    m.baseline.p_sc = vec![0.5, 0.5, 0.5, 0.5];
    m.battery = lossless_battery(0.0, 1.0, 0.75);
    let grid = OracleGrid {
        battery_levels: vec![0.0, 0.25, 0.75],
        ..OracleGrid::default()
    };
    out.push(instance("battery_and_shiftable", m, None, None, grid, None));

    let mut m = bare(4);
    m.appliances.push(shiftable("kettle", 1, 4, 1.0, 1.0, 1.0));
    m.baseline.p_sc = vec![1.0, 1.0, 1.0, 0.0];
    m.tariff.price_per_slot = vec![1.0, 2.0, 3.0, 4.0];
    out.push(instance(
        "minimax_smoothing_vs_cost",
        m,
        None,
        None,
        OracleGrid::default(),
        Some([1.0, 0.0, 1.0, 0.0]),
    ));

    out
}

/// Settings that make the MILP side exact on micro instances.
pub fn exact_settings() -> super::SolverSettings {
    super::SolverSettings {
        mip_rel_gap: 0.0,
        time_limit_s: 30.0,
        threads: Some(1),
    }
}

/// Solves all four stand-alone optima (and the minimax, if weighted) with the
/// MILP and compares them against the oracle.
pub fn check_micro(
    inst: &MicroInstance,
    backend: &dyn SolverBackend,
) -> Result<MicroCheck, SolveError> {
    let started = Instant::now();
    let problem = build_problem(
        &inst.model,
        &inst.appliances,
        &inst.renewables,
        BuildOptions::default(),
    )?;
    let optima = StandaloneOptima::compute(&problem, [true; 4], backend, 1)?;
    for s in optima.solutions.iter().flatten() {
        let report = check_solution(&problem, &s.assignment, 1e-6)?;
        if !report.is_feasible() {
            return Err(SolveError::Oracle(format!(
                "{}: {} optimum violates {} rows",
                inst.name,
                s.objective,
                report.violations.len()
            )));
        }
    }
    let mut milp = [0.0; 4];
    for (i, s) in optima.solutions.iter().enumerate() {
        milp[i] = s.as_ref().map(|s| s.value).unwrap_or(f64::NAN);
    }
    let milp_minimax = match inst.weights {
        Some(w) => {
            let case = CaseSpec { id: 99, weights: w };
            let r = solve_minimax(&problem, case, &optima, backend)?;
            minimax_value(&case, &r.objectives, &optima)
        }
        None => None,
    };
    let oracle = brute_force_oracle(
        &inst.model,
        &inst.appliances,
        &inst.renewables,
        inst.weights,
        &inst.grid,
    )?;
    Ok(MicroCheck {
        name: inst.name,
        milp,
        oracle: oracle.optima,
        milp_minimax,
        oracle_minimax: oracle.minimax,
        candidates: oracle.candidates,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}
