//! The whole pipeline for one household day: traces and config in, case
//! matrix and privacy reports out.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::HouseholdConfig;
use crate::domain::{build_time_grid, HouseholdModel, TimeGrid};
use crate::ingest::{extract_day, DayProfiles, IrradianceTraces, RawTraces};
use crate::model::{build_problem, BuildOptions, FeasibilityReport, MilpProblem, VarRef};
use crate::privacy::{evaluate_case_privacy, ActualSeries, MiReport, QuantizerSpec};
use crate::scenarios::{
    build_appliance_scenarios, build_renewable_scenarios, ApplianceScenarioSet, ClusteringResult,
    RenewableScenarioSet,
};
use crate::solve::{run_case_matrix, CaseMatrix, CaseResult, CaseSpec, SolverBackend};

/// A failure tagged with the pipeline stage that produced it.
#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> StageError {
    move |e| StageError {
        stage,
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSettings {
    /// Slot length; the config's `delta_t_min` when `None`.
    pub slot_minutes: Option<u32>,
    pub k: usize,
    pub seed: u64,
    pub quantizer: QuantizerSpec,
    pub cases: Vec<CaseSpec>,
    pub build: BuildOptions,
    pub jobs: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            slot_minutes: None,
            k: 10,
            seed: 42,
            quantizer: QuantizerSpec::default(),
            cases: CaseSpec::TABLE.to_vec(),
            build: BuildOptions::default(),
            jobs: 1,
        }
    }
}

/// Everything built before the first solve.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub grid: TimeGrid,
    pub day: DayProfiles,
    pub model: HouseholdModel,
    pub appliance_scenarios: ApplianceScenarioSet,
    pub clustering: ClusteringResult,
    pub renewable_scenarios: RenewableScenarioSet,
    pub problem: MilpProblem,
    /// Observed power of each shiftable appliance on the chosen day.
    pub observed_schedule: Vec<Vec<f64>>,
}

pub fn prepare(
    config: &HouseholdConfig,
    traces: &RawTraces,
    irradiance: &IrradianceTraces,
    settings: &ExperimentSettings,
) -> Result<Prepared, StageError> {
    let minutes = settings.slot_minutes.unwrap_or(config.delta_t_min);
    let grid = build_time_grid(minutes, config.horizon_h).map_err(stage("grid"))?;
    let traces = traces.to_step(minutes).map_err(stage("ingest"))?;
    let day = extract_day(&traces, config.day_index).map_err(stage("ingest"))?;
    let model = config
        .to_model(grid, day.baseline.clone())
        .map_err(stage("config"))?;
    let (appliance_scenarios, clustering) =
        build_appliance_scenarios(&traces, &grid, settings.k, settings.seed)
            .map_err(stage("scenarios"))?;
    let renewable_scenarios =
        build_renewable_scenarios(irradiance, &model.pv, &grid).map_err(stage("scenarios"))?;
    let by_id = day.shiftable_by_id();
    let observed_schedule = model
        .appliances
        .iter()
        .map(|a| {
            by_id
                .get(a.id.as_str())
                .map(|t| t.p.clone())
                .ok_or_else(|| StageError {
                    stage: "ingest",
                    message: format!("no trace for shiftable appliance '{}'", a.id),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let problem = build_problem(
        &model,
        &appliance_scenarios,
        &renewable_scenarios,
        settings.build,
    )
    .map_err(stage("model"))?;
    Ok(Prepared {
        grid,
        day,
        model,
        appliance_scenarios,
        clustering,
        renewable_scenarios,
        problem,
        observed_schedule,
    })
}

impl Prepared {
    /// Consumption implied by a case result: safety-critical baseline,
    /// expected on-demand load and the scheduled shiftable appliances.
    pub fn actual_series(&self, result: &CaseResult) -> ActualSeries {
        let (od_p, od_q) = self.appliance_scenarios.expected();
        let mut p: Vec<f64> = self
            .model
            .baseline
            .p_sc
            .iter()
            .zip(&od_p)
            .map(|(a, b)| a + b)
            .collect();
        let mut q: Vec<f64> = self
            .model
            .baseline
            .q_sc
            .iter()
            .zip(&od_q)
            .map(|(a, b)| a + b)
            .collect();
        let mut appliances = Vec::new();
        for (a, app) in self.model.appliances.iter().enumerate() {
            let ap = self
                .problem
                .series(&result.assignment, |t| VarRef::ApplianceP(a, t));
            let aq = self
                .problem
                .series(&result.assignment, |t| VarRef::ApplianceQ(a, t));
            for t in 0..p.len() {
                p[t] += ap[t];
                q[t] += aq[t];
            }
            appliances.push((app.id.clone(), ap, aq));
        }
        for sc in &self.day.safety_critical {
            appliances.push((sc.id.clone(), sc.p.clone(), sc.q.clone()));
        }
        ActualSeries { p, q, appliances }
    }
}

#[derive(Debug)]
pub struct Experiment {
    pub prepared: Prepared,
    pub matrix: CaseMatrix,
    /// One report per solved case, in case order.
    pub privacy: Vec<MiReport>,
    /// Feasibility of each solved case at 1e-6, in case order.
    pub feasibility: Vec<(usize, FeasibilityReport)>,
}

pub fn run_experiment(
    config: &HouseholdConfig,
    traces: &RawTraces,
    irradiance: &IrradianceTraces,
    settings: &ExperimentSettings,
    backend: &dyn SolverBackend,
) -> Result<Experiment, StageError> {
    let prepared = prepare(config, traces, irradiance, settings)?;
    let matrix = run_case_matrix(
        &prepared.problem,
        &prepared.model,
        &prepared.appliance_scenarios,
        &prepared.observed_schedule,
        &settings.cases,
        backend,
        settings.jobs,
    )
    .map_err(stage("solve"))?;
    let mut privacy = Vec::new();
    let mut feasibility = Vec::new();
    for r in matrix.results() {
        let actual = prepared.actual_series(r);
        privacy.push(
            evaluate_case_privacy(r.case.id, &r.pm, &r.qm, &actual, &settings.quantizer)
                .map_err(stage("privacy"))?,
        );
        let report = crate::model::check_solution(&prepared.problem, &r.assignment, 1e-6)
            .map_err(stage("model"))?;
        feasibility.push((r.case.id, report));
    }
    Ok(Experiment {
        prepared,
        matrix,
        privacy,
        feasibility,
    })
}
