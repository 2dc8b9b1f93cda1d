//! Goal-programming orchestration: stand-alone optima, the minimax program
//! for a weight vector, and the case matrix.

mod highs_backend;
pub mod micro;
mod oracle;

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::HouseholdModel;
use crate::error::SolveError;
use crate::model::{
    assignment_from_schedule, Constraint, LinearExpr, MilpProblem, Objective, Provenance, Relation,
    VarRef,
};
use crate::scenarios::ApplianceScenarioSet;

pub use highs_backend::HighsBackend;
pub use oracle::{brute_force_oracle, OracleGrid, OracleResult, ORACLE_BUDGET};

/// Normaliser used in place of a stand-alone optimum below this value.
pub const DEGENERATE_DELTA: f64 = 1e-6;

pub const BACKEND_ENV: &str = "PRIVSHAPE_BACKEND";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub mip_rel_gap: f64,
    pub time_limit_s: f64,
    /// Solver threads per solve; `None` leaves the backend default.
    pub threads: Option<u32>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mip_rel_gap: 1e-4,
            time_limit_s: 300.0,
            threads: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Stopped at a limit with an incumbent.
    Feasible,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOutput {
    pub values: Vec<f64>,
    /// Objective value as reported by the backend.
    pub objective: f64,
    pub status: SolveStatus,
    pub mip_gap: f64,
    pub runtime_s: f64,
}

/// One solve: minimise `objective` over the problem plus `extra` rows.
pub struct SolveRequest<'a> {
    pub problem: &'a MilpProblem,
    pub objective: &'a LinearExpr,
    pub extra: &'a [Constraint],
    pub warm_start: Option<&'a [f64]>,
}

pub trait SolverBackend: Send + Sync {
    fn name(&self) -> &'static str;
    fn settings(&self) -> &SolverSettings;
    fn solve(&self, request: &SolveRequest<'_>) -> Result<SolverOutput, SolveError>;
}

/// Picks the backend named by `PRIVSHAPE_BACKEND` (default `highs`).
pub fn backend_from_env(settings: SolverSettings) -> Result<Box<dyn SolverBackend>, SolveError> {
    let name = std::env::var(BACKEND_ENV).unwrap_or_else(|_| "highs".to_string());
    backend_by_name(&name, settings)
}

pub fn backend_by_name(
    name: &str,
    settings: SolverSettings,
) -> Result<Box<dyn SolverBackend>, SolveError> {
    match name.trim().to_ascii_lowercase().as_str() {
        "" | "highs" => Ok(Box::new(HighsBackend::new(settings))),
        other => Err(SolveError::UnknownBackend(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandaloneSolution {
    pub objective: Objective,
    /// `O_i` re-evaluated on the witness.
    pub value: f64,
    pub assignment: Vec<f64>,
    pub status: SolveStatus,
    pub mip_gap: f64,
    pub runtime_s: f64,
}

/// Minimises a single objective over the full constraint set.
pub fn solve_standalone(
    problem: &MilpProblem,
    which: Objective,
    backend: &dyn SolverBackend,
) -> Result<StandaloneSolution, SolveError> {
    let out = backend.solve(&SolveRequest {
        problem,
        objective: problem.objective(which),
        extra: &[],
        warm_start: None,
    })?;
    let mut assignment = out.values;
    assignment[problem.id(VarRef::Z).0] = 0.0;
    let value = problem.evaluate_objective(which, &assignment)?;
    Ok(StandaloneSolution {
        objective: which,
        value,
        assignment,
        status: out.status,
        mip_gap: out.mip_gap,
        runtime_s: out.runtime_s,
    })
}

/// Stand-alone optima, one slot per objective; `None` where not computed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StandaloneOptima {
    pub solutions: [Option<StandaloneSolution>; 4],
    /// Objectives whose solve failed, with the reason.
    #[serde(default)]
    pub failures: Vec<(Objective, String)>,
}

impl StandaloneOptima {
    pub fn value(&self, which: Objective) -> Option<f64> {
        self.solutions[which.position()].as_ref().map(|s| s.value)
    }

    pub fn get(&self, which: Objective) -> Option<&StandaloneSolution> {
        self.solutions[which.position()].as_ref()
    }

    /// Solves every objective with a nonzero weight in `needed`, using up to
    /// `jobs` concurrent solves. A failed solve is recorded in `failures`;
    /// only setting up the thread pool is fatal.
    pub fn compute(
        problem: &MilpProblem,
        needed: [bool; 4],
        backend: &dyn SolverBackend,
        jobs: usize,
    ) -> Result<Self, SolveError> {
        let todo: Vec<Objective> = Objective::ALL
            .into_iter()
            .filter(|o| needed[o.position()])
            .collect();
        let run = || -> Vec<Result<StandaloneSolution, SolveError>> {
            todo.par_iter()
                .map(|&o| solve_standalone(problem, o, backend))
                .collect()
        };
        let solved = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| SolveError::Backend {
                backend: "thread pool".into(),
                message: e.to_string(),
            })?
            .install(run);
        let mut optima = StandaloneOptima::default();
        for (o, s) in todo.into_iter().zip(solved) {
            match s {
                Ok(s) => optima.solutions[o.position()] = Some(s),
                Err(e) => {
                    tracing::warn!(objective = %o, error = %e, "stand-alone solve failed");
                    optima.failures.push((o, e.to_string()));
                }
            }
        }
        Ok(optima)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub id: usize,
    pub weights: [f64; 4],
}

impl CaseSpec {
    /// The seven weight rows of the case table.
    pub const TABLE: [CaseSpec; 7] = [
        CaseSpec {
            id: 0,
            weights: [0.0, 0.0, 0.0, 0.0],
        },
        CaseSpec {
            id: 1,
            weights: [1.0, 0.0, 0.0, 0.0],
        },
        CaseSpec {
            id: 2,
            weights: [0.0, 1.0, 0.0, 0.0],
        },
        CaseSpec {
            id: 3,
            weights: [1.0, 1.0, 0.0, 0.0],
        },
        CaseSpec {
            id: 4,
            weights: [1.0, 0.0, 1.0, 1.0],
        },
        CaseSpec {
            id: 5,
            weights: [0.0, 1.0, 1.0, 1.0],
        },
        CaseSpec {
            id: 6,
            weights: [1.0, 1.0, 1.0, 1.0],
        },
    ];

    pub fn canonical(id: usize) -> Option<CaseSpec> {
        Self::TABLE.get(id).copied()
    }

    /// Case 0 is a simulation of the unshaped household.
    pub fn is_simulation(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub fn active(&self) -> impl Iterator<Item = (Objective, f64)> + '_ {
        Objective::ALL
            .into_iter()
            .map(|o| (o, self.weights[o.position()]))
            .filter(|&(_, w)| w > 0.0)
    }
}

/// Denominator of the normalised deviation.
pub fn normalizer(o_star: f64) -> f64 {
    if o_star < DEGENERATE_DELTA {
        DEGENERATE_DELTA
    } else {
        o_star
    }
}

/// `max_i gamma_i (O_i - O_i*) / O_i*` over the active objectives.
pub fn minimax_value(
    case: &CaseSpec,
    objectives: &[f64; 4],
    optima: &StandaloneOptima,
) -> Option<f64> {
    let mut z: Option<f64> = None;
    for (o, w) in case.active() {
        let star = optima.value(o)?;
        let dev = w * (objectives[o.position()] - star) / normalizer(star);
        z = Some(z.map_or(dev, |m| m.max(dev)));
    }
    z
}

fn goal_rows(
    problem: &MilpProblem,
    case: &CaseSpec,
    optima: &StandaloneOptima,
) -> Result<Vec<Constraint>, SolveError> {
    let z = problem.id(VarRef::Z);
    let mut rows = Vec::new();
    for (o, w) in case.active() {
        let star = optima.value(o).ok_or_else(|| {
            let reason = optima
                .failures
                .iter()
                .find(|(f, _)| *f == o)
                .map(|(_, r)| r.as_str())
                .unwrap_or("not computed");
            SolveError::MissingOptimum(format!("{o}: {reason}"))
        })?;
        // n Z - w O_i >= -w O_i*
        let mut expr = LinearExpr::new().term(z, normalizer(star));
        expr.add_expr(problem.objective(o), -w);
        expr.canonicalize();
        rows.push(Constraint {
            rhs: -w * star - expr.constant,
            expr: LinearExpr {
                constant: 0.0,
                ..expr
            },
            relation: Relation::GreaterEq,
            provenance: Provenance::GoalDeviation,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case: CaseSpec,
    pub assignment: Vec<f64>,
    pub objectives: [f64; 4],
    /// Largest weighted normalised deviation; `None` for the simulation case.
    pub z: Option<f64>,
    /// Z as returned by the solver, when the goal program was solved.
    pub z_solver: Option<f64>,
    pub status: SolveStatus,
    pub mip_gap: f64,
    pub runtime_s: f64,
    pub pm: Vec<f64>,
    pub qm: Vec<f64>,
}

impl CaseResult {
    fn from_assignment(
        problem: &MilpProblem,
        case: CaseSpec,
        mut assignment: Vec<f64>,
        solved: bool,
        optima: &StandaloneOptima,
        status: SolveStatus,
        mip_gap: f64,
        runtime_s: f64,
    ) -> Result<Self, SolveError> {
        let objectives = problem.evaluate_all(&assignment)?;
        let z = minimax_value(&case, &objectives, optima);
        let z_solver = solved.then(|| assignment[problem.id(VarRef::Z).0]);
        // Z is a pure epigraph variable; its optimal value is the maximum itself.
        assignment[problem.id(VarRef::Z).0] = z.unwrap_or(0.0);
        Ok(Self {
            pm: problem.series(&assignment, VarRef::MeteredP),
            qm: problem.series(&assignment, VarRef::MeteredQ),
            case,
            assignment,
            objectives,
            z,
            z_solver,
            status,
            mip_gap,
            runtime_s,
        })
    }
}

/// Solves the minimax goal program for `case`. Single-objective cases reduce
/// to the stand-alone problem and reuse its witness.
pub fn solve_minimax(
    problem: &MilpProblem,
    case: CaseSpec,
    optima: &StandaloneOptima,
    backend: &dyn SolverBackend,
) -> Result<CaseResult, SolveError> {
    if case.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(SolveError::InvalidWeights(case.id));
    }
    if case.is_simulation() {
        return Err(SolveError::ZeroWeights);
    }
    let active: Vec<(Objective, f64)> = case.active().collect();
    if let [(only, _)] = active.as_slice() {
        if let Some(s) = optima.get(*only) {
            return CaseResult::from_assignment(
                problem,
                case,
                s.assignment.clone(),
                false,
                optima,
                s.status,
                s.mip_gap,
                0.0,
            );
        }
    }

    solve_goal_program(problem, case, optima, backend)
}

/// Always solves the minimax program, even for a single active objective.
pub fn solve_goal_program(
    problem: &MilpProblem,
    case: CaseSpec,
    optima: &StandaloneOptima,
    backend: &dyn SolverBackend,
) -> Result<CaseResult, SolveError> {
    if case.weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(SolveError::InvalidWeights(case.id));
    }
    if case.is_simulation() {
        return Err(SolveError::ZeroWeights);
    }
    let rows = goal_rows(problem, &case, optima)?;
    let z_id = problem.id(VarRef::Z);
    let warm = best_witness(problem, &case, optima);
    let objective = LinearExpr::new().term(z_id, 1.0);
    let out = backend.solve(&SolveRequest {
        problem,
        objective: &objective,
        extra: &rows,
        warm_start: warm.as_deref(),
    })?;
    CaseResult::from_assignment(
        problem,
        case,
        out.values,
        true,
        optima,
        out.status,
        out.mip_gap,
        out.runtime_s,
    )
}

/// The stand-alone witness with the smallest minimax value, with Z filled in.
fn best_witness(
    problem: &MilpProblem,
    case: &CaseSpec,
    optima: &StandaloneOptima,
) -> Option<Vec<f64>> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in optima.solutions.iter().flatten() {
        let objs = problem.evaluate_all(&s.assignment).ok()?;
        let z = minimax_value(case, &objs, optima)?;
        if best.as_ref().is_none_or(|(b, _)| z < *b) {
            let mut x = s.assignment.clone();
            x[problem.id(VarRef::Z).0] = z;
            best = Some((z, x));
        }
    }
    best.map(|(_, x)| x)
}

/// Reference case: appliances on `schedule`, storage idle, no PV.
pub fn simulate_reference(
    problem: &MilpProblem,
    model: &HouseholdModel,
    app_sc: &ApplianceScenarioSet,
    schedule: &[Vec<f64>],
    optima: &StandaloneOptima,
) -> Result<CaseResult, SolveError> {
    let x = assignment_from_schedule(problem, model, app_sc, schedule)?;
    let case = CaseSpec::TABLE[0];
    CaseResult::from_assignment(
        problem,
        case,
        x,
        false,
        optima,
        SolveStatus::Optimal,
        0.0,
        0.0,
    )
}

#[derive(Debug)]
pub struct CaseOutcome {
    pub case: CaseSpec,
    pub result: Result<CaseResult, SolveError>,
}

#[derive(Debug)]
pub struct CaseMatrix {
    pub optima: StandaloneOptima,
    pub outcomes: Vec<CaseOutcome>,
    pub optima_runtime_s: f64,
}

impl CaseMatrix {
    pub fn results(&self) -> impl Iterator<Item = &CaseResult> {
        self.outcomes.iter().filter_map(|o| o.result.as_ref().ok())
    }

    pub fn result(&self, id: usize) -> Option<&CaseResult> {
        self.results().find(|r| r.case.id == id)
    }

    pub fn all_solved(&self) -> bool {
        self.outcomes.iter().all(|o| o.result.is_ok())
    }
}

/// Runs every case: stand-alone optima for the objectives any case needs are
/// solved once and shared; the reference case is simulated from `schedule`.
/// Individual case failures are recorded and do not stop the matrix.
pub fn run_case_matrix(
    problem: &MilpProblem,
    model: &HouseholdModel,
    app_sc: &ApplianceScenarioSet,
    schedule: &[Vec<f64>],
    cases: &[CaseSpec],
    backend: &dyn SolverBackend,
    jobs: usize,
) -> Result<CaseMatrix, SolveError> {
    let mut needed = [false; 4];
    for c in cases {
        for (o, _) in c.active() {
            needed[o.position()] = true;
        }
    }
    let started = Instant::now();
    let optima = StandaloneOptima::compute(problem, needed, backend, jobs)?;
    let optima_runtime_s = started.elapsed().as_secs_f64();
    tracing::info!(seconds = optima_runtime_s, "stand-alone optima solved");

    let run_one = |case: &CaseSpec| -> Result<CaseResult, SolveError> {
        let t0 = Instant::now();
        let r = if case.is_simulation() {
            simulate_reference(problem, model, app_sc, schedule, &optima)
        } else {
            solve_minimax(problem, *case, &optima, backend)
        };
        tracing::info!(
            case = case.id,
            seconds = t0.elapsed().as_secs_f64(),
            ok = r.is_ok(),
            "case finished"
        );
        r
    };
    let results: Vec<Result<CaseResult, SolveError>> = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SolveError::Backend {
            backend: "thread pool".into(),
            message: e.to_string(),
        })?
        .install(|| cases.par_iter().map(run_one).collect());
    let outcomes = cases
        .iter()
        .zip(results)
        .map(|(c, result)| CaseOutcome { case: *c, result })
        .collect();
    Ok(CaseMatrix {
        optima,
        outcomes,
        optima_runtime_s,
    })
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.9}")).unwrap_or_default()
}

/// `case, O1, O2, O3, O4, Z, gap, runtime_s, status`; failed cases keep their
/// row with empty values and the error in `status`.
pub fn write_objectives_csv<W: Write>(outcomes: &[CaseOutcome], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "case",
        "O1",
        "O2",
        "O3",
        "O4",
        "Z",
        "gap",
        "runtime_s",
        "status",
    ])?;
    for o in outcomes {
        match &o.result {
            Ok(r) => {
                let mut rec = vec![r.case.id.to_string()];
                rec.extend(r.objectives.iter().map(|v| format!("{v:.9}")));
                rec.push(fmt_opt(r.z));
                rec.push(format!("{:.3e}", r.mip_gap));
                rec.push(format!("{:.3}", r.runtime_s));
                rec.push(r.status.as_str().to_string());
                w.write_record(&rec)?;
            }
            Err(e) => {
                let mut rec = vec![o.case.id.to_string()];
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(format!("failed: {e}"));
                w.write_record(&rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Per-slot schedule table for all solved cases.
pub fn write_schedule_csv<W: Write>(
    problem: &MilpProblem,
    results: &[&CaseResult],
    out: W,
) -> Result<(), csv::Error> {
    let meta = problem.meta();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["case", "t", "pm_kw", "qm_kvar", "pcb", "pdb", "qcc", "qdc"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=meta.num_renewable_scenarios).map(|s| format!("v_{s}")));
    header.extend(meta.appliance_ids.iter().map(|id| format!("pca_{id}")));
    header.extend(meta.appliance_ids.iter().map(|id| format!("qca_{id}")));
    w.write_record(&header)?;
    for r in results {
        let x = &r.assignment;
        let val = |k: VarRef| format!("{:.9}", x[problem.id(k).0]);
        for t in 1..=meta.num_slots {
            let mut rec = vec![r.case.id.to_string(), t.to_string()];
            for k in [
                VarRef::MeteredP(t),
                VarRef::MeteredQ(t),
                VarRef::BatteryCharge(t),
                VarRef::BatteryDischarge(t),
                VarRef::CapacitorCharge(t),
                VarRef::CapacitorDischarge(t),
            ] {
                rec.push(val(k));
            }
            rec.extend((0..meta.num_renewable_scenarios).map(|s| val(VarRef::PvUsed(s, t))));
            rec.extend((0..meta.appliance_ids.len()).map(|a| val(VarRef::ApplianceP(a, t))));
            rec.extend((0..meta.appliance_ids.len()).map(|a| val(VarRef::ApplianceQ(a, t))));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}
