use std::time::Instant;

use highs::{ColProblem, HighsModelStatus, HighsSolutionStatus, Sense};

use super::{SolveRequest, SolveStatus, SolverBackend, SolverOutput, SolverSettings};
use crate::error::SolveError;
use crate::model::{Constraint, Relation};

/// HiGHS branch-and-cut through its C API.
#[derive(Debug, Clone)]
pub struct HighsBackend {
    settings: SolverSettings,
}

impl HighsBackend {
    pub fn new(settings: SolverSettings) -> Self {
        Self { settings }
    }
}

fn backend_error(message: impl Into<String>) -> SolveError {
    SolveError::Backend {
        backend: "highs".into(),
        message: message.into(),
    }
}

impl SolverBackend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    fn solve(&self, req: &SolveRequest<'_>) -> Result<SolverOutput, SolveError> {
        let started = Instant::now();
        let problem = req.problem;
        let n = problem.num_variables();

        let mut pb = ColProblem::default();
        let rows: Vec<&Constraint> = problem.constraints().iter().chain(req.extra).collect();
        let mut columns: Vec<Vec<(highs::Row, f64)>> = vec![Vec::new(); n];
        for c in &rows {
            let row = match c.relation {
                Relation::LessEq => pb.add_row(f64::NEG_INFINITY..=c.rhs),
                Relation::Eq => pb.add_row(c.rhs..=c.rhs),
                Relation::GreaterEq => pb.add_row(c.rhs..=f64::INFINITY),
            };
            for &(v, coef) in &c.expr.terms {
                columns[v.0].push((row, coef));
            }
        }
        let mut cost = vec![0.0; n];
        for &(v, coef) in &req.objective.terms {
            cost[v.0] += coef;
        }
        for (i, var) in problem.variables().iter().enumerate() {
            pb.add_column_with_integrality(cost[i], var.lower..=var.upper, &columns[i], var.binary);
        }

        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("mip_rel_gap", self.settings.mip_rel_gap);
        model.set_option("time_limit", self.settings.time_limit_s);
        if let Some(threads) = self.settings.threads {
            model.set_option("threads", threads as i32);
        }
        if let Some(x) = req.warm_start {
            if x.len() == n {
                // A rejected hint only costs time.
                let _ = model.try_set_solution(Some(x), None, None, None);
            }
        }

        let solved = model
            .try_solve()
            .map_err(|e| backend_error(format!("run failed: {e:?}")))?;
        let status = match solved.status() {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible => return Err(SolveError::Infeasible),
            HighsModelStatus::Unbounded | HighsModelStatus::UnboundedOrInfeasible => {
                return Err(SolveError::Unbounded)
            }
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit => {
                if solved.primal_solution_status() == HighsSolutionStatus::Feasible {
                    SolveStatus::Feasible
                } else {
                    return Err(SolveError::TimeLimit);
                }
            }
            other => return Err(backend_error(format!("model status {other:?}"))),
        };
        let values = solved.get_solution().columns().to_vec();
        let objective = solved.objective_value() + req.objective.constant;
        let mip_gap = if problem.variables().iter().any(|v| v.binary) {
            solved.mip_gap()
        } else {
            0.0
        };
        Ok(SolverOutput {
            values,
            objective,
            status,
            mip_gap: if mip_gap.is_finite() { mip_gap } else { 0.0 },
            runtime_s: started.elapsed().as_secs_f64(),
        })
    }
}
