//! Command-line front end: synthetic data, the case matrix, reports, LP
//! export and the oracle check.

pub mod artifacts;
pub mod plots;
pub mod report;

use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use privshape_core::config::HouseholdConfig;
use privshape_core::experiment::{prepare, run_experiment, ExperimentSettings};
use privshape_core::ingest::{
    load_household_csv, load_irradiance_csv, write_household_csv, write_irradiance_csv,
    IrradianceTraces, RawTraces, TraceSchema,
};
use privshape_core::model::{write_lp, BuildOptions, Objective};
use privshape_core::privacy::{write_mi_csv, QuantizerSpec};
use privshape_core::solve::micro::{check_micro, exact_settings, micro_instances};
use privshape_core::solve::{
    backend_from_env, write_objectives_csv, write_schedule_csv, CaseSpec, HighsBackend,
    SolverSettings,
};
use privshape_core::synthetic::{
    generate_synthetic_household, generate_synthetic_irradiance, SyntheticSpec,
};

use artifacts::ArtifactDir;

/// Exit status when every case solved.
pub const EXIT_OK: u8 = 0;
/// Exit status for configuration and IO errors.
pub const EXIT_ERROR: u8 = 1;
/// Exit status when the run finished but some cases failed.
pub const EXIT_PARTIAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "privshape",
    version,
    about = "Smart-meter privacy through joint real and reactive load shaping"
)]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic household: traces.csv, household.toml, irradiance.csv.
    GenData(GenDataArgs),
    /// Run the case matrix and write tables, plots and a manifest.
    Run(RunArgs),
    /// Summarise a finished run directory.
    Report(ReportArgs),
    /// Write the model with one objective in CPLEX LP format.
    ExportLp(ExportLpArgs),
    /// Compare MILP optima against exhaustive enumeration on tiny households.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    /// Days of appliance traces.
    #[arg(long, default_value_t = 730)]
    pub days: usize,
    /// Trace resolution in minutes.
    #[arg(long, default_value_t = 15)]
    pub step_minutes: u32,
    /// Days of irradiance, one renewable scenario each.
    #[arg(long, default_value_t = 4)]
    pub irradiance_days: usize,
    /// Day of the traces used as the modelled day.
    #[arg(long, default_value_t = 0)]
    pub day_index: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantizer {
    FixedWidth,
    Quantile,
}

/// Inputs shared by `run` and `export-lp`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    /// Household TOML.
    #[arg(long)]
    pub config: PathBuf,
    /// Appliance trace CSV; defaults to traces.csv next to the config.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Irradiance CSV; defaults to irradiance.csv next to the config.
    #[arg(long)]
    pub irradiance: Option<PathBuf>,
    /// Slot length; the config's delta_t_min by default.
    #[arg(long)]
    pub slot_minutes: Option<u32>,
    /// Number of on-demand scenarios.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Allow the metered load to go negative.
    #[arg(long)]
    pub allow_export: bool,
    /// Forbid simultaneous charge and discharge with mode binaries.
    #[arg(long)]
    pub exclusive_storage: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Output directory; created if missing
    #[arg(long)]
    pub out: PathBuf,
    /// Case ids from the weight table, e.g. `0-6` or `0,1,3`.
    #[arg(long, default_value = "0-6")]
    pub cases: String,
    /// Extra weight vectors `g1,g2,g3,g4`, numbered after the table cases.
    #[arg(long = "weights", value_name = "G1,G2,G3,G4")]
    pub custom_weights: Vec<String>,
    /// Histogram bins for mutual information.
    #[arg(long, default_value_t = privshape_core::privacy::DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, value_enum, default_value_t = Quantizer::FixedWidth)]
    pub quantizer: Quantizer,
    /// Relative MIP gap.
    #[arg(long, default_value_t = 1e-4)]
    pub mip_gap: f64,
    /// Per-solve time limit in seconds.
    #[arg(long, default_value_t = 300.0)]
    pub time_limit: f64,
    /// Concurrent solves.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    /// Output directory of a finished `run`.
    #[arg(long)]
    pub results: PathBuf,
    /// Also write the summary as JSON here.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportLpArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Objective 1..4 (real privacy, reactive privacy, cost, discomfort).
    #[arg(long, default_value_t = 1)]
    pub objective: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OracleCheckArgs {
    /// Largest accepted difference between MILP and oracle.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

/// Parses `0-6`, `1,3,5` or a mix such as `0,2-4`.
pub fn parse_case_list(text: &str) -> Result<Vec<usize>> {
    let mut ids = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.trim().parse()?, b.trim().parse()?);
            if a > b {
                bail!("case range {part} is reversed");
            }
            ids.extend(a..=b);
        } else {
            ids.push(
                part.parse()
                    .with_context(|| format!("bad case id '{part}'"))?,
            );
        }
    }
    for &id in &ids {
        if CaseSpec::canonical(id).is_none() {
            bail!("case {id} is not in the weight table (0-6)");
        }
    }
    ids.sort_unstable();
    ids.dedup();
    if ids.is_empty() {
        bail!("no cases selected");
    }
    Ok(ids)
}

pub fn parse_weights(text: &str) -> Result<[f64; 4]> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad weights '{text}'"))?;
    let w: [f64; 4] = parts
        .try_into()
        .map_err(|_| anyhow::anyhow!("weights need four values, got '{text}'"))?;
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().all(|x| *x == 0.0) {
        bail!("weights '{text}' must be nonnegative and not all zero");
    }
    Ok(w)
}

fn sibling(config: &Path, given: &Option<PathBuf>, name: &str) -> PathBuf {
    given.clone().unwrap_or_else(|| {
        config
            .parent()
            .map(|d| d.join(name))
            .unwrap_or_else(|| PathBuf::from(name))
    })
}

pub struct Inputs {
    pub config: HouseholdConfig,
    pub traces: RawTraces,
    pub irradiance: IrradianceTraces,
}

pub fn load_inputs(args: &InputArgs) -> Result<Inputs> {
    let config = HouseholdConfig::load(&args.config)?;
    let traces_path = sibling(&args.config, &args.traces, "traces.csv");
    let irr_path = sibling(&args.config, &args.irradiance, "irradiance.csv");
    let schema = TraceSchema::new(
        config
            .appliances
            .iter()
            .map(|a| (a.id.clone(), a.category))
            .collect(),
    );
    let traces = load_household_csv(&traces_path, &schema)
        .with_context(|| format!("loading traces {}", traces_path.display()))?;
    let irradiance = load_irradiance_csv(&irr_path)
        .with_context(|| format!("loading irradiance {}", irr_path.display()))?;
    Ok(Inputs {
        config,
        traces,
        irradiance,
    })
}

fn build_options(args: &InputArgs) -> BuildOptions {
    BuildOptions {
        allow_export: args.allow_export,
        exclusive_storage: args.exclusive_storage,
        ..BuildOptions::default()
    }
}

pub fn cmd_gen_data(args: &GenDataArgs) -> Result<Vec<String>> {
    let spec = SyntheticSpec {
        days: args.days,
        step_minutes: args.step_minutes,
        day_index: args.day_index,
        ..SyntheticSpec::default()
    };
    let household = generate_synthetic_household(args.seed, &spec)?;
    let irradiance = generate_synthetic_irradiance(args.seed, args.irradiance_days);
    let mut dir = ArtifactDir::create(&args.out)?;
    dir.write_with("traces.csv", |w| {
        Ok(write_household_csv(&household.traces, w)?)
    })?;
    dir.write_bytes(
        "household.toml",
        household.config.to_toml_string().as_bytes(),
    )?;
    dir.write_with("irradiance.csv", |w| {
        Ok(write_irradiance_csv(&irradiance, w)?)
    })?;
    Ok(dir.written().to_vec())
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseStatus {
    pub case: usize,
    pub weights: [f64; 4],
    pub status: String,
    pub runtime_s: Option<f64>,
    pub violations: Option<usize>,
    pub simultaneous_flow_warnings: Option<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub backend: String,
    pub config: RunArgs,
    pub household: HouseholdConfig,
    pub cases: Vec<CaseStatus>,
    pub optima_runtime_s: f64,
    pub total_runtime_s: f64,
    pub artifacts: Vec<String>,
}

/// Result of `run`: the manifest and whether every case solved.
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub all_solved: bool,
}

fn selected_cases(args: &RunArgs) -> Result<Vec<CaseSpec>> {
    let mut cases: Vec<CaseSpec> = parse_case_list(&args.cases)?
        .into_iter()
        .filter_map(CaseSpec::canonical)
        .collect();
    for (i, w) in args.custom_weights.iter().enumerate() {
        cases.push(CaseSpec {
            id: CaseSpec::TABLE.len() + i,
            weights: parse_weights(w)?,
        });
    }
    Ok(cases)
}

pub fn cmd_run(args: &RunArgs) -> Result<RunOutcome> {
    let started = Instant::now();
    if args.bins < 2 {
        bail!("--bins must be at least 2");
    }
    let cases = selected_cases(args)?;
    let inputs = load_inputs(&args.input)?;
    let quantizer = match args.quantizer {
        Quantizer::FixedWidth => QuantizerSpec::fixed_width(args.bins),
        Quantizer::Quantile => QuantizerSpec::quantile(args.bins),
    };
    let settings = ExperimentSettings {
        slot_minutes: args.input.slot_minutes,
        k: args.input.k,
        seed: args.input.seed,
        quantizer,
        cases,
        build: build_options(&args.input),
        jobs: args.jobs.max(1),
    };
    let backend = backend_from_env(SolverSettings {
        mip_rel_gap: args.mip_gap,
        time_limit_s: args.time_limit,
        threads: None,
    })?;
    let mut dir = ArtifactDir::create(&args.out)?;
    tracing::info!(out = %dir.root().display(), cases = settings.cases.len(), "running case matrix");
    let exp = run_experiment(
        &inputs.config,
        &inputs.traces,
        &inputs.irradiance,
        &settings,
        backend.as_ref(),
    )?;
    let prepared = &exp.prepared;

    dir.write_with("objectives.csv", |w| {
        Ok(write_objectives_csv(&exp.matrix.outcomes, w)?)
    })?;
    dir.write_with("optima.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["objective", "value", "gap", "runtime_s", "status"])?;
        for s in exp.matrix.optima.solutions.iter().flatten() {
            csv.write_record([
                s.objective.to_string(),
                format!("{:.9}", s.value),
                format!("{:.3e}", s.mip_gap),
                format!("{:.3}", s.runtime_s),
                s.status.as_str().to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    let results: Vec<_> = exp.matrix.results().collect();
    dir.write_with("schedule.csv", |w| {
        Ok(write_schedule_csv(&prepared.problem, &results, w)?)
    })?;
    dir.write_with("mi.csv", |w| Ok(write_mi_csv(&exp.privacy, w)?))?;
    dir.write_with("scenarios.csv", |w| {
        Ok(prepared.appliance_scenarios.write_csv(w)?)
    })?;
    dir.write_with("pv_scenarios.csv", |w| {
        let ren = &prepared.renewable_scenarios;
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["scenario", "label", "rho", "slot", "p_kw"])?;
        for s in 0..ren.len() {
            for (t, p) in ren.p_g[s].iter().enumerate() {
                csv.write_record([
                    s.to_string(),
                    ren.labels[s].clone(),
                    format!("{:.12}", ren.rho[s]),
                    (t + 1).to_string(),
                    format!("{p:.9}"),
                ])?;
            }
        }
        csv.flush()?;
        Ok(())
    })?;
    dir.write_with("feasibility.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record([
            "case",
            "violations",
            "max_violation",
            "bound_violations",
            "simultaneous_flows",
        ])?;
        for (case, rep) in &exp.feasibility {
            let worst = rep.violations.iter().map(|v| v.amount).fold(0.0, f64::max);
            csv.write_record([
                case.to_string(),
                rep.violations.len().to_string(),
                format!("{worst:.3e}"),
                rep.bound_violations.len().to_string(),
                rep.warnings.len().to_string(),
            ])?;
        }
        csv.flush()?;
        Ok(())
    })?;
    if !exp.privacy.is_empty() {
        dir.write_bytes("mi.svg", plots::mi_bars(&exp.privacy)?.as_bytes())?;
    }
    for r in &results {
        let svg = plots::metered_profile(r.case.id, &r.pm, &r.qm)?;
        dir.write_bytes(&format!("metered_case{}.svg", r.case.id), svg.as_bytes())?;
    }

    let cases = exp
        .matrix
        .outcomes
        .iter()
        .map(|o| {
            let feas = exp
                .feasibility
                .iter()
                .find(|(c, _)| *c == o.case.id)
                .map(|(_, r)| r);
            match &o.result {
                Ok(r) => CaseStatus {
                    case: o.case.id,
                    weights: o.case.weights,
                    status: r.status.as_str().to_string(),
                    runtime_s: Some(r.runtime_s),
                    violations: feas.map(|f| f.violations.len()),
                    simultaneous_flow_warnings: feas.map(|f| f.warnings.len()),
                },
                Err(e) => CaseStatus {
                    case: o.case.id,
                    weights: o.case.weights,
                    status: format!("failed: {e}"),
                    runtime_s: None,
                    violations: None,
                    simultaneous_flow_warnings: None,
                },
            }
        })
        .collect();
    let mut artifacts = dir.written().to_vec();
    artifacts.push("manifest.json".to_string());
    let manifest = RunManifest {
        tool: "privshape".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        backend: backend.name().into(),
        config: args.clone(),
        household: inputs.config.clone(),
        cases,
        optima_runtime_s: exp.matrix.optima_runtime_s,
        total_runtime_s: started.elapsed().as_secs_f64(),
        artifacts,
    };
    dir.write_json("manifest.json", &manifest)?;
    Ok(RunOutcome {
        all_solved: exp.matrix.all_solved(),
        manifest,
    })
}

pub fn cmd_export_lp(args: &ExportLpArgs) -> Result<()> {
    let inputs = load_inputs(&args.input)?;
    let objective = Objective::from_index(args.objective)?;
    let settings = ExperimentSettings {
        slot_minutes: args.input.slot_minutes,
        k: args.input.k,
        seed: args.input.seed,
        build: build_options(&args.input),
        ..ExperimentSettings::default()
    };
    let prepared = prepare(
        &inputs.config,
        &inputs.traces,
        &inputs.irradiance,
        &settings,
    )?;
    let parent = args
        .out
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = args
        .out
        .file_name()
        .and_then(|n| n.to_str())
        .context("--out needs a file name")?;
    let mut dir = ArtifactDir::create(parent)?;
    dir.write_with(name, |w| Ok(write_lp(&prepared.problem, objective, w)?))?;
    Ok(())
}

/// Runs the micro-instance suite; returns one line per instance and whether
/// all of them agreed within `tol`.
pub fn cmd_oracle_check(args: &OracleCheckArgs) -> Result<(Vec<String>, bool)> {
    let backend = HighsBackend::new(exact_settings());
    let mut lines = Vec::new();
    let mut ok = true;
    for inst in micro_instances() {
        let c = check_micro(&inst, &backend)?;
        let pass = c.max_abs_diff() <= args.tol;
        ok &= pass;
        let minimax = match (c.milp_minimax, c.oracle_minimax) {
            (Some(a), Some(b)) => format!("  minimax {a:.6}/{b:.6}"),
            _ => String::new(),
        };
        lines.push(format!(
            "{} {:<28} O* milp [{}] oracle [{}]{minimax}  diff {:.1e}",
            if pass { "ok  " } else { "FAIL" },
            c.name,
            c.milp.map(|v| format!("{v:.6}")).join(", "),
            c.oracle.map(|v| format!("{v:.6}")).join(", "),
            c.max_abs_diff()
        ));
    }
    Ok((lines, ok))
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> u8 {
    let result = match &cli.command {
        Command::GenData(a) => cmd_gen_data(a).map(|files| {
            for f in files {
                println!("{}", a.out.join(f).display());
            }
            EXIT_OK
        }),
        Command::Run(a) => cmd_run(a).map(|o| {
            for c in &o.manifest.cases {
                println!("case {}: {}", c.case, c.status);
            }
            println!("results in {}", a.out.display());
            if o.all_solved {
                EXIT_OK
            } else {
                EXIT_PARTIAL
            }
        }),
        Command::Report(a) => report::summarize(&a.results).and_then(|s| {
            print!("{}", report::render(&s));
            if let Some(path) = &a.json {
                std::fs::write(path, serde_json::to_string_pretty(&s)? + "\n")
                    .with_context(|| format!("cannot write {}", path.display()))?;
            }
            Ok(EXIT_OK)
        }),
        Command::ExportLp(a) => cmd_export_lp(a).map(|_| {
            println!("{}", a.out.display());
            EXIT_OK
        }),
        Command::OracleCheck(a) => cmd_oracle_check(a).map(|(lines, ok)| {
            for l in lines {
                println!("{l}");
            }
            if ok {
                EXIT_OK
            } else {
                EXIT_PARTIAL
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
