//! Mixed-integer program for joint real/reactive load shaping.
//!
//! [`build_problem`] turns a household and its scenario sets into an immutable
//! [`MilpProblem`]: a variable table, tagged linear constraints and the four
//! objective expressions (real-power variation, reactive-power variation,
//! energy cost and discomfort). The problem is solver-agnostic; see
//! [`crate::solve`] for the backends.

mod lp_format;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{validate_household, Appliance, ApplianceCategory, HouseholdModel};
use crate::error::ModelError;
use crate::scenarios::{ApplianceScenarioSet, RenewableScenarioSet};

pub use lp_format::write_lp;

/// Penalty weight on storage flows in the privacy and discomfort objectives.
pub const EPSILON: f64 = 1e-3;

/// Symbolic variable handle. Slot indices are 1-based, appliance and
/// scenario indices 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VarRef {
    MeteredP(usize),
    MeteredQ(usize),
    ApplianceP(usize, usize),
    ApplianceQ(usize, usize),
    BatteryCharge(usize),
    BatteryDischarge(usize),
    CapacitorCharge(usize),
    CapacitorDischarge(usize),
    /// Stored real energy at the end of a slot, kWh.
    BatteryEnergy(usize),
    /// Stored reactive energy at the end of a slot, kvarh.
    CapacitorEnergy(usize),
    PvUsed(usize, usize),
    /// On/off state of a time-shiftable appliance.
    Run(usize, usize),
    RealUp(usize),
    RealDown(usize),
    ReactiveUp(usize),
    ReactiveDown(usize),
    /// Charging mode of the battery when storage modes are exclusive.
    BatteryMode(usize),
    /// Charging mode of the capacitor when storage modes are exclusive.
    CapacitorMode(usize),
    /// Largest weighted normalised deviation in the minimax program.
    Z,
}

impl VarRef {
    /// Fixed name used in LP exports and schedule tables.
    pub fn name(&self) -> String {
        match *self {
            VarRef::MeteredP(t) => format!("pm_{t}"),
            VarRef::MeteredQ(t) => format!("qm_{t}"),
            VarRef::ApplianceP(a, t) => format!("pca_{}_{t}", a + 1),
            VarRef::ApplianceQ(a, t) => format!("qca_{}_{t}", a + 1),
            VarRef::BatteryCharge(t) => format!("pcb_{t}"),
            VarRef::BatteryDischarge(t) => format!("pdb_{t}"),
            VarRef::CapacitorCharge(t) => format!("qcc_{t}"),
            VarRef::CapacitorDischarge(t) => format!("qdc_{t}"),
            VarRef::BatteryEnergy(t) => format!("eb_{t}"),
            VarRef::CapacitorEnergy(t) => format!("ec_{t}"),
            VarRef::PvUsed(s, t) => format!("v_{}_{t}", s + 1),
            VarRef::Run(a, t) => format!("y_{}_{t}", a + 1),
            VarRef::RealUp(t) => format!("d1_{t}"),
            VarRef::RealDown(t) => format!("d2_{t}"),
            VarRef::ReactiveUp(t) => format!("d3_{t}"),
            VarRef::ReactiveDown(t) => format!("d4_{t}"),
            VarRef::BatteryMode(t) => format!("ub_{t}"),
            VarRef::CapacitorMode(t) => format!("uc_{t}"),
            VarRef::Z => "Z".to_string(),
        }
    }
}

impl fmt::Display for VarRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// Dense index of a variable in [`MilpProblem::variables`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub key: VarRef,
    pub lower: f64,
    pub upper: f64,
    pub binary: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn term(mut self, var: VarId, coef: f64) -> Self {
        self.add(var, coef);
        self
    }

    pub fn add(&mut self, var: VarId, coef: f64) {
        self.terms.push((var, coef));
    }

    pub fn add_expr(&mut self, other: &LinearExpr, scale: f64) {
        self.terms
            .extend(other.terms.iter().map(|&(v, c)| (v, c * scale)));
        self.constant += other.constant * scale;
    }

    /// Sorts terms by variable, merges duplicates and drops zero coefficients.
    pub fn canonicalize(&mut self) {
        self.terms.sort_by_key(|&(v, _)| v);
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for &(v, c) in &self.terms {
            match merged.last_mut() {
                Some((last, acc)) if *last == v => *acc += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|&(_, c)| c != 0.0);
        self.terms = merged;
    }

    pub fn eval(&self, values: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|&(v, c)| c * values[v.0])
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    LessEq,
    Eq,
    GreaterEq,
}

impl Relation {
    pub fn symbol(self) -> &'static str {
        match self {
            Relation::LessEq => "<=",
            Relation::Eq => "=",
            Relation::GreaterEq => ">=",
        }
    }
}

/// Which modelling rule a constraint implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    OutsideWindow,
    PowerLimits,
    FixedPower,
    EnergyCompletion,
    PowerFactor,
    RealBalance,
    PvAvailability,
    ReactiveBalance,
    LoadCapacity,
    BatteryState,
    CapacitorState,
    BatteryChargeRate,
    BatteryDischargeRate,
    CapacitorChargeRate,
    CapacitorDischargeRate,
    BatteryDayBalance,
    CapacitorDayBalance,
    RealVariation,
    ReactiveVariation,
    StorageExclusion,
    GoalDeviation,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::OutsideWindow => "outside_window",
            Provenance::PowerLimits => "power_limits",
            Provenance::FixedPower => "fixed_power",
            Provenance::EnergyCompletion => "energy_completion",
            Provenance::PowerFactor => "power_factor",
            Provenance::RealBalance => "real_balance",
            Provenance::PvAvailability => "pv_availability",
            Provenance::ReactiveBalance => "reactive_balance",
            Provenance::LoadCapacity => "load_capacity",
            Provenance::BatteryState => "battery_state",
            Provenance::CapacitorState => "capacitor_state",
            Provenance::BatteryChargeRate => "battery_charge_rate",
            Provenance::BatteryDischargeRate => "battery_discharge_rate",
            Provenance::CapacitorChargeRate => "capacitor_charge_rate",
            Provenance::CapacitorDischargeRate => "capacitor_discharge_rate",
            Provenance::BatteryDayBalance => "battery_day_balance",
            Provenance::CapacitorDayBalance => "capacitor_day_balance",
            Provenance::RealVariation => "real_variation",
            Provenance::ReactiveVariation => "reactive_variation",
            Provenance::StorageExclusion => "storage_exclusion",
            Provenance::GoalDeviation => "goal_deviation",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `expr relation rhs`. Builder-made constraints keep their constants in `rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub expr: LinearExpr,
    pub relation: Relation,
    pub rhs: f64,
    pub provenance: Provenance,
}

impl Constraint {
    /// Amount by which `values` violate the constraint (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.expr.eval(values);
        match self.relation {
            Relation::LessEq => (lhs - self.rhs).max(0.0),
            Relation::GreaterEq => (self.rhs - lhs).max(0.0),
            Relation::Eq => (lhs - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Objective {
    RealPrivacy,
    ReactivePrivacy,
    Cost,
    Discomfort,
}

impl Objective {
    pub const ALL: [Objective; 4] = [
        Objective::RealPrivacy,
        Objective::ReactivePrivacy,
        Objective::Cost,
        Objective::Discomfort,
    ];

    /// 1-based objective number.
    pub fn from_index(i: usize) -> Result<Self, ModelError> {
        match i {
            1 => Ok(Objective::RealPrivacy),
            2 => Ok(Objective::ReactivePrivacy),
            3 => Ok(Objective::Cost),
            4 => Ok(Objective::Discomfort),
            other => Err(ModelError::ObjectiveIndex(other)),
        }
    }

    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn position(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "O{}", self.index())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemMeta {
    pub num_slots: usize,
    pub slot_hours: f64,
    pub appliance_ids: Vec<String>,
    pub appliance_categories: Vec<ApplianceCategory>,
    pub num_time_shiftable: usize,
    pub num_appliance_scenarios: usize,
    pub num_renewable_scenarios: usize,
    pub allow_export: bool,
    pub exclusive_storage: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Allow negative metered power (export). Off: `p^m, q^m >= 0`.
    pub allow_export: bool,
    pub epsilon: f64,
    /// Forbid charging and discharging a store in the same slot with one
    /// binary mode variable per store and slot. Off by default: the storage
    /// penalty in the objectives is the only deterrent.
    pub exclusive_storage: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            allow_export: false,
            epsilon: EPSILON,
            exclusive_storage: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MilpProblem {
    variables: Vec<Variable>,
    #[serde(skip)]
    index: HashMap<VarRef, VarId>,
    constraints: Vec<Constraint>,
    objectives: [LinearExpr; 4],
    epsilon: f64,
    meta: ProblemMeta,
}

impl MilpProblem {
    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn objective(&self, which: Objective) -> &LinearExpr {
        &self.objectives[which.position()]
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn meta(&self) -> &ProblemMeta {
        &self.meta
    }

    pub fn num_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn var(&self, key: VarRef) -> Option<VarId> {
        self.index.get(&key).copied()
    }

    /// Looks up a variable that the builder always creates.
    pub fn id(&self, key: VarRef) -> VarId {
        self.var(key)
            .unwrap_or_else(|| panic!("variable {key} is not part of the problem"))
    }

    /// Values of `key(t)` for t = 1..=T.
    pub fn series(&self, values: &[f64], key: impl Fn(usize) -> VarRef) -> Vec<f64> {
        (1..=self.meta.num_slots)
            .map(|t| values[self.id(key(t)).0])
            .collect()
    }

    /// Plain linear evaluation of one objective, storage penalties included.
    pub fn evaluate_objective(&self, which: Objective, values: &[f64]) -> Result<f64, ModelError> {
        self.check_len(values)?;
        Ok(self.objective(which).eval(values))
    }

    pub fn evaluate_all(&self, values: &[f64]) -> Result<[f64; 4], ModelError> {
        self.check_len(values)?;
        Ok(Objective::ALL.map(|o| self.objective(o).eval(values)))
    }

    fn check_len(&self, values: &[f64]) -> Result<(), ModelError> {
        if values.len() != self.variables.len() {
            return Err(ModelError::MissingVariable {
                expected: self.variables.len(),
                got: values.len(),
            });
        }
        Ok(())
    }

    /// Rebuilds the lookup table after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self
            .variables
            .iter()
            .enumerate()
            .map(|(i, v)| (v.key, VarId(i)))
            .collect();
    }
}

/// Penalty coefficient for running appliance `a` in slot `t` (1-based):
/// `(t - alpha)^2 / E`.
pub fn discomfort_coefficient(a: &Appliance, t: usize) -> Result<f64, ModelError> {
    if !a.in_window(t) {
        return Err(ModelError::OutsideWindow {
            t,
            alpha: a.alpha,
            beta: a.beta,
        });
    }
    let lag = (t - a.alpha) as f64;
    Ok(lag * lag / a.energy)
}

/// Reactive power drawn alongside real power `p` at power factor `pf`.
pub fn reactive_from_pf(p: f64, pf: f64) -> Result<f64, ModelError> {
    Ok(reactive_ratio(pf)? * p)
}

/// `tan(arccos(pf))`, computed as `sqrt(1 - pf^2) / pf`.
pub fn reactive_ratio(pf: f64) -> Result<f64, ModelError> {
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(ModelError::PowerFactor(pf));
    }
    Ok((1.0 - pf * pf).max(0.0).sqrt() / pf)
}

/// Closed-form variable count of a built problem.
pub fn expected_variable_count(
    num_slots: usize,
    num_appliances: usize,
    num_time_shiftable: usize,
    num_renewable: usize,
) -> usize {
    num_slots * (8 + 2 * num_appliances + num_renewable)
        + num_time_shiftable * num_slots
        + 4 * (num_slots - 1)
        + 1
}

/// Closed-form constraint count of a built problem.
pub fn expected_constraint_count(model: &HouseholdModel, num_renewable: usize) -> usize {
    let t = model.time_grid.num_slots();
    let a = model.appliances.len();
    let outside: usize = model.appliances.iter().map(|x| t - x.window_len()).sum();
    let limits: usize = model
        .appliances
        .iter()
        .filter(|x| x.category == ApplianceCategory::PowerAndTimeShiftable)
        .map(|x| 2 * x.window_len())
        .sum();
    let fixed = model.time_shiftable().count() * t;
    outside
        + limits
        + fixed
        + a // energy completion
        + a * t // power factor
        + t * (2 + num_renewable) // balances, PV availability
        + t // load capacity
        + 4 * t // storage state definitions and capacities
        + 4 * t // rates
        + 2 // day balance
        + 2 * (t - 1) // variation linearisation
}

struct Builder {
    variables: Vec<Variable>,
    index: HashMap<VarRef, VarId>,
    constraints: Vec<Constraint>,
}

impl Builder {
    fn var(&mut self, key: VarRef, lower: f64, upper: f64, binary: bool) -> VarId {
        let id = VarId(self.variables.len());
        self.variables.push(Variable {
            key,
            lower,
            upper,
            binary,
        });
        let prev = self.index.insert(key, id);
        debug_assert!(prev.is_none(), "duplicate variable {key}");
        id
    }

    fn nonneg(&mut self, key: VarRef) -> VarId {
        self.var(key, 0.0, f64::INFINITY, false)
    }

    fn id(&self, key: VarRef) -> VarId {
        self.index[&key]
    }

    fn constrain(
        &mut self,
        mut expr: LinearExpr,
        relation: Relation,
        rhs: f64,
        provenance: Provenance,
    ) {
        let rhs = rhs - expr.constant;
        expr.constant = 0.0;
        expr.canonicalize();
        self.constraints.push(Constraint {
            expr,
            relation,
            rhs,
            provenance,
        });
    }

    /// Splits `x` into a nonnegative pair with `up - down = x`. When `up + down`
    /// is minimised, one of the two is zero and their sum equals `|x|`.
    fn add_abs_linearization(
        &mut self,
        x: &LinearExpr,
        up: VarRef,
        down: VarRef,
        provenance: Provenance,
    ) -> (VarId, VarId) {
        let d_up = self.nonneg(up);
        let d_down = self.nonneg(down);
        let mut row = LinearExpr::new().term(d_up, 1.0).term(d_down, -1.0);
        row.add_expr(x, -1.0);
        self.constrain(row, Relation::Eq, 0.0, provenance);
        (d_up, d_down)
    }
}

/// Assembles the full mixed-integer program for one household day.
pub fn build_problem(
    model: &HouseholdModel,
    app_sc: &ApplianceScenarioSet,
    ren_sc: &RenewableScenarioSet,
    opts: BuildOptions,
) -> Result<MilpProblem, ModelError> {
    let report = validate_household(model);
    if !report.is_ok() {
        return Err(ModelError::Invalid(report));
    }
    let t_len = model.time_grid.num_slots();
    let dt = model.time_grid.slot_hours();
    if app_sc.num_slots() != t_len || app_sc.p.iter().chain(&app_sc.q).any(|s| s.len() != t_len) {
        return Err(ModelError::GridMismatch(format!(
            "appliance scenarios have {} slots, grid has {t_len}",
            app_sc.num_slots()
        )));
    }
    if ren_sc.is_empty() || ren_sc.p_g.iter().any(|s| s.len() != t_len) {
        return Err(ModelError::GridMismatch(format!(
            "renewable scenarios have {} slots, grid has {t_len}",
            ren_sc.num_slots()
        )));
    }

    let num_rs = ren_sc.len();
    let appliances = &model.appliances;
    let eps = opts.epsilon;
    let metered_lower = if opts.allow_export {
        f64::NEG_INFINITY
    } else {
        0.0
    };
    let mut b = Builder {
        variables: Vec::new(),
        index: HashMap::new(),
        constraints: Vec::new(),
    };

    for t in 1..=t_len {
        b.var(VarRef::MeteredP(t), metered_lower, f64::INFINITY, false);
        b.var(VarRef::MeteredQ(t), metered_lower, f64::INFINITY, false);
        b.nonneg(VarRef::BatteryCharge(t));
        b.nonneg(VarRef::BatteryDischarge(t));
        b.nonneg(VarRef::CapacitorCharge(t));
        b.nonneg(VarRef::CapacitorDischarge(t));
        b.nonneg(VarRef::BatteryEnergy(t));
        b.nonneg(VarRef::CapacitorEnergy(t));
        for a in 0..appliances.len() {
            b.nonneg(VarRef::ApplianceP(a, t));
            b.nonneg(VarRef::ApplianceQ(a, t));
        }
        for s in 0..num_rs {
            b.nonneg(VarRef::PvUsed(s, t));
        }
    }
    for (a, _) in model.time_shiftable() {
        for t in 1..=t_len {
            b.var(VarRef::Run(a, t), 0.0, 1.0, true);
        }
    }

    // Appliance power.
    for (a, app) in appliances.iter().enumerate() {
        for t in 1..=t_len {
            let p = b.id(VarRef::ApplianceP(a, t));
            if !app.in_window(t) {
                b.constrain(
                    LinearExpr::new().term(p, 1.0),
                    Relation::Eq,
                    0.0,
                    Provenance::OutsideWindow,
                );
            } else if app.category == ApplianceCategory::PowerAndTimeShiftable {
                b.constrain(
                    LinearExpr::new().term(p, 1.0),
                    Relation::GreaterEq,
                    app.p_min,
                    Provenance::PowerLimits,
                );
                b.constrain(
                    LinearExpr::new().term(p, 1.0),
                    Relation::LessEq,
                    app.p_max,
                    Provenance::PowerLimits,
                );
            }
            if app.category == ApplianceCategory::TimeShiftable {
                let y = b.id(VarRef::Run(a, t));
                b.constrain(
                    LinearExpr::new().term(p, 1.0).term(y, -app.p_max),
                    Relation::Eq,
                    0.0,
                    Provenance::FixedPower,
                );
            }
        }
        let mut energy = LinearExpr::new();
        for t in 1..=t_len {
            energy.add(b.id(VarRef::ApplianceP(a, t)), dt);
        }
        b.constrain(
            energy,
            Relation::Eq,
            app.energy,
            Provenance::EnergyCompletion,
        );
        let ratio = reactive_ratio(app.power_factor)?;
        for t in 1..=t_len {
            let p = b.id(VarRef::ApplianceP(a, t));
            let q = b.id(VarRef::ApplianceQ(a, t));
            b.constrain(
                LinearExpr::new().term(q, 1.0).term(p, -ratio),
                Relation::Eq,
                0.0,
                Provenance::PowerFactor,
            );
        }
    }

    // Power balance.
    let (od_p, od_q) = app_sc.expected();
    let bat = &model.battery;
    let cap = &model.capacitor;
    for t in 1..=t_len {
        let i = t - 1;
        let mut real = LinearExpr::new().term(b.id(VarRef::MeteredP(t)), 1.0);
        for a in 0..appliances.len() {
            real.add(b.id(VarRef::ApplianceP(a, t)), -1.0);
        }
        real.add(b.id(VarRef::BatteryCharge(t)), -1.0 / bat.eta_c);
        real.add(b.id(VarRef::BatteryDischarge(t)), bat.eta_d);
        for s in 0..num_rs {
            real.add(b.id(VarRef::PvUsed(s, t)), ren_sc.rho[s]);
        }
        b.constrain(
            real,
            Relation::Eq,
            model.baseline.p_sc[i] + od_p[i],
            Provenance::RealBalance,
        );

        for s in 0..num_rs {
            b.constrain(
                LinearExpr::new().term(b.id(VarRef::PvUsed(s, t)), 1.0),
                Relation::LessEq,
                ren_sc.p_g[s][i],
                Provenance::PvAvailability,
            );
        }

        let mut reactive = LinearExpr::new().term(b.id(VarRef::MeteredQ(t)), 1.0);
        for a in 0..appliances.len() {
            reactive.add(b.id(VarRef::ApplianceQ(a, t)), -1.0);
        }
        reactive.add(b.id(VarRef::CapacitorCharge(t)), -1.0 / cap.eta_c);
        reactive.add(b.id(VarRef::CapacitorDischarge(t)), cap.eta_d);
        b.constrain(
            reactive,
            Relation::Eq,
            model.baseline.q_sc[i] + od_q[i],
            Provenance::ReactiveBalance,
        );

        b.constrain(
            LinearExpr::new().term(b.id(VarRef::MeteredP(t)), 1.0),
            Relation::LessEq,
            model.p_max,
            Provenance::LoadCapacity,
        );
    }

    // Storage: running state of charge, capacity, rates, day closure.
    let stores = [
        (
            VarRef::BatteryEnergy as fn(usize) -> VarRef,
            VarRef::BatteryCharge as fn(usize) -> VarRef,
            VarRef::BatteryDischarge as fn(usize) -> VarRef,
            bat.e_init,
            bat.e_max,
            bat.r_charge_max,
            bat.r_discharge_max,
            Provenance::BatteryState,
            Provenance::BatteryChargeRate,
            Provenance::BatteryDischargeRate,
            Provenance::BatteryDayBalance,
        ),
        (
            VarRef::CapacitorEnergy as fn(usize) -> VarRef,
            VarRef::CapacitorCharge as fn(usize) -> VarRef,
            VarRef::CapacitorDischarge as fn(usize) -> VarRef,
            cap.e_init,
            cap.e_max,
            cap.r_charge_max,
            cap.r_discharge_max,
            Provenance::CapacitorState,
            Provenance::CapacitorChargeRate,
            Provenance::CapacitorDischargeRate,
            Provenance::CapacitorDayBalance,
        ),
    ];
    for (energy, charge, discharge, e_init, e_max, r_c, r_d, state, rate_c, rate_d, closure) in
        stores
    {
        for t in 1..=t_len {
            let mut row = LinearExpr::new()
                .term(b.id(energy(t)), 1.0)
                .term(b.id(charge(t)), -dt)
                .term(b.id(discharge(t)), dt);
            let rhs = if t == 1 {
                e_init
            } else {
                row.add(b.id(energy(t - 1)), -1.0);
                0.0
            };
            b.constrain(row, Relation::Eq, rhs, state);
            b.constrain(
                LinearExpr::new().term(b.id(energy(t)), 1.0),
                Relation::LessEq,
                e_max,
                state,
            );
        }
        for t in 1..=t_len {
            b.constrain(
                LinearExpr::new().term(b.id(charge(t)), 1.0),
                Relation::LessEq,
                r_c,
                rate_c,
            );
            b.constrain(
                LinearExpr::new().term(b.id(discharge(t)), 1.0),
                Relation::LessEq,
                r_d,
                rate_d,
            );
        }
        let mut balance = LinearExpr::new();
        for t in 1..=t_len {
            balance.add(b.id(charge(t)), 1.0);
            balance.add(b.id(discharge(t)), -1.0);
        }
        b.constrain(balance, Relation::Eq, 0.0, closure);
    }

    if opts.exclusive_storage {
        let modes = [
            (
                VarRef::BatteryMode as fn(usize) -> VarRef,
                VarRef::BatteryCharge as fn(usize) -> VarRef,
                VarRef::BatteryDischarge as fn(usize) -> VarRef,
                bat.r_charge_max,
                bat.r_discharge_max,
            ),
            (
                VarRef::CapacitorMode,
                VarRef::CapacitorCharge,
                VarRef::CapacitorDischarge,
                cap.r_charge_max,
                cap.r_discharge_max,
            ),
        ];
        for (mode, charge, discharge, r_c, r_d) in modes {
            for t in 1..=t_len {
                let u = b.var(mode(t), 0.0, 1.0, true);
                b.constrain(
                    LinearExpr::new().term(b.id(charge(t)), 1.0).term(u, -r_c),
                    Relation::LessEq,
                    0.0,
                    Provenance::StorageExclusion,
                );
                b.constrain(
                    LinearExpr::new().term(b.id(discharge(t)), 1.0).term(u, r_d),
                    Relation::LessEq,
                    r_d,
                    Provenance::StorageExclusion,
                );
            }
        }
    }

    // Objectives.
    let storage_flows = |b: &Builder, t: usize, scale: f64, expr: &mut LinearExpr| {
        for key in [
            VarRef::BatteryCharge(t),
            VarRef::BatteryDischarge(t),
            VarRef::CapacitorCharge(t),
            VarRef::CapacitorDischarge(t),
        ] {
            expr.add(b.id(key), scale);
        }
    };
    let mut o1 = LinearExpr::new();
    let mut o2 = LinearExpr::new();
    for t in 2..=t_len {
        let dp = LinearExpr::new()
            .term(b.id(VarRef::MeteredP(t)), 1.0)
            .term(b.id(VarRef::MeteredP(t - 1)), -1.0);
        let (up, down) = b.add_abs_linearization(
            &dp,
            VarRef::RealUp(t),
            VarRef::RealDown(t),
            Provenance::RealVariation,
        );
        o1.add(up, 1.0);
        o1.add(down, 1.0);
        storage_flows(&b, t, eps, &mut o1);

        let dq = LinearExpr::new()
            .term(b.id(VarRef::MeteredQ(t)), 1.0)
            .term(b.id(VarRef::MeteredQ(t - 1)), -1.0);
        let (up, down) = b.add_abs_linearization(
            &dq,
            VarRef::ReactiveUp(t),
            VarRef::ReactiveDown(t),
            Provenance::ReactiveVariation,
        );
        o2.add(up, 1.0);
        o2.add(down, 1.0);
        storage_flows(&b, t, eps, &mut o2);
    }

    let mut o3 = LinearExpr::new();
    for t in 1..=t_len {
        o3.add(
            b.id(VarRef::MeteredP(t)),
            model.tariff.price_per_slot[t - 1] * dt,
        );
    }

    // The storage penalty sits inside the sum over appliances, so it is
    // counted once per appliance.
    let mut o4 = LinearExpr::new();
    for (a, app) in appliances.iter().enumerate() {
        for t in app.window() {
            o4.add(
                b.id(VarRef::ApplianceP(a, t)),
                discomfort_coefficient(app, t)?,
            );
        }
    }
    for t in 1..=t_len {
        storage_flows(&b, t, eps * appliances.len() as f64, &mut o4);
    }

    b.var(VarRef::Z, f64::NEG_INFINITY, f64::INFINITY, false);

    let mut objectives = [o1, o2, o3, o4];
    for o in &mut objectives {
        o.canonicalize();
    }

    let num_ts = model.time_shiftable().count();
    let meta = ProblemMeta {
        num_slots: t_len,
        slot_hours: dt,
        appliance_ids: appliances.iter().map(|a| a.id.clone()).collect(),
        appliance_categories: appliances.iter().map(|a| a.category).collect(),
        num_time_shiftable: num_ts,
        num_appliance_scenarios: app_sc.len(),
        num_renewable_scenarios: num_rs,
        allow_export: opts.allow_export,
        exclusive_storage: opts.exclusive_storage,
    };
    let (extra_vars, extra_rows) = if opts.exclusive_storage {
        (2 * t_len, 4 * t_len)
    } else {
        (0, 0)
    };
    assert_eq!(
        b.variables.len(),
        expected_variable_count(t_len, appliances.len(), num_ts, num_rs) + extra_vars,
        "variable tally"
    );
    assert_eq!(
        b.constraints.len(),
        expected_constraint_count(model, num_rs) + extra_rows,
        "constraint tally"
    );

    Ok(MilpProblem {
        variables: b.variables,
        index: b.index,
        constraints: b.constraints,
        objectives,
        epsilon: eps,
        meta,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintViolation {
    pub row: usize,
    pub provenance: Provenance,
    pub amount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundViolation {
    pub var: VarRef,
    pub value: f64,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<ConstraintViolation>,
    pub bound_violations: Vec<BoundViolation>,
    /// Non-fatal findings such as simultaneous charge and discharge.
    pub warnings: Vec<String>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty() && self.bound_violations.is_empty()
    }
}

/// Lists every constraint and bound violated by more than `tol`, and warns
/// about slots where a store charges and discharges at once.
pub fn check_solution(
    problem: &MilpProblem,
    values: &[f64],
    tol: f64,
) -> Result<FeasibilityReport, ModelError> {
    problem.check_len(values)?;
    let mut report = FeasibilityReport::default();
    for (row, c) in problem.constraints.iter().enumerate() {
        let amount = c.violation(values);
        if amount > tol {
            report.violations.push(ConstraintViolation {
                row,
                provenance: c.provenance,
                amount,
            });
        }
    }
    for (v, &x) in problem.variables.iter().zip(values) {
        let message = if x < v.lower - tol {
            Some(format!("below lower bound {}", v.lower))
        } else if x > v.upper + tol {
            Some(format!("above upper bound {}", v.upper))
        } else if v.binary && (x - x.round()).abs() > tol {
            Some("not integral".to_string())
        } else {
            None
        };
        if let Some(message) = message {
            report.bound_violations.push(BoundViolation {
                var: v.key,
                value: x,
                message,
            });
        }
    }
    for t in 1..=problem.meta.num_slots {
        let val = |k| values[problem.id(k).0];
        let (cb, db) = (
            val(VarRef::BatteryCharge(t)),
            val(VarRef::BatteryDischarge(t)),
        );
        if cb * db > tol {
            report.warnings.push(format!(
                "simultaneous battery charge/discharge at slot {t} ({cb:.6}, {db:.6})"
            ));
        }
        let (cc, dc) = (
            val(VarRef::CapacitorCharge(t)),
            val(VarRef::CapacitorDischarge(t)),
        );
        if cc * dc > tol {
            report.warnings.push(format!(
                "simultaneous capacitor charge/discharge at slot {t} ({cc:.6}, {dc:.6})"
            ));
        }
    }
    Ok(report)
}

/// Completes a full assignment from appliance real-power schedules (0-based
/// slot series) with idle storage and no PV use. All dependent variables
/// (reactive power, run states, metered load, variation splits, stored energy)
/// are filled consistently. Used for the unshaped reference case and as a
/// feasibility witness.
pub fn assignment_from_schedule(
    problem: &MilpProblem,
    model: &HouseholdModel,
    app_sc: &ApplianceScenarioSet,
    schedule: &[Vec<f64>],
) -> Result<Vec<f64>, ModelError> {
    let t_len = problem.meta.num_slots;
    let mut x = vec![0.0; problem.num_variables()];
    let (od_p, od_q) = app_sc.expected();
    let mut pm = vec![0.0; t_len];
    let mut qm = vec![0.0; t_len];
    for (i, (p, q)) in pm.iter_mut().zip(qm.iter_mut()).enumerate() {
        *p = model.baseline.p_sc[i] + od_p[i];
        *q = model.baseline.q_sc[i] + od_q[i];
    }
    for (a, app) in model.appliances.iter().enumerate() {
        let ratio = reactive_ratio(app.power_factor)?;
        for t in 1..=t_len {
            let p = schedule[a][t - 1];
            x[problem.id(VarRef::ApplianceP(a, t)).0] = p;
            x[problem.id(VarRef::ApplianceQ(a, t)).0] = ratio * p;
            if let Some(y) = problem.var(VarRef::Run(a, t)) {
                x[y.0] = if p > 0.0 { 1.0 } else { 0.0 };
            }
            pm[t - 1] += p;
            qm[t - 1] += ratio * p;
        }
    }
    for t in 1..=t_len {
        x[problem.id(VarRef::MeteredP(t)).0] = pm[t - 1];
        x[problem.id(VarRef::MeteredQ(t)).0] = qm[t - 1];
        x[problem.id(VarRef::BatteryEnergy(t)).0] = model.battery.e_init;
        x[problem.id(VarRef::CapacitorEnergy(t)).0] = model.capacitor.e_init;
        if t >= 2 {
            let dp = pm[t - 1] - pm[t - 2];
            let dq = qm[t - 1] - qm[t - 2];
            x[problem.id(VarRef::RealUp(t)).0] = dp.max(0.0);
            x[problem.id(VarRef::RealDown(t)).0] = (-dp).max(0.0);
            x[problem.id(VarRef::ReactiveUp(t)).0] = dq.max(0.0);
            x[problem.id(VarRef::ReactiveDown(t)).0] = (-dq).max(0.0);
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests;
