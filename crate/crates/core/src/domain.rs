//! Household data model: time grid, appliances, storage devices, PV, tariff.
//!
//! Units are kW / kvar for power, kWh / kvarh for energy and hours for the
//! slot duration, so `slot_hours * power = energy` everywhere.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::DomainError;

/// Uniform discretisation of the scheduling horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    slot_hours: f64,
    num_slots: usize,
}

impl TimeGrid {
    pub fn new(slot_hours: f64, num_slots: usize) -> Result<Self, DomainError> {
        if !(slot_hours > 0.0) || !slot_hours.is_finite() {
            return Err(DomainError::InvalidGrid(format!(
                "slot duration must be positive, got {slot_hours} h"
            )));
        }
        if num_slots < 2 {
            return Err(DomainError::InvalidGrid(format!(
                "at least two slots required, got {num_slots}"
            )));
        }
        Ok(Self {
            slot_hours,
            num_slots,
        })
    }

    /// Duration of one slot in hours.
    pub fn slot_hours(&self) -> f64 {
        self.slot_hours
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn slot_minutes(&self) -> f64 {
        self.slot_hours * 60.0
    }

    pub fn horizon_hours(&self) -> f64 {
        self.slot_hours * self.num_slots as f64
    }
}

/// Builds a grid of `horizon_hours * 60 / slot_minutes` slots.
pub fn build_time_grid(slot_minutes: u32, horizon_hours: u32) -> Result<TimeGrid, DomainError> {
    let horizon_minutes = horizon_hours * 60;
    if slot_minutes == 0 || !horizon_minutes.is_multiple_of(slot_minutes) {
        return Err(DomainError::InvalidGrid(format!(
            "slot length {slot_minutes} min does not divide a {horizon_hours} h horizon"
        )));
    }
    TimeGrid::new(
        f64::from(slot_minutes) / 60.0,
        (horizon_minutes / slot_minutes) as usize,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApplianceCategory {
    SafetyCritical,
    OnDemand,
    TimeShiftable,
    PowerAndTimeShiftable,
}

impl ApplianceCategory {
    pub fn is_shiftable(self) -> bool {
        matches!(
            self,
            ApplianceCategory::TimeShiftable | ApplianceCategory::PowerAndTimeShiftable
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ApplianceCategory::SafetyCritical => "safety_critical",
            ApplianceCategory::OnDemand => "on_demand",
            ApplianceCategory::TimeShiftable => "time_shiftable",
            ApplianceCategory::PowerAndTimeShiftable => "power_and_time_shiftable",
        }
    }
}

impl fmt::Display for ApplianceCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ApplianceCategory {
    type Err = DomainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "safety_critical" => Ok(ApplianceCategory::SafetyCritical),
            "on_demand" => Ok(ApplianceCategory::OnDemand),
            "time_shiftable" => Ok(ApplianceCategory::TimeShiftable),
            "power_and_time_shiftable" => Ok(ApplianceCategory::PowerAndTimeShiftable),
            other => Err(DomainError::UnknownCategory(other.to_string())),
        }
    }
}

/// A schedulable appliance. `alpha` and `beta` are 1-based inclusive slot
/// indices delimiting the operation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Appliance {
    pub id: String,
    pub category: ApplianceCategory,
    pub alpha: usize,
    pub beta: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub energy: f64,
    pub power_factor: f64,
}

impl Appliance {
    pub fn window(&self) -> RangeInclusive<usize> {
        self.alpha..=self.beta
    }

    pub fn in_window(&self, t: usize) -> bool {
        self.alpha <= t && t <= self.beta
    }

    pub fn window_len(&self) -> usize {
        if self.beta >= self.alpha {
            self.beta - self.alpha + 1
        } else {
            0
        }
    }

    /// Number of full-power slots a time-shiftable appliance must run.
    pub fn run_slots(&self, grid: &TimeGrid) -> f64 {
        self.energy / (self.p_max * grid.slot_hours())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Battery {
    pub e_init: f64,
    pub e_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub r_charge_max: f64,
    pub r_discharge_max: f64,
}

impl Battery {
    /// A battery that cannot store anything.
    pub fn none() -> Self {
        Self {
            e_init: 0.0,
            e_max: 0.0,
            eta_c: 1.0,
            eta_d: 1.0,
            r_charge_max: 0.0,
            r_discharge_max: 0.0,
        }
    }
}

/// Reactive energy store. Same shape as [`Battery`], in kvar / kvarh.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacitor {
    pub e_init: f64,
    pub e_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub r_charge_max: f64,
    pub r_discharge_max: f64,
}

impl Capacitor {
    pub fn none() -> Self {
        Self {
            e_init: 0.0,
            e_max: 0.0,
            eta_c: 1.0,
            eta_d: 1.0,
            r_charge_max: 0.0,
            r_discharge_max: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvPanel {
    pub efficiency: f64,
    pub area_m2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tariff {
    /// $/kWh for each slot.
    pub price_per_slot: Vec<f64>,
}

impl Tariff {
    pub fn flat(price: f64, grid: &TimeGrid) -> Self {
        Self {
            price_per_slot: vec![price; grid.num_slots()],
        }
    }

    /// Expands hourly prices onto the grid; a slot takes the price of the hour
    /// in which it starts.
    pub fn from_hourly(hourly: &[f64], grid: &TimeGrid) -> Self {
        let price_per_slot = (0..grid.num_slots())
            .map(|i| {
                let hour = (i as f64 * grid.slot_hours()).floor() as usize;
                hourly[hour.min(hourly.len().saturating_sub(1))]
            })
            .collect();
        Self { price_per_slot }
    }
}

/// Per-slot load of the safety-critical (always-on, unschedulable) appliances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineProfiles {
    pub p_sc: Vec<f64>,
    pub q_sc: Vec<f64>,
}

impl BaselineProfiles {
    pub fn zeros(grid: &TimeGrid) -> Self {
        Self {
            p_sc: vec![0.0; grid.num_slots()],
            q_sc: vec![0.0; grid.num_slots()],
        }
    }
}

/// Everything static about one household for one day.
///
/// `appliances` holds only the shiftable appliances; safety-critical loads
/// live in `baseline` and on-demand loads enter through scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdModel {
    pub time_grid: TimeGrid,
    pub appliances: Vec<Appliance>,
    pub battery: Battery,
    pub capacitor: Capacitor,
    pub pv: PvPanel,
    pub tariff: Tariff,
    pub baseline: BaselineProfiles,
    /// Load capacity of the connection, kW.
    pub p_max: f64,
}

impl HouseholdModel {
    pub fn time_shiftable(&self) -> impl Iterator<Item = (usize, &Appliance)> {
        self.appliances
            .iter()
            .enumerate()
            .filter(|(_, a)| a.category == ApplianceCategory::TimeShiftable)
    }

    /// Schedule that front-loads every appliance inside its window: time-shiftable
    /// appliances run their first slots at full power, power-and-time-shiftable
    /// ones sit at `p_min` and are topped up to `p_max` from the window start.
    /// Returned as per-appliance real power series (kW), 0-based slots.
    pub fn earliest_schedule(&self) -> Vec<Vec<f64>> {
        let t_len = self.time_grid.num_slots();
        let dt = self.time_grid.slot_hours();
        self.appliances
            .iter()
            .map(|a| {
                let mut series = vec![0.0; t_len];
                match a.category {
                    ApplianceCategory::TimeShiftable => {
                        let slots = a.run_slots(&self.time_grid).round() as usize;
                        for t in a.window().take(slots) {
                            series[t - 1] = a.p_max;
                        }
                    }
                    _ => {
                        let mut extra = a.energy / dt - a.p_min * a.window_len() as f64;
                        for t in a.window() {
                            let top_up = extra.clamp(0.0, a.p_max - a.p_min);
                            series[t - 1] = a.p_min + top_up;
                            extra -= top_up;
                        }
                    }
                }
                series
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `appliances[2].energy`.
    pub path: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

const ENERGY_TOL: f64 = 1e-9;

/// Checks every static invariant of the household and reports one violation
/// per failed invariant.
pub fn validate_household(model: &HouseholdModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let grid = &model.time_grid;
    let t_len = grid.num_slots();
    let dt = grid.slot_hours();

    if !(dt > 0.0) {
        report.push("time_grid.slot_hours", "slot duration must be positive");
    }
    if t_len < 2 {
        report.push("time_grid.num_slots", "at least two slots required");
    }
    if !(model.p_max >= 0.0) {
        report.push("p_max", "load capacity must be nonnegative");
    }

    let mut seen = std::collections::HashSet::new();
    for (i, a) in model.appliances.iter().enumerate() {
        let path = |field: &str| format!("appliances[{i}].{field}");
        if !seen.insert(a.id.as_str()) {
            report.push(path("id"), format!("duplicate appliance id '{}'", a.id));
        }
        if !a.category.is_shiftable() {
            report.push(
                path("category"),
                "only shiftable appliances are scheduled; fold others into baseline or scenarios",
            );
        }
        if a.alpha < 1 {
            report.push(path("alpha"), "window start must be at least slot 1");
        }
        if a.beta > t_len {
            report.push(
                path("beta"),
                format!("window end exceeds horizon of {t_len} slots"),
            );
        }
        if a.alpha > a.beta {
            report.push(path("alpha"), "window start exceeds window end");
        }
        if !(a.p_min >= 0.0) {
            report.push(path("p_min"), "minimum power must be nonnegative");
        }
        if !(a.p_min <= a.p_max) {
            report.push(path("p_max"), "minimum power exceeds maximum power");
        }
        if !(a.power_factor > 0.0 && a.power_factor <= 1.0) {
            report.push(path("power_factor"), "power factor must lie in (0, 1]");
        }
        if !(a.energy >= 0.0) {
            report.push(path("energy"), "energy must be nonnegative");
        }
        let window = a.window_len() as f64;
        let deliverable = a.p_max * dt * window;
        if a.energy > deliverable * (1.0 + ENERGY_TOL) + ENERGY_TOL {
            report.push(
                path("energy"),
                format!(
                    "energy not completable within window (max deliverable {deliverable:.6} kWh)"
                ),
            );
        }
        if a.category == ApplianceCategory::PowerAndTimeShiftable {
            let minimum = a.p_min * dt * window;
            if a.energy < minimum * (1.0 - ENERGY_TOL) - ENERGY_TOL {
                report.push(
                    path("energy"),
                    format!("energy below the minimum-power floor of {minimum:.6} kWh"),
                );
            }
        }
        if a.category == ApplianceCategory::TimeShiftable && a.p_max > 0.0 {
            let slots = a.run_slots(grid);
            if (slots - slots.round()).abs() > 1e-6 {
                report.push(
                    path("energy"),
                    "energy is not an integer number of full-power slots",
                );
            }
        }
        if a.category == ApplianceCategory::TimeShiftable && a.p_max <= 0.0 && a.energy > 0.0 {
            report.push(
                path("p_max"),
                "time-shiftable appliance needs positive power",
            );
        }
    }

    check_store(
        &mut report,
        "battery",
        model.battery.e_init,
        model.battery.e_max,
        model.battery.eta_c,
        model.battery.eta_d,
        model.battery.r_charge_max,
        model.battery.r_discharge_max,
    );
    check_store(
        &mut report,
        "capacitor",
        model.capacitor.e_init,
        model.capacitor.e_max,
        model.capacitor.eta_c,
        model.capacitor.eta_d,
        model.capacitor.r_charge_max,
        model.capacitor.r_discharge_max,
    );

    if !(model.pv.efficiency > 0.0 && model.pv.efficiency <= 1.0) {
        report.push("pv.efficiency", "efficiency must lie in (0, 1]");
    }
    if !(model.pv.area_m2 > 0.0) {
        report.push("pv.area_m2", "panel area must be positive");
    }

    check_series(
        &mut report,
        "tariff.price_per_slot",
        &model.tariff.price_per_slot,
        t_len,
    );
    check_series(&mut report, "baseline.p_sc", &model.baseline.p_sc, t_len);
    check_series(&mut report, "baseline.q_sc", &model.baseline.q_sc, t_len);

    report
}

#[allow(clippy::too_many_arguments)]
fn check_store(
    report: &mut ValidationReport,
    name: &str,
    e_init: f64,
    e_max: f64,
    eta_c: f64,
    eta_d: f64,
    r_c: f64,
    r_d: f64,
) {
    if !(e_init >= 0.0 && e_init <= e_max) {
        report.push(
            format!("{name}.e_init"),
            "initial energy must lie in [0, e_max]",
        );
    }
    if !(eta_c > 0.0 && eta_c <= 1.0) {
        report.push(
            format!("{name}.eta_c"),
            "charge efficiency must lie in (0, 1]",
        );
    }
    if !(eta_d > 0.0 && eta_d <= 1.0) {
        report.push(
            format!("{name}.eta_d"),
            "discharge efficiency must lie in (0, 1]",
        );
    }
    if !(r_c >= 0.0) {
        report.push(format!("{name}.r_charge_max"), "rate must be nonnegative");
    }
    if !(r_d >= 0.0) {
        report.push(
            format!("{name}.r_discharge_max"),
            "rate must be nonnegative",
        );
    }
}

fn check_series(report: &mut ValidationReport, path: &str, values: &[f64], t_len: usize) {
    if values.len() != t_len {
        report.push(
            path,
            format!("expected {t_len} values, found {}", values.len()),
        );
    }
    if let Some(i) = values.iter().position(|v| !(*v >= 0.0)) {
        report.push(format!("{path}[{i}]"), "value must be nonnegative");
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn table_ii_household(grid: TimeGrid) -> HouseholdModel {
        let dt = grid.slot_hours();
        HouseholdModel {
            time_grid: grid,
            appliances: vec![Appliance {
                id: "dishwasher".into(),
                category: ApplianceCategory::TimeShiftable,
                alpha: 1,
                beta: grid.num_slots(),
                p_min: 0.0,
                p_max: 1.2,
                energy: 1.2 * dt * 3.0,
                power_factor: 0.9,
            }],
            battery: Battery {
                e_init: 1.0,
                e_max: 2.0,
                eta_c: 0.9,
                eta_d: 0.9,
                r_charge_max: 0.4,
                r_discharge_max: 0.4,
            },
            capacitor: Capacitor {
                e_init: 0.010,
                e_max: 0.020,
                eta_c: 0.99,
                eta_d: 0.99,
                r_charge_max: 0.005,
                r_discharge_max: 0.005,
            },
            pv: PvPanel {
                efficiency: 0.18,
                area_m2: 10.0,
            },
            tariff: Tariff::flat(0.1, &grid),
            baseline: BaselineProfiles::zeros(&grid),
            p_max: 10.0,
        }
    }

    #[test]
    fn grid_from_minutes() {
        let g = build_time_grid(1, 24).unwrap();
        assert_eq!(g.num_slots(), 1440);
        assert!((g.slot_hours() - 1.0 / 60.0).abs() < 1e-15);

        let g = build_time_grid(15, 24).unwrap();
        assert_eq!(g.num_slots(), 96);
        assert_eq!(g.slot_hours(), 0.25);

        assert!(build_time_grid(7, 24).is_err());
        assert!(build_time_grid(0, 24).is_err());
    }

    #[test]
    fn table_ii_household_is_valid() {
        let model = table_ii_household(build_time_grid(1, 24).unwrap());
        let report = validate_household(&model);
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn reversed_window_reported() {
        let mut model = table_ii_household(build_time_grid(15, 24).unwrap());
        model.appliances[0].alpha = 10;
        model.appliances[0].beta = 5;
        let report = validate_household(&model);
        assert!(
            report
                .violations
                .iter()
                .any(|v| v.message == "window start exceeds window end"),
            "{report}"
        );
    }

    #[test]
    fn uncompletable_energy_reported() {
        let mut model = table_ii_household(build_time_grid(1, 24).unwrap());
        let a = &mut model.appliances[0];
        a.category = ApplianceCategory::PowerAndTimeShiftable;
        a.p_max = 1.0;
        a.energy = 10.0;
        a.alpha = 1;
        a.beta = 60;
        let report = validate_household(&model);
        assert!(report
            .violations
            .iter()
            .any(|v| v.path == "appliances[0].energy"
                && v.message
                    .starts_with("energy not completable within window")));
    }

    #[test]
    fn fractional_run_slots_reported() {
        let mut model = table_ii_household(build_time_grid(15, 24).unwrap());
        model.appliances[0].energy = 1.2 * 0.25 * 2.5;
        let report = validate_household(&model);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, "appliances[0].energy");
    }

    #[test]
    fn validation_is_pure() {
        let mut model = table_ii_household(build_time_grid(15, 24).unwrap());
        model.battery.e_init = 5.0;
        model.tariff.price_per_slot.pop();
        assert_eq!(validate_household(&model), validate_household(&model));
        assert_eq!(validate_household(&model).violations.len(), 2);
    }

    #[test]
    fn earliest_schedule_completes_energy() {
        let grid = build_time_grid(15, 24).unwrap();
        let mut model = table_ii_household(grid);
        model.appliances.push(Appliance {
            id: "ev".into(),
            category: ApplianceCategory::PowerAndTimeShiftable,
            alpha: 10,
            beta: 30,
            p_min: 0.5,
            p_max: 3.0,
            energy: 7.3,
            power_factor: 0.95,
        });
        assert!(validate_household(&model).is_ok());
        let schedule = model.earliest_schedule();
        for (a, series) in model.appliances.iter().zip(&schedule) {
            let energy: f64 = series.iter().sum::<f64>() * grid.slot_hours();
            assert!((energy - a.energy).abs() < 1e-9, "{}: {energy}", a.id);
            for (i, p) in series.iter().enumerate() {
                if a.in_window(i + 1) {
                    assert!(*p <= a.p_max + 1e-12);
                    if a.category == ApplianceCategory::PowerAndTimeShiftable {
                        assert!(*p >= a.p_min - 1e-12);
                    }
                } else {
                    assert_eq!(*p, 0.0);
                }
            }
        }
    }
}
