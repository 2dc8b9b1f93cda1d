//! Household configuration file.
//!
//! Keys follow the parameter names of the model (`eta_cp`, `E_bmax_kwh`,
//! `R_ccmax_var`, ...). Capacitor ratings are given in var / varh by default;
//! `capacitor_unit = "kvar"` reads the same numbers as kvar / kvarh instead.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{
    validate_household, Appliance, ApplianceCategory, BaselineProfiles, Battery, Capacitor,
    HouseholdModel, PvPanel, Tariff, TimeGrid,
};
use crate::error::DomainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CapacitorUnit {
    #[default]
    Var,
    Kvar,
}

impl CapacitorUnit {
    /// Factor converting the configured magnitude to kvar / kvarh.
    pub fn to_kilo(self) -> f64 {
        match self {
            CapacitorUnit::Var => 1e-3,
            CapacitorUnit::Kvar => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceConfig {
    pub id: String,
    pub category: ApplianceCategory,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<usize>,
    #[serde(default)]
    pub p_min_kw: f64,
    #[serde(default)]
    pub p_max_kw: f64,
    #[serde(default)]
    pub energy_kwh: f64,
    #[serde(default = "unit_pf")]
    pub power_factor: f64,
}

fn unit_pf() -> f64 {
    1.0
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdConfig {
    pub delta_t_min: u32,
    #[serde(default = "default_horizon")]
    pub horizon_h: u32,
    pub eta_cp: f64,
    pub eta_dp: f64,
    pub eta_cq: f64,
    pub eta_dq: f64,
    pub E_bi_kwh: f64,
    pub E_bmax_kwh: f64,
    pub E_ci_varh: f64,
    pub E_cmax_varh: f64,
    pub P_max_kw: f64,
    pub R_cbmax_kw: f64,
    pub R_dbmax_kw: f64,
    pub R_ccmax_var: f64,
    pub R_dcmax_var: f64,
    #[serde(default)]
    pub capacitor_unit: CapacitorUnit,
    pub pv_efficiency: f64,
    pub pv_area_m2: f64,
    /// $/kWh per hour of the day; a single value means a flat price.
    pub tariff_hourly: Vec<f64>,
    /// Day of the traces used for baseline and observed schedules.
    #[serde(default)]
    pub day_index: usize,
    #[serde(default, rename = "appliance")]
    pub appliances: Vec<ApplianceConfig>,
}

fn default_horizon() -> u32 {
    24
}

impl HouseholdConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, DomainError> {
        toml::from_str(text).map_err(|e| DomainError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DomainError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DomainError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("household config always serializes")
    }

    pub fn category_of(&self, id: &str) -> Option<ApplianceCategory> {
        self.appliances
            .iter()
            .find(|a| a.id == id)
            .map(|a| a.category)
    }

    /// Builds the household on `grid`. Appliance windows are given in slots of
    /// the configured `delta_t_min`; they are mapped by wall-clock time when
    /// `grid` uses a different slot length.
    pub fn to_model(
        &self,
        grid: TimeGrid,
        baseline: BaselineProfiles,
    ) -> Result<HouseholdModel, DomainError> {
        let cfg_minutes = f64::from(self.delta_t_min);
        let grid_minutes = grid.slot_minutes();
        let map_start = |slot: usize| -> usize {
            (((slot - 1) as f64 * cfg_minutes / grid_minutes).floor() as usize) + 1
        };
        let map_end =
            |slot: usize| -> usize { (slot as f64 * cfg_minutes / grid_minutes).ceil() as usize };

        let mut appliances = Vec::new();
        for a in self.appliances.iter().filter(|a| a.category.is_shiftable()) {
            let alpha = a.alpha.unwrap_or(1).max(1);
            let beta = a.beta.unwrap_or(grid.num_slots());
            appliances.push(Appliance {
                id: a.id.clone(),
                category: a.category,
                alpha: map_start(alpha),
                beta: map_end(beta),
                p_min: a.p_min_kw,
                p_max: a.p_max_kw,
                energy: a.energy_kwh,
                power_factor: a.power_factor,
            });
        }

        let unit = self.capacitor_unit.to_kilo();
        let tariff = match self.tariff_hourly.as_slice() {
            [] => return Err(DomainError::Config("tariff_hourly is empty".into())),
            [flat] => Tariff::flat(*flat, &grid),
            hourly => Tariff::from_hourly(hourly, &grid),
        };
        let model = HouseholdModel {
            time_grid: grid,
            appliances,
            battery: Battery {
                e_init: self.E_bi_kwh,
                e_max: self.E_bmax_kwh,
                eta_c: self.eta_cp,
                eta_d: self.eta_dp,
                r_charge_max: self.R_cbmax_kw,
                r_discharge_max: self.R_dbmax_kw,
            },
            capacitor: Capacitor {
                e_init: self.E_ci_varh * unit,
                e_max: self.E_cmax_varh * unit,
                eta_c: self.eta_cq,
                eta_d: self.eta_dq,
                r_charge_max: self.R_ccmax_var * unit,
                r_discharge_max: self.R_dcmax_var * unit,
            },
            pv: PvPanel {
                efficiency: self.pv_efficiency,
                area_m2: self.pv_area_m2,
            },
            tariff,
            baseline,
            p_max: self.P_max_kw,
        };
        let report = validate_household(&model);
        if report.is_ok() {
            Ok(model)
        } else {
            Err(DomainError::Invalid(report))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_time_grid;

    const SAMPLE: &str = r#"
delta_t_min = 15
eta_cp = 0.9
eta_dp = 0.9
eta_cq = 0.99
eta_dq = 0.99
E_bi_kwh = 1.0
E_bmax_kwh = 2.0
E_ci_varh = 10.0
E_cmax_varh = 20.0
P_max_kw = 10.0
R_cbmax_kw = 0.4
R_dbmax_kw = 0.4
R_ccmax_var = 5.0
R_dcmax_var = 5.0
pv_efficiency = 0.18
pv_area_m2 = 10.0
tariff_hourly = [0.1]

[[appliance]]
id = "fridge"
category = "safety_critical"

[[appliance]]
id = "dishwasher"
category = "time_shiftable"
alpha = 5
beta = 20
p_max_kw = 1.2
energy_kwh = 0.9
power_factor = 0.9
"#;

    #[test]
    fn literal_capacitor_units_are_var() {
        let cfg = HouseholdConfig::from_toml_str(SAMPLE).unwrap();
        let grid = build_time_grid(15, 24).unwrap();
        let model = cfg.to_model(grid, BaselineProfiles::zeros(&grid)).unwrap();
        assert!((model.capacitor.e_init - 0.010).abs() < 1e-15);
        assert!((model.capacitor.e_max - 0.020).abs() < 1e-15);
        assert!((model.capacitor.r_charge_max - 0.005).abs() < 1e-15);
        assert_eq!(model.appliances.len(), 1);
        assert_eq!(
            cfg.category_of("fridge"),
            Some(ApplianceCategory::SafetyCritical)
        );
    }

    #[test]
    fn kvar_unit_keeps_magnitudes() {
        let text = SAMPLE.replace("tariff_hourly", "capacitor_unit = \"kvar\"\ntariff_hourly");
        let cfg = HouseholdConfig::from_toml_str(&text).unwrap();
        let grid = build_time_grid(15, 24).unwrap();
        let model = cfg.to_model(grid, BaselineProfiles::zeros(&grid)).unwrap();
        assert_eq!(model.capacitor.e_max, 20.0);
    }

    #[test]
    fn windows_follow_wall_clock_on_finer_grid() {
        let cfg = HouseholdConfig::from_toml_str(SAMPLE).unwrap();
        let grid = build_time_grid(5, 24).unwrap();
        let model = cfg.to_model(grid, BaselineProfiles::zeros(&grid)).unwrap();
        let dw = &model.appliances[0];
        // slot 5 of 15 min starts at minute 60 -> slot 13 of 5 min; slot 20 ends at minute 300.
        assert_eq!((dw.alpha, dw.beta), (13, 60));
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = HouseholdConfig::from_toml_str(SAMPLE).unwrap();
        let again = HouseholdConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_top_level_key_rejected() {
        let text = format!("bogus_key = 1\n{SAMPLE}");
        assert!(HouseholdConfig::from_toml_str(&text).is_err());
    }
}
