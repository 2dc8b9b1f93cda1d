//! Seeded synthetic household: appliance traces, household config and
//! irradiance days, standing in for metered datasets.
//!
//! On-demand appliances fire as Poisson-arriving rectangular pulses around
//! preferred hours (different rates on weekends), with per-event magnitude
//! jitter. Safety-critical loads are a cycling fridge and a constant standby
//! draw. Shiftable appliances record the behaviour a household would show
//! without load shaping: dishwasher and washer started at a random time in
//! their window, the EV charged flat out from plug-in.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::config::{ApplianceConfig, CapacitorUnit, HouseholdConfig};
use crate::domain::{build_time_grid, ApplianceCategory, HouseholdModel};
use crate::error::DomainError;
use crate::ingest::{
    extract_day, ApplianceTrace, IrradianceDay, IrradianceTraces, RawTraces, MINUTES_PER_DAY,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub days: usize,
    pub step_minutes: u32,
    pub safety_critical: usize,
    pub on_demand: usize,
    pub time_shiftable: usize,
    pub power_time_shiftable: usize,
    /// Day whose baseline and shiftable behaviour feed the model.
    pub day_index: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            days: 730,
            step_minutes: 15,
            safety_critical: 2,
            on_demand: 3,
            time_shiftable: 2,
            power_time_shiftable: 1,
            day_index: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticHousehold {
    pub traces: RawTraces,
    pub config: HouseholdConfig,
    pub model: HouseholdModel,
}

struct OnDemandTemplate {
    id: &'static str,
    kw: f64,
    pf: f64,
    /// Events per weekday and per weekend day.
    rate: (f64, f64),
    /// Preferred hours of use.
    hours: &'static [f64],
    /// Duration range, minutes.
    minutes: (u32, u32),
}

const ON_DEMAND: [OnDemandTemplate; 4] = [
    OnDemandTemplate {
        id: "kettle",
        kw: 2.0,
        pf: 1.0,
        rate: (2.0, 3.0),
        hours: &[7.0, 12.5, 16.0, 21.0],
        minutes: (15, 15),
    },
    OnDemandTemplate {
        id: "microwave",
        kw: 1.1,
        pf: 0.9,
        rate: (1.5, 2.0),
        hours: &[8.0, 12.5, 18.5],
        minutes: (15, 30),
    },
    OnDemandTemplate {
        id: "television",
        kw: 0.18,
        pf: 0.7,
        rate: (1.0, 2.0),
        hours: &[19.5, 21.0, 14.0],
        minutes: (60, 180),
    },
    OnDemandTemplate {
        id: "hairdryer",
        kw: 1.5,
        pf: 0.97,
        rate: (0.6, 0.8),
        hours: &[7.0, 20.0],
        minutes: (15, 15),
    },
];

struct ShiftableTemplate {
    id: &'static str,
    category: ApplianceCategory,
    p_min: f64,
    p_max: f64,
    /// Energy in multiples of `p_max` x slot for time-shiftable appliances,
    /// kWh otherwise.
    size: f64,
    pf: f64,
    /// Window as wall-clock hours [start, end).
    window_h: (f64, f64),
}

const TIME_SHIFTABLE: [ShiftableTemplate; 3] = [
    ShiftableTemplate {
        id: "dishwasher",
        category: ApplianceCategory::TimeShiftable,
        p_min: 0.0,
        p_max: 1.2,
        size: 6.0,
        pf: 0.92,
        window_h: (19.0, 24.0),
    },
    ShiftableTemplate {
        id: "washer",
        category: ApplianceCategory::TimeShiftable,
        p_min: 0.0,
        p_max: 0.5,
        size: 4.0,
        pf: 0.65,
        window_h: (8.0, 20.0),
    },
    ShiftableTemplate {
        id: "dryer",
        category: ApplianceCategory::TimeShiftable,
        p_min: 0.0,
        p_max: 2.0,
        size: 3.0,
        pf: 0.85,
        window_h: (10.0, 22.0),
    },
];

const POWER_TIME_SHIFTABLE: [ShiftableTemplate; 2] = [
    ShiftableTemplate {
        id: "ev",
        category: ApplianceCategory::PowerAndTimeShiftable,
        p_min: 0.0,
        p_max: 3.3,
        size: 6.0,
        pf: 0.97,
        window_h: (0.0, 7.0),
    },
    ShiftableTemplate {
        id: "water_heater",
        category: ApplianceCategory::PowerAndTimeShiftable,
        p_min: 0.0,
        p_max: 2.5,
        size: 3.0,
        pf: 0.99,
        window_h: (10.0, 17.0),
    },
];

/// Hourly time-of-use price, $/kWh.
pub fn tou_tariff() -> Vec<f64> {
    (0..24)
        .map(|h| match h {
            0..=6 => 0.08,
            17..=20 => 0.24,
            _ => 0.14,
        })
        .collect()
}

fn pick<T>(list: &'static [T], i: usize) -> (&'static T, String)
where
    T: HasId,
{
    let t = &list[i % list.len()];
    let id = if i < list.len() {
        t.id().to_string()
    } else {
        format!("{}_{}", t.id(), i / list.len() + 1)
    };
    (t, id)
}

trait HasId {
    fn id(&self) -> &'static str;
}

impl HasId for OnDemandTemplate {
    fn id(&self) -> &'static str {
        self.id
    }
}

impl HasId for ShiftableTemplate {
    fn id(&self) -> &'static str {
        self.id
    }
}

fn reactive(p: f64, pf: f64) -> f64 {
    p * (1.0 - pf * pf).sqrt() / pf
}

/// Builds traces, config and validated model for `spec`.
pub fn generate_synthetic_household(
    seed: u64,
    spec: &SyntheticSpec,
) -> Result<SyntheticHousehold, DomainError> {
    if spec.time_shiftable + spec.power_time_shiftable + spec.on_demand + spec.safety_critical == 0
    {
        return Err(DomainError::Config(
            "synthetic spec has no appliances".into(),
        ));
    }
    if spec.days == 0 || spec.day_index >= spec.days {
        return Err(DomainError::Config(format!(
            "day_index {} outside {} synthetic days",
            spec.day_index, spec.days
        )));
    }
    let grid = build_time_grid(spec.step_minutes, 24)?;
    let per_day = grid.num_slots();
    let rows = per_day * spec.days;
    let step_h = grid.slot_hours();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut appliances: Vec<ApplianceTrace> = Vec::new();
    let mut configs: Vec<ApplianceConfig> = Vec::new();
    let slot_of = |hour: f64| ((hour / step_h).floor() as usize).min(per_day - 1);

    // Safety-critical: cycling fridge, then constant standby loads.
    for i in 0..spec.safety_critical {
        let (id, kw, pf) = if i == 0 {
            ("fridge".to_string(), 0.15, 0.8)
        } else {
            (format!("standby_{i}"), 0.06 + 0.02 * i as f64, 0.95)
        };
        let mut p = vec![0.0; rows];
        if i == 0 {
            let period = (60 / spec.step_minutes.min(60)).max(2) as usize;
            let phase = rng.gen_range(0..period);
            for (r, v) in p.iter_mut().enumerate() {
                let on = ((r + phase) / (period / 2).max(1)).is_multiple_of(2);
                *v = if on { kw } else { 0.02 };
            }
        } else {
            p.iter_mut().for_each(|v| *v = kw);
        }
        let q = p.iter().map(|&x| reactive(x, pf)).collect();
        appliances.push(ApplianceTrace {
            id: id.clone(),
            category: ApplianceCategory::SafetyCritical,
            p,
            q,
        });
        configs.push(ApplianceConfig {
            id,
            category: ApplianceCategory::SafetyCritical,
            alpha: None,
            beta: None,
            p_min_kw: 0.0,
            p_max_kw: kw,
            energy_kwh: 0.0,
            power_factor: pf,
        });
    }

    // On-demand pulses.
    for i in 0..spec.on_demand {
        let (t, id) = pick(&ON_DEMAND, i);
        let mut p = vec![0.0; rows];
        let jitter = Normal::new(1.0f64, 0.1).expect("valid normal");
        let spread = Normal::new(0.0f64, 0.75).expect("valid normal");
        for day in 0..spec.days {
            let weekend = day % 7 >= 5;
            let rate = if weekend { t.rate.1 } else { t.rate.0 };
            let events = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
            for _ in 0..events {
                let hour = t.hours[rng.gen_range(0..t.hours.len())] + spread.sample(&mut rng);
                let hour = hour.clamp(0.0, 23.99);
                let minutes = rng.gen_range(t.minutes.0..=t.minutes.1);
                let slots = ((minutes as f64 / spec.step_minutes as f64).round() as usize).max(1);
                let kw = t.kw * jitter.sample(&mut rng).clamp(0.7, 1.3);
                let start = day * per_day + slot_of(hour);
                let end = (start + slots).min((day + 1) * per_day);
                for v in &mut p[start..end] {
                    // Repeated use of one appliance does not stack.
                    *v = f64::max(*v, kw);
                }
            }
        }
        let q = p.iter().map(|&x| reactive(x, t.pf)).collect();
        appliances.push(ApplianceTrace {
            id: id.clone(),
            category: ApplianceCategory::OnDemand,
            p,
            q,
        });
        configs.push(ApplianceConfig {
            id,
            category: ApplianceCategory::OnDemand,
            alpha: None,
            beta: None,
            p_min_kw: 0.0,
            p_max_kw: t.kw,
            energy_kwh: 0.0,
            power_factor: t.pf,
        });
    }

    // Shiftable appliances with their unshaped daily behaviour.
    let shiftable = (0..spec.time_shiftable)
        .map(|i| pick(&TIME_SHIFTABLE, i))
        .chain((0..spec.power_time_shiftable).map(|i| pick(&POWER_TIME_SHIFTABLE, i)));
    for (k, (t, id)) in shiftable.enumerate() {
        let alpha = slot_of(t.window_h.0) + 1;
        let beta = ((t.window_h.1 / step_h).ceil() as usize).clamp(alpha, per_day);
        // Distinct power factors even when templates repeat.
        let pf = (t.pf - 0.01 * (k / (TIME_SHIFTABLE.len() + POWER_TIME_SHIFTABLE.len())) as f64)
            .clamp(0.6, 1.0);
        let (energy, run) = match t.category {
            ApplianceCategory::TimeShiftable => {
                // Run length scales with the slot so energy stays put.
                let run = ((t.size * 15.0 / spec.step_minutes as f64).round() as usize)
                    .clamp(1, beta - alpha + 1);
                (t.p_max * step_h * run as f64, run)
            }
            _ => (t.size.min(t.p_max * step_h * (beta - alpha + 1) as f64), 0),
        };
        let mut p = vec![0.0; rows];
        for day in 0..spec.days {
            let base = day * per_day;
            match t.category {
                ApplianceCategory::TimeShiftable => {
                    let start = rng.gen_range(alpha..=beta + 1 - run);
                    for s in start..start + run {
                        p[base + s - 1] = t.p_max;
                    }
                }
                _ => {
                    let mut left = energy;
                    for s in alpha..=beta {
                        let kw = (left / step_h).min(t.p_max);
                        p[base + s - 1] = kw;
                        left -= kw * step_h;
                        if left <= 1e-12 {
                            break;
                        }
                    }
                }
            }
        }
        let q = p.iter().map(|&x| reactive(x, pf)).collect();
        appliances.push(ApplianceTrace {
            id: id.clone(),
            category: t.category,
            p,
            q,
        });
        configs.push(ApplianceConfig {
            id,
            category: t.category,
            alpha: Some(alpha),
            beta: Some(beta),
            p_min_kw: t.p_min,
            p_max_kw: t.p_max,
            energy_kwh: energy,
            power_factor: pf,
        });
    }

    let traces = RawTraces {
        step_minutes: spec.step_minutes,
        timestamps: (0..rows as i64)
            .map(|r| r * spec.step_minutes as i64)
            .collect(),
        appliances,
    };
    let config = HouseholdConfig {
        delta_t_min: spec.step_minutes,
        horizon_h: 24,
        eta_cp: 0.9,
        eta_dp: 0.9,
        eta_cq: 0.99,
        eta_dq: 0.99,
        E_bi_kwh: 1.0,
        E_bmax_kwh: 2.0,
        E_ci_varh: 10.0,
        E_cmax_varh: 20.0,
        P_max_kw: 10.0,
        R_cbmax_kw: 0.4,
        R_dbmax_kw: 0.4,
        R_ccmax_var: 5.0,
        R_dcmax_var: 5.0,
        capacitor_unit: CapacitorUnit::Kvar,
        pv_efficiency: 0.18,
        pv_area_m2: 10.0,
        tariff_hourly: tou_tariff(),
        day_index: spec.day_index,
        appliances: configs,
    };
    let day =
        extract_day(&traces, spec.day_index).map_err(|e| DomainError::Config(e.to_string()))?;
    let model = config.to_model(grid, day.baseline)?;
    Ok(SyntheticHousehold {
        traces,
        config,
        model,
    })
}

/// Irradiance days on a minutely grid, kW/m²: a clear day, then
/// progressively cloudier ones.
pub fn generate_synthetic_irradiance(seed: u64, days: usize) -> IrradianceTraces {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1177);
    let minutes = MINUTES_PER_DAY as usize;
    let labels = ["clear", "partly_cloudy", "overcast", "mixed"];
    let days = (0..days)
        .map(|d| {
            let cloudiness = d as f64 / days.max(2) as f64;
            let peak = 0.95 * (1.0 - 0.6 * cloudiness);
            let mut shade = 1.0f64;
            let gti = (0..minutes)
                .map(|m| {
                    let h = m as f64 / 60.0;
                    let sun = if (6.5..18.5).contains(&h) {
                        (std::f64::consts::PI * (h - 6.5) / 12.0).sin()
                    } else {
                        0.0
                    };
                    // Cloud passages as a slowly varying shade factor.
                    if rng.gen_bool((0.02 * cloudiness).clamp(0.0, 1.0)) {
                        shade = rng.gen_range(0.3..1.0);
                    }
                    (peak * sun * if cloudiness > 0.0 { shade } else { 1.0 }).max(0.0)
                })
                .collect();
            IrradianceDay {
                label: if d < labels.len() {
                    labels[d].to_string()
                } else {
                    format!("day{}", d + 1)
                },
                gti,
            }
        })
        .collect();
    IrradianceTraces {
        step_minutes: 1,
        days,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::validate_household;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            days: 21,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn same_seed_same_household() {
        let a = generate_synthetic_household(42, &small_spec()).unwrap();
        let b = generate_synthetic_household(42, &small_spec()).unwrap();
        assert_eq!(a.traces, b.traces);
        assert_eq!(a.config, b.config);
        let c = generate_synthetic_household(43, &small_spec()).unwrap();
        assert_ne!(a.traces, c.traces);
    }

    #[test]
    fn default_household_is_valid() {
        let h = generate_synthetic_household(42, &small_spec()).unwrap();
        let report = validate_household(&h.model);
        assert!(report.is_ok(), "{report}");
        assert_eq!(h.traces.num_days(), 21);
        assert_eq!(h.model.appliances.len(), 3);
        let mut pfs: Vec<f64> = h.model.appliances.iter().map(|a| a.power_factor).collect();
        pfs.dedup();
        assert_eq!(pfs.len(), 3);
        assert!(pfs.iter().all(|pf| (0.6..=1.0).contains(pf)));
        assert_eq!(h.model.p_max, 10.0);
    }

    #[test]
    fn no_on_demand_means_empty_pool() {
        let spec = SyntheticSpec {
            on_demand: 0,
            ..small_spec()
        };
        let h = generate_synthetic_household(1, &spec).unwrap();
        assert_eq!(h.traces.of_category(ApplianceCategory::OnDemand).count(), 0);
    }

    #[test]
    fn observed_schedules_complete_their_energy() {
        let h = generate_synthetic_household(7, &small_spec()).unwrap();
        let dt = h.model.time_grid.slot_hours();
        let day = extract_day(&h.traces, 3).unwrap();
        for a in &h.model.appliances {
            let trace = day.shiftable.iter().find(|t| t.id == a.id).unwrap();
            let energy: f64 = trace.p.iter().sum::<f64>() * dt;
            assert!((energy - a.energy).abs() < 1e-9, "{}", a.id);
            for (t, &p) in trace.p.iter().enumerate() {
                if p > 0.0 {
                    assert!(a.in_window(t + 1));
                }
            }
        }
    }

    #[test]
    fn irradiance_is_nonnegative_and_dark_at_night() {
        let irr = generate_synthetic_irradiance(3, 4);
        assert_eq!(irr.days.len(), 4);
        for d in &irr.days {
            assert_eq!(d.gti.len(), 1440);
            assert!(d.gti.iter().all(|&g| g >= 0.0));
            assert_eq!(d.gti[60], 0.0);
        }
        assert!(irr.days[0].gti[720] > irr.days[2].gti[720]);
    }
}
