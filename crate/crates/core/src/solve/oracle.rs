//! Exhaustive enumeration over discretised schedules for tiny instances.
//! Objectives are evaluated straight from the balance equations, without the
//! model builder, so the result can check the MILP.

use serde::{Deserialize, Serialize};

use super::normalizer;
use crate::domain::{ApplianceCategory, HouseholdModel};
use crate::error::SolveError;
use crate::model::EPSILON;
use crate::scenarios::{ApplianceScenarioSet, RenewableScenarioSet};

/// Largest number of candidates the oracle will enumerate.
pub const ORACLE_BUDGET: u128 = 10_000_000;

const MAX_SLOTS: usize = 6;
const MAX_APPLIANCES: usize = 2;
const MAX_LEVELS: usize = 5;
const FEAS_TOL: f64 = 1e-9;

/// Discrete levels the oracle may pick per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGrid {
    /// Allowed battery charge and discharge powers, kW.
    pub battery_levels: Vec<f64>,
    /// Allowed capacitor charge and discharge powers, kvar.
    pub capacitor_levels: Vec<f64>,
    /// Allowed in-window powers of power-and-time-shiftable appliances, kW.
    pub pts_levels: Vec<f64>,
    /// Fractions of available PV output that may be used.
    pub pv_fractions: Vec<f64>,
}

impl Default for OracleGrid {
    fn default() -> Self {
        Self {
            battery_levels: vec![0.0],
            capacitor_levels: vec![0.0],
            pts_levels: vec![0.0],
            pv_fractions: vec![0.0, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    /// Minimum of each objective over the enumerated candidates.
    pub optima: [f64; 4],
    /// Minimax value for the requested weights, normalised by `optima`.
    pub minimax: Option<f64>,
    pub candidates: u128,
    pub feasible: u128,
}

/// One choice for one component: its additive contribution to the metered
/// series, storage flow per slot and discomfort.
#[derive(Debug, Clone)]
struct Choice {
    dp: Vec<f64>,
    dq: Vec<f64>,
    flow: Vec<f64>,
    discomfort: f64,
}

impl Choice {
    fn zero(t_len: usize) -> Self {
        Self {
            dp: vec![0.0; t_len],
            dq: vec![0.0; t_len],
            flow: vec![0.0; t_len],
            discomfort: 0.0,
        }
    }
}

fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    if items.len() < k {
        return Vec::new();
    }
    let mut out = Vec::new();
    for (i, &first) in items.iter().enumerate() {
        for mut rest in combinations(&items[i + 1..], k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn product(levels: &[f64], len: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                levels.iter().map(move |&l| {
                    let mut p = prefix.clone();
                    p.push(l);
                    p
                })
            })
            .collect();
    }
    out
}

/// Charge/discharge sequences respecting rates, the stored-energy range at
/// every prefix and the day balance.
#[allow(clippy::too_many_arguments)]
fn storage_choices(
    levels: &[f64],
    t_len: usize,
    dt: f64,
    e_init: f64,
    e_max: f64,
    r_c: f64,
    r_d: f64,
    eta_c: f64,
    eta_d: f64,
    real: bool,
) -> Vec<Choice> {
    let charge: Vec<f64> = levels
        .iter()
        .copied()
        .filter(|&l| l <= r_c + FEAS_TOL)
        .collect();
    let discharge: Vec<f64> = levels
        .iter()
        .copied()
        .filter(|&l| l <= r_d + FEAS_TOL)
        .collect();
    let mut out = Vec::new();
    let mut seq: Vec<(f64, f64)> = Vec::with_capacity(t_len);
    fn walk(
        seq: &mut Vec<(f64, f64)>,
        energy: f64,
        ctx: (&[f64], &[f64], usize, f64, f64),
        out: &mut Vec<Vec<(f64, f64)>>,
    ) {
        let (charge, discharge, t_len, dt, e_max) = ctx;
        if seq.len() == t_len {
            let net: f64 = seq.iter().map(|(c, d)| c - d).sum();
            if net.abs() <= FEAS_TOL {
                out.push(seq.clone());
            }
            return;
        }
        for &c in charge {
            for &d in discharge {
                let e = energy + dt * (c - d);
                if e < -FEAS_TOL || e > e_max + FEAS_TOL {
                    continue;
                }
                seq.push((c, d));
                walk(seq, e, ctx, out);
                seq.pop();
            }
        }
    }
    let mut seqs = Vec::new();
    walk(
        &mut seq,
        e_init,
        (&charge, &discharge, t_len, dt, e_max),
        &mut seqs,
    );
    for s in seqs {
        let mut ch = Choice::zero(t_len);
        for (t, (c, d)) in s.into_iter().enumerate() {
            let grid_side = c / eta_c - d * eta_d;
            if real {
                ch.dp[t] = grid_side;
            } else {
                ch.dq[t] = grid_side;
            }
            ch.flow[t] = c + d;
        }
        out.push(ch);
    }
    out
}

/// Minimum of each objective (and optionally of the minimax composite for
/// `weights`) over every discretised schedule of a tiny household.
pub fn brute_force_oracle(
    model: &HouseholdModel,
    app_sc: &ApplianceScenarioSet,
    ren_sc: &RenewableScenarioSet,
    weights: Option<[f64; 4]>,
    grid: &OracleGrid,
) -> Result<OracleResult, SolveError> {
    let t_len = model.time_grid.num_slots();
    let dt = model.time_grid.slot_hours();
    if t_len > MAX_SLOTS {
        return Err(SolveError::Oracle(format!(
            "{t_len} slots, at most {MAX_SLOTS} supported"
        )));
    }
    if model.appliances.len() > MAX_APPLIANCES {
        return Err(SolveError::Oracle(format!(
            "{} shiftable appliances, at most {MAX_APPLIANCES} supported",
            model.appliances.len()
        )));
    }
    for levels in [
        &grid.battery_levels,
        &grid.capacitor_levels,
        &grid.pts_levels,
        &grid.pv_fractions,
    ] {
        if levels.is_empty() || levels.len() > MAX_LEVELS {
            return Err(SolveError::Oracle(format!(
                "each level list needs 1..={MAX_LEVELS} entries"
            )));
        }
    }

    let mut components: Vec<Vec<Choice>> = Vec::new();

    // Fixed part: safety-critical baseline plus expected on-demand load.
    let mut fixed = Choice::zero(t_len);
    for t in 0..t_len {
        fixed.dp[t] = model.baseline.p_sc[t];
        fixed.dq[t] = model.baseline.q_sc[t];
        for s in 0..app_sc.len() {
            fixed.dp[t] += app_sc.rho[s] * app_sc.p[s][t];
            fixed.dq[t] += app_sc.rho[s] * app_sc.q[s][t];
        }
    }
    components.push(vec![fixed]);

    for a in &model.appliances {
        let ratio = (1.0 / (a.power_factor * a.power_factor) - 1.0)
            .max(0.0)
            .sqrt();
        let window: Vec<usize> = a.window().collect();
        let series: Vec<Vec<f64>> = match a.category {
            ApplianceCategory::TimeShiftable => {
                let n = (a.energy / (a.p_max * dt)).round() as usize;
                combinations(&window, n)
                    .into_iter()
                    .map(|slots| {
                        let mut p = vec![0.0; t_len];
                        for t in slots {
                            p[t - 1] = a.p_max;
                        }
                        p
                    })
                    .collect()
            }
            _ => {
                let levels: Vec<f64> = grid
                    .pts_levels
                    .iter()
                    .copied()
                    .filter(|&l| l >= a.p_min - FEAS_TOL && l <= a.p_max + FEAS_TOL)
                    .collect();
                product(&levels, window.len())
                    .into_iter()
                    .filter(|w| (w.iter().sum::<f64>() * dt - a.energy).abs() <= 1e-9)
                    .map(|w| {
                        let mut p = vec![0.0; t_len];
                        for (&t, v) in window.iter().zip(w) {
                            p[t - 1] = v;
                        }
                        p
                    })
                    .collect()
            }
        };
        let choices = series
            .into_iter()
            .map(|p| {
                let mut ch = Choice::zero(t_len);
                for (t, &v) in p.iter().enumerate().take(t_len) {
                    ch.dp[t] = v;
                    ch.dq[t] = ratio * v;
                    if v != 0.0 {
                        let lag = (t + 1 - a.alpha) as f64;
                        ch.discomfort += lag * lag / a.energy * v;
                    }
                }
                ch
            })
            .collect();
        components.push(choices);
    }

    let b = &model.battery;
    components.push(storage_choices(
        &grid.battery_levels,
        t_len,
        dt,
        b.e_init,
        b.e_max,
        b.r_charge_max,
        b.r_discharge_max,
        b.eta_c,
        b.eta_d,
        true,
    ));
    let c = &model.capacitor;
    components.push(storage_choices(
        &grid.capacitor_levels,
        t_len,
        dt,
        c.e_init,
        c.e_max,
        c.r_charge_max,
        c.r_discharge_max,
        c.eta_c,
        c.eta_d,
        false,
    ));

    for s in 0..ren_sc.len() {
        let per_slot: Vec<Vec<f64>> = (0..t_len)
            .map(|t| {
                let mut uses: Vec<f64> = grid
                    .pv_fractions
                    .iter()
                    .map(|f| f * ren_sc.p_g[s][t])
                    .collect();
                uses.sort_by(f64::total_cmp);
                uses.dedup();
                uses
            })
            .collect();
        let mut choices = vec![Choice::zero(t_len)];
        for (t, uses) in per_slot.iter().enumerate() {
            choices = choices
                .into_iter()
                .flat_map(|ch| {
                    uses.iter().map(move |&v| {
                        let mut next = ch.clone();
                        next.dp[t] -= ren_sc.rho[s] * v;
                        next
                    })
                })
                .collect();
        }
        components.push(choices);
    }

    let candidates: u128 = components.iter().map(|c| c.len() as u128).product();
    if candidates > ORACLE_BUDGET {
        return Err(SolveError::Budget(candidates));
    }
    if components.iter().any(|c| c.is_empty()) {
        return Err(SolveError::Oracle(
            "no discretised schedule satisfies the constraints".into(),
        ));
    }

    let num_app = model.appliances.len() as f64;
    let evaluate = |idx: &[usize]| -> Option<[f64; 4]> {
        let mut pm = vec![0.0; t_len];
        let mut qm = vec![0.0; t_len];
        let mut flow = vec![0.0; t_len];
        let mut discomfort = 0.0;
        for (comp, &i) in components.iter().zip(idx) {
            let ch = &comp[i];
            for t in 0..t_len {
                pm[t] += ch.dp[t];
                qm[t] += ch.dq[t];
                flow[t] += ch.flow[t];
            }
            discomfort += ch.discomfort;
        }
        if pm
            .iter()
            .zip(&qm)
            .any(|(&p, &q)| p < -FEAS_TOL || q < -FEAS_TOL || p > model.p_max + FEAS_TOL)
        {
            return None;
        }
        let late_flow: f64 = flow[1..].iter().sum();
        let o1 = pm.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() + EPSILON * late_flow;
        let o2 = qm.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() + EPSILON * late_flow;
        let o3 = (0..t_len)
            .map(|t| model.tariff.price_per_slot[t] * dt * pm[t])
            .sum::<f64>();
        let o4 = discomfort + num_app * EPSILON * flow.iter().sum::<f64>();
        Some([o1, o2, o3, o4])
    };

    let for_each = |f: &mut dyn FnMut([f64; 4])| {
        let mut idx = vec![0usize; components.len()];
        loop {
            if let Some(o) = evaluate(&idx) {
                f(o);
            }
            let mut k = 0;
            loop {
                if k == idx.len() {
                    return;
                }
                idx[k] += 1;
                if idx[k] < components[k].len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    };

    let mut optima = [f64::INFINITY; 4];
    let mut feasible = 0u128;
    for_each(&mut |o| {
        feasible += 1;
        for i in 0..4 {
            optima[i] = optima[i].min(o[i]);
        }
    });
    if feasible == 0 {
        return Err(SolveError::Oracle("no feasible candidate".into()));
    }

    let minimax = weights.map(|w| {
        let mut best = f64::INFINITY;
        for_each(&mut |o| {
            let mut z = f64::NEG_INFINITY;
            for i in 0..4 {
                if w[i] > 0.0 {
                    z = z.max(w[i] * (o[i] - optima[i]) / normalizer(optima[i]));
                }
            }
            best = best.min(z);
        });
        best
    });

    Ok(OracleResult {
        optima,
        minimax,
        candidates,
        feasible,
    })
}
