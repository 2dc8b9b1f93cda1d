//! Stochastic inputs: weighted on-demand appliance scenarios obtained by
//! k-means over daily usage vectors, and PV scenarios from irradiance days.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{ApplianceCategory, PvPanel, TimeGrid};
use crate::error::ScenarioError;
use crate::ingest::{resample, IrradianceTraces, RawTraces};

/// Centroid max-shift below which Lloyd iterations stop.
pub const KMEANS_TOL: f64 = 1e-6;
pub const KMEANS_MAX_ITERS: usize = 300;

/// On-demand appliance scenarios with their probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceScenarioSet {
    /// `p[s][t]`, kW.
    pub p: Vec<Vec<f64>>,
    /// `q[s][t]`, kvar.
    pub q: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

impl ApplianceScenarioSet {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn num_slots(&self) -> usize {
        self.p.first().map_or(0, Vec::len)
    }

    /// A single certain scenario with zero on-demand load.
    pub fn empty(grid: &TimeGrid) -> Self {
        Self {
            p: vec![vec![0.0; grid.num_slots()]],
            q: vec![vec![0.0; grid.num_slots()]],
            rho: vec![1.0],
        }
    }

    /// Probability-weighted on-demand load per slot, (kW, kvar).
    pub fn expected(&self) -> (Vec<f64>, Vec<f64>) {
        let t_len = self.num_slots();
        let mut p = vec![0.0; t_len];
        let mut q = vec![0.0; t_len];
        for s in 0..self.len() {
            for t in 0..t_len {
                p[t] += self.rho[s] * self.p[s][t];
                q[t] += self.rho[s] * self.q[s][t];
            }
        }
        (p, q)
    }

    /// CSV with columns `scenario_id, rho, slot, p_kw, q_kvar`; slots are 1-based.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario_id", "rho", "slot", "p_kw", "q_kvar"])?;
        for s in 0..self.len() {
            for t in 0..self.num_slots() {
                w.write_record([
                    s.to_string(),
                    format!("{:.12}", self.rho[s]),
                    (t + 1).to_string(),
                    format!("{:.9}", self.p[s][t]),
                    format!("{:.9}", self.q[s][t]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewableScenarioSet {
    pub labels: Vec<String>,
    /// `p_g[s][t]`, kW available from the panel.
    pub p_g: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
}

impl RenewableScenarioSet {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    pub fn num_slots(&self) -> usize {
        self.p_g.first().map_or(0, Vec::len)
    }

    /// One scenario with no generation.
    pub fn none(grid: &TimeGrid) -> Self {
        Self {
            labels: vec!["none".into()],
            p_g: vec![vec![0.0; grid.num_slots()]],
            rho: vec![1.0],
        }
    }
}

/// PV output per slot: efficiency times panel area times irradiance.
pub fn irradiance_to_power(gti: &[f64], panel: &PvPanel) -> Vec<f64> {
    gti.iter()
        .map(|g| panel.efficiency * panel.area_m2 * g)
        .collect()
}

/// One equiprobable scenario per irradiance day, resampled onto `grid`.
pub fn build_renewable_scenarios(
    irr: &IrradianceTraces,
    panel: &PvPanel,
    grid: &TimeGrid,
) -> Result<RenewableScenarioSet, ScenarioError> {
    if irr.days.is_empty() {
        return Err(ScenarioError::NoDays);
    }
    let weight = 1.0 / irr.days.len() as f64;
    let mut p_g = Vec::with_capacity(irr.days.len());
    for day in &irr.days {
        let len = day.gti.len();
        if len % grid.num_slots() != 0 {
            return Err(ScenarioError::GridMismatch {
                len,
                slots: grid.num_slots(),
            });
        }
        let coarse = resample(&day.gti, len / grid.num_slots())?;
        p_g.push(irradiance_to_power(&coarse, panel));
    }
    Ok(RenewableScenarioSet {
        labels: irr.days.iter().map(|d| d.label.clone()).collect(),
        p_g,
        rho: vec![weight; irr.days.len()],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub centroids: Vec<Vec<f64>>,
    /// Centroid index of every input vector.
    pub assignments: Vec<usize>,
    pub sizes: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Inertia after every assignment step, starting with the initial one.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn nearest_centroid(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn assign(vectors: &[Vec<f64>], centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let nearest: Vec<(usize, f64)> = vectors
        .par_iter()
        .map(|v| nearest_centroid(v, centroids))
        .collect();
    let inertia = nearest.iter().map(|(_, d)| d).sum();
    (nearest.into_iter().map(|(j, _)| j).collect(), inertia)
}

/// Greedy farthest-point seeding from a random first centre.
fn farthest_point_init(vectors: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.gen_range(0..vectors.len());
    let mut centroids = vec![vectors[first].clone()];
    let mut min_dist: Vec<f64> = vectors
        .iter()
        .map(|v| sq_dist(v, &vectors[first]))
        .collect();
    while centroids.len() < k {
        let (next, _) =
            min_dist
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                });
        centroids.push(vectors[next].clone());
        for (i, v) in vectors.iter().enumerate() {
            min_dist[i] = min_dist[i].min(sq_dist(v, &vectors[next]));
        }
    }
    centroids
}

/// Lloyd's algorithm from a seeded farthest-point initialisation.
///
/// Every returned assignment is the nearest centroid of its vector. Iteration
/// stops when no assignment changes, when the largest centroid move drops
/// below `tol`, or after `max_iters` updates.
pub fn kmeans_cluster(
    vectors: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ClusteringResult, ScenarioError> {
    if k == 0 {
        return Err(ScenarioError::ZeroClusters);
    }
    if k > vectors.len() {
        return Err(ScenarioError::TooFewVectors {
            k,
            n: vectors.len(),
        });
    }
    let dim = vectors[0].len();
    if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
        return Err(ScenarioError::Ragged(dim, v.len()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = farthest_point_init(vectors, k, &mut rng);
    let (mut assignments, mut inertia) = assign(vectors, &centroids);
    let mut history = vec![inertia];
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (v, &j) in vectors.iter().zip(&assignments) {
            counts[j] += 1;
            for (s, x) in sums[j].iter_mut().zip(v) {
                *s += x;
            }
        }
        let mut updated: Vec<Vec<f64>> = sums
            .into_iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &n), old)| {
                if n == 0 {
                    old.clone()
                } else {
                    s.into_iter().map(|x| x / n as f64).collect()
                }
            })
            .collect();
        // Re-seed empty clusters with the point farthest from its centroid.
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far = vectors
                .iter()
                .zip(&assignments)
                .enumerate()
                .map(|(i, (v, &a))| (i, sq_dist(v, &updated[a])))
                .fold((0, f64::NEG_INFINITY), |best, (i, d)| {
                    if d > best.1 {
                        (i, d)
                    } else {
                        best
                    }
                });
            if far.1 > 0.0 {
                updated[j] = vectors[far.0].clone();
            }
        }
        let shift = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        let (next, next_inertia) = assign(vectors, &centroids);
        let changed = next != assignments;
        assignments = next;
        inertia = next_inertia;
        history.push(inertia);
        if !changed || shift < tol {
            break;
        }
    }

    let mut sizes = vec![0usize; k];
    for &j in &assignments {
        sizes[j] += 1;
    }
    Ok(ClusteringResult {
        centroids,
        assignments,
        sizes,
        inertia,
        inertia_history: history,
        iterations,
    })
}

/// Aggregated on-demand (P, Q) series of every complete day in `traces`.
pub fn on_demand_days(traces: &RawTraces) -> Vec<(Vec<f64>, Vec<f64>)> {
    let per_day = traces.rows_per_day();
    (0..traces.num_days())
        .map(|d| {
            let range = d * per_day..(d + 1) * per_day;
            let mut p = vec![0.0; per_day];
            let mut q = vec![0.0; per_day];
            for a in traces.of_category(ApplianceCategory::OnDemand) {
                for (i, r) in range.clone().enumerate() {
                    p[i] += a.p[r];
                    q[i] += a.q[r];
                }
            }
            (p, q)
        })
        .collect()
}

/// Reduces the daily on-demand usage in `traces` (already on the model grid)
/// to at most `k` weighted scenarios. Each day is one vector made of its
/// P series followed by its Q series; scenario weights are cluster shares.
pub fn build_appliance_scenarios(
    traces: &RawTraces,
    grid: &TimeGrid,
    k: usize,
    seed: u64,
) -> Result<(ApplianceScenarioSet, ClusteringResult), ScenarioError> {
    let per_day = traces.rows_per_day();
    if per_day != grid.num_slots() {
        return Err(ScenarioError::GridMismatch {
            len: per_day,
            slots: grid.num_slots(),
        });
    }
    let days = on_demand_days(traces);
    let vectors: Vec<Vec<f64>> = days
        .into_iter()
        .map(|(mut p, q)| {
            p.extend(q);
            p
        })
        .collect();
    let clustering = kmeans_cluster(&vectors, k, seed, KMEANS_MAX_ITERS, KMEANS_TOL)?;
    let total = vectors.len() as f64;
    let mut set = ApplianceScenarioSet {
        p: Vec::new(),
        q: Vec::new(),
        rho: Vec::new(),
    };
    for (centroid, &size) in clustering.centroids.iter().zip(&clustering.sizes) {
        if size == 0 {
            continue;
        }
        set.p.push(centroid[..per_day].to_vec());
        set.q.push(centroid[per_day..].to_vec());
        set.rho.push(size as f64 / total);
    }
    Ok((set, clustering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_time_grid;
    use crate::ingest::{ApplianceTrace, IrradianceDay};
    use proptest::prelude::*;

    #[test]
    fn pv_conversion() {
        let panel = PvPanel {
            efficiency: 0.2,
            area_m2: 10.0,
        };
        assert!((irradiance_to_power(&[0.5], &panel)[0] - 1.0).abs() < 1e-15);
        assert_eq!(irradiance_to_power(&[0.0; 4], &panel), vec![0.0; 4]);
        let panel = PvPanel {
            efficiency: 0.15,
            area_m2: 20.0,
        };
        let p = irradiance_to_power(&[0.1, 0.8], &panel);
        assert!((p[0] - 0.3).abs() < 1e-12 && (p[1] - 2.4).abs() < 1e-12);
    }

    fn irr(days: usize, value: f64) -> IrradianceTraces {
        IrradianceTraces {
            step_minutes: 1,
            days: (0..days)
                .map(|d| IrradianceDay {
                    label: format!("d{d}"),
                    gti: vec![value; 1440],
                })
                .collect(),
        }
    }

    #[test]
    fn renewable_weights_uniform() {
        let grid = build_time_grid(15, 24).unwrap();
        let panel = PvPanel {
            efficiency: 0.2,
            area_m2: 10.0,
        };
        let set = build_renewable_scenarios(&irr(4, 0.5), &panel, &grid).unwrap();
        assert_eq!(set.len(), 4);
        assert!(set.rho.iter().all(|&r| r == 0.25));
        assert_eq!(set.num_slots(), 96);
        assert!((set.p_g[0][10] - 1.0).abs() < 1e-12);

        let one = build_renewable_scenarios(&irr(1, 0.5), &panel, &grid).unwrap();
        assert_eq!(one.rho, vec![1.0]);
        let two = build_renewable_scenarios(&irr(2, 0.3), &panel, &grid).unwrap();
        assert_eq!(two.rho, vec![0.5, 0.5]);
        assert_eq!(two.p_g[0], two.p_g[1]);
        assert!(build_renewable_scenarios(&irr(0, 0.3), &panel, &grid).is_err());
    }

    #[test]
    fn kmeans_symmetric_pairs() {
        let v = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        let r = kmeans_cluster(&v, 2, 7, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        let mut cents: Vec<f64> = r.centroids.iter().map(|c| c[0]).collect();
        cents.sort_by(f64::total_cmp);
        assert!((cents[0] - 0.05).abs() < 1e-12);
        assert!((cents[1] - 10.05).abs() < 1e-12);
        assert_eq!(r.sizes, vec![2, 2]);
    }

    #[test]
    fn kmeans_k_equals_n() {
        let v: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let r = kmeans_cluster(&v, 6, 3, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
        assert_eq!(r.inertia, 0.0);
        assert!(r.sizes.iter().all(|&s| s == 1));
        assert!(matches!(
            kmeans_cluster(&v, 7, 3, 10, 1e-6),
            Err(ScenarioError::TooFewVectors { k: 7, n: 6 })
        ));
    }

    fn od_traces(days: &[(f64, f64)]) -> RawTraces {
        let per_day = 4;
        let n = days.len() * per_day;
        let p: Vec<f64> = days.iter().flat_map(|(p, _)| vec![*p; per_day]).collect();
        let q: Vec<f64> = days.iter().flat_map(|(_, q)| vec![*q; per_day]).collect();
        RawTraces {
            step_minutes: 360,
            timestamps: (0..n as i64).map(|i| i * 360).collect(),
            appliances: vec![ApplianceTrace {
                id: "kettle".into(),
                category: ApplianceCategory::OnDemand,
                p,
                q: q.clone(),
            }],
        }
    }

    #[test]
    fn identical_days_collapse() {
        let grid = build_time_grid(360, 24).unwrap();
        let traces = od_traces(&[(1.0, 0.2); 5]);
        let (set, _) = build_appliance_scenarios(&traces, &grid, 3, 11).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.rho, vec![1.0]);
        assert_eq!(set.p[0], vec![1.0; 4]);
        assert_eq!(set.q[0], vec![0.2; 4]);
    }

    #[test]
    fn empty_pool_gives_zero_scenario() {
        let grid = build_time_grid(360, 24).unwrap();
        let mut traces = od_traces(&[(0.0, 0.0); 3]);
        traces.appliances[0].category = ApplianceCategory::SafetyCritical;
        let (set, _) = build_appliance_scenarios(&traces, &grid, 2, 1).unwrap();
        assert_eq!(set.rho, vec![1.0]);
        assert!(set.p[0].iter().all(|&v| v == 0.0));
    }

    /// Brute-force minimum-inertia 2-partition of a small set of vectors.
    fn best_two_partition(v: &[Vec<f64>]) -> (f64, Vec<Vec<f64>>) {
        let n = v.len();
        let mut best = (f64::INFINITY, Vec::new());
        for mask in 1..(1u32 << n) - 1 {
            let groups: Vec<Vec<&Vec<f64>>> = (0..2)
                .map(|g| {
                    (0..n)
                        .filter(|i| ((mask >> i) & 1) as usize == g)
                        .map(|i| &v[i])
                        .collect()
                })
                .collect();
            let mut cost = 0.0;
            let mut means = Vec::new();
            for g in &groups {
                let dim = g[0].len();
                let mean: Vec<f64> = (0..dim)
                    .map(|d| g.iter().map(|x| x[d]).sum::<f64>() / g.len() as f64)
                    .collect();
                cost += g.iter().map(|x| sq_dist(x, &mean)).sum::<f64>();
                means.push(mean);
            }
            if cost < best.0 {
                best = (cost, means);
            }
        }
        best
    }

    #[test]
    fn two_pairs_match_brute_force() {
        let grid = build_time_grid(360, 24).unwrap();
        let traces = od_traces(&[(0.5, 0.1), (0.6, 0.1), (3.0, 1.0), (3.2, 1.1)]);
        let (set, clustering) = build_appliance_scenarios(&traces, &grid, 2, 5).unwrap();
        let vectors: Vec<Vec<f64>> = on_demand_days(&traces)
            .into_iter()
            .map(|(mut p, q)| {
                p.extend(q);
                p
            })
            .collect();
        let (best_cost, mut best_means) = best_two_partition(&vectors);
        assert!((clustering.inertia - best_cost).abs() < 1e-9);
        assert_eq!(set.rho, vec![0.5, 0.5]);
        let mut got = clustering.centroids.clone();
        got.sort_by(|a, b| a[0].total_cmp(&b[0]));
        best_means.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (g, b) in got.iter().zip(&best_means) {
            assert!(sq_dist(g, b) < 1e-18);
        }
    }

    #[test]
    fn weights_match_empirical_mean_when_k_is_days() {
        let grid = build_time_grid(360, 24).unwrap();
        let days = [(0.5, 0.1), (0.9, 0.3), (3.0, 1.0), (1.7, 0.4)];
        let traces = od_traces(&days);
        let (set, _) = build_appliance_scenarios(&traces, &grid, 4, 2).unwrap();
        let (p, q) = set.expected();
        let mean_p = days.iter().map(|d| d.0).sum::<f64>() / 4.0;
        let mean_q = days.iter().map(|d| d.1).sum::<f64>() / 4.0;
        assert!(p.iter().all(|v| (v - mean_p).abs() < 1e-12));
        assert!(q.iter().all(|v| (v - mean_q).abs() < 1e-12));
    }

    proptest! {
        #[test]
        fn pv_conversion_is_linear(
            x in prop::collection::vec(0.0f64..1.2, 8),
            y in prop::collection::vec(0.0f64..1.2, 8),
            a in 0.0f64..3.0,
            b in 0.0f64..3.0,
        ) {
            let panel = PvPanel { efficiency: 0.17, area_m2: 12.5 };
            let mixed: Vec<f64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
            let lhs = irradiance_to_power(&mixed, &panel);
            let fx = irradiance_to_power(&x, &panel);
            let fy = irradiance_to_power(&y, &panel);
            for i in 0..8 {
                prop_assert!((lhs[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn kmeans_fixed_point_and_monotone(
            pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 6..40),
            k in 1usize..6,
            seed in any::<u64>(),
        ) {
            prop_assume!(k <= pts.len());
            let r = kmeans_cluster(&pts, k, seed, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
            for (p, &a) in pts.iter().zip(&r.assignments) {
                let (best, d) = nearest_centroid(p, &r.centroids);
                prop_assert!(sq_dist(p, &r.centroids[a]) <= d + 1e-12);
                prop_assert_eq!(best, a);
            }
            for w in r.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            prop_assert_eq!(r.sizes.iter().sum::<usize>(), pts.len());
            let again = kmeans_cluster(&pts, k, seed, KMEANS_MAX_ITERS, KMEANS_TOL).unwrap();
            prop_assert_eq!(again, r);
        }
    }
}
