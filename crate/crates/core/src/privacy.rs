//! Empirical mutual information between metered and actual load series.
//!
//! Series are quantised into symbols and MI is the plug-in estimate over the
//! joint histogram, treating slots as independent samples. Values are in bits.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::PrivacyError;

pub const DEFAULT_BINS: usize = 64;

/// Series whose observed range is at most this wide are one symbol. Keeps
/// solver round-off on a flat profile from being spread over every bin.
pub const DEFAULT_MIN_RANGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizerMode {
    FixedWidth,
    Quantile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub mode: QuantizerMode,
    pub bins: usize,
    pub min_range: f64,
}

impl Default for QuantizerSpec {
    fn default() -> Self {
        Self {
            mode: QuantizerMode::FixedWidth,
            bins: DEFAULT_BINS,
            min_range: DEFAULT_MIN_RANGE,
        }
    }
}

impl QuantizerSpec {
    pub fn fixed_width(bins: usize) -> Self {
        Self {
            bins,
            ..Self::default()
        }
    }

    pub fn quantile(bins: usize) -> Self {
        Self {
            mode: QuantizerMode::Quantile,
            bins,
            ..Self::default()
        }
    }
}

/// Maps a series to bin indices over its own observed range.
pub fn quantize(series: &[f64], spec: &QuantizerSpec) -> Result<Vec<u32>, PrivacyError> {
    if spec.bins < 2 {
        return Err(PrivacyError::Bins(spec.bins));
    }
    if series.is_empty() {
        return Err(PrivacyError::Empty);
    }
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if hi - lo <= spec.min_range {
        return Ok(vec![0; series.len()]);
    }
    let top = (spec.bins - 1) as u32;
    match spec.mode {
        QuantizerMode::FixedWidth => {
            let width = (hi - lo) / spec.bins as f64;
            Ok(series
                .iter()
                .map(|&x| (((x - lo) / width).floor() as u32).min(top))
                .collect())
        }
        QuantizerMode::Quantile => {
            // Bin = floor(rank * bins / n), ties sharing their lowest rank.
            let mut sorted = series.to_vec();
            sorted.sort_by(f64::total_cmp);
            let n = series.len();
            Ok(series
                .iter()
                .map(|x| {
                    let rank = sorted.partition_point(|s| s < x);
                    ((rank * spec.bins / n) as u32).min(top)
                })
                .collect())
        }
    }
}

fn counts<K: Ord + Copy>(items: impl Iterator<Item = K>) -> BTreeMap<K, u64> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Shannon entropy of the symbol distribution, bits.
pub fn entropy(symbols: &[u32]) -> f64 {
    let n = symbols.len() as f64;
    counts(symbols.iter().copied())
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Plug-in MI of a joint histogram given as `(x, y) -> count`.
pub fn mi_from_joint_counts(joint: &BTreeMap<(u32, u32), u64>) -> f64 {
    let n: u64 = joint.values().sum();
    if n == 0 {
        return 0.0;
    }
    let mut px: BTreeMap<u32, u64> = BTreeMap::new();
    let mut py: BTreeMap<u32, u64> = BTreeMap::new();
    for (&(a, b), &c) in joint {
        *px.entry(a).or_insert(0) += c;
        *py.entry(b).or_insert(0) += c;
    }
    let n = n as f64;
    let mi: f64 = joint
        .iter()
        .filter(|(_, &c)| c > 0)
        .map(|(&(a, b), &c)| {
            let pab = c as f64 / n;
            pab * (c as f64 * n / (px[&a] as f64 * py[&b] as f64)).log2()
        })
        .sum();
    mi.max(0.0)
}

/// Plug-in estimate of I(X; Y) from paired symbol series.
pub fn empirical_mi(x: &[u32], y: &[u32]) -> Result<f64, PrivacyError> {
    if x.len() != y.len() {
        return Err(PrivacyError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(PrivacyError::Empty);
    }
    // Build the histogram with a canonical pair order so I(X;Y) and I(Y;X)
    // accumulate the same terms in the same order.
    let swap = x > y;
    let joint = if swap {
        counts(y.iter().zip(x).map(|(&a, &b)| (a, b)))
    } else {
        counts(x.iter().zip(y).map(|(&a, &b)| (a, b)))
    };
    Ok(mi_from_joint_counts(&joint))
}

/// MI between two real-valued series after quantising each.
pub fn series_mi(x: &[f64], y: &[f64], spec: &QuantizerSpec) -> Result<f64, PrivacyError> {
    if x.len() != y.len() {
        return Err(PrivacyError::LengthMismatch(x.len(), y.len()));
    }
    empirical_mi(&quantize(x, spec)?, &quantize(y, spec)?)
}

/// What the household actually consumed: the aggregate and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActualSeries {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// `(id, p, q)` per appliance.
    pub appliances: Vec<(String, Vec<f64>, Vec<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub case: usize,
    pub aggregate_p: f64,
    pub aggregate_q: f64,
    /// `(id, MI_P, MI_Q)` per appliance.
    pub appliances: Vec<(String, f64, f64)>,
}

impl MiReport {
    pub fn aggregate_total(&self) -> f64 {
        self.aggregate_p + self.aggregate_q
    }

    fn avg(&self, f: impl Fn(&(String, f64, f64)) -> f64) -> f64 {
        if self.appliances.is_empty() {
            0.0
        } else {
            self.appliances.iter().map(f).sum::<f64>() / self.appliances.len() as f64
        }
    }

    pub fn appliance_avg_p(&self) -> f64 {
        self.avg(|a| a.1)
    }

    pub fn appliance_avg_q(&self) -> f64 {
        self.avg(|a| a.2)
    }

    pub fn appliance_avg_total(&self) -> f64 {
        self.appliance_avg_p() + self.appliance_avg_q()
    }

    /// Rows of the `case, channel, scope, mi_bits` table.
    pub fn rows(&self) -> Vec<(usize, &'static str, String, f64)> {
        let mut rows = vec![
            (self.case, "P", "aggregate".to_string(), self.aggregate_p),
            (self.case, "Q", "aggregate".to_string(), self.aggregate_q),
            (
                self.case,
                "total",
                "aggregate".to_string(),
                self.aggregate_total(),
            ),
        ];
        for (id, p, q) in &self.appliances {
            rows.push((self.case, "P", id.clone(), *p));
            rows.push((self.case, "Q", id.clone(), *q));
            rows.push((self.case, "total", id.clone(), p + q));
        }
        if !self.appliances.is_empty() {
            rows.push((
                self.case,
                "P",
                "appliance_avg".to_string(),
                self.appliance_avg_p(),
            ));
            rows.push((
                self.case,
                "Q",
                "appliance_avg".to_string(),
                self.appliance_avg_q(),
            ));
            rows.push((
                self.case,
                "total",
                "appliance_avg".to_string(),
                self.appliance_avg_total(),
            ));
        }
        rows
    }
}

/// MI of the metered series `(pm, qm)` against the actual aggregate and
/// against each appliance.
pub fn evaluate_case_privacy(
    case: usize,
    pm: &[f64],
    qm: &[f64],
    actual: &ActualSeries,
    spec: &QuantizerSpec,
) -> Result<MiReport, PrivacyError> {
    let qpm = quantize(pm, spec)?;
    let qqm = quantize(qm, spec)?;
    let against = |series: &[f64], metered: &[u32]| -> Result<f64, PrivacyError> {
        if series.len() != metered.len() {
            return Err(PrivacyError::LengthMismatch(series.len(), metered.len()));
        }
        empirical_mi(&quantize(series, spec)?, metered)
    };
    let aggregate_p = against(&actual.p, &qpm)?;
    let aggregate_q = against(&actual.q, &qqm)?;
    let appliances = actual
        .appliances
        .iter()
        .map(|(id, p, q)| Ok((id.clone(), against(p, &qpm)?, against(q, &qqm)?)))
        .collect::<Result<Vec<_>, PrivacyError>>()?;
    Ok(MiReport {
        case,
        aggregate_p,
        aggregate_q,
        appliances,
    })
}

pub fn write_mi_csv<W: Write>(reports: &[MiReport], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "channel", "scope", "mi_bits"])?;
    for r in reports {
        for (case, channel, scope, mi) in r.rows() {
            w.write_record([
                case.to_string(),
                channel.to_string(),
                scope,
                format!("{mi:.12}"),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_width_midpoint_split() {
        let s = quantize(&[0.0, 1.0, 2.0, 3.0], &QuantizerSpec::fixed_width(2)).unwrap();
        assert_eq!(s, vec![0, 0, 1, 1]);
    }

    #[test]
    fn constant_series_is_one_symbol() {
        for spec in [QuantizerSpec::fixed_width(8), QuantizerSpec::quantile(8)] {
            let s = quantize(&[2.5; 10], &spec).unwrap();
            assert!(s.iter().all(|&x| x == 0));
            assert_eq!(entropy(&s), 0.0);
        }
    }

    #[test]
    fn quantile_follows_rank() {
        let s = quantize(&[4.0, 1.0, 3.0, 2.0], &QuantizerSpec::quantile(4)).unwrap();
        assert_eq!(s, vec![3, 0, 2, 1]);
    }

    #[test]
    fn round_off_below_min_range_is_flat() {
        let s = quantize(&[2.0, 2.0 + 1e-10, 2.0 - 3e-10], &QuantizerSpec::default()).unwrap();
        assert_eq!(s, vec![0, 0, 0]);
    }

    #[test]
    fn bad_inputs() {
        assert!(matches!(
            quantize(&[], &QuantizerSpec::default()),
            Err(PrivacyError::Empty)
        ));
        assert!(matches!(
            quantize(&[1.0], &QuantizerSpec::fixed_width(1)),
            Err(PrivacyError::Bins(1))
        ));
        assert!(matches!(
            empirical_mi(&[0, 1], &[0]),
            Err(PrivacyError::LengthMismatch(2, 1))
        ));
    }

    #[test]
    fn identical_binary_is_one_bit() {
        let x: Vec<u32> = (0..1000).map(|i| i % 2).collect();
        assert!((empirical_mi(&x, &x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_partner_gives_zero() {
        let x: Vec<u32> = (0..400).map(|i| i % 4).collect();
        assert_eq!(empirical_mi(&x, &vec![7; 400]).unwrap(), 0.0);
    }

    #[test]
    fn small_histogram_by_hand() {
        // Counts (0,0):2 (0,1):1 (1,0):1 (1,1):4, N = 8.
        let x = [0, 0, 0, 1, 1, 1, 1, 1];
        let y = [0, 0, 1, 0, 1, 1, 1, 1];
        let want = 2.0 / 8.0 * (2.0f64 * 8.0 / (3.0 * 3.0)).log2()
            + 1.0 / 8.0 * (1.0f64 * 8.0 / (3.0 * 5.0)).log2()
            + 1.0 / 8.0 * (1.0f64 * 8.0 / (5.0 * 3.0)).log2()
            + 4.0 / 8.0 * (4.0f64 * 8.0 / (5.0 * 5.0)).log2();
        assert!((empirical_mi(&x, &y).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn metered_flat_hides_everything() {
        let actual = ActualSeries {
            p: (0..96).map(|t| (t % 7) as f64).collect(),
            q: (0..96).map(|t| (t % 5) as f64).collect(),
            appliances: vec![(
                "x".into(),
                (0..96).map(|t| (t % 3) as f64).collect(),
                vec![0.0; 96],
            )],
        };
        let r = evaluate_case_privacy(
            1,
            &[3.0; 96],
            &[1.0; 96],
            &actual,
            &QuantizerSpec::default(),
        )
        .unwrap();
        assert_eq!(r.aggregate_total(), 0.0);
        assert_eq!(r.appliance_avg_total(), 0.0);
    }

    #[test]
    fn unshaped_case_reaches_entropy() {
        let p: Vec<f64> = (0..96).map(|t| ((t * 37) % 11) as f64).collect();
        let actual = ActualSeries {
            p: p.clone(),
            q: p.clone(),
            appliances: Vec::new(),
        };
        let spec = QuantizerSpec::default();
        let r = evaluate_case_privacy(0, &p, &p, &actual, &spec).unwrap();
        let h = entropy(&quantize(&p, &spec).unwrap());
        assert!((r.aggregate_p - h).abs() < 1e-12);
        assert_eq!(r.rows().len(), 3);
    }

    #[test]
    fn csv_layout() {
        let r = MiReport {
            case: 2,
            aggregate_p: 1.0,
            aggregate_q: 0.5,
            appliances: vec![("ev".into(), 0.25, 0.0)],
        };
        let mut buf = Vec::new();
        write_mi_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "case,channel,scope,mi_bits");
        assert_eq!(lines[3], "2,total,aggregate,1.500000000000");
        assert_eq!(lines.len(), 1 + 3 + 3 + 3);
    }

    proptest! {
        #[test]
        fn mi_symmetric_and_bounded(pairs in prop::collection::vec((0u32..6, 0u32..4), 1..200)) {
            let x: Vec<u32> = pairs.iter().map(|p| p.0).collect();
            let y: Vec<u32> = pairs.iter().map(|p| p.1).collect();
            let xy = empirical_mi(&x, &y).unwrap();
            prop_assert_eq!(xy, empirical_mi(&y, &x).unwrap());
            prop_assert!(xy >= 0.0);
            prop_assert!(xy <= entropy(&x).min(entropy(&y)) + 1e-12);
        }

        #[test]
        fn mi_invariant_under_shared_permutation(
            pairs in prop::collection::vec((0u32..5, 0u32..5), 2..100),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = pairs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let split = |v: &[(u32, u32)]| -> (Vec<u32>, Vec<u32>) { v.iter().copied().unzip() };
            let (x, y) = split(&pairs);
            let (xs, ys) = split(&shuffled);
            let a = empirical_mi(&x, &y).unwrap();
            let b = empirical_mi(&xs, &ys).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn quantizer_deterministic(series in prop::collection::vec(-50.0f64..50.0, 1..100), bins in 2usize..80) {
            for spec in [QuantizerSpec::fixed_width(bins), QuantizerSpec::quantile(bins)] {
                let a = quantize(&series, &spec).unwrap();
                prop_assert_eq!(&a, &quantize(&series, &spec).unwrap());
                prop_assert!(a.iter().all(|&s| (s as usize) < bins));
            }
        }
    }
}
