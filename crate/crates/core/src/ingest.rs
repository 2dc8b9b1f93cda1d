//! Appliance and irradiance trace ingestion, resampling and day extraction.

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::domain::{ApplianceCategory, BaselineProfiles};
use crate::error::IngestError;

pub const MINUTES_PER_DAY: u32 = 1440;

/// Real and reactive power of one appliance over the whole trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplianceTrace {
    pub id: String,
    pub category: ApplianceCategory,
    /// kW per row.
    pub p: Vec<f64>,
    /// kvar per row.
    pub q: Vec<f64>,
}

/// Contiguous appliance-level traces on a constant time step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTraces {
    pub step_minutes: u32,
    /// Minute index (or minutes since the Unix epoch) of every row.
    pub timestamps: Vec<i64>,
    pub appliances: Vec<ApplianceTrace>,
}

impl RawTraces {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn rows_per_day(&self) -> usize {
        (MINUTES_PER_DAY / self.step_minutes) as usize
    }

    /// Number of complete days held by the traces.
    pub fn num_days(&self) -> usize {
        self.len() / self.rows_per_day()
    }

    pub fn of_category(
        &self,
        category: ApplianceCategory,
    ) -> impl Iterator<Item = &ApplianceTrace> {
        self.appliances
            .iter()
            .filter(move |a| a.category == category)
    }

    /// Averages every series over bins of `factor` rows.
    pub fn resample(&self, factor: usize) -> Result<RawTraces, IngestError> {
        let step = self.step_minutes as usize * factor;
        if factor == 0 || !(MINUTES_PER_DAY as usize).is_multiple_of(step) {
            return Err(IngestError::Resample {
                factor,
                len: self.len(),
            });
        }
        let appliances = self
            .appliances
            .iter()
            .map(|a| {
                Ok(ApplianceTrace {
                    id: a.id.clone(),
                    category: a.category,
                    p: resample(&a.p, factor)?,
                    q: resample(&a.q, factor)?,
                })
            })
            .collect::<Result<Vec<_>, IngestError>>()?;
        Ok(RawTraces {
            step_minutes: step as u32,
            timestamps: self.timestamps.iter().step_by(factor).copied().collect(),
            appliances,
        })
    }

    /// Resamples to the requested slot length, if it is a multiple of the step.
    pub fn to_step(&self, slot_minutes: u32) -> Result<RawTraces, IngestError> {
        if slot_minutes == self.step_minutes {
            return Ok(self.clone());
        }
        if !slot_minutes.is_multiple_of(self.step_minutes) {
            return Err(IngestError::Shape(format!(
                "cannot resample {}-minute traces to {slot_minutes}-minute slots",
                self.step_minutes
            )));
        }
        self.resample((slot_minutes / self.step_minutes) as usize)
    }
}

/// Column layout of a household trace file: `timestamp`, then
/// `<id>_P_kw` / `<id>_Q_kvar` for every listed appliance.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSchema {
    pub timestamp_column: String,
    pub appliances: Vec<(String, ApplianceCategory)>,
}

impl TraceSchema {
    pub fn new(appliances: Vec<(String, ApplianceCategory)>) -> Self {
        Self {
            timestamp_column: "timestamp".into(),
            appliances,
        }
    }

    pub fn p_column(id: &str) -> String {
        format!("{id}_P_kw")
    }

    pub fn q_column(id: &str) -> String {
        format!("{id}_Q_kvar")
    }
}

fn parse_timestamp(raw: &str) -> Option<i64> {
    let raw = raw.trim();
    if let Ok(minute) = raw.parse::<i64>() {
        return Some(minute);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.timestamp().div_euclid(60));
    }
    [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|fmt| NaiveDateTime::parse_from_str(raw, fmt).ok())
    .map(|dt| dt.and_utc().timestamp().div_euclid(60))
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn parse_value(
    record: &csv::StringRecord,
    idx: usize,
    row: usize,
    column: &str,
) -> Result<f64, IngestError> {
    let raw = record.get(idx).unwrap_or("");
    if raw.is_empty() {
        return Err(IngestError::Parse {
            row,
            column: column.to_string(),
            message: "missing value".into(),
        });
    }
    raw.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| IngestError::Parse {
            row,
            column: column.to_string(),
            message: format!("not a number: '{raw}'"),
        })
}

fn check_step(timestamps: &[i64]) -> Result<u32, IngestError> {
    if timestamps.len() < 2 {
        return Ok(1);
    }
    let step = timestamps[1] - timestamps[0];
    if step <= 0 {
        return Err(IngestError::Timestamps(
            "timestamps must be strictly increasing".into(),
        ));
    }
    if let Some(i) = timestamps.windows(2).position(|w| w[1] - w[0] != step) {
        return Err(IngestError::Timestamps(format!(
            "step changes at row {} (expected {step} min)",
            i + 2
        )));
    }
    if MINUTES_PER_DAY as i64 % step != 0 {
        return Err(IngestError::Timestamps(format!(
            "a {step}-minute step does not divide a day"
        )));
    }
    Ok(step as u32)
}

/// Loads a household trace CSV. Rows are numbered from 1, header excluded.
pub fn load_household_csv(path: &Path, schema: &TraceSchema) -> Result<RawTraces, IngestError> {
    let mut reader = open_csv(path)?;
    let csv_err = |source| IngestError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    let ts_idx = column_index(&headers, &schema.timestamp_column)?;
    let mut columns = Vec::with_capacity(schema.appliances.len());
    for (id, _) in &schema.appliances {
        let p_name = TraceSchema::p_column(id);
        let q_name = TraceSchema::q_column(id);
        columns.push((
            column_index(&headers, &p_name)?,
            p_name,
            column_index(&headers, &q_name)?,
            q_name,
        ));
    }

    let mut timestamps = Vec::new();
    let mut p: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    let mut q: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(IngestError::Parse {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let raw_ts = record.get(ts_idx).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| IngestError::Parse {
            row,
            column: schema.timestamp_column.clone(),
            message: format!("malformed timestamp '{raw_ts}'"),
        })?;
        timestamps.push(ts);
        for (j, (p_idx, p_name, q_idx, q_name)) in columns.iter().enumerate() {
            let pv = parse_value(&record, *p_idx, row, p_name)?;
            if pv < 0.0 {
                return Err(IngestError::NegativePower {
                    row,
                    column: p_name.clone(),
                });
            }
            let qv = parse_value(&record, *q_idx, row, q_name)?;
            if qv < 0.0 {
                return Err(IngestError::NegativePower {
                    row,
                    column: q_name.clone(),
                });
            }
            p[j].push(pv);
            q[j].push(qv);
        }
    }
    let step_minutes = check_step(&timestamps)?;
    let appliances = schema
        .appliances
        .iter()
        .zip(p.into_iter().zip(q))
        .map(|((id, category), (p, q))| ApplianceTrace {
            id: id.clone(),
            category: *category,
            p,
            q,
        })
        .collect();
    Ok(RawTraces {
        step_minutes,
        timestamps,
        appliances,
    })
}

/// Writes traces in the layout read by [`load_household_csv`], with integer
/// minute timestamps.
pub fn write_household_csv<W: std::io::Write>(
    traces: &RawTraces,
    out: W,
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["timestamp".to_string()];
    for a in &traces.appliances {
        header.push(TraceSchema::p_column(&a.id));
        header.push(TraceSchema::q_column(&a.id));
    }
    writer.write_record(&header)?;
    let mut row = Vec::with_capacity(header.len());
    for (i, ts) in traces.timestamps.iter().enumerate() {
        row.clear();
        row.push(ts.to_string());
        for a in &traces.appliances {
            row.push(format_kw(a.p[i]));
            row.push(format_kw(a.q[i]));
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

fn format_kw(v: f64) -> String {
    // Round-trippable yet compact; synthetic data is generated on a 1e-6 grid.
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".into()
    } else {
        s.to_string()
    }
}

/// Per-day global tilted irradiance, kW/m².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrradianceTraces {
    pub step_minutes: u32,
    pub days: Vec<IrradianceDay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrradianceDay {
    pub label: String,
    pub gti: Vec<f64>,
}

/// Loads an irradiance CSV: a `minute` column, then one `GTI_<day>` column per day.
pub fn load_irradiance_csv(path: &Path) -> Result<IrradianceTraces, IngestError> {
    let mut reader = open_csv(path)?;
    let headers = reader
        .headers()
        .map_err(|source| IngestError::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .clone();
    let minute_idx = column_index(&headers, "minute")?;
    let day_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.strip_prefix("GTI_").map(|label| (i, label.to_string())))
        .collect();
    if day_cols.is_empty() {
        return Err(IngestError::MissingColumn("GTI_<day>".into()));
    }
    let mut minutes = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); day_cols.len()];
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| IngestError::Parse {
            row,
            column: String::new(),
            message: e.to_string(),
        })?;
        let minute = parse_value(&record, minute_idx, row, "minute")?;
        minutes.push(minute as i64);
        for (j, (idx, label)) in day_cols.iter().enumerate() {
            let column = format!("GTI_{label}");
            let v = parse_value(&record, *idx, row, &column)?;
            if v < 0.0 {
                return Err(IngestError::NegativeIrradiance { row, column });
            }
            series[j].push(v);
        }
    }
    let step_minutes = check_step(&minutes)?;
    Ok(IrradianceTraces {
        step_minutes,
        days: day_cols
            .into_iter()
            .zip(series)
            .map(|((_, label), gti)| IrradianceDay { label, gti })
            .collect(),
    })
}

pub fn write_irradiance_csv<W: std::io::Write>(
    irr: &IrradianceTraces,
    out: W,
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = vec!["minute".to_string()];
    header.extend(irr.days.iter().map(|d| format!("GTI_{}", d.label)));
    writer.write_record(&header)?;
    let len = irr.days.first().map_or(0, |d| d.gti.len());
    for i in 0..len {
        let mut row = vec![(i as u64 * u64::from(irr.step_minutes)).to_string()];
        row.extend(irr.days.iter().map(|d| format_kw(d.gti[i])));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Bin means over consecutive groups of `factor` samples. Power is averaged,
/// so energy per bin is preserved.
pub fn resample(series: &[f64], factor: usize) -> Result<Vec<f64>, IngestError> {
    if factor == 0 || !series.len().is_multiple_of(factor) {
        return Err(IngestError::Resample {
            factor,
            len: series.len(),
        });
    }
    Ok(series
        .chunks_exact(factor)
        .map(|bin| bin.iter().sum::<f64>() / factor as f64)
        .collect())
}

/// One day of traces on the trace step, split by appliance category.
#[derive(Debug, Clone, PartialEq)]
pub struct DayProfiles {
    pub day_index: usize,
    pub step_minutes: u32,
    /// Summed safety-critical load per slot.
    pub baseline: BaselineProfiles,
    pub safety_critical: Vec<ApplianceTrace>,
    pub on_demand: Vec<ApplianceTrace>,
    /// Observed behaviour of the shiftable appliances on that day.
    pub shiftable: Vec<ApplianceTrace>,
}

impl DayProfiles {
    pub fn num_slots(&self) -> usize {
        self.baseline.p_sc.len()
    }

    pub fn shiftable_by_id(&self) -> HashMap<&str, &ApplianceTrace> {
        self.shiftable.iter().map(|a| (a.id.as_str(), a)).collect()
    }
}

/// Slices day `day_index` (0-based, counted from the first row).
pub fn extract_day(traces: &RawTraces, day_index: usize) -> Result<DayProfiles, IngestError> {
    let per_day = traces.rows_per_day();
    let days = traces.num_days();
    if day_index >= days {
        return Err(IngestError::PartialDay {
            day: day_index,
            days,
        });
    }
    let range = day_index * per_day..(day_index + 1) * per_day;
    let slice = |a: &ApplianceTrace| ApplianceTrace {
        id: a.id.clone(),
        category: a.category,
        p: a.p[range.clone()].to_vec(),
        q: a.q[range.clone()].to_vec(),
    };
    let mut baseline = BaselineProfiles {
        p_sc: vec![0.0; per_day],
        q_sc: vec![0.0; per_day],
    };
    let mut safety_critical = Vec::new();
    let mut on_demand = Vec::new();
    let mut shiftable = Vec::new();
    for a in &traces.appliances {
        let day = slice(a);
        match a.category {
            ApplianceCategory::SafetyCritical => {
                for t in 0..per_day {
                    baseline.p_sc[t] += day.p[t];
                    baseline.q_sc[t] += day.q[t];
                }
                safety_critical.push(day);
            }
            ApplianceCategory::OnDemand => on_demand.push(day),
            ApplianceCategory::TimeShiftable | ApplianceCategory::PowerAndTimeShiftable => {
                shiftable.push(day)
            }
        }
    }
    Ok(DayProfiles {
        day_index,
        step_minutes: traces.step_minutes,
        baseline,
        safety_critical,
        on_demand,
        shiftable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    fn schema() -> TraceSchema {
        TraceSchema::new(vec![("fridge".into(), ApplianceCategory::SafetyCritical)])
    }

    #[test]
    fn loads_three_rows() {
        let f =
            write_tmp("timestamp,fridge_P_kw,fridge_Q_kvar\n0,0.1,0.05\n1,0.2,0.05\n2,0.1,0.0\n");
        let traces = load_household_csv(f.path(), &schema()).unwrap();
        assert_eq!(traces.len(), 3);
        assert_eq!(traces.appliances[0].p, vec![0.1, 0.2, 0.1]);
        assert_eq!(traces.step_minutes, 1);
    }

    #[test]
    fn iso_timestamps_accepted() {
        let f = write_tmp(
            "timestamp,fridge_P_kw,fridge_Q_kvar\n2012-12-19T00:00:00,0.1,0\n2012-12-19T00:01:00,0.1,0\n",
        );
        let traces = load_household_csv(f.path(), &schema()).unwrap();
        assert_eq!(traces.timestamps[1] - traces.timestamps[0], 1);
    }

    #[test]
    fn negative_power_names_row() {
        let f = write_tmp("timestamp,fridge_P_kw,fridge_Q_kvar\n0,0.1,0\n1,-0.5,0\n2,0.1,0\n");
        let err = load_household_csv(f.path(), &schema()).unwrap_err();
        assert!(
            matches!(err, IngestError::NegativePower { row: 2, .. }),
            "{err}"
        );
        assert!(err.to_string().starts_with("negative power, row 2"));
    }

    #[test]
    fn malformed_inputs_rejected() {
        let bad_ts = write_tmp("timestamp,fridge_P_kw,fridge_Q_kvar\nnoon,0.1,0\n");
        assert!(matches!(
            load_household_csv(bad_ts.path(), &schema()),
            Err(IngestError::Parse { row: 1, .. })
        ));
        let missing = write_tmp("timestamp,fridge_P_kw,fridge_Q_kvar\n0,,0\n");
        assert!(matches!(
            load_household_csv(missing.path(), &schema()),
            Err(IngestError::Parse { row: 1, .. })
        ));
        let no_col = write_tmp("timestamp,fridge_P_kw\n0,0.1\n");
        assert!(matches!(
            load_household_csv(no_col.path(), &schema()),
            Err(IngestError::MissingColumn(_))
        ));
        let gap = write_tmp("timestamp,fridge_P_kw,fridge_Q_kvar\n0,0.1,0\n1,0.1,0\n3,0.1,0\n");
        assert!(matches!(
            load_household_csv(gap.path(), &schema()),
            Err(IngestError::Timestamps(_))
        ));
    }

    #[test]
    fn irradiance_days_and_errors() {
        let mut text = String::from("minute,GTI_a,GTI_b,GTI_c,GTI_d\n");
        for m in 0..1440 {
            text.push_str(&format!("{m},0.1,0.2,0,0.4\n"));
        }
        let f = write_tmp(&text);
        let irr = load_irradiance_csv(f.path()).unwrap();
        assert_eq!(irr.days.len(), 4);
        assert_eq!(irr.days[2].gti.iter().sum::<f64>(), 0.0);

        let neg = write_tmp("minute,GTI_a\n0,0.2\n1,-1\n");
        assert!(matches!(
            load_irradiance_csv(neg.path()),
            Err(IngestError::NegativeIrradiance { row: 2, .. })
        ));
    }

    #[test]
    fn resample_means() {
        assert_eq!(resample(&[1.0, 3.0], 2).unwrap(), vec![2.0]);
        assert_eq!(resample(&[0.7; 12], 4).unwrap(), vec![0.7; 3]);
        assert_eq!(resample(&vec![1.0; 1440], 15).unwrap().len(), 96);
        assert!(resample(&[1.0, 2.0, 3.0], 2).is_err());
    }

    fn two_day_traces() -> RawTraces {
        let n = 2 * 1440;
        let mk = |id: &str, cat, p: f64| ApplianceTrace {
            id: id.into(),
            category: cat,
            p: (0..n).map(|i| if i < 1440 { p } else { 2.0 * p }).collect(),
            q: vec![0.01; n],
        };
        RawTraces {
            step_minutes: 1,
            timestamps: (0..n as i64).collect(),
            appliances: vec![
                mk("a", ApplianceCategory::SafetyCritical, 0.1),
                mk("b", ApplianceCategory::SafetyCritical, 0.2),
                mk("tv", ApplianceCategory::OnDemand, 0.15),
            ],
        }
    }

    #[test]
    fn extract_day_sums_baseline() {
        let traces = two_day_traces();
        let day = extract_day(&traces, 0).unwrap();
        assert_eq!(day.num_slots(), 1440);
        assert!(day.baseline.p_sc.iter().all(|v| (v - 0.3).abs() < 1e-12));
        assert_eq!(day.on_demand.len(), 1);
        let day1 = extract_day(&traces, 1).unwrap();
        assert!(day1.baseline.p_sc.iter().all(|v| (v - 0.6).abs() < 1e-12));
        assert!(matches!(
            extract_day(&traces, 5),
            Err(IngestError::PartialDay { day: 5, days: 2 })
        ));
    }

    #[test]
    fn traces_resample_to_grid() {
        let traces = two_day_traces().to_step(15).unwrap();
        assert_eq!(traces.step_minutes, 15);
        assert_eq!(traces.len(), 192);
        assert_eq!(traces.num_days(), 2);
        assert!(two_day_traces().to_step(7).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let traces = two_day_traces();
        let mut buf = Vec::new();
        write_household_csv(&traces, &mut buf).unwrap();
        let f = write_tmp(std::str::from_utf8(&buf).unwrap());
        let schema = TraceSchema::new(
            traces
                .appliances
                .iter()
                .map(|a| (a.id.clone(), a.category))
                .collect(),
        );
        assert_eq!(load_household_csv(f.path(), &schema).unwrap(), traces);
    }
}
