//! Time-series ingestion, min-max scaling, supervised windowing and the
//! five scarce-history case splits.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest run of missing hours that ingestion repairs by forward fill.
pub const MAX_FILL_HOURS: usize = 3;

/// Default input window: the last 24 hourly observations.
pub const DEFAULT_WINDOW: usize = 24;

/// An equally spaced univariate series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    name: String,
    start: NaiveDateTime,
    resolution_hours: f64,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(
        name: impl Into<String>,
        start: NaiveDateTime,
        resolution_hours: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("time series has no values".into()));
        }
        if !(resolution_hours > 0.0 && resolution_hours.is_finite()) {
            return Err(Error::Config(format!(
                "resolution must be positive, got {resolution_hours}"
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("series value at index {i}")));
        }
        Ok(Self {
            name: name.into(),
            start,
            resolution_hours,
            values,
        })
    }

    /// Hourly series starting at `start`.
    pub fn hourly(name: impl Into<String>, start: NaiveDateTime, values: Vec<f64>) -> Result<Self> {
        Self::new(name, start, 1.0, values)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn resolution_hours(&self) -> f64 {
        self.resolution_hours
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> Duration {
        Duration::milliseconds((self.resolution_hours * 3_600_000.0).round() as i64)
    }

    /// Timestamp of point `index`. Indices past the end extrapolate the grid.
    pub fn timestamp(&self, index: usize) -> NaiveDateTime {
        self.start + self.step() * index as i32
    }

    pub fn end(&self) -> NaiveDateTime {
        self.timestamp(self.len() - 1)
    }

    /// Fractional hour of day at point `index`.
    pub fn hour_of_day(&self, index: usize) -> f64 {
        hour_of_day(self.timestamp(index))
    }

    /// Sub-series over `start..end`, keeping the clock aligned.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.len() {
            return Err(Error::Shape(format!(
                "slice {start}..{end} of a series with {} points",
                self.len()
            )));
        }
        Ok(Self {
            name: self.name.clone(),
            start: self.timestamp(start),
            resolution_hours: self.resolution_hours,
            values: self.values[start..end].to_vec(),
        })
    }

    /// Same clock, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.len() {
            return Err(Error::Shape(format!(
                "replacement has {} values, series has {}",
                values.len(),
                self.len()
            )));
        }
        Self::new(self.name.clone(), self.start, self.resolution_hours, values)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Writes `timestamp,load` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["timestamp", "load"])?;
        for (i, v) in self.values.iter().enumerate() {
            writer.write_record([
                self.timestamp(i).format("%Y-%m-%dT%H:%M:%S").to_string(),
                format!("{v}"),
            ])?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

pub fn hour_of_day(ts: NaiveDateTime) -> f64 {
    ts.hour() as f64 + ts.minute() as f64 / 60.0 + ts.second() as f64 / 3600.0
}

/// Cyclic (sin, cos) encoding of an hour of day.
pub fn time_features(hour: f64) -> [f64; 2] {
    let angle = 2.0 * PI * hour / 24.0;
    [angle.sin(), angle.cos()]
}

fn parse_timestamp(raw: &str) -> Option<NaiveDateTime> {
    const FORMATS: [&str; 4] = [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ];
    let raw = raw.trim();
    FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(raw, f).ok())
        .or_else(|| {
            DateTime::parse_from_rfc3339(raw)
                .ok()
                .map(|dt| dt.naive_utc())
        })
}

/// Reads an hourly `timestamp,load` CSV.
///
/// Runs of up to [`MAX_FILL_HOURS`] missing hours are forward-filled; longer
/// gaps are rejected.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    read_csv(file, name)
}

pub fn read_csv<R: std::io::Read>(reader: R, name: impl Into<String>) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "timestamp" || &headers[1] != "load" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `timestamp,load`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut start: Option<NaiveDateTime> = None;
    let mut previous: Option<NaiveDateTime> = None;
    let mut values: Vec<f64> = Vec::new();

    for (row, record) in rdr.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| Error::Parse {
            line,
            message: format!("unparseable timestamp `{}`", &record[0]),
        })?;
        let load: f64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("unparseable load `{}`", &record[1]),
        })?;
        if !load.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("non-finite load `{}`", &record[1]),
            });
        }

        if let Some(prev) = previous {
            let delta = (ts - prev).num_seconds();
            if delta <= 0 {
                return Err(Error::Ordering { line });
            }
            if delta % 3600 != 0 {
                return Err(Error::Parse {
                    line,
                    message: "timestamp is off the hourly grid".into(),
                });
            }
            let missing = (delta / 3600 - 1) as usize;
            if missing > MAX_FILL_HOURS {
                return Err(Error::Gap {
                    line: line - 1,
                    missing,
                    limit: MAX_FILL_HOURS,
                });
            }
            let fill = *values.last().expect("previous row pushed a value");
            values.extend(std::iter::repeat_n(fill, missing));
        } else {
            start = Some(ts);
        }
        previous = Some(ts);
        values.push(load);
    }

    let start = start.ok_or_else(|| Error::EmptyInput("CSV has no data rows".into()))?;
    TimeSeries::hourly(name, start, values)
}

/// Min-max scaling bounds fitted on a training slice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min_value: f64,
    pub max_value: f64,
}

impl NormalizationParams {
    pub fn new(min_value: f64, max_value: f64) -> Result<Self> {
        if !(max_value > min_value) || !min_value.is_finite() || !max_value.is_finite() {
            return Err(Error::DegenerateRange(min_value));
        }
        Ok(Self {
            min_value,
            max_value,
        })
    }

    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput("cannot fit a normalizer on no values".into()));
        }
        let (lo, hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Self::new(lo, hi)
    }

    pub fn range(&self) -> f64 {
        self.max_value - self.min_value
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min_value) / self.range()
    }

    pub fn invert(&self, y: f64) -> f64 {
        y * self.range() + self.min_value
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }

    pub fn invert_all(&self, ys: &[f64]) -> Vec<f64> {
        ys.iter().map(|&y| self.invert(y)).collect()
    }

    pub fn normalize(&self, series: &TimeSeries) -> Result<TimeSeries> {
        series.with_values(self.apply_all(series.values()))
    }

    pub fn denormalize(&self, series: &TimeSeries) -> Result<TimeSeries> {
        series.with_values(self.invert_all(series.values()))
    }
}

/// Fits min-max bounds on `train`, the slice a model is allowed to see.
pub fn fit_normalizer(train: &TimeSeries) -> Result<NormalizationParams> {
    NormalizationParams::fit(train.values())
}

/// Input/target pairs for one-step (or fixed-step) supervised regression.
///
/// Each input is `window_length` consecutive loads followed by the (sin, cos)
/// hour-of-day encoding of the target's timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct SupervisedWindowSet {
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
    pub window_length: usize,
    pub horizon_step: usize,
}

impl SupervisedWindowSet {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_count(&self) -> usize {
        self.window_length + 2
    }

    /// Chronological head/tail split at `len - tail`.
    pub fn split_tail(&self, tail: usize) -> (SupervisedWindowSet, SupervisedWindowSet) {
        let cut = self.len().saturating_sub(tail);
        let part = |range: std::ops::Range<usize>| SupervisedWindowSet {
            inputs: self.inputs[range.clone()].to_vec(),
            targets: self.targets[range].to_vec(),
            window_length: self.window_length,
            horizon_step: self.horizon_step,
        };
        (part(0..cut), part(cut..self.len()))
    }
}

/// Builds a feature vector from a load window and the target's hour of day.
pub fn window_features(window: &[f64], target_hour: f64) -> Vec<f64> {
    let mut features = Vec::with_capacity(window.len() + 2);
    features.extend_from_slice(window);
    features.extend_from_slice(&time_features(target_hour));
    features
}

pub fn make_windows(
    series: &TimeSeries,
    window: usize,
    horizon_step: usize,
) -> Result<SupervisedWindowSet> {
    if window == 0 || horizon_step == 0 {
        return Err(Error::Config(
            "window and horizon step must both be positive".into(),
        ));
    }
    let len = series.len();
    if len < window + horizon_step {
        return Err(Error::InsufficientData(format!(
            "{len} points cannot form a window of {window} with horizon step {horizon_step}"
        )));
    }
    let count = len - window - horizon_step + 1;
    let values = series.values();
    let mut inputs = Vec::with_capacity(count);
    let mut targets = Vec::with_capacity(count);
    for i in 0..count {
        let target = i + window + horizon_step - 1;
        inputs.push(window_features(&values[i..i + window], series.hour_of_day(target)));
        targets.push(values[target]);
    }
    Ok(SupervisedWindowSet {
        inputs,
        targets,
        window_length: window,
        horizon_step,
    })
}

/// The five training-length scenarios (3, 5, 7, 15 and 30 days).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseId {
    Case1,
    Case2,
    Case3,
    Case4,
    Case5,
}

impl CaseId {
    pub const ALL: [CaseId; 5] = [
        CaseId::Case1,
        CaseId::Case2,
        CaseId::Case3,
        CaseId::Case4,
        CaseId::Case5,
    ];

    pub fn train_days(self) -> usize {
        match self {
            CaseId::Case1 => 3,
            CaseId::Case2 => 5,
            CaseId::Case3 => 7,
            CaseId::Case4 => 15,
            CaseId::Case5 => 30,
        }
    }

    pub fn number(self) -> usize {
        self as usize + 1
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "case{}", self.number())
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let digit = lower.strip_prefix("case").unwrap_or(&lower);
        match digit {
            "1" => Ok(CaseId::Case1),
            "2" => Ok(CaseId::Case2),
            "3" => Ok(CaseId::Case3),
            "4" => Ok(CaseId::Case4),
            "5" => Ok(CaseId::Case5),
            _ => Err(Error::Config(format!("unknown case `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseSplit {
    pub case_id: CaseId,
    pub train: TimeSeries,
    pub test: TimeSeries,
    pub train_days: usize,
}

impl CaseSplit {
    /// Index in the source series of the first test point.
    pub fn test_offset(&self) -> usize {
        self.train.len()
    }
}

pub fn split_case(series: &TimeSeries, case_id: CaseId) -> Result<CaseSplit> {
    let days = case_id.train_days();
    let train_len = (days as f64 * 24.0 / series.resolution_hours()).round() as usize;
    if series.len() < train_len + 1 {
        return Err(Error::InsufficientData(format!(
            "{case_id} needs more than {train_len} points, series has {}",
            series.len()
        )));
    }
    Ok(CaseSplit {
        case_id,
        train: series.slice(0, train_len)?,
        test: series.slice(train_len, series.len())?,
        train_days: days,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn t0() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2011, 7, 17)
            .unwrap()
            .and_hms_opt(0, 0, 0)
            .unwrap()
    }

    fn ramp(n: usize) -> TimeSeries {
        TimeSeries::hourly("ramp", t0(), (0..n).map(|i| i as f64).collect()).unwrap()
    }

    fn csv_of(rows: &[(&str, &str)]) -> String {
        let mut s = String::from("timestamp,load\n");
        for (t, v) in rows {
            s.push_str(&format!("{t},{v}\n"));
        }
        s
    }

    #[test]
    fn reads_well_formed_hourly_rows() {
        let mut text = String::from("timestamp,load\n");
        for i in 0..72 {
            let ts = t0() + Duration::hours(i);
            text.push_str(&format!("{},{}\n", ts.format("%Y-%m-%dT%H:%M:%S"), i));
        }
        let s = read_csv(text.as_bytes(), "x").unwrap();
        assert_eq!(s.len(), 72);
        assert_eq!(s.resolution_hours(), 1.0);
        assert_eq!(s.start(), t0());
    }

    #[test]
    fn forward_fills_a_single_missing_hour() {
        let text = csv_of(&[
            ("2011-07-17T00:00:00", "5.0"),
            ("2011-07-17T02:00:00", "7.0"),
        ]);
        let s = read_csv(text.as_bytes(), "x").unwrap();
        assert_eq!(s.values(), &[5.0, 5.0, 7.0]);
    }

    #[test]
    fn fills_three_hours_but_rejects_four() {
        let ok = csv_of(&[("2011-07-17 00:00", "1"), ("2011-07-17 04:00", "2")]);
        assert_eq!(read_csv(ok.as_bytes(), "x").unwrap().len(), 5);
        let bad = csv_of(&[("2011-07-17 00:00", "1"), ("2011-07-17 05:00", "2")]);
        assert!(matches!(
            read_csv(bad.as_bytes(), "x"),
            Err(Error::Gap { missing: 4, .. })
        ));
    }

    #[test]
    fn rejects_backwards_timestamps() {
        let text = csv_of(&[
            ("2011-07-17T05:00:00", "1"),
            ("2011-07-17T04:00:00", "2"),
        ]);
        assert!(matches!(
            read_csv(text.as_bytes(), "x"),
            Err(Error::Ordering { line: 3 })
        ));
    }

    #[test]
    fn malformed_row_reports_its_line() {
        let text = csv_of(&[
            ("2011-07-17T00:00:00", "1"),
            ("2011-07-17T01:00:00", "abc"),
        ]);
        match read_csv(text.as_bytes(), "x") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_header() {
        let text = "time,value\n2011-07-17T00:00:00,1\n";
        assert!(matches!(
            read_csv(text.as_bytes(), "x"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn accepts_rfc3339_offsets() {
        let text = csv_of(&[
            ("2011-07-17T00:00:00+00:00", "1"),
            ("2011-07-17T01:00:00+00:00", "2"),
        ]);
        assert_eq!(read_csv(text.as_bytes(), "x").unwrap().len(), 2);
    }

    #[test]
    fn normalizer_hand_values() {
        let p = NormalizationParams::fit(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(p.min_value, 10.0);
        assert_eq!(p.max_value, 30.0);
        assert_eq!(p.apply(20.0), 0.5);
        assert_eq!(p.apply(p.min_value), 0.0);
        assert!(matches!(
            NormalizationParams::fit(&[5.0, 5.0, 5.0]),
            Err(Error::DegenerateRange(_))
        ));
    }

    #[test]
    fn window_counts() {
        assert_eq!(make_windows(&ramp(72), 24, 1).unwrap().len(), 48);
        let one = make_windows(&ramp(25), 24, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.targets[0], 24.0);
        assert_eq!(one.inputs[0].len(), 26);
        assert!(matches!(
            make_windows(&ramp(24), 24, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn window_count_formula_exhaustive() {
        for len in 1..=30 {
            let s = ramp(len);
            for w in 1..=8 {
                for h in 1..=5 {
                    match make_windows(&s, w, h) {
                        Ok(set) => {
                            assert_eq!(set.len(), len - w - h + 1);
                            assert!(set.inputs.iter().all(|x| x.len() == w + 2));
                            // ramp values equal indices, so the target sits h - 1 past the window
                            for (x, y) in set.inputs.iter().zip(&set.targets) {
                                assert_eq!(*y, x[w - 1] + h as f64);
                            }
                        }
                        Err(_) => assert!(len < w + h),
                    }
                }
            }
        }
    }

    #[test]
    fn time_feature_uses_target_hour() {
        let set = make_windows(&ramp(30), 24, 1).unwrap();
        // first target is index 24, i.e. midnight of the next day
        assert_eq!(set.inputs[0][24], 0.0_f64.sin());
        assert_eq!(set.inputs[0][25], 1.0);
    }

    #[test]
    fn case_split_sizes() {
        let s = ramp(2184);
        let c1 = split_case(&s, CaseId::Case1).unwrap();
        assert_eq!((c1.train.len(), c1.test.len()), (72, 2112));
        assert_eq!(c1.train.end() + c1.train.step(), c1.test.start());
        assert_eq!(split_case(&s, CaseId::Case5).unwrap().train.len(), 720);
        assert!(matches!(
            split_case(&ramp(72), CaseId::Case1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn case_id_parsing() {
        assert_eq!("case3".parse::<CaseId>().unwrap(), CaseId::Case3);
        assert_eq!("Case5".parse::<CaseId>().unwrap(), CaseId::Case5);
        assert!("case6".parse::<CaseId>().is_err());
        assert_eq!(CaseId::Case2.to_string(), "case2");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn normalize_round_trip(values in prop::collection::vec(-1e4f64..1e4, 2..50), t in 0.0f64..1.0) {
                prop_assume!(values.iter().any(|v| *v != values[0]));
                let p = NormalizationParams::fit(&values).unwrap();
                let x = p.min_value + t * p.range();
                // rounding is relative to the operands, not to the value itself
                let scale = p.min_value.abs().max(p.max_value.abs()).max(1.0);
                prop_assert!((p.invert(p.apply(x)) - x).abs() <= 1e-12 * scale);
                for &v in &values {
                    prop_assert!((p.invert(p.apply(v)) - v).abs() <= 1e-12 * scale);
                }
            }

            #[test]
            fn hour_features_on_unit_circle(hour in 0.0f64..24.0) {
                let [s, c] = time_features(hour);
                prop_assert!((s * s + c * c - 1.0).abs() < 1e-12);
            }

            #[test]
            fn case_split_is_contiguous(extra in 1usize..200, case in 0usize..5) {
                let case = CaseId::ALL[case];
                let s = ramp(case.train_days() * 24 + extra);
                let split = split_case(&s, case).unwrap();
                prop_assert_eq!(split.train.end() + split.train.step(), split.test.start());
                prop_assert_eq!(split.train.len() + split.test.len(), s.len());
            }
        }
    }
}
