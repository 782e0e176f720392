use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::types::{SampledSeries, SeriesKind, DEFAULT_STEP};

/// Which CSV columns hold the unix timestamp and the measurement.
///
/// AMPds meter files use `unix_ts` and `P` (active power, W); the water meters
/// expose the per-minute flow as `avg_rate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    pub value: String,
}

impl ColumnMap {
    pub fn new(timestamp: &str, value: &str) -> Self {
        Self { timestamp: timestamp.into(), value: value.into() }
    }

    pub fn ampds_power() -> Self {
        Self::new("unix_ts", "P")
    }

    pub fn ampds_water() -> Self {
        Self::new("unix_ts", "avg_rate")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    #[default]
    Reject,
    ForwardFill,
}

/// Reads a two-column view of a meter CSV file into a uniformly sampled series.
///
/// The step is taken from the first two rows (60 s for single-row files).
pub fn load_meter_csv(path: &Path, columns: &ColumnMap, kind: SeriesKind, gaps: GapPolicy) -> Result<SampledSeries> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| NilmError::ParseError { line: 1, msg: format!("missing column '{name}'") })
    };
    let ts_col = find(&columns.timestamp)?;
    let val_col = find(&columns.value)?;

    let mut rows: Vec<(usize, i64, f64)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |c: usize| record.get(c).ok_or_else(|| NilmError::ParseError { line, msg: "short row".into() });
        let ts: i64 = field(ts_col)?
            .parse::<f64>()
            .ok()
            .filter(|t| t.is_finite() && t.fract() == 0.0)
            .map(|t| t as i64)
            .ok_or_else(|| NilmError::ParseError { line, msg: "bad timestamp".into() })?;
        let v: f64 = field(val_col)?
            .parse()
            .map_err(|_| NilmError::ParseError { line, msg: "bad value".into() })?;
        rows.push((line, ts, v));
    }
    let Some(&(_, start, _)) = rows.first() else {
        return Err(NilmError::EmptySeries);
    };
    let step = match rows.get(1) {
        Some(&(line, t1, _)) if t1 <= start => return Err(NilmError::NonMonotoneTime(line)),
        Some(&(_, t1, _)) => t1 - start,
        None => DEFAULT_STEP,
    };

    let mut values = Vec::with_capacity(rows.len());
    let mut prev_ts = start - step;
    for &(line, ts, v) in &rows {
        let gap = ts - prev_ts;
        if gap <= 0 {
            return Err(NilmError::NonMonotoneTime(line));
        }
        if gap != step {
            if gap % step != 0 {
                return Err(NilmError::ParseError { line, msg: format!("timestamp off the {step}s grid") });
            }
            match gaps {
                GapPolicy::Reject => return Err(NilmError::GapTooLarge { line, gap, step }),
                GapPolicy::ForwardFill => {
                    let fill = values.last().copied().unwrap_or(v);
                    values.extend(std::iter::repeat_n(fill, (gap / step - 1) as usize));
                }
            }
        }
        values.push(v);
        prev_ts = ts;
    }
    let series = SampledSeries::new(start, step, values, kind);
    series.validate()?;
    Ok(series)
}

fn csv_error(path: &Path, e: csv::Error) -> NilmError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => NilmError::io(path, io),
        other => NilmError::ParseError { line, msg: format!("{other:?}") },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_line_fixture() {
        let f = file("unix_ts,P\n1333238400,120\n1333238460,121\n1333238520,119.5\n");
        let s = load_meter_csv(f.path(), &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::Reject).unwrap();
        assert_eq!(s.values, vec![120.0, 121.0, 119.5]);
        assert_eq!((s.start_time, s.step), (1_333_238_400, 60));
    }

    #[test]
    fn backwards_time_is_rejected() {
        let f = file("unix_ts,P\n120,1\n180,1\n170,1\n");
        let err = load_meter_csv(f.path(), &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::Reject);
        assert!(matches!(err, Err(NilmError::NonMonotoneTime(4))), "{err:?}");
    }

    #[test]
    fn gaps_are_rejected_or_filled() {
        let f = file("unix_ts,P\n0,1\n60,2\n240,3\n");
        let err = load_meter_csv(f.path(), &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::Reject);
        assert!(matches!(err, Err(NilmError::GapTooLarge { gap: 180, .. })));
        let s = load_meter_csv(f.path(), &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::ForwardFill).unwrap();
        assert_eq!(s.values, vec![1.0, 2.0, 2.0, 2.0, 3.0]);
    }

    #[test]
    fn parse_errors_carry_the_line() {
        let f = file("unix_ts,P\n0,1\n60,abc\n");
        let err = load_meter_csv(f.path(), &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::Reject);
        assert!(matches!(err, Err(NilmError::ParseError { line: 3, .. })), "{err:?}");
        let f = file("ts,P\n0,1\n");
        assert!(load_meter_csv(f.path(), &ColumnMap::ampds_power(), SeriesKind::Power, GapPolicy::Reject).is_err());
    }

    #[test]
    fn custom_columns_select_the_value() {
        let f = file("unix_ts,counter,avg_rate\n0,10,0.0\n60,12,2.5\n");
        let s = load_meter_csv(f.path(), &ColumnMap::ampds_water(), SeriesKind::Water, GapPolicy::Reject).unwrap();
        assert_eq!(s.values, vec![0.0, 2.5]);
        assert_eq!(s.kind, SeriesKind::Water);
    }
}
