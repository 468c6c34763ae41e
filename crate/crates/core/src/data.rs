//! Observation data: time series, space-time grids, and their derived
//! constants.
//!
//! Both tables are read from CSV with a mandatory header: `t,x1,...,xd` for
//! a time series and `x,t,u` (one row per node) for a grid.

use std::collections::HashMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{fmt17, norm2, write_csv_row};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("times not strictly increasing at row {row} ({previous} then {current})")]
    NonMonotone { row: usize, previous: f64, current: f64 },
    #[error("need at least {needed} samples, got {actual}")]
    TooFew { needed: usize, actual: usize },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("grid is not rectangular: {0}")]
    NonRectangular(String),
    #[error("noise level must be non-negative and finite, got {0}")]
    NegativeEpsilon(f64),
}

/// Samples `(t_i, x(t_i))`, `i = 1..=n+1`, with strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    dim: usize,
    /// Row-major, `times.len() x dim`.
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<TimeSeries, DataError> {
        if times.len() != rows.len() {
            return Err(DataError::Row {
                row: rows.len().min(times.len()),
                message: format!("{} times but {} value rows", times.len(), rows.len()),
            });
        }
        let dim = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != dim {
                return Err(DataError::Row {
                    row: i,
                    message: format!("expected {dim} values, found {}", row.len()),
                });
            }
            values.extend(row);
        }
        Self::from_flat(times, dim, values)
    }

    pub fn from_flat(times: Vec<f64>, dim: usize, values: Vec<f64>) -> Result<TimeSeries, DataError> {
        if times.len() < 2 {
            return Err(DataError::TooFew {
                needed: 2,
                actual: times.len(),
            });
        }
        if dim == 0 {
            return Err(DataError::Header("a time series needs at least one value column".into()));
        }
        assert_eq!(values.len(), times.len() * dim, "value buffer does not match times x dim");
        for (i, t) in times.iter().enumerate() {
            if !t.is_finite() || values[i * dim..(i + 1) * dim].iter().any(|v| !v.is_finite()) {
                return Err(DataError::NonFinite { row: i });
            }
        }
        for (i, pair) in times.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(DataError::NonMonotone {
                    row: i + 1,
                    previous: pair[0],
                    current: pair[1],
                });
            }
        }
        Ok(TimeSeries { times, dim, values })
    }

    /// Samples `x(t)` at `t0, t0 + h, ..., t1` (both endpoints included).
    pub fn sample(f: impl Fn(f64) -> Vec<f64>, t0: f64, t1: f64, h: f64) -> Result<TimeSeries, DataError> {
        let steps = ((t1 - t0) / h).round() as usize;
        let times: Vec<f64> = (0..=steps).map(|i| t0 + i as f64 * h).collect();
        let rows = times.iter().map(|&t| f(t)).collect();
        Self::new(times, rows)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn first_time(&self) -> f64 {
        self.times[0]
    }

    pub fn last_time(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// Forward difference quotient `(x_{i+1} - x_i) / (t_{i+1} - t_i)`.
    pub fn difference_quotient(&self, i: usize) -> Vec<f64> {
        let dt = self.times[i + 1] - self.times[i];
        self.value(i + 1)
            .iter()
            .zip(self.value(i))
            .map(|(next, cur)| (next - cur) / dt)
            .collect()
    }

    /// Same times, every value shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> TimeSeries {
        TimeSeries {
            times: self.times.clone(),
            dim: self.dim,
            values: self.values.iter().map(|v| v + offset).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim).map(|k| format!("x{k}")));
        write_csv_row(&mut out, &header)?;
        for i in 0..self.len() {
            let mut cells = vec![fmt17(self.times[i])];
            cells.extend(self.value(i).iter().map(|v| fmt17(*v)));
            write_csv_row(&mut out, &cells)?;
        }
        Ok(())
    }
}

fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64, DataError> {
    cell.trim().parse::<f64>().map_err(|_| DataError::Row {
        row,
        message: format!("column {column}: `{cell}` is not a number"),
    })
}

fn csv_reader<R: Read>(source: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

/// Reads a `t,x1,...,xd` table. Rows must already be in increasing time
/// order; they are never re-sorted.
pub fn load_time_series<R: Read>(source: R) -> Result<TimeSeries, DataError> {
    let mut reader = csv_reader(source);
    let header = reader.headers()?.clone();
    if header.len() < 2 || header.get(0) != Some("t") {
        return Err(DataError::Header(format!(
            "expected `t,x1,...`, found `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let dim = header.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != header.len() {
            return Err(DataError::Row {
                row,
                message: format!("expected {} cells, found {}", header.len(), record.len()),
            });
        }
        times.push(parse_cell(&record[0], row, 0)?);
        for col in 1..=dim {
            values.push(parse_cell(&record[col], row, col)?);
        }
    }
    TimeSeries::from_flat(times, dim, values)
}

/// Per-series constants used by the error bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    /// `A = min Δt_i`.
    pub min_gap: f64,
    /// `B = max Δt_i`.
    pub max_gap: f64,
    /// `Δ = max_i ‖Δx_i / Δt_i‖` (Euclidean norm).
    pub max_slope: f64,
    pub t_start: f64,
    pub t_end: f64,
}

pub fn series_stats(ts: &TimeSeries) -> SeriesStats {
    let mut min_gap = f64::INFINITY;
    let mut max_gap = 0.0f64;
    let mut max_slope = 0.0f64;
    for i in 0..ts.len() - 1 {
        let gap = ts.times[i + 1] - ts.times[i];
        min_gap = min_gap.min(gap);
        max_gap = max_gap.max(gap);
        max_slope = max_slope.max(norm2(&ts.difference_quotient(i)));
    }
    SeriesStats {
        min_gap,
        max_gap,
        max_slope,
        t_start: ts.first_time(),
        t_end: ts.last_time(),
    }
}

/// The `x - ε` and `x + ε` bounding series for a uniform noise level ε.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePair {
    pub lower: TimeSeries,
    pub upper: TimeSeries,
    pub epsilon: f64,
}

pub fn perturb_series(ts: &TimeSeries, epsilon: f64) -> Result<NoisePair, DataError> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(DataError::NegativeEpsilon(epsilon));
    }
    Ok(NoisePair {
        lower: ts.shifted(-epsilon),
        upper: ts.shifted(epsilon),
        epsilon,
    })
}

/// Scalar field `u(x_i, t_j)` on a rectangular grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    xs: Vec<f64>,
    ts: Vec<f64>,
    /// Row-major: `u[i * ts.len() + j] = u(x_i, t_j)`.
    u: Vec<f64>,
}

const MIN_GRID_AXIS: usize = 3;

fn check_axis(name: &str, axis: &[f64]) -> Result<(), DataError> {
    if axis.len() < MIN_GRID_AXIS {
        return Err(DataError::TooFew {
            needed: MIN_GRID_AXIS,
            actual: axis.len(),
        });
    }
    if axis.iter().any(|v| !v.is_finite()) {
        return Err(DataError::NonRectangular(format!("non-finite {name} coordinate")));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DataError::NonRectangular(format!("{name} axis not strictly increasing")));
    }
    Ok(())
}

impl GridField {
    pub fn new(xs: Vec<f64>, ts: Vec<f64>, u: Vec<f64>) -> Result<GridField, DataError> {
        check_axis("x", &xs)?;
        check_axis("t", &ts)?;
        if u.len() != xs.len() * ts.len() {
            return Err(DataError::NonRectangular(format!(
                "{} values for a {}x{} grid",
                u.len(),
                xs.len(),
                ts.len()
            )));
        }
        if let Some(k) = u.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { row: k });
        }
        Ok(GridField { xs, ts, u })
    }

    /// Samples `field(x, t)` on the tensor grid `xs x ts`.
    pub fn sample(xs: Vec<f64>, ts: Vec<f64>, field: impl Fn(f64, f64) -> f64) -> Result<GridField, DataError> {
        let u = xs
            .iter()
            .flat_map(|&x| ts.iter().map(move |&t| (x, t)))
            .map(|(x, t)| field(x, t))
            .collect();
        Self::new(xs, ts, u)
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    pub fn ts(&self) -> &[f64] {
        &self.ts
    }

    pub fn u(&self, i: usize, j: usize) -> f64 {
        self.u[i * self.ts.len() + j]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_csv_row(&mut out, &["x".into(), "t".into(), "u".into()])?;
        for (i, x) in self.xs.iter().enumerate() {
            for (j, t) in self.ts.iter().enumerate() {
                write_csv_row(&mut out, &[fmt17(*x), fmt17(*t), fmt17(self.u(i, j))])?;
            }
        }
        Ok(())
    }
}

fn sorted_axis(mut values: Vec<f64>) -> Vec<f64> {
    values.sort_by(|a, b| a.total_cmp(b));
    values.dedup();
    values
}

/// Reads an `x,t,u` table with exactly one row per node of a complete
/// rectangular grid (rows in any order).
pub fn load_grid<R: Read>(source: R) -> Result<GridField, DataError> {
    let mut reader = csv_reader(source);
    let header = reader.headers()?.clone();
    let names: Vec<&str> = header.iter().collect();
    if names != ["x", "t", "u"] {
        return Err(DataError::Header(format!("expected `x,t,u`, found `{}`", names.join(","))));
    }
    let mut nodes = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 3 {
            return Err(DataError::Row {
                row,
                message: format!("expected 3 cells, found {}", record.len()),
            });
        }
        let x = parse_cell(&record[0], row, 0)?;
        let t = parse_cell(&record[1], row, 1)?;
        let u = parse_cell(&record[2], row, 2)?;
        if !(x.is_finite() && t.is_finite() && u.is_finite()) {
            return Err(DataError::NonFinite { row });
        }
        nodes.push((x, t, u));
    }
    let xs = sorted_axis(nodes.iter().map(|n| n.0).collect());
    let ts = sorted_axis(nodes.iter().map(|n| n.1).collect());
    let x_index: HashMap<u64, usize> = xs.iter().enumerate().map(|(i, v)| (v.to_bits(), i)).collect();
    let t_index: HashMap<u64, usize> = ts.iter().enumerate().map(|(j, v)| (v.to_bits(), j)).collect();
    let mut u = vec![f64::NAN; xs.len() * ts.len()];
    let mut seen = vec![false; u.len()];
    for (x, t, value) in &nodes {
        let k = x_index[&x.to_bits()] * ts.len() + t_index[&t.to_bits()];
        if seen[k] {
            return Err(DataError::NonRectangular(format!("duplicate node ({x}, {t})")));
        }
        seen[k] = true;
        u[k] = *value;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        let (i, j) = (k / ts.len(), k % ts.len());
        return Err(DataError::NonRectangular(format!("missing node ({}, {})", xs[i], ts[j])));
    }
    GridField::new(xs, ts, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loads_simple_series() {
        let ts = load_time_series("t,x1\n0,1\n0.5,2\n1,4\n".as_bytes()).unwrap();
        assert_eq!(ts.len(), 3);
        assert_eq!(ts.dim(), 1);
        assert_eq!(ts.value(2), &[4.0]);
    }

    #[test]
    fn rejects_bad_series() {
        assert!(matches!(
            load_time_series("t,x1\n1,1\n1,2\n".as_bytes()),
            Err(DataError::NonMonotone { row: 1, .. })
        ));
        assert!(matches!(
            load_time_series("t,x1\n1,1\n0,2\n".as_bytes()),
            Err(DataError::NonMonotone { .. })
        ));
        assert!(matches!(
            load_time_series("t,x1\n0,1\n1,abc\n".as_bytes()),
            Err(DataError::Row { row: 1, .. })
        ));
        assert!(matches!(
            load_time_series("t,x1\n0,1\n1,2,3\n".as_bytes()),
            Err(DataError::Row { row: 1, .. })
        ));
        assert!(matches!(
            load_time_series("t,x1\n0,1\n".as_bytes()),
            Err(DataError::TooFew { .. })
        ));
        assert!(matches!(
            load_time_series("0,1\n1,2\n2,3\n".as_bytes()),
            Err(DataError::Header(_))
        ));
        assert!(matches!(
            load_time_series("t,x1\n0,1\n1,NaN\n".as_bytes()),
            Err(DataError::NonFinite { row: 1 })
        ));
    }

    #[test]
    fn samples_closed_form_on_coarse_grid() {
        let x = |t: f64| vec![-2.0 * (2.0 * t).exp() / ((2.0 * t).exp() - 3.0)];
        let ts = TimeSeries::sample(x, 1.0, 2.0, 0.1).unwrap();
        assert_eq!(ts.len(), 11);
        let stats = series_stats(&ts);
        assert!((stats.min_gap - 0.1).abs() < 1e-12);
        assert!((stats.max_gap - 0.1).abs() < 1e-12);
    }

    #[test]
    fn stats_examples() {
        let ts = TimeSeries::new(vec![0.0, 0.1, 0.3], vec![vec![0.0]; 3]).unwrap();
        let s = series_stats(&ts);
        assert_eq!(s.min_gap, 0.1);
        assert!((s.max_gap - 0.2).abs() < 1e-15);
        assert_eq!(s.max_slope, 0.0);

        let ts = TimeSeries::new(vec![0.0, 1.0, 2.0], vec![vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let s = series_stats(&ts);
        assert_eq!((s.min_gap, s.max_gap, s.max_slope), (1.0, 1.0, 2.0));
        assert_eq!((s.t_start, s.t_end), (0.0, 2.0));
    }

    #[test]
    fn perturbation_examples() {
        let ts = TimeSeries::new(vec![0.0, 1.0], vec![vec![1.0], vec![2.0]]).unwrap();
        let pair = perturb_series(&ts, 0.5).unwrap();
        assert_eq!(pair.lower.value(0), &[0.5]);
        assert_eq!(pair.lower.value(1), &[1.5]);
        assert_eq!(pair.upper.value(0), &[1.5]);
        assert_eq!(pair.upper.value(1), &[2.5]);
        let zero = perturb_series(&ts, 0.0).unwrap();
        assert_eq!(zero.lower, ts);
        assert_eq!(zero.upper, ts);
        assert!(matches!(perturb_series(&ts, -1e-3), Err(DataError::NegativeEpsilon(_))));
        assert!(perturb_series(&ts, f64::NAN).is_err());
    }

    #[test]
    fn loads_grids() {
        let mut csv = String::from("x,t,u\n");
        for x in 0..3 {
            for t in 0..3 {
                csv.push_str(&format!("{x},{t},0\n"));
            }
        }
        let g = load_grid(csv.as_bytes()).unwrap();
        assert_eq!(g.xs().len(), 3);
        assert_eq!(g.ts().len(), 3);
        assert_eq!(g.u(1, 2), 0.0);

        let missing: String = csv.lines().filter(|l| *l != "2,2,0").map(|l| format!("{l}\n")).collect();
        assert!(matches!(load_grid(missing.as_bytes()), Err(DataError::NonRectangular(_))));

        let duplicated = format!("{csv}1,1,5\n");
        assert!(matches!(load_grid(duplicated.as_bytes()), Err(DataError::NonRectangular(_))));

        assert!(matches!(load_grid("x,t,u\n0,0,1\n1,0,1\n0,1,1\n1,1,1\n".as_bytes()), Err(DataError::TooFew { .. })));
    }

    #[test]
    fn heat_kernel_grid_shape() {
        let axis: Vec<f64> = (0..=40).map(|i| 2.0 + i as f64 / 40.0).collect();
        let g = GridField::sample(axis.clone(), axis, |x, t| {
            (4.0 * std::f64::consts::PI * 7.0 * t).powf(-0.5) * (-x * x / (28.0 * t)).exp()
        })
        .unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = load_grid(buf.as_slice()).unwrap();
        assert_eq!(back.xs().len(), 41);
        assert_eq!(back.ts().len(), 41);
        assert_eq!(back, g);
    }

    proptest! {
        #[test]
        fn stats_bound_every_gap(
            gaps in prop::collection::vec(1e-3f64..2.0, 1..30),
            vals in prop::collection::vec(-50.0f64..50.0, 31),
        ) {
            let mut times = vec![0.0];
            for g in &gaps {
                times.push(times.last().unwrap() + g);
            }
            let rows: Vec<Vec<f64>> = (0..times.len()).map(|i| vec![vals[i], vals[i] * 0.5]).collect();
            let ts = TimeSeries::new(times.clone(), rows).unwrap();
            let s = series_stats(&ts);
            for i in 0..times.len() - 1 {
                let gap = times[i + 1] - times[i];
                prop_assert!(s.min_gap <= gap && gap <= s.max_gap);
                let jump = norm2(&[vals[i + 1] - vals[i], 0.5 * (vals[i + 1] - vals[i])]);
                prop_assert!(s.max_slope * gap >= jump * (1.0 - 1e-12));
            }
        }

        #[test]
        fn perturbation_brackets_data(
            vals in prop::collection::vec(-1e3f64..1e3, 2..20),
            eps in 0.0f64..10.0,
        ) {
            let times: Vec<f64> = (0..vals.len()).map(|i| i as f64).collect();
            let ts = TimeSeries::new(times, vals.iter().map(|v| vec![*v]).collect()).unwrap();
            let pair = perturb_series(&ts, eps).unwrap();
            for i in 0..ts.len() {
                prop_assert!(pair.lower.value(i)[0] <= ts.value(i)[0]);
                prop_assert!(ts.value(i)[0] <= pair.upper.value(i)[0]);
            }
        }

        #[test]
        fn csv_round_trip_is_bit_exact(
            vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 2..20),
        ) {
            let times: Vec<f64> = (0..vals.len()).map(|i| i as f64 * 0.1).collect();
            let ts = TimeSeries::new(times, vals.iter().map(|v| vec![*v, -*v]).collect()).unwrap();
            let mut buf = Vec::new();
            ts.write_csv(&mut buf).unwrap();
            let back = load_time_series(buf.as_slice()).unwrap();
            for i in 0..ts.len() {
                prop_assert_eq!(back.value(i)[0].to_bits(), ts.value(i)[0].to_bits());
                prop_assert_eq!(back.times()[i].to_bits(), ts.times()[i].to_bits());
            }
        }
    }
}
