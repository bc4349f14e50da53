//! Line-oriented text formats.
//!
//! Grid files:
//!
//! ```text
//! csefplan-grid v1
//! dim 2
//! lower -1.8 -1.8
//! upper 1.8 1.8
//! resolution 100 100
//! penalty 12.5
//! values 10000
//! 0.731 1
//! ...
//! ```
//!
//! One `value reachable` line follows per node in row-major order, first
//! axis fastest. Trajectory files:
//!
//! ```text
//! csefplan-trajectory v1
//! space joint
//! chain planar2
//! dim 2
//! 0.0 0.5 -1.0
//! ...
//! ```
//!
//! Each sample row holds the time followed by the point. `chain` is `none`
//! when the trajectory belongs to no chain. Floats are written in their
//! shortest round-trip form, so loading an exported file reproduces it
//! exactly.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

use super::{BenchError, Result};
use crate::grid::{FieldGrid, GridBounds};
use crate::kinematics::ChainModel;
use crate::trajectory::{Space, Trajectory};

pub const GRID_HEADER: &str = "csefplan-grid v1";
pub const TRAJECTORY_HEADER: &str = "csefplan-trajectory v1";

fn join<T: std::fmt::Debug>(xs: &[T]) -> String {
    let mut s = String::new();
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{x:?}");
    }
    s
}

pub fn write_grid<W: Write>(grid: &FieldGrid, mut out: W) -> Result<()> {
    let b = grid.bounds();
    writeln!(out, "{GRID_HEADER}")?;
    writeln!(out, "dim {}", grid.dim())?;
    writeln!(out, "lower {}", join(b.lower()))?;
    writeln!(out, "upper {}", join(b.upper()))?;
    writeln!(out, "resolution {}", join(grid.resolution()))?;
    writeln!(out, "penalty {:?}", grid.penalty_value())?;
    writeln!(out, "values {}", grid.len())?;
    for (v, r) in grid.values().iter().zip(grid.reachable()) {
        writeln!(out, "{v:?} {}", u8::from(*r))?;
    }
    Ok(())
}

pub fn export_grid(grid: &FieldGrid, path: &std::path::Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_grid(grid, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Numbered non-empty lines of a text source.
struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn new(r: R) -> Self {
        Self { inner: r.lines(), line: 0 }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    fn err(&self, field: &str, message: impl Into<String>) -> BenchError {
        BenchError::Parse { line: self.line, field: field.into(), message: message.into() }
    }

    fn expect(&mut self, field: &str) -> Result<String> {
        self.next_line()?.ok_or_else(|| BenchError::Parse {
            line: self.line + 1,
            field: field.into(),
            message: "unexpected end of file".into(),
        })
    }

    fn header(&mut self, header: &str) -> Result<()> {
        let l = self.expect("header")?;
        if l.trim() != header {
            return Err(self.err("header", format!("expected `{header}`, found `{}`", l.trim())));
        }
        Ok(())
    }

    /// Parses a `key v1 v2 ...` line.
    fn keyed<T: FromStr>(&mut self, key: &str) -> Result<Vec<T>> {
        let l = self.expect(key)?;
        let mut parts = l.split_whitespace();
        if parts.next() != Some(key) {
            return Err(self.err(key, format!("expected a `{key}` line")));
        }
        parts.map(|s| s.parse::<T>().map_err(|_| self.err(key, format!("cannot parse `{s}`")))).collect()
    }

    fn keyed_one<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let mut v = self.keyed::<T>(key)?;
        if v.len() != 1 {
            return Err(self.err(key, format!("expected one value, found {}", v.len())));
        }
        Ok(v.remove(0))
    }

    fn keyed_word(&mut self, key: &str) -> Result<String> {
        self.keyed_one::<String>(key)
    }
}

pub fn read_grid<R: BufRead>(input: R) -> Result<FieldGrid> {
    let mut lines = Lines::new(input);
    lines.header(GRID_HEADER)?;
    let dim: usize = lines.keyed_one("dim")?;
    let lower: Vec<f64> = lines.keyed("lower")?;
    if lower.len() != dim {
        return Err(lines.err("lower", format!("expected {dim} values, found {}", lower.len())));
    }
    let upper: Vec<f64> = lines.keyed("upper")?;
    if upper.len() != dim {
        return Err(lines.err("upper", format!("expected {dim} values, found {}", upper.len())));
    }
    let bounds = GridBounds::new(lower, upper).map_err(|e| lines.err("upper", e.to_string()))?;
    let resolution: Vec<usize> = lines.keyed("resolution")?;
    if resolution.len() != dim {
        return Err(lines.err("resolution", format!("expected {dim} values, found {}", resolution.len())));
    }
    let penalty: f64 = lines.keyed_one("penalty")?;
    let count: usize = lines.keyed_one("values")?;
    let mut values = Vec::with_capacity(count);
    let mut reachable = Vec::with_capacity(count);
    for _ in 0..count {
        let l = lines.expect("node")?;
        let mut parts = l.split_whitespace();
        let v = parts
            .next()
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| lines.err("node", "expected a field value"))?;
        let r = match parts.next() {
            Some("1") => true,
            Some("0") => false,
            _ => return Err(lines.err("node", "expected reachability flag 0 or 1")),
        };
        if parts.next().is_some() {
            return Err(lines.err("node", "trailing values"));
        }
        values.push(v);
        reachable.push(r);
    }
    if lines.next_line()?.is_some() {
        return Err(lines.err("values", format!("more than {count} node lines")));
    }
    FieldGrid::from_parts(bounds, resolution, penalty, values, reachable)
        .map_err(|e| lines.err("values", e.to_string()))
}

pub fn load_grid(path: &std::path::Path) -> Result<FieldGrid> {
    read_grid(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, chain: Option<ChainModel>, mut out: W) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    writeln!(out, "space {}", traj.space().name())?;
    writeln!(out, "chain {}", chain.map_or("none", ChainModel::name))?;
    writeln!(out, "dim {}", traj.dim())?;
    for (t, p) in traj.times().iter().zip(traj.points()) {
        writeln!(out, "{t:?} {}", join(p.as_slice()))?;
    }
    Ok(())
}

pub fn export_trajectory(traj: &Trajectory, chain: Option<ChainModel>, path: &std::path::Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_trajectory(traj, chain, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trajectory<R: BufRead>(input: R) -> Result<(Trajectory, Option<ChainModel>)> {
    let mut lines = Lines::new(input);
    lines.header(TRAJECTORY_HEADER)?;
    let space = match lines.keyed_word("space")?.as_str() {
        "joint" => Space::Joint,
        "task" => Space::Task,
        other => return Err(lines.err("space", format!("unknown space `{other}`"))),
    };
    let chain = match lines.keyed_word("chain")?.as_str() {
        "none" => None,
        "planar2" => Some(ChainModel::Planar2),
        "upper_limb4" => Some(ChainModel::UpperLimb4),
        other => return Err(lines.err("chain", format!("unknown chain `{other}`"))),
    };
    let dim: usize = lines.keyed_one("dim")?;
    if let Some(model) = chain {
        let expected = match space {
            Space::Joint => model.dof(),
            Space::Task => model.task_dim(),
        };
        if dim != expected {
            return Err(lines.err("dim", format!("{model} {} points have dimension {expected}", space.name())));
        }
    }
    let mut times: Vec<f64> = Vec::new();
    let mut points = Vec::new();
    while let Some(l) = lines.next_line()? {
        let row: Vec<f64> = l
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| lines.err("sample", format!("cannot parse `{s}`"))))
            .collect::<Result<_>>()?;
        if row.len() != dim + 1 {
            return Err(lines.err("sample", format!("expected {} columns, found {}", dim + 1, row.len())));
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(lines.err("sample", "non-finite value"));
        }
        if let Some(&prev) = times.last() {
            if row[0] <= prev {
                return Err(lines.err("time", format!("time {} does not increase past {prev}", row[0])));
            }
        }
        times.push(row[0]);
        points.push(DVector::from_column_slice(&row[1..]));
    }
    if times.is_empty() {
        return Err(BenchError::EmptyTrajectory);
    }
    Ok((Trajectory::new(space, times, points)?, chain))
}

pub fn load_trajectory(path: &std::path::Path) -> Result<(Trajectory, Option<ChainModel>)> {
    read_trajectory(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    JsonLines,
}

/// Flattens nested objects into dotted keys; arrays become `;`-separated.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Object(m) => {
            for (k, v) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        Value::Array(a) => {
            let cells: Vec<String> = a.iter().map(scalar).collect();
            out.push((prefix.to_string(), cells.join(";")));
        }
        other => out.push((prefix.to_string(), scalar(other))),
    }
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn csv_cell(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes records as CSV (header from the first record's fields) or as one
/// JSON object per line.
pub fn write_records<T: Serialize, W: Write>(records: &[T], format: ReportFormat, mut out: W) -> Result<()> {
    match format {
        ReportFormat::JsonLines => {
            for r in records {
                serde_json::to_writer(&mut out, r)?;
                writeln!(out)?;
            }
        }
        ReportFormat::Csv => {
            let mut header: Option<Vec<String>> = None;
            for r in records {
                let mut cells = Vec::new();
                flatten("", &serde_json::to_value(r)?, &mut cells);
                let keys: Vec<String> = cells.iter().map(|(k, _)| k.clone()).collect();
                match &header {
                    None => {
                        let line: Vec<String> = keys.iter().map(|k| csv_cell(k)).collect();
                        writeln!(out, "{}", line.join(","))?;
                        header = Some(keys);
                    }
                    Some(h) if *h != keys => {
                        return Err(BenchError::Invalid("records do not share one set of fields".into()));
                    }
                    Some(_) => {}
                }
                let line: Vec<String> = cells.iter().map(|(_, v)| csv_cell(v)).collect();
                writeln!(out, "{}", line.join(","))?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trajectory_round_trip_is_exact() {
        let pts = vec![DVector::from_vec(vec![0.1, 1.0 / 3.0]), DVector::from_vec(vec![-2.5e-17, 3.0])];
        let t = Trajectory::new(Space::Joint, vec![0.0, 0.1], pts).unwrap();
        let mut buf = Vec::new();
        write_trajectory(&t, Some(ChainModel::Planar2), &mut buf).unwrap();
        let (back, chain) = read_trajectory(buf.as_slice()).unwrap();
        assert_eq!(back, t);
        assert_eq!(chain, Some(ChainModel::Planar2));
    }

    #[test]
    fn non_monotone_time_names_line() {
        let text = format!("{TRAJECTORY_HEADER}\nspace task\nchain none\ndim 1\n0.0 1\n0.2 2\n0.1 3\n");
        match read_trajectory(text.as_bytes()).unwrap_err() {
            BenchError::Parse { line, field, .. } => {
                assert_eq!(line, 7);
                assert_eq!(field, "time");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn grid_bad_flag_names_line() {
        let text = format!("{GRID_HEADER}\ndim 1\nlower 0\nupper 1\nresolution 2\npenalty 5\nvalues 2\n0.5 1\n5 x\n");
        match read_grid(text.as_bytes()).unwrap_err() {
            BenchError::Parse { line, field, .. } => assert_eq!((line, field.as_str()), (9, "node")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_flattens_arrays_and_options() {
        #[derive(Serialize)]
        struct R {
            a: f64,
            b: Vec<f64>,
            c: Option<u8>,
        }
        let mut buf = Vec::new();
        write_records(&[R { a: 1.5, b: vec![1.0, 2.0], c: None }], ReportFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b,c\n1.5,1.0;2.0,\n");
    }
}
