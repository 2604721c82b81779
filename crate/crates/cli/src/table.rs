//! CSV traces: fixed 17-significant-digit formatting and `\n` line endings.

use std::collections::BTreeMap;
use std::path::Path;

use retarda::{GridFn, GridSpec, History, MatrixTrajectory, Trajectory, Vector};

use crate::error::CliError;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes a header and numeric rows.
pub fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.into_iter().map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_header(n: usize) -> Vec<String> {
    std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("x_{i}"))).collect()
}

/// One row per node from `-r` to `T`; a node where the path jumps gets its
/// left limit on an extra row just before it.
pub fn trace_rows(x: &Trajectory) -> Vec<Vec<f64>> {
    let grid = x.grid();
    let path = x.path();
    let mut rows = Vec::with_capacity(grid.n_nodes() + path.left_limits().len());
    for g in 0..grid.n_nodes() {
        let t = grid.time(g);
        let row = |v: &Vector| std::iter::once(t).chain(v.iter().copied()).collect::<Vec<_>>();
        if let Some(left) = path.left_limits().get(&g) {
            rows.push(row(left));
        }
        rows.push(row(path.at(g)));
    }
    rows
}

pub fn write_trace(path: &Path, x: &Trajectory) -> Result<(), CliError> {
    write_rows(path, &trace_header(x.dim()), trace_rows(x))
}

/// `t, X_11, X_12, …, X_nn` on the horizon, rows of `X` in order.
pub fn write_fundamental(path: &Path, x: &MatrixTrajectory) -> Result<(), CliError> {
    let n = x.dim();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=n).flat_map(|i| (1..=n).map(move |j| format!("X_{i}{j}"))))
        .collect();
    let h = x.grid().h();
    let rows = (0..=x.grid().n_steps()).map(|i| {
        let m = x.step(i);
        std::iter::once(i as f64 * h)
            .chain((0..n).flat_map(|r| (0..n).map(move |c| m[(r, c)])))
            .collect()
    });
    write_rows(path, &header, rows)
}

/// A trace read back from CSV: node index to the values seen there, in file order.
#[derive(Debug, Clone)]
pub struct Trace {
    times: Vec<f64>,
    rows: Vec<Vector>,
}

pub fn read_trace(path: &Path, n: usize) -> Result<Trace, String> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let header = r.headers().map_err(|e| e.to_string())?.clone();
    let expect = trace_header(n);
    if header.len() < n + 1 || header.iter().take(n + 1).ne(expect.iter().map(String::as_str)) {
        return Err(format!(
            "{} does not start with the columns {}",
            path.display(),
            expect.join(",")
        ));
    }
    let mut times = Vec::new();
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let parse = |c: usize| -> Result<f64, String> {
            let s = rec.get(c).unwrap_or("");
            s.trim().parse::<f64>().map_err(|_| format!("row {}: column {} holds {s:?}", k + 1, c + 1))
        };
        times.push(parse(0)?);
        rows.push(Vector::from_iterator(n, (1..=n).map(parse).collect::<Result<Vec<_>, _>>()?));
    }
    Ok(Trace { times, rows })
}

impl Trace {
    /// Rows grouped by grid node; more than two rows at a node is an error.
    fn by_node(&self, grid: &GridSpec) -> Result<BTreeMap<usize, Vec<&Vector>>, String> {
        let mut map: BTreeMap<usize, Vec<&Vector>> = BTreeMap::new();
        let n0 = grid.zero_index() as f64;
        for (t, v) in self.times.iter().zip(&self.rows) {
            let pos = t / grid.h() + n0;
            let g = pos.round();
            if g < 0.0 || (g - pos).abs() > 1e-6 {
                return Err(format!("time {t} is not a node of the grid"));
            }
            let entry = map.entry(g as usize).or_default();
            entry.push(v);
            if entry.len() > 2 {
                return Err(format!("time {t} appears more than twice"));
            }
        }
        Ok(map)
    }

    /// The rows on `[-r, 0]` as a history on `grid`.
    pub fn history(&self, grid: &GridSpec) -> Result<History, String> {
        let map = self.by_node(grid)?;
        let n = grid.n_hist();
        let mut samples = Vec::with_capacity(n + 1);
        for j in 0..=n {
            let rows = map.get(&j).ok_or_else(|| format!("no row at t = {}", grid.time(j)))?;
            samples.push(rows[0].clone());
        }
        let at_zero = map[&n].last().copied().cloned().expect("checked above");
        History::new(grid, samples, at_zero).map_err(|e| e.to_string())
    }

    /// The rows on `[0, T]` as a grid function; a doubled node keeps its first row as the left limit.
    pub fn horizon(&self, grid: &GridSpec) -> Result<GridFn<Vector>, String> {
        let map = self.by_node(grid)?;
        let zero = grid.zero_index();
        let mut values = Vec::with_capacity(grid.n_steps() + 1);
        let mut lefts = Vec::new();
        for i in 0..=grid.n_steps() {
            let rows = map
                .get(&(zero + i))
                .ok_or_else(|| format!("no row at t = {}", grid.time(zero + i)))?;
            values.push(rows[rows.len() - 1].clone());
            if rows.len() == 2 && i > 0 {
                lefts.push((i, rows[0].clone()));
            }
        }
        let mut f = GridFn::new(grid.h(), values);
        for (i, v) in lefts {
            f.set_left_limit(i, v);
        }
        Ok(f)
    }
}
