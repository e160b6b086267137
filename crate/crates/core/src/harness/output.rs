use std::fs::File;
use std::path::Path;

use crate::baselines::Framework;
use crate::error::{Error, Result};
use crate::inner_ao::Solution;
use crate::scalar::Scalar;

use super::{ResultRow, ResultTable, SweepVariable};

const RESULT_HEADER: [&str; 11] = [
    "framework",
    "sweep",
    "value",
    "trial",
    "seed",
    "min_rate",
    "iterations",
    "wall_time_s",
    "cell_mean",
    "cell_stderr",
    "rates",
];

const TRACE_HEADER: [&str; 5] = ["layer", "iteration", "step", "objective", "accepted"];

/// Shortest decimal form of `x` rounded to 9 significant digits.
pub(crate) fn sig9(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    rounded.to_string()
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str, text: &str) -> Result<T> {
    text.parse()
        .map_err(|_| Error::InvalidArgument(format!("{}: cannot parse {field} from '{text}'", path.display())))
}

/// Writes one row per result with the cell mean and standard error attached.
pub fn emit_csv(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let csv_err = |e| Error::csv(path, e);
    w.write_record(RESULT_HEADER).map_err(csv_err)?;
    for r in &table.rows {
        let cell = table.cell(r.framework, r.value);
        let rates: Vec<String> = r.rates.iter().map(|x| sig9(*x)).collect();
        w.write_record([
            r.framework.name().to_string(),
            table.sweep.name().to_string(),
            sig9(r.value),
            r.trial.to_string(),
            r.seed.to_string(),
            sig9(r.min_rate),
            r.iterations.to_string(),
            sig9(r.wall_time_s),
            sig9(cell.mean),
            sig9(cell.stderr),
            rates.join(";"),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file written by [`emit_csv`]. Failures are not stored in the file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<ResultTable> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let header = rdr.headers().map_err(|e| Error::csv(path, e))?.clone();
    if header.iter().ne(RESULT_HEADER) {
        return Err(Error::InvalidArgument(format!("{}: unexpected header {header:?}", path.display())));
    }
    let mut table = ResultTable::empty(SweepVariable::NumUsers);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        table.sweep = SweepVariable::parse(&rec[1])?;
        let rates = if rec[10].is_empty() {
            Vec::new()
        } else {
            rec[10].split(';').map(|x| parse(path, "rate", x)).collect::<Result<Vec<f64>>>()?
        };
        table.rows.push(ResultRow {
            framework: rec[0].parse::<Framework>()?,
            value: parse(path, "value", &rec[2])?,
            trial: parse(path, "trial", &rec[3])?,
            seed: parse(path, "seed", &rec[4])?,
            min_rate: parse(path, "min_rate", &rec[5])?,
            iterations: parse(path, "iterations", &rec[6])?,
            wall_time_s: parse(path, "wall_time_s", &rec[7])?,
            rates,
        });
    }
    Ok(table)
}

/// One row per (framework, value) cell: mean and standard error of the min rate.
pub fn emit_summary_csv(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let csv_err = |e| Error::csv(path, e);
    w.write_record(["framework", "sweep", "value", "trials", "mean_min_rate", "stderr_min_rate"]).map_err(csv_err)?;
    for (f, v, s) in table.cells() {
        w.write_record([f.name().to_string(), table.sweep.name().to_string(), sig9(v), s.n.to_string(), sig9(s.mean), sig9(s.stderr)])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    /// `inner` or `outer`.
    pub layer: String,
    pub iteration: usize,
    /// Inner block name, or `swap_a_b` for an outer attempt.
    pub step: String,
    pub objective: f64,
    pub accepted: Option<bool>,
}

/// Inner trace (objective after each block) followed by the outer swap attempts.
pub fn emit_trace<T: Scalar>(solution: &Solution<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = writer(path)?;
    let csv_err = |e| Error::csv(path, e);
    w.write_record(TRACE_HEADER).map_err(csv_err)?;
    for p in &solution.inner_trace {
        w.write_record(["inner", &p.iteration.to_string(), p.block.name(), &sig9(p.objective.as_f64()), ""])
            .map_err(csv_err)?;
    }
    for (i, s) in solution.outer_trace.iter().enumerate() {
        w.write_record([
            "outer",
            &(i + 1).to_string(),
            &format!("swap_{}_{}", s.tu_a, s.tu_b),
            &sig9(s.utility.as_f64()),
            if s.accepted { "true" } else { "false" },
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRow>> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::csv(path, e))?;
        out.push(TraceRow {
            layer: rec[0].to_string(),
            iteration: parse(path, "iteration", &rec[1])?,
            step: rec[2].to_string(),
            objective: parse(path, "objective", &rec[3])?,
            accepted: if rec[4].is_empty() { None } else { Some(parse(path, "accepted", &rec[4])?) },
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, ExperimentSpec};
    use crate::scenario::SystemConfig;

    #[test]
    fn sig9_rounding() {
        assert_eq!(sig9(4.0), "4");
        assert_eq!(sig9(0.012345678912345), "0.0123456789");
        assert_eq!(sig9(1.0 / 3.0), "0.333333333");
    }

    #[test]
    fn empty_table_writes_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        emit_csv(&ResultTable::empty(SweepVariable::Elements), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("framework,sweep,value"));
        assert!(read_csv(&path).unwrap().rows.is_empty());
    }

    #[test]
    fn results_round_trip() {
        let base = SystemConfig { elements_y: 2, elements_z: 2, ..Default::default() };
        let spec = ExperimentSpec {
            frameworks: vec![Framework::HybridNomaStar, Framework::TdmaStar],
            sweep: SweepVariable::NumUsers,
            values: vec![1.0, 2.0],
            trials: 2,
            base,
            base_seed: 3,
        };
        let table = run_experiment(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        emit_csv(&table, &a).unwrap();
        let back = read_csv(&a).unwrap();
        assert_eq!(back.rows.len(), table.rows.len());
        for (x, y) in back.rows.iter().zip(&table.rows) {
            assert_eq!(x.framework, y.framework);
            assert!((x.min_rate - y.min_rate).abs() <= 1e-8 * y.min_rate.abs());
            assert_eq!(x.rates.len(), y.rates.len());
        }
        // Values already at 9 digits survive another write and read unchanged.
        emit_csv(&back, &b).unwrap();
        assert_eq!(read_csv(&b).unwrap(), back);
        emit_summary_csv(&table, dir.path().join("s.csv")).unwrap();
    }

    #[test]
    fn unwritable_path_names_the_path() {
        let err = emit_csv(&ResultTable::empty(SweepVariable::NumUsers), "/nonexistent/dir/x.csv").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/x.csv"));
    }
}
