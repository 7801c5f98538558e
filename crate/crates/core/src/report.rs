//! Serialization of run artifacts: versioned CSV tables and JSON reports.
//!
//! CSV files start with a `# schema:` line followed by the header row; float
//! cells use a fixed 17-significant-digit scientific format so identical runs
//! produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::formulation::Trace;
use crate::integrator::FieldName;
use crate::verification::EquivalenceReport;

pub const CSV_SCHEMA_VERSION: &str = "v1";

pub fn fmt_float(v: f64) -> String {
    format!("{v:.17e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

/// Tracks files written by one command so they can be removed if the command
/// fails partway.
#[derive(Default)]
pub struct OutputSet {
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, path: &Path, contents: &str) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
        let mut f = fs::File::create(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        f.write_all(contents.as_bytes()).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Remove everything written so far (called on command failure).
    pub fn remove_all(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.written
    }
}

fn csv_header(kind: &str, columns: &str) -> String {
    format!("# schema: wavelab/{kind}/{CSV_SCHEMA_VERSION}\n{columns}\n")
}

/// Per-step energy table of a run.
pub fn run_csv(trace: &Trace) -> String {
    let mut out = csv_header("run", "step,t,energy,energy_instantaneous");
    for (n, (e, ei)) in trace
        .energies
        .iter()
        .zip(&trace.energies_instantaneous)
        .enumerate()
    {
        out.push_str(&format!(
            "{n},{},{},{}\n",
            fmt_float(n as f64 * trace.dt),
            fmt_float(*e),
            fmt_float(*ei)
        ));
    }
    out
}

/// Final state in long format: field, dof index, value.
pub fn snapshot_csv(trace: &Trace) -> String {
    let mut out = csv_header("snapshot", "field,index,value");
    if let Some(state) = trace.states.last() {
        for (name, stamped) in state.fields() {
            if name == FieldName::VPrev {
                continue;
            }
            for (i, v) in stamped.data.iter().enumerate() {
                out.push_str(&format!("{},{i},{}\n", name.as_str(), fmt_float(*v)));
            }
        }
    }
    out
}

/// Per-step discrepancy table of an equivalence check.
pub fn compare_csv(report: &EquivalenceReport) -> String {
    let mut out = csv_header("compare", "step,t,disc_q,disc_v,disc_sigma,H_A,H_B");
    for s in &report.per_step {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.step,
            fmt_float(s.t),
            fmt_opt(s.disc_q),
            fmt_opt(s.disc_v),
            fmt_opt(s.disc_sigma),
            fmt_float(s.energy_a),
            fmt_float(s.energy_b)
        ));
    }
    out
}

/// Stability scan table.
pub fn cfl_csv(scan: &crate::verification::CflScan) -> String {
    let mut out = csv_header("cfl", "dt,stable,growth");
    for e in &scan.entries {
        out.push_str(&format!(
            "{},{},{}\n",
            fmt_float(e.dt),
            e.stable,
            fmt_float(e.growth)
        ));
    }
    out
}

/// Convergence table with the observed-order column.
pub fn converge_csv(table: &crate::verification::ConvergenceTable) -> String {
    let mut out = csv_header("converge", "h,dt,l2_error,observed_order");
    for i in 0..table.h.len() {
        let order = if i == 0 {
            String::new()
        } else {
            table
                .orders
                .get(i - 1)
                .map(|o| fmt_float(*o))
                .unwrap_or_default()
        };
        out.push_str(&format!(
            "{},{},{},{order}\n",
            fmt_float(table.h[i]),
            fmt_float(table.dt[i]),
            fmt_float(table.errors[i])
        ));
    }
    out
}

/// Serialize a JSON report deterministically (struct field order).
pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization");
    s.push('\n');
    s
}
