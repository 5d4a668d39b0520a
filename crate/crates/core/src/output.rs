//! CSV emission. Numbers use the shortest decimal string that reads back
//! to the same `f64`, so reruns are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use crate::estimates::{DecayFit, MonitorRow};
use crate::flow::FlowState;
use crate::fsgeom::LemmaRecord;
use crate::pipeline::{GhRow, SummaryRow};
use crate::{Error, Result};

pub const RUN_SUMMARY_HEADER: [&str; 7] =
    ["t", "fiber_area", "section_area", "volume", "min_v", "max_phi", "dt_last"];
pub const MONITORS_HEADER: [&str; 6] = ["t", "schwarz_inf", "trace_sup", "fiber_diam", "H_sup", "phi_max"];
pub const FIT_HEADER: [&str; 4] = ["exponent", "residual", "window_lo", "window_hi"];
pub const GH_HEADER: [&str; 7] =
    ["t", "epsilon", "max_fiber_diam", "distortion", "sqrt_c", "C2", "cauchy_sup"];
pub const FSLEMMA_HEADER: [&str; 5] = ["r", "seed", "samples", "min_ratio", "bound"];

/// Shortest round-trip decimal form.
pub fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::io(path, source),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_run_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.fiber_area),
                num(r.section_area),
                num(r.volume),
                num(r.min_v),
                num(r.max_phi),
                num(r.dt_last),
            ]
        })
        .collect();
    write_table(path, &RUN_SUMMARY_HEADER, &rows)
}

pub fn write_monitors(path: &Path, rows: &[MonitorRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.schwarz_inf),
                num(r.trace_sup),
                num(r.fiber_diam),
                num(r.h_sup),
                num(r.phi_max),
            ]
        })
        .collect();
    write_table(path, &MONITORS_HEADER, &rows)
}

pub fn write_fit(path: &Path, fit: &DecayFit) -> Result<()> {
    let row = vec![
        num(fit.exponent),
        num(fit.residual),
        num(fit.window_lo),
        num(fit.window_hi),
    ];
    write_table(path, &FIT_HEADER, &[row])
}

pub fn write_gh(path: &Path, rows: &[GhRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.epsilon),
                num(r.max_fiber_diam),
                num(r.distortion),
                num(r.sqrt_c),
                num(r.c2),
                opt(r.cauchy_sup),
            ]
        })
        .collect();
    write_table(path, &GH_HEADER, &rows)
}

pub fn write_fslemma(path: &Path, records: &[LemmaRecord]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.r.to_string(),
                r.seed.to_string(),
                r.samples.to_string(),
                num(r.min_ratio),
                num(r.bound),
            ]
        })
        .collect();
    write_table(path, &FSLEMMA_HEADER, &rows)
}

/// One profile table per snapshot under `dir/profiles`, named by index.
pub fn write_profiles(dir: &Path, snapshots: &[FlowState]) -> Result<Vec<PathBuf>> {
    let sub = dir.join("profiles");
    ensure_dir(&sub)?;
    let mut out = Vec::with_capacity(snapshots.len());
    for (i, s) in snapshots.iter().enumerate() {
        let path = sub.join(format!("profile_{i:03}.csv"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        s.profile.write_csv(&mut w).map_err(|e| Error::io(&path, e))?;
        std::io::Write::flush(&mut w).map_err(|e| Error::io(&path, e))?;
        out.push(path);
    }
    Ok(out)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02214076e23, -0.0, 2.0] {
            assert_eq!(num(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(num(0.5), "0.5");
        assert_eq!(opt(None), "");
    }

    #[test]
    fn table_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_table(&path, &["a", "b"], &[vec!["1".into(), "2.5".into()]]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n1,2.5\n");
    }
}
