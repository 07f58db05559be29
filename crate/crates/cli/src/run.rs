//! Command execution and CSV rendering.
//!
//! Every CSV starts with `# spinpoint-csv v1 <command>`, followed by a column
//! header. Floats are written with Rust's shortest round-trip formatting, so the
//! same config always yields the same bytes regardless of thread count.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use spinpoint::bands::{dispersion, BandDiagram};
use spinpoint::device::{spectrum, Device, SpectrumTable};
use spinpoint::extension::{conserves_currents, defect_matrix, CurrentComponent};
use spinpoint::scattering::{transfer_to_scattering, Channel, ScatteringMatrix};
use spinpoint::{DefectSpec, Error};

use crate::config::{Command, RunConfig, System};
use crate::error::{CliError, CliResult};

pub const CSV_MAGIC: &str = "# spinpoint-csv v1";

/// Rendered results of one command.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub command: Command,
    pub csv: String,
    /// Plain-text report (`check` only).
    pub report: Option<String>,
}

impl Outcome {
    /// Writes the CSV to `out` (and the report next to it), or prints to stdout.
    pub fn write(&self, out: Option<&Path>) -> CliResult<()> {
        if let Some(report) = &self.report {
            print!("{report}");
        }
        match out {
            Some(path) => {
                fs::write(path, &self.csv).map_err(|e| CliError::io(path, e))?;
                if let Some(report) = &self.report {
                    let report_path = report_path(path);
                    fs::write(&report_path, report).map_err(|e| CliError::io(report_path, e))?;
                }
            }
            None if self.report.is_none() => print!("{}", self.csv),
            None => {}
        }
        Ok(())
    }
}

/// `results/check.csv` → `results/check.report.txt`.
pub fn report_path(out: &Path) -> PathBuf {
    out.with_extension("report.txt")
}

/// Runs a validated config.
pub fn run(config: &RunConfig) -> CliResult<Outcome> {
    config.validate()?;
    let system = config.system()?;
    let (csv, report) = match (config.command, system) {
        (Command::Check, System::Defect(defect)) => {
            let (csv, report) = check(&defect, config.tolerances.current)?;
            (csv, Some(report))
        }
        (Command::Scatter, System::Device(device)) => (scatter(&device, &config.sweep.grid()?, config)?, None),
        (Command::Device, System::Device(device)) => {
            let table = spectrum(
                &device,
                &config.sweep.grid()?,
                config.incident,
                config.tolerances.sigma_x,
            )?;
            (spectrum_csv(&table), None)
        }
        (Command::Bands, System::Comb(comb)) => {
            let diagram = dispersion(&comb, &config.sweep.grid()?, config.tolerances.propagating)?;
            (bands_csv(&diagram), None)
        }
        (command, _) => unreachable!("validate() pairs `{command}` with its system"),
    };
    Ok(Outcome {
        command: config.command,
        csv,
        report,
    })
}

fn preamble(command: Command, columns: &[&str]) -> String {
    format!("{CSV_MAGIC} {command}\n{}\n", columns.join(","))
}

fn flag(b: bool) -> u8 {
    u8::from(b)
}

fn check(defect: &DefectSpec, tol: f64) -> CliResult<(String, String)> {
    let m = defect_matrix(defect)?;
    let report = conserves_currents(&m, tol);
    let components = [CurrentComponent::X, CurrentComponent::Y, CurrentComponent::Z];
    let verdict = |c| if report.passes(c) { "pass" } else { "fail" };

    let mut csv = preamble(Command::Check, &["component", "residual", "pass"]);
    for c in components {
        writeln!(csv, "{c:?},{:?},{}", report.residual(c), flag(report.passes(c))).unwrap();
    }

    let summary: Vec<String> = components.iter().map(|&c| format!("{c:?}: {}", verdict(c))).collect();
    let residuals: Vec<String> = components
        .iter()
        .map(|&c| format!("{c:?} {:e}", report.residual(c)))
        .collect();
    let text = format!(
        "defect: {defect}\n{}\nresiduals: {} (tolerance {tol:e})\n",
        summary.join(", "),
        residuals.join(", ")
    );
    Ok((csv, text))
}

fn short(c: Channel) -> &'static str {
    match c {
        Channel::LeftUp => "lu",
        Channel::LeftDown => "ld",
        Channel::RightUp => "ru",
        Channel::RightDown => "rd",
    }
}

/// Column names of the `scatter` CSV; `s_<out>_<in>_{re,im}` in channel order.
pub fn scatter_columns() -> Vec<String> {
    let mut columns = vec!["k".to_string(), "E".to_string()];
    for out in Channel::ALL {
        for inc in Channel::ALL {
            for part in ["re", "im"] {
                columns.push(format!("s_{}_{}_{part}", short(out), short(inc)));
            }
        }
    }
    columns.push("unitarity_residual".into());
    columns.push("singular".into());
    columns
}

fn scatter(device: &Device, grid: &[f64], config: &RunConfig) -> CliResult<String> {
    let tol = config.tolerances.sigma_x;
    let rows = grid
        .par_iter()
        .map(|&k| {
            let t = spinpoint::device::total_transfer(device, k)?;
            match transfer_to_scattering(&t, k, tol) {
                Ok(s) => Ok(Some(s)),
                Err(Error::SpectralSingularity { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<Option<ScatteringMatrix>>, Error>>()?;

    let columns = scatter_columns();
    let refs: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut csv = preamble(Command::Scatter, &refs);
    for (&k, row) in grid.iter().zip(rows) {
        write!(csv, "{k:?},{:?}", k * k).unwrap();
        match row {
            Some(s) => {
                for out in Channel::ALL {
                    for inc in Channel::ALL {
                        let z = s.amplitude(out, inc);
                        write!(csv, ",{:?},{:?}", z.re, z.im).unwrap();
                    }
                }
                writeln!(csv, ",{:?},0", s.unitarity_residual()).unwrap();
            }
            None => {
                csv.push_str(&",NaN".repeat(33));
                csv.push_str(",1\n");
            }
        }
    }
    Ok(csv)
}

pub const SPECTRUM_COLUMNS: [&str; 9] = [
    "k",
    "E",
    "p_left_up",
    "p_left_down",
    "p_right_up",
    "p_right_down",
    "spin_flip",
    "unitarity_residual",
    "singular",
];

pub fn spectrum_csv(table: &SpectrumTable) -> String {
    let mut csv = format!("{CSV_MAGIC} device incident={}\n", table.incident.name());
    csv.push_str(&SPECTRUM_COLUMNS.join(","));
    csv.push('\n');
    for (row, flip) in table.rows.iter().zip(table.spin_flip()) {
        write!(csv, "{:?},{:?}", row.k, row.energy).unwrap();
        for p in row.probabilities {
            write!(csv, ",{p:?}").unwrap();
        }
        writeln!(csv, ",{flip:?},{:?},{}", row.unitarity_residual, flag(row.singular)).unwrap();
    }
    csv
}

pub const BANDS_COLUMNS: [&str; 5] = ["k", "E", "q", "branch_id", "lambda_residual"];

/// One row per propagating Bloch mode, in grid order.
///
/// Modes with `q < 0` carry the id of their `+q` partner; modes at momenta where
/// the cell matrix is defective have `branch_id = -1` and are listed again in
/// trailing `# defective k = ...` comments.
pub fn bands_csv(diagram: &BandDiagram) -> String {
    let mut by_k: HashMap<u64, Vec<(f64, usize)>> = HashMap::new();
    for branch in &diagram.branches {
        for p in &branch.points {
            by_k.entry(p.k.to_bits()).or_default().push((p.q, branch.id));
        }
    }
    let zone = std::f64::consts::PI / diagram.period;
    let branch_of = |k: f64, q: f64| -> i64 {
        by_k.get(&k.to_bits())
            .and_then(|candidates| {
                candidates
                    .iter()
                    .map(|&(qb, id)| ((qb - q.abs()).abs(), id))
                    .filter(|(d, _)| *d < 1e-6 * zone)
                    .min_by(|a, b| a.0.total_cmp(&b.0))
            })
            .map_or(-1, |(_, id)| id as i64)
    };

    let mut csv = preamble(Command::Bands, &BANDS_COLUMNS);
    for p in &diagram.points {
        writeln!(
            csv,
            "{:?},{:?},{:?},{},{:?}",
            p.k,
            p.energy,
            p.q,
            branch_of(p.k, p.q),
            p.lambda_residual
        )
        .unwrap();
    }
    for k in &diagram.flagged_k {
        writeln!(csv, "# defective k = {k:?}").unwrap();
    }
    csv
}
