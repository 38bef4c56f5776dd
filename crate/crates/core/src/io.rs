//! CSV output with a parameter header line, plus a minimal reader for the
//! same format.
//!
//! Every file starts with the configuration header (see
//! [`ExperimentConfig::header_line`]) followed by one column-name line.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::band::BlochBand;
use crate::classical::IslandArea;
use crate::config::{fmt_f64, ExperimentConfig};
use crate::effective::{DynamicsComparison, DynamicsRecord, EffectiveModel};
use crate::error::{Error, Result};
use crate::resonance::{FluctuationStats, Resonance};
use crate::wave::HusimiPoint;

pub const PORTRAIT_COLUMNS: [&str; 4] = ["seed_id", "period_index", "x_mod", "p"];
pub const CLASSIFICATION_COLUMNS: [&str; 4] = ["seed_x", "seed_p", "label", "lyapunov"];
pub const HUSIMI_COLUMNS: [&str; 3] = ["x", "p", "density"];
pub const BAND_COLUMNS: [&str; 4] = ["beta", "energy", "overlap", "branch_flag"];
pub const HOPPING_COLUMNS: [&str; 4] = ["n", "re_t", "im_t", "abs_t"];
/// Fourier-transform and asymptotic-law magnitudes side by side.
pub const HOPPING_LAW_COLUMNS: [&str; 3] = ["n", "abs_t", "abs_t_asymptotic"];
pub const RESONANCE_COLUMNS: [&str; 5] = ["beta0", "w", "alpha", "width", "fit_residual"];
pub const HISTOGRAM_COLUMNS: [&str; 2] = ["bin_center", "density"];
pub const COMPARISON_COLUMNS: [&str; 3] = ["time", "l1", "dn2_rel_error"];

/// Column names of a dynamics file on `n_sites` sites.
pub fn dynamics_columns(n_sites: usize) -> Vec<String> {
    let mut c: Vec<String> = ["time", "dn2", "pch"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    c.extend((0..n_sites).map(|n| format!("p_{n}")));
    c
}

/// Writes `header`, the column line and the rows. Rows must match the
/// column count.
pub fn write_csv<S: AsRef<str>>(
    path: &Path,
    header: &str,
    columns: &[S],
    rows: &[Vec<String>],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{header}")?;
    let names: Vec<&str> = columns.iter().map(|c| c.as_ref()).collect();
    writeln!(w, "{}", names.join(","))?;
    for (i, row) in rows.iter().enumerate() {
        if row.len() != names.len() {
            return Err(Error::ShapeMismatch(format!(
                "row {i} has {} fields, expected {}",
                row.len(),
                names.len()
            )));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Parsed CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn f64_column(&self, name: &str) -> Result<Vec<f64>> {
        let k = self
            .column(name)
            .ok_or_else(|| Error::Parse(format!("missing column {name}")))?;
        self.rows
            .iter()
            .map(|r| {
                r[k].parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {:?} in column {name}", r[k])))
            })
            .collect()
    }

    pub fn config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::from_header_line(&self.header)
    }
}

pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{} is empty", path.display())))?
        .to_string();
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{} has no column line", path.display())))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    Ok(CsvTable {
        header,
        columns,
        rows,
    })
}

/// Rows from [`crate::classical::phase_portrait`] output.
pub fn portrait_rows(portrait: &[Vec<(f64, f64)>]) -> Vec<Vec<String>> {
    portrait
        .iter()
        .enumerate()
        .flat_map(|(id, orbit)| {
            orbit.iter().enumerate().map(move |(j, (x, p))| {
                vec![id.to_string(), j.to_string(), fmt_f64(*x), fmt_f64(*p)]
            })
        })
        .collect()
}

pub fn classification_rows(area: &IslandArea) -> Vec<Vec<String>> {
    area.seeds
        .iter()
        .map(|(s, c)| {
            vec![
                fmt_f64(s.x),
                fmt_f64(s.p),
                c.label.as_str().to_string(),
                fmt_f64(c.lyapunov_estimate),
            ]
        })
        .collect()
}

pub fn husimi_rows(points: &[HusimiPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|h| vec![fmt_f64(h.x), fmt_f64(h.p), fmt_f64(h.density)])
        .collect()
}

pub fn band_rows(band: &BlochBand) -> Vec<Vec<String>> {
    let flags = band.branch_flags();
    band.betas
        .iter()
        .zip(&band.energies)
        .zip(&band.overlaps)
        .zip(flags)
        .map(|(((b, e), o), f)| {
            vec![
                fmt_f64(*b),
                fmt_f64(*e),
                fmt_f64(*o),
                u8::from(f).to_string(),
            ]
        })
        .collect()
}

pub fn hopping_rows(model: &EffectiveModel) -> Vec<Vec<String>> {
    model
        .hoppings
        .iter()
        .enumerate()
        .map(|(n, t)| {
            vec![
                n.to_string(),
                fmt_f64(t.re),
                fmt_f64(t.im),
                fmt_f64(t.norm()),
            ]
        })
        .collect()
}

pub fn dynamics_rows(rec: &DynamicsRecord) -> Vec<Vec<String>> {
    (0..rec.n_samples())
        .map(|j| {
            let pch = rec.chaotic_fraction.as_ref().map_or(f64::NAN, |c| c[j]);
            let mut row = vec![fmt_f64(rec.times[j]), fmt_f64(rec.spread[j]), fmt_f64(pch)];
            row.extend(rec.site_probabilities[j].iter().map(|p| fmt_f64(*p)));
            row
        })
        .collect()
}

pub fn comparison_rows(cmp: &DynamicsComparison) -> Vec<Vec<String>> {
    (0..cmp.times.len())
        .map(|j| {
            vec![
                fmt_f64(cmp.times[j]),
                fmt_f64(cmp.l1[j]),
                fmt_f64(cmp.spread_rel_error[j]),
            ]
        })
        .collect()
}

pub fn resonance_rows(resonances: &[Resonance]) -> Vec<Vec<String>> {
    resonances
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.beta0),
                fmt_f64(r.w),
                fmt_f64(r.alpha),
                fmt_f64(r.width),
                fmt_f64(r.fit_residual),
            ]
        })
        .collect()
}

pub fn histogram_rows(stats: &FluctuationStats) -> Vec<Vec<String>> {
    stats
        .bin_centers
        .iter()
        .zip(&stats.density)
        .map(|(c, d)| vec![fmt_f64(*c), fmt_f64(*d)])
        .collect()
}

/// Hoppings back from a file written with [`HOPPING_COLUMNS`].
pub fn hoppings_from_table(table: &CsvTable) -> Result<Vec<Complex64>> {
    let re = table.f64_column("re_t")?;
    let im = table.f64_column("im_t")?;
    Ok(re
        .into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn band_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("band.csv");
        let band = BlochBand {
            betas: vec![0.0, 0.5],
            energies: vec![0.1 + 0.2, -1.0 / 3.0],
            overlaps: vec![0.99, 0.4],
            heff: 0.4,
            t_f: 4.0 * PI,
        };
        let cfg = ExperimentConfig::default();
        write_csv(&path, &cfg.header_line(), &BAND_COLUMNS, &band_rows(&band)).unwrap();
        let t = read_csv(&path).unwrap();
        assert_eq!(t.columns, BAND_COLUMNS);
        assert_eq!(t.f64_column("energy").unwrap(), band.energies);
        assert_eq!(t.rows[1][3], "1");
        assert_eq!(t.config().unwrap(), cfg);
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let r = write_csv(
            &dir.path().join("x.csv"),
            "# h",
            &["a", "b"],
            &[vec!["1".into()]],
        );
        assert!(matches!(r, Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn dynamics_columns_layout() {
        assert_eq!(
            dynamics_columns(2),
            vec!["time", "dn2", "pch", "p_0", "p_1"]
        );
    }
}
