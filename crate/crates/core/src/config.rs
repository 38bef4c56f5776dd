//! Flat `key = value` experiment configuration.
//!
//! The same key/value list is echoed into the first line of every output
//! file, so an output header parses back into an equivalent configuration.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::params::LatticeParams;
use crate::wave::DEFAULT_POINTS_PER_CELL;

/// Desk-scale lattice size and run length.
pub const DESK_CELLS: usize = 269;
pub const DESK_PERIODS: usize = 200;
/// Sizes enabled by `--full`.
pub const FULL_CELLS: usize = 1079;
pub const FULL_PERIODS: usize = 1500;

/// Prefix of the parameter header line.
pub const HEADER_PREFIX: &str = "# mixedlattice";

/// Lossless decimal form of a 64-bit float (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub params: LatticeParams,
    pub n_cells: usize,
    pub n_points_per_cell: usize,
    pub beta_fine_samples: usize,
    pub n_periods: usize,
    /// Initial site; `(n_cells - 1) / 2` when unset.
    pub n0: Option<usize>,
    pub output_dir: PathBuf,
    pub seed: u64,
    /// Classical finite-time Lyapunov horizon, in drive periods.
    pub horizon: usize,
    /// Seeds per axis of the island-area grid.
    pub island_resolution: usize,
    /// Stroboscopic points per portrait orbit.
    pub portrait_periods: usize,
    /// Portrait seeds along the momentum axis.
    pub portrait_seeds: usize,
    pub stats_n_min: usize,
    pub stats_n_max: usize,
    /// Extra `(gamma, epsilon, heff)` sets pooled by the statistics command.
    pub sweep: Vec<(f64, f64, f64)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            params: LatticeParams::reference(),
            n_cells: DESK_CELLS,
            n_points_per_cell: DEFAULT_POINTS_PER_CELL,
            beta_fine_samples: 4096,
            n_periods: DESK_PERIODS,
            n0: None,
            output_dir: PathBuf::from("out"),
            seed: 1,
            horizon: crate::classical::DEFAULT_HORIZON,
            island_resolution: 60,
            portrait_periods: 300,
            portrait_seeds: 24,
            stats_n_min: 200,
            stats_n_max: 2000,
            sweep: Vec::new(),
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value for {key}: {value:?}")))
}

fn parse_sweep(value: &str) -> Result<Vec<(f64, f64, f64)>> {
    let value = value.trim();
    if value.is_empty() || value == "none" {
        return Ok(Vec::new());
    }
    value
        .split(';')
        .map(|set| {
            let parts: Vec<&str> = set.split(':').collect();
            if parts.len() != 3 {
                return Err(Error::Parse(format!(
                    "sweep entry {set:?} is not gamma:epsilon:heff"
                )));
            }
            Ok((
                parse("sweep", parts[0])?,
                parse("sweep", parts[1])?,
                parse("sweep", parts[2])?,
            ))
        })
        .collect()
}

impl ExperimentConfig {
    /// Large lattice and long run.
    pub fn full(self) -> Self {
        Self {
            n_cells: FULL_CELLS,
            n_periods: FULL_PERIODS,
            ..self
        }
    }

    pub fn n0(&self) -> usize {
        self.n0.unwrap_or((self.n_cells.saturating_sub(1)) / 2)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "gamma" => self.params.gamma = parse(key, value)?,
            "epsilon" => self.params.epsilon = parse(key, value)?,
            "heff" => self.params.heff = parse(key, value)?,
            "dt" => self.params.dt = parse(key, value)?,
            "floquet_periods" => self.params.floquet_periods = parse(key, value)?,
            "n_cells" => self.n_cells = parse(key, value)?,
            "n_points_per_cell" => self.n_points_per_cell = parse(key, value)?,
            "beta_fine_samples" => self.beta_fine_samples = parse(key, value)?,
            "n_periods" => self.n_periods = parse(key, value)?,
            "n0" => {
                self.n0 = match value.trim() {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "output_dir" => self.output_dir = PathBuf::from(value.trim()),
            "seed" => self.seed = parse(key, value)?,
            "horizon" => self.horizon = parse(key, value)?,
            "island_resolution" => self.island_resolution = parse(key, value)?,
            "portrait_periods" => self.portrait_periods = parse(key, value)?,
            "portrait_seeds" => self.portrait_seeds = parse(key, value)?,
            "stats_n_min" => self.stats_n_min = parse(key, value)?,
            "stats_n_max" => self.stats_n_max = parse(key, value)?,
            "sweep" => self.sweep = parse_sweep(value)?,
            _ => return Err(Error::Parse(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Parse(format!("line {}: expected key = value", lineno + 1))
            })?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let counts = [
            ("n_cells", self.n_cells),
            ("n_points_per_cell", self.n_points_per_cell),
            ("beta_fine_samples", self.beta_fine_samples),
            ("n_periods", self.n_periods),
            ("horizon", self.horizon),
            ("island_resolution", self.island_resolution),
            ("portrait_periods", self.portrait_periods),
            ("portrait_seeds", self.portrait_seeds),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        if self.horizon < crate::classical::MIN_HORIZON {
            return Err(Error::InvalidParams(format!(
                "horizon must be at least {} periods",
                crate::classical::MIN_HORIZON
            )));
        }
        if self.n_points_per_cell % 2 != 0 {
            return Err(Error::InvalidParams(
                "n_points_per_cell must be even".into(),
            ));
        }
        if self.n0() >= self.n_cells {
            return Err(Error::InvalidParams(format!(
                "n0 = {} outside {} cells",
                self.n0(),
                self.n_cells
            )));
        }
        if self.stats_n_min >= self.stats_n_max {
            return Err(Error::InvalidParams(
                "stats_n_min must be below stats_n_max".into(),
            ));
        }
        Ok(())
    }

    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        let sweep = if self.sweep.is_empty() {
            "none".to_string()
        } else {
            self.sweep
                .iter()
                .map(|(g, e, h)| format!("{}:{}:{}", fmt_f64(*g), fmt_f64(*e), fmt_f64(*h)))
                .collect::<Vec<_>>()
                .join(";")
        };
        vec![
            ("gamma", fmt_f64(p.gamma)),
            ("epsilon", fmt_f64(p.epsilon)),
            ("heff", fmt_f64(p.heff)),
            ("dt", fmt_f64(p.dt)),
            ("floquet_periods", p.floquet_periods.to_string()),
            ("n_cells", self.n_cells.to_string()),
            ("n_points_per_cell", self.n_points_per_cell.to_string()),
            ("beta_fine_samples", self.beta_fine_samples.to_string()),
            ("n_periods", self.n_periods.to_string()),
            ("n0", self.n0.map_or("auto".to_string(), |n| n.to_string())),
            ("output_dir", self.output_dir.display().to_string()),
            ("seed", self.seed.to_string()),
            ("horizon", self.horizon.to_string()),
            ("island_resolution", self.island_resolution.to_string()),
            ("portrait_periods", self.portrait_periods.to_string()),
            ("portrait_seeds", self.portrait_seeds.to_string()),
            ("stats_n_min", self.stats_n_min.to_string()),
            ("stats_n_max", self.stats_n_max.to_string()),
            ("sweep", sweep),
        ]
    }

    /// Single comment line echoing every key, e.g.
    /// `# mixedlattice gamma=... epsilon=... t_f=...`.
    /// The derived Floquet time is appended for readers and ignored on parse.
    pub fn header_line(&self) -> String {
        let mut s = String::from(HEADER_PREFIX);
        for (k, v) in self.pairs() {
            let _ = write!(s, " {k}={v}");
        }
        let _ = write!(s, " t_f={}", fmt_f64(self.params.floquet_time()));
        s
    }

    pub fn from_header_line(line: &str) -> Result<Self> {
        let body = line
            .strip_prefix(HEADER_PREFIX)
            .ok_or_else(|| Error::Parse("missing parameter header".into()))?;
        let mut c = Self::default();
        for token in body.split_whitespace() {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("bad header token {token:?}")))?;
            if k == "t_f" {
                continue;
            }
            c.set(k, v)?;
        }
        Ok(c)
    }
}
