//! Subcommand bodies. Every CSV starts with the configuration header; JSON
//! summaries sit next to the tables they describe.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use mixedlattice_core::band::{extract_effective_band, BandOptions, BlochBand, FloquetProbe};
use mixedlattice_core::cache::FloquetCache;
use mixedlattice_core::classical::{
    default_p_window, island_area_estimate, phase_portrait, separatrix_area, ClassicalState,
    OrbitLabel,
};
use mixedlattice_core::config::{fmt_f64, ExperimentConfig};
use mixedlattice_core::effective::{
    compare_dynamics, hoppings_from_band, run_effective_dynamics, run_exact_dynamics_with,
    DynamicsRecord, EffectiveModel,
};
use mixedlattice_core::io::{self, read_csv, write_csv};
use mixedlattice_core::params::LatticeParams;
use mixedlattice_core::propagator::{bloch_betas, wannier_states};
use mixedlattice_core::resonance::{
    asymptotic_hoppings, detect_resonances, fluctuation_statistics, hopping_slope, rabi_validity,
    rescaled_amplitudes, typical_ratio, DetectOptions, FluctuationInput, Resonance,
};
use mixedlattice_core::wave::{harmonic_width, husimi, Grid, PhaseSpaceMesh, WaveState};
use mixedlattice_core::{Error, Result};
use serde_json::{json, Value};

use crate::Mode;

/// Environment variable naming the Floquet-matrix cache directory.
pub const CACHE_ENV: &str = "MIXEDLATTICE_CACHE";

pub struct Context {
    config: ExperimentConfig,
    cache: Option<FloquetCache>,
}

/// Hoppings, fitted crossings and the hopping-law summary of one fine band.
struct FineAnalysis {
    model: EffectiveModel,
    resonances: Vec<Resonance>,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        let cache = match std::env::var_os(CACHE_ENV) {
            Some(dir) if !dir.is_empty() => Some(FloquetCache::new(PathBuf::from(dir))?),
            _ => None,
        };
        fs::create_dir_all(&config.output_dir)?;
        Ok(Self { config, cache })
    }

    pub fn log_cache(&self) {
        if let Some(c) = &self.cache {
            info!(
                "cache {}: {} hits, {} misses",
                c.dir().display(),
                c.hits(),
                c.misses()
            );
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    fn write<S: AsRef<str>>(&self, name: &str, columns: &[S], rows: &[Vec<String>]) -> Result<()> {
        let path = self.path(name);
        write_csv(&path, &self.config.header_line(), columns, rows)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Parse(format!("json encoding failed: {e}")))?;
        fs::write(&path, text + "\n")?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn params(&self) -> LatticeParams {
        self.config.params
    }

    fn band_options(&self) -> BandOptions<'_> {
        BandOptions {
            n_points: self.config.n_points_per_cell,
            cache: self.cache.as_ref(),
            ..BandOptions::default()
        }
    }

    fn probe(&self, params: LatticeParams) -> FloquetProbe<'_> {
        FloquetProbe {
            params,
            n_points: self.config.n_points_per_cell,
            cache: self.cache.as_ref(),
        }
    }

    fn compute_fine_band(&self, params: &LatticeParams) -> Result<BlochBand> {
        let n = self.config.beta_fine_samples;
        info!(
            "band: {n} quasi-momenta at gamma={} epsilon={} heff={}",
            params.gamma, params.epsilon, params.heff
        );
        extract_effective_band(params, &bloch_betas(n), &self.band_options())
    }

    /// Fine band of the configured parameters, read back from `band.csv`
    /// when that file was written for the same band inputs.
    fn fine_band(&self) -> Result<BlochBand> {
        let path = self.path("band.csv");
        if let Some(band) = self.load_band(&path)? {
            info!("reusing {}", path.display());
            return Ok(band);
        }
        self.compute_fine_band(&self.params())
    }

    fn load_band(&self, path: &Path) -> Result<Option<BlochBand>> {
        if !path.exists() {
            return Ok(None);
        }
        let table = read_csv(path)?;
        let Ok(stored) = table.config() else {
            return Ok(None);
        };
        if !same_band_inputs(&stored, &self.config) {
            return Ok(None);
        }
        let p = self.params();
        Ok(Some(BlochBand {
            betas: table.f64_column("beta")?,
            energies: table.f64_column("energy")?,
            overlaps: table.f64_column("overlap")?,
            heff: p.heff,
            t_f: p.floquet_time(),
        }))
    }

    fn analyse(&self, params: &LatticeParams, band: &BlochBand) -> Result<FineAnalysis> {
        let model = hoppings_from_band(band)?;
        let resonances = detect_resonances(band, &self.probe(*params), &DetectOptions::default())?;
        info!("{} avoided crossings", resonances.len());
        Ok(FineAnalysis { model, resonances })
    }

    pub fn phase_portrait(&self) -> Result<()> {
        let c = &self.config;
        let p = self.params();
        let p_max = default_p_window(&p);
        let seeds: Vec<ClassicalState> = (0..c.portrait_seeds)
            .map(|k| ClassicalState::new(0.0, (k as f64 + 0.5) * p_max / c.portrait_seeds as f64))
            .collect();
        let portrait = phase_portrait(&seeds, c.portrait_periods, &p);
        self.write(
            "portrait.csv",
            &io::PORTRAIT_COLUMNS,
            &io::portrait_rows(&portrait),
        )?;

        info!(
            "classifying {} seeds over {} periods",
            c.island_resolution * c.island_resolution,
            c.horizon
        );
        let area = island_area_estimate(&p, c.island_resolution, c.horizon)?;
        self.write(
            "classification.csv",
            &io::CLASSIFICATION_COLUMNS,
            &io::classification_rows(&area),
        )?;

        // regular Floquet state at beta = 0
        let spectrum = self.probe(p).spectrum(0.0)?;
        let best = spectrum.by_overlap()[0];
        let grid = Grid::cell(c.n_points_per_cell, p.heff)?;
        let state =
            WaveState::position(spectrum.eigenstates.column(best).iter().copied().collect());
        let mesh = PhaseSpaceMesh::uniform((-PI, PI), 65, (-p_max, p_max), 49);
        let density = husimi(&state, &grid, &mesh, harmonic_width(p.heff, p.gamma))?;
        self.write(
            "husimi.csv",
            &io::HUSIMI_COLUMNS,
            &io::husimi_rows(&density),
        )?;

        let count = |l: OrbitLabel| area.seeds.iter().filter(|(_, o)| o.label == l).count();
        self.write_json(
            "island_area.json",
            &json!({
                "area": area.area,
                "fraction": area.fraction,
                "p_max": area.p_max,
                "resolution": area.resolution,
                "horizon": c.horizon,
                "separatrix_area": separatrix_area(p.gamma),
                "heff": p.heff,
                "heff_below_area": p.heff < area.area,
                "n_regular": count(OrbitLabel::Regular),
                "n_chaotic": count(OrbitLabel::Chaotic),
                "regular_overlap": spectrum.regular_overlaps[best],
            }),
        )
    }

    pub fn band(&self) -> Result<()> {
        let band = self.compute_fine_band(&self.params())?;
        info!(
            "bandwidth {:e}, minimum overlap {:.4}",
            band.bandwidth(),
            band.min_overlap()
        );
        self.write("band.csv", &io::BAND_COLUMNS, &io::band_rows(&band))
    }

    pub fn hoppings(&self) -> Result<()> {
        let band = self.fine_band()?;
        let model = hoppings_from_band(&band)?;
        self.write(
            "hoppings.csv",
            &io::HOPPING_COLUMNS,
            &io::hopping_rows(&model),
        )?;
        let t = &model.hoppings;
        let at = |n: usize| t.get(n).map_or(0.0, |z| z.norm());
        let slope = (t.len() > 1000).then(|| hopping_slope(t, 10, 500));
        self.write_json(
            "hoppings.json",
            &json!({
                "n_samples": t.len(),
                "abs_t1": at(1),
                "abs_t2": at(2),
                "t2_over_t1": at(2) / at(1),
                "slope_10_500": slope,
            }),
        )
    }

    pub fn dynamics(&self, mode: Mode) -> Result<()> {
        let c = &self.config;
        let p = self.params();
        let n0 = c.n0();
        let exact = if mode == Mode::Effective {
            None
        } else {
            let grid = Grid::new(c.n_cells, c.n_points_per_cell, p.heff)?;
            info!("exact run: {} cells, {} periods", c.n_cells, c.n_periods);
            let basis = wannier_states(&p, &grid)?;
            let rec = run_exact_dynamics_with(&p, &basis, n0, c.n_periods)?;
            self.write_dynamics("dynamics_exact.csv", &rec)?;
            Some(rec)
        };
        let effective = if mode == Mode::Exact {
            None
        } else {
            let band = extract_effective_band(&p, &bloch_betas(c.n_cells), &self.band_options())?;
            let model = hoppings_from_band(&band)?;
            let rec = run_effective_dynamics(&model, n0, c.n_periods)?;
            self.write_dynamics("dynamics_effective.csv", &rec)?;
            Some(rec)
        };
        let (Some(exact), Some(effective)) = (exact, effective) else {
            return Ok(());
        };
        let cmp = compare_dynamics(&exact, &effective)?;
        self.write(
            "comparison.csv",
            &io::COMPARISON_COLUMNS,
            &io::comparison_rows(&cmp),
        )?;
        let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
        let pch = exact.chaotic_fraction.as_deref().unwrap_or_default();
        self.write_json(
            "comparison.json",
            &json!({
                "n_samples": cmp.times.len(),
                "max_l1": cmp.max_l1(),
                "max_pch": max(pch),
                "max_dn2_rel_error": max(&cmp.spread_rel_error),
                "final_dn2_exact": exact.spread.last(),
                "final_dn2_effective": effective.spread.last(),
            }),
        )
    }

    fn write_dynamics(&self, name: &str, rec: &DynamicsRecord) -> Result<()> {
        self.write(
            name,
            &io::dynamics_columns(rec.n_sites()),
            &io::dynamics_rows(rec),
        )
    }

    pub fn resonances(&self) -> Result<()> {
        let p = self.params();
        let band = self.fine_band()?;
        let fine = self.analyse(&p, &band)?;
        self.write(
            "resonances.csv",
            &io::RESONANCE_COLUMNS,
            &io::resonance_rows(&fine.resonances),
        )?;
        let t = &fine.model.hoppings;
        let ns: Vec<usize> = (1..=t.len() / 2).collect();
        let law = asymptotic_hoppings(&fine.resonances, &ns);
        let rows: Vec<Vec<String>> = ns
            .iter()
            .zip(&law)
            .map(|(&n, a)| vec![n.to_string(), fmt_f64(t[n].norm()), fmt_f64(a.norm())])
            .collect();
        self.write("hopping_law.csv", &io::HOPPING_LAW_COLUMNS, &rows)?;
        let window: Vec<usize> = (50..=500.min(t.len() / 2)).collect();
        let ratio = (!fine.resonances.is_empty() && window.len() > 1).then(|| {
            let ft: Vec<_> = window.iter().map(|&n| t[n]).collect();
            typical_ratio(&asymptotic_hoppings(&fine.resonances, &window), &ft)
        });
        let rabi = rabi_validity(&fine.resonances, &fine.model)
            .ok()
            .map(|r| serde_json::to_value(r).unwrap_or(Value::Null));
        self.write_json(
            "resonances.json",
            &json!({
                "n_resonances": fine.resonances.len(),
                "slope_10_500": (t.len() > 1000).then(|| hopping_slope(t, 10, 500)),
                "typical_ratio_50_500": ratio,
                "rabi": rabi,
            }),
        )
    }

    pub fn stats(&self) -> Result<()> {
        let c = &self.config;
        let base = self.params();
        let mut sets = vec![(base, self.fine_band()?)];
        for &(gamma, epsilon, heff) in &c.sweep {
            let p = LatticeParams {
                gamma,
                epsilon,
                heff,
                ..base
            };
            let band = self.compute_fine_band(&p)?;
            sets.push((p, band));
        }
        let mut inputs = Vec::with_capacity(sets.len());
        let mut per_set = Vec::with_capacity(sets.len());
        for (p, band) in &sets {
            let fine = self.analyse(p, band)?;
            let input = FluctuationInput {
                rescaled: rescaled_amplitudes(&fine.model.hoppings, c.stats_n_min, c.stats_n_max)?,
                n_res: fine.resonances.len(),
            };
            let own = fluctuation_statistics(std::slice::from_ref(&input), c.seed)?;
            per_set.push(json!({
                "gamma": p.gamma,
                "epsilon": p.epsilon,
                "heff": p.heff,
                "n_resonances": fine.resonances.len(),
                "n_samples": own.n_samples,
                "ks_distance": own.ks_distance,
                "critical_value": own.critical_value,
                "verdict": own.verdict,
            }));
            inputs.push(input);
        }
        let pooled = fluctuation_statistics(&inputs, c.seed)?;
        info!(
            "pooled KS {:.4} (critical {:.4}): {}",
            pooled.ks_distance, pooled.critical_value, pooled.verdict
        );
        self.write(
            "histogram.csv",
            &io::HISTOGRAM_COLUMNS,
            &io::histogram_rows(&pooled),
        )?;
        self.write_json(
            "stats.json",
            &json!({
                "ks_distance": pooled.ks_distance,
                "critical_value": pooled.critical_value,
                "n_samples": pooled.n_samples,
                "n_model_samples": pooled.n_model_samples,
                "verdict": pooled.verdict,
                "window": [c.stats_n_min, c.stats_n_max],
                "seed": c.seed,
                "sets": per_set,
            }),
        )
    }
}

/// Whether two configurations produce the same fine band.
fn same_band_inputs(a: &ExperimentConfig, b: &ExperimentConfig) -> bool {
    a.params == b.params
        && a.n_points_per_cell == b.n_points_per_cell
        && a.beta_fine_samples == b.beta_fine_samples
}
