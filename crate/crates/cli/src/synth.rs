//! Synthetic demographic panel generator.
//!
//! Writes a panel shaped like a small national mortality dataset: two sexes
//! crossed with eight regions, annual observations from 1933, log-scale
//! mortality improvement with AR(1) wobble around the trend, and slowly
//! growing exposures. National registries usually restrict redistribution
//! of the real data, so the repository ships this generator instead.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::config::{AttributeConfig, HierarchyConfig, RunConfig};
use crate::CliError;

pub const FIRST_YEAR: i64 = 1933;

/// Paths written by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SynthFiles {
    pub panel: PathBuf,
    pub hierarchy: PathBuf,
    pub config: PathBuf,
    pub rows: usize,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

/// Writes `panel.csv`, `hierarchy.toml`, and a ready-to-run `config.toml`
/// into `dir`. Identical `(years, seed)` arguments give identical bytes.
pub fn write_synthetic(dir: &Path, years: usize, seed: u64) -> Result<SynthFiles, CliError> {
    if years == 0 {
        return Err(CliError::Config("years must be at least 1".to_string()));
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;

    let sexes = ["F", "M"];
    let regions: Vec<String> = (1..=8).map(|r| format!("R{r}")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // One latent path per bottom series, generated in canonical row-major
    // order so the stream of draws is fixed.
    let mut rates: Vec<Vec<f64>> = Vec::new();
    let mut exposures: Vec<Vec<f64>> = Vec::new();
    for s in 0..sexes.len() {
        for _ in 0..regions.len() {
            let male_shift = if s == 1 { 0.30 } else { 0.0 };
            let base = (0.007f64).ln() + male_shift + rng.random_range(-0.35..0.35);
            let trend = -0.018 + rng.random_range(-0.005..0.005);
            let e0 = rng.random_range(40_000.0..120_000.0f64);
            let growth = 0.009 + rng.random_range(-0.004..0.004);
            let mut z = 0.0f64;
            let mut rate = Vec::with_capacity(years);
            let mut expo = Vec::with_capacity(years);
            for t in 0..years {
                let shock: f64 = rng.sample(StandardNormal);
                z = 0.6 * z + 0.05 * shock;
                rate.push((base + trend * t as f64 + z).exp());
                let wobble: f64 = rng.sample(StandardNormal);
                expo.push(e0 * (growth * t as f64 + 0.01 * wobble).exp());
            }
            rates.push(rate);
            exposures.push(expo);
        }
    }

    let panel = dir.join("panel.csv");
    let mut text = String::from("year,sex,region,deaths,exposure\n");
    let mut rows = 0usize;
    for t in 0..years {
        let year = FIRST_YEAR + t as i64;
        for (s, sex) in sexes.iter().enumerate() {
            for (r, region) in regions.iter().enumerate() {
                let j = s * regions.len() + r;
                let deaths = rates[j][t] * exposures[j][t];
                text.push_str(&format!(
                    "{year},{sex},{region},{deaths:.4},{:.1}\n",
                    exposures[j][t]
                ));
                rows += 1;
            }
        }
    }
    std::fs::write(&panel, text).map_err(io_err(&panel))?;

    let hierarchy = dir.join("hierarchy.toml");
    let hcfg = HierarchyConfig {
        attribute: vec![
            AttributeConfig {
                name: "sex".to_string(),
                values: sexes.iter().map(|s| s.to_string()).collect(),
            },
            AttributeConfig { name: "region".to_string(), values: regions },
        ],
    };
    let htext = toml::to_string(&hcfg).map_err(|e| CliError::Emit(e.to_string()))?;
    std::fs::write(&hierarchy, htext).map_err(io_err(&hierarchy))?;

    let config = dir.join("config.toml");
    let mut run = RunConfig::with_paths("panel.csv", "hierarchy.toml", "out");
    run.seed = seed;
    let ctext = toml::to_string(&run).map_err(|e| CliError::Emit(e.to_string()))?;
    std::fs::write(&config, ctext).map_err(io_err(&config))?;

    Ok(SynthFiles { panel, hierarchy, config, rows })
}
