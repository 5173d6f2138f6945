//! Sweep configuration files.
//!
//! ```toml
//! [run]
//! regime = "diffusive"
//! eps = [0.2, 0.1, 0.05, 0.025]
//! data = "well"
//! t_end = 0.25
//! metrics = ["modE", "L1_rho"]
//!
//! [grid]
//! nx = 64
//! nv = 64
//!
//! [thresholds]
//! modE = 1.7
//! ```
//!
//! Every key is optional except `run.regime`; unknown keys are errors.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::{default_thresholds, Metric, SweepConfig};
use crate::states::{PreparedKind, RegimeKind};
use crate::{Error, Result};

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    run: RunSection,
    #[serde(default)]
    grid: GridSection,
    #[serde(default)]
    solver: SolverSection,
    #[serde(default)]
    thresholds: BTreeMap<String, f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    regime: String,
    alpha: Option<f64>,
    eps: Option<Vec<f64>>,
    data: Option<String>,
    delta: Option<f64>,
    mild_amplitude: Option<f64>,
    t_end: Option<f64>,
    metrics: Option<Vec<String>>,
    window: Option<[f64; 2]>,
    seed: Option<u64>,
    workers: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    dim: Option<usize>,
    nx: Option<usize>,
    length: Option<f64>,
    nv: Option<usize>,
    vmax: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    dt: Option<f64>,
    macro_dt: Option<f64>,
    safety: Option<f64>,
    report_interval: Option<f64>,
    dealias: Option<bool>,
    momentum_bins: Option<usize>,
    positivity_floor: Option<f64>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<SweepConfig> {
    let file: FileConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let run = file.run;
    let regime: RegimeKind = run.regime.parse()?;
    let mut cfg = SweepConfig::new(regime);

    if let Some(data) = run.data {
        let kind: PreparedKind = data.parse()?;
        if kind == PreparedKind::MildlyPrepared {
            let delta = run.delta.unwrap_or(cfg.delta);
            cfg = cfg.mildly_prepared(delta);
        }
    }
    set(&mut cfg.alpha, run.alpha);
    set(&mut cfg.eps_list, run.eps);
    set(&mut cfg.delta, run.delta);
    set(&mut cfg.mild_amplitude, run.mild_amplitude);
    set(&mut cfg.t_end, run.t_end);
    set(&mut cfg.seed, run.seed);
    set(&mut cfg.workers, run.workers);
    if let Some(names) = run.metrics {
        cfg.metrics = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
    }
    if let Some([lo, hi]) = run.window {
        cfg.window = Some((lo.min(hi), lo.max(hi)));
    }

    let g = file.grid;
    set(&mut cfg.grid.dim, g.dim);
    set(&mut cfg.grid.nx, g.nx);
    set(&mut cfg.grid.length, g.length);
    set(&mut cfg.grid.nv, g.nv);
    set(&mut cfg.grid.vmax, g.vmax);

    let s = file.solver;
    cfg.solver.dt = s.dt.or(cfg.solver.dt);
    cfg.solver.macro_dt = s.macro_dt.or(cfg.solver.macro_dt);
    set(&mut cfg.solver.safety, s.safety);
    set(&mut cfg.solver.report_interval, s.report_interval);
    set(&mut cfg.solver.dealias, s.dealias);
    set(&mut cfg.solver.momentum_bins, s.momentum_bins);
    set(&mut cfg.solver.positivity_floor, s.positivity_floor);

    let mut thresholds = default_thresholds(cfg.regime, cfg.data_kind);
    for (name, value) in file.thresholds {
        thresholds.insert(name.parse::<Metric>()?, value);
    }
    cfg.thresholds = thresholds;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SweepConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
