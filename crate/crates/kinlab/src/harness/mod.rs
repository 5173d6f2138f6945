//! ε-sweeps against the limit equations, log-log slope fits, invariant
//! suites, report files and the command line.

mod checks;
pub mod cli;
mod config;
mod output;

pub use checks::{check_suite, energy_balance_study, EnergyStudy, PropertyResult, SuiteKind, SuiteReport};
pub use config::{load_config, parse_config};
pub use output::{write_gnuplot, write_run_csv, write_summary_csv, write_sweep, CSV_HEADER, SUMMARY_HEADER};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::functionals::{relative_entropy, FunctionalReport};
use crate::grid::{PhaseGrid, SpatialGrid, VelocityGrid};
use crate::kinetic::{run, DistanceOptions, DistanceRow, KineticRunConfig, DEFAULT_SAFETY};
use crate::macrolimits::{run_macro, MacroRunConfig, MacroTrajectory};
use crate::states::{
    prepared_data, single_mode_velocity, smooth_density, zero_vector, PreparedKind, RegimeKind, ScalingRegime,
};
use crate::{Error, Result};

/// Error measures a sweep can reduce to one number per ε.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    /// `sup_t 𝓔`
    ModE,
    /// `sup_t ‖f - M_{ρ,u}‖₁`
    L1F,
    /// `sup_t ‖ρ_f - ρ‖₁`
    L1Rho,
    /// `sup_t ‖ρ_f - ρ‖_{Ḣ^{-α}}`
    HnegRho,
    /// `sup_t d_BL(ρ_f, ρ)`
    DblRho,
    /// `sup_t d_BL(f, M_{ρ,u})`
    DblF,
    /// Momentum defect in `L¹`: integrated over `(0, T)` in the diffusive
    /// scaling, supremum in time otherwise.
    MomentumL1,
    /// Time-space bounded-Lipschitz norm of the scaled momentum defect.
    MomentumDblT,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::ModE,
        Metric::L1F,
        Metric::L1Rho,
        Metric::HnegRho,
        Metric::DblRho,
        Metric::DblF,
        Metric::MomentumL1,
        Metric::MomentumDblT,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::ModE => "modE",
            Metric::L1F => "L1_f",
            Metric::L1Rho => "L1_rho",
            Metric::HnegRho => "Hneg_rho",
            Metric::DblRho => "dBL_rho",
            Metric::DblF => "dBL_f",
            Metric::MomentumL1 => "momentum_L1",
            Metric::MomentumDblT => "momentum_dBLT",
        }
    }

    /// Metrics of the weak topology, the only ones reported for mildly
    /// prepared data.
    pub fn is_weak(self) -> bool {
        matches!(self, Metric::DblRho | Metric::DblF | Metric::MomentumDblT)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown metric {s:?}")))
    }
}

/// Tensor phase grid of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub nx: usize,
    /// Period of the spatial torus.
    pub length: f64,
    pub nv: usize,
    /// Velocity half-width `V`.
    pub vmax: f64,
}

impl GridSpec {
    pub fn space(&self) -> Result<SpatialGrid> {
        SpatialGrid::new(self.dim, self.nx, self.length)
    }

    pub fn phase(&self) -> Result<PhaseGrid> {
        PhaseGrid::new(self.space()?, VelocityGrid::new(self.dim, self.nv, self.vmax)?)
    }
}

/// Time stepping and recording options of the member runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSpec {
    /// Kinetic step; the CFL default when absent.
    pub dt: Option<f64>,
    /// Macroscopic step; the CFL default when absent.
    pub macro_dt: Option<f64>,
    pub safety: f64,
    /// Time between functional reports.
    pub report_interval: f64,
    pub dealias: bool,
    /// Time bins of the time-space momentum norm.
    pub momentum_bins: usize,
    pub positivity_floor: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            dt: None,
            macro_dt: None,
            safety: DEFAULT_SAFETY,
            report_interval: 0.02,
            dealias: true,
            momentum_bins: 8,
            positivity_floor: 1e-4,
        }
    }
}

/// Everything one ε-study needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub regime: RegimeKind,
    pub alpha: f64,
    /// Descending.
    pub eps_list: Vec<f64>,
    pub data_kind: PreparedKind,
    /// Preparation exponent of the mildly prepared family.
    pub delta: f64,
    /// Amplitude of the single-mode velocity `v` of the mildly prepared family.
    pub mild_amplitude: f64,
    pub grid: GridSpec,
    pub t_end: f64,
    pub metrics: Vec<Metric>,
    /// Smallest accepted slope per metric.
    pub thresholds: BTreeMap<Metric, f64>,
    /// Inclusive ε range used for the fits; all points when absent.
    pub window: Option<(f64, f64)>,
    pub seed: u64,
    /// Concurrent member runs.
    pub workers: usize,
    pub solver: SolverSpec,
}

impl SweepConfig {
    /// Desk-scale defaults of a regime with well-prepared data.
    pub fn new(regime: RegimeKind) -> Self {
        let (alpha, eps_list, grid, t_end, metrics): (f64, Vec<f64>, GridSpec, f64, Vec<Metric>) = match regime {
            RegimeKind::Diffusive => (
                0.25,
                vec![0.2, 0.1, 0.05, 0.025],
                GridSpec { dim: 1, nx: 64, length: 2.0 * std::f64::consts::PI, nv: 64, vmax: 8.0 },
                0.25,
                vec![Metric::ModE, Metric::L1Rho, Metric::DblRho, Metric::MomentumL1],
            ),
            // The O(ε) rate needs ε ≪ T for the initial layer and εT(2π/L)² ≪ 1
            // before the ε-diffusion saturates, hence the long box and horizon.
            RegimeKind::HighField => (
                0.25,
                vec![0.4, 0.2, 0.1, 0.05],
                GridSpec { dim: 1, nx: 64, length: 8.0 * std::f64::consts::PI, nv: 64, vmax: 8.0 },
                3.0,
                vec![Metric::ModE, Metric::HnegRho, Metric::MomentumL1],
            ),
            RegimeKind::Gsqg => (
                0.5,
                vec![0.4, 0.2, 0.1],
                GridSpec { dim: 2, nx: 24, length: 2.0 * std::f64::consts::PI, nv: 24, vmax: 8.0 },
                0.25,
                vec![Metric::L1Rho, Metric::MomentumDblT],
            ),
        };
        let mut cfg = Self {
            regime,
            alpha,
            eps_list,
            data_kind: PreparedKind::WellPrepared,
            delta: 1.0,
            mild_amplitude: 0.5,
            grid,
            t_end,
            metrics,
            thresholds: BTreeMap::new(),
            window: None,
            seed: 7,
            workers: 1,
            solver: SolverSpec::default(),
        };
        cfg.thresholds = default_thresholds(regime, cfg.data_kind);
        cfg
    }

    /// Switches to mildly prepared data and its weak-topology metric.
    pub fn mildly_prepared(mut self, delta: f64) -> Self {
        self.data_kind = PreparedKind::MildlyPrepared;
        self.delta = delta;
        self.metrics = vec![Metric::DblRho];
        self.thresholds = default_thresholds(self.regime, self.data_kind);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.eps_list.len() < 3 {
            return Err(Error::Config("a sweep needs at least three values of eps".into()));
        }
        if self.eps_list.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return Err(Error::Config("eps values must lie in (0, 1)".into()));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("eps values must be strictly descending".into()));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("no metric selected".into()));
        }
        if self.data_kind == PreparedKind::MildlyPrepared {
            if let Some(m) = self.metrics.iter().find(|m| !m.is_weak()) {
                return Err(Error::Config(format!("{m} is not reported for mildly prepared data")));
            }
        }
        if self.metrics.contains(&Metric::MomentumDblT) && self.solver.momentum_bins < 2 {
            return Err(Error::Config("momentum_dBLT needs at least two time bins".into()));
        }
        if !(self.t_end > 0.0) || !(self.solver.report_interval > 0.0) {
            return Err(Error::Config("t_end and report_interval must be positive".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least one".into()));
        }
        ScalingRegime::new(self.regime, self.eps_list[0], self.alpha)?.check_dim(self.grid.dim)?;
        self.grid.phase()?;
        Ok(())
    }

    fn distance_options(&self) -> DistanceOptions {
        DistanceOptions {
            dbl_rho: self.metrics.contains(&Metric::DblRho),
            dbl_f: self.metrics.contains(&Metric::DblF),
            momentum_bins: if self.metrics.contains(&Metric::MomentumDblT) { self.solver.momentum_bins } else { 0 },
        }
    }
}

/// Slope thresholds at about 85% of the theoretical orders.
pub fn default_thresholds(regime: RegimeKind, data: PreparedKind) -> BTreeMap<Metric, f64> {
    let pairs: &[(Metric, f64)] = match (regime, data) {
        (RegimeKind::Diffusive, PreparedKind::WellPrepared) => {
            &[(Metric::ModE, 1.7), (Metric::L1Rho, 0.8), (Metric::DblRho, 1.7), (Metric::MomentumL1, 0.8)]
        }
        (RegimeKind::HighField, PreparedKind::WellPrepared) => &[(Metric::HnegRho, 0.8), (Metric::MomentumL1, 0.4)],
        (RegimeKind::Gsqg, PreparedKind::WellPrepared) => &[(Metric::L1Rho, 0.4), (Metric::MomentumDblT, 0.0)],
        (_, PreparedKind::MildlyPrepared) => &[(Metric::DblRho, 0.4)],
    };
    pairs.iter().copied().collect()
}

/// One member of a sweep.
#[derive(Clone, Debug)]
pub struct SweepRow {
    pub eps: f64,
    pub values: BTreeMap<Metric, f64>,
    /// `𝓗[f₀|M_{ρ₀,0}]`
    pub initial_rel_entropy: f64,
    pub dt: f64,
    pub steps: usize,
    /// Most negative `min f / max f` of the run.
    pub worst_undershoot: f64,
    pub trace: Vec<FunctionalReport>,
    pub distances: Vec<DistanceRow>,
    /// Failure message of the member run.
    pub error: Option<String>,
}

/// Least-squares line through `(log ε, log err)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// `max |log err - fit|`
    pub residual: f64,
    pub points: usize,
}

impl SlopeFit {
    /// Residual above which the points are not on a line.
    pub const RESIDUAL_FLAG: f64 = 0.1;

    pub fn flagged(&self) -> bool {
        self.residual > Self::RESIDUAL_FLAG
    }
}

/// Fitted slope of one metric with its verdict.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricFit {
    pub metric: Metric,
    pub fit: SlopeFit,
    pub threshold: Option<f64>,
}

impl MetricFit {
    pub fn passed(&self) -> Option<bool> {
        self.threshold.map(|t| self.fit.slope >= t)
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub config: SweepConfig,
    /// Sorted by descending ε.
    pub rows: Vec<SweepRow>,
    pub fits: Vec<MetricFit>,
    /// Reference solution shared by every member.
    pub reference: MacroTrajectory,
}

impl SweepResult {
    pub fn fit(&self, metric: Metric) -> Option<&MetricFit> {
        self.fits.iter().find(|f| f.metric == metric)
    }

    /// `(ε, value)` pairs of one metric over the successful members.
    pub fn series(&self, metric: Metric) -> Vec<(f64, f64)> {
        self.rows.iter().filter_map(|r| r.values.get(&metric).map(|&v| (r.eps, v))).collect()
    }

    /// All configured thresholds met; `false` when a fit is missing.
    pub fn passed(&self) -> bool {
        self.config
            .thresholds
            .iter()
            .filter(|(m, _)| self.config.metrics.contains(m))
            .all(|(m, _)| self.fit(*m).and_then(MetricFit::passed).unwrap_or(false))
    }
}

/// Ordinary least squares of `log err` against `log ε`. Nonpositive errors
/// are dropped with a warning; fewer than three surviving points is an error.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(e, err)| {
            let keep = e > 0.0 && err > 0.0 && err.is_finite();
            if !keep {
                log::warn!("dropping point eps = {e}, err = {err} from the slope fit");
            }
            keep
        })
        .map(|&(e, err)| (e.ln(), err.ln()))
        .collect();
    if logs.len() < 3 {
        return Err(Error::Parameter(format!("{} usable points, at least three are needed", logs.len())));
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("all eps values coincide".into()));
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = logs.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(SlopeFit { slope, intercept, residual, points: logs.len() })
}

fn sup(values: impl Iterator<Item = f64>) -> f64 {
    values.fold(0.0, f64::max)
}

fn reduce(metric: Metric, regime: RegimeKind, out: &crate::kinetic::RunOutput) -> Option<f64> {
    let d = &out.distances;
    match metric {
        Metric::ModE => Some(sup(out.trace.iter().map(|r| r.modulated))),
        Metric::L1F => Some(sup(d.iter().map(|r| r.l1_f))),
        Metric::L1Rho => Some(sup(d.iter().map(|r| r.l1_rho))),
        Metric::HnegRho => Some(sup(d.iter().map(|r| r.hneg_rho))),
        Metric::DblRho => d.iter().map(|r| r.dbl_rho).collect::<Option<Vec<_>>>().map(|v| sup(v.into_iter())),
        Metric::DblF => d.iter().map(|r| r.dbl_f).collect::<Option<Vec<_>>>().map(|v| sup(v.into_iter())),
        Metric::MomentumL1 => match regime {
            RegimeKind::Diffusive => out.momentum_integral,
            _ => out.momentum_sup,
        },
        Metric::MomentumDblT => out.momentum_timespace,
    }
}

/// Reference solution of the limit equation for a sweep.
pub fn sweep_reference(cfg: &SweepConfig) -> Result<MacroTrajectory> {
    let space = cfg.grid.space()?;
    let rho0 = smooth_density(&space, cfg.seed);
    let regime = ScalingRegime::new(cfg.regime, cfg.eps_list[0], cfg.alpha)?;
    let mut mcfg = MacroRunConfig::with_default_dt(regime, &rho0, cfg.t_end)?;
    if let Some(dt) = cfg.solver.macro_dt {
        mcfg.dt = dt;
    }
    mcfg.dealias = cfg.solver.dealias;
    run_macro(&rho0, &mcfg)
}

fn run_member(cfg: &SweepConfig, eps: f64, reference: &MacroTrajectory) -> Result<SweepRow> {
    let space = cfg.grid.space()?;
    let grid = cfg.grid.phase()?;
    let rho0 = reference.frames()[0].rho.clone();
    let regime = ScalingRegime::new(cfg.regime, eps, cfg.alpha)?;
    let v = single_mode_velocity(&space, cfg.mild_amplitude);
    let init = prepared_data(cfg.data_kind, &regime, &rho0, &v, cfg.delta, grid.velocity())?;
    let initial_rel_entropy = relative_entropy(&init, &rho0, &zero_vector(&space));

    let mut kcfg = KineticRunConfig::with_default_dt(regime, grid, cfg.t_end, &rho0)?;
    if let Some(dt) = cfg.solver.dt {
        kcfg.dt = dt;
    }
    kcfg.safety = cfg.solver.safety;
    kcfg.positivity_floor = cfg.solver.positivity_floor;
    kcfg.distances = cfg.distance_options();
    let (_, h) = kcfg.schedule();
    kcfg.report_every = ((cfg.solver.report_interval / h).round() as usize).max(1);
    log::info!("eps = {eps}: dt = {h:.3e}, reporting every {} steps", kcfg.report_every);

    let out = run(&init, &kcfg, Some(reference))?;
    let values = cfg.metrics.iter().filter_map(|&m| reduce(m, cfg.regime, &out).map(|v| (m, v))).collect();
    Ok(SweepRow {
        eps,
        values,
        initial_rel_entropy,
        dt: out.dt,
        steps: out.steps,
        worst_undershoot: out.worst_undershoot,
        trace: out.trace,
        distances: out.distances,
        error: None,
    })
}

/// Runs every member against one reference solution, `cfg.workers` at a
/// time, and fits a slope per metric on the members inside the window.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let reference = sweep_reference(cfg)?;
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(cfg.workers).build().map_err(|e| Error::Config(e.to_string()))?;
    let mut rows: Vec<SweepRow> = pool.install(|| {
        cfg.eps_list
            .par_iter()
            .map(|&eps| {
                run_member(cfg, eps, &reference).unwrap_or_else(|e| {
                    log::warn!("member eps = {eps} failed: {e}");
                    SweepRow {
                        eps,
                        values: BTreeMap::new(),
                        initial_rel_entropy: f64::NAN,
                        dt: f64::NAN,
                        steps: 0,
                        worst_undershoot: f64::NAN,
                        trace: Vec::new(),
                        distances: Vec::new(),
                        error: Some(e.to_string()),
                    }
                })
            })
            .collect()
    });
    rows.sort_by(|a, b| b.eps.total_cmp(&a.eps));

    let in_window = |e: f64| cfg.window.is_none_or(|(lo, hi)| e >= lo && e <= hi);
    let mut fits = Vec::new();
    for &metric in &cfg.metrics {
        let points: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| in_window(r.eps))
            .filter_map(|r| r.values.get(&metric).map(|&v| (r.eps, v)))
            .collect();
        match fit_slope(&points) {
            Ok(fit) => {
                if fit.flagged() {
                    log::warn!("{metric}: residual {:.3} of the slope fit is large", fit.residual);
                }
                fits.push(MetricFit { metric, fit, threshold: cfg.thresholds.get(&metric).copied() });
            }
            Err(e) => log::warn!("{metric}: no slope ({e})"),
        }
    }
    Ok(SweepResult { config: cfg.clone(), rows, fits, reference })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_laws() {
        let eps = [0.4, 0.2, 0.1, 0.05];
        let sq: Vec<_> = eps.iter().map(|&e| (e, e * e)).collect();
        let fit = fit_slope(&sq).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        let lin: Vec<_> = eps.iter().map(|&e| (e, 3.0 * e)).collect();
        let fit = fit_slope(&lin).unwrap();
        assert!((fit.slope - 1.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn error_floor_is_flagged() {
        let pts: Vec<_> = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5].iter().map(|&e| (e, e * e + 1e-9)).collect();
        let fit = fit_slope(&pts).unwrap();
        assert!(fit.slope < 2.0);
        assert!(fit.flagged(), "{fit:?}");
    }

    #[test]
    fn rescaling_only_moves_the_intercept() {
        let pts: Vec<_> = [0.3, 0.2, 0.1, 0.05].iter().map(|&e: &f64| (e, e.powf(1.3) * (1.0 + e))).collect();
        let a = fit_slope(&pts).unwrap();
        let b = fit_slope(&pts.iter().map(|&(e, v)| (e, 7.5 * v)).collect::<Vec<_>>()).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!((b.intercept - a.intercept - 7.5f64.ln()).abs() < 1e-12);
        assert!((a.residual - b.residual).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_errors_are_dropped() {
        let pts = [(0.4, 0.16), (0.2, 0.0), (0.1, 0.01), (0.05, 0.0025), (0.025, -1.0)];
        assert_eq!(fit_slope(&pts).unwrap().points, 3);
        assert!(fit_slope(&pts[..3]).is_err());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in Metric::ALL {
            assert_eq!(m.name().parse::<Metric>().unwrap(), m);
        }
        assert!("modE2".parse::<Metric>().is_err());
    }

    #[test]
    fn config_validation() {
        for kind in [RegimeKind::Diffusive, RegimeKind::HighField, RegimeKind::Gsqg] {
            SweepConfig::new(kind).validate().unwrap();
            SweepConfig::new(kind).mildly_prepared(0.5).validate().unwrap();
        }
        let mut c = SweepConfig::new(RegimeKind::Diffusive);
        c.eps_list = vec![0.1, 0.2, 0.05];
        assert!(c.validate().is_err());
        c.eps_list = vec![0.2, 0.1];
        assert!(c.validate().is_err());
        let mut c = SweepConfig::new(RegimeKind::Diffusive).mildly_prepared(1.0);
        c.metrics.push(Metric::L1Rho);
        assert!(c.validate().is_err());
    }

    #[test]
    fn members_are_independent() {
        let mut c = SweepConfig::new(RegimeKind::HighField);
        c.grid = GridSpec { dim: 1, nx: 16, length: 2.0 * std::f64::consts::PI, nv: 32, vmax: 8.0 };
        c.t_end = 0.02;
        c.eps_list = vec![0.4, 0.3, 0.2];
        c.workers = 2;
        let all = run_sweep(&c).unwrap();
        c.eps_list = vec![0.4, 0.2, 0.1];
        c.workers = 1;
        let other = run_sweep(&c).unwrap();
        for e in [0.4, 0.2] {
            let a = all.rows.iter().find(|r| r.eps == e).unwrap();
            let b = other.rows.iter().find(|r| r.eps == e).unwrap();
            assert_eq!(a.values, b.values);
        }
        assert_eq!(all.fits.len(), c.metrics.len());
    }
}
