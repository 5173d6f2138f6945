//! Command line: `simulate`, `limit`, `sweep` and `check`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::output::{write_gnuplot, write_run_csv, write_sweep};
use super::{check_suite, load_config, run_sweep, sweep_reference, SuiteKind, SweepConfig};
use crate::functionals::relative_entropy;
use crate::grid::quadrature;
use crate::kinetic::{run, write_checkpoint, KineticRunConfig};
use crate::macrolimits::{enstrophy, macro_free_energy, MacroTrajectory};
use crate::riesz::RieszOperator;
use crate::states::{prepared_data, single_mode_velocity, zero_vector, RegimeKind, ScalingRegime};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "kinlab", version, about = "Kinetic Vlasov-Fokker-Planck solvers and their singular limits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// One kinetic run measured against the limit equation
    Simulate(Common),
    /// One run of the limit equation
    Limit(Common),
    /// Convergence study over a list of eps
    Sweep(Common),
    /// Randomized invariant suites
    Check {
        #[command(flatten)]
        common: Common,
        /// functionals, metrics, gyro, energy or all
        #[arg(long, default_value = "all")]
        suite: String,
        /// Random instances per property
        #[arg(long, default_value_t = 200)]
        cases: usize,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML configuration file
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// diffusive, highfield or gsqg
    #[arg(long)]
    pub regime: Option<RegimeKind>,
    /// Comma-separated eps values
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    /// Output directory
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Common {
    /// Configuration file (or regime defaults) with the flags applied on top.
    fn sweep_config(&self) -> Result<SweepConfig> {
        let mut cfg = match (&self.config, self.regime) {
            (Some(path), regime) => {
                let cfg = load_config(path)?;
                if regime.is_some_and(|r| r != cfg.regime) {
                    return Err(Error::Config("--regime disagrees with the configuration file".into()));
                }
                cfg
            }
            (None, Some(regime)) => SweepConfig::new(regime),
            (None, None) => return Err(Error::Config("either --config or --regime is required".into())),
        };
        if let Some(eps) = &self.eps {
            cfg.eps_list = eps.clone();
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    fn single_eps(&self, cfg: &SweepConfig) -> Result<f64> {
        match self.eps.as_deref() {
            Some([e]) => Ok(*e),
            Some(_) => Err(Error::Config("this command takes a single --eps value".into())),
            None => Ok(*cfg.eps_list.last().expect("validated list")),
        }
    }
}

/// Parses `args` and runs the command; the value is the process exit code.
pub fn run_cli<I, T>(args: I) -> Result<i32>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string()))?;
    execute(cli.command)
}

pub fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Simulate(c) => simulate(&c),
        Command::Limit(c) => limit(&c),
        Command::Sweep(c) => sweep(&c),
        Command::Check { common, suite, cases } => check(&common, &suite, cases),
    }
}

fn simulate(c: &Common) -> Result<i32> {
    let mut cfg = c.sweep_config()?;
    let eps = c.single_eps(&cfg)?;
    cfg.eps_list = vec![eps, eps / 2.0, eps / 4.0];
    cfg.validate()?;
    std::fs::create_dir_all(&c.out)?;
    let reference = sweep_reference(&cfg)?;
    let space = cfg.grid.space()?;
    let grid = cfg.grid.phase()?;
    let rho0 = reference.frames()[0].rho.clone();
    let regime = ScalingRegime::new(cfg.regime, eps, cfg.alpha)?;
    let v = single_mode_velocity(&space, cfg.mild_amplitude);
    let init = prepared_data(cfg.data_kind, &regime, &rho0, &v, cfg.delta, grid.velocity())?;
    let mut kcfg = KineticRunConfig::with_default_dt(regime, grid, cfg.t_end, &rho0)?;
    if let Some(dt) = cfg.solver.dt {
        kcfg.dt = dt;
    }
    kcfg.safety = cfg.solver.safety;
    kcfg.positivity_floor = cfg.solver.positivity_floor;
    kcfg.distances.dbl_f = cfg.metrics.contains(&super::Metric::DblF);
    let (_, h) = kcfg.schedule();
    kcfg.report_every = ((cfg.solver.report_interval / h).round() as usize).max(1);
    let out = run(&init, &kcfg, Some(&reference))?;
    write_run_csv(&c.out.join("run.csv"), &out.trace, &out.distances)?;
    write_checkpoint(&c.out.join("final.ckp"), &out.final_state, &regime, out.dt)?;
    write_gnuplot(&c.out.join("plot.gp"), "summary.csv", &[(eps, "run.csv".to_string())], &[])?;
    println!(
        "{} eps={eps} steps={} dt={:.3e} undershoot={:.1e} H0={:.6e} final_modE={:.6e}",
        cfg.regime,
        out.steps,
        out.dt,
        out.worst_undershoot,
        relative_entropy(&init, &rho0, &zero_vector(&space)),
        out.trace.last().map(|r| r.modulated).unwrap_or(0.0)
    );
    if let Some(m) = out.momentum_integral {
        println!("momentum_integral={m:.6e} momentum_sup={:.6e}", out.momentum_sup.unwrap_or(0.0));
    }
    Ok(0)
}

fn write_limit_csv(path: &Path, traj: &MacroTrajectory, riesz: &RieszOperator) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,mass,F_AD,P,L2sq")?;
    for fr in traj.frames() {
        writeln!(
            w,
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
            fr.time,
            quadrature(&fr.rho),
            macro_free_energy(&fr.rho, riesz),
            riesz.interaction_energy(&fr.rho),
            enstrophy(&fr.rho)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn limit(c: &Common) -> Result<i32> {
    let cfg = c.sweep_config()?;
    cfg.validate()?;
    std::fs::create_dir_all(&c.out)?;
    let traj = sweep_reference(&cfg)?;
    traj.write(&c.out.join("trajectory"))?;
    let riesz = RieszOperator::new(cfg.alpha, &cfg.grid.space()?)?;
    write_limit_csv(&c.out.join("limit.csv"), &traj, &riesz)?;
    println!("{} limit: {} frames up to t = {}", cfg.regime, traj.frames().len(), traj.end_time());
    Ok(0)
}

fn sweep(c: &Common) -> Result<i32> {
    let cfg = c.sweep_config()?;
    let result = run_sweep(&cfg)?;
    write_sweep(&c.out, &result)?;
    for row in &result.rows {
        let values: Vec<String> = row.values.iter().map(|(m, v)| format!("{m}={v:.4e}")).collect();
        match &row.error {
            Some(e) => println!("eps={} FAILED: {e}", row.eps),
            None => println!("eps={} {} undershoot={:.1e}", row.eps, values.join(" "), row.worst_undershoot),
        }
    }
    for f in &result.fits {
        let verdict = match f.passed() {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "-",
        };
        println!(
            "{verdict} {} slope={:.3} residual={:.3}{} threshold={}",
            f.metric,
            f.fit.slope,
            f.fit.residual,
            if f.fit.flagged() { " (flagged)" } else { "" },
            f.threshold.map(|t| t.to_string()).unwrap_or_else(|| "-".into())
        );
    }
    Ok(if result.passed() { 0 } else { 1 })
}

fn check(c: &Common, suite: &str, cases: usize) -> Result<i32> {
    let seed = c.seed.unwrap_or(7);
    let kinds: Vec<SuiteKind> = if suite == "all" { SuiteKind::ALL.to_vec() } else { vec![suite.parse()?] };
    let mut ok = true;
    for kind in kinds {
        let report = check_suite(kind, seed, cases)?;
        print!("{report}");
        ok &= report.passed();
    }
    Ok(if ok { 0 } else { 1 })
}
