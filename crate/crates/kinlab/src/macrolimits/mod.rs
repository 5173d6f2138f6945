//! Pseudospectral solvers for the three limit equations
//!
//! - aggregation-diffusion `∂_t ρ = ∇·(ρ∇Φ) + Δρ` (diffusive scaling),
//! - aggregation `∂_t ρ = ∇·(ρ∇Φ)` (high-field scaling),
//! - generalized SQG `∂_t ρ = ∇·(ρ∇^⊥Φ)` (magnetic scaling),
//!
//! with `Φ = (-Δ)^{-α}ρ`, plus the corrector fields and gyro-averaging
//! operators tied to them.

mod corrector;
mod gyro;

pub use corrector::{corrector, limit_rhs, log_gradient, target_velocity, CorrectorFields};
pub use gyro::{gyro_average, gyro_average_with, gyro_generator, hilbert_corrector_check, HilbertCheck};

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::functionals::LOG_FLOOR;
use crate::grid::{
    derivative_wavenumbers, mode_numbers, quadrature, read_field, wavenumbers, write_field, ScalarField, SpatialGrid,
    SpectralPlan,
};
use crate::riesz::RieszOperator;
use crate::states::{MacroState, RegimeKind, ScalingRegime, DENSITY_FLOOR};
use crate::{Error, Result};

/// Parameters of one macroscopic run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MacroRunConfig {
    pub regime: ScalingRegime,
    pub dt: f64,
    pub t_end: f64,
    /// Apply the 2/3 rule to the quadratic term.
    pub dealias: bool,
    /// Steps between stored frames.
    pub store_every: usize,
    /// Smallest admissible density.
    pub floor: f64,
}

impl MacroRunConfig {
    pub fn new(regime: ScalingRegime, dt: f64, t_end: f64) -> Self {
        Self { regime, dt, t_end, dealias: true, store_every: 1, floor: DENSITY_FLOOR }
    }

    /// Configuration with [`default_macro_dt`] for the initial density.
    pub fn with_default_dt(regime: ScalingRegime, rho0: &ScalarField, t_end: f64) -> Result<Self> {
        let riesz = RieszOperator::new(regime.alpha(), rho0.grid())?;
        Ok(Self::new(regime, default_macro_dt(&riesz, rho0), t_end))
    }

    fn schedule(&self) -> (usize, f64) {
        if self.t_end <= 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

/// `min(0.01, ¼Δx/max|∇Φ|)`: the advecting field of every limit equation
/// has the magnitude of `∇Φ`.
pub fn default_macro_dt(riesz: &RieszOperator, rho: &ScalarField) -> f64 {
    let v = riesz.force(rho).iter().flat_map(|c| c.values().iter()).fold(0.0f64, |m, x| m.max(x.abs()));
    let dx = rho.grid().spacing();
    if v > 0.0 {
        (0.25 * dx / v).min(0.01)
    } else {
        0.01
    }
}

/// Integrating-factor RK4 stepper in Fourier variables.
#[derive(Clone, Debug)]
pub struct MacroSolver {
    regime: ScalingRegime,
    grid: SpatialGrid,
    riesz: RieszOperator,
    plan: SpectralPlan,
    dk: Vec<[f64; 2]>,
    k2: Vec<f64>,
    mask: Vec<bool>,
    dealias: bool,
}

impl MacroSolver {
    pub fn new(regime: ScalingRegime, grid: &SpatialGrid, dealias: bool) -> Result<Self> {
        regime.check_dim(grid.dim())?;
        let riesz = RieszOperator::new(regime.alpha(), grid)?;
        let plan = SpectralPlan::for_lattice(grid);
        let n = grid.points();
        let (k, kd, m) = (wavenumbers(n, grid.length()), derivative_wavenumbers(n, grid.length()), mode_numbers(n));
        let cut = n as f64 / 3.0;
        let len = plan.len();
        let mut dk = vec![[0.0; 2]; len];
        let mut k2 = vec![0.0; len];
        let mut mask = vec![true; len];
        for flat in 0..len {
            let idx: Vec<usize> = if grid.dim() == 1 { vec![flat] } else { vec![flat / n, flat % n] };
            for (a, &i) in idx.iter().enumerate() {
                dk[flat][a] = kd[i];
                k2[flat] += k[i] * k[i];
                mask[flat] &= m[i].abs() < cut;
            }
        }
        Ok(Self { regime, grid: grid.clone(), riesz, plan, dk, k2, mask, dealias })
    }

    pub fn riesz(&self) -> &RieszOperator {
        &self.riesz
    }

    fn diffusive(&self) -> bool {
        self.regime.kind() == RegimeKind::Diffusive
    }

    fn truncate(&self, hat: &mut [Complex64]) {
        if self.dealias {
            hat.iter_mut().zip(&self.mask).filter(|(_, &m)| !m).for_each(|(h, _)| *h = Complex64::new(0.0, 0.0));
        }
    }

    /// Transform of the quadratic term `∇·(ρ∇Φ)` or `∇·(ρ∇^⊥Φ)`.
    fn nonlinear(&self, hat: &[Complex64]) -> Vec<Complex64> {
        let mut h = hat.to_vec();
        self.truncate(&mut h);
        let rho = self.plan.inverse_real(h.clone());
        let mult = self.riesz.multiplier();
        let dim = self.grid.dim();
        let mut grad = Vec::with_capacity(dim);
        for a in 0..dim {
            let g: Vec<Complex64> =
                h.iter().zip(mult).zip(&self.dk).map(|((v, m), k)| Complex64::new(0.0, k[a]) * v * m).collect();
            grad.push(self.plan.inverse_real(g));
        }
        if self.regime.kind() == RegimeKind::Gsqg {
            let g0 = std::mem::take(&mut grad[0]);
            let g1 = std::mem::take(&mut grad[1]);
            grad[0] = g1.iter().map(|v| -v).collect();
            grad[1] = g0;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); h.len()];
        for (a, g) in grad.iter().enumerate() {
            let flux: Vec<f64> = rho.iter().zip(g).map(|(r, v)| r * v).collect();
            let fh = self.plan.forward_real(&flux);
            for ((o, f), k) in out.iter_mut().zip(&fh).zip(&self.dk) {
                *o += Complex64::new(0.0, k[a]) * f;
            }
        }
        self.truncate(&mut out);
        out
    }

    /// `∂_t ρ` of the limit equation, as used by the stepper.
    pub fn rhs(&self, rho: &ScalarField) -> ScalarField {
        let hat = self.plan.forward_real(rho.values());
        let mut n = self.nonlinear(&hat);
        if self.diffusive() {
            n.iter_mut().zip(&hat).zip(&self.k2).for_each(|((o, h), k2)| *o -= h * k2);
        }
        ScalarField::new(self.grid.clone(), self.plan.inverse_real(n)).expect("grid size")
    }

    /// One Lawson step `ρ̂ ← E ρ̂ + h/6 (E k₁ + 2E_{1/2}(k₂ + k₃) + k₄)` with
    /// `E = e^{-|k|²h}` for the diffusive equation and `E = 1` otherwise.
    pub fn step_spectrum(&self, hat: &mut [Complex64], h: f64) {
        let (e, e2): (Vec<f64>, Vec<f64>) = if self.diffusive() {
            self.k2.iter().map(|k2| ((-k2 * h).exp(), (-0.5 * k2 * h).exp())).unzip()
        } else {
            (vec![1.0; hat.len()], vec![1.0; hat.len()])
        };
        let k1 = self.nonlinear(hat);
        let y: Vec<Complex64> = (0..hat.len()).map(|i| e2[i] * (hat[i] + 0.5 * h * k1[i])).collect();
        let k2 = self.nonlinear(&y);
        let y: Vec<Complex64> = (0..hat.len()).map(|i| e2[i] * hat[i] + 0.5 * h * k2[i]).collect();
        let k3 = self.nonlinear(&y);
        let y: Vec<Complex64> = (0..hat.len()).map(|i| e[i] * hat[i] + h * e2[i] * k3[i]).collect();
        let k4 = self.nonlinear(&y);
        for i in 0..hat.len() {
            hat[i] = e[i] * hat[i] + h / 6.0 * (e[i] * k1[i] + 2.0 * e2[i] * (k2[i] + k3[i]) + k4[i]);
        }
    }

    /// Advances a density by `h`.
    pub fn advance(&self, rho: &ScalarField, h: f64) -> ScalarField {
        let mut hat = self.plan.forward_real(rho.values());
        self.step_spectrum(&mut hat, h);
        ScalarField::new(self.grid.clone(), self.plan.inverse_real(hat)).expect("grid size")
    }
}

fn check_density(rho: &ScalarField, floor: f64, time: f64) -> Result<()> {
    if !rho.all_finite() {
        return Err(Error::NonFinite { time });
    }
    let min = rho.min();
    if min < floor {
        return Err(Error::Positivity { min, floor, time });
    }
    Ok(())
}

/// One step of the limit equation of `cfg.regime`.
pub fn macro_step(state: &MacroState, cfg: &MacroRunConfig) -> Result<MacroState> {
    let solver = MacroSolver::new(cfg.regime, state.rho().grid(), cfg.dealias)?;
    let rho = solver.advance(state.rho(), cfg.dt);
    let t = state.time() + cfg.dt;
    check_density(&rho, cfg.floor, t)?;
    MacroState::new(rho, t, cfg.regime, cfg.floor)
}

/// Stored density with its time derivative.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroFrame {
    pub time: f64,
    pub rho: ScalarField,
    pub drho_dt: ScalarField,
}

/// A solved limit trajectory, interpolated in time by cubic Hermite
/// polynomials through the stored densities and their time derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct MacroTrajectory {
    regime: ScalingRegime,
    frames: Vec<MacroFrame>,
}

impl MacroTrajectory {
    pub fn new(regime: ScalingRegime, frames: Vec<MacroFrame>) -> Result<Self> {
        if frames.is_empty() || frames.windows(2).any(|w| w[1].time <= w[0].time) {
            return Err(Error::Parameter("trajectory frames must be nonempty and increasing in time".into()));
        }
        Ok(Self { regime, frames })
    }

    pub fn regime(&self) -> &ScalingRegime {
        &self.regime
    }

    pub fn frames(&self) -> &[MacroFrame] {
        &self.frames
    }

    pub fn start_time(&self) -> f64 {
        self.frames[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.frames[self.frames.len() - 1].time
    }

    pub fn last(&self) -> &MacroFrame {
        &self.frames[self.frames.len() - 1]
    }

    /// `ρ(t)`; times within `1e-9` of the ends are clamped.
    pub fn at(&self, t: f64) -> Result<ScalarField> {
        let (t0, t1) = (self.start_time(), self.end_time());
        let slack = 1e-9 * (1.0 + t1.abs());
        if t < t0 - slack || t > t1 + slack {
            return Err(Error::Parameter(format!("time {t} outside the trajectory [{t0}, {t1}]")));
        }
        if self.frames.len() == 1 {
            return Ok(self.frames[0].rho.clone());
        }
        let t = t.clamp(t0, t1);
        let i = self.frames.partition_point(|f| f.time <= t).clamp(1, self.frames.len() - 1) - 1;
        let (a, b) = (&self.frames[i], &self.frames[i + 1]);
        let dt = b.time - a.time;
        let s = (t - a.time) / dt;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = (s3 - 2.0 * s2 + s) * dt;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = (s3 - s2) * dt;
        let values = (0..a.rho.values().len())
            .map(|k| {
                h00 * a.rho.values()[k]
                    + h10 * a.drho_dt.values()[k]
                    + h01 * b.rho.values()[k]
                    + h11 * b.drho_dt.values()[k]
            })
            .collect();
        ScalarField::new(a.rho.grid().clone(), values)
    }

    /// Writes `rho_XXXXX.bin` per frame and an `index.txt` listing them.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut index = BufWriter::new(std::fs::File::create(dir.join("index.txt"))?);
        writeln!(
            index,
            "regime={} eps={:e} alpha={:e}",
            self.regime.kind().name(),
            self.regime.epsilon(),
            self.regime.alpha()
        )?;
        for (i, f) in self.frames.iter().enumerate() {
            let name = format!("rho_{i:05}.bin");
            let mut w = BufWriter::new(std::fs::File::create(dir.join(&name))?);
            write_field(&mut w, &f.rho)?;
            w.flush()?;
            writeln!(index, "{i} {:.17e} {name}", f.time)?;
        }
        index.flush()?;
        Ok(())
    }

    /// Reads a dump written by [`MacroTrajectory::write`], recomputing time
    /// derivatives from the limit equation.
    pub fn read(dir: &Path) -> Result<Self> {
        let mut lines = BufReader::new(std::fs::File::open(dir.join("index.txt"))?).lines();
        let head = lines.next().ok_or_else(|| Error::Config("empty trajectory index".into()))??;
        let mut kind = None;
        let (mut eps, mut alpha) = (None, None);
        for part in head.split_whitespace() {
            match part.split_once('=') {
                Some(("regime", v)) => kind = Some(v.parse::<RegimeKind>()?),
                Some(("eps", v)) => eps = v.parse::<f64>().ok(),
                Some(("alpha", v)) => alpha = v.parse::<f64>().ok(),
                _ => return Err(Error::Config(format!("bad trajectory header: {head}"))),
            }
        }
        let (Some(kind), Some(eps), Some(alpha)) = (kind, eps, alpha) else {
            return Err(Error::Config(format!("incomplete trajectory header: {head}")));
        };
        let regime = ScalingRegime::new(kind, eps, alpha)?;
        let mut frames = Vec::new();
        let mut solver: Option<MacroSolver> = None;
        for line in lines {
            let line = line?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!("bad trajectory index line: {line}")));
            }
            let time: f64 = parts[1].parse().map_err(|_| Error::Config(format!("bad time in: {line}")))?;
            let rho = read_field(&mut BufReader::new(std::fs::File::open(dir.join(parts[2]))?))?;
            let s = match &solver {
                Some(s) => s,
                None => solver.insert(MacroSolver::new(regime, rho.grid(), true)?),
            };
            let drho_dt = s.rhs(&rho);
            frames.push(MacroFrame { time, rho, drho_dt });
        }
        Self::new(regime, frames)
    }
}

/// Solves the limit equation of `cfg.regime` from `rho0` at time zero.
pub fn run_macro(rho0: &ScalarField, cfg: &MacroRunConfig) -> Result<MacroTrajectory> {
    let solver = MacroSolver::new(cfg.regime, rho0.grid(), cfg.dealias)?;
    check_density(rho0, cfg.floor, 0.0)?;
    let (steps, h) = cfg.schedule();
    let every = cfg.store_every.max(1);
    let mut hat = solver.plan.forward_real(rho0.values());
    let mut frames = vec![MacroFrame { time: 0.0, rho: rho0.clone(), drho_dt: solver.rhs(rho0) }];
    for k in 1..=steps {
        solver.step_spectrum(&mut hat, h);
        if k % every == 0 || k == steps {
            let t = k as f64 * h;
            let rho = ScalarField::new(rho0.grid().clone(), solver.plan.inverse_real(hat.clone()))?;
            check_density(&rho, cfg.floor, t)?;
            let drho_dt = solver.rhs(&rho);
            frames.push(MacroFrame { time: t, rho, drho_dt });
        }
    }
    MacroTrajectory::new(cfg.regime, frames)
}

/// `∫ρ log ρ + 𝓟[ρ]`, the Lyapunov functional of aggregation-diffusion.
pub fn macro_free_energy(rho: &ScalarField, riesz: &RieszOperator) -> f64 {
    let ent = rho.map(|r| if r > LOG_FLOOR { r * r.ln() } else { 0.0 });
    quadrature(&ent) + riesz.interaction_energy(rho)
}

/// `∫ρ²`
pub fn enstrophy(rho: &ScalarField) -> f64 {
    quadrature(&rho.map(|r| r * r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;
    use crate::states::smooth_density;

    fn regime(kind: RegimeKind, alpha: f64) -> ScalingRegime {
        ScalingRegime::new(kind, 0.1, alpha).unwrap()
    }

    #[test]
    fn constant_density_is_stationary() {
        for (kind, dim) in [(RegimeKind::Diffusive, 1), (RegimeKind::HighField, 1), (RegimeKind::Gsqg, 2)] {
            let g = SpatialGrid::torus(dim, 16).unwrap();
            let rho = Field::constant(g.clone(), 1.0 / g.volume());
            let cfg = MacroRunConfig::new(regime(kind, 0.25), 0.01, 0.1);
            let traj = run_macro(&rho, &cfg).unwrap();
            let err = traj.last().rho.zip_map(&rho, |a, b| (a - b).abs()).unwrap().max();
            assert!(err < 1e-14, "{kind:?}: {err}");
        }
    }

    #[test]
    fn heat_kernel_decay() {
        // with a vanishing density mean the interaction acts on a mode of
        // amplitude 1e-6 only, so the quadratic term is below 1e-12
        let g = SpatialGrid::torus(1, 32).unwrap();
        let amp = 1e-6;
        let mean = 1.0 / g.volume();
        let rho = g.sample(|x| mean + amp * (3.0 * x[0]).cos());
        let cfg = MacroRunConfig::new(regime(RegimeKind::Diffusive, 0.25), 0.01, 0.2);
        let traj = run_macro(&rho, &cfg).unwrap();
        let decay = (-9.0f64 * 0.2).exp();
        let phi_k = 9f64.powf(-0.25);
        let total = (-(9.0 + mean * 9.0 * phi_k) * 0.2f64).exp();
        let got = traj.last().rho.zip_map(&g.sample(|x| (3.0 * x[0]).cos()), |a, c| (a - mean) * c).unwrap();
        let amp_t = quadrature(&got) / std::f64::consts::PI;
        assert!((amp_t / amp - total).abs() < 1e-6, "{} vs {total} (heat only {decay})", amp_t / amp);
    }

    #[test]
    fn mass_conservation() {
        for (kind, dim) in [(RegimeKind::Diffusive, 1), (RegimeKind::HighField, 1), (RegimeKind::Gsqg, 2)] {
            let g = SpatialGrid::torus(dim, 32).unwrap();
            let rho = smooth_density(&g, 11);
            let cfg = MacroRunConfig::new(regime(kind, 0.25), 0.01, 0.5);
            let traj = run_macro(&rho, &cfg).unwrap();
            let drift = (quadrature(&traj.last().rho) - quadrature(&rho)).abs();
            assert!(drift < 1e-12, "{kind:?}: {drift}");
        }
    }

    #[test]
    fn hermite_interpolation_is_fourth_order() {
        let g = SpatialGrid::torus(1, 32).unwrap();
        let rho = smooth_density(&g, 3);
        let r = regime(RegimeKind::HighField, 0.25);
        let fine = run_macro(&rho, &MacroRunConfig::new(r, 0.005, 0.4)).unwrap();
        let mut errs = Vec::new();
        for store in [8, 4] {
            let mut cfg = MacroRunConfig::new(r, 0.005, 0.4);
            cfg.store_every = store;
            let coarse = run_macro(&rho, &cfg).unwrap();
            let mut e = 0.0f64;
            for f in fine.frames() {
                let d = coarse.at(f.time).unwrap().zip_map(&f.rho, |a, b| (a - b).abs()).unwrap().max();
                e = e.max(d);
            }
            errs.push(e);
        }
        assert!(errs[0] / errs[1] > 12.0, "{errs:?}");
    }

    #[test]
    fn trajectory_dump_round_trip() {
        let g = SpatialGrid::torus(1, 16).unwrap();
        let rho = smooth_density(&g, 2);
        let traj = run_macro(&rho, &MacroRunConfig::new(regime(RegimeKind::Diffusive, 0.25), 0.05, 0.2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        traj.write(dir.path()).unwrap();
        let back = MacroTrajectory::read(dir.path()).unwrap();
        assert_eq!(back.frames().len(), traj.frames().len());
        for (a, b) in back.frames().iter().zip(traj.frames()) {
            assert_eq!(a.rho, b.rho);
            assert!((a.time - b.time).abs() < 1e-15);
            let d = a.drho_dt.zip_map(&b.drho_dt, |x, y| (x - y).abs()).unwrap().max();
            assert!(d < 1e-12);
        }
    }

    #[test]
    fn positivity_loss_aborts() {
        let g = SpatialGrid::torus(1, 16).unwrap();
        let rho = g.sample(|x| 1.0 + 0.999 * x[0].cos());
        let rho = rho.scaled(1.0 / quadrature(&rho));
        let mut cfg = MacroRunConfig::new(regime(RegimeKind::HighField, 0.25), 0.01, 0.1);
        cfg.floor = 1e-3;
        assert!(matches!(run_macro(&rho, &cfg), Err(Error::Positivity { .. })));
    }
}
