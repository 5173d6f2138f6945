//! Time integration of the scaled Vlasov-Fokker-Planck equation
//!
//! `A ∂_t f + B ξ·∇_x f - ∇_x Φ·∇_ξ f + (m/ε) ξ^⊥·∇_ξ f = (1/τ) ∇_ξ·(∇_ξ f + ξ f)`
//!
//! with `Φ = (-Δ)^{-α}(ρ_f - mean)` and `m = 1` in the magnetic regime.
//!
//! One step is the Strang composition `X(h/2) V(h) X(h/2)`. `X` is free
//! transport in `x`, an exact Fourier phase shift for every velocity node.
//! `V` is the whole velocity dynamics with the force frozen at the midpoint
//! density: force, magnetic rotation and Fokker-Planck relaxation together
//! form an Ornstein-Uhlenbeck process with constant drift, whose law is
//! advanced exactly by rotating, contracting and smoothing the velocity
//! profile and translating it by the mean drift.

mod run;
pub mod velocity;

pub use run::{read_checkpoint, run, write_checkpoint, CheckpointMeta, DistanceOptions, DistanceRow, RunOutput};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{Lattice, PhaseField, PhaseGrid, ScalarField, SpectralPlan};
use crate::riesz::RieszOperator;
use crate::states::{KineticState, ScalingRegime};
use crate::{Error, Result};
use velocity::{Relaxation, VelocityOps};

/// Default ratio of the time step to each stability limit.
pub const DEFAULT_SAFETY: f64 = 0.5;

/// Largest magnetic rotation angle per step accepted by validation.
pub const MAX_ROTATION_ANGLE: f64 = 0.5;

/// Parameters of one kinetic run.
#[derive(Clone, Debug, PartialEq)]
pub struct KineticRunConfig {
    pub regime: ScalingRegime,
    pub grid: PhaseGrid,
    pub dt: f64,
    pub t_end: f64,
    /// Steps between functional reports.
    pub report_every: usize,
    /// Largest tolerated undershoot of `f`, relative to `max f`.
    pub positivity_floor: f64,
    pub safety: f64,
    pub distances: DistanceOptions,
}

impl KineticRunConfig {
    pub fn new(regime: ScalingRegime, grid: PhaseGrid, dt: f64, t_end: f64) -> Self {
        Self {
            regime,
            grid,
            dt,
            t_end,
            report_every: 1,
            positivity_floor: 1e-4,
            safety: DEFAULT_SAFETY,
            distances: DistanceOptions::default(),
        }
    }

    /// Configuration with [`default_time_step`] for the initial density.
    pub fn with_default_dt(regime: ScalingRegime, grid: PhaseGrid, t_end: f64, rho0: &ScalarField) -> Result<Self> {
        let riesz = RieszOperator::new(regime.alpha(), grid.space())?;
        let dt = default_time_step(&regime, &grid, max_force(&riesz, rho0));
        Ok(Self::new(regime, grid, dt, t_end))
    }

    /// Number of steps and the step that lands exactly on `t_end`.
    pub fn schedule(&self) -> (usize, f64) {
        if self.t_end <= 0.0 {
            return (0, self.dt);
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

fn max_force(riesz: &RieszOperator, rho: &ScalarField) -> f64 {
    riesz.force(rho).iter().flat_map(|c| c.values().iter()).fold(0.0f64, |m, v| m.max(v.abs()))
}

/// `min(¼Δx/(V B/A), ¼Δξ A/max|∇Φ|, 0.2/ω, min(0.1, ε) τA)`.
///
/// The last bound keeps the relaxation per step `s = h/(τA)` at most `ε`, so
/// the transport half-steps kick `f` off the local equilibrium by `O(ε²)` in
/// the diffusive scaling.
pub fn default_time_step(regime: &ScalingRegime, grid: &PhaseGrid, max_force: f64) -> f64 {
    let dx = grid.space().spacing();
    let v = grid.velocity();
    let mut dt = 0.25 * dx / (v.half_width() * regime.transport_speed());
    if max_force > 0.0 {
        dt = dt.min(0.25 * v.spacing() / (regime.force_factor() * max_force));
    }
    if regime.magnetic() {
        dt = dt.min(0.2 / regime.rotation_rate());
    }
    dt.min(regime.epsilon().min(0.1) / regime.relaxation_rate())
}

/// Checks `dt` against the transport, force and rotation limits.
pub fn check_cfl(regime: &ScalingRegime, grid: &PhaseGrid, dt: f64, max_force: f64, safety: f64) -> Result<()> {
    let v = grid.velocity();
    let transport = safety * grid.space().spacing() / (v.half_width() * regime.transport_speed());
    if dt > transport {
        return Err(Error::Cfl { dt, limit: transport, limit_name: "transport" });
    }
    if max_force > 0.0 {
        let force = safety * v.spacing() / (regime.force_factor() * max_force);
        if dt > force {
            return Err(Error::Cfl { dt, limit: force, limit_name: "force" });
        }
    }
    if regime.magnetic() {
        let rotation = MAX_ROTATION_ANGLE / regime.rotation_rate();
        if dt > rotation {
            return Err(Error::Cfl { dt, limit: rotation, limit_name: "rotation" });
        }
    }
    Ok(())
}

/// Split-step integrator bound to one configuration.
#[derive(Clone, Debug)]
pub struct KineticSolver {
    regime: ScalingRegime,
    grid: PhaseGrid,
    riesz: RieszOperator,
    plan: SpectralPlan,
    ops: VelocityOps,
    modes: Vec<[f64; 2]>,
    dt: f64,
    safety: f64,
    floor: f64,
    half_phase: Vec<Complex64>,
    relaxation: Relaxation,
    drift: Complex64,
}

impl KineticSolver {
    /// Solver stepping by exactly `dt`.
    pub fn new(regime: ScalingRegime, grid: PhaseGrid, dt: f64) -> Result<Self> {
        regime.check_dim(grid.dim())?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Parameter(format!("time step must be positive, got {dt}")));
        }
        let riesz = RieszOperator::new(regime.alpha(), grid.space())?;
        let plan = SpectralPlan::for_lattice(grid.space());
        let mut modes = vec![[0.0; 2]; plan.len()];
        plan.for_each_mode(|flat, k| {
            modes[flat][..k.len()].copy_from_slice(k);
        });
        let ops = VelocityOps::new(grid.velocity());
        let gamma = regime.relaxation_rate();
        let relaxation = ops.relaxation(gamma * dt);
        let lambda = Complex64::new(-gamma, regime.rotation_rate());
        let drift = ((lambda * dt).exp() - 1.0) / lambda;
        let mut solver = Self {
            regime,
            grid,
            riesz,
            plan,
            ops,
            modes,
            dt,
            safety: DEFAULT_SAFETY,
            floor: 1e-4,
            half_phase: Vec::new(),
            relaxation,
            drift,
        };
        solver.half_phase = solver.transport_phases(0.5 * dt);
        Ok(solver)
    }

    /// Solver for a run configuration, with its landing step.
    pub fn from_config(cfg: &KineticRunConfig) -> Result<Self> {
        let (_, h) = cfg.schedule();
        let mut s = Self::new(cfg.regime, cfg.grid.clone(), h)?;
        s.safety = cfg.safety;
        s.floor = cfg.positivity_floor;
        Ok(s)
    }

    pub fn regime(&self) -> &ScalingRegime {
        &self.regime
    }

    pub fn grid(&self) -> &PhaseGrid {
        &self.grid
    }

    pub fn riesz(&self) -> &RieszOperator {
        &self.riesz
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn transport_phases(&self, h: f64) -> Vec<Complex64> {
        let vel = self.grid.velocity();
        let speed = self.regime.transport_speed() * h;
        let mut out = Vec::with_capacity(vel.node_count() * self.modes.len());
        for iv in 0..vel.node_count() {
            let xi = vel.velocity(iv);
            for k in &self.modes {
                out.push(Complex64::from_polar(1.0, -(k[0] * xi[0] + k[1] * xi[1]) * speed));
            }
        }
        out
    }

    fn apply_transport(&self, f: &mut [f64], phases: &[Complex64]) {
        let s = self.grid.slice_len();
        let nx = self.modes.len();
        let mut buf = vec![Complex64::new(0.0, 0.0); s * nx];
        for ix in 0..nx {
            for iv in 0..s {
                buf[iv * nx + ix] = Complex64::new(f[ix * s + iv], 0.0);
            }
        }
        buf.par_chunks_mut(nx).zip(phases.par_chunks(nx)).for_each(|(line, ph)| {
            self.plan.forward(line);
            line.iter_mut().zip(ph).for_each(|(c, p)| *c *= p);
            self.plan.inverse(line);
        });
        for ix in 0..nx {
            for iv in 0..s {
                f[ix * s + iv] = buf[iv * nx + ix].re;
            }
        }
    }

    /// Free transport `∂_t f + (B/A) ξ·∇_x f = 0` over time `h`.
    pub fn transport(&self, f: &mut PhaseField, h: f64) {
        let phases = self.transport_phases(h);
        self.apply_transport(f.values_mut(), &phases);
    }

    fn density(&self, f: &[f64]) -> ScalarField {
        let s = self.grid.slice_len();
        let w = self.grid.velocity().cell_volume();
        let values = f.chunks(s).map(|c| c.iter().sum::<f64>() * w).collect();
        ScalarField::new(self.grid.space().clone(), values).expect("slice count matches the spatial grid")
    }

    /// Acceleration `-(1/A)∇Φ` of the density of `f`, per node and axis.
    fn acceleration(&self, f: &[f64]) -> (Vec<[f64; 2]>, f64) {
        let force = self.riesz.force(&self.density(f));
        let c = -self.regime.force_factor();
        let mut acc = vec![[0.0; 2]; self.modes.len()];
        let mut max = 0.0f64;
        for (axis, comp) in force.iter().enumerate() {
            for (a, v) in acc.iter_mut().zip(comp.values()) {
                a[axis] = c * v;
                max = max.max(v.abs());
            }
        }
        (acc, max)
    }

    /// Force substep `∂_t f - (1/A)∇Φ·∇_ξ f = 0` with `Φ` frozen.
    pub fn force_kick(&self, f: &mut PhaseField, h: f64) {
        let (acc, _) = self.acceleration(f.values());
        let s = self.grid.slice_len();
        let dim = self.grid.dim();
        f.values_mut().par_chunks_mut(s).zip(acc.par_iter()).for_each_init(
            || self.ops.scratch(),
            |scratch, (slice, a)| {
                let mu = [a[0] * h, a[1] * h];
                self.ops.shift(slice, &mu[..dim], scratch);
            },
        );
    }

    /// Magnetic substep: rigid counter-clockwise rotation of every velocity
    /// profile by `angle`.
    pub fn rotate(&self, f: &mut PhaseField, angle: f64) {
        let s = self.grid.slice_len();
        f.values_mut()
            .par_chunks_mut(s)
            .for_each_init(|| self.ops.scratch(), |scratch, slice| self.ops.rotate(slice, angle, scratch));
    }

    /// Fokker-Planck substep `∂_t f = (1/τA) ∇_ξ·(∇_ξ f + ξ f)` over time `h`.
    pub fn fokker_planck(&self, f: &mut PhaseField, h: f64) {
        let rel = self.ops.relaxation(self.regime.relaxation_rate() * h);
        let s = self.grid.slice_len();
        f.values_mut()
            .par_chunks_mut(s)
            .for_each_init(|| self.ops.scratch(), |scratch, slice| rel.apply(slice, scratch));
    }

    /// Exact velocity flow over `dt` with constant acceleration per node.
    fn velocity_flow(&self, f: &mut [f64], acc: &[[f64; 2]]) {
        let s = self.grid.slice_len();
        let dim = self.grid.dim();
        let angle = self.regime.rotation_rate() * self.dt;
        let magnetic = self.regime.magnetic();
        let drift = self.drift;
        f.par_chunks_mut(s).zip(acc.par_iter()).for_each_init(
            || self.ops.scratch(),
            |scratch, (slice, a)| {
                if magnetic {
                    self.ops.rotate(slice, angle, scratch);
                }
                self.relaxation.apply(slice, scratch);
                let mu = if dim == 2 {
                    let z = drift * Complex64::new(a[0], a[1]);
                    [z.re, z.im]
                } else {
                    [drift.re * a[0], 0.0]
                };
                self.ops.shift(slice, &mu[..dim], scratch);
            },
        );
    }

    /// Advances the raw values by one step and returns `min f / max f`.
    pub fn advance(&self, f: &mut [f64], time: f64) -> Result<f64> {
        self.apply_transport(f, &self.half_phase);
        let (acc, max) = self.acceleration(f);
        check_cfl(&self.regime, &self.grid, self.dt, max, self.safety)?;
        self.velocity_flow(f, &acc);
        self.apply_transport(f, &self.half_phase);
        let t = time + self.dt;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in f.iter() {
            if !v.is_finite() {
                return Err(Error::NonFinite { time: t });
            }
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo < -self.floor * hi {
            return Err(Error::Positivity { min: lo, floor: -self.floor * hi, time: t });
        }
        Ok(lo / hi)
    }

    /// One Strang step.
    pub fn step(&self, state: &KineticState) -> Result<KineticState> {
        if state.grid() != &self.grid {
            return Err(Error::Shape("state does not live on the solver grid".into()));
        }
        let mut f = state.f().clone();
        self.advance(f.values_mut(), state.time())?;
        Ok(KineticState::new(f, state.time() + self.dt))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{quadrature, Field, SpatialGrid, VelocityGrid};
    use crate::states::{maxwellian, maxwellian_field, single_mode_velocity, smooth_density, zero_vector, RegimeKind};

    fn grid(nx: usize, nv: usize) -> PhaseGrid {
        PhaseGrid::new(SpatialGrid::torus(1, nx).unwrap(), VelocityGrid::new(1, nv, 8.0).unwrap()).unwrap()
    }

    #[test]
    fn uniform_equilibrium_is_stationary() {
        let g = grid(16, 64);
        let regime = ScalingRegime::new(RegimeKind::Diffusive, 0.1, 0.25).unwrap();
        let s = g.space().clone();
        let rho = Field::constant(s.clone(), 1.0 / s.volume());
        let st = maxwellian(&rho, &zero_vector(&s), g.velocity()).unwrap();
        let solver = KineticSolver::new(regime, g, 1e-3).unwrap();
        let mut cur = st.clone();
        for _ in 0..5 {
            let next = solver.step(&cur).unwrap();
            let err = next.f().zip_map(cur.f(), |a, b| (a - b).abs()).unwrap().max();
            assert!(err < 1e-10, "{err}");
            cur = next;
        }
    }

    #[test]
    fn fokker_planck_mean_decay() {
        let g = grid(8, 64);
        let regime = ScalingRegime::new(RegimeKind::Diffusive, 0.5, 0.25).unwrap();
        let s = g.space().clone();
        let rho = Field::constant(s.clone(), 1.0 / s.volume());
        let u0 = 0.6;
        let st = maxwellian(&rho, &[Field::constant(s.clone(), u0)], g.velocity()).unwrap();
        let solver = KineticSolver::new(regime, g, 0.01).unwrap();
        let h = 0.05;
        let mut f = st.f().clone();
        solver.fokker_planck(&mut f, h);
        let after = KineticState::new(f, h);
        let decay = (-h * regime.relaxation_rate()).exp();
        for u in after.velocity()[0].values() {
            assert!((u - u0 * decay).abs() < 1e-10, "{u}");
        }
    }

    #[test]
    fn transport_is_exact_shift() {
        let g = grid(32, 16);
        let regime = ScalingRegime::new(RegimeKind::HighField, 0.2, 0.25).unwrap();
        let f = g.sample(|x, xi| (1.0 + 0.4 * (x[0]).sin()) * (-xi[0] * xi[0] / 2.0).exp());
        let solver = KineticSolver::new(regime, g.clone(), 0.01).unwrap();
        let mut moved = f.clone();
        solver.transport(&mut moved, 0.3);
        let want = g.sample(|x, xi| (1.0 + 0.4 * (x[0] - 0.3 * xi[0]).sin()) * (-xi[0] * xi[0] / 2.0).exp());
        let err = moved.zip_map(&want, |a, b| (a - b).abs()).unwrap().max();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn mass_is_conserved() {
        let g = grid(32, 64);
        let regime = ScalingRegime::new(RegimeKind::Diffusive, 0.2, 0.25).unwrap();
        let s = g.space().clone();
        let st = maxwellian(&smooth_density(&s, 7), &single_mode_velocity(&s, 0.1), g.velocity()).unwrap();
        let cfg = KineticRunConfig::with_default_dt(regime, g, 0.05, st.rho()).unwrap();
        let solver = KineticSolver::from_config(&cfg).unwrap();
        let mut cur = st.clone();
        for _ in 0..20 {
            cur = solver.step(&cur).unwrap();
        }
        assert!((cur.mass() - st.mass()).abs() < 1e-12);
    }

    #[test]
    fn cfl_violations_are_reported() {
        let g = grid(32, 64);
        let regime = ScalingRegime::new(RegimeKind::Diffusive, 0.1, 0.25).unwrap();
        assert!(matches!(check_cfl(&regime, &g, 1.0, 1.0, 0.5), Err(Error::Cfl { limit_name: "transport", .. })));
        let dt = default_time_step(&regime, &g, 1.0);
        assert!(check_cfl(&regime, &g, dt, 1.0, 0.5).is_ok());
    }

    #[test]
    fn rotation_preserves_radial_moments() {
        let s = SpatialGrid::torus(2, 8).unwrap();
        let v = VelocityGrid::new(2, 32, 8.0).unwrap();
        let g = PhaseGrid::new(s.clone(), v.clone()).unwrap();
        let regime = ScalingRegime::new(RegimeKind::Gsqg, 0.2, 0.5).unwrap();
        let rho = smooth_density(&s, 2);
        let f = maxwellian_field(&rho, &single_mode_velocity(&s, 0.8), &v).unwrap();
        let solver = KineticSolver::new(regime, g.clone(), 1e-3).unwrap();
        let energy = |f: &PhaseField| {
            let w = g.sample(|_, xi| xi[0] * xi[0] + xi[1] * xi[1]);
            quadrature(&f.zip_map(&w, |a, b| a * b).unwrap())
        };
        let mut r = f.clone();
        solver.rotate(&mut r, 0.37);
        let (a, b) = (KineticState::new(f.clone(), 0.0), KineticState::new(r.clone(), 0.0));
        for (x, y) in a.rho().values().iter().zip(b.rho().values()) {
            assert!((x - y).abs() < 1e-10);
        }
        assert!((energy(&f) - energy(&r)).abs() < 1e-10);
    }

    /// Method-of-lines right-hand side with spectral derivatives in both
    /// variables.
    fn rhs(g: &PhaseGrid, regime: &ScalingRegime, riesz: &RieszOperator, f: &[f64]) -> Vec<f64> {
        let nx = g.space().points();
        let nv = g.velocity().points();
        let xi = g.velocity().nodes();
        let field = Field::new(g.clone(), f.to_vec()).unwrap();
        let grad = crate::grid::spectral_gradient(&field);
        let (dx, dv) = (grad[0].values(), grad[1].values());
        let dvv = crate::grid::spectral_derivative(&grad[1], 1);
        let st = KineticState::new(field.clone(), 0.0);
        let force = riesz.force(st.rho());
        let (a, b) = (regime.a(), regime.b());
        let gamma = 1.0 / regime.tau();
        let mut out = vec![0.0; f.len()];
        for ix in 0..nx {
            for j in 0..nv {
                let i = ix * nv + j;
                let fp = dvv.values()[i] + f[i] + xi[j] * dv[i];
                out[i] = (-b * xi[j] * dx[i] + force[0].values()[ix] * dv[i] + gamma * fp) / a;
            }
        }
        out
    }

    fn rk4(g: &PhaseGrid, regime: &ScalingRegime, riesz: &RieszOperator, f: &[f64], h: f64, n: usize) -> Vec<f64> {
        let mut y = f.to_vec();
        let k = h / n as f64;
        let axpy = |y: &[f64], d: &[f64], c: f64| y.iter().zip(d).map(|(a, b)| a + c * b).collect::<Vec<_>>();
        for _ in 0..n {
            let k1 = rhs(g, regime, riesz, &y);
            let k2 = rhs(g, regime, riesz, &axpy(&y, &k1, 0.5 * k));
            let k3 = rhs(g, regime, riesz, &axpy(&y, &k2, 0.5 * k));
            let k4 = rhs(g, regime, riesz, &axpy(&y, &k3, k));
            for i in 0..y.len() {
                y[i] += k / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        y
    }

    #[test]
    fn step_matches_method_of_lines_reference() {
        let s = SpatialGrid::torus(1, 32).unwrap();
        let v = VelocityGrid::new(1, 32, 8.0).unwrap();
        let g = PhaseGrid::new(s.clone(), v.clone()).unwrap();
        let regime = ScalingRegime::new(RegimeKind::Diffusive, 0.5, 0.25).unwrap();
        let riesz = RieszOperator::new(0.25, &s).unwrap();
        let rho = s.sample(|x| (1.0 + 0.3 * x[0].cos()) / s.volume());
        let u = vec![s.sample(|x| 0.2 * x[0].sin())];
        let f0 = maxwellian_field(&rho, &u, &v).unwrap();
        let mut errs = Vec::new();
        for h in [4e-3, 2e-3] {
            let solver = KineticSolver::new(regime, g.clone(), h).unwrap();
            let mut f = f0.values().to_vec();
            solver.advance(&mut f, 0.0).unwrap();
            let reference = rk4(&g, &regime, &riesz, f0.values(), h, 40);
            let err = f.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            errs.push(err);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(errs[0] < 1e-5, "{errs:?}");
        assert!(order > 2.7, "local order {order}, errors {errs:?}");
    }
}
