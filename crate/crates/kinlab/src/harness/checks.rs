//! Randomized invariant suites with machine-readable verdicts.

use std::f64::consts::PI;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::functionals::{
    check_ckp, check_ckp_sharpened, check_coercivity, check_log_sobolev, energy_balance_residual,
    entropy_decomposition, kinetic_energy_bound, relative_entropy, FunctionalReport, INEQUALITY_SLACK, LOG_FLOOR,
};
use crate::grid::{quadrature, Lattice, PhaseField, PhaseGrid, ScalarField, SpatialGrid, VelocityGrid};
use crate::kinetic::{KineticRunConfig, KineticSolver};
use crate::macrolimits::{gyro_average, gyro_generator, hilbert_corrector_check};
use crate::metrics::{bl_distance_with, total_variation, w1_1d, AscentOptions, BlMethod};
use crate::riesz::RieszOperator;
use crate::states::{
    log_maxwellian, maxwellian_field, single_mode_velocity, smooth_density, KineticState, RegimeKind, ScalingRegime,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SuiteKind {
    Functionals,
    Metrics,
    Gyro,
    Energy,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 4] = [SuiteKind::Functionals, SuiteKind::Metrics, SuiteKind::Gyro, SuiteKind::Energy];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Functionals => "functionals",
            SuiteKind::Metrics => "metrics",
            SuiteKind::Gyro => "gyro",
            SuiteKind::Energy => "energy",
        }
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown check suite {s:?}")))
    }
}

/// Verdict on one property over all its cases.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyResult {
    pub name: String,
    pub cases: usize,
    pub failures: usize,
    /// Largest observed defect, in the units of `tolerance`.
    pub worst: f64,
    pub tolerance: f64,
}

impl PropertyResult {
    fn new(name: &str, tolerance: f64) -> Self {
        Self { name: name.to_string(), cases: 0, failures: 0, worst: 0.0, tolerance }
    }

    /// Records one case whose defect must not exceed the tolerance.
    fn record(&mut self, defect: f64) {
        self.cases += 1;
        self.worst = self.worst.max(defect);
        if !(defect <= self.tolerance) {
            self.failures += 1;
        }
    }

    pub fn passed(&self) -> bool {
        self.cases > 0 && self.failures == 0
    }
}

impl PropertyResult {
    fn line(&self, prefix: &str) -> String {
        format!(
            "{} {prefix}{} cases={} failures={} worst={:.3e} tol={:.1e}",
            if self.passed() { "PASS" } else { "FAIL" },
            self.name,
            self.cases,
            self.failures,
            self.worst,
            self.tolerance
        )
    }
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line(""))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: SuiteKind,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn property(&self, name: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.properties {
            writeln!(f, "{}", p.line(&format!("{}.", self.suite.name())))?;
        }
        Ok(())
    }
}

/// Runs one suite; `cases` random instances for the randomized suites.
pub fn check_suite(suite: SuiteKind, seed: u64, cases: usize) -> Result<SuiteReport> {
    let properties = match suite {
        SuiteKind::Functionals => functionals_suite(seed, cases)?,
        SuiteKind::Metrics => metrics_suite(seed, cases)?,
        SuiteKind::Gyro => gyro_suite(seed, cases)?,
        SuiteKind::Energy => energy_suite()?,
    };
    Ok(SuiteReport { suite, seed, properties })
}

/// Positive density `1 + Σ a_k cos(kx) + b_k sin(kx)` with `Σ|a_k| + |b_k| < 1`,
/// normalized to `mass`.
fn random_density(rng: &mut ChaCha8Rng, grid: &SpatialGrid, mass: f64, strength: Range<f64>) -> ScalarField {
    let strength = rng.random_range(strength);
    let modes: Vec<(f64, f64, usize, usize)> = (0..4)
        .map(|_| {
            let a = rng.random_range(-1.0..1.0);
            let b = rng.random_range(-1.0..1.0);
            (a, b, rng.random_range(1..4usize), rng.random_range(0..4usize))
        })
        .collect();
    let total: f64 = modes.iter().map(|m| m.0.abs() + m.1.abs()).sum();
    let c = strength / total.max(1e-12);
    let scale = 2.0 * PI / grid.length();
    let raw = grid.sample(|x| {
        let y = scale * x[0];
        let z = if x.len() > 1 { scale * x[1] } else { 0.0 };
        1.0 + modes
            .iter()
            .map(|&(a, b, k, l)| {
                let ph = k as f64 * y + l as f64 * z;
                c * (a * ph.cos() + b * ph.sin())
            })
            .sum::<f64>()
    });
    let m = quadrature(&raw);
    raw.scaled(mass / m)
}

fn random_velocity(rng: &mut ChaCha8Rng, grid: &SpatialGrid, amp: f64) -> Vec<ScalarField> {
    let scale = 2.0 * PI / grid.length();
    (0..grid.dim())
        .map(|_| {
            let (c0, c1, p) =
                (rng.random_range(-amp..amp), rng.random_range(-amp..amp), rng.random_range(0.0..2.0 * PI));
            grid.sample(|x| c0 + c1 * (scale * x[0] + p).cos())
        })
        .collect()
}

/// Unit-mass mixture of two local Maxwellians: positive and non-Maxwellian.
fn random_state(rng: &mut ChaCha8Rng, space: &SpatialGrid, velocity: &VelocityGrid) -> Result<KineticState> {
    let w = rng.random_range(0.2..0.8);
    let r1 = random_density(rng, space, w, 0.1..0.6);
    let r2 = random_density(rng, space, 1.0 - w, 0.1..0.6);
    let u1 = random_velocity(rng, space, 1.0);
    let u2 = random_velocity(rng, space, 1.0);
    let m1 = maxwellian_field(&r1, &u1, velocity)?;
    let m2 = maxwellian_field(&r2, &u2, velocity)?;
    let f = m1.zip_map(&m2, |a, b| a + b)?;
    let mass = quadrature(&f);
    Ok(KineticState::new(f.scaled(1.0 / mass), 0.0))
}

/// `∬ f log(f/M_{ρ,u})` summed directly.
fn kl_to_maxwellian(state: &KineticState, rho: &ScalarField, u: &[ScalarField]) -> f64 {
    let grid = state.grid();
    let d = grid.dim();
    let nv = grid.slice_len();
    let mut sum = 0.0;
    for (ix, slice) in state.f().values().chunks_exact(nv).enumerate() {
        let ux = [u[0].values()[ix], if d == 2 { u[1].values()[ix] } else { 0.0 }];
        for (iv, &v) in slice.iter().enumerate() {
            if v > LOG_FLOOR {
                let xi = grid.velocity().velocity(iv);
                sum += v * (v.ln() - log_maxwellian(rho.values()[ix], &ux[..d], &xi[..d]));
            }
        }
    }
    sum * grid.cell_volume()
}

fn functionals_suite(seed: u64, cases: usize) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = SpatialGrid::torus(1, 64)?;
    let velocity = VelocityGrid::new(1, 64, 8.0)?;
    let mut decomposition = PropertyResult::new("decomposition_identity", 1e-9);
    let mut parts = PropertyResult::new("decomposition_parts_nonnegative", 1e-10);
    let mut rel = PropertyResult::new("relative_entropy_nonnegative", 1e-12);
    let mut ckp = PropertyResult::new("ckp", INEQUALITY_SLACK);
    let mut sharp = PropertyResult::new("ckp_sharpened", INEQUALITY_SLACK);
    let mut lsi = PropertyResult::new("log_sobolev", INEQUALITY_SLACK);
    let mut coercive = PropertyResult::new("coercivity", INEQUALITY_SLACK);
    for _ in 0..cases {
        let state = random_state(&mut rng, &space, &velocity)?;
        let rho = random_density(&mut rng, &space, state.mass(), 0.0..0.9);
        let u = random_velocity(&mut rng, &space, 1.5);

        let dec = entropy_decomposition(&state, &rho, &u);
        let kl = kl_to_maxwellian(&state, &rho, &u);
        decomposition.record((dec.total() - kl).abs() / kl.abs().max(1e-300));
        parts.record(-dec.micro.min(dec.density).min(dec.velocity));
        rel.record(-relative_entropy(&state, &rho, &u));

        let violation = |c: crate::functionals::InequalityCheck| (c.lhs - c.rhs).max(0.0);
        let p = state.rho().scaled(1.0 / state.mass());
        let q = rho.scaled(1.0 / quadrature(&rho));
        ckp.record(violation(check_ckp(&p, &q)));
        sharp.record(violation(check_ckp_sharpened(&p, &q)));
        lsi.record(violation(check_log_sobolev(&state, &u)));
        let wide = random_density(&mut rng, &space, state.mass(), 0.5..0.99);
        coercive.record(violation(check_coercivity(&wide, &rho)));
    }
    Ok(vec![decomposition, parts, rel, ckp, sharp, lsi, coercive])
}

fn metrics_suite(seed: u64, cases: usize) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ascent = PropertyResult::new("ascent_vs_lp_relative", 0.05);
    let mut certified = PropertyResult::new("ascent_bounds_bracket_lp", 1e-9);
    let mut envelope = PropertyResult::new("bl_below_w1_and_tv", 1e-9);
    let plane = SpatialGrid::torus(2, 8)?;
    let phase = PhaseGrid::new(SpatialGrid::torus(1, 8)?, VelocityGrid::with_tolerance(1, 8, 4.0, 1e-3)?)?;
    let line = SpatialGrid::torus(1, 64)?;
    let opts = BlMethod::Ascent(AscentOptions::default());
    for _ in 0..cases.max(1) {
        let mu = random_density(&mut rng, &plane, 1.0, 0.2..0.9);
        let nu = random_density(&mut rng, &plane, 1.0, 0.2..0.9);
        let exact = bl_distance_with(&mu, &nu, BlMethod::Exact)?.value;
        let est = bl_distance_with(&mu, &nu, opts)?;
        ascent.record((est.value - exact).abs() / exact);
        certified.record((est.value - exact).max(exact - est.upper));

        let gp = random_phase(&mut rng, &phase);
        let gq = random_phase(&mut rng, &phase);
        let exact = bl_distance_with(&gp, &gq, BlMethod::Exact)?.value;
        let est = bl_distance_with(&gp, &gq, opts)?;
        ascent.record((est.value - exact).abs() / exact);
        certified.record((est.value - exact).max(exact - est.upper));

        let a = random_density(&mut rng, &line, 1.0, 0.2..0.95);
        let b = random_density(&mut rng, &line, 1.0, 0.2..0.95);
        let d = bl_distance_with(&a, &b, BlMethod::Auto)?.value;
        let bound = w1_1d(&a, &b)?.min(total_variation(&a, &b)?);
        envelope.record(d - bound);
    }
    Ok(vec![ascent, certified, envelope])
}

fn random_phase(rng: &mut ChaCha8Rng, grid: &PhaseGrid) -> PhaseField {
    let (a, b, c) = (rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0), rng.random_range(0.5..1.5));
    let f = grid.sample(|x, xi| (1.0 + a * x[0].cos()) * (-(xi[0] - b).powi(2) / (2.0 * c)).exp());
    let m = quadrature(&f);
    f.scaled(1.0 / m)
}

/// Band-limited `g = p(x, ξ) e^{-|ξ|²/2}` with `p` quadratic in `ξ`.
fn random_gyro_field(rng: &mut ChaCha8Rng, grid: &PhaseGrid) -> PhaseField {
    let c: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
    grid.sample(|x, xi| {
        let (a, b) = (xi[0], xi[1]);
        let poly = c[0] + c[1] * a + c[2] * b + c[3] * a * a + c[4] * a * b + c[5] * b * b;
        (1.0 + c[6] * x[0].cos() * x[1].sin()) * poly * (-(a * a + b * b) / 2.0).exp()
    })
}

fn gyro_suite(seed: u64, cases: usize) -> Result<Vec<PropertyResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = PhaseGrid::new(SpatialGrid::torus(2, 8)?, VelocityGrid::new(2, 48, 8.0)?)?;
    let mut annihilation = PropertyResult::new("average_annihilates_generator", 1e-8);
    let mut idempotent = PropertyResult::new("average_idempotent", 1e-9);
    let mut corrector = PropertyResult::new("corrector_flux", 1e-8);
    let mut cancellation = PropertyResult::new("corrector_divergence", 1e-10);
    for _ in 0..cases.max(1) {
        let g = random_gyro_field(&mut rng, &grid);
        let p = gyro_average(&g)?;
        idempotent.record(gyro_average(&p)?.zip_map(&p, |a, b| a - b)?.max_abs());
        annihilation.record(gyro_average(&gyro_generator(&g)?)?.max_abs());
    }
    let space = SpatialGrid::torus(2, 16)?;
    let velocity = VelocityGrid::new(2, 64, 8.0)?;
    for k in 0..cases.clamp(1, 4) {
        let rho = smooth_density(&space, seed.wrapping_add(k as u64));
        let check = hilbert_corrector_check(&rho, 0.5, &velocity)?;
        corrector.record(check.err);
        cancellation.record(check.div_err);
    }
    Ok(vec![annihilation, idempotent, corrector, cancellation])
}

/// Energy balance residuals of one diffusive run at successively halved steps.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyStudy {
    pub dts: Vec<f64>,
    pub residuals: Vec<f64>,
    /// `log₂` of successive residual ratios.
    pub orders: Vec<f64>,
    /// `(∫₀ᵀ 𝓚, bound)` on the finest run.
    pub kinetic_bound: (f64, f64),
}

/// Diffusive run from a Maxwellian with a single-mode mean velocity, with a
/// report at every step so that the dissipation integral is second order.
pub fn energy_balance_study(grid: &PhaseGrid, eps: f64, alpha: f64, t_end: f64, dts: &[f64]) -> Result<EnergyStudy> {
    let regime = ScalingRegime::new(RegimeKind::Diffusive, eps, alpha)?;
    let space = grid.space();
    let rho0 = smooth_density(space, 5);
    let u0 = single_mode_velocity(space, 0.5);
    let f0 = maxwellian_field(&rho0, &u0, grid.velocity())?;
    let riesz = RieszOperator::new(alpha, space)?;
    let mut residuals = Vec::new();
    let mut kinetic_bound = (0.0, 0.0);
    for &dt in dts {
        let cfg = KineticRunConfig::new(regime, grid.clone(), dt, t_end);
        let solver = KineticSolver::from_config(&cfg)?;
        let (steps, h) = cfg.schedule();
        let mut f = f0.clone();
        let mut trace = vec![FunctionalReport::evaluate(&KineticState::new(f.clone(), 0.0), &riesz, None)];
        for k in 1..=steps {
            solver.advance(f.values_mut(), (k - 1) as f64 * h)?;
            trace.push(FunctionalReport::evaluate(&KineticState::new(f.clone(), k as f64 * h), &riesz, None));
        }
        residuals.push(energy_balance_residual(&trace, &regime));
        kinetic_bound = kinetic_energy_bound(&trace, &regime, grid.dim());
    }
    let orders = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(EnergyStudy { dts: dts.to_vec(), residuals, orders, kinetic_bound })
}

fn energy_suite() -> Result<Vec<PropertyResult>> {
    let grid = PhaseGrid::new(SpatialGrid::torus(1, 32)?, VelocityGrid::new(1, 48, 8.0)?)?;
    let study = energy_balance_study(&grid, 0.1, 0.25, 0.1, &[4e-4, 2e-4])?;
    let mut balance = PropertyResult::new("energy_balance", 1e-3);
    balance.record(*study.residuals.last().expect("two runs"));
    let mut bound = PropertyResult::new("kinetic_energy_bound", 0.0);
    bound.record(study.kinetic_bound.0 - study.kinetic_bound.1);
    Ok(vec![balance, bound])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_states_have_unit_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = SpatialGrid::torus(1, 16).unwrap();
        let v = VelocityGrid::new(1, 48, 8.0).unwrap();
        for _ in 0..5 {
            let st = random_state(&mut rng, &s, &v).unwrap();
            assert!((st.mass() - 1.0).abs() < 1e-12);
            assert!(st.f().min() > 0.0);
            let r = random_density(&mut rng, &s, 0.7, 0.9..0.95);
            assert!(r.min() > 0.0 && (quadrature(&r) - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn small_suites_pass() {
        for kind in [SuiteKind::Functionals, SuiteKind::Metrics] {
            let report = check_suite(kind, 11, 3).unwrap();
            assert!(report.passed(), "{report}");
        }
    }

    #[test]
    fn suite_names() {
        for k in SuiteKind::ALL {
            assert_eq!(k.name().parse::<SuiteKind>().unwrap(), k);
        }
        let mut p = PropertyResult::new("x", 1.0);
        assert!(!p.passed());
        p.record(0.5);
        p.record(f64::NAN);
        assert_eq!(p.failures, 1);
    }
}
