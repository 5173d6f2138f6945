//! Entropies, energies, relative entropy and its decomposition, Fisher
//! dissipation, modulated energy, and checkers for the functional
//! inequalities they satisfy.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::grid::{quadrature, Field, Lattice, PhaseField, ScalarField, SpectralPlan};
use crate::riesz::RieszOperator;
use crate::states::{log_maxwellian, KineticState, ScalingRegime, DENSITY_FLOOR};

/// Values at or below this are treated as vacuum in `f log f`.
pub const LOG_FLOOR: f64 = 1e-300;

/// Fisher integrand cut-off relative to `max f`; below it the spectral
/// derivative is pure round-off.
pub const FISHER_REL_FLOOR: f64 = 1e-13;

/// Slack allowed by the inequality checkers.
pub const INEQUALITY_SLACK: f64 = 1e-12;

fn xlogx(v: f64) -> f64 {
    if v > LOG_FLOOR {
        v * v.ln()
    } else {
        0.0
    }
}

/// `𝓗[f] = ∬ f log f`.
pub fn boltzmann_entropy<G: Lattice>(f: &Field<G>) -> f64 {
    f.grid().cell_volume() * f.values().iter().map(|&v| xlogx(v)).sum::<f64>()
}

/// `𝓚[f] = ∬ |ξ|²/2 f`.
pub fn kinetic_energy(f: &PhaseField) -> f64 {
    let grid = f.grid();
    let nv = grid.slice_len();
    let half_sq: Vec<f64> = (0..nv)
        .map(|i| {
            let v = grid.velocity().velocity(i);
            0.5 * (v[0] * v[0] + v[1] * v[1])
        })
        .collect();
    let sum: f64 = f.values().chunks_exact(nv).map(|s| s.iter().zip(&half_sq).map(|(a, b)| a * b).sum::<f64>()).sum();
    grid.cell_volume() * sum
}

/// `𝓕[f] = 𝓚[f] + 𝓗[f]`.
pub fn free_energy(f: &PhaseField) -> f64 {
    kinetic_energy(f) + boltzmann_entropy(f)
}

fn vector_at(u: &[ScalarField], ix: usize) -> [f64; 2] {
    [u[0].values()[ix], if u.len() > 1 { u[1].values()[ix] } else { 0.0 }]
}

/// `∬ f log(f/M_{ρ,u}) - ∬ (f - M_{ρ,u})`.
pub fn relative_entropy(state: &KineticState, rho: &ScalarField, u: &[ScalarField]) -> f64 {
    let grid = state.grid();
    let d = grid.dim();
    let nv = grid.slice_len();
    let vg = grid.velocity();
    let mut sum = 0.0;
    for (ix, slice) in state.f().values().chunks_exact(nv).enumerate() {
        let r = rho.values()[ix];
        let ux = vector_at(u, ix);
        for (iv, &v) in slice.iter().enumerate() {
            let xi = vg.velocity(iv);
            let lm = log_maxwellian(r, &ux[..d], &xi[..d]);
            let m = lm.exp();
            let ent = if v > LOG_FLOOR { v * (v.ln() - lm) } else { 0.0 };
            sum += ent - (v - m);
        }
    }
    grid.cell_volume() * sum
}

/// Microscopic, density and velocity parts of the relative entropy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Decomposition {
    pub micro: f64,
    pub density: f64,
    pub velocity: f64,
}

impl Decomposition {
    pub fn total(&self) -> f64 {
        self.micro + self.density + self.velocity
    }
}

/// Splits `∬ f log(f/M_{ρ,u})` into `∬ f log(f/M_{ρ_f,u_f})`,
/// `∫ ρ_f log(ρ_f/ρ)` and `∫ ρ_f |u_f - u|²/2`.
pub fn entropy_decomposition(state: &KineticState, rho: &ScalarField, u: &[ScalarField]) -> Decomposition {
    let grid = state.grid();
    let d = grid.dim();
    let nv = grid.slice_len();
    let vg = grid.velocity();
    let (mut micro, mut density, mut velocity) = (0.0, 0.0, 0.0);
    for (ix, slice) in state.f().values().chunks_exact(nv).enumerate() {
        let rf = state.rho().values()[ix];
        let uf = vector_at(state.velocity(), ix);
        let ut = vector_at(u, ix);
        if rf > DENSITY_FLOOR {
            for (iv, &v) in slice.iter().enumerate() {
                if v > LOG_FLOOR {
                    let xi = vg.velocity(iv);
                    micro += v * (v.ln() - log_maxwellian(rf, &uf[..d], &xi[..d]));
                }
            }
            density += rf * (rf / rho.values()[ix]).ln();
            velocity += 0.5 * rf * (0..d).map(|j| (uf[j] - ut[j]).powi(2)).sum::<f64>();
        }
    }
    Decomposition {
        micro: micro * grid.cell_volume(),
        density: density * grid.space().cell_volume(),
        velocity: velocity * grid.space().cell_volume(),
    }
}

/// Spectral velocity derivatives of every slice of `f`, one array per axis.
pub fn velocity_gradient(f: &PhaseField) -> Vec<Vec<f64>> {
    let grid = f.grid();
    let vg = grid.velocity();
    let d = grid.dim();
    let nv = grid.slice_len();
    let plan = SpectralPlan::for_lattice(vg);
    let mut out = vec![vec![0.0; f.values().len()]; d];
    let mut buf = vec![Complex64::new(0.0, 0.0); nv];
    for (ix, slice) in f.values().chunks_exact(nv).enumerate() {
        for (b, &v) in buf.iter_mut().zip(slice) {
            *b = Complex64::new(v, 0.0);
        }
        plan.forward(&mut buf);
        for (axis, o) in out.iter_mut().enumerate() {
            let der = plan.inverse_real(crate::grid::derivative_spectrum(&plan, &buf, axis));
            o[ix * nv..(ix + 1) * nv].copy_from_slice(&der);
        }
    }
    out
}

/// `∬ |∇_ξ f + (ξ - s) f|² / f`, with `s = 0` when no shift is given.
pub fn fisher_dissipation(f: &PhaseField, shift: Option<&[ScalarField]>) -> f64 {
    let grid = f.grid();
    let d = grid.dim();
    let nv = grid.slice_len();
    let vg = grid.velocity();
    let grad = velocity_gradient(f);
    let floor = LOG_FLOOR.max(FISHER_REL_FLOOR * f.max());
    let mut sum = 0.0;
    for ix in 0..grid.space().node_count() {
        let s = shift.map(|s| vector_at(s, ix)).unwrap_or([0.0; 2]);
        for iv in 0..nv {
            let idx = ix * nv + iv;
            let v = f.values()[idx];
            if v > floor {
                let xi = vg.velocity(iv);
                let q: f64 = (0..d).map(|j| (grad[j][idx] + (xi[j] - s[j]) * v).powi(2)).sum();
                sum += q / v;
            }
        }
    }
    grid.cell_volume() * sum
}

/// All scalar functionals at one time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FunctionalReport {
    pub time: f64,
    /// `𝓗[f]`
    pub entropy: f64,
    /// `𝓚[f]`
    pub kinetic: f64,
    /// `𝓕[f]`
    pub free_energy: f64,
    /// `𝓟[ρ_f]`
    pub potential: f64,
    /// `𝓓[f]`
    pub dissipation: f64,
    /// `𝓗[f|M_{ρ,u}]`
    pub rel_entropy: f64,
    /// `𝓟[ρ_f|ρ]`
    pub rel_potential: f64,
    /// `rel_entropy + rel_potential`
    pub modulated: f64,
    pub decomposition: Decomposition,
}

impl FunctionalReport {
    /// Evaluates every functional. Relative quantities are taken against the
    /// target `(ρ, u)`, or against the local Maxwellian of `f` when absent.
    pub fn evaluate(
        state: &KineticState,
        riesz: &RieszOperator,
        target: Option<(&ScalarField, &[ScalarField])>,
    ) -> Self {
        let f = state.f();
        let entropy = boltzmann_entropy(f);
        let kinetic = kinetic_energy(f);
        let (rho, u) = target.unwrap_or((state.rho(), state.velocity()));
        let rel_entropy = relative_entropy(state, rho, u);
        let rel_potential = riesz.relative_potential_energy(state.rho(), rho);
        Self {
            time: state.time(),
            entropy,
            kinetic,
            free_energy: entropy + kinetic,
            potential: riesz.interaction_energy(state.rho()),
            dissipation: fisher_dissipation(f, None),
            rel_entropy,
            rel_potential,
            modulated: rel_entropy + rel_potential,
            decomposition: entropy_decomposition(state, rho, u),
        }
    }
}

fn trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; times.len()];
    for i in 1..times.len() {
        acc[i] = acc[i - 1] + 0.5 * (times[i] - times[i - 1]) * (values[i] + values[i - 1]);
    }
    acc
}

/// Largest relative deviation of `𝓕 + 𝓟/B + (1/τA)∫₀ᵗ 𝓓` from its initial
/// value along a trace, with the time integral by the trapezoid rule.
pub fn energy_balance_residual(trace: &[FunctionalReport], regime: &ScalingRegime) -> f64 {
    let Some(first) = trace.first() else { return 0.0 };
    let times: Vec<f64> = trace.iter().map(|r| r.time).collect();
    let diss: Vec<f64> = trace.iter().map(|r| r.dissipation).collect();
    let integral = trapezoid(&times, &diss);
    let rate = regime.relaxation_rate();
    let rhs = first.free_energy + first.potential / regime.b();
    trace
        .iter()
        .zip(&integral)
        .map(|(r, i)| ((r.free_energy + r.potential / regime.b() + rate * i) - rhs).abs() / rhs.abs())
        .fold(0.0, f64::max)
}

/// Both sides of `∫₀ᵀ 𝓚 ≤ dT + τA 𝓚[f₀] + (τA/B) 𝓟[ρ_{f₀}]`.
pub fn kinetic_energy_bound(trace: &[FunctionalReport], regime: &ScalingRegime, dim: usize) -> (f64, f64) {
    let (Some(first), Some(last)) = (trace.first(), trace.last()) else { return (0.0, 0.0) };
    let times: Vec<f64> = trace.iter().map(|r| r.time).collect();
    let kin: Vec<f64> = trace.iter().map(|r| r.kinetic).collect();
    let lhs = *trapezoid(&times, &kin).last().unwrap_or(&0.0);
    let ta = regime.tau() * regime.a();
    let t = last.time - first.time;
    (lhs, dim as f64 * t + ta * first.kinetic + ta / regime.b() * first.potential)
}

/// Outcome of an inequality check `lhs ≤ rhs + slack`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl InequalityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, holds: lhs <= rhs + INEQUALITY_SLACK }
    }

    /// `rhs - lhs`.
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

fn kl_divergence<G: Lattice>(p: &Field<G>, q: &Field<G>) -> f64 {
    let sum: f64 =
        p.values().iter().zip(q.values()).map(|(&a, &b)| if a > LOG_FLOOR { a * (a / b).ln() } else { 0.0 }).sum();
    p.grid().cell_volume() * sum
}

/// `‖p - q‖₁² ≤ 2∫ p log(p/q)` for probability densities.
pub fn check_ckp<G: Lattice>(p: &Field<G>, q: &Field<G>) -> InequalityCheck {
    let tv = p.zip_map(q, |a, b| a - b).expect("same grid").l1_norm();
    InequalityCheck::new(tv * tv, 2.0 * kl_divergence(p, q))
}

/// `½‖p - q‖₁² + ‖√p - √q‖₂² ≤ 2∫ p log(p/q)`.
pub fn check_ckp_sharpened<G: Lattice>(p: &Field<G>, q: &Field<G>) -> InequalityCheck {
    let tv = p.zip_map(q, |a, b| a - b).expect("same grid").l1_norm();
    let hell = quadrature(&p.zip_map(q, |a, b| (a.max(0.0).sqrt() - b.max(0.0).sqrt()).powi(2)).expect("same grid"));
    InequalityCheck::new(0.5 * tv * tv + hell, 2.0 * kl_divergence(p, q))
}

/// `∬ f log(f/M_{ρ_f,u}) ≤ ½ ∬ |∇_ξ f + (ξ - u) f|²/f` with a spatially varying `u`.
pub fn check_log_sobolev(state: &KineticState, u: &[ScalarField]) -> InequalityCheck {
    let grid = state.grid();
    let d = grid.dim();
    let nv = grid.slice_len();
    let vg = grid.velocity();
    let mut lhs = 0.0;
    for (ix, slice) in state.f().values().chunks_exact(nv).enumerate() {
        let rf = state.rho().values()[ix];
        if rf <= DENSITY_FLOOR {
            continue;
        }
        let ux = vector_at(u, ix);
        for (iv, &v) in slice.iter().enumerate() {
            if v > LOG_FLOOR {
                let xi = vg.velocity(iv);
                lhs += v * (v.ln() - log_maxwellian(rf, &ux[..d], &xi[..d]));
            }
        }
    }
    lhs *= grid.cell_volume();
    InequalityCheck::new(lhs, 0.5 * fisher_dissipation(state.f(), Some(u)))
}

/// Pointwise lower bound for the density part of the relative entropy:
/// `ρ_f log(ρ_f/ρ) - ρ_f + ρ ≥ |ρ_f - ρ|²/(4ρ)` where `|ρ_f - ρ| ≤ ρ` and
/// `≥ |ρ_f - ρ|/4` elsewhere. Reports the point with the smallest margin.
pub fn check_coercivity(rho_f: &ScalarField, rho: &ScalarField) -> InequalityCheck {
    let mut worst: Option<InequalityCheck> = None;
    for (&a, &b) in rho_f.values().iter().zip(rho.values()) {
        let entropy = xlogx(a) - a * b.ln() - a + b;
        let bound = coercivity_bound(a, b);
        let check = InequalityCheck::new(bound, entropy);
        if worst.is_none_or(|w| check.margin() < w.margin()) {
            worst = Some(check);
        }
    }
    worst.unwrap_or(InequalityCheck::new(0.0, 0.0))
}

fn coercivity_bound(rho_f: f64, rho: f64) -> f64 {
    let gap = (rho_f - rho).abs();
    if gap <= rho {
        gap * gap / (4.0 * rho)
    } else {
        0.25 * gap
    }
}

/// `-(d/2) log(2π)` times the mass: the free energy of the unit-temperature
/// Maxwellian with that mass.
pub fn maxwellian_free_energy_offset(dim: usize, mass: f64) -> f64 {
    -0.5 * dim as f64 * (2.0 * PI).ln() * mass
}
