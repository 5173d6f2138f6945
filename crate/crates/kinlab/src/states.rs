//! Scaling regimes, local Maxwellians, velocity moments, macroscopic states
//! and the prepared initial-data families.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{
    quadrature, Field, Lattice, PhaseField, PhaseGrid, ScalarField, SpatialGrid, VectorField, VelocityGrid,
};
use crate::riesz::RieszOperator;
use crate::{Error, Result};

/// Densities at or below this value get zero mean velocity.
pub const DENSITY_FLOOR: f64 = 1e-12;

/// Tolerated spectral undershoot of `f`, relative to its maximum.
pub const UNDERSHOOT_TOL: f64 = 1e-13;

/// Unit-mass tolerance for macroscopic states.
pub const MASS_TOL: f64 = 1e-9;

/// The three singular scalings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeKind {
    Diffusive,
    HighField,
    Gsqg,
}

impl RegimeKind {
    pub fn name(self) -> &'static str {
        match self {
            RegimeKind::Diffusive => "diffusive",
            RegimeKind::HighField => "highfield",
            RegimeKind::Gsqg => "gsqg",
        }
    }
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RegimeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "diffusive" => Ok(RegimeKind::Diffusive),
            "highfield" => Ok(RegimeKind::HighField),
            "gsqg" | "magnetic" => Ok(RegimeKind::Gsqg),
            other => Err(Error::Parameter(format!("unknown regime {other:?}"))),
        }
    }
}

/// Coefficients `(A, B, τ)` and the magnetic flag of one scaling, with the
/// velocity temperature fixed to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalingRegime {
    kind: RegimeKind,
    epsilon: f64,
    alpha: f64,
    a: f64,
    b: f64,
    tau: f64,
    magnetic: bool,
}

impl ScalingRegime {
    pub fn new(kind: RegimeKind, epsilon: f64, alpha: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::Parameter(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(alpha.is_finite() && alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        let (a, b, tau, magnetic) = match kind {
            RegimeKind::Diffusive => (epsilon, 1.0, epsilon, false),
            RegimeKind::HighField => (epsilon, epsilon, 1.0, false),
            RegimeKind::Gsqg => (epsilon, 1.0, 1.0, true),
        };
        Ok(Self { kind, epsilon, alpha, a, b, tau, magnetic })
    }

    pub fn kind(&self) -> RegimeKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn magnetic(&self) -> bool {
        self.magnetic
    }

    /// Spatial transport speed factor `B/A`.
    pub fn transport_speed(&self) -> f64 {
        self.b / self.a
    }

    /// Velocity-space acceleration factor `1/A` multiplying `-∇Φ`.
    pub fn force_factor(&self) -> f64 {
        1.0 / self.a
    }

    /// Relaxation rate `1/(τA)` of the Fokker-Planck term.
    pub fn relaxation_rate(&self) -> f64 {
        1.0 / (self.tau * self.a)
    }

    /// Angular velocity `1/(Aε)` of the magnetic rotation, zero when off.
    pub fn rotation_rate(&self) -> f64 {
        if self.magnetic {
            1.0 / (self.a * self.epsilon)
        } else {
            0.0
        }
    }

    /// Checks that the regime can run in `dim` dimensions.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if self.magnetic && dim != 2 {
            return Err(Error::Parameter("the magnetic scaling needs two dimensions".into()));
        }
        Ok(())
    }
}

/// Phase-space density with its velocity moments.
#[derive(Clone, Debug)]
pub struct KineticState {
    f: PhaseField,
    time: f64,
    rho: ScalarField,
    m: VectorField,
    u: VectorField,
}

impl KineticState {
    pub fn new(f: PhaseField, time: f64) -> Self {
        let (rho, m, u) = moments(&f);
        Self { f, time, rho, m, u }
    }

    pub fn f(&self) -> &PhaseField {
        &self.f
    }

    pub fn grid(&self) -> &PhaseGrid {
        self.f.grid()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    /// `ρ_f u_f = ∫ ξ f dξ`.
    pub fn momentum(&self) -> &[ScalarField] {
        &self.m
    }

    /// `u_f`, zero where `ρ_f` is below [`DENSITY_FLOOR`].
    pub fn velocity(&self) -> &[ScalarField] {
        &self.u
    }

    pub fn mass(&self) -> f64 {
        quadrature(&self.f)
    }

    pub fn into_field(self) -> PhaseField {
        self.f
    }

    /// `f` with negative undershoots set to zero.
    pub fn clipped(&self) -> PhaseField {
        self.f.map(|v| v.max(0.0))
    }

    /// Whether the undershoot stays within the tolerated spectral noise.
    pub fn is_admissible(&self) -> bool {
        self.f.min() >= -UNDERSHOOT_TOL * self.f.max().max(0.0)
    }
}

/// Velocity moments `(ρ_f, ρ_f u_f, u_f)` by quadrature over each velocity slice.
pub fn moments(f: &PhaseField) -> (ScalarField, VectorField, VectorField) {
    let grid = f.grid();
    let d = grid.dim();
    let vg = grid.velocity();
    let dv = vg.cell_volume();
    let nv = grid.slice_len();
    let nx = grid.space().node_count();
    let xi: Vec<[f64; 2]> = (0..nv).map(|i| vg.velocity(i)).collect();
    let mut rho = vec![0.0; nx];
    let mut m = vec![vec![0.0; nx]; d];
    let mut u = vec![vec![0.0; nx]; d];
    for (ix, slice) in f.values().chunks_exact(nv).enumerate() {
        let mut r = 0.0;
        let mut mm = [0.0; 2];
        for (v, x) in slice.iter().zip(&xi) {
            r += v;
            for j in 0..d {
                mm[j] += v * x[j];
            }
        }
        rho[ix] = r * dv;
        for j in 0..d {
            m[j][ix] = mm[j] * dv;
            if rho[ix] > DENSITY_FLOOR {
                u[j][ix] = m[j][ix] / rho[ix];
            }
        }
    }
    let space = grid.space().clone();
    let wrap = |v: Vec<f64>| Field::new(space.clone(), v).expect("spatial size");
    (wrap(rho), m.into_iter().map(wrap).collect(), u.into_iter().map(wrap).collect())
}

/// `log M_{ρ,u}(ξ)` for a single spatial point.
pub fn log_maxwellian(rho: f64, u: &[f64], xi: &[f64]) -> f64 {
    let d = u.len() as f64;
    let r2: f64 = u.iter().zip(xi).map(|(a, b)| (b - a) * (b - a)).sum();
    rho.ln() - 0.5 * d * (2.0 * PI).ln() - 0.5 * r2
}

fn check_vector(rho: &ScalarField, u: &[ScalarField]) -> Result<()> {
    if u.len() != rho.grid().dim() || u.iter().any(|c| c.grid() != rho.grid()) {
        return Err(Error::Shape("velocity field does not match the density grid".into()));
    }
    Ok(())
}

/// `M_{ρ,u}(x, ξ) = ρ(x) (2π)^{-d/2} exp(-|ξ - u(x)|²/2)` sampled on the phase grid.
pub fn maxwellian_field(rho: &ScalarField, u: &[ScalarField], velocity: &VelocityGrid) -> Result<PhaseField> {
    check_vector(rho, u)?;
    let grid = PhaseGrid::new(rho.grid().clone(), velocity.clone())?;
    if rho.min() < 0.0 {
        return Err(Error::Parameter("negative density in Maxwellian".into()));
    }
    let d = grid.dim();
    let norm = (2.0 * PI).powf(-(d as f64) / 2.0);
    let nv = grid.slice_len();
    let xi: Vec<[f64; 2]> = (0..nv).map(|i| velocity.velocity(i)).collect();
    let mut values = Vec::with_capacity(grid.node_count());
    for ix in 0..rho.grid().node_count() {
        let r = rho.values()[ix];
        let ux = [u[0].values()[ix], if d == 2 { u[1].values()[ix] } else { 0.0 }];
        for x in &xi {
            let r2: f64 = (0..d).map(|j| (x[j] - ux[j]).powi(2)).sum();
            values.push(r * norm * (-0.5 * r2).exp());
        }
    }
    Field::new(grid, values)
}

/// Local Maxwellian as a kinetic state at time zero.
pub fn maxwellian(rho: &ScalarField, u: &[ScalarField], velocity: &VelocityGrid) -> Result<KineticState> {
    Ok(KineticState::new(maxwellian_field(rho, u, velocity)?, 0.0))
}

/// Zero vector field on a spatial grid.
pub fn zero_vector(grid: &SpatialGrid) -> VectorField {
    (0..grid.dim()).map(|_| Field::zeros(grid.clone())).collect()
}

/// Limiting mean velocity of a regime at density `ρ`: zero for the diffusive
/// and magnetic scalings, `-∇(-Δ)^{-α}ρ` for the high-field scaling.
pub fn limit_velocity(kind: RegimeKind, riesz: &RieszOperator, rho: &ScalarField) -> VectorField {
    match kind {
        RegimeKind::HighField => riesz.force(rho).into_iter().map(|c| c.scaled(-1.0)).collect(),
        _ => zero_vector(rho.grid()),
    }
}

/// Positive density with its velocity-free limit state.
#[derive(Clone, Debug)]
pub struct MacroState {
    rho: ScalarField,
    time: f64,
    regime: ScalingRegime,
}

impl MacroState {
    pub fn new(rho: ScalarField, time: f64, regime: ScalingRegime, floor: f64) -> Result<Self> {
        let min = rho.min();
        if !rho.all_finite() {
            return Err(Error::NonFinite { time });
        }
        if min < floor {
            return Err(Error::Positivity { min, floor, time });
        }
        let mass = quadrature(&rho);
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::Parameter(format!("macroscopic density has mass {mass}, expected 1")));
        }
        regime.check_dim(rho.grid().dim())?;
        Ok(Self { rho, time, regime })
    }

    pub fn rho(&self) -> &ScalarField {
        &self.rho
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn regime(&self) -> &ScalingRegime {
        &self.regime
    }
}

/// Initial-data families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PreparedKind {
    /// Maxwellian at the limiting velocity: zero initial modulated energy.
    WellPrepared,
    /// Maxwellian with an ε-dependent velocity `v/ε^p` whose relative entropy
    /// may diverge as ε → 0.
    MildlyPrepared,
}

impl FromStr for PreparedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "well" | "wellprepared" | "well-prepared" => Ok(PreparedKind::WellPrepared),
            "mild" | "mildlyprepared" | "mildly-prepared" => Ok(PreparedKind::MildlyPrepared),
            other => Err(Error::Parameter(format!("unknown data kind {other:?}"))),
        }
    }
}

/// Velocity exponent `p` in `u_ε = v/ε^p` for the mildly prepared family.
pub fn mild_velocity_exponent(kind: RegimeKind, delta: f64) -> Result<f64> {
    match kind {
        RegimeKind::Diffusive if delta > 0.0 && delta < 2.0 => Ok(1.0 - delta / 2.0),
        RegimeKind::HighField | RegimeKind::Gsqg if delta > 0.0 && delta < 1.0 => Ok((1.0 - delta) / 2.0),
        _ => Err(Error::Parameter(format!("delta {delta} is out of range for the {kind} regime"))),
    }
}

/// Builds the initial kinetic state of a family.
pub fn prepared_data(
    kind: PreparedKind,
    regime: &ScalingRegime,
    rho0: &ScalarField,
    v: &[ScalarField],
    delta: f64,
    velocity: &VelocityGrid,
) -> Result<KineticState> {
    regime.check_dim(rho0.grid().dim())?;
    let u = match kind {
        PreparedKind::WellPrepared => {
            let riesz = RieszOperator::new(regime.alpha(), rho0.grid())?;
            limit_velocity(regime.kind(), &riesz, rho0)
        }
        PreparedKind::MildlyPrepared => {
            check_vector(rho0, v)?;
            let p = mild_velocity_exponent(regime.kind(), delta)?;
            let scale = regime.epsilon().powf(-p);
            v.iter().map(|c| c.scaled(scale)).collect()
        }
    };
    maxwellian(rho0, &u, velocity)
}

/// Smooth positive unit-mass density `c + low modes` with mode phases drawn from `seed`.
pub fn smooth_density(grid: &SpatialGrid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut phase = || rng.random_range(0.0..2.0 * PI);
    let scale = 2.0 * PI / grid.length();
    let raw = if grid.dim() == 1 {
        let (p1, p2) = (phase(), phase());
        grid.sample(|x| {
            let y = scale * x[0];
            1.0 + 0.3 * (y + p1).cos() + 0.15 * (2.0 * y + p2).sin()
        })
    } else {
        let (p1, p2, p3) = (phase(), phase(), phase());
        grid.sample(|x| {
            let (y1, y2) = (scale * x[0], scale * x[1]);
            1.0 + 0.3 * (y1 + p1).cos() + 0.25 * (y1 + y2 + p2).sin() + 0.15 * (2.0 * y2 + p3).cos()
        })
    };
    let mass = quadrature(&raw);
    raw.scaled(1.0 / mass)
}

/// Single-mode velocity profile of amplitude `amp`.
pub fn single_mode_velocity(grid: &SpatialGrid, amp: f64) -> VectorField {
    let scale = 2.0 * PI / grid.length();
    if grid.dim() == 1 {
        vec![grid.sample(|x| amp * (scale * x[0]).sin())]
    } else {
        vec![grid.sample(|x| amp * (scale * x[1]).sin()), grid.sample(|x| amp * (scale * x[0]).sin())]
    }
}
