//! Target velocities and remainder fields of the moment formulations.

use crate::grid::{divergence, laplacian, perp, spectral_gradient, ScalarField, VectorField};
use crate::riesz::RieszOperator;
use crate::states::{RegimeKind, ScalingRegime};
use crate::{Error, Result};

/// `u_ε` (or `u` in the high-field scaling) and the remainder `e_ε`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectorFields {
    pub u_eps: VectorField,
    pub e_eps: VectorField,
}

/// `∇log ρ`, differentiated spectrally so that its perpendicular is divergence free
pub fn log_gradient(rho: &ScalarField) -> Result<VectorField> {
    if rho.min() <= 0.0 {
        return Err(Error::Parameter("log-gradient of a nonpositive density".into()));
    }
    Ok(spectral_gradient(&rho.map(f64::ln)))
}

fn add(a: &[ScalarField], b: &[ScalarField], cb: f64) -> VectorField {
    a.iter().zip(b).map(|(x, y)| x.zip_map(y, |p, q| p + cb * q).expect("same grid")).collect()
}

fn scale(a: &[ScalarField], c: f64) -> VectorField {
    a.iter().map(|x| x.scaled(c)).collect()
}

/// `∂_t ρ` of the limit equation without dealiasing.
pub fn limit_rhs(regime: &ScalingRegime, riesz: &RieszOperator, rho: &ScalarField) -> Result<ScalarField> {
    let mut force = riesz.force(rho);
    if regime.kind() == RegimeKind::Gsqg {
        force = perp(&force)?;
    }
    let flux: VectorField = force.iter().map(|f| f.zip_map(rho, |a, r| a * r).expect("same grid")).collect();
    let div = divergence(&flux)?;
    Ok(match regime.kind() {
        RegimeKind::Diffusive => div.zip_map(&laplacian(rho), |a, b| a + b)?,
        _ => div,
    })
}

/// The closure velocity of each scaling: `-ε(∇Φ + ∇log ρ)` (diffusive),
/// `-∇Φ` (high-field) and `-ε(∇^⊥Φ + ∇^⊥log ρ)` (magnetic).
pub fn target_velocity(regime: &ScalingRegime, riesz: &RieszOperator, rho: &ScalarField) -> Result<VectorField> {
    let eps = regime.epsilon();
    let force = riesz.force(rho);
    Ok(match regime.kind() {
        RegimeKind::HighField => scale(&force, -1.0),
        RegimeKind::Diffusive => scale(&add(&force, &log_gradient(rho)?, 1.0), -eps),
        RegimeKind::Gsqg => scale(&perp(&add(&force, &log_gradient(rho)?, 1.0))?, -eps),
    })
}

/// Velocity `∂_t u` through the chain rule, with `∂_t ρ` from the limit
/// equation.
fn velocity_rate(regime: &ScalingRegime, riesz: &RieszOperator, rho: &ScalarField) -> Result<VectorField> {
    let rho_t = limit_rhs(regime, riesz, rho)?;
    let eps = regime.epsilon();
    let force_t = riesz.force(&rho_t);
    let ratio = rho_t.zip_map(rho, |a, r| a / r)?;
    let log_t = spectral_gradient(&ratio);
    Ok(match regime.kind() {
        RegimeKind::HighField => scale(&force_t, -1.0),
        RegimeKind::Diffusive => scale(&add(&force_t, &log_t, 1.0), -eps),
        RegimeKind::Gsqg => scale(&perp(&add(&force_t, &log_t, 1.0))?, -eps),
    })
}

/// `(u·∇)u`
fn convective(u: &[ScalarField]) -> VectorField {
    let grads: Vec<VectorField> = u.iter().map(spectral_gradient).collect();
    (0..u.len())
        .map(|j| {
            let mut acc = ScalarField::zeros(u[0].grid().clone());
            for (i, ui) in u.iter().enumerate() {
                let term = ui.zip_map(&grads[j][i], |a, b| a * b).expect("same grid");
                acc = acc.zip_map(&term, |a, b| a + b).expect("same grid");
            }
            acc
        })
        .collect()
}

/// Target velocity and remainder for `ρ`:
/// `e_ε = ∂_t u_ε + (1/ε)(u_ε·∇)u_ε` (diffusive),
/// `e = ∂_t u + (u·∇)u + ∇log ρ` (high-field),
/// `e_ε = ε∂_t u_ε + (u_ε·∇)u_ε` (magnetic).
pub fn corrector(regime: &ScalingRegime, riesz: &RieszOperator, rho: &ScalarField) -> Result<CorrectorFields> {
    if rho.min() <= 0.0 {
        return Err(Error::Parameter("corrector of a nonpositive density".into()));
    }
    let u = target_velocity(regime, riesz, rho)?;
    let ut = velocity_rate(regime, riesz, rho)?;
    let conv = convective(&u);
    let eps = regime.epsilon();
    let e = match regime.kind() {
        RegimeKind::Diffusive => add(&ut, &conv, 1.0 / eps),
        RegimeKind::HighField => add(&add(&ut, &conv, 1.0), &log_gradient(rho)?, 1.0),
        RegimeKind::Gsqg => add(&scale(&ut, eps), &conv, 1.0),
    };
    Ok(CorrectorFields { u_eps: u, e_eps: e })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, SpatialGrid};
    use crate::states::smooth_density;

    fn sup(v: &[ScalarField]) -> f64 {
        v.iter().map(|c| c.max_abs()).fold(0.0, f64::max)
    }

    #[test]
    fn constant_density_has_no_corrector() {
        for (kind, dim) in [(RegimeKind::Diffusive, 1), (RegimeKind::HighField, 1), (RegimeKind::Gsqg, 2)] {
            let g = SpatialGrid::torus(dim, 16).unwrap();
            let r = ScalingRegime::new(kind, 0.1, 0.25).unwrap();
            let riesz = RieszOperator::new(0.25, &g).unwrap();
            let c = corrector(&r, &riesz, &Field::constant(g.clone(), 1.0 / g.volume())).unwrap();
            assert!(sup(&c.u_eps) < 1e-14 && sup(&c.e_eps) < 1e-14);
        }
    }

    #[test]
    fn diffusive_corrector_is_linear_in_eps() {
        let g = SpatialGrid::torus(1, 32).unwrap();
        let riesz = RieszOperator::new(0.25, &g).unwrap();
        let rho = g.sample(|x| 1.0 + 0.4 * (2.0 * x[0]).cos());
        let mut ratios = Vec::new();
        for eps in [0.2, 0.1, 0.05] {
            let r = ScalingRegime::new(RegimeKind::Diffusive, eps, 0.25).unwrap();
            let c = corrector(&r, &riesz, &rho).unwrap();
            let grad: Vec<_> = c.u_eps.iter().flat_map(spectral_gradient).collect();
            ratios.push((sup(&c.u_eps) / eps, sup(&grad) / eps));
        }
        for w in ratios.windows(2) {
            assert!((w[0].0 - w[1].0).abs() <= 1e-10 * w[0].0);
            assert!((w[0].1 - w[1].1).abs() <= 1e-10 * w[0].1);
        }
    }

    #[test]
    fn magnetic_corrector_is_divergence_free() {
        let g = SpatialGrid::torus(2, 32).unwrap();
        let riesz = RieszOperator::new(0.5, &g).unwrap();
        let rho = smooth_density(&g, 5);
        let mut e_sizes = Vec::new();
        for eps in [0.2, 0.1] {
            let r = ScalingRegime::new(RegimeKind::Gsqg, eps, 0.5).unwrap();
            let c = corrector(&r, &riesz, &rho).unwrap();
            assert!(divergence(&c.u_eps).unwrap().max_abs() < 1e-10);
            e_sizes.push(sup(&c.e_eps));
        }
        let ratio = e_sizes[0] / e_sizes[1];
        assert!((ratio - 4.0).abs() < 1e-9, "{ratio}");
    }

    #[test]
    fn high_field_velocity_is_minus_force() {
        let g = SpatialGrid::torus(1, 32).unwrap();
        let riesz = RieszOperator::new(0.25, &g).unwrap();
        let rho = smooth_density(&g, 1);
        let r = ScalingRegime::new(RegimeKind::HighField, 0.3, 0.25).unwrap();
        let u = target_velocity(&r, &riesz, &rho).unwrap();
        let f = riesz.force(&rho);
        assert!(u[0].zip_map(&f[0], |a, b| (a + b).abs()).unwrap().max() < 1e-15);
    }

    #[test]
    fn velocity_rate_matches_finite_difference() {
        use crate::macrolimits::{run_macro, MacroRunConfig};
        let g = SpatialGrid::torus(1, 32).unwrap();
        let riesz = RieszOperator::new(0.25, &g).unwrap();
        let rho = smooth_density(&g, 8);
        let r = ScalingRegime::new(RegimeKind::Diffusive, 0.1, 0.25).unwrap();
        let mut cfg = MacroRunConfig::new(r, 1e-4, 2e-4);
        cfg.dealias = false;
        let traj = run_macro(&rho, &cfg).unwrap();
        let u0 = target_velocity(&r, &riesz, &rho).unwrap();
        let u2 = target_velocity(&r, &riesz, &traj.last().rho).unwrap();
        let fd = u2[0].zip_map(&u0[0], |a, b| (a - b) / 2e-4).unwrap();
        let rate = velocity_rate(&r, &riesz, &traj.frames()[1].rho).unwrap();
        let err = fd.zip_map(&rate[0], |a, b| (a - b).abs()).unwrap().max();
        assert!(err < 1e-5 * rate[0].max_abs(), "{err} {}", rate[0].max_abs());
    }
}
