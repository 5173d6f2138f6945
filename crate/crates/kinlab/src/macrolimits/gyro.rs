//! Angular averaging in velocity and the first-order corrector of the
//! strong magnetic field expansion.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::grid::{
    divergence, perp, spectral_derivative, Lattice, PhaseField, PhaseGrid, ScalarField, VectorField, VelocityGrid,
};
use crate::kinetic::velocity::VelocityOps;
use crate::riesz::RieszOperator;
use crate::{Error, Result};

fn check_planar(g: &PhaseGrid) -> Result<()> {
    if g.dim() != 2 {
        return Err(Error::Parameter("gyro-averaging needs a planar velocity grid".into()));
    }
    Ok(())
}

/// `(Πg)(x, ξ) = (1/2π)∫ g(x, R_θ ξ) dθ` by the trapezoid rule on
/// `n_ξ` equally spaced angles.
pub fn gyro_average(g: &PhaseField) -> Result<PhaseField> {
    gyro_average_with(g, g.grid().velocity().points())
}

pub fn gyro_average_with(g: &PhaseField, n_theta: usize) -> Result<PhaseField> {
    check_planar(g.grid())?;
    if n_theta == 0 {
        return Err(Error::Parameter("at least one angle is needed".into()));
    }
    let ops = VelocityOps::new(g.grid().velocity());
    let s = g.grid().slice_len();
    let mut out = g.clone();
    out.values_mut().par_chunks_mut(s).for_each_init(
        || (ops.scratch(), vec![0.0; s]),
        |(scratch, buf), slice| {
            let mut acc = vec![0.0; s];
            for k in 0..n_theta {
                buf.copy_from_slice(slice);
                ops.rotate(buf, 2.0 * PI * k as f64 / n_theta as f64, scratch);
                acc.iter_mut().zip(buf.iter()).for_each(|(a, b)| *a += b);
            }
            slice.iter_mut().zip(&acc).for_each(|(v, a)| *v = a / n_theta as f64);
        },
    );
    Ok(out)
}

/// `L₋₁ g = ξ^⊥·∇_ξ g = -ξ₂ ∂_{ξ₁} g + ξ₁ ∂_{ξ₂} g`, spectrally in `ξ`.
pub fn gyro_generator(g: &PhaseField) -> Result<PhaseField> {
    check_planar(g.grid())?;
    let d1 = spectral_derivative(g, 2);
    let d2 = spectral_derivative(g, 3);
    let grid = g.grid();
    let s = grid.slice_len();
    let v = grid.velocity();
    let values = (0..grid.node_count())
        .map(|i| {
            let xi = v.velocity(i % s);
            -xi[1] * d1.values()[i] + xi[0] * d2.values()[i]
        })
        .collect();
    PhaseField::new(grid.clone(), values)
}

/// Flux of the first-order corrector, from velocity quadrature and from the
/// closed form.
#[derive(Clone, Debug, PartialEq)]
pub struct HilbertCheck {
    pub m1_kinetic: VectorField,
    pub m1_formula: VectorField,
    /// `max |m1_kinetic - m1_formula|`
    pub err: f64,
    /// `max |∇·m¹ + ∇·(ρ⁰∇^⊥Φ⁰)|`
    pub div_err: f64,
}

/// Builds `f¹ = -((∇ρ⁰ + ρ⁰∇Φ⁰)^⊥·ξ) M_{1,0}` on the phase grid, integrates
/// `ξ f¹` over velocity, and compares with `m¹ = -∇^⊥ρ⁰ - ρ⁰∇^⊥Φ⁰`.
pub fn hilbert_corrector_check(rho0: &ScalarField, alpha: f64, velocity: &VelocityGrid) -> Result<HilbertCheck> {
    let space = rho0.grid();
    if space.dim() != 2 || velocity.dim() != 2 {
        return Err(Error::Parameter("the corrector check is planar".into()));
    }
    let riesz = RieszOperator::new(alpha, space)?;
    let force = riesz.force(rho0);
    let grad = crate::grid::spectral_gradient(rho0);
    let a: VectorField = (0..2)
        .map(|k| {
            let rf = rho0.zip_map(&force[k], |r, f| r * f).expect("same grid");
            grad[k].zip_map(&rf, |g, x| g + x).expect("same grid")
        })
        .collect();
    let a_perp = perp(&a)?;

    let grid = PhaseGrid::new(space.clone(), velocity.clone())?;
    let s = grid.slice_len();
    let w = velocity.cell_volume();
    let mut m1 = vec![ScalarField::zeros(space.clone()), ScalarField::zeros(space.clone())];
    for ix in 0..space.node_count() {
        let (p0, p1) = (a_perp[0].values()[ix], a_perp[1].values()[ix]);
        let (mut s0, mut s1) = (0.0, 0.0);
        for iv in 0..s {
            let xi = velocity.velocity(iv);
            let m = (-(xi[0] * xi[0] + xi[1] * xi[1]) / 2.0).exp() / (2.0 * PI);
            let f1 = -(p0 * xi[0] + p1 * xi[1]) * m;
            s0 += xi[0] * f1;
            s1 += xi[1] * f1;
        }
        m1[0].values_mut()[ix] = s0 * w;
        m1[1].values_mut()[ix] = s1 * w;
    }

    let gperp = perp(&grad)?;
    let fperp = perp(&force)?;
    let formula: VectorField = (0..2)
        .map(|k| {
            let rf = rho0.zip_map(&fperp[k], |r, f| r * f).expect("same grid");
            gperp[k].zip_map(&rf, |g, x| -g - x).expect("same grid")
        })
        .collect();
    let err = m1
        .iter()
        .zip(&formula)
        .map(|(a, b)| a.zip_map(b, |x, y| (x - y).abs()).expect("same grid").max())
        .fold(0.0, f64::max);
    let transport: VectorField = fperp.iter().map(|f| rho0.zip_map(f, |r, v| r * v).expect("same grid")).collect();
    let div_err = divergence(&formula)?.zip_map(&divergence(&transport)?, |a, b| (a + b).abs())?.max();
    Ok(HilbertCheck { m1_kinetic: m1, m1_formula: formula, err, div_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, SpatialGrid};
    use crate::states::smooth_density;

    fn phase(nx: usize, nv: usize) -> PhaseGrid {
        PhaseGrid::new(SpatialGrid::torus(2, nx).unwrap(), VelocityGrid::new(2, nv, 8.0).unwrap()).unwrap()
    }

    fn maxabs(f: &PhaseField) -> f64 {
        f.max_abs()
    }

    #[test]
    fn radial_functions_are_fixed() {
        let g = phase(8, 48);
        let f = g.sample(|x, xi| (1.0 + 0.2 * x[0].sin()) * (-(xi[0] * xi[0] + xi[1] * xi[1]) / 2.0).exp());
        let p = gyro_average(&f).unwrap();
        assert!(maxabs(&p.zip_map(&f, |a, b| a - b).unwrap()) < 1e-10);
        assert!(maxabs(&gyro_generator(&f).unwrap()) < 1e-10);
    }

    #[test]
    fn odd_angular_modes_vanish() {
        let g = phase(8, 48);
        let f = g.sample(|x, xi| {
            (0.3 * xi[0] - (0.7 + x[1].cos()) * xi[1]) * (-(xi[0] * xi[0] + xi[1] * xi[1]) / 2.0).exp()
        });
        assert!(maxabs(&gyro_average(&f).unwrap()) < 1e-10);
    }

    #[test]
    fn projection_properties() {
        let g = phase(8, 48);
        let f = g.sample(|x, xi| {
            let r2 = xi[0] * xi[0] + xi[1] * xi[1];
            (1.0 + 0.5 * xi[0] * xi[1] + 0.2 * x[0].cos() * xi[0] * xi[0]) * (-r2 / 2.0).exp()
        });
        let p = gyro_average(&f).unwrap();
        let pp = gyro_average(&p).unwrap();
        assert!(maxabs(&pp.zip_map(&p, |a, b| a - b).unwrap()) < 1e-9);
        let pl = gyro_average(&gyro_generator(&f).unwrap()).unwrap();
        assert!(maxabs(&pl) < 1e-8);
    }

    #[test]
    fn corrector_flux() {
        let s = SpatialGrid::torus(2, 16).unwrap();
        let v = VelocityGrid::new(2, 64, 8.0).unwrap();
        let c = hilbert_corrector_check(&Field::constant(s.clone(), 1.0 / s.volume()), 0.5, &v).unwrap();
        assert!(c.m1_formula.iter().all(|m| m.max_abs() < 1e-15));
        let rho = smooth_density(&s, 4);
        let c = hilbert_corrector_check(&rho, 0.5, &v).unwrap();
        assert!(c.err < 1e-8, "{}", c.err);
        assert!(c.div_err < 1e-10, "{}", c.div_err);
    }

    #[test]
    fn rejects_one_dimension() {
        let g = PhaseGrid::new(SpatialGrid::torus(1, 8).unwrap(), VelocityGrid::new(1, 32, 8.0).unwrap()).unwrap();
        assert!(gyro_average(&Field::zeros(g.clone())).is_err());
        assert!(gyro_generator(&Field::zeros(g)).is_err());
    }
}
