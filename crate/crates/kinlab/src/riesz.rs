//! Fractional inverse Laplacian `(-Δ)^{-α}` on the torus, the associated
//! forces, negative Sobolev seminorms and interaction energies.
//!
//! The zero Fourier mode is annihilated, so every operator acts on `ρ - mean(ρ)`.

use num_complex::Complex64;

use crate::grid::{quadrature, Field, Lattice, ScalarField, SpatialGrid, SpectralPlan, VectorField};
use crate::{Error, Result};

/// Mass mismatch above which [`RieszOperator::relative_potential_energy`] warns.
const MASS_WARN_TOL: f64 = 1e-9;

/// Fourier multiplier `|k|^{-2α}` on a spatial grid.
#[derive(Clone, Debug)]
pub struct RieszOperator {
    alpha: f64,
    grid: SpatialGrid,
    plan: SpectralPlan,
    multiplier: Vec<f64>,
}

impl RieszOperator {
    /// Accepts `0 < α < d/2`, plus the Coulomb case `α = 1` in two dimensions.
    pub fn new(alpha: f64, grid: &SpatialGrid) -> Result<Self> {
        let d = grid.dim() as f64;
        let coulomb = grid.dim() == 2 && alpha == 1.0;
        if !(alpha > 0.0 && alpha <= 1.0 && (alpha < d / 2.0 || coulomb)) {
            return Err(Error::Parameter(format!(
                "interaction exponent {alpha} is outside (0, min(1, d/2)) for d = {}",
                grid.dim()
            )));
        }
        let plan = SpectralPlan::for_lattice(grid);
        let mut multiplier = vec![0.0; grid.node_count()];
        plan.for_each_mode(|flat, k| {
            let k2: f64 = k.iter().map(|v| v * v).sum();
            if k2 > 0.0 {
                multiplier[flat] = k2.powf(-alpha);
            }
        });
        Ok(Self { alpha, grid: grid.clone(), plan, multiplier })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    /// The cached multiplier in FFT order.
    pub fn multiplier(&self) -> &[f64] {
        &self.multiplier
    }

    fn check(&self, rho: &ScalarField) {
        assert_eq!(rho.grid(), &self.grid, "field is not on the operator's grid");
    }

    fn potential_spectrum(&self, rho: &ScalarField) -> Vec<Complex64> {
        self.check(rho);
        let mut hat = self.plan.forward_real(rho.values());
        for (h, m) in hat.iter_mut().zip(&self.multiplier) {
            *h *= *m;
        }
        hat
    }

    /// `(-Δ)^{-α}(ρ - mean ρ)`; the output has zero mean.
    pub fn potential(&self, rho: &ScalarField) -> ScalarField {
        let values = self.plan.inverse_real(self.potential_spectrum(rho));
        Field::new(self.grid.clone(), values).expect("grid-sized output")
    }

    /// `+∇(-Δ)^{-α}ρ`. The physical force on particles is the negative.
    pub fn force(&self, rho: &ScalarField) -> VectorField {
        let hat = self.potential_spectrum(rho);
        (0..self.grid.dim())
            .map(|axis| {
                let values = self.plan.inverse_real(crate::grid::derivative_spectrum(&self.plan, &hat, axis));
                Field::new(self.grid.clone(), values).expect("grid-sized output")
            })
            .collect()
    }

    /// Potential and force from a single forward transform.
    pub fn potential_and_force(&self, rho: &ScalarField) -> (ScalarField, VectorField) {
        let hat = self.potential_spectrum(rho);
        let force = (0..self.grid.dim())
            .map(|axis| {
                let values = self.plan.inverse_real(crate::grid::derivative_spectrum(&self.plan, &hat, axis));
                Field::new(self.grid.clone(), values).expect("grid-sized output")
            })
            .collect();
        let potential = Field::new(self.grid.clone(), self.plan.inverse_real(hat)).expect("grid-sized output");
        (potential, force)
    }

    /// `½ ∫ (ρ - mean ρ) (-Δ)^{-α} ρ`.
    pub fn interaction_energy(&self, rho: &ScalarField) -> f64 {
        let mean = quadrature(rho) / self.grid.volume();
        let phi = self.potential(rho);
        let integrand = rho.zip_map(&phi, |r, p| (r - mean) * p).expect("same grid");
        0.5 * quadrature(&integrand)
    }

    /// `½ ‖ρ₁ - ρ₂‖²` in the homogeneous `Ḣ^{-α}` seminorm.
    pub fn relative_potential_energy(&self, rho1: &ScalarField, rho2: &ScalarField) -> f64 {
        let (m1, m2) = (quadrature(rho1), quadrature(rho2));
        if (m1 - m2).abs() > MASS_WARN_TOL * (1.0 + m1.abs()) {
            log::warn!("relative potential energy of densities with masses {m1} and {m2}; zero mode dropped");
        }
        let diff = rho1.zip_map(rho2, |a, b| a - b).expect("same grid");
        self.interaction_energy(&diff)
    }

    /// `‖ρ₁ - ρ₂‖_{Ḣ^{-α}}`.
    pub fn negative_sobolev_distance(&self, rho1: &ScalarField, rho2: &ScalarField) -> f64 {
        (2.0 * self.relative_potential_energy(rho1, rho2)).max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn op(alpha: f64, n: usize) -> RieszOperator {
        RieszOperator::new(alpha, &SpatialGrid::torus(1, n).unwrap()).unwrap()
    }

    #[test]
    fn admissible_exponents() {
        let g1 = SpatialGrid::torus(1, 16).unwrap();
        let g2 = SpatialGrid::torus(2, 16).unwrap();
        assert!(RieszOperator::new(0.5, &g1).is_err());
        assert!(RieszOperator::new(0.0, &g1).is_err());
        assert!(RieszOperator::new(0.49, &g1).is_ok());
        assert!(RieszOperator::new(1.0, &g2).is_ok());
        assert!(RieszOperator::new(1.2, &g2).is_err());
    }

    #[test]
    fn single_mode_potential_force_and_energy() {
        let (a, k0, alpha) = (0.3, 3.0_f64, 0.3);
        let r = op(alpha, 64);
        let rho = r.grid().sample(|x| 1.0 + a * (k0 * x[0]).cos());
        let phi = r.potential(&rho);
        let force = r.force(&rho);
        let m = k0.powf(-2.0 * alpha);
        for (i, (p, f)) in phi.values().iter().zip(force[0].values()).enumerate() {
            let x = r.grid().position(i)[0];
            assert!((p - a * m * (k0 * x).cos()).abs() < 1e-13);
            assert!((f + a * k0 * m * (k0 * x).sin()).abs() < 1e-12);
        }
        let energy = a * a * PI / 2.0 * m;
        assert!((r.interaction_energy(&rho) - energy).abs() < 1e-13);
        let one = Field::constant(r.grid().clone(), 1.0);
        assert!((r.relative_potential_energy(&rho, &one) - energy).abs() < 1e-13);
        assert!(r.potential(&one).max_abs() < 1e-15);
        assert!(r.force(&one)[0].max_abs() < 1e-15);
        assert_eq!(r.interaction_energy(&one), 0.0);
    }

    #[test]
    fn potential_matches_naive_dft() {
        let r = op(0.3, 16);
        let rho =
            r.grid().sample(|x| 1.0 + 0.2 * (x[0]).sin() - 0.1 * (3.0 * x[0] + 0.4).cos() + 0.05 * (7.0 * x[0]).cos());
        let n = 16;
        let vals = rho.values();
        let mut oracle = vec![0.0; n];
        for k in 1..n as i64 {
            let kk = if k <= n as i64 / 2 { k } else { k - n as i64 } as f64;
            let (mut re, mut im) = (0.0, 0.0);
            for (j, v) in vals.iter().enumerate() {
                let t = -2.0 * PI * (k as f64) * j as f64 / n as f64;
                re += v * t.cos();
                im += v * t.sin();
            }
            let m = kk.abs().powf(-0.6);
            for (j, o) in oracle.iter_mut().enumerate() {
                let t = 2.0 * PI * (k as f64) * j as f64 / n as f64;
                *o += m * (re * t.cos() - im * t.sin()) / n as f64;
            }
        }
        for (p, o) in r.potential(&rho).values().iter().zip(&oracle) {
            assert!((p - o).abs() < 1e-12);
        }
    }

    #[test]
    fn force_matches_central_difference() {
        let r = op(0.25, 128);
        let rho = r.grid().sample(|x| 1.0 + 0.3 * x[0].cos() + 0.2 * (2.0 * x[0]).sin());
        let phi = r.potential(&rho);
        let force = r.force(&rho);
        let h = r.grid().spacing();
        let p = phi.values();
        let n = p.len();
        for i in 0..n {
            let at = |o: isize| p[(i as isize + o).rem_euclid(n as isize) as usize];
            let fd = (45.0 * (at(1) - at(-1)) - 9.0 * (at(2) - at(-2)) + (at(3) - at(-3))) / (60.0 * h);
            assert!((fd - force[0].values()[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn two_modes_have_additive_energy() {
        let r = op(0.4, 64);
        let one = r.grid().sample(|x| 0.3 * x[0].cos());
        let two = r.grid().sample(|x| 0.2 * (4.0 * x[0]).sin());
        let both = one.zip_map(&two, |a, b| 1.0 + a + b).unwrap();
        let sum = r.interaction_energy(&one) + r.interaction_energy(&two);
        assert!((r.interaction_energy(&both) - sum).abs() < 1e-14);
    }

    #[test]
    fn coulomb_inverts_laplacian() {
        let g = SpatialGrid::torus(2, 32).unwrap();
        let r = RieszOperator::new(1.0, &g).unwrap();
        let rho = g.sample(|x| 1.0 + 0.3 * x[0].cos() * x[1].sin() + 0.1 * (2.0 * x[1]).cos());
        let lap = crate::grid::laplacian(&r.potential(&rho));
        let mean = quadrature(&rho) / g.volume();
        for (l, v) in lap.values().iter().zip(rho.values()) {
            assert!((-l - (v - mean)).abs() < 1e-12);
        }
    }

    fn random_field(c: &[(f64, f64)], g: &SpatialGrid) -> ScalarField {
        g.sample(|x| {
            1.0 + c
                .iter()
                .enumerate()
                .map(|(m, (a, b))| {
                    let k = (m + 1) as f64;
                    a * (k * x[0]).cos() + b * (k * x[0]).sin()
                })
                .sum::<f64>()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn energy_nonnegative_and_self_adjoint(
            a in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..8),
            b in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..8),
            alpha in 0.05f64..0.45,
        ) {
            let r = op(alpha, 32);
            let f = random_field(&a, r.grid());
            let g = random_field(&b, r.grid());
            prop_assert!(r.interaction_energy(&f) >= 0.0);
            let fg = quadrature(&f.zip_map(&r.potential(&g), |x, y| x * y).unwrap());
            let gf = quadrature(&g.zip_map(&r.potential(&f), |x, y| x * y).unwrap());
            prop_assert!((fg - gf).abs() <= 1e-12 * (1.0 + fg.abs()));
        }

        #[test]
        fn relative_energy_is_a_seminorm(
            a in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..8),
            b in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..8),
            c in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 1..8),
        ) {
            let r = op(0.25, 32);
            let (f, g, h) = (random_field(&a, r.grid()), random_field(&b, r.grid()), random_field(&c, r.grid()));
            prop_assert!((r.relative_potential_energy(&f, &g) - r.relative_potential_energy(&g, &f)).abs() < 1e-14);
            prop_assert!(r.relative_potential_energy(&f, &f).abs() < 1e-16);
            let d = |p: &ScalarField, q: &ScalarField| r.negative_sobolev_distance(p, q);
            prop_assert!(d(&f, &h) <= d(&f, &g) + d(&g, &h) + 1e-12);
            let shifted = f.zip_map(&g, |x, y| x - y + 1.0).unwrap();
            prop_assert!((r.relative_potential_energy(&f, &g) - r.interaction_energy(&shifted)).abs() < 1e-14);
        }
    }
}
