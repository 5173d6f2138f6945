//! Weak distances between densities: bounded-Lipschitz, its time-space
//! variant, and the one-dimensional Wasserstein distance.
//!
//! Fields are turned into signed node masses (value times cell volume) on the
//! nearest-neighbour graph of their lattice. Test functions are grid functions
//! with `‖φ‖_∞ + max_e |φ_i - φ_j|/ℓ_e ≤ 1`, so the Lipschitz constant is taken
//! with respect to the axis-wise (Manhattan) path metric.

mod ascent;
pub mod graph;

pub use ascent::{bl_ascent, AscentOptions, BlEstimate};
pub use graph::{bl_lp, MetricGraph};

use crate::grid::{Field, Lattice, ScalarField};
use crate::states::MASS_TOL;
use crate::{Error, Result};

/// How the bounded-Lipschitz supremum is evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BlMethod {
    /// Exact LP on one-axis lattices, primal-dual ascent otherwise.
    Auto,
    Exact,
    Ascent(AscentOptions),
}

/// Quadrature weights along the time axis of [`bl_distance_timespace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TimeWeights {
    /// Trapezoid weights over `[t_0, t_last]`.
    Trapezoid,
    /// Every sample stands for a bin of width `Δt` centred on it.
    Midpoint,
}

/// Two nonnegative densities of equal mass on a common grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurePair<G: Lattice> {
    mu: Field<G>,
    nu: Field<G>,
}

impl<G: Lattice> MeasurePair<G> {
    /// Clips undershoots at zero; rejects mismatched grids or masses.
    pub fn new(mu: &Field<G>, nu: &Field<G>) -> Result<Self> {
        if mu.grid() != nu.grid() {
            return Err(Error::Shape("measures live on different grids".into()));
        }
        let mu = mu.map(|v| v.max(0.0));
        let nu = nu.map(|v| v.max(0.0));
        let (m1, m2) = (crate::grid::quadrature(&mu), crate::grid::quadrature(&nu));
        if (m1 - m2).abs() > MASS_TOL * m1.abs().max(1.0) {
            return Err(Error::Parameter(format!("masses differ: {m1} vs {m2}")));
        }
        Ok(Self { mu, nu })
    }

    pub fn mu(&self) -> &Field<G> {
        &self.mu
    }

    pub fn nu(&self) -> &Field<G> {
        &self.nu
    }

    pub fn bl_distance(&self) -> Result<BlEstimate> {
        bl_distance(&self.mu, &self.nu)
    }
}

fn check_same<G: Lattice>(mu: &Field<G>, nu: &Field<G>) -> Result<()> {
    if mu.grid() != nu.grid() {
        return Err(Error::Shape("fields live on different grids".into()));
    }
    Ok(())
}

fn graph_for(extents: &[usize], spacings: &[f64], wraps: &[bool]) -> MetricGraph {
    MetricGraph::lattice(extents, spacings, wraps)
}

fn solve(graph: &MetricGraph, w: &[f64], single_axis: bool, method: BlMethod) -> Result<BlEstimate> {
    match method {
        BlMethod::Exact => Ok(BlEstimate::exact(bl_lp(graph, w)?)),
        BlMethod::Auto if single_axis => Ok(BlEstimate::exact(bl_lp(graph, w)?)),
        BlMethod::Auto => Ok(bl_ascent(graph, w, &AscentOptions::default())),
        BlMethod::Ascent(opts) => Ok(bl_ascent(graph, w, &opts)),
    }
}

/// Bounded-Lipschitz dual norm of a signed density.
pub fn bl_norm<G: Lattice>(f: &Field<G>, method: BlMethod) -> Result<BlEstimate> {
    let grid = f.grid();
    let vol = grid.cell_volume();
    let w: Vec<f64> = f.values().iter().map(|v| v * vol).collect();
    let extents = grid.extents();
    let graph = graph_for(&extents, &grid.spacings(), &grid.wraps());
    solve(&graph, &w, extents.len() == 1, method)
}

/// `d_BL(μ, ν)`, exact for one-axis grids and estimated with certified
/// bounds otherwise.
pub fn bl_distance<G: Lattice>(mu: &Field<G>, nu: &Field<G>) -> Result<BlEstimate> {
    bl_distance_with(mu, nu, BlMethod::Auto)
}

pub fn bl_distance_with<G: Lattice>(mu: &Field<G>, nu: &Field<G>, method: BlMethod) -> Result<BlEstimate> {
    check_same(mu, nu)?;
    bl_norm(&mu.zip_map(nu, |a, b| a - b)?, method)
}

/// Sum over components of the bounded-Lipschitz norms of `a - b`.
pub fn bl_distance_vector(a: &[ScalarField], b: &[ScalarField], method: BlMethod) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape("vector fields have different lengths".into()));
    }
    a.iter().zip(b).map(|(x, y)| bl_distance_with(x, y, method).map(|e| e.value)).sum()
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::Parameter("time-space distance needs at least two samples".into()));
    }
    let dt = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(Error::Parameter("time samples must be uniform and increasing".into()));
    }
    Ok(dt)
}

/// Bounded-Lipschitz norm on the cylinder `(0, T) × Ω` of a signed density
/// sampled at uniform times. The time axis does not wrap.
pub fn bl_norm_timespace<G: Lattice>(
    times: &[f64],
    fields: &[Field<G>],
    weights: TimeWeights,
    method: BlMethod,
) -> Result<BlEstimate> {
    if times.len() != fields.len() || fields.is_empty() {
        return Err(Error::Shape("times and fields differ in length".into()));
    }
    let dt = uniform_step(times)?;
    let grid = fields[0].grid();
    if fields.iter().any(|f| f.grid() != grid) {
        return Err(Error::Shape("time slices live on different grids".into()));
    }
    let vol = grid.cell_volume();
    let nt = times.len();
    let mut w = Vec::with_capacity(nt * grid.node_count());
    for (k, f) in fields.iter().enumerate() {
        let tw = match weights {
            TimeWeights::Trapezoid if k == 0 || k == nt - 1 => 0.5 * dt,
            _ => dt,
        };
        w.extend(f.values().iter().map(|v| v * vol * tw));
    }
    let mut extents = vec![nt];
    extents.extend(grid.extents());
    let mut spacings = vec![dt];
    spacings.extend(grid.spacings());
    let mut wraps = vec![false];
    wraps.extend(grid.wraps());
    let graph = graph_for(&extents, &spacings, &wraps);
    solve(&graph, &w, false, method)
}

/// `d_BL^T` between two sampled trajectories on a common uniform time grid.
pub fn bl_distance_timespace<G: Lattice>(
    mu: &[(f64, Field<G>)],
    nu: &[(f64, Field<G>)],
    weights: TimeWeights,
    method: BlMethod,
) -> Result<BlEstimate> {
    if mu.len() != nu.len() {
        return Err(Error::Shape("trajectories differ in length".into()));
    }
    let mut times = Vec::with_capacity(mu.len());
    let mut diff = Vec::with_capacity(mu.len());
    for ((t1, a), (t2, b)) in mu.iter().zip(nu) {
        if (t1 - t2).abs() > 1e-12 * t1.abs().max(1.0) {
            return Err(Error::Shape("trajectories use different time grids".into()));
        }
        check_same(a, b)?;
        times.push(*t1);
        diff.push(a.zip_map(b, |x, y| x - y)?);
    }
    bl_norm_timespace(&times, &diff, weights, method)
}

/// Exact `W₁` on the one-dimensional torus between densities of equal mass.
pub fn w1_1d(mu: &ScalarField, nu: &ScalarField) -> Result<f64> {
    check_same(mu, nu)?;
    let grid = mu.grid();
    if grid.dim() != 1 {
        return Err(Error::Parameter("w1_1d requires a one-dimensional grid".into()));
    }
    let h = grid.spacing();
    let (m1, m2) = (crate::grid::quadrature(mu), crate::grid::quadrature(nu));
    if (m1 - m2).abs() > MASS_TOL * m1.abs().max(1.0) {
        return Err(Error::Parameter(format!("masses differ: {m1} vs {m2}")));
    }
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = mu
        .values()
        .iter()
        .zip(nu.values())
        .map(|(a, b)| {
            acc += (a - b) * h;
            acc
        })
        .collect();
    let mut sorted = cdf.clone();
    sorted.sort_by(f64::total_cmp);
    let c = sorted[sorted.len() / 2];
    cdf.iter_mut().for_each(|v| *v = (*v - c).abs());
    Ok(cdf.iter().sum::<f64>() * h)
}

/// `‖μ - ν‖₁` by grid quadrature.
pub fn total_variation<G: Lattice>(mu: &Field<G>, nu: &Field<G>) -> Result<f64> {
    check_same(mu, nu)?;
    Ok(mu.zip_map(nu, |a, b| a - b)?.l1_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{PhaseGrid, SpatialGrid, VelocityGrid};
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn bump(grid: &SpatialGrid, center: f64, width: f64) -> ScalarField {
        let f = grid.sample(|x| (-(x[0] - center).powi(2) / (2.0 * width * width)).exp());
        let m = crate::grid::quadrature(&f);
        f.scaled(1.0 / m)
    }

    #[test]
    fn identical_measures() {
        let g = SpatialGrid::torus(1, 32).unwrap();
        let f = bump(&g, PI, 0.5);
        assert_eq!(bl_distance(&f, &f).unwrap().value, 0.0);
        assert_eq!(w1_1d(&f, &f).unwrap(), 0.0);
        let g2 = SpatialGrid::torus(2, 8).unwrap();
        let f2 = Field::constant(g2.clone(), 1.0 / g2.volume());
        assert_eq!(bl_distance(&f2, &f2).unwrap().value, 0.0);
    }

    #[test]
    fn w1_translation() {
        let g = SpatialGrid::new(1, 512, 20.0).unwrap();
        let shift = 0.3;
        let mu = g.sample(|x| (-(x[0] - 8.0).powi(2) / 0.5).exp());
        let nu = g.sample(|x| (-(x[0] - 8.0 - shift).powi(2) / 0.5).exp());
        let m = crate::grid::quadrature(&mu);
        let w = w1_1d(&mu.scaled(1.0 / m), &nu.scaled(1.0 / m)).unwrap();
        assert!((w - shift).abs() < 1e-6, "{w}");
    }

    #[test]
    fn w1_one_cell() {
        let g = SpatialGrid::torus(1, 16).unwrap();
        let h = g.spacing();
        let mut a = vec![0.0; 16];
        let mut b = vec![0.0; 16];
        a[3] = 1.0 / h;
        b[4] = 1.0 / h;
        let w = w1_1d(&Field::new(g.clone(), a).unwrap(), &Field::new(g, b).unwrap()).unwrap();
        assert!((w - h).abs() < 1e-12);
    }

    #[test]
    fn w1_rejects_2d() {
        let g = SpatialGrid::torus(2, 8).unwrap();
        let f = Field::constant(g, 1.0);
        assert!(w1_1d(&f, &f).is_err());
    }

    #[test]
    fn point_masses_match_closed_form() {
        let g = SpatialGrid::new(1, 64, 32.0).unwrap();
        let h = g.spacing();
        let mut a = vec![0.0; 64];
        let mut b = vec![0.0; 64];
        a[10] = 0.5 / h;
        b[14] = 0.5 / h;
        let d = bl_distance(&Field::new(g.clone(), a).unwrap(), &Field::new(g, b).unwrap()).unwrap();
        // distance 2: φ = ±c with c(1 + 2/2) = 1
        assert!((d.value - 0.5).abs() < 1e-9, "{}", d.value);
    }

    #[test]
    fn envelopes_in_one_dimension() {
        let g = SpatialGrid::torus(1, 64).unwrap();
        for (c1, c2, w) in [(1.0, 1.3, 0.4), (2.0, 4.5, 0.6), (0.5, 5.5, 0.3)] {
            let (mu, nu) = (bump(&g, c1, w), bump(&g, c2, w));
            let d = bl_distance(&mu, &nu).unwrap().value;
            let tv = total_variation(&mu, &nu).unwrap();
            let w1 = w1_1d(&mu, &nu).unwrap();
            assert!(d <= tv.min(w1) + 1e-9, "{d} {tv} {w1}");
            assert!(d > 0.0);
        }
    }

    #[test]
    fn ascent_matches_lp_on_small_grids() {
        let g = SpatialGrid::torus(2, 8).unwrap();
        let mu = g.sample(|x| 1.0 + 0.5 * (x[0] + 0.3).cos() * x[1].sin());
        let nu = g.sample(|x| 1.0 + 0.4 * (2.0 * x[1]).cos());
        let exact = bl_distance_with(&mu, &nu, BlMethod::Exact).unwrap().value;
        let est = bl_distance_with(&mu, &nu, BlMethod::Ascent(AscentOptions::default())).unwrap();
        assert!(est.value <= exact + 1e-9 && est.upper >= exact - 1e-9);
        assert!((est.value - exact).abs() <= 1e-3 * exact, "{} vs {exact}", est.value);
        assert!(est.history.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn phase_space_distance() {
        let s = SpatialGrid::torus(1, 8).unwrap();
        let v = VelocityGrid::with_tolerance(1, 8, 4.0, 1e-3).unwrap();
        let pg = PhaseGrid::new(s, v).unwrap();
        let f = pg.sample(|x, xi| (1.0 + 0.3 * x[0].sin()) * (-xi[0] * xi[0] / 2.0).exp());
        let g = pg.sample(|_, xi| (-(xi[0] - 0.5).powi(2) / 2.0).exp());
        let exact = bl_distance_with(&f, &g, BlMethod::Exact).unwrap().value;
        let est = bl_distance(&f, &g).unwrap();
        assert!((est.value - exact).abs() <= 1e-3 * exact, "{} vs {exact}", est.value);
    }

    #[test]
    fn time_independent_pair_scales_with_duration() {
        let g = SpatialGrid::torus(1, 16).unwrap();
        let (mu, nu) = (bump(&g, 2.0, 0.5), bump(&g, 3.0, 0.5));
        let spatial = bl_distance(&mu, &nu).unwrap().value;
        let times: Vec<f64> = (0..6).map(|k| 0.1 * k as f64).collect();
        let a: Vec<_> = times.iter().map(|&t| (t, mu.clone())).collect();
        let b: Vec<_> = times.iter().map(|&t| (t, nu.clone())).collect();
        let exact = bl_distance_timespace(&a, &b, TimeWeights::Trapezoid, BlMethod::Exact).unwrap().value;
        assert!((exact - 0.5 * spatial).abs() < 1e-8 * spatial, "{exact} vs {spatial}");
        let mid = bl_distance_timespace(&a, &b, TimeWeights::Midpoint, BlMethod::Auto).unwrap();
        assert!((mid.value - 0.6 * spatial).abs() < 1e-3 * spatial);
        assert_eq!(bl_distance_timespace(&a, &a, TimeWeights::Midpoint, BlMethod::Auto).unwrap().value, 0.0);
    }

    #[test]
    fn single_slice_difference_is_bounded() {
        let g = SpatialGrid::torus(1, 16).unwrap();
        let (mu, nu) = (bump(&g, 2.0, 0.5), bump(&g, 3.0, 0.5));
        let spatial = bl_distance(&mu, &nu).unwrap().value;
        let dt = 0.1;
        let a: Vec<_> = (0..5).map(|k| (k as f64 * dt, mu.clone())).collect();
        let mut b = a.clone();
        b[2].1 = nu;
        let d = bl_distance_timespace(&a, &b, TimeWeights::Midpoint, BlMethod::Exact).unwrap().value;
        assert!(d <= dt * spatial + 1e-9 && d > 0.0);
    }

    #[test]
    fn nonuniform_times_rejected() {
        let g = SpatialGrid::torus(1, 8).unwrap();
        let f = Field::constant(g, 1.0);
        let a = vec![(0.0, f.clone()), (0.1, f.clone()), (0.3, f.clone())];
        assert!(bl_distance_timespace(&a, &a, TimeWeights::Midpoint, BlMethod::Auto).is_err());
    }

    #[test]
    fn measure_pair_checks_mass() {
        let g = SpatialGrid::torus(1, 16).unwrap();
        let mu = bump(&g, 2.0, 0.5);
        assert!(MeasurePair::new(&mu, &mu.scaled(1.1)).is_err());
        let pair = MeasurePair::new(&mu, &bump(&g, 2.5, 0.5)).unwrap();
        assert!(pair.bl_distance().unwrap().value > 0.0);
    }

    fn density(grid: &SpatialGrid, c: &[f64]) -> ScalarField {
        let f = grid.sample(|x| 1.0 + c[0] * (x[0] + c[1]).cos() + c[2] * (2.0 * x[0] + c[3]).sin());
        f.scaled(1.0 / crate::grid::quadrature(&f))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn metric_axioms(a in prop::collection::vec(-0.4f64..0.4, 4),
                         b in prop::collection::vec(-0.4f64..0.4, 4),
                         c in prop::collection::vec(-0.4f64..0.4, 4)) {
            let g = SpatialGrid::torus(1, 32).unwrap();
            let (x, y, z) = (density(&g, &a), density(&g, &b), density(&g, &c));
            let dxy = bl_distance(&x, &y).unwrap().value;
            let dyx = bl_distance(&y, &x).unwrap().value;
            let dxz = bl_distance(&x, &z).unwrap().value;
            let dzy = bl_distance(&z, &y).unwrap().value;
            prop_assert!(dxy >= 0.0);
            prop_assert!((dxy - dyx).abs() <= 1e-9 * dxy.max(1e-12));
            prop_assert!(dxy <= (dxz + dzy) * (1.0 + 1e-4) + 1e-12);
            prop_assert!(dxy <= total_variation(&x, &y).unwrap() + 1e-9);
            prop_assert!(dxy <= w1_1d(&x, &y).unwrap() + 1e-9);
        }
    }
}
