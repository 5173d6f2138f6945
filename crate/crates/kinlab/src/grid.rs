//! Uniform periodic tensor grids, spectral calculus on them, field containers
//! and the binary field dump format.
//!
//! Phase-space fields are stored row-major with the spatial axes first and the
//! velocity axes last, so every velocity slice `f(x, ·)` is contiguous.

use std::f64::consts::PI;
use std::io::{BufRead, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::{Error, Result};

/// Default bound on the unit Maxwellian at the velocity cut-off.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-12;

/// A rectangular tensor lattice with uniform spacing along every axis.
pub trait Lattice: Clone + std::fmt::Debug + PartialEq + Send + Sync {
    /// Node counts per axis, slowest-varying axis first.
    fn extents(&self) -> Vec<usize>;

    /// Box length of each axis.
    fn periods(&self) -> Vec<f64>;

    /// Whether the metric structure of each axis wraps around.
    fn wraps(&self) -> Vec<bool> {
        vec![true; self.extents().len()]
    }

    fn node_count(&self) -> usize {
        self.extents().iter().product()
    }

    fn spacings(&self) -> Vec<f64> {
        self.extents().iter().zip(self.periods()).map(|(&n, p)| p / n as f64).collect()
    }

    fn cell_volume(&self) -> f64 {
        self.spacings().iter().product()
    }
}

/// The torus `[0, L)^d` sampled at `points` nodes per axis.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialGrid {
    dim: usize,
    points: usize,
    length: f64,
}

impl SpatialGrid {
    pub fn new(dim: usize, points: usize, length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("spatial dimension must be 1 or 2, got {dim}")));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::Grid(format!("points per dimension must be even and at least 8, got {points}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Grid(format!("domain length must be positive, got {length}")));
        }
        Ok(Self { dim, points, length })
    }

    /// The `2π`-periodic torus.
    pub fn torus(dim: usize, points: usize) -> Result<Self> {
        Self::new(dim, points, 2.0 * PI)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.points as f64
    }

    /// Total volume `L^d`.
    pub fn volume(&self) -> f64 {
        self.length.powi(self.dim as i32)
    }

    /// Coordinates of the node with flat index `idx`.
    pub fn position(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        if self.dim == 1 {
            [idx as f64 * h, 0.0]
        } else {
            [(idx / self.points) as f64 * h, (idx % self.points) as f64 * h]
        }
    }

    /// Evaluates `f` at every node.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> ScalarField {
        let values = (0..self.node_count()).map(|i| f(&self.position(i)[..self.dim])).collect();
        Field { grid: self.clone(), values }
    }
}

impl Lattice for SpatialGrid {
    fn extents(&self) -> Vec<usize> {
        vec![self.points; self.dim]
    }

    fn periods(&self) -> Vec<f64> {
        vec![self.length; self.dim]
    }
}

/// The truncated velocity box `[-V, V)^d`, treated as periodic by the
/// spectral operators.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityGrid {
    dim: usize,
    points: usize,
    half_width: f64,
}

impl VelocityGrid {
    pub fn new(dim: usize, points: usize, half_width: f64) -> Result<Self> {
        Self::with_tolerance(dim, points, half_width, DEFAULT_TRUNCATION_TOL)
    }

    /// Builds the grid and checks that the unit Maxwellian at `|ξ| = V` is at
    /// most `tol`.
    pub fn with_tolerance(dim: usize, points: usize, half_width: f64, tol: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("velocity dimension must be 1 or 2, got {dim}")));
        }
        if points < 8 || points % 2 != 0 {
            return Err(Error::Grid(format!("velocity points must be even and at least 8, got {points}")));
        }
        let edge = (2.0 * PI).powf(-(dim as f64) / 2.0) * (-half_width * half_width / 2.0).exp();
        if !(half_width > 0.0) || edge > tol {
            return Err(Error::Grid(format!(
                "half width {half_width} leaves Maxwellian tail {edge:e} above tolerance {tol:e}; need V >= {:.4}",
                Self::min_half_width(dim, tol)
            )));
        }
        Ok(Self { dim, points, half_width })
    }

    /// Smallest `V` with `M_{1,0}(V) <= tol`.
    pub fn min_half_width(dim: usize, tol: f64) -> f64 {
        (2.0 * (1.0 / (tol * (2.0 * PI).powf(dim as f64 / 2.0))).ln()).sqrt()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Velocity of node `i` along one axis.
    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    /// Node velocities along one axis.
    pub fn nodes(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.node(i)).collect()
    }

    /// Velocity vector of the node with flat index `idx`.
    pub fn velocity(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.node(idx), 0.0]
        } else {
            [self.node(idx / self.points), self.node(idx % self.points)]
        }
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> VelocityField {
        let values = (0..self.node_count()).map(|i| f(&self.velocity(i)[..self.dim])).collect();
        Field { grid: self.clone(), values }
    }
}

impl Lattice for VelocityGrid {
    fn extents(&self) -> Vec<usize> {
        vec![self.points; self.dim]
    }

    fn periods(&self) -> Vec<f64> {
        vec![2.0 * self.half_width; self.dim]
    }

    fn wraps(&self) -> Vec<bool> {
        vec![false; self.dim]
    }
}

/// Product of a spatial and a velocity grid of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    space: SpatialGrid,
    velocity: VelocityGrid,
}

impl PhaseGrid {
    pub fn new(space: SpatialGrid, velocity: VelocityGrid) -> Result<Self> {
        if space.dim() != velocity.dim() {
            return Err(Error::Grid(format!(
                "spatial dimension {} differs from velocity dimension {}",
                space.dim(),
                velocity.dim()
            )));
        }
        Ok(Self { space, velocity })
    }

    pub fn space(&self) -> &SpatialGrid {
        &self.space
    }

    pub fn velocity(&self) -> &VelocityGrid {
        &self.velocity
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    /// Number of velocity nodes per spatial node.
    pub fn slice_len(&self) -> usize {
        self.velocity.node_count()
    }

    pub fn sample(&self, f: impl Fn(&[f64], &[f64]) -> f64) -> PhaseField {
        let d = self.dim();
        let nv = self.slice_len();
        let mut values = Vec::with_capacity(self.node_count());
        for ix in 0..self.space.node_count() {
            let x = self.space.position(ix);
            for iv in 0..nv {
                values.push(f(&x[..d], &self.velocity.velocity(iv)[..d]));
            }
        }
        Field { grid: self.clone(), values }
    }
}

impl Lattice for PhaseGrid {
    fn extents(&self) -> Vec<usize> {
        let mut e = self.space.extents();
        e.extend(self.velocity.extents());
        e
    }

    fn periods(&self) -> Vec<f64> {
        let mut p = self.space.periods();
        p.extend(self.velocity.periods());
        p
    }

    fn wraps(&self) -> Vec<bool> {
        let mut w = self.space.wraps();
        w.extend(self.velocity.wraps());
        w
    }
}

/// Real values sampled on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct Field<G: Lattice> {
    grid: G,
    values: Vec<f64>,
}

pub type ScalarField = Field<SpatialGrid>;
pub type VelocityField = Field<VelocityGrid>;
pub type PhaseField = Field<PhaseGrid>;
/// One spatial field per component.
pub type VectorField = Vec<ScalarField>;

impl<G: Lattice> Field<G> {
    pub fn new(grid: G, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::Shape(format!("{} values for a grid of {} nodes", values.len(), grid.node_count())));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: G) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: G, c: f64) -> Self {
        let values = vec![c; grid.node_count()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &G {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Pointwise combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid.clone(), values })
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `∫ |f|`.
    pub fn l1_norm(&self) -> f64 {
        self.grid.cell_volume() * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Cell-volume weighted sum of the values, summed in index order.
pub fn quadrature<G: Lattice>(f: &Field<G>) -> f64 {
    f.grid.cell_volume() * f.values.iter().sum::<f64>()
}

/// Integer mode numbers in FFT order, with the Nyquist mode at `-n/2`.
pub fn mode_numbers(n: usize) -> Vec<f64> {
    (0..n).map(|j| if j < n / 2 { j as f64 } else { j as f64 - n as f64 }).collect()
}

/// Physical wavenumbers `2πj/P` in FFT order.
pub fn wavenumbers(n: usize, period: f64) -> Vec<f64> {
    let scale = 2.0 * PI / period;
    mode_numbers(n).into_iter().map(|m| m * scale).collect()
}

/// Wavenumbers for odd-order derivatives: the Nyquist entry is zero so real
/// input stays real.
pub fn derivative_wavenumbers(n: usize, period: f64) -> Vec<f64> {
    let mut k = wavenumbers(n, period);
    if n % 2 == 0 {
        k[n / 2] = 0.0;
    }
    k
}

/// Cached FFT plans for a tensor lattice.
#[derive(Clone)]
pub struct SpectralPlan {
    extents: Vec<usize>,
    periods: Vec<f64>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for SpectralPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralPlan").field("extents", &self.extents).field("periods", &self.periods).finish()
    }
}

impl SpectralPlan {
    pub fn new(extents: &[usize], periods: &[f64]) -> Self {
        let mut planner = FftPlanner::new();
        let forward = extents.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        let inverse = extents.iter().map(|&n| planner.plan_fft_inverse(n)).collect();
        Self { extents: extents.to_vec(), periods: periods.to_vec(), forward, inverse }
    }

    pub fn for_lattice<G: Lattice>(grid: &G) -> Self {
        Self::new(&grid.extents(), &grid.periods())
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        wavenumbers(self.extents[axis], self.periods[axis])
    }

    pub fn derivative_wavenumbers(&self, axis: usize) -> Vec<f64> {
        derivative_wavenumbers(self.extents[axis], self.periods[axis])
    }

    /// Unnormalized forward transform over all axes.
    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.extents.len() {
            self.forward_axis(data, axis);
        }
    }

    /// Inverse transform over all axes, normalized so that it undoes
    /// [`SpectralPlan::forward`].
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.extents.len() {
            transform_axis(data, &self.extents, axis, self.inverse[axis].as_ref());
        }
        let scale = 1.0 / self.len() as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    pub fn forward_axis(&self, data: &mut [Complex64], axis: usize) {
        transform_axis(data, &self.extents, axis, self.forward[axis].as_ref());
    }

    pub fn inverse_axis(&self, data: &mut [Complex64], axis: usize) {
        transform_axis(data, &self.extents, axis, self.inverse[axis].as_ref());
        let scale = 1.0 / self.extents[axis] as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    /// Forward transform of real values.
    pub fn forward_real(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward(&mut data);
        data
    }

    /// Inverse transform, keeping the real part.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.inverse(&mut data);
        data.into_iter().map(|c| c.re).collect()
    }

    /// Calls `f(flat, modes)` for every Fourier index, where `modes` holds the
    /// physical wavenumber along each axis (Nyquist at the negative end).
    pub fn for_each_mode(&self, mut f: impl FnMut(usize, &[f64])) {
        let ks: Vec<Vec<f64>> = (0..self.extents.len()).map(|a| self.wavenumbers(a)).collect();
        let mut k = vec![0.0; self.extents.len()];
        for flat in 0..self.len() {
            let mut rem = flat;
            for axis in (0..self.extents.len()).rev() {
                let n = self.extents[axis];
                k[axis] = ks[axis][rem % n];
                rem /= n;
            }
            f(flat, &k);
        }
    }
}

fn transform_axis(data: &mut [Complex64], extents: &[usize], axis: usize, fft: &dyn Fft<f64>) {
    let n = extents[axis];
    let inner: usize = extents[axis + 1..].iter().product();
    let outer: usize = extents[..axis].iter().product();
    assert_eq!(data.len(), n * inner * outer, "buffer does not match extents");
    if inner == 1 {
        fft.process(data);
        return;
    }
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for (j, l) in line.iter_mut().enumerate() {
                *l = data[base + j * inner + i];
            }
            fft.process_with_scratch(&mut line, &mut scratch);
            for (j, l) in line.iter().enumerate() {
                data[base + j * inner + i] = *l;
            }
        }
    }
}

/// Fourier derivative along every axis of the lattice.
pub fn spectral_gradient<G: Lattice>(f: &Field<G>) -> Vec<Field<G>> {
    let plan = SpectralPlan::for_lattice(f.grid());
    gradient_with(&plan, f)
}

pub(crate) fn gradient_with<G: Lattice>(plan: &SpectralPlan, f: &Field<G>) -> Vec<Field<G>> {
    let hat = plan.forward_real(f.values());
    (0..plan.extents().len())
        .map(|axis| {
            let values = plan.inverse_real(derivative_spectrum(plan, &hat, axis));
            Field { grid: f.grid().clone(), values }
        })
        .collect()
}

/// Multiplies a spectrum by `i k_axis`.
pub(crate) fn derivative_spectrum(plan: &SpectralPlan, hat: &[Complex64], axis: usize) -> Vec<Complex64> {
    let k = plan.derivative_wavenumbers(axis);
    let extents = plan.extents();
    let n = extents[axis];
    let inner: usize = extents[axis + 1..].iter().product();
    hat.iter().enumerate().map(|(flat, &c)| c * Complex64::new(0.0, k[(flat / inner) % n])).collect()
}

/// Fourier derivative of `f` along one axis.
pub fn spectral_derivative<G: Lattice>(f: &Field<G>, axis: usize) -> Field<G> {
    let plan = SpectralPlan::for_lattice(f.grid());
    let hat = plan.forward_real(f.values());
    Field { grid: f.grid().clone(), values: plan.inverse_real(derivative_spectrum(&plan, &hat, axis)) }
}

/// Rotated gradient `(-∂₂f, ∂₁f)` of a two-dimensional field.
pub fn perp_gradient(f: &ScalarField) -> Result<VectorField> {
    if f.grid().dim() != 2 {
        return Err(Error::Grid("perpendicular gradient needs a two-dimensional field".into()));
    }
    let g = spectral_gradient(f);
    Ok(vec![g[1].scaled(-1.0), g[0].clone()])
}

/// Applies the rotation `(a, b) ↦ (-b, a)` to a planar vector field.
pub fn perp(v: &[ScalarField]) -> Result<VectorField> {
    if v.len() != 2 {
        return Err(Error::Shape("perpendicular of a non-planar vector field".into()));
    }
    Ok(vec![v[1].scaled(-1.0), v[0].clone()])
}

/// Spectral divergence of a vector field.
pub fn divergence(v: &[ScalarField]) -> Result<ScalarField> {
    let grid = v.first().ok_or_else(|| Error::Shape("empty vector field".into()))?.grid().clone();
    if v.len() != grid.dim() || v.iter().any(|c| c.grid() != &grid) {
        return Err(Error::Shape("vector field components do not match the grid".into()));
    }
    let plan = SpectralPlan::for_lattice(&grid);
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.node_count()];
    for (axis, comp) in v.iter().enumerate() {
        let hat = plan.forward_real(comp.values());
        for (a, d) in acc.iter_mut().zip(derivative_spectrum(&plan, &hat, axis)) {
            *a += d;
        }
    }
    Ok(Field { grid, values: plan.inverse_real(acc) })
}

/// Spectral Laplacian.
pub fn laplacian<G: Lattice>(f: &Field<G>) -> Field<G> {
    let plan = SpectralPlan::for_lattice(f.grid());
    let mut hat = plan.forward_real(f.values());
    plan.for_each_mode(|flat, k| {
        let k2: f64 = k.iter().map(|v| v * v).sum();
        hat[flat] *= -k2;
    });
    Field { grid: f.grid().clone(), values: plan.inverse_real(hat) }
}

/// Pointwise sum of vector fields with weights.
pub fn combine(terms: &[(f64, &[ScalarField])]) -> Result<VectorField> {
    let (_, first) = terms.first().ok_or_else(|| Error::Shape("no terms".into()))?;
    let mut out: VectorField = first.iter().map(|c| Field::zeros(c.grid().clone())).collect();
    for (w, v) in terms {
        if v.len() != out.len() {
            return Err(Error::Shape("vector fields of different lengths".into()));
        }
        for (o, c) in out.iter_mut().zip(v.iter()) {
            *o = o.zip_map(c, |a, b| a + w * b)?;
        }
    }
    Ok(out)
}

/// Kind tag of a binary field dump.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DumpKind {
    Spatial,
    Phase,
}

/// First line of a binary field dump.
#[derive(Clone, Debug, PartialEq)]
pub struct DumpHeader {
    pub dims: usize,
    pub n: usize,
    pub length: f64,
    pub kind: DumpKind,
}

impl DumpHeader {
    fn line(&self) -> String {
        let kind = match self.kind {
            DumpKind::Spatial => "spatial",
            DumpKind::Phase => "phase",
        };
        format!("dims={} n={} L={} kind={}\n", self.dims, self.n, self.length, kind)
    }

    fn parse(line: &str) -> Result<Self> {
        let mut dims = None;
        let mut n = None;
        let mut length = None;
        let mut kind = None;
        for token in line.split_whitespace() {
            let (key, value) =
                token.split_once('=').ok_or_else(|| Error::Config(format!("malformed dump header token {token:?}")))?;
            let bad = |_| Error::Config(format!("malformed dump header value {token:?}"));
            match key {
                "dims" => dims = Some(value.parse::<usize>().map_err(bad)?),
                "n" => n = Some(value.parse::<usize>().map_err(bad)?),
                "L" => length = Some(value.parse::<f64>().map_err(|_| Error::Config(token.into()))?),
                "kind" => {
                    kind = Some(match value {
                        "spatial" => DumpKind::Spatial,
                        "phase" => DumpKind::Phase,
                        other => return Err(Error::Config(format!("unknown dump kind {other:?}"))),
                    })
                }
                other => return Err(Error::Config(format!("unknown dump header key {other:?}"))),
            }
        }
        match (dims, n, length, kind) {
            (Some(dims), Some(n), Some(length), Some(kind)) => Ok(Self { dims, n, length, kind }),
            _ => Err(Error::Config(format!("incomplete dump header {line:?}"))),
        }
    }
}

/// Writes the header line followed by little-endian `f64` values.
pub fn write_dump<W: Write>(w: &mut W, header: &DumpHeader, values: &[f64]) -> Result<()> {
    w.write_all(header.line().as_bytes())?;
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads a dump written by [`write_dump`].
pub fn read_dump<R: BufRead>(r: &mut R) -> Result<(DumpHeader, Vec<f64>)> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header = DumpHeader::parse(line.trim_end())?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Config("dump payload is not a whole number of f64 values".into()));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8 bytes"))).collect();
    Ok((header, values))
}

pub fn write_field<W: Write>(w: &mut W, f: &ScalarField) -> Result<()> {
    let g = f.grid();
    let header = DumpHeader { dims: g.dim(), n: g.points(), length: g.length(), kind: DumpKind::Spatial };
    write_dump(w, &header, f.values())
}

pub fn read_field<R: BufRead>(r: &mut R) -> Result<ScalarField> {
    let (header, values) = read_dump(r)?;
    if header.kind != DumpKind::Spatial {
        return Err(Error::Config("expected a spatial field dump".into()));
    }
    Field::new(SpatialGrid::new(header.dims, header.n, header.length)?, values)
}

/// Phase-space dump; the velocity grid is not part of the header and must be
/// supplied when reading back.
pub fn write_phase_field<W: Write>(w: &mut W, f: &PhaseField) -> Result<()> {
    let g = f.grid().space();
    let header = DumpHeader { dims: g.dim(), n: g.points(), length: g.length(), kind: DumpKind::Phase };
    write_dump(w, &header, f.values())
}

pub fn read_phase_field<R: BufRead>(r: &mut R, velocity: &VelocityGrid) -> Result<PhaseField> {
    let (header, values) = read_dump(r)?;
    if header.kind != DumpKind::Phase {
        return Err(Error::Config("expected a phase-space field dump".into()));
    }
    let space = SpatialGrid::new(header.dims, header.n, header.length)?;
    Field::new(PhaseGrid::new(space, velocity.clone())?, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn torus(n: usize) -> SpatialGrid {
        SpatialGrid::torus(1, n).unwrap()
    }

    fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            let m = 0.5 * (a + b);
            (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
        }
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let l = simpson(f, a, m);
            let r = simpson(f, m, b);
            if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
                l + r + (l + r - whole) / 15.0
            } else {
                rec(f, a, m, l, tol / 2.0, depth - 1) + rec(f, m, b, r, tol / 2.0, depth - 1)
            }
        }
        rec(f, a, b, simpson(f, a, b), tol, 40)
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(SpatialGrid::new(3, 16, 1.0).is_err());
        assert!(SpatialGrid::new(1, 6, 1.0).is_err());
        assert!(SpatialGrid::new(1, 15, 1.0).is_err());
        assert!(SpatialGrid::new(1, 16, 0.0).is_err());
        assert!(VelocityGrid::new(1, 64, 5.0).is_err());
        assert!(PhaseGrid::new(torus(16), VelocityGrid::new(2, 16, 8.0).unwrap()).is_err());
        let min = VelocityGrid::min_half_width(1, 1e-12);
        assert!(min > 7.0 && min < 7.5);
    }

    #[test]
    fn quadrature_of_constant_and_mode() {
        let g = torus(32);
        assert!((quadrature(&Field::constant(g.clone(), 1.0)) - 2.0 * PI).abs() < 1e-14);
        assert!(quadrature(&g.sample(|x| x[0].cos())).abs() < 1e-14);
    }

    #[test]
    fn maxwellian_quadrature_matches_adaptive_oracle() {
        let v = VelocityGrid::new(1, 64, 8.0).unwrap();
        let gauss = |x: f64| (-x * x / 2.0).exp() / (2.0 * PI).sqrt();
        let disc = quadrature(&v.sample(|xi| gauss(xi[0])));
        let oracle = adaptive_simpson(&gauss, -8.0, 8.0, 1e-14);
        assert!((disc - oracle).abs() < 1e-10, "{disc} vs {oracle}");
        assert!((disc - 1.0).abs() < 1e-10);
    }

    #[test]
    fn derivatives_of_simple_functions() {
        let g = torus(64);
        let d = spectral_gradient(&g.sample(|x| x[0].sin()));
        let exact = g.sample(|x| x[0].cos());
        for (a, b) in d[0].values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let d = spectral_gradient(&Field::constant(g.clone(), 3.5));
        assert!(d[0].max_abs() == 0.0);
        let d = spectral_gradient(&g.sample(|x| x[0].cos().exp()));
        let exact = g.sample(|x| -x[0].sin() * x[0].cos().exp());
        for (a, b) in d[0].values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn perp_gradient_examples() {
        let g = SpatialGrid::torus(2, 16).unwrap();
        let p = perp_gradient(&g.sample(|x| x[0].sin())).unwrap();
        let c = g.sample(|x| x[0].cos());
        assert!(p[0].max_abs() < 1e-13);
        for (a, b) in p[1].values().iter().zip(c.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = perp_gradient(&g.sample(|x| x[1].sin())).unwrap();
        let c = g.sample(|x| -x[1].cos());
        for (a, b) in p[0].values().iter().zip(c.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(p[1].max_abs() < 1e-13);
        assert!(perp_gradient(&torus(16).sample(|x| x[0].sin())).is_err());
    }

    #[test]
    fn laplacian_of_mode() {
        let g = SpatialGrid::torus(2, 16).unwrap();
        let l = laplacian(&g.sample(|x| (x[0] + 2.0 * x[1]).cos()));
        let e = g.sample(|x| -5.0 * (x[0] + 2.0 * x[1]).cos());
        for (a, b) in l.values().iter().zip(e.values()) {
            assert!((a - b).abs() < 1e-11);
        }
    }

    #[test]
    fn phase_layout_is_velocity_minor() {
        let g = PhaseGrid::new(torus(8), VelocityGrid::new(1, 16, 8.0).unwrap()).unwrap();
        let f = g.sample(|x, xi| 100.0 * x[0] + xi[0]);
        assert_eq!(f.values()[1] - f.values()[0], 1.0);
        assert!((f.values()[16] - f.values()[0] - 100.0 * g.space().spacing()).abs() < 1e-12);
    }

    #[test]
    fn dump_roundtrip() {
        let g = SpatialGrid::torus(2, 8).unwrap();
        let f = g.sample(|x| x[0].sin() + x[1]);
        let mut buf = Vec::new();
        write_field(&mut buf, &f).unwrap();
        let text_end = buf.iter().position(|&b| b == b'\n').unwrap();
        assert_eq!(std::str::from_utf8(&buf[..text_end]).unwrap(), format!("dims=2 n=8 L={} kind=spatial", 2.0 * PI));
        let back = read_field(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);

        let v = VelocityGrid::new(1, 16, 8.0).unwrap();
        let pg = PhaseGrid::new(torus(8), v.clone()).unwrap();
        let pf = pg.sample(|x, xi| x[0] * xi[0]);
        let mut buf = Vec::new();
        write_phase_field(&mut buf, &pf).unwrap();
        assert_eq!(read_phase_field(&mut buf.as_slice(), &v).unwrap(), pf);
        assert!(read_field(&mut buf.as_slice()).is_err());
    }

    fn band_limited(coeffs: &[(f64, f64)], g: &SpatialGrid) -> ScalarField {
        g.sample(|x| {
            coeffs
                .iter()
                .enumerate()
                .map(|(m, (a, b))| {
                    let k = (m + 1) as f64;
                    let phase = if x.len() == 2 { k * x[0] + (m as f64) * x[1] } else { k * x[0] };
                    a * phase.cos() + b * phase.sin()
                })
                .sum()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gradient_integrates_to_zero(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6)) {
            let g = SpatialGrid::torus(2, 16).unwrap();
            let f = band_limited(&coeffs, &g);
            for c in spectral_gradient(&f) {
                prop_assert!(quadrature(&c).abs() < 1e-12);
            }
        }

        #[test]
        fn parseval_holds(a in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6),
                          b in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6)) {
            let g = torus(32);
            let f = band_limited(&a, &g);
            let h = band_limited(&b, &g);
            let direct = quadrature(&f.zip_map(&h, |x, y| x * y).unwrap());
            let plan = SpectralPlan::for_lattice(&g);
            let fh = plan.forward_real(f.values());
            let hh = plan.forward_real(h.values());
            let spectral: f64 = fh.iter().zip(&hh).map(|(x, y)| (x * y.conj()).re).sum::<f64>()
                * g.cell_volume() / g.node_count() as f64;
            prop_assert!((direct - spectral).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn divergence_of_perp_gradient_vanishes(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..6)) {
            let g = SpatialGrid::torus(2, 16).unwrap();
            let f = band_limited(&coeffs, &g);
            let div = divergence(&perp_gradient(&f).unwrap()).unwrap();
            prop_assert!(div.max_abs() <= 1e-10 * f.max_abs().max(1e-300));
        }
    }
}
