//! Operators on a single velocity slice `f(x, ·)`: Fourier shifts, rigid
//! rotations by three shears, and the exact Ornstein-Uhlenbeck relaxation.
//!
//! The velocity box is treated as periodic by the shifts. Admissible grids
//! make the Maxwellian tails negligible at the box edge, so nothing wraps.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{wavenumbers, VelocityGrid};

/// Scratch buffers for one line transform.
pub struct LineScratch {
    line: Vec<Complex64>,
    fft: Vec<Complex64>,
    copy: Vec<f64>,
}

/// Precomputed transforms for one velocity grid.
#[derive(Clone)]
pub struct VelocityOps {
    dim: usize,
    n: usize,
    nodes: Vec<f64>,
    eta: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for VelocityOps {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VelocityOps").field("dim", &self.dim).field("n", &self.n).finish()
    }
}

impl VelocityOps {
    pub fn new(grid: &VelocityGrid) -> Self {
        let n = grid.points();
        let mut planner = FftPlanner::new();
        Self {
            dim: grid.dim(),
            n,
            nodes: grid.nodes(),
            eta: wavenumbers(n, 2.0 * grid.half_width()),
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn slice_len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn scratch(&self) -> LineScratch {
        let len = self.forward.get_inplace_scratch_len().max(self.inverse.get_inplace_scratch_len());
        LineScratch {
            line: vec![Complex64::new(0.0, 0.0); self.n],
            fft: vec![Complex64::new(0.0, 0.0); len],
            copy: vec![0.0; self.slice_len()],
        }
    }

    /// `g(ξ) = f(ξ - a)` along one line of `n` values at `stride`.
    fn shift_strided(&self, data: &mut [f64], start: usize, stride: usize, a: f64, s: &mut LineScratch) {
        if a == 0.0 {
            return;
        }
        for i in 0..self.n {
            s.line[i] = Complex64::new(data[start + i * stride], 0.0);
        }
        self.forward.process_with_scratch(&mut s.line, &mut s.fft);
        for (c, &k) in s.line.iter_mut().zip(&self.eta) {
            *c *= Complex64::from_polar(1.0, -k * a);
        }
        self.inverse.process_with_scratch(&mut s.line, &mut s.fft);
        let norm = 1.0 / self.n as f64;
        for i in 0..self.n {
            data[start + i * stride] = s.line[i].re * norm;
        }
    }

    /// Translates the slice by the vector `mu`.
    pub fn shift(&self, slice: &mut [f64], mu: &[f64], s: &mut LineScratch) {
        let n = self.n;
        if self.dim == 1 {
            self.shift_strided(slice, 0, 1, mu[0], s);
            return;
        }
        for j in 0..n {
            self.shift_strided(slice, j, n, mu[0], s);
        }
        for i in 0..n {
            self.shift_strided(slice, i * n, 1, mu[1], s);
        }
    }

    /// `g(ξ₁, ξ₂) = f(ξ₁ - a ξ₂, ξ₂)`.
    fn shear_first(&self, slice: &mut [f64], a: f64, s: &mut LineScratch) {
        for j in 0..self.n {
            self.shift_strided(slice, j, self.n, a * self.nodes[j], s);
        }
    }

    /// `g(ξ₁, ξ₂) = f(ξ₁, ξ₂ - b ξ₁)`.
    fn shear_second(&self, slice: &mut [f64], b: f64, s: &mut LineScratch) {
        for i in 0..self.n {
            self.shift_strided(slice, i * self.n, 1, b * self.nodes[i], s);
        }
    }

    fn quarter_turn(&self, slice: &mut [f64], s: &mut LineScratch) {
        let n = self.n;
        s.copy.copy_from_slice(slice);
        for i in 0..n {
            for j in 0..n {
                slice[i * n + j] = s.copy[j * n + (n - i) % n];
            }
        }
    }

    /// Counter-clockwise rigid rotation of the profile: `g(ξ) = f(R_{-θ} ξ)`.
    pub fn rotate(&self, slice: &mut [f64], theta: f64, s: &mut LineScratch) {
        assert_eq!(self.dim, 2, "rotation needs a planar velocity grid");
        let turns = (theta / FRAC_PI_2).round();
        let rest = theta - turns * FRAC_PI_2;
        debug_assert!(rest.abs() <= FRAC_PI_4 + 1e-12);
        for _ in 0..(turns as i64).rem_euclid(4) {
            self.quarter_turn(slice, s);
        }
        if rest != 0.0 {
            let t = -(0.5 * rest).tan();
            self.shear_first(slice, t, s);
            self.shear_second(slice, rest.sin(), s);
            self.shear_first(slice, t, s);
        }
    }

    /// The Ornstein-Uhlenbeck flow over relaxation time `s`: contraction of
    /// velocities by `e^{-s}` and a Gaussian of variance `1 - e^{-2s}`.
    pub fn relaxation(&self, s: f64) -> Relaxation {
        let n = self.n;
        let c = (-s).exp();
        let var = -(-2.0 * s).exp_m1();
        let gauss: Vec<f64> = self.eta.iter().map(|k| (-0.5 * var * k * k).exp()).collect();
        let mut p = vec![0.0; n * n];
        for m in 0..n {
            for k in 0..n {
                let y = self.nodes[m] - c * self.nodes[k];
                let sum: f64 = self.eta.iter().zip(&gauss).map(|(e, g)| g * (e * y).cos()).sum();
                p[m * n + k] = sum / n as f64;
            }
        }
        Relaxation { dim: self.dim, n, p }
    }
}

/// Matrix of the one-axis Ornstein-Uhlenbeck flow, applied axis by axis.
#[derive(Clone, Debug)]
pub struct Relaxation {
    dim: usize,
    n: usize,
    p: Vec<f64>,
}

impl Relaxation {
    fn apply_line(&self, src: &[f64], src_stride: usize, dst: &mut [f64], dst_stride: usize) {
        let n = self.n;
        for m in 0..n {
            let row = &self.p[m * n..(m + 1) * n];
            let mut acc = 0.0;
            for k in 0..n {
                acc += row[k] * src[k * src_stride];
            }
            dst[m * dst_stride] = acc;
        }
    }

    pub fn apply(&self, slice: &mut [f64], s: &mut LineScratch) {
        let n = self.n;
        s.copy.copy_from_slice(slice);
        if self.dim == 1 {
            self.apply_line(&s.copy, 1, slice, 1);
            return;
        }
        for i in 0..n {
            self.apply_line(&s.copy[i * n..], 1, &mut slice[i * n..], 1);
        }
        s.copy.copy_from_slice(slice);
        for j in 0..n {
            self.apply_line(&s.copy[j..], n, &mut slice[j..], n);
        }
    }
}
