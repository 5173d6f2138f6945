//! Time marching with functional reports, distances to a macroscopic
//! reference, and checkpoints.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{check_cfl, max_force, KineticRunConfig, KineticSolver};
use crate::functionals::FunctionalReport;
use crate::grid::{read_phase_field, write_phase_field, Lattice, PhaseField, ScalarField, VelocityGrid};
use crate::macrolimits::{target_velocity, MacroTrajectory};
use crate::metrics::{bl_distance, bl_norm_timespace, BlMethod, TimeWeights};
use crate::riesz::RieszOperator;
use crate::states::{limit_velocity, maxwellian_field, moments, KineticState, RegimeKind, ScalingRegime};
use crate::{Error, Result};

/// Which of the costlier distances a run records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistanceOptions {
    /// `d_BL(ρ_f, ρ)` at every report.
    pub dbl_rho: bool,
    /// `d_BL(f, M_{ρ,u})` on the phase grid at every report.
    pub dbl_f: bool,
    /// Time bins for the time-space momentum distance; zero disables it.
    pub momentum_bins: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        Self { dbl_rho: true, dbl_f: false, momentum_bins: 0 }
    }
}

/// Distances to the reference at one report time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DistanceRow {
    pub time: f64,
    /// `‖f - M_{ρ,u}‖₁` over phase space.
    pub l1_f: f64,
    pub l1_rho: f64,
    /// `‖ρ_f - ρ‖_{Ḣ^{-α}}`
    pub hneg_rho: f64,
    pub dbl_rho: Option<f64>,
    pub dbl_f: Option<f64>,
    /// `‖m_f/s - ρu/s‖₁` with `s = ε` in the diffusive and magnetic scalings
    /// and `s = 1` in the high-field one.
    pub mom_err: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub final_state: KineticState,
    pub trace: Vec<FunctionalReport>,
    pub distances: Vec<DistanceRow>,
    /// `∫₀ᵀ mom_err dt`, trapezoid over every step.
    pub momentum_integral: Option<f64>,
    /// Largest `mom_err` over every step.
    pub momentum_sup: Option<f64>,
    /// Time-space bounded-Lipschitz norm of the scaled momentum defect,
    /// summed over components.
    pub momentum_timespace: Option<f64>,
    /// Most negative `min f / max f` seen after any step.
    pub worst_undershoot: f64,
    pub dt: f64,
    pub steps: usize,
}

/// Divisor applied to the momentum before it is compared with `ρu`.
pub fn momentum_scale(regime: &ScalingRegime) -> f64 {
    match regime.kind() {
        RegimeKind::HighField => 1.0,
        RegimeKind::Diffusive | RegimeKind::Gsqg => regime.epsilon(),
    }
}

struct Reference {
    rho: ScalarField,
    /// Limiting mean velocity: the Maxwellian the kinetic state relaxes to.
    u: Vec<ScalarField>,
    /// Closure velocity of the momentum defect.
    flux: Vec<ScalarField>,
}

fn reference(traj: &MacroTrajectory, regime: &ScalingRegime, riesz: &RieszOperator, t: f64) -> Result<Reference> {
    let rho = traj.at(t)?;
    let flux = target_velocity(regime, riesz, &rho)?;
    let u = limit_velocity(regime.kind(), riesz, &rho);
    Ok(Reference { rho, u, flux })
}

/// Scaled momentum defect `m/s - ρu/s` per component.
fn momentum_defect(f: &PhaseField, r: &Reference, scale: f64) -> Vec<ScalarField> {
    let (_, m, _) = moments(f);
    m.iter()
        .zip(&r.flux)
        .map(|(mc, uc)| {
            let target = r.rho.zip_map(uc, |a, b| a * b).expect("same grid");
            mc.zip_map(&target, |a, b| (a - b) / scale).expect("same grid")
        })
        .collect()
}

fn pointwise_norm_l1(v: &[ScalarField]) -> f64 {
    let grid = v[0].grid();
    let sum: f64 = (0..grid.node_count()).map(|i| v.iter().map(|c| c.values()[i].powi(2)).sum::<f64>().sqrt()).sum();
    sum * grid.cell_volume()
}

fn distances(
    state: &KineticState,
    r: &Reference,
    riesz: &RieszOperator,
    opts: &DistanceOptions,
    scale: f64,
) -> Result<DistanceRow> {
    let m = maxwellian_field(&r.rho, &r.u, state.grid().velocity())?;
    let l1_f = state.f().zip_map(&m, |a, b| a - b)?.l1_norm();
    let l1_rho = state.rho().zip_map(&r.rho, |a, b| a - b)?.l1_norm();
    let dbl_rho = if opts.dbl_rho { Some(bl_distance(state.rho(), &r.rho)?.value) } else { None };
    let dbl_f = if opts.dbl_f { Some(bl_distance(state.f(), &m)?.value) } else { None };
    Ok(DistanceRow {
        time: state.time(),
        l1_f,
        l1_rho,
        hneg_rho: riesz.negative_sobolev_distance(state.rho(), &r.rho),
        dbl_rho,
        dbl_f,
        mom_err: pointwise_norm_l1(&momentum_defect(state.f(), r, scale)),
    })
}

/// Marches `init` to `cfg.t_end`. With a macroscopic reference, every report
/// also measures the distances of [`DistanceRow`] against `ρ(t)` and the
/// regime's target velocity, and the momentum defect is integrated over
/// every step.
pub fn run(init: &KineticState, cfg: &KineticRunConfig, macro_ref: Option<&MacroTrajectory>) -> Result<RunOutput> {
    if init.grid() != &cfg.grid {
        return Err(Error::Shape("initial state does not live on the configured grid".into()));
    }
    let solver = KineticSolver::from_config(cfg)?;
    let riesz = solver.riesz().clone();
    check_cfl(&cfg.regime, &cfg.grid, solver.dt(), max_force(&riesz, init.rho()), cfg.safety)?;
    let (steps, h) = cfg.schedule();
    let every = cfg.report_every.max(1);
    let scale = momentum_scale(&cfg.regime);
    let t0 = init.time();

    let mut trace = Vec::new();
    let mut rows = Vec::new();
    let mut f = init.f().clone();
    let mut state = init.clone();

    let mut report = |state: &KineticState, r: Option<&Reference>| -> Result<()> {
        let target = r.map(|r| (&r.rho, r.u.as_slice()));
        trace.push(FunctionalReport::evaluate(state, &riesz, target));
        if let Some(r) = r {
            rows.push(distances(state, r, &riesz, &cfg.distances, scale)?);
        }
        log::debug!("t = {:.6} reported", state.time());
        Ok(())
    };

    let bins = cfg.distances.momentum_bins;
    let bin_width = (cfg.t_end - t0) / bins.max(1) as f64;
    let mut binned: Vec<Vec<ScalarField>> = Vec::new();
    let mut integral = 0.0;
    let mut sup = 0.0f64;
    let mut prev: Option<(f64, Vec<ScalarField>)> = None;

    let mut worst = 0.0f64;
    let mut r0 = None;
    if let Some(traj) = macro_ref {
        let r = reference(traj, &cfg.regime, &riesz, t0)?;
        let defect = momentum_defect(&f, &r, scale);
        let e = pointwise_norm_l1(&defect);
        sup = e;
        prev = Some((e, defect));
        if bins > 0 {
            let zero = ScalarField::zeros(cfg.grid.space().clone());
            binned = vec![vec![zero; cfg.grid.dim()]; bins];
        }
        r0 = Some(r);
    }
    report(&state, r0.as_ref())?;

    for k in 1..=steps {
        let t_prev = t0 + (k - 1) as f64 * h;
        worst = worst.min(solver.advance(f.values_mut(), t_prev)?);
        let t = t0 + k as f64 * h;
        let due = k % every == 0 || k == steps;
        let r = match macro_ref {
            Some(traj) => Some(reference(traj, &cfg.regime, &riesz, t)?),
            None => None,
        };
        if let Some(r) = r.as_ref() {
            let defect = momentum_defect(&f, r, scale);
            let e = pointwise_norm_l1(&defect);
            let (pe, pd) = prev.take().expect("initial defect recorded");
            integral += 0.5 * h * (e + pe);
            sup = sup.max(e);
            if bins > 0 {
                let b = ((0.5 * (t + t_prev) - t0) / bin_width).floor().clamp(0.0, (bins - 1) as f64) as usize;
                for (acc, (a, c)) in binned[b].iter_mut().zip(defect.iter().zip(&pd)) {
                    let vals = acc.values_mut();
                    for ((v, x), y) in vals.iter_mut().zip(a.values()).zip(c.values()) {
                        *v += 0.5 * h * (x + y);
                    }
                }
            }
            prev = Some((e, defect));
        }
        if due {
            state = KineticState::new(f.clone(), t);
            report(&state, r.as_ref())?;
        }
    }
    if steps == 0 {
        state = KineticState::new(f, t0);
    }

    let momentum_timespace = if macro_ref.is_some() && bins > 1 {
        let times: Vec<f64> = (0..bins).map(|b| t0 + (b as f64 + 0.5) * bin_width).collect();
        let mut total = 0.0;
        for axis in 0..cfg.grid.dim() {
            let fields: Vec<ScalarField> = binned.iter().map(|b| b[axis].scaled(1.0 / bin_width)).collect();
            total += bl_norm_timespace(&times, &fields, TimeWeights::Midpoint, BlMethod::Auto)?.value;
        }
        Some(total)
    } else {
        None
    };
    let has_ref = macro_ref.is_some();
    Ok(RunOutput {
        final_state: state,
        trace,
        distances: rows,
        momentum_integral: has_ref.then_some(integral),
        momentum_sup: has_ref.then_some(sup),
        momentum_timespace,
        worst_undershoot: worst,
        dt: h,
        steps,
    })
}

/// Metadata stored as one JSON line in front of a checkpoint dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub regime: RegimeKind,
    #[serde(rename = "eps")]
    pub epsilon: f64,
    pub alpha: f64,
    #[serde(rename = "t")]
    pub time: f64,
    pub dt: f64,
    pub dims: usize,
    pub nv: usize,
    #[serde(rename = "V")]
    pub half_width: f64,
}

/// Writes `f` with a one-line metadata header.
pub fn write_checkpoint(path: &Path, state: &KineticState, regime: &ScalingRegime, dt: f64) -> Result<()> {
    let v = state.grid().velocity();
    let meta = CheckpointMeta {
        regime: regime.kind(),
        epsilon: regime.epsilon(),
        alpha: regime.alpha(),
        time: state.time(),
        dt,
        dims: v.dim(),
        nv: v.points(),
        half_width: v.half_width(),
    };
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, &meta).map_err(|e| Error::Config(e.to_string()))?;
    w.write_all(b"\n")?;
    write_phase_field(&mut w, state.f())?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<(KineticState, CheckpointMeta)> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    r.read_line(&mut line)?;
    let meta: CheckpointMeta =
        serde_json::from_str(&line).map_err(|e| Error::Config(format!("malformed checkpoint metadata: {e}")))?;
    let v = VelocityGrid::with_tolerance(meta.dims, meta.nv, meta.half_width, 1.0)?;
    let f = read_phase_field(&mut r, &v)?;
    let state = KineticState::new(f, meta.time);
    if (state.mass() - 1.0).abs() > 1e-6 {
        log::warn!("checkpoint mass {} differs from one", state.mass());
    }
    Ok((state, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Field, PhaseGrid, SpatialGrid};
    use crate::states::{maxwellian, zero_vector};

    #[test]
    fn equilibrium_run_has_no_dissipation() {
        let s = SpatialGrid::torus(1, 16).unwrap();
        let v = VelocityGrid::new(1, 48, 8.0).unwrap();
        let g = PhaseGrid::new(s.clone(), v.clone()).unwrap();
        let regime = ScalingRegime::new(RegimeKind::Diffusive, 0.2, 0.25).unwrap();
        let rho = Field::constant(s.clone(), 1.0 / s.volume());
        let init = maxwellian(&rho, &zero_vector(&s), &v).unwrap();
        let mut cfg = KineticRunConfig::with_default_dt(regime, g, 0.02, &rho).unwrap();
        cfg.report_every = 10;
        let out = run(&init, &cfg, None).unwrap();
        let e0 = out.trace[0].free_energy + out.trace[0].potential;
        for r in &out.trace {
            assert!(r.dissipation.abs() < 1e-10);
            assert!((r.free_energy + r.potential - e0).abs() < 1e-10);
        }
        assert!((out.final_state.time() - 0.02).abs() < 1e-14);
        assert!((out.final_state.mass() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = SpatialGrid::torus(1, 8).unwrap();
        let v = VelocityGrid::new(1, 32, 8.0).unwrap();
        let rho = Field::constant(s.clone(), 1.0 / s.volume());
        let st = maxwellian(&rho, &zero_vector(&s), &v).unwrap();
        let st = KineticState::new(st.into_field(), 0.25);
        let regime = ScalingRegime::new(RegimeKind::HighField, 0.1, 0.25).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.bin");
        write_checkpoint(&path, &st, &regime, 1e-3).unwrap();
        let (back, meta) = read_checkpoint(&path).unwrap();
        assert_eq!(back.f().values(), st.f().values());
        assert_eq!(meta.regime, RegimeKind::HighField);
        assert_eq!((meta.time, meta.dt, meta.nv), (0.25, 1e-3, 32));
        let text = std::fs::read(&path).unwrap();
        let header = text.split(|&b| b == b'\n').next().unwrap();
        assert!(std::str::from_utf8(header).unwrap().starts_with("{\"regime\":\"highfield\",\"eps\":0.1"));
    }
}
