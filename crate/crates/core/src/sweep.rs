//! Dither-frequency sweeps on a built scenario.

use rayon::prelude::*;
use thiserror::Error;

use crate::averaging::{trajectory_deviation, AveragingError, Deviation};
use crate::closed_loop::FieldKind;
use crate::linalg::norm;
use crate::scenario::BuiltScenario;
use crate::sim::{integrate, ultimate_bound, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SweepError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Averaging(#[from] AveragingError),
}

impl SweepError {
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            SweepError::Sim(SimError::IntegrationDiverged { .. } | SimError::NonFinite { .. })
                | SweepError::Averaging(AveragingError::IntegrationDiverged { .. })
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub omega: f64,
    pub ultimate_bound_e: f64,
    pub sup_dev_vs_averaged: f64,
    pub vartheta_err_final: f64,
}

fn check_omegas(omegas: &[f64]) -> Result<(), AveragingError> {
    let ok = !omegas.is_empty()
        && omegas.iter().all(|w| w.is_finite() && *w > 0.0)
        && omegas.windows(2).all(|w| w[1] > w[0]);
    if ok {
        Ok(())
    } else {
        Err(AveragingError::InvalidOmegas)
    }
}

/// Per `ω` (steps per dither period kept from the scenario): tail bound of
/// `|e|`, sup deviation from the averaged loop, and final `‖ϑ − ϱ‖`.
pub fn sweep(built: &BuiltScenario, omegas: &[f64], tail_fraction: f64) -> Result<Vec<SweepRow>, SweepError> {
    check_omegas(omegas)?;
    let varrho = &built.steady_state.varrho;
    omegas
        .par_iter()
        .map(|&omega| {
            let s = built.scenario.with_omega(omega);
            let traj = integrate(&s)?;
            let ub = ultimate_bound(&traj, "e", tail_fraction)?;
            let vt = &traj.final_state[s.core.layout.vartheta()];
            let err: Vec<f64> = vt.iter().zip(varrho).map(|(a, b)| a - b).collect();
            let dev = trajectory_deviation(
                &s.field(FieldKind::Dithered),
                &s.field(FieldKind::Averaged),
                &s.x0,
                s.horizon,
                s.dt,
                omega,
            )?;
            Ok(SweepRow {
                omega,
                ultimate_bound_e: ub,
                sup_dev_vs_averaged: dev.sup,
                vartheta_err_final: norm(&err),
            })
        })
        .collect()
}

/// Dithered vs analytic averaged closed loop over `horizon` for each `ω`.
pub fn verify_averaging(built: &BuiltScenario, omegas: &[f64], horizon: f64) -> Result<Vec<Deviation>, SweepError> {
    check_omegas(omegas)?;
    omegas
        .par_iter()
        .map(|&omega| {
            let s = built.scenario.with_omega(omega);
            Ok(trajectory_deviation(
                &s.field(FieldKind::Dithered),
                &s.field(FieldKind::Averaged),
                &s.x0,
                horizon,
                s.dt,
                omega,
            )?)
        })
        .collect()
}
