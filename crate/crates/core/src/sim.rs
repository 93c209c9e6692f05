//! Fixed-step RK4 integration of the closed loop, trajectories and metrics.

use std::sync::Arc;

use thiserror::Error;

use crate::averaging::VectorField;
use crate::closed_loop::{ClosedLoop, FieldKind, LoopCore};
use crate::linalg::norm;
use crate::oracle::SteadyState;

/// States with a larger Euclidean norm count as diverged.
pub const DIVERGENCE_NORM: f64 = 1e6;
/// Upper bound on recorded rows unless full-rate recording is requested.
pub const MAX_ROWS: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("integration diverged at t = {t}: state norm {norm:e}")]
    IntegrationDiverged { t: f64, norm: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),
    #[error("horizon must be positive and finite, got {0}")]
    InvalidHorizon(f64),
    #[error("step {dt} exceeds the limit {limit} of 40 steps per dither period")]
    StepTooLarge { dt: f64, limit: f64 },
    #[error("tail fraction must lie in (0, 1), got {0}")]
    InvalidTailFraction(f64),
    #[error("unknown channel {0:?}")]
    UnknownChannel(String),
    #[error("initial state has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
}

/// Reusable stage buffers for allocation-free RK4 steps.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    /// Advances `x` in place from `t` to `t + dt`.
    pub fn step<F: VectorField + ?Sized>(&mut self, field: &F, x: &mut [f64], t: f64, dt: f64) {
        let h2 = 0.5 * dt;
        field.eval_into(x, t, &mut self.k1);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h2 * self.k1[i];
        }
        field.eval_into(&self.tmp, t + h2, &mut self.k2);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + h2 * self.k2[i];
        }
        field.eval_into(&self.tmp, t + h2, &mut self.k3);
        for i in 0..x.len() {
            self.tmp[i] = x[i] + dt * self.k3[i];
        }
        field.eval_into(&self.tmp, t + dt, &mut self.k4);
        for i in 0..x.len() {
            x[i] += dt / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// One classical RK4 step.
pub fn rk4_step<F: VectorField + ?Sized>(
    field: &F,
    x: &[f64],
    t: f64,
    dt: f64,
) -> Result<Vec<f64>, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidStep(dt));
    }
    let mut out = x.to_vec();
    Rk4::new(x.len()).step(field, &mut out, t, dt);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(SimError::NonFinite { t: t + dt });
    }
    Ok(out)
}

/// Divergence and finiteness check after a step.
pub(crate) fn check_state(x: &[f64], t: f64) -> Result<(), SimError> {
    let n = norm(x);
    if !n.is_finite() {
        return Err(SimError::NonFinite { t });
    }
    if n > DIVERGENCE_NORM {
        return Err(SimError::IntegrationDiverged { t, norm: n });
    }
    Ok(())
}

/// Sampled trajectory with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn channel(&self, name: &str) -> Result<&[f64], SimError> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
            .ok_or_else(|| SimError::UnknownChannel(name.to_string()))
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// `sup |channel|` over the last `tail_fraction` of the time span.
pub fn ultimate_bound(traj: &Trajectory, channel: &str, tail_fraction: f64) -> Result<f64, SimError> {
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return Err(SimError::InvalidTailFraction(tail_fraction));
    }
    let col = traj.channel(channel)?;
    let (Some(&t0), Some(&t1)) = (traj.times.first(), traj.times.last()) else {
        return Ok(0.0);
    };
    let start = t1 - tail_fraction * (t1 - t0);
    Ok(traj
        .times
        .iter()
        .zip(col)
        .filter(|(t, _)| **t >= start - 1e-12 * t1.abs().max(1.0))
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max))
}

/// Integrates `field` from `x0` over `[0, horizon]` with `ceil(horizon/dt)`
/// steps, `t = i·dt` (last step shortened to land on the horizon).
/// `record(t, x, row)` fills one output row every `stride` steps.
pub fn integrate_field<F, R>(
    field: &F,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    stride: usize,
    names: Vec<String>,
    mut record: R,
) -> Result<Trajectory, SimError>
where
    F: VectorField + ?Sized,
    R: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidStep(dt));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(SimError::InvalidHorizon(horizon));
    }
    if x0.len() != field.dim() {
        return Err(SimError::Dimension {
            expected: field.dim(),
            got: x0.len(),
        });
    }
    check_state(x0, 0.0)?;
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let stride = stride.max(1);
    let rows = steps / stride + 2;
    let mut times = Vec::with_capacity(rows);
    let mut columns: Vec<Vec<f64>> = (0..names.len()).map(|_| Vec::with_capacity(rows)).collect();
    let mut row = vec![0.0; names.len()];
    let mut push = |t: f64, x: &[f64], times: &mut Vec<f64>, columns: &mut Vec<Vec<f64>>| {
        record(t, x, &mut row);
        times.push(t);
        for (c, v) in columns.iter_mut().zip(&row) {
            c.push(*v);
        }
    };

    let mut x = x0.to_vec();
    let mut rk = Rk4::new(x.len());
    push(0.0, &x, &mut times, &mut columns);
    for i in 0..steps {
        let t = i as f64 * dt;
        let h = dt.min(horizon - t);
        rk.step(field, &mut x, t, h);
        let t_next = if i + 1 == steps { horizon } else { (i + 1) as f64 * dt };
        check_state(&x, t_next)?;
        if (i + 1) % stride == 0 || i + 1 == steps {
            push(t_next, &x, &mut times, &mut columns);
        }
    }
    Ok(Trajectory {
        times,
        names,
        columns,
        final_state: x,
    })
}

/// Full closed-loop simulation setup.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub core: Arc<LoopCore>,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
    /// `None` picks the smallest stride that keeps at most [`MAX_ROWS`] rows.
    pub record_stride: Option<usize>,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SimError::InvalidStep(self.dt));
        }
        let limit = self.core.cfg.period() / 40.0;
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(SimError::StepTooLarge { dt: self.dt, limit });
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(SimError::InvalidHorizon(self.horizon));
        }
        let dim = self.core.layout.dim();
        if self.x0.len() != dim {
            return Err(SimError::Dimension {
                expected: dim,
                got: self.x0.len(),
            });
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil().max(1.0) as usize
    }

    pub fn stride(&self) -> usize {
        self.record_stride
            .unwrap_or_else(|| self.steps().div_ceil(MAX_ROWS))
            .max(1)
    }

    /// Same scenario at dither frequency `omega`, keeping steps per period.
    pub fn with_omega(&self, omega: f64) -> Self {
        let mut core = (*self.core).clone();
        let ratio = core.cfg.omega / omega;
        core.cfg.omega = omega;
        Self {
            core: Arc::new(core),
            x0: self.x0.clone(),
            horizon: self.horizon,
            dt: self.dt * ratio,
            record_stride: None,
        }
    }

    pub fn field(&self, kind: FieldKind) -> ClosedLoop {
        ClosedLoop::new(self.core.clone(), kind)
    }
}

/// Integrates the dithered closed loop. Channels: `z*, y, v*, eta*, pi,
/// vt*, e, u`.
pub fn integrate(scenario: &Scenario) -> Result<Trajectory, SimError> {
    integrate_kind(scenario, FieldKind::Dithered)
}

/// As [`integrate`] with another right-hand side (e.g. the averaged loop).
pub fn integrate_kind(scenario: &Scenario, kind: FieldKind) -> Result<Trajectory, SimError> {
    scenario.validate()?;
    let field = scenario.field(kind);
    let core = scenario.core.clone();
    let mut names = core.layout.state_names();
    names.push("e".into());
    names.push("u".into());
    let dim = core.layout.dim();
    integrate_field(
        &field,
        &scenario.x0,
        scenario.horizon,
        scenario.dt,
        scenario.stride(),
        names,
        |t, x, row| {
            row[..dim].copy_from_slice(x);
            row[dim] = core.error(x);
            row[dim + 1] = core.input(x, t, kind);
        },
    )
}

/// Closed-loop signals relative to the steady state:
/// `z̄ = z − 𝐳`, `η̄ = η − θ`, `ϑ̄ = ϑ − ϱ`, `π̄ = π − ϖ − e/b`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorView {
    pub times: Vec<f64>,
    pub zbar: Vec<Vec<f64>>,
    pub etabar: Vec<Vec<f64>>,
    pub pibar: Vec<f64>,
    pub varthetabar: Vec<Vec<f64>>,
    pub e: Vec<f64>,
}

impl ErrorView {
    pub fn vartheta_error_norms(&self) -> Vec<f64> {
        self.varthetabar.iter().map(|v| norm(v)).collect()
    }
}

fn collect_prefixed<'a>(traj: &'a Trajectory, prefix: &str, count: usize) -> Result<Vec<&'a [f64]>, SimError> {
    (1..=count)
        .map(|i| traj.channel(&format!("{prefix}{i}")))
        .collect()
}

pub fn error_view(traj: &Trajectory, oracle: &SteadyState, b: f64) -> Result<ErrorView, SimError> {
    let nz = oracle.z_ss.dim();
    let n = oracle.theta_ss.dim();
    let z = collect_prefixed(traj, "z", nz)?;
    let eta = collect_prefixed(traj, "eta", n)?;
    let vt = collect_prefixed(traj, "vt", n)?;
    let pi = traj.channel("pi")?;
    let e = traj.channel("e")?;
    let mut view = ErrorView {
        times: traj.times.clone(),
        zbar: Vec::with_capacity(traj.len()),
        etabar: Vec::with_capacity(traj.len()),
        pibar: Vec::with_capacity(traj.len()),
        varthetabar: Vec::with_capacity(traj.len()),
        e: e.to_vec(),
    };
    let mut zs = vec![0.0; nz];
    let mut th = vec![0.0; n];
    for (i, &t) in traj.times.iter().enumerate() {
        oracle.z_ss.eval_into(t, &mut zs);
        oracle.theta_ss.eval_into(t, &mut th);
        view.zbar.push((0..nz).map(|j| z[j][i] - zs[j]).collect());
        view.etabar.push((0..n).map(|j| eta[j][i] - th[j]).collect());
        view.varthetabar
            .push((0..n).map(|j| vt[j][i] - oracle.varrho[j]).collect());
        view.pibar
            .push(pi[i] - oracle.varpi_ss.eval_scalar(t) - e[i] / b);
    }
    Ok(view)
}
