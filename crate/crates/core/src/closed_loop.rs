//! The stacked closed loop `(z, y, v, η, π, ϑ)` as a vector field.

use std::sync::Arc;

use crate::averaging::{AveragedField, DitherPair, SinCarrier, VectorField};
use crate::control::{
    averaged_feedback, compensator_rhs_into, dither, dither_quadratures, ControlError, ControllerVariant,
    DitherConfig,
};
use crate::internal_model::{chi_s, InternalModel};
use crate::plant::{plant_rhs_into, Exosystem, PlantModel};
use crate::sim::Scenario;

/// Offsets of the blocks in the stacked state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub nz: usize,
    pub nv: usize,
    pub n: usize,
}

impl StateLayout {
    pub fn dim(&self) -> usize {
        self.nz + 1 + self.nv + 2 * self.n + 1
    }

    pub fn y(&self) -> usize {
        self.nz
    }

    pub fn v(&self) -> std::ops::Range<usize> {
        self.nz + 1..self.nz + 1 + self.nv
    }

    pub fn eta(&self) -> std::ops::Range<usize> {
        let s = self.nz + 1 + self.nv;
        s..s + self.n
    }

    pub fn pi(&self) -> usize {
        self.nz + 1 + self.nv + self.n
    }

    pub fn vartheta(&self) -> std::ops::Range<usize> {
        let s = self.pi() + 1;
        s..s + self.n
    }

    /// `z1.., y, v1.., eta1.., pi, vt1..`
    pub fn state_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (1..=self.nz).map(|i| format!("z{i}")).collect();
        names.push("y".into());
        names.extend((1..=self.nv).map(|i| format!("v{i}")));
        names.extend((1..=self.n).map(|i| format!("eta{i}")));
        names.push("pi".into());
        names.extend((1..=self.n).map(|i| format!("vt{i}")));
        names
    }

    /// Stacks the blocks into one state vector.
    pub fn pack(&self, z: &[f64], y: f64, v: &[f64], eta: &[f64], pi: f64, vartheta: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.dim());
        x.extend_from_slice(z);
        x.push(y);
        x.extend_from_slice(v);
        x.extend_from_slice(eta);
        x.push(pi);
        x.extend_from_slice(vartheta);
        x
    }
}

/// What replaces the probing part of `u`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    /// The actual dither `√(αω) cos(ωt + …)`.
    Dithered,
    /// The equivalent averaged feedback.
    Averaged,
    /// No probing at all (the drift of the dithered system).
    Drift,
    /// Input vector field times the `cos(ωt)` quadrature.
    DitherCos,
    /// Input vector field times the `sin(ωt)` quadrature.
    DitherSin,
}

/// Everything the closed-loop right-hand side reads.
#[derive(Debug, Clone)]
pub struct LoopCore {
    pub plant: Arc<dyn PlantModel>,
    pub exo: Exosystem,
    pub model: InternalModel,
    pub cfg: DitherConfig,
    pub variant: ControllerVariant,
    pub layout: StateLayout,
}

impl LoopCore {
    pub fn new(
        plant: Arc<dyn PlantModel>,
        exo: Exosystem,
        model: InternalModel,
        cfg: DitherConfig,
        variant: ControllerVariant,
    ) -> Result<Self, ControlError> {
        cfg.validate(variant)?;
        let layout = StateLayout {
            nz: plant.nz(),
            nv: exo.dim(),
            n: model.n(),
        };
        Ok(Self {
            plant,
            exo,
            model,
            cfg,
            variant,
            layout,
        })
    }

    pub fn error(&self, x: &[f64]) -> f64 {
        x[self.layout.y()] - self.plant.q(&x[self.layout.v()])
    }

    fn probe(&self, x: &[f64], t: f64, kind: FieldKind) -> f64 {
        let e = self.error(x);
        match kind {
            FieldKind::Dithered => dither(t, e, &self.cfg, self.variant),
            FieldKind::Averaged => {
                let b = self.plant.b(&x[self.layout.v()]);
                averaged_feedback(e, b, &self.cfg, self.variant)
            }
            FieldKind::Drift => 0.0,
            FieldKind::DitherCos => dither_quadratures(e, &self.cfg, self.variant).0,
            FieldKind::DitherSin => dither_quadratures(e, &self.cfg, self.variant).1,
        }
    }

    /// Plant input `u` at `(x, t)` for the given right-hand side.
    pub fn input(&self, x: &[f64], t: f64, kind: FieldKind) -> f64 {
        let l = &self.layout;
        let ff = match kind {
            FieldKind::DitherCos | FieldKind::DitherSin => 0.0,
            _ => chi_s(&x[l.eta()], &x[l.vartheta()], &self.model),
        };
        ff + self.probe(x, t, kind)
    }

    pub fn eval_into(&self, x: &[f64], t: f64, kind: FieldKind, out: &mut [f64]) {
        let l = self.layout;
        let v = &x[l.v()];
        if matches!(kind, FieldKind::DitherCos | FieldKind::DitherSin) {
            // the input vector field (0, b(v), 0, 0, 1, 0) scaled by the quadrature
            let q = self.probe(x, t, kind);
            out.fill(0.0);
            out[l.y()] = self.plant.b(v) * q;
            out[l.pi()] = q;
            return;
        }
        let u = self.input(x, t, kind);
        let (head, tail) = out.split_at_mut(l.nz);
        tail[0] = plant_rhs_into(&x[..l.nz], x[l.y()], v, u, self.plant.as_ref(), head);
        self.exo.s.mul_vec_into(v, &mut out[l.v()]);
        let (eta_dot, rest) = out[l.eta().start..].split_at_mut(l.n);
        let (pi_dot, vt_dot) = rest.split_at_mut(1);
        compensator_rhs_into(
            &x[l.eta()],
            x[l.pi()],
            &x[l.vartheta()],
            u,
            &self.model,
            eta_dot,
            &mut pi_dot[0],
            vt_dot,
        );
    }
}

/// One right-hand side of the closed loop.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub core: Arc<LoopCore>,
    pub kind: FieldKind,
}

impl ClosedLoop {
    pub fn new(core: Arc<LoopCore>, kind: FieldKind) -> Self {
        Self { core, kind }
    }
}

impl VectorField for ClosedLoop {
    fn dim(&self) -> usize {
        self.core.layout.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.core.eval_into(x, t, self.kind, out)
    }
}

/// Closed loop with the dither replaced by its averaged feedback,
/// `−kα b ρ(e)² e` (A) or `−kα b ρ(e²) e` (B) entering wherever `u` does.
pub fn averaged_closed_loop(scenario: &Scenario) -> ClosedLoop {
    scenario.field(FieldKind::Averaged)
}

/// The dither as a cos/sin pair of input vector fields.
pub fn dither_pair(core: &Arc<LoopCore>) -> DitherPair {
    DitherPair {
        cos_field: Arc::new(ClosedLoop::new(core.clone(), FieldKind::DitherCos)),
        sin_field: Arc::new(ClosedLoop::new(core.clone(), FieldKind::DitherSin)),
        carrier: SinCarrier::Plus,
    }
}

/// Bracket-based average of the dithered loop, for cross-checking
/// [`averaged_closed_loop`].
pub fn numeric_averaged_closed_loop(core: &Arc<LoopCore>) -> AveragedField {
    AveragedField {
        drift: Arc::new(ClosedLoop::new(core.clone(), FieldKind::Drift)),
        pairs: vec![dither_pair(core)],
        omega: core.cfg.omega,
    }
}
