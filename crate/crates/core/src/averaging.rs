//! Lie-bracket averaging for dithered control-affine systems
//!
//! ```text
//! ẋ = f(x) + Σᵢ g₁ᵢ(x) cos(ωt) ± g₂ᵢ(x) sin(ωt)
//! ```
//!
//! with amplitudes of order `√ω` carried inside `g`. The averaged system is
//! `ẋ = f(x) ± Σᵢ [g₁ᵢ, g₂ᵢ](x) / (2ω)`.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::linalg::Matrix;
use crate::sim::{check_state, Rk4, SimError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AveragingError {
    #[error("vector fields have dimensions {0} and {1}")]
    DimensionMismatch(usize, usize),
    #[error("non-finite value in vector field evaluation")]
    NonFinite,
    #[error("integration diverged for omega = {omega} at t = {t}")]
    IntegrationDiverged { omega: f64, t: f64 },
    #[error("dither frequencies must be positive and increasing")]
    InvalidOmegas,
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Time-varying vector field `x ↦ f(x, t)`. Implementations must be pure.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]);

    /// Analytic Jacobian, if known.
    fn jacobian(&self, _x: &[f64], _t: f64) -> Option<Matrix> {
        None
    }

    fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, t, &mut out);
        out
    }
}

type EvalFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;
type JacFn = dyn Fn(&[f64], f64) -> Matrix + Send + Sync;

/// Vector field from closures.
pub struct FnField {
    dim: usize,
    eval: Box<EvalFn>,
    jac: Option<Box<JacFn>>,
}

impl FnField {
    pub fn new(dim: usize, eval: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static) -> Self {
        Self {
            dim,
            eval: Box::new(eval),
            jac: None,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64], f64) -> Matrix + Send + Sync + 'static) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    /// `x ↦ A x` with its exact Jacobian.
    pub fn linear(a: Matrix) -> Self {
        let dim = a.rows();
        let a2 = a.clone();
        Self::new(dim, move |x, _, out| a.mul_vec_into(x, out)).with_jacobian(move |_, _| a2.clone())
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _, out| out.fill(0.0))
    }
}

impl std::fmt::Debug for FnField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnField")
            .field("dim", &self.dim)
            .field("analytic_jacobian", &self.jac.is_some())
            .finish()
    }
}

impl VectorField for FnField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (self.eval)(x, t, out)
    }

    fn jacobian(&self, x: &[f64], t: f64) -> Option<Matrix> {
        self.jac.as_ref().map(|j| j(x, t))
    }
}

impl<T: VectorField + ?Sized> VectorField for Arc<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        (**self).eval_into(x, t, out)
    }

    fn jacobian(&self, x: &[f64], t: f64) -> Option<Matrix> {
        (**self).jacobian(x, t)
    }
}

/// Richardson-extrapolated central-difference Jacobian, step
/// `2e-6·(1 + |xⱼ|)` per coordinate. Truncation error is fourth order, which
/// matters for fast phases such as `cos(k e²)` with large `k`.
pub fn fd_jacobian<F: VectorField + ?Sized>(field: &F, x: &[f64], t: f64) -> Matrix {
    let n = field.dim();
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; n];
    let mut fm = vec![0.0; n];
    let mut data = vec![0.0; n * n];
    let mut central = |xp: &mut Vec<f64>, j: usize, h: f64, col: &mut [f64]| {
        xp[j] = x[j] + h;
        field.eval_into(xp, t, &mut fp);
        xp[j] = x[j] - h;
        field.eval_into(xp, t, &mut fm);
        xp[j] = x[j];
        for i in 0..n {
            col[i] = (fp[i] - fm[i]) / (2.0 * h);
        }
    };
    let mut wide = vec![0.0; n];
    let mut narrow = vec![0.0; n];
    for j in 0..n {
        let h = 2e-6 * (1.0 + x[j].abs());
        central(&mut xp, j, h, &mut wide);
        central(&mut xp, j, 0.5 * h, &mut narrow);
        for i in 0..n {
            data[i * n + j] = (4.0 * narrow[i] - wide[i]) / 3.0;
        }
    }
    Matrix::new(n, n, data).unwrap_or_else(|_| Matrix::zeros(n, n).scale(f64::NAN))
}

fn jacobian_of<F: VectorField + ?Sized>(field: &F, x: &[f64], t: f64) -> Matrix {
    field.jacobian(x, t).unwrap_or_else(|| fd_jacobian(field, x, t))
}

/// `[gᵢ, gⱼ](x) = ∂gⱼ/∂x · gᵢ − ∂gᵢ/∂x · gⱼ`.
pub fn lie_bracket<A, B>(gi: &A, gj: &B, x: &[f64], t: f64) -> Result<Vec<f64>, AveragingError>
where
    A: VectorField + ?Sized,
    B: VectorField + ?Sized,
{
    if gi.dim() != gj.dim() {
        return Err(AveragingError::DimensionMismatch(gi.dim(), gj.dim()));
    }
    if x.len() != gi.dim() {
        return Err(AveragingError::DimensionMismatch(x.len(), gi.dim()));
    }
    let vi = gi.eval(x, t);
    let vj = gj.eval(x, t);
    let a = jacobian_of(gj, x, t).mul_vec(&vi);
    let b = jacobian_of(gi, x, t).mul_vec(&vj);
    let out: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(AveragingError::NonFinite)
    }
}

/// Carrier of the second field of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinCarrier {
    /// `+sin(ωt)`
    Plus,
    /// `−sin(ωt)`
    Minus,
}

impl SinCarrier {
    fn sign(self) -> f64 {
        match self {
            SinCarrier::Plus => 1.0,
            SinCarrier::Minus => -1.0,
        }
    }
}

/// `g_cos(x) cos(ωt) ± g_sin(x) sin(ωt)`.
#[derive(Clone)]
pub struct DitherPair {
    pub cos_field: Arc<dyn VectorField>,
    pub sin_field: Arc<dyn VectorField>,
    pub carrier: SinCarrier,
}

impl DitherPair {
    pub fn new(
        cos_field: Arc<dyn VectorField>,
        sin_field: Arc<dyn VectorField>,
        carrier: SinCarrier,
    ) -> Result<Self, AveragingError> {
        if cos_field.dim() != sin_field.dim() {
            return Err(AveragingError::DimensionMismatch(cos_field.dim(), sin_field.dim()));
        }
        Ok(Self {
            cos_field,
            sin_field,
            carrier,
        })
    }

    /// Same fields with the order swapped (the correction flips sign).
    pub fn swapped(&self) -> Self {
        Self {
            cos_field: self.sin_field.clone(),
            sin_field: self.cos_field.clone(),
            carrier: self.carrier,
        }
    }
}

/// The fast time-varying system itself.
#[derive(Clone)]
pub struct DitheredField {
    pub drift: Arc<dyn VectorField>,
    pub pairs: Vec<DitherPair>,
    pub omega: f64,
}

impl VectorField for DitheredField {
    fn dim(&self) -> usize {
        self.drift.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.drift.eval_into(x, t, out);
        let (s, c) = (self.omega * t).sin_cos();
        let mut buf = vec![0.0; out.len()];
        for p in &self.pairs {
            p.cos_field.eval_into(x, t, &mut buf);
            out.iter_mut().zip(&buf).for_each(|(o, g)| *o += c * g);
            p.sin_field.eval_into(x, t, &mut buf);
            let k = p.carrier.sign() * s;
            out.iter_mut().zip(&buf).for_each(|(o, g)| *o += k * g);
        }
    }
}

/// `f + Σ ±[g_cos, g_sin]/(2ω)`, the value of
/// `(1/T)∫₀ᵀ∫₀^θ cos(ωθ) sin(ωτ) dτ dθ` being `1/(2ω)`.
#[derive(Clone)]
pub struct AveragedField {
    pub drift: Arc<dyn VectorField>,
    pub pairs: Vec<DitherPair>,
    pub omega: f64,
}

impl AveragedField {
    pub fn correction(&self, x: &[f64], t: f64) -> Result<Vec<f64>, AveragingError> {
        let mut acc = vec![0.0; self.dim()];
        for p in &self.pairs {
            let br = lie_bracket(p.cos_field.as_ref(), p.sin_field.as_ref(), x, t)?;
            let w = p.carrier.sign() / (2.0 * self.omega);
            acc.iter_mut().zip(&br).for_each(|(a, b)| *a += w * b);
        }
        Ok(acc)
    }
}

impl VectorField for AveragedField {
    fn dim(&self) -> usize {
        self.drift.dim()
    }

    fn eval_into(&self, x: &[f64], t: f64, out: &mut [f64]) {
        self.drift.eval_into(x, t, out);
        match self.correction(x, t) {
            Ok(c) => out.iter_mut().zip(&c).for_each(|(o, v)| *o += v),
            Err(_) => out.fill(f64::NAN),
        }
    }
}

pub fn averaged_field(
    drift: Arc<dyn VectorField>,
    pairs: Vec<DitherPair>,
    omega: f64,
) -> Result<AveragedField, AveragingError> {
    if !(omega.is_finite() && omega > 0.0) {
        return Err(AveragingError::InvalidOmegas);
    }
    for p in &pairs {
        if p.cos_field.dim() != drift.dim() {
            return Err(AveragingError::DimensionMismatch(p.cos_field.dim(), drift.dim()));
        }
    }
    Ok(AveragedField {
        drift,
        pairs,
        omega,
    })
}

/// Deviation between dithered and averaged flows from the same `(0, x₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Deviation {
    pub omega: f64,
    pub sup: f64,
    pub final_dev: f64,
}

/// Integrates `(dithered, averaged)` side by side with a common step.
pub fn trajectory_deviation<D, A>(
    dithered: &D,
    averaged: &A,
    x0: &[f64],
    horizon: f64,
    dt: f64,
    omega: f64,
) -> Result<Deviation, AveragingError>
where
    D: VectorField + ?Sized,
    A: VectorField + ?Sized,
{
    if dithered.dim() != averaged.dim() {
        return Err(AveragingError::DimensionMismatch(dithered.dim(), averaged.dim()));
    }
    let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let mut xd = x0.to_vec();
    let mut xa = x0.to_vec();
    let mut rd = Rk4::new(x0.len());
    let mut ra = Rk4::new(x0.len());
    let mut sup: f64 = 0.0;
    let mut last = 0.0;
    let diverged = |e: SimError| match e {
        SimError::IntegrationDiverged { t, .. } | SimError::NonFinite { t } => {
            AveragingError::IntegrationDiverged { omega, t }
        }
        other => other.into(),
    };
    for i in 0..steps {
        let t = i as f64 * dt;
        rd.step(dithered, &mut xd, t, dt);
        ra.step(averaged, &mut xa, t, dt);
        check_state(&xd, t + dt).map_err(diverged)?;
        check_state(&xa, t + dt).map_err(diverged)?;
        last = xd
            .iter()
            .zip(&xa)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        sup = sup.max(last);
    }
    Ok(Deviation {
        omega,
        sup,
        final_dev: last,
    })
}

/// Runs [`trajectory_deviation`] for each `ω` in parallel, with
/// `steps_per_period` RK4 steps per dither period. Results follow `omegas`.
pub fn convergence_test<D, A, B>(
    dithered_for: B,
    averaged: &A,
    x0: &[f64],
    horizon: f64,
    omegas: &[f64],
    steps_per_period: usize,
) -> Result<Vec<Deviation>, AveragingError>
where
    B: Fn(f64) -> D + Sync,
    D: VectorField,
    A: VectorField + ?Sized,
{
    let increasing = omegas.windows(2).all(|w| w[1] > w[0]);
    if omegas.is_empty() || !increasing || omegas.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(AveragingError::InvalidOmegas);
    }
    omegas
        .par_iter()
        .map(|&omega| {
            let dt = 2.0 * PI / (omega * steps_per_period.max(1) as f64);
            let field = dithered_for(omega);
            trajectory_deviation(&field, averaged, x0, horizon, dt, omega)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn commutator_example() {
        let a = mat(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let b = mat(&[&[0.0, 0.0], &[1.0, 0.0]]);
        let gi = FnField::linear(a);
        let gj = FnField::linear(b);
        let x = [0.7, -1.3];
        let br = lie_bracket(&gi, &gj, &x, 0.0).unwrap();
        // (BA − AB) x = diag(−1, 1) x
        assert_eq!(br, vec![-0.7, -1.3]);
    }

    #[test]
    fn commutator_matches_fd() {
        let a = mat(&[&[0.3, 1.0, -0.2], &[0.0, -1.0, 0.5], &[2.0, 0.1, 0.0]]);
        let b = mat(&[&[0.0, 0.4, 1.0], &[1.0, 0.0, 0.0], &[-0.5, 0.2, 0.3]]);
        let (ac, bc) = (a.clone(), b.clone());
        let gi = FnField::new(3, move |x, _, o| ac.mul_vec_into(x, o));
        let gj = FnField::new(3, move |x, _, o| bc.mul_vec_into(x, o));
        let x = [0.2, -0.4, 1.1];
        let fd = lie_bracket(&gi, &gj, &x, 0.0).unwrap();
        let exact = b.matmul(&a).unwrap().sub(&a.matmul(&b).unwrap()).mul_vec(&x);
        for (p, q) in fd.iter().zip(&exact) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    fn nonlinear_pair() -> (FnField, FnField) {
        let g1 = FnField::new(2, |x, _, o| {
            o[0] = x[1].sin() + x[0] * x[0];
            o[1] = x[0] * x[1];
        });
        let g2 = FnField::new(2, |x, _, o| {
            o[0] = (x[0] - x[1]).cos();
            o[1] = x[0].exp() * 0.5;
        });
        (g1, g2)
    }

    #[test]
    fn bracket_of_field_with_itself_vanishes() {
        let (g1, _) = nonlinear_pair();
        let br = lie_bracket(&g1, &g1, &[0.3, 0.9], 0.0).unwrap();
        assert!(br.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn bracket_dimension_checked() {
        let g1 = FnField::zero(2);
        let g2 = FnField::zero(3);
        assert!(matches!(
            lie_bracket(&g1, &g2, &[0.0, 0.0], 0.0),
            Err(AveragingError::DimensionMismatch(2, 3))
        ));
    }

    proptest! {
        #[test]
        fn bracket_antisymmetric(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0) {
            let (g1, g2) = nonlinear_pair();
            let a = lie_bracket(&g1, &g2, &[x0, x1], 0.0).unwrap();
            let b = lie_bracket(&g2, &g1, &[x0, x1], 0.0).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p + q).abs() < 1e-6);
            }
        }

        #[test]
        fn bracket_bilinear(x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, s in -3.0f64..3.0) {
            let (g1, g2) = nonlinear_pair();
            let g1s = FnField::new(2, move |x, t, o| {
                g1.eval_into(x, t, o);
                o.iter_mut().for_each(|v| *v *= s);
            });
            let (g1, _) = nonlinear_pair();
            let a = lie_bracket(&g1s, &g2, &[x0, x1], 0.0).unwrap();
            let b = lie_bracket(&g1, &g2, &[x0, x1], 0.0).unwrap();
            for (p, q) in a.iter().zip(&b) {
                prop_assert!((p - s * q).abs() < 1e-6);
            }
        }
    }

    /// `ẋ = √(αω) b ρ(x) cos(ωt + φ(x))` split on the carriers.
    fn scalar_toy(
        alpha: f64,
        k: f64,
        b: f64,
        omega: f64,
        env: fn(f64) -> f64,
        phase: fn(f64) -> f64,
    ) -> (Arc<dyn VectorField>, Vec<DitherPair>) {
        let amp = (alpha * omega).sqrt() * b;
        let gc = FnField::new(1, move |x, _, o| o[0] = amp * env(x[0]) * (k * phase(x[0])).cos());
        let gs = FnField::new(1, move |x, _, o| o[0] = -amp * env(x[0]) * (k * phase(x[0])).sin());
        let pair = DitherPair::new(Arc::new(gc), Arc::new(gs), SinCarrier::Plus).unwrap();
        (Arc::new(FnField::zero(1)), vec![pair])
    }

    fn rho_a(x: f64) -> f64 {
        x * x + 1.0
    }
    fn sq(x: f64) -> f64 {
        x * x
    }
    fn one(_: f64) -> f64 {
        1.0
    }
    // R(x²) for ρ(s) = s + 1
    fn r_of_sq(x: f64) -> f64 {
        let s = x * x;
        s + 0.5 * s * s
    }

    #[test]
    fn scalar_toy_variant_a() {
        let (alpha, k, b) = (1.5, 2.0, -1.0);
        for omega in [50.0, 400.0] {
            let (f, pairs) = scalar_toy(alpha, k, b, omega, rho_a, sq);
            let avg = averaged_field(f, pairs, omega).unwrap();
            for x in [-1.2, -0.3, 0.0, 0.5, 1.7] {
                let expect = -k * alpha * b * b * rho_a(x).powi(2) * x;
                let got = avg.eval(&[x], 0.0)[0];
                assert!((got - expect).abs() <= 1e-6 * (1.0 + expect.abs()), "{got} vs {expect}");
            }
        }
    }

    #[test]
    fn scalar_toy_variant_b() {
        let (alpha, k, b) = (0.8, 3.0, 2.0);
        let omega = 300.0;
        let (f, pairs) = scalar_toy(alpha, k, b, omega, one, r_of_sq);
        let avg = averaged_field(f, pairs, omega).unwrap();
        for x in [-1.0, -0.2, 0.4, 1.3] {
            let expect = -k * alpha * b * b * (x * x + 1.0) * x;
            let got = avg.eval(&[x], 0.0)[0];
            assert!((got - expect).abs() <= 1e-6 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn zero_dither_leaves_drift() {
        let drift: Arc<dyn VectorField> = Arc::new(FnField::new(2, |x, _, o| {
            o[0] = -x[1];
            o[1] = x[0].sin();
        }));
        let pair = DitherPair::new(Arc::new(FnField::zero(2)), Arc::new(FnField::zero(2)), SinCarrier::Minus)
            .unwrap();
        let avg = averaged_field(drift.clone(), vec![pair], 100.0).unwrap();
        let x = [0.4, 0.9];
        assert_eq!(avg.eval(&x, 0.0), drift.eval(&x, 0.0));
    }

    #[test]
    fn averaged_field_independent_of_omega() {
        let (alpha, k, b) = (1.0, 2.0, 1.0);
        for x in [-0.8, 0.3, 1.1] {
            let vals: Vec<f64> = [100.0, 200.0]
                .iter()
                .map(|&w| {
                    let (f, pairs) = scalar_toy(alpha, k, b, w, rho_a, sq);
                    averaged_field(f, pairs, w).unwrap().eval(&[x], 0.0)[0]
                })
                .collect();
            assert!((vals[0] - vals[1]).abs() <= 1e-9 * (1.0 + vals[0].abs()), "{vals:?}");
        }
    }

    #[test]
    fn swapping_pair_flips_correction() {
        let (f, pairs) = scalar_toy(1.0, 2.0, 1.0, 100.0, rho_a, sq);
        let swapped: Vec<_> = pairs.iter().map(DitherPair::swapped).collect();
        let a = averaged_field(f.clone(), pairs, 100.0).unwrap();
        let b = averaged_field(f, swapped, 100.0).unwrap();
        for x in [-0.5, 0.7] {
            let (ca, cb) = (a.correction(&[x], 0.0).unwrap(), b.correction(&[x], 0.0).unwrap());
            assert!((ca[0] + cb[0]).abs() < 1e-6 * (1.0 + ca[0].abs()));
        }
    }

    #[test]
    fn no_dither_means_no_deviation() {
        let drift: Arc<dyn VectorField> = Arc::new(FnField::new(1, |x, _, o| o[0] = -x[0]));
        let devs = convergence_test(
            |w| DitheredField {
                drift: drift.clone(),
                pairs: vec![],
                omega: w,
            },
            &drift,
            &[1.0],
            2.0,
            &[100.0, 400.0],
            32,
        )
        .unwrap();
        assert!(devs.iter().all(|d| d.sup == 0.0));
    }

    #[test]
    fn scalar_toy_deviation_decreases() {
        let (alpha, k, b) = (1.0, 1.0, -1.0);
        let (f, pairs) = scalar_toy(alpha, k, b, 1.0, rho_a, sq);
        let avg = averaged_field(f, pairs, 1.0).unwrap();
        let omegas = [100.0, 400.0, 1600.0];
        let devs = convergence_test(
            |w| {
                let (f, pairs) = scalar_toy(alpha, k, b, w, rho_a, sq);
                DitheredField {
                    drift: f,
                    pairs,
                    omega: w,
                }
            },
            &avg,
            &[1.0],
            3.0,
            &omegas,
            64,
        )
        .unwrap();
        for w in devs.windows(2) {
            assert!(w[1].sup < 0.7 * w[0].sup, "{devs:?}");
        }
    }

    #[test]
    fn omegas_must_increase() {
        let f = FnField::zero(1);
        let r = convergence_test(|_| FnField::zero(1), &f, &[0.0], 1.0, &[200.0, 100.0], 16);
        assert_eq!(r.unwrap_err(), AveragingError::InvalidOmegas);
    }
}
