//! Extremum-seeking output-feedback laws and the shared dynamic compensator.
//!
//! Variant A: `u = √(αω) cos(ωt + k e²) ρ(e) + χ_s(η, ϑ)`
//!
//! Variant B: `u = √(αω) cos(ωt + k ∫₀^{e²} ρ(s) ds) + χ_s(η, ϑ)`
//!
//! Only `e` is measured; the sign of the input gain never enters.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::internal_model::{chi_s, InternalModel};
use crate::linalg::dot;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("{name} must be finite and positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("rho needs a constant term >= 1 and non-negative coefficients, got {0:?}")]
    InvalidRho(Vec<f64>),
    #[error("variant A evaluates rho at e, so rho must be even in its argument: {0:?}")]
    OddRhoForVariantA(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControllerVariant {
    A,
    B,
}

/// Polynomial gain `ρ(x) = Σ cᵢ xⁱ`, coefficients constant term first.
///
/// Non-negative coefficients with `c₀ ≥ 1` give `ρ(x) ≥ 1` for `x ≥ 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rho {
    /// Name of the argument as written in the scenario (`"e"` or `"s"`); a
    /// label only, the variant decides what is substituted.
    #[serde(default = "Rho::default_arg")]
    pub arg: String,
    pub coeffs: Vec<f64>,
}

impl Rho {
    fn default_arg() -> String {
        "e".into()
    }

    pub fn new(coeffs: Vec<f64>) -> Result<Self, ControlError> {
        let rho = Self {
            arg: Self::default_arg(),
            coeffs,
        };
        rho.validate()?;
        Ok(rho)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let ok = !self.coeffs.is_empty()
            && self.coeffs[0] >= 1.0
            && self.coeffs.iter().all(|c| c.is_finite() && *c >= 0.0);
        if ok {
            Ok(())
        } else {
            Err(ControlError::InvalidRho(self.coeffs.clone()))
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    /// `R(x) = ∫₀ˣ ρ(s) ds`.
    pub fn integral(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (i, c)| acc * x + c / (i + 1) as f64)
            * x
    }

    fn is_even(&self) -> bool {
        self.coeffs.iter().skip(1).step_by(2).all(|c| *c == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DitherConfig {
    pub alpha: f64,
    pub omega: f64,
    pub k: f64,
    pub rho: Rho,
}

impl DitherConfig {
    pub fn validate(&self, variant: ControllerVariant) -> Result<(), ControlError> {
        for (name, value) in [("alpha", self.alpha), ("omega", self.omega), ("k", self.k)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ControlError::NonPositive { name, value });
            }
        }
        self.rho.validate()?;
        if variant == ControllerVariant::A && !self.rho.is_even() {
            return Err(ControlError::OddRhoForVariantA(self.rho.coeffs.clone()));
        }
        Ok(())
    }

    pub fn amplitude(&self) -> f64 {
        (self.alpha * self.omega).sqrt()
    }

    /// Dither period `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.omega
    }
}

/// Compensator state `(η, π, ϑ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensatorState {
    pub eta: Vec<f64>,
    pub pi: f64,
    pub vartheta: Vec<f64>,
}

impl CompensatorState {
    pub fn zeros(n: usize) -> Self {
        Self {
            eta: vec![0.0; n],
            pi: 0.0,
            vartheta: vec![0.0; n],
        }
    }
}

/// Phase offset and envelope of the dither at error `e`.
fn phase_and_envelope(e: f64, cfg: &DitherConfig, variant: ControllerVariant) -> (f64, f64) {
    match variant {
        ControllerVariant::A => (cfg.k * e * e, cfg.rho.eval(e)),
        ControllerVariant::B => (cfg.k * cfg.rho.integral(e * e), 1.0),
    }
}

/// The probing part of `u` alone.
pub fn dither(t: f64, e: f64, cfg: &DitherConfig, variant: ControllerVariant) -> f64 {
    let (phase, env) = phase_and_envelope(e, cfg, variant);
    cfg.amplitude() * (cfg.omega * t + phase).cos() * env
}

/// Dither split over the carriers: `dither = c·cos(ωt) + s·sin(ωt)`.
pub fn dither_quadratures(e: f64, cfg: &DitherConfig, variant: ControllerVariant) -> (f64, f64) {
    let (phase, env) = phase_and_envelope(e, cfg, variant);
    let a = cfg.amplitude() * env;
    let (s, c) = phase.sin_cos();
    (a * c, -a * s)
}

/// Input that reproduces the Lie-bracket average of the dither:
/// `−kα b ρ(e)² e` (A) or `−kα b ρ(e²) e` (B). Entering through `b`, it
/// gives the error feedback `−kα b² (…) e`, negative whatever the sign of `b`.
pub fn averaged_feedback(e: f64, b: f64, cfg: &DitherConfig, variant: ControllerVariant) -> f64 {
    let gain = match variant {
        ControllerVariant::A => {
            let r = cfg.rho.eval(e);
            r * r
        }
        ControllerVariant::B => cfg.rho.eval(e * e),
    };
    -cfg.k * cfg.alpha * b * gain * e
}

pub fn control_input(
    t: f64,
    e: f64,
    comp: &CompensatorState,
    cfg: &DitherConfig,
    variant: ControllerVariant,
    model: &InternalModel,
) -> f64 {
    dither(t, e, cfg, variant) + chi_s(&comp.eta, &comp.vartheta, model)
}

/// `(η̇, π̇, ϑ̇) = (Mη + Nπ, −π + u, −Θη(ηᵀϑ − π))`.
pub fn compensator_rhs(comp: &CompensatorState, u: f64, model: &InternalModel) -> CompensatorState {
    let n = model.n();
    let mut d = CompensatorState::zeros(n);
    compensator_rhs_into(
        &comp.eta,
        comp.pi,
        &comp.vartheta,
        u,
        model,
        &mut d.eta,
        &mut d.pi,
        &mut d.vartheta,
    );
    d
}

#[allow(clippy::too_many_arguments)]
pub fn compensator_rhs_into(
    eta: &[f64],
    pi: f64,
    vartheta: &[f64],
    u: f64,
    model: &InternalModel,
    eta_dot: &mut [f64],
    pi_dot: &mut f64,
    vartheta_dot: &mut [f64],
) {
    model.eta_dot_into(eta, pi, eta_dot);
    *pi_dot = -pi + u;
    let resid = dot(eta, vartheta) - pi;
    for (d, e) in vartheta_dot.iter_mut().zip(eta) {
        *d = -model.theta_gain * e * resid;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::internal_model::{chi, GeneratorSpec};
    use crate::oracle::example_steady_input;
    use std::f64::consts::PI;

    fn cfg(coeffs: Vec<f64>) -> DitherConfig {
        DitherConfig {
            alpha: 1.5,
            omega: 200.0,
            k: 2.0,
            rho: Rho::new(coeffs).unwrap(),
        }
    }

    fn model() -> (GeneratorSpec, InternalModel) {
        let s = PI / 12.0;
        let gen = GeneratorSpec::from_frequencies(&[s, 3.0 * s], false).unwrap();
        let m = InternalModel::new(&gen, vec![24.0, 50.0, 35.0, 10.0], 10.0, 1e4).unwrap();
        (gen, m)
    }

    #[test]
    fn rho_validation() {
        assert!(Rho::new(vec![1.0, 0.0, 1.0]).is_ok());
        assert!(Rho::new(vec![0.5]).is_err());
        assert!(Rho::new(vec![1.0, -1.0]).is_err());
        assert!(Rho::new(vec![]).is_err());
        let c = cfg(vec![20.0, 1.0]);
        assert!(c.validate(ControllerVariant::B).is_ok());
        assert!(matches!(
            c.validate(ControllerVariant::A),
            Err(ControlError::OddRhoForVariantA(_))
        ));
        let mut bad = cfg(vec![1.0]);
        bad.omega = 0.0;
        assert!(bad.validate(ControllerVariant::A).is_err());
    }

    #[test]
    fn rho_at_least_one_on_grid() {
        for coeffs in [vec![1.0, 0.0, 1.0], vec![20.0, 0.0, 1.0], vec![20.0, 1.0]] {
            let r = Rho::new(coeffs).unwrap();
            assert!((0..1000).all(|i| r.eval(i as f64 * 0.01) >= 1.0));
        }
    }

    #[test]
    fn rho_integral_closed_form() {
        let r = Rho::new(vec![20.0, 1.0]).unwrap();
        assert!((r.integral(1.0) - 20.5).abs() < 1e-15);
        let r = Rho::new(vec![20.0, 0.0, 1.0]).unwrap();
        // 20x + x³/3
        assert!((r.integral(2.0) - (40.0 + 8.0 / 3.0)).abs() < 1e-13);
    }

    #[test]
    fn input_at_origin_is_full_amplitude() {
        let (_, m) = model();
        let c = cfg(vec![1.0, 0.0, 1.0]);
        let u = control_input(0.0, 0.0, &CompensatorState::zeros(4), &c, ControllerVariant::A, &m);
        assert!((u - c.amplitude() * c.rho.eval(0.0)).abs() < 1e-12);
    }

    #[test]
    fn variant_b_phase_increment() {
        let c = cfg(vec![20.0, 1.0]);
        // at ωt = 0: cos(20.5 k)
        let d = dither(0.0, 1.0, &c, ControllerVariant::B);
        assert!((d - c.amplitude() * (20.5 * c.k).cos()).abs() < 1e-12);
    }

    #[test]
    fn variant_a_envelope() {
        let c = cfg(vec![1.0, 0.0, 1.0]);
        for e in [-1.5, -0.2, 0.0, 0.8] {
            let env = (0..400)
                .map(|i| dither(i as f64 * c.period() / 400.0, e, &c, ControllerVariant::A).abs())
                .fold(0.0, f64::max);
            let expect = c.amplitude() * (e * e + 1.0);
            assert!((env - expect).abs() / expect < 1e-3);
        }
    }

    #[test]
    fn variants_coincide_for_unit_rho_at_zero_error() {
        let c = cfg(vec![1.0]);
        for i in 0..20 {
            let t = i as f64 * 0.013;
            let a = dither(t, 0.0, &c, ControllerVariant::A);
            let b = dither(t, 0.0, &c, ControllerVariant::B);
            assert_eq!(a, b);
        }
        // phases agree for any e when ρ ≡ 1; only the envelope differs (and it is 1)
        let e = 0.7;
        let a = dither(0.3, e, &c, ControllerVariant::A);
        let b = dither(0.3, e, &c, ControllerVariant::B);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn quadratures_reassemble_dither() {
        let c = cfg(vec![20.0, 0.0, 1.0]);
        for variant in [ControllerVariant::A, ControllerVariant::B] {
            for i in 0..50 {
                let t = i as f64 * 0.0071;
                let e = (i as f64 * 0.3).sin();
                let (qc, qs) = dither_quadratures(e, &c, variant);
                let re = qc * (c.omega * t).cos() + qs * (c.omega * t).sin();
                assert!((re - dither(t, e, &c, variant)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dither_has_zero_mean() {
        let c = cfg(vec![1.0, 0.0, 1.0]);
        let steps = 4096;
        let h = c.period() / steps as f64;
        for variant in [ControllerVariant::A, ControllerVariant::B] {
            for e in [0.0, 0.4, -1.1] {
                // trapezoid is exact for trigonometric polynomials over a period
                let integral: f64 = (0..steps)
                    .map(|i| dither(i as f64 * h, e, &c, variant) * h)
                    .sum();
                assert!(integral.abs() <= 1e-9 * c.amplitude() * c.period());
            }
        }
    }

    #[test]
    fn averaged_feedback_sign_independent_of_b() {
        let c = cfg(vec![1.0, 0.0, 1.0]);
        for b in [-2.0, -1.0, 0.5, 3.0] {
            for e in [-0.9, 0.3] {
                for variant in [ControllerVariant::A, ControllerVariant::B] {
                    // effective error feedback b·u_avg has sign opposite to e
                    let fb = b * averaged_feedback(e, b, &c, variant);
                    assert!(fb * e < 0.0);
                }
            }
        }
    }

    #[test]
    fn compensator_examples() {
        let (_, m) = model();
        let d = compensator_rhs(&CompensatorState::zeros(4), 0.0, &m);
        assert_eq!(d, CompensatorState::zeros(4));
        let comp = CompensatorState {
            eta: vec![1.0, 0.0, 0.0, 0.0],
            pi: 1.0,
            vartheta: vec![0.0; 4],
        };
        let d = compensator_rhs(&comp, 0.0, &m);
        assert_eq!(d.vartheta, vec![10.0, 0.0, 0.0, 0.0]);
        assert_eq!(d.pi, -1.0);
    }

    #[test]
    fn compensator_tracks_oracle_steady_state() {
        let (_, mut m) = model();
        let s = PI / 12.0;
        let ss = example_steady_input(s, &[9.0, 1.0], -1.0, &[1.0, 0.0], &m).unwrap();
        m = m.with_sat_radius(crate::oracle::default_sat_radius(&ss)).unwrap();
        let theta_dot = ss.theta_ss.derivative();
        for i in 0..200 {
            let t = i as f64 * 0.4;
            let comp = CompensatorState {
                eta: ss.theta_ss.eval(t),
                pi: ss.varpi_ss.eval_scalar(t),
                vartheta: ss.varrho.clone(),
            };
            let u = ss.u_ss.eval_scalar(t);
            let d = compensator_rhs(&comp, u, &m);
            for (a, b) in d.eta.iter().zip(theta_dot.eval(t)) {
                assert!((a - b).abs() <= 1e-8);
            }
            // estimator at rest on the steady state
            assert!(d.vartheta.iter().all(|x| x.abs() < 1e-8));
            // saturated feedforward equals the steady-state input there
            assert!((chi_s(&comp.eta, &comp.vartheta, &m) - u).abs() < 1e-8);
            assert!((chi(&comp.eta, &comp.vartheta, &m.m) - u).abs() < 1e-8);
        }
    }
}
