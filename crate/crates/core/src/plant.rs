//! Output-feedback plant class and exosystem, plus the benchmark system.
//!
//! Plants have the form
//!
//! ```text
//! ż = F(w) z + G(y, v, w) y + D₁(v, w)
//! ẏ = H(w) z + K(y, v, w) y + b(v, w) u + D₂(v, w)
//! e = y − q(v, w)
//! ```
//!
//! driven by an exosystem `v̇ = S(σ) v`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, rotation_block, Matrix};

/// Largest `dim z` supported by the allocation-free right-hand side.
pub const MAX_NZ: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("non-finite value in plant evaluation")]
    NonFinite,
    #[error("F(w) is not Hurwitz")]
    NotMinimumPhase,
    #[error("b(v, w)² vanishes at v = {0:?}")]
    ZeroControlGain(Vec<f64>),
    #[error("{0} does not vanish at v = 0")]
    NonzeroAtOrigin(&'static str),
    #[error("exosystem spectrum is not simple and purely imaginary")]
    ExosystemSpectrum,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid exosystem frequency {0}")]
    InvalidSigma(f64),
}

/// `v̇ = S(σ) v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Exosystem {
    pub sigma: f64,
    pub s: Matrix,
    pub v0: Vec<f64>,
}

impl Exosystem {
    /// Single oscillator `S = [[0, σ], [−σ, 0]]`.
    pub fn planar(sigma: f64, v0: Vec<f64>) -> Result<Self, PlantError> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(PlantError::InvalidSigma(sigma));
        }
        if v0.len() != 2 {
            return Err(PlantError::Dimension(format!("v0 has {} entries, expected 2", v0.len())));
        }
        Ok(Self {
            sigma,
            s: rotation_block(sigma),
            v0,
        })
    }

    pub fn dim(&self) -> usize {
        self.s.rows()
    }

    pub fn period(&self) -> f64 {
        2.0 * PI / self.sigma
    }

    /// Assumption on the exosystem spectrum: simple, purely imaginary.
    pub fn check(&self) -> Result<(), PlantError> {
        if linalg::eig_imaginary_distinct(&self.s) {
            Ok(())
        } else {
            Err(PlantError::ExosystemSpectrum)
        }
    }
}

pub fn exosystem_rhs(v: &[f64], exo: &Exosystem) -> Vec<f64> {
    exo.s.mul_vec(v)
}

/// Evaluators of the plant class. Implementations must be pure.
pub trait PlantModel: Send + Sync + std::fmt::Debug {
    fn nz(&self) -> usize;
    fn f(&self) -> &Matrix;
    /// Writes `G(y, v, w)` into `out` (length `nz`).
    fn g(&self, y: f64, v: &[f64], out: &mut [f64]);
    /// Writes `D₁(v, w)` into `out` (length `nz`).
    fn d1(&self, v: &[f64], out: &mut [f64]);
    fn h(&self) -> &[f64];
    fn k(&self, y: f64, v: &[f64]) -> f64;
    fn b(&self, v: &[f64]) -> f64;
    fn d2(&self, v: &[f64]) -> f64;
    fn q(&self, v: &[f64]) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub z: Vec<f64>,
    pub y: f64,
}

/// `(ż, ẏ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantDerivative {
    pub z_dot: Vec<f64>,
    pub y_dot: f64,
}

pub fn plant_rhs(
    state: &PlantState,
    v: &[f64],
    u: f64,
    model: &dyn PlantModel,
) -> Result<PlantDerivative, PlantError> {
    let nz = model.nz();
    if state.z.len() != nz {
        return Err(PlantError::Dimension(format!(
            "z has {} entries, plant expects {nz}",
            state.z.len()
        )));
    }
    let mut z_dot = vec![0.0; nz];
    let y_dot = plant_rhs_into(&state.z, state.y, v, u, model, &mut z_dot);
    if !y_dot.is_finite() || z_dot.iter().any(|x| !x.is_finite()) {
        return Err(PlantError::NonFinite);
    }
    Ok(PlantDerivative { z_dot, y_dot })
}

/// Allocation-free core of [`plant_rhs`]; writes `ż` and returns `ẏ`.
pub fn plant_rhs_into(
    z: &[f64],
    y: f64,
    v: &[f64],
    u: f64,
    model: &dyn PlantModel,
    z_dot: &mut [f64],
) -> f64 {
    let nz = model.nz();
    assert!(nz <= MAX_NZ);
    let mut buf = [0.0; MAX_NZ];
    model.f().mul_vec_into(z, z_dot);
    model.g(y, v, &mut buf[..nz]);
    for i in 0..nz {
        z_dot[i] += buf[i] * y;
    }
    model.d1(v, &mut buf[..nz]);
    for i in 0..nz {
        z_dot[i] += buf[i];
    }
    linalg::dot(model.h(), z) + model.k(y, v) * y + model.b(v) * u + model.d2(v)
}

/// Benchmark plant with `z ∈ ℝ²`:
///
/// ```text
/// ż = −z + (sin²(y − v₁) y, y)
/// ẏ = z₂ − w₁ y − w₂ y³ + b u
/// e = y − v₁
/// ```
///
/// packaged as `F = −I₂`, `G = (sin²(y − v₁), 1)`, `H = [0, 1]`,
/// `K = −w₁ − w₂ y²`, `D₁ = D₂ = 0`, `q = v₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExamplePlant {
    pub w: [f64; 2],
    pub b: f64,
    f: Matrix,
    h: [f64; 2],
}

pub fn example_plant(w: &[f64], b_const: f64) -> Result<ExamplePlant, PlantError> {
    if w.len() != 2 {
        return Err(PlantError::Dimension(format!("w has {} entries, expected 2", w.len())));
    }
    if !w.iter().all(|x| x.is_finite()) || !b_const.is_finite() {
        return Err(PlantError::NonFinite);
    }
    if b_const == 0.0 {
        return Err(PlantError::ZeroControlGain(vec![]));
    }
    Ok(ExamplePlant {
        w: [w[0], w[1]],
        b: b_const,
        f: Matrix::identity(2).scale(-1.0),
        h: [0.0, 1.0],
    })
}

impl PlantModel for ExamplePlant {
    fn nz(&self) -> usize {
        2
    }

    fn f(&self) -> &Matrix {
        &self.f
    }

    fn g(&self, y: f64, v: &[f64], out: &mut [f64]) {
        let s = (y - v[0]).sin();
        out[0] = s * s;
        out[1] = 1.0;
    }

    fn d1(&self, _v: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
    }

    fn h(&self) -> &[f64] {
        &self.h
    }

    fn k(&self, y: f64, _v: &[f64]) -> f64 {
        -self.w[0] - self.w[1] * y * y
    }

    fn b(&self, _v: &[f64]) -> f64 {
        self.b
    }

    fn d2(&self, _v: &[f64]) -> f64 {
        0.0
    }

    fn q(&self, v: &[f64]) -> f64 {
        v[0]
    }
}

/// Checks minimum phase, `b² > 0` over `v_samples`, and the vanishing of
/// `D₁`, `D₂`, `q` at `v = 0`.
pub fn validate_plant(plant: &dyn PlantModel, v_samples: &[Vec<f64>]) -> Result<(), PlantError> {
    if !linalg::is_hurwitz(plant.f()) {
        return Err(PlantError::NotMinimumPhase);
    }
    for v in v_samples {
        let b = plant.b(v);
        if !(b * b > 0.0) {
            return Err(PlantError::ZeroControlGain(v.clone()));
        }
    }
    let nv = v_samples.first().map_or(2, |v| v.len());
    let zero = vec![0.0; nv];
    let mut d1 = vec![0.0; plant.nz()];
    plant.d1(&zero, &mut d1);
    if d1.iter().any(|x| *x != 0.0) {
        return Err(PlantError::NonzeroAtOrigin("D1"));
    }
    if plant.d2(&zero) != 0.0 {
        return Err(PlantError::NonzeroAtOrigin("D2"));
    }
    if plant.q(&zero) != 0.0 {
        return Err(PlantError::NonzeroAtOrigin("q"));
    }
    Ok(())
}

/// Points on the exosystem orbit through `exo.v0`, for sampled checks.
pub fn orbit_samples(exo: &Exosystem, count: usize) -> Vec<Vec<f64>> {
    let sig = crate::oracle::planar_exo_signal(exo.sigma, &exo.v0);
    (0..count)
        .map(|i| sig.eval(exo.period() * i as f64 / count as f64))
        .collect()
}

/// Named plant in the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    #[serde(rename = "example_liu2009")]
    Benchmark,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bench() -> ExamplePlant {
        example_plant(&[9.0, 1.0], -1.0).unwrap()
    }

    #[test]
    fn equilibrium_at_origin() {
        let d = plant_rhs(
            &PlantState {
                z: vec![0.0, 0.0],
                y: 0.0,
            },
            &[0.0, 0.0],
            0.0,
            &bench(),
        )
        .unwrap();
        assert_eq!(d.z_dot, vec![0.0, 0.0]);
        assert_eq!(d.y_dot, 0.0);
    }

    #[test]
    fn direct_substitution() {
        let d = plant_rhs(
            &PlantState {
                z: vec![0.0, 0.0],
                y: 1.0,
            },
            &[0.0, 0.0],
            0.0,
            &bench(),
        )
        .unwrap();
        let s1 = 1.0f64.sin();
        assert!((d.z_dot[0] - s1 * s1).abs() < 1e-15);
        assert_eq!(d.z_dot[1], 1.0);
        assert_eq!(d.y_dot, -10.0);
    }

    #[test]
    fn g_packaging_reproduces_column() {
        let p = bench();
        let (y, v) = (0.7, [0.2, -0.4]);
        let mut g = [0.0; 2];
        let mut d1 = [0.0; 2];
        p.g(y, &v, &mut g);
        p.d1(&v, &mut d1);
        let col = [(y - v[0]).sin().powi(2) * y, y];
        for i in 0..2 {
            assert!((g[i] * y + d1[i] - col[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn regulation_error_vanishes_on_reference() {
        let p = bench();
        let v = [0.3, 0.5];
        assert_eq!(v[0] - p.q(&v), 0.0);
    }

    #[test]
    fn regulator_identity_on_steady_state() {
        use crate::oracle::example_regulator_solution;
        let sigma = PI / 12.0;
        let p = bench();
        let (v_ss, z_ss, u_ss) =
            example_regulator_solution(sigma, &[9.0, 1.0], -1.0, &[1.0, 0.0]).unwrap();
        for i in 0..40 {
            let t = i as f64 * 1.3;
            let v = v_ss.eval(t);
            let z = z_ss.eval(t);
            let ur = u_ss.eval_scalar(t);
            let du = 0.37;
            let d = plant_rhs(&PlantState { z, y: v[0] }, &v, ur + du, &p).unwrap();
            let v_dot = exosystem_rhs(&v, &Exosystem::planar(sigma, vec![1.0, 0.0]).unwrap());
            // ė = ẏ − v̇₁ = b (u − 𝐮)
            assert!((d.y_dot - v_dot[0] - p.b * du).abs() < 1e-12);
        }
    }

    #[test]
    fn exosystem_examples() {
        let exo = Exosystem::planar(PI / 12.0, vec![1.0, 0.0]).unwrap();
        let d = exosystem_rhs(&[1.0, 0.0], &exo);
        assert_eq!(d, vec![0.0, -PI / 12.0]);
        assert_eq!(exosystem_rhs(&[0.0, 0.0], &exo), vec![0.0, 0.0]);
        let v = [0.3, -1.2];
        let d = exosystem_rhs(&v, &exo);
        assert!(linalg::dot(&v, &d).abs() < 1e-15);
    }

    #[test]
    fn assumptions_hold_for_benchmark() {
        let exo = Exosystem::planar(PI / 12.0, vec![1.0, 0.0]).unwrap();
        exo.check().unwrap();
        validate_plant(&bench(), &orbit_samples(&exo, 64)).unwrap();
    }

    #[derive(Debug)]
    struct Broken {
        f: Matrix,
        zero_b: bool,
    }

    impl PlantModel for Broken {
        fn nz(&self) -> usize {
            1
        }
        fn f(&self) -> &Matrix {
            &self.f
        }
        fn g(&self, _: f64, _: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn d1(&self, _: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn h(&self) -> &[f64] {
            &[1.0]
        }
        fn k(&self, _: f64, _: &[f64]) -> f64 {
            0.0
        }
        fn b(&self, v: &[f64]) -> f64 {
            if self.zero_b {
                v[0]
            } else {
                1.0
            }
        }
        fn d2(&self, _: &[f64]) -> f64 {
            0.0
        }
        fn q(&self, v: &[f64]) -> f64 {
            v[0]
        }
    }

    #[test]
    fn assumption_violations_detected() {
        let samples = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let unstable = Broken {
            f: Matrix::from_rows(&[&[0.5]]),
            zero_b: false,
        };
        assert_eq!(validate_plant(&unstable, &samples), Err(PlantError::NotMinimumPhase));
        let zero_b = Broken {
            f: Matrix::from_rows(&[&[-1.0]]),
            zero_b: true,
        };
        assert!(matches!(
            validate_plant(&zero_b, &samples),
            Err(PlantError::ZeroControlGain(_))
        ));
        let bad_exo = Exosystem {
            sigma: 1.0,
            s: Matrix::identity(2),
            v0: vec![1.0, 0.0],
        };
        assert_eq!(bad_exo.check(), Err(PlantError::ExosystemSpectrum));
        assert!(example_plant(&[9.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn locally_lipschitz_on_bounded_set() {
        let p = bench();
        let mut worst: f64 = 0.0;
        let h = 1e-6;
        for i in 0..200 {
            let s = i as f64 * 0.173;
            let z = vec![(s).sin() * 2.0, (1.7 * s).cos() * 2.0];
            let y = (0.9 * s).sin() * 2.0;
            let v = [(0.3 * s).cos(), (0.3 * s).sin()];
            let base = plant_rhs(&PlantState { z: z.clone(), y }, &v, 0.5, &p).unwrap();
            let pert = plant_rhs(&PlantState { z: z.clone(), y: y + h }, &v, 0.5, &p).unwrap();
            let dy = (pert.y_dot - base.y_dot).abs() / h;
            let dz = (pert.z_dot[0] - base.z_dot[0]).abs() / h;
            worst = worst.max(dy).max(dz);
        }
        // |∂ẏ/∂y| ≤ w₁ + 3w₂·4 = 21 on |y| ≤ 2
        assert!(worst < 25.0);
    }
}
