//! Steady-state generator, coordinate change `T(a)`, dynamic compensator
//! matrices and the (saturated) feedforward map χ / χ_s.
//!
//! The generator polynomial is `sⁿ + aₙ sⁿ⁻¹ + … + a₂ s + a₁`, i.e. `a₁`
//! multiplies `u` itself in the annihilating ODE
//! `u⁽ⁿ⁾ + a₁ u + a₂ u' + … + aₙ u⁽ⁿ⁻¹⁾ = 0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, companion, dot, LinalgError, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("duplicate frequency {0}")]
    DuplicateFrequency(f64),
    #[error("frequencies must be finite and positive, got {0}")]
    InvalidFrequency(f64),
    #[error("dimension mismatch: a has {a}, m has {m} entries")]
    DimensionMismatch { a: usize, m: usize },
    #[error("generator companion(a) must have simple imaginary-axis spectrum")]
    GeneratorSpectrum,
    #[error("companion(m) must be Hurwitz")]
    UnstableCompensator,
    #[error("compensator gain Theta must be positive, got {0}")]
    InvalidGain(f64),
    #[error("saturation radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Coefficients `(a₁, …, aₙ)` of `∏ (s² + ωᵢ²) · (s if include_zero)`,
/// constant term first, leading `1` dropped.
pub fn min_poly_coeffs(frequencies: &[f64], include_zero: bool) -> Result<Vec<f64>, ModelError> {
    for (i, w) in frequencies.iter().enumerate() {
        if !w.is_finite() || *w <= 0.0 {
            return Err(ModelError::InvalidFrequency(*w));
        }
        if frequencies[..i]
            .iter()
            .any(|v| (v - w).abs() <= 1e-12 * w.abs().max(1.0))
        {
            return Err(ModelError::DuplicateFrequency(*w));
        }
    }
    let mut asc = vec![1.0];
    if include_zero {
        asc.insert(0, 0.0);
    }
    for w in frequencies {
        let mut next = vec![0.0; asc.len() + 2];
        for (i, c) in asc.iter().enumerate() {
            next[i] += c * w * w;
            next[i + 2] += c;
        }
        asc = next;
    }
    asc.pop();
    Ok(asc)
}

/// The steady-state generator `ξ̇ = Φ(a) ξ`, `u = Γ ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub a: Vec<f64>,
    pub phi: Matrix,
    pub gamma: Vec<f64>,
}

impl GeneratorSpec {
    pub fn new(a: Vec<f64>) -> Result<Self, ModelError> {
        let phi = companion(&a);
        if !linalg::eig_imaginary_distinct(&phi) {
            return Err(ModelError::GeneratorSpectrum);
        }
        let mut gamma = vec![0.0; a.len()];
        gamma[0] = 1.0;
        Ok(Self { a, phi, gamma })
    }

    pub fn from_frequencies(frequencies: &[f64], include_zero: bool) -> Result<Self, ModelError> {
        Self::new(min_poly_coeffs(frequencies, include_zero)?)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }
}

/// Builds `T(a)` from the row stack `ϱᵀ(Φ + I)Φᵏ`, `k = 0…n-1`, with `ϱ = m - a`.
pub fn build_t(a: &[f64], m: &[f64]) -> Result<Matrix, ModelError> {
    Ok(build_t_inverse(a, m)?.inverse()?)
}

/// The row stack `T⁻¹(a)` itself.
pub fn build_t_inverse(a: &[f64], m: &[f64]) -> Result<Matrix, ModelError> {
    if a.len() != m.len() || a.is_empty() {
        return Err(ModelError::DimensionMismatch {
            a: a.len(),
            m: m.len(),
        });
    }
    let n = a.len();
    let phi = companion(a);
    let varrho: Vec<f64> = m.iter().zip(a).map(|(mi, ai)| mi - ai).collect();
    let phi_plus_i = phi.add(&Matrix::identity(n));
    let mut row = phi_plus_i.vec_mul(&varrho);
    let mut data = Vec::with_capacity(n * n);
    for _ in 0..n {
        data.extend_from_slice(&row);
        row = phi.vec_mul(&row);
    }
    Ok(Matrix::new(n, n, data)?)
}

/// Dynamic compensator `η̇ = Mη + Nπ`, `π̇ = -π + u`, `ϑ̇ = -Θη(ηᵀϑ - π)`
/// together with the quantities needed to verify it against a generator.
///
/// The controller itself only ever reads `m`, `M`, `Θ` and `sat_radius`; `T`
/// and `ϱ` depend on the unknown `a` and exist for verification.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalModel {
    pub m: Vec<f64>,
    pub m_mat: Matrix,
    pub n_vec: Vec<f64>,
    pub theta_gain: f64,
    pub t: Matrix,
    pub varrho: Vec<f64>,
    pub sat_radius: f64,
}

impl InternalModel {
    pub fn new(
        gen: &GeneratorSpec,
        m: Vec<f64>,
        theta_gain: f64,
        sat_radius: f64,
    ) -> Result<Self, ModelError> {
        if gen.n() != m.len() {
            return Err(ModelError::DimensionMismatch {
                a: gen.n(),
                m: m.len(),
            });
        }
        if !(theta_gain.is_finite() && theta_gain > 0.0) {
            return Err(ModelError::InvalidGain(theta_gain));
        }
        if !(sat_radius.is_finite() && sat_radius > 0.0) {
            return Err(ModelError::InvalidRadius(sat_radius));
        }
        let m_mat = companion(&m);
        if !linalg::is_hurwitz(&m_mat) {
            return Err(ModelError::UnstableCompensator);
        }
        let t = build_t(&gen.a, &m)?;
        let varrho = m.iter().zip(&gen.a).map(|(mi, ai)| mi - ai).collect();
        let n = m.len();
        let mut n_vec = vec![0.0; n];
        n_vec[n - 1] = 1.0;
        Ok(Self {
            m,
            m_mat,
            n_vec,
            theta_gain,
            t,
            varrho,
            sat_radius,
        })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn with_sat_radius(mut self, sat_radius: f64) -> Result<Self, ModelError> {
        if !(sat_radius.is_finite() && sat_radius > 0.0) {
            return Err(ModelError::InvalidRadius(sat_radius));
        }
        self.sat_radius = sat_radius;
        Ok(self)
    }

    /// Allocation-free `η̇ = Mη + Nπ` using the companion structure of `M`.
    pub fn eta_dot_into(&self, eta: &[f64], pi: f64, out: &mut [f64]) {
        let n = self.n();
        out[..n - 1].copy_from_slice(&eta[1..]);
        out[n - 1] = pi - dot(&self.m, eta);
    }
}

/// `‖TΦ − MT − NϱᵀT‖_F`.
pub fn sylvester_residual(model: &InternalModel, gen: &GeneratorSpec) -> f64 {
    let t = &model.t;
    let t_phi = t.matmul(&gen.phi).expect("dims");
    let m_t = model.m_mat.matmul(t).expect("dims");
    let rho_t = t.vec_mul(&model.varrho);
    let n_rho_t = Matrix::outer(&model.n_vec, &rho_t);
    t_phi.sub(&m_t).sub(&n_rho_t).frobenius_norm()
}

/// `‖TΦT⁻¹ − Φ‖_F`.
pub fn commutation_residual(model: &InternalModel, gen: &GeneratorSpec) -> f64 {
    let t_inv = model.t.inverse().expect("T invertible by construction");
    let conj = model
        .t
        .matmul(&gen.phi)
        .and_then(|x| x.matmul(&t_inv))
        .expect("dims");
    conj.sub(&gen.phi).frobenius_norm()
}

/// χ(θ̂, ϑ) = ϑᵀ[Φ(m − ϑ) + I] θ̂.
///
/// `Φ(c) x = (x₂, …, xₙ, −c·x)`, so the companion matrix is never
/// materialised.
pub fn chi(theta_hat: &[f64], vartheta: &[f64], m: &[f64]) -> f64 {
    let n = m.len();
    debug_assert_eq!(theta_hat.len(), n);
    debug_assert_eq!(vartheta.len(), n);
    let mut acc = 0.0;
    for i in 0..n - 1 {
        acc += vartheta[i] * (theta_hat[i + 1] + theta_hat[i]);
    }
    let mut last = theta_hat[n - 1];
    for j in 0..n {
        last -= (m[j] - vartheta[j]) * theta_hat[j];
    }
    acc + vartheta[n - 1] * last
}

fn psi(s: f64) -> f64 {
    if s <= 1e-8 {
        0.0
    } else {
        (-1.0 / s).exp()
    }
}

/// Smooth step: 0 for `s ≤ 0`, 1 for `s ≥ 1`, `ψ(s)/(ψ(s)+ψ(1−s))` between.
pub fn bump_psi(s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let a = psi(s);
    let b = psi(1.0 - s);
    a / (a + b)
}

/// χ_s(η, ϑ) = χ(η, ϑ) Ψ(δ + 1 − ‖col(η, ϑ)‖²).
pub fn chi_s(eta: &[f64], vartheta: &[f64], model: &InternalModel) -> f64 {
    let r2 = dot(eta, eta) + dot(vartheta, vartheta);
    let w = bump_psi(model.sat_radius + 1.0 - r2);
    if w == 0.0 {
        0.0
    } else {
        w * chi(eta, vartheta, &model.m)
    }
}

/// Serializable description of the internal model.
///
/// Either `a` or `frequencies` may pin the generator; when both are absent
/// the caller derives the generator from the plant's steady-state input.
/// `sat_radius: None` requests the oracle-based default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InternalModelConfig {
    #[serde(default)]
    pub n: Option<usize>,
    pub m: Vec<f64>,
    #[serde(rename = "Theta")]
    pub theta_gain: f64,
    #[serde(default)]
    pub sat_radius: Option<f64>,
    #[serde(default)]
    pub frequencies: Option<Vec<f64>>,
    #[serde(default)]
    pub include_zero: bool,
    #[serde(default)]
    pub a: Option<Vec<f64>>,
}

impl Default for InternalModelConfig {
    fn default() -> Self {
        Self {
            n: Some(4),
            m: vec![24.0, 50.0, 35.0, 10.0],
            theta_gain: 10.0,
            sat_radius: None,
            frequencies: None,
            include_zero: false,
            a: None,
        }
    }
}
