//! Harmonic-balance steady states for plants whose regulator equations close
//! over finite sums of sinusoids.
//!
//! Used as an independent reference in tests and diagnostics; the controller
//! never reads anything from here.

use std::f64::consts::PI;

use crate::internal_model::InternalModel;
use crate::linalg::{dot, solve_linear, LinalgError, Matrix};

/// Frequencies closer than this are merged into one term.
const FREQ_TOL: f64 = 1e-12;

/// `cos·cos(ωt) + sin·sin(ωt)`, vector valued.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicTerm {
    pub omega: f64,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl HarmonicTerm {
    pub fn amplitude(&self) -> f64 {
        (dot(&self.cos, &self.cos) + dot(&self.sin, &self.sin)).sqrt()
    }
}

/// Finite sum of harmonic terms with distinct frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSignal {
    dim: usize,
    terms: Vec<HarmonicTerm>,
}

impl HarmonicSignal {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            terms: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[HarmonicTerm] {
        &self.terms
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.omega).collect()
    }

    /// Adds a term, merging with an existing one of the same frequency.
    pub fn add_term(&mut self, omega: f64, cos: &[f64], sin: &[f64]) {
        assert!(omega >= 0.0, "frequencies are non-negative");
        assert_eq!(cos.len(), self.dim);
        assert_eq!(sin.len(), self.dim);
        if let Some(t) = self
            .terms
            .iter_mut()
            .find(|t| (t.omega - omega).abs() <= FREQ_TOL * omega.max(1.0))
        {
            t.cos.iter_mut().zip(cos).for_each(|(a, b)| *a += b);
            t.sin.iter_mut().zip(sin).for_each(|(a, b)| *a += b);
        } else {
            self.terms.push(HarmonicTerm {
                omega,
                cos: cos.to_vec(),
                sin: sin.to_vec(),
            });
            self.terms
                .sort_by(|a, b| a.omega.partial_cmp(&b.omega).expect("finite"));
        }
    }

    pub fn with_term(mut self, omega: f64, cos: &[f64], sin: &[f64]) -> Self {
        self.add_term(omega, cos, sin);
        self
    }

    /// Scalar helper: `c cos(ωt) + s sin(ωt)`.
    pub fn with_scalar_term(self, omega: f64, c: f64, s: f64) -> Self {
        assert_eq!(self.dim, 1);
        self.with_term(omega, &[c], &[s])
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for term in &self.terms {
            let (s, c) = (term.omega * t).sin_cos();
            for i in 0..self.dim {
                out[i] += term.cos[i] * c + term.sin[i] * s;
            }
        }
    }

    /// Scalar evaluation; panics unless `dim == 1`.
    pub fn eval_scalar(&self, t: f64) -> f64 {
        assert_eq!(self.dim, 1);
        self.terms
            .iter()
            .map(|term| {
                let (s, c) = (term.omega * t).sin_cos();
                term.cos[0] * c + term.sin[0] * s
            })
            .sum()
    }

    /// Exact time derivative.
    pub fn derivative(&self) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| HarmonicTerm {
                omega: t.omega,
                cos: t.sin.iter().map(|s| t.omega * s).collect(),
                sin: t.cos.iter().map(|c| -t.omega * c).collect(),
            })
            .collect();
        Self {
            dim: self.dim,
            terms,
        }
    }

    pub fn component(&self, i: usize) -> Self {
        Self {
            dim: 1,
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    omega: t.omega,
                    cos: vec![t.cos[i]],
                    sin: vec![t.sin[i]],
                })
                .collect(),
        }
    }

    /// Stacks scalar signals into one vector signal.
    pub fn stack(parts: &[HarmonicSignal]) -> Self {
        let dim: usize = parts.iter().map(|p| p.dim).sum();
        let mut out = Self::zero(dim);
        let mut off = 0;
        for p in parts {
            for t in &p.terms {
                let mut c = vec![0.0; dim];
                let mut s = vec![0.0; dim];
                c[off..off + p.dim].copy_from_slice(&t.cos);
                s[off..off + p.dim].copy_from_slice(&t.sin);
                out.add_term(t.omega, &c, &s);
            }
            off += p.dim;
        }
        out
    }

    /// `A x(t)` for every term.
    pub fn map_linear(&self, a: &Matrix) -> Self {
        assert_eq!(a.cols(), self.dim);
        Self {
            dim: a.rows(),
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    omega: t.omega,
                    cos: a.mul_vec(&t.cos),
                    sin: a.mul_vec(&t.sin),
                })
                .collect(),
        }
    }

    /// Scalar signal `wᵀ x(t)`.
    pub fn project(&self, w: &[f64]) -> Self {
        let row = Matrix::new(1, w.len(), w.to_vec()).expect("finite weights");
        self.map_linear(&row)
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            dim: self.dim,
            terms: self
                .terms
                .iter()
                .map(|t| HarmonicTerm {
                    omega: t.omega,
                    cos: t.cos.iter().map(|x| k * x).collect(),
                    sin: t.sin.iter().map(|x| k * x).collect(),
                })
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for t in &other.terms {
            out.add_term(t.omega, &t.cos, &t.sin);
        }
        out
    }

    /// Drops terms whose amplitude is at most `tol`.
    pub fn pruned(mut self, tol: f64) -> Self {
        self.terms.retain(|t| t.amplitude() > tol);
        self
    }

    /// Longest period among the non-constant terms (`2π/ω_min`).
    pub fn fundamental_period(&self) -> Option<f64> {
        self.terms
            .iter()
            .filter(|t| t.omega > 0.0)
            .map(|t| 2.0 * PI / t.omega)
            .reduce(f64::max)
    }
}

/// Steady-state response of `ẋ = F x + forcing(t)` for Hurwitz `F`.
///
/// Per frequency ω the coefficients satisfy
/// `[[F, −ωI], [ωI, F]] [X_c; X_s] = −[C; S]`.
pub fn linear_harmonic_steady_state(
    f: &Matrix,
    forcing: &HarmonicSignal,
) -> Result<HarmonicSignal, LinalgError> {
    let n = f.rows();
    if !f.is_square() || forcing.dim() != n {
        return Err(LinalgError::DimensionMismatch {
            expected: (n, n),
            got: (forcing.dim(), f.cols()),
        });
    }
    let mut out = HarmonicSignal::zero(n);
    for term in forcing.terms() {
        let w = term.omega;
        let mut sys = Matrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                sys[(i, j)] = f[(i, j)];
                sys[(n + i, n + j)] = f[(i, j)];
            }
            sys[(i, n + i)] = -w;
            sys[(n + i, i)] = w;
        }
        let rhs: Vec<f64> = term.cos.iter().chain(&term.sin).map(|x| -x).collect();
        let x = solve_linear(&sys, &rhs)?;
        out.add_term(w, &x[..n], &x[n..]);
    }
    Ok(out)
}

/// Steady-state signals of the regulated closed loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub v_ss: HarmonicSignal,
    pub z_ss: HarmonicSignal,
    pub u_ss: HarmonicSignal,
    /// `col(u, u', …, u⁽ⁿ⁻¹⁾)`.
    pub xi_ss: HarmonicSignal,
    /// `T(a) ξ`.
    pub theta_ss: HarmonicSignal,
    /// `ϱᵀ T(a) ξ`.
    pub varpi_ss: HarmonicSignal,
    pub varrho: Vec<f64>,
}

impl SteadyState {
    /// Completes `(v, z, u)` with the internal-model signals.
    pub fn assemble(
        v_ss: HarmonicSignal,
        z_ss: HarmonicSignal,
        u_ss: HarmonicSignal,
        model: &InternalModel,
    ) -> Self {
        let n = model.n();
        let mut derivs = Vec::with_capacity(n);
        let mut d = u_ss.clone();
        for _ in 0..n {
            derivs.push(d.clone());
            d = d.derivative();
        }
        let xi_ss = HarmonicSignal::stack(&derivs);
        let theta_ss = xi_ss.map_linear(&model.t);
        let varpi_ss = theta_ss.project(&model.varrho);
        Self {
            v_ss,
            z_ss,
            u_ss,
            xi_ss,
            theta_ss,
            varpi_ss,
            varrho: model.varrho.clone(),
        }
    }

    /// One full period of the slowest harmonic, or 1 s for a constant signal.
    pub fn period(&self) -> f64 {
        self.u_ss
            .fundamental_period()
            .or_else(|| self.v_ss.fundamental_period())
            .unwrap_or(1.0)
    }

    /// `max ‖col(θ(t), ϱ)‖²` over one period on `samples` points.
    pub fn max_orbit_norm_sq(&self, samples: usize) -> f64 {
        let period = self.period();
        let rho2 = dot(&self.varrho, &self.varrho);
        let mut th = vec![0.0; self.theta_ss.dim()];
        (0..samples)
            .map(|i| {
                self.theta_ss
                    .eval_into(period * i as f64 / samples as f64, &mut th);
                dot(&th, &th) + rho2
            })
            .fold(0.0, f64::max)
    }
}

/// Saturation level δ: 1.5 × the steady-state orbit's peak `‖col(θ, ϱ)‖²`.
pub fn default_sat_radius(ss: &SteadyState) -> f64 {
    1.5 * ss.max_orbit_norm_sq(1000)
}

/// Exosystem `v̇ = [[0, σ], [−σ, 0]] v` from `v0` as a harmonic signal.
pub fn planar_exo_signal(sigma: f64, v0: &[f64]) -> HarmonicSignal {
    // v₁ = p cos σt + q sin σt,  v₂ = q cos σt − p sin σt
    let (p, q) = (v0[0], v0[1]);
    HarmonicSignal::zero(2).with_term(sigma, &[p, q], &[q, -p])
}

/// `(z_ss, u_ss)` for the benchmark plant
/// `ż = −z + (sin²(y−v₁)y, y)`, `ẏ = z₂ − w₁y − w₂y³ + b u`, `e = y − v₁`.
///
/// On the zero-error manifold `y = v₁`, so `z₁ → 0`, `z₂` is the filtered
/// `v₁`, and `u = b⁻¹(v̇₁ − z₂ + w₁v₁ + w₂v₁³)`.
pub fn example_regulator_solution(
    sigma: f64,
    w: &[f64],
    b: f64,
    v0: &[f64],
) -> Result<(HarmonicSignal, HarmonicSignal, HarmonicSignal), LinalgError> {
    let v = planar_exo_signal(sigma, v0);
    let v1 = v.component(0);
    let forcing = HarmonicSignal::stack(&[HarmonicSignal::zero(1), v1.clone()]);
    let f = Matrix::identity(2).scale(-1.0);
    let z = linear_harmonic_steady_state(&f, &forcing)?;

    // v₁ = Re(C e^{iσt}) with C = p − iq; cos³ expansion gives
    // v₁³ = Re((3|C|²/4) C e^{iσt} + (C³/4) e^{3iσt}).
    let (p, q) = (v0[0], v0[1]);
    let r2 = p * p + q * q;
    let (c3_re, c3_im) = {
        // (p − iq)³
        let re = p * p * p - 3.0 * p * q * q;
        let im = -(3.0 * p * p * q - q * q * q);
        (re, im)
    };
    let v1_cubed = v1
        .scale(0.75 * r2)
        .add(&HarmonicSignal::zero(1).with_scalar_term(3.0 * sigma, c3_re / 4.0, -c3_im / 4.0));

    let u = v1
        .derivative()
        .add(&z.component(1).scale(-1.0))
        .add(&v1.scale(w[0]))
        .add(&v1_cubed.scale(w[1]))
        .scale(1.0 / b)
        .pruned(1e-14);
    Ok((v, z.pruned(1e-14), u))
}

/// Full steady state for the benchmark plant under `model`.
pub fn example_steady_input(
    sigma: f64,
    w: &[f64],
    b: f64,
    v0: &[f64],
    model: &InternalModel,
) -> Result<SteadyState, LinalgError> {
    let (v, z, u) = example_regulator_solution(sigma, w, b, v0)?;
    Ok(SteadyState::assemble(v, z, u, model))
}

/// Every harmonic of the steady-state input is excited (|Cᵢ| > 1e-9).
pub fn assumption3_check(ss: &SteadyState) -> bool {
    !ss.u_ss.terms().is_empty() && ss.u_ss.terms().iter().all(|t| t.amplitude() > 1e-9)
}
