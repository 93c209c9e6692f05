//! JSON scenario files.
//!
//! ```json
//! { "plant": "example_liu2009", "w": [9, 1], "b": -1, "sigma": 0.2617993878, "v0": [1, 0],
//!   "controller": "A", "alpha": 1.0, "omega": 200.0, "k": 2.0,
//!   "rho": { "arg": "e", "coeffs": [1, 0, 1] } }
//! ```
//!
//! Every key is optional; missing keys take the benchmark defaults.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_loop::LoopCore;
use crate::control::{ControlError, ControllerVariant, DitherConfig, Rho};
use crate::internal_model::{GeneratorSpec, InternalModel, InternalModelConfig, ModelError};
use crate::linalg::LinalgError;
use crate::oracle::{default_sat_radius, example_regulator_solution, SteadyState};
use crate::plant::{example_plant, orbit_samples, validate_plant, Exosystem, PlantError, PlantKind};
use crate::sim::{Scenario, SimError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("plant: {0}")]
    Plant(#[from] PlantError),
    #[error("internal model: {0}")]
    Model(#[from] ModelError),
    #[error("controller: {0}")]
    Control(#[from] ControlError),
    #[error("simulation settings: {0}")]
    Sim(#[from] SimError),
    #[error("steady state: {0}")]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    #[serde(default = "InitialConfig::default_z")]
    pub z: Vec<f64>,
    #[serde(default)]
    pub y: f64,
    #[serde(default = "InitialConfig::default_eta")]
    pub eta: Vec<f64>,
    #[serde(default)]
    pub pi: f64,
    /// `None` starts the estimator at zero.
    #[serde(default)]
    pub vartheta: Option<Vec<f64>>,
}

impl InitialConfig {
    fn default_z() -> Vec<f64> {
        vec![0.0, 0.0]
    }

    fn default_eta() -> Vec<f64> {
        vec![0.1589, 0.0622, 0.1057, 0.0331]
    }
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            z: Self::default_z(),
            y: 0.0,
            eta: Self::default_eta(),
            pi: 0.0,
            vartheta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub plant: PlantKind,
    pub w: Vec<f64>,
    pub b: f64,
    pub sigma: f64,
    pub v0: Vec<f64>,
    pub controller: ControllerVariant,
    pub alpha: f64,
    pub omega: f64,
    pub k: f64,
    pub rho: Rho,
    pub internal_model: InternalModelConfig,
    pub initial: InitialConfig,
    /// Seconds; defaults to ten exosystem periods.
    pub horizon: Option<f64>,
    /// Seconds; defaults to 64 steps per dither period.
    pub dt: Option<f64>,
    pub record_stride: Option<usize>,
    pub full_rate: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            plant: PlantKind::Benchmark,
            w: vec![9.0, 1.0],
            b: -1.0,
            sigma: PI / 12.0,
            v0: vec![1.0, 0.0],
            controller: ControllerVariant::A,
            alpha: 1.0,
            omega: 200.0,
            k: 2.0,
            rho: Rho {
                arg: "e".into(),
                coeffs: vec![1.0, 0.0, 1.0],
            },
            internal_model: InternalModelConfig::default(),
            initial: InitialConfig::default(),
            horizon: None,
            dt: None,
            record_stride: None,
            full_rate: false,
        }
    }
}

/// A validated scenario together with its steady-state oracle.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub scenario: Scenario,
    pub steady_state: SteadyState,
    pub generator: GeneratorSpec,
    pub config: ScenarioConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn dither(&self) -> DitherConfig {
        DitherConfig {
            alpha: self.alpha,
            omega: self.omega,
            k: self.k,
            rho: self.rho.clone(),
        }
    }

    fn generator(&self, u_ss: &crate::oracle::HarmonicSignal) -> Result<GeneratorSpec, ConfigError> {
        let im = &self.internal_model;
        if let Some(a) = &im.a {
            return Ok(GeneratorSpec::new(a.clone())?);
        }
        if let Some(f) = &im.frequencies {
            return Ok(GeneratorSpec::from_frequencies(f, im.include_zero)?);
        }
        let all = u_ss.frequencies();
        let freqs: Vec<f64> = all.iter().copied().filter(|w| *w > 0.0).collect();
        let zero = all.len() != freqs.len();
        Ok(GeneratorSpec::from_frequencies(&freqs, zero)?)
    }

    pub fn build(&self) -> Result<BuiltScenario, ConfigError> {
        if !matches!(self.rho.arg.as_str(), "e" | "s") {
            return Err(ConfigError::Invalid(format!(
                "rho.arg must be \"e\" or \"s\", got {:?}",
                self.rho.arg
            )));
        }
        let plant = example_plant(&self.w, self.b)?;
        let exo = Exosystem::planar(self.sigma, self.v0.clone())?;
        exo.check()?;
        validate_plant(&plant, &orbit_samples(&exo, 64))?;

        let (v_ss, z_ss, u_ss) = example_regulator_solution(self.sigma, &self.w, self.b, &self.v0)?;
        let gen = self.generator(&u_ss)?;
        let im = &self.internal_model;
        if let Some(n) = im.n {
            if n != gen.n() {
                return Err(ModelError::DimensionMismatch { a: gen.n(), m: n }.into());
            }
        }
        let model = InternalModel::new(&gen, im.m.clone(), im.theta_gain, 1.0)?;
        let steady_state = SteadyState::assemble(v_ss, z_ss, u_ss, &model);
        let radius = match im.sat_radius {
            Some(r) => r,
            None => default_sat_radius(&steady_state),
        };
        let model = model.with_sat_radius(radius)?;

        let cfg = self.dither();
        let core = LoopCore::new(Arc::new(plant), exo, model, cfg, self.controller)?;
        let l = core.layout;

        let init = &self.initial;
        let vartheta = init.vartheta.clone().unwrap_or_else(|| vec![0.0; l.n]);
        for (name, got, want) in [
            ("initial.z", init.z.len(), l.nz),
            ("initial.eta", init.eta.len(), l.n),
            ("initial.vartheta", vartheta.len(), l.n),
        ] {
            if got != want {
                return Err(ConfigError::Invalid(format!("{name} has {got} entries, expected {want}")));
            }
        }
        let x0 = l.pack(&init.z, init.y, &self.v0, &init.eta, init.pi, &vartheta);

        let horizon = self.horizon.unwrap_or(10.0 * core.exo.period());
        let dt = self.dt.unwrap_or(core.cfg.period() / 64.0);
        let record_stride = if self.full_rate { Some(1) } else { self.record_stride };
        let scenario = Scenario {
            core: Arc::new(core),
            x0,
            horizon,
            dt,
            record_stride,
        };
        scenario.validate()?;
        Ok(BuiltScenario {
            scenario,
            steady_state,
            generator: gen,
            config: self.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_benchmark() {
        let cfg = ScenarioConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        let built = cfg.build().unwrap();
        let s = &built.scenario;
        assert_eq!(s.x0.len(), 14);
        assert!((s.horizon - 240.0).abs() < 1e-9);
        assert!((s.dt - 2.0 * PI / (64.0 * 200.0)).abs() < 1e-15);
        assert_eq!(built.generator.n(), 4);
        // δ from the oracle orbit, dominated by ‖ϱ‖²
        let r = s.core.model.sat_radius;
        assert!(r > 1.5 * 65.9f64.powi(2) && r < 1.5 * 66.1f64.powi(2), "{r}");
    }

    #[test]
    fn spec_style_json_parses() {
        let text = r#"{ "plant": "example_liu2009", "w": [9,1], "b": -1, "sigma": 0.2617993878,
            "v0": [1,0], "controller": "B", "alpha": 1.0, "omega": 200.0, "k": 2.0,
            "rho": {"arg": "s", "coeffs": [20, 1]},
            "internal_model": {"n": 4, "m": [24, 50, 35, 10], "Theta": 10} }"#;
        let built = ScenarioConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(built.scenario.core.variant, ControllerVariant::B);
    }

    #[test]
    fn invalid_configs_rejected() {
        for text in [
            r#"{"bogus": 1}"#,
            r#"{"alpha": -1}"#,
            r#"{"b": 0}"#,
            r#"{"dt": 0.01}"#,
            r#"{"rho": {"coeffs": [0.5]}}"#,
            r#"{"controller": "A", "rho": {"coeffs": [20, 1]}}"#,
            r#"{"internal_model": {"m": [1, 1, 1, 1], "Theta": 10}}"#,
            r#"{"internal_model": {"n": 3, "m": [1, 3, 3], "Theta": 10}}"#,
            r#"{"initial": {"eta": [0, 0]}}"#,
        ] {
            let r = ScenarioConfig::from_json(text).and_then(|c| c.build());
            assert!(r.is_err(), "{text} accepted");
        }
    }

    #[test]
    fn generator_without_cubic_term_has_one_frequency() {
        let text = r#"{"w": [9, 0], "internal_model": {"n": 2, "m": [2, 3], "Theta": 10},
            "initial": {"eta": [0.1, 0.0]}}"#;
        let built = ScenarioConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(built.generator.n(), 2);
    }

    #[test]
    fn shipped_presets_build() {
        for text in [
            include_str!("../scenarios/default.json"),
            include_str!("../scenarios/variant_a.json"),
            include_str!("../scenarios/variant_b.json"),
        ] {
            ScenarioConfig::from_json(text).unwrap().build().unwrap();
        }
        let d = ScenarioConfig::from_json(include_str!("../scenarios/default.json")).unwrap();
        assert_eq!(d.build().unwrap().scenario.x0, ScenarioConfig::default().build().unwrap().scenario.x0);
    }
}
