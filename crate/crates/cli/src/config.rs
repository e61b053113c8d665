//! TOML configuration files for each subcommand.

use std::path::Path;

use anyhow::{bail, Context, Result};
use lhtraffic::ews::EwsConfig;
use lhtraffic::simulate::{
    ramped_scenario, ClassifierConfig, InitialCondition, RampPlan, RecorderConfig, ScenarioConfig,
    SiteSelection,
};
use lhtraffic::stability::{KGrid, SweepAxis, SweepSpec};
use lhtraffic::ModelParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Evenly spaced values, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Range {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.points - 1) as f64)
            .collect()
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() {
            bail!("{what}: range needs finite ends and at least one point");
        }
        if self.points > 1 && self.stop <= self.start {
            bail!("{what}: range stop must exceed start");
        }
        Ok(())
    }
}

/// `simulate` configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateFile {
    pub scenario: ScenarioConfig,
    /// When present, the scenario is replaced by the ramped-density
    /// experiment built from it, and the indicator analysis runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ramp_plan: Option<RampPlan>,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    /// Site whose series is classified and drawn as a phase portrait.
    #[serde(default = "default_classify_site")]
    pub classify_site: usize,
    #[serde(default)]
    pub ews: EwsConfig,
}

fn default_classify_site() -> usize {
    50
}

impl SimulateFile {
    /// Case-1 reference run: kink regime, one recorded site per step and a
    /// full-field snapshot every 100 steps.
    pub fn reference(a: f64) -> Self {
        let params = ModelParams::reference(a);
        let mut scenario = ScenarioConfig::perturbation_test(params, 0.05, 25_200);
        scenario.recorder = RecorderConfig {
            sample_interval: params.tau(),
            sites: SiteSelection::List(vec![50]),
            full_field_every: Some(100),
        };
        Self {
            scenario,
            ramp_plan: None,
            classifier: ClassifierConfig::default(),
            classify_site: 50,
            ews: EwsConfig::default(),
        }
    }

    /// The scenario actually run, with the seed override applied.
    pub fn effective_scenario(&self, seed: Option<u64>) -> Result<ScenarioConfig> {
        let mut base = self.scenario.clone();
        if let (Some(seed), Some(noise)) = (seed, base.noise.as_mut()) {
            noise.seed = seed;
        }
        let scenario = match &self.ramp_plan {
            Some(plan) => {
                let mut ramped = ramped_scenario(&base, plan)?;
                if let Some(seed) = seed {
                    if let Some(noise) = ramped.noise.as_mut() {
                        noise.seed = seed;
                    }
                }
                ramped
            }
            None => base,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn validate(&self) -> Result<()> {
        self.effective_scenario(None)?;
        if self.ramp_plan.is_some() {
            self.ews.validate()?;
        }
        if let InitialCondition::Explicit { values } = &self.scenario.initial {
            if values.len() != self.scenario.sites {
                bail!(
                    "initial.values has {} entries for {} sites",
                    values.len(),
                    self.scenario.sites
                );
            }
        }
        Ok(())
    }
}

/// A neutral curve over `ρ*`, optionally with its coexisting curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub params: ModelParams,
    pub rho_star: Range,
    #[serde(default)]
    pub coexisting: bool,
    /// Sensitivities sampled below the apex for the coexisting curve.
    #[serde(default = "default_coexist_points")]
    pub coexist_points: usize,
}

fn default_coexist_points() -> usize {
    200
}

/// Neutral sensitivity and separatrix against the passing rate at fixed
/// `params.rho0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaCurveSpec {
    pub label: String,
    pub params: ModelParams,
    pub gamma: Range,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotValue {
    #[default]
    Verdict,
    NeutralA,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub label: String,
    pub base: ModelParams,
    pub x_axis: SweepAxis,
    pub x: Range,
    pub y_axis: SweepAxis,
    pub y: Range,
    #[serde(default)]
    pub k_grid: KGrid,
    #[serde(default)]
    pub plot: PlotValue,
}

impl SweepEntry {
    pub fn spec(&self) -> SweepSpec {
        SweepSpec {
            base: self.base,
            x_axis: self.x_axis,
            x_values: self.x.values(),
            y_axis: self.y_axis,
            y_values: self.y.values(),
            k_grid: self.k_grid,
        }
    }
}

/// `stability` configuration. Every section is optional.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityFile {
    /// Single parameter point for a scalar report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point: Option<ModelParams>,
    #[serde(default)]
    pub curves: Vec<CurveSpec>,
    #[serde(default)]
    pub gamma_curves: Vec<GammaCurveSpec>,
    #[serde(default)]
    pub sweeps: Vec<SweepEntry>,
}

fn check_label(label: &str) -> Result<()> {
    if label.is_empty()
        || !label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
    {
        bail!("label '{label}' must be non-empty and use only letters, digits, '-', '_' or '.'");
    }
    Ok(())
}

impl StabilityFile {
    pub fn reference() -> Self {
        Self {
            point: Some(ModelParams::reference(3.93)),
            curves: vec![CurveSpec {
                label: "reference".into(),
                params: ModelParams::reference(3.93),
                rho_star: Range {
                    start: 0.05,
                    stop: 0.45,
                    points: 401,
                },
                coexisting: false,
                coexist_points: default_coexist_points(),
            }],
            gamma_curves: Vec::new(),
            sweeps: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.point.is_none()
            && self.curves.is_empty()
            && self.gamma_curves.is_empty()
            && self.sweeps.is_empty()
        {
            bail!("nothing to compute: give a point, curves, gamma_curves or sweeps");
        }
        let mut labels = Vec::new();
        if let Some(p) = &self.point {
            p.validate().context("point")?;
        }
        for c in &self.curves {
            check_label(&c.label)?;
            c.params
                .validate()
                .with_context(|| format!("curve {}", c.label))?;
            c.rho_star.validate(&c.label)?;
            labels.push(&c.label);
        }
        for g in &self.gamma_curves {
            check_label(&g.label)?;
            g.params
                .validate()
                .with_context(|| format!("gamma curve {}", g.label))?;
            g.gamma.validate(&g.label)?;
            if g.gamma.start < 0.0 {
                bail!("gamma curve {}: passing rate must be non-negative", g.label);
            }
            labels.push(&g.label);
        }
        for s in &self.sweeps {
            check_label(&s.label)?;
            s.base
                .validate()
                .with_context(|| format!("sweep {}", s.label))?;
            s.x.validate(&s.label)?;
            s.y.validate(&s.label)?;
            if s.x_axis == s.y_axis {
                bail!("sweep {}: axes must differ", s.label);
            }
            labels.push(&s.label);
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            bail!("labels must be unique");
        }
        Ok(())
    }
}

/// Reads and parses a TOML file.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    Ok(toml::to_string_pretty(value)?)
}
