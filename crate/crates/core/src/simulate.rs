//! Time integration on a periodic ring, scenario construction and attractor
//! classification.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, ExecMode};
use crate::model::{
    step_into, Forcing, ModelError, ModelParams, NoiseConfig, RampConfig, RampSite, Schedule,
    StepWorkspace,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("non-finite density at step {step}, site {site}")]
    NonFinite { step: u64, site: usize },
    #[error("invalid window: {0}")]
    Window(String),
}

/// Default ring length.
pub const DEFAULT_SITES: usize = 100;
/// Sites averaged for the probe signal (1-indexed).
pub const PROBE_SITES: [usize; 5] = [48, 49, 50, 51, 52];

/// The two most recent time slices of the recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    pub slice_prev: Vec<f64>,
    pub slice_curr: Vec<f64>,
    pub step_index: u64,
    pub tau: f64,
}

impl LatticeState {
    pub fn new(slice_prev: Vec<f64>, slice_curr: Vec<f64>, tau: f64) -> Result<Self, SimError> {
        if slice_prev.len() != slice_curr.len() {
            return Err(ModelError::LengthMismatch {
                prev: slice_prev.len(),
                curr: slice_curr.len(),
            }
            .into());
        }
        if slice_curr.len() < 4 {
            return Err(ModelError::LatticeTooSmall(slice_curr.len()).into());
        }
        Ok(Self {
            slice_prev,
            slice_curr,
            step_index: 0,
            tau,
        })
    }

    pub fn sites(&self) -> usize {
        self.slice_curr.len()
    }

    /// Time of `slice_prev`.
    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.tau
    }
}

/// Uniform ring with a mass-neutral dipole at 1-indexed sites `L/2 − 1` and
/// `L/2`. Both returned slices are identical.
pub fn init_perturbed(
    rho0: f64,
    delta_rho: f64,
    sites: usize,
) -> Result<(Vec<f64>, Vec<f64>), SimError> {
    if sites < 4 {
        return Err(ModelError::LatticeTooSmall(sites).into());
    }
    if !sites.is_multiple_of(2) {
        return Err(SimError::Config(format!(
            "perturbation needs an even site count, got {sites}"
        )));
    }
    let mut slice = vec![rho0; sites];
    slice[sites / 2 - 2] += delta_rho;
    slice[sites / 2 - 1] -= delta_rho;
    Ok((slice.clone(), slice))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    Perturbed {
        rho0: f64,
        delta_rho: f64,
    },
    /// Both slices set to the given vector.
    Explicit {
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteSelection {
    All,
    /// 1-indexed site list.
    List(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecorderConfig {
    /// Sampling cadence in seconds; rounded to a whole number of steps.
    pub sample_interval: f64,
    pub sites: SiteSelection,
    /// Store the full field every this many recorded samples.
    pub full_field_every: Option<u64>,
}

impl Default for RecorderConfig {
    fn default() -> Self {
        Self {
            sample_interval: 20.0,
            sites: SiteSelection::List(PROBE_SITES.to_vec()),
            full_field_every: None,
        }
    }
}

impl RecorderConfig {
    /// Records one site at every step.
    pub fn every_step(tau: f64, site: usize) -> Self {
        Self {
            sample_interval: tau,
            sites: SiteSelection::List(vec![site]),
            full_field_every: None,
        }
    }

    fn sample_steps(&self, tau: f64) -> Result<u64, SimError> {
        if !(self.sample_interval.is_finite() && self.sample_interval >= tau * (1.0 - 1e-9)) {
            return Err(SimError::Config(format!(
                "sample_interval {} must be at least tau = {tau}",
                self.sample_interval
            )));
        }
        Ok((self.sample_interval / tau).round().max(1.0) as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub sites: usize,
    pub params: ModelParams,
    pub initial: InitialCondition,
    pub steps: u64,
    #[serde(default)]
    pub ramp: Option<RampConfig>,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub recorder: RecorderConfig,
    /// Replace negative densities by zero after every step. Off by default
    /// because it breaks conservation.
    #[serde(default)]
    pub clamp_negative: bool,
}

impl ScenarioConfig {
    /// Dipole perturbation test on the default ring, recording the central
    /// site 50 at every step.
    pub fn perturbation_test(params: ModelParams, delta_rho: f64, steps: u64) -> Self {
        Self {
            sites: DEFAULT_SITES,
            params,
            initial: InitialCondition::Perturbed {
                rho0: params.rho0,
                delta_rho,
            },
            steps,
            ramp: None,
            noise: None,
            recorder: RecorderConfig::every_step(params.tau(), DEFAULT_SITES / 2),
            clamp_negative: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        if self.sites < 4 {
            return Err(ModelError::LatticeTooSmall(self.sites).into());
        }
        if self.steps < 1 {
            return Err(SimError::Config("steps must be at least 1".into()));
        }
        if let InitialCondition::Explicit { values } = &self.initial {
            if values.len() != self.sites {
                return Err(SimError::Config(format!(
                    "initial vector has {} entries for {} sites",
                    values.len(),
                    self.sites
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(SimError::Config("initial vector is not finite".into()));
            }
        }
        if let Some(ramp) = &self.ramp {
            ramp.validate(self.sites)?;
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        if let SiteSelection::List(list) = &self.recorder.sites {
            if list.is_empty() {
                return Err(SimError::Config("recorder site list is empty".into()));
            }
            if let Some(&bad) = list.iter().find(|&&s| s == 0 || s > self.sites) {
                return Err(ModelError::SiteOutOfRange {
                    site: bad,
                    sites: self.sites,
                }
                .into());
            }
        }
        if self.recorder.full_field_every == Some(0) {
            return Err(SimError::Config("full_field_every must be positive".into()));
        }
        self.recorder.sample_steps(self.params.tau())?;
        Ok(())
    }

    pub fn initial_state(&self) -> Result<LatticeState, SimError> {
        let (prev, curr) = match &self.initial {
            InitialCondition::Perturbed { rho0, delta_rho } => {
                init_perturbed(*rho0, *delta_rho, self.sites)?
            }
            InitialCondition::Explicit { values } => (values.clone(), values.clone()),
        };
        LatticeState::new(prev, curr, self.params.tau())
    }

    fn recorded_sites(&self) -> Vec<usize> {
        match &self.recorder.sites {
            SiteSelection::All => (1..=self.sites).collect(),
            SiteSelection::List(list) => list.clone(),
        }
    }
}

/// A stored copy of the whole field.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: Vec<f64>,
}

/// Per-sample bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Site sum of the field.
    pub mass: Vec<f64>,
    /// Spatial mean, the running reference density.
    pub mean: Vec<f64>,
    /// Population standard deviation over sites.
    pub spatial_std: Vec<f64>,
    /// Negative sites at each sample.
    pub negative_sites: Vec<usize>,
    /// Steps (over the whole run) that produced at least one negative site.
    pub negative_steps: u64,
    pub first_negative_step: Option<u64>,
}

/// Recorded history of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub tau: f64,
    /// Steps between samples.
    pub sample_steps: u64,
    pub times: Vec<f64>,
    /// 1-indexed recorded sites, parallel to `series`.
    pub sites: Vec<usize>,
    /// One series per recorded site.
    pub series: Vec<Vec<f64>>,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
    pub final_state: LatticeState,
}

impl Trajectory {
    pub fn site_series(&self, site: usize) -> Option<&[f64]> {
        self.sites
            .iter()
            .position(|&s| s == site)
            .map(|i| self.series[i].as_slice())
    }

    pub fn cadence(&self) -> f64 {
        self.sample_steps as f64 * self.tau
    }
}

fn mean_std(field: &[f64]) -> (f64, f64, f64) {
    let n = field.len() as f64;
    let sum: f64 = field.iter().sum();
    let mean = sum / n;
    let var = field.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (sum, mean, var.sqrt())
}

struct Recorder {
    every: u64,
    full_every: Option<u64>,
    columns: Vec<usize>,
    traj_times: Vec<f64>,
    series: Vec<Vec<f64>>,
    snapshots: Vec<Snapshot>,
    diag: Diagnostics,
}

impl Recorder {
    fn record(&mut self, slice_index: u64, tau: f64, field: &[f64]) {
        let sample = self.traj_times.len() as u64;
        let time = slice_index as f64 * tau;
        self.traj_times.push(time);
        for (col, &site) in self.series.iter_mut().zip(&self.columns) {
            col.push(field[site - 1]);
        }
        let (sum, mean, std) = mean_std(field);
        self.diag.mass.push(sum);
        self.diag.mean.push(mean);
        self.diag.spatial_std.push(std);
        self.diag
            .negative_sites
            .push(field.iter().filter(|&&x| x < 0.0).count());
        if let Some(k) = self.full_every {
            if sample.is_multiple_of(k) {
                self.snapshots.push(Snapshot {
                    time,
                    field: field.to_vec(),
                });
            }
        }
    }
}

/// Iterates the recurrence for the configured number of steps.
///
/// Slice `m` (time `m·τ`) is recorded whenever `m` is a multiple of the
/// sampling step count; slice 0 is always recorded.
pub fn run(config: &ScenarioConfig) -> Result<Trajectory, SimError> {
    config.validate()?;
    let tau = config.params.tau();
    let mut state = config.initial_state()?;
    let every = config.recorder.sample_steps(tau)?;
    let columns = config.recorded_sites();
    let mut rec = Recorder {
        every,
        full_every: config.recorder.full_field_every,
        series: vec![Vec::new(); columns.len()],
        columns,
        traj_times: Vec::new(),
        snapshots: Vec::new(),
        diag: Diagnostics::default(),
    };
    rec.record(0, tau, &state.slice_prev);
    if rec.every == 1 {
        rec.record(1, tau, &state.slice_curr);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.noise.map(|n| n.seed).unwrap_or(0));
    let mut work = StepWorkspace::default();
    let mut next = vec![0.0; config.sites];
    for n in 0..config.steps {
        let t = state.time();
        let mut forcing = Forcing {
            ramp: config.ramp.as_ref(),
            noise: config.noise.as_ref().map(|cfg| (cfg, &mut rng)),
        };
        let negative = step_into(
            &state.slice_prev,
            &state.slice_curr,
            &config.params,
            &mut forcing,
            t,
            &mut work,
            &mut next,
        )?;
        if let Some(site) = next.iter().position(|x| !x.is_finite()) {
            return Err(SimError::NonFinite {
                step: n + 1,
                site: site + 1,
            });
        }
        if negative > 0 {
            rec.diag.negative_steps += 1;
            rec.diag.first_negative_step.get_or_insert(n + 1);
            if config.clamp_negative {
                next.iter_mut().for_each(|x| *x = x.max(0.0));
            }
        }
        std::mem::swap(&mut state.slice_prev, &mut state.slice_curr);
        std::mem::swap(&mut state.slice_curr, &mut next);
        state.step_index += 1;
        let slice_index = state.step_index + 1;
        if slice_index % rec.every == 0 {
            rec.record(slice_index, tau, &state.slice_curr);
        }
    }
    Ok(Trajectory {
        tau,
        sample_steps: rec.every,
        times: rec.traj_times,
        sites: rec.columns,
        series: rec.series,
        snapshots: rec.snapshots,
        diagnostics: rec.diag,
        final_state: state,
    })
}

/// Runs independent scenarios, in parallel when `mode` allows it.
pub fn run_many(configs: &[ScenarioConfig], mode: ExecMode) -> Vec<Result<Trajectory, SimError>> {
    exec::map(configs, mode, run)
}

/// Parameters of the ramped-density experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampPlan {
    /// Mean scaled density during the hold.
    pub rho_start: f64,
    pub hold_seconds: f64,
    /// Growth of the mean scaled density after the hold, per second.
    pub ramp_rate: f64,
    /// Total simulated time.
    pub duration_seconds: f64,
    pub injection: RampSite,
    /// Noise used when the base scenario has none.
    pub sigma: f64,
}

impl Default for RampPlan {
    fn default() -> Self {
        Self {
            rho_start: 0.01,
            hold_seconds: 7200.0,
            ramp_rate: 0.19 / 7200.0,
            duration_seconds: 15000.0,
            injection: RampSite::Distributed,
            sigma: 1e-5,
        }
    }
}

/// Builds the ramped-density scenario from `base`.
///
/// The ring starts uniform at `rho_start`. After the hold the on-ramp adds
/// `ramp_rate·L·τ` per step, so the spatial mean rises at `ramp_rate` per
/// second. The probe sites are sampled every 20 s; the diagnostics carry the
/// spatial spread needed for onset detection.
pub fn ramped_scenario(base: &ScenarioConfig, plan: &RampPlan) -> Result<ScenarioConfig, SimError> {
    if !(plan.ramp_rate > 0.0 && plan.ramp_rate.is_finite()) {
        return Err(SimError::Config(format!(
            "ramp_rate must be positive, got {}",
            plan.ramp_rate
        )));
    }
    if !(plan.rho_start > 0.0 && plan.hold_seconds >= 0.0 && plan.duration_seconds > 0.0) {
        return Err(SimError::Config(
            "ramp plan needs rho_start > 0, hold ≥ 0, duration > 0".into(),
        ));
    }
    let sites = base.sites;
    let tau = base.params.tau();
    let probe = if sites >= 52 {
        PROBE_SITES.to_vec()
    } else {
        let c = sites / 2;
        (c.saturating_sub(2).max(1)..=(c + 2).min(sites)).collect()
    };
    let noise = base.noise.unwrap_or(NoiseConfig {
        sigma: plan.sigma,
        zero_mean_projection: true,
        seed: 0,
    });
    let scenario = ScenarioConfig {
        sites,
        params: ModelParams {
            rho0: plan.rho_start,
            ..base.params
        },
        initial: InitialCondition::Explicit {
            values: vec![plan.rho_start; sites],
        },
        steps: (plan.duration_seconds / tau).round() as u64,
        ramp: Some(RampConfig {
            q_in: plan.ramp_rate * sites as f64 * tau,
            inflow: plan.injection,
            q_out: 0.0,
            outflow: RampSite::Site(1),
            schedule: Schedule::switch_on(plan.hold_seconds),
        }),
        noise: Some(noise),
        recorder: RecorderConfig {
            sample_interval: 20.0,
            sites: SiteSelection::List(probe),
            full_field_every: base.recorder.full_field_every,
        },
        clamp_negative: base.clamp_negative,
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Points `(ρ*(t), ρ*(t) − ρ*(t−1))` for sample indices `t` in `lo+1 .. hi`.
pub fn phase_portrait(series: &[f64], lo: usize, hi: usize) -> Result<Vec<(f64, f64)>, SimError> {
    if hi > series.len() || hi < lo + 2 {
        return Err(SimError::Window(format!(
            "window {lo}..{hi} invalid for a series of length {}",
            series.len()
        )));
    }
    Ok((lo + 1..hi)
        .map(|t| (series[t], series[t] - series[t - 1]))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attractor {
    Uniform,
    Kink,
    Chaotic,
}

impl std::fmt::Display for Attractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Attractor::Uniform => "uniform",
            Attractor::Kink => "kink",
            Attractor::Chaotic => "chaotic",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub ring_threshold: f64,
    pub spectral_threshold: f64,
    pub amplitude_epsilon: f64,
    /// Tube half-width as a fraction of the mean portrait radius.
    pub tube_fraction: f64,
    pub min_samples: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            ring_threshold: 0.9,
            spectral_threshold: 0.3,
            amplitude_epsilon: 1e-4,
            tube_fraction: 0.25,
            min_samples: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub attractor: Attractor,
    pub peak_to_peak: f64,
    pub ring_score: f64,
    pub spectral_concentration: f64,
    /// Dominant period in samples, if the series oscillates.
    pub period: Option<f64>,
}

/// Classifies a stationary single-site series.
///
/// The ring score is the fraction of phase-portrait points lying in a tube
/// around the mean closed orbit. The orbit is estimated by folding the
/// portrait at the autocorrelation period and taking per-phase medians;
/// coordinates are standardized first. The spectral concentration is the
/// share of Hann-windowed power in the three strongest non-zero bins.
pub fn classify_attractor(
    series: &[f64],
    config: &ClassifierConfig,
) -> Result<Classification, SimError> {
    if series.len() < config.min_samples.max(8) {
        return Err(SimError::Window(format!(
            "need at least {} samples, got {}",
            config.min_samples.max(8),
            series.len()
        )));
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(SimError::Window("series is not finite".into()));
    }
    let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let peak_to_peak = hi - lo;
    if peak_to_peak < config.amplitude_epsilon {
        return Ok(Classification {
            attractor: Attractor::Uniform,
            peak_to_peak,
            ring_score: 0.0,
            spectral_concentration: 0.0,
            period: None,
        });
    }
    let period = dominant_period(series);
    let ring_score = period.map_or(0.0, |p| ring_score(series, p, config.tube_fraction));
    let spectral_concentration = spectral_concentration(series, 3);
    let kink =
        ring_score >= config.ring_threshold && spectral_concentration >= config.spectral_threshold;
    Ok(Classification {
        attractor: if kink {
            Attractor::Kink
        } else {
            Attractor::Chaotic
        },
        peak_to_peak,
        ring_score,
        spectral_concentration,
        period,
    })
}

/// Unbiased autocorrelation (normalized to 1 at lag 0) for lags `0..n`.
pub fn autocorrelation(series: &[f64]) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .map(|&x| Complex::new(x - mean, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(size)
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(size).process(&mut buf);
    buf.iter_mut()
        .for_each(|c| *c = Complex::new(c.norm_sqr(), 0.0));
    planner.plan_fft_inverse(size).process(&mut buf);
    let mut ac: Vec<f64> = (0..n)
        .map(|k| buf[k].re / (size as f64 * (n - k) as f64))
        .collect();
    let c0 = ac[0];
    if c0 > 0.0 {
        ac.iter_mut().for_each(|x| *x /= c0);
    }
    ac
}

/// Lag of the first autocorrelation peak after the first zero crossing,
/// refined by a parabola through the neighbouring lags.
pub fn dominant_period(series: &[f64]) -> Option<f64> {
    let ac = autocorrelation(series);
    let half = ac.len() / 2;
    let first_negative = ac.iter().take(half).position(|&x| x < 0.0)?;
    let (j, _) = ac[first_negative..half]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    let j = j + first_negative;
    if j == 0 || j + 1 >= ac.len() || ac[j] <= 0.0 {
        return None;
    }
    let (y0, y1, y2) = (ac[j - 1], ac[j], ac[j + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom != 0.0 {
        0.5 * (y0 - y2) / denom
    } else {
        0.0
    };
    Some(j as f64 + shift.clamp(-0.5, 0.5))
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    values.iter().map(|v| (v - mean) / sd).collect()
}

/// Fraction of portrait points within `tube_fraction·R̄` of the folded
/// median orbit with period `period` (in samples).
pub fn ring_score(series: &[f64], period: f64, tube_fraction: f64) -> f64 {
    let portrait: Vec<(f64, f64)> = (1..series.len())
        .map(|t| (series[t], series[t] - series[t - 1]))
        .collect();
    let xs = standardize(&portrait.iter().map(|p| p.0).collect::<Vec<_>>());
    let ys = standardize(&portrait.iter().map(|p| p.1).collect::<Vec<_>>());
    let mean_radius = xs.iter().zip(&ys).map(|(x, y)| x.hypot(*y)).sum::<f64>() / xs.len() as f64;

    let bins = (period.round() as usize).max(16);
    let mut bx = vec![Vec::new(); bins];
    let mut by = vec![Vec::new(); bins];
    for (i, (x, y)) in xs.iter().zip(&ys).enumerate() {
        let phase = (i as f64 % period) / period;
        let b = ((phase * bins as f64) as usize).min(bins - 1);
        bx[b].push(*x);
        by[b].push(*y);
    }
    let orbit: Vec<(f64, f64)> = bx
        .iter_mut()
        .zip(by.iter_mut())
        .filter(|(x, _)| !x.is_empty())
        .map(|(x, y)| (median(x), median(y)))
        .collect();
    if orbit.len() < 3 {
        return 0.0;
    }
    let tube = tube_fraction * mean_radius;
    let inside = xs
        .iter()
        .zip(&ys)
        .filter(|&(&x, &y)| distance_to_loop(x, y, &orbit) <= tube)
        .count();
    inside as f64 / xs.len() as f64
}

fn distance_to_loop(x: f64, y: f64, orbit: &[(f64, f64)]) -> f64 {
    let n = orbit.len();
    let mut best = f64::INFINITY;
    for i in 0..n {
        let (ax, ay) = orbit[i];
        let (bx, by) = orbit[(i + 1) % n];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let t = if len2 > 0.0 {
            (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let d2 = (x - ax - t * dx).powi(2) + (y - ay - t * dy).powi(2);
        best = best.min(d2);
    }
    best.sqrt()
}

/// Share of power in the `top` strongest non-zero frequency bins of the
/// Hann-windowed, mean-removed series.
pub fn spectral_concentration(series: &[f64], top: usize) -> f64 {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = series
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).cos();
            Complex::new((x - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut power: Vec<f64> = buf[1..=n / 2].iter().map(|c| c.norm_sqr()).collect();
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    power.sort_by(|a, b| b.total_cmp(a));
    power.iter().take(top).sum::<f64>() / total
}

/// Classifies the final third of a run's single-site series.
pub fn classify_trajectory(
    trajectory: &Trajectory,
    site: usize,
    config: &ClassifierConfig,
) -> Result<Classification, SimError> {
    let series = trajectory
        .site_series(site)
        .ok_or_else(|| SimError::Window(format!("site {site} was not recorded")))?;
    let start = series.len() - series.len() / 3;
    classify_attractor(&series[start..], config)
}
