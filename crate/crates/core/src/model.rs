//! Pointwise mathematics of the density evolution equation.
//!
//! The lattice carries *scaled* densities `ρ* = B·ρ`. The optimal-velocity
//! function is parameterized by the reference density `ρ0`, which is the
//! mean scaled density of the road, and by the safety density `ρc`:
//!
//! ```text
//! V(x) = tanh(2/ρ0 − x/ρ0² − 1/ρc) + tanh(1/ρc)
//! ```
//!
//! One step of the recurrence advances time by `τ = 1/a`:
//!
//! ```text
//! ρ*_j(t+2τ) = ρ*_j(t+τ) + B·C·τ·ρ0²·(γ·Δ²V_j − ΔV_j) + g_j(t) + ξ_j(t)
//! ```
//!
//! with forward differences `ΔV_j = V_{j+1} − V_j` and
//! `Δ²V_j = V_{j+2} − 2V_{j+1} + V_j` taken over the older slice.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ c_l = 1`.
pub const FRACTION_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative (got {value})")]
    Negative { name: &'static str, value: f64 },
    #[error("{name} must be finite")]
    NonFinite { name: &'static str },
    #[error("vehicle class {index}: {reason}")]
    InvalidClass { index: usize, reason: String },
    #[error("mixture has no vehicle classes")]
    EmptyMixture,
    #[error("class fractions sum to {sum}, expected 1")]
    FractionSum { sum: f64 },
    #[error("delay scales must increase strictly with vehicle size (class {index})")]
    NonMonotoneDelay { index: usize },
    #[error("derivative order must be 1, 2 or 3 (got {0})")]
    DerivativeOrder(u8),
    #[error("lattice needs at least 4 sites (got {0})")]
    LatticeTooSmall(usize),
    #[error("slice lengths differ: {prev} vs {curr}")]
    LengthMismatch { prev: usize, curr: usize },
    #[error("site index {site} outside 1..={sites}")]
    SiteOutOfRange { site: usize, sites: usize },
}

fn positive(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NonFinite { name });
    }
    if value <= 0.0 {
        return Err(ModelError::NonPositive { name, value });
    }
    Ok(value)
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, ModelError> {
    if !value.is_finite() {
        return Err(ModelError::NonFinite { name });
    }
    if value < 0.0 {
        return Err(ModelError::Negative { name, value });
    }
    Ok(value)
}

/// Physical description of one vehicle type.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleClass {
    /// Share `c_l` of this class in the traffic mix.
    pub fraction: f64,
    /// Effective projected road area `A_l` of one vehicle.
    pub area: f64,
    /// Maximum speed `v_l^max`.
    pub max_speed: f64,
    /// Delay scale `k_l`, so that `τ_l = k_l·τ`.
    pub delay_scale: f64,
    /// Passing rate `γ_l`.
    pub passing_rate: f64,
}

impl VehicleClass {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(format!(
                "fraction must lie in (0, 1], got {}",
                self.fraction
            ));
        }
        if !(self.area > 0.0 && self.area.is_finite()) {
            return Err(format!("area must be positive, got {}", self.area));
        }
        if !(self.max_speed > 0.0 && self.max_speed.is_finite()) {
            return Err(format!(
                "max_speed must be positive, got {}",
                self.max_speed
            ));
        }
        if !(self.delay_scale > 0.0 && self.delay_scale <= 1.0) {
            return Err(format!(
                "delay_scale must lie in (0, 1], got {}",
                self.delay_scale
            ));
        }
        if !(self.passing_rate >= 0.0 && self.passing_rate.is_finite()) {
            return Err(format!(
                "passing_rate must be non-negative, got {}",
                self.passing_rate
            ));
        }
        Ok(())
    }
}

/// A validated traffic mix. The aggregated coefficients are always derived
/// from the class list, never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    classes: Vec<VehicleClass>,
    road_width: f64,
}

impl Mixture {
    pub fn classes(&self) -> &[VehicleClass] {
        &self.classes
    }

    pub fn road_width(&self) -> f64 {
        self.road_width
    }

    /// Area-occupancy factor `B = Σ c_l A_l / W`.
    pub fn area_occupancy(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.fraction * c.area)
            .sum::<f64>()
            / self.road_width
    }

    /// `C = Σ c_l k_l v_l^max / 2`.
    pub fn flow_coefficient(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.fraction * c.delay_scale * c.max_speed / 2.0)
            .sum()
    }

    /// `D = Σ c_l k_l γ_l v_l^max / 2`.
    pub fn passing_coefficient(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.fraction * c.delay_scale * c.passing_rate * c.max_speed / 2.0)
            .sum()
    }

    /// Effective passing rate `γ = D/C`.
    pub fn passing_rate(&self) -> f64 {
        self.passing_coefficient() / self.flow_coefficient()
    }

    /// Model parameters for this mix at a given reference density, safety
    /// density and sensitivity.
    pub fn params(&self, rho0: f64, rhoc: f64, a: f64) -> Result<ModelParams, ModelError> {
        ModelParams::new(
            self.area_occupancy(),
            self.flow_coefficient(),
            self.passing_rate(),
            rho0,
            rhoc,
            a,
        )
    }
}

/// Aggregates an ordered (small to large) list of vehicle classes on a road
/// of width `road_width` into a [`Mixture`].
pub fn aggregate(classes: &[VehicleClass], road_width: f64) -> Result<Mixture, ModelError> {
    positive("road_width", road_width)?;
    if classes.is_empty() {
        return Err(ModelError::EmptyMixture);
    }
    for (index, class) in classes.iter().enumerate() {
        class
            .validate()
            .map_err(|reason| ModelError::InvalidClass { index, reason })?;
    }
    let sum: f64 = classes.iter().map(|c| c.fraction).sum();
    if (sum - 1.0).abs() > FRACTION_SUM_TOLERANCE {
        return Err(ModelError::FractionSum { sum });
    }
    for (index, pair) in classes.windows(2).enumerate() {
        if pair[1].delay_scale <= pair[0].delay_scale {
            return Err(ModelError::NonMonotoneDelay { index: index + 1 });
        }
    }
    Ok(Mixture {
        classes: classes.to_vec(),
        road_width,
    })
}

/// Complete parameter set of the density evolution equation.
///
/// `rho0` is the reference (mean) scaled density and `rhoc` the safety
/// density of the optimal-velocity function. The delay `τ` is always
/// derived as `1/a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Area-occupancy factor `B`.
    pub b: f64,
    /// Aggregated flow coefficient `C`.
    pub c: f64,
    /// Effective passing rate `γ`.
    pub gamma: f64,
    pub rho0: f64,
    pub rhoc: f64,
    /// Sensitivity `a`.
    pub a: f64,
}

impl ModelParams {
    pub fn new(
        b: f64,
        c: f64,
        gamma: f64,
        rho0: f64,
        rhoc: f64,
        a: f64,
    ) -> Result<Self, ModelError> {
        let params = Self {
            b,
            c,
            gamma,
            rho0,
            rhoc,
            a,
        };
        params.validate()?;
        Ok(params)
    }

    /// The parameter set used throughout the reference runs:
    /// `B = 1.6, C = 0.7, γ = 0.4, ρ0 = ρc = 0.2`, with the given sensitivity.
    pub fn reference(a: f64) -> Self {
        Self {
            b: 1.6,
            c: 0.7,
            gamma: 0.4,
            rho0: 0.2,
            rhoc: 0.2,
            a,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        positive("B", self.b)?;
        positive("C", self.c)?;
        non_negative("gamma", self.gamma)?;
        positive("rho0", self.rho0)?;
        positive("rhoc", self.rhoc)?;
        positive("a", self.a)?;
        Ok(())
    }

    /// Driver delay `τ = 1/a`.
    pub fn tau(&self) -> f64 {
        1.0 / self.a
    }

    pub fn with_a(self, a: f64) -> Self {
        Self { a, ..self }
    }

    pub fn with_rho0(self, rho0: f64) -> Self {
        Self { rho0, ..self }
    }

    pub fn with_b(self, b: f64) -> Self {
        Self { b, ..self }
    }

    pub fn with_gamma(self, gamma: f64) -> Self {
        Self { gamma, ..self }
    }

    /// Optimal-velocity function at this parameter set's reference density.
    pub fn ov(&self) -> OptimalVelocity {
        OptimalVelocity {
            rho0: self.rho0,
            rhoc: self.rhoc,
        }
    }
}

/// The optimal-velocity function for fixed `ρ0` and `ρc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalVelocity {
    rho0: f64,
    rhoc: f64,
}

impl OptimalVelocity {
    pub fn new(rho0: f64, rhoc: f64) -> Result<Self, ModelError> {
        positive("rho0", rho0)?;
        positive("rhoc", rhoc)?;
        Ok(Self { rho0, rhoc })
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    pub fn rhoc(&self) -> f64 {
        self.rhoc
    }

    #[inline]
    fn argument(&self, x: f64) -> f64 {
        2.0 / self.rho0 - x / (self.rho0 * self.rho0) - 1.0 / self.rhoc
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        self.argument(x).tanh() + (1.0 / self.rhoc).tanh()
    }

    /// `dⁿV/dxⁿ` with respect to the function's own argument.
    pub fn derivative(&self, x: f64, order: u8) -> Result<f64, ModelError> {
        let u = self.argument(x);
        let slope = -1.0 / (self.rho0 * self.rho0);
        let th = u.tanh();
        let sech2 = 1.0 - th * th;
        Ok(match order {
            1 => slope * sech2,
            2 => slope.powi(2) * (-2.0 * th * sech2),
            3 => slope.powi(3) * (-2.0 * sech2 * (1.0 - 3.0 * th * th)),
            other => return Err(ModelError::DerivativeOrder(other)),
        })
    }
}

/// `V(ρ*) = tanh(2/ρ0 − ρ*/ρ0² − 1/ρc) + tanh(1/ρc)`.
pub fn optimal_velocity(rho_star: f64, rho0: f64, rhoc: f64) -> Result<f64, ModelError> {
    Ok(OptimalVelocity::new(rho0, rhoc)?.value(rho_star))
}

/// `dⁿ V(Bρ) / dρⁿ` evaluated at `ρ = ρ0`, including the inner chain-rule
/// factor `Bⁿ`.
pub fn ov_derivatives(rho0: f64, rhoc: f64, b: f64, order: u8) -> Result<f64, ModelError> {
    positive("B", b)?;
    let ov = OptimalVelocity::new(rho0, rhoc)?;
    Ok(b.powi(order as i32) * ov.derivative(b * rho0, order)?)
}

/// Piecewise-linear multiplier on the ramp flows as a function of time.
///
/// Knots are `(time, multiplier)` pairs sorted by time; two knots at the
/// same time form a jump. Before the first and after the last knot the
/// multiplier is held constant. An empty schedule means a constant 1.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Schedule {
    pub knots: Vec<(f64, f64)>,
}

impl Schedule {
    pub fn constant() -> Self {
        Self { knots: Vec::new() }
    }

    /// Zero before `start`, one from `start` on.
    pub fn switch_on(start: f64) -> Self {
        Self {
            knots: vec![(start, 0.0), (start, 1.0)],
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let knots = &self.knots;
        match knots.len() {
            0 => 1.0,
            _ if t < knots[0].0 => knots[0].1,
            _ => {
                // last knot with time <= t
                let i = knots.partition_point(|k| k.0 <= t) - 1;
                match knots.get(i + 1) {
                    None => knots[i].1,
                    Some(&(t1, m1)) => {
                        let (t0, m0) = knots[i];
                        m0 + (m1 - m0) * (t - t0) / (t1 - t0)
                    }
                }
            }
        }
    }

    /// Earliest time at which the multiplier becomes non-zero.
    pub fn first_active(&self) -> Option<f64> {
        if self.knots.is_empty() {
            return Some(f64::NEG_INFINITY);
        }
        if self.knots[0].1 != 0.0 {
            return Some(f64::NEG_INFINITY);
        }
        self.knots
            .windows(2)
            .find(|w| w[1].1 != 0.0)
            .map(|w| w[0].0)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for w in self.knots.windows(2) {
            if w[1].0 < w[0].0 {
                return Err(ModelError::NonFinite {
                    name: "schedule knots must be sorted",
                });
            }
        }
        if self
            .knots
            .iter()
            .any(|k| !k.0.is_finite() || !k.1.is_finite())
        {
            return Err(ModelError::NonFinite {
                name: "schedule knot",
            });
        }
        Ok(())
    }
}

/// Where a ramp adds or removes vehicles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RampSite {
    /// A single lattice site, 1-indexed.
    Site(usize),
    /// The flow is spread evenly over every site.
    Distributed,
}

/// On/off-ramp forcing `g_j(t) = q_in·δ(j − j_in) − q_out·δ(j − j_out)`,
/// each flow modulated by the schedule. Flows are per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RampConfig {
    pub q_in: f64,
    pub inflow: RampSite,
    #[serde(default)]
    pub q_out: f64,
    #[serde(default = "default_outflow")]
    pub outflow: RampSite,
    #[serde(default)]
    pub schedule: Schedule,
}

fn default_outflow() -> RampSite {
    RampSite::Site(1)
}

impl RampConfig {
    pub fn validate(&self, sites: usize) -> Result<(), ModelError> {
        non_negative("q_in", self.q_in)?;
        non_negative("q_out", self.q_out)?;
        for site in [self.inflow, self.outflow] {
            if let RampSite::Site(j) = site {
                if j == 0 || j > sites {
                    return Err(ModelError::SiteOutOfRange { site: j, sites });
                }
            }
        }
        self.schedule.validate()
    }
}

fn site_share(site: RampSite, j: usize, sites: usize) -> f64 {
    match site {
        RampSite::Site(s) if s == j => 1.0,
        RampSite::Site(_) => 0.0,
        RampSite::Distributed => 1.0 / sites as f64,
    }
}

/// Density increment contributed by the ramp at 1-indexed site `j` on a
/// lattice of `sites` sites at time `t`.
pub fn ramp_term(ramp: Option<&RampConfig>, j: usize, sites: usize, t: f64) -> f64 {
    let Some(ramp) = ramp else { return 0.0 };
    let m = ramp.schedule.at(t);
    m * (ramp.q_in * site_share(ramp.inflow, j, sites)
        - ramp.q_out * site_share(ramp.outflow, j, sites))
}

/// Additive Gaussian white noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Standard deviation per site per step.
    pub sigma: f64,
    /// Subtract the spatial mean of every draw so the noise carries no mass.
    #[serde(default = "default_true")]
    pub zero_mean_projection: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_true() -> bool {
    true
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            sigma: 1e-3,
            zero_mean_projection: true,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        non_negative("sigma", self.sigma).map(|_| ())
    }
}

/// Fills `out` with one noise draw per site.
pub fn noise_into<R: Rng + ?Sized>(noise: &NoiseConfig, rng: &mut R, out: &mut [f64]) {
    if noise.sigma == 0.0 {
        out.fill(0.0);
        return;
    }
    for x in out.iter_mut() {
        let z: f64 = StandardNormal.sample(rng);
        *x = noise.sigma * z;
    }
    if noise.zero_mean_projection && !out.is_empty() {
        let mean = out.iter().sum::<f64>() / out.len() as f64;
        out.iter_mut().for_each(|x| *x -= mean);
    }
}

pub fn noise_term<R: Rng + ?Sized>(noise: &NoiseConfig, sites: usize, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; sites];
    noise_into(noise, rng, &mut out);
    out
}

/// Stochastic forcing for one step.
pub struct Forcing<'a, R: Rng + ?Sized> {
    pub ramp: Option<&'a RampConfig>,
    pub noise: Option<(&'a NoiseConfig, &'a mut R)>,
}

impl<'a> Forcing<'a, rand_chacha::ChaCha8Rng> {
    pub fn none() -> Self {
        Self {
            ramp: None,
            noise: None,
        }
    }
}

/// Result of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub next: Vec<f64>,
    /// Number of sites with negative density in the new slice.
    pub negative_sites: usize,
}

/// Reusable buffers for [`step_into`].
#[derive(Debug, Clone, Default)]
pub struct StepWorkspace {
    velocity: Vec<f64>,
    noise: Vec<f64>,
}

/// Mean scaled density of a slice.
pub fn spatial_mean(slice: &[f64]) -> f64 {
    slice.iter().sum::<f64>() / slice.len() as f64
}

fn check_slices(prev: &[f64], curr: &[f64]) -> Result<(), ModelError> {
    if prev.len() != curr.len() {
        return Err(ModelError::LengthMismatch {
            prev: prev.len(),
            curr: curr.len(),
        });
    }
    if curr.len() < 4 {
        return Err(ModelError::LatticeTooSmall(curr.len()));
    }
    Ok(())
}

/// Advances the recurrence by one step, writing the slice at `t + 2τ` into
/// `out`. `t` is the time of the older slice `prev`. Returns the number of
/// negative sites in the new slice.
///
/// The reference density `ρ0` in the optimal-velocity function and the
/// prefactor is the spatial mean of `curr`; `params.rho0` is not used.
pub fn step_into<R: Rng + ?Sized>(
    prev: &[f64],
    curr: &[f64],
    params: &ModelParams,
    forcing: &mut Forcing<'_, R>,
    t: f64,
    work: &mut StepWorkspace,
    out: &mut [f64],
) -> Result<usize, ModelError> {
    check_slices(prev, curr)?;
    let n = curr.len();
    if out.len() != n {
        return Err(ModelError::LengthMismatch {
            prev: n,
            curr: out.len(),
        });
    }
    let rho0 = spatial_mean(curr);
    let ov = OptimalVelocity::new(rho0, params.rhoc)?;
    work.velocity.clear();
    work.velocity.extend(prev.iter().map(|&x| ov.value(x)));
    let v = &work.velocity;
    let k = params.b * params.c * params.tau() * rho0 * rho0;
    let g = params.gamma;
    for j in 0..n {
        let v0 = v[j];
        let v1 = v[(j + 1) % n];
        let v2 = v[(j + 2) % n];
        let first = v1 - v0;
        let second = v2 - 2.0 * v1 + v0;
        out[j] = curr[j] + k * (g * second - first);
    }
    if let Some(ramp) = forcing.ramp {
        let m = ramp.schedule.at(t);
        if m != 0.0 {
            for (j, x) in out.iter_mut().enumerate() {
                *x += m
                    * (ramp.q_in * site_share(ramp.inflow, j + 1, n)
                        - ramp.q_out * site_share(ramp.outflow, j + 1, n));
            }
        }
    }
    if let Some((noise, rng)) = forcing.noise.as_mut() {
        work.noise.resize(n, 0.0);
        noise_into(noise, &mut **rng, &mut work.noise);
        out.iter_mut().zip(&work.noise).for_each(|(x, xi)| *x += xi);
    }
    Ok(out.iter().filter(|&&x| x < 0.0).count())
}

/// Allocating wrapper around [`step_into`].
pub fn step<R: Rng + ?Sized>(
    prev: &[f64],
    curr: &[f64],
    params: &ModelParams,
    forcing: &mut Forcing<'_, R>,
    t: f64,
) -> Result<StepOutput, ModelError> {
    check_slices(prev, curr)?;
    let mut out = vec![0.0; curr.len()];
    let negative_sites = step_into(
        prev,
        curr,
        params,
        forcing,
        t,
        &mut StepWorkspace::default(),
        &mut out,
    )?;
    Ok(StepOutput {
        next: out,
        negative_sites,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn class(
        fraction: f64,
        area: f64,
        max_speed: f64,
        delay_scale: f64,
        passing_rate: f64,
    ) -> VehicleClass {
        VehicleClass {
            fraction,
            area,
            max_speed,
            delay_scale,
            passing_rate,
        }
    }

    #[test]
    fn ov_zero_argument_gives_offset() {
        let (rho0, rhoc) = (0.2, 0.25);
        let x = 2.0 * rho0 - rho0 * rho0 / rhoc;
        let v = optimal_velocity(x, rho0, rhoc).unwrap();
        assert!((v - (1.0 / rhoc).tanh()).abs() < 1e-13);
    }

    #[test]
    fn ov_reference_values() {
        // argument 10 − 8 − 5 = −3
        let v = optimal_velocity(0.32, 0.2, 0.2).unwrap();
        assert!((v - ((-3.0f64).tanh() + 5.0f64.tanh())).abs() < 1e-15);
        assert!((v - 0.004_854_450_575_864_68).abs() < 1e-15, "{v}");
        let v = optimal_velocity(0.2, 0.2, 0.2).unwrap();
        assert!((v - 0.999_909).abs() < 5e-7, "{v}");
        let ov = OptimalVelocity::new(0.2, 0.2).unwrap();
        assert!(ov.derivative(0.2, 2).unwrap().abs() < 1e-9);
    }

    #[test]
    fn ov_rejects_bad_densities() {
        assert!(optimal_velocity(0.1, 0.0, 0.2).is_err());
        assert!(optimal_velocity(0.1, 0.2, -1.0).is_err());
        assert!(ov_derivatives(0.2, 0.2, 1.6, 4).is_err());
    }

    #[test]
    fn ov_bounds_and_monotone() {
        let ov = OptimalVelocity::new(0.2, 0.2).unwrap();
        let lo = (5.0f64).tanh() - 1.0;
        let hi = (5.0f64).tanh() + 1.0;
        let mut last = f64::INFINITY;
        for i in 0..1000 {
            let x = 0.4 * i as f64 / 999.0;
            let v = ov.value(x);
            assert!(v < last, "not strictly decreasing at {x}");
            assert!(v >= lo && v <= hi);
            last = v;
        }
    }

    #[test]
    fn chain_rule_derivative_reference() {
        let d1 = ov_derivatives(0.2, 0.2, 1.6, 1).unwrap();
        let expected = -(1.6 / 0.04) / (3.0f64).cosh().powi(2);
        assert!((d1 - expected).abs() < 1e-14);
        assert!((d1 + 0.394_641_486_617_607_65).abs() < 1e-14, "{d1}");
        // at the inflection point the second derivative vanishes
        assert!(ov_derivatives(0.2, 0.2, 1.0, 2).unwrap().abs() < 1e-9);
        assert!((ov_derivatives(0.2, 0.2, 1.0, 1).unwrap() + 25.0).abs() < 1e-12);
        assert!((ov_derivatives(0.2, 0.2, 1.0, 3).unwrap() - 2.0 / 0.2f64.powi(6)).abs() < 1e-6);
    }

    #[test]
    fn chain_rule_matches_argument_derivative() {
        let ov = OptimalVelocity::new(0.15, 0.2).unwrap();
        for order in 1..=3u8 {
            let chain = ov_derivatives(0.15, 0.2, 1.3, order).unwrap();
            let arg = ov.derivative(1.3 * 0.15, order).unwrap();
            assert!(
                (chain - 1.3f64.powi(order as i32) * arg).abs() <= 1e-12 * chain.abs().max(1.0)
            );
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for &rho0 in &[0.05, 0.1, 0.2, 0.3] {
            for &rhoc in &[0.15, 0.2, 0.25] {
                for &b in &[1.0, 1.3, 1.6] {
                    let h = 1e-6;
                    for order in 1..=3u8 {
                        let lower = |r: f64| -> f64 {
                            if order == 1 {
                                // V(Bρ) with the reference density held fixed
                                OptimalVelocity::new(rho0, rhoc).unwrap().value(b * r)
                            } else {
                                let ov = OptimalVelocity::new(rho0, rhoc).unwrap();
                                b.powi(order as i32 - 1) * ov.derivative(b * r, order - 1).unwrap()
                            }
                        };
                        let fd = (lower(rho0 + h) - lower(rho0 - h)) / (2.0 * h);
                        let exact = ov_derivatives(rho0, rhoc, b, order).unwrap();
                        let scale = exact
                            .abs()
                            .max(1e-6 * b.powi(order as i32) / rho0.powi(2 * order as i32));
                        assert!(
                            (fd - exact).abs() <= 1e-6 * scale,
                            "order {order} rho0 {rho0} rhoc {rhoc} b {b}: fd {fd} exact {exact}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn single_class_mixture() {
        let w = 2.0;
        let m = aggregate(&[class(1.0, 1.6 * w, 1.4, 1.0, 0.4)], w).unwrap();
        assert!((m.area_occupancy() - 1.6).abs() < 1e-15);
        assert!((m.flow_coefficient() - 0.7).abs() < 1e-15);
        assert!((m.passing_coefficient() - 0.28).abs() < 1e-15);
        assert!((m.passing_rate() - 0.4).abs() < 1e-15);
        let p = m.params(0.2, 0.2, 3.5).unwrap();
        assert!((p.tau() * p.a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_class_mixture() {
        let m = aggregate(
            &[
                class(0.5, 1.0, 2.0, 0.5, 0.0),
                class(0.5, 2.0, 1.0, 1.0, 0.0),
            ],
            1.0,
        )
        .unwrap();
        assert!((m.flow_coefficient() - 0.5).abs() < 1e-15);
        assert_eq!(m.passing_coefficient(), 0.0);
        assert_eq!(m.passing_rate(), 0.0);
        assert!((m.area_occupancy() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn equal_passing_rates_carry_through() {
        let g = 0.137;
        let m = aggregate(
            &[
                class(0.2, 3.0, 1.1, 0.3, g),
                class(0.5, 5.0, 2.3, 0.6, g),
                class(0.3, 9.0, 0.8, 0.9, g),
            ],
            7.0,
        )
        .unwrap();
        assert!((m.passing_rate() - g).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_reduction() {
        let m = aggregate(&[class(1.0, 3.0, 1.8, 0.7, 0.25)], 3.0).unwrap();
        assert!((m.area_occupancy() - 1.0).abs() < 1e-15);
        assert!((m.flow_coefficient() - 0.7 * 1.8 / 2.0).abs() < 1e-15);
        assert!((m.passing_rate() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn aggregate_validation() {
        assert_eq!(aggregate(&[], 1.0), Err(ModelError::EmptyMixture));
        assert!(matches!(
            aggregate(
                &[
                    class(0.5, 1.0, 1.0, 0.5, 0.0),
                    class(0.4, 1.0, 1.0, 1.0, 0.0)
                ],
                1.0
            ),
            Err(ModelError::FractionSum { .. })
        ));
        assert!(matches!(
            aggregate(
                &[
                    class(0.5, 1.0, 1.0, 0.8, 0.0),
                    class(0.5, 1.0, 1.0, 0.8, 0.0)
                ],
                1.0
            ),
            Err(ModelError::NonMonotoneDelay { index: 1 })
        ));
        assert!(matches!(
            aggregate(&[class(1.0, 1.0, 1.0, 1.5, 0.0)], 1.0),
            Err(ModelError::InvalidClass { index: 0, .. })
        ));
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(1.6, 0.7, 0.4, 0.2, 0.2, 0.0).is_err());
        assert!(ModelParams::new(1.6, 0.7, -0.1, 0.2, 0.2, 1.0).is_err());
        assert!(ModelParams::new(1.6, 0.7, 0.4, 0.2, 0.2, 3.5).is_ok());
    }

    #[test]
    fn schedule_interpolation() {
        let s = Schedule {
            knots: vec![(10.0, 0.0), (20.0, 2.0), (20.0, 5.0), (30.0, 5.0)],
        };
        assert_eq!(s.at(0.0), 0.0);
        assert_eq!(s.at(15.0), 1.0);
        assert_eq!(s.at(20.0), 5.0);
        assert_eq!(s.at(100.0), 5.0);
        let on = Schedule::switch_on(7200.0);
        assert_eq!(on.at(7199.9), 0.0);
        assert_eq!(on.at(7200.0), 1.0);
        assert_eq!(on.first_active(), Some(7200.0));
        assert_eq!(Schedule::constant().at(3.0), 1.0);
    }

    #[test]
    fn ramp_term_kronecker() {
        assert_eq!(ramp_term(None, 3, 10, 5.0), 0.0);
        let ramp = RampConfig {
            q_in: 1e-4,
            inflow: RampSite::Site(1),
            q_out: 3e-5,
            outflow: RampSite::Site(4),
            schedule: Schedule::switch_on(100.0),
        };
        assert_eq!(ramp_term(Some(&ramp), 1, 10, 50.0), 0.0);
        assert_eq!(ramp_term(Some(&ramp), 1, 10, 150.0), 1e-4);
        assert_eq!(ramp_term(Some(&ramp), 4, 10, 150.0), -3e-5);
        assert_eq!(ramp_term(Some(&ramp), 2, 10, 150.0), 0.0);
        let same = RampConfig {
            outflow: RampSite::Site(1),
            ..ramp.clone()
        };
        assert!((ramp_term(Some(&same), 1, 10, 150.0) - 7e-5).abs() < 1e-18);
        let spread = RampConfig {
            inflow: RampSite::Distributed,
            q_out: 0.0,
            ..ramp
        };
        assert!((ramp_term(Some(&spread), 7, 10, 150.0) - 1e-5).abs() < 1e-20);
        assert!(spread.validate(10).is_ok());
        assert!(RampConfig {
            inflow: RampSite::Site(11),
            ..spread
        }
        .validate(10)
        .is_err());
    }

    #[test]
    fn noise_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let zero = NoiseConfig {
            sigma: 0.0,
            ..Default::default()
        };
        assert!(noise_term(&zero, 50, &mut rng).iter().all(|&x| x == 0.0));
        let projected = NoiseConfig {
            sigma: 1e-3,
            zero_mean_projection: true,
            seed: 1,
        };
        for _ in 0..20 {
            let v = noise_term(&projected, 100, &mut rng);
            assert!(v.iter().sum::<f64>().abs() < 1e-15);
        }
        let raw = NoiseConfig {
            zero_mean_projection: false,
            ..projected
        };
        let draws = noise_term(&raw, 100_000, &mut rng);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64;
        assert!((var / 1e-6 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn uniform_state_is_fixed_point() {
        let p = ModelParams::reference(3.5);
        let s = vec![0.2; 12];
        let out = step(&s, &s, &p, &mut Forcing::none(), 0.0).unwrap();
        assert!(out.next.iter().all(|&x| (x - 0.2).abs() < 1e-16));
        assert_eq!(out.negative_sites, 0);
    }

    #[test]
    fn step_matches_closed_form() {
        // straight-line evaluation of the update with ρ0 = 0.2, B·C·τ·ρ0² = 1.6·0.7/3.5·0.04
        let prev = [0.25, 0.15, 0.2, 0.2];
        let p = ModelParams::reference(3.5);
        let out = step(&prev, &prev, &p, &mut Forcing::none(), 0.0)
            .unwrap()
            .next;
        let v = |x: f64| (2.0 / 0.2 - x / 0.04 - 5.0f64).tanh() + 5.0f64.tanh();
        let vv = [v(0.25), v(0.15), v(0.2), v(0.2)];
        let k = 1.6 * 0.7 * (1.0 / 3.5) * 0.04;
        let expected = [
            0.25 + k * (0.4 * (vv[2] - 2.0 * vv[1] + vv[0]) - (vv[1] - vv[0])),
            0.15 + k * (0.4 * (vv[3] - 2.0 * vv[2] + vv[1]) - (vv[2] - vv[1])),
            0.2 + k * (0.4 * (vv[0] - 2.0 * vv[3] + vv[2]) - (vv[3] - vv[2])),
            0.2 + k * (0.4 * (vv[1] - 2.0 * vv[0] + vv[3]) - (vv[0] - vv[3])),
        ];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        // 30-digit mpmath evaluation of the same update
        let frozen = [
            0.215254302107340271713755641990853,
            0.165201242828038631125231906629022,
            0.195656787763417533964219455248853,
            0.223887667301203563196792996131257,
        ];
        for (a, b) in out.iter().zip(frozen) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn step_errors() {
        let p = ModelParams::reference(3.5);
        assert!(matches!(
            step(&[0.2; 5], &[0.2; 6], &p, &mut Forcing::none(), 0.0),
            Err(ModelError::LengthMismatch { .. })
        ));
        assert_eq!(
            step(&[0.2; 3], &[0.2; 3], &p, &mut Forcing::none(), 0.0),
            Err(ModelError::LatticeTooSmall(3))
        );
    }

    #[test]
    fn negative_sites_are_flagged_not_clamped() {
        let p = ModelParams::reference(3.5);
        let s = [0.2, -0.2, 0.2, 0.2, 0.2];
        let out = step(&s, &s, &p, &mut Forcing::none(), 0.0).unwrap();
        assert!(out.negative_sites >= 1);
        assert!(out.next.iter().any(|&x| x < 0.0));
    }

    #[test]
    fn mass_conserved_over_long_run() {
        let p = ModelParams::reference(3.5);
        let mut prev: Vec<f64> = (0..100)
            .map(|j| 0.2 + 0.05 * ((j as f64) * 0.37).sin())
            .collect();
        let mut curr = prev.clone();
        let mass0: f64 = curr.iter().sum();
        let mut work = StepWorkspace::default();
        let mut out = vec![0.0; 100];
        let mut forcing = Forcing::none();
        for n in 0..100_000 {
            step_into(
                &prev,
                &curr,
                &p,
                &mut forcing,
                n as f64 * p.tau(),
                &mut work,
                &mut out,
            )
            .unwrap();
            std::mem::swap(&mut prev, &mut curr);
            std::mem::swap(&mut curr, &mut out);
        }
        let mass: f64 = curr.iter().sum();
        assert!(((mass - mass0) / mass0).abs() < 1e-12, "{mass} vs {mass0}");
    }

    #[test]
    fn ramp_and_noise_enter_additively() {
        let p = ModelParams::reference(5.0);
        let s = vec![0.2; 10];
        let ramp = RampConfig {
            q_in: 1e-3,
            inflow: RampSite::Site(3),
            q_out: 0.0,
            outflow: RampSite::Site(1),
            schedule: Schedule::constant(),
        };
        let mut forcing: Forcing<'_, ChaCha8Rng> = Forcing {
            ramp: Some(&ramp),
            noise: None,
        };
        let out = step(&s, &s, &p, &mut forcing, 0.0).unwrap().next;
        assert!((out[2] - 0.201).abs() < 1e-15);
        assert!((out.iter().sum::<f64>() - 2.001).abs() < 1e-14);

        let noise = NoiseConfig {
            sigma: 1e-3,
            zero_mean_projection: true,
            seed: 4,
        };
        let mut r1 = ChaCha8Rng::seed_from_u64(4);
        let mut r2 = ChaCha8Rng::seed_from_u64(4);
        let a = step(
            &s,
            &s,
            &p,
            &mut Forcing {
                ramp: None,
                noise: Some((&noise, &mut r1)),
            },
            0.0,
        )
        .unwrap();
        let b = step(
            &s,
            &s,
            &p,
            &mut Forcing {
                ramp: None,
                noise: Some((&noise, &mut r2)),
            },
            0.0,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!((a.next.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn conservation_and_translation(
            values in prop::collection::vec(0.1f64..0.3, 6..40),
            shift in 0usize..40,
            a in 1.0f64..8.0,
            gamma in 0.0f64..0.5,
        ) {
            let n = values.len();
            let shift = shift % n;
            let p = ModelParams { gamma, ..ModelParams::reference(a) };
            let prev = values.clone();
            let mut curr = values.clone();
            curr.rotate_left(1);
            let out = step(&prev, &curr, &p, &mut Forcing::none(), 0.0).unwrap().next;
            let s0: f64 = curr.iter().sum();
            let s1: f64 = out.iter().sum();
            prop_assert!((s1 - s0).abs() <= 1e-13 * s0);

            let mut prev_r = prev.clone();
            prev_r.rotate_right(shift);
            let mut curr_r = curr.clone();
            curr_r.rotate_right(shift);
            let out_r = step(&prev_r, &curr_r, &p, &mut Forcing::none(), 0.0).unwrap().next;
            let mut expected = out.clone();
            expected.rotate_right(shift);
            for (x, y) in out_r.iter().zip(&expected) {
                prop_assert!((x - y).abs() < 1e-14);
            }
        }
    }
}
