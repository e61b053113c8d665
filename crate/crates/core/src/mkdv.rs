//! Nonlinear analysis near the critical point: reductive-perturbation
//! coefficients, the kink solution of the modified KdV equation, its
//! propagation velocity and the coexisting curves.
//!
//! Optimal-velocity derivatives are taken with respect to the function's
//! own argument at `x = ρ0`; the powers of `B` in the coefficient formulas
//! supply the chain rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, ModelParams};
use crate::stability::{self, StabilityError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MkdvError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("passing rate must be non-negative (got {0})")]
    NegativeGamma(f64),
    #[error("no kink solution for gamma = {0} (needs 13γ + 14γ² < 1)")]
    NoKink(f64),
    #[error("singular coefficients: 2·b2·b4 − 3·b1·b5 vanishes")]
    Singular,
    #[error("tau below the critical delay (epsilon² = {0})")]
    BelowCritical(f64),
    #[error("kink amplitude is not real (b1·mu/b2 = {0})")]
    ImaginaryAmplitude(f64),
    #[error("grid under-resolved: {0}")]
    Grid(String),
}

/// True iff `13γ + 14γ² < 1`, i.e. `γ < 1/14`.
pub fn kink_exists(gamma: f64) -> Result<bool, MkdvError> {
    if !(gamma >= 0.0) {
        return Err(MkdvError::NegativeGamma(gamma));
    }
    Ok(existence_margin(gamma) > 0.0)
}

/// `1 − 13γ − 14γ²`, evaluated as `(1 − 14γ)(1 + γ)` so the root is exact.
pub fn existence_margin(gamma: f64) -> f64 {
    (1.0 - 14.0 * gamma) * (1.0 + gamma)
}

/// `(V′, V″, V‴)` at `x = ρ0`.
fn ov_triple(params: &ModelParams) -> Result<(f64, f64, f64), ModelError> {
    let ov = params.ov();
    let x = params.rho0;
    Ok((
        ov.derivative(x, 1)?,
        ov.derivative(x, 2)?,
        ov.derivative(x, 3)?,
    ))
}

/// Coefficients of the expanded equation up to fifth order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HCoeffs {
    pub h: [f64; 10],
}

impl HCoeffs {
    /// `h_i` with the usual 1-based numbering.
    pub fn get(&self, i: usize) -> f64 {
        self.h[i - 1]
    }
}

/// Evaluates the ten `h_i` at `params.rho0` for wave speed `b` and delay
/// `tau` (`params.a` is ignored).
pub fn h_coeffs(params: &ModelParams, b: f64, tau: f64) -> Result<HCoeffs, MkdvError> {
    let (v1, v2, v3) = ov_triple(params)?;
    let (bb, c, g, r2) = (params.b, params.c, params.gamma, params.rho0 * params.rho0);
    let s1 = bb * c * r2 * v1;
    let s2 = bb * bb * c * r2 * v2;
    let s3 = bb.powi(3) * c * r2 * v3;
    Ok(HCoeffs {
        h: [
            b + s1,
            1.5 * b * b * tau + 0.5 * (1.0 - 2.0 * g) * s1,
            s2 / 2.0,
            7.0 * b.powi(3) * tau * tau / 6.0 + s1 / 6.0 - g * s1,
            s2 * (1.0 - 2.0 * g) / 4.0,
            s3 / 6.0,
            3.0 * b * tau,
            5.0 * b.powi(4) * tau.powi(3) / 8.0 + s1 / 24.0 - 7.0 * g * s1 / 12.0,
            s2 * (1.0 - 6.0 * g) / 12.0,
            s3 * (1.0 - 2.0 * g) / 12.0,
        ],
    })
}

/// Wave speed and delay at the critical point `ρ0 = ρc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub rho_c: f64,
    /// `b = −B·C·ρc²·V′`.
    pub b: f64,
    /// `τc = (1 − 2γ)/(3b)`, the inverse of the neutral-curve apex.
    pub tau_c: f64,
}

pub fn critical_point(params: &ModelParams) -> Result<CriticalPoint, MkdvError> {
    let at = params.with_rho0(params.rhoc);
    let b = -stability::slope_product(&at)?;
    let a_apex = stability::neutral_a(&at)?;
    Ok(CriticalPoint {
        rho_c: params.rhoc,
        b,
        tau_c: 1.0 / a_apex,
    })
}

/// Coefficients of the mKdV equation with its first correction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BCoeffs {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub b4: f64,
    pub b5: f64,
}

impl BCoeffs {
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            b1: lambda * self.b1,
            b2: lambda * self.b2,
            b3: lambda * self.b3,
            b4: lambda * self.b4,
            b5: lambda * self.b5,
        }
    }
}

/// Evaluates `b1..b5` at `ρ0 = ρc` and the given `tau_c`, with
/// `b = −B·C·ρc²·V′`.
pub fn b_coeffs(params: &ModelParams, tau_c: f64) -> Result<BCoeffs, MkdvError> {
    let at = params.with_rho0(params.rhoc);
    let (v1, _, v3) = ov_triple(&at)?;
    let (bb, c, g, r2) = (at.b, at.c, at.gamma, at.rhoc * at.rhoc);
    let s1 = bb * c * r2 * v1;
    let s3 = bb.powi(3) * c * r2 * v3;
    let b = -s1;
    let b1 = -7.0 / 6.0 * b.powi(3) * tau_c * tau_c - s1 / 6.0 + s1 * g;
    let b2 = s3 / 6.0;
    Ok(BCoeffs {
        b1,
        b2,
        b3: 1.5 * b * b * tau_c,
        b4: 5.0 / 8.0 * b.powi(4) * tau_c.powi(3) + s1 / 24.0 - 7.0 / 12.0 * s1 * g
            + 3.0 * b * tau_c * b1,
        b5: s3 * (1.0 - 2.0 * g) / 12.0 - 3.0 * b * tau_c * b2,
    })
}

/// Propagation velocity `μ = 5·b2·b3/(2·b2·b4 − 3·b1·b5)`.
pub fn mu(bc: &BCoeffs) -> Result<f64, MkdvError> {
    let denom = 2.0 * bc.b2 * bc.b4 - 3.0 * bc.b1 * bc.b5;
    let scale = (2.0 * bc.b2 * bc.b4).abs().max((3.0 * bc.b1 * bc.b5).abs());
    if denom == 0.0 || denom.abs() <= 1e-14 * scale {
        return Err(MkdvError::Singular);
    }
    Ok(5.0 * bc.b2 * bc.b3 / denom)
}

/// Kink solution at a given sensitivity below the neutral apex.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinkSolution {
    pub mu: f64,
    /// `ε² = τ/τc − 1`.
    pub epsilon_sq: f64,
    /// Half the jump in scaled density across the kink.
    pub amplitude: f64,
    pub rho_c: f64,
    pub b: f64,
    pub tau_c: f64,
    pub coeffs: BCoeffs,
}

/// Builds the kink for `params` (sensitivity `params.a`).
///
/// The amplitude of the raw-density field is `sqrt(b1·ε²·μ/b2)`; the
/// stored amplitude is `B` times that, in lattice units.
pub fn kink_solution(params: &ModelParams) -> Result<KinkSolution, MkdvError> {
    if !kink_exists(params.gamma)? {
        return Err(MkdvError::NoKink(params.gamma));
    }
    let cp = critical_point(params)?;
    let coeffs = b_coeffs(params, cp.tau_c)?;
    let mu = mu(&coeffs)?;
    let epsilon_sq = params.tau() / cp.tau_c - 1.0;
    if epsilon_sq < -1e-12 {
        return Err(MkdvError::BelowCritical(epsilon_sq));
    }
    let ratio = coeffs.b1 * mu / coeffs.b2;
    if ratio < 0.0 {
        return Err(MkdvError::ImaginaryAmplitude(ratio));
    }
    Ok(KinkSolution {
        mu,
        epsilon_sq: epsilon_sq.max(0.0),
        amplitude: params.b * (ratio * epsilon_sq.max(0.0)).sqrt(),
        rho_c: cp.rho_c,
        b: cp.b,
        tau_c: cp.tau_c,
        coeffs,
    })
}

/// `ρ* = ρc + α·tanh(√(μ/2)·(X − μ·b1·T))`.
pub fn kink_profile(x: f64, t: f64, solution: &KinkSolution) -> f64 {
    let k = (0.5 * solution.mu).sqrt();
    solution.rho_c + solution.amplitude * (k * (x - solution.mu * solution.coeffs.b1 * t)).tanh()
}

/// Normalized kink `R′ = scale·√μ·tanh(√(μ/2)(X − μT′))`.
pub fn normalized_kink(x: f64, t: f64, mu: f64, scale: f64) -> f64 {
    scale * mu.sqrt() * ((0.5 * mu).sqrt() * (x - mu * t)).tanh()
}

/// Uniform grid on `[x_min, x_max]` used by [`mkdv_residual`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
    /// Time at which the residual is evaluated.
    pub t: f64,
}

impl ResidualGrid {
    pub fn spacing(&self) -> f64 {
        (self.x_max - self.x_min) / (self.points - 1) as f64
    }
}

/// Minimum points per kink width `1/√μ`.
pub const MIN_POINTS_PER_WIDTH: f64 = 20.0;

/// Maximum of `|∂T′R − ∂X³R + ∂X R³|` over interior grid points, for the
/// normalized kink with amplitude multiplied by `scale`.
///
/// Spatial derivatives use fourth-order central stencils on the grid; the
/// time derivative uses the same first-derivative stencil with step `h`.
pub fn mkdv_residual(mu: f64, scale: f64, grid: &ResidualGrid) -> Result<f64, MkdvError> {
    if !(mu > 0.0) {
        return Err(MkdvError::Grid(format!("mu must be positive, got {mu}")));
    }
    if grid.points < 16 || !(grid.x_max > grid.x_min) {
        return Err(MkdvError::Grid(
            "need at least 16 points on a non-empty interval".into(),
        ));
    }
    let h = grid.spacing();
    let per_width = 1.0 / (mu.sqrt() * h);
    if per_width < MIN_POINTS_PER_WIDTH {
        return Err(MkdvError::Grid(format!(
            "{per_width:.1} points per kink width, need {MIN_POINTS_PER_WIDTH}"
        )));
    }
    let xs: Vec<f64> = (0..grid.points)
        .map(|i| grid.x_min + h * i as f64)
        .collect();
    let r: Vec<f64> = xs
        .iter()
        .map(|&x| normalized_kink(x, grid.t, mu, scale))
        .collect();
    let r3: Vec<f64> = r.iter().map(|v| v.powi(3)).collect();
    let d1 =
        |f: &[f64], i: usize| (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h);
    let d3 = |f: &[f64], i: usize| {
        (f[i - 3] - 8.0 * f[i - 2] + 13.0 * f[i - 1] - 13.0 * f[i + 1] + 8.0 * f[i + 2] - f[i + 3])
            / (8.0 * h.powi(3))
    };
    let mut worst: f64 = 0.0;
    for i in 3..grid.points - 3 {
        let x = xs[i];
        let rt = |dt: f64| normalized_kink(x, grid.t + dt, mu, scale);
        let dt = (rt(-2.0 * h) - 8.0 * rt(-h) + 8.0 * rt(h) - rt(2.0 * h)) / (12.0 * h);
        worst = worst.max((dt - d3(&r, i) + d1(&r3, i)).abs());
    }
    Ok(worst)
}

/// Value of `∫ R0·M[R0] dX` together with the sum of the magnitudes of its
/// three contributions, which sets the scale for "vanishes".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Solvability {
    pub value: f64,
    pub scale: f64,
}

impl Solvability {
    pub fn relative(&self) -> f64 {
        self.value.abs() / self.scale
    }
}

/// Composite Simpson rule on `intervals` (even) panels.
fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let inner: f64 = (1..intervals)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + h * i as f64))
        .sum();
    h / 3.0 * (f(a) + inner + f(b))
}

/// Panels for the solvability quadrature; the integrand is analytic with
/// unit-order features in `kX`, so the Simpson error is far below 1e-10.
const SOLVABILITY_PANELS: usize = 40_000;

/// Derivatives of `A·tanh(kX)` needed by the solvability integrand:
/// `(R, R″, R⁗, (R³)″)`.
fn kink_derivatives(x: f64, amp: f64, k: f64) -> [f64; 4] {
    let t = (k * x).tanh();
    let s = 1.0 - t * t;
    [
        amp * t,
        -2.0 * amp * k * k * t * s,
        8.0 * amp * k.powi(4) * t * s * (2.0 - 3.0 * t * t),
        6.0 * amp.powi(3) * k * k * t * s * (1.0 - 2.0 * t * t),
    ]
}

/// Evaluates the solvability condition for trial velocity `mu` on
/// `X ∈ [−40/√μ, 40/√μ]`. The integrand decays like `sech²(√(μ/2)X)`, so the
/// truncation error is below `e^{−56}` relative.
pub fn solvability_integral(bc: &BCoeffs, mu: f64) -> Result<Solvability, MkdvError> {
    if !(mu > 0.0) {
        return Err(MkdvError::Grid(format!("mu must be positive, got {mu}")));
    }
    let (amp, k) = (mu.sqrt(), (0.5 * mu).sqrt());
    let half = 40.0 / mu.sqrt();
    let c3 = bc.b3 / bc.b1;
    let c4 = bc.b4 / bc.b1;
    let c5 = bc.b5 / bc.b2;
    let part = |which: usize| {
        let f = move |x: f64| {
            let d = kink_derivatives(x, amp, k);
            d[0] * d[which]
        };
        simpson(&f, -half, half, SOLVABILITY_PANELS)
    };
    let (i2, i4, i6) = (part(1), part(2), part(3));
    Ok(Solvability {
        value: c3 * i2 + c4 * i4 + c5 * i6,
        scale: (c3 * i2).abs() + (c4 * i4).abs() + (c5 * i6).abs(),
    })
}

/// One point of a coexisting curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoexistPoint {
    pub rho_star: f64,
    pub a: f64,
    /// `+1` for `ρc + α`, `−1` for `ρc − α`.
    pub branch: i8,
}

/// `(ρc ± α(a), a)` for each sensitivity at or below the neutral apex;
/// larger values are skipped. `params.rho0` and `params.a` are ignored.
pub fn coexisting_curve(
    params: &ModelParams,
    a_values: &[f64],
) -> Result<Vec<CoexistPoint>, MkdvError> {
    if !kink_exists(params.gamma)? {
        return Err(MkdvError::NoKink(params.gamma));
    }
    let apex = stability::neutral_apex(params)?;
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for &a in a_values.iter().filter(|&&a| a > 0.0 && a <= apex) {
        let sol = kink_solution(&params.with_a(a))?;
        upper.push(CoexistPoint {
            rho_star: sol.rho_c + sol.amplitude,
            a,
            branch: 1,
        });
        lower.push(CoexistPoint {
            rho_star: sol.rho_c - sol.amplitude,
            a,
            branch: -1,
        });
    }
    upper.extend(lower);
    Ok(upper)
}

/// Both forms of the time and amplitude rescaling that normalize the mKdV
/// equation: from the coefficient table and from the closed form in `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationCheck {
    pub time_factor: f64,
    pub time_factor_closed: f64,
    pub amplitude_factor: f64,
    pub amplitude_factor_closed: f64,
}

impl NormalizationCheck {
    pub fn max_relative_mismatch(&self) -> f64 {
        let r = |a: f64, b: f64| ((a - b) / b).abs();
        r(self.time_factor, self.time_factor_closed)
            .max(r(self.amplitude_factor, self.amplitude_factor_closed))
    }
}

pub fn normalization_check(params: &ModelParams) -> Result<NormalizationCheck, MkdvError> {
    let cp = critical_point(params)?;
    let bc = b_coeffs(params, cp.tau_c)?;
    let at = params.with_rho0(params.rhoc);
    let (v1, _, v3) = ov_triple(&at)?;
    let r2 = at.rhoc * at.rhoc;
    let s1 = at.b * at.c * r2 * v1;
    let s3 = at.b.powi(3) * at.c * r2 * v3;
    let m = existence_margin(at.gamma);
    Ok(NormalizationCheck {
        time_factor: bc.b1,
        time_factor_closed: -m * s1 / 27.0,
        amplitude_factor: (bc.b1 / bc.b2).sqrt(),
        amplitude_factor_closed: (-2.0 * m * s1 / (9.0 * s3)).sqrt(),
    })
}

/// Coefficients of `∂T′R′, ∂X³R′, ∂X R′³` and of the three correction terms
/// after substituting `T = T′/b1`, `R = √(b1/b2)·R′` and dividing by the
/// leading factor. The mKdV pattern is `(1, −1, 1, b3/b1, b4/b1, b5/b2)`.
pub fn regularized_coefficients(bc: &BCoeffs) -> [f64; 6] {
    let sigma_t = bc.b1;
    let sigma_r = (bc.b1 / bc.b2).sqrt();
    let lead = sigma_t * sigma_r;
    [
        sigma_t * sigma_r / lead,
        -bc.b1 * sigma_r / lead,
        bc.b2 * sigma_r.powi(3) / lead,
        bc.b3 * sigma_r / lead,
        bc.b4 * sigma_r / lead,
        bc.b5 * sigma_r.powi(3) / lead,
    ]
}
