//! Linear stability of the uniform state: long-wave coefficients, the
//! neutral curve, critical densities, the kink/chaos separatrix, an exact
//! dispersion-relation oracle and parameter sweeps.
//!
//! All formulas use the optimal-velocity slope with respect to its own
//! argument at `x = ρ0`, so `ρ0²·V′ = −sech²(1/ρ0 − 1/ρc)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, ExecMode};
use crate::mkdv;
use crate::model::{ModelError, ModelParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilityError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no positive neutral sensitivity for gamma = {gamma} (needs gamma < 1/2)")]
    NoNeutralPoint { gamma: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// `B·C·ρ0²·V′(ρ0)`, always ≤ 0.
pub fn slope_product(params: &ModelParams) -> Result<f64, ModelError> {
    let v1 = params.ov().derivative(params.rho0, 1)?;
    Ok(params.b * params.c * params.rho0 * params.rho0 * v1)
}

/// Long-wave expansion `w = w1·(ik) + w2·(ik)² + …` of the growth rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearCoeffs {
    pub w1: f64,
    pub w2: f64,
}

pub fn linear_coeffs(params: &ModelParams) -> Result<LinearCoeffs, StabilityError> {
    params.validate()?;
    let s = slope_product(params)?;
    let w1 = -s;
    let w2 = -1.5 * params.tau() * w1 * w1 - 0.5 * (1.0 - 2.0 * params.gamma) * s;
    Ok(LinearCoeffs { w1, w2 })
}

/// Sensitivity at which `w2` vanishes, `a = −3·B·C·ρ0²·V′/(1 − 2γ)`.
/// The value of `params.a` is ignored.
pub fn neutral_a(params: &ModelParams) -> Result<f64, StabilityError> {
    params.with_a(1.0).validate()?;
    if params.gamma >= 0.5 {
        return Err(StabilityError::NoNeutralPoint {
            gamma: params.gamma,
        });
    }
    Ok(-3.0 * slope_product(params)? / (1.0 - 2.0 * params.gamma))
}

/// Kink/chaos separatrix `a_c = −7·B·ρ0²·C·V′/2`.
pub fn separatrix_ac(params: &ModelParams) -> Result<f64, StabilityError> {
    params.with_a(1.0).validate()?;
    Ok(-3.5 * slope_product(params)?)
}

/// `ln|z|` for the larger root of
/// `z² − z + c(e^{ik} − 1) − γc(e^{ik} − 1)² = 0`, `c = τ·B·C·ρ0²·V′`.
///
/// Evaluated without cancellation so that the sign stays reliable when the
/// growth is tiny (long waves or densities far from `ρc`).
pub fn log_growth(params: &ModelParams, k: f64) -> Result<f64, StabilityError> {
    let c = params.tau() * slope_product(params)?;
    let half = (0.5 * k).sin();
    let e = Complex64::from_polar(1.0, k);
    // e^{ik} − 1 and (e^{ik} − 1)² in cancellation-free form
    let d1 = Complex64::new(-2.0 * half * half, k.sin());
    let d2 = -4.0 * half * half * e;
    let q = c * d1 - params.gamma * c * d2;
    let s = (Complex64::new(1.0, 0.0) - 4.0 * q).sqrt();
    // roots (1 ± s)/2; the "+" root is 1 + d/2 with d = s − 1
    let d = -4.0 * q / (1.0 + s);
    let plus = 0.5 * (d.re + 0.25 * d.norm_sqr()).ln_1p();
    let minus = (0.5 * (1.0 - s)).norm().ln();
    Ok(plus.max(minus))
}

/// Larger root modulus of the dispersion relation at wavenumber `k`.
pub fn dispersion_oracle(params: &ModelParams, k: f64) -> Result<f64, StabilityError> {
    Ok(log_growth(params, k)?.exp())
}

/// Wavenumbers at which stability is judged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KGrid {
    /// `2πn/L` for `n = 1..=L/2`.
    Lattice(usize),
    /// `n` points evenly spaced on `(0, π]`.
    Uniform(usize),
}

impl Default for KGrid {
    fn default() -> Self {
        KGrid::Uniform(512)
    }
}

impl KGrid {
    pub fn wavenumbers(&self) -> Vec<f64> {
        use std::f64::consts::PI;
        match *self {
            KGrid::Lattice(l) => (1..=l / 2)
                .map(|n| 2.0 * PI * n as f64 / l as f64)
                .collect(),
            KGrid::Uniform(n) => (1..=n).map(|i| PI * i as f64 / n as f64).collect(),
        }
    }
}

/// Linear-stability verdict at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    /// `w2`; long waves are stable when positive.
    pub margin: f64,
    pub stable: bool,
    pub neutral_a: Option<f64>,
    /// `max |z|` over the grid, never below 1 because of the `k = 0` mode.
    pub max_growth_factor: f64,
    /// Largest `ln|z|` over the non-zero grid wavenumbers.
    pub max_log_growth: f64,
    pub argmax_k: f64,
}

impl StabilityVerdict {
    /// Oracle verdict: some non-zero mode grows.
    pub fn oracle_unstable(&self) -> bool {
        self.max_log_growth > 0.0
    }
}

pub fn verdict(params: &ModelParams, grid: KGrid) -> Result<StabilityVerdict, StabilityError> {
    let coeffs = linear_coeffs(params)?;
    let ks = grid.wavenumbers();
    if ks.is_empty() {
        return Err(StabilityError::Grid("empty wavenumber grid".into()));
    }
    let mut best = (f64::NEG_INFINITY, ks[0]);
    for &k in &ks {
        let g = log_growth(params, k)?;
        if g > best.0 {
            best = (g, k);
        }
    }
    Ok(StabilityVerdict {
        margin: coeffs.w2,
        stable: coeffs.w2 > 0.0,
        neutral_a: neutral_a(params).ok(),
        max_growth_factor: best.0.exp().max(1.0),
        max_log_growth: best.0,
        argmax_k: best.1,
    })
}

/// `w2` recovered from the exact dispersion relation by Richardson
/// extrapolation of `−ln|z|/(τk²)` towards `k → 0`.
pub fn oracle_w2(params: &ModelParams, k: f64) -> Result<f64, StabilityError> {
    let tau = params.tau();
    let f = |k: f64| -> Result<f64, StabilityError> { Ok(-log_growth(params, k)? / (tau * k * k)) };
    Ok((4.0 * f(0.5 * k)? - f(k)?) / 3.0)
}

/// Scaled densities bounding the linearly unstable band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalDensities {
    pub rho_star_c1: f64,
    pub rho_star_c2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CriticalBand {
    Band(CriticalDensities),
    StableEverywhere,
}

impl CriticalBand {
    pub fn band(&self) -> Option<CriticalDensities> {
        match self {
            CriticalBand::Band(c) => Some(*c),
            CriticalBand::StableEverywhere => None,
        }
    }
}

pub const SCAN_POINTS: usize = 2000;
pub const ROOT_TOLERANCE: f64 = 1e-10;

fn bisect<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Outermost sign changes of `f` on a log-spaced scan of `[ρc/10, 10ρc]`,
/// refined by bisection. `f > 0` means unstable.
fn band_from<F: Fn(f64) -> f64>(f: F, rhoc: f64) -> CriticalBand {
    let (lo, hi) = ((rhoc / 10.0).ln(), (10.0 * rhoc).ln());
    let xs: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| (lo + (hi - lo) * i as f64 / (SCAN_POINTS - 1) as f64).exp())
        .collect();
    let signs: Vec<bool> = xs.iter().map(|&x| f(x) > 0.0).collect();
    let first = signs.iter().position(|&s| s);
    let last = signs.iter().rposition(|&s| s);
    match (first, last) {
        (Some(i), Some(j)) if i > 0 && j + 1 < xs.len() => CriticalBand::Band(CriticalDensities {
            rho_star_c1: bisect(&f, xs[i - 1], xs[i], ROOT_TOLERANCE),
            rho_star_c2: bisect(&f, xs[j], xs[j + 1], ROOT_TOLERANCE),
        }),
        _ => CriticalBand::StableEverywhere,
    }
}

/// Roots of `neutral_a(ρ*) = a` around the unstable band at the sensitivity
/// `params.a`; `params.rho0` is ignored.
pub fn critical_densities(params: &ModelParams) -> Result<CriticalBand, StabilityError> {
    params.validate()?;
    neutral_a(params)?;
    let a = params.a;
    Ok(band_from(
        |x| neutral_a(&params.with_rho0(x)).map_or(f64::NAN, |n| n - a),
        params.rhoc,
    ))
}

/// The same band located with the dispersion oracle's long-wave `w2`
/// instead of the closed form.
pub fn critical_densities_oracle(params: &ModelParams) -> Result<CriticalBand, StabilityError> {
    params.validate()?;
    Ok(band_from(
        |x| -oracle_w2(&params.with_rho0(x), 1e-3).unwrap_or(f64::NAN),
        params.rhoc,
    ))
}

/// `(ρ*, neutral a)` pairs.
pub fn neutral_curve(
    params: &ModelParams,
    rho_star: &[f64],
) -> Result<Vec<(f64, f64)>, StabilityError> {
    rho_star
        .iter()
        .map(|&r| Ok((r, neutral_a(&params.with_rho0(r))?)))
        .collect()
}

/// Maximum of the neutral curve, reached at `ρ* = ρc`.
pub fn neutral_apex(params: &ModelParams) -> Result<f64, StabilityError> {
    neutral_a(&params.with_rho0(params.rhoc))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RhoStar,
    A,
    B,
    Gamma,
}

impl SweepAxis {
    fn apply(self, params: ModelParams, value: f64) -> ModelParams {
        match self {
            SweepAxis::RhoStar => params.with_rho0(value),
            SweepAxis::A => params.with_a(value),
            SweepAxis::B => params.with_b(value),
            SweepAxis::Gamma => params.with_gamma(value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub base: ModelParams,
    pub x_axis: SweepAxis,
    pub x_values: Vec<f64>,
    pub y_axis: SweepAxis,
    pub y_values: Vec<f64>,
    #[serde(default)]
    pub k_grid: KGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub y: f64,
    pub neutral_a: Option<f64>,
    pub w2: f64,
    pub max_growth: f64,
    pub unstable: bool,
    pub kink_exists: bool,
    /// Below the separatrix, so a jam would be a kink rather than chaotic.
    pub kink_side: bool,
}

/// Evaluates every grid point (row-major in `y`, then `x`).
pub fn sweep(spec: &SweepSpec, mode: ExecMode) -> Result<Vec<SweepPoint>, StabilityError> {
    if spec.x_values.is_empty() || spec.y_values.is_empty() {
        return Err(StabilityError::Grid(
            "both axes need at least one value".into(),
        ));
    }
    if spec.x_axis == spec.y_axis {
        return Err(StabilityError::Grid("axes must differ".into()));
    }
    let cells: Vec<(f64, f64)> = spec
        .y_values
        .iter()
        .flat_map(|&y| spec.x_values.iter().map(move |&x| (x, y)))
        .collect();
    exec::try_map(&cells, mode, |&(x, y)| {
        let params = spec.y_axis.apply(spec.x_axis.apply(spec.base, x), y);
        let v = verdict(&params, spec.k_grid)?;
        let a_c = separatrix_ac(&params)?;
        Ok(SweepPoint {
            x,
            y,
            neutral_a: v.neutral_a,
            w2: v.margin,
            max_growth: v.max_growth_factor,
            unstable: v.oracle_unstable(),
            kink_exists: mkdv::kink_exists(params.gamma).unwrap_or(false),
            kink_side: params.a < a_c,
        })
    })
}

/// Values printed in the reference analysis for `B = 1.6, C = 0.7, γ = 0.4`.
pub const PUBLISHED_RHO_C1: f64 = 0.1573;
pub const PUBLISHED_RHO_C2: f64 = 0.2743;
pub const PUBLISHED_A_C: f64 = 3.93;

/// Computed critical values next to the published ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub params: ModelParams,
    pub closed_form: Option<CriticalDensities>,
    pub oracle: Option<CriticalDensities>,
    pub a_c: f64,
    pub published_c1: f64,
    pub published_c2: f64,
    pub published_a_c: f64,
}

fn rel(computed: f64, published: f64) -> f64 {
    (computed - published) / published
}

impl DiscrepancyReport {
    /// Rows `(quantity, computed, published, relative difference)`.
    pub fn rows(&self) -> Vec<(&'static str, Option<f64>, f64, Option<f64>)> {
        let c1 = self.closed_form.map(|c| c.rho_star_c1);
        let c2 = self.closed_form.map(|c| c.rho_star_c2);
        let o1 = self.oracle.map(|c| c.rho_star_c1);
        let o2 = self.oracle.map(|c| c.rho_star_c2);
        vec![
            (
                "rho_star_c1",
                c1,
                self.published_c1,
                c1.map(|v| rel(v, self.published_c1)),
            ),
            (
                "rho_star_c2",
                c2,
                self.published_c2,
                c2.map(|v| rel(v, self.published_c2)),
            ),
            (
                "rho_star_c1_oracle",
                o1,
                self.published_c1,
                o1.map(|v| rel(v, self.published_c1)),
            ),
            (
                "rho_star_c2_oracle",
                o2,
                self.published_c2,
                o2.map(|v| rel(v, self.published_c2)),
            ),
            (
                "a_c",
                Some(self.a_c),
                self.published_a_c,
                Some(rel(self.a_c, self.published_a_c)),
            ),
        ]
    }

    pub fn render(&self) -> String {
        let mut out = format!(
            "stability report B={} C={} gamma={} a={} rhoc={}\n{:<20} {:>14} {:>10} {:>12}\n",
            self.params.b,
            self.params.c,
            self.params.gamma,
            self.params.a,
            self.params.rhoc,
            "quantity",
            "computed",
            "published",
            "rel_diff"
        );
        for (name, computed, published, diff) in self.rows() {
            let c = computed.map_or("none".to_string(), |v| format!("{v:.6}"));
            let d = diff.map_or("n/a".to_string(), |v| format!("{v:+.3e}"));
            out.push_str(&format!("{name:<20} {c:>14} {published:>10} {d:>12}\n"));
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.rows()
            .iter()
            .all(|r| r.1.is_some_and(f64::is_finite) && r.3.is_some_and(f64::is_finite))
    }
}

/// Builds the comparison at `params` (sensitivity taken from `params.a`,
/// separatrix evaluated at `ρ0 = ρc`).
pub fn discrepancy_report(params: &ModelParams) -> Result<DiscrepancyReport, StabilityError> {
    Ok(DiscrepancyReport {
        params: *params,
        closed_form: critical_densities(params)?.band(),
        oracle: critical_densities_oracle(params)?.band(),
        a_c: separatrix_ac(&params.with_rho0(params.rhoc))?,
        published_c1: PUBLISHED_RHO_C1,
        published_c2: PUBLISHED_RHO_C2,
        published_a_c: PUBLISHED_A_C,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> ModelParams {
        ModelParams::reference(3.5)
    }

    #[test]
    fn coefficients_at_reference_point() {
        // ρ0 = ρc: sech²(0) = 1, so BCρ0²V′ = −1.12
        let c = linear_coeffs(&reference()).unwrap();
        assert!((c.w1 - 1.12).abs() < 1e-14);
        let expected = -1.5 / 3.5 * 1.12f64.powi(2) + 0.1 * 1.12;
        assert!((c.w2 - expected).abs() < 1e-14);
        // 30-digit mpmath value
        assert!((c.w2 + 0.4256).abs() < 1e-14, "{}", c.w2);
    }

    #[test]
    fn half_passing_rate_is_never_long_wave_stable() {
        for &r in &[0.1, 0.2, 0.3] {
            for &a in &[0.5, 5.0, 50.0] {
                let p = ModelParams {
                    gamma: 0.5,
                    rho0: r,
                    ..ModelParams::reference(a)
                };
                let c = linear_coeffs(&p).unwrap();
                assert!(c.w2 < 0.0);
                assert!((c.w2 + 1.5 * p.tau() * c.w1 * c.w1).abs() < 1e-15);
            }
        }
        assert!(matches!(
            neutral_a(&ModelParams {
                gamma: 0.5,
                ..reference()
            }),
            Err(StabilityError::NoNeutralPoint { .. })
        ));
        assert!(neutral_a(&ModelParams {
            gamma: 0.7,
            ..reference()
        })
        .is_err());
    }

    #[test]
    fn neutral_point_zeroes_w2() {
        for &r in &[0.12, 0.18, 0.2, 0.23, 0.3] {
            for &g in &[0.0, 0.05, 0.2, 0.4] {
                let p = ModelParams {
                    gamma: g,
                    rho0: r,
                    ..reference()
                };
                let a = neutral_a(&p).unwrap();
                let c = linear_coeffs(&p.with_a(a)).unwrap();
                assert!(c.w2.abs() < 1e-12, "{}", c.w2);
            }
        }
    }

    #[test]
    fn neutral_formula_is_w2_root() {
        // w2 = −(3/2)(1/a)w1² − (1−2γ)/2·s with w1 = −s  ⇒  a = −3s/(1−2γ)
        let p = ModelParams {
            rho0: 0.17,
            ..reference()
        };
        let s = slope_product(&p).unwrap();
        let a = neutral_a(&p).unwrap();
        assert!((a - (-3.0 * s / 0.2)).abs() < 1e-14);
        assert!((a - 1.0 / (-(0.2) / (3.0 * s))).abs() < 1e-12);
    }

    #[test]
    fn neutral_a_grows_with_gamma_and_b() {
        let p = reference();
        let vals: Vec<f64> = [0.05, 0.2, 0.4]
            .iter()
            .map(|&g| neutral_a(&p.with_gamma(g)).unwrap())
            .collect();
        assert!(vals[0] < vals[1] && vals[1] < vals[2]);
        let apex: Vec<f64> = [1.0, 1.3, 1.6]
            .iter()
            .map(|&b| {
                neutral_apex(&ModelParams {
                    gamma: 0.05,
                    ..p.with_b(b)
                })
                .unwrap()
            })
            .collect();
        assert!(apex[0] < apex[1] && apex[1] < apex[2]);
    }

    #[test]
    fn apex_and_symmetry() {
        let p = ModelParams {
            b: 1.0,
            ..reference()
        };
        let apex = neutral_apex(&p).unwrap();
        for i in 1..500 {
            let r = 0.05 + 0.5 * i as f64 / 500.0;
            assert!(neutral_a(&p.with_rho0(r)).unwrap() <= apex + 1e-12);
        }
        // u = 1/ρ0 − 1/ρc; reflecting u maps ρ0 to 1/(2/ρc − 1/ρ0)
        for &r in &[0.15, 0.18, 0.19] {
            let mirrored = 1.0 / (2.0 / p.rhoc - 1.0 / r);
            let a = neutral_a(&p.with_rho0(r)).unwrap();
            let b = neutral_a(&p.with_rho0(mirrored)).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
    }

    #[test]
    fn dispersion_zero_mode() {
        let g = dispersion_oracle(&reference(), 0.0).unwrap();
        assert!((g - 1.0).abs() < 1e-15);
    }

    #[test]
    fn log_growth_matches_direct_roots() {
        let p = ModelParams {
            rho0: 0.21,
            ..reference()
        };
        let c = p.tau() * slope_product(&p).unwrap();
        for &k in &[0.1, 0.7, 1.5, 3.0] {
            let e = Complex64::from_polar(1.0, k) - 1.0;
            let q = c * e - p.gamma * c * e * e;
            let s = (Complex64::new(1.0, 0.0) - 4.0 * q).sqrt();
            let direct = ((1.0 + s) * 0.5).norm().max(((1.0 - s) * 0.5).norm());
            assert!((dispersion_oracle(&p, k).unwrap() - direct).abs() < 1e-13);
        }
    }

    #[test]
    fn far_above_neutral_all_modes_decay() {
        let p = ModelParams {
            gamma: 0.05,
            ..ModelParams::reference(50.0)
        };
        for k in KGrid::Uniform(512).wavenumbers() {
            assert!(log_growth(&p, k).unwrap() < 0.0);
        }
        let v = verdict(&p, KGrid::Uniform(512)).unwrap();
        assert!(v.stable && !v.oracle_unstable());
        assert_eq!(v.max_growth_factor, 1.0);
    }

    #[test]
    fn small_k_limit_reproduces_w2() {
        for &(r, a, g) in &[
            (0.2, 3.5, 0.4),
            (0.17, 2.0, 0.1),
            (0.25, 30.0, 0.0),
            (0.3, 0.8, 0.3),
        ] {
            let p = ModelParams {
                rho0: r,
                gamma: g,
                ..ModelParams::reference(a)
            };
            let w2 = linear_coeffs(&p).unwrap().w2;
            let est = oracle_w2(&p, 1e-2).unwrap();
            assert!((est - w2).abs() <= 0.01 * w2.abs(), "{est} vs {w2}");
        }
    }

    #[test]
    fn critical_band_roots() {
        let p = ModelParams::reference(3.93);
        let band = critical_densities(&p).unwrap().band().unwrap();
        assert!(band.rho_star_c1 < 0.2 && 0.2 < band.rho_star_c2);
        for r in [band.rho_star_c1, band.rho_star_c2] {
            assert!((neutral_a(&p.with_rho0(r)).unwrap() - 3.93).abs() < 1e-7);
        }
        // closed-form roots of a = a_apex·sech²(1/ρ* − 1/ρc)
        let u = (16.8f64 / 3.93).sqrt().acosh();
        assert!((band.rho_star_c1 - 1.0 / (5.0 + u)).abs() < 1e-9);
        assert!((band.rho_star_c2 - 1.0 / (5.0 - u)).abs() < 1e-9);
        assert_eq!(
            critical_densities(&ModelParams::reference(17.0)).unwrap(),
            CriticalBand::StableEverywhere
        );
        let oracle = critical_densities_oracle(&p).unwrap().band().unwrap();
        assert!((oracle.rho_star_c1 - band.rho_star_c1).abs() < 1e-5);
        assert!((oracle.rho_star_c2 - band.rho_star_c2).abs() < 1e-5);
    }

    #[test]
    fn separatrix_reference_and_linearity() {
        let a_c = separatrix_ac(&reference()).unwrap();
        assert!((a_c - 3.92).abs() < 1e-12);
        // scaling V′ by λ through C scales a_c by λ
        let scaled = separatrix_ac(&ModelParams {
            c: 0.7 * 2.5,
            ..reference()
        })
        .unwrap();
        assert!((scaled - 2.5 * a_c).abs() < 1e-12);
        assert!(3.5 < a_c && 5.0 > a_c);
    }

    #[test]
    fn sweep_single_point_matches_scalars() {
        let spec = SweepSpec {
            base: reference(),
            x_axis: SweepAxis::RhoStar,
            x_values: vec![0.19],
            y_axis: SweepAxis::A,
            y_values: vec![4.0],
            k_grid: KGrid::Lattice(100),
        };
        let pts = sweep(&spec, ExecMode::Sequential).unwrap();
        assert_eq!(pts.len(), 1);
        let p = reference().with_rho0(0.19).with_a(4.0);
        let v = verdict(&p, KGrid::Lattice(100)).unwrap();
        assert_eq!(pts[0].neutral_a, Some(neutral_a(&p).unwrap()));
        assert_eq!(pts[0].w2, v.margin);
        assert_eq!(pts[0].max_growth, v.max_growth_factor);
        assert!(!pts[0].kink_exists);
    }

    #[test]
    fn sweep_modes_agree() {
        let spec = SweepSpec {
            base: reference(),
            x_axis: SweepAxis::RhoStar,
            x_values: (0..30).map(|i| 0.1 + 0.01 * i as f64).collect(),
            y_axis: SweepAxis::Gamma,
            y_values: vec![0.05, 0.2, 0.4],
            k_grid: KGrid::Uniform(64),
        };
        assert_eq!(
            sweep(&spec, ExecMode::Sequential).unwrap(),
            sweep(&spec, ExecMode::Parallel).unwrap()
        );
        assert!(sweep(
            &SweepSpec {
                y_axis: SweepAxis::RhoStar,
                ..spec
            },
            ExecMode::Sequential
        )
        .is_err());
    }

    #[test]
    fn report_is_complete() {
        let r = discrepancy_report(&ModelParams::reference(3.93)).unwrap();
        assert!(r.is_complete());
        let text = r.render();
        assert!(text.contains("0.1573") && text.contains("0.2743") && text.contains("3.93"));
    }
}
