//! Early-warning indicators for uniformly sampled series: probe extraction,
//! detrending, rolling variance, lag-1 autocorrelation, skewness and
//! kurtosis, Kendall trend statistics, alarms and onset detection.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simulate::{Trajectory, PROBE_SITES};

#[derive(Debug, Error)]
pub enum EwsError {
    #[error("invalid series: {0}")]
    Series(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("site {0} was not recorded")]
    MissingSite(usize),
    #[error("Kendall tau needs at least 3 points, got {0}")]
    TooShort(usize),
    #[error("Kendall tau undefined: every value is tied")]
    AllTied,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Relative tolerance on sample spacing.
const CADENCE_TOLERANCE: f64 = 1e-6;

/// Mean scaled density over the probe sites at a fixed cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub cadence: f64,
}

impl ProbeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, EwsError> {
        if times.len() != values.len() {
            return Err(EwsError::Series(format!(
                "{} times for {} values",
                times.len(),
                values.len()
            )));
        }
        if times.len() < 2 {
            return Err(EwsError::Series("need at least two samples".into()));
        }
        if values.iter().chain(&times).any(|v| !v.is_finite()) {
            return Err(EwsError::Series("non-finite entry".into()));
        }
        let cadence = times[1] - times[0];
        if !(cadence > 0.0) {
            return Err(EwsError::Series("times must increase".into()));
        }
        for (i, w) in times.windows(2).enumerate() {
            if ((w[1] - w[0]) - cadence).abs() > CADENCE_TOLERANCE * cadence.max(1.0) {
                return Err(EwsError::Series(format!(
                    "irregular spacing at sample {}",
                    i + 1
                )));
            }
        }
        Ok(Self {
            times,
            values,
            cadence,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Samples `0..end`.
    pub fn truncated(&self, end: usize) -> Result<Self, EwsError> {
        Self::new(self.times[..end].to_vec(), self.values[..end].to_vec())
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EwsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_seconds", "value"])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([fmt_f64(*t), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Float formatting used by every CSV writer (17 significant digits).
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Reads a probe series from CSV. Accepts the probe layouts
/// `t_seconds,value` and `t_seconds,rho_star_mean_probe`, and the full-field
/// layout `t_seconds,site,rho_star` (averaged over the probe sites).
pub fn read_series_csv<R: Read>(reader: R) -> Result<ProbeSeries, EwsError> {
    read_input_csv(reader).map(|input| input.probe)
}

/// Sites per sample above which a `t_seconds,site,rho_star` file is taken
/// to hold the whole field, so its spatial spread can locate the onset.
pub const FULL_FIELD_MIN_SITES: usize = 10;

/// Series read from CSV, with the spatial standard deviation per sample when
/// the input carries the full field.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesInput {
    pub probe: ProbeSeries,
    pub spatial_std: Option<Vec<f64>>,
}

/// Like [`read_series_csv`], keeping the spatial spread of full-field input.
pub fn read_input_csv<R: Read>(reader: R) -> Result<SeriesInput, EwsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let parse = |s: &str, line: usize| -> Result<f64, EwsError> {
        s.parse::<f64>()
            .map_err(|_| EwsError::Series(format!("line {line}: cannot parse '{s}'")))
    };
    match headers
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>()
        .as_slice()
    {
        ["t_seconds", "value"] | ["t_seconds", "rho_star_mean_probe"] => {
            let (mut times, mut values) = (Vec::new(), Vec::new());
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if rec.len() != 2 {
                    return Err(EwsError::Series(format!(
                        "line {}: expected 2 fields",
                        i + 2
                    )));
                }
                times.push(parse(&rec[0], i + 2)?);
                values.push(parse(&rec[1], i + 2)?);
            }
            Ok(SeriesInput {
                probe: ProbeSeries::new(times, values)?,
                spatial_std: None,
            })
        }
        ["t_seconds", "site", "rho_star"] => {
            let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                if rec.len() != 3 {
                    return Err(EwsError::Series(format!(
                        "line {}: expected 3 fields",
                        i + 2
                    )));
                }
                let t = parse(&rec[0], i + 2)?;
                let site: usize = rec[1].parse().map_err(|_| {
                    EwsError::Series(format!("line {}: bad site '{}'", i + 2, &rec[1]))
                })?;
                let v = parse(&rec[2], i + 2)?;
                match rows.last_mut() {
                    Some((last, entries)) if *last == t => entries.push((site, v)),
                    _ => rows.push((t, vec![(site, v)])),
                }
            }
            let full_field = rows.iter().all(|(_, e)| e.len() >= FULL_FIELD_MIN_SITES);
            let spatial_std = full_field.then(|| {
                rows.iter()
                    .map(|(_, e)| {
                        let n = e.len() as f64;
                        let mean = e.iter().map(|x| x.1).sum::<f64>() / n;
                        (e.iter().map(|x| (x.1 - mean).powi(2)).sum::<f64>() / n).sqrt()
                    })
                    .collect()
            });
            let mut times = Vec::with_capacity(rows.len());
            let mut values = Vec::with_capacity(rows.len());
            for (t, entries) in rows {
                let mut sum = 0.0;
                for site in PROBE_SITES {
                    let v = entries
                        .iter()
                        .find(|e| e.0 == site)
                        .ok_or(EwsError::MissingSite(site))?
                        .1;
                    sum += v;
                }
                times.push(t);
                values.push(sum / PROBE_SITES.len() as f64);
            }
            Ok(SeriesInput {
                probe: ProbeSeries::new(times, values)?,
                spatial_std,
            })
        }
        other => Err(EwsError::Series(format!("unrecognized header {other:?}"))),
    }
}

/// Per-sample mean over the given 1-indexed sites.
pub fn extract_probe(trajectory: &Trajectory, sites: &[usize]) -> Result<ProbeSeries, EwsError> {
    if sites.is_empty() {
        return Err(EwsError::Config("no probe sites".into()));
    }
    let columns = sites
        .iter()
        .map(|&s| trajectory.site_series(s).ok_or(EwsError::MissingSite(s)))
        .collect::<Result<Vec<_>, _>>()?;
    let values = (0..trajectory.times.len())
        .map(|i| columns.iter().map(|c| c[i]).sum::<f64>() / columns.len() as f64)
        .collect();
    ProbeSeries::new(trajectory.times.clone(), values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetrendMethod {
    GaussianKernel,
    RollingMean,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetrendConfig {
    pub method: DetrendMethod,
    /// Kernel standard deviation or rolling width, in samples. `None` uses
    /// 10% of the series length.
    pub bandwidth: Option<f64>,
}

impl Default for DetrendConfig {
    fn default() -> Self {
        Self {
            method: DetrendMethod::GaussianKernel,
            bandwidth: None,
        }
    }
}

impl DetrendConfig {
    pub fn resolved_bandwidth(&self, len: usize) -> Result<f64, EwsError> {
        let bw = self.bandwidth.unwrap_or(0.1 * len as f64);
        if !(bw >= 3.0 && bw < len as f64) {
            return Err(EwsError::Config(format!(
                "bandwidth {bw} must lie in [3, {len}) for a series of length {len}"
            )));
        }
        Ok(bw)
    }
}

/// Gaussian-kernel (Nadaraya–Watson) smoother, truncated at 6 bandwidths.
pub fn gaussian_smooth(values: &[f64], bandwidth: f64) -> Vec<f64> {
    let n = values.len();
    let reach = (6.0 * bandwidth).ceil() as usize;
    let weights: Vec<f64> = (0..=reach)
        .map(|d| (-0.5 * (d as f64 / bandwidth).powi(2)).exp())
        .collect();
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(reach);
            let hi = (k + reach).min(n - 1);
            let (mut num, mut den) = (0.0, 0.0);
            for (i, v) in values.iter().enumerate().take(hi + 1).skip(lo) {
                let w = weights[i.abs_diff(k)];
                num += w * v;
                den += w;
            }
            num / den
        })
        .collect()
}

fn rolling_mean(values: &[f64], width: f64) -> Vec<f64> {
    let n = values.len();
    let half = ((width.round() as usize).max(1) - 1) / 2;
    let mut prefix = vec![0.0; n + 1];
    for (i, v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|k| {
            let lo = k.saturating_sub(half);
            let hi = (k + half).min(n - 1);
            (prefix[hi + 1] - prefix[lo]) / (hi + 1 - lo) as f64
        })
        .collect()
}

fn linear_fit(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = values.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, v) in values.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (v - my);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (0..values.len())
        .map(|i| my + slope * (i as f64 - mx))
        .collect()
}

/// Residuals `values − smooth(values)`.
pub fn detrend(values: &[f64], config: &DetrendConfig) -> Result<Vec<f64>, EwsError> {
    if values.len() < 4 {
        return Err(EwsError::Series(
            "need at least 4 samples to detrend".into(),
        ));
    }
    let bw = config.resolved_bandwidth(values.len())?;
    // shifting by the first sample keeps constant input exactly zero
    let shifted: Vec<f64> = values.iter().map(|v| v - values[0]).collect();
    let smooth = match config.method {
        DetrendMethod::GaussianKernel => gaussian_smooth(&shifted, bw),
        DetrendMethod::RollingMean => rolling_mean(&shifted, bw),
        DetrendMethod::Linear => linear_fit(&shifted),
    };
    Ok(shifted.iter().zip(smooth).map(|(v, s)| v - s).collect())
}

/// Moments of one window. Indicators other than variance are `None` when
/// the window is numerically constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub variance: f64,
    pub ac1: Option<f64>,
    pub skewness: Option<f64>,
    /// Pearson kurtosis (3 for a normal distribution).
    pub kurtosis: Option<f64>,
}

/// Windows whose spread is below this fraction of their magnitude are
/// treated as constant.
const CONSTANT_TOLERANCE: f64 = 1e-13;

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn window_stats(window: &[f64]) -> WindowStats {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in window {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let scale = window.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale == 0.0 || m2.sqrt() <= CONSTANT_TOLERANCE * scale {
        return WindowStats {
            variance: 0.0,
            ac1: None,
            skewness: None,
            kurtosis: None,
        };
    }
    WindowStats {
        variance: m2,
        ac1: pearson(&window[..window.len() - 1], &window[1..]),
        skewness: Some(m3 / m2.powf(1.5)),
        kurtosis: Some(m4 / (m2 * m2)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    Variance,
    Ac1,
    Skewness,
    Kurtosis,
}

impl Indicator {
    pub const ALL: [Indicator; 4] = [
        Indicator::Variance,
        Indicator::Ac1,
        Indicator::Skewness,
        Indicator::Kurtosis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::Variance => "variance",
            Indicator::Ac1 => "ac1",
            Indicator::Skewness => "skewness",
            Indicator::Kurtosis => "kurtosis",
        }
    }
}

/// Kendall τ of each indicator against time; `None` when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrendSummary {
    pub variance: Option<f64>,
    pub ac1: Option<f64>,
    pub skewness: Option<f64>,
    pub kurtosis: Option<f64>,
}

impl TrendSummary {
    pub fn get(&self, indicator: Indicator) -> Option<f64> {
        match indicator {
            Indicator::Variance => self.variance,
            Indicator::Ac1 => self.ac1,
            Indicator::Skewness => self.skewness,
            Indicator::Kurtosis => self.kurtosis,
        }
    }
}

/// Rolling-window indicator series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwsReport {
    pub window: usize,
    pub stride: usize,
    pub t_center: Vec<f64>,
    pub variance: Vec<f64>,
    pub ac1: Vec<Option<f64>>,
    pub skewness: Vec<Option<f64>>,
    pub kurtosis: Vec<Option<f64>>,
    pub kendall_tau: TrendSummary,
    pub alarm_time: Option<f64>,
}

impl EwsReport {
    pub fn len(&self) -> usize {
        self.t_center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_center.is_empty()
    }

    pub fn series(&self, indicator: Indicator) -> Vec<Option<f64>> {
        match indicator {
            Indicator::Variance => self.variance.iter().map(|&v| Some(v)).collect(),
            Indicator::Ac1 => self.ac1.clone(),
            Indicator::Skewness => self.skewness.clone(),
            Indicator::Kurtosis => self.kurtosis.clone(),
        }
    }

    /// CSV `t_center,variance,ac1,skewness,kurtosis`; undefined entries are
    /// written as `NA`. Kurtosis is the Pearson form (normal = 3).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), EwsError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t_center", "variance", "ac1", "skewness", "kurtosis"])?;
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_f64);
        for i in 0..self.len() {
            w.write_record([
                fmt_f64(self.t_center[i]),
                fmt_f64(self.variance[i]),
                opt(self.ac1[i]),
                opt(self.skewness[i]),
                opt(self.kurtosis[i]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Indicators over windows `[s, s + window)` for `s = 0, stride, …`.
/// `times` gives the sample times; window centers are the mean of the
/// first and last time in each window.
pub fn rolling_indicators(
    residuals: &[f64],
    times: &[f64],
    window: usize,
    stride: usize,
) -> Result<EwsReport, EwsError> {
    if residuals.len() != times.len() {
        return Err(EwsError::Series(
            "times and residuals differ in length".into(),
        ));
    }
    if window < 10 || window > residuals.len() {
        return Err(EwsError::Config(format!(
            "window {window} must lie in [10, {}]",
            residuals.len()
        )));
    }
    if stride == 0 {
        return Err(EwsError::Config("stride must be positive".into()));
    }
    let starts: Vec<usize> = (0..=residuals.len() - window).step_by(stride).collect();
    let stats: Vec<WindowStats> = starts
        .iter()
        .map(|&s| window_stats(&residuals[s..s + window]))
        .collect();
    let mut report = EwsReport {
        window,
        stride,
        t_center: starts
            .iter()
            .map(|&s| 0.5 * (times[s] + times[s + window - 1]))
            .collect(),
        variance: stats.iter().map(|s| s.variance).collect(),
        ac1: stats.iter().map(|s| s.ac1).collect(),
        skewness: stats.iter().map(|s| s.skewness).collect(),
        kurtosis: stats.iter().map(|s| s.kurtosis).collect(),
        kendall_tau: TrendSummary::default(),
        alarm_time: None,
    };
    report.kendall_tau = trend_summary(&report);
    Ok(report)
}

fn defined(series: &[Option<f64>]) -> Vec<f64> {
    series.iter().flatten().copied().collect()
}

pub fn trend_summary(report: &EwsReport) -> TrendSummary {
    let tau = |ind: Indicator| kendall_tau(&defined(&report.series(ind))).ok();
    TrendSummary {
        variance: tau(Indicator::Variance),
        ac1: tau(Indicator::Ac1),
        skewness: tau(Indicator::Skewness),
        kurtosis: tau(Indicator::Kurtosis),
    }
}

/// Counts pairs `i < j` with `v[i] > v[j]` by merge sort.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf.push(v[i]);
            i += 1;
        } else {
            buf.push(v[j]);
            count += (mid - i) as u64;
            j += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    count
}

/// Kendall τ-b of `values` against their (strictly increasing) index, in
/// `O(n log n)`.
pub fn kendall_tau(values: &[f64]) -> Result<f64, EwsError> {
    let n = values.len();
    if n < 3 {
        return Err(EwsError::TooShort(n));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(EwsError::Series("NaN in Kendall input".into()));
    }
    let n0 = (n as u64) * (n as u64 - 1) / 2;
    let mut sorted = values.to_vec();
    let mut buf = Vec::with_capacity(n);
    let discordant = count_inversions(&mut sorted, &mut buf);
    let mut tied = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            tied += run * (run - 1) / 2;
            run = 1;
        }
    }
    tied += run * (run - 1) / 2;
    if tied == n0 {
        return Err(EwsError::AllTied);
    }
    let concordant = n0 - tied - discordant;
    Ok((concordant as f64 - discordant as f64) / ((n0 as f64) * ((n0 - tied) as f64)).sqrt())
}

/// Kendall τ-b of every prefix of the defined entries. Entry `i` is the
/// statistic over `series[..=i]`, or `None` while fewer than 3 values are
/// defined or all are tied.
pub fn running_kendall(series: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut seen: Vec<f64> = Vec::with_capacity(series.len());
    let (mut concordant, mut discordant, mut tied) = (0i64, 0i64, 0i64);
    series
        .iter()
        .map(|entry| {
            if let Some(v) = *entry {
                for &u in &seen {
                    if v > u {
                        concordant += 1;
                    } else if v < u {
                        discordant += 1;
                    } else {
                        tied += 1;
                    }
                }
                seen.push(v);
            }
            let n = seen.len() as i64;
            let n0 = n * (n - 1) / 2;
            (n >= 3 && n0 > tied).then(|| {
                (concordant - discordant) as f64 / ((n0 as f64) * ((n0 - tied) as f64)).sqrt()
            })
        })
        .collect()
}

/// Alarm rule on running Kendall trends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlarmConfig {
    /// Threshold per indicator; `None` leaves the indicator out.
    pub tau_variance: Option<f64>,
    pub tau_ac1: Option<f64>,
    pub tau_skewness: Option<f64>,
    pub tau_kurtosis: Option<f64>,
    /// Indicators that must exceed their thresholds at the same window.
    pub quorum: usize,
    /// Windows that must be available before the trend is judged.
    pub min_windows: usize,
}

impl Default for AlarmConfig {
    fn default() -> Self {
        Self {
            tau_variance: Some(0.5),
            tau_ac1: Some(0.5),
            tau_skewness: None,
            tau_kurtosis: None,
            quorum: 2,
            min_windows: 100,
        }
    }
}

impl AlarmConfig {
    fn threshold(&self, indicator: Indicator) -> Option<f64> {
        match indicator {
            Indicator::Variance => self.tau_variance,
            Indicator::Ac1 => self.tau_ac1,
            Indicator::Skewness => self.tau_skewness,
            Indicator::Kurtosis => self.tau_kurtosis,
        }
    }

    pub fn validate(&self) -> Result<(), EwsError> {
        let active = Indicator::ALL
            .iter()
            .filter(|&&i| self.threshold(i).is_some())
            .count();
        if self.quorum == 0 || self.quorum > active {
            return Err(EwsError::Config(format!(
                "quorum {} must lie in [1, {active}] for {active} active indicators",
                self.quorum
            )));
        }
        Ok(())
    }
}

/// Earliest window-center time at which at least `quorum` indicators have
/// running Kendall τ at or above their thresholds.
pub fn alarm(report: &EwsReport, config: &AlarmConfig) -> Result<Option<f64>, EwsError> {
    config.validate()?;
    let running: Vec<(f64, Vec<Option<f64>>)> = Indicator::ALL
        .iter()
        .filter_map(|&ind| {
            config
                .threshold(ind)
                .map(|th| (th, running_kendall(&report.series(ind))))
        })
        .collect();
    for i in config.min_windows.saturating_sub(1)..report.len() {
        let votes = running
            .iter()
            .filter(|(th, tau)| tau[i].is_some_and(|t| t >= *th))
            .count();
        if votes >= config.quorum {
            return Ok(Some(report.t_center[i]));
        }
    }
    Ok(None)
}

/// Realized transition of a ramped run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub index: usize,
    pub time: f64,
    pub baseline: f64,
}

/// First sample whose spatial standard deviation exceeds `factor` times its
/// median over samples with `t ≤ hold_seconds`.
pub fn onset_time(trajectory: &Trajectory, hold_seconds: f64, factor: f64) -> Option<Onset> {
    onset_from_spread(
        &trajectory.times,
        &trajectory.diagnostics.spatial_std,
        hold_seconds,
        factor,
    )
}

/// Onset rule on an explicit spread series aligned with `times`.
pub fn onset_from_spread(
    times: &[f64],
    spread: &[f64],
    hold_seconds: f64,
    factor: f64,
) -> Option<Onset> {
    let mut base: Vec<f64> = times
        .iter()
        .zip(spread)
        .filter(|(t, _)| **t <= hold_seconds)
        .map(|(_, s)| *s)
        .collect();
    if base.is_empty() {
        return None;
    }
    base.sort_by(f64::total_cmp);
    let mid = base.len() / 2;
    let baseline = if base.len() % 2 == 1 {
        base[mid]
    } else {
        0.5 * (base[mid - 1] + base[mid])
    };
    spread
        .iter()
        .position(|&s| s > factor * baseline)
        .map(|index| Onset {
            index,
            time: times[index],
            baseline,
        })
}

/// Settings of the full indicator pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EwsConfig {
    pub detrend: DetrendConfig,
    /// Window as a fraction of the analysed length, used when `window` is
    /// not set.
    pub window_fraction: f64,
    pub window: Option<usize>,
    pub stride: usize,
    pub alarm: AlarmConfig,
    pub onset_factor: f64,
    pub hold_seconds: f64,
}

impl Default for EwsConfig {
    fn default() -> Self {
        Self {
            detrend: DetrendConfig::default(),
            window_fraction: 0.25,
            window: None,
            stride: 1,
            alarm: AlarmConfig::default(),
            onset_factor: 10.0,
            hold_seconds: 7200.0,
        }
    }
}

impl EwsConfig {
    pub fn validate(&self) -> Result<(), EwsError> {
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            return Err(EwsError::Config(
                "window_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.stride == 0 {
            return Err(EwsError::Config("stride must be positive".into()));
        }
        if !(self.onset_factor > 1.0) {
            return Err(EwsError::Config("onset_factor must exceed 1".into()));
        }
        self.alarm.validate()
    }
}

/// Detrends, computes indicators and evaluates the alarm on a whole series.
pub fn analyze_series(series: &ProbeSeries, config: &EwsConfig) -> Result<EwsReport, EwsError> {
    config.validate()?;
    let residuals = detrend(&series.values, &config.detrend)?;
    let window = config
        .window
        .unwrap_or_else(|| ((config.window_fraction * series.len() as f64) as usize).max(10));
    let mut report = rolling_indicators(&residuals, &series.times, window, config.stride)?;
    report.alarm_time = alarm(&report, &config.alarm)?;
    Ok(report)
}

/// Indicator analysis of a ramped run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwsAnalysis {
    pub probe: ProbeSeries,
    pub onset: Option<Onset>,
    /// Samples analysed: everything before the onset, or the whole probe.
    pub analysed: usize,
    pub report: EwsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwsSummary {
    pub kendall_tau: TrendSummary,
    pub alarm_time: Option<f64>,
    pub onset_time: Option<f64>,
}

impl EwsAnalysis {
    pub fn summary(&self) -> EwsSummary {
        EwsSummary {
            kendall_tau: self.report.kendall_tau,
            alarm_time: self.report.alarm_time,
            onset_time: self.onset.map(|o| o.time),
        }
    }
}

/// Extracts the probe, locates the onset and analyses the pre-onset part.
pub fn analyze_trajectory(
    trajectory: &Trajectory,
    config: &EwsConfig,
) -> Result<EwsAnalysis, EwsError> {
    let probe = extract_probe(trajectory, &PROBE_SITES)?;
    analyze_probe(probe, Some(&trajectory.diagnostics.spatial_std), config)
}

/// Analyses `probe` up to the onset found in `spread`, or the whole probe
/// when no spread is available or no onset occurs.
pub fn analyze_probe(
    probe: ProbeSeries,
    spread: Option<&[f64]>,
    config: &EwsConfig,
) -> Result<EwsAnalysis, EwsError> {
    config.validate()?;
    let onset = spread
        .and_then(|s| onset_from_spread(&probe.times, s, config.hold_seconds, config.onset_factor));
    let analysed = onset.map_or(probe.len(), |o| o.index);
    let report = analyze_series(&probe.truncated(analysed)?, config)?;
    Ok(EwsAnalysis {
        probe,
        onset,
        analysed,
        report,
    })
}
