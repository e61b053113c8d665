//! Built-in configurations, one per standard phase-diagram or simulation figure.

use lhtraffic::simulate::{RampPlan, ScenarioConfig};
use lhtraffic::stability::{KGrid, SweepAxis};
use lhtraffic::{ModelParams, NoiseConfig};

use crate::config::{
    CurveSpec, GammaCurveSpec, PlotValue, Range, SimulateFile, StabilityFile, SweepEntry,
};

pub const NAMES: [&str; 8] = [
    "fig2a",
    "fig2b",
    "fig2c",
    "fig2d",
    "fig3-kink",
    "fig3-chaotic",
    "fig4-kink",
    "fig4-chaotic",
];

/// What a preset runs.
pub enum Job {
    Stability(StabilityFile),
    Simulate(Box<SimulateFile>),
}

const C: f64 = 0.7;
const RHOC: f64 = 0.2;

fn params(b: f64, gamma: f64) -> ModelParams {
    ModelParams {
        b,
        c: C,
        gamma,
        rho0: RHOC,
        rhoc: RHOC,
        a: 1.0,
    }
}

fn curve(label: String, params: ModelParams) -> CurveSpec {
    CurveSpec {
        label,
        params,
        rho_star: Range {
            start: 0.02,
            stop: 0.5,
            points: 481,
        },
        coexisting: true,
        coexist_points: 200,
    }
}

fn ramped(a: f64, seed: u64) -> SimulateFile {
    let mut scenario = ScenarioConfig::perturbation_test(ModelParams::reference(a), 0.0, 1);
    scenario.noise = Some(NoiseConfig {
        sigma: RampPlan::default().sigma,
        zero_mean_projection: true,
        seed,
    });
    scenario.recorder.full_field_every = Some(1);
    SimulateFile {
        scenario,
        ramp_plan: Some(RampPlan::default()),
        ..SimulateFile::reference(a)
    }
}

pub fn build(name: &str, seed: u64) -> Option<Job> {
    let job = match name {
        "fig2a" => Job::Stability(StabilityFile {
            curves: [1.0, 1.3, 1.6]
                .iter()
                .map(|&b| curve(format!("B{b:.1}"), params(b, 0.05)))
                .collect(),
            ..StabilityFile::default()
        }),
        "fig2b" => Job::Stability(StabilityFile {
            curves: [0.05, 0.2, 0.4]
                .iter()
                .map(|&g| curve(format!("gamma{g:.2}"), params(1.6, g)))
                .collect(),
            ..StabilityFile::default()
        }),
        "fig2c" => Job::Stability(StabilityFile {
            sweeps: [0.05, 0.2, 0.4]
                .iter()
                .map(|&g| SweepEntry {
                    label: format!("gamma{g:.2}"),
                    base: params(1.0, g),
                    x_axis: SweepAxis::RhoStar,
                    x: Range {
                        start: 0.02,
                        stop: 0.5,
                        points: 97,
                    },
                    y_axis: SweepAxis::B,
                    y: Range {
                        start: 1.0,
                        stop: 2.0,
                        points: 41,
                    },
                    k_grid: KGrid::Uniform(64),
                    plot: PlotValue::NeutralA,
                })
                .collect(),
            ..StabilityFile::default()
        }),
        "fig2d" => Job::Stability(StabilityFile {
            gamma_curves: [1.0, 1.3, 1.6]
                .iter()
                .map(|&b| GammaCurveSpec {
                    label: format!("B{b:.1}"),
                    params: params(b, 0.0),
                    gamma: Range {
                        start: 0.0,
                        stop: 0.6,
                        points: 121,
                    },
                })
                .collect(),
            ..StabilityFile::default()
        }),
        "fig3-kink" => Job::Simulate(Box::new(ramped(3.5, seed))),
        "fig3-chaotic" => Job::Simulate(Box::new(ramped(5.0, seed))),
        "fig4-kink" => Job::Simulate(Box::new(SimulateFile::reference(3.5))),
        "fig4-chaotic" => Job::Simulate(Box::new(SimulateFile::reference(5.0))),
        _ => return None,
    };
    Some(job)
}
