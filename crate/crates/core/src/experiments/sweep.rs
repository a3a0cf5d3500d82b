//! One-dimensional sweeps of the retrieval threshold and the scent noise.

use serde::{Deserialize, Serialize};

use super::report::{fmt_f64, Table};
use super::study::Lab;
use super::ExperimentError;
use crate::conditions::Study;
use crate::memory::MemoryParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub steps: f64,
    pub clicks: f64,
    pub returns: f64,
    pub lostness: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweeps {
    pub theta: Vec<SweepRow>,
    pub sigma: Vec<SweepRow>,
}

impl Sweeps {
    pub fn table(&self) -> Table {
        let mut t = Table::new(&["parameter", "value", "steps", "clicks", "returns", "lostness"]);
        for r in self.theta.iter().chain(&self.sigma) {
            t.push(vec![
                r.parameter.clone(),
                fmt_f64(r.value),
                fmt_f64(r.steps),
                fmt_f64(r.clicks),
                fmt_f64(r.returns),
                fmt_f64(r.lostness),
            ]);
        }
        t
    }
}

/// Parameters of one `theta` sweep point. A zero threshold also disables
/// decay, which matches the no-decay ablation variant.
pub fn theta_point(base: MemoryParams, theta: f64) -> MemoryParams {
    if theta == 0.0 {
        base.without_decay()
    } else {
        MemoryParams { theta, ..base }
    }
}

fn point(lab: &Lab, parameter: &str, value: f64, params: &MemoryParams) -> Result<SweepRow, ExperimentError> {
    let study = Study::Difficulty;
    let summary = lab.summarize_fixed(&[study], params, lab.cfg.study.probe_episodes)?;
    let kinds = study.conditions();
    let mean = |m: &str| -> Result<f64, ExperimentError> {
        let mut s = 0.0;
        for &k in &kinds {
            s += summary.get(k, m)?;
        }
        Ok(s / kinds.len() as f64)
    };
    Ok(SweepRow {
        parameter: parameter.to_owned(),
        value,
        steps: mean("steps")?,
        clicks: mean("clicks")?,
        returns: mean("returns")?,
        lostness: mean("lostness")?,
    })
}

/// Evaluates the default difficulty policy at every grid value, averaging
/// over the difficulty conditions.
pub fn run_parameter_sweeps(lab: &Lab) -> Result<Sweeps, ExperimentError> {
    let base = lab.cfg.memory;
    let theta = lab
        .cfg
        .study
        .theta_grid
        .iter()
        .map(|&v| point(lab, "theta", v, &theta_point(base, v)))
        .collect::<Result<_, _>>()?;
    let sigma = lab
        .cfg
        .study
        .sigma_grid
        .iter()
        .map(|&v| point(lab, "sigma", v, &MemoryParams { sigma: v, ..base }))
        .collect::<Result<_, _>>()?;
    Ok(Sweeps { theta, sigma })
}
