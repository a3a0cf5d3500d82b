//! One-at-a-time sensitivity of the agreement scores to the model
//! parameters.

use serde::{Deserialize, Serialize};

use super::agreement::{agreement_scores, EffectSummary, ReferenceTrends};
use super::report::{fmt_f64, Table};
use super::study::{par_map, Lab};
use super::ExperimentError;
use crate::conditions::{ConditionKind, Depth, Difficulty, Study};
use crate::memory::{MemoryParams, K_GLOB_MAX};

pub const PARAMETERS: [&str; 8] = ["lambda", "b", "a_s", "a_v", "a_c", "theta", "K_glob", "sigma"];

pub fn get_param(p: &MemoryParams, name: &str) -> f64 {
    match name {
        "lambda" => p.lambda,
        "b" => p.b,
        "a_s" => p.a_s,
        "a_v" => p.a_v,
        "a_c" => p.a_c,
        "theta" => p.theta,
        "K_glob" => p.k_glob as f64,
        "sigma" => p.sigma,
        _ => panic!("unknown parameter {name}"),
    }
}

/// Sets `name` to `value`, clamped to its valid range (`K_glob` rounded).
pub fn set_param(p: &mut MemoryParams, name: &str, value: f64) {
    match name {
        "lambda" => p.lambda = value.clamp(1e-6, 1.0),
        "b" => p.b = value.clamp(0.0, 1.0),
        "a_s" => p.a_s = value.clamp(0.0, 2.0),
        "a_v" => p.a_v = value.clamp(0.0, 1.0),
        "a_c" => p.a_c = value.clamp(0.0, 1.0),
        "theta" => p.theta = value.max(0.0),
        "K_glob" => p.k_glob = (value.round() as usize).clamp(3, K_GLOB_MAX),
        "sigma" => p.sigma = value.clamp(0.01, 0.1),
        _ => panic!("unknown parameter {name}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub parameter: String,
    /// Signed relative perturbation; 0 for the baseline row.
    pub level: f64,
    pub value: f64,
    pub difficulty_delta_change: f64,
    pub hierarchy_relative_change: f64,
    pub position_consistency: bool,
    /// Difficulty ordering, depth and position effects all keep their
    /// direction.
    pub directions_hold: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub rows: Vec<SensitivityRow>,
    /// (parameter, magnitude, mean score of the + and - perturbations).
    pub by_magnitude: Vec<(String, f64, f64)>,
    /// (magnitude, mean over parameters).
    pub mean_by_level: Vec<(f64, f64)>,
}

impl Sensitivity {
    pub fn baseline(&self) -> &SensitivityRow {
        self.rows.iter().find(|r| r.level == 0.0).expect("baseline row")
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "parameter",
            "level",
            "value",
            "difficulty_delta_change",
            "hierarchy_relative_change",
            "position_consistency",
            "directions_hold",
            "score",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.parameter.clone(),
                fmt_f64(r.level),
                fmt_f64(r.value),
                fmt_f64(r.difficulty_delta_change),
                fmt_f64(r.hierarchy_relative_change),
                r.position_consistency.to_string(),
                r.directions_hold.to_string(),
                fmt_f64(r.score),
            ]);
        }
        t
    }
}

/// Aggregated sensitivity of each run: per metric, the absolute deviation
/// from the baseline is min-max rescaled over all runs and the baseline,
/// then the rescaled deviations are averaged over metrics.
pub fn aggregate_sensitivity(baseline: &[f64], runs: &[Vec<f64>]) -> Vec<f64> {
    let k = baseline.len();
    let mut scores = vec![0.0; runs.len()];
    for j in 0..k {
        let dev: Vec<f64> = runs.iter().map(|r| (r[j] - baseline[j]).abs()).collect();
        // The baseline deviation of zero takes part in the rescaling.
        let lo = dev.iter().copied().fold(0.0, f64::min);
        let hi = dev.iter().copied().fold(0.0, f64::max);
        if hi > lo {
            for (s, d) in scores.iter_mut().zip(&dev) {
                *s += (d - lo) / (hi - lo) / k as f64;
            }
        }
    }
    scores
}

fn directions_hold(s: &EffectSummary, consistent: bool) -> Result<bool, ExperimentError> {
    let steps = |k| s.get(k, "steps");
    let np = steps(ConditionKind::Difficulty(Difficulty::NoProblem))?;
    let c = steps(ConditionKind::Difficulty(Difficulty::Competing))?;
    let ls = steps(ConditionKind::Difficulty(Difficulty::LowScent))?;
    let two = steps(ConditionKind::Depth(Depth::TwoLevel8x8))?;
    let three = steps(ConditionKind::Depth(Depth::ThreeLevel4x4x4))?;
    Ok(np < c && c < ls && two < three && consistent)
}

/// Perturbs each parameter of `base` by `±level` for every configured level
/// and evaluates the default policies of all studies under the result.
pub fn run_sensitivity(
    lab: &Lab,
    base: &MemoryParams,
    refs: &ReferenceTrends,
) -> Result<Sensitivity, ExperimentError> {
    let mut runs: Vec<(String, f64, MemoryParams)> = vec![("baseline".into(), 0.0, *base)];
    for name in PARAMETERS {
        for &level in &lab.cfg.study.sensitivity_levels {
            for sign in [1.0, -1.0] {
                let mut p = *base;
                set_param(&mut p, name, get_param(base, name) * (1.0 + sign * level));
                runs.push((name.to_owned(), sign * level, p));
            }
        }
    }
    // Train the fixed policies up front so the parallel evaluations share them.
    for s in Study::ALL {
        lab.default_policy(s)?;
    }
    let episodes = lab.cfg.study.probe_episodes;
    let evaluated = par_map(lab.jobs, &runs, |(_, _, p)| {
        let summary = lab.summarize_fixed(&Study::ALL, p, episodes)?;
        let scores = agreement_scores(&summary, refs)?;
        let hold = directions_hold(&summary, scores.position_consistency)?;
        Ok::<_, ExperimentError>((scores, hold))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let metrics: Vec<Vec<f64>> = evaluated
        .iter()
        .map(|(s, _)| {
            vec![
                s.difficulty_delta_change,
                s.hierarchy_relative_change,
                if s.position_consistency { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    let scores = aggregate_sensitivity(&metrics[0], &metrics);

    let rows: Vec<SensitivityRow> = runs
        .iter()
        .zip(&evaluated)
        .zip(&scores)
        .map(|(((name, level, p), (s, hold)), &score)| SensitivityRow {
            parameter: name.clone(),
            level: *level,
            value: if name == "baseline" { 0.0 } else { get_param(p, name) },
            difficulty_delta_change: s.difficulty_delta_change,
            hierarchy_relative_change: s.hierarchy_relative_change,
            position_consistency: s.position_consistency,
            directions_hold: *hold,
            score,
        })
        .collect();

    let mut by_magnitude = Vec::new();
    for name in PARAMETERS {
        for &level in &lab.cfg.study.sensitivity_levels {
            let pair: Vec<f64> = rows
                .iter()
                .filter(|r| r.parameter == name && r.level.abs() == level)
                .map(|r| r.score)
                .collect();
            by_magnitude.push((name.to_owned(), level, pair.iter().sum::<f64>() / pair.len() as f64));
        }
    }
    let mean_by_level = lab
        .cfg
        .study
        .sensitivity_levels
        .iter()
        .map(|&level| {
            let v: Vec<f64> = by_magnitude.iter().filter(|m| m.1 == level).map(|m| m.2).collect();
            (level, v.iter().sum::<f64>() / v.len() as f64)
        })
        .collect();
    Ok(Sensitivity {
        rows,
        by_magnitude,
        mean_by_level,
    })
}
