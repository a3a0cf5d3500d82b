//! Parameter calibration by Bayesian optimization over the memory
//! parameters.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use super::agreement::{agreement_scores, ReferenceTrends};
use super::config::SearchMode;
use super::report::{fmt_f64, Table};
use super::sensitivity::{get_param, set_param};
use super::study::Lab;
use super::ExperimentError;
use crate::conditions::Study;
use crate::memory::MemoryParams;
use crate::rng::{stream, tag};

/// One searched dimension and its bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDim {
    pub name: &'static str,
    pub lo: f64,
    pub hi: f64,
}

pub fn param_space(theta_max: f64) -> Vec<ParamDim> {
    let d = |name, lo, hi| ParamDim { name, lo, hi };
    vec![
        d("lambda", 0.01, 1.0),
        d("b", 0.0, 1.0),
        d("a_s", 0.0, 2.0),
        d("a_v", 0.0, 1.0),
        d("a_c", 0.0, 1.0),
        d("theta", 0.0, theta_max),
        d("K_glob", 3.0, 5.0),
        d("sigma", 0.01, 0.1),
    ]
}

fn decode(space: &[ParamDim], base: &MemoryParams, u: &[f64]) -> MemoryParams {
    let mut p = *base;
    for (d, &x) in space.iter().zip(u) {
        set_param(&mut p, d.name, d.lo + x.clamp(0.0, 1.0) * (d.hi - d.lo));
    }
    p
}

fn encode(space: &[ParamDim], p: &MemoryParams) -> Vec<f64> {
    space
        .iter()
        .map(|d| ((get_param(p, d.name) - d.lo) / (d.hi - d.lo)).clamp(0.0, 1.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialSource {
    Default,
    Random,
    Acquisition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub source: TrialSource,
    pub params: MemoryParams,
    pub difficulty_delta_change: f64,
    pub hierarchy_relative_change: f64,
    pub objective: f64,
    /// Best objective among trials up to and including this one.
    pub incumbent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub best: MemoryParams,
    pub best_objective: f64,
    pub trace: Vec<Trial>,
    /// Indices of trials not dominated on the two agreement scores.
    pub pareto: Vec<usize>,
    /// The search stopped because the trial budget ran out rather than on
    /// a perfect fit.
    pub budget_exhausted: bool,
}

impl Calibration {
    pub fn table(&self) -> Table {
        let mut cols = vec!["trial", "source"];
        cols.extend(param_space(1.0).iter().map(|d| d.name));
        cols.extend(["difficulty_delta_change", "hierarchy_relative_change", "objective", "incumbent"]);
        let mut t = Table::new(&cols);
        for tr in &self.trace {
            let mut row = vec![
                tr.index.to_string(),
                serde_json::to_value(tr.source).unwrap().as_str().unwrap().to_owned(),
            ];
            row.extend(param_space(1.0).iter().map(|d| fmt_f64(get_param(&tr.params, d.name))));
            row.extend([
                fmt_f64(tr.difficulty_delta_change),
                fmt_f64(tr.hierarchy_relative_change),
                fmt_f64(tr.objective),
                fmt_f64(tr.incumbent),
            ]);
            t.push(row);
        }
        t
    }
}

/// Gaussian-process regression with a squared-exponential kernel on
/// standardized targets.
#[derive(Debug, Clone)]
pub struct Gp {
    xs: Vec<Vec<f64>>,
    alpha: DVector<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    length: f64,
    mean: f64,
    scale: f64,
}

const NOISE: f64 = 1e-4;

fn kernel(a: &[f64], b: &[f64], length: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-0.5 * d2 / (length * length)).exp()
}

impl Gp {
    /// Fits the GP, choosing the length scale from a fixed grid by marginal
    /// likelihood.
    pub fn fit(xs: &[Vec<f64>], ys: &[f64]) -> Option<Self> {
        let n = ys.len();
        if n == 0 {
            return None;
        }
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n as f64;
        let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
        let y = DVector::from_iterator(n, ys.iter().map(|v| (v - mean) / scale));
        let mut best: Option<(f64, Gp)> = None;
        for length in [0.1, 0.2, 0.3, 0.5, 0.8, 1.2, 2.0] {
            let k = DMatrix::from_fn(n, n, |i, j| {
                kernel(&xs[i], &xs[j], length) + if i == j { NOISE } else { 0.0 }
            });
            let Some(chol) = k.cholesky() else { continue };
            let alpha = chol.solve(&y);
            let log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
            let lml = -0.5 * y.dot(&alpha) - 0.5 * log_det;
            if best.as_ref().is_none_or(|(b, _)| lml > *b) {
                best = Some((
                    lml,
                    Gp {
                        xs: xs.to_vec(),
                        alpha,
                        chol,
                        length,
                        mean,
                        scale,
                    },
                ));
            }
        }
        best.map(|(_, g)| g)
    }

    /// Posterior mean and standard deviation at `x`.
    pub fn predict(&self, x: &[f64]) -> (f64, f64) {
        let ks = DVector::from_iterator(self.xs.len(), self.xs.iter().map(|xi| kernel(xi, x, self.length)));
        let mu = ks.dot(&self.alpha);
        let v = self.chol.solve(&ks);
        let var = (1.0 - ks.dot(&v)).max(1e-12);
        (self.mean + self.scale * mu, self.scale * var.sqrt())
    }
}

/// Expected improvement below `best` for a minimization problem.
pub fn expected_improvement(mu: f64, sd: f64, best: f64) -> f64 {
    const XI: f64 = 0.01;
    if sd <= 0.0 {
        return (best - mu - XI).max(0.0);
    }
    let z = (best - mu - XI) / sd;
    let n = Normal::standard();
    (best - mu - XI) * n.cdf(z) + sd * n.pdf(z)
}

fn pareto_front(trace: &[Trial]) -> Vec<usize> {
    let dominated = |a: &Trial| {
        trace.iter().any(|b| {
            b.difficulty_delta_change <= a.difficulty_delta_change
                && b.hierarchy_relative_change <= a.hierarchy_relative_change
                && (b.difficulty_delta_change < a.difficulty_delta_change
                    || b.hierarchy_relative_change < a.hierarchy_relative_change)
        })
    };
    trace.iter().filter(|t| !dominated(t)).map(|t| t.index).collect()
}

/// Minimizes the weighted sum of the difficulty and hierarchy agreement
/// scores. The first trial is always `lab.cfg.memory`; the default
/// training policies stay fixed while parameters vary.
pub fn calibrate(lab: &Lab, refs: &ReferenceTrends) -> Result<Calibration, ExperimentError> {
    let s = &lab.cfg.study;
    if s.calibration_trials == 0 {
        return Err(ExperimentError::Config("calibration_trials must be positive".into()));
    }
    let space = param_space(s.theta_max);
    let base = lab.cfg.memory;
    let [w1, w2] = s.calibration_weights;
    let studies = [Study::Difficulty, Study::Depth];
    let mut rng = stream(s.seed, &[tag("calibrate")]);

    let mut xs: Vec<Vec<f64>> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut trace: Vec<Trial> = Vec::new();
    let mut stopped_early = false;
    for i in 0..s.calibration_trials {
        let (source, u) = if i == 0 {
            (TrialSource::Default, encode(&space, &base))
        } else if s.calibration_mode == SearchMode::Random || i < s.calibration_init.max(1) {
            (TrialSource::Random, (0..space.len()).map(|_| rng.random::<f64>()).collect())
        } else {
            let gp = Gp::fit(&xs, &ys);
            let best = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let mut pick: Option<(f64, Vec<f64>)> = None;
            for _ in 0..s.calibration_candidates.max(1) {
                let c: Vec<f64> = (0..space.len()).map(|_| rng.random::<f64>()).collect();
                let ei = gp.as_ref().map_or(0.0, |g| {
                    let (mu, sd) = g.predict(&c);
                    expected_improvement(mu, sd, best)
                });
                if pick.as_ref().is_none_or(|(b, _)| ei > *b) {
                    pick = Some((ei, c));
                }
            }
            (TrialSource::Acquisition, pick.expect("at least one candidate").1)
        };
        let params = if i == 0 { base } else { decode(&space, &base, &u) };
        let summary = lab.summarize_fixed(&studies, &params, s.probe_episodes)?;
        let a = agreement_scores_partial(&summary, refs)?;
        let objective = w1 * a.0 + w2 * a.1;
        let incumbent = trace.last().map_or(objective, |t: &Trial| t.incumbent.min(objective));
        trace.push(Trial {
            index: i,
            source,
            params,
            difficulty_delta_change: a.0,
            hierarchy_relative_change: a.1,
            objective,
            incumbent,
        });
        xs.push(encode(&space, &params));
        ys.push(objective);
        if objective <= 1e-12 {
            stopped_early = true;
            break;
        }
    }
    let best_trial = trace
        .iter()
        .min_by(|a, b| a.objective.total_cmp(&b.objective))
        .expect("at least one trial");
    Ok(Calibration {
        best: best_trial.params,
        best_objective: best_trial.objective,
        pareto: pareto_front(&trace),
        budget_exhausted: !stopped_early,
        trace,
    })
}

/// Difficulty and hierarchy scores only; position conditions are not
/// needed for the calibration objective.
fn agreement_scores_partial(
    summary: &super::agreement::EffectSummary,
    refs: &ReferenceTrends,
) -> Result<(f64, f64), ExperimentError> {
    let mut s = summary.clone();
    // Fill the position conditions with a consistent placeholder.
    for (k, v) in Study::Position.conditions().into_iter().zip(refs.position_steps) {
        s.means
            .entry(k)
            .or_insert_with(|| [("steps".to_owned(), v)].into_iter().collect());
    }
    let a = agreement_scores(&s, refs)?;
    Ok((a.difficulty_delta_change, a.hierarchy_relative_change))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let space = param_space(3.0);
        let p = MemoryParams::default();
        let q = decode(&space, &p, &encode(&space, &p));
        for d in &space {
            assert!((get_param(&p, d.name) - get_param(&q, d.name)).abs() < 1e-12, "{}", d.name);
        }
    }

    #[test]
    fn decoded_points_stay_in_range() {
        let space = param_space(3.0);
        for u in [vec![0.0; 8], vec![1.0; 8], vec![0.5; 8]] {
            let p = decode(&space, &MemoryParams::default(), &u);
            assert!(p.validate().is_ok(), "{p:?}");
            assert!((0.01..=0.1).contains(&p.sigma));
        }
    }

    #[test]
    fn gp_interpolates() {
        let xs = vec![vec![0.0], vec![0.5], vec![1.0]];
        let ys = vec![1.0, 0.0, 1.0];
        let gp = Gp::fit(&xs, &ys).unwrap();
        for (x, y) in xs.iter().zip(&ys) {
            let (mu, sd) = gp.predict(x);
            assert!((mu - y).abs() < 0.05, "{mu} vs {y}");
            assert!(sd < 0.1);
        }
    }

    #[test]
    fn ei_prefers_low_mean_and_high_spread() {
        assert!(expected_improvement(0.0, 0.1, 1.0) > expected_improvement(0.5, 0.1, 1.0));
        assert!(expected_improvement(1.0, 0.5, 1.0) > expected_improvement(1.0, 0.1, 1.0));
        assert_eq!(expected_improvement(2.0, 0.0, 1.0), 0.0);
    }
}
