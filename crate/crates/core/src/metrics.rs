//! Per-episode behavioural metrics and group statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::env::{Action, EpisodeLog};
use crate::layout::{Layout, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("cannot summarize an empty sample")]
    EmptySample,
    #[error("sample contains a non-finite value")]
    NonFinite,
    #[error("malformed episode log: {0}")]
    MalformedLog(String),
    #[error("lostness needs at least one page visit")]
    ZeroVisits,
}

/// Behavioural summary of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub steps: u32,
    /// Number of `Select` actions, wrong ones included.
    pub clicks: u32,
    pub success: bool,
    pub first_click_correct: bool,
    pub lostness: f64,
    /// Number of `Return` actions.
    pub returns: u32,
    /// Visits of options already visited earlier in the episode.
    pub revisits: u32,
    pub steps_before_first_select: u32,
    /// Selects of the target or one of its ancestors.
    pub correct_clicks: u32,
    /// Sum of rewards.
    pub reward: f64,
}

impl MetricRecord {
    /// Fraction of `Select` actions on the target path; 0 without selects.
    pub fn selection_accuracy(&self) -> f64 {
        if self.clicks == 0 {
            0.0
        } else {
            f64::from(self.correct_clicks) / f64::from(self.clicks)
        }
    }
}

/// `sqrt((N/S - 1)^2 + (R/N - 1)^2)` with `S` pages visited, `N` distinct
/// pages and `R` the minimum number of pages needed.
pub fn lostness(total: usize, distinct: usize, required: usize) -> Result<f64, MetricsError> {
    if total == 0 || distinct == 0 {
        return Err(MetricsError::ZeroVisits);
    }
    let (s, n, r) = (total as f64, distinct as f64, required as f64);
    Ok(((n / s - 1.0).powi(2) + (r / n - 1.0).powi(2)).sqrt())
}

/// Metrics of `log` against the target of `layout`.
///
/// A page is a menu layer, identified by its parent. The root layer is the
/// first page; every descending `Select` and every `Return` opens another.
pub fn episode_metrics(log: &EpisodeLog, layout: &Layout) -> Result<MetricRecord, MetricsError> {
    if log.records.is_empty() {
        return Err(MetricsError::MalformedLog("no steps".into()));
    }
    let target = layout.target();
    let on_path = |id: NodeId| id == target || layout.ancestors(target).contains(&id);

    let mut pages: Vec<Option<NodeId>> = vec![None];
    let mut seen = std::collections::BTreeSet::new();
    let (mut clicks, mut correct, mut revisits, mut returns) = (0u32, 0u32, 0u32, 0u32);
    let mut first_click = None;
    let mut first_select_at = None;
    for (i, r) in log.records.iter().enumerate() {
        match r.action {
            Action::Visit(_) => {
                if let Some(id) = r.focused_id {
                    if !seen.insert(id) {
                        revisits += 1;
                    }
                }
            }
            Action::Select => {
                clicks += 1;
                let id = r.focused_id.ok_or_else(|| {
                    MetricsError::MalformedLog(format!("select without an option at step {i}"))
                })?;
                if on_path(id) {
                    correct += 1;
                }
                first_click.get_or_insert(on_path(id));
                first_select_at.get_or_insert(i as u32);
                if r.layer_path.last() == Some(&id) {
                    pages.push(Some(id));
                }
            }
            Action::Return => {
                returns += 1;
                pages.push(r.layer_path.last().copied());
            }
        }
    }
    let distinct = pages.iter().collect::<std::collections::BTreeSet<_>>().len();
    let required = layout.ancestors(target).len() + 1;
    let steps = log.steps() as u32;
    Ok(MetricRecord {
        steps,
        clicks,
        success: log.reached(target),
        first_click_correct: first_click.unwrap_or(false),
        lostness: lostness(pages.len(), distinct, required)?,
        returns,
        revisits,
        steps_before_first_select: first_select_at.unwrap_or(steps),
        correct_clicks: correct,
        reward: log.total_return(),
    })
}

/// Mean, sample standard deviation and a normal 95% interval of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

const Z_975: f64 = 1.959_963_984_540_054;

/// Single-pass (Welford) summary. A sample of one has zero spread.
pub fn aggregate(values: &[f64]) -> Result<Aggregate, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in values.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let n = values.len();
    let std = if n > 1 { (m2 / (n - 1) as f64).sqrt() } else { 0.0 };
    let half = Z_975 * std / (n as f64).sqrt();
    Ok(Aggregate {
        n,
        mean,
        std,
        ci_low: mean - half,
        ci_high: mean + half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// First group has the larger median.
    Greater,
    Less,
    Equal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// U statistic of the first group.
    pub u: f64,
    pub z: f64,
    pub p_value: f64,
    pub direction: Direction,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Two-sided Mann–Whitney U test with tie-corrected variance and a 0.5
/// continuity correction (normal approximation).
pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<Comparison, MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySample);
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&x| (x, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_sum_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_sum_a += rank * all[i..=j].iter().filter(|x| x.1).count() as f64;
        i = j + 1;
    }
    let u = rank_sum_a - n1 * (n1 + 1.0) / 2.0;
    let n = n1 + n2;
    let mu = n1 * n2 / 2.0;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)).max(1.0));
    let (z, p_value) = if var <= 0.0 {
        (0.0, 1.0)
    } else {
        let diff = u - mu;
        let corrected = (diff.abs() - 0.5).max(0.0) * diff.signum();
        let z = corrected / var.sqrt();
        let normal = Normal::standard();
        (z, (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0))
    };
    let (ma, mb) = (median(a), median(b));
    let direction = if ma > mb {
        Direction::Greater
    } else if ma < mb {
        Direction::Less
    } else {
        Direction::Equal
    };
    Ok(Comparison {
        u,
        z,
        p_value,
        direction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lostness_cases() {
        assert_eq!(lostness(2, 2, 2).unwrap(), 0.0);
        assert_eq!(lostness(4, 2, 2).unwrap(), 0.5);
        assert_eq!(lostness(0, 0, 2), Err(MetricsError::ZeroVisits));
        let l = lostness(4, 3, 2).unwrap();
        let expect = ((0.75f64 - 1.0).powi(2) + (2.0f64 / 3.0 - 1.0).powi(2)).sqrt();
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn aggregate_single_and_empty() {
        let a = aggregate(&[3.0]).unwrap();
        assert_eq!((a.mean, a.std, a.ci_low, a.ci_high), (3.0, 0.0, 3.0, 3.0));
        assert_eq!(aggregate(&[]), Err(MetricsError::EmptySample));
        assert_eq!(aggregate(&[f64::NAN]), Err(MetricsError::NonFinite));
    }

    #[test]
    fn mann_whitney_known_value() {
        // No ties: U of the first sample counts pairs with a > b.
        let c = mann_whitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
        assert_eq!(c.u, 0.0);
        assert_eq!(c.direction, Direction::Less);
        let same = mann_whitney(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(same.p_value, 1.0);
        assert_eq!(same.direction, Direction::Equal);
    }

    #[test]
    fn median_even_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
