//! Agreement between model effects and reference trends.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::{metric_value, Report};
use super::study::Cell;
use super::ExperimentError;
use crate::conditions::{ConditionKind, Depth, Difficulty, Position, Study};

/// Reference effects the model is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrends {
    /// Min-max-normalized steps of no_problem, competing and low_scent.
    pub difficulty_steps: [f64; 3],
    /// Mean steps of the two-level and three-level layouts.
    pub depth_steps: [f64; 2],
    pub depth_lostness: [f64; 2],
    /// Mean steps for left, right, top and bottom targets.
    pub position_steps: [f64; 4],
    /// Mean clicks for left and right targets.
    pub position_clicks: [f64; 2],
    /// First-click accuracy for left and right targets.
    pub position_first_click: [f64; 2],
}

impl Default for ReferenceTrends {
    fn default() -> Self {
        Self {
            difficulty_steps: [0.0, 0.5, 1.0],
            depth_steps: [13.5, 25.6],
            depth_lostness: [0.19, 0.28],
            position_steps: [13.12, 13.52, 12.56, 13.51],
            position_clicks: [1.12, 1.38],
            position_first_click: [0.904, 0.664],
        }
    }
}

impl ReferenceTrends {
    pub fn hierarchy_ratio(&self) -> f64 {
        self.depth_steps[1] / self.depth_steps[0]
    }
}

/// Mean of each metric per condition, pooled over goals and episodes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub means: BTreeMap<ConditionKind, BTreeMap<String, f64>>,
}

impl EffectSummary {
    pub fn from_cells(cells: &[Cell]) -> Self {
        let mut sums: BTreeMap<ConditionKind, (BTreeMap<String, f64>, usize)> = BTreeMap::new();
        for cell in cells {
            let (s, n) = sums.entry(cell.kind).or_default();
            for r in &cell.records {
                for m in super::report::METRICS.into_iter().chain(["selection_accuracy"]) {
                    *s.entry(m.to_owned()).or_default() += metric_value(r, m).unwrap();
                }
            }
            *n += cell.records.len();
        }
        let means = sums
            .into_iter()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(k, (s, n))| (k, s.into_iter().map(|(m, v)| (m, v / n as f64)).collect()))
            .collect();
        Self { means }
    }

    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a Report>) -> Self {
        let mut means = BTreeMap::new();
        for r in reports {
            for (name, metrics) in &r.aggregates {
                let kind: ConditionKind = name.parse().expect("report keys are condition names");
                means.insert(kind, metrics.iter().map(|(m, a)| (m.clone(), a.mean)).collect());
            }
        }
        Self { means }
    }

    pub fn merge(&mut self, other: EffectSummary) {
        self.means.extend(other.means);
    }

    pub fn get(&self, kind: ConditionKind, metric: &str) -> Result<f64, ExperimentError> {
        self.means
            .get(&kind)
            .and_then(|m| m.get(metric))
            .copied()
            .ok_or_else(|| ExperimentError::MissingCondition(format!("{kind} ({metric})")))
    }

    /// Summary whose steps reproduce `refs` exactly.
    pub fn from_references(refs: &ReferenceTrends) -> Self {
        let mut s = Self::default();
        let mut put = |k: ConditionKind, v: f64| {
            s.means.insert(k, BTreeMap::from([("steps".to_owned(), v)]));
        };
        for (d, v) in Study::Difficulty.conditions().into_iter().zip(refs.difficulty_steps) {
            put(d, v);
        }
        put(ConditionKind::Depth(Depth::TwoLevel8x8), refs.depth_steps[0]);
        put(ConditionKind::Depth(Depth::ThreeLevel4x4x4), refs.depth_steps[1]);
        for (p, v) in Study::Position.conditions().into_iter().zip(refs.position_steps) {
            put(p, v);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementScores {
    pub difficulty_delta_change: f64,
    pub hierarchy_relative_change: f64,
    pub position_consistency: bool,
    pub trend_distance: f64,
}

fn min_max(v: &[f64]) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Mean relative error of adjacent differences of min-max-normalized steps.
pub fn difficulty_delta_change(model_steps: &[f64; 3], refs: &ReferenceTrends) -> f64 {
    let m = min_max(model_steps);
    let r = min_max(&refs.difficulty_steps);
    (0..2)
        .map(|i| {
            let dm = m[i + 1] - m[i];
            let dr = r[i + 1] - r[i];
            (dm - dr).abs() / dr.abs()
        })
        .sum::<f64>()
        / 2.0
}

pub fn agreement_scores(
    model: &EffectSummary,
    refs: &ReferenceTrends,
) -> Result<AgreementScores, ExperimentError> {
    let steps = |k| model.get(k, "steps");
    let d = [
        steps(ConditionKind::Difficulty(Difficulty::NoProblem))?,
        steps(ConditionKind::Difficulty(Difficulty::Competing))?,
        steps(ConditionKind::Difficulty(Difficulty::LowScent))?,
    ];
    let ddc = difficulty_delta_change(&d, refs);
    let two = steps(ConditionKind::Depth(Depth::TwoLevel8x8))?;
    let three = steps(ConditionKind::Depth(Depth::ThreeLevel4x4x4))?;
    let hrc = (three / two - refs.hierarchy_ratio()).abs();
    let consistent = steps(ConditionKind::Position(Position::Left))?
        <= steps(ConditionKind::Position(Position::Right))?
        && steps(ConditionKind::Position(Position::Top))?
            <= steps(ConditionKind::Position(Position::Bottom))?;
    let trend_distance = ddc + hrc + if consistent { 0.0 } else { 1.0 };
    if !trend_distance.is_finite() {
        return Err(ExperimentError::Config("agreement score is not finite".into()));
    }
    Ok(AgreementScores {
        difficulty_delta_change: ddc,
        hierarchy_relative_change: hrc,
        position_consistency: consistent,
        trend_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_agreement_is_zero() {
        let refs = ReferenceTrends::default();
        let s = agreement_scores(&EffectSummary::from_references(&refs), &refs).unwrap();
        assert_eq!(s.difficulty_delta_change, 0.0);
        assert!(s.hierarchy_relative_change < 1e-15);
        assert!(s.position_consistency);
        assert!(s.trend_distance < 1e-15);
    }

    #[test]
    fn reversed_difficulty_is_penalized() {
        let refs = ReferenceTrends::default();
        assert_eq!(difficulty_delta_change(&[30.0, 20.0, 10.0], &refs), 2.0);
        assert_eq!(difficulty_delta_change(&[5.0, 5.0, 5.0], &refs), 1.0);
        assert_eq!(difficulty_delta_change(&[10.0, 15.0, 20.0], &refs), 0.0);
    }

    #[test]
    fn hierarchy_reference_ratio() {
        assert!((ReferenceTrends::default().hierarchy_ratio() - 1.896).abs() < 1e-3);
    }

    #[test]
    fn missing_condition() {
        let refs = ReferenceTrends::default();
        let mut s = EffectSummary::from_references(&refs);
        s.means.remove(&ConditionKind::Depth(Depth::TwoLevel8x8));
        assert!(matches!(
            agreement_scores(&s, &refs),
            Err(ExperimentError::MissingCondition(_))
        ));
    }

    #[test]
    fn inconsistent_position_adds_one() {
        let refs = ReferenceTrends::default();
        let mut s = EffectSummary::from_references(&refs);
        s.means
            .get_mut(&ConditionKind::Position(Position::Left))
            .unwrap()
            .insert("steps".into(), 99.0);
        let a = agreement_scores(&s, &refs).unwrap();
        assert!(!a.position_consistency);
        assert!((a.trend_distance - 1.0).abs() < 1e-12);
    }
}
