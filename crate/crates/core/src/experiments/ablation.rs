//! Component and discount-factor ablations.

use serde::{Deserialize, Serialize};

use super::agreement::{agreement_scores, AgreementScores, EffectSummary, ReferenceTrends};
use super::report::{fmt_f64, Table};
use super::study::{par_map, Lab};
use super::ExperimentError;
use crate::conditions::Study;
use crate::memory::MemoryParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoDecay,
    NoNoise,
    Neither,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoDecay, Variant::NoNoise, Variant::Neither];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoDecay => "no_decay",
            Variant::NoNoise => "no_noise",
            Variant::Neither => "neither",
        }
    }

    pub fn apply(self, p: MemoryParams) -> MemoryParams {
        match self {
            Variant::Full => p,
            Variant::NoDecay => p.without_decay(),
            Variant::NoNoise => p.without_noise(),
            Variant::Neither => p.without_decay().without_noise(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRow {
    pub variant: Variant,
    pub params: MemoryParams,
    pub scores: AgreementScores,
    pub summary: EffectSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentAblation {
    pub rows: Vec<VariantRow>,
    /// Variant with the smallest trend distance.
    pub best: Variant,
    /// Whichever of no-noise and no-decay has the larger trend distance.
    pub worst_single_removal: Variant,
}

impl ComponentAblation {
    pub fn row(&self, v: Variant) -> &VariantRow {
        self.rows.iter().find(|r| r.variant == v).expect("all variants present")
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(&[
            "variant",
            "difficulty_delta_change",
            "hierarchy_relative_change",
            "position_consistency",
            "trend_distance",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.variant.name().to_owned(),
                fmt_f64(r.scores.difficulty_delta_change),
                fmt_f64(r.scores.hierarchy_relative_change),
                r.scores.position_consistency.to_string(),
                fmt_f64(r.scores.trend_distance),
            ]);
        }
        t
    }
}

/// Retrains one policy per study for each variant and scores its effects.
pub fn run_component_ablation(
    lab: &Lab,
    refs: &ReferenceTrends,
) -> Result<ComponentAblation, ExperimentError> {
    let train_cfg = lab.ablation_train_config();
    let episodes = lab.cfg.study.probe_episodes;
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let params = v.apply(lab.cfg.memory);
        let summary = lab.summarize_trained(&Study::ALL, &params, &train_cfg, episodes)?;
        rows.push(VariantRow {
            variant: v,
            params,
            scores: agreement_scores(&summary, refs)?,
            summary,
        });
    }
    let best = rows
        .iter()
        .min_by(|a, b| a.scores.trend_distance.total_cmp(&b.scores.trend_distance))
        .expect("four variants")
        .variant;
    let dist = |v: Variant| rows.iter().find(|r| r.variant == v).unwrap().scores.trend_distance;
    let worst_single_removal = if dist(Variant::NoNoise) >= dist(Variant::NoDecay) {
        Variant::NoNoise
    } else {
        Variant::NoDecay
    };
    Ok(ComponentAblation {
        rows,
        best,
        worst_single_removal,
    })
}

pub const RADAR_METRICS: [&str; 5] = [
    "success",
    "selection_accuracy",
    "inverted_steps",
    "inverted_lostness",
    "inverted_clicks",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaRow {
    pub gamma: f64,
    /// Seed-averaged raw means: success, selection accuracy, steps,
    /// lostness, clicks.
    pub success: f64,
    pub selection_accuracy: f64,
    pub steps: f64,
    pub lostness: f64,
    pub clicks: f64,
    /// Per-seed success rates and mean steps.
    pub seed_success: Vec<f64>,
    pub seed_steps: Vec<f64>,
    /// Normalized radar values in `RADAR_METRICS` order; the best row scores
    /// 1 on each axis.
    pub radar: [f64; 5],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaAblation {
    pub rows: Vec<GammaRow>,
}

impl GammaAblation {
    pub fn table(&self) -> Table {
        let mut cols = vec!["gamma", "success", "selection_accuracy", "steps", "lostness", "clicks"];
        cols.extend(RADAR_METRICS.iter().map(|m| match *m {
            "success" => "radar_success",
            "selection_accuracy" => "radar_selection_accuracy",
            "inverted_steps" => "radar_inverted_steps",
            "inverted_lostness" => "radar_inverted_lostness",
            _ => "radar_inverted_clicks",
        }));
        let mut t = Table::new(&cols);
        for r in &self.rows {
            let mut row = vec![
                fmt_f64(r.gamma),
                fmt_f64(r.success),
                fmt_f64(r.selection_accuracy),
                fmt_f64(r.steps),
                fmt_f64(r.lostness),
                fmt_f64(r.clicks),
            ];
            row.extend(r.radar.iter().map(|&x| fmt_f64(x)));
            t.push(row);
        }
        t
    }
}

/// Scales each axis so the best value is 1. The first two axes are
/// larger-is-better; the rest are costs and score `min / x`.
pub fn radar(raw: &[[f64; 5]]) -> Vec<[f64; 5]> {
    let mut out = vec![[0.0; 5]; raw.len()];
    for k in 0..5 {
        let col: Vec<f64> = raw.iter().map(|r| r[k]).collect();
        for (i, &x) in col.iter().enumerate() {
            out[i][k] = if k < 2 {
                let max = col.iter().copied().fold(0.0, f64::max);
                if max > 0.0 {
                    x / max
                } else {
                    1.0
                }
            } else {
                let min = col.iter().copied().fold(f64::INFINITY, f64::min);
                if x > 0.0 {
                    min / x
                } else {
                    1.0
                }
            };
        }
    }
    out
}

/// Trains difficulty-study policies for every configured discount factor
/// and seed and averages their behaviour over seeds.
pub fn run_gamma_ablation(lab: &Lab) -> Result<GammaAblation, ExperimentError> {
    let base = lab.ablation_train_config();
    let s = &lab.cfg.study;
    let seeds = s.ablation_seeds.max(1) as u64;
    let mut jobs = Vec::new();
    for &g in &s.gamma_values {
        for k in 0..seeds {
            let mut t = base.clone();
            t.gamma = g;
            t.seed = base.seed + k;
            jobs.push(t);
        }
    }
    let params = lab.cfg.memory;
    let summaries = par_map(lab.jobs, &jobs, |t| {
        lab.summarize_trained(&[Study::Difficulty], &params, t, s.probe_episodes)
    });

    let mut raw = Vec::new();
    let mut rows = Vec::new();
    let mut it = summaries.into_iter();
    for &g in &s.gamma_values {
        let mut acc = [0.0; 5];
        let (mut ss, mut st) = (Vec::new(), Vec::new());
        for _ in 0..seeds {
            let summary = it.next().expect("one summary per job")?;
            let m = pooled(&summary, &Study::Difficulty.conditions())?;
            for (a, v) in acc.iter_mut().zip(m) {
                *a += v / seeds as f64;
            }
            ss.push(m[0]);
            st.push(m[2]);
        }
        raw.push(acc);
        rows.push(GammaRow {
            gamma: g,
            success: acc[0],
            selection_accuracy: acc[1],
            steps: acc[2],
            lostness: acc[3],
            clicks: acc[4],
            seed_success: ss,
            seed_steps: st,
            radar: [0.0; 5],
        });
    }
    for (row, r) in rows.iter_mut().zip(radar(&raw)) {
        row.radar = r;
    }
    Ok(GammaAblation { rows })
}

/// Condition-averaged success, selection accuracy, steps, lostness and
/// clicks.
fn pooled(
    summary: &EffectSummary,
    kinds: &[crate::conditions::ConditionKind],
) -> Result<[f64; 5], ExperimentError> {
    let mut out = [0.0; 5];
    for &k in kinds {
        for (o, m) in out
            .iter_mut()
            .zip(["success", "selection_accuracy", "steps", "lostness", "clicks"])
        {
            *o += summary.get(k, m)? / kinds.len() as f64;
        }
    }
    Ok(out)
}
