use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use super::agreement::EffectSummary;
use super::config::ExperimentConfig;
use super::ExperimentError;
use crate::agent::{evaluate, train, CurvePoint, Policy, PolicySpec, TrainConfig};
use crate::conditions::{
    generate_benchmark_layout_with, generate_training_layout, ConditionKind, ConditionSpec, Study,
    GOALS_PER_CONDITION,
};
use crate::env::EpisodeLog;
use crate::layout::Layout;
use crate::memory::MemoryParams;
use crate::metrics::{episode_metrics, MetricRecord};
use crate::rng::{derive_seed, tag};

/// Evaluation episodes of one (condition, goal) pair.
#[derive(Debug, Clone)]
pub struct Cell {
    pub kind: ConditionKind,
    pub goal_index: u8,
    pub layout: Arc<Layout>,
    pub logs: Vec<EpisodeLog>,
    pub records: Vec<MetricRecord>,
}

impl Cell {
    pub fn from_logs(
        kind: ConditionKind,
        goal_index: u8,
        layout: Arc<Layout>,
        logs: Vec<EpisodeLog>,
    ) -> Result<Self, ExperimentError> {
        let records = logs
            .iter()
            .map(|l| episode_metrics(l, &layout))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            kind,
            goal_index,
            layout,
            logs,
            records,
        })
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: Arc<Policy>,
    pub curve: Vec<CurvePoint>,
}

/// Applies `f` to every item on up to `jobs` threads, keeping input order.
pub fn par_map<T: Sync, R: Send>(
    jobs: usize,
    items: &[T],
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker thread panicked"))
            .collect()
    })
}

/// Experiment runner: trains one policy per (study, parameters, training
/// configuration) on demand, caches it, and evaluates benchmark cells.
pub struct Lab {
    pub cfg: ExperimentConfig,
    pub jobs: usize,
    cache: Mutex<HashMap<String, TrainedPolicy>>,
}

impl Lab {
    pub fn new(cfg: ExperimentConfig) -> Self {
        Self {
            cfg,
            jobs: 1,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn with_jobs(mut self, jobs: usize) -> Self {
        self.jobs = jobs.max(1);
        self
    }

    /// Registers an externally trained policy (e.g. a loaded checkpoint) for
    /// `study` under the given parameters and training configuration.
    pub fn insert_policy(
        &self,
        study: Study,
        params: &MemoryParams,
        train_cfg: &TrainConfig,
        policy: Policy,
    ) {
        self.cache.lock().unwrap().insert(
            cache_key(study, params, train_cfg),
            TrainedPolicy {
                policy: Arc::new(policy),
                curve: Vec::new(),
            },
        );
    }

    /// Policy for `study` trained under `params` and `train_cfg`.
    pub fn policy(
        &self,
        study: Study,
        params: &MemoryParams,
        train_cfg: &TrainConfig,
    ) -> Result<TrainedPolicy, ExperimentError> {
        let key = cache_key(study, params, train_cfg);
        if let Some(p) = self.cache.lock().unwrap().get(&key) {
            return Ok(p.clone());
        }
        let trained = self.train_policy(study, params, train_cfg)?;
        self.cache.lock().unwrap().insert(key, trained.clone());
        Ok(trained)
    }

    /// Policy under the configured memory parameters and training settings.
    pub fn default_policy(&self, study: Study) -> Result<TrainedPolicy, ExperimentError> {
        self.policy(study, &self.cfg.memory, &self.cfg.train)
    }

    fn train_policy(
        &self,
        study: Study,
        params: &MemoryParams,
        train_cfg: &TrainConfig,
    ) -> Result<TrainedPolicy, ExperimentError> {
        let kinds = study.conditions();
        let spec = PolicySpec::for_env(self.cfg.env.n_max, train_cfg.hidden.clone());
        let s = &self.cfg.study;
        let base = derive_seed(train_cfg.seed, &[tag(study.name())]);
        // Generation can only fail on a bad profile, which is the same for
        // every seed; check each kind once so the closure below cannot fail.
        for &k in &kinds {
            generate_training_layout(k, &s.prior, base, &s.generator)?;
        }
        let out = train(spec, train_cfg, &self.cfg.env, params, |e| {
            let pick = derive_seed(base, &[tag("kind"), e]) % kinds.len() as u64;
            let seed = derive_seed(base, &[tag("layout"), e]);
            Arc::new(
                generate_training_layout(kinds[pick as usize], &s.prior, seed, &s.generator)
                    .expect("profiles checked above"),
            )
        })?;
        Ok(TrainedPolicy {
            policy: Arc::new(out.policy),
            curve: out.curve,
        })
    }

    pub fn benchmark_layout(
        &self,
        kind: ConditionKind,
        goal_index: u8,
    ) -> Result<Arc<Layout>, ExperimentError> {
        let spec = ConditionSpec {
            kind,
            goal_index,
            seed: self.cfg.study.seed,
        };
        Ok(Arc::new(generate_benchmark_layout_with(
            &spec,
            &self.cfg.study.generator,
        )?))
    }

    /// Evaluates `policy` on every benchmark cell of `study`. Episode `e` of
    /// goal `g` uses the same seed in every condition.
    pub fn evaluate_study(
        &self,
        study: Study,
        policy: &Policy,
        params: &MemoryParams,
        episodes: usize,
    ) -> Result<Vec<Cell>, ExperimentError> {
        let mut work = Vec::new();
        for kind in study.conditions() {
            for g in 0..GOALS_PER_CONDITION {
                work.push((kind, g, self.benchmark_layout(kind, g)?));
            }
        }
        let seed = self.cfg.study.seed;
        par_map(self.jobs, &work, |(kind, g, layout)| {
            let logs = (0..episodes as u64)
                .map(|e| {
                    let s = derive_seed(seed, &[tag("eval"), u64::from(*g), e]);
                    evaluate(policy, layout.clone(), &self.cfg.env, params, s)
                })
                .collect::<Result<Vec<_>, _>>()?;
            Cell::from_logs(*kind, *g, layout.clone(), logs)
        })
        .into_iter()
        .collect()
    }

    /// Training configuration for ablation policies.
    pub fn ablation_train_config(&self) -> TrainConfig {
        let mut t = self.cfg.train.clone();
        if let Some(n) = self.cfg.study.ablation_train_episodes {
            t.total_episodes = n;
        }
        t
    }

    /// Trains (or reuses) one policy per study under `params` and
    /// `train_cfg` and pools the evaluation means per condition.
    pub fn summarize_trained(
        &self,
        studies: &[Study],
        params: &MemoryParams,
        train_cfg: &TrainConfig,
        episodes: usize,
    ) -> Result<EffectSummary, ExperimentError> {
        let policies = par_map(self.jobs, studies, |&s| self.policy(s, params, train_cfg));
        let mut summary = EffectSummary::default();
        for (&s, p) in studies.iter().zip(policies) {
            let cells = self.evaluate_study(s, &p?.policy, params, episodes)?;
            summary.merge(EffectSummary::from_cells(&cells));
        }
        Ok(summary)
    }

    /// Evaluates the default policies of `studies` under `params`.
    pub fn summarize_fixed(
        &self,
        studies: &[Study],
        params: &MemoryParams,
        episodes: usize,
    ) -> Result<EffectSummary, ExperimentError> {
        let mut summary = EffectSummary::default();
        for &s in studies {
            let p = self.default_policy(s)?;
            let cells = self.evaluate_study(s, &p.policy, params, episodes)?;
            summary.merge(EffectSummary::from_cells(&cells));
        }
        Ok(summary)
    }

    /// Trains (or reuses) the default policy of `study` and evaluates it with
    /// the configured episode count.
    pub fn run_study(&self, study: Study) -> Result<Vec<Cell>, ExperimentError> {
        let p = self.default_policy(study)?;
        self.evaluate_study(study, &p.policy, &self.cfg.memory, self.cfg.study.episodes)
    }
}

fn cache_key(study: Study, params: &MemoryParams, train_cfg: &TrainConfig) -> String {
    format!(
        "{}|{}|{}",
        study.name(),
        serde_json::to_string(params).expect("params serialize"),
        serde_json::to_string(train_cfg).expect("train config serializes")
    )
}
