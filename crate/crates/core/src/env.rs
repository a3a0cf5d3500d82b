//! The navigation environment.
//!
//! The agent sees a fixed-shape observation: one local-panel row per option
//! of the current layer (revealed scent, view bucket, click bucket), the
//! global-memory panel (revealed scent and normalized action-path distance
//! of the Top-K remembered options), a few context scalars and the action
//! mask. Rows of forgotten options read as zeros.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::layout::{Layout, NodeId};
use crate::memory::{EventKind, MemoryParams, MemoryStore, K_GLOB_MAX};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("illegal action {0:?}")]
    IllegalAction(Action),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("goal {0} is not a leaf of the layout")]
    InvalidGoal(NodeId),
    #[error("replay diverged at step {step}: {reason}")]
    ReplayMismatch { step: usize, reason: String },
    #[error("malformed episode log: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Step budget; reaching it without success ends the episode as a failure.
    #[serde(rename = "T_max")]
    pub t_max: u32,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    pub reward_success: f64,
    pub step_cost: f64,
    pub seed: u64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            t_max: 100,
            n_max: crate::layout::DEFAULT_N_MAX,
            reward_success: 20.0,
            step_cost: 0.01,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    /// Focus the option in this slot of the current layer.
    Visit(usize),
    Select,
    Return,
}

impl Action {
    pub fn count(n_max: usize) -> usize {
        n_max + 2
    }

    pub fn index(self, n_max: usize) -> usize {
        match self {
            Action::Visit(k) => k,
            Action::Select => n_max,
            Action::Return => n_max + 1,
        }
    }

    pub fn from_index(i: usize, n_max: usize) -> Option<Action> {
        match i {
            _ if i < n_max => Some(Action::Visit(i)),
            _ if i == n_max => Some(Action::Select),
            _ if i == n_max + 1 => Some(Action::Return),
            _ => None,
        }
    }
}

/// Visit/click count shown to the agent: `{0, 1, 2, 3+}` mapped to
/// `{0, 1/3, 2/3, 1}`.
pub fn count_bucket(n: u32) -> f64 {
    f64::from(n.min(3)) / 3.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// `N_max` rows of `(revealed scent, view bucket, click bucket)`.
    pub local: Vec<[f64; 3]>,
    /// `K_glob` rows of `(revealed scent, normalized distance)`.
    pub global: Vec<[f64; 2]>,
    /// Selected-ancestor count over `depth_max`.
    pub depth: f64,
    pub step_fraction: f64,
    /// Focused slot of the current layer.
    pub focus: Option<usize>,
    /// Length `N_max + 2`: visits, then select, then return.
    pub mask: Vec<bool>,
}

impl Observation {
    /// Length of [`Observation::features`] for a given `N_max`.
    pub fn feature_dim(n_max: usize) -> usize {
        3 * n_max + 2 * K_GLOB_MAX + 2 + n_max + 1 + Action::count(n_max)
    }

    /// Flat policy input: local panel, global panel padded to `K_GLOB_MAX`
    /// rows, context, focus one-hot, focused scent, mask.
    pub fn features(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(Self::feature_dim(self.local.len()));
        self.write_features(&mut out);
        out
    }

    pub fn write_features(&self, out: &mut Vec<f64>) {
        out.clear();
        for row in &self.local {
            out.extend_from_slice(row);
        }
        for k in 0..K_GLOB_MAX {
            match self.global.get(k) {
                Some(row) => out.extend_from_slice(row),
                None => out.extend_from_slice(&[0.0, 0.0]),
            }
        }
        out.push(self.depth);
        out.push(self.step_fraction);
        for slot in 0..self.local.len() {
            out.push(if self.focus == Some(slot) { 1.0 } else { 0.0 });
        }
        out.push(self.focus.map_or(0.0, |s| self.local[s][0]));
        out.extend(self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }));
    }

    /// Short digest of the observation, recorded in episode logs.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for x in self.features() {
            h.update(x.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepEvent {
    Visit,
    Select,
    WrongSelect,
    Return,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub event: StepEvent,
    pub focused_id: Option<NodeId>,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// One line of an episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u32,
    pub action: Action,
    /// Option acted on (visited or selected); absent for `Return`.
    pub focused_id: Option<NodeId>,
    pub reward: f64,
    /// Selected ancestors after the step.
    pub layer_path: Vec<NodeId>,
    pub revealed_scent: Option<f64>,
    pub panel_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeLog {
    pub records: Vec<StepRecord>,
}

impl EpisodeLog {
    pub fn steps(&self) -> usize {
        self.records.len()
    }

    pub fn total_return(&self) -> f64 {
        self.records.iter().map(|r| r.reward).sum()
    }

    pub fn actions(&self) -> impl Iterator<Item = Action> + '_ {
        self.records.iter().map(|r| r.action)
    }

    /// Whether the final step selected `target`.
    pub fn reached(&self, target: NodeId) -> bool {
        self.records
            .last()
            .is_some_and(|r| r.action == Action::Select && r.focused_id == Some(target))
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("record serializes"));
            s.push('\n');
        }
        s
    }

    pub fn from_jsonl(s: &str) -> Result<Self, EnvError> {
        let records = s
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str(l).map_err(|e| EnvError::Parse(e.to_string())))
            .collect::<Result<_, _>>()?;
        Ok(Self { records })
    }
}

/// Latent state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    /// Selected ancestors, root layer first.
    pub path_stack: Vec<NodeId>,
    pub focus: Option<usize>,
    pub t: u32,
    pub memory: MemoryStore,
    pub done: bool,
    pub success: bool,
    pub goal: NodeId,
}

pub struct Env {
    layout: Arc<Layout>,
    cfg: EnvConfig,
    params: MemoryParams,
    state: EnvState,
    rng: ChaCha8Rng,
    log: Option<EpisodeLog>,
}

impl Env {
    pub fn new(layout: Arc<Layout>, cfg: EnvConfig, params: MemoryParams) -> Self {
        let goal = layout.target();
        let seed = cfg.seed;
        Self {
            layout,
            cfg,
            params,
            state: EnvState {
                path_stack: Vec::new(),
                focus: None,
                t: 0,
                memory: MemoryStore::new(),
                done: false,
                success: false,
                goal,
            },
            rng: ChaCha8Rng::seed_from_u64(seed),
            log: None,
        }
    }

    /// Keep an [`EpisodeLog`] of subsequent steps (cleared on reset).
    pub fn with_logging(mut self) -> Self {
        self.log = Some(EpisodeLog::default());
        self
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn params(&self) -> &MemoryParams {
        &self.params
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn log(&self) -> Option<&EpisodeLog> {
        self.log.as_ref()
    }

    pub fn take_log(&mut self) -> Option<EpisodeLog> {
        self.log.as_mut().map(std::mem::take)
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        let goal = self.layout.target();
        self.reset_with_goal(goal, seed).expect("layout target is a leaf")
    }

    pub fn reset_with_goal(&mut self, goal: NodeId, seed: u64) -> Result<Observation, EnvError> {
        match self.layout.node(goal) {
            Some(n) if n.is_leaf() => {}
            _ => return Err(EnvError::InvalidGoal(goal)),
        }
        self.state = EnvState {
            path_stack: Vec::new(),
            focus: None,
            t: 0,
            memory: MemoryStore::new(),
            done: false,
            success: false,
            goal,
        };
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        if let Some(log) = self.log.as_mut() {
            log.records.clear();
        }
        Ok(self.observe())
    }

    fn current_layer(&self) -> &[NodeId] {
        self.layout.layer(self.state.path_stack.last().copied())
    }

    fn focused_id(&self) -> Option<NodeId> {
        self.state.focus.map(|k| self.current_layer()[k])
    }

    /// Legal-action mask of length `N_max + 2`; all false once done.
    pub fn legal_actions(&self) -> Vec<bool> {
        let n_max = self.cfg.n_max;
        let mut mask = vec![false; Action::count(n_max)];
        if self.state.done {
            return mask;
        }
        let width = self.current_layer().len().min(n_max);
        mask[..width].iter_mut().for_each(|m| *m = true);
        mask[n_max] = self.state.focus.is_some();
        mask[n_max + 1] = !self.state.path_stack.is_empty();
        mask
    }

    pub fn is_legal(&self, action: Action) -> bool {
        let i = action.index(self.cfg.n_max);
        i < Action::count(self.cfg.n_max) && self.legal_actions()[i]
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.state.done {
            return Err(EnvError::EpisodeFinished);
        }
        if !self.is_legal(action) {
            return Err(EnvError::IllegalAction(action));
        }
        let next_t = self.state.t + 1;
        let mut reward = -self.cfg.step_cost;
        let mut revealed = None;
        let (event, acted_on) = match action {
            Action::Visit(k) => {
                let id = self.current_layer()[k];
                let z: f64 = self.rng.sample(StandardNormal);
                let scent = (self.layout.true_scent(id) + self.params.sigma * z).clamp(0.0, 1.0);
                self.state.focus = Some(k);
                self.state.memory.record_event(id, EventKind::View, next_t);
                self.state
                    .memory
                    .reveal(id, scent)
                    .expect("trace exists after a view");
                revealed = Some(scent);
                (StepEvent::Visit, Some(id))
            }
            Action::Select => {
                let id = self.focused_id().expect("select requires focus");
                self.state.memory.record_event(id, EventKind::Click, next_t);
                if id == self.state.goal {
                    self.state.success = true;
                    reward = self.cfg.reward_success;
                    (StepEvent::Select, Some(id))
                } else if !self.layout.is_leaf(id) {
                    self.state.path_stack.push(id);
                    self.state.focus = None;
                    (StepEvent::Select, Some(id))
                } else {
                    (StepEvent::WrongSelect, Some(id))
                }
            }
            Action::Return => {
                self.state.path_stack.pop();
                self.state.focus = None;
                (StepEvent::Return, None)
            }
        };
        self.state.t = next_t;
        self.state.memory.advance_to(next_t);
        self.state.done = self.state.success || next_t >= self.cfg.t_max;

        let observation = self.observe();
        if let Some(log) = self.log.as_mut() {
            log.records.push(StepRecord {
                t: next_t,
                action,
                focused_id: acted_on,
                reward,
                layer_path: self.state.path_stack.clone(),
                revealed_scent: revealed,
                panel_hash: observation.hash(),
            });
        }
        Ok(StepOutcome {
            observation,
            reward,
            done: self.state.done,
            info: StepInfo {
                event,
                focused_id: acted_on,
                success: self.state.success,
            },
        })
    }

    /// Assembles the bounded observation for the current state.
    pub fn observe(&self) -> Observation {
        let n_max = self.cfg.n_max;
        let now = self.state.t;
        let p = &self.params;
        let layout = &*self.layout;

        let mut local = vec![[0.0; 3]; n_max];
        for (row, &id) in local.iter_mut().zip(self.current_layer()) {
            if let Some(tr) = self.state.memory.trace(id) {
                if tr.accessible(now, p, layout.true_scent(id)) {
                    *row = [
                        tr.revealed_scent.unwrap_or(0.0),
                        count_bucket(tr.views),
                        count_bucket(tr.clicks),
                    ];
                }
            }
        }

        let focused = self.focused_id();
        let d_max = f64::from(layout.d_max());
        let global = self
            .state
            .memory
            .select_global_panel(now, p, layout)
            .into_iter()
            .map(|id| {
                let scent = self
                    .state
                    .memory
                    .trace(id)
                    .and_then(|t| t.revealed_scent)
                    .unwrap_or(0.0);
                let cost = layout.path_cost(&self.state.path_stack, focused, id);
                [scent, (f64::from(cost) / d_max).min(1.0)]
            })
            .collect();

        Observation {
            local,
            global,
            depth: self.state.path_stack.len() as f64 / layout.depth_max() as f64,
            step_fraction: (f64::from(now) / f64::from(self.cfg.t_max.max(1))).min(1.0),
            focus: self.state.focus.filter(|&k| k < n_max),
            mask: self.legal_actions(),
        }
    }
}

/// Re-runs `log` from a fresh environment and checks every step's reward,
/// acted-on option and observation hash.
pub fn replay(
    layout: Arc<Layout>,
    cfg: &EnvConfig,
    params: &MemoryParams,
    seed: u64,
    log: &EpisodeLog,
) -> Result<(), EnvError> {
    let mut env = Env::new(layout, cfg.clone(), *params).with_logging();
    env.reset(seed);
    for (i, rec) in log.records.iter().enumerate() {
        env.step(rec.action)?;
        let got = env.log().and_then(|l| l.records.last()).expect("logging enabled");
        if got != rec {
            return Err(EnvError::ReplayMismatch {
                step: i,
                reason: format!("expected {rec:?}, got {got:?}"),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{build_layout, LayoutFile, NodeRecord, TargetField};

    fn rec(id: NodeId, scent: f64, children: &[NodeId], row: u32) -> NodeRecord {
        NodeRecord {
            id,
            label: None,
            scent,
            children: children.to_vec(),
            row,
            col: 0,
        }
    }

    /// Root {0, 1}; 0 -> {2, 3}; 1 -> {4, 5, 6, 7, 8}; target 5.
    fn small() -> Arc<Layout> {
        let spec = LayoutFile {
            nodes: vec![
                rec(0, 0.2, &[2, 3], 0),
                rec(1, 0.7, &[4, 5, 6, 7, 8], 1),
                rec(2, 0.1, &[], 0),
                rec(3, 0.2, &[], 1),
                rec(4, 0.1, &[], 0),
                rec(5, 0.8, &[], 1),
                rec(6, 0.0, &[], 2),
                rec(7, 0.0, &[], 3),
                rec(8, 0.0, &[], 4),
            ],
            root: vec![0, 1],
            target: TargetField::One(5),
        };
        Arc::new(build_layout(&spec, 12).unwrap())
    }

    fn env(params: MemoryParams) -> Env {
        let mut e = Env::new(small(), EnvConfig::default(), params).with_logging();
        e.reset(3);
        e
    }

    #[test]
    fn reset_observation_is_blank() {
        let e = env(MemoryParams::default());
        let o = e.observe();
        assert!(o.local.iter().all(|r| *r == [0.0; 3]));
        assert!(o.global.is_empty());
        assert!(o.features().iter().take(36 + 10).all(|&x| x == 0.0));
        let mut other = Env::new(small(), EnvConfig::default(), MemoryParams::default());
        assert_eq!(other.reset(3), o);
    }

    #[test]
    fn masks_follow_the_rules() {
        let mut e = env(MemoryParams::default());
        let m = e.legal_actions();
        assert_eq!(&m[..2], &[true, true]);
        assert!(m[2..12].iter().all(|x| !x));
        assert!(!m[12] && !m[13]);
        e.step(Action::Visit(1)).unwrap();
        let m = e.legal_actions();
        assert!(m[12] && !m[13]);
        e.step(Action::Select).unwrap();
        let m = e.legal_actions();
        assert_eq!(m.iter().take(12).filter(|x| **x).count(), 5);
        assert!(!m[12] && m[13]);
        assert_eq!(e.step(Action::Select), Err(EnvError::IllegalAction(Action::Select)));
        assert_eq!(
            e.step(Action::Visit(5)),
            Err(EnvError::IllegalAction(Action::Visit(5)))
        );
    }

    #[test]
    fn target_select_ends_with_success_reward() {
        let mut e = env(MemoryParams::default());
        let r1 = e.step(Action::Visit(1)).unwrap();
        assert_eq!(r1.reward, -0.01);
        e.step(Action::Select).unwrap();
        e.step(Action::Visit(1)).unwrap();
        let out = e.step(Action::Select).unwrap();
        assert_eq!(out.reward, 20.0);
        assert!(out.done && out.info.success);
        assert_eq!(e.step(Action::Return), Err(EnvError::EpisodeFinished));
        let log = e.log().unwrap();
        assert_eq!(log.steps(), 4);
        assert!(log.reached(5));
        assert!((log.total_return() - (20.0 - 0.03)).abs() < 1e-12);
    }

    #[test]
    fn wrong_leaf_select_keeps_layer() {
        let mut e = env(MemoryParams::default());
        e.step(Action::Visit(1)).unwrap();
        e.step(Action::Select).unwrap();
        e.step(Action::Visit(0)).unwrap();
        let out = e.step(Action::Select).unwrap();
        assert_eq!(out.info.event, StepEvent::WrongSelect);
        assert!(!out.done);
        assert_eq!(e.state().path_stack, vec![1]);
        assert_eq!(e.state().focus, Some(0));
        e.step(Action::Return).unwrap();
        assert!(e.state().path_stack.is_empty());
        assert_eq!(e.state().focus, None);
    }

    #[test]
    fn zero_noise_reveals_true_scent() {
        let mut e = env(MemoryParams::default().without_noise());
        let out = e.step(Action::Visit(1)).unwrap();
        assert_eq!(out.observation.local[1][0], 0.7);
        assert_eq!(e.log().unwrap().records[0].revealed_scent, Some(0.7));
    }

    #[test]
    fn forgetting_and_revisit() {
        let mut e = env(MemoryParams::default().without_noise());
        // Node 0 has scent 0.2: M = 1.3 + 0.3 = 1.6 right after the visit.
        let o = e.step(Action::Visit(0)).unwrap().observation;
        assert!(o.local[0][0] > 0.0);
        assert!((o.local[0][1] - 1.0 / 3.0).abs() < 1e-12);
        // 1.6 * 2^(-k/5) < 1 once k >= 4.
        for _ in 0..3 {
            e.step(Action::Visit(1)).unwrap();
        }
        assert!(e.observe().local[0][0] > 0.0);
        e.step(Action::Visit(1)).unwrap();
        assert_eq!(e.observe().local[0], [0.0; 3]);
        let o = e.step(Action::Visit(0)).unwrap().observation;
        assert_eq!(o.local[0][0], 0.2);
        assert!((o.local[0][1] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn focused_global_row_has_zero_distance() {
        let mut e = env(MemoryParams::default());
        let o = e.step(Action::Visit(1)).unwrap().observation;
        assert_eq!(o.global.len(), 1);
        assert_eq!(o.global[0][1], 0.0);
        let o = e.step(Action::Visit(0)).unwrap().observation;
        // Node 1 is one Visit away, node 0 is focused.
        let d_max = f64::from(e.layout().d_max());
        let dists: Vec<f64> = o.global.iter().map(|r| r[1]).collect();
        assert!(dists.contains(&0.0));
        assert!(dists.contains(&(1.0 / d_max)));
    }

    #[test]
    fn budget_ends_episode_as_failure() {
        let cfg = EnvConfig {
            t_max: 3,
            ..Default::default()
        };
        let mut e = Env::new(small(), cfg, MemoryParams::default());
        e.reset(0);
        e.step(Action::Visit(0)).unwrap();
        e.step(Action::Visit(0)).unwrap();
        let out = e.step(Action::Visit(0)).unwrap();
        assert!(out.done && !out.info.success);
        assert!(out.observation.mask.iter().all(|m| !m));
    }

    #[test]
    fn replay_reproduces_hashes() {
        let mut e = env(MemoryParams::default());
        for a in [Action::Visit(0), Action::Select, Action::Visit(1), Action::Return] {
            e.step(a).unwrap();
        }
        let log = e.take_log().unwrap();
        replay(small(), &EnvConfig::default(), &MemoryParams::default(), 3, &log).unwrap();
        assert!(replay(small(), &EnvConfig::default(), &MemoryParams::default(), 4, &log).is_err());
        let back = EpisodeLog::from_jsonl(&log.to_jsonl()).unwrap();
        assert_eq!(back, log);
    }

    #[test]
    fn action_indices_round_trip() {
        for i in 0..14 {
            let a = Action::from_index(i, 12).unwrap();
            assert_eq!(a.index(12), i);
        }
        assert_eq!(Action::from_index(14, 12), None);
    }
}
