//! Decaying memory traces.
//!
//! Each inspected option keeps a trace whose strength is
//!
//! ```text
//! M = exp(-lambda * dk) * (b + a_s * scent + a_v * sqrt(V) + a_c * sqrt(C))
//! ```
//!
//! where `dk` counts steps since the option was last seen and `V`, `C` are
//! cumulative views and clicks. A trace with `M < theta` is forgotten: its
//! revealed scent and counters disappear from the observation, but the
//! counters themselves are kept and keep contributing once the option is
//! seen again.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{Layout, NodeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MemoryError {
    #[error("trace for node {0} is below the retrieval threshold")]
    InaccessibleTrace(NodeId),
    #[error("no trace for node {0}")]
    NoTrace(NodeId),
    #[error("parameter {name} = {value} outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
}

/// Free parameters of the perception and memory model. Keys follow the
/// usual symbol names (`lambda`, `b`, `a_s`, `a_v`, `a_c`, `theta`,
/// `K_glob`, `sigma`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MemoryParams {
    /// Decay rate per step; `ln 2 / H` for half-life `H`.
    pub lambda: f64,
    pub b: f64,
    pub a_s: f64,
    pub a_v: f64,
    pub a_c: f64,
    /// Retrieval threshold.
    pub theta: f64,
    #[serde(rename = "K_glob")]
    pub k_glob: usize,
    /// Standard deviation of the scent noise.
    pub sigma: f64,
}

impl Default for MemoryParams {
    fn default() -> Self {
        Self {
            lambda: std::f64::consts::LN_2 / 5.0,
            b: 0.50,
            a_s: 1.50,
            a_v: 0.80,
            a_c: 0.50,
            theta: 1.0,
            k_glob: 4,
            sigma: 0.08,
        }
    }
}

/// Upper bound of `K_glob`; the policy input always reserves this many
/// global-panel rows.
pub const K_GLOB_MAX: usize = 5;

impl MemoryParams {
    pub fn lambda_for_half_life(half_life: f64) -> f64 {
        std::f64::consts::LN_2 / half_life
    }

    /// Decay disabled: no forgetting and no time discount on strength.
    pub fn without_decay(mut self) -> Self {
        self.lambda = 0.0;
        self.theta = 0.0;
        self
    }

    pub fn without_noise(mut self) -> Self {
        self.sigma = 0.0;
        self
    }

    /// Checks the calibration ranges. `lambda = 0` and `sigma = 0` are
    /// accepted as the decay-free and noise-free ablation settings.
    pub fn validate(&self) -> Result<(), MemoryError> {
        let check = |name, value: f64, ok: bool, range| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(MemoryError::OutOfRange { name, value, range })
            }
        };
        check("lambda", self.lambda, (0.0..=1.0).contains(&self.lambda), "(0, 1]")?;
        check("b", self.b, (0.0..=1.0).contains(&self.b), "[0, 1]")?;
        check("a_s", self.a_s, (0.0..=2.0).contains(&self.a_s), "[0, 2]")?;
        check("a_v", self.a_v, (0.0..=1.0).contains(&self.a_v), "[0, 1]")?;
        check("a_c", self.a_c, (0.0..=1.0).contains(&self.a_c), "[0, 1]")?;
        check("theta", self.theta, self.theta >= 0.0, "[0, inf)")?;
        check(
            "K_glob",
            self.k_glob as f64,
            (3..=K_GLOB_MAX).contains(&self.k_glob),
            "[3, 5]",
        )?;
        check(
            "sigma",
            self.sigma,
            self.sigma == 0.0 || (0.01..=0.1).contains(&self.sigma),
            "[0.01, 0.1]",
        )?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    View,
    Click,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryTrace {
    pub node: NodeId,
    pub last_seen: u32,
    pub views: u32,
    pub clicks: u32,
    /// Most recent noisy scent sample, set on every visit.
    pub revealed_scent: Option<f64>,
}

impl MemoryTrace {
    pub fn strength(&self, now: u32, p: &MemoryParams, true_scent: f64) -> f64 {
        let dk = f64::from(now.saturating_sub(self.last_seen));
        let base = p.b
            + p.a_s * true_scent
            + p.a_v * f64::from(self.views).sqrt()
            + p.a_c * f64::from(self.clicks).sqrt();
        (-p.lambda * dk).exp() * base
    }

    pub fn accessible(&self, now: u32, p: &MemoryParams, true_scent: f64) -> bool {
        self.strength(now, p, true_scent) >= p.theta
    }

    /// Revealed scent times strength; only defined for accessible traces.
    pub fn priority(&self, now: u32, p: &MemoryParams, true_scent: f64) -> Result<f64, MemoryError> {
        let m = self.strength(now, p, true_scent);
        if m < p.theta {
            return Err(MemoryError::InaccessibleTrace(self.node));
        }
        Ok(self.revealed_scent.unwrap_or(0.0) * m)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    traces: BTreeMap<NodeId, MemoryTrace>,
    current_step: u32,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn current_step(&self) -> u32 {
        self.current_step
    }

    pub fn trace(&self, node: NodeId) -> Option<&MemoryTrace> {
        self.traces.get(&node)
    }

    pub fn traces(&self) -> impl Iterator<Item = &MemoryTrace> {
        self.traces.values()
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Registers a view or click at `step`. Both reset the time since the
    /// option was last seen. A click on an option with no trace counts as
    /// its first view as well.
    ///
    /// Panics if `step` is earlier than a previously recorded step.
    pub fn record_event(&mut self, node: NodeId, kind: EventKind, step: u32) {
        assert!(
            step >= self.current_step,
            "memory step went backwards: {step} < {}",
            self.current_step
        );
        self.current_step = step;
        let t = self.traces.entry(node).or_insert(MemoryTrace {
            node,
            last_seen: step,
            views: 0,
            clicks: 0,
            revealed_scent: None,
        });
        t.last_seen = step;
        match kind {
            EventKind::View => t.views += 1,
            EventKind::Click => {
                t.views = t.views.max(1);
                t.clicks += 1;
            }
        }
    }

    pub fn advance_to(&mut self, step: u32) {
        self.current_step = self.current_step.max(step);
    }

    pub fn reveal(&mut self, node: NodeId, scent: f64) -> Result<(), MemoryError> {
        let t = self.traces.get_mut(&node).ok_or(MemoryError::NoTrace(node))?;
        t.revealed_scent = Some(scent);
        Ok(())
    }

    /// Accessible traces ranked by priority (ties: higher strength, then
    /// lower node id), truncated to `K_glob`.
    pub fn select_global_panel(&self, now: u32, p: &MemoryParams, layout: &Layout) -> Vec<NodeId> {
        let mut ranked: Vec<(f64, f64, NodeId)> = self
            .traces
            .values()
            .filter_map(|t| {
                let m = t.strength(now, p, layout.true_scent(t.node));
                (m >= p.theta).then(|| (t.revealed_scent.unwrap_or(0.0) * m, m, t.node))
            })
            .collect();
        ranked.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(b.1.total_cmp(&a.1))
                .then(a.2.cmp(&b.2))
        });
        ranked.into_iter().take(p.k_glob).map(|(_, _, id)| id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(views: u32, clicks: u32, last_seen: u32) -> MemoryTrace {
        MemoryTrace {
            node: 0,
            last_seen,
            views,
            clicks,
            revealed_scent: Some(0.5),
        }
    }

    #[test]
    fn first_view_strength() {
        let p = MemoryParams::default();
        let m = trace(1, 0, 0).strength(0, &p, 0.0);
        assert!((m - 1.3).abs() < 1e-12);
        let m = trace(4, 1, 0).strength(0, &p, 1.0);
        assert!((m - 4.1).abs() < 1e-12);
    }

    #[test]
    fn half_life() {
        let p = MemoryParams::default();
        let t = trace(1, 0, 0);
        let m0 = t.strength(0, &p, 0.3);
        let m5 = t.strength(5, &p, 0.3);
        assert!((m5 - m0 / 2.0).abs() < 1e-12);
        assert!(t.accessible(0, &p, 0.0));
        assert!(!t.accessible(5, &p, 0.0));
        let no_gate = MemoryParams { theta: 0.0, ..p };
        assert!(t.accessible(1000, &no_gate, 0.0));
    }

    #[test]
    fn priority_rules() {
        let p = MemoryParams::default();
        let mut t = trace(1, 0, 0);
        assert!((t.priority(0, &p, 0.0).unwrap() - 0.65).abs() < 1e-12);
        t.revealed_scent = Some(0.0);
        assert_eq!(t.priority(0, &p, 0.0).unwrap(), 0.0);
        assert_eq!(
            t.priority(5, &p, 0.0),
            Err(MemoryError::InaccessibleTrace(0))
        );
    }

    #[test]
    fn events_accumulate() {
        let mut s = MemoryStore::new();
        s.record_event(3, EventKind::View, 2);
        let t = *s.trace(3).unwrap();
        assert_eq!((t.views, t.clicks, t.last_seen), (1, 0, 2));
        s.record_event(3, EventKind::Click, 3);
        let t = *s.trace(3).unwrap();
        assert_eq!((t.views, t.clicks, t.last_seen), (1, 1, 3));
        s.record_event(3, EventKind::View, 4);
        s.record_event(3, EventKind::View, 9);
        assert_eq!(s.trace(3).unwrap().views, 3);
        assert_eq!(s.current_step(), 9);
    }

    #[test]
    #[should_panic]
    fn step_must_not_regress() {
        let mut s = MemoryStore::new();
        s.record_event(1, EventKind::View, 5);
        s.record_event(1, EventKind::View, 4);
    }

    #[test]
    fn validation() {
        assert!(MemoryParams::default().validate().is_ok());
        assert!(MemoryParams::default().without_decay().validate().is_ok());
        assert!(MemoryParams::default().without_noise().validate().is_ok());
        let bad = MemoryParams {
            k_glob: 6,
            ..Default::default()
        };
        assert!(matches!(
            bad.validate(),
            Err(MemoryError::OutOfRange { name: "K_glob", .. })
        ));
        let bad = MemoryParams {
            sigma: 0.2,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn toml_keys() {
        let p: MemoryParams = toml::from_str("K_glob = 5\ntheta = 1.5").unwrap();
        assert_eq!(p.k_glob, 5);
        assert_eq!(p.theta, 1.5);
        assert_eq!(p.b, 0.5);
        let s = toml::to_string(&MemoryParams::default()).unwrap();
        assert!(s.contains("K_glob = 4"));
    }
}
