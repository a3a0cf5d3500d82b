//! Hierarchical information architectures: nodes, layers, validation and
//! action-path distances.
//!
//! A layout is a rooted forest of options. The *root layer* is the first
//! page; every internal node owns the layer made of its children. Navigation
//! uses three atomic actions: `Visit` moves focus within the current layer,
//! `Select` descends into the focused option, `Return` pops back to the
//! parent layer with no focus.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = u32;

/// Default number of rows in the local panel.
pub const DEFAULT_N_MAX: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("node id {0} appears more than once")]
    DuplicateId(NodeId),
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("cycle detected through node {0}")]
    CycleDetected(NodeId),
    #[error("node {0} has more than one parent")]
    MultipleParents(NodeId),
    #[error("node {0} is not reachable from the root layer")]
    Unreachable(NodeId),
    #[error("expected exactly one target, found {0}")]
    MultipleTargets(usize),
    #[error("no target given")]
    MissingTarget,
    #[error("target {0} is not a leaf")]
    TargetNotLeaf(NodeId),
    #[error("layer under {parent:?} has {width} options (limit {limit})")]
    LayerTooWide {
        parent: Option<NodeId>,
        width: usize,
        limit: usize,
    },
    #[error("the root layer is empty")]
    EmptyRoot,
    #[error("scent {scent} of node {id} is outside [0, 1]")]
    ScentOutOfRange { id: NodeId, scent: f64 },
    #[error("grid position ({row}, {col}) used twice in one layer")]
    DuplicateGridPos { row: u32, col: u32 },
    #[error("invalid focus: {0}")]
    InvalidFocus(String),
    #[error("malformed layout file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct GridPos {
    pub row: u32,
    pub col: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub label: Option<String>,
    /// True scent of this option for the layout's goal, in `[0, 1]`.
    pub true_scent: f64,
    pub children: Vec<NodeId>,
    pub grid_pos: GridPos,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// One node as stored in a layout file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: NodeId,
    #[serde(default)]
    pub label: Option<String>,
    pub scent: f64,
    #[serde(default)]
    pub children: Vec<NodeId>,
    #[serde(default)]
    pub row: u32,
    #[serde(default)]
    pub col: u32,
}

/// The `target` field accepts a single id; a list is accepted on input only
/// so that ambiguous files are rejected with a clear error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetField {
    One(NodeId),
    Many(Vec<NodeId>),
}

/// Serialized layout: `{"nodes": [...], "root": [...], "target": id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub nodes: Vec<NodeRecord>,
    pub root: Vec<NodeId>,
    pub target: TargetField,
}

impl LayoutFile {
    pub fn from_json(s: &str) -> Result<Self, LayoutError> {
        serde_json::from_str(s).map_err(|e| LayoutError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout file serializes")
    }
}

/// Where the agent currently is: the stack of selected ancestors (which
/// determines the displayed layer) and the focused option, if any.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Focus {
    pub path: Vec<NodeId>,
    pub focused: Option<NodeId>,
}

impl Focus {
    pub fn root() -> Self {
        Self::default()
    }
}

/// A validated, immutable hierarchical layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    nodes: Vec<Node>,
    index: HashMap<NodeId, usize>,
    dense: bool,
    parent: Vec<Option<NodeId>>,
    ancestors: Vec<Vec<NodeId>>,
    root: Vec<NodeId>,
    target: NodeId,
    depth_max: usize,
    d_max: u32,
    n_max: usize,
}

/// Validates an explicit node list and builds a [`Layout`].
pub fn build_layout(spec: &LayoutFile, n_max: usize) -> Result<Layout, LayoutError> {
    let mut index = HashMap::with_capacity(spec.nodes.len());
    for (i, rec) in spec.nodes.iter().enumerate() {
        if index.insert(rec.id, i).is_some() {
            return Err(LayoutError::DuplicateId(rec.id));
        }
    }
    for rec in &spec.nodes {
        for c in &rec.children {
            if !index.contains_key(c) {
                return Err(LayoutError::NodeNotFound(*c));
            }
        }
    }
    if spec.root.is_empty() {
        return Err(LayoutError::EmptyRoot);
    }
    for r in &spec.root {
        if !index.contains_key(r) {
            return Err(LayoutError::NodeNotFound(*r));
        }
    }

    check_acyclic(spec, &index)?;

    let n = spec.nodes.len();
    let mut parent: Vec<Option<NodeId>> = vec![None; n];
    let mut has_parent = vec![false; n];
    for r in &spec.root {
        let i = index[r];
        if has_parent[i] {
            return Err(LayoutError::MultipleParents(*r));
        }
        has_parent[i] = true;
    }
    for rec in &spec.nodes {
        for c in &rec.children {
            let i = index[c];
            if has_parent[i] {
                return Err(LayoutError::MultipleParents(*c));
            }
            has_parent[i] = true;
            parent[i] = Some(rec.id);
        }
    }
    if let Some(i) = has_parent.iter().position(|p| !p) {
        return Err(LayoutError::Unreachable(spec.nodes[i].id));
    }

    if spec.root.len() > n_max {
        return Err(LayoutError::LayerTooWide {
            parent: None,
            width: spec.root.len(),
            limit: n_max,
        });
    }
    for rec in &spec.nodes {
        if rec.children.len() > n_max {
            return Err(LayoutError::LayerTooWide {
                parent: Some(rec.id),
                width: rec.children.len(),
                limit: n_max,
            });
        }
        if !(0.0..=1.0).contains(&rec.scent) {
            return Err(LayoutError::ScentOutOfRange {
                id: rec.id,
                scent: rec.scent,
            });
        }
    }

    let layers = std::iter::once(&spec.root).chain(spec.nodes.iter().map(|r| &r.children));
    for layer in layers {
        let mut seen = HashSet::with_capacity(layer.len());
        for id in layer {
            let rec = &spec.nodes[index[id]];
            if !seen.insert((rec.row, rec.col)) {
                return Err(LayoutError::DuplicateGridPos {
                    row: rec.row,
                    col: rec.col,
                });
            }
        }
    }

    let target = match &spec.target {
        TargetField::One(t) => *t,
        TargetField::Many(ts) => {
            let distinct: HashSet<_> = ts.iter().collect();
            match distinct.len() {
                0 => return Err(LayoutError::MissingTarget),
                1 => ts[0],
                k => return Err(LayoutError::MultipleTargets(k)),
            }
        }
    };
    let ti = *index.get(&target).ok_or(LayoutError::NodeNotFound(target))?;
    if !spec.nodes[ti].children.is_empty() {
        return Err(LayoutError::TargetNotLeaf(target));
    }

    let nodes: Vec<Node> = spec
        .nodes
        .iter()
        .map(|r| Node {
            id: r.id,
            label: r.label.clone(),
            true_scent: r.scent,
            children: r.children.clone(),
            grid_pos: GridPos {
                row: r.row,
                col: r.col,
            },
        })
        .collect();
    let dense = nodes.iter().enumerate().all(|(i, n)| n.id as usize == i);

    let mut ancestors = vec![Vec::new(); n];
    // Parents precede children in a pre-order walk from the root layer.
    let mut stack: Vec<NodeId> = spec.root.iter().rev().copied().collect();
    while let Some(id) = stack.pop() {
        let i = index[&id];
        if let Some(p) = parent[i] {
            let mut a = ancestors[index[&p]].clone();
            a.push(p);
            ancestors[i] = a;
        }
        stack.extend(nodes[i].children.iter().rev().copied());
    }
    let depth_max = ancestors.iter().map(|a| a.len() + 1).max().unwrap_or(1);

    let mut layout = Layout {
        nodes,
        index,
        dense,
        parent,
        ancestors,
        root: spec.root.clone(),
        target,
        depth_max,
        d_max: 1,
        n_max,
    };
    layout.d_max = layout.max_path_cost().max(1);
    Ok(layout)
}

fn check_acyclic(spec: &LayoutFile, index: &HashMap<NodeId, usize>) -> Result<(), LayoutError> {
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut color = vec![0u8; spec.nodes.len()];
    for start in 0..spec.nodes.len() {
        if color[start] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(start, 0)];
        color[start] = 1;
        while let Some(&mut (node, ref mut next)) = stack.last_mut() {
            let children = &spec.nodes[node].children;
            if *next < children.len() {
                let c = index[&children[*next]];
                *next += 1;
                match color[c] {
                    0 => {
                        color[c] = 1;
                        stack.push((c, 0));
                    }
                    1 => return Err(LayoutError::CycleDetected(spec.nodes[c].id)),
                    _ => {}
                }
            } else {
                color[node] = 2;
                stack.pop();
            }
        }
    }
    Ok(())
}

impl Layout {
    pub fn from_json(s: &str, n_max: usize) -> Result<Self, LayoutError> {
        build_layout(&LayoutFile::from_json(s)?, n_max)
    }

    pub fn to_file(&self) -> LayoutFile {
        LayoutFile {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeRecord {
                    id: n.id,
                    label: n.label.clone(),
                    scent: n.true_scent,
                    children: n.children.clone(),
                    row: n.grid_pos.row,
                    col: n.grid_pos.col,
                })
                .collect(),
            root: self.root.clone(),
            target: TargetField::One(self.target),
        }
    }

    pub fn to_json(&self) -> String {
        self.to_file().to_json()
    }

    #[inline]
    fn idx(&self, id: NodeId) -> Option<usize> {
        if self.dense {
            let i = id as usize;
            (i < self.nodes.len()).then_some(i)
        } else {
            self.index.get(&id).copied()
        }
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.idx(id).is_some()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.idx(id).map(|i| &self.nodes[i])
    }

    /// Panics on unknown ids; for callers that hold ids taken from this layout.
    pub(crate) fn get(&self, id: NodeId) -> &Node {
        &self.nodes[self.idx(id).expect("node id from this layout")]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &[NodeId] {
        &self.root
    }

    pub fn target(&self) -> NodeId {
        self.target
    }

    pub fn depth_max(&self) -> usize {
        self.depth_max
    }

    /// Normalization bound for distance-to-goal features.
    pub fn d_max(&self) -> u32 {
        self.d_max
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn true_scent(&self, id: NodeId) -> f64 {
        self.get(id).true_scent
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        self.get(id).is_leaf()
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.idx(id).and_then(|i| self.parent[i])
    }

    /// Ancestors of `id`, root layer first, excluding `id` itself.
    pub fn ancestors(&self, id: NodeId) -> &[NodeId] {
        &self.ancestors[self.idx(id).expect("node id from this layout")]
    }

    /// 1 for root-layer options.
    pub fn depth(&self, id: NodeId) -> usize {
        self.ancestors(id).len() + 1
    }

    /// Options shown when `parent` is the most recently selected node
    /// (`None` for the root layer).
    pub fn layer(&self, parent: Option<NodeId>) -> &[NodeId] {
        match parent {
            None => &self.root,
            Some(p) => &self.get(p).children,
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    /// Root-to-target chain, target included.
    pub fn target_path(&self) -> Vec<NodeId> {
        let mut p = self.ancestors(self.target).to_vec();
        p.push(self.target);
        p
    }

    pub fn on_target_path(&self, id: NodeId) -> bool {
        id == self.target || self.ancestors(self.target).contains(&id)
    }

    /// Checks that `focus` describes a reachable navigation state.
    pub fn validate_focus(&self, focus: &Focus) -> Result<(), LayoutError> {
        let mut parent = None;
        for &p in &focus.path {
            if !self.contains(p) {
                return Err(LayoutError::NodeNotFound(p));
            }
            if !self.layer(parent).contains(&p) {
                return Err(LayoutError::InvalidFocus(format!(
                    "{p} is not an option of the layer under {parent:?}"
                )));
            }
            if self.is_leaf(p) {
                return Err(LayoutError::InvalidFocus(format!("{p} is a leaf")));
            }
            parent = Some(p);
        }
        if let Some(f) = focus.focused {
            if !self.contains(f) {
                return Err(LayoutError::NodeNotFound(f));
            }
            if !self.layer(parent).contains(&f) {
                return Err(LayoutError::InvalidFocus(format!(
                    "focused {f} is not in the current layer"
                )));
            }
        }
        Ok(())
    }

    /// Minimal number of `Return`/`Visit`/`Select` actions that bring the
    /// focus from `from` onto `to`.
    pub fn action_path_cost(&self, from: &Focus, to: NodeId) -> Result<u32, LayoutError> {
        if !self.contains(to) {
            return Err(LayoutError::NodeNotFound(to));
        }
        self.validate_focus(from)?;
        Ok(self.path_cost(&from.path, from.focused, to))
    }

    /// Unvalidated form of [`Layout::action_path_cost`].
    pub(crate) fn path_cost(&self, path: &[NodeId], focused: Option<NodeId>, to: NodeId) -> u32 {
        if focused == Some(to) {
            return 0;
        }
        let anc = self.ancestors(to);
        let common = path.iter().zip(anc).take_while(|(a, b)| a == b).count();
        let returns = (path.len() - common) as u32;
        let mut cost = returns;
        let descend = anc.len() - common;
        if descend > 0 {
            // The first descent needs no Visit if its option is already focused.
            let first_focused = returns == 0 && focused == Some(anc[common]);
            cost += if first_focused { 1 } else { 2 };
            cost += 2 * (descend as u32 - 1);
        }
        cost + 1
    }

    fn max_path_cost(&self) -> u32 {
        let mut best = 0;
        let mut layers: Vec<(Vec<NodeId>, &[NodeId])> = vec![(Vec::new(), &self.root)];
        for n in &self.nodes {
            if !n.is_leaf() {
                let mut path = self.ancestors(n.id).to_vec();
                path.push(n.id);
                layers.push((path, &n.children));
            }
        }
        for (path, items) in &layers {
            let focuses = std::iter::once(None).chain(items.iter().copied().map(Some));
            for f in focuses {
                for n in &self.nodes {
                    best = best.max(self.path_cost(path, f, n.id));
                }
            }
        }
        best
    }

    /// Returns a copy whose internal nodes carry `damping * max(child scent)`,
    /// evaluated bottom-up.
    pub fn propagate_internal_scent(&self, damping: f64) -> Layout {
        assert!(
            damping > 0.0 && damping <= 1.0,
            "damping must lie in (0, 1], got {damping}"
        );
        let mut out = self.clone();
        let mut order: Vec<usize> = (0..out.nodes.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(out.ancestors[i].len()));
        for i in order {
            if out.nodes[i].is_leaf() {
                continue;
            }
            let m = out.nodes[i]
                .children
                .iter()
                .map(|&c| out.get(c).true_scent)
                .fold(0.0_f64, f64::max);
            out.nodes[i].true_scent = damping * m;
        }
        out
    }

    /// Replaces every node's true scent. Values are clamped to `[0, 1]`.
    pub fn with_scents(&self, mut scent: impl FnMut(&Node) -> f64) -> Layout {
        let mut out = self.clone();
        for n in &mut out.nodes {
            n.true_scent = scent(n).clamp(0.0, 1.0);
        }
        out
    }
}
