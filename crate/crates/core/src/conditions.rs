//! Synthetic benchmark layouts for the difficulty, depth and position
//! studies.
//!
//! Every benchmark layout holds 64 leaves. Leaves are addressed by a grid
//! coordinate `(col, row)` on an 8×8 page: in the two-level menu `col` is the
//! root-layer slot (heading) and `row` the slot inside that heading; the
//! three-level 4×4×4 menu reuses the same leaf numbering `col * 8 + row`, so
//! both depth conditions carry identical leaf scents for a given seed.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::layout::{build_layout, Layout, LayoutError, LayoutFile, NodeId, NodeRecord, TargetField};
use crate::rng::{stream, tag};

pub const GOALS_PER_CONDITION: u8 = 3;
const GRID: usize = 8;
const LEAVES: usize = GRID * GRID;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("unknown condition {0:?}")]
    UnknownCondition(String),
    #[error("goal index {0} out of range (0..3)")]
    InvalidGoal(u8),
    #[error("invalid scent profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    NoProblem,
    Competing,
    LowScent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Depth {
    #[serde(rename = "two_level_8x8")]
    TwoLevel8x8,
    #[serde(rename = "three_level_4x4x4")]
    ThreeLevel4x4x4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Position {
    Left,
    Right,
    Top,
    Bottom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConditionKind {
    Difficulty(Difficulty),
    Depth(Depth),
    Position(Position),
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 9] = [
        ConditionKind::Difficulty(Difficulty::NoProblem),
        ConditionKind::Difficulty(Difficulty::Competing),
        ConditionKind::Difficulty(Difficulty::LowScent),
        ConditionKind::Depth(Depth::TwoLevel8x8),
        ConditionKind::Depth(Depth::ThreeLevel4x4x4),
        ConditionKind::Position(Position::Left),
        ConditionKind::Position(Position::Right),
        ConditionKind::Position(Position::Top),
        ConditionKind::Position(Position::Bottom),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConditionKind::Difficulty(Difficulty::NoProblem) => "no_problem",
            ConditionKind::Difficulty(Difficulty::Competing) => "competing",
            ConditionKind::Difficulty(Difficulty::LowScent) => "low_scent",
            ConditionKind::Depth(Depth::TwoLevel8x8) => "two_level_8x8",
            ConditionKind::Depth(Depth::ThreeLevel4x4x4) => "three_level_4x4x4",
            ConditionKind::Position(Position::Left) => "left",
            ConditionKind::Position(Position::Right) => "right",
            ConditionKind::Position(Position::Top) => "top",
            ConditionKind::Position(Position::Bottom) => "bottom",
        }
    }

    pub fn study(self) -> Study {
        match self {
            ConditionKind::Difficulty(_) => Study::Difficulty,
            ConditionKind::Depth(_) => Study::Depth,
            ConditionKind::Position(_) => Study::Position,
        }
    }

    fn branching(self) -> &'static [usize] {
        match self {
            ConditionKind::Depth(Depth::ThreeLevel4x4x4) => &[4, 4, 4],
            _ => &[8, 8],
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionKind {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let bare = key.split_once(':').map_or(key.as_str(), |(_, b)| b);
        let kind = match bare {
            "no_problem" => ConditionKind::Difficulty(Difficulty::NoProblem),
            "competing" => ConditionKind::Difficulty(Difficulty::Competing),
            "low_scent" => ConditionKind::Difficulty(Difficulty::LowScent),
            "two_level_8x8" | "8x8" => ConditionKind::Depth(Depth::TwoLevel8x8),
            "three_level_4x4x4" | "4x4x4" => ConditionKind::Depth(Depth::ThreeLevel4x4x4),
            "left" => ConditionKind::Position(Position::Left),
            "right" => ConditionKind::Position(Position::Right),
            "top" => ConditionKind::Position(Position::Top),
            "bottom" => ConditionKind::Position(Position::Bottom),
            _ => return Err(GenerateError::UnknownCondition(s.to_owned())),
        };
        if let Some((prefix, _)) = key.split_once(':') {
            if prefix != kind.study().name() {
                return Err(GenerateError::UnknownCondition(s.to_owned()));
            }
        }
        Ok(kind)
    }
}

impl Serialize for ConditionKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ConditionKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Study {
    Difficulty,
    Depth,
    Position,
}

impl Study {
    pub const ALL: [Study; 3] = [Study::Difficulty, Study::Depth, Study::Position];

    pub fn name(self) -> &'static str {
        match self {
            Study::Difficulty => "difficulty",
            Study::Depth => "depth",
            Study::Position => "position",
        }
    }

    pub fn conditions(self) -> Vec<ConditionKind> {
        ConditionKind::ALL
            .into_iter()
            .filter(|k| k.study() == self)
            .collect()
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = GenerateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "difficulty" => Ok(Study::Difficulty),
            "depth" => Ok(Study::Depth),
            "position" => Ok(Study::Position),
            _ => Err(GenerateError::UnknownCondition(s.to_owned())),
        }
    }
}

/// One benchmark cell: a condition, one of its three goals, and a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConditionSpec {
    pub kind: ConditionKind,
    pub goal_index: u8,
    pub seed: u64,
}

/// Leaf scent ranges for one difficulty level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScentProfile {
    /// Range for the target leaf (may be degenerate).
    pub target: [f64; 2],
    /// Inclusive range for the number of competing distractors.
    pub competitors: [usize; 2],
    /// Competitors lie within this distance of the target scent.
    pub competitor_band: f64,
    pub distractors: [f64; 2],
}

impl ScentProfile {
    pub fn no_problem() -> Self {
        Self {
            target: [0.75, 0.90],
            competitors: [0, 0],
            competitor_band: 0.0,
            distractors: [0.05, 0.30],
        }
    }

    pub fn competing() -> Self {
        Self {
            target: [0.70, 0.70],
            competitors: [2, 3],
            competitor_band: 0.05,
            distractors: [0.05, 0.30],
        }
    }

    pub fn low_scent() -> Self {
        Self {
            target: [0.35, 0.35],
            competitors: [0, 0],
            competitor_band: 0.0,
            distractors: [0.10, 0.30],
        }
    }

    fn validate(&self) -> Result<(), GenerateError> {
        let range_ok = |r: [f64; 2]| r[0] <= r[1] && r[0] >= 0.0 && r[1] <= 1.0;
        if !range_ok(self.target) || !range_ok(self.distractors) {
            return Err(GenerateError::InvalidProfile(format!("{self:?}")));
        }
        if self.competitors[0] > self.competitors[1] || self.competitor_band < 0.0 {
            return Err(GenerateError::InvalidProfile(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Probability of drawing a left (resp. top) target when sampling training
/// layouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionPrior {
    pub left: f64,
    pub top: f64,
}

impl Default for PositionPrior {
    fn default() -> Self {
        Self { left: 0.6, top: 0.6 }
    }
}

impl PositionPrior {
    pub fn uniform() -> Self {
        Self { left: 0.5, top: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    /// Damping applied per level when propagating leaf scent upwards.
    pub rho_h: f64,
    #[serde(rename = "N_max")]
    pub n_max: usize,
    pub no_problem: ScentProfile,
    pub competing: ScentProfile,
    pub low_scent: ScentProfile,
    /// Leaf scent profile used by both depth conditions.
    pub depth_profile: Difficulty,
    /// Leaf scent profile used by the position conditions.
    pub position_profile: Difficulty,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            rho_h: 0.4,
            n_max: crate::layout::DEFAULT_N_MAX,
            no_problem: ScentProfile::no_problem(),
            competing: ScentProfile::competing(),
            low_scent: ScentProfile::low_scent(),
            depth_profile: Difficulty::NoProblem,
            position_profile: Difficulty::NoProblem,
        }
    }
}

impl GeneratorConfig {
    pub fn profile(&self, d: Difficulty) -> &ScentProfile {
        match d {
            Difficulty::NoProblem => &self.no_problem,
            Difficulty::Competing => &self.competing,
            Difficulty::LowScent => &self.low_scent,
        }
    }

    fn profile_for(&self, kind: ConditionKind) -> &ScentProfile {
        match kind {
            ConditionKind::Difficulty(d) => self.profile(d),
            ConditionKind::Depth(_) => self.profile(self.depth_profile),
            ConditionKind::Position(_) => self.profile(self.position_profile),
        }
    }
}

/// Target coordinate on the 8×8 leaf grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub col: usize,
    pub row: usize,
}

impl GridCell {
    fn leaf_index(self) -> usize {
        self.col * GRID + self.row
    }
}

/// Benchmark target coordinate: a pure function of (kind, goal, seed).
/// Conditions of one study share the underlying draw, so e.g. `left` and
/// `right` differ only in the column half.
pub fn benchmark_target_cell(kind: ConditionKind, goal_index: u8, seed: u64) -> GridCell {
    let mut rng = stream(seed, &[u64::from(goal_index), tag("placement")]);
    let col = rng.random_range(0..GRID);
    let row = rng.random_range(0..GRID);
    let half_col = rng.random_range(0..GRID / 2);
    let half_row = rng.random_range(0..GRID / 2);
    match kind {
        ConditionKind::Position(Position::Left) => GridCell { col: half_col, row },
        ConditionKind::Position(Position::Right) => GridCell {
            col: half_col + GRID / 2,
            row,
        },
        ConditionKind::Position(Position::Top) => GridCell { col, row: half_row },
        ConditionKind::Position(Position::Bottom) => GridCell {
            col,
            row: half_row + GRID / 2,
        },
        _ => GridCell { col, row },
    }
}

pub fn generate_benchmark_layout(cond: &ConditionSpec) -> Result<Layout, GenerateError> {
    generate_benchmark_layout_with(cond, &GeneratorConfig::default())
}

pub fn generate_benchmark_layout_with(
    cond: &ConditionSpec,
    cfg: &GeneratorConfig,
) -> Result<Layout, GenerateError> {
    if cond.goal_index >= GOALS_PER_CONDITION {
        return Err(GenerateError::InvalidGoal(cond.goal_index));
    }
    let cell = benchmark_target_cell(cond.kind, cond.goal_index, cond.seed);
    let mut rng = stream(cond.seed, &[u64::from(cond.goal_index), tag("scent")]);
    generate_layout(cond.kind, cell, &mut rng, cfg)
}

/// Samples a fresh training layout of `kind` with the target half drawn from
/// `prior` (the half encoded in a position kind is ignored).
pub fn generate_training_layout(
    kind: ConditionKind,
    prior: &PositionPrior,
    seed: u64,
    cfg: &GeneratorConfig,
) -> Result<Layout, GenerateError> {
    let mut rng = stream(seed, &[tag("training")]);
    let half = GRID / 2;
    let col = rng.random_range(0..half) + if rng.random_bool(prior.left) { 0 } else { half };
    let row = rng.random_range(0..half) + if rng.random_bool(prior.top) { 0 } else { half };
    generate_layout(kind, GridCell { col, row }, &mut rng, cfg)
}

/// Builds a 64-leaf layout of `kind` with the target at `cell`.
pub fn generate_layout(
    kind: ConditionKind,
    cell: GridCell,
    rng: &mut ChaCha8Rng,
    cfg: &GeneratorConfig,
) -> Result<Layout, GenerateError> {
    let profile = cfg.profile_for(kind);
    profile.validate()?;
    let target_leaf = cell.leaf_index();
    let scents = leaf_scents(profile, target_leaf, rng);
    let file = tree_file(kind.branching(), &scents, target_leaf);
    Ok(build_layout(&file, cfg.n_max)?.propagate_internal_scent(cfg.rho_h))
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[0] == r[1] {
        r[0]
    } else {
        rng.random_range(r[0]..=r[1])
    }
}

/// Scent per leaf index. Competitors sit in distinct leaf quarters other
/// than the target's; quarters coincide with root branches of the 4×4×4
/// menu and with heading pairs of the 8×8 menu, so competitors never share
/// the target's branch in either structure.
fn leaf_scents(profile: &ScentProfile, target_leaf: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let quarter = LEAVES / 4;
    let target_scent = uniform(rng, profile.target);
    let n_comp = rng.random_range(profile.competitors[0]..=profile.competitors[1]).min(3);
    let mut blocks: Vec<usize> = (0..4).filter(|&q| q != target_leaf / quarter).collect();
    // Partial Fisher-Yates for the competitor blocks.
    for i in 0..n_comp {
        let j = rng.random_range(i..blocks.len());
        blocks.swap(i, j);
    }
    let mut competitors = Vec::with_capacity(n_comp);
    for &q in &blocks[..n_comp] {
        let leaf = q * quarter + rng.random_range(0..quarter);
        let band = profile.competitor_band;
        let s = if band > 0.0 {
            target_scent + rng.random_range(-band..=band)
        } else {
            target_scent
        };
        competitors.push((leaf, s.clamp(0.0, 1.0)));
    }
    let mut scents: Vec<f64> = (0..LEAVES).map(|_| uniform(rng, profile.distractors)).collect();
    for (leaf, s) in competitors {
        scents[leaf] = s;
    }
    scents[target_leaf] = target_scent;
    scents
}

/// Level-order tree over the slot tuples of `branching`. The leaf with
/// 8×8 grid index `col * 8 + row` is the leaf whose slot tuple, read as a
/// mixed-radix number, equals that index.
fn tree_file(branching: &[usize], leaf_scent: &[f64], target_leaf: usize) -> LayoutFile {
    let mut level_sizes = Vec::with_capacity(branching.len());
    let mut size = 1;
    for &b in branching {
        size *= b;
        level_sizes.push(size);
    }
    let mut offsets = vec![0usize; branching.len()];
    for l in 1..branching.len() {
        offsets[l] = offsets[l - 1] + level_sizes[l - 1];
    }
    let last = branching.len() - 1;

    let mut nodes = Vec::with_capacity(offsets[last] + level_sizes[last]);
    for (l, &count) in level_sizes.iter().enumerate() {
        for lex in 0..count {
            let id = (offsets[l] + lex) as NodeId;
            let slot = lex % branching[l];
            let root_slot = lex / (count / branching[0]);
            let (row, col) = if l == 0 { (0, slot) } else { (slot, root_slot) };
            let children = if l < last {
                let b = branching[l + 1];
                (0..b)
                    .map(|k| (offsets[l + 1] + lex * b + k) as NodeId)
                    .collect()
            } else {
                Vec::new()
            };
            let label = slot_label(lex, &branching[..=l]);
            nodes.push(NodeRecord {
                id,
                label: Some(label),
                scent: if l == last { leaf_scent[lex] } else { 0.0 },
                children,
                row: row as u32,
                col: col as u32,
            });
        }
    }
    LayoutFile {
        root: (0..branching[0] as NodeId).collect(),
        target: TargetField::One((offsets[last] + target_leaf) as NodeId),
        nodes,
    }
}

fn slot_label(mut lex: usize, radices: &[usize]) -> String {
    let mut slots = vec![0; radices.len()];
    for (i, &r) in radices.iter().enumerate().rev() {
        slots[i] = lex % r;
        lex /= r;
    }
    slots
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(".")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: &str, goal: u8, seed: u64) -> ConditionSpec {
        ConditionSpec {
            kind: kind.parse().unwrap(),
            goal_index: goal,
            seed,
        }
    }

    #[test]
    fn parses_condition_names() {
        assert_eq!(
            "depth:4x4x4".parse::<ConditionKind>().unwrap(),
            ConditionKind::Depth(Depth::ThreeLevel4x4x4)
        );
        assert_eq!(
            "difficulty:low_scent".parse::<ConditionKind>().unwrap(),
            ConditionKind::Difficulty(Difficulty::LowScent)
        );
        assert!("depth:left".parse::<ConditionKind>().is_err());
        assert!(matches!(
            "sideways".parse::<ConditionKind>(),
            Err(GenerateError::UnknownCondition(_))
        ));
        for k in ConditionKind::ALL {
            assert_eq!(k.name().parse::<ConditionKind>().unwrap(), k);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_benchmark_layout(&spec("no_problem", 0, 7)).unwrap();
        let b = generate_benchmark_layout(&spec("no_problem", 0, 7)).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        let c = generate_benchmark_layout(&spec("no_problem", 1, 7)).unwrap();
        assert_ne!(a.to_json(), c.to_json());
    }

    #[test]
    fn three_level_shape() {
        let l = generate_benchmark_layout(&spec("three_level_4x4x4", 2, 3)).unwrap();
        assert_eq!(l.leaves().count(), 64);
        assert_eq!(l.depth_max(), 3);
        assert_eq!(l.root().len(), 4);
    }

    #[test]
    fn competing_has_close_distractors() {
        for seed in 0..50 {
            let l = generate_benchmark_layout(&spec("competing", (seed % 3) as u8, seed)).unwrap();
            let t = l.true_scent(l.target());
            let close = l
                .leaves()
                .filter(|n| n.id != l.target() && (n.true_scent - t).abs() <= 0.05 + 1e-12)
                .count();
            assert!(close >= 2, "seed {seed}: {close}");
        }
    }

    #[test]
    fn depth_conditions_share_leaf_scents() {
        let a = generate_benchmark_layout(&spec("8x8", 1, 11)).unwrap();
        let b = generate_benchmark_layout(&spec("4x4x4", 1, 11)).unwrap();
        let leaves = |l: &Layout| l.leaves().map(|n| n.true_scent).collect::<Vec<_>>();
        assert_eq!(leaves(&a), leaves(&b));
        let ta = a.target() as usize - 8;
        let tb = b.target() as usize - 20;
        assert_eq!(ta, tb);
    }

    #[test]
    fn position_halves() {
        for seed in 0..30 {
            for goal in 0..3 {
                let pos = |k: &str| {
                    let l = generate_benchmark_layout(&spec(k, goal, seed)).unwrap();
                    l.node(l.target()).unwrap().grid_pos
                };
                assert!(pos("left").col < 4);
                assert!(pos("right").col >= 4);
                assert!(pos("top").row < 4);
                assert!(pos("bottom").row >= 4);
                assert_eq!(pos("left").row, pos("right").row);
                assert_eq!(pos("top").col, pos("bottom").col);
            }
        }
    }

    #[test]
    fn grid_matches_slots_in_two_level_menu() {
        let l = generate_benchmark_layout(&spec("left", 0, 5)).unwrap();
        let t = l.target();
        let parent = l.parent(t).unwrap();
        let slot_in_root = l.root().iter().position(|&r| r == parent).unwrap();
        let slot_in_layer = l.layer(Some(parent)).iter().position(|&c| c == t).unwrap();
        let gp = l.node(t).unwrap().grid_pos;
        assert_eq!(gp.col as usize, slot_in_root);
        assert_eq!(gp.row as usize, slot_in_layer);
    }

    #[test]
    fn rejects_bad_goal() {
        assert_eq!(
            generate_benchmark_layout(&spec("left", 3, 1)),
            Err(GenerateError::InvalidGoal(3))
        );
    }
}
