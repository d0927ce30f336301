//! Workflow-derived prior-knowledge masks.
//!
//! Convention: entry `(i, j)` constrains the directed edge `j -> i`
//! (row = child, column = parent). Within-time entries take values
//! `-1` (unknown, learned from data), `0` (forbidden) or `1` (required).
//! Cross-time entries are binary and indexed by `[t][lag]`; only `lag = 1`
//! may be nonzero.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelSchema, Role};

pub const CONVENTION: &str = "row=child,col=parent";

pub const UNKNOWN: i8 = -1;
pub const FORBIDDEN: i8 = 0;
pub const REQUIRED: i8 = 1;

/// Within-time constraint matrix for a single time point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithinTimeMask {
    entries: Array2<i8>,
}

impl WithinTimeMask {
    pub fn new(entries: Array2<i8>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "within-time mask must be square, got {r}x{c}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn filled(n: usize, value: i8) -> Self {
        let mut entries = Array2::from_elem((n, n), value);
        for i in 0..n {
            entries[[i, i]] = FORBIDDEN;
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Constraint on the edge `parent -> child`.
    pub fn get(&self, child: usize, parent: usize) -> i8 {
        self.entries[[child, parent]]
    }

    pub fn set(&mut self, child: usize, parent: usize, value: i8) {
        self.entries[[child, parent]] = value;
    }

    pub fn entries(&self) -> &Array2<i8> {
        &self.entries
    }

    pub fn allows(&self, child: usize, parent: usize) -> bool {
        self.get(child, parent) != FORBIDDEN
    }

    pub fn requires(&self, child: usize, parent: usize) -> bool {
        self.get(child, parent) == REQUIRED
    }

    /// Restriction to the given variables, in the given order.
    pub fn submask(&self, vars: &[usize]) -> WithinTimeMask {
        let k = vars.len();
        let mut entries = Array2::zeros((k, k));
        for (a, &i) in vars.iter().enumerate() {
            for (b, &j) in vars.iter().enumerate() {
                entries[[a, b]] = self.entries[[i, j]];
            }
        }
        WithinTimeMask { entries }
    }

    /// `(unknown, required)` off-diagonal counts.
    pub fn counts(&self) -> (usize, usize) {
        let mut unknown = 0;
        let mut required = 0;
        for ((i, j), &v) in self.entries.indexed_iter() {
            if i == j {
                continue;
            }
            match v {
                UNKNOWN => unknown += 1,
                REQUIRED => required += 1,
                _ => {}
            }
        }
        (unknown, required)
    }

    /// A cycle among required edges, if any, as a list of variable indices.
    pub fn required_cycle(&self) -> Option<Vec<usize>> {
        let n = self.len();
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state = vec![0u8; n];
        let mut stack: Vec<usize> = Vec::new();

        fn visit(
            m: &WithinTimeMask,
            node: usize,
            state: &mut [u8],
            stack: &mut Vec<usize>,
        ) -> Option<Vec<usize>> {
            state[node] = 1;
            stack.push(node);
            for child in 0..m.len() {
                if child == node || !m.requires(child, node) {
                    continue;
                }
                match state[child] {
                    1 => {
                        let start = stack.iter().position(|&s| s == child).unwrap();
                        return Some(stack[start..].to_vec());
                    }
                    0 => {
                        if let Some(c) = visit(m, child, state, stack) {
                            return Some(c);
                        }
                    }
                    _ => {}
                }
            }
            stack.pop();
            state[node] = 2;
            None
        }

        for start in 0..n {
            if state[start] == 0 {
                if let Some(c) = visit(self, start, &mut state, &mut stack) {
                    return Some(c);
                }
            }
        }
        None
    }

    /// Whether a DAG, given as `adjacency[child][parent]`, lies in the
    /// admissible class: every edge allowed and every required edge present.
    pub fn admits(&self, adjacency: &Array2<bool>) -> bool {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let edge = adjacency[[i, j]];
                if edge && !self.allows(i, j) {
                    return false;
                }
                if !edge && self.requires(i, j) {
                    return false;
                }
            }
        }
        true
    }
}

/// Binary cross-time constraint matrix for one `(t, lag)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossTimeMask {
    entries: Array2<u8>,
}

impl CrossTimeMask {
    pub fn zeros(n: usize) -> Self {
        Self {
            entries: Array2::zeros((n, n)),
        }
    }

    pub fn new(entries: Array2<u8>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "cross-time mask must be square, got {r}x{c}"
            )));
        }
        Ok(Self { entries })
    }

    /// Whether `parent(t - lag) -> child(t)` is admissible.
    pub fn allows(&self, child: usize, parent: usize) -> bool {
        self.entries[[child, parent]] != 0
    }

    pub fn get(&self, child: usize, parent: usize) -> u8 {
        self.entries[[child, parent]]
    }

    pub fn set(&mut self, child: usize, parent: usize, value: u8) {
        self.entries[[child, parent]] = value;
    }

    pub fn entries(&self) -> &Array2<u8> {
        &self.entries
    }

    pub fn allowed_count(&self) -> usize {
        self.entries.iter().filter(|&&v| v != 0).count()
    }
}

/// Full time- and lag-indexed prior-knowledge tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PkMask {
    variables: Vec<String>,
    within: Vec<WithinTimeMask>,
    /// `cross[t][lag]` for `lag` in `0..T`.
    cross: Vec<Vec<CrossTimeMask>>,
}

impl PkMask {
    pub fn new(
        variables: Vec<String>,
        within: Vec<WithinTimeMask>,
        cross: Vec<Vec<CrossTimeMask>>,
    ) -> Result<Self> {
        let p = variables.len();
        let big_t = within.len();
        if cross.len() != big_t {
            return Err(Error::DimensionMismatch(format!(
                "within has {big_t} time points, cross has {}",
                cross.len()
            )));
        }
        for (t, w) in within.iter().enumerate() {
            if w.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "within[{t}] is {0}x{0}, expected {p}x{p}",
                    w.len()
                )));
            }
        }
        for (t, lags) in cross.iter().enumerate() {
            if lags.len() != big_t {
                return Err(Error::DimensionMismatch(format!(
                    "cross[{t}] has {} lags, expected {big_t}",
                    lags.len()
                )));
            }
            for (lag, c) in lags.iter().enumerate() {
                if c.entries.nrows() != p {
                    return Err(Error::DimensionMismatch(format!(
                        "cross[{t}][{lag}] is {0}x{0}, expected {p}x{p}",
                        c.entries.nrows()
                    )));
                }
            }
        }
        Ok(Self {
            variables,
            within,
            cross,
        })
    }

    /// Everything forbidden.
    pub fn forbidden(schema: &PanelSchema) -> Self {
        let p = schema.n_variables();
        let big_t = schema.time_points();
        Self {
            variables: schema.names(),
            within: vec![WithinTimeMask::filled(p, FORBIDDEN); big_t],
            cross: vec![vec![CrossTimeMask::zeros(p); big_t]; big_t],
        }
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn time_points(&self) -> usize {
        self.within.len()
    }

    pub fn within(&self, t: usize) -> &WithinTimeMask {
        &self.within[t]
    }

    pub fn within_mut(&mut self, t: usize) -> &mut WithinTimeMask {
        &mut self.within[t]
    }

    pub fn cross(&self, t: usize, lag: usize) -> &CrossTimeMask {
        &self.cross[t][lag]
    }

    pub fn cross_mut(&mut self, t: usize, lag: usize) -> &mut CrossTimeMask {
        &mut self.cross[t][lag]
    }

    /// Checks that this mask was built for `schema` (same variables, same T).
    pub fn check_dimensions(&self, schema: &PanelSchema) -> Result<()> {
        if self.variables != schema.names() {
            return Err(Error::DimensionMismatch(
                "mask variables differ from schema variables".into(),
            ));
        }
        if self.time_points() != schema.time_points() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} time points, schema has {}",
                self.time_points(),
                schema.time_points()
            )));
        }
        Ok(())
    }

    pub fn to_file(&self) -> MaskFile {
        MaskFile {
            convention: CONVENTION.to_string(),
            time_points: self.time_points(),
            variables: self.variables.clone(),
            within: self.within.iter().map(|w| to_rows(&w.entries)).collect(),
            cross: self
                .cross
                .iter()
                .map(|lags| lags.iter().map(|c| to_rows(&c.entries)).collect())
                .collect(),
        }
    }

    pub fn from_file(file: MaskFile) -> Result<Self> {
        if file.convention != CONVENTION {
            return Err(Error::InvalidMask(format!(
                "unsupported convention `{}` (expected `{CONVENTION}`)",
                file.convention
            )));
        }
        if file.within.len() != file.time_points {
            return Err(Error::DimensionMismatch(format!(
                "T = {} but {} within-time matrices",
                file.time_points,
                file.within.len()
            )));
        }
        let p = file.variables.len();
        let within = file
            .within
            .iter()
            .map(|rows| from_rows(rows, p).and_then(WithinTimeMask::new))
            .collect::<Result<Vec<_>>>()?;
        let cross = file
            .cross
            .iter()
            .map(|lags| {
                lags.iter()
                    .map(|rows| from_rows(rows, p).and_then(CrossTimeMask::new))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        PkMask::new(file.variables, within, cross)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }
}

fn to_rows<T: Copy>(m: &Array2<T>) -> Vec<Vec<T>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows<T: Copy + Default>(rows: &[Vec<T>], p: usize) -> Result<Array2<T>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::DimensionMismatch(format!(
            "mask matrix must be {p}x{p}"
        )));
    }
    let flat: Vec<T> = rows.iter().flatten().copied().collect();
    Ok(Array2::from_shape_vec((p, p), flat).expect("shape checked"))
}

/// On-disk layout of `mask.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFile {
    pub convention: String,
    #[serde(rename = "T")]
    pub time_points: usize,
    pub variables: Vec<String>,
    /// `within[t][i][j]`
    pub within: Vec<Vec<Vec<i8>>>,
    /// `cross[t][lag][i][j]`
    pub cross: Vec<Vec<Vec<Vec<u8>>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    Intervention,
    /// Demographics: time-invariant or deterministically evolving.
    Background,
    Baseline,
    Medication,
    Lifestyle,
    Outcome,
}

/// A group of variables sharing a within-time recording position.
///
/// Blocks with lower `rank` precede blocks with higher rank. Blocks of equal
/// rank are unordered relative to each other, so no within-time edge is
/// admissible between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub kind: BlockKind,
    pub rank: u32,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockOrder {
    pub blocks: Vec<Block>,
}

impl BlockOrder {
    /// Coarse default when no recording-level grouping is known: intervention
    /// and baseline first, all exogenous inputs in one unordered block, then
    /// outcomes.
    pub fn coarse(schema: &PanelSchema) -> Self {
        let names = |role| -> Vec<String> {
            schema
                .indices_with_role(role)
                .into_iter()
                .map(|i| schema.variables[i].name.clone())
                .collect()
        };
        let mut blocks = vec![Block {
            name: "intervention".into(),
            kind: BlockKind::Intervention,
            rank: 0,
            members: names(Role::Intervention),
        }];
        let baseline = names(Role::BaselineOnly);
        if !baseline.is_empty() {
            blocks.push(Block {
                name: "baseline".into(),
                kind: BlockKind::Baseline,
                rank: 0,
                members: baseline,
            });
        }
        let inputs = names(Role::ExogenousInput);
        if !inputs.is_empty() {
            blocks.push(Block {
                name: "inputs".into(),
                kind: BlockKind::Medication,
                rank: 1,
                members: inputs,
            });
        }
        blocks.push(Block {
            name: "outcomes".into(),
            kind: BlockKind::Outcome,
            rank: 2,
            members: names(Role::Outcome),
        });
        Self { blocks }
    }

    /// Resolves block membership per variable index and checks consistency
    /// with the schema roles.
    pub fn resolve(&self, schema: &PanelSchema) -> Result<Vec<(BlockKind, u32, usize)>> {
        let p = schema.n_variables();
        let mut assignment: Vec<Option<(BlockKind, u32, usize)>> = vec![None; p];
        for (b, block) in self.blocks.iter().enumerate() {
            for name in &block.members {
                let idx = schema
                    .index_of(name)
                    .ok_or_else(|| Error::BlockOrder(format!("unknown variable `{name}`")))?;
                if assignment[idx].is_some() {
                    return Err(Error::BlockOrder(format!(
                        "`{name}` appears in more than one block"
                    )));
                }
                let role = schema.variables[idx].role;
                let ok = matches!(
                    (block.kind, role),
                    (BlockKind::Intervention, Role::Intervention)
                        | (BlockKind::Outcome, Role::Outcome)
                        | (BlockKind::Baseline, Role::BaselineOnly)
                        | (BlockKind::Background, Role::ExogenousInput)
                        | (BlockKind::Medication, Role::ExogenousInput)
                        | (BlockKind::Lifestyle, Role::ExogenousInput)
                );
                if !ok {
                    return Err(Error::BlockOrder(format!(
                        "`{name}` has role {role:?} but sits in a {:?} block",
                        block.kind
                    )));
                }
                assignment[idx] = Some((block.kind, block.rank, b));
            }
        }
        let mut out = Vec::with_capacity(p);
        for (i, a) in assignment.into_iter().enumerate() {
            out.push(a.ok_or_else(|| {
                Error::BlockOrder(format!(
                    "`{}` is not assigned to any block",
                    schema.variables[i].name
                ))
            })?);
        }
        let outcome_blocks: HashSet<usize> = out
            .iter()
            .filter(|(k, _, _)| *k == BlockKind::Outcome)
            .map(|(_, _, b)| *b)
            .collect();
        if outcome_blocks.len() != 1 {
            return Err(Error::BlockOrder(
                "all outcomes must share exactly one outcome block".into(),
            ));
        }
        let v = schema.intervention();
        let v_rank = out[v].1;
        if out.iter().any(|(_, r, _)| *r < v_rank) {
            return Err(Error::BlockOrder(
                "the intervention block must have the lowest rank".into(),
            ));
        }
        Ok(out)
    }
}

/// Builds the default workflow mask from roles and block order.
///
/// Encodes: no time reversal; cross-time links only `t-1 -> t`; no
/// within-time parents of the intervention; no within-time edges between
/// unordered blocks (medication vs lifestyle); outcome-to-outcome directions
/// left unknown; the baseline-only covariate feeds only the first modeled
/// time point; no direct `v(t-1) -> x(t)` edges. Background variables
/// (demographics) take only their own lagged value as cross-time parent and
/// are never lagged parents of other variables, since their lagged copies
/// are exact functions of the current ones.
pub fn build_default_mask(schema: &PanelSchema, blocks: &BlockOrder) -> Result<PkMask> {
    let resolved = blocks.resolve(schema)?;
    let p = schema.n_variables();
    let big_t = schema.time_points();
    let mut mask = PkMask::forbidden(schema);
    let role = |i: usize| schema.variables[i].role;

    for t in 1..big_t {
        let within = mask.within_mut(t);
        for child in 0..p {
            for parent in 0..p {
                if child == parent {
                    continue;
                }
                let (ck, cr, cb) = resolved[child];
                let (_, pr, pb) = resolved[parent];
                let value = if role(child) == Role::BaselineOnly
                    || role(parent) == Role::BaselineOnly
                    || role(child) == Role::Intervention
                {
                    FORBIDDEN
                } else if pr < cr {
                    REQUIRED
                } else if cb == pb && ck == BlockKind::Outcome {
                    UNKNOWN
                } else {
                    FORBIDDEN
                };
                within.set(child, parent, value);
            }
        }

        let cross = mask.cross_mut(t, 1);
        for child in 0..p {
            for parent in 0..p {
                let (ck, _, _) = resolved[child];
                let (pk, _, _) = resolved[parent];
                let allowed = match (role(child), role(parent)) {
                    (Role::BaselineOnly, _) | (Role::Intervention, _) => false,
                    (_, Role::Intervention) => false,
                    (_, Role::BaselineOnly) => {
                        t == 1
                            && matches!(
                                ck,
                                BlockKind::Outcome | BlockKind::Medication | BlockKind::Lifestyle
                            )
                    }
                    _ if ck == BlockKind::Background || pk == BlockKind::Background => {
                        child == parent
                    }
                    _ => true,
                };
                cross.set(child, parent, allowed as u8);
            }
        }
    }
    Ok(mask)
}

/// One invariant violation found by [`validate_mask`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    InvalidWithinValue { t: usize, child: usize, parent: usize, value: i8 },
    InvalidCrossValue { t: usize, lag: usize, child: usize, parent: usize, value: u8 },
    SelfLoop { t: usize, variable: usize },
    RequiredEdgesCyclic { t: usize, cycle: Vec<usize> },
    NoInstantaneousParentsOfIntervention { t: usize, parent: usize },
    WithinTimeAtInitialConditions { child: usize, parent: usize },
    CrossLagZeroNonzero { t: usize },
    CrossLagBeyondOne { t: usize, lag: usize },
    CrossBeforeFirstTime { t: usize, lag: usize },
    EdgeIntoBaselineOnly { t: usize, lag: usize, parent: usize },
    BaselineOnlyParentAfterFirst { t: usize, lag: usize, child: usize },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_mask(mask: &PkMask, schema: &PanelSchema) -> Result<ValidationReport> {
    mask.check_dimensions(schema)?;
    let p = schema.n_variables();
    let big_t = schema.time_points();
    let v = schema.intervention();
    let w = schema.baseline();
    let mut out = Vec::new();

    for t in 0..big_t {
        let within = mask.within(t);
        for child in 0..p {
            for parent in 0..p {
                let value = within.get(child, parent);
                if !matches!(value, UNKNOWN | FORBIDDEN | REQUIRED) {
                    out.push(Violation::InvalidWithinValue { t, child, parent, value });
                    continue;
                }
                if value == FORBIDDEN {
                    continue;
                }
                if child == parent {
                    out.push(Violation::SelfLoop { t, variable: child });
                    continue;
                }
                if t == 0 {
                    out.push(Violation::WithinTimeAtInitialConditions { child, parent });
                    continue;
                }
                if child == v {
                    out.push(Violation::NoInstantaneousParentsOfIntervention { t, parent });
                }
                if Some(child) == w {
                    out.push(Violation::EdgeIntoBaselineOnly { t, lag: 0, parent });
                }
                if Some(parent) == w {
                    out.push(Violation::BaselineOnlyParentAfterFirst { t, lag: 0, child });
                }
            }
        }
        if let Some(cycle) = within.required_cycle() {
            out.push(Violation::RequiredEdgesCyclic { t, cycle });
        }

        for lag in 0..big_t {
            let cross = mask.cross(t, lag);
            let mut reported = false;
            for child in 0..p {
                for parent in 0..p {
                    let value = cross.get(child, parent);
                    if value > 1 {
                        out.push(Violation::InvalidCrossValue { t, lag, child, parent, value });
                        continue;
                    }
                    if value == 0 {
                        continue;
                    }
                    if lag == 0 || lag > t || lag >= 2 {
                        if !reported {
                            out.push(if lag == 0 {
                                Violation::CrossLagZeroNonzero { t }
                            } else if lag > t {
                                Violation::CrossBeforeFirstTime { t, lag }
                            } else {
                                Violation::CrossLagBeyondOne { t, lag }
                            });
                            reported = true;
                        }
                        continue;
                    }
                    if Some(child) == w {
                        out.push(Violation::EdgeIntoBaselineOnly { t, lag, parent });
                    }
                    if Some(parent) == w && t - lag > 0 {
                        out.push(Violation::BaselineOnlyParentAfterFirst { t, lag, child });
                    }
                }
            }
        }
    }
    Ok(ValidationReport { violations: out })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub within_unknown: usize,
    pub within_required: usize,
    pub cross_allowed: usize,
}

/// Admissible-edge counts summed over all time points and lags.
pub fn admissible_edge_count(mask: &PkMask) -> EdgeCounts {
    let mut counts = EdgeCounts {
        within_unknown: 0,
        within_required: 0,
        cross_allowed: 0,
    };
    for t in 0..mask.time_points() {
        let (u, r) = mask.within(t).counts();
        counts.within_unknown += u;
        counts.within_required += r;
        for lag in 0..mask.time_points() {
            counts.cross_allowed += mask.cross(t, lag).allowed_count();
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn default_mask() -> (PanelSchema, PkMask) {
        let schema = presets::paper_schema();
        let blocks = presets::paper_blocks();
        let mask = build_default_mask(&schema, &blocks).unwrap();
        (schema, mask)
    }

    #[test]
    fn outcome_pairs_left_to_learn() {
        let (schema, mask) = default_mask();
        let sbp = schema.index_of("SBP").unwrap();
        let bmi = schema.index_of("BMI").unwrap();
        for t in 1..4 {
            assert_eq!(mask.within(t).get(sbp, bmi), UNKNOWN);
            assert_eq!(mask.within(t).get(bmi, sbp), UNKNOWN);
        }
    }

    #[test]
    fn medication_lifestyle_forbidden_both_ways() {
        let (schema, mask) = default_mask();
        let smoke = schema.index_of("Smoke").unwrap();
        let drug = schema.index_of("Drug-HT").unwrap();
        for t in 1..4 {
            assert_eq!(mask.within(t).get(smoke, drug), FORBIDDEN);
            assert_eq!(mask.within(t).get(drug, smoke), FORBIDDEN);
        }
    }

    #[test]
    fn lag_two_is_all_zero() {
        let (_, mask) = default_mask();
        for t in 2..4 {
            assert_eq!(mask.cross(t, 2).allowed_count(), 0);
        }
        assert_eq!(mask.cross(3, 3).allowed_count(), 0);
    }

    #[test]
    fn intervention_rules() {
        let (schema, mask) = default_mask();
        let v = schema.intervention();
        for t in 1..4 {
            for j in 0..schema.n_variables() {
                assert_eq!(mask.within(t).get(v, j), FORBIDDEN);
            }
            for x in schema.outcomes() {
                assert!(!mask.cross(t, 1).allows(x, v));
                assert_eq!(mask.within(t).get(x, v), REQUIRED);
            }
        }
    }

    #[test]
    fn baseline_only_feeds_first_time_point_only() {
        let (schema, mask) = default_mask();
        let w = schema.baseline().unwrap();
        let bmi = schema.index_of("BMI").unwrap();
        assert!(mask.cross(1, 1).allows(bmi, w));
        for t in 2..4 {
            for j in 0..schema.n_variables() {
                assert!(!mask.cross(t, 1).allows(j, w));
                assert!(!mask.cross(t, 1).allows(w, j));
            }
        }
        for t in 0..4 {
            for j in 0..schema.n_variables() {
                assert_eq!(mask.within(t).get(w, j), FORBIDDEN);
                assert_eq!(mask.within(t).get(j, w), FORBIDDEN);
            }
        }
    }

    #[test]
    fn default_mask_is_admissible_and_deterministic() {
        let (schema, mask) = default_mask();
        let report = validate_mask(&mask, &schema).unwrap();
        assert!(report.is_admissible(), "{report:?}");
        let again = build_default_mask(&schema, &presets::paper_blocks()).unwrap();
        assert_eq!(mask, again);
    }

    #[test]
    fn required_edge_into_intervention_is_flagged() {
        let (schema, mut mask) = default_mask();
        let v = schema.intervention();
        let bmi = schema.index_of("BMI").unwrap();
        mask.within_mut(2).set(v, bmi, REQUIRED);
        let report = validate_mask(&mask, &schema).unwrap();
        // the default BMI <- v requirement also closes a cycle
        assert!(report
            .violations
            .contains(&Violation::NoInstantaneousParentsOfIntervention { t: 2, parent: bmi }));
        assert!(report
            .violations
            .iter()
            .all(|v| matches!(v, Violation::NoInstantaneousParentsOfIntervention { .. }
                | Violation::RequiredEdgesCyclic { .. })));
    }

    #[test]
    fn required_three_cycle_is_flagged() {
        let (schema, mut mask) = default_mask();
        let [a, b, c] = ["BMI", "SBP", "DBP"].map(|n| schema.index_of(n).unwrap());
        // a -> b -> c -> a
        mask.within_mut(1).set(b, a, REQUIRED);
        mask.within_mut(1).set(c, b, REQUIRED);
        mask.within_mut(1).set(a, c, REQUIRED);
        let report = validate_mask(&mask, &schema).unwrap();
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::RequiredEdgesCyclic { t: 1, cycle } => {
                let mut sorted = cycle.clone();
                sorted.sort();
                let mut expected = vec![a, b, c];
                expected.sort();
                assert_eq!(sorted, expected);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn lag_two_entry_is_flagged() {
        let (schema, mut mask) = default_mask();
        mask.cross_mut(3, 2).set(4, 4, 1);
        let report = validate_mask(&mask, &schema).unwrap();
        assert_eq!(report.violations, vec![Violation::CrossLagBeyondOne { t: 3, lag: 2 }]);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (_, mask) = default_mask();
        let other = PanelSchema::new(
            vec![
                crate::panel::Variable::new("v", Role::Intervention, crate::panel::ValueType::Binary),
                crate::panel::Variable::new("x", Role::Outcome, crate::panel::ValueType::Continuous),
            ],
            vec![1, 2],
        )
        .unwrap();
        assert!(matches!(
            validate_mask(&mask, &other).unwrap_err(),
            Error::DimensionMismatch(_)
        ));
    }

    #[test]
    fn counts_on_simple_masks() {
        let (schema, _) = default_mask();
        let all_forbidden = PkMask::forbidden(&schema);
        assert_eq!(
            admissible_edge_count(&all_forbidden),
            EdgeCounts { within_unknown: 0, within_required: 0, cross_allowed: 0 }
        );
        assert_eq!(WithinTimeMask::filled(5, UNKNOWN).counts(), (20, 0));
    }

    #[test]
    fn default_counts_snapshot() {
        // Enumerated independently from the rules: per modeled time point,
        // within-time: 5*4 outcome pairs unknown; required = v->{6 med/life,
        // 5 outcomes} + {Age,Sex}->{6 med/life, 5 outcomes} + {6 med/life}->{5 outcomes}
        // = 11 + 22 + 30 = 63.
        // cross lag 1: children (med/life 6, outcomes 5) x parents (6 med/life
        // + 5 outcomes) = 121; plus Age/Sex self lags = 2; plus Check_num at
        // t=1 into 11 children.
        let (schema, mask) = default_mask();
        let mut within_unknown = 0;
        let mut within_required = 0;
        let mut cross = 0;
        for t in 1..4 {
            for i in 0..15 {
                for j in 0..15 {
                    if i == j {
                        continue;
                    }
                    match mask.within(t).get(i, j) {
                        UNKNOWN => within_unknown += 1,
                        REQUIRED => within_required += 1,
                        _ => {}
                    }
                }
            }
            cross += mask.cross(t, 1).allowed_count();
        }
        assert_eq!(within_unknown, 3 * 20);
        assert_eq!(within_required, 3 * 63);
        assert_eq!(cross, 3 * (121 + 2) + 11);
        assert_eq!(
            admissible_edge_count(&mask),
            EdgeCounts { within_unknown: 60, within_required: 189, cross_allowed: 380 }
        );
        let _ = schema;
    }

    #[test]
    fn json_round_trip() {
        let (_, mask) = default_mask();
        let text = mask.to_json_pretty().unwrap();
        let file: MaskFile = serde_json::from_str(&text).unwrap();
        assert_eq!(file.convention, CONVENTION);
        assert_eq!(file.time_points, 4);
        assert_eq!(PkMask::from_file(file).unwrap(), mask);
    }

    #[test]
    fn block_order_rejects_misplaced_role() {
        let schema = presets::paper_schema();
        let mut blocks = presets::paper_blocks();
        let bmi_block = blocks
            .blocks
            .iter_mut()
            .find(|b| b.kind == BlockKind::Outcome)
            .unwrap();
        bmi_block.members.push("Smoke".into());
        let lifestyle = blocks
            .blocks
            .iter_mut()
            .find(|b| b.kind == BlockKind::Lifestyle)
            .unwrap();
        lifestyle.members.retain(|m| m != "Smoke");
        assert!(matches!(
            build_default_mask(&schema, &blocks).unwrap_err(),
            Error::BlockOrder(_)
        ));
    }

    fn all_dags(n: usize) -> Vec<Array2<bool>> {
        // Enumerate every edge subset and keep the acyclic ones.
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        let mut out = Vec::new();
        for bits in 0u32..(1 << pairs.len()) {
            let mut adj = Array2::from_elem((n, n), false);
            for (k, &(i, j)) in pairs.iter().enumerate() {
                if bits >> k & 1 == 1 {
                    adj[[i, j]] = true;
                }
            }
            if is_acyclic(&adj) {
                out.push(adj);
            }
        }
        out
    }

    fn is_acyclic(adj: &Array2<bool>) -> bool {
        let n = adj.nrows();
        let mut indeg: Vec<usize> = (0..n).map(|i| (0..n).filter(|&j| adj[[i, j]]).count()).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(node) = stack.pop() {
            seen += 1;
            for child in 0..n {
                if adj[[child, node]] {
                    indeg[child] -= 1;
                    if indeg[child] == 0 {
                        stack.push(child);
                    }
                }
            }
        }
        seen == n
    }

    #[test]
    fn forbidding_any_pair_shrinks_the_graph_class() {
        let dags = all_dags(4);
        assert_eq!(dags.len(), 543);
        let open = WithinTimeMask::filled(4, UNKNOWN);
        let open_count = dags.iter().filter(|d| open.admits(d)).count();
        assert_eq!(open_count, 543);
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                let mut m = open.clone();
                m.set(i, j, FORBIDDEN);
                let restricted: Vec<_> = dags.iter().filter(|d| m.admits(d)).collect();
                assert!(restricted.len() < open_count);
                assert!(restricted.iter().all(|d| open.admits(d)));
            }
        }
    }
}
