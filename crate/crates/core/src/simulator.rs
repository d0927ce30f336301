//! What-if and goal-seek queries over a precomputed effect bundle.
//!
//! A bundle is built offline from a fitted model and its bootstrap summary.
//! Queries only read the bundle, so they are cheap and can run concurrently.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapSummary;
use crate::error::{Error, Result};
use crate::fit::{predict_one_step, LongitudinalModel};
use crate::panel::{Panel, Role, ValueType};
use crate::provenance;

pub const BUNDLE_FORMAT: &str = "wlingam.bundle/v1";

/// Inverse queries are refused below this standardized effect size.
pub const SINGULAR_EPSILON: f64 = 1e-8;

pub mod messages {
    pub const FORWARD_ESTIMATE: &str = "forward.estimate";
    pub const GOAL_ESTIMATE: &str = "goal.estimate";
    pub const GOAL_ESTIMATE_BINARY: &str = "goal.estimate.binary";
    pub const NO_DETECTABLE_EFFECT: &str = "guardrail.no_detectable_effect";
    pub const NOT_SUPPORTED: &str = "guardrail.not_supported";
    pub const INPUT_IMPLAUSIBLE: &str = "guardrail.input_implausible";
}

pub fn default_messages() -> BTreeMap<String, String> {
    [
        (
            messages::FORWARD_ESTIMATE,
            "Changing {source} to {value} changes {target} by {change} ({low} to {high}) at lag {lag}.",
        ),
        (
            messages::GOAL_ESTIMATE,
            "Setting {source} to {value} ({low} to {high}) is expected to bring {target} to {desired} at lag {lag}.",
        ),
        (
            messages::GOAL_ESTIMATE_BINARY,
            "Setting {source} to {setting} brings {target} closest to {desired} at lag {lag}; remaining gap {gap}.",
        ),
        (
            messages::NO_DETECTABLE_EFFECT,
            "The interval for {source} on {target} at lag {lag} includes zero. No numerical recommendation is given.",
        ),
        (
            messages::NOT_SUPPORTED,
            "This query is not supported: {detail}.",
        ),
        (
            messages::INPUT_IMPLAUSIBLE,
            "Some inputs are outside plausible ranges: {detail}.",
        ),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// One input of the current-visit profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ProfileVariable {
    pub name: String,
    pub role: Role,
    pub value_type: ValueType,
    /// Sample sd at the anchor, used to standardize effects.
    pub sd: f64,
    /// Plausibility range `[low, high]`.
    pub bounds: [f64; 2],
}

/// No-change trajectory as an affine map of the profile:
/// `target(lag) = intercept[lag][target] + gain[lag][target] · profile`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trajectory {
    pub intercept: Vec<Vec<f64>>,
    pub gain: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BundleProvenance {
    pub model_hash: String,
    pub bootstrap_hash: Option<String>,
    pub library_version: String,
}

/// Point, interval and uncertainty flag per `[lag][source][target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EffectBundle {
    pub format: String,
    pub anchor: usize,
    pub ci_level: f64,
    pub sources: Vec<String>,
    pub targets: Vec<String>,
    pub lags: Vec<usize>,
    pub variables: Vec<ProfileVariable>,
    pub point: Vec<Vec<Vec<f64>>>,
    pub ci_low: Vec<Vec<Vec<f64>>>,
    pub ci_high: Vec<Vec<Vec<f64>>>,
    pub uncertain: Vec<Vec<Vec<bool>>>,
    pub trajectory: Trajectory,
    pub messages: BTreeMap<String, String>,
    pub provenance: BundleProvenance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub uncertain: bool,
}

fn shape3<T>(m: &[Vec<Vec<T>>], dims: (usize, usize, usize)) -> bool {
    m.len() == dims.0 && m.iter().all(|a| a.len() == dims.1 && a.iter().all(|b| b.len() == dims.2))
}

impl EffectBundle {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(format!("bundle: {msg}")));
        if self.format != BUNDLE_FORMAT {
            return bad(format!("format `{}` is not {BUNDLE_FORMAT}", self.format));
        }
        if self.lags.windows(2).any(|w| w[0] >= w[1]) {
            return bad("lags must be strictly increasing".into());
        }
        let dims = (self.lags.len(), self.sources.len(), self.targets.len());
        if !(shape3(&self.point, dims)
            && shape3(&self.ci_low, dims)
            && shape3(&self.ci_high, dims)
            && shape3(&self.uncertain, dims))
        {
            return bad(format!("matrices must all be {dims:?} (lag, source, target)"));
        }
        let nv = self.variables.len();
        if !shape3(&self.trajectory.gain, (self.lags.len(), self.targets.len(), nv))
            || self.trajectory.intercept.len() != self.lags.len()
            || self.trajectory.intercept.iter().any(|r| r.len() != self.targets.len())
        {
            return bad("trajectory shape does not match lags, targets and variables".into());
        }
        for v in &self.variables {
            if !(v.sd.is_finite() && v.sd > 0.0) {
                return bad(format!("variable `{}` has sd {}", v.name, v.sd));
            }
            if !(v.bounds[0] <= v.bounds[1]) {
                return bad(format!("variable `{}` has bounds {:?}", v.name, v.bounds));
            }
        }
        for name in self.sources.iter().chain(&self.targets) {
            if self.variable(name).is_none() {
                return bad(format!("`{name}` is not a profile variable"));
            }
        }
        for l in 0..dims.0 {
            for s in 0..dims.1 {
                for t in 0..dims.2 {
                    let (lo, hi) = (self.ci_low[l][s][t], self.ci_high[l][s][t]);
                    if !(lo <= hi) || !self.point[l][s][t].is_finite() {
                        return bad(format!(
                            "{} -> {} lag {}: interval [{lo}, {hi}] is invalid",
                            self.sources[s], self.targets[t], self.lags[l]
                        ));
                    }
                    if self.uncertain[l][s][t] != (lo <= 0.0 && 0.0 <= hi) {
                        return bad(format!(
                            "{} -> {} lag {}: uncertain flag disagrees with interval",
                            self.sources[s], self.targets[t], self.lags[l]
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let bundle: EffectBundle = serde_json::from_str(text)?;
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn variable(&self, name: &str) -> Option<&ProfileVariable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn source_index(&self, name: &str) -> Option<usize> {
        self.sources.iter().position(|s| s == name)
    }

    pub fn target_index(&self, name: &str) -> Option<usize> {
        self.targets.iter().position(|s| s == name)
    }

    pub fn lag_index(&self, lag: usize) -> Option<usize> {
        self.lags.iter().position(|&l| l == lag)
    }

    /// Cell by `(lag, source, target)` positions.
    pub fn cell(&self, l: usize, s: usize, t: usize) -> Cell {
        Cell {
            point: self.point[l][s][t],
            ci_low: self.ci_low[l][s][t],
            ci_high: self.ci_high[l][s][t],
            uncertain: self.uncertain[l][s][t],
        }
    }

    /// Model-implied target value with every input held at the profile.
    pub fn implied_target(&self, profile: &[f64], l: usize, t: usize) -> f64 {
        let gain = &self.trajectory.gain[l][t];
        self.trajectory.intercept[l][t] + gain.iter().zip(profile).map(|(g, x)| g * x).sum::<f64>()
    }

    fn profile_vector(&self, baseline: &BTreeMap<String, f64>) -> Vec<f64> {
        self.variables
            .iter()
            .map(|v| baseline.get(&v.name).copied().unwrap_or(f64::NAN))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryMode {
    Forward,
    GoalSeek,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimQuery {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<QueryMode>,
    pub baseline: BTreeMap<String, f64>,
    pub source_variable: String,
    pub target_variable: String,
    pub horizon: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forward_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired_target: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimStatus {
    Estimate,
    NoDetectableEffect,
    NotSupported,
    InputImplausible,
}

/// Guardrailed response. Numbers are present only for `Estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SimAnswer {
    pub status: SimStatus,
    /// Forward: change in the target. Goal seek: required source value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval: Option<[f64; 2]>,
    /// Predicted target level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_interval: Option<[f64; 2]>,
    /// Chosen setting for a binary source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<u8>,
    /// `desiredTarget - level` at the chosen binary setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl SimAnswer {
    fn refusal(status: SimStatus, message: &str, detail: Option<String>) -> Self {
        SimAnswer {
            status,
            value: None,
            interval: None,
            level: None,
            level_interval: None,
            setting: None,
            gap: None,
            message: message.to_string(),
            detail,
        }
    }

    fn not_supported(detail: impl Into<String>) -> Self {
        Self::refusal(SimStatus::NotSupported, messages::NOT_SUPPORTED, Some(detail.into()))
    }
}

/// Request-level problems, as opposed to guardrail statuses.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("malformed query: {0}")]
    Malformed(String),
}

fn ordered(a: f64, b: f64) -> [f64; 2] {
    // `+ 0.0` folds -0.0 into 0.0
    if a <= b {
        [a + 0.0, b + 0.0]
    } else {
        [b + 0.0, a + 0.0]
    }
}

/// Checks every profile value and the query's own value against the
/// bundle's plausibility bounds.
pub fn validate_inputs(q: &SimQuery, variables: &[ProfileVariable]) -> std::result::Result<(), String> {
    let mut problems = Vec::new();
    let check = |problems: &mut Vec<String>, v: &ProfileVariable, x: f64, what: &str| {
        if !x.is_finite() {
            problems.push(format!("{what} {} is not finite", v.name));
        } else if v.value_type == ValueType::Binary && x != 0.0 && x != 1.0 {
            problems.push(format!("{what} {} = {x} must be 0 or 1", v.name));
        } else if v.value_type == ValueType::Categorical && x.fract() != 0.0 {
            problems.push(format!("{what} {} = {x} must be an integer category", v.name));
        } else if x < v.bounds[0] || x > v.bounds[1] {
            problems.push(format!(
                "{what} {} = {x} outside [{}, {}]",
                v.name, v.bounds[0], v.bounds[1]
            ));
        }
    };
    for v in variables {
        match q.baseline.get(&v.name) {
            Some(&x) => check(&mut problems, v, x, "baseline"),
            None => problems.push(format!("baseline {} is missing", v.name)),
        }
    }
    if let (Some(x), Some(v)) = (q.forward_value, variables.iter().find(|v| v.name == q.source_variable)) {
        check(&mut problems, v, x, "forward value for");
    }
    if let (Some(x), Some(v)) = (q.desired_target, variables.iter().find(|v| v.name == q.target_variable)) {
        check(&mut problems, v, x, "desired target for");
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(problems.join("; "))
    }
}

struct Resolved<'a> {
    l: usize,
    s: usize,
    t: usize,
    source: &'a ProfileVariable,
    profile: Vec<f64>,
}

/// Name and range checks shared by both query kinds. `Err` is a request
/// error; `Ok(Err(answer))` is a guardrail refusal.
fn resolve<'a>(
    bundle: &'a EffectBundle,
    q: &SimQuery,
    mode: QueryMode,
) -> std::result::Result<std::result::Result<Resolved<'a>, SimAnswer>, SimError> {
    if let Some(m) = q.mode {
        if m != mode {
            return Err(SimError::Malformed(format!("mode {m:?} sent to a {mode:?} query")));
        }
    }
    for name in q.baseline.keys().chain([&q.source_variable, &q.target_variable]) {
        if bundle.variable(name).is_none() {
            return Err(SimError::UnknownVariable(name.clone()));
        }
    }
    match mode {
        QueryMode::Forward if q.forward_value.is_none() => {
            return Err(SimError::Malformed("forwardValue is required".into()))
        }
        QueryMode::GoalSeek if q.desired_target.is_none() => {
            return Err(SimError::Malformed("desiredTarget is required".into()))
        }
        _ => {}
    }
    if let Err(detail) = validate_inputs(q, &bundle.variables) {
        return Ok(Err(SimAnswer::refusal(
            SimStatus::InputImplausible,
            messages::INPUT_IMPLAUSIBLE,
            Some(detail),
        )));
    }
    let Some(s) = bundle.source_index(&q.source_variable) else {
        return Ok(Err(SimAnswer::not_supported(format!(
            "{} is not an intervenable source",
            q.source_variable
        ))));
    };
    let Some(t) = bundle.target_index(&q.target_variable) else {
        return Ok(Err(SimAnswer::not_supported(format!(
            "{} is not a target outcome",
            q.target_variable
        ))));
    };
    let Some(l) = bundle.lag_index(q.horizon) else {
        return Ok(Err(SimAnswer::not_supported(format!(
            "horizon {} is outside the available lags {:?}",
            q.horizon, bundle.lags
        ))));
    };
    Ok(Ok(Resolved {
        l,
        s,
        t,
        source: bundle.variable(&q.source_variable).expect("checked above"),
        profile: bundle.profile_vector(&q.baseline),
    }))
}

fn forward_resolved(bundle: &EffectBundle, r: &Resolved<'_>, value: f64, baseline_source: f64) -> SimAnswer {
    let cell = bundle.cell(r.l, r.s, r.t);
    if cell.uncertain {
        return SimAnswer::refusal(SimStatus::NoDetectableEffect, messages::NO_DETECTABLE_EFFECT, None);
    }
    let delta = value - baseline_source;
    let change = cell.point * delta + 0.0;
    let interval = ordered(cell.ci_low * delta, cell.ci_high * delta);
    let implied = bundle.implied_target(&r.profile, r.l, r.t);
    SimAnswer {
        status: SimStatus::Estimate,
        value: Some(change),
        interval: Some(interval),
        level: Some(implied + change),
        level_interval: Some([implied + interval[0], implied + interval[1]]),
        setting: None,
        gap: None,
        message: messages::FORWARD_ESTIMATE.to_string(),
        detail: None,
    }
}

/// What-if: the predicted change and level of the target when the source
/// is moved from its profile value to `forwardValue`.
pub fn forward_query(bundle: &EffectBundle, q: &SimQuery) -> std::result::Result<SimAnswer, SimError> {
    let r = match resolve(bundle, q, QueryMode::Forward)? {
        Ok(r) => r,
        Err(answer) => return Ok(answer),
    };
    let value = q.forward_value.expect("checked in resolve");
    Ok(forward_resolved(bundle, &r, value, q.baseline[&q.source_variable]))
}

/// Inverse query: the source value that brings the target to
/// `desiredTarget`, or the nearer setting for a binary source.
pub fn goal_seek(bundle: &EffectBundle, q: &SimQuery) -> std::result::Result<SimAnswer, SimError> {
    let r = match resolve(bundle, q, QueryMode::GoalSeek)? {
        Ok(r) => r,
        Err(answer) => return Ok(answer),
    };
    let desired = q.desired_target.expect("checked in resolve");
    let base = q.baseline[&q.source_variable];

    if r.source.value_type == ValueType::Binary {
        let options = [0u8, 1u8].map(|s| (s, forward_resolved(bundle, &r, s as f64, base)));
        if let Some((_, refused)) = options.iter().find(|(_, a)| a.status != SimStatus::Estimate) {
            return Ok(refused.clone());
        }
        let dist = |a: &SimAnswer| (desired - a.level.expect("estimate has level")).abs();
        let (setting, best) = if dist(&options[1].1) < dist(&options[0].1) {
            options[1].clone()
        } else {
            options[0].clone()
        };
        return Ok(SimAnswer {
            status: SimStatus::Estimate,
            value: Some(setting as f64),
            interval: Some([setting as f64; 2]),
            level: best.level,
            level_interval: best.level_interval,
            setting: Some(setting),
            gap: Some(desired - best.level.expect("estimate has level")),
            message: messages::GOAL_ESTIMATE_BINARY.to_string(),
            detail: None,
        });
    }

    let cell = bundle.cell(r.l, r.s, r.t);
    let target = bundle.variable(&q.target_variable).expect("resolved");
    let standardized = cell.point * r.source.sd / target.sd;
    if standardized.abs() < SINGULAR_EPSILON {
        return Ok(SimAnswer::not_supported(format!(
            "effect of {} on {} at lag {} is too small to invert",
            q.source_variable, q.target_variable, q.horizon
        )));
    }
    if cell.uncertain {
        return Ok(SimAnswer::not_supported(format!(
            "interval for {} on {} at lag {} includes zero",
            q.source_variable, q.target_variable, q.horizon
        )));
    }
    let implied = bundle.implied_target(&r.profile, r.l, r.t);
    let gap = desired - implied;
    let value = base + gap / cell.point;
    let interval = ordered(base + gap / cell.ci_low, base + gap / cell.ci_high);
    Ok(SimAnswer {
        status: SimStatus::Estimate,
        value: Some(value),
        interval: Some(interval),
        level: Some(desired),
        level_interval: None,
        setting: None,
        gap: None,
        message: messages::GOAL_ESTIMATE.to_string(),
        detail: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RoundTrip {
    /// `|forward level at the goal-seek answer - desired|`.
    Residual(f64),
    /// The first non-estimate answer on the way.
    Refused(SimAnswer),
}

pub fn round_trip(
    bundle: &EffectBundle,
    baseline: &BTreeMap<String, f64>,
    source: &str,
    target: &str,
    lag: usize,
    desired: f64,
) -> std::result::Result<RoundTrip, SimError> {
    let mut q = SimQuery {
        mode: None,
        baseline: baseline.clone(),
        source_variable: source.to_string(),
        target_variable: target.to_string(),
        horizon: lag,
        forward_value: None,
        desired_target: Some(desired),
    };
    let goal = goal_seek(bundle, &q)?;
    if goal.status != SimStatus::Estimate {
        return Ok(RoundTrip::Refused(goal));
    }
    q.desired_target = None;
    q.forward_value = goal.value;
    let fwd = forward_query(bundle, &q)?;
    match fwd.level {
        Some(level) if fwd.status == SimStatus::Estimate => Ok(RoundTrip::Residual((level - desired).abs())),
        _ => Ok(RoundTrip::Refused(fwd)),
    }
}

/// Cells where some query returned `Estimate` although the interval
/// contains zero. Probes every `(lag, source, target)` with a unit move of
/// the source, both directions, and a goal seek.
pub fn guardrail_violations(
    bundle: &EffectBundle,
    baseline: &BTreeMap<String, f64>,
) -> std::result::Result<Vec<(String, String, usize)>, SimError> {
    let mut out = Vec::new();
    for (l, &lag) in bundle.lags.iter().enumerate() {
        for (s, source) in bundle.sources.iter().enumerate() {
            let base = baseline.get(source).copied().unwrap_or(0.0);
            let binary = bundle.variable(source).is_some_and(|v| v.value_type == ValueType::Binary);
            let moves: Vec<f64> = if binary { vec![1.0 - base] } else { vec![base + 1.0, base - 1.0] };
            for (t, target) in bundle.targets.iter().enumerate() {
                let c = bundle.cell(l, s, t);
                if !(c.ci_low <= 0.0 && 0.0 <= c.ci_high) {
                    continue;
                }
                let mut q = SimQuery {
                    mode: None,
                    baseline: baseline.clone(),
                    source_variable: source.clone(),
                    target_variable: target.clone(),
                    horizon: lag,
                    forward_value: None,
                    desired_target: None,
                };
                let mut estimates = 0;
                for &m in &moves {
                    q.forward_value = Some(m);
                    estimates += (forward_query(bundle, &q)?.status == SimStatus::Estimate) as usize;
                }
                q.forward_value = None;
                let implied = bundle.implied_target(&bundle.profile_vector(baseline), l, t);
                q.desired_target = Some(implied + 1.0);
                estimates += (goal_seek(bundle, &q)?.status == SimStatus::Estimate) as usize;
                if estimates > 0 {
                    out.push((source.clone(), target.clone(), lag));
                }
            }
        }
    }
    Ok(out)
}

/// Splits a schema-ordered profile into the pieces `predict_one_step` takes.
fn split_profile(model: &LongitudinalModel, profile: &[f64]) -> (f64, Array1<f64>, Array1<f64>) {
    let schema = &model.schema;
    let v = profile[schema.intervention()];
    let x = schema.outcomes().iter().map(|&i| profile[i]).collect();
    let z = schema.exogenous().iter().map(|&i| profile[i]).collect();
    (v, x, z)
}

/// Outcomes at `anchor + lag` for each lag, holding intervention and
/// exogenous inputs at their profile values. Lag 0 is the profile itself.
pub fn no_change_trajectory(
    model: &LongitudinalModel,
    anchor: usize,
    lags: &[usize],
    profile: &[f64],
) -> Result<Vec<Array1<f64>>> {
    let (v, mut x, z) = split_profile(model, profile);
    let max_lag = lags.iter().copied().max().unwrap_or(0);
    let mut path = vec![x.clone()];
    for k in 1..=max_lag {
        x = predict_one_step(model, anchor + k, x.view(), v, z.view(), z.view(), None)?;
        path.push(x.clone());
    }
    Ok(lags.iter().map(|&l| path[l].clone()).collect())
}

/// Affine form of [`no_change_trajectory`] over the schema variables.
pub fn trajectory_map(model: &LongitudinalModel, anchor: usize, lags: &[usize]) -> Result<Trajectory> {
    let n = model.schema.n_variables();
    let at_zero = no_change_trajectory(model, anchor, lags, &vec![0.0; n])?;
    let mut gain = vec![vec![vec![0.0; n]; model.p()]; lags.len()];
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        let at_unit = no_change_trajectory(model, anchor, lags, &e)?;
        for l in 0..lags.len() {
            for t in 0..model.p() {
                gain[l][t][k] = at_unit[l][t] - at_zero[l][t];
            }
        }
    }
    Ok(Trajectory {
        intercept: at_zero.into_iter().map(|a| a.to_vec()).collect(),
        gain,
    })
}

/// Profile variables with sd taken at `anchor` (time 0 for the baseline
/// covariate). Bounds not in `bounds` default to the observed range padded
/// by half its width; binaries get `[0, 1]`.
pub fn profile_variables(
    panel: &Panel,
    anchor: usize,
    bounds: &BTreeMap<String, [f64; 2]>,
) -> Result<Vec<ProfileVariable>> {
    let schema = panel.schema();
    if anchor >= schema.time_points() {
        return Err(Error::OutOfRange {
            index: anchor,
            time_points: schema.time_points(),
        });
    }
    let data = panel.data();
    Ok(schema
        .variables
        .iter()
        .enumerate()
        .map(|(i, var)| {
            let t = if var.role == Role::BaselineOnly { 0 } else { anchor };
            let col = data.slice(ndarray::s![.., i, t]);
            let sd = crate::linalg::sd(col);
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            let default = match var.value_type {
                ValueType::Binary => [0.0, 1.0],
                ValueType::Categorical => [lo, hi],
                ValueType::Continuous => [lo - 0.5 * (hi - lo), hi + 0.5 * (hi - lo)],
            };
            ProfileVariable {
                name: var.name.clone(),
                role: var.role,
                value_type: var.value_type,
                sd: if sd > 0.0 { sd } else { 1.0 },
                bounds: bounds.get(&var.name).copied().unwrap_or(default),
            }
        })
        .collect())
}

/// Assembles a bundle from the point fit and bootstrap summary. Every
/// `(source, target, lag)` cell must have a summary query at `anchor`,
/// except a source's own lag-0 cell, which is the identity.
pub fn build_bundle(
    model: &LongitudinalModel,
    summary: &BootstrapSummary,
    anchor: usize,
    lags: &[usize],
    sources: &[String],
    variables: Vec<ProfileVariable>,
) -> Result<EffectBundle> {
    let lookup: HashMap<(&str, &str, usize), &crate::bootstrap::QuerySummary> = summary
        .queries
        .iter()
        .filter(|q| q.query.anchor == anchor)
        .map(|q| ((q.query.source.as_str(), q.query.target.as_str(), q.query.lag), q))
        .collect();
    let targets = model.outcomes.clone();
    let (nl, ns, nt) = (lags.len(), sources.len(), targets.len());
    let mut point = vec![vec![vec![0.0; nt]; ns]; nl];
    let mut ci_low = point.clone();
    let mut ci_high = point.clone();
    let mut uncertain = vec![vec![vec![false; nt]; ns]; nl];
    for (l, &lag) in lags.iter().enumerate() {
        for (s, source) in sources.iter().enumerate() {
            for (t, target) in targets.iter().enumerate() {
                let (p, lo, hi) = match lookup.get(&(source.as_str(), target.as_str(), lag)) {
                    Some(q) => (q.point, q.ci_low, q.ci_high),
                    None if source == target && lag == 0 => (1.0, 1.0, 1.0),
                    None => {
                        return Err(Error::InvalidConfig(format!(
                            "bootstrap summary has no interval for {source} -> {target} at anchor {anchor}, lag {lag}"
                        )))
                    }
                };
                point[l][s][t] = p;
                ci_low[l][s][t] = lo;
                ci_high[l][s][t] = hi;
                uncertain[l][s][t] = lo <= 0.0 && 0.0 <= hi;
            }
        }
    }
    let bundle = EffectBundle {
        format: BUNDLE_FORMAT.to_string(),
        anchor,
        ci_level: summary.config.ci_level,
        sources: sources.to_vec(),
        targets,
        lags: lags.to_vec(),
        variables,
        point,
        ci_low,
        ci_high,
        uncertain,
        trajectory: trajectory_map(model, anchor, lags)?,
        messages: default_messages(),
        provenance: BundleProvenance {
            model_hash: provenance::hash_json(model)?,
            bootstrap_hash: Some(provenance::hash_json(summary)?),
            library_version: provenance::LIBRARY_VERSION.to_string(),
        },
    };
    bundle.validate()?;
    Ok(bundle)
}
