//! Subject-level bootstrap of lagged total effects.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effects::{build_stacked, NodeId};
use crate::error::{Error, Result};
use crate::fit::{fit_with, DegenerateColumn, FitOptions, LongitudinalModel};
use crate::mask::PkMask;
use crate::panel::Panel;

/// Below this many replicates the percentile bounds are noisy.
pub const MIN_RECOMMENDED_REPLICATES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
    pub ci_level: f64,
    /// Execution detail only; results do not depend on it, so it is not written out.
    #[serde(default = "one", skip_serializing)]
    pub workers: usize,
    #[serde(default)]
    pub include_auxiliary: bool,
}

fn one() -> usize {
    1
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            seed: 0,
            ci_level: 0.95,
            workers: 1,
            include_auxiliary: false,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "ci level {} outside (0, 1)",
                self.ci_level
            )));
        }
        if self.workers == 0 {
            return Err(Error::InvalidConfig("workers must be at least 1".into()));
        }
        Ok(())
    }
}

/// Effect of `source` at `anchor` on `target` at `anchor + lag`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct EffectQuery {
    pub source: String,
    pub target: String,
    pub anchor: usize,
    pub lag: usize,
}

impl EffectQuery {
    pub fn new(source: impl Into<String>, target: impl Into<String>, anchor: usize, lag: usize) -> Self {
        EffectQuery {
            source: source.into(),
            target: target.into(),
            anchor,
            lag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QuerySummary {
    #[serde(flatten)]
    pub query: EffectQuery,
    pub point: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub includes_zero: bool,
    pub excluded_replicates: usize,
    #[serde(skip)]
    pub draws: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BootstrapSummary {
    pub config: BootstrapConfig,
    pub n_subjects: usize,
    pub valid_replicates: usize,
    /// Replicate indices whose refit degenerated.
    pub excluded: Vec<usize>,
    pub queries: Vec<QuerySummary>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Linear interpolation between order statistics (R type 7). `sorted` must
/// be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    assert!(m > 0, "quantile of empty sample");
    let h = (m - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(m - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Equal-tailed percentile interval at `level`.
pub fn percentile_interval(draws: &[f64], level: f64) -> (f64, f64) {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    (quantile_sorted(&sorted, tail), quantile_sorted(&sorted, 1.0 - tail))
}

fn resolve(model: &LongitudinalModel, q: &EffectQuery) -> Result<(NodeId, NodeId)> {
    let schema = &model.schema;
    let s = schema.require_index(&q.source)?;
    let t = schema.require_index(&q.target)?;
    if q.anchor + q.lag >= schema.time_points() {
        return Err(Error::HorizonOutOfRange {
            horizon: q.lag,
            anchor: q.anchor,
            time_points: schema.time_points(),
        });
    }
    Ok((NodeId::new(s, q.anchor), NodeId::new(t, q.anchor + q.lag)))
}

/// Evaluates every query on one fitted model.
pub fn evaluate_queries(
    model: &LongitudinalModel,
    queries: &[EffectQuery],
    include_auxiliary: bool,
) -> Result<Vec<f64>> {
    let sys = build_stacked(model, include_auxiliary)?;
    let mut cache: HashMap<usize, ndarray::Array1<f64>> = HashMap::new();
    queries
        .iter()
        .map(|q| {
            let (s, t) = resolve(model, q)?;
            let si = sys
                .node_index(s)
                .ok_or_else(|| Error::InvalidConfig(format!("{} at t{} is not a modeled node", q.source, q.anchor)))?;
            let ti = sys.node_index(t).ok_or_else(|| {
                Error::InvalidConfig(format!("{} at t{} is not a modeled node", q.target, q.anchor + q.lag))
            })?;
            Ok(cache.entry(si).or_insert_with(|| sys.effects_from(si))[ti])
        })
        .collect()
}

/// Row indices for replicate `b`: `n` draws with replacement from a stream
/// that depends only on `(seed, b)`.
pub fn resample_indices(seed: u64, b: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn run_bootstrap(
    panel: &Panel,
    mask: &PkMask,
    config: &BootstrapConfig,
    queries: &[EffectQuery],
) -> Result<BootstrapSummary> {
    config.validate()?;
    if queries.is_empty() {
        return Err(Error::InvalidConfig("no effect queries".into()));
    }
    let mut warnings = Vec::new();
    if config.replicates < MIN_RECOMMENDED_REPLICATES {
        let msg = format!(
            "{} replicates is below {MIN_RECOMMENDED_REPLICATES}; percentile bounds at level {} will be noisy",
            config.replicates, config.ci_level
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let options = FitOptions {
        auxiliary: config.include_auxiliary,
    };
    let point_model = fit_with(panel, mask, options)?;
    let point = evaluate_queries(&point_model, queries, config.include_auxiliary)?;
    let known: BTreeSet<DegenerateColumn> = point_model.degenerate.iter().cloned().collect();

    let n = panel.n_subjects();
    let replicate = |b: usize| -> Option<Vec<f64>> {
        let rows = resample_indices(config.seed, b, n);
        let model = fit_with(&panel.select_subjects(&rows), mask, options).ok()?;
        if model.degenerate.iter().any(|d| !known.contains(d)) {
            return None;
        }
        evaluate_queries(&model, queries, config.include_auxiliary).ok()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let results: Vec<Option<Vec<f64>>> =
        pool.install(|| (0..config.replicates).into_par_iter().map(replicate).collect());

    let excluded: Vec<usize> = results
        .iter()
        .enumerate()
        .filter_map(|(b, r)| r.is_none().then_some(b))
        .collect();
    let valid: Vec<&Vec<f64>> = results.iter().flatten().collect();
    if valid.is_empty() {
        return Err(Error::AllReplicatesDegenerate(config.replicates));
    }
    let summaries = queries
        .iter()
        .enumerate()
        .map(|(k, q)| {
            let draws: Vec<f64> = valid.iter().map(|r| r[k]).collect();
            let (ci_low, ci_high) = percentile_interval(&draws, config.ci_level);
            QuerySummary {
                query: q.clone(),
                point: point[k],
                ci_low,
                ci_high,
                includes_zero: ci_low <= 0.0 && 0.0 <= ci_high,
                excluded_replicates: excluded.len(),
                draws,
            }
        })
        .collect();
    Ok(BootstrapSummary {
        config: config.clone(),
        n_subjects: n,
        valid_replicates: valid.len(),
        excluded,
        queries: summaries,
        warnings,
    })
}

/// Little-endian f64 draws, all replicates of query 0 first.
pub fn write_draws<W: Write>(summary: &BootstrapSummary, mut writer: W) -> std::io::Result<()> {
    for q in &summary.queries {
        for d in &q.draws {
            writer.write_all(&d.to_le_bytes())?;
        }
    }
    writer.flush()
}

/// Inverse of [`write_draws`] given the per-query draw count.
pub fn read_draws(bytes: &[u8], n_queries: usize, per_query: usize) -> Result<Vec<Vec<f64>>> {
    if bytes.len() != n_queries * per_query * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{} bytes for {n_queries} x {per_query} draws",
            bytes.len()
        )));
    }
    let flat: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Ok(flat.chunks(per_query.max(1)).map(<[f64]>::to_vec).take(n_queries).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Histogram {
    #[serde(flatten)]
    pub query: EffectQuery,
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub ci_low: f64,
    pub ci_high: f64,
    pub zero: f64,
}

pub fn histogram(draws: &[f64], bins: usize) -> Result<(Vec<f64>, Vec<usize>)> {
    if bins < 1 {
        return Err(Error::InvalidConfig("histogram needs at least one bin".into()));
    }
    if draws.is_empty() {
        return Err(Error::InvalidConfig("no draws to bin".into()));
    }
    let min = draws.iter().copied().fold(f64::INFINITY, f64::min);
    let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (max - min) / bins as f64;
    let edges = (0..=bins).map(|k| min + width * k as f64).collect();
    let mut counts = vec![0; bins];
    for &d in draws {
        let k = if width > 0.0 {
            (((d - min) / width).floor() as usize).min(bins - 1)
        } else {
            0
        };
        counts[k] += 1;
    }
    Ok((edges, counts))
}

pub fn histogram_export(summary: &BootstrapSummary, bins: usize) -> Result<Vec<Histogram>> {
    summary
        .queries
        .iter()
        .map(|q| {
            let (edges, counts) = histogram(&q.draws, bins)?;
            Ok(Histogram {
                query: q.query.clone(),
                edges,
                counts,
                ci_low: q.ci_low,
                ci_high: q.ci_high,
                zero: 0.0,
            })
        })
        .collect()
}
