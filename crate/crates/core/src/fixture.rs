//! A reconstructed reference system on the canonical schema.
//!
//! The model is built by hand so that the total effects of the intervention
//! at time point 1 equal a reference set of guidance effects, and its
//! within-time SBP/DBP edge flips direction after the first time point. The
//! bundle carries those effects and their intervals verbatim. Nothing here is
//! estimated from data; the files serve as stable inputs for the service,
//! the simulator and regression tests.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{arr1, Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discovery::CausalOrdering;
use crate::effects::{build_stacked, NodeId};
use crate::error::{Error, Result};
use crate::fit::LongitudinalModel;
use crate::mask::build_default_mask;
use crate::matrix::Matrix;
use crate::motif::{extract_motif, CoefficientScale, Motif, DEFAULT_EDGE_THRESHOLD};
use crate::presets::{self, paper_blocks, paper_schema, INTERVENTION, OUTCOMES};
use crate::provenance;
use crate::simulator::{
    default_messages, trajectory_map, BundleProvenance, EffectBundle, ProfileVariable, BUNDLE_FORMAT,
};

pub const ANCHOR: usize = 1;
pub const LAGS: [usize; 3] = [0, 1, 2];
pub const SOURCES: [&str; 3] = [INTERVENTION, "BMI", "Drug-HT"];

/// Guidance effects `[lag][outcome]` with 95% intervals.
pub const GUIDANCE_POINT: [[f64; 5]; 3] = [
    [-0.129, -0.737, -0.185, -0.005, -0.258],
    [-0.067, -0.117, 0.305, -0.007, 0.086],
    [-0.031, 0.203, 0.531, 0.002, 0.348],
];
pub const GUIDANCE_LOW: [[f64; 5]; 3] = [
    [-0.165, -1.112, -0.450, -0.014, -0.928],
    [-0.109, -0.543, 0.011, -0.017, -0.683],
    [-0.076, -0.250, 0.207, -0.010, -0.472],
];
pub const GUIDANCE_HIGH: [[f64; 5]; 3] = [
    [-0.094, -0.358, 0.080, 0.005, 0.439],
    [-0.029, 0.290, 0.591, 0.005, 0.845],
    [0.014, 0.630, 0.837, 0.015, 1.175],
];

/// Same-time guidance effects for guidance at time points 2 and 3.
const LATER_LAG0: [[f64; 5]; 2] = [
    [-0.082, -0.038, 0.364, -0.011, -0.391],
    [-0.077, -0.246, 0.290, -0.004, 0.420],
];

const SD: [(&str, f64); 15] = [
    (INTERVENTION, 0.45),
    ("BMI", 3.5),
    ("SBP", 15.0),
    ("DBP", 10.0),
    ("HbA1c", 0.6),
    ("LDL", 30.0),
    ("Drug-HT", 0.35),
    ("Drug-DM", 0.2),
    ("Drug-LDL", 0.3),
    ("Smoke", 0.4),
    ("Exercise", 0.45),
    ("Alcohol", 0.45),
    ("Age", 8.0),
    ("Sex", 0.5),
    (presets::BASELINE, 1.2),
];

const BOUNDS: [(&str, [f64; 2]); 15] = [
    (INTERVENTION, [0.0, 1.0]),
    ("BMI", [10.0, 80.0]),
    ("SBP", [70.0, 250.0]),
    ("DBP", [30.0, 150.0]),
    ("HbA1c", [3.0, 20.0]),
    ("LDL", [20.0, 400.0]),
    ("Drug-HT", [0.0, 1.0]),
    ("Drug-DM", [0.0, 1.0]),
    ("Drug-LDL", [0.0, 1.0]),
    ("Smoke", [0.0, 1.0]),
    ("Exercise", [0.0, 1.0]),
    ("Alcohol", [0.0, 1.0]),
    ("Age", [18.0, 110.0]),
    ("Sex", [0.0, 1.0]),
    (presets::BASELINE, [0.0, 3.0]),
];

/// A typical current-visit profile; the no-change trajectory from it is flat.
pub fn typical_profile() -> BTreeMap<String, f64> {
    [
        (INTERVENTION, 0.0),
        ("BMI", 24.9),
        ("SBP", 125.0),
        ("DBP", 78.0),
        ("HbA1c", 5.7),
        ("LDL", 125.0),
        ("Drug-HT", 0.0),
        ("Drug-DM", 0.0),
        ("Drug-LDL", 0.0),
        ("Smoke", 0.0),
        ("Exercise", 0.0),
        ("Alcohol", 0.0),
        ("Age", 55.0),
        ("Sex", 0.0),
        (presets::BASELINE, 2.0),
    ]
    .iter()
    .map(|(k, v)| (k.to_string(), *v))
    .collect()
}

fn outcome(name: &str) -> usize {
    OUTCOMES.iter().position(|o| *o == name).expect("outcome name")
}

/// `b[[child, parent]]`; the SBP/DBP edge points DBP -> SBP when `flipped`.
fn within(flipped: bool) -> Array2<f64> {
    let mut b = Array2::zeros((5, 5));
    let mut set = |child: &str, parent: &str, c: f64| b[[outcome(child), outcome(parent)]] = c;
    set("SBP", "BMI", 0.9);
    set("HbA1c", "BMI", 0.03);
    set("LDL", "BMI", 1.1);
    set("LDL", "HbA1c", 2.0);
    if flipped {
        set("DBP", "BMI", 0.3);
        set("SBP", "DBP", 0.8);
    } else {
        set("DBP", "BMI", 0.2);
        set("DBP", "SBP", 0.45);
    }
    b
}

fn i_minus(b: &Array2<f64>) -> Array2<f64> {
    Array2::eye(b.nrows()) - b
}

/// Diagonal lag matrix carrying `from` at one time point into `to` at the
/// next, given the next time point's within-time matrix.
fn carry(b_next: &Array2<f64>, from: &[f64; 5], to: &[f64; 5]) -> Array2<f64> {
    let need = i_minus(b_next).dot(&arr1(to));
    Array2::from_diag(&Array1::from_shape_fn(5, |i| need[i] / from[i]))
}

pub fn model() -> Result<LongitudinalModel> {
    let schema = paper_schema();
    let mask = build_default_mask(&schema, &paper_blocks())?;
    let mut m = LongitudinalModel::zeros(&schema);
    m.provenance.mask_hash = provenance::hash_json(&mask.to_file())?;

    let profile = typical_profile();
    let x_bar = Array1::from_iter(m.outcomes.iter().map(|n| profile[n]));
    let z_bar = Array1::from_iter(m.exogenous.iter().map(|n| profile[n]));
    let w_bar = profile[presets::BASELINE];
    let sd = |n: &str| SD.iter().find(|(k, _)| *k == n).expect("sd").1;

    let mut c_within = Array2::zeros((m.p(), m.q()));
    for (child, input, c) in [
        ("SBP", "Drug-HT", -6.0),
        ("DBP", "Drug-HT", -3.0),
        ("HbA1c", "Drug-DM", -0.4),
        ("LDL", "Drug-LDL", -25.0),
        ("BMI", "Exercise", -0.3),
        ("SBP", "Smoke", 1.0),
        ("SBP", "Alcohol", 2.0),
        ("SBP", "Age", 0.3),
        ("DBP", "Sex", 2.0),
    ] {
        c_within[[outcome(child), m.exogenous_position(input).expect("input")]] = c;
    }
    m.delta[outcome("BMI")] = -0.05;

    let flat_order = CausalOrdering(vec![0, 1, 2, 3, 4]);
    let flipped_order = CausalOrdering(vec![0, 2, 1, 3, 4]);
    let lag0 = [GUIDANCE_POINT[0], LATER_LAG0[0], LATER_LAG0[1]];
    for k in 0..3 {
        let t = k + 1;
        let b = within(t > 1);
        let b_cross = match t {
            1 => Array2::eye(5) * 0.8,
            2 => carry(&b, &GUIDANCE_POINT[0], &GUIDANCE_POINT[1]),
            _ => carry(&b, &GUIDANCE_POINT[1], &GUIDANCE_POINT[2]),
        };
        let alpha = i_minus(&b).dot(&arr1(&lag0[k]));
        let mut intercepts = i_minus(&b).dot(&x_bar) - b_cross.dot(&x_bar) - c_within.dot(&z_bar);
        if t == 1 {
            intercepts.scaled_add(-w_bar, &Array1::from(m.delta.clone()));
        }
        let eq = m.at_mut(t);
        eq.alpha = alpha.to_vec();
        eq.b_within = Matrix(b);
        eq.b_cross = Matrix(b_cross);
        eq.c_within = Matrix(c_within.clone());
        eq.intercepts = intercepts.to_vec();
        eq.ordering = if t > 1 { flipped_order.clone() } else { flat_order.clone() };
        eq.outcome_sd = OUTCOMES.iter().map(|o| sd(o)).collect();
        eq.residual_variance = OUTCOMES.iter().map(|o| (0.5 * sd(o)).powi(2)).collect();
    }
    m.validate()?;
    Ok(m)
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6 + 0.0
}

pub fn profile_variables(model: &LongitudinalModel) -> Vec<ProfileVariable> {
    model
        .schema
        .variables
        .iter()
        .map(|v| ProfileVariable {
            name: v.name.clone(),
            role: v.role,
            value_type: v.value_type,
            sd: SD.iter().find(|(k, _)| *k == v.name).expect("sd").1,
            bounds: BOUNDS.iter().find(|(k, _)| *k == v.name).expect("bounds").1,
        })
        .collect()
}

/// Guidance cells are the reference values. Other sources use the model's
/// own effects with an illustrative interval of a quarter of the effect
/// plus 2% of the target sd on each side.
pub fn bundle(model: &LongitudinalModel) -> Result<EffectBundle> {
    let sys = build_stacked(model, false)?;
    let schema = &model.schema;
    let variables = profile_variables(model);
    let sd = |name: &str| variables.iter().find(|v| v.name == name).expect("variable").sd;
    let (nl, ns, nt) = (LAGS.len(), SOURCES.len(), OUTCOMES.len());
    let mut point = vec![vec![vec![0.0; nt]; ns]; nl];
    let mut ci_low = point.clone();
    let mut ci_high = point.clone();
    for (s, source) in SOURCES.iter().enumerate() {
        let src = sys
            .node_index(NodeId::new(schema.require_index(source)?, ANCHOR))
            .ok_or_else(|| Error::InvalidModel(format!("{source} has no node at t{ANCHOR}")))?;
        let eff = sys.effects_from(src);
        for (l, &lag) in LAGS.iter().enumerate() {
            for (t, target) in OUTCOMES.iter().enumerate() {
                if *source == INTERVENTION {
                    point[l][s][t] = GUIDANCE_POINT[l][t];
                    ci_low[l][s][t] = GUIDANCE_LOW[l][t];
                    ci_high[l][s][t] = GUIDANCE_HIGH[l][t];
                    continue;
                }
                let node = NodeId::new(schema.require_index(target)?, ANCHOR + lag);
                let p = eff[sys.node_index(node).expect("outcome node")];
                let half = if source == target && lag == 0 { 0.0 } else { 0.25 * p.abs() + 0.02 * sd(target) };
                point[l][s][t] = round6(p);
                ci_low[l][s][t] = round6(p - half);
                ci_high[l][s][t] = round6(p + half);
            }
        }
    }
    let uncertain = ci_low
        .iter()
        .zip(&ci_high)
        .map(|(lo, hi)| {
            lo.iter()
                .zip(hi)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| *x <= 0.0 && 0.0 <= *y).collect())
                .collect()
        })
        .collect();
    let bundle = EffectBundle {
        format: BUNDLE_FORMAT.to_string(),
        anchor: ANCHOR,
        ci_level: 0.95,
        sources: SOURCES.iter().map(|s| s.to_string()).collect(),
        targets: model.outcomes.clone(),
        lags: LAGS.to_vec(),
        variables: profile_variables(model),
        point,
        ci_low,
        ci_high,
        uncertain,
        trajectory: trajectory_map(model, ANCHOR, &LAGS)?,
        messages: default_messages(),
        provenance: BundleProvenance {
            model_hash: provenance::hash_json(model)?,
            bootstrap_hash: None,
            library_version: provenance::LIBRARY_VERSION.to_string(),
        },
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Stored bootstrap draws for one effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DrawSet {
    pub source: String,
    pub target: String,
    pub anchor: usize,
    pub lag: usize,
    pub point: f64,
    pub draws: Vec<f64>,
}

/// 1000 draws for guidance -> BMI at lag 0 whose type-7 2.5% and 97.5%
/// quantiles are exactly the reference interval endpoints.
pub fn bmi_draws() -> DrawSet {
    let (lo, hi) = (GUIDANCE_LOW[0][0], GUIDANCE_HIGH[0][0]);
    let mut rng = ChaCha8Rng::seed_from_u64(2020);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut s: Vec<f64> = (0..1000).map(|_| normal.sample(&mut rng)).collect();
    s.sort_by(f64::total_cmp);
    // piecewise-linear monotone map pinning order statistics 24 and 974
    let (a, b) = (s[24], s[974]);
    let scale = (hi - lo) / (b - a);
    let mut draws: Vec<f64> = s.iter().map(|x| round6(lo + (x - a) * scale)).collect();
    draws[24] = lo;
    draws[25] = lo;
    draws[974] = hi;
    draws[975] = hi;
    debug_assert!(draws.windows(2).all(|w| w[0] <= w[1]));
    draws.shuffle(&mut rng);
    DrawSet {
        source: INTERVENTION.to_string(),
        target: "BMI".to_string(),
        anchor: ANCHOR,
        lag: 0,
        point: GUIDANCE_POINT[0][0],
        draws,
    }
}

pub fn motif(model: &LongitudinalModel) -> Result<Motif> {
    extract_motif(model, DEFAULT_EDGE_THRESHOLD, CoefficientScale::Standardized)
}

pub const FILES: [&str; 5] = ["model.json", "bundle.json", "draws.json", "motif.json", "profile.json"];

/// Every fixture file as `(name, contents)`.
pub fn render() -> Result<Vec<(&'static str, String)>> {
    let m = model()?;
    let b = bundle(&m)?;
    let nl = |s: String| s + "\n";
    Ok(vec![
        (FILES[0], nl(m.to_json_pretty()?)),
        (FILES[1], nl(b.to_json_pretty()?)),
        (FILES[2], nl(serde_json::to_string_pretty(&bmi_draws())?)),
        (FILES[3], nl(serde_json::to_string_pretty(&motif(&m)?)?)),
        (FILES[4], nl(serde_json::to_string_pretty(&typical_profile())?)),
    ])
}

pub fn write_all(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in render()? {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
