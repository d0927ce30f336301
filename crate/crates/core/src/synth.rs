//! Forward simulation of the longitudinal model with non-Gaussian shocks.

use ndarray::{Array1, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discovery::CausalOrdering;
use crate::effects::{build_stacked, guidance_effect_table, EffectTable};
use crate::error::{Error, Result};
use crate::fit::LongitudinalModel;
use crate::mask::{build_default_mask, PkMask};
use crate::matrix::Matrix;
use crate::panel::{Panel, PanelSchema};
use crate::presets;
use crate::provenance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// On `[-sqrt(3) s, sqrt(3) s]`.
    Uniform,
    Laplace,
    /// Equal mixture of `N(-a, r^2)` and `N(a, r^2)` with `a^2 = 0.8 s^2`, `r^2 = 0.2 s^2`.
    MixtureGaussian,
    /// Only for negative tests; triggers a non-identifiability warning.
    Gaussian,
}

/// Zero-mean noise with standard deviation `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub distribution: NoiseDistribution,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn uniform(scale: f64) -> Self {
        NoiseSpec {
            distribution: NoiseDistribution::Uniform,
            scale,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        let s = self.scale;
        if s == 0.0 {
            return 0.0;
        }
        match self.distribution {
            NoiseDistribution::Uniform => {
                let h = 3f64.sqrt() * s;
                rng.random_range(-h..h)
            }
            NoiseDistribution::Laplace => {
                let b = s / 2f64.sqrt();
                loop {
                    let u: f64 = rng.random::<f64>() - 0.5;
                    let x = -b * u.signum() * (1.0 - 2.0 * u.abs()).ln();
                    if x.is_finite() {
                        return x;
                    }
                }
            }
            NoiseDistribution::MixtureGaussian => {
                let a = s * 0.8f64.sqrt();
                let r = Normal::new(0.0, s * 0.2f64.sqrt()).expect("finite sd");
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                sign * a + r.sample(rng)
            }
            NoiseDistribution::Gaussian => Normal::new(0.0, s).expect("finite sd").sample(rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum ExogenousLaw {
    /// Keeps the previous value with probability `persistence`, otherwise
    /// draws a fresh Bernoulli(`p`).
    Bernoulli { p: f64, persistence: f64 },
    /// Drawn once, constant over time.
    FixedBernoulli { p: f64 },
    /// Uniform integer on `[low, high]` at time 0, then `+ step` per period.
    Aging { low: i64, high: i64, step: f64 },
}

/// `P(v(t) = 1) = 1 / (1 + exp(-slope (x(t-1) - center)))` for one outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticAssignment {
    pub outcome: String,
    pub center: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionLaw {
    pub p: f64,
    #[serde(default)]
    pub logistic: Option<LogisticAssignment>,
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub schema: PanelSchema,
    pub mask: PkMask,
    pub true_model: LongitudinalModel,
    /// Per outcome, shocks at `t >= 1`.
    pub noise: Vec<NoiseSpec>,
    /// Per outcome, the time-0 level is `initial_mean + initial_noise`.
    pub initial_mean: Vec<f64>,
    pub initial_noise: Vec<NoiseSpec>,
    /// Per exogenous input, in schema order.
    pub exogenous: Vec<ExogenousLaw>,
    pub intervention: InterventionLaw,
    /// The baseline covariate is uniform on `0..categories`.
    pub baseline_categories: usize,
    pub n_subjects: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeneratorWarning {
    NonIdentifiable { outcome: String },
}

#[derive(Debug, Clone)]
pub struct Generated {
    pub panel: Panel,
    pub true_effects: EffectTable,
    pub warnings: Vec<GeneratorWarning>,
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub model: LongitudinalModel,
    pub effects: EffectTable,
    pub noise: Vec<NoiseSpec>,
    pub warnings: Vec<GeneratorWarning>,
}

/// Errors unless every nonzero coefficient sits on a mask-admitted edge.
pub fn check_admissible(model: &LongitudinalModel, mask: &PkMask) -> Result<()> {
    model.validate()?;
    let schema = &model.schema;
    mask.check_dimensions(schema)?;
    let outcomes = schema.outcomes();
    let exogenous = schema.exogenous();
    let v = schema.intervention();
    let mut bad = Vec::new();
    for eq in &model.equations {
        let t = eq.t;
        let (within, cross) = (mask.within(t), mask.cross(t, 1));
        for (i, &xi) in outcomes.iter().enumerate() {
            let name = &schema.variables[xi].name;
            let mut check = |ok: bool, c: f64, what: String| {
                if c != 0.0 && !ok {
                    bad.push(format!("{what} -> {name} at t{t}"));
                }
            };
            check(within.allows(xi, v), eq.alpha[i], schema.variables[v].name.clone());
            for (j, &xj) in outcomes.iter().enumerate() {
                check(within.allows(xi, xj), eq.b_within[[i, j]], schema.variables[xj].name.clone());
                check(cross.allows(xi, xj), eq.b_cross[[i, j]], format!("{}(t-1)", schema.variables[xj].name));
            }
            for (k, &z) in exogenous.iter().enumerate() {
                check(within.allows(xi, z), eq.c_within[[i, k]], schema.variables[z].name.clone());
                check(cross.allows(xi, z), eq.c_cross[[i, k]], format!("{}(t-1)", schema.variables[z].name));
            }
            if t == 1 {
                if let Some(w) = schema.baseline() {
                    check(cross.allows(xi, w), model.delta[i], schema.variables[w].name.clone());
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("coefficients on forbidden edges: {}", bad.join(", "))))
    }
}

fn validate_spec(spec: &GeneratorSpec) -> Result<()> {
    let p = spec.schema.outcomes().len();
    let q = spec.schema.exogenous().len();
    if spec.true_model.schema != spec.schema {
        return Err(Error::InvalidConfig("true model schema differs from generator schema".into()));
    }
    for (what, len, want) in [
        ("noise", spec.noise.len(), p),
        ("initial_mean", spec.initial_mean.len(), p),
        ("initial_noise", spec.initial_noise.len(), p),
        ("exogenous", spec.exogenous.len(), q),
    ] {
        if len != want {
            return Err(Error::InvalidConfig(format!("{what} has {len} entries, expected {want}")));
        }
    }
    if spec.noise.iter().chain(&spec.initial_noise).any(|n| !(n.scale >= 0.0) || !n.scale.is_finite()) {
        return Err(Error::InvalidConfig("noise scales must be finite and non-negative".into()));
    }
    if spec.n_subjects == 0 {
        return Err(Error::InvalidConfig("n_subjects must be positive".into()));
    }
    if spec.schema.baseline().is_some() && spec.baseline_categories == 0 {
        return Err(Error::InvalidConfig("baseline covariate needs at least one category".into()));
    }
    if let Some(l) = &spec.intervention.logistic {
        if spec.true_model.outcome_position(&l.outcome).is_none() {
            return Err(Error::UnknownVariable(l.outcome.clone()));
        }
    }
    check_admissible(&spec.true_model, &spec.mask)
}

pub fn generate(spec: &GeneratorSpec) -> Result<Generated> {
    validate_spec(spec)?;
    let schema = &spec.schema;
    let model = &spec.true_model;
    let outcomes = schema.outcomes();
    let exogenous = schema.exogenous();
    let v = schema.intervention();
    let w = schema.baseline();
    let big_t = schema.time_points();
    let (n, p, q) = (spec.n_subjects, outcomes.len(), exogenous.len());
    let assign = spec
        .intervention
        .logistic
        .as_ref()
        .map(|l| (model.outcome_position(&l.outcome).expect("checked"), l.center, l.slope));

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = Array3::<f64>::zeros((n, schema.n_variables(), big_t));
    let mut x_prev = Array1::<f64>::zeros(p);
    let mut x_cur = Array1::<f64>::zeros(p);
    let mut z_prev = Array1::<f64>::zeros(q);
    let mut z_cur = Array1::<f64>::zeros(q);
    for s in 0..n {
        let w0 = match w {
            Some(wi) => {
                let c = rng.random_range(0..spec.baseline_categories) as f64;
                for t in 0..big_t {
                    data[[s, wi, t]] = c;
                }
                c
            }
            None => 0.0,
        };
        for i in 0..p {
            x_prev[i] = spec.initial_mean[i] + spec.initial_noise[i].sample(&mut rng);
        }
        for (k, law) in spec.exogenous.iter().enumerate() {
            z_prev[k] = match *law {
                ExogenousLaw::Bernoulli { p, .. } | ExogenousLaw::FixedBernoulli { p } => {
                    rng.random_bool(p) as u8 as f64
                }
                ExogenousLaw::Aging { low, high, .. } => rng.random_range(low..=high) as f64,
            };
        }
        for i in 0..p {
            data[[s, outcomes[i], 0]] = x_prev[i];
        }
        for k in 0..q {
            data[[s, exogenous[k], 0]] = z_prev[k];
        }
        for t in 1..big_t {
            for (k, law) in spec.exogenous.iter().enumerate() {
                z_cur[k] = match *law {
                    ExogenousLaw::Bernoulli { p, persistence } => {
                        if rng.random_bool(persistence) {
                            z_prev[k]
                        } else {
                            rng.random_bool(p) as u8 as f64
                        }
                    }
                    ExogenousLaw::FixedBernoulli { .. } => z_prev[k],
                    ExogenousLaw::Aging { step, .. } => z_prev[k] + step,
                };
            }
            let prob = match assign {
                Some((i, center, slope)) => 1.0 / (1.0 + (-slope * (x_prev[i] - center)).exp()),
                None => spec.intervention.p,
            };
            let vt = rng.random_bool(prob.clamp(0.0, 1.0)) as u8 as f64;

            let eq = model.at(t);
            let mut rhs: Vec<f64> = (0..p)
                .map(|i| {
                    let mut r = eq.intercepts[i] + eq.alpha[i] * vt;
                    for j in 0..p {
                        r += eq.b_cross[[i, j]] * x_prev[j];
                    }
                    for k in 0..q {
                        r += eq.c_within[[i, k]] * z_cur[k] + eq.c_cross[[i, k]] * z_prev[k];
                    }
                    if t == 1 {
                        r += model.delta[i] * w0;
                    }
                    r
                })
                .collect();
            for (i, r) in rhs.iter_mut().enumerate() {
                *r += spec.noise[i].sample(&mut rng);
            }
            for &i in eq.ordering.as_slice() {
                let mut xi = rhs[i];
                for j in 0..p {
                    xi += eq.b_within[[i, j]] * x_cur[j];
                }
                x_cur[i] = xi;
            }

            data[[s, v, t]] = vt;
            for i in 0..p {
                data[[s, outcomes[i], t]] = x_cur[i];
            }
            for k in 0..q {
                data[[s, exogenous[k], t]] = z_cur[k];
            }
            std::mem::swap(&mut x_prev, &mut x_cur);
            std::mem::swap(&mut z_prev, &mut z_cur);
            x_cur.fill(0.0);
        }
    }
    let width = n.to_string().len();
    let ids = (0..n).map(|s| format!("S{:0width$}", s + 1)).collect();
    let panel = Panel::new(schema.clone(), data, ids)?;

    let sys = build_stacked(model, false)?;
    let horizons: Vec<usize> = (0..big_t - 1).collect();
    let true_effects = guidance_effect_table(&sys, 1, &horizons)?;
    let warnings = spec
        .noise
        .iter()
        .zip(&model.outcomes)
        .filter(|(n, _)| n.distribution == NoiseDistribution::Gaussian)
        .map(|(_, o)| GeneratorWarning::NonIdentifiable { outcome: o.clone() })
        .collect();
    Ok(Generated {
        panel,
        true_effects,
        warnings,
    })
}

impl Generated {
    pub fn truth(&self, spec: &GeneratorSpec) -> Truth {
        Truth {
            model: spec.true_model.clone(),
            effects: self.true_effects.clone(),
            noise: spec.noise.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Noise sd used by the paper-shaped spec.
pub const PAPER_SHAPED_NOISE: f64 = 0.3;

/// The true model of the paper-shaped spec: a BMI -> SBP -> DBP -> HbA1c ->
/// LDL chain plus shortcuts, identical at every modeled time point.
pub fn paper_shaped_model(schema: &PanelSchema, mask: &PkMask) -> Result<LongitudinalModel> {
    let mut model = LongitudinalModel::zeros(schema);
    model.provenance.mask_hash = provenance::hash_json(&mask.to_file())?;
    let o = |n: &str| model.outcome_position(n).expect("preset outcome");
    let z = |n: &str| model.exogenous_position(n).expect("preset input");
    let (bmi, sbp, dbp, hba1c, ldl) = (o("BMI"), o("SBP"), o("DBP"), o("HbA1c"), o("LDL"));

    let within = [
        (sbp, bmi, 0.6),
        (dbp, sbp, 0.5),
        (hba1c, dbp, 0.4),
        (hba1c, bmi, 0.3),
        (ldl, hba1c, 0.5),
        (ldl, bmi, 0.2),
    ];
    let cross = [(sbp, bmi, 0.1), (ldl, hba1c, 0.1)];
    let c_within = [
        (sbp, z("Drug-HT"), -0.8),
        (dbp, z("Drug-HT"), -0.5),
        (hba1c, z("Drug-DM"), -0.6),
        (ldl, z("Drug-LDL"), -0.9),
        (bmi, z("Exercise"), -0.3),
        (sbp, z("Smoke"), 0.2),
        (sbp, z("Alcohol"), 0.3),
        (bmi, z("Age"), 0.02),
        (sbp, z("Age"), 0.03),
        (dbp, z("Sex"), 0.2),
        (bmi, z("Sex"), 0.3),
    ];
    let c_cross = [
        (bmi, z("Exercise"), -0.15),
        (sbp, z("Drug-HT"), -0.2),
        (ldl, z("Smoke"), 0.1),
    ];
    let mut delta = vec![0.0; 5];
    delta[bmi] = -0.1;
    delta[sbp] = -0.05;
    model.delta = delta;
    for t in 1..schema.time_points() {
        let eq = model.at_mut(t);
        eq.alpha = vec![-0.4, -0.5, -0.3, -0.2, -0.3];
        eq.intercepts = vec![0.5, 0.2, 0.1, 0.0, 0.3];
        eq.ordering = CausalOrdering(vec![bmi, sbp, dbp, hba1c, ldl]);
        for (c, p, b) in within {
            eq.b_within[[c, p]] = b;
        }
        eq.b_cross = Matrix(ndarray::Array2::eye(5) * 0.5);
        for (c, p, b) in cross {
            eq.b_cross[[c, p]] = b;
        }
        for (c, k, b) in c_within {
            eq.c_within[[c, k]] = b;
        }
        for (c, k, b) in c_cross {
            eq.c_cross[[c, k]] = b;
        }
        eq.residual_variance = vec![PAPER_SHAPED_NOISE * PAPER_SHAPED_NOISE; 5];
    }
    check_admissible(&model, mask)?;
    Ok(model)
}

/// The canonical 15-variable, 4-wave spec with uniform shocks.
pub fn paper_shaped(n_subjects: usize, seed: u64) -> Result<GeneratorSpec> {
    let schema = presets::paper_schema();
    let mask = build_default_mask(&schema, &presets::paper_blocks())?;
    let true_model = paper_shaped_model(&schema, &mask)?;
    let bern = |p| ExogenousLaw::Bernoulli { p, persistence: 0.5 };
    Ok(GeneratorSpec {
        true_model,
        noise: vec![NoiseSpec::uniform(PAPER_SHAPED_NOISE); 5],
        initial_mean: vec![0.0; 5],
        initial_noise: vec![NoiseSpec::uniform(1.0); 5],
        exogenous: vec![
            bern(0.2),
            bern(0.1),
            bern(0.15),
            bern(0.2),
            bern(0.4),
            bern(0.3),
            ExogenousLaw::Aging {
                low: 40,
                high: 74,
                step: 1.0,
            },
            ExogenousLaw::FixedBernoulli { p: 0.5 },
        ],
        intervention: InterventionLaw {
            p: 0.25,
            logistic: None,
        },
        baseline_categories: 4,
        n_subjects,
        seed,
        schema,
        mask,
    })
}
