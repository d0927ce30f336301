//! First-order longitudinal model: per-time within-outcome structure plus
//! lagged, intervention, exogenous and baseline coefficient blocks.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::discovery::{self, CausalOrdering};
use crate::error::{Error, Result};
use crate::linalg::{self, LeastSquares};
use crate::mask::{validate_mask, PkMask};
use crate::matrix::Matrix;
use crate::panel::{Panel, PanelSchema};
use crate::provenance::{self, Provenance};

pub const MODEL_FORMAT: &str = "wlingam.model/v1";

/// Coefficients of the outcome equations at one modeled time point.
///
/// Matrices are indexed `[child outcome, parent]`; outcome and exogenous
/// positions follow [`LongitudinalModel::outcomes`] and
/// [`LongitudinalModel::exogenous`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeEquations {
    pub t: usize,
    pub alpha: Vec<f64>,
    pub b_within: Matrix,
    pub b_cross: Matrix,
    pub c_within: Matrix,
    pub c_cross: Matrix,
    pub intercepts: Vec<f64>,
    pub ordering: CausalOrdering,
    pub residual_variance: Vec<f64>,
    /// Sample sd of each outcome at `t`; used for standardized reporting.
    pub outcome_sd: Vec<f64>,
}

impl TimeEquations {
    pub fn zeros(t: usize, p: usize, q: usize) -> Self {
        TimeEquations {
            t,
            alpha: vec![0.0; p],
            b_within: Matrix::zeros(p, p),
            b_cross: Matrix::zeros(p, p),
            c_within: Matrix::zeros(p, q),
            c_cross: Matrix::zeros(p, q),
            intercepts: vec![0.0; p],
            ordering: CausalOrdering((0..p).collect()),
            residual_variance: vec![0.0; p],
            outcome_sd: vec![1.0; p],
        }
    }
}

/// `intervention(t) -> exogenous(t)` coefficient from an auxiliary regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryEquation {
    pub t: usize,
    pub variable: String,
    pub coefficient: f64,
}

/// A regressor dropped from one equation because it was constant.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DegenerateColumn {
    pub t: usize,
    pub equation: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongitudinalModel {
    pub format: String,
    pub schema: PanelSchema,
    pub intervention: String,
    pub outcomes: Vec<String>,
    pub exogenous: Vec<String>,
    pub baseline: Option<String>,
    /// Baseline covariate into the first modeled time point only.
    pub delta: Vec<f64>,
    /// One entry per modeled time point `t = 1..T`.
    pub equations: Vec<TimeEquations>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auxiliary: Option<Vec<AuxiliaryEquation>>,
    #[serde(default)]
    pub degenerate: Vec<DegenerateColumn>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FitOptions {
    /// Also regress exogenous inputs on the same-time intervention.
    pub auxiliary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Alpha,
    CWithin(usize),
    CCross(usize),
    BCross(usize),
    Delta,
}

struct Column {
    name: String,
    slot: Slot,
    values: Array1<f64>,
}

impl LongitudinalModel {
    /// All-zero model with the layout implied by `schema`.
    pub fn zeros(schema: &PanelSchema) -> Self {
        let names = |idx: Vec<usize>| -> Vec<String> {
            idx.into_iter()
                .map(|i| schema.variables[i].name.clone())
                .collect()
        };
        let outcomes = names(schema.outcomes());
        let exogenous = names(schema.exogenous());
        let (p, q) = (outcomes.len(), exogenous.len());
        LongitudinalModel {
            format: MODEL_FORMAT.to_string(),
            schema: schema.clone(),
            intervention: schema.variables[schema.intervention()].name.clone(),
            outcomes,
            exogenous,
            baseline: schema.baseline().map(|i| schema.variables[i].name.clone()),
            delta: vec![0.0; p],
            equations: (1..schema.time_points())
                .map(|t| TimeEquations::zeros(t, p, q))
                .collect(),
            auxiliary: None,
            degenerate: Vec::new(),
            provenance: Provenance {
                schema_hash: provenance::hash_json(schema).unwrap_or_default(),
                mask_hash: String::new(),
                library_version: provenance::LIBRARY_VERSION.to_string(),
            },
        }
    }

    pub fn p(&self) -> usize {
        self.outcomes.len()
    }

    pub fn q(&self) -> usize {
        self.exogenous.len()
    }

    pub fn time_points(&self) -> usize {
        self.schema.time_points()
    }

    /// Equations for modeled time `t` (1-based).
    pub fn at(&self, t: usize) -> &TimeEquations {
        &self.equations[t - 1]
    }

    pub fn at_mut(&mut self, t: usize) -> &mut TimeEquations {
        &mut self.equations[t - 1]
    }

    pub fn outcome_position(&self, name: &str) -> Option<usize> {
        self.outcomes.iter().position(|n| n == name)
    }

    pub fn exogenous_position(&self, name: &str) -> Option<usize> {
        self.exogenous.iter().position(|n| n == name)
    }

    /// Checks shapes, orderings and within-time triangularity.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        self.schema.validate()?;
        let (p, q) = (self.p(), self.q());
        if self.outcomes.len() != self.schema.outcomes().len()
            || self.exogenous.len() != self.schema.exogenous().len()
        {
            return bad("variable lists disagree with schema roles".into());
        }
        if self.delta.len() != p {
            return bad(format!("delta has length {}, expected {p}", self.delta.len()));
        }
        if self.equations.len() + 1 != self.time_points() {
            return bad(format!(
                "{} equation sets for T = {}",
                self.equations.len(),
                self.time_points()
            ));
        }
        for (k, eq) in self.equations.iter().enumerate() {
            let t = k + 1;
            if eq.t != t {
                return bad(format!("equation set {k} labelled t = {}", eq.t));
            }
            let shapes = [
                ("b_within", eq.b_within.dim(), (p, p)),
                ("b_cross", eq.b_cross.dim(), (p, p)),
                ("c_within", eq.c_within.dim(), (p, q)),
                ("c_cross", eq.c_cross.dim(), (p, q)),
            ];
            for (name, got, want) in shapes {
                if got != want {
                    return bad(format!("{name} at t = {t} has shape {got:?}, expected {want:?}"));
                }
            }
            for (name, len) in [
                ("alpha", eq.alpha.len()),
                ("intercepts", eq.intercepts.len()),
                ("residual_variance", eq.residual_variance.len()),
                ("outcome_sd", eq.outcome_sd.len()),
            ] {
                if len != p {
                    return bad(format!("{name} at t = {t} has length {len}, expected {p}"));
                }
            }
            let mut seen = vec![false; p];
            for &i in eq.ordering.as_slice() {
                if i >= p || std::mem::replace(&mut seen[i], true) {
                    return bad(format!("ordering at t = {t} is not a permutation"));
                }
            }
            if eq.ordering.as_slice().len() != p {
                return bad(format!("ordering at t = {t} is not a permutation"));
            }
            for (pos, &i) in eq.ordering.as_slice().iter().enumerate() {
                for &j in &eq.ordering.as_slice()[pos..] {
                    if eq.b_within[[i, j]] != 0.0 {
                        return bad(format!(
                            "b_within at t = {t} has edge {} -> {} against the ordering",
                            self.outcomes[j], self.outcomes[i]
                        ));
                    }
                }
            }
        }
        if let Some(aux) = &self.auxiliary {
            for a in aux {
                if a.t == 0 || a.t >= self.time_points() || self.exogenous_position(&a.variable).is_none() {
                    return bad(format!("auxiliary equation for {} at t = {}", a.variable, a.t));
                }
            }
        }
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: LongitudinalModel = serde_json::from_str(text)?;
        if model.format != MODEL_FORMAT {
            return Err(Error::InvalidModel(format!("unsupported format `{}`", model.format)));
        }
        model.validate()?;
        Ok(model)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn fit(panel: &Panel, mask: &PkMask) -> Result<LongitudinalModel> {
    fit_with(panel, mask, FitOptions::default())
}

pub fn fit_with(panel: &Panel, mask: &PkMask, options: FitOptions) -> Result<LongitudinalModel> {
    let schema = panel.schema();
    mask.check_dimensions(schema)?;
    let report = validate_mask(mask, schema)?;
    if !report.is_admissible() {
        return Err(Error::InvalidMask(format!("{:?}", report.violations)));
    }
    let mut model = LongitudinalModel::zeros(schema);
    model.provenance.mask_hash = provenance::hash_json(&mask.to_file())?;

    let outcomes = schema.outcomes();
    let exogenous = schema.exogenous();
    let v = schema.intervention();
    let w = schema.baseline();
    let data = panel.data();
    let col = |var: usize, t: usize| data.slice(s![.., var, t]).to_owned();
    let label = |var: usize, t: usize| format!("{}(t{})", schema.variables[var].name, t);
    let mut aux = Vec::new();

    for t in 1..schema.time_points() {
        let within = mask.within(t);
        let cross = mask.cross(t, 1);

        let mut columns = vec![Column {
            name: label(v, t),
            slot: Slot::Alpha,
            values: col(v, t),
        }];
        for (k, &z) in exogenous.iter().enumerate() {
            columns.push(Column {
                name: label(z, t),
                slot: Slot::CWithin(k),
                values: col(z, t),
            });
        }
        for (k, &z) in exogenous.iter().enumerate() {
            columns.push(Column {
                name: label(z, t - 1),
                slot: Slot::CCross(k),
                values: col(z, t - 1),
            });
        }
        for (j, &x) in outcomes.iter().enumerate() {
            columns.push(Column {
                name: label(x, t - 1),
                slot: Slot::BCross(j),
                values: col(x, t - 1),
            });
        }
        if let (Some(w), 1) = (w, t) {
            columns.push(Column {
                name: label(w, 0),
                slot: Slot::Delta,
                values: col(w, 0),
            });
        }
        let parent_of = |slot: Slot| match slot {
            Slot::Alpha => (v, false),
            Slot::CWithin(k) => (exogenous[k], false),
            Slot::CCross(k) => (exogenous[k], true),
            Slot::BCross(j) => (outcomes[j], true),
            Slot::Delta => (w.expect("delta slot implies baseline"), true),
        };
        let admissible = |child: usize, c: &Column| {
            let (parent, lagged) = parent_of(c.slot);
            if lagged {
                cross.allows(child, parent)
            } else {
                within.allows(child, parent)
            }
        };

        // adjustment: every column admissible for at least one outcome
        let union: Vec<usize> = (0..columns.len())
            .filter(|&c| outcomes.iter().any(|&x| admissible(x, &columns[c])))
            .collect();
        let design = stack(union.iter().map(|&c| &columns[c].values), panel.n_subjects());
        let names: Vec<String> = union.iter().map(|&c| columns[c].name.clone()).collect();
        let adjust = LeastSquares::new(design.view(), &names)?;
        let mut residuals = Array2::zeros((panel.n_subjects(), outcomes.len()));
        for (i, &x) in outcomes.iter().enumerate() {
            residuals
                .column_mut(i)
                .assign(&adjust.fit(data.slice(s![.., x, t])).residuals);
        }

        let sub = within.submask(&outcomes);
        let ordering = discovery::fit_within_time(residuals.view(), &sub)?.ordering;

        let mut eq = TimeEquations::zeros(t, outcomes.len(), exogenous.len());
        for (pos, &i) in ordering.as_slice().iter().enumerate() {
            let xi = outcomes[i];
            let parents: Vec<usize> = ordering.as_slice()[..pos]
                .iter()
                .copied()
                .filter(|&j| sub.allows(i, j))
                .collect();
            let adj: Vec<usize> = (0..columns.len())
                .filter(|&c| admissible(xi, &columns[c]))
                .collect();
            let parent_values: Vec<Array1<f64>> = parents.iter().map(|&j| col(outcomes[j], t)).collect();
            let design = stack(
                parent_values.iter().chain(adj.iter().map(|&c| &columns[c].values)),
                panel.n_subjects(),
            );
            let names: Vec<String> = parents
                .iter()
                .map(|&j| label(outcomes[j], t))
                .chain(adj.iter().map(|&c| columns[c].name.clone()))
                .collect();
            let ls = LeastSquares::new(design.view(), &names)?;
            for &c in ls.constant_columns() {
                model.degenerate.push(DegenerateColumn {
                    t,
                    equation: schema.variables[xi].name.clone(),
                    column: names[c].clone(),
                });
            }
            let y = data.slice(s![.., xi, t]);
            let fit = ls.fit(y);
            let coef = &fit.coefficients;
            for (c, &j) in parents.iter().enumerate() {
                eq.b_within[[i, j]] = coef[c];
            }
            for (c, &a) in adj.iter().enumerate() {
                let beta = coef[parents.len() + c];
                match columns[a].slot {
                    Slot::Alpha => eq.alpha[i] = beta,
                    Slot::CWithin(k) => eq.c_within[[i, k]] = beta,
                    Slot::CCross(k) => eq.c_cross[[i, k]] = beta,
                    Slot::BCross(j) => eq.b_cross[[i, j]] = beta,
                    Slot::Delta => model.delta[i] = beta,
                }
            }
            eq.intercepts[i] = fit.intercept;
            eq.residual_variance[i] = fit.residual_variance();
            eq.outcome_sd[i] = linalg::sd(y);
        }
        eq.ordering = ordering;
        *model.at_mut(t) = eq;

        if options.auxiliary {
            for &z in &exogenous {
                if !within.allows(z, v) {
                    continue;
                }
                let mut regs: Vec<(String, Array1<f64>)> = vec![(label(v, t), col(v, t))];
                for &z2 in &exogenous {
                    if z2 != z && within.allows(z, z2) {
                        regs.push((label(z2, t), col(z2, t)));
                    }
                }
                for &prev in exogenous.iter().chain(outcomes.iter()) {
                    if cross.allows(z, prev) {
                        regs.push((label(prev, t - 1), col(prev, t - 1)));
                    }
                }
                if let (Some(w), 1) = (w, t) {
                    if cross.allows(z, w) {
                        regs.push((label(w, 0), col(w, 0)));
                    }
                }
                let design = stack(regs.iter().map(|(_, c)| c), panel.n_subjects());
                let names: Vec<String> = regs.iter().map(|(n, _)| n.clone()).collect();
                let ls = LeastSquares::new(design.view(), &names)?;
                for &c in ls.constant_columns() {
                    model.degenerate.push(DegenerateColumn {
                        t,
                        equation: schema.variables[z].name.clone(),
                        column: names[c].clone(),
                    });
                }
                aux.push(AuxiliaryEquation {
                    t,
                    variable: schema.variables[z].name.clone(),
                    coefficient: ls.fit(data.slice(s![.., z, t])).coefficients[0],
                });
            }
        }
    }
    if options.auxiliary {
        model.auxiliary = Some(aux);
    }
    Ok(model)
}

fn stack<'a>(cols: impl Iterator<Item = &'a Array1<f64>>, n: usize) -> Array2<f64> {
    let cols: Vec<&Array1<f64>> = cols.collect();
    let mut out = Array2::zeros((n, cols.len()));
    for (c, v) in cols.into_iter().enumerate() {
        out.column_mut(c).assign(v);
    }
    out
}

/// One-step prediction of all outcomes at `t`, solving the within-time
/// system in causal order.
#[allow(clippy::too_many_arguments)]
pub fn predict_one_step(
    model: &LongitudinalModel,
    t: usize,
    x_prev: ArrayView1<'_, f64>,
    v: f64,
    z: ArrayView1<'_, f64>,
    z_prev: ArrayView1<'_, f64>,
    w: Option<f64>,
) -> Result<Array1<f64>> {
    if t == 0 || t >= model.time_points() {
        return Err(Error::OutOfRange {
            index: t,
            time_points: model.time_points(),
        });
    }
    let (p, q) = (model.p(), model.q());
    if x_prev.len() != p || z.len() != q || z_prev.len() != q {
        return Err(Error::DimensionMismatch(format!(
            "expected {p} outcomes and {q} exogenous inputs"
        )));
    }
    let w = match (t, w) {
        (1, w) if model.baseline.is_some() => {
            w.ok_or_else(|| Error::InvalidConfig("baseline value required at t = 1".into()))?
        }
        (_, None) => 0.0,
        (_, Some(_)) => {
            return Err(Error::InvalidConfig("baseline value only enters at t = 1".into()))
        }
    };
    let eq = model.at(t);
    let mut rhs = Array1::from(eq.intercepts.clone());
    rhs.scaled_add(v, &Array1::from(eq.alpha.clone()));
    rhs += &eq.b_cross.dot(&x_prev);
    rhs += &eq.c_within.dot(&z);
    rhs += &eq.c_cross.dot(&z_prev);
    if t == 1 {
        rhs.scaled_add(w, &Array1::from(model.delta.clone()));
    }
    let mut x = Array1::zeros(p);
    for &i in eq.ordering.as_slice() {
        let mut xi = rhs[i];
        for j in 0..p {
            xi += eq.b_within[[i, j]] * x[j];
        }
        x[i] = xi;
    }
    Ok(x)
}
