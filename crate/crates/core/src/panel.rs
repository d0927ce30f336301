//! Panel data model: variable roles, workflow-aligned time indexing and
//! long-format CSV ingestion.
//!
//! A [`Panel`] is a dense `subjects × variables × time points` tensor. It is
//! immutable once built; every downstream stage reads from shared references.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Role of a variable in the longitudinal structural model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Binary exposure indicator `v`.
    Intervention,
    /// Continuous endogenous outcome `x`, subject to within-time discovery.
    Outcome,
    /// Observed input `z` (medication, lifestyle, demographics).
    ExogenousInput,
    /// Covariate `w` observed only at time point 0.
    BaselineOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueType {
    Binary,
    Continuous,
    /// Integer-coded category entered as a single numeric regressor.
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub role: Role,
    pub value_type: ValueType,
}

impl Variable {
    pub fn new(name: impl Into<String>, role: Role, value_type: ValueType) -> Self {
        Self {
            name: name.into(),
            role,
            value_type,
        }
    }
}

/// Ordered variable list plus calendar labels of the modeled time points.
///
/// Variable order is fixed and shared by every tensor and mask built on top of
/// the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub variables: Vec<Variable>,
    pub time_labels: Vec<i32>,
}

impl PanelSchema {
    pub fn new(variables: Vec<Variable>, time_labels: Vec<i32>) -> Result<Self> {
        let schema = Self {
            variables,
            time_labels,
        };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        if self.time_labels.len() < 2 {
            return Err(Error::InvalidSchema(format!(
                "at least 2 time points required, got {}",
                self.time_labels.len()
            )));
        }
        if self.time_labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchema(
                "time labels must be strictly increasing".into(),
            ));
        }
        let mut seen = HashSet::new();
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::InvalidSchema(format!(
                    "duplicate variable name `{}`",
                    v.name
                )));
            }
            match (v.role, v.value_type) {
                (Role::Intervention, ValueType::Binary) => {}
                (Role::Intervention, _) => {
                    return Err(Error::InvalidSchema(format!(
                        "intervention `{}` must be binary",
                        v.name
                    )))
                }
                (Role::Outcome, ValueType::Continuous) => {}
                (Role::Outcome, _) => {
                    return Err(Error::InvalidSchema(format!(
                        "outcome `{}` must be continuous",
                        v.name
                    )))
                }
                _ => {}
            }
        }
        let count = |role| self.variables.iter().filter(|v| v.role == role).count();
        if count(Role::Intervention) != 1 {
            return Err(Error::InvalidSchema(format!(
                "exactly one intervention variable required, got {}",
                count(Role::Intervention)
            )));
        }
        if count(Role::Outcome) == 0 {
            return Err(Error::InvalidSchema("no outcome variables".into()));
        }
        if count(Role::BaselineOnly) > 1 {
            return Err(Error::InvalidSchema(
                "at most one baseline-only variable is supported".into(),
            ));
        }
        Ok(())
    }

    pub fn n_variables(&self) -> usize {
        self.variables.len()
    }

    pub fn time_points(&self) -> usize {
        self.time_labels.len()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn require_index(&self, name: &str) -> Result<usize> {
        self.index_of(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn indices_with_role(&self, role: Role) -> Vec<usize> {
        self.variables
            .iter()
            .enumerate()
            .filter(|(_, v)| v.role == role)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn intervention(&self) -> usize {
        self.indices_with_role(Role::Intervention)[0]
    }

    pub fn outcomes(&self) -> Vec<usize> {
        self.indices_with_role(Role::Outcome)
    }

    pub fn exogenous(&self) -> Vec<usize> {
        self.indices_with_role(Role::ExogenousInput)
    }

    pub fn baseline(&self) -> Option<usize> {
        self.indices_with_role(Role::BaselineOnly).first().copied()
    }

    /// Layout-only cells: the intervention at time 0 and the baseline-only
    /// covariate after time 0. They exist in the tensor but never enter a fit.
    pub fn is_excluded_from_fit(&self, var: usize, t: usize) -> bool {
        match self.variables[var].role {
            Role::Intervention => t == 0,
            Role::BaselineOnly => t > 0,
            _ => false,
        }
    }

    pub fn is_binary(&self, var: usize) -> bool {
        self.variables[var].value_type == ValueType::Binary
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }
}

/// Audit trail of complete-case ingestion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestAudit {
    pub dropped_subjects: usize,
    pub dropped_ids: Vec<String>,
}

/// Dense, complete analytic panel. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    schema: PanelSchema,
    data: Array3<f64>,
    subject_ids: Vec<String>,
    audit: IngestAudit,
}

impl Panel {
    /// Builds a panel from a dense `[subjects, variables, time]` tensor.
    ///
    /// Baseline-only values at `t > 0` are overwritten with the carried
    /// time-0 value.
    pub fn new(schema: PanelSchema, mut data: Array3<f64>, subject_ids: Vec<String>) -> Result<Self> {
        schema.validate()?;
        let (n, p, t) = data.dim();
        if p != schema.n_variables() || t != schema.time_points() {
            return Err(Error::DimensionMismatch(format!(
                "tensor has shape ({n}, {p}, {t}) but schema declares {} variables and {} time points",
                schema.n_variables(),
                schema.time_points()
            )));
        }
        if subject_ids.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} subject ids for {n} subjects",
                subject_ids.len()
            )));
        }
        if n == 0 {
            return Err(Error::EmptyPanel { dropped: 0 });
        }
        for (j, var) in schema.variables.iter().enumerate() {
            for s in 0..n {
                for tt in 0..t {
                    let value = data[[s, j, tt]];
                    if !value.is_finite() {
                        return Err(Error::InvalidSchema(format!(
                            "non-finite value for `{}`",
                            var.name
                        )));
                    }
                    if var.value_type == ValueType::Binary && value != 0.0 && value != 1.0 {
                        return Err(Error::BinaryDomainViolation {
                            variable: var.name.clone(),
                            value,
                        });
                    }
                }
            }
        }
        if let Some(w) = schema.baseline() {
            for s in 0..n {
                let carried = data[[s, w, 0]];
                for tt in 1..t {
                    data[[s, w, tt]] = carried;
                }
            }
        }
        Ok(Self {
            schema,
            data,
            subject_ids,
            audit: IngestAudit::default(),
        })
    }

    pub fn schema(&self) -> &PanelSchema {
        &self.schema
    }

    pub fn data(&self) -> ArrayView3<'_, f64> {
        self.data.view()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn audit(&self) -> &IngestAudit {
        &self.audit
    }

    pub fn n_subjects(&self) -> usize {
        self.data.dim().0
    }

    pub fn time_points(&self) -> usize {
        self.data.dim().2
    }

    pub fn value(&self, subject: usize, var: usize, t: usize) -> f64 {
        self.data[[subject, var, t]]
    }

    /// All variables at time `t`, shape `[subjects, variables]`.
    pub fn slice_time(&self, t: usize) -> Result<ArrayView2<'_, f64>> {
        if t >= self.time_points() {
            return Err(Error::OutOfRange {
                index: t,
                time_points: self.time_points(),
            });
        }
        Ok(self.data.index_axis(Axis(2), t))
    }

    /// A new panel made of the given subject rows (repeats allowed).
    pub fn select_subjects(&self, rows: &[usize]) -> Panel {
        let data = self.data.select(Axis(0), rows);
        let subject_ids = rows.iter().map(|&r| self.subject_ids[r].clone()).collect();
        Panel {
            schema: self.schema.clone(),
            data,
            subject_ids,
            audit: IngestAudit::default(),
        }
    }

    pub fn meta(&self) -> PanelMeta {
        PanelMeta {
            schema: self.schema.clone(),
            n_subjects: self.n_subjects(),
            time_points: self.time_points(),
            audit: self.audit.clone(),
        }
    }
}

/// Contents of `panel.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelMeta {
    pub schema: PanelSchema,
    pub n_subjects: usize,
    pub time_points: usize,
    pub audit: IngestAudit,
}

#[derive(Debug, Deserialize)]
struct LongRow {
    subject_id: String,
    time_index: String,
    variable: String,
    value: String,
}

/// Reads a long-format CSV (`subject_id,time_index,variable,value`).
///
/// Subjects missing any required cell are dropped and counted. The
/// intervention at time 0 defaults to 0 when absent; baseline-only values
/// after time 0 are carried from time 0.
pub fn ingest_long_csv(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<Panel> {
    let file = std::fs::File::open(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    ingest_long_reader(file, schema)
}

pub fn ingest_long_reader<R: Read>(reader: R, schema: &PanelSchema) -> Result<Panel> {
    schema.validate()?;
    let p = schema.n_variables();
    let big_t = schema.time_points();
    let name_index: HashMap<&str, usize> = schema
        .variables
        .iter()
        .enumerate()
        .map(|(i, v)| (v.name.as_str(), i))
        .collect();

    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, Vec<Option<f64>>> = HashMap::new();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: LongRow = record.deserialize(Some(&headers))?;
        let var = *name_index
            .get(row.variable.as_str())
            .ok_or_else(|| Error::UnknownVariable(row.variable.clone()))?;
        let t: usize = row.time_index.parse().map_err(|_| Error::NonNumeric {
            value: row.time_index.clone(),
            line,
        })?;
        if t >= big_t {
            return Err(Error::OutOfRange {
                index: t,
                time_points: big_t,
            });
        }
        if row.value.is_empty() {
            continue;
        }
        let value: f64 = row
            .value
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| Error::NonNumeric {
                value: row.value.clone(),
                line,
            })?;
        if schema.is_binary(var) && value != 0.0 && value != 1.0 {
            return Err(Error::BinaryDomainViolation {
                variable: row.variable,
                value,
            });
        }
        let entry = cells.entry(row.subject_id.clone()).or_insert_with(|| {
            order.push(row.subject_id.clone());
            vec![None; p * big_t]
        });
        let slot = &mut entry[var * big_t + t];
        if slot.is_some() {
            return Err(Error::DuplicateCell {
                subject: row.subject_id,
                variable: row.variable,
                time: t,
            });
        }
        *slot = Some(value);
    }

    let mut kept: Vec<(String, Vec<f64>)> = Vec::new();
    let mut audit = IngestAudit::default();
    for id in order {
        let raw = &cells[&id];
        let mut dense = vec![0.0; p * big_t];
        let mut complete = true;
        for var in 0..p {
            for t in 0..big_t {
                let cell = raw[var * big_t + t];
                dense[var * big_t + t] = match (cell, schema.variables[var].role) {
                    (_, Role::BaselineOnly) if t > 0 => 0.0,
                    (None, Role::Intervention) if t == 0 => 0.0,
                    (Some(v), _) => v,
                    (None, _) => {
                        complete = false;
                        0.0
                    }
                };
            }
        }
        if complete {
            kept.push((id, dense));
        } else {
            audit.dropped_subjects += 1;
            audit.dropped_ids.push(id);
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptyPanel {
            dropped: audit.dropped_subjects,
        });
    }
    let n = kept.len();
    let mut data = Array3::<f64>::zeros((n, p, big_t));
    let mut ids = Vec::with_capacity(n);
    for (s, (id, dense)) in kept.into_iter().enumerate() {
        for var in 0..p {
            for t in 0..big_t {
                data[[s, var, t]] = dense[var * big_t + t];
            }
        }
        ids.push(id);
    }
    let mut panel = Panel::new(schema.clone(), data, ids)?;
    panel.audit = audit;
    Ok(panel)
}

/// Writes the panel in the long format accepted by [`ingest_long_csv`].
/// Values use the shortest round-trip decimal form, so re-ingestion is
/// bit-exact.
pub fn write_long_csv<W: Write>(panel: &Panel, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject_id", "time_index", "variable", "value"])?;
    let schema = panel.schema();
    for (s, id) in panel.subject_ids().iter().enumerate() {
        for t in 0..panel.time_points() {
            for (j, var) in schema.variables.iter().enumerate() {
                let t_str = t.to_string();
                let v_str = panel.value(s, j, t).to_string();
                wtr.write_record([id.as_str(), t_str.as_str(), var.name.as_str(), v_str.as_str()])?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CellStats {
    Continuous { mean: f64, sd: f64 },
    Binary { prevalence: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSummary {
    pub name: String,
    pub role: Role,
    /// One entry per time point.
    pub per_time: Vec<CellStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelSummary {
    pub n_subjects: usize,
    pub time_points: usize,
    pub person_years: usize,
    pub variables: Vec<VariableSummary>,
}

pub fn summarize(panel: &Panel) -> PanelSummary {
    let n = panel.n_subjects();
    let big_t = panel.time_points();
    let data = panel.data();
    let variables = panel
        .schema()
        .variables
        .iter()
        .enumerate()
        .map(|(j, var)| {
            let per_time = (0..big_t)
                .map(|t| {
                    let col = data.slice(ndarray::s![.., j, t]);
                    let mean = col.sum() / n as f64;
                    match var.value_type {
                        ValueType::Binary => CellStats::Binary { prevalence: mean },
                        _ => {
                            let sd = if n > 1 {
                                (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                                    / (n - 1) as f64)
                                    .sqrt()
                            } else {
                                0.0
                            };
                            CellStats::Continuous { mean, sd }
                        }
                    }
                })
                .collect();
            VariableSummary {
                name: var.name.clone(),
                role: var.role,
                per_time,
            }
        })
        .collect();
    PanelSummary {
        n_subjects: n,
        time_points: big_t,
        person_years: n * big_t,
        variables,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_schema() -> PanelSchema {
        PanelSchema::new(
            vec![
                Variable::new("HG", Role::Intervention, ValueType::Binary),
                Variable::new("BMI", Role::Outcome, ValueType::Continuous),
                Variable::new("SBP", Role::Outcome, ValueType::Continuous),
                Variable::new("Smoke", Role::ExogenousInput, ValueType::Binary),
                Variable::new("Check", Role::BaselineOnly, ValueType::Categorical),
            ],
            vec![2020, 2021, 2022, 2023],
        )
        .unwrap()
    }

    fn full_csv(schema: &PanelSchema, subjects: &[&str]) -> String {
        let mut out = String::from("subject_id,time_index,variable,value\n");
        for (s, id) in subjects.iter().enumerate() {
            for t in 0..schema.time_points() {
                for (j, v) in schema.variables.iter().enumerate() {
                    let value = if v.value_type == ValueType::Binary {
                        ((s + j + t) % 2) as f64
                    } else {
                        (s * 10 + j + t) as f64 + 0.5
                    };
                    out.push_str(&format!("{id},{t},{},{value}\n", v.name));
                }
            }
        }
        out
    }

    #[test]
    fn schema_rejects_two_interventions() {
        let err = PanelSchema::new(
            vec![
                Variable::new("a", Role::Intervention, ValueType::Binary),
                Variable::new("b", Role::Intervention, ValueType::Binary),
                Variable::new("x", Role::Outcome, ValueType::Continuous),
            ],
            vec![1, 2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSchema(_)));
    }

    #[test]
    fn schema_rejects_non_increasing_labels() {
        let err = PanelSchema::new(
            vec![
                Variable::new("a", Role::Intervention, ValueType::Binary),
                Variable::new("x", Role::Outcome, ValueType::Continuous),
            ],
            vec![2021, 2021],
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSchema(_)));
    }

    #[test]
    fn ingest_complete_panel() {
        let schema = small_schema();
        let csv = full_csv(&schema, &["A", "B"]);
        let panel = ingest_long_reader(csv.as_bytes(), &schema).unwrap();
        assert_eq!(panel.n_subjects(), 2);
        assert_eq!(panel.audit().dropped_subjects, 0);
        assert_eq!(panel.subject_ids(), &["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn ingest_drops_incomplete_subject() {
        let schema = small_schema();
        let csv = full_csv(&schema, &["A", "B"]);
        let filtered: String = csv
            .lines()
            .filter(|l| *l != "B,2,SBP,14.5")
            .map(|l| format!("{l}\n"))
            .collect();
        assert_ne!(filtered.len(), csv.len());
        let panel = ingest_long_reader(filtered.as_bytes(), &schema).unwrap();
        assert_eq!(panel.n_subjects(), 1);
        assert_eq!(panel.audit().dropped_subjects, 1);
        assert_eq!(panel.audit().dropped_ids, vec!["B".to_string()]);
    }

    #[test]
    fn ingest_rejects_binary_violation() {
        let schema = small_schema();
        let csv = full_csv(&schema, &["A"]).replace("A,1,Smoke,0", "A,1,Smoke,2");
        let err = ingest_long_reader(csv.as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::BinaryDomainViolation { .. }));
    }

    #[test]
    fn ingest_rejects_unknown_and_non_numeric() {
        let schema = small_schema();
        let bad = "subject_id,time_index,variable,value\nA,0,LDL,1\n";
        assert!(matches!(
            ingest_long_reader(bad.as_bytes(), &schema).unwrap_err(),
            Error::UnknownVariable(_)
        ));
        let bad = "subject_id,time_index,variable,value\nA,0,BMI,abc\n";
        assert!(matches!(
            ingest_long_reader(bad.as_bytes(), &schema).unwrap_err(),
            Error::NonNumeric { .. }
        ));
    }

    #[test]
    fn ingest_empty_result_is_error() {
        let schema = small_schema();
        let only_one = "subject_id,time_index,variable,value\nA,0,BMI,1\n";
        assert!(matches!(
            ingest_long_reader(only_one.as_bytes(), &schema).unwrap_err(),
            Error::EmptyPanel { dropped: 1 }
        ));
    }

    #[test]
    fn layout_cells_are_optional() {
        let schema = small_schema();
        let csv = full_csv(&schema, &["A"]);
        let trimmed: String = csv
            .lines()
            .filter(|l| !(l.starts_with("A,0,HG,") || (l.contains(",Check,") && !l.starts_with("A,0,"))))
            .map(|l| format!("{l}\n"))
            .collect();
        let panel = ingest_long_reader(trimmed.as_bytes(), &schema).unwrap();
        assert_eq!(panel.n_subjects(), 1);
        let w = schema.baseline().unwrap();
        for t in 1..4 {
            assert_eq!(panel.value(0, w, t), panel.value(0, w, 0));
        }
        assert_eq!(panel.value(0, schema.intervention(), 0), 0.0);
    }

    fn index_panel() -> Panel {
        let schema = small_schema();
        let mut data = Array3::<f64>::zeros((3, 5, 4));
        for s in 0..3 {
            for j in [1usize, 2] {
                for t in 0..4 {
                    data[[s, j, t]] = (s + j + t) as f64;
                }
            }
        }
        Panel::new(schema, data, vec!["a".into(), "b".into(), "c".into()]).unwrap()
    }

    #[test]
    fn slice_time_indexes() {
        let panel = index_panel();
        let m = panel.slice_time(1).unwrap();
        assert_eq!(m.dim(), (3, 5));
        // x[s=0, j=2, t=1] = 0 + 2 + 1
        assert_eq!(m[[0, 2]], 3.0);
        let base = panel.slice_time(0).unwrap();
        assert_eq!(base[[2, 1]], 3.0);
        assert!(matches!(
            panel.slice_time(4).unwrap_err(),
            Error::OutOfRange { index: 4, time_points: 4 }
        ));
    }

    #[test]
    fn summary_counts() {
        let panel = index_panel();
        let summary = summarize(&panel);
        assert_eq!(summary.person_years, 12);
        // HG column is all zeros
        assert_eq!(summary.variables[0].per_time[2], CellStats::Binary { prevalence: 0.0 });
        match &summary.variables[1].per_time[0] {
            CellStats::Continuous { mean, sd } => {
                assert_eq!(*mean, 2.0);
                assert!((sd - 1.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn summary_single_subject_two_times() {
        let schema = PanelSchema::new(
            vec![
                Variable::new("v", Role::Intervention, ValueType::Binary),
                Variable::new("x", Role::Outcome, ValueType::Continuous),
            ],
            vec![1, 2],
        )
        .unwrap();
        let panel = Panel::new(schema, Array3::zeros((1, 2, 2)), vec!["s".into()]).unwrap();
        assert_eq!(summarize(&panel).person_years, 2);
    }

    #[test]
    fn summary_cohort_person_years() {
        let schema = PanelSchema::new(
            vec![
                Variable::new("v", Role::Intervention, ValueType::Binary),
                Variable::new("x", Role::Outcome, ValueType::Continuous),
            ],
            vec![2020, 2021, 2022, 2023],
        )
        .unwrap();
        let n = 107_261;
        let ids = (0..n).map(|i| i.to_string()).collect();
        let panel = Panel::new(schema, Array3::zeros((n, 2, 4)), ids).unwrap();
        assert_eq!(summarize(&panel).person_years, 429_044);
    }

    #[test]
    fn emit_then_ingest_is_bit_exact() {
        let schema = small_schema();
        let mut data = Array3::<f64>::zeros((2, 5, 4));
        for s in 0..2 {
            for t in 0..4 {
                data[[s, 1, t]] = 0.1 + 1.0 / 3.0 * (s + t) as f64;
                data[[s, 2, t]] = -1e-17 * (t as f64 + 1.0) + 123.456789;
                data[[s, 3, t]] = ((s + t) % 2) as f64;
                data[[s, 4, t]] = 2.0;
            }
        }
        let panel = Panel::new(schema.clone(), data, vec!["x1".into(), "x2".into()]).unwrap();
        let mut buf = Vec::new();
        write_long_csv(&panel, &mut buf).unwrap();
        let back = ingest_long_reader(buf.as_slice(), &schema).unwrap();
        assert_eq!(back, panel);
    }
}
