//! Recurring within-time structure among outcomes.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::LongitudinalModel;

pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientScale {
    /// `b[j, i] * sd(x_i) / sd(x_j)` at each time point.
    Standardized,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Motif {
    pub threshold: f64,
    pub scale: CoefficientScale,
    pub time_points: Vec<usize>,
    /// `(from, to)` pairs oriented the same way at every time point.
    pub directed: Vec<(String, String)>,
    /// Pairs adjacent at every time point with varying direction.
    pub undirected: Vec<(String, String)>,
}

/// Applies the recurrence rule to a sequence of within-time matrices
/// (`b[[child, parent]]`, one per time point).
pub fn motif_from_sequence(names: &[String], sequence: &[Array2<f64>], threshold: f64) -> Result<Motif> {
    if sequence.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "motif needs at least 2 fitted time points, got {}",
            sequence.len()
        )));
    }
    if !(threshold >= 0.0) {
        return Err(Error::InvalidConfig(format!("edge threshold {threshold} is negative")));
    }
    let p = names.len();
    if let Some(b) = sequence.iter().find(|b| b.dim() != (p, p)) {
        return Err(Error::DimensionMismatch(format!(
            "{p} outcomes but matrix is {:?}",
            b.dim()
        )));
    }
    let present = |b: &Array2<f64>, from: usize, to: usize| b[[to, from]].abs() > threshold;
    let mut directed = Vec::new();
    let mut undirected = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            let forward: Vec<bool> = sequence.iter().map(|b| present(b, i, j)).collect();
            let backward: Vec<bool> = sequence.iter().map(|b| present(b, j, i)).collect();
            if !forward.iter().zip(&backward).all(|(f, b)| *f || *b) {
                continue;
            }
            if forward.iter().all(|&f| f) && backward.iter().all(|&b| !b) {
                directed.push((names[i].clone(), names[j].clone()));
            } else if backward.iter().all(|&b| b) && forward.iter().all(|&f| !f) {
                directed.push((names[j].clone(), names[i].clone()));
            } else {
                undirected.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    directed.sort_by_key(|(a, b)| {
        (
            names.iter().position(|n| n == a),
            names.iter().position(|n| n == b),
        )
    });
    Ok(Motif {
        threshold,
        scale: CoefficientScale::Raw,
        time_points: (1..=sequence.len()).collect(),
        directed,
        undirected,
    })
}

pub fn extract_motif(model: &LongitudinalModel, threshold: f64, scale: CoefficientScale) -> Result<Motif> {
    let sequence: Vec<Array2<f64>> = model
        .equations
        .iter()
        .map(|eq| match scale {
            CoefficientScale::Raw => eq.b_within.0.clone(),
            CoefficientScale::Standardized => {
                let sd = &eq.outcome_sd;
                Array2::from_shape_fn(eq.b_within.dim(), |(c, p)| {
                    if sd[c] > 0.0 {
                        eq.b_within[[c, p]] * sd[p] / sd[c]
                    } else {
                        eq.b_within[[c, p]]
                    }
                })
            }
        })
        .collect();
    let mut motif = motif_from_sequence(&model.outcomes, &sequence, threshold)?;
    motif.scale = scale;
    motif.time_points = model.equations.iter().map(|e| e.t).collect();
    Ok(motif)
}

/// Graphviz rendering; undirected edges drawn without arrowheads.
pub fn to_dot(motif: &Motif) -> String {
    let mut out = String::from("digraph motif {\n  rankdir=LR;\n");
    let mut nodes: Vec<&String> = motif
        .directed
        .iter()
        .chain(&motif.undirected)
        .flat_map(|(a, b)| [a, b])
        .collect();
    nodes.dedup();
    let mut seen = std::collections::BTreeSet::new();
    for n in nodes {
        if seen.insert(n) {
            let _ = writeln!(out, "  \"{n}\";");
        }
    }
    for (a, b) in &motif.directed {
        let _ = writeln!(out, "  \"{a}\" -> \"{b}\";");
    }
    for (a, b) in &motif.undirected {
        let _ = writeln!(out, "  \"{a}\" -> \"{b}\" [dir=none, style=dashed];");
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn names() -> Vec<String> {
        ["BMI", "SBP", "DBP"].iter().map(|s| s.to_string()).collect()
    }

    fn with_edges(edges: &[(usize, usize, f64)]) -> Array2<f64> {
        let mut b = Array2::zeros((3, 3));
        for &(from, to, c) in edges {
            b[[to, from]] = c;
        }
        b
    }

    #[test]
    fn constant_edge_is_directed() {
        let b = with_edges(&[(0, 1, 0.4)]);
        let m = motif_from_sequence(&names(), &[b.clone(), b.clone(), b], 0.01).unwrap();
        assert_eq!(m.directed, vec![("BMI".to_string(), "SBP".to_string())]);
        assert!(m.undirected.is_empty());
    }

    #[test]
    fn flipping_direction_is_undirected() {
        let seq = [
            with_edges(&[(1, 2, 0.5)]),
            with_edges(&[(2, 1, 0.6)]),
            with_edges(&[(2, 1, 0.7)]),
        ];
        let m = motif_from_sequence(&names(), &seq, 0.01).unwrap();
        assert!(m.directed.is_empty());
        assert_eq!(m.undirected, vec![("SBP".to_string(), "DBP".to_string())]);
    }

    #[test]
    fn intermittent_edge_is_excluded() {
        let seq = [with_edges(&[(0, 2, 0.5)]), with_edges(&[]), with_edges(&[])];
        let m = motif_from_sequence(&names(), &seq, 0.01).unwrap();
        assert!(m.directed.is_empty() && m.undirected.is_empty());
    }

    #[test]
    fn below_threshold_is_absent_and_single_time_point_rejected() {
        let b = with_edges(&[(0, 1, 0.005)]);
        let m = motif_from_sequence(&names(), &[b.clone(), b.clone()], 0.01).unwrap();
        assert!(m.directed.is_empty());
        assert!(motif_from_sequence(&names(), &[b], 0.01).is_err());
    }

    #[test]
    fn dot_output_marks_undirected() {
        let seq = [with_edges(&[(0, 1, 0.5), (1, 2, 0.3)]), with_edges(&[(0, 1, 0.5), (2, 1, 0.3)])];
        let m = motif_from_sequence(&names(), &seq, 0.01).unwrap();
        let dot = to_dot(&m);
        assert!(dot.contains("\"BMI\" -> \"SBP\";"));
        assert!(dot.contains("\"SBP\" -> \"DBP\" [dir=none, style=dashed];"));
    }

    fn seq_strategy() -> impl Strategy<Value = Vec<Array2<f64>>> {
        prop::collection::vec(
            prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], 9)
                .prop_map(|v| Array2::from_shape_vec((3, 3), v).unwrap()),
            2..5,
        )
    }

    proptest! {
        #[test]
        fn raising_threshold_never_adds_edges(seq in seq_strategy(), lo in 0.0f64..0.5, d in 0.0f64..0.5) {
            let a = motif_from_sequence(&names(), &seq, lo).unwrap();
            let b = motif_from_sequence(&names(), &seq, lo + d).unwrap();
            let adj = |m: &Motif| -> Vec<(String, String)> {
                m.directed.iter().map(|(x, y)| if names().iter().position(|n| n == x) < names().iter().position(|n| n == y) { (x.clone(), y.clone()) } else { (y.clone(), x.clone()) })
                    .chain(m.undirected.iter().cloned()).collect()
            };
            let (aa, bb) = (adj(&a), adj(&b));
            prop_assert!(bb.iter().all(|e| aa.contains(e)));
        }

        #[test]
        fn time_constant_dag_has_no_undirected(v in prop::collection::vec(prop_oneof![Just(0.0), -1.0f64..1.0], 3)) {
            let b = with_edges(&[(0, 1, v[0]), (0, 2, v[1]), (1, 2, v[2])]);
            let m = motif_from_sequence(&names(), &[b.clone(), b.clone(), b.clone()], 0.01).unwrap();
            prop_assert!(m.undirected.is_empty());
            let expected = [(0, 1), (0, 2), (1, 2)].iter().zip(&v).filter(|(_, c)| c.abs() > 0.01).count();
            prop_assert_eq!(m.directed.len(), expected);
        }
    }
}
