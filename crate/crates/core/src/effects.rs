//! Total effects through the time-stacked linear system.

use std::collections::HashMap;
use std::io::Write;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::LongitudinalModel;

/// Path enumeration is exponential; refuse beyond this many nodes.
pub const ORACLE_NODE_LIMIT: usize = 16;

/// A variable at a time point. `variable` indexes the schema.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub variable: usize,
    pub time: usize,
}

impl NodeId {
    pub fn new(variable: usize, time: usize) -> Self {
        NodeId { variable, time }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SystemLabels {
    pub variables: Vec<String>,
    pub intervention: usize,
    pub outcomes: Vec<usize>,
    pub time_points: usize,
}

/// `a[[child, parent]]` over all stacked nodes, plus a topological order.
#[derive(Debug, Clone)]
pub struct StackedSystem {
    nodes: Vec<NodeId>,
    index: HashMap<NodeId, usize>,
    a: Array2<f64>,
    topo: Vec<usize>,
    labels: Option<SystemLabels>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TotalEffect {
    pub source: NodeId,
    pub target: NodeId,
    /// `target.time - source.time`; negative lags always carry zero effect.
    pub lag: i64,
    pub value: f64,
}

impl StackedSystem {
    /// Fails if the nonzero pattern of `a` has a cycle.
    pub fn from_matrix(nodes: Vec<NodeId>, a: Array2<f64>) -> Result<Self> {
        let n = nodes.len();
        if a.dim() != (n, n) {
            return Err(Error::DimensionMismatch(format!(
                "{n} nodes but coefficient matrix is {:?}",
                a.dim()
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, node) in nodes.iter().enumerate() {
            if index.insert(*node, i).is_some() {
                return Err(Error::InvalidModel(format!("duplicate node {node:?}")));
            }
        }
        let topo = topological_order(&a)
            .ok_or_else(|| Error::InvalidModel("stacked system contains a cycle".into()))?;
        Ok(StackedSystem {
            nodes,
            index,
            a,
            topo,
            labels: None,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }

    pub fn node_index(&self, node: NodeId) -> Option<usize> {
        self.index.get(&node).copied()
    }

    pub fn labels(&self) -> Option<&SystemLabels> {
        self.labels.as_ref()
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Column `source` of `(I - A)^-1` by propagation in topological order.
    pub fn effects_from(&self, source: usize) -> Array1<f64> {
        let n = self.n_nodes();
        let mut eff = Array1::zeros(n);
        eff[source] = 1.0;
        let start = self
            .topo
            .iter()
            .position(|&k| k == source)
            .expect("source is a node");
        for &node in &self.topo[start + 1..] {
            let mut acc = 0.0;
            for p in 0..n {
                let c = self.a[[node, p]];
                if c != 0.0 {
                    acc += c * eff[p];
                }
            }
            eff[node] = acc;
        }
        eff
    }

    /// `(I - A)^-1` by repeated propagation.
    pub fn inverse(&self) -> Array2<f64> {
        let n = self.n_nodes();
        let mut inv = Array2::zeros((n, n));
        for s in 0..n {
            inv.column_mut(s).assign(&self.effects_from(s));
        }
        inv
    }
}

/// Kahn's algorithm over parents; ties resolved by lowest index.
fn topological_order(a: &Array2<f64>) -> Option<Vec<usize>> {
    let n = a.nrows();
    let mut indegree: Vec<usize> = (0..n)
        .map(|c| (0..n).filter(|&p| a[[c, p]] != 0.0).count())
        .collect();
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&node) = ready.iter().next() {
        ready.remove(&node);
        order.push(node);
        for c in 0..n {
            if a[[c, node]] != 0.0 {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Stacks the fitted equations into one system.
///
/// Nodes: outcomes, exogenous inputs and the baseline covariate at time 0,
/// then the intervention, outcomes and exogenous inputs at each modeled
/// time. Exogenous nodes have no parents unless `include_auxiliary` is set.
pub fn build_stacked(model: &LongitudinalModel, include_auxiliary: bool) -> Result<StackedSystem> {
    let schema = &model.schema;
    let outcomes = schema.outcomes();
    let exogenous = schema.exogenous();
    let v = schema.intervention();
    let w = schema.baseline();
    let big_t = schema.time_points();

    let mut nodes = Vec::new();
    for var in 0..schema.n_variables() {
        if outcomes.contains(&var) || exogenous.contains(&var) || Some(var) == w {
            nodes.push(NodeId::new(var, 0));
        }
    }
    for t in 1..big_t {
        for var in 0..schema.n_variables() {
            if var == v || outcomes.contains(&var) || exogenous.contains(&var) {
                nodes.push(NodeId::new(var, t));
            }
        }
    }
    let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let n = nodes.len();
    let mut a = Array2::zeros((n, n));
    let at = |var, t| index[&NodeId::new(var, t)];

    for t in 1..big_t {
        let eq = model.at(t);
        for (i, &xi) in outcomes.iter().enumerate() {
            let child = at(xi, t);
            a[[child, at(v, t)]] = eq.alpha[i];
            for (j, &xj) in outcomes.iter().enumerate() {
                a[[child, at(xj, t)]] = eq.b_within[[i, j]];
                a[[child, at(xj, t - 1)]] = eq.b_cross[[i, j]];
            }
            for (k, &z) in exogenous.iter().enumerate() {
                a[[child, at(z, t)]] = eq.c_within[[i, k]];
                a[[child, at(z, t - 1)]] = eq.c_cross[[i, k]];
            }
            if let (1, Some(w)) = (t, w) {
                a[[child, at(w, 0)]] = model.delta[i];
            }
        }
    }
    if include_auxiliary {
        let aux = model.auxiliary.as_ref().ok_or_else(|| {
            Error::InvalidModel("auxiliary propagation requested but the model has no auxiliary equations".into())
        })?;
        for eq in aux {
            let z = schema.require_index(&eq.variable)?;
            a[[at(z, eq.t), at(v, eq.t)]] = eq.coefficient;
        }
    }
    let mut sys = StackedSystem::from_matrix(nodes, a)?;
    sys.labels = Some(SystemLabels {
        variables: schema.names(),
        intervention: v,
        outcomes,
        time_points: big_t,
    });
    Ok(sys)
}

fn require_node(sys: &StackedSystem, node: NodeId) -> Result<usize> {
    sys.node_index(node)
        .ok_or_else(|| Error::InvalidConfig(format!("node {node:?} is not in the stacked system")))
}

pub fn total_effect(sys: &StackedSystem, source: NodeId, target: NodeId) -> Result<TotalEffect> {
    let s = require_node(sys, source)?;
    let t = require_node(sys, target)?;
    Ok(TotalEffect {
        source,
        target,
        lag: target.time as i64 - source.time as i64,
        value: sys.effects_from(s)[t],
    })
}

/// Sum over explicitly enumerated directed paths of coefficient products.
pub fn oracle_total_effect(sys: &StackedSystem, source: NodeId, target: NodeId) -> Result<f64> {
    let n = sys.n_nodes();
    if n > ORACLE_NODE_LIMIT {
        return Err(Error::GraphTooLarge {
            nodes: n,
            limit: ORACLE_NODE_LIMIT,
        });
    }
    let s = require_node(sys, source)?;
    let t = require_node(sys, target)?;
    if s == t {
        return Ok(1.0);
    }
    let a = sys.a();
    let mut total = 0.0;
    // stack of (node, product so far, next child to try)
    let mut stack = vec![(s, 1.0, 0usize)];
    let mut on_path = vec![false; n];
    on_path[s] = true;
    while let Some(top) = stack.last_mut() {
        let (node, prod, next) = *top;
        if next >= n {
            on_path[node] = false;
            stack.pop();
            continue;
        }
        top.2 += 1;
        let c = a[[next, node]];
        if c == 0.0 || on_path[next] {
            continue;
        }
        if next == t {
            total += prod * c;
        } else {
            on_path[next] = true;
            stack.push((next, prod * c, 0));
        }
    }
    Ok(total)
}

/// Effects of the intervention at `anchor` on each outcome at `anchor + lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectTable {
    pub anchor: usize,
    pub horizons: Vec<usize>,
    pub outcomes: Vec<String>,
    /// `values[outcome][horizon]`.
    pub values: Vec<Vec<f64>>,
}

impl EffectTable {
    pub fn get(&self, outcome: &str, lag: usize) -> Option<f64> {
        let i = self.outcomes.iter().position(|o| o == outcome)?;
        let h = self.horizons.iter().position(|&l| l == lag)?;
        Some(self.values[i][h])
    }
}

pub fn guidance_effect_table(sys: &StackedSystem, anchor: usize, horizons: &[usize]) -> Result<EffectTable> {
    let labels = sys
        .labels()
        .ok_or_else(|| Error::InvalidConfig("system has no variable labels".into()))?;
    for &h in horizons {
        if anchor + h >= labels.time_points {
            return Err(Error::HorizonOutOfRange {
                horizon: h,
                anchor,
                time_points: labels.time_points,
            });
        }
    }
    let src = require_node(sys, NodeId::new(labels.intervention, anchor))?;
    let eff = sys.effects_from(src);
    let values = labels
        .outcomes
        .iter()
        .map(|&x| {
            horizons
                .iter()
                .map(|&h| eff[sys.node_index(NodeId::new(x, anchor + h)).expect("outcome node")])
                .collect()
        })
        .collect();
    Ok(EffectTable {
        anchor,
        horizons: horizons.to_vec(),
        outcomes: labels.outcomes.iter().map(|&x| labels.variables[x].clone()).collect(),
        values,
    })
}

/// One row of `effects.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectRow {
    pub source: String,
    pub target: String,
    pub lag: usize,
    pub estimate: f64,
}

/// Effects from every source variable at `anchor` to every outcome at each horizon.
pub fn effect_rows(sys: &StackedSystem, anchor: usize, horizons: &[usize]) -> Result<Vec<EffectRow>> {
    let labels = sys
        .labels()
        .ok_or_else(|| Error::InvalidConfig("system has no variable labels".into()))?;
    for &h in horizons {
        if anchor + h >= labels.time_points {
            return Err(Error::HorizonOutOfRange {
                horizon: h,
                anchor,
                time_points: labels.time_points,
            });
        }
    }
    let mut rows = Vec::new();
    for (var, name) in labels.variables.iter().enumerate() {
        let Some(src) = sys.node_index(NodeId::new(var, anchor)) else {
            continue;
        };
        let eff = sys.effects_from(src);
        for &x in &labels.outcomes {
            for &h in horizons {
                let tgt = sys.node_index(NodeId::new(x, anchor + h)).expect("outcome node");
                if tgt == src {
                    continue;
                }
                rows.push(EffectRow {
                    source: name.clone(),
                    target: labels.variables[x].clone(),
                    lag: h,
                    estimate: eff[tgt],
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_effects_csv<W: Write>(rows: &[EffectRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("effects.csv", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn chain3() -> StackedSystem {
        let nodes = (0..3).map(|i| NodeId::new(i, 0)).collect();
        let mut a = Array2::zeros((3, 3));
        a[[1, 0]] = 2.0;
        a[[2, 1]] = 3.0;
        StackedSystem::from_matrix(nodes, a).unwrap()
    }

    fn diamond() -> StackedSystem {
        let nodes = (0..4).map(|i| NodeId::new(i, 0)).collect();
        let mut a = Array2::zeros((4, 4));
        a[[1, 0]] = 0.4;
        a[[3, 1]] = 0.5;
        a[[2, 0]] = 0.6;
        a[[3, 2]] = 0.5;
        StackedSystem::from_matrix(nodes, a).unwrap()
    }

    #[test]
    fn chain_product() {
        let sys = chain3();
        assert_eq!(sys.a().iter().filter(|&&v| v != 0.0).count(), 2);
        let e = total_effect(&sys, NodeId::new(0, 0), NodeId::new(2, 0)).unwrap();
        assert_eq!(e.value, 6.0);
        assert_eq!(oracle_total_effect(&sys, NodeId::new(0, 0), NodeId::new(2, 0)).unwrap(), 6.0);
    }

    #[test]
    fn diamond_sums_paths() {
        let sys = diamond();
        let (s, t) = (NodeId::new(0, 0), NodeId::new(3, 0));
        assert!((total_effect(&sys, s, t).unwrap().value - 0.5).abs() < 1e-15);
        assert!((oracle_total_effect(&sys, s, t).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn no_path_and_unit_chain() {
        let sys = diamond();
        assert_eq!(oracle_total_effect(&sys, NodeId::new(3, 0), NodeId::new(0, 0)).unwrap(), 0.0);
        assert_eq!(total_effect(&sys, NodeId::new(1, 0), NodeId::new(2, 0)).unwrap().value, 0.0);
        let nodes = (0..4).map(|i| NodeId::new(i, 0)).collect();
        let mut a = Array2::zeros((4, 4));
        for i in 1..4 {
            a[[i, i - 1]] = 1.0;
        }
        let sys = StackedSystem::from_matrix(nodes, a).unwrap();
        assert_eq!(oracle_total_effect(&sys, NodeId::new(0, 0), NodeId::new(3, 0)).unwrap(), 1.0);
    }

    #[test]
    fn cycle_is_rejected() {
        let nodes = (0..2).map(|i| NodeId::new(i, 0)).collect();
        let mut a = Array2::zeros((2, 2));
        a[[0, 1]] = 1.0;
        a[[1, 0]] = 1.0;
        assert!(StackedSystem::from_matrix(nodes, a).is_err());
    }

    #[test]
    fn oracle_refuses_large_graphs() {
        let nodes = (0..17).map(|i| NodeId::new(i, 0)).collect();
        let sys = StackedSystem::from_matrix(nodes, Array2::zeros((17, 17))).unwrap();
        assert!(matches!(
            oracle_total_effect(&sys, NodeId::new(0, 0), NodeId::new(1, 0)),
            Err(Error::GraphTooLarge { nodes: 17, .. })
        ));
    }

    #[test]
    fn checkup_layout_node_count_and_zero_model() {
        let model = LongitudinalModel::zeros(&presets::paper_schema());
        let sys = build_stacked(&model, false).unwrap();
        assert_eq!(sys.n_nodes(), (1 + 5 + 8) * 3 + 5 + 8 + 1);
        assert!(sys.a().iter().all(|&v| v == 0.0));
        let table = guidance_effect_table(&sys, 1, &[0, 1, 2]).unwrap();
        assert!(table.values.iter().flatten().all(|&v| v == 0.0));
        assert!(matches!(
            guidance_effect_table(&sys, 1, &[0, 3]),
            Err(Error::HorizonOutOfRange { horizon: 3, .. })
        ));
    }

    #[test]
    fn missing_auxiliary_is_an_error() {
        let model = LongitudinalModel::zeros(&presets::paper_schema());
        assert!(matches!(build_stacked(&model, true), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn stacked_matrix_is_block_lower_triangular_in_time() {
        let mut model = LongitudinalModel::zeros(&presets::paper_schema());
        for t in 1..4 {
            let eq = model.at_mut(t);
            eq.b_cross.fill(0.1);
            eq.alpha.fill(-0.2);
            eq.b_within[[1, 0]] = 0.3;
            eq.ordering = crate::discovery::CausalOrdering(vec![0, 1, 2, 3, 4]);
        }
        let sys = build_stacked(&model, false).unwrap();
        for (c, cn) in sys.nodes().iter().enumerate() {
            for (p, pn) in sys.nodes().iter().enumerate() {
                if sys.a()[[c, p]] != 0.0 {
                    assert!(pn.time <= cn.time);
                }
            }
        }
        // nilpotent: A^N = 0
        let n = sys.n_nodes();
        let mut pow = sys.a().clone();
        for _ in 1..n {
            pow = pow.dot(sys.a());
        }
        assert!(pow.iter().all(|&v| v == 0.0));
    }
}
