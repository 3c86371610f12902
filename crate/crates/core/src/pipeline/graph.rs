use std::collections::HashMap;

use petgraph::algo::{tarjan_scc, toposort};
use petgraph::graph::{DiGraph, NodeIndex};

use crate::error::{Error, Result};
use crate::pipeline::ops::{Op, PortKind};
use crate::pipeline::spec::{PipelineSpec, INPUT};

/// Where a node port reads from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    Node(usize),
}

#[derive(Debug, Clone)]
pub struct Node {
    pub name: String,
    pub op: Op,
    pub inputs: Vec<Source>,
    pub output: PortKind,
}

/// A validated, acyclic operator graph.
#[derive(Debug, Clone)]
pub struct PipelineGraph {
    nodes: Vec<Node>,
    order: Vec<usize>,
    outputs: Vec<usize>,
}

impl PipelineGraph {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// A topological order of node indices.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn outputs(&self) -> &[usize] {
        &self.outputs
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    /// Whether `order` visits every node once, after all of its producers.
    pub fn is_topological(&self, order: &[usize]) -> bool {
        if order.len() != self.nodes.len() {
            return false;
        }
        let mut seen = vec![false; self.nodes.len()];
        for &i in order {
            if i >= self.nodes.len() || seen[i] {
                return false;
            }
            let ready = self.nodes[i].inputs.iter().all(|s| match s {
                Source::Input => true,
                Source::Node(p) => seen[*p],
            });
            if !ready {
                return false;
            }
            seen[i] = true;
        }
        true
    }
}

/// Resolves names, checks for cycles and types every edge.
pub fn build_graph(spec: &PipelineSpec) -> Result<PipelineGraph> {
    let mut index = HashMap::new();
    for (i, n) in spec.nodes.iter().enumerate() {
        if n.name == INPUT {
            return Err(Error::InvalidPipeline(format!("`{INPUT}` is reserved for the graph input")));
        }
        if index.insert(n.name.as_str(), i).is_some() {
            return Err(Error::InvalidPipeline(format!("duplicate node name `{}`", n.name)));
        }
    }
    if spec.nodes.is_empty() {
        return Err(Error::InvalidPipeline("pipeline has no nodes".into()));
    }

    let mut ops = Vec::with_capacity(spec.nodes.len());
    let mut inputs = Vec::with_capacity(spec.nodes.len());
    for n in &spec.nodes {
        let op = Op::parse(&n.name, &n.op, &n.params)?;
        if n.inputs.len() != op.arity() {
            return Err(Error::PortMismatch {
                edge: format!("* -> {}", n.name),
                expected: format!("{} input(s)", op.arity()),
                found: format!("{} input(s)", n.inputs.len()),
            });
        }
        let srcs = n
            .inputs
            .iter()
            .map(|src| match src.as_str() {
                INPUT => Ok(Source::Input),
                other => index.get(other).map(|&i| Source::Node(i)).ok_or_else(|| {
                    Error::InvalidPipeline(format!("node `{}` reads from unknown node `{other}`", n.name))
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        ops.push(op);
        inputs.push(srcs);
    }

    let mut g = DiGraph::<usize, ()>::new();
    let ids: Vec<NodeIndex> = (0..spec.nodes.len()).map(|i| g.add_node(i)).collect();
    for (i, srcs) in inputs.iter().enumerate() {
        for s in srcs {
            if let Source::Node(p) = s {
                g.add_edge(ids[*p], ids[i], ());
            }
        }
    }
    let order: Vec<usize> = match toposort(&g, None) {
        Ok(order) => order.into_iter().map(|id| g[id]).collect(),
        Err(_) => {
            let mut cycle = tarjan_scc(&g)
                .into_iter()
                .find(|scc| scc.len() > 1 || g.contains_edge(scc[0], scc[0]))
                .unwrap_or_default()
                .into_iter()
                .map(|id| g[id])
                .collect::<Vec<_>>();
            cycle.sort_unstable();
            return Err(Error::CycleDetected(
                cycle.into_iter().map(|i| spec.nodes[i].name.clone()).collect(),
            ));
        }
    };

    let mut kinds: Vec<Option<PortKind>> = vec![None; spec.nodes.len()];
    for &i in &order {
        let in_kinds: Vec<PortKind> = inputs[i]
            .iter()
            .map(|s| match s {
                Source::Input => PortKind::Observation,
                Source::Node(p) => kinds[*p].expect("producers typed first"),
            })
            .collect();
        let out = ops[i].output_kind(&in_kinds).map_err(|expected| {
            let from = match inputs[i][0] {
                Source::Input => INPUT.to_string(),
                Source::Node(p) => spec.nodes[p].name.clone(),
            };
            Error::PortMismatch {
                edge: format!("{from} -> {}", spec.nodes[i].name),
                expected,
                found: in_kinds[0].to_string(),
            }
        })?;
        kinds[i] = Some(out);
    }

    if spec.outputs.is_empty() {
        return Err(Error::InvalidPipeline("pipeline declares no outputs".into()));
    }
    let outputs = spec
        .outputs
        .iter()
        .map(|o| {
            index
                .get(o.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidPipeline(format!("output `{o}` is not a node")))
        })
        .collect::<Result<Vec<_>>>()?;

    let nodes = spec
        .nodes
        .iter()
        .zip(ops)
        .zip(inputs)
        .zip(kinds)
        .map(|(((n, op), inputs), kind)| Node {
            name: n.name.clone(),
            op,
            inputs,
            output: kind.expect("every node typed"),
        })
        .collect();
    Ok(PipelineGraph { nodes, order, outputs })
}
