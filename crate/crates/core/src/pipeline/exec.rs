use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::Observation;
use crate::pipeline::graph::{PipelineGraph, Source};
use crate::pipeline::ops::Value;
use crate::scalar::Real;

/// Wall time of one node invocation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTime {
    pub node: String,
    pub op: String,
    pub ms: f64,
}

/// Per-node timings for one frame. `total_ms` is the sum over nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageTiming {
    pub stages: Vec<StageTime>,
    pub total_ms: f64,
}

impl StageTiming {
    pub fn fps(&self) -> f64 {
        1000.0 / self.total_ms
    }
}

/// Values of the declared output nodes, in declaration order.
#[derive(Debug, Clone)]
pub struct Outputs<T> {
    pub values: Vec<(String, Value<T>)>,
}

impl<T: Real> Outputs<T> {
    pub fn get(&self, name: &str) -> Option<&Value<T>> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn same_bits(&self, other: &Self) -> bool {
        self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|((na, a), (nb, b))| na == nb && a.same_bits(b))
    }
}

/// Runs every node once in the graph's topological order.
pub fn execute<T: Real>(graph: &PipelineGraph, obs: &Observation<T>) -> Result<(Outputs<T>, StageTiming)> {
    execute_in_order(graph, obs, graph.order())
}

/// As [`execute`], with a caller-chosen topological order.
pub fn execute_in_order<T: Real>(
    graph: &PipelineGraph,
    obs: &Observation<T>,
    order: &[usize],
) -> Result<(Outputs<T>, StageTiming)> {
    if !graph.is_topological(order) {
        return Err(Error::InvalidPipeline("execution order is not topological".into()));
    }
    let input = Value::Observation(obs.clone());
    let nodes = graph.nodes();
    let mut values: Vec<Option<Value<T>>> = vec![None; nodes.len()];
    let mut stages = Vec::with_capacity(nodes.len());
    for &i in order {
        let node = &nodes[i];
        let args: Vec<&Value<T>> = node
            .inputs
            .iter()
            .map(|s| match s {
                Source::Input => &input,
                Source::Node(p) => values[*p].as_ref().expect("producer ran earlier"),
            })
            .collect();
        let start = Instant::now();
        let out = node.op.run(&args).map_err(|e| Error::Node {
            node: node.name.clone(),
            source: Box::new(e),
        })?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        stages.push(StageTime {
            node: node.name.clone(),
            op: node.op.name().to_string(),
            ms,
        });
        values[i] = Some(out);
    }
    // report stages in declaration order regardless of execution order
    stages.sort_by_key(|s| graph.node_index(&s.node));
    let total_ms = stages.iter().map(|s| s.ms).sum();
    let values = graph
        .outputs()
        .iter()
        .map(|&i| (nodes[i].name.clone(), values[i].clone().expect("all nodes ran")))
        .collect();
    Ok((Outputs { values }, StageTiming { stages, total_ms }))
}

/// Runs `f` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> Result<R> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
