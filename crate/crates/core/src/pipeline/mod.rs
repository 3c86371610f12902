//! Static dataflow graphs of operators, executed one frame at a time with
//! per-node wall-clock timing.

pub mod bench;
mod exec;
mod graph;
mod ops;
mod spec;

pub use bench::{benchmark, render_records, render_table, BenchmarkReport, BenchmarkRun, StepRow};
pub use exec::{execute, execute_in_order, with_threads, Outputs, StageTime, StageTiming};
pub use graph::{build_graph, Node, PipelineGraph, Source};
pub use ops::{BeamformParams, Op, PortKind, Value, OPERATORS};
pub use spec::{NodeSpec, PipelineSpec, INPUT};
