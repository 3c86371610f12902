//! Per-stage throughput measurement.
//!
//! Node timings are grouped into report rows by operator category
//! (`beamform` is "Beamforming"; `analytic_signal` and `absolute_value`
//! together are "Envelope Detection"; `dynamic_adjustment` is "Dynamic
//! Adjustment"; `fir_filter` is "Pre-processing"; anything else is reported
//! under its node name). Every row, and the total, is the median over the
//! measured frames of the per-frame value. Only operator compute is timed;
//! frame acquisition from the environment is excluded.

use std::fmt::Write as _;

use serde::Serialize;

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::pipeline::exec::{execute, Outputs};
use crate::pipeline::graph::PipelineGraph;
use crate::scalar::Real;

pub const BEAMFORMING: &str = "Beamforming";
pub const ENVELOPE_DETECTION: &str = "Envelope Detection";
pub const DYNAMIC_ADJUSTMENT: &str = "Dynamic Adjustment";
pub const PREPROCESSING: &str = "Pre-processing";

pub fn step_for(op: &str, node: &str) -> String {
    match op {
        "beamform" => BEAMFORMING.into(),
        "analytic_signal" | "absolute_value" => ENVELOPE_DETECTION.into(),
        "dynamic_adjustment" => DYNAMIC_ADJUSTMENT.into(),
        "fir_filter" => PREPROCESSING.into(),
        _ => node.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRow {
    pub step: String,
    pub ms_per_frame: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    /// Column label, e.g. `STAI`.
    pub label: String,
    pub dtype: String,
    pub frames: usize,
    pub warmup: usize,
    pub input_shape: Vec<usize>,
    pub output_shapes: Vec<(String, Vec<usize>)>,
    pub rows: Vec<StepRow>,
    /// Median per-node time, declaration order.
    pub nodes: Vec<StepRow>,
    pub total_ms_per_frame: f64,
    pub fps: f64,
}

pub struct BenchmarkRun<T> {
    pub report: BenchmarkReport,
    /// Outputs of the last measured frame.
    pub last_outputs: Outputs<T>,
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Discards `warmup` frames, then times `n_frames` executions.
pub fn benchmark<T: Real>(
    graph: &PipelineGraph,
    env: &mut Environment<T>,
    n_frames: usize,
    warmup: usize,
    label: &str,
) -> Result<BenchmarkRun<T>> {
    if n_frames == 0 {
        return Err(Error::InsufficientFrames {
            needed: warmup + 1,
            available: 0,
        });
    }
    let needed = warmup + n_frames;
    let mut next = |done: usize| {
        env.next_observation()?
            .ok_or(Error::InsufficientFrames { needed, available: done })
    };
    for i in 0..warmup {
        let obs = next(i)?;
        execute(graph, &obs)?;
    }

    let steps: Vec<String> = {
        let mut s: Vec<String> = Vec::new();
        for n in graph.nodes() {
            let step = step_for(n.op.name(), &n.name);
            if !s.contains(&step) {
                s.push(step);
            }
        }
        s
    };
    let n_nodes = graph.nodes().len();
    let mut per_node = vec![Vec::with_capacity(n_frames); n_nodes];
    let mut per_step = vec![Vec::with_capacity(n_frames); steps.len()];
    let mut totals = Vec::with_capacity(n_frames);
    let mut input_shape = Vec::new();
    let mut last = None;
    for i in 0..n_frames {
        let obs = next(warmup + i)?;
        input_shape = obs.frame.data().shape().to_vec();
        let (outputs, timing) = execute(graph, &obs)?;
        let mut step_ms = vec![0.0; steps.len()];
        for (k, st) in timing.stages.iter().enumerate() {
            per_node[k].push(st.ms);
            let step = step_for(&st.op, &st.node);
            let idx = steps.iter().position(|s| *s == step).expect("step registered");
            step_ms[idx] += st.ms;
        }
        for (acc, ms) in per_step.iter_mut().zip(step_ms) {
            acc.push(ms);
        }
        totals.push(timing.total_ms);
        last = Some(outputs);
    }
    let last_outputs = last.expect("n_frames > 0");
    let total = median(&mut totals);
    let report = BenchmarkReport {
        label: label.to_string(),
        dtype: T::DTYPE.name().to_string(),
        frames: n_frames,
        warmup,
        input_shape,
        output_shapes: last_outputs
            .values
            .iter()
            .map(|(n, v)| (n.clone(), v.shape()))
            .collect(),
        rows: steps
            .into_iter()
            .zip(per_step.iter_mut())
            .map(|(step, v)| StepRow {
                step,
                ms_per_frame: median(v),
            })
            .collect(),
        nodes: graph
            .nodes()
            .iter()
            .zip(per_node.iter_mut())
            .map(|(n, v)| StepRow {
                step: n.name.clone(),
                ms_per_frame: median(v),
            })
            .collect(),
        total_ms_per_frame: total,
        fps: 1000.0 / total,
    };
    Ok(BenchmarkRun { report, last_outputs })
}

/// Aligned text table, one column per report.
pub fn render_table(reports: &[BenchmarkReport]) -> String {
    let mut steps: Vec<&str> = Vec::new();
    for r in reports {
        for row in &r.rows {
            if !steps.contains(&row.step.as_str()) {
                steps.push(&row.step);
            }
        }
    }
    let headers: Vec<String> = reports.iter().map(|r| format!("{} [ms/frame]", r.label)).collect();
    let first_w = steps.iter().map(|s| s.len()).chain(["Step".len(), "Total".len()]).max().unwrap_or(4);
    let col_w: Vec<usize> = headers.iter().map(|h| h.len().max(10)).collect();

    let mut out = String::new();
    let mut line = |cells: Vec<String>| {
        let mut l = format!("{:<first_w$}", cells[0]);
        for (c, w) in cells[1..].iter().zip(&col_w) {
            let _ = write!(l, " | {c:>w$}");
        }
        out.push_str(l.trim_end());
        out.push('\n');
    };
    let mut head = vec!["Step".to_string()];
    head.extend(headers.iter().cloned());
    line(head);
    let rule_len = first_w + col_w.iter().map(|w| w + 3).sum::<usize>();
    let rule = "-".repeat(rule_len);
    line(vec![rule]);
    let fmt_ms = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
    for s in &steps {
        let mut cells = vec![s.to_string()];
        for r in reports {
            cells.push(fmt_ms(r.rows.iter().find(|row| row.step == *s).map(|row| row.ms_per_frame)));
        }
        line(cells);
    }
    let mut total = vec!["Total".to_string()];
    total.extend(reports.iter().map(|r| format!("{:.3}", r.total_ms_per_frame)));
    line(total);
    let mut fps = vec!["FPS".to_string()];
    fps.extend(reports.iter().map(|r| format!("{:.2}", r.fps)));
    line(fps);
    out
}

/// One JSON object per line: a `step` record per row, then a `summary`.
pub fn render_records(reports: &[BenchmarkReport]) -> String {
    let mut out = String::new();
    for r in reports {
        for row in &r.rows {
            let rec = serde_json::json!({
                "record": "step",
                "config": r.label,
                "step": row.step,
                "ms_per_frame": row.ms_per_frame,
            });
            out.push_str(&rec.to_string());
            out.push('\n');
        }
        let summary = serde_json::json!({
            "record": "summary",
            "config": r.label,
            "dtype": r.dtype,
            "frames": r.frames,
            "warmup": r.warmup,
            "input_shape": r.input_shape,
            "output_shapes": r.output_shapes.iter().map(|(n, s)| serde_json::json!({"node": n, "shape": s})).collect::<Vec<_>>(),
            "nodes": r.nodes,
            "total_ms_per_frame": r.total_ms_per_frame,
            "fps": r.fps,
        });
        out.push_str(&summary.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn step_categories() {
        assert_eq!(step_for("beamform", "bf"), BEAMFORMING);
        assert_eq!(step_for("analytic_signal", "a"), ENVELOPE_DETECTION);
        assert_eq!(step_for("absolute_value", "b"), ENVELOPE_DETECTION);
        assert_eq!(step_for("dynamic_adjustment", "c"), DYNAMIC_ADJUSTMENT);
        assert_eq!(step_for("identity", "passthrough"), "passthrough");
    }

    #[test]
    fn table_layout() {
        let rep = |label: &str, ms: [f64; 3]| BenchmarkReport {
            label: label.into(),
            dtype: "f32".into(),
            frames: 1,
            warmup: 0,
            input_shape: vec![],
            output_shapes: vec![],
            rows: [BEAMFORMING, ENVELOPE_DETECTION, DYNAMIC_ADJUSTMENT]
                .iter()
                .zip(ms)
                .map(|(s, m)| StepRow { step: s.to_string(), ms_per_frame: m })
                .collect(),
            nodes: vec![],
            total_ms_per_frame: ms.iter().sum(),
            fps: 1000.0 / ms.iter().sum::<f64>(),
        };
        let t = render_table(&[rep("STAI", [11.0, 5.0, 2.0]), rep("PWI", [55.0, 4.0, 1.0])]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Step"));
        assert!(lines[0].contains("STAI [ms/frame]") && lines[0].contains("PWI [ms/frame]"));
        assert!(lines[2].starts_with("Beamforming") && lines[2].contains("11.000") && lines[2].contains("55.000"));
        assert!(lines[3].starts_with("Envelope Detection"));
        assert!(lines[4].starts_with("Dynamic Adjustment"));
        assert!(lines[5].starts_with("Total") && lines[5].contains("18.000") && lines[5].contains("60.000"));
        assert!(lines[6].starts_with("FPS"));
    }
}
