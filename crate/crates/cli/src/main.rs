use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use sonoflow::environment::{Environment, SimulatorSource};
use sonoflow::io::config::{load_context, load_toml, PhantomSpec};
use sonoflow::io::pgm::write_pgm;
use sonoflow::io::wfrf::{write_wfrf, WfrfReader};
use sonoflow::model::Stage;
use sonoflow::pipeline::{
    benchmark, build_graph, execute, render_records, render_table, with_threads, BenchmarkReport,
    PipelineGraph, PipelineSpec, PortKind, Value,
};
use sonoflow::presets::{Preset, NAMES};
use sonoflow::{Dtype, Real};

#[derive(Parser)]
#[command(name = "sonoflow", version, about = "Ultrasound B-mode reconstruction pipelines")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate RF frames of a point-scatterer phantom into a WFRF file.
    Simulate {
        #[arg(long, value_name = "TOML")]
        phantom: PathBuf,
        #[arg(long, value_name = "TOML")]
        ctx: PathBuf,
        #[arg(long, value_name = "WFRF")]
        out: PathBuf,
        /// Samples per channel trace.
        #[arg(long, default_value_t = 2048)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        frames: usize,
        /// Seed for the additive noise.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Precision::F64)]
        precision: Precision,
    },
    /// Run a pipeline over every frame of a WFRF file, writing one PGM per
    /// frame and display-stage output.
    Reconstruct {
        #[arg(long = "in", value_name = "WFRF")]
        input: PathBuf,
        #[arg(long, value_name = "TOML")]
        pipeline: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Processing precision; defaults to the file's sample type.
        #[arg(long, value_enum)]
        precision: Option<Precision>,
    },
    /// Time each pipeline stage and print a per-step report.
    Benchmark {
        /// Recorded dataset; may be repeated.
        #[arg(long = "in", value_name = "WFRF", required_unless_present = "synthetic")]
        input: Vec<PathBuf>,
        /// Built-in acquisition preset; may be repeated.
        #[arg(long, value_name = "PRESET", value_parser = clap::builder::PossibleValuesParser::new(NAMES))]
        synthetic: Vec<String>,
        /// Pipeline spec; defaults to the four-stage B-mode chain.
        #[arg(long, value_name = "TOML")]
        pipeline: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        frames: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
        #[arg(long, value_enum, default_value_t = Precision::F32)]
        precision: Precision,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads; defaults to all available cores.
        #[arg(long)]
        threads: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Precision {
    F32,
    F64,
}

impl From<Dtype> for Precision {
    fn from(d: Dtype) -> Self {
        match d {
            Dtype::F32 => Precision::F32,
            Dtype::F64 => Precision::F64,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Records,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sonoflow: error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Simulate {
            phantom,
            ctx,
            out,
            samples,
            frames,
            seed,
            precision,
        } => match precision {
            Precision::F32 => simulate::<f32>(&phantom, &ctx, &out, samples, frames, seed),
            Precision::F64 => simulate::<f64>(&phantom, &ctx, &out, samples, frames, seed),
        },
        Command::Reconstruct {
            input,
            pipeline,
            out_dir,
            precision,
        } => {
            let precision = match precision {
                Some(p) => p,
                None => in_file(&input, WfrfReader::open(&input))?.metadata().dtype.into(),
            };
            match precision {
                Precision::F32 => reconstruct::<f32>(&input, &pipeline, &out_dir),
                Precision::F64 => reconstruct::<f64>(&input, &pipeline, &out_dir),
            }
        }
        Command::Benchmark {
            input,
            synthetic,
            pipeline,
            frames,
            warmup,
            format,
            precision,
            seed,
            threads,
        } => {
            let spec = match &pipeline {
                Some(p) => in_file(p, PipelineSpec::load(p))?,
                None => PipelineSpec::bmode_chain(30.0),
            };
            let graph = build_graph(&spec)
                .with_context(|| pipeline.as_ref().map_or("pipeline".into(), |p| p.display().to_string()))?;
            let job = || -> Result<Vec<BenchmarkReport>> {
                let mut reports = Vec::new();
                for name in &synthetic {
                    let preset = Preset::by_name(name)?;
                    let source = preset.source(seed, None);
                    reports.push(match precision {
                        Precision::F32 => bench_source::<f32>(&graph, Source::Synthetic(source), frames, warmup, preset.label)?,
                        Precision::F64 => bench_source::<f64>(&graph, Source::Synthetic(source), frames, warmup, preset.label)?,
                    });
                }
                for path in &input {
                    let label = path.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
                    reports.push(match precision {
                        Precision::F32 => bench_source::<f32>(&graph, Source::File(path), frames, warmup, &label)?,
                        Precision::F64 => bench_source::<f64>(&graph, Source::File(path), frames, warmup, &label)?,
                    });
                }
                Ok(reports)
            };
            let reports = match threads {
                Some(n) => with_threads(n, job)??,
                None => job()?,
            };
            match format {
                Format::Table => print!("{}", render_table(&reports)),
                Format::Records => print!("{}", render_records(&reports)),
            }
            Ok(())
        }
    }
}

/// Context messages joined with `: `. Library errors already embed their
/// sources in their message, so the chain stops at the first one.
fn one_line(e: &anyhow::Error) -> String {
    let mut parts = Vec::new();
    for cause in e.chain() {
        parts.push(cause.to_string());
        if cause.downcast_ref::<sonoflow::Error>().is_some() {
            break;
        }
    }
    parts.join(": ").replace('\n', " ")
}

/// Attaches the path to errors that do not already carry it.
fn in_file<T>(path: &Path, r: sonoflow::Result<T>) -> Result<T> {
    r.map_err(|e| {
        let shown = path.display().to_string();
        if e.to_string().contains(&shown) {
            e.into()
        } else {
            anyhow::Error::new(e).context(shown)
        }
    })
}

fn simulate<T: Real>(phantom: &Path, ctx: &Path, out: &Path, samples: usize, frames: usize, seed: u64) -> Result<()> {
    let spec: PhantomSpec = in_file(phantom, load_toml(phantom))?;
    let phantom_model = in_file(phantom, spec.build())?;
    let ctx = in_file(ctx, load_context(ctx))?;
    let mut env = Environment::<T>::simulator(SimulatorSource {
        phantom: phantom_model,
        ctx: ctx.clone().into(),
        n_samples: samples,
        seed,
        noise_std: spec.noise_std,
        max_frames: Some(frames),
    })?;
    let mut data = Vec::with_capacity(frames);
    while let Some(obs) = env.next_observation()? {
        data.push(std::sync::Arc::unwrap_or_clone(obs.frame));
    }
    write_wfrf(out, &data, &ctx)?;
    eprintln!("wrote {} frame(s) to {}", data.len(), out.display());
    Ok(())
}

fn display_outputs(graph: &PipelineGraph) -> Vec<usize> {
    graph
        .outputs()
        .iter()
        .copied()
        .filter(|&i| graph.nodes()[i].output == PortKind::Image(Stage::Display))
        .collect()
}

fn reconstruct<T: Real>(input: &Path, pipeline: &Path, out_dir: &Path) -> Result<()> {
    let spec = in_file(pipeline, PipelineSpec::load(pipeline))?;
    let graph = build_graph(&spec).with_context(|| pipeline.display().to_string())?;
    if display_outputs(&graph).is_empty() {
        bail!("{}: pipeline declares no display-stage output to write", pipeline.display());
    }
    let mut env = in_file(input, Environment::<T>::open_dataset(input))?;
    std::fs::create_dir_all(out_dir).with_context(|| out_dir.display().to_string())?;
    let mut written = 0;
    while let Some(obs) = in_file(input, env.next_observation())? {
        let frame = env.frames_read() - 1;
        let (outputs, _) = execute(&graph, &obs).with_context(|| format!("frame {frame}"))?;
        for (name, value) in &outputs.values {
            if let Value::Image(img) = value {
                if img.stage() == Stage::Display {
                    write_pgm(img, out_dir.join(format!("{name}_{frame:04}.pgm")))?;
                    written += 1;
                }
            }
        }
    }
    eprintln!("wrote {written} image(s) to {}", out_dir.display());
    Ok(())
}

enum Source<'a> {
    Synthetic(SimulatorSource),
    File(&'a Path),
}

fn bench_source<T: Real>(
    graph: &PipelineGraph,
    source: Source<'_>,
    frames: usize,
    warmup: usize,
    label: &str,
) -> Result<BenchmarkReport> {
    let mut env = match source {
        Source::Synthetic(s) => Environment::<T>::simulator(s)?,
        Source::File(p) => in_file(p, Environment::<T>::open_dataset(p))?,
    };
    let run = benchmark(graph, &mut env, frames, warmup, label).with_context(|| label.to_string())?;
    Ok(run.report)
}
