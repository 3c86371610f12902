//! Operator registry: parameter parsing, port typing and evaluation.

use std::fmt;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::beamform::{das_beamform, InterpolationMode};
use crate::error::{Error, Result};
use crate::model::{
    default_grid, AnalyticImage, ApodizationSpec, BmodeImage, GridMode, ImageGrid, Observation,
    RfFrame, Stage, TxScheme, Window,
};
use crate::qus::{estimate_from_moments, load_model, sliding_moments, DenseModel, HkParams, MomentMaps};
use crate::scalar::Real;
use crate::sigproc::{analytic_signal, dynamic_adjustment, envelope, fir_filter, FirSpec};

/// Registered operator kinds.
pub const OPERATORS: &[&str] = &[
    "identity",
    "fir_filter",
    "beamform",
    "analytic_signal",
    "absolute_value",
    "dynamic_adjustment",
    "sliding_moments",
    "hk_estimator",
];

/// Static type of a value flowing along an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortKind {
    Observation,
    Image(Stage),
    Moments,
    HkMap,
}

impl fmt::Display for PortKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PortKind::Observation => f.write_str("observation"),
            PortKind::Image(s) => write!(f, "{}-image", s.name()),
            PortKind::Moments => f.write_str("moments"),
            PortKind::HkMap => f.write_str("hk-map"),
        }
    }
}

/// A value on an edge. Payloads are shared, never copied, on fan-out.
#[derive(Debug, Clone)]
pub enum Value<T> {
    Observation(Observation<T>),
    Image(Arc<BmodeImage<T>>),
    Analytic(Arc<AnalyticImage<T>>),
    Moments(Arc<MomentMaps>),
    HkMap(Arc<Array2<HkParams>>),
}

impl<T: Real> Value<T> {
    pub fn kind(&self) -> PortKind {
        match self {
            Value::Observation(_) => PortKind::Observation,
            Value::Image(i) => PortKind::Image(i.stage()),
            Value::Analytic(_) => PortKind::Image(Stage::ComplexAnalytic),
            Value::Moments(_) => PortKind::Moments,
            Value::HkMap(_) => PortKind::HkMap,
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        match self {
            Value::Observation(o) => o.frame.data().shape().to_vec(),
            Value::Image(i) => i.data().shape().to_vec(),
            Value::Analytic(a) => a.data.shape().to_vec(),
            Value::Moments(m) => m.m1.shape().to_vec(),
            Value::HkMap(h) => h.shape().to_vec(),
        }
    }

    pub fn as_image(&self) -> Option<&BmodeImage<T>> {
        match self {
            Value::Image(i) => Some(i),
            _ => None,
        }
    }

    /// Bitwise equality of payloads.
    pub fn same_bits(&self, other: &Self) -> bool {
        fn bits<T: Real>(v: T) -> u64 {
            v.as_f64().to_bits()
        }
        match (self, other) {
            (Value::Observation(a), Value::Observation(b)) => {
                a.ctx == b.ctx
                    && a.frame.shape() == b.frame.shape()
                    && a.frame.data().iter().zip(b.frame.data()).all(|(x, y)| bits(*x) == bits(*y))
            }
            (Value::Image(a), Value::Image(b)) => {
                a.stage() == b.stage()
                    && a.grid() == b.grid()
                    && a.shape() == b.shape()
                    && a.data().iter().zip(b.data()).all(|(x, y)| bits(*x) == bits(*y))
            }
            (Value::Analytic(a), Value::Analytic(b)) => {
                a.grid == b.grid
                    && a.data.dim() == b.data.dim()
                    && a.data
                        .iter()
                        .zip(&b.data)
                        .all(|(x, y)| bits(x.re) == bits(y.re) && bits(x.im) == bits(y.im))
            }
            (Value::Moments(a), Value::Moments(b)) => {
                let eq = |x: &Array2<f64>, y: &Array2<f64>| {
                    x.dim() == y.dim() && x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits())
                };
                eq(&a.m1, &b.m1) && eq(&a.m2, &b.m2) && eq(&a.m3, &b.m3)
            }
            (Value::HkMap(a), Value::HkMap(b)) => {
                a.dim() == b.dim()
                    && a.iter()
                        .zip(b.iter())
                        .all(|(p, q)| p.u.to_bits() == q.u.to_bits() && p.k.to_bits() == q.k.to_bits())
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamformParams {
    #[serde(default)]
    pub interpolation: InterpolationMode,
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub f_number: f64,
    /// Depth sample count override for the default grid.
    #[serde(default)]
    pub n_z: Option<usize>,
    /// Explicit grid `[start, stop, count]` in metres; needs both axes.
    #[serde(default)]
    pub x_range: Option<(f64, f64, usize)>,
    #[serde(default)]
    pub z_range: Option<(f64, f64, usize)>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct FirParams {
    coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicParams {
    #[serde(default = "default_range_db")]
    range_db: f64,
}

fn default_range_db() -> f64 {
    30.0
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct MomentParams {
    window: (usize, usize),
    #[serde(default = "unit_stride")]
    stride: (usize, usize),
}

fn unit_stride() -> (usize, usize) {
    (1, 1)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
struct EstimatorParams {
    model: String,
}

/// A configured operator instance.
#[derive(Debug, Clone)]
pub enum Op {
    Identity,
    Fir(FirSpec),
    Beamform {
        params: BeamformParams,
        apod: ApodizationSpec,
        grid: Option<Arc<ImageGrid>>,
    },
    AnalyticSignal,
    AbsoluteValue,
    DynamicAdjustment { range_db: f64 },
    SlidingMoments { window: (usize, usize), stride: (usize, usize) },
    HkEstimator(Arc<DenseModel>),
}

fn params<P: DeserializeOwned>(node: &str, table: &toml::Table) -> Result<P> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidPipeline(format!("node `{node}`: {}", e.message())))
}

fn no_params(node: &str, table: &toml::Table) -> Result<()> {
    match table.keys().next() {
        Some(k) => Err(Error::InvalidPipeline(format!("node `{node}`: unexpected parameter `{k}`"))),
        None => Ok(()),
    }
}

impl Op {
    pub fn parse(node: &str, op: &str, table: &toml::Table) -> Result<Self> {
        let wrap = |e: Error| Error::InvalidPipeline(format!("node `{node}`: {e}"));
        Ok(match op {
            "identity" => no_params(node, table).map(|_| Op::Identity)?,
            "fir_filter" => {
                let p: FirParams = params(node, table)?;
                Op::Fir(FirSpec::new(p.coefficients).map_err(wrap)?)
            }
            "beamform" => {
                let p: BeamformParams = params(node, table)?;
                let apod = ApodizationSpec::new(p.window, p.f_number).map_err(wrap)?;
                let grid = match (p.x_range, p.z_range) {
                    (Some((x0, x1, nx)), Some((z0, z1, nz))) => Some(Arc::new(
                        ImageGrid::new(ImageGrid::linspace(x0, x1, nx), ImageGrid::linspace(z0, z1, nz))
                            .map_err(wrap)?,
                    )),
                    (None, None) => None,
                    _ => {
                        return Err(Error::InvalidPipeline(format!(
                            "node `{node}`: x_range and z_range must be given together"
                        )))
                    }
                };
                Op::Beamform { params: p, apod, grid }
            }
            "analytic_signal" => no_params(node, table).map(|_| Op::AnalyticSignal)?,
            "absolute_value" => no_params(node, table).map(|_| Op::AbsoluteValue)?,
            "dynamic_adjustment" => {
                let p: DynamicParams = params(node, table)?;
                if !(p.range_db.is_finite() && p.range_db > 0.0) {
                    return Err(wrap(Error::NonPositiveRange(p.range_db)));
                }
                Op::DynamicAdjustment { range_db: p.range_db }
            }
            "sliding_moments" => {
                let p: MomentParams = params(node, table)?;
                if p.window.0 == 0 || p.window.1 == 0 || p.stride.0 == 0 || p.stride.1 == 0 {
                    return Err(Error::InvalidPipeline(format!(
                        "node `{node}`: window and stride must be at least 1"
                    )));
                }
                Op::SlidingMoments { window: p.window, stride: p.stride }
            }
            "hk_estimator" => {
                let p: EstimatorParams = params(node, table)?;
                Op::HkEstimator(Arc::new(load_model(&p.model).map_err(wrap)?))
            }
            other => return Err(Error::UnknownOperator(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Op::Identity => "identity",
            Op::Fir(_) => "fir_filter",
            Op::Beamform { .. } => "beamform",
            Op::AnalyticSignal => "analytic_signal",
            Op::AbsoluteValue => "absolute_value",
            Op::DynamicAdjustment { .. } => "dynamic_adjustment",
            Op::SlidingMoments { .. } => "sliding_moments",
            Op::HkEstimator(_) => "hk_estimator",
        }
    }

    pub fn arity(&self) -> usize {
        1
    }

    /// Output kind for the given input kinds, or the kind that was expected.
    pub fn output_kind(&self, inputs: &[PortKind]) -> std::result::Result<PortKind, String> {
        let input = inputs[0];
        let expect = |want: PortKind, out: PortKind| {
            if input == want {
                Ok(out)
            } else {
                Err(want.to_string())
            }
        };
        match self {
            Op::Identity => Ok(input),
            Op::Fir(_) => match input {
                PortKind::Observation | PortKind::Image(Stage::Rf) => Ok(input),
                _ => Err("observation or rf-image".into()),
            },
            Op::Beamform { .. } => expect(PortKind::Observation, PortKind::Image(Stage::Rf)),
            Op::AnalyticSignal => expect(PortKind::Image(Stage::Rf), PortKind::Image(Stage::ComplexAnalytic)),
            Op::AbsoluteValue => expect(PortKind::Image(Stage::ComplexAnalytic), PortKind::Image(Stage::Envelope)),
            Op::DynamicAdjustment { .. } => expect(PortKind::Image(Stage::Envelope), PortKind::Image(Stage::Display)),
            Op::SlidingMoments { .. } => expect(PortKind::Image(Stage::Envelope), PortKind::Moments),
            Op::HkEstimator(_) => expect(PortKind::Moments, PortKind::HkMap),
        }
    }

    pub fn run<T: Real>(&self, inputs: &[&Value<T>]) -> Result<Value<T>> {
        let input = inputs[0];
        let mismatch = || Error::InvalidPipeline(format!("`{}` received a {} value", self.name(), input.kind()));
        Ok(match (self, input) {
            (Op::Identity, v) => v.clone(),
            (Op::Fir(spec), Value::Observation(obs)) => {
                let data = fir_filter(obs.frame.data(), spec, Axis(2))?;
                Value::Observation(Observation {
                    frame: Arc::new(RfFrame::new(data)?),
                    ctx: obs.ctx.clone(),
                })
            }
            (Op::Fir(spec), Value::Image(img)) if img.stage() == Stage::Rf => {
                let data = fir_filter(img.data(), spec, Axis(0))?;
                Value::Image(Arc::new(BmodeImage::new(data, Stage::Rf, img.grid().clone())?))
            }
            (Op::Beamform { params, apod, grid }, Value::Observation(obs)) => {
                let grid = match grid {
                    Some(g) => g.clone(),
                    None => {
                        let mode = match obs.ctx.tx() {
                            TxScheme::Sta(_) => GridMode::Sta,
                            TxScheme::Pw(_) => GridMode::Pw,
                        };
                        Arc::new(default_grid(&obs.ctx, obs.frame.n_samples(), mode, params.n_z)?)
                    }
                };
                Value::Image(Arc::new(das_beamform(&obs.frame, &obs.ctx, &grid, apod, params.interpolation)?))
            }
            (Op::AnalyticSignal, Value::Image(img)) if img.stage() == Stage::Rf => {
                Value::Analytic(Arc::new(AnalyticImage {
                    data: analytic_signal(img.data(), Axis(0))?,
                    grid: img.grid().clone(),
                }))
            }
            (Op::AbsoluteValue, Value::Analytic(a)) => {
                Value::Image(Arc::new(BmodeImage::new(envelope(&a.data), Stage::Envelope, a.grid.clone())?))
            }
            (Op::DynamicAdjustment { range_db }, Value::Image(img)) if img.stage() == Stage::Envelope => {
                let data = dynamic_adjustment(img.data(), *range_db)?;
                Value::Image(Arc::new(BmodeImage::new(data, Stage::Display, img.grid().clone())?))
            }
            (Op::SlidingMoments { window, stride }, Value::Image(img)) if img.stage() == Stage::Envelope => {
                Value::Moments(Arc::new(sliding_moments(img.data().view(), *window, *stride)?))
            }
            (Op::HkEstimator(model), Value::Moments(m)) => Value::HkMap(Arc::new(estimate_from_moments(m, model)?)),
            _ => return Err(mismatch()),
        })
    }
}
