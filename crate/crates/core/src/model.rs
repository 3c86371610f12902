//! Tensor and metadata types shared by every operator.
//!
//! Probe geometry is a uniform linear array centred on the origin: element
//! `i` sits at `x_i = (i - (n - 1) / 2) * pitch`, depth 0. Positive `z` points
//! into the medium.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use ndarray::{Array2, Array3};
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Raw channel data, indexed `[acquisition, channel, sample]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame<T> {
    data: Array3<T>,
}

impl<T: Real> RfFrame<T> {
    pub fn new(data: Array3<T>) -> Result<Self> {
        for (axis, &len) in data.shape().iter().enumerate() {
            if len == 0 {
                return Err(Error::DimensionMismatch {
                    axis,
                    expected: 1,
                    found: 0,
                });
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::metadata(
                "data",
                format!("non-finite sample at flat index {pos}"),
            ));
        }
        Ok(RfFrame { data })
    }

    pub fn zeros(n_tx: usize, n_rx: usize, n_samples: usize) -> Result<Self> {
        Self::new(Array3::zeros((n_tx, n_rx, n_samples)))
    }

    pub fn n_tx(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn n_rx(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn n_samples(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n_tx(), self.n_rx(), self.n_samples())
    }

    pub fn data(&self) -> &Array3<T> {
        &self.data
    }

    pub fn into_data(self) -> Array3<T> {
        self.data
    }
}

/// Transmit sequence, one entry per acquisition.
#[derive(Debug, Clone, PartialEq)]
pub enum TxScheme {
    /// Synthetic transmit aperture: index of the firing element.
    Sta(Vec<usize>),
    /// Plane wave: steering angle in radians.
    Pw(Vec<f64>),
}

impl TxScheme {
    pub fn len(&self) -> usize {
        match self {
            TxScheme::Sta(v) => v.len(),
            TxScheme::Pw(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TxScheme::Sta(_) => "sta",
            TxScheme::Pw(_) => "pw",
        }
    }
}

/// Receive channel to physical element mapping.
#[derive(Debug, Clone, PartialEq)]
pub enum RxMap {
    /// Channel `j` is element `j`; only valid when `n_rx == n_elements`.
    Identity,
    /// `[n_tx, n_rx]` table of element indices.
    Explicit(Array2<usize>),
}

impl RxMap {
    /// A contiguous receive aperture of `n_rx` elements centred on each
    /// transmitting element and shifted to stay inside the array.
    pub fn centered_on_transmit(tx_elements: &[usize], n_rx: usize, n_elements: usize) -> Result<Self> {
        if n_rx == 0 || n_rx > n_elements {
            return Err(Error::metadata(
                "rx_map",
                format!("receive aperture of {n_rx} channels does not fit {n_elements} elements"),
            ));
        }
        let max_start = n_elements - n_rx;
        let table = Array2::from_shape_fn((tx_elements.len(), n_rx), |(e, j)| {
            let start = tx_elements[e].saturating_sub(n_rx / 2).min(max_start);
            start + j
        });
        Ok(RxMap::Explicit(table))
    }

    #[inline]
    pub fn element(&self, acquisition: usize, channel: usize) -> usize {
        match self {
            RxMap::Identity => channel,
            RxMap::Explicit(t) => t[[acquisition, channel]],
        }
    }
}

/// Probe and medium metadata accompanying a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionContext {
    speed_of_sound: f64,
    sampling_frequency: f64,
    n_elements: usize,
    pitch: f64,
    tx: TxScheme,
    rx_map: RxMap,
    time_zero: Vec<f64>,
}

pub struct ContextBuilder {
    speed_of_sound: f64,
    sampling_frequency: f64,
    n_elements: usize,
    pitch: f64,
    tx: TxScheme,
    rx_map: RxMap,
    time_zero: Option<Vec<f64>>,
}

impl ContextBuilder {
    pub fn rx_map(mut self, map: RxMap) -> Self {
        self.rx_map = map;
        self
    }

    /// Per-acquisition time-zero offsets in seconds.
    pub fn time_zero(mut self, t0: Vec<f64>) -> Self {
        self.time_zero = Some(t0);
        self
    }

    pub fn build(self) -> Result<AcquisitionContext> {
        let n_tx = self.tx.len();
        let ctx = AcquisitionContext {
            speed_of_sound: self.speed_of_sound,
            sampling_frequency: self.sampling_frequency,
            n_elements: self.n_elements,
            pitch: self.pitch,
            tx: self.tx,
            rx_map: self.rx_map,
            time_zero: self.time_zero.unwrap_or_else(|| vec![0.0; n_tx]),
        };
        ctx.check()?;
        Ok(ctx)
    }
}

fn positive(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::metadata(field, format!("must be finite and > 0, got {v}")))
    }
}

impl AcquisitionContext {
    pub fn builder(
        speed_of_sound: f64,
        sampling_frequency: f64,
        n_elements: usize,
        pitch: f64,
        tx: TxScheme,
    ) -> ContextBuilder {
        ContextBuilder {
            speed_of_sound,
            sampling_frequency,
            n_elements,
            pitch,
            tx,
            rx_map: RxMap::Identity,
            time_zero: None,
        }
    }

    fn check(&self) -> Result<()> {
        positive("speed_of_sound", self.speed_of_sound)?;
        positive("sampling_frequency", self.sampling_frequency)?;
        positive("pitch", self.pitch)?;
        if self.n_elements == 0 {
            return Err(Error::metadata("n_elements", "must be at least 1"));
        }
        if self.tx.is_empty() {
            return Err(Error::metadata("tx_scheme", "needs at least one acquisition"));
        }
        match &self.tx {
            TxScheme::Sta(elems) => {
                if let Some(&bad) = elems.iter().find(|&&e| e >= self.n_elements) {
                    return Err(Error::metadata(
                        "tx_scheme",
                        format!("transmit element {bad} outside [0, {})", self.n_elements),
                    ));
                }
            }
            TxScheme::Pw(angles) => {
                if let Some(&bad) = angles
                    .iter()
                    .find(|a| !(a.is_finite() && a.abs() < FRAC_PI_2))
                {
                    return Err(Error::metadata(
                        "tx_scheme",
                        format!("steering angle {bad} rad outside (-pi/2, pi/2)"),
                    ));
                }
            }
        }
        if let RxMap::Explicit(table) = &self.rx_map {
            if table.nrows() != self.tx.len() {
                return Err(Error::metadata(
                    "rx_channel_map",
                    format!("{} rows for {} acquisitions", table.nrows(), self.tx.len()),
                ));
            }
            if let Some(&bad) = table.iter().find(|&&e| e >= self.n_elements) {
                return Err(Error::metadata(
                    "rx_channel_map",
                    format!("element {bad} outside [0, {})", self.n_elements),
                ));
            }
        }
        if self.time_zero.len() != self.tx.len() {
            return Err(Error::metadata(
                "time_zero_offset",
                format!("{} offsets for {} acquisitions", self.time_zero.len(), self.tx.len()),
            ));
        }
        if self.time_zero.iter().any(|t| !t.is_finite()) {
            return Err(Error::metadata("time_zero_offset", "offsets must be finite"));
        }
        Ok(())
    }

    pub fn speed_of_sound(&self) -> f64 {
        self.speed_of_sound
    }

    pub fn sampling_frequency(&self) -> f64 {
        self.sampling_frequency
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn tx(&self) -> &TxScheme {
        &self.tx
    }

    pub fn rx_map(&self) -> &RxMap {
        &self.rx_map
    }

    pub fn time_zero(&self) -> &[f64] {
        &self.time_zero
    }

    pub fn n_tx(&self) -> usize {
        self.tx.len()
    }

    /// Lateral position of element `i` in metres.
    #[inline]
    pub fn element_x(&self, i: usize) -> f64 {
        (i as f64 - (self.n_elements as f64 - 1.0) / 2.0) * self.pitch
    }

    pub fn element_positions(&self) -> Vec<f64> {
        (0..self.n_elements).map(|i| self.element_x(i)).collect()
    }

    /// Depth covered by one sample of two-way travel, `c / (2 fs)`.
    pub fn sample_depth(&self) -> f64 {
        self.speed_of_sound / (2.0 * self.sampling_frequency)
    }
}

/// A frame paired with metadata it has been checked against.
#[derive(Debug, Clone)]
pub struct Observation<T> {
    pub frame: Arc<RfFrame<T>>,
    pub ctx: Arc<AcquisitionContext>,
}

/// Checks that `frame` is consistent with `ctx` and pairs them.
pub fn validate_pair<T: Real>(
    frame: impl Into<Arc<RfFrame<T>>>,
    ctx: impl Into<Arc<AcquisitionContext>>,
) -> Result<Observation<T>> {
    let frame = frame.into();
    let ctx = ctx.into();
    check_pair(&frame, &ctx)?;
    Ok(Observation { frame, ctx })
}

/// Borrowing form of [`validate_pair`].
pub fn check_pair<T: Real>(frame: &RfFrame<T>, ctx: &AcquisitionContext) -> Result<()> {
    ctx.check()?;
    if frame.n_tx() != ctx.n_tx() {
        return Err(Error::DimensionMismatch {
            axis: 0,
            expected: ctx.n_tx(),
            found: frame.n_tx(),
        });
    }
    match ctx.rx_map() {
        RxMap::Identity if frame.n_rx() != ctx.n_elements() => {
            return Err(Error::DimensionMismatch {
                axis: 1,
                expected: ctx.n_elements(),
                found: frame.n_rx(),
            });
        }
        RxMap::Explicit(t) if t.ncols() != frame.n_rx() => {
            return Err(Error::DimensionMismatch {
                axis: 1,
                expected: t.ncols(),
                found: frame.n_rx(),
            });
        }
        _ => {}
    }
    Ok(())
}

/// Rectilinear pixel grid in metres.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    x: Vec<f64>,
    z: Vec<f64>,
}

fn strictly_increasing(field: &'static str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::metadata(field, "needs at least one position"));
    }
    if v.iter().any(|p| !p.is_finite()) {
        return Err(Error::metadata(field, "positions must be finite"));
    }
    if v.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::metadata(field, "positions must be strictly increasing"));
    }
    Ok(())
}

impl ImageGrid {
    pub fn new(x: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        strictly_increasing("x_positions", &x)?;
        strictly_increasing("z_positions", &z)?;
        if z[0] < 0.0 {
            return Err(Error::metadata("z_positions", "depths must be >= 0"));
        }
        Ok(ImageGrid { x, z })
    }

    /// `n` equispaced points over `[start, stop]`, endpoints included.
    pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
        match n {
            0 => Vec::new(),
            1 => vec![start],
            _ => {
                let step = (stop - start) / (n - 1) as f64;
                (0..n).map(|k| start + k as f64 * step).collect()
            }
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn n_x(&self) -> usize {
        self.x.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    /// Image shape `(n_z, n_x)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.n_z(), self.n_x())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridMode {
    Sta,
    Pw,
}

pub const DEFAULT_PW_NX: usize = 128;
pub const DEFAULT_PW_NZ: usize = 512;

/// Grid matching the acquisition: one column per STA transmit element at
/// native sample depth spacing, or a 512 x 128 raster over the aperture for PW.
pub fn default_grid(
    ctx: &AcquisitionContext,
    n_samples: usize,
    mode: GridMode,
    n_z_override: Option<usize>,
) -> Result<ImageGrid> {
    if n_samples == 0 {
        return Err(Error::metadata("n_samples", "must be at least 1"));
    }
    let dz = ctx.sample_depth();
    match mode {
        GridMode::Sta => {
            let TxScheme::Sta(elems) = ctx.tx() else {
                return Err(Error::metadata(
                    "tx_scheme",
                    "STA grid needs an STA transmit sequence",
                ));
            };
            let mut x: Vec<f64> = elems.iter().map(|&e| ctx.element_x(e)).collect();
            if x.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::metadata(
                    "tx_scheme",
                    "STA grid needs transmit elements in strictly increasing order",
                ));
            }
            x.shrink_to_fit();
            let n_z = n_z_override.unwrap_or(n_samples);
            let z = (0..n_z).map(|k| k as f64 * dz).collect();
            ImageGrid::new(x, z)
        }
        GridMode::Pw => {
            let first = ctx.element_x(0);
            let last = ctx.element_x(ctx.n_elements() - 1);
            let n_x = if ctx.n_elements() == 1 { 1 } else { DEFAULT_PW_NX };
            let n_z = n_z_override.unwrap_or(DEFAULT_PW_NZ);
            let x = ImageGrid::linspace(first, last, n_x);
            let z = ImageGrid::linspace(0.0, n_samples as f64 * dz, n_z);
            ImageGrid::new(x, z)
        }
    }
}

/// Processing stage of an image tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Rf,
    ComplexAnalytic,
    Envelope,
    Display,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Rf => "rf",
            Stage::ComplexAnalytic => "complex_analytic",
            Stage::Envelope => "envelope",
            Stage::Display => "display",
        }
    }
}

/// Real-valued image `[n_z, n_x]` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BmodeImage<T> {
    data: Array2<T>,
    stage: Stage,
    grid: Arc<ImageGrid>,
}

impl<T: Real> BmodeImage<T> {
    pub fn new(data: Array2<T>, stage: Stage, grid: impl Into<Arc<ImageGrid>>) -> Result<Self> {
        let grid = grid.into();
        let (n_z, n_x) = grid.shape();
        if data.nrows() != n_z {
            return Err(Error::DimensionMismatch {
                axis: 0,
                expected: n_z,
                found: data.nrows(),
            });
        }
        if data.ncols() != n_x {
            return Err(Error::DimensionMismatch {
                axis: 1,
                expected: n_x,
                found: data.ncols(),
            });
        }
        match stage {
            Stage::ComplexAnalytic => {
                return Err(Error::WrongStage {
                    expected: "real-valued",
                    found: stage.name(),
                })
            }
            Stage::Envelope if data.iter().any(|&v| v.is_nan() || v < T::zero()) => {
                return Err(Error::metadata("data", "envelope values must be >= 0"));
            }
            Stage::Display if data.iter().any(|&v| !(v >= T::zero() && v <= T::one())) => {
                return Err(Error::metadata("data", "display values must lie in [0, 1]"));
            }
            _ => {}
        }
        Ok(BmodeImage { data, stage, grid })
    }

    pub fn data(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_data(self) -> Array2<T> {
        self.data
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn grid(&self) -> &Arc<ImageGrid> {
        &self.grid
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.dim()
    }
}

/// Complex analytic image `[n_z, n_x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticImage<T> {
    pub data: Array2<Complex<T>>,
    pub grid: Arc<ImageGrid>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

/// Receive apodization: window shape plus dynamic-aperture f-number
/// (0 keeps the full aperture at every depth).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ApodizationSpec {
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub f_number: f64,
}

impl ApodizationSpec {
    pub fn new(window: Window, f_number: f64) -> Result<Self> {
        let spec = ApodizationSpec { window, f_number };
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if !self.f_number.is_finite() || self.f_number < 0.0 {
            return Err(Error::metadata(
                "f_number",
                format!("must be finite and >= 0, got {}", self.f_number),
            ));
        }
        Ok(())
    }
}
