//! Delay-and-sum reconstruction for synthetic transmit aperture (STA) and
//! plane-wave (PW) acquisitions.
//!
//! For pixel `p = (x, z)`, acquisition `e` and channel `j` (element
//! `a_rx = rx_map(e, j)`) the two-way travel time is
//!
//! ```text
//! STA:  tau = (|p - a_tx(e)| + |p - a_rx|) / c
//! PW:   tau = (z cos(alpha_e) + x sin(alpha_e) + |p - a_rx|) / c
//! ```
//!
//! with the plane wavefront crossing the array origin at `t = 0`. The
//! channel trace is sampled at `fs * (tau - t0_e)`; positions outside the
//! recorded trace contribute exactly zero. Contributions are accumulated per
//! pixel in ascending `e`, then ascending `j`, independent of how pixels are
//! split across threads.

mod aperture;
mod oracle;

pub use aperture::active_aperture;
pub use oracle::das_beamform_oracle;

use ndarray::{Array2, ArrayView1, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{
    check_pair, AcquisitionContext, ApodizationSpec, BmodeImage, ImageGrid, RfFrame, Stage,
    TxScheme,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationMode {
    /// Nearest sample, rounding half up.
    Nearest,
    /// Linear between the two bracketing samples.
    #[default]
    Linear,
}

impl std::str::FromStr for InterpolationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "linear" => Ok(Self::Linear),
            other => Err(format!("unknown interpolation `{other}`")),
        }
    }
}

/// Depth indices `lo..hi` whose sample position falls inside the trace.
///
/// Path length is non-decreasing in depth and every rounded floating-point
/// step is monotone, so the in-range indices form one contiguous run.
fn valid_range(n_z: usize, len: usize, pos_at: impl Fn(usize) -> f64, mode: InterpolationMode) -> (usize, usize) {
    let in_range = |p: f64| match mode {
        InterpolationMode::Nearest => p + 0.5 >= 0.0 && p + 0.5 < len as f64,
        InterpolationMode::Linear => p >= 0.0 && p <= (len - 1) as f64,
    };
    let below = |p: f64| match mode {
        InterpolationMode::Nearest => p + 0.5 < 0.0,
        InterpolationMode::Linear => p < 0.0,
    };
    let lo = partition(0, n_z, |iz| below(pos_at(iz)));
    let hi = partition(lo, n_z, |iz| in_range(pos_at(iz)));
    (lo, hi)
}

/// First index in `lo..hi` where `pred` turns false.
fn partition(mut lo: usize, mut hi: usize, pred: impl Fn(usize) -> bool) -> usize {
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Per-trace accumulation over a run of in-range depths.
struct Kernel {
    samples_per_metre: f64,
    t0_samples: f64,
    mode: InterpolationMode,
    isa: Isa,
}

#[derive(Debug, Clone, Copy)]
enum Isa {
    Portable,
    #[cfg(target_arch = "x86_64")]
    Avx2,
    #[cfg(target_arch = "x86_64")]
    Avx512,
}

impl Isa {
    fn detect() -> Isa {
        #[cfg(target_arch = "x86_64")]
        {
            use std::arch::is_x86_feature_detected as has;
            if has!("avx512f") && has!("avx512dq") {
                return Isa::Avx512;
            }
            if has!("avx2") {
                return Isa::Avx2;
            }
        }
        Isa::Portable
    }
}

impl Kernel {
    #[inline(always)]
    fn position(&self, tx: f64, rx: f64) -> f64 {
        (tx + rx) * self.samples_per_metre - self.t0_samples
    }

    fn run<T: Real>(&self, acc: &mut [T], w: Option<&[T]>, tx: &[f64], rx: &[f64], trace: &[T]) {
        match self.isa {
            Isa::Portable => self.run_portable(acc, w, tx, rx, trace),
            // SAFETY: `Isa::detect` confirmed CPU support for these features.
            #[cfg(target_arch = "x86_64")]
            Isa::Avx2 => unsafe { self.run_avx2(acc, w, tx, rx, trace) },
            #[cfg(target_arch = "x86_64")]
            Isa::Avx512 => unsafe { self.run_avx512(acc, w, tx, rx, trace) },
        }
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn run_avx2<T: Real>(&self, acc: &mut [T], w: Option<&[T]>, tx: &[f64], rx: &[f64], trace: &[T]) {
        self.run_portable(acc, w, tx, rx, trace)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f,avx512dq")]
    unsafe fn run_avx512<T: Real>(&self, acc: &mut [T], w: Option<&[T]>, tx: &[f64], rx: &[f64], trace: &[T]) {
        self.run_portable(acc, w, tx, rx, trace)
    }

    /// Every position is in range, so indices are clamped only to let the
    /// loop run without bounds-check branches. A zero weight adds a signed
    /// zero, which leaves the (never negative-zero) accumulator unchanged.
    /// `None` weights mean all ones, and `1 * s == s` exactly.
    #[inline(always)]
    fn run_portable<T: Real>(&self, acc: &mut [T], w: Option<&[T]>, tx: &[f64], rx: &[f64], trace: &[T]) {
        match (w, self.mode) {
            (Some(w), InterpolationMode::Nearest) => self.nearest::<T, false>(acc, w, tx, rx, trace),
            (Some(w), InterpolationMode::Linear) => self.linear::<T, false>(acc, w, tx, rx, trace),
            (None, InterpolationMode::Nearest) => self.nearest::<T, true>(acc, &[], tx, rx, trace),
            (None, InterpolationMode::Linear) => self.linear::<T, true>(acc, &[], tx, rx, trace),
        }
    }

    #[inline(always)]
    fn nearest<T: Real, const UNIT: bool>(&self, acc: &mut [T], w: &[T], tx: &[f64], rx: &[f64], trace: &[T]) {
        let n = acc.len().min(tx.len()).min(rx.len());
        let Some(last) = trace.len().checked_sub(1) else {
            return;
        };
        let w = if UNIT { w } else { &w[..n] };
        for i in 0..n {
            let pos = self.position(tx[i], rx[i]);
            let s = trace[index(pos + 0.5, last)];
            acc[i] = if UNIT { acc[i] + s } else { acc[i] + w[i] * s };
        }
    }

    #[inline(always)]
    fn linear<T: Real, const UNIT: bool>(&self, acc: &mut [T], w: &[T], tx: &[f64], rx: &[f64], trace: &[T]) {
        let n = acc.len().min(tx.len()).min(rx.len());
        let Some(last) = trace.len().checked_sub(1) else {
            return;
        };
        let w = if UNIT { w } else { &w[..n] };
        for i in 0..n {
            let pos = self.position(tx[i], rx[i]);
            let i0 = index(pos, last);
            let s0 = trace[i0];
            let s1 = trace[(i0 + 1).min(last)];
            let s = s0 + T::of_f64(pos - i0 as f64) * (s1 - s0);
            acc[i] = if UNIT { acc[i] + s } else { acc[i] + w[i] * s };
        }
    }
}

/// `floor(p)` for `p` in `[0, last]`, clamped into that range otherwise.
#[inline(always)]
fn index(p: f64, last: usize) -> usize {
    let c = p.max(0.0).min(last as f64);
    // SAFETY: `c` is finite and within `[0, last]`, so it fits in usize.
    let i: usize = unsafe { c.to_int_unchecked() };
    i.min(last)
}

/// Reconstructs an RF-stage image on `grid`.
///
/// Work is split by image column; each column builds distance and weight
/// tables for all elements once and then streams every channel trace
/// through them.
pub fn das_beamform<T: Real>(
    frame: &RfFrame<T>,
    ctx: &AcquisitionContext,
    grid: &ImageGrid,
    apod: &ApodizationSpec,
    interp: InterpolationMode,
) -> Result<BmodeImage<T>> {
    check_pair(frame, ctx)?;
    apod.check()?;

    let data = frame.data().as_standard_layout();
    let (n_tx, n_rx, n_samples) = frame.shape();
    let n_el = ctx.n_elements();
    let n_z = grid.n_z();
    let fs = ctx.sampling_frequency();
    let samples_per_metre = fs / ctx.speed_of_sound();
    let flat = data
        .view()
        .into_shape_with_order((n_tx * n_rx, n_samples))
        .expect("standard layout");
    let traces: Vec<ArrayView1<T>> = flat.axis_iter(Axis(0)).collect();
    let angles: Vec<(f64, f64)> = match ctx.tx() {
        TxScheme::Pw(a) => a.iter().map(|a| (a.cos(), a.sin())).collect(),
        TxScheme::Sta(_) => Vec::new(),
    };

    let isa = Isa::detect();
    let columns: Vec<Vec<T>> = grid
        .x()
        .par_iter()
        .map(|&x| {
            let mut dist = vec![0.0f64; n_el * n_z];
            let mut weight = vec![T::zero(); n_el * n_z];
            // without an f-number the aperture does not vary with the pixel
            let fixed = (apod.f_number == 0.0).then(|| active_aperture(ctx, (x, 0.0), apod));
            for (iz, &z) in grid.z().iter().enumerate() {
                let varying;
                let w = match &fixed {
                    Some(w) => w,
                    None => {
                        varying = active_aperture(ctx, (x, z), apod);
                        &varying
                    }
                };
                for el in 0..n_el {
                    let dx = ctx.element_x(el) - x;
                    dist[el * n_z + iz] = (dx * dx + z * z).sqrt();
                    weight[el * n_z + iz] = T::of_f64(w[el]);
                }
            }
            let unit: Vec<bool> = weight.chunks(n_z).map(|r| r.iter().all(|&w| w == T::one())).collect();
            let pw_tx: Vec<f64> = angles
                .iter()
                .flat_map(|&(ca, sa)| grid.z().iter().map(move |&z| z * ca + x * sa))
                .collect();

            let tx_row = |e: usize| match ctx.tx() {
                TxScheme::Sta(elems) => &dist[elems[e] * n_z..][..n_z],
                TxScheme::Pw(_) => &pw_tx[e * n_z..][..n_z],
            };
            let mut acc = vec![T::zero(); n_z];
            for e in 0..n_tx {
                let kernel = Kernel {
                    samples_per_metre,
                    t0_samples: fs * ctx.time_zero()[e],
                    mode: interp,
                    isa,
                };
                let tx_path = tx_row(e);
                for j in 0..n_rx {
                    let el = ctx.rx_map().element(e, j);
                    let rx_path = &dist[el * n_z..][..n_z];
                    let (lo, hi) = valid_range(n_z, n_samples, |iz| kernel.position(tx_path[iz], rx_path[iz]), interp);
                    if lo >= hi {
                        continue;
                    }
                    let w_row = (!unit[el]).then(|| &weight[el * n_z..][lo..hi]);
                    let trace = traces[e * n_rx + j].as_slice().expect("contiguous trace");
                    kernel.run(&mut acc[lo..hi], w_row, &tx_path[lo..hi], &rx_path[lo..hi], trace);
                }
            }
            acc
        })
        .collect();

    let out = Array2::from_shape_fn(grid.shape(), |(iz, ix)| columns[ix][iz]);
    BmodeImage::new(out, Stage::Rf, grid.clone())
}
