use ndarray::Array2;

use crate::beamform::{active_aperture, InterpolationMode};
use crate::error::Result;
use crate::model::{
    check_pair, AcquisitionContext, ApodizationSpec, BmodeImage, ImageGrid, RfFrame, Stage,
    TxScheme,
};
use crate::scalar::Real;

/// Reference delay-and-sum: a direct loop over pixels, acquisitions and
/// channels with no precomputed tables. Meant for small instances only.
pub fn das_beamform_oracle<T: Real>(
    frame: &RfFrame<T>,
    ctx: &AcquisitionContext,
    grid: &ImageGrid,
    apod: &ApodizationSpec,
    interp: InterpolationMode,
) -> Result<BmodeImage<T>> {
    check_pair(frame, ctx)?;
    apod.check()?;
    let data = frame.data();
    let (n_tx, n_rx, n_samples) = frame.shape();
    let fs = ctx.sampling_frequency();
    let samples_per_metre = fs / ctx.speed_of_sound();

    let mut out = Array2::<T>::zeros(grid.shape());
    for (iz, &z) in grid.z().iter().enumerate() {
        for (ix, &x) in grid.x().iter().enumerate() {
            let weights = active_aperture(ctx, (x, z), apod);
            let mut acc = T::zero();
            for e in 0..n_tx {
                let tx_path = match ctx.tx() {
                    TxScheme::Sta(elems) => {
                        let dx = ctx.element_x(elems[e]) - x;
                        (dx * dx + z * z).sqrt()
                    }
                    TxScheme::Pw(angles) => z * angles[e].cos() + x * angles[e].sin(),
                };
                for j in 0..n_rx {
                    let el = ctx.rx_map().element(e, j);
                    let dx = ctx.element_x(el) - x;
                    let rx_path = (dx * dx + z * z).sqrt();
                    let pos = (tx_path + rx_path) * samples_per_metre - fs * ctx.time_zero()[e];

                    let sample = match interp {
                        InterpolationMode::Nearest => {
                            let idx = (pos + 0.5).floor();
                            if idx >= 0.0 && idx <= (n_samples - 1) as f64 {
                                data[[e, j, idx as usize]]
                            } else {
                                T::zero()
                            }
                        }
                        InterpolationMode::Linear => {
                            if pos >= 0.0 && pos <= (n_samples - 1) as f64 {
                                let i0 = pos.floor();
                                let frac = T::of_f64(pos - i0);
                                let i0 = i0 as usize;
                                let s0 = data[[e, j, i0]];
                                let s1 = if i0 + 1 < n_samples {
                                    data[[e, j, i0 + 1]]
                                } else {
                                    s0
                                };
                                s0 + frac * (s1 - s0)
                            } else {
                                T::zero()
                            }
                        }
                    };
                    acc = acc + T::of_f64(weights[el]) * sample;
                }
            }
            out[[iz, ix]] = acc;
        }
    }
    BmodeImage::new(out, Stage::Rf, grid.clone())
}
