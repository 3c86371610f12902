//! Lane-wise signal operators: FIR filtering, FFT analytic signal, envelope
//! magnitude and log-compression to a display range.
//!
//! All operators take an explicit axis and act independently on each 1-D
//! lane along it. Lanes are processed in parallel; each lane's arithmetic
//! is sequential, so results do not depend on the thread count.

use ndarray::{Array, ArrayBase, Axis, Data, Dimension, Zip};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Causal FIR filter taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirSpec {
    coefficients: Vec<f64>,
}

impl FirSpec {
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::EmptyCoefficients);
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::metadata("coefficients", "must be finite"));
        }
        Ok(FirSpec { coefficients })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }
}

/// `y[n] = sum_m h[m] x[n - m]` with zero history before the first sample.
/// Output has the input's shape.
pub fn fir_filter<T, S, D>(x: &ArrayBase<S, D>, spec: &FirSpec, axis: Axis) -> Result<Array<T, D>>
where
    T: Real,
    S: Data<Elem = T>,
    D: Dimension,
{
    let len = x.len_of(axis);
    if len == 0 {
        return Err(Error::AxisTooShort { len, min: 1 });
    }
    let taps: Vec<T> = spec.coefficients.iter().map(|&c| T::of_f64(c)).collect();
    let mut out = Array::<T, D>::zeros(x.raw_dim());
    Zip::from(out.lanes_mut(axis))
        .and(x.lanes(axis))
        .par_for_each(|mut y, x| {
            for n in 0..len {
                let mut acc = T::zero();
                for (m, &h) in taps.iter().enumerate().take(n + 1) {
                    acc = acc + h * x[n - m];
                }
                y[n] = acc;
            }
        });
    Ok(out)
}

/// One-sided spectrum gain that turns a real spectrum into an analytic one.
pub fn hilbert_gain(n: usize) -> Vec<f64> {
    let mut g = vec![0.0; n];
    if n == 0 {
        return g;
    }
    g[0] = 1.0;
    if n.is_multiple_of(2) {
        g[n / 2] = 1.0;
        g[1..n / 2].iter_mut().for_each(|v| *v = 2.0);
    } else {
        g[1..=(n - 1) / 2].iter_mut().for_each(|v| *v = 2.0);
    }
    g
}

/// Analytic signal along `axis`: FFT, one-sided gain, inverse FFT.
/// The real part reproduces the input; the imaginary part is its Hilbert
/// transform.
pub fn analytic_signal<T, S, D>(x: &ArrayBase<S, D>, axis: Axis) -> Result<Array<Complex<T>, D>>
where
    T: Real,
    S: Data<Elem = T>,
    D: Dimension,
{
    let n = x.len_of(axis);
    if n < 2 {
        return Err(Error::AxisTooShort { len: n, min: 2 });
    }
    let mut planner = FftPlanner::<T>::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    let scale = T::of_f64(1.0 / n as f64);
    let gain: Vec<T> = hilbert_gain(n)
        .into_iter()
        .map(|g| T::of_f64(g) * scale)
        .collect();

    let mut out = Array::<Complex<T>, D>::zeros(x.raw_dim());
    Zip::from(out.lanes_mut(axis))
        .and(x.lanes(axis))
        .par_for_each(|mut y, x| {
            let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
            forward.process(&mut buf);
            for (b, &g) in buf.iter_mut().zip(&gain) {
                *b = *b * g;
            }
            inverse.process(&mut buf);
            for (dst, src) in y.iter_mut().zip(buf) {
                *dst = src;
            }
        });
    Ok(out)
}

/// Elementwise magnitude.
pub fn envelope<T, S, D>(z: &ArrayBase<S, D>) -> Array<T, D>
where
    T: Real,
    S: Data<Elem = Complex<T>>,
    D: Dimension,
{
    let mut out = Array::<T, D>::zeros(z.raw_dim());
    Zip::from(&mut out).and(z).par_for_each(|o, c| *o = c.norm());
    out
}

/// Log-compresses `e` to `range_db` below its peak and maps onto `[0, 1]`.
///
/// The peak maps to exactly 1; anything `range_db` or more below the peak,
/// including zeros, maps to exactly 0.
pub fn dynamic_adjustment<T, S, D>(e: &ArrayBase<S, D>, range_db: f64) -> Result<Array<T, D>>
where
    T: Real,
    S: Data<Elem = T>,
    D: Dimension,
{
    if !(range_db.is_finite() && range_db > 0.0) {
        return Err(Error::NonPositiveRange(range_db));
    }
    let peak = e
        .iter()
        .fold(0.0f64, |m, &v| if v.as_f64() > m { v.as_f64() } else { m });
    if peak <= 0.0 {
        return Err(Error::AllZeroInput);
    }
    let mut out = Array::<T, D>::zeros(e.raw_dim());
    Zip::from(&mut out).and(e).par_for_each(|o, &v| {
        let v = v.as_f64();
        *o = if v > 0.0 {
            let db = 20.0 * (v / peak).log10();
            T::of_f64((db + range_db).clamp(0.0, range_db) / range_db)
        } else {
            T::zero()
        };
    });
    Ok(out)
}
