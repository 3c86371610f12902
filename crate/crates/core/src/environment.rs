//! Frame sources: recorded WFRF datasets and a point-scatterer simulator.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

use ndarray::Array3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::wfrf::WfrfReader;
use crate::model::{validate_pair, AcquisitionContext, Observation, RfFrame, RxMap, TxScheme};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub x: f64,
    pub z: f64,
    pub amplitude: f64,
}

/// Hann-windowed tone burst centred on `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub center_frequency: f64,
    pub n_cycles: u32,
}

impl Pulse {
    pub fn duration(&self) -> f64 {
        self.n_cycles as f64 / self.center_frequency
    }

    /// `p(t) = 0.5 (1 + cos(2 pi t / T)) cos(2 pi f0 t)` for `|t| < T / 2`.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let d = self.duration();
        if t.abs() >= d / 2.0 {
            return 0.0;
        }
        0.5 * (1.0 + (2.0 * PI * t / d).cos()) * (2.0 * PI * self.center_frequency * t).cos()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phantom {
    pub scatterers: Vec<Scatterer>,
    pub pulse: Pulse,
}

impl Phantom {
    pub fn new(scatterers: Vec<Scatterer>, pulse: Pulse) -> Result<Self> {
        let p = Phantom { scatterers, pulse };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        for s in &self.scatterers {
            if !(s.z.is_finite() && s.z > 0.0) {
                return Err(Error::metadata("scatterer.z", format!("must be > 0, got {}", s.z)));
            }
            if !s.x.is_finite() || !s.amplitude.is_finite() {
                return Err(Error::metadata("scatterer", "position and amplitude must be finite"));
            }
        }
        let f = self.pulse.center_frequency;
        if !(f.is_finite() && f > 0.0) {
            return Err(Error::metadata("center_frequency", "must be finite and > 0"));
        }
        if self.pulse.n_cycles == 0 {
            return Err(Error::metadata("n_cycles", "must be at least 1"));
        }
        Ok(())
    }
}

/// Number of receive channels implied by the context.
pub fn channel_count(ctx: &AcquisitionContext) -> usize {
    match ctx.rx_map() {
        RxMap::Identity => ctx.n_elements(),
        RxMap::Explicit(t) => t.ncols(),
    }
}

/// Exact two-way time of flight from acquisition `e` to scatterer `(x, z)`
/// and back to element `el`.
pub fn time_of_flight(ctx: &AcquisitionContext, e: usize, el: usize, x: f64, z: f64) -> f64 {
    let c = ctx.speed_of_sound();
    let rx = (ctx.element_x(el) - x).hypot(z);
    let tx = match ctx.tx() {
        TxScheme::Sta(elems) => (ctx.element_x(elems[e]) - x).hypot(z),
        TxScheme::Pw(angles) => z * angles[e].cos() + x * angles[e].sin(),
    };
    (tx + rx) / c
}

/// Noise-free channel data for a point-scatterer phantom. The pulse is
/// evaluated at exact continuous time, so echoes carry no interpolation
/// error.
pub fn simulate_rf<T: Real>(phantom: &Phantom, ctx: &AcquisitionContext, n_samples: usize) -> Result<RfFrame<T>> {
    phantom.check()?;
    if n_samples == 0 {
        return Err(Error::metadata("n_samples", "must be at least 1"));
    }
    let n_tx = ctx.n_tx();
    let n_rx = channel_count(ctx);
    let fs = ctx.sampling_frequency();
    let half = phantom.pulse.duration() / 2.0;
    let mut acc = Array3::<f64>::zeros((n_tx, n_rx, n_samples));
    for e in 0..n_tx {
        let t0 = ctx.time_zero()[e];
        for j in 0..n_rx {
            let el = ctx.rx_map().element(e, j);
            let mut trace = acc.slice_mut(ndarray::s![e, j, ..]);
            for s in &phantom.scatterers {
                // sample k is taken at time k / fs + t0
                let tau = time_of_flight(ctx, e, el, s.x, s.z) - t0;
                let first = ((tau - half) * fs).ceil().max(0.0);
                let last = ((tau + half) * fs).floor().min((n_samples - 1) as f64);
                if first > last {
                    continue;
                }
                for k in first as usize..=last as usize {
                    trace[k] += s.amplitude * phantom.pulse.eval(k as f64 / fs - tau);
                }
            }
        }
    }
    RfFrame::new(acc.mapv(T::of_f64))
}

/// Synthetic source; an endless (or `max_frames`-bounded) stream of frames.
#[derive(Debug, Clone)]
pub struct SimulatorSource {
    pub phantom: Phantom,
    pub ctx: Arc<AcquisitionContext>,
    pub n_samples: usize,
    pub seed: u64,
    /// Standard deviation of additive white Gaussian noise; 0 disables it.
    pub noise_std: f64,
    pub max_frames: Option<usize>,
}

enum Source<T> {
    Dataset(WfrfReader),
    Simulator {
        config: SimulatorSource,
        clean: Arc<RfFrame<T>>,
        rng: ChaCha8Rng,
    },
}

/// A single-consumer stream of validated observations.
pub struct Environment<T> {
    source: Source<T>,
    frames_read: usize,
}

impl<T: Real> Environment<T> {
    pub fn open_dataset(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Environment {
            source: Source::Dataset(WfrfReader::open(path)?),
            frames_read: 0,
        })
    }

    pub fn simulator(config: SimulatorSource) -> Result<Self> {
        if !(config.noise_std.is_finite() && config.noise_std >= 0.0) {
            return Err(Error::metadata("noise_std", "must be finite and >= 0"));
        }
        let clean = Arc::new(simulate_rf::<T>(&config.phantom, &config.ctx, config.n_samples)?);
        validate_pair(clean.clone(), config.ctx.clone())?;
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Environment {
            source: Source::Simulator { config, clean, rng },
            frames_read: 0,
        })
    }

    /// Index of the next frame to be produced.
    pub fn frames_read(&self) -> usize {
        self.frames_read
    }

    /// Total frames available, if the source is finite.
    pub fn len_hint(&self) -> Option<usize> {
        match &self.source {
            Source::Dataset(r) => Some(r.frame_count()),
            Source::Simulator { config, .. } => config.max_frames,
        }
    }

    /// Next validated `(frame, context)` pair, or `None` at end of stream.
    pub fn next_observation(&mut self) -> Result<Option<Observation<T>>> {
        let obs = match &mut self.source {
            Source::Dataset(reader) => match reader.read_frame::<T>(self.frames_read)? {
                Some(frame) => Some(validate_pair(frame, reader.context().clone())?),
                None => None,
            },
            Source::Simulator { config, clean, rng } => {
                if config.max_frames.is_some_and(|m| self.frames_read >= m) {
                    None
                } else if config.noise_std > 0.0 {
                    let normal = Normal::new(0.0, config.noise_std)
                        .map_err(|e| Error::metadata("noise_std", e.to_string()))?;
                    let noisy = clean
                        .data()
                        .mapv(|v| T::of_f64(v.as_f64() + normal.sample(rng)));
                    Some(validate_pair(RfFrame::new(noisy)?, config.ctx.clone())?)
                } else {
                    Some(validate_pair(clean.clone(), config.ctx.clone())?)
                }
            }
        };
        if obs.is_some() {
            self.frames_read += 1;
        }
        Ok(obs)
    }
}

impl<T: Real> Iterator for Environment<T> {
    type Item = Result<Observation<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_observation().transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigproc::{analytic_signal, envelope};
    use ndarray::Axis;

    fn pulse() -> Pulse {
        Pulse {
            center_frequency: 5e6,
            n_cycles: 2,
        }
    }

    fn one_element(tx: TxScheme) -> AcquisitionContext {
        AcquisitionContext::builder(1540.0, 40e6, 1, 0.3e-3, tx).build().unwrap()
    }

    fn array_ctx() -> AcquisitionContext {
        AcquisitionContext::builder(1540.0, 40e6, 8, 0.3e-3, TxScheme::Sta(vec![0, 3, 7]))
            .build()
            .unwrap()
    }

    #[test]
    fn empty_phantom_is_silent() {
        let p = Phantom::new(vec![], pulse()).unwrap();
        let f = simulate_rf::<f64>(&p, &array_ctx(), 256).unwrap();
        assert_eq!(f.shape(), (3, 8, 256));
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn echo_onset_follows_time_of_flight() {
        // z = 1 cm: fs * 2z / c = 519.48; the 2-cycle 5 MHz burst spans
        // +/- 0.2 us = +/- 8 samples around it, so samples 512..=527 are live.
        let z = 0.01;
        let p = Phantom::new(vec![Scatterer { x: 0.0, z, amplitude: 1.0 }], pulse()).unwrap();
        let f = simulate_rf::<f64>(&p, &one_element(TxScheme::Sta(vec![0])), 1024).unwrap();
        let trace = f.data().slice(ndarray::s![0, 0, ..]).to_vec();
        let first = trace.iter().position(|&v| v != 0.0).unwrap();
        let last = trace.iter().rposition(|&v| v != 0.0).unwrap();
        assert_eq!(first, 512);
        assert_eq!(last, 527);
        let arrival = (40e6 * 2.0 * z / 1540.0f64).floor() as usize;
        assert_eq!(arrival, 519);
        assert!(trace[arrival] != 0.0);
    }

    #[test]
    fn superposition_and_scaling() {
        let ctx = array_ctx();
        let a = Scatterer { x: 0.4e-3, z: 3e-3, amplitude: 1.3 };
        let b = Scatterer { x: -0.2e-3, z: 3.1e-3, amplitude: -0.7 };
        let sim = |s: Vec<Scatterer>| simulate_rf::<f64>(&Phantom::new(s, pulse()).unwrap(), &ctx, 400).unwrap();
        let ab = sim(vec![a, b]);
        let sum = sim(vec![a]).data() + sim(vec![b]).data();
        assert_eq!(ab.data(), &sum);
        for k in [2.0, 0.5, 4.0, -8.0] {
            let scaled = sim(vec![Scatterer { amplitude: a.amplitude * k, ..a }]);
            assert_eq!(scaled.data(), &(sim(vec![a]).data() * k));
        }
    }

    #[test]
    fn envelope_peak_near_arrival() {
        let ctx = array_ctx();
        let s = Scatterer { x: 0.5e-3, z: 4e-3, amplitude: 1.0 };
        let p = Phantom::new(vec![s], pulse()).unwrap();
        let f = simulate_rf::<f64>(&p, &ctx, 512).unwrap();
        let env = envelope(&analytic_signal(f.data(), Axis(2)).unwrap());
        let tol = p.pulse.n_cycles as f64 / (2.0 * p.pulse.center_frequency);
        for e in 0..3 {
            for j in 0..8 {
                let lane = env.slice(ndarray::s![e, j, ..]);
                let peak = lane.iter().enumerate().fold(0, |b, (i, &v)| if v > lane[b] { i } else { b });
                let tau = time_of_flight(&ctx, e, j, s.x, s.z);
                assert!((peak as f64 / 40e6 - tau).abs() <= tol, "e={e} j={j}");
            }
        }
    }

    #[test]
    fn simulator_is_seed_deterministic() {
        let ctx = Arc::new(array_ctx());
        let p = Phantom::new(vec![Scatterer { x: 0.0, z: 2e-3, amplitude: 1.0 }], pulse()).unwrap();
        let mk = |seed| {
            Environment::<f64>::simulator(SimulatorSource {
                phantom: p.clone(),
                ctx: ctx.clone(),
                n_samples: 256,
                seed,
                noise_std: 0.01,
                max_frames: Some(2),
            })
            .unwrap()
        };
        let mut a = mk(7);
        let mut b = mk(7);
        let fa = a.next_observation().unwrap().unwrap();
        let fb = b.next_observation().unwrap().unwrap();
        assert_eq!(fa.frame.data(), fb.frame.data());
        let fa2 = a.next_observation().unwrap().unwrap();
        assert_ne!(fa.frame.data(), fa2.frame.data());
        assert!(a.next_observation().unwrap().is_none());
        let fc = mk(8).next_observation().unwrap().unwrap();
        assert_ne!(fa.frame.data(), fc.frame.data());
    }

    #[test]
    fn phantom_validation() {
        assert!(Phantom::new(vec![Scatterer { x: 0.0, z: 0.0, amplitude: 1.0 }], pulse()).is_err());
        assert!(Phantom::new(vec![Scatterer { x: 0.0, z: 1.0, amplitude: f64::NAN }], pulse()).is_err());
        assert!(Phantom::new(vec![], Pulse { center_frequency: 5e6, n_cycles: 0 }).is_err());
    }
}
