//! Named acquisition setups with a wire phantom, used by the CLI
//! `--synthetic` option and by the benchmark tests.

use std::sync::Arc;

use crate::environment::{Phantom, Pulse, Scatterer, SimulatorSource};
use crate::error::{Error, Result};
use crate::model::{AcquisitionContext, RxMap, TxScheme};

pub const SPEED_OF_SOUND: f64 = 1540.0;
pub const SAMPLING_FREQUENCY: f64 = 40e6;
pub const CENTER_FREQUENCY: f64 = 5e6;

#[derive(Debug, Clone)]
pub struct Preset {
    pub name: &'static str,
    /// Short column label for reports.
    pub label: &'static str,
    pub ctx: Arc<AcquisitionContext>,
    pub phantom: Phantom,
    pub n_samples: usize,
    pub noise_std: f64,
}

pub const NAMES: [&str; 4] = ["sta-paper", "pwi-paper", "sta-small", "pwi-small"];

impl Preset {
    pub fn by_name(name: &str) -> Result<Preset> {
        let Some(name) = NAMES.iter().copied().find(|n| *n == name) else {
            return Err(Error::Config(format!(
                "unknown preset `{name}` (expected one of {})",
                NAMES.join(", ")
            )));
        };
        match name {
            "sta-paper" => sta(name, "STAI", 128, 0.3e-3, Some(64), 2048),
            "pwi-paper" => pwi(name, "PWI", 192, 0.2e-3, 11, 2048),
            "sta-small" => sta(name, "STAI", 16, 0.3e-3, Some(8), 1024),
            "pwi-small" => pwi(name, "PWI", 32, 0.2e-3, 3, 1024),
            _ => unreachable!("every name in NAMES is matched"),
        }
    }

    pub fn source(&self, seed: u64, max_frames: Option<usize>) -> SimulatorSource {
        SimulatorSource {
            phantom: self.phantom.clone(),
            ctx: self.ctx.clone(),
            n_samples: self.n_samples,
            seed,
            noise_std: self.noise_std,
            max_frames,
        }
    }
}

/// Evenly spaced steering angles in radians, `n` of them across +-10 degrees.
pub fn pw_angles(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.0];
    }
    (0..n)
        .map(|i| (-10.0 + 20.0 * i as f64 / (n - 1) as f64).to_radians())
        .collect()
}

/// Point wires on the axis and off-axis, spread over the imaged depth.
fn wires(n_samples: usize, half_width: f64) -> Result<Phantom> {
    let depth = n_samples as f64 * SPEED_OF_SOUND / (2.0 * SAMPLING_FREQUENCY);
    let mut scatterers = Vec::new();
    for frac in [0.25, 0.5, 0.75] {
        let z = frac * depth;
        scatterers.push(Scatterer { x: 0.0, z, amplitude: 1.0 });
        scatterers.push(Scatterer { x: 0.5 * half_width, z, amplitude: 0.5 });
    }
    Phantom::new(
        scatterers,
        Pulse {
            center_frequency: CENTER_FREQUENCY,
            n_cycles: 2,
        },
    )
}

fn sta(
    name: &'static str,
    label: &'static str,
    n_el: usize,
    pitch: f64,
    n_rx: Option<usize>,
    n_samples: usize,
) -> Result<Preset> {
    let tx: Vec<usize> = (0..n_el).collect();
    let rx = match n_rx {
        Some(n) => RxMap::centered_on_transmit(&tx, n, n_el)?,
        None => RxMap::Identity,
    };
    let ctx = AcquisitionContext::builder(SPEED_OF_SOUND, SAMPLING_FREQUENCY, n_el, pitch, TxScheme::Sta(tx))
        .rx_map(rx)
        .build()?;
    let half = 0.5 * (n_el - 1) as f64 * pitch;
    Ok(Preset {
        name,
        label,
        ctx: Arc::new(ctx),
        phantom: wires(n_samples, half)?,
        n_samples,
        noise_std: 1e-3,
    })
}

fn pwi(
    name: &'static str,
    label: &'static str,
    n_el: usize,
    pitch: f64,
    n_angles: usize,
    n_samples: usize,
) -> Result<Preset> {
    let ctx = AcquisitionContext::builder(
        SPEED_OF_SOUND,
        SAMPLING_FREQUENCY,
        n_el,
        pitch,
        TxScheme::Pw(pw_angles(n_angles)),
    )
    .build()?;
    let half = 0.5 * (n_el - 1) as f64 * pitch;
    Ok(Preset {
        name,
        label,
        ctx: Arc::new(ctx),
        phantom: wires(n_samples, half)?,
        n_samples,
        noise_std: 1e-3,
    })
}
