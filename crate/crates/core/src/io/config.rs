//! TOML descriptions of acquisition contexts and phantoms.
//!
//! The same [`ContextSpec`] schema is used for `--ctx` files and for the
//! metadata block embedded in WFRF datasets.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::environment::{Phantom, Pulse, Scatterer};
use crate::error::{Error, Result};
use crate::model::{AcquisitionContext, RxMap, TxScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum TransmitSpec {
    /// Firing element per acquisition; all elements in order when omitted.
    Sta {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        elements: Option<Vec<usize>>,
    },
    /// Steering angles, either in radians or degrees.
    Pw {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        angles: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        angles_deg: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "lowercase")]
pub enum ReceiveSpec {
    #[default]
    Identity,
    /// `channels` contiguous elements centred on each STA transmit element.
    Centered { channels: usize },
    /// One row of element indices per acquisition.
    Explicit { table: Vec<Vec<usize>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeZeroSpec {
    Uniform(f64),
    PerAcquisition(Vec<f64>),
}

impl Default for TimeZeroSpec {
    fn default() -> Self {
        TimeZeroSpec::Uniform(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextSpec {
    pub speed_of_sound: f64,
    pub sampling_frequency: f64,
    pub n_elements: usize,
    pub pitch: f64,
    #[serde(default)]
    pub time_zero_offset: TimeZeroSpec,
    pub transmit: TransmitSpec,
    #[serde(default)]
    pub receive: ReceiveSpec,
}

impl ContextSpec {
    pub fn build(&self) -> Result<AcquisitionContext> {
        let tx = match &self.transmit {
            TransmitSpec::Sta { elements } => {
                TxScheme::Sta(elements.clone().unwrap_or_else(|| (0..self.n_elements).collect()))
            }
            TransmitSpec::Pw { angles: Some(a), angles_deg: None } => TxScheme::Pw(a.clone()),
            TransmitSpec::Pw { angles: None, angles_deg: Some(d) } => {
                TxScheme::Pw(d.iter().map(|v| v.to_radians()).collect())
            }
            TransmitSpec::Pw { .. } => {
                return Err(Error::Config(
                    "plane-wave transmit needs exactly one of `angles` or `angles_deg`".into(),
                ))
            }
        };
        let n_tx = tx.len();
        let rx = match &self.receive {
            ReceiveSpec::Identity => RxMap::Identity,
            ReceiveSpec::Centered { channels } => match &tx {
                TxScheme::Sta(elems) => RxMap::centered_on_transmit(elems, *channels, self.n_elements)?,
                TxScheme::Pw(_) => {
                    return Err(Error::Config("centered receive map needs an STA transmit".into()))
                }
            },
            ReceiveSpec::Explicit { table } => {
                let cols = table.first().map_or(0, Vec::len);
                if table.iter().any(|r| r.len() != cols) {
                    return Err(Error::Config("explicit receive table rows differ in length".into()));
                }
                let flat: Vec<usize> = table.iter().flatten().copied().collect();
                RxMap::Explicit(
                    Array2::from_shape_vec((table.len(), cols), flat)
                        .map_err(|e| Error::Config(e.to_string()))?,
                )
            }
        };
        let t0 = match &self.time_zero_offset {
            TimeZeroSpec::Uniform(t) => vec![*t; n_tx],
            TimeZeroSpec::PerAcquisition(v) => v.clone(),
        };
        AcquisitionContext::builder(
            self.speed_of_sound,
            self.sampling_frequency,
            self.n_elements,
            self.pitch,
            tx,
        )
        .rx_map(rx)
        .time_zero(t0)
        .build()
    }

    /// Fully explicit description of `ctx`; building it yields an equal
    /// context.
    pub fn from_context(ctx: &AcquisitionContext) -> Self {
        let transmit = match ctx.tx() {
            TxScheme::Sta(e) => TransmitSpec::Sta {
                elements: Some(e.clone()),
            },
            TxScheme::Pw(a) => TransmitSpec::Pw {
                angles: Some(a.clone()),
                angles_deg: None,
            },
        };
        let receive = match ctx.rx_map() {
            RxMap::Identity => ReceiveSpec::Identity,
            RxMap::Explicit(t) => ReceiveSpec::Explicit {
                table: t.outer_iter().map(|r| r.to_vec()).collect(),
            },
        };
        ContextSpec {
            speed_of_sound: ctx.speed_of_sound(),
            sampling_frequency: ctx.sampling_frequency(),
            n_elements: ctx.n_elements(),
            pitch: ctx.pitch(),
            time_zero_offset: TimeZeroSpec::PerAcquisition(ctx.time_zero().to_vec()),
            transmit,
            receive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub center_frequency: f64,
    pub n_cycles: u32,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default, rename = "scatterer")]
    pub scatterers: Vec<Scatterer>,
}

impl PhantomSpec {
    pub fn build(&self) -> Result<Phantom> {
        Phantom::new(
            self.scatterers.clone(),
            Pulse {
                center_frequency: self.center_frequency,
                n_cycles: self.n_cycles,
            },
        )
    }
}

pub fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| {
        let at = e.span().map(|span| {
            let before = &text[..span.start];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!(" at line {line}, column {column}")
        });
        Error::Config(format!("{}{}", e.message().trim(), at.unwrap_or_default()))
    })
}

pub fn load_toml<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_toml(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn load_context(path: impl AsRef<Path>) -> Result<AcquisitionContext> {
    load_toml::<ContextSpec>(path)?.build()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sta_spec_with_centered_map() {
        let spec: ContextSpec = parse_toml(
            r#"
            speed_of_sound = 1540.0
            sampling_frequency = 40e6
            n_elements = 128
            pitch = 0.3e-3

            [transmit]
            scheme = "sta"

            [receive]
            map = "centered"
            channels = 64
            "#,
        )
        .unwrap();
        let ctx = spec.build().unwrap();
        assert_eq!(ctx.n_tx(), 128);
        assert!(matches!(ctx.rx_map(), RxMap::Explicit(t) if t.dim() == (128, 64)));
    }

    #[test]
    fn pw_spec_in_degrees() {
        let spec: ContextSpec = parse_toml(
            r#"
            speed_of_sound = 1540.0
            sampling_frequency = 40e6
            n_elements = 16
            pitch = 0.2e-3
            time_zero_offset = 1e-6
            transmit = { scheme = "pw", angles_deg = [-10.0, 0.0, 10.0] }
            "#,
        )
        .unwrap();
        let ctx = spec.build().unwrap();
        assert_eq!(ctx.tx(), &TxScheme::Pw(vec![-10f64.to_radians(), 0.0, 10f64.to_radians()]));
        assert_eq!(ctx.time_zero(), &[1e-6; 3]);
    }

    #[test]
    fn explicit_round_trip_through_toml() {
        let tx = vec![0, 2, 5];
        let ctx = AcquisitionContext::builder(1540.5, 31.25e6, 6, 0.31e-3, TxScheme::Sta(tx.clone()))
            .rx_map(RxMap::centered_on_transmit(&tx, 3, 6).unwrap())
            .time_zero(vec![0.1e-6, 0.0, 1.0 / 3.0 * 1e-6])
            .build()
            .unwrap();
        let text = toml::to_string(&ContextSpec::from_context(&ctx)).unwrap();
        let back = parse_toml::<ContextSpec>(&text).unwrap().build().unwrap();
        assert_eq!(back, ctx);
    }

    #[test]
    fn rejects_both_angle_forms_and_unknown_fields() {
        let both = r#"
            speed_of_sound = 1540.0
            sampling_frequency = 40e6
            n_elements = 4
            pitch = 0.2e-3
            transmit = { scheme = "pw", angles = [0.0], angles_deg = [0.0] }
        "#;
        assert!(parse_toml::<ContextSpec>(both).unwrap().build().is_err());
        let unknown = r#"
            speed_of_sound = 1540.0
            sampling_frequency = 40e6
            n_elements = 4
            pitch = 0.2e-3
            colour = "blue"
            transmit = { scheme = "sta" }
        "#;
        assert!(parse_toml::<ContextSpec>(unknown).is_err());
    }

    #[test]
    fn phantom_spec() {
        let spec: PhantomSpec = parse_toml(
            r#"
            center_frequency = 5e6
            n_cycles = 2

            [[scatterer]]
            x = 0.0
            z = 0.02
            amplitude = 1.0

            [[scatterer]]
            x = 1e-3
            z = 0.025
            amplitude = 0.5
            "#,
        )
        .unwrap();
        let p = spec.build().unwrap();
        assert_eq!(p.scatterers.len(), 2);
        assert_eq!(spec.noise_std, 0.0);
    }
}
