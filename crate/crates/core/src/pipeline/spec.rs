//! Declarative pipeline description.
//!
//! ```toml
//! outputs = ["dynamic_adjustment"]
//!
//! [[node]]
//! name = "beamforming"
//! op = "beamform"
//! inputs = ["input"]
//! params = { interpolation = "linear", f_number = 0.0 }
//!
//! [[node]]
//! name = "analytic_signal"
//! op = "analytic_signal"
//! inputs = ["beamforming"]
//! ```
//!
//! `input` is the reserved name of the observation fed to the graph. Each
//! entry of `inputs` is one edge into the node's next positional port.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::config::{load_toml, parse_toml};

pub const INPUT: &str = "input";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub name: String,
    pub op: String,
    #[serde(default)]
    pub inputs: Vec<String>,
    #[serde(default)]
    pub params: toml::Table,
}

impl NodeSpec {
    pub fn new(name: &str, op: &str, inputs: &[&str]) -> Self {
        NodeSpec {
            name: name.to_string(),
            op: op.to_string(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            params: toml::Table::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    #[serde(rename = "node")]
    pub nodes: Vec<NodeSpec>,
    pub outputs: Vec<String>,
}

impl PipelineSpec {
    pub fn parse(text: &str) -> Result<Self> {
        parse_toml(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_toml(path)
    }

    /// Beamforming, analytic signal, absolute value, dynamic adjustment.
    pub fn bmode_chain(range_db: f64) -> Self {
        PipelineSpec {
            nodes: vec![
                NodeSpec::new("beamforming", "beamform", &[INPUT]),
                NodeSpec::new("analytic_signal", "analytic_signal", &["beamforming"]),
                NodeSpec::new("absolute_value", "absolute_value", &["analytic_signal"]),
                NodeSpec::new("dynamic_adjustment", "dynamic_adjustment", &["absolute_value"])
                    .param("range_db", range_db),
            ],
            outputs: vec!["dynamic_adjustment".into()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_description() {
        let spec = PipelineSpec::parse(
            r#"
            outputs = ["d"]
            [[node]]
            name = "b"
            op = "beamform"
            inputs = ["input"]
            params = { interpolation = "nearest" }
            [[node]]
            name = "d"
            op = "identity"
            inputs = ["b"]
            "#,
        )
        .unwrap();
        assert_eq!(spec.nodes.len(), 2);
        assert_eq!(spec.nodes[0].params["interpolation"].as_str(), Some("nearest"));
    }

    #[test]
    fn chain_survives_toml_round_trip() {
        let spec = PipelineSpec::bmode_chain(30.0);
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(PipelineSpec::parse(&text).unwrap(), spec);
    }
}
