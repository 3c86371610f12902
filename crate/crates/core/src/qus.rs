//! Quantitative-ultrasound hooks: windowed raw moments of the envelope and
//! a small fully connected network mapping `(E[X], E[X^2], E[X^3])` to
//! homodyned-K parameter estimates `(u, k)`. Inference only.
//!
//! # Model file
//!
//! A text header followed by a binary parameter block:
//!
//! ```text
//! HKDENSE 1
//! layers <n>
//! <in> <out> <activation>      (one line per layer; relu | identity | softplus)
//! end
//! ```
//!
//! After the `end\n` line, for each layer in order: the `out x in` weight
//! matrix row-major, then the `out` biases, all little-endian `f64`.

use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MODEL_MAGIC: &str = "HKDENSE";
pub const MODEL_INPUTS: usize = 3;
pub const MODEL_OUTPUTS: usize = 2;

/// Raw moment maps over a sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentMaps {
    pub m1: Array2<f64>,
    pub m2: Array2<f64>,
    pub m3: Array2<f64>,
    pub window: (usize, usize),
    pub stride: (usize, usize),
}

impl MomentMaps {
    pub fn shape(&self) -> (usize, usize) {
        self.m1.dim()
    }
}

/// Means of `X`, `X^2` and `X^3` for every window placement. The output
/// grid has `floor((dim - win) / stride) + 1` cells per axis. `m2` is kept
/// at least `m1^2` so the implied variance never goes negative through
/// rounding.
pub fn sliding_moments<T: Real>(
    image: ArrayView2<T>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<MomentMaps> {
    let (rows, cols) = image.dim();
    let (wh, ww) = window;
    let (sh, sw) = stride;
    if wh == 0 || ww == 0 || wh > rows || ww > cols {
        return Err(Error::WindowTooLarge {
            window,
            image: (rows, cols),
        });
    }
    if sh == 0 || sw == 0 {
        return Err(Error::metadata("stride", "strides must be at least 1"));
    }
    let out = ((rows - wh) / sh + 1, (cols - ww) / sw + 1);
    let count = (wh * ww) as f64;
    let mut m1 = Array2::zeros(out);
    let mut m2 = Array2::zeros(out);
    let mut m3 = Array2::zeros(out);
    for ((r, c), v1) in m1.indexed_iter_mut() {
        let patch = image.slice(s![r * sh..r * sh + wh, c * sw..c * sw + ww]);
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for &x in patch {
            let x = x.as_f64();
            let x2 = x * x;
            s1 += x;
            s2 += x2;
            s3 += x2 * x;
        }
        let mean = s1 / count;
        *v1 = mean;
        m2[[r, c]] = (s2 / count).max(mean * mean);
        m3[[r, c]] = s3 / count;
    }
    Ok(MomentMaps {
        m1,
        m2,
        m3,
        window,
        stride,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
    Softplus,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
            // ln(1 + e^v) without overflow for large v
            Activation::Softplus => v.max(0.0) + (-v.abs()).exp().ln_1p(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Softplus => "softplus",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Self::Relu),
            "identity" => Ok(Self::Identity),
            "softplus" => Ok(Self::Softplus),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// `out x in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    layers: Vec<DenseLayer>,
}

impl DenseModel {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ModelDimension {
                layer: 0,
                reason: "model has no layers".into(),
            });
        }
        let mut width = MODEL_INPUTS;
        for (i, l) in layers.iter().enumerate() {
            let (out, inp) = l.weights.dim();
            if inp != width {
                return Err(Error::ModelDimension {
                    layer: i,
                    reason: format!("expects {inp} inputs, previous width is {width}"),
                });
            }
            if l.bias.len() != out {
                return Err(Error::ModelDimension {
                    layer: i,
                    reason: format!("{} biases for {out} outputs", l.bias.len()),
                });
            }
            if l.weights.iter().chain(l.bias.iter()).any(|v| !v.is_finite()) {
                return Err(Error::ModelDimension {
                    layer: i,
                    reason: "non-finite parameter".into(),
                });
            }
            width = out;
        }
        if width != MODEL_OUTPUTS {
            return Err(Error::ModelDimension {
                layer: layers.len() - 1,
                reason: format!("final width {width}, expected {MODEL_OUTPUTS}"),
            });
        }
        Ok(DenseModel { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }
}

/// `(u, k)` estimate for one window.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HkParams {
    pub u: f64,
    pub k: f64,
}

/// Affine-then-activation through every layer.
pub fn dense_forward(x: &[f64], model: &DenseModel) -> Result<[f64; 2]> {
    if x.len() != MODEL_INPUTS {
        return Err(Error::ModelDimension {
            layer: 0,
            reason: format!("input has width {}, expected {MODEL_INPUTS}", x.len()),
        });
    }
    let mut h = x.to_vec();
    for layer in &model.layers {
        h = layer
            .weights
            .outer_iter()
            .zip(&layer.bias)
            .map(|(row, &b)| {
                let pre = row.iter().zip(&h).fold(0.0, |acc, (w, v)| acc + w * v) + b;
                layer.activation.apply(pre)
            })
            .collect();
    }
    Ok([h[0], h[1]])
}

/// Per-window `(u, k)` map on the moment grid.
pub fn estimate_hk_map<T: Real>(
    image: ArrayView2<T>,
    window: (usize, usize),
    stride: (usize, usize),
    model: &DenseModel,
) -> Result<Array2<HkParams>> {
    let moments = sliding_moments(image, window, stride)?;
    estimate_from_moments(&moments, model)
}

pub fn estimate_from_moments(moments: &MomentMaps, model: &DenseModel) -> Result<Array2<HkParams>> {
    let mut out = Array2::default(moments.shape());
    for (idx, cell) in out.indexed_iter_mut() {
        let [u, k] = dense_forward(&[moments.m1[idx], moments.m2[idx], moments.m3[idx]], model)?;
        *cell = HkParams { u, k };
    }
    Ok(out)
}

pub fn encode_model(model: &DenseModel) -> Vec<u8> {
    let mut header = format!("{MODEL_MAGIC} 1\nlayers {}\n", model.layers.len());
    for l in &model.layers {
        let (out, inp) = l.weights.dim();
        header.push_str(&format!("{inp} {out} {}\n", l.activation.name()));
    }
    header.push_str("end\n");
    let mut bytes = header.into_bytes();
    for l in &model.layers {
        for &v in l.weights.iter().chain(l.bias.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    bytes
}

pub fn decode_model(bytes: &[u8]) -> Result<DenseModel> {
    let mut pos = 0usize;
    let mut next_line = || -> Result<(u64, &str)> {
        let start = pos;
        let end = bytes[start..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::format(start as u64, "unterminated header line"))?;
        pos = start + end + 1;
        let line = std::str::from_utf8(&bytes[start..start + end])
            .map_err(|_| Error::format(start as u64, "header is not UTF-8"))?;
        Ok((start as u64, line.trim()))
    };
    let (off, magic) = next_line()?;
    if magic != format!("{MODEL_MAGIC} 1") {
        return Err(Error::format(off, format!("expected `{MODEL_MAGIC} 1`, found `{magic}`")));
    }
    let (off, count) = next_line()?;
    let n_layers: usize = count
        .strip_prefix("layers ")
        .and_then(|n| n.trim().parse().ok())
        .ok_or_else(|| Error::format(off, "expected `layers <n>`"))?;
    let mut shapes = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (off, line) = next_line()?;
        let parts: Vec<&str> = line.split_whitespace().collect();
        let parsed = match parts.as_slice() {
            [i, o, a] => i
                .parse::<usize>()
                .ok()
                .zip(o.parse::<usize>().ok())
                .zip(a.parse::<Activation>().ok()),
            _ => None,
        };
        let ((inp, out), act) =
            parsed.ok_or_else(|| Error::format(off, format!("bad layer line `{line}`")))?;
        shapes.push((inp, out, act));
    }
    let (off, end) = next_line()?;
    if end != "end" {
        return Err(Error::format(off, "expected `end`"));
    }

    let mut cursor = pos;
    let mut take = |n: usize| -> Result<Vec<f64>> {
        let need = n * 8;
        if bytes.len() < cursor + need {
            return Err(Error::format(bytes.len() as u64, "truncated parameter block"));
        }
        let vals = bytes[cursor..cursor + need]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        cursor += need;
        Ok(vals)
    };
    let mut layers = Vec::with_capacity(n_layers);
    for (inp, out, activation) in shapes {
        let weights = Array2::from_shape_vec((out, inp), take(out * inp)?).expect("sized above");
        let bias = Array1::from(take(out)?);
        layers.push(DenseLayer {
            weights,
            bias,
            activation,
        });
    }
    if cursor != bytes.len() {
        return Err(Error::format(cursor as u64, "trailing bytes after parameters"));
    }
    DenseModel::new(layers)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DenseModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

pub fn save_model(model: &DenseModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn layer(w: Array2<f64>, b: Vec<f64>, activation: Activation) -> DenseLayer {
        DenseLayer {
            weights: w,
            bias: Array1::from(b),
            activation,
        }
    }

    fn hand_model() -> DenseModel {
        DenseModel::new(vec![layer(
            array![[1.0, 1.0, 1.0], [0.0, 0.0, 1.0]],
            vec![0.0, 1.0],
            Activation::Identity,
        )])
        .unwrap()
    }

    #[test]
    fn constant_image_moments() {
        let img = Array2::from_elem((6, 5), 2.0f64);
        let m = sliding_moments(img.view(), (3, 2), (1, 2)).unwrap();
        assert_eq!(m.shape(), (4, 2));
        assert!(m.m1.iter().all(|&v| v == 2.0));
        assert!(m.m2.iter().all(|&v| v == 4.0));
        assert!(m.m3.iter().all(|&v| v == 8.0));
    }

    #[test]
    fn two_by_two_moments() {
        let img = array![[0.0f64, 1.0], [2.0, 3.0]];
        let m = sliding_moments(img.view(), (2, 2), (1, 1)).unwrap();
        assert_eq!(m.shape(), (1, 1));
        assert_eq!(m.m1[[0, 0]], 1.5);
        assert_eq!(m.m2[[0, 0]], 3.5);
        assert_eq!(m.m3[[0, 0]], 9.0);
    }

    #[test]
    fn window_errors() {
        let img = Array2::<f64>::zeros((4, 4));
        assert!(matches!(
            sliding_moments(img.view(), (5, 1), (1, 1)),
            Err(Error::WindowTooLarge { .. })
        ));
        assert!(sliding_moments(img.view(), (2, 2), (0, 1)).is_err());
    }

    #[test]
    fn forward_examples() {
        let trunc = DenseModel::new(vec![layer(
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0.0, 0.0],
            Activation::Identity,
        )])
        .unwrap();
        assert_eq!(dense_forward(&[1.0, 2.0, 3.0], &trunc).unwrap(), [1.0, 2.0]);
        assert_eq!(dense_forward(&[1.0, 2.0, 3.0], &hand_model()).unwrap(), [6.0, 4.0]);
        let relu = DenseModel::new(vec![layer(
            array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0.0, 0.0],
            Activation::Relu,
        )])
        .unwrap();
        assert_eq!(dense_forward(&[-1.0, 5.0, 0.0], &relu).unwrap(), [0.0, 5.0]);
        assert!(dense_forward(&[1.0, 2.0], &relu).is_err());
    }

    #[test]
    fn model_chain_is_checked() {
        let bad = DenseModel::new(vec![
            layer(Array2::zeros((4, 3)), vec![0.0; 4], Activation::Relu),
            layer(Array2::zeros((2, 5)), vec![0.0; 2], Activation::Identity),
        ]);
        assert!(matches!(bad, Err(Error::ModelDimension { layer: 1, .. })));
        let wrong_out = DenseModel::new(vec![layer(Array2::zeros((3, 3)), vec![0.0; 3], Activation::Relu)]);
        assert!(matches!(wrong_out, Err(Error::ModelDimension { layer: 0, .. })));
    }

    #[test]
    fn zero_weight_model_gives_activated_bias() {
        let m = DenseModel::new(vec![
            layer(Array2::zeros((4, 3)), vec![0.5; 4], Activation::Relu),
            layer(Array2::zeros((2, 4)), vec![-1.0, 2.0], Activation::Softplus),
        ])
        .unwrap();
        let img = Array2::from_shape_fn((8, 8), |(r, c)| (r * 8 + c) as f64);
        let map = estimate_hk_map(img.view(), (4, 4), (2, 2), &m).unwrap();
        let want_u = (1.0f64 + (-1.0f64).exp()).ln();
        let want_k = (1.0f64 + 2.0f64.exp()).ln();
        for p in map {
            assert!((p.u - want_u).abs() < 1e-15 && (p.k - want_k).abs() < 1e-15);
        }
    }

    #[test]
    fn composed_hand_example() {
        // moments (1.5, 3.5, 9) through W = [[1,1,1],[0,0,1]], b = [0,1]
        let img = array![[0.0f64, 1.0], [2.0, 3.0]];
        let map = estimate_hk_map(img.view(), (2, 2), (1, 1), &hand_model()).unwrap();
        assert_eq!(map[[0, 0]], HkParams { u: 14.0, k: 10.0 });
    }

    #[test]
    fn model_file_round_trip_and_layout() {
        let m = DenseModel::new(vec![
            layer(Array2::from_shape_fn((4, 3), |(i, j)| i as f64 - 0.25 * j as f64), vec![0.1, 0.2, 0.3, 0.4], Activation::Relu),
            layer(Array2::from_shape_fn((2, 4), |(i, j)| (i + j) as f64 / 7.0), vec![-0.5, 0.5], Activation::Softplus),
        ])
        .unwrap();
        let bytes = encode_model(&m);
        let header = b"HKDENSE 1\nlayers 2\n3 4 relu\n4 2 softplus\nend\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 8 * (12 + 4 + 8 + 2));
        let w01 = f64::from_le_bytes(bytes[header.len() + 8..header.len() + 16].try_into().unwrap());
        assert_eq!(w01, -0.25);
        assert_eq!(decode_model(&bytes).unwrap(), m);
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_model(b"NOPE 1\n").is_err());
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(Activation::Softplus.apply(1000.0), 1000.0);
        assert!(Activation::Softplus.apply(-1000.0) >= 0.0);
        assert!((Activation::Softplus.apply(0.0) - 2f64.ln()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn variance_and_skew_sign_invariants(
            data in prop::collection::vec(0.0f64..50.0, 36),
            wh in 1usize..6, ww in 1usize..6, sh in 1usize..3, sw in 1usize..3,
        ) {
            let img = Array2::from_shape_vec((6, 6), data).unwrap();
            let m = sliding_moments(img.view(), (wh, ww), (sh, sw)).unwrap();
            prop_assert_eq!(m.shape(), ((6 - wh) / sh + 1, (6 - ww) / sw + 1));
            for idx in ndarray::indices(m.shape()) {
                prop_assert!(m.m2[idx] >= 0.0);
                prop_assert!(m.m2[idx] >= m.m1[idx] * m.m1[idx]);
                prop_assert!(m.m3[idx] >= 0.0);
            }
        }

        #[test]
        fn relu_model_is_positively_homogeneous(
            w1 in prop::collection::vec(-2.0f64..2.0, 12),
            w2 in prop::collection::vec(-2.0f64..2.0, 8),
            x in prop::collection::vec(-5.0f64..5.0, 3),
            k in 0.1f64..10.0,
        ) {
            let m = DenseModel::new(vec![
                layer(Array2::from_shape_vec((4, 3), w1).unwrap(), vec![0.0; 4], Activation::Relu),
                layer(Array2::from_shape_vec((2, 4), w2).unwrap(), vec![0.0; 2], Activation::Relu),
            ]).unwrap();
            let fx = dense_forward(&x, &m).unwrap();
            let kx: Vec<f64> = x.iter().map(|v| v * k).collect();
            let fkx = dense_forward(&kx, &m).unwrap();
            for i in 0..2 {
                prop_assert!((fkx[i] - k * fx[i]).abs() <= 1e-9 * (1.0 + fkx[i].abs()));
            }
        }

        #[test]
        fn map_equals_forward_over_moments(
            data in prop::collection::vec(0.0f64..3.0, 48),
            w in prop::collection::vec(-1.0f64..1.0, 6),
            b in prop::collection::vec(-1.0f64..1.0, 2),
        ) {
            let img = Array2::from_shape_vec((6, 8), data).unwrap();
            let m = DenseModel::new(vec![layer(Array2::from_shape_vec((2, 3), w).unwrap(), b, Activation::Softplus)]).unwrap();
            let map = estimate_hk_map(img.view(), (3, 3), (2, 2), &m).unwrap();
            let moments = sliding_moments(img.view(), (3, 3), (2, 2)).unwrap();
            for (idx, p) in map.indexed_iter() {
                let [u, k] = dense_forward(&[moments.m1[idx], moments.m2[idx], moments.m3[idx]], &m).unwrap();
                prop_assert_eq!(p.u, u);
                prop_assert_eq!(p.k, k);
                prop_assert!(u >= 0.0 && k >= 0.0);
            }
        }
    }
}
