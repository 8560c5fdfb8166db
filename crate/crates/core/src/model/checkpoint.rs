//! Plain-text checkpoint format.
//!
//! ```text
//! BACE-RUL v1
//! variant none
//! dims <m> <n> <d_z> <rul_cap>
//! rul_scale <v>
//! norm_mean <m values>
//! norm_std <m values>
//! net e1
//! dropout <rate>
//! layers <count>
//! layer <in> <out> <activation>
//! w <out*in values, row-major>
//! b <out values>
//! ...                      (layer/w/b per layer, then g1, d1, e2, g2, d2)
//! end
//! ```
//!
//! Reals are written with 17 significant digits, so reading a checkpoint
//! reproduces every parameter bit for bit.

use std::fs;
use std::path::Path;

use super::{BaceRulModel, Dimensions, Net, Nets, Variant};
use crate::data::Normalizer;
use crate::error::{Error, Result};
use crate::nn::{Activation, Layer, LayerSpec, MlpParams, MlpSpec};

pub const CHECKPOINT_HEADER: &str = "BACE-RUL v1";

fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_values(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        out.push(' ');
        out.push_str(&real(*v));
    }
    out.push('\n');
}

pub fn write_checkpoint(model: &BaceRulModel) -> String {
    let mut out = String::new();
    out.push_str(CHECKPOINT_HEADER);
    out.push('\n');
    out.push_str(&format!("variant {}\n", model.variant.name()));
    let d = model.dims;
    out.push_str(&format!("dims {} {} {} {}\n", d.m, d.n, d.d_z, d.rul_cap));
    out.push_str(&format!("rul_scale {}\n", real(model.rul_scale)));
    push_values(&mut out, "norm_mean", &model.normalizer.mean);
    push_values(&mut out, "norm_std", &model.normalizer.std);
    for net in Net::ALL {
        let p = model.nets.get(net);
        out.push_str(&format!("net {}\n", net.name()));
        out.push_str(&format!("dropout {}\n", real(p.spec().dropout_rate)));
        out.push_str(&format!("layers {}\n", p.layers().len()));
        for (spec, layer) in p.spec().layers.iter().zip(p.layers()) {
            out.push_str(&format!(
                "layer {} {} {}\n",
                spec.in_dim,
                spec.out_dim,
                spec.activation.name()
            ));
            push_values(&mut out, "w", &layer.weights);
            push_values(&mut out, "b", &layer.biases);
        }
    }
    out.push_str("end\n");
    out
}

pub fn save_checkpoint(model: &BaceRulModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<BaceRulModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    /// Next line, split into its keyword and the remaining fields.
    fn expect(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (idx, line) = self
            .inner
            .next()
            .ok_or_else(|| ckpt(format!("truncated: expected `{key}`")))?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some(k) if k == key => Ok((idx + 1, fields.collect())),
            other => Err(ckpt(format!(
                "line {}: expected `{key}`, found `{}`",
                idx + 1,
                other.unwrap_or("")
            ))),
        }
    }

    fn reals(&mut self, key: &str, count: usize) -> Result<Vec<f64>> {
        let (line, fields) = self.expect(key)?;
        if fields.len() != count {
            return Err(ckpt(format!(
                "line {line}: `{key}` has {} values, expected {count}",
                fields.len()
            )));
        }
        fields
            .iter()
            .map(|f| match f.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(ckpt(format!("line {line}: bad value `{f}`"))),
            })
            .collect()
    }

    fn integers(&mut self, key: &str, count: usize) -> Result<Vec<usize>> {
        let (line, fields) = self.expect(key)?;
        if fields.len() != count {
            return Err(ckpt(format!("line {line}: `{key}` expects {count} integers")));
        }
        fields
            .iter()
            .map(|f| {
                f.parse::<usize>()
                    .map_err(|_| ckpt(format!("line {line}: bad integer `{f}`")))
            })
            .collect()
    }
}

fn ckpt(msg: String) -> Error {
    Error::Checkpoint(msg)
}

pub fn read_checkpoint(text: &str) -> Result<BaceRulModel> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    match lines.inner.next() {
        Some((_, h)) if h.trim_end() == CHECKPOINT_HEADER => {}
        Some((_, h)) => {
            return Err(ckpt(format!(
                "unsupported header `{h}`, expected `{CHECKPOINT_HEADER}`"
            )))
        }
        None => return Err(ckpt("empty checkpoint".into())),
    }

    let (line, fields) = lines.expect("variant")?;
    let variant = fields
        .first()
        .and_then(|v| Variant::from_name(v))
        .ok_or_else(|| ckpt(format!("line {line}: unknown variant")))?;
    let d = lines.integers("dims", 4)?;
    let rul_cap = u32::try_from(d[3]).map_err(|_| ckpt("rul_cap out of range".into()))?;
    let dims = Dimensions {
        m: d[0],
        n: d[1],
        d_z: d[2],
        rul_cap,
    };
    let rul_scale = lines.reals("rul_scale", 1)?[0];
    let mean = lines.reals("norm_mean", dims.m)?;
    let std = lines.reals("norm_std", dims.m)?;
    if std.iter().any(|&s| s <= 0.0) {
        return Err(ckpt("normalizer std must be positive".into()));
    }

    let mut read_net = |net: Net| -> Result<MlpParams> {
        let (line, fields) = lines.expect("net")?;
        if fields.first() != Some(&net.name()) {
            return Err(ckpt(format!("line {line}: expected network {}", net.name())));
        }
        let dropout_rate = lines.reals("dropout", 1)?[0];
        let count = lines.integers("layers", 1)?[0];
        let mut specs = Vec::with_capacity(count);
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let (line, f) = lines.expect("layer")?;
            if f.len() != 3 {
                return Err(ckpt(format!("line {line}: malformed layer line")));
            }
            let in_dim: usize = f[0].parse().map_err(|_| ckpt(format!("line {line}: bad in_dim")))?;
            let out_dim: usize = f[1].parse().map_err(|_| ckpt(format!("line {line}: bad out_dim")))?;
            let activation = Activation::from_name(f[2])
                .ok_or_else(|| ckpt(format!("line {line}: unknown activation `{}`", f[2])))?;
            specs.push(LayerSpec {
                in_dim,
                out_dim,
                activation,
            });
            let weights = lines.reals("w", in_dim * out_dim)?;
            let biases = lines.reals("b", out_dim)?;
            layers.push(Layer { weights, biases });
        }
        let spec = MlpSpec {
            layers: specs,
            dropout_rate,
        };
        MlpParams::from_layers(spec, layers)
            .map_err(|e| ckpt(format!("network {}: {e}", net.name())))
    };
    let nets = Nets {
        e1: read_net(Net::E1)?,
        g1: read_net(Net::G1)?,
        d1: read_net(Net::D1)?,
        e2: read_net(Net::E2)?,
        g2: read_net(Net::G2)?,
        d2: read_net(Net::D2)?,
    };
    lines.expect("end")?;
    if let Some((idx, extra)) = lines.inner.find(|(_, l)| !l.trim().is_empty()) {
        return Err(ckpt(format!("line {}: unexpected content `{extra}` after end", idx + 1)));
    }

    let model = BaceRulModel::from_parts(nets, dims, variant, Normalizer { mean, std })
        .map_err(|e| ckpt(e.to_string()))?;
    if model.rul_scale != rul_scale {
        return Err(ckpt(format!(
            "rul_scale {rul_scale} disagrees with rul_cap {}",
            dims.rul_cap
        )));
    }
    Ok(model)
}
