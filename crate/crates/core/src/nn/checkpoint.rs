//! Binary parameter checkpoints.
//!
//! One ASCII header line
//! `shortcut-unlearn-checkpoint v1 input=<d> hidden=<h1,h2,..> classes=<K> activation=<tanh|relu>`
//! followed by the parameter values as little-endian IEEE-754 doubles.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::mlp::{Activation, MlpSpec, Params};
use crate::scalar::Scalar;

pub const FORMAT_NAME: &str = "shortcut-unlearn-checkpoint";
pub const FORMAT_VERSION: &str = "v1";

fn header(spec: &MlpSpec) -> String {
    let hidden: Vec<String> = spec.hidden_dims().iter().map(|h| h.to_string()).collect();
    format!(
        "{FORMAT_NAME} {FORMAT_VERSION} input={} hidden={} classes={} activation={}\n",
        spec.input_dim(),
        hidden.join(","),
        spec.num_classes(),
        spec.activation()
    )
}

pub fn encode<S: Scalar>(params: &Params<S>) -> Vec<u8> {
    let mut out = header(params.spec()).into_bytes();
    out.reserve(params.len() * 8);
    for v in params.values() {
        out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
    }
    out
}

pub fn decode<S: Scalar>(bytes: &[u8], path: &Path) -> Result<Params<S>> {
    let err = |message: String| Error::Checkpoint {
        path: path.to_path_buf(),
        message,
    };
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| err("missing header line".into()))?;
    let head = std::str::from_utf8(&bytes[..nl]).map_err(|_| err("header is not UTF-8".into()))?;
    let mut parts = head.split(' ');
    if parts.next() != Some(FORMAT_NAME) {
        return Err(err(format!("not a {FORMAT_NAME} file")));
    }
    match parts.next() {
        Some(FORMAT_VERSION) => {}
        other => return Err(err(format!("unsupported version {other:?}"))),
    }
    let (mut input, mut hidden, mut classes, mut activation) = (None, None, None, None);
    for kv in parts {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| err(format!("malformed header field `{kv}`")))?;
        let num = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(format!("bad {k} `{s}`")))
        };
        match k {
            "input" => input = Some(num(v)?),
            "classes" => classes = Some(num(v)?),
            "hidden" => {
                hidden = Some(if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(num).collect::<Result<Vec<_>>>()?
                })
            }
            "activation" => activation = Some(v.parse::<Activation>()?),
            _ => return Err(err(format!("unknown header field `{k}`"))),
        }
    }
    let missing = |f: &str| err(format!("header lacks `{f}`"));
    let spec = MlpSpec::new(
        input.ok_or_else(|| missing("input"))?,
        hidden.ok_or_else(|| missing("hidden"))?,
        classes.ok_or_else(|| missing("classes"))?,
        activation.ok_or_else(|| missing("activation"))?,
    )?;
    let body = &bytes[nl + 1..];
    if body.len() != spec.param_count() * 8 {
        return Err(err(format!(
            "expected {} parameters ({} bytes), found {} bytes",
            spec.param_count(),
            spec.param_count() * 8,
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| S::of(f64::from_le_bytes(c.try_into().expect("chunk of 8"))))
        .collect();
    Params::from_values(&spec, values)
}

pub fn save<S: Scalar>(params: &Params<S>, path: &Path) -> Result<()> {
    fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load<S: Scalar>(path: &Path) -> Result<Params<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
