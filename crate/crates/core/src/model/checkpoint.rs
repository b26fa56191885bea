//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes  "HIMNETCK"
//! version    u32
//! dtype      u8 length + "f32" | "f64"
//! config     u64 length + JSON {"model": ModelConfig, "run": any}
//! count      u32
//! tensors    count × (u16 name length, name, u8 rank, rank × u64 dims,
//!                     product(dims) little-endian IEEE-754 values)
//! ```

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use super::{ModelConfig, ModelError, ModelParams};
use crate::diffkernel::{Real, Tensor};

const MAGIC: &[u8; 8] = b"HIMNETCK";
const VERSION: u32 = 1;

/// Parameters plus the run configuration they were trained under.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<T> {
    pub params: ModelParams<T>,
    pub run_config: Value,
}

pub fn save_checkpoint<T: Real>(
    path: &Path,
    params: &ModelParams<T>,
    run_config: &Value,
) -> Result<(), ModelError> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(T::NAME.len() as u8);
    out.extend_from_slice(T::NAME.as_bytes());
    let config = json!({ "model": params.config, "run": run_config }).to_string();
    out.extend_from_slice(&(config.len() as u64).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    let named = params.named();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    fs::write(path, out).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, message: impl Into<String>) -> ModelError {
        ModelError::Checkpoint {
            path: self.path.to_path_buf(),
            message: message.into(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, n: usize) -> Result<String, ModelError> {
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.fail("invalid utf-8"))
    }

    fn values<S: Real, T: Real>(&mut self, len: usize) -> Result<Vec<T>, ModelError> {
        let raw = self.take(len * S::BYTES)?;
        Ok(raw
            .chunks_exact(S::BYTES)
            .map(|c| T::of_f64(S::read_le(c).as_f64()))
            .collect())
    }
}

/// Loads a checkpoint written by [`save_checkpoint`], converting values to
/// `T` if needed. When `expected` is given, its shapes must match.
pub fn load_checkpoint<T: Real>(
    path: &Path,
    expected: Option<&ModelConfig>,
) -> Result<Checkpoint<T>, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if r.take(8)? != MAGIC {
        return Err(r.fail("not a checkpoint file"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported version {version}")));
    }
    let n = r.u8()? as usize;
    let dtype = r.string(n)?;
    let n = r.u64()? as usize;
    let config_text = r.string(n)?;
    let mut config: Value = serde_json::from_str(&config_text).map_err(|e| r.fail(format!("config: {e}")))?;
    let model: ModelConfig =
        serde_json::from_value(config["model"].take()).map_err(|e| r.fail(format!("model config: {e}")))?;
    model.validate()?;
    let run_config = config["run"].take();

    let shapes = ModelParams::<T>::expected_shapes(&model);
    if let Some(exp) = expected {
        let want = ModelParams::<T>::expected_shapes(exp);
        if want != shapes {
            return Err(r.fail(format!(
                "shape mismatch: checkpoint has {shapes:?}, expected {want:?}"
            )));
        }
    }
    let count = r.u32()? as usize;
    if count != shapes.len() {
        return Err(r.fail(format!("{count} tensors, expected {}", shapes.len())));
    }
    let mut tensors = Vec::with_capacity(count);
    for (want_name, want_shape) in &shapes {
        let n = r.u16()? as usize;
        let name = r.string(n)?;
        let rank = r.u8()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &name != want_name || &shape != want_shape {
            return Err(r.fail(format!(
                "shape mismatch: tensor {name} {shape:?}, expected {want_name} {want_shape:?}"
            )));
        }
        let len = shape.iter().product();
        let data = match dtype.as_str() {
            "f32" => r.values::<f32, T>(len)?,
            "f64" => r.values::<f64, T>(len)?,
            other => return Err(r.fail(format!("unknown dtype {other}"))),
        };
        tensors.push(Tensor::new(shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(r.fail("trailing bytes"));
    }

    let mut it = tensors.into_iter();
    let n_enc = model.encoder_dims.len();
    let encoder = it.by_ref().take(n_enc).collect();
    let attr_decoder = it.by_ref().take(2).collect();
    let node_memory = if model.variant.uses_node_memory() {
        it.next()
    } else {
        None
    };
    let graph_memory = if model.variant.uses_graph_memory() {
        it.next()
    } else {
        None
    };
    let params = ModelParams {
        config: model,
        encoder,
        attr_decoder,
        node_memory,
        graph_memory,
    };
    if !params.all_finite() {
        return Err(r.fail("non-finite parameter"));
    }
    Ok(Checkpoint { params, run_config })
}
