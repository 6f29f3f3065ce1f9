//! Binary checkpoint: `FTNC`, version, configuration text, then every
//! parameter as name, shape and row-major `f32` values (all little-endian).

use std::path::Path;

use crate::data_io::binary::{count_u32, put_f32s, put_str, put_u32, ByteReader};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::numerics::{Matrix, ParameterStore};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FTNC";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(config: &ModelConfig, store: &ParameterStore<T>) -> Result<Vec<u8>> {
    config.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_str(&mut out, &config.to_toml());
    put_u32(&mut out, count_u32(store.len(), "parameter count")?);
    for (name, m) in store.iter() {
        put_str(&mut out, name);
        put_u32(&mut out, count_u32(m.rows(), "rows")?);
        put_u32(&mut out, count_u32(m.cols(), "cols")?);
        put_f32s(&mut out, m.data().iter().map(|v| v.to_f32_lossy()));
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelConfig, ParameterStore<f32>)> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(CHECKPOINT_MAGIC)?;
    let version = r.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Parse {
            offset: r.offset() - 4,
            msg: format!("unsupported checkpoint version {version}"),
        });
    }
    let cfg_offset = r.offset();
    let text = r.string("model config")?;
    let config = ModelConfig::from_toml(&text).map_err(|e| Error::Parse {
        offset: cfg_offset,
        msg: format!("model config: {e}"),
    })?;
    let n = r.u32("parameter count")? as usize;
    let mut store = ParameterStore::new();
    for _ in 0..n {
        let at = r.offset();
        let name = r.string("parameter name")?;
        let rows = r.u32("rows")? as usize;
        let cols = r.u32("cols")? as usize;
        let data = r.f32s(rows.saturating_mul(cols), &format!("values of {name}"))?;
        let m = Matrix::from_vec(rows, cols, data)?;
        store.insert(name, m).map_err(|e| Error::Parse { offset: at, msg: e.to_string() })?;
    }
    r.finish()?;
    Ok((config, store))
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, config: &ModelConfig, store: &ParameterStore<T>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(config, store)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelConfig, ParameterStore<f32>)> {
    decode_checkpoint(&std::fs::read(path)?)
}
