//! Versioned binary checkpoint: config, seed, parameters, and batch-norm
//! running statistics.

use super::{Detector, DetectorConfig, ModelError};
use crate::hash::sha256_hex;
use crate::scalar::Scalar;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"MCDET1";
const FORMAT_VERSION: u32 = 1;

pub fn save_checkpoint<S: Scalar>(
    detector: &mut Detector<S>,
    path: &Path,
) -> Result<(), ModelError> {
    let config_json = serde_json::to_vec(detector.config())
        .map_err(|e| ModelError::BadCheckpoint(format!("config serialization: {e}")))?;
    let config_hash = sha256_hex(&config_json);

    let state = detector.named_state();
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u8(S::BITS)?;
    w.write_u32::<LittleEndian>(config_json.len() as u32)?;
    w.write_all(&config_json)?;
    w.write_all(config_hash.as_bytes())?;
    w.write_u32::<LittleEndian>(state.len() as u32)?;
    for (name, data, shape) in &state {
        w.write_u16::<LittleEndian>(name.len() as u16)?;
        w.write_all(name.as_bytes())?;
        w.write_u8(shape.len() as u8)?;
        for &d in shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in data {
            match S::BITS {
                32 => w.write_f32::<LittleEndian>(v.as_f64() as f32)?,
                _ => w.write_f64::<LittleEndian>(v.as_f64())?,
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Load a checkpoint, rebuilding the detector from its embedded config.
///
/// The stored config hash is recomputed and compared, so a checkpoint whose
/// config bytes were altered after saving is rejected.
pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<Detector<S>, ModelError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadCheckpoint(format!(
            "bad magic header {:?}, expected {:?}",
            String::from_utf8_lossy(&magic),
            String::from_utf8_lossy(CHECKPOINT_MAGIC)
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != FORMAT_VERSION {
        return Err(ModelError::BadCheckpoint(format!(
            "unsupported format version {version}"
        )));
    }
    let bits = r.read_u8()?;
    if bits != S::BITS {
        return Err(ModelError::BadCheckpoint(format!(
            "checkpoint holds {bits}-bit values, loader expects {}-bit",
            S::BITS
        )));
    }
    let config_len = r.read_u32::<LittleEndian>()? as usize;
    let mut config_json = vec![0u8; config_len];
    r.read_exact(&mut config_json)?;
    let mut stored_hash = vec![0u8; 64];
    r.read_exact(&mut stored_hash)?;
    if sha256_hex(&config_json).as_bytes() != stored_hash.as_slice() {
        return Err(ModelError::BadCheckpoint(
            "config hash mismatch: checkpoint config was altered".into(),
        ));
    }
    let config: DetectorConfig = serde_json::from_slice(&config_json)
        .map_err(|e| ModelError::BadCheckpoint(format!("config parse: {e}")))?;

    let n_tensors = r.read_u32::<LittleEndian>()? as usize;
    let mut state = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let name_len = r.read_u16::<LittleEndian>()? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| ModelError::BadCheckpoint("non-utf8 tensor name".into()))?;
        let ndim = r.read_u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.read_u32::<LittleEndian>()? as usize);
        }
        let count: usize = shape.iter().product();
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            let v = match S::BITS {
                32 => S::from_f64(r.read_f32::<LittleEndian>()? as f64),
                _ => S::from_f64(r.read_f64::<LittleEndian>()?),
            };
            data.push(v);
        }
        state.push((name, data, shape));
    }

    let mut detector = super::build_detector::<S>(&config)?;
    detector.load_state(&state)?;
    Ok(detector)
}
