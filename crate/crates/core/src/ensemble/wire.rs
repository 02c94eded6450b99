//! Versioned binary seed blobs.
//!
//! ```text
//! offset  size        field
//! 0       4           magic "HDUS"
//! 4       2           format version, u16 LE
//! 6       1           activation (0 = relu)
//! 7       4           number of layer dims D, u32 LE
//! 11      4·D         layer dims, u32 LE each
//! ..      8·P         parameters, f64 LE, per layer: weights row-major then biases
//! ..      4           CRC-32 (IEEE) of every preceding byte, u32 LE
//! ```

use crate::error::{Error, Result};
use crate::numeric::{Activation, MlpModel, MlpSpec};

pub const MAGIC: [u8; 4] = *b"HDUS";
pub const FORMAT_VERSION: u16 = 1;

/// Largest dims list accepted when decoding; keeps hostile headers from
/// driving huge allocations.
const MAX_LAYERS: usize = 64;

pub fn encode_seed(model: &MlpModel) -> Vec<u8> {
    let spec = model.spec();
    let dims = spec.layer_dims();
    let mut out = Vec::with_capacity(15 + 4 * dims.len() + 8 * spec.param_count());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(match spec.activation() {
        Activation::Relu => 0,
    });
    out.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for p in model.to_flat() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                self.pos,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_seed(bytes: &[u8]) -> Result<MlpModel> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4, "magic")? != MAGIC {
        return Err(Error::parse(0, "bad magic, expected \"HDUS\""));
    }
    let version = u16::from_le_bytes(cur.take(2, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::parse(4, format!("unsupported format version {version}")));
    }
    let act_at = cur.pos;
    if cur.take(1, "activation")?[0] != 0 {
        return Err(Error::parse(act_at, "unknown activation code"));
    }
    let n_at = cur.pos;
    let n_dims = cur.u32("dims count")? as usize;
    if !(2..=MAX_LAYERS).contains(&n_dims) {
        return Err(Error::parse(n_at, format!("implausible dims count {n_dims}")));
    }
    let mut dims = Vec::with_capacity(n_dims);
    for _ in 0..n_dims {
        dims.push(cur.u32("layer dim")? as usize);
    }
    let spec = MlpSpec::new(dims).map_err(|e| Error::parse(n_at, e.to_string()))?;
    let n_params = spec.param_count();
    let body_at = cur.pos;
    let expected_len = body_at
        .checked_add(n_params.saturating_mul(8))
        .and_then(|v| v.checked_add(4));
    if expected_len != Some(bytes.len()) {
        return Err(Error::parse(
            body_at,
            format!(
                "payload length {} does not match {} parameters",
                bytes.len().saturating_sub(body_at),
                n_params
            ),
        ));
    }
    let payload = cur.take(n_params * 8, "parameters")?;
    let crc_at = cur.pos;
    let stored = cur.u32("checksum")?;
    let actual = crc32fast::hash(&bytes[..crc_at]);
    if stored != actual {
        return Err(Error::parse(
            crc_at,
            format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    MlpModel::from_flat(&spec, &flat)
}
