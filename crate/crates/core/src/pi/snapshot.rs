//! Binary network snapshots.
//!
//! Layout (little endian): `b"PINW"`, u16 version, u16 sensor dim, u16 motor
//! dim, then row-major f64 blocks for controller weights, controller bias,
//! model weights, model bias, then u64 step count.

use super::{NetworkPair, PiError, MOTOR_DIM, SENSOR_DIM};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"PINW";
pub const SNAPSHOT_VERSION: u16 = 1;

const FLOAT_COUNT: usize = 2 * MOTOR_DIM * SENSOR_DIM + MOTOR_DIM + SENSOR_DIM;
const ENCODED_LEN: usize = 4 + 2 * 3 + 8 * FLOAT_COUNT + 8;

pub fn snapshot(pair: &NetworkPair) -> Vec<u8> {
    let mut out = Vec::with_capacity(ENCODED_LEN);
    out.extend_from_slice(SNAPSHOT_MAGIC);
    out.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    out.extend_from_slice(&(SENSOR_DIM as u16).to_le_bytes());
    out.extend_from_slice(&(MOTOR_DIM as u16).to_le_bytes());
    let c = &pair.controller;
    let p = &pair.predictor;
    for i in 0..MOTOR_DIM {
        for j in 0..SENSOR_DIM {
            out.extend_from_slice(&c.weights[(i, j)].to_le_bytes());
        }
    }
    for v in c.bias.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for i in 0..SENSOR_DIM {
        for j in 0..MOTOR_DIM {
            out.extend_from_slice(&p.weights[(i, j)].to_le_bytes());
        }
    }
    for v in p.bias.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&pair.step_count.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], PiError> {
        let end = self.offset + N;
        let chunk = self.bytes.get(self.offset..end).ok_or_else(|| PiError::Decode {
            offset: self.offset,
            reason: format!("truncated: need {N} bytes, {} left", self.bytes.len() - self.offset),
        })?;
        self.offset = end;
        Ok(chunk.try_into().expect("slice length checked"))
    }

    fn u16(&mut self) -> Result<u16, PiError> {
        Ok(u16::from_le_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, PiError> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn fail(&self, at: usize, reason: impl Into<String>) -> PiError {
        PiError::Decode {
            offset: at,
            reason: reason.into(),
        }
    }
}

pub fn restore(bytes: &[u8]) -> Result<NetworkPair, PiError> {
    let mut r = Reader { bytes, offset: 0 };
    let magic: [u8; 4] = r.take()?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(r.fail(0, "bad magic"));
    }
    let version = r.u16()?;
    if version != SNAPSHOT_VERSION {
        return Err(r.fail(4, format!("unsupported version {version}")));
    }
    let sensors = r.u16()?;
    let motors = r.u16()?;
    if sensors as usize != SENSOR_DIM || motors as usize != MOTOR_DIM {
        return Err(r.fail(6, format!("dimension mismatch: {sensors}x{motors}")));
    }
    let mut pair = NetworkPair::zeros();
    for i in 0..MOTOR_DIM {
        for j in 0..SENSOR_DIM {
            pair.controller.weights[(i, j)] = r.f64()?;
        }
    }
    for k in 0..MOTOR_DIM {
        pair.controller.bias[k] = r.f64()?;
    }
    for i in 0..SENSOR_DIM {
        for j in 0..MOTOR_DIM {
            pair.predictor.weights[(i, j)] = r.f64()?;
        }
    }
    for k in 0..SENSOR_DIM {
        pair.predictor.bias[k] = r.f64()?;
    }
    pair.step_count = u64::from_le_bytes(r.take()?);
    if r.offset != bytes.len() {
        return Err(r.fail(r.offset, "trailing bytes"));
    }
    Ok(pair)
}
