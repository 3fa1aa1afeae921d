//! Scalar abstraction shared by the numeric kernels.
//!
//! Embeddings, the traversal policy and the path encoder are written against
//! [`Scalar`] so the same code runs in `f32` (compact storage) or `f64`
//! (training and gradient checks). Persistence goes through the little-endian
//! hex codec below, which round-trips every value bit for bit.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Tag written into file headers (`"f32"` / `"f64"`).
    const NAME: &'static str;
    const BYTES: usize;

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to every scalar")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

/// Encodes a slice as base-16 little-endian words.
pub fn to_hex<F: Scalar>(values: &[F]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * F::BYTES);
    for &v in values {
        v.write_le(&mut bytes);
    }
    hex::encode(bytes)
}

/// Inverse of [`to_hex`]. `expected_len` is checked when given.
pub fn from_hex<F: Scalar>(text: &str, expected_len: Option<usize>) -> Result<Vec<F>> {
    let bytes = hex::decode(text).map_err(|e| Error::MalformedFile(format!("bad hex payload: {e}")))?;
    if bytes.len() % F::BYTES != 0 {
        return Err(Error::MalformedFile(format!(
            "hex payload of {} bytes is not a whole number of {} words",
            bytes.len(),
            F::NAME
        )));
    }
    let values: Vec<F> = bytes.chunks_exact(F::BYTES).map(F::read_le).collect();
    if let Some(n) = expected_len {
        if values.len() != n {
            return Err(Error::MalformedFile(format!("expected {n} values, found {}", values.len())));
        }
    }
    Ok(values)
}

pub fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

pub fn norm<F: Scalar>(a: &[F]) -> F {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hex_round_trips_bits() {
        let xs = [0.1f64, -3.5e-300, f64::MAX, 0.0, -0.0];
        let back: Vec<f64> = from_hex(&to_hex(&xs), Some(5)).unwrap();
        for (a, b) in xs.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        let ys = [1.0f32 / 3.0, 7.25];
        let back: Vec<f32> = from_hex(&to_hex(&ys), None).unwrap();
        assert_eq!(ys.to_vec(), back);
    }

    #[test]
    fn hex_rejects_ragged_payloads() {
        assert!(from_hex::<f32>("abcdef", None).is_err());
        assert!(from_hex::<f32>("zz", None).is_err());
        assert!(from_hex::<f64>(&to_hex(&[1.0f64]), Some(2)).is_err());
    }
}
