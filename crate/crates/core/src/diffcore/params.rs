use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const PARAM_MAGIC: &[u8; 4] = b"SVGP";
pub const PARAM_VERSION: u32 = 1;

/// Flat parameter vector.
///
/// For a [`DiffNetwork`](super::DiffNetwork) the layout is, layer by layer,
/// the weight matrix in column-major order (`out x in`) followed by the bias.
/// Composite parameter sets (policy, model) concatenate their blocks; the
/// owning type documents the block order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> Self {
        ParamVector(vec![0.0; len])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        ParamVector(values)
    }

    pub fn concat<'a>(parts: impl IntoIterator<Item = &'a ParamVector>) -> Self {
        let mut out = Vec::new();
        for p in parts {
            out.extend_from_slice(&p.0);
        }
        ParamVector(out)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &ParamVector) {
        debug_assert_eq!(self.len(), other.len());
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.0 {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ParamVector {
        ParamVector(self.0.iter().map(|a| a * alpha).collect())
    }

    /// Splits into consecutive blocks of the given sizes.
    pub fn split(&self, sizes: &[usize]) -> Result<Vec<ParamVector>> {
        let total: usize = sizes.iter().sum();
        if total != self.len() {
            return Err(Error::dims("ParamVector::split", total, self.len()));
        }
        let mut out = Vec::with_capacity(sizes.len());
        let mut offset = 0;
        for &n in sizes {
            out.push(ParamVector(self.0[offset..offset + n].to_vec()));
            offset += n;
        }
        Ok(out)
    }

    /// Writes the checkpoint block: magic `SVGP`, version `u32`, length `u64`,
    /// then the values as little-endian `f64`.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(PARAM_MAGIC)?;
        w.write_all(&PARAM_VERSION.to_le_bytes())?;
        w.write_all(&(self.0.len() as u64).to_le_bytes())?;
        for v in &self.0 {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PARAM_MAGIC {
            return Err(Error::Format(format!("bad parameter magic {magic:?}")));
        }
        let mut buf4 = [0u8; 4];
        r.read_exact(&mut buf4)?;
        let version = u32::from_le_bytes(buf4);
        if version != PARAM_VERSION {
            return Err(Error::Format(format!("unsupported parameter version {version}")));
        }
        let mut buf8 = [0u8; 8];
        r.read_exact(&mut buf8)?;
        let len = u64::from_le_bytes(buf8) as usize;
        let mut values = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            r.read_exact(&mut buf8)?;
            values.push(f64::from_le_bytes(buf8));
        }
        Ok(ParamVector(values))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 8 * self.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let p = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
        }
        Ok(p)
    }
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = ParamVector::from_vec(vec![1.5, -2.0]);
        let bytes = p.to_bytes();
        assert_eq!(&bytes[0..4], b"SVGP");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(f64::from_le_bytes(bytes[16..24].try_into().unwrap()), 1.5);
        assert_eq!(bytes.len(), 32);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = ParamVector::from_vec(vec![1.0]).to_bytes();
        assert!(ParamVector::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(matches!(ParamVector::from_bytes(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn split_checks_total() {
        let p = ParamVector::from_vec(vec![1.0, 2.0, 3.0]);
        let parts = p.split(&[1, 2]).unwrap();
        assert_eq!(parts[1].as_slice(), &[2.0, 3.0]);
        assert!(p.split(&[1, 1]).is_err());
    }

    proptest! {
        #[test]
        fn binary_round_trip(values in prop::collection::vec(-1e300f64..1e300, 0..64)) {
            let p = ParamVector::from_vec(values);
            prop_assert_eq!(ParamVector::from_bytes(&p.to_bytes()).unwrap(), p);
        }
    }
}
