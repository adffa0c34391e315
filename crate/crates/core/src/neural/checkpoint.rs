//! Flat binary parameter file.
//!
//! ```text
//! header:  magic "XDCK" | version u32 | dtype u8 (4 = f32, 8 = f64) | entry count u32
//! entry:   name_len u32 | name utf-8 | ndim u32 | dims u64 × ndim | scalars (dtype, LE)
//! ```
//! All integers are little-endian. Reading then writing reproduces the file
//! byte for byte.

use std::path::Path;

use super::param::Parameterized;
use super::{DType, NeuralError, Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"XDCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub entries: Vec<Entry<T>>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_module<M: Parameterized<T> + ?Sized>(module: &M) -> Self {
        Self {
            entries: module
                .params()
                .into_iter()
                .map(|(name, p)| Entry {
                    name,
                    tensor: p.value.clone(),
                })
                .collect(),
        }
    }

    /// Copy values into `module`; names and shapes must line up exactly.
    pub fn apply_to<M: Parameterized<T> + ?Sized>(&self, module: &mut M) -> Result<(), NeuralError> {
        let mut params = module.params_mut();
        if params.len() != self.entries.len() {
            return Err(NeuralError::Checkpoint(format!(
                "expected {} entries, file has {}",
                params.len(),
                self.entries.len()
            )));
        }
        for ((name, p), entry) in params.iter_mut().zip(&self.entries) {
            if *name != entry.name {
                return Err(NeuralError::Checkpoint(format!(
                    "entry `{}` found where `{name}` expected",
                    entry.name
                )));
            }
            entry.tensor.ensure_shape(p.shape())?;
            p.value = entry.tensor.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(T::DTYPE.code());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            out.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.extend_from_slice(&(e.tensor.shape().len() as u32).to_le_bytes());
            for &d in e.tensor.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in e.tensor.data() {
                v.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(NeuralError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(NeuralError::Checkpoint(format!("unsupported version {version}")));
        }
        let dtype = DType::from_code(r.take(1)?[0])
            .ok_or_else(|| NeuralError::Checkpoint("unknown dtype".into()))?;
        if dtype != T::DTYPE {
            return Err(NeuralError::Checkpoint(format!(
                "file holds {dtype:?}, reader expects {:?}",
                T::DTYPE
            )));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| NeuralError::Checkpoint("name is not utf-8".into()))?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let len: usize = shape.iter().product();
            let raw = r.take(len.checked_mul(dtype.size()).ok_or_else(|| {
                NeuralError::Checkpoint("tensor size overflow".into())
            })?)?;
            let data = raw.chunks_exact(dtype.size()).map(T::read_le).collect();
            entries.push(Entry {
                name,
                tensor: Tensor::from_vec(&shape, data)?,
            });
        }
        if r.pos != bytes.len() {
            return Err(NeuralError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, NeuralError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| NeuralError::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn save<T: Scalar, M: Parameterized<T> + ?Sized>(module: &M, path: &Path) -> Result<(), NeuralError> {
    Checkpoint::from_module(module).write(path)
}

pub fn load<T: Scalar, M: Parameterized<T> + ?Sized>(module: &mut M, path: &Path) -> Result<(), NeuralError> {
    Checkpoint::<T>::read(path)?.apply_to(module)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Dense, Rng};
    use proptest::prelude::*;

    #[test]
    fn module_round_trip_is_bit_exact() {
        let mut rng = Rng::seed(9);
        let layer = Dense::<f32>::new(5, 3, Activation::Tanh, &mut rng);
        let bytes = Checkpoint::from_module(&layer).to_bytes();
        let mut other = Dense::<f32>::zeros(5, 3, Activation::Tanh);
        Checkpoint::<f32>::from_bytes(&bytes)
            .unwrap()
            .apply_to(&mut other)
            .unwrap();
        assert_eq!(layer.weight.value, other.weight.value);
        assert_eq!(Checkpoint::from_module(&other).to_bytes(), bytes);
    }

    #[test]
    fn truncated_and_mistyped_files_fail() {
        let mut rng = Rng::seed(9);
        let layer = Dense::<f32>::new(2, 2, Activation::Tanh, &mut rng);
        let bytes = Checkpoint::from_module(&layer).to_bytes();
        assert!(Checkpoint::<f32>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(Checkpoint::<f32>::from_bytes(&bad).is_err());
    }

    #[test]
    fn shape_mismatch_on_apply() {
        let mut rng = Rng::seed(9);
        let layer = Dense::<f32>::new(2, 2, Activation::Tanh, &mut rng);
        let mut other = Dense::<f32>::zeros(3, 2, Activation::Tanh);
        assert!(Checkpoint::from_module(&layer).apply_to(&mut other).is_err());
    }

    proptest! {
        #[test]
        fn bytes_round_trip(values in prop::collection::vec(any::<f64>(), 0..40), name in "[a-z.]{1,12}") {
            let ck = Checkpoint { entries: vec![Entry { name, tensor: Tensor::vector(values) }] };
            let bytes = ck.to_bytes();
            let back = Checkpoint::<f64>::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes(), bytes);
        }
    }
}
