//! Named parameter sets, averaging and the `TMAW` checkpoint format.

use std::path::Path;

use super::{NnError, Tensor};
use crate::io::{self, FormatError, Reader, Writer};

const MAGIC: &[u8; 4] = b"TMAW";

/// Ordered parameter list tagged with a hash of the architecture that
/// produced it. Two weight sets can be averaged only if the hashes agree.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    fingerprint: u64,
    params: Vec<(String, Tensor)>,
}

impl ModelWeights {
    pub fn new(fingerprint: u64, params: Vec<(String, Tensor)>) -> Self {
        Self {
            fingerprint,
            params,
        }
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.params[i].1
    }

    pub fn tensor_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.params[i].1
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.params.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.params.iter_mut().map(|(_, t)| t)
    }

    /// Same names and shapes, all zeros. Used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        Self {
            fingerprint: self.fingerprint,
            params: self
                .params
                .iter()
                .map(|(n, t)| (n.clone(), t.zeros_like()))
                .collect(),
        }
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().map(|t| t.data().len()).sum()
    }

    pub fn first_non_finite(&self) -> Option<&str> {
        self.params
            .iter()
            .find(|(_, t)| t.first_non_finite().is_some())
            .map(|(n, _)| n.as_str())
    }

    pub fn check_compatible(&self, other: &ModelWeights) -> Result<(), NnError> {
        if self.fingerprint != other.fingerprint {
            return Err(NnError::FingerprintMismatch {
                expected: self.fingerprint,
                found: other.fingerprint,
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes(MAGIC);
        w.u64(self.fingerprint);
        w.u32(self.params.len() as u32);
        for (name, t) in &self.params {
            w.u16(name.len() as u16);
            w.bytes(name.as_bytes());
            w.u32(t.rows() as u32);
            w.u32(t.cols() as u32);
            for &x in t.data() {
                w.f32(x as f32);
            }
        }
        w.buf
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(buf);
        let w = Self::read(&mut r)?;
        r.finish()?;
        Ok(w)
    }

    /// Decodes one checkpoint from the cursor, leaving trailing bytes alone.
    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, FormatError> {
        r.magic(MAGIC)?;
        let fingerprint = r.u64()?;
        let count = r.u32()? as usize;
        let mut params = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let at = r.offset();
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.bytes(len)?)
                .map_err(|_| io::invalid(at, "tensor name is not utf-8"))?
                .to_owned();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = rows
                .checked_mul(cols)
                .filter(|n| n.saturating_mul(4) <= r.remaining())
                .ok_or_else(|| io::invalid(at, format!("tensor {name} shape {rows}x{cols} exceeds input")))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(r.f32()? as f64);
            }
            params.push((name, Tensor::new(rows, cols, data)));
        }
        Ok(Self {
            fingerprint,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), FormatError> {
        io::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_bytes(&io::read_file(path)?)
    }
}

/// Elementwise mean of the inputs.
///
/// Uses a running mean `m += (x - m) / k` in input order, so averaging copies
/// of one weight set returns it bit for bit.
pub fn aggregate_average(inputs: &[&ModelWeights]) -> Result<ModelWeights, NnError> {
    let (first, rest) = inputs.split_first().ok_or(NnError::EmptyAggregate)?;
    let mut out = (*first).clone();
    for (k, w) in rest.iter().enumerate() {
        out.check_compatible(w)?;
        if w.len() != out.len() {
            return Err(NnError::Shape(format!(
                "parameter count {} vs {}",
                out.len(),
                w.len()
            )));
        }
        let denom = (k + 2) as f64;
        for ((name, acc), (other_name, x)) in out.params.iter_mut().zip(&w.params) {
            if name != other_name || acc.shape() != x.shape() {
                return Err(NnError::Shape(format!(
                    "parameter {name} {:?} vs {other_name} {:?}",
                    acc.shape(),
                    x.shape()
                )));
            }
            for (m, &v) in acc.data_mut().iter_mut().zip(x.data()) {
                *m += (v - *m) / denom;
            }
        }
    }
    Ok(out)
}
