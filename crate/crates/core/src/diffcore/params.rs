use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

/// How a parameter was initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Uniform { bound: f64 },
    Constant(f64),
    Loaded,
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
    init: Init,
}

/// Named trainable tensors stored back to back in one flat buffer, with a
/// matching gradient buffer.
#[derive(Debug, Clone)]
pub struct ParamStore {
    entries: Vec<Entry>,
    by_name: HashMap<String, ParamId>,
    values: Vec<f64>,
    grads: Vec<f64>,
    seed: u64,
    rng: ChaCha8Rng,
    backward_passes: u64,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            entries: Vec::new(),
            by_name: HashMap::new(),
            values: Vec::new(),
            grads: Vec::new(),
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            backward_passes: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn push(&mut self, name: &str, shape: &[usize], init: Init, data: Vec<f64>) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return invalid(format!("parameter '{name}' registered twice"));
        }
        let len: usize = shape.iter().product();
        debug_assert_eq!(len, data.len());
        let id = ParamId(self.entries.len());
        self.entries.push(Entry {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset: self.values.len(),
            len,
            init,
        });
        self.values.extend(data);
        self.grads.resize(self.values.len(), 0.0);
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Register a tensor drawn uniformly from `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.push(name, shape, Init::Uniform { bound }, data)
    }

    pub fn add_constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        let len: usize = shape.iter().product();
        self.push(name, shape, Init::Constant(value), vec![value; len])
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.entries[id.0].name
    }

    pub fn shape(&self, id: ParamId) -> &[usize] {
        &self.entries[id.0].shape
    }

    pub fn init(&self, id: ParamId) -> Init {
        self.entries[id.0].init
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.entries.len()).map(ParamId)
    }

    pub fn value(&self, id: ParamId) -> &[f64] {
        let e = &self.entries[id.0];
        &self.values[e.offset..e.offset + e.len]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = &self.entries[id.0];
        &mut self.values[e.offset..e.offset + e.len]
    }

    pub fn grad(&self, id: ParamId) -> &[f64] {
        let e = &self.entries[id.0];
        &self.grads[e.offset..e.offset + e.len]
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut [f64] {
        let e = &self.entries[id.0];
        &mut self.grads[e.offset..e.offset + e.len]
    }

    /// Total number of trainable scalars.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn set_values(&mut self, v: &[f64]) {
        self.values.copy_from_slice(v);
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = 0.0);
    }

    /// L2 norm of the concatenated gradient.
    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn backward_passes(&self) -> u64 {
        self.backward_passes
    }

    pub(crate) fn count_backward(&mut self) {
        self.backward_passes += 1;
    }

    /// Write the `MRFW v1` checkpoint: a header line, then per parameter the
    /// name length (u32), name bytes, rank (u32), dims (u64 each) and raw
    /// little-endian `f64` values.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(b"MRFW v1\n")?;
        for e in &self.entries {
            w.write_all(&(e.name.len() as u32).to_le_bytes())?;
            w.write_all(e.name.as_bytes())?;
            w.write_all(&(e.shape.len() as u32).to_le_bytes())?;
            for &d in &e.shape {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            for v in &self.values[e.offset..e.offset + e.len] {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Load values from a checkpoint into parameters registered under the
    /// same names and shapes.
    pub fn load_checkpoint<R: Read>(&mut self, mut r: R) -> Result<()> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"MRFW v1\n" {
            return invalid("not an MRFW v1 checkpoint");
        }
        loop {
            let mut len = [0u8; 4];
            match r.read_exact(&mut len) {
                Ok(()) => {}
                Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e.into()),
            }
            let mut name = vec![0u8; u32::from_le_bytes(len) as usize];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| Error::InvalidInput("checkpoint name is not UTF-8".into()))?;
            let mut rank = [0u8; 4];
            r.read_exact(&mut rank)?;
            let mut shape = Vec::new();
            for _ in 0..u32::from_le_bytes(rank) {
                let mut d = [0u8; 8];
                r.read_exact(&mut d)?;
                shape.push(u64::from_le_bytes(d) as usize);
            }
            let id = self
                .id(&name)
                .ok_or_else(|| Error::InvalidInput(format!("checkpoint has unknown parameter '{name}'")))?;
            if self.shape(id) != shape.as_slice() {
                return invalid(format!("shape mismatch for '{name}'"));
            }
            let mut buf = vec![0u8; shape.iter().product::<usize>() * 8];
            r.read_exact(&mut buf)?;
            for (dst, chunk) in self.value_mut(id).iter_mut().zip(buf.chunks_exact(8)) {
                *dst = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            self.entries[id.0].init = Init::Loaded;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_determines_values() {
        let mut a = ParamStore::new(7);
        let mut b = ParamStore::new(7);
        let mut c = ParamStore::new(8);
        for s in [&mut a, &mut b, &mut c] {
            s.add_uniform("w", &[2, 3], 0.5).unwrap();
            s.add_constant("theta", &[1], 1.0 / 6.0).unwrap();
        }
        assert_eq!(a.values(), b.values());
        assert_ne!(a.values(), c.values());
        assert!(a.values()[..6].iter().all(|v| v.abs() <= 0.5));
        assert_eq!(a.len(), 7);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParamStore::new(0);
        s.add_constant("x", &[1], 0.0).unwrap();
        assert!(s.add_constant("x", &[1], 0.0).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let mut a = ParamStore::new(3);
        a.add_uniform("layer.w", &[4, 1, 3, 3], 0.3).unwrap();
        a.add_uniform("layer.b", &[4], 0.3).unwrap();
        let mut buf = Vec::new();
        a.write_checkpoint(&mut buf).unwrap();
        assert!(buf.starts_with(b"MRFW v1\n"));

        let mut b = ParamStore::new(99);
        b.add_uniform("layer.w", &[4, 1, 3, 3], 0.3).unwrap();
        b.add_uniform("layer.b", &[4], 0.3).unwrap();
        b.load_checkpoint(std::io::Cursor::new(&buf)).unwrap();
        assert_eq!(a.values(), b.values());
        assert_eq!(b.init(b.id("layer.b").unwrap()), Init::Loaded);

        let mut wrong = ParamStore::new(0);
        wrong.add_uniform("layer.w", &[2, 1, 3, 3], 0.3).unwrap();
        assert!(wrong.load_checkpoint(std::io::Cursor::new(&buf)).is_err());
    }
}
