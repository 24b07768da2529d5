use rand::Rng;

use crate::error::{NetError, Result};

/// Index of a parameter inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Ordered collection of named parameter tensors.
///
/// The order is fixed at construction and doubles as the checkpoint order and
/// the order of gradient buffers in [`Grads`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<Param>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> ParamId {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.entries.push(Param {
            name: name.into(),
            shape,
            data,
        });
        ParamId(self.entries.len() - 1)
    }

    /// Fan-in scaled uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
    pub fn push_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = (6.0 / fan_in.max(1) as f64).sqrt();
        let len = shape.iter().product();
        let data = (0..len).map(|_| rng.gen_range(-bound..bound)).collect();
        self.push(name, shape, data)
    }

    pub fn push_zeros(&mut self, name: impl Into<String>, shape: Vec<usize>) -> ParamId {
        let len = shape.iter().product();
        self.push(name, shape, vec![0.0; len])
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.entries[id.0].data
    }

    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.entries[id.0].data
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.entries.iter().map(|p| p.data.len()).sum()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.entries.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn zero_grads(&self) -> Grads {
        Grads {
            bufs: self.entries.iter().map(|p| vec![0.0; p.data.len()]).collect(),
        }
    }

    /// Replaces all values from `other`, which must have identical names and shapes.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(NetError::Checkpoint(format!(
                "parameter count mismatch: {} vs {}",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name || dst.shape != src.shape {
                return Err(NetError::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    dst.name, dst.shape, src.name, src.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        Ok(())
    }
}

/// Gradient buffers aligned with a [`ParamSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub bufs: Vec<Vec<f64>>,
}

impl Grads {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut [f64] {
        &mut self.bufs[id.0]
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &[f64] {
        &self.bufs[id.0]
    }

    pub fn scale(&mut self, s: f64) {
        for b in &mut self.bufs {
            b.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        self.bufs.iter().flatten().copied().collect()
    }
}
