use crate::error::{NetError, Result};

/// Dense NCHW tensor of `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            shape: [n, c, h, w],
            data: vec![0.0; n * c * h * w],
        }
    }

    pub fn from_vec(shape: [usize; 4], data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != len {
            return Err(NetError::ShapeMismatch {
                op: "Tensor::from_vec",
                expected: vec![len],
                got: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn filled(shape: [usize; 4], value: f64) -> Self {
        Self {
            shape,
            data: vec![value; shape.iter().product()],
        }
    }

    #[inline]
    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }
    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }

    /// Number of values in one batch element.
    #[inline]
    pub fn sample_len(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    #[inline]
    pub fn get(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(n, c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, y: usize, x: usize, v: f64) {
        let i = self.index(n, c, y, x);
        self.data[i] = v;
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        let len = self.sample_len();
        &self.data[n * len..(n + 1) * len]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_shape(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(NetError::ShapeMismatch {
                op,
                expected: self.shape.to_vec(),
                got: other.shape.to_vec(),
            });
        }
        Ok(())
    }

    /// Elementwise `self * a + other * b`.
    pub fn axpby(&self, a: f64, other: &Tensor, b: f64) -> Result<Tensor> {
        self.ensure_same_shape(other, "axpby")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(Tensor {
            shape: self.shape,
            data,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Tensor) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    /// Selects a contiguous channel range `[start, start + count)`.
    pub fn channels(&self, start: usize, count: usize) -> Tensor {
        let [n, c, h, w] = self.shape;
        assert!(start + count <= c, "channel range out of bounds");
        let plane = h * w;
        let mut out = Tensor::zeros(n, count, h, w);
        for b in 0..n {
            let src = &self.data[(b * c + start) * plane..(b * c + start + count) * plane];
            out.data[b * count * plane..(b + 1) * count * plane].copy_from_slice(src);
        }
        out
    }

    /// Stacks single-sample tensors along the batch axis.
    pub fn stack(samples: &[Tensor]) -> Result<Tensor> {
        let first = samples.first().ok_or(NetError::Config("empty batch".into()))?;
        let [_, c, h, w] = first.shape;
        let mut data = Vec::with_capacity(samples.len() * c * h * w);
        let mut n = 0;
        for s in samples {
            if s.shape[1..] != first.shape[1..] {
                return Err(NetError::ShapeMismatch {
                    op: "Tensor::stack",
                    expected: first.shape.to_vec(),
                    got: s.shape.to_vec(),
                });
            }
            n += s.shape[0];
            data.extend_from_slice(&s.data);
        }
        Ok(Tensor {
            shape: [n, c, h, w],
            data,
        })
    }
}
