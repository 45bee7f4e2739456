use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced in {0}")]
    NonFinite(String),
    #[error("unsupported input size {0}, expected one of 224, 112, 64")]
    UnsupportedInputSize(usize),
    #[error("model weights are uninitialized; train or load weights first")]
    ModelNotTrained,
}

/// Dense row-major f64 tensor, NCHW for rank 4.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Self { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self, NetError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NetError::ShapeMismatch(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n,
                data.len()
            )));
        }
        Ok(Self { shape: shape.to_vec(), data })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Dimensions of a rank-4 tensor as (n, c, h, w).
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize), NetError> {
        if self.shape.len() != 4 {
            return Err(NetError::ShapeMismatch(format!(
                "expected rank-4 tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3]))
    }

    pub fn dims2(&self) -> Result<(usize, usize), NetError> {
        if self.shape.len() != 2 {
            return Err(NetError::ShapeMismatch(format!(
                "expected rank-2 tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok((self.shape[0], self.shape[1]))
    }

    #[inline]
    pub fn at4(&self, n: usize, c: usize, h: usize, w: usize, dims: (usize, usize, usize, usize)) -> f64 {
        self.data[((n * dims.1 + c) * dims.2 + h) * dims.3 + w]
    }

    pub fn assert_finite(&self, what: &str) -> Result<(), NetError> {
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(NetError::NonFinite(what.to_string()));
        }
        Ok(())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<(), NetError> {
        if self.shape != other.shape {
            return Err(NetError::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
        Ok(())
    }
}
