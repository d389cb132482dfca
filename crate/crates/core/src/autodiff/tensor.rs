use crate::{Error, Result};

/// Dense row-major `f64` array with an optional gradient slot.
///
/// A tensor with `requires_grad == false` never accumulates gradient, no
/// matter what is passed to [`Tensor::accumulate_grad`].
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(values: Vec<f64>, shape: &[usize], requires_grad: bool) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::shape(
                "tensor",
                format!(
                    "shape {:?} holds {} values, got {}",
                    shape,
                    expected,
                    values.len()
                ),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            values,
            grad: None,
            requires_grad,
        })
    }

    pub fn zeros(shape: &[usize], requires_grad: bool) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            values: vec![0.0; n],
            grad: None,
            requires_grad,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

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

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Turning gradient tracking off also drops any stored gradient.
    pub fn set_requires_grad(&mut self, requires_grad: bool) {
        self.requires_grad = requires_grad;
        if !requires_grad {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient slot (`+=` semantics).
    pub fn accumulate_grad(&mut self, g: &[f64]) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        if g.len() != self.values.len() {
            return Err(Error::shape(
                "accumulate_grad",
                format!("tensor {:?} got gradient of length {}", self.shape, g.len()),
            ));
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }

    /// Euclidean norm of the stored gradient, 0 when absent.
    pub fn grad_norm(&self) -> f64 {
        self.grad
            .as_ref()
            .map(|g| g.iter().fold(0.0, |acc, x| acc + x * x).sqrt())
            .unwrap_or(0.0)
    }

    /// Value copy that is cut off from gradient tracking.
    pub fn detach(&self) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            values: self.values.clone(),
            grad: None,
            requires_grad: false,
        }
    }

    /// Copies values from `other`, keeping this tensor's gradient flag.
    pub fn copy_values_from(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(
                "copy_values_from",
                format!("{:?} vs {:?}", self.shape, other.shape),
            ));
        }
        self.values.copy_from_slice(&other.values);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_checks_length() {
        let t = Tensor::new(vec![1.0, 2.0, 3.0, 4.0], &[2, 2], false).unwrap();
        assert_eq!(t.shape(), &[2, 2]);
        assert!(Tensor::new(vec![1.0, 2.0, 3.0], &[2, 2], false).is_err());
        let empty = Tensor::new(vec![], &[0], true).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn frozen_tensor_ignores_gradient() {
        let mut t = Tensor::new(vec![1.0], &[1], false).unwrap();
        t.accumulate_grad(&[5.0]).unwrap();
        assert!(t.grad().is_none());
    }

    #[test]
    fn accumulation_adds() {
        let mut t = Tensor::new(vec![1.0, 2.0], &[2], true).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        t.accumulate_grad(&[1.0, 2.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 4.0]);
    }
}
