use crate::error::{shape_err, Result};
use crate::real::Real;

/// A learnable array with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Real> Param<T> {
    pub fn new(shape: Vec<usize>, value: Vec<T>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != value.len() {
            return Err(shape_err(format!(
                "param shape {shape:?} needs {n} values, got {}",
                value.len()
            )));
        }
        Ok(Self {
            shape,
            grad: vec![T::zero(); n],
            value,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// A collection of named parameters.
///
/// Names are stable, dot-separated paths (`srg0.mab1.fusion.weight`) used as
/// checkpoint keys and optimizer-state keys.
pub trait Module<T: Real> {
    fn named_params(&self) -> Vec<(String, &Param<T>)>;

    fn named_params_mut(&mut self) -> Vec<(String, &mut Param<T>)>;

    /// Frozen modules refuse optimizer updates.
    fn is_frozen(&self) -> bool {
        false
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, p)| p.len()).sum()
    }

    fn zero_grad(&mut self) {
        for (_, p) in self.named_params_mut() {
            p.zero_grad();
        }
    }

    fn all_finite(&self) -> bool {
        self.named_params()
            .iter()
            .all(|(_, p)| p.value.iter().all(|v| v.is_finite()))
    }
}
