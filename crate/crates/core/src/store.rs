//! Named parameter store. Every learnable array lives here with a gradient
//! buffer alongside, so the optimizer, the EMA teacher update, and the
//! checkpoint writer all see the same flat, deterministically ordered list.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Error;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(pub usize);

#[derive(Debug, Clone)]
pub struct Var<T: Scalar> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct VarStore<T: Scalar> {
    vars: Vec<Var<T>>,
}

impl<T: Scalar> VarStore<T> {
    pub fn new() -> Self {
        VarStore { vars: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> VarId {
        let grad = Tensor::zeros(value.shape());
        self.vars.push(Var { name: name.into(), value, grad });
        VarId(self.vars.len() - 1)
    }

    #[inline]
    pub fn value(&self, id: VarId) -> &Tensor<T> {
        &self.vars[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: VarId) -> &mut Tensor<T> {
        &mut self.vars[id.0].value
    }

    #[inline]
    pub fn grad(&self, id: VarId) -> &Tensor<T> {
        &self.vars[id.0].grad
    }

    #[inline]
    pub fn grad_mut(&mut self, id: VarId) -> &mut Tensor<T> {
        &mut self.vars[id.0].grad
    }

    /// Simultaneous read of a value and write of its gradient; the borrow
    /// split keeps backward passes free of clones.
    #[inline]
    pub fn value_and_grad_mut(&mut self, id: VarId) -> (&Tensor<T>, &mut Tensor<T>) {
        let var = &mut self.vars[id.0];
        (&var.value, &mut var.grad)
    }

    pub fn len(&self) -> usize {
        self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Var<T>> {
        self.vars.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Var<T>> {
        self.vars.iter_mut()
    }

    pub fn zero_grads(&mut self) {
        for var in &mut self.vars {
            var.grad.fill(T::ZERO);
        }
    }

    /// Exact number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.vars.iter().map(|v| v.value.numel()).sum()
    }

    /// Largest absolute gradient entry, for the zero-teacher-gradient check.
    pub fn max_abs_grad(&self) -> f64 {
        let mut m = 0.0f64;
        for var in &self.vars {
            for g in var.grad.data() {
                let a = g.to_f64().abs();
                if a > m {
                    m = a;
                }
            }
        }
        m
    }

    /// Copy values from another store. Names and shapes must mirror exactly.
    pub fn copy_values_from(&mut self, other: &VarStore<T>) -> Result<()> {
        check_mirror(self, other)?;
        for (dst, src) in self.vars.iter_mut().zip(other.vars.iter()) {
            dst.value = src.value.clone();
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> VarStore<U> {
        VarStore {
            vars: self
                .vars
                .iter()
                .map(|v| Var {
                    name: v.name.clone(),
                    value: v.value.cast(),
                    grad: Tensor::zeros(v.grad.shape()),
                })
                .collect(),
        }
    }
}

impl<T: Scalar> Default for VarStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

pub(crate) fn check_mirror<T: Scalar>(a: &VarStore<T>, b: &VarStore<T>) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ParamMismatch(alloc::format!(
            "stores hold {} vs {} parameters",
            a.len(),
            b.len()
        )));
    }
    for (va, vb) in a.iter().zip(b.iter()) {
        if va.name != vb.name || va.value.shape() != vb.value.shape() {
            return Err(Error::ParamMismatch(alloc::format!(
                "parameter `{}` {:?} does not mirror `{}` {:?}",
                va.name,
                va.value.shape(),
                vb.name,
                vb.value.shape()
            )));
        }
    }
    Ok(())
}
