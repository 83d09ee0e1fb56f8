//! Dense row-major tensors plus the handful of matrix products the model
//! needs. Shapes are plain `Vec<usize>`; all layout is contiguous.

use alloc::vec;
use alloc::vec::Vec;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![T::ZERO; n] }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length does not match shape"
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; n] }
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn fill(&mut self, value: T) {
        for v in &mut self.data {
            *v = value;
        }
    }

    /// self += alpha * other, elementwise.
    pub fn add_scaled(&mut self, other: &Tensor<T>, alpha: T) {
        assert_eq!(self.shape, other.shape, "add_scaled shape mismatch");
        for (d, s) in self.data.iter_mut().zip(other.data.iter()) {
            *d += alpha * *s;
        }
    }

    pub fn scale(&mut self, alpha: T) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    /// Cast every element through f64. Used to move weights between the f32
    /// training path and the f64 checking path.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// c[m×n] = a[m×k] @ b[k×n], or += when `accumulate` is set.
pub fn matmul<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    assert_eq!(a.len(), m * k, "matmul: lhs length");
    assert_eq!(b.len(), k * n, "matmul: rhs length");
    assert_eq!(c.len(), m * n, "matmul: out length");
    let beta = if accumulate { T::ONE } else { T::ZERO };
    unsafe {
        T::gemm(
            m, k, n,
            T::ONE,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// c[m×n] = aᵀ @ b with a[k×m], b[k×n]. The transpose is a stride trick,
/// not a copy. Used for weight gradients (xᵀ · dy).
pub fn matmul_at<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    assert_eq!(a.len(), k * m, "matmul_at: lhs length");
    assert_eq!(b.len(), k * n, "matmul_at: rhs length");
    assert_eq!(c.len(), m * n, "matmul_at: out length");
    let beta = if accumulate { T::ONE } else { T::ZERO };
    unsafe {
        T::gemm(
            m, k, n,
            T::ONE,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// c[m×n] = a @ bᵀ with a[m×k], b[n×k]. Used for input gradients (dy · wᵀ).
pub fn matmul_bt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T], accumulate: bool) {
    assert_eq!(a.len(), m * k, "matmul_bt: lhs length");
    assert_eq!(b.len(), n * k, "matmul_bt: rhs length");
    assert_eq!(c.len(), m * n, "matmul_bt: out length");
    let beta = if accumulate { T::ONE } else { T::ZERO };
    unsafe {
        T::gemm(
            m, k, n,
            T::ONE,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small_known() {
        // [[1,2],[3,4]] @ [[5,6],[7,8]] = [[19,22],[43,50]]
        let a = [1.0f64, 2.0, 3.0, 4.0];
        let b = [5.0f64, 6.0, 7.0, 8.0];
        let mut c = [0.0f64; 4];
        matmul(2, 2, 2, &a, &b, &mut c, false);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn transposed_variants_agree_with_explicit_transpose() {
        let a = [1.0f32, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2x3
        let b = [1.0f32, 0.5, -1.0, 2.0, 0.0, 3.0]; // 2x3
        // matmul_at: (2x3)ᵀ @ (2x3) = 3x3
        let mut c = [0.0f32; 9];
        matmul_at(3, 2, 3, &a, &b, &mut c, false);
        let at = [1.0f32, 4.0, 2.0, 5.0, 3.0, 6.0]; // 3x2
        let mut c_ref = [0.0f32; 9];
        matmul(3, 2, 3, &at, &b, &mut c_ref, false);
        assert_eq!(c, c_ref);

        // matmul_bt: (2x3) @ (2x3)ᵀ = 2x2
        let mut d = [0.0f32; 4];
        matmul_bt(2, 3, 2, &a, &b, &mut d, false);
        let bt = [1.0f32, 2.0, 0.5, 0.0, -1.0, 3.0]; // 3x2
        let mut d_ref = [0.0f32; 4];
        matmul(2, 3, 2, &a, &bt, &mut d_ref, false);
        assert_eq!(d, d_ref);
    }

    #[test]
    fn accumulate_adds_to_existing() {
        let a = [1.0f64, 1.0];
        let b = [2.0f64, 3.0];
        let mut c = [10.0f64, 10.0];
        // 1x2 @ 2x... use m=1,k=1,n=2 twice instead: c = a0*b + c
        matmul(1, 1, 2, &a[..1], &b, &mut c, true);
        assert_eq!(c, [12.0, 13.0]);
    }

    #[test]
    fn cast_roundtrip() {
        let t = Tensor::<f32>::from_vec(&[2, 2], alloc::vec![0.5, -1.25, 3.0, 0.0]);
        let d: Tensor<f64> = t.cast();
        let back: Tensor<f32> = d.cast();
        assert_eq!(t, back);
    }
}
