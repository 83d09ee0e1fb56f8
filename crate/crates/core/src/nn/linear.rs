use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::{VarId, VarStore};
use crate::tensor::{matmul, matmul_at, matmul_bt, Tensor};

/// Fully connected layer, weight layout `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: VarId,
    pub b: Option<VarId>,
    pub in_features: usize,
    pub out_features: usize,
}

pub struct LinearCtx<T: Scalar> {
    x: Vec<T>,
    rows: usize,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut VarStore<T>,
        name: &str,
        in_features: usize,
        out_features: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let mut w = Tensor::zeros(&[in_features, out_features]);
        for v in w.data_mut() {
            *v = T::from_f64(rng.trunc_normal(0.02));
        }
        let w = store.add(alloc::format!("{name}.weight"), w);
        let b = bias.then(|| store.add(alloc::format!("{name}.bias"), Tensor::zeros(&[out_features])));
        Linear { w, b, in_features, out_features }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &VarStore<T>,
        x: &[T],
        rows: usize,
    ) -> (Vec<T>, LinearCtx<T>) {
        debug_assert_eq!(x.len(), rows * self.in_features);
        let mut y = alloc::vec![T::ZERO; rows * self.out_features];
        matmul(rows, self.in_features, self.out_features, x, store.value(self.w).data(), &mut y, false);
        if let Some(b) = self.b {
            let bias = store.value(b).data();
            for row in y.chunks_exact_mut(self.out_features) {
                for (v, &bv) in row.iter_mut().zip(bias.iter()) {
                    *v += bv;
                }
            }
        }
        (y, LinearCtx { x: x.to_vec(), rows })
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &LinearCtx<T>,
        dy: &[T],
    ) -> Vec<T> {
        debug_assert_eq!(dy.len(), ctx.rows * self.out_features);
        // dW += xᵀ · dy
        {
            let (_, gw) = store.value_and_grad_mut(self.w);
            matmul_at(self.in_features, ctx.rows, self.out_features, &ctx.x, dy, gw.data_mut(), true);
        }
        if let Some(b) = self.b {
            let gb = store.grad_mut(b).data_mut();
            for row in dy.chunks_exact(self.out_features) {
                for (g, &d) in gb.iter_mut().zip(row.iter()) {
                    *g += d;
                }
            }
        }
        // dx = dy · wᵀ
        let mut dx = alloc::vec![T::ZERO; ctx.rows * self.in_features];
        matmul_bt(ctx.rows, self.out_features, self.in_features, dy, store.value(self.w).data(), &mut dx, false);
        dx
    }

    pub fn name<T: Scalar>(&self, store: &VarStore<T>) -> String {
        store.iter().nth(self.w.0).map(|v| v.name.clone()).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::functional::mse;

    /// Central finite differences on every parameter and input of a tiny
    /// layer; the backward pass must match.
    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(9);
        let mut store = VarStore::<f64>::new();
        let lin = Linear::new(&mut store, "t", 3, 2, true, &mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
        let target: Vec<f64> = (0..4).map(|_| rng.normal()).collect();

        let loss_fn = |store: &VarStore<f64>, x: &[f64]| {
            let (y, _) = lin.forward(store, x, 2);
            mse(&y, &target)
        };

        // Analytic grads.
        let (y, ctx) = lin.forward(&store, &x, 2);
        let dy = crate::nn::functional::mse_backward(&y, &target);
        let dx = lin.backward(&mut store, &ctx, &dy);

        let h = 1e-6;
        // Input gradient.
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss_fn(&store, &xp) - loss_fn(&store, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7, "dx[{i}] analytic {} fd {fd}", dx[i]);
        }
        // Parameter gradients.
        for id in [lin.w, lin.b.unwrap()] {
            for i in 0..store.value(id).numel() {
                let orig = store.value(id).data()[i];
                store.value_mut(id).data_mut()[i] = orig + h;
                let fp = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig - h;
                let fm = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let g = store.grad(id).data()[i];
                assert!((fd - g).abs() < 1e-7, "param grad analytic {g} fd {fd}");
            }
        }
    }
}
