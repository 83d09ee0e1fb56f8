use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::{VarId, VarStore};
use crate::tensor::Tensor;

/// Layer normalization over the feature dimension of each row. Also used as
/// the decoder's per-pixel channel norm, since decoder maps are stored as
/// `[pixels, channels]`.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: VarId,
    pub beta: VarId,
    pub dim: usize,
    pub eps: f64,
}

pub struct LayerNormCtx<T: Scalar> {
    normalized: Vec<T>,
    rstd: Vec<T>,
    rows: usize,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut VarStore<T>, name: &str, dim: usize, _rng: &mut Rng) -> Self {
        let gamma = store.add(alloc::format!("{name}.gamma"), Tensor::full(&[dim], T::ONE));
        let beta = store.add(alloc::format!("{name}.beta"), Tensor::zeros(&[dim]));
        LayerNorm { gamma, beta, dim, eps: 1e-6 }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &VarStore<T>,
        x: &[T],
        rows: usize,
    ) -> (Vec<T>, LayerNormCtx<T>) {
        debug_assert_eq!(x.len(), rows * self.dim);
        let gamma = store.value(self.gamma).data();
        let beta = store.value(self.beta).data();
        let mut y = vec![T::ZERO; x.len()];
        let mut normalized = vec![T::ZERO; x.len()];
        let mut rstd = vec![T::ZERO; rows];
        let inv_d = 1.0 / self.dim as f64;
        for (r, row) in x.chunks_exact(self.dim).enumerate() {
            let mut mean = 0.0f64;
            for &v in row.iter() {
                mean += v.to_f64();
            }
            mean *= inv_d;
            let mut var = 0.0f64;
            for &v in row.iter() {
                let d = v.to_f64() - mean;
                var += d * d;
            }
            var *= inv_d;
            let r_inv = 1.0 / libm::sqrt(var + self.eps);
            rstd[r] = T::from_f64(r_inv);
            let base = r * self.dim;
            for (i, &v) in row.iter().enumerate() {
                let n = T::from_f64((v.to_f64() - mean) * r_inv);
                normalized[base + i] = n;
                y[base + i] = n * gamma[i] + beta[i];
            }
        }
        (y, LayerNormCtx { normalized, rstd, rows })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &LayerNormCtx<T>,
        dy: &[T],
    ) -> Vec<T> {
        let d = self.dim;
        debug_assert_eq!(dy.len(), ctx.rows * d);
        // Parameter grads.
        {
            let gg = store.grad_mut(self.gamma).data_mut();
            for (row_dy, row_n) in dy.chunks_exact(d).zip(ctx.normalized.chunks_exact(d)) {
                for ((g, &dyv), &nv) in gg.iter_mut().zip(row_dy.iter()).zip(row_n.iter()) {
                    *g += dyv * nv;
                }
            }
        }
        {
            let gb = store.grad_mut(self.beta).data_mut();
            for row_dy in dy.chunks_exact(d) {
                for (g, &dyv) in gb.iter_mut().zip(row_dy.iter()) {
                    *g += dyv;
                }
            }
        }
        // Input grad: dx = rstd * (dn - mean(dn) - n * mean(dn·n)), dn = dy*gamma.
        let gamma = store.value(self.gamma).data();
        let mut dx = vec![T::ZERO; dy.len()];
        let inv_d = 1.0 / d as f64;
        for r in 0..ctx.rows {
            let base = r * d;
            let row_dy = &dy[base..base + d];
            let row_n = &ctx.normalized[base..base + d];
            let mut mean_dn = 0.0f64;
            let mut mean_dn_n = 0.0f64;
            for i in 0..d {
                let dn = (row_dy[i] * gamma[i]).to_f64();
                mean_dn += dn;
                mean_dn_n += dn * row_n[i].to_f64();
            }
            mean_dn *= inv_d;
            mean_dn_n *= inv_d;
            let r_inv = ctx.rstd[r].to_f64();
            for i in 0..d {
                let dn = (row_dy[i] * gamma[i]).to_f64();
                dx[base + i] =
                    T::from_f64(r_inv * (dn - mean_dn - row_n[i].to_f64() * mean_dn_n));
            }
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::functional::{mse, mse_backward};

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = Rng::new(4);
        let mut store = VarStore::<f64>::new();
        let ln = LayerNorm::new(&mut store, "ln", 5, &mut rng);
        // Non-trivial gamma/beta so their gradients are exercised.
        for v in store.value_mut(ln.gamma).data_mut() {
            *v = 1.0 + 0.3 * rng.normal();
        }
        for v in store.value_mut(ln.beta).data_mut() {
            *v = 0.2 * rng.normal();
        }
        let x: Vec<f64> = (0..15).map(|_| rng.normal()).collect();
        let target: Vec<f64> = (0..15).map(|_| rng.normal()).collect();

        let loss_fn = |store: &VarStore<f64>, x: &[f64]| {
            let (y, _) = ln.forward(store, x, 3);
            mse(&y, &target)
        };

        let (y, ctx) = ln.forward(&store, &x, 3);
        let dy = mse_backward(&y, &target);
        let dx = ln.backward(&mut store, &ctx, &dy);

        let h = 1e-6;
        for i in 0..x.len() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let fd = (loss_fn(&store, &xp) - loss_fn(&store, &xm)) / (2.0 * h);
            assert!((fd - dx[i]).abs() < 1e-7, "dx[{i}]: analytic {} vs fd {fd}", dx[i]);
        }
        for id in [ln.gamma, ln.beta] {
            for i in 0..store.value(id).numel() {
                let orig = store.value(id).data()[i];
                store.value_mut(id).data_mut()[i] = orig + h;
                let fp = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig - h;
                let fm = loss_fn(&store, &x);
                store.value_mut(id).data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                let g = store.grad(id).data()[i];
                assert!((fd - g).abs() < 1e-7, "param: analytic {g} vs fd {fd}");
            }
        }
    }

    #[test]
    fn output_rows_are_standardized_under_unit_gamma() {
        let mut rng = Rng::new(7);
        let mut store = VarStore::<f64>::new();
        let ln = LayerNorm::new(&mut store, "ln", 16, &mut rng);
        let x: Vec<f64> = (0..64).map(|_| 3.0 + 2.0 * rng.normal()).collect();
        let (y, _) = ln.forward(&store, &x, 4);
        for row in y.chunks_exact(16) {
            let mean: f64 = row.iter().sum::<f64>() / 16.0;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-3);
        }
    }
}
