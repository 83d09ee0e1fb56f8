use alloc::vec;
use alloc::vec::Vec;

use crate::nn::functional::softmax_rows;
use crate::nn::linear::{Linear, LinearCtx};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::store::VarStore;
use crate::tensor::{matmul, matmul_at, matmul_bt};

/// Multi-head self-attention. Input rows stack a batch of token sequences;
/// the projections run over the whole stack in one product and attention
/// itself is applied per sequence.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub qkv: Linear,
    pub proj: Linear,
    pub heads: usize,
    pub dim: usize,
    pub head_dim: usize,
}

pub struct AttentionCtx<T: Scalar> {
    qkv_ctx: LinearCtx<T>,
    proj_ctx: LinearCtx<T>,
    qkv_out: Vec<T>,
    /// Softmax attention probabilities per (image, head).
    probs: Vec<Vec<T>>,
    tokens: usize,
    batch: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar>(
        store: &mut VarStore<T>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut Rng,
    ) -> Self {
        assert_eq!(dim % heads, 0, "dim must divide evenly into heads");
        let qkv = Linear::new(store, &alloc::format!("{name}.qkv"), dim, 3 * dim, true, rng);
        let proj = Linear::new(store, &alloc::format!("{name}.proj"), dim, dim, true, rng);
        MultiHeadAttention { qkv, proj, heads, dim, head_dim: dim / heads }
    }

    /// Head `h` of stream `which` (0=q, 1=k, 2=v) for image `b`, contiguous
    /// `[tokens, head_dim]`.
    fn slice_head<T: Scalar>(
        &self,
        qkv_out: &[T],
        tokens: usize,
        b: usize,
        which: usize,
        h: usize,
    ) -> Vec<T> {
        let dh = self.head_dim;
        let stride = 3 * self.dim;
        let offset = which * self.dim + h * dh;
        let base = b * tokens * stride;
        let mut out = vec![T::ZERO; tokens * dh];
        for t in 0..tokens {
            out[t * dh..(t + 1) * dh]
                .copy_from_slice(&qkv_out[base + t * stride + offset..base + t * stride + offset + dh]);
        }
        out
    }

    fn scatter_head<T: Scalar>(
        &self,
        dst: &mut [T],
        src: &[T],
        tokens: usize,
        b: usize,
        which: usize,
        h: usize,
    ) {
        let dh = self.head_dim;
        let stride = 3 * self.dim;
        let offset = which * self.dim + h * dh;
        let base = b * tokens * stride;
        for t in 0..tokens {
            dst[base + t * stride + offset..base + t * stride + offset + dh]
                .copy_from_slice(&src[t * dh..(t + 1) * dh]);
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        store: &VarStore<T>,
        x: &[T],
        tokens: usize,
        batch: usize,
    ) -> (Vec<T>, AttentionCtx<T>) {
        let dh = self.head_dim;
        let rows = batch * tokens;
        let scale = T::from_f64(1.0 / libm::sqrt(dh as f64));
        let (qkv_out, qkv_ctx) = self.qkv.forward(store, x, rows);

        let mut concat = vec![T::ZERO; rows * self.dim];
        let mut probs = Vec::with_capacity(batch * self.heads);
        for b in 0..batch {
            for h in 0..self.heads {
                let mut q = self.slice_head(&qkv_out, tokens, b, 0, h);
                let k = self.slice_head(&qkv_out, tokens, b, 1, h);
                let v = self.slice_head(&qkv_out, tokens, b, 2, h);
                for qv in &mut q {
                    *qv *= scale;
                }
                let mut scores = vec![T::ZERO; tokens * tokens];
                matmul_bt(tokens, dh, tokens, &q, &k, &mut scores, false);
                softmax_rows(&mut scores, tokens);
                let mut out_h = vec![T::ZERO; tokens * dh];
                matmul(tokens, tokens, dh, &scores, &v, &mut out_h, false);
                let base = b * tokens * self.dim;
                for t in 0..tokens {
                    concat[base + t * self.dim + h * dh..base + t * self.dim + (h + 1) * dh]
                        .copy_from_slice(&out_h[t * dh..(t + 1) * dh]);
                }
                probs.push(scores);
            }
        }
        let (y, proj_ctx) = self.proj.forward(store, &concat, rows);
        (y, AttentionCtx { qkv_ctx, proj_ctx, qkv_out, probs, tokens, batch })
    }

    pub fn backward<T: Scalar>(
        &self,
        store: &mut VarStore<T>,
        ctx: &AttentionCtx<T>,
        dy: &[T],
    ) -> Vec<T> {
        let tokens = ctx.tokens;
        let dh = self.head_dim;
        let scale = T::from_f64(1.0 / libm::sqrt(dh as f64));

        let dconcat = self.proj.backward(store, &ctx.proj_ctx, dy);
        let mut dqkv = vec![T::ZERO; ctx.batch * tokens * 3 * self.dim];
        for b in 0..ctx.batch {
            for h in 0..self.heads {
                let probs = &ctx.probs[b * self.heads + h];
                let mut q = self.slice_head(&ctx.qkv_out, tokens, b, 0, h);
                let k = self.slice_head(&ctx.qkv_out, tokens, b, 1, h);
                let v = self.slice_head(&ctx.qkv_out, tokens, b, 2, h);
                for qv in &mut q {
                    *qv *= scale;
                }
                let mut dout_h = vec![T::ZERO; tokens * dh];
                let base = b * tokens * self.dim;
                for t in 0..tokens {
                    dout_h[t * dh..(t + 1) * dh].copy_from_slice(
                        &dconcat[base + t * self.dim + h * dh..base + t * self.dim + (h + 1) * dh],
                    );
                }
                // dv = probsᵀ · dout, dprobs = dout · vᵀ
                let mut dv = vec![T::ZERO; tokens * dh];
                matmul_at(tokens, tokens, dh, probs, &dout_h, &mut dv, false);
                let mut dprobs = vec![T::ZERO; tokens * tokens];
                matmul_bt(tokens, dh, tokens, &dout_h, &v, &mut dprobs, false);
                // Softmax backward: ds = p ⊙ (dp − rowsum(dp ⊙ p)).
                let mut dscores = vec![T::ZERO; tokens * tokens];
                for t in 0..tokens {
                    let p_row = &probs[t * tokens..(t + 1) * tokens];
                    let dp_row = &dprobs[t * tokens..(t + 1) * tokens];
                    let mut dot = 0.0f64;
                    for i in 0..tokens {
                        dot += (p_row[i] * dp_row[i]).to_f64();
                    }
                    let dot = T::from_f64(dot);
                    for i in 0..tokens {
                        dscores[t * tokens + i] = p_row[i] * (dp_row[i] - dot);
                    }
                }
                // dq_scaled = ds·k ; dk = dsᵀ·q_scaled
                let mut dq = vec![T::ZERO; tokens * dh];
                matmul(tokens, tokens, dh, &dscores, &k, &mut dq, false);
                for g in &mut dq {
                    *g *= scale;
                }
                let mut dk = vec![T::ZERO; tokens * dh];
                matmul_at(tokens, tokens, dh, &dscores, &q, &mut dk, false);

                self.scatter_head(&mut dqkv, &dq, tokens, b, 0, h);
                self.scatter_head(&mut dqkv, &dk, tokens, b, 1, h);
                self.scatter_head(&mut dqkv, &dv, tokens, b, 2, h);
            }
        }
        self.qkv.backward(store, &ctx.qkv_ctx, &dqkv)
    }
}
