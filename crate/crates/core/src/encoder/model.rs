use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::layout::{Init, LayerLayout, Layout};
use super::ops::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax_in_place,
    LayerNormCache,
};
use super::vocab::{CLS, PAD};
use super::EncoderConfig;
use crate::error::{Error, Result};
use crate::rng::stream;

/// Pre-norm transformer encoder over a flat parameter buffer.
#[derive(Debug, Clone)]
pub struct Encoder {
    config: EncoderConfig,
    layout: Layout,
    params: Vec<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    x_in: Vec<f64>,
    ln1: LayerNormCache,
    a: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// Attention probabilities, `[heads × T × T]`.
    probs: Vec<f64>,
    ctx: Vec<f64>,
    x_mid: Vec<f64>,
    ln2: LayerNormCache,
    c: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

/// Everything recorded by one forward pass over a single sequence.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    ids: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LayerNormCache,
    /// Final hidden states `[T × H]`.
    hidden: Vec<f64>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    /// Last-layer state at position 0, the `[CLS]` embedding.
    pub fn cls(&self) -> &[f64] {
        let h = self.hidden.len() / self.ids.len();
        &self.hidden[..h]
    }

    pub fn hidden_row(&self, pos: usize) -> &[f64] {
        let h = self.hidden.len() / self.ids.len();
        &self.hidden[pos * h..(pos + 1) * h]
    }
}

impl Encoder {
    /// Fresh encoder with N(0, init_std) weights, unit norm gains and zero biases.
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let normal = Normal::new(0.0, config.init_std)
            .map_err(|e| Error::Config(format!("init distribution: {e}")))?;
        let mut rng = stream(config.seed, "encoder-init", 0);
        for (_, range, init) in layout.named() {
            match init {
                Init::Normal => params[range]
                    .iter_mut()
                    .for_each(|p| *p = normal.sample(&mut rng)),
                Init::Ones => params[range].iter_mut().for_each(|p| *p = 1.0),
                Init::Zeros => {}
            }
        }
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: EncoderConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                layout.total,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("encoder parameters".into()));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Named parameter groups as `(name, offset range)`.
    pub fn param_groups(&self) -> Vec<(String, std::ops::Range<usize>)> {
        self.layout
            .named()
            .into_iter()
            .map(|(n, r, _)| (n, r))
            .collect()
    }

    fn p(&self, r: &std::ops::Range<usize>) -> &[f64] {
        &self.params[r.clone()]
    }

    /// Clip to `max_len`, keeping the leading `[CLS]`.
    pub fn prepare(&self, ids: &[u32]) -> Vec<u32> {
        if ids.len() > self.config.max_len {
            log::warn!(
                "sequence of {} tokens truncated to max_len {}",
                ids.len(),
                self.config.max_len
            );
            ids[..self.config.max_len].to_vec()
        } else {
            ids.to_vec()
        }
    }

    pub fn forward(&self, ids: &[u32]) -> Result<ForwardCache> {
        let ids = self.prepare(ids);
        if ids.is_empty() {
            return Err(Error::Shape("empty input sequence".into()));
        }
        if ids[0] != CLS {
            return Err(Error::Shape("input must start with [CLS]".into()));
        }
        let cfg = &self.config;
        let (t, h) = (ids.len(), cfg.hidden);
        if let Some(&bad) = ids.iter().find(|&&i| i as usize >= cfg.vocab_size) {
            return Err(Error::Shape(format!("token id {bad} outside vocabulary")));
        }
        let key_mask: Vec<bool> = ids.iter().map(|&i| i != PAD).collect();

        let tok = self.p(&self.layout.tok_emb);
        let pos = self.p(&self.layout.pos_emb);
        let mut x = vec![0.0; t * h];
        for (p, &id) in ids.iter().enumerate() {
            let row = &mut x[p * h..(p + 1) * h];
            let te = &tok[id as usize * h..(id as usize + 1) * h];
            let pe = &pos[p * h..(p + 1) * h];
            for c in 0..h {
                row[c] = te[c] + pe[c];
            }
        }

        let mut layers = Vec::with_capacity(cfg.layers);
        for l in &self.layout.layers {
            let (cache, out) = self.layer_forward(l, x, &key_mask);
            layers.push(cache);
            x = out;
        }
        let (hidden, lnf) = layer_norm(
            &x,
            t,
            h,
            self.p(&self.layout.lnf_g),
            self.p(&self.layout.lnf_b),
            cfg.ln_eps,
        );
        Ok(ForwardCache { ids, layers, lnf, hidden })
    }

    fn layer_forward(&self, l: &LayerLayout, x_in: Vec<f64>, key_mask: &[bool]) -> (LayerCache, Vec<f64>) {
        let cfg = &self.config;
        let (t, h, f) = (key_mask.len(), cfg.hidden, cfg.ffn);
        let (nh, dh) = (cfg.heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        let (a, ln1) = layer_norm(&x_in, t, h, self.p(&l.ln1_g), self.p(&l.ln1_b), cfg.ln_eps);
        let q = linear(&a, t, h, self.p(&l.wq), self.p(&l.bq), h);
        let k = linear(&a, t, h, self.p(&l.wk), self.p(&l.bk), h);
        let v = linear(&a, t, h, self.p(&l.wv), self.p(&l.bv), h);

        let mut probs = vec![0.0; nh * t * t];
        let mut ctx = vec![0.0; t * h];
        for head in 0..nh {
            let off = head * dh;
            for i in 0..t {
                let row = &mut probs[(head * t + i) * t..(head * t + i + 1) * t];
                let qi = &q[i * h + off..i * h + off + dh];
                for j in 0..t {
                    row[j] = if key_mask[j] {
                        let kj = &k[j * h + off..j * h + off + dh];
                        qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale
                    } else {
                        f64::NEG_INFINITY
                    };
                }
                softmax_in_place(row);
                let ci = &mut ctx[i * h + off..i * h + off + dh];
                for j in 0..t {
                    let pij = row[j];
                    if pij == 0.0 {
                        continue;
                    }
                    for (c, &vj) in ci.iter_mut().zip(&v[j * h + off..j * h + off + dh]) {
                        *c += pij * vj;
                    }
                }
            }
        }

        let o = linear(&ctx, t, h, self.p(&l.wo), self.p(&l.bo), h);
        let x_mid: Vec<f64> = x_in.iter().zip(&o).map(|(a, b)| a + b).collect();
        let (c, ln2) = layer_norm(&x_mid, t, h, self.p(&l.ln2_g), self.p(&l.ln2_b), cfg.ln_eps);
        let u = linear(&c, t, h, self.p(&l.w1), self.p(&l.b1), f);
        let g: Vec<f64> = u.iter().map(|&z| gelu(z)).collect();
        let ff = linear(&g, t, f, self.p(&l.w2), self.p(&l.b2), h);
        let out: Vec<f64> = x_mid.iter().zip(&ff).map(|(a, b)| a + b).collect();

        let cache = LayerCache {
            x_in,
            ln1,
            a,
            q,
            k,
            v,
            probs,
            ctx,
            x_mid,
            ln2,
            c,
            u,
            g,
        };
        (cache, out)
    }

    /// Accumulate parameter gradients given `d_hidden = ∂L/∂hidden` (`[T × H]`).
    pub fn backward(&self, cache: &ForwardCache, d_hidden: &[f64], grads: &mut [f64]) -> Result<()> {
        let cfg = &self.config;
        let (t, h) = (cache.len(), cfg.hidden);
        if d_hidden.len() != t * h || grads.len() != self.params.len() {
            return Err(Error::Shape("backward buffers do not match the forward pass".into()));
        }
        let lay = &self.layout;
        let mut dx = vec![0.0; t * h];
        {
            let (dg, db) = split_two(grads, &lay.lnf_g, &lay.lnf_b);
            layer_norm_backward(d_hidden, &cache.lnf, t, h, self.p(&lay.lnf_g), &mut dx, dg, db);
        }
        for (l, lc) in lay.layers.iter().zip(&cache.layers).rev() {
            dx = self.layer_backward(l, lc, dx, &cache.ids, grads);
        }
        // embeddings
        for (p, &id) in cache.ids.iter().enumerate() {
            let dr = &dx[p * h..(p + 1) * h];
            let te = lay.tok_emb.start + id as usize * h;
            let pe = lay.pos_emb.start + p * h;
            for c in 0..h {
                grads[te + c] += dr[c];
                grads[pe + c] += dr[c];
            }
        }
        Ok(())
    }

    fn layer_backward(
        &self,
        l: &LayerLayout,
        lc: &LayerCache,
        d_out: Vec<f64>,
        ids: &[u32],
        grads: &mut [f64],
    ) -> Vec<f64> {
        let cfg = &self.config;
        let (t, h, f) = (ids.len(), cfg.hidden, cfg.ffn);
        let (nh, dh) = (cfg.heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();

        // out = x_mid + FFN(LN2(x_mid))
        let mut d_mid = d_out.clone();
        let mut dg = vec![0.0; t * f];
        {
            let (dw, db) = split_two(grads, &l.w2, &l.b2);
            linear_backward(&d_out, &lc.g, t, f, self.p(&l.w2), h, &mut dg, dw, db);
        }
        let du: Vec<f64> = dg.iter().zip(&lc.u).map(|(d, &u)| d * gelu_grad(u)).collect();
        let mut dc = vec![0.0; t * h];
        {
            let (dw, db) = split_two(grads, &l.w1, &l.b1);
            linear_backward(&du, &lc.c, t, h, self.p(&l.w1), f, &mut dc, dw, db);
        }
        {
            let (dgain, dbias) = split_two(grads, &l.ln2_g, &l.ln2_b);
            layer_norm_backward(&dc, &lc.ln2, t, h, self.p(&l.ln2_g), &mut d_mid, dgain, dbias);
        }

        // x_mid = x_in + Wo·Attn(LN1(x_in))
        let mut d_in = d_mid.clone();
        let mut dctx = vec![0.0; t * h];
        {
            let (dw, db) = split_two(grads, &l.wo, &l.bo);
            linear_backward(&d_mid, &lc.ctx, t, h, self.p(&l.wo), h, &mut dctx, dw, db);
        }
        let mut dq = vec![0.0; t * h];
        let mut dk = vec![0.0; t * h];
        let mut dv = vec![0.0; t * h];
        let mut dp = vec![0.0; t];
        for head in 0..nh {
            let off = head * dh;
            for i in 0..t {
                let prow = &lc.probs[(head * t + i) * t..(head * t + i + 1) * t];
                let dci = &dctx[i * h + off..i * h + off + dh];
                let mut dot = 0.0;
                for j in 0..t {
                    let pij = prow[j];
                    if pij == 0.0 {
                        dp[j] = 0.0;
                        continue;
                    }
                    let vj = &lc.v[j * h + off..j * h + off + dh];
                    dp[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                    dot += pij * dp[j];
                    for (dvc, &d) in dv[j * h + off..j * h + off + dh].iter_mut().zip(dci) {
                        *dvc += pij * d;
                    }
                }
                for j in 0..t {
                    let pij = prow[j];
                    if pij == 0.0 {
                        continue;
                    }
                    let ds = pij * (dp[j] - dot) * scale;
                    for c in 0..dh {
                        dq[i * h + off + c] += ds * lc.k[j * h + off + c];
                        dk[j * h + off + c] += ds * lc.q[i * h + off + c];
                    }
                }
            }
        }
        let mut da = vec![0.0; t * h];
        for (w, b, d) in [(&l.wq, &l.bq, &dq), (&l.wk, &l.bk, &dk), (&l.wv, &l.bv, &dv)] {
            let (dw, db) = split_two(grads, w, b);
            linear_backward(d, &lc.a, t, h, self.p(w), h, &mut da, dw, db);
        }
        {
            let (dgain, dbias) = split_two(grads, &l.ln1_g, &l.ln1_b);
            layer_norm_backward(&da, &lc.ln1, t, h, self.p(&l.ln1_g), &mut d_in, dgain, dbias);
        }
        debug_assert_eq!(lc.x_in.len(), t * h);
        debug_assert_eq!(lc.x_mid.len(), t * h);
        d_in
    }

    /// MLM head logits for one hidden row.
    pub fn mlm_logits(&self, hidden_row: &[f64]) -> Vec<f64> {
        linear(
            hidden_row,
            1,
            self.config.hidden,
            self.p(&self.layout.head_w),
            self.p(&self.layout.head_b),
            self.config.vocab_size,
        )
    }

    /// Backward through the MLM head for one row; returns `∂L/∂hidden_row`.
    pub fn mlm_head_backward(&self, hidden_row: &[f64], d_logits: &[f64], grads: &mut [f64]) -> Vec<f64> {
        let (h, v) = (self.config.hidden, self.config.vocab_size);
        let mut dh = vec![0.0; h];
        let (dw, db) = split_two(grads, &self.layout.head_w, &self.layout.head_b);
        linear_backward(d_logits, hidden_row, 1, h, self.p(&self.layout.head_w), v, &mut dh, dw, db);
        dh
    }

    /// `[CLS]` embedding of one sequence.
    pub fn embed(&self, ids: &[u32]) -> Result<Vec<f64>> {
        Ok(self.forward(ids)?.cls().to_vec())
    }

    /// `[CLS]` embeddings of many sequences; rows follow input order.
    pub fn embed_batch(&self, seqs: &[Vec<u32>]) -> Result<Vec<Vec<f64>>> {
        seqs.par_iter().map(|s| self.embed(s)).collect()
    }
}

/// Two disjoint mutable sub-slices of the gradient buffer.
fn split_two<'a>(
    buf: &'a mut [f64],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'a mut [f64], &'a mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = buf.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.end - b.start])
}
