use std::ops::Range;

use super::EncoderConfig;

#[derive(Debug, Clone)]
pub(crate) struct LayerLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub wq: Range<usize>,
    pub bq: Range<usize>,
    pub wk: Range<usize>,
    pub bk: Range<usize>,
    pub wv: Range<usize>,
    pub bv: Range<usize>,
    pub wo: Range<usize>,
    pub bo: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
}

/// Offsets of every parameter tensor inside the flat parameter buffer.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub tok_emb: Range<usize>,
    pub pos_emb: Range<usize>,
    pub layers: Vec<LayerLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub head_w: Range<usize>,
    pub head_b: Range<usize>,
    pub total: usize,
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Init {
    Normal,
    Zeros,
    Ones,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

impl Layout {
    pub fn new(cfg: &EncoderConfig) -> Self {
        let (v, h, f) = (cfg.vocab_size, cfg.hidden, cfg.ffn);
        let mut c = Cursor(0);
        let tok_emb = c.take(v * h);
        let pos_emb = c.take(cfg.max_len * h);
        let layers = (0..cfg.layers)
            .map(|_| LayerLayout {
                ln1_g: c.take(h),
                ln1_b: c.take(h),
                wq: c.take(h * h),
                bq: c.take(h),
                wk: c.take(h * h),
                bk: c.take(h),
                wv: c.take(h * h),
                bv: c.take(h),
                wo: c.take(h * h),
                bo: c.take(h),
                ln2_g: c.take(h),
                ln2_b: c.take(h),
                w1: c.take(h * f),
                b1: c.take(f),
                w2: c.take(f * h),
                b2: c.take(h),
            })
            .collect();
        let lnf_g = c.take(h);
        let lnf_b = c.take(h);
        let head_w = c.take(h * v);
        let head_b = c.take(v);
        Self {
            tok_emb,
            pos_emb,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            total: c.0,
        }
    }

    /// Every tensor with its name and initializer, in buffer order.
    pub fn named(&self) -> Vec<(String, Range<usize>, Init)> {
        let mut out = vec![
            ("tok_emb".to_string(), self.tok_emb.clone(), Init::Normal),
            ("pos_emb".to_string(), self.pos_emb.clone(), Init::Normal),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let p = |n: &str| format!("layer{i}.{n}");
            out.extend([
                (p("ln1_g"), l.ln1_g.clone(), Init::Ones),
                (p("ln1_b"), l.ln1_b.clone(), Init::Zeros),
                (p("wq"), l.wq.clone(), Init::Normal),
                (p("bq"), l.bq.clone(), Init::Zeros),
                (p("wk"), l.wk.clone(), Init::Normal),
                (p("bk"), l.bk.clone(), Init::Zeros),
                (p("wv"), l.wv.clone(), Init::Normal),
                (p("bv"), l.bv.clone(), Init::Zeros),
                (p("wo"), l.wo.clone(), Init::Normal),
                (p("bo"), l.bo.clone(), Init::Zeros),
                (p("ln2_g"), l.ln2_g.clone(), Init::Ones),
                (p("ln2_b"), l.ln2_b.clone(), Init::Zeros),
                (p("w1"), l.w1.clone(), Init::Normal),
                (p("b1"), l.b1.clone(), Init::Zeros),
                (p("w2"), l.w2.clone(), Init::Normal),
                (p("b2"), l.b2.clone(), Init::Zeros),
            ]);
        }
        out.extend([
            ("lnf_g".to_string(), self.lnf_g.clone(), Init::Ones),
            ("lnf_b".to_string(), self.lnf_b.clone(), Init::Zeros),
            ("head_w".to_string(), self.head_w.clone(), Init::Normal),
            ("head_b".to_string(), self.head_b.clone(), Init::Zeros),
        ]);
        out
    }
}
