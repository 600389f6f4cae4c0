//! Parameterized building blocks. Each layer owns only [`ParamId`]s; the
//! weights live in a [`ParamStore`] and are read through the tape.

use rand::Rng;

use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        let weight = store.xavier(format!("{name}.weight"), d_in, d_out, d_in, d_out, rng);
        let bias = store.zeros(format!("{name}.bias"), 1, d_out);
        Linear {
            weight,
            bias,
            d_in,
            d_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }

    /// Forward with weights copied from `store` as constants; no gradient
    /// flows into them.
    pub fn forward_frozen(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.input(store.get(self.weight).clone());
        let b = tape.input(store.get(self.bias).clone());
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// Same-padded temporal convolution over stacked `(B*T) x C` sequences.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
    pub c_in: usize,
    pub c_out: usize,
}

impl Conv1d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        let fan_in = c_in * kernel;
        let weight = store.xavier(
            format!("{name}.weight"),
            fan_in,
            c_out,
            fan_in,
            c_out * kernel,
            rng,
        );
        let bias = store.zeros(format!("{name}.bias"), 1, c_out);
        Conv1d {
            weight,
            bias,
            kernel,
            c_in,
            c_out,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, seq: usize) -> Var {
        let w = tape.param(self.weight);
        let b = tape.param(self.bias);
        let y = tape.conv1d(x, w, seq, self.kernel);
        tape.add_row(y, b)
    }

    pub fn forward_frozen(&self, tape: &mut Tape, store: &ParamStore, x: Var, seq: usize) -> Var {
        let w = tape.input(store.get(self.weight).clone());
        let b = tape.input(store.get(self.bias).clone());
        let y = tape.conv1d(x, w, seq, self.kernel);
        tape.add_row(y, b)
    }

    /// Frames on each side that influence one output frame.
    pub fn radius(&self) -> usize {
        self.kernel / 2
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        LayerNorm {
            gamma: store.ones(format!("{name}.gamma"), 1, width),
            beta: store.zeros(format!("{name}.beta"), 1, width),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Var {
        let g = tape.param(self.gamma);
        let b = tape.param(self.beta);
        tape.layer_norm(x, g, b, 1e-5)
    }
}

/// Pre-norm transformer encoder block: self-attention then a GELU MLP, each
/// wrapped in a residual connection.
#[derive(Debug, Clone)]
pub struct TransformerBlock {
    pub norm1: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub proj: Linear,
    pub norm2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub heads: usize,
}

impl TransformerBlock {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        heads: usize,
        ff_mult: usize,
        rng: &mut R,
    ) -> Self {
        assert_eq!(width % heads, 0, "width must divide into heads");
        TransformerBlock {
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), width),
            q: Linear::new(store, &format!("{name}.q"), width, width, rng),
            k: Linear::new(store, &format!("{name}.k"), width, width, rng),
            v: Linear::new(store, &format!("{name}.v"), width, width, rng),
            proj: Linear::new(store, &format!("{name}.proj"), width, width, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), width),
            ff1: Linear::new(store, &format!("{name}.ff1"), width, width * ff_mult, rng),
            ff2: Linear::new(store, &format!("{name}.ff2"), width * ff_mult, width, rng),
            heads,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, seq: usize) -> Var {
        let h = self.norm1.forward(tape, x);
        let q = self.q.forward(tape, h);
        let k = self.k.forward(tape, h);
        let v = self.v.forward(tape, h);
        let a = tape.attention(q, k, v, self.heads, seq);
        let a = self.proj.forward(tape, a);
        let x = tape.add(x, a);
        let h = self.norm2.forward(tape, x);
        let h = self.ff1.forward(tape, h);
        let h = tape.gelu(h);
        let h = self.ff2.forward(tape, h);
        tape.add(x, h)
    }
}
