//! Spatio-temporal graph convolutional forecaster with an optional
//! node-embedding fusion block.
//!
//! Activations use the `[B, C, T, n]` layout between layers.

mod layers;
mod params;

pub use layers::{
    channel_node_norm, llm_fusion_block, output_layer, spatial_graph_conv, st_conv_block,
    temporal_gated_conv, LAYER_NORM_EPS,
};
pub use params::{
    ArchConfig, BlockVars, Bound, FusionVars, Init, ModelParams, OutputVars, ParamSpec,
    TemporalConvVars,
};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::graph::PropagationMatrix;
use crate::tensor::{Tape, Tensor, Var};

/// `x: [B, M, n]` to `[B, H, n]`.
pub fn forward(
    tape: &mut Tape,
    x: Var,
    params: &Bound,
    a_norm: Var,
    emb: Option<Var>,
    arch: &ArchConfig,
) -> Result<Var> {
    let (b, m, n) = match *tape.shape(x) {
        [b, m, n] => (b, m, n),
        ref s => return Err(Error::dim("forward", format!("expected [B, M, n] input, got {s:?}"))),
    };
    if m != arch.input_steps {
        return Err(Error::dim(
            "forward",
            format!("input has {m} steps, model expects {}", arch.input_steps),
        ));
    }
    let h = tape.reshape(x, &[b, 1, m, n])?;
    let h = st_conv_block(tape, h, &params.block("block1")?, a_norm)?;
    let mut h = st_conv_block(tape, h, &params.block("block2")?, a_norm)?;
    if arch.use_llm_block {
        let emb = emb.ok_or_else(|| Error::Contract("fusion block enabled but no embeddings given".into()))?;
        h = llm_fusion_block(tape, h, emb, &params.fusion()?)?;
    }
    output_layer(tape, h, &params.output()?)
}

/// Inputs shared by every batch: the propagation matrix and, for the fusion
/// variant, the node embeddings.
#[derive(Clone, Debug)]
pub struct GraphContext {
    pub a_norm: Tensor,
    pub embeddings: Option<Tensor>,
}

impl GraphContext {
    pub fn new(a_norm: &PropagationMatrix, embeddings: Option<&EmbeddingTable>) -> Result<Self> {
        let embeddings = match embeddings {
            Some(e) => {
                if e.n() != a_norm.n() {
                    return Err(Error::dim(
                        "graph context",
                        format!("{} embedding rows for {} nodes", e.n(), a_norm.n()),
                    ));
                }
                Some(Tensor::new(vec![e.n(), e.dim()], e.values().to_vec())?)
            }
            None => None,
        };
        Ok(GraphContext { a_norm: a_norm.to_tensor(), embeddings })
    }

    pub fn n(&self) -> usize {
        self.a_norm.shape()[0]
    }

    /// Records the context as constants on `tape`.
    pub fn bind(&self, tape: &mut Tape) -> (Var, Option<Var>) {
        let a = tape.constant(self.a_norm.clone());
        let e = self.embeddings.as_ref().map(|e| tape.constant(e.clone()));
        (a, e)
    }
}

/// Gradient-free forward pass.
pub fn predict(params: &ModelParams, ctx: &GraphContext, x: &Tensor) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let (a, e) = ctx.bind(&mut tape);
    let xv = tape.constant(x.clone());
    let y = forward(&mut tape, xv, &bound, a, e, params.arch())?;
    Ok(tape.value(y).clone())
}
