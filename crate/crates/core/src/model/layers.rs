use crate::error::{Error, Result};
use crate::tensor::{Tape, Var};

use super::params::{BlockVars, FusionVars, OutputVars, TemporalConvVars};

pub const LAYER_NORM_EPS: f64 = 1e-10;

fn dims4(tape: &Tape, x: Var, op: &'static str) -> Result<[usize; 4]> {
    match *tape.shape(x) {
        [b, c, t, n] => Ok([b, c, t, n]),
        ref s => Err(Error::dim(op, format!("expected a [B, C, T, n] tensor, got {s:?}"))),
    }
}

/// Gated temporal convolution on `[B, c_in, T, n]`, returning
/// `[B, c_out, T − K_t + 1, n]` as `(P + R) ⊙ σ(Q)`.
pub fn temporal_gated_conv(tape: &mut Tape, x: Var, p: &TemporalConvVars) -> Result<Var> {
    let [_, c_in, t, _] = dims4(tape, x, "temporal_gated_conv")?;
    let ks = tape.shape(p.kernel).to_vec();
    if ks.len() != 3 || ks[0] % 2 != 0 || ks[1] != c_in {
        return Err(Error::dim(
            "temporal_gated_conv",
            format!("kernel {ks:?} does not map {c_in} channels to a gated pair"),
        ));
    }
    let (c_out, k) = (ks[0] / 2, ks[2]);
    if t < k {
        return Err(Error::Window { op: "temporal_gated_conv", len: t, kernel: k });
    }
    let conv = tape.conv1d_time(x, p.kernel, Some(p.bias))?;
    let pp = tape.narrow(conv, 1, 0, c_out)?;
    let q = tape.narrow(conv, 1, c_out, c_out)?;
    let cropped = tape.narrow(x, 2, k - 1, t - k + 1)?;
    let r = match p.residual {
        Some(w) => tape.conv1d_time(cropped, w, None)?,
        None if c_in == c_out => cropped,
        None => {
            return Err(Error::Contract(format!(
                "temporal conv {c_in}→{c_out} needs a residual projection"
            )))
        }
    };
    let gate = tape.sigmoid(q);
    let sum = tape.add(pp, r)?;
    tape.mul(sum, gate)
}

/// `ReLU(A · H · W + bias)` at every (batch, time) slice of `[B, c, T, n]`.
pub fn spatial_graph_conv(tape: &mut Tape, x: Var, a_norm: Var, weight: Var, bias: Var) -> Result<Var> {
    let [b, c, t, n] = dims4(tape, x, "spatial_graph_conv")?;
    if tape.shape(a_norm) != [n, n] {
        return Err(Error::dim(
            "spatial_graph_conv",
            format!("input has {n} nodes but propagation matrix is {:?}", tape.shape(a_norm)),
        ));
    }
    let ws = tape.shape(weight).to_vec();
    if ws.len() != 2 || ws[0] != c {
        return Err(Error::dim("spatial_graph_conv", format!("weight {ws:?} does not accept {c} channels")));
    }
    let c2 = ws[1];
    let at = tape.permute(a_norm, &[1, 0])?;
    let flat = tape.reshape(x, &[b * c * t, n])?;
    let mixed = tape.matmul(flat, at)?;
    let mixed = tape.reshape(mixed, &[b, c, t, n])?;
    let nodes_last = tape.permute(mixed, &[0, 2, 3, 1])?;
    let rows = tape.reshape(nodes_last, &[b * t * n, c])?;
    let y = tape.matmul(rows, weight)?;
    let y = tape.add(y, bias)?;
    let y = tape.relu(y);
    let y = tape.reshape(y, &[b, t, n, c2])?;
    tape.permute(y, &[0, 3, 1, 2])
}

/// Layer normalisation over (channel, node) at each (batch, time) position,
/// followed by a per-channel gain and shift.
pub fn channel_node_norm(tape: &mut Tape, x: Var, gain: Var, shift: Var) -> Result<Var> {
    dims4(tape, x, "layer_norm")?;
    let y = tape.permute(x, &[0, 2, 3, 1])?;
    let y = tape.layer_norm(y, 2, LAYER_NORM_EPS)?;
    let y = tape.mul(y, gain)?;
    let y = tape.add(y, shift)?;
    tape.permute(y, &[0, 3, 1, 2])
}

pub fn st_conv_block(tape: &mut Tape, x: Var, p: &BlockVars, a_norm: Var) -> Result<Var> {
    let h = temporal_gated_conv(tape, x, &p.tconv1)?;
    let h = spatial_graph_conv(tape, h, a_norm, p.sconv_weight, p.sconv_bias)?;
    let h = temporal_gated_conv(tape, h, &p.tconv2)?;
    channel_node_norm(tape, h, p.norm_gain, p.norm_shift)
}

/// Concatenates projected node embeddings onto the channel axis and mixes
/// back to the input channel count. `emb` is an `n × D_e` constant.
pub fn llm_fusion_block(tape: &mut Tape, h: Var, emb: Var, p: &FusionVars) -> Result<Var> {
    let [b, c, t, n] = dims4(tape, h, "llm_fusion_block")?;
    let es = tape.shape(emb).to_vec();
    let ps = tape.shape(p.proj).to_vec();
    if es.len() != 2 || ps.len() != 2 || es[1] != ps[0] {
        return Err(Error::Contract(format!(
            "embedding shape {es:?} does not match projection {ps:?}"
        )));
    }
    if es[0] != n {
        return Err(Error::dim("llm_fusion_block", format!("{} embedding rows for {n} nodes", es[0])));
    }
    let ce = ps[1];
    let e = tape.matmul(emb, p.proj)?;
    let e = tape.relu(e);
    let e = tape.broadcast_to(e, &[b, t, n, ce])?;
    let hl = tape.permute(h, &[0, 2, 3, 1])?;
    let cat = tape.concat(hl, e, 3)?;
    let rows = tape.reshape(cat, &[b * t * n, c + ce])?;
    let y = tape.matmul(rows, p.mix)?;
    let y = tape.add(y, p.bias)?;
    let y = tape.relu(y);
    let y = tape.reshape(y, &[b, t, n, c])?;
    tape.permute(y, &[0, 3, 1, 2])
}

/// Collapses `[B, c, T', n]` to `[B, H, n]`.
pub fn output_layer(tape: &mut Tape, h: Var, p: &OutputVars) -> Result<Var> {
    let [b, _, _, n] = dims4(tape, h, "output_layer")?;
    let y = tape.conv1d_time(h, p.collapse_kernel, Some(p.collapse_bias))?;
    if tape.shape(y)[2] != 1 {
        return Err(Error::dim(
            "output_layer",
            format!("collapse kernel leaves {} time steps", tape.shape(y)[2]),
        ));
    }
    let co = tape.shape(y)[1];
    let y = tape.reshape(y, &[b, co, n])?;
    let y = tape.permute(y, &[0, 2, 1])?;
    let y = tape.reshape(y, &[b * n, co])?;
    let y = tape.matmul(y, p.fc_weight)?;
    let y = tape.add(y, p.fc_bias)?;
    let hz = tape.shape(y)[1];
    let y = tape.reshape(y, &[b, n, hz])?;
    tape.permute(y, &[0, 2, 1])
}
