use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Architecture hyper-parameters. Channel triples are `(c_in, c_mid, c_out)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub input_steps: usize,
    pub horizon: usize,
    pub kernel_size: usize,
    pub block1: [usize; 3],
    pub block2: [usize; 3],
    pub fusion_channels: usize,
    pub embedding_dim: usize,
    pub use_llm_block: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            input_steps: 12,
            horizon: 3,
            kernel_size: 3,
            block1: [1, 16, 64],
            block2: [64, 16, 64],
            fusion_channels: 16,
            embedding_dim: 1536,
            use_llm_block: false,
        }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.input_steps as i64;
        let k = self.kernel_size as i64;
        if self.kernel_size == 0 || m - 4 * (k - 1) < 1 {
            return Err(Error::Validation(format!(
                "M − 4(K_t − 1) ≥ 1 violated: M={}, K_t={} leaves {} time step(s)",
                self.input_steps,
                self.kernel_size,
                m - 4 * (k - 1)
            )));
        }
        let channels = self.block1.iter().chain(&self.block2);
        if self.horizon == 0 || channels.clone().any(|&c| c == 0) {
            return Err(Error::Validation("horizon and all channel counts must be at least 1".into()));
        }
        if self.block1[0] != 1 {
            return Err(Error::Validation(format!(
                "block 1 consumes the single demand channel; c_in must be 1, got {}",
                self.block1[0]
            )));
        }
        if self.block2[0] != self.block1[2] {
            return Err(Error::Validation(format!(
                "block 2 input channels ({}) must equal block 1 output channels ({})",
                self.block2[0], self.block1[2]
            )));
        }
        if self.use_llm_block && (self.fusion_channels == 0 || self.embedding_dim == 0) {
            return Err(Error::Validation("fusion block needs positive fusion_channels and embedding_dim".into()));
        }
        Ok(())
    }

    /// Time steps left after both ST-Conv blocks: `M − 4(K_t − 1)`.
    pub fn collapsed_steps(&self) -> usize {
        self.input_steps + 4 - 4 * self.kernel_size
    }

    /// Name, shape and initialisation of every parameter, in manifest order.
    pub fn layout(&self) -> Vec<ParamSpec> {
        let mut out = Vec::new();
        let k = self.kernel_size;
        for (name, [c_in, c_mid, c_out]) in [("block1", self.block1), ("block2", self.block2)] {
            temporal_specs(&mut out, &format!("{name}.tconv1"), c_in, c_mid, k);
            let p = format!("{name}.sconv");
            out.push(ParamSpec::uniform(format!("{p}.weight"), vec![c_mid, c_mid], c_mid));
            out.push(ParamSpec::uniform(format!("{p}.bias"), vec![c_mid], c_mid));
            temporal_specs(&mut out, &format!("{name}.tconv2"), c_mid, c_out, k);
            out.push(ParamSpec::constant(format!("{name}.norm.gain"), vec![c_out], 1.0));
            out.push(ParamSpec::constant(format!("{name}.norm.shift"), vec![c_out], 0.0));
        }
        let c = self.block2[2];
        if self.use_llm_block {
            let ce = self.fusion_channels;
            out.push(ParamSpec::uniform("fusion.proj".into(), vec![self.embedding_dim, ce], self.embedding_dim));
            out.push(ParamSpec::uniform("fusion.mix".into(), vec![c + ce, c], c + ce));
            out.push(ParamSpec::uniform("fusion.bias".into(), vec![c], c + ce));
        }
        let tc = self.collapsed_steps();
        out.push(ParamSpec::uniform("output.collapse.kernel".into(), vec![c, c, tc], c * tc));
        out.push(ParamSpec::uniform("output.collapse.bias".into(), vec![c], c * tc));
        out.push(ParamSpec::uniform("output.fc.weight".into(), vec![c, self.horizon], c));
        out.push(ParamSpec::uniform("output.fc.bias".into(), vec![self.horizon], c));
        out
    }

    pub fn param_count(&self) -> usize {
        self.layout().iter().map(|s| s.shape.iter().product::<usize>()).sum()
    }
}

fn temporal_specs(out: &mut Vec<ParamSpec>, prefix: &str, c_in: usize, c_out: usize, k: usize) {
    out.push(ParamSpec::uniform(format!("{prefix}.kernel"), vec![2 * c_out, c_in, k], c_in * k));
    out.push(ParamSpec::uniform(format!("{prefix}.bias"), vec![2 * c_out], c_in * k));
    if c_in != c_out {
        out.push(ParamSpec::uniform(format!("{prefix}.residual"), vec![c_out, c_in, 1], c_in));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Init {
    /// `uniform(−s, s)` with `s = sqrt(1 / fan_in)`.
    Uniform { fan_in: usize },
    Constant(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ParamSpec {
    fn uniform(name: String, shape: Vec<usize>, fan_in: usize) -> Self {
        ParamSpec { name, shape, init: Init::Uniform { fan_in } }
    }

    fn constant(name: String, shape: Vec<usize>, value: f64) -> Self {
        ParamSpec { name, shape, init: Init::Constant(value) }
    }
}

/// Every trainable tensor of one model, in the order given by
/// [`ArchConfig::layout`].
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    arch: ArchConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    /// Seeded initialisation.
    pub fn init(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (names, tensors) = arch
            .layout()
            .into_iter()
            .map(|spec| {
                let t = match spec.init {
                    Init::Uniform { fan_in } => {
                        let s = (1.0 / fan_in as f64).sqrt();
                        Tensor::uniform(&spec.shape, -s, s, &mut rng)
                    }
                    Init::Constant(v) => Tensor::full(&spec.shape, v),
                };
                (spec.name, t)
            })
            .unzip();
        Ok(ModelParams { arch: arch.clone(), names, tensors })
    }

    /// Rebuilds parameters from tensors listed in manifest order.
    pub fn from_tensors(arch: &ArchConfig, tensors: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if layout.len() != tensors.len() {
            return Err(Error::Validation(format!(
                "expected {} parameter tensors, got {}",
                layout.len(),
                tensors.len()
            )));
        }
        for (spec, t) in layout.iter().zip(&tensors) {
            if spec.shape != t.shape() {
                return Err(Error::Validation(format!(
                    "parameter {} has shape {:?}, architecture expects {:?}",
                    spec.name,
                    t.shape(),
                    spec.shape
                )));
            }
        }
        Ok(ModelParams {
            arch: arch.clone(),
            names: layout.into_iter().map(|s| s.name).collect(),
            tensors,
        })
    }

    pub fn arch(&self) -> &ArchConfig {
        &self.arch
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.position(name).map(|i| &self.tensors[i])
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let i = self
            .position(name)
            .ok_or_else(|| Error::Validation(format!("no parameter named {name}")))?;
        if value.shape() != self.tensors[i].shape() {
            return Err(Error::dim(
                "set",
                format!("{name} has shape {:?}, got {:?}", self.tensors[i].shape(), value.shape()),
            ));
        }
        self.tensors[i] = value;
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }

    /// Records every parameter on `tape`, as gradient-tracked leaves when
    /// `trainable`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self.tensors.iter().map(|t| tape.leaf(t.clone(), trainable)).collect();
        Bound::new(self.names.clone(), vars)
    }
}

/// Parameters recorded on a tape, addressable by name.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn new(names: Vec<String>, vars: Vec<Var>) -> Self {
        let index = names.into_iter().enumerate().map(|(i, n)| (n, i)).collect();
        Bound { vars, index }
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| Error::Contract(format!("missing parameter {name}")))
    }

    fn opt(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }

    pub fn temporal(&self, prefix: &str) -> Result<TemporalConvVars> {
        Ok(TemporalConvVars {
            kernel: self.get(&format!("{prefix}.kernel"))?,
            bias: self.get(&format!("{prefix}.bias"))?,
            residual: self.opt(&format!("{prefix}.residual")),
        })
    }

    pub fn block(&self, prefix: &str) -> Result<BlockVars> {
        Ok(BlockVars {
            tconv1: self.temporal(&format!("{prefix}.tconv1"))?,
            sconv_weight: self.get(&format!("{prefix}.sconv.weight"))?,
            sconv_bias: self.get(&format!("{prefix}.sconv.bias"))?,
            tconv2: self.temporal(&format!("{prefix}.tconv2"))?,
            norm_gain: self.get(&format!("{prefix}.norm.gain"))?,
            norm_shift: self.get(&format!("{prefix}.norm.shift"))?,
        })
    }

    pub fn fusion(&self) -> Result<FusionVars> {
        Ok(FusionVars {
            proj: self.get("fusion.proj")?,
            mix: self.get("fusion.mix")?,
            bias: self.get("fusion.bias")?,
        })
    }

    pub fn output(&self) -> Result<OutputVars> {
        Ok(OutputVars {
            collapse_kernel: self.get("output.collapse.kernel")?,
            collapse_bias: self.get("output.collapse.bias")?,
            fc_weight: self.get("output.fc.weight")?,
            fc_bias: self.get("output.fc.bias")?,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TemporalConvVars {
    /// `[2·c_out, c_in, K_t]`
    pub kernel: Var,
    /// `[2·c_out]`
    pub bias: Var,
    /// `[c_out, c_in, 1]`, present when `c_in ≠ c_out`.
    pub residual: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
pub struct BlockVars {
    pub tconv1: TemporalConvVars,
    pub sconv_weight: Var,
    pub sconv_bias: Var,
    pub tconv2: TemporalConvVars,
    pub norm_gain: Var,
    pub norm_shift: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct FusionVars {
    /// `[D_e, c_e]`
    pub proj: Var,
    /// `[c_out + c_e, c_out]`
    pub mix: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct OutputVars {
    /// `[c_out, c_out, T']`
    pub collapse_kernel: Var,
    pub collapse_bias: Var,
    /// `[c_out, H]`
    pub fc_weight: Var,
    pub fc_bias: Var,
}
