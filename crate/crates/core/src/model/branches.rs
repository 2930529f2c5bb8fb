use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Bound, ParamId, ParamSet};
use crate::autodiff::{softplus_inverse, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Layer sizes of the illumination branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlluminationArch {
    /// Output channels of each SE stage; every stage halves the resolution.
    pub stage_channels: Vec<usize>,
    pub se_reduction: usize,
    /// Width of the first 1×1 transition layer.
    pub transition_width: usize,
}

impl Default for IlluminationArch {
    fn default() -> Self {
        IlluminationArch {
            stage_channels: vec![16, 32, 64],
            se_reduction: 4,
            transition_width: 48,
        }
    }
}

/// Layer sizes of the reflectance branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReflectanceArch {
    pub starter_layers: usize,
    pub starter_width: usize,
    pub dense_blocks: usize,
    pub dense_layers: usize,
    pub growth: usize,
    /// Dropout probability after each dense block (training only).
    pub dropout: f64,
}

impl Default for ReflectanceArch {
    fn default() -> Self {
        ReflectanceArch {
            starter_layers: 2,
            starter_width: 32,
            dense_blocks: 2,
            dense_layers: 3,
            growth: 8,
            dropout: 0.1,
        }
    }
}

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train { seed: u64 },
    Eval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    /// He-uniform, for layers followed by a ReLU.
    Relu,
    /// LeCun-uniform, for linear or sigmoid outputs.
    Linear,
}

/// Convolution with optional bias.
#[derive(Clone, Debug)]
pub(crate) struct Conv {
    weight: ParamId,
    bias: Option<ParamId>,
    kernel: usize,
}

impl Conv {
    fn new(
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
        name: &str,
        (cin, cout, kernel): (usize, usize, usize),
        init: Init,
    ) -> Conv {
        let fan_in = (cin * kernel * kernel) as f64;
        let bound = match init {
            Init::Relu => (6.0 / fan_in).sqrt(),
            Init::Linear => (3.0 / fan_in).sqrt(),
        };
        let w = Tensor::from_fn(&[cout, cin, kernel, kernel], |_| rng.gen_range(-bound..bound));
        let weight = params.insert(format!("{name}.weight"), w);
        let bias = Some(params.insert(format!("{name}.bias"), Tensor::zeros(&[1, cout, 1, 1])));
        Conv { weight, bias, kernel }
    }

    fn apply(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Result<Var> {
        let w = bound.var(self.weight);
        let y = match self.kernel {
            1 => tape.conv2d_1x1(x, w)?,
            _ => tape.conv2d_3x3(x, w)?,
        };
        match self.bias {
            Some(b) => tape.add(y, bound.var(b)),
            None => Ok(y),
        }
    }
}

/// Squeeze-and-excitation stage: conv → relu → channel gating → 2×2 pool.
#[derive(Clone, Debug)]
struct SeStage {
    conv: Conv,
    squeeze: Conv,
    excite: Conv,
}

/// SE stack followed by two 1×1 transitions and a global average pool.
#[derive(Clone, Debug)]
pub struct IlluminationBranch {
    stages: Vec<SeStage>,
    transition: [Conv; 2],
}

impl IlluminationBranch {
    pub(crate) fn new(
        arch: &IlluminationArch,
        out_bands: usize,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if arch.stage_channels.is_empty() || arch.se_reduction == 0 || arch.transition_width == 0 {
            return Err(Error::domain("illumination branch needs stages, a reduction and a transition width"));
        }
        let mut stages = Vec::new();
        let mut cin = 3;
        for (s, &c) in arch.stage_channels.iter().enumerate() {
            let hidden = (c / arch.se_reduction).max(1);
            let name = format!("illum.stage{s}");
            stages.push(SeStage {
                conv: Conv::new(params, rng, &format!("{name}.conv"), (cin, c, 3), Init::Relu),
                squeeze: Conv::new(params, rng, &format!("{name}.se_squeeze"), (c, hidden, 1), Init::Relu),
                excite: Conv::new(params, rng, &format!("{name}.se_excite"), (hidden, c, 1), Init::Linear),
            });
            cin = c;
        }
        let transition = [
            Conv::new(params, rng, "illum.transition0", (cin, arch.transition_width, 1), Init::Relu),
            Conv::new(params, rng, "illum.transition1", (arch.transition_width, out_bands, 1), Init::Linear),
        ];
        // Start from a flat unit SPD, the mean of a normalized illuminant.
        if let Some(b) = transition[1].bias {
            params.get_mut(b).data_mut().fill(1.0);
        }
        Ok(IlluminationBranch { stages, transition })
    }

    /// Smallest input side the stage stack accepts.
    pub fn min_input_size(&self) -> usize {
        1 << self.stages.len()
    }

    /// `(n, 3, h, w)` → `(n, bands, 1, 1)`.
    pub(crate) fn forward(&self, tape: &mut Tape, bound: &Bound, rgb: Var) -> Result<Var> {
        let mut x = rgb;
        for (s, stage) in self.stages.iter().enumerate() {
            let layer = format!("illum.stage{s}");
            let run = |tape: &mut Tape| -> Result<Var> {
                let y = stage.conv.apply(tape, bound, x)?;
                let y = tape.relu(y)?;
                let pooled = tape.global_avg_pool(y)?;
                let z = stage.squeeze.apply(tape, bound, pooled)?;
                let z = tape.relu(z)?;
                let z = stage.excite.apply(tape, bound, z)?;
                let gate = tape.sigmoid(z)?;
                let y = tape.channel_scale(y, gate)?;
                tape.avg_pool_2x2(y)
            };
            x = run(tape).map_err(|e| e.in_layer(&layer))?;
        }
        let run = |tape: &mut Tape| -> Result<Var> {
            let y = self.transition[0].apply(tape, bound, x)?;
            let y = tape.relu(y)?;
            let y = self.transition[1].apply(tape, bound, y)?;
            tape.global_avg_pool(y)
        };
        run(tape).map_err(|e| e.in_layer("illum.head"))
    }
}

/// Starter 1×1 encoding, dense blocks, and a non-negative 1×1 projection.
#[derive(Clone, Debug)]
pub struct ReflectanceBranch {
    starter: Vec<Conv>,
    blocks: Vec<Vec<Conv>>,
    /// Raw weights; the projection uses `softplus(raw)`.
    pub(super) head: ParamId,
    dropout: f64,
}

impl ReflectanceBranch {
    pub(crate) fn new(
        arch: &ReflectanceArch,
        out_bands: usize,
        params: &mut ParamSet,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if arch.starter_layers == 0 || arch.starter_width == 0 {
            return Err(Error::domain("reflectance branch needs at least one starter layer"));
        }
        if !(0.0..1.0).contains(&arch.dropout) {
            return Err(Error::domain(format!("dropout {} outside [0, 1)", arch.dropout)));
        }
        let mut starter = Vec::new();
        let mut cin = 3;
        for i in 0..arch.starter_layers {
            starter.push(Conv::new(params, rng, &format!("refl.starter{i}"), (cin, arch.starter_width, 1), Init::Relu));
            cin = arch.starter_width;
        }
        let mut blocks = Vec::new();
        for b in 0..arch.dense_blocks {
            let mut layers = Vec::new();
            for l in 0..arch.dense_layers {
                layers.push(Conv::new(params, rng, &format!("refl.dense{b}.layer{l}"), (cin, arch.growth, 3), Init::Relu));
                cin += arch.growth;
            }
            blocks.push(layers);
        }
        // Small positive projection weights, mean ≈ 1/cin.
        let raw = Tensor::from_fn(&[out_bands, cin, 1, 1], |_| {
            softplus_inverse(rng.gen_range(0.2..1.8) / cin as f64)
        });
        let head = params.insert("refl.head.raw_weight", raw);
        Ok(ReflectanceBranch {
            starter,
            blocks,
            head,
            dropout: arch.dropout,
        })
    }

    /// `(n, 3, h, w)` → `(n, bands, h, w)`, non-negative.
    pub(crate) fn forward(&self, tape: &mut Tape, bound: &Bound, rgb: Var, mode: Mode) -> Result<Var> {
        let mut x = rgb;
        for (i, conv) in self.starter.iter().enumerate() {
            let run = |tape: &mut Tape| -> Result<Var> {
                let y = conv.apply(tape, bound, x)?;
                tape.relu(y)
            };
            x = run(tape).map_err(|e| e.in_layer(&format!("refl.starter{i}")))?;
        }
        for (b, layers) in self.blocks.iter().enumerate() {
            let layer = format!("refl.dense{b}");
            let run = |tape: &mut Tape| -> Result<Var> {
                let mut features = vec![x];
                for conv in layers {
                    let input = if features.len() == 1 { features[0] } else { tape.concat(&features)? };
                    let y = conv.apply(tape, bound, input)?;
                    features.push(tape.relu(y)?);
                }
                let out = if features.len() == 1 { features[0] } else { tape.concat(&features)? };
                match mode {
                    Mode::Train { seed } => tape.dropout(out, self.dropout, seed.wrapping_add(b as u64)),
                    Mode::Eval => Ok(out),
                }
            };
            x = run(tape).map_err(|e| e.in_layer(&layer))?;
        }
        let run = |tape: &mut Tape| -> Result<Var> {
            let w = tape.softplus(bound.var(self.head))?;
            tape.conv2d_1x1(x, w)
        };
        run(tape).map_err(|e| e.in_layer("refl.head"))
    }
}
