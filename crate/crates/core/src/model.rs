//! Multi-receptive-field model: dilated encoder-decoder branches whose
//! outputs are combined by learnable scalar coefficients.

use std::fmt;
use std::str::FromStr;

use crate::diffcore::{Graph, NodeId, ParamId, ParamStore, Shape};
use crate::error::{invalid, Error, Result};
use crate::fieldgrid::{Field, Grid2D};

/// Size-to-receptive-field ratios of the six branches.
pub const BRANCH_RATIOS: [usize; 6] = [2, 4, 8, 16, 32, 64];

pub fn dilation_for(h: usize, w: usize, k: usize) -> usize {
    (h.min(w) / k.max(1)).max(1)
}

/// Receptive field of a 3x3 kernel with the given dilation.
pub fn receptive_field(dilation: usize) -> usize {
    2 * dilation + 1
}

/// How branch dilations are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReceptiveMode {
    /// Six branches, dilation adapted to the resolution.
    Mrf,
    /// One branch with a fixed receptive field (odd, at least 3).
    Fixed(usize),
}

impl fmt::Display for ReceptiveMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReceptiveMode::Mrf => write!(f, "mrf"),
            ReceptiveMode::Fixed(rf) => write!(f, "fixed:{rf}"),
        }
    }
}

impl FromStr for ReceptiveMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "mrf" {
            return Ok(ReceptiveMode::Mrf);
        }
        let rf = s
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<usize>().ok())
            .ok_or_else(|| Error::Config(format!("unknown receptive-field mode '{s}'")))?;
        if rf < 3 || rf % 2 == 0 {
            return Err(Error::Config(format!("fixed receptive field must be odd and >= 3, got {rf}")));
        }
        Ok(ReceptiveMode::Fixed(rf))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderDecoderConfig {
    pub k: usize,
    pub channels: usize,
    pub depth: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl EncoderDecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.k.is_power_of_two() || !(2..=64).contains(&self.k) {
            return invalid(format!("branch ratio k={} is not a power of two in [2, 64]", self.k));
        }
        if self.depth < 2 {
            return invalid("branch depth must be at least 2");
        }
        if self.channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return invalid("channel counts must be positive");
        }
        Ok(())
    }

    /// `(c_in, c_out)` of every layer.
    pub fn layer_channels(&self) -> Vec<(usize, usize)> {
        (0..self.depth)
            .map(|l| {
                let cin = if l == 0 { self.in_channels } else { self.channels };
                let cout = if l + 1 == self.depth { self.out_channels } else { self.channels };
                (cin, cout)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub out_channels: usize,
    pub channels: usize,
    pub depth: usize,
    pub mode: ReceptiveMode,
}

impl ModelConfig {
    pub fn new(in_channels: usize, out_channels: usize, channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            channels,
            depth: 4,
            mode: ReceptiveMode::Mrf,
        }
    }
}

/// Per-channel affine normalisation applied to the model input.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    pub fn identity(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            std: vec![1.0; channels],
        }
    }

    pub fn fit(field: &Field) -> Self {
        let n = field.grid().len() as f64;
        let (mut mean, mut std) = (Vec::new(), Vec::new());
        for c in 0..field.channels() {
            let ch = field.channel(c);
            let m = ch.iter().sum::<f64>() / n;
            let var = ch.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > 1e-12 { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn apply(&self, field: &Field) -> Result<Vec<f64>> {
        if field.channels() != self.mean.len() {
            return invalid(format!(
                "input has {} channels, normalisation expects {}",
                field.channels(),
                self.mean.len()
            ));
        }
        let plane = field.grid().len();
        Ok(field
            .data()
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let c = k / plane;
                (v - self.mean[c]) / self.std[c]
            })
            .collect())
    }
}

#[derive(Debug, Clone)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
    c_in: usize,
    c_out: usize,
}

#[derive(Debug, Clone)]
pub struct Branch {
    pub config: EncoderDecoderConfig,
    pub dilation: usize,
    layers: Vec<Layer>,
    theta: ParamId,
}

impl Branch {
    pub fn receptive_field(&self) -> usize {
        receptive_field(self.dilation)
    }
}

/// Graph handles produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ModelOutput {
    pub u: NodeId,
    pub branches: Vec<NodeId>,
}

#[derive(Debug, Clone)]
pub struct MRFModel {
    config: ModelConfig,
    h: usize,
    w: usize,
    branches: Vec<Branch>,
    norm: Normalization,
    store: ParamStore,
}

impl MRFModel {
    /// Build a model for inputs of spatial size `h x w`.
    pub fn new(config: ModelConfig, h: usize, w: usize, seed: u64) -> Result<Self> {
        if h < 3 || w < 3 {
            return invalid(format!("input {h}x{w} is smaller than 3x3"));
        }
        let mut store = ParamStore::new(seed);
        let plans: Vec<(usize, usize)> = match config.mode {
            ReceptiveMode::Mrf => BRANCH_RATIOS.iter().map(|&k| (k, dilation_for(h, w, k))).collect(),
            ReceptiveMode::Fixed(rf) => vec![(2, (rf - 1) / 2)],
        };
        let theta0 = 1.0 / plans.len() as f64;
        let mut branches = Vec::new();
        for (b, &(k, dilation)) in plans.iter().enumerate() {
            let bc = EncoderDecoderConfig {
                k,
                channels: config.channels,
                depth: config.depth,
                in_channels: config.in_channels,
                out_channels: config.out_channels,
            };
            bc.validate()?;
            let mut layers = Vec::new();
            for (l, (c_in, c_out)) in bc.layer_channels().into_iter().enumerate() {
                let bound = (1.0 / (c_in as f64 * 9.0)).sqrt();
                let weight = store.add_uniform(&format!("branch{b}.layer{l}.weight"), &[c_out, c_in, 3, 3], bound)?;
                let bias = store.add_uniform(&format!("branch{b}.layer{l}.bias"), &[c_out], bound)?;
                layers.push(Layer {
                    weight,
                    bias,
                    c_in,
                    c_out,
                });
            }
            let theta = store.add_constant(&format!("theta{b}"), &[1], theta0)?;
            branches.push(Branch {
                config: bc,
                dilation,
                layers,
                theta,
            });
        }
        Ok(Self {
            config,
            h,
            w,
            branches,
            norm: Normalization::identity(config.in_channels),
            store,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn normalization(&self) -> &Normalization {
        &self.norm
    }

    pub fn set_normalization(&mut self, norm: Normalization) -> Result<()> {
        if norm.mean.len() != self.config.in_channels || norm.std.len() != self.config.in_channels {
            return invalid("normalisation channel count differs from the model input");
        }
        self.norm = norm;
        Ok(())
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.branches.iter().map(|b| self.store.value(b.theta)[0]).collect()
    }

    pub fn set_thetas(&mut self, thetas: &[f64]) -> Result<()> {
        if thetas.len() != self.branches.len() {
            return invalid("one coefficient per branch expected");
        }
        for (b, &t) in self.branches.iter().zip(thetas) {
            self.store.value_mut(b.theta)[0] = t;
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// Multiply-add count times two, summed over every conv layer.
    pub fn flop_estimate(&self, h: usize, w: usize) -> u64 {
        self.branches
            .iter()
            .flat_map(|b| &b.layers)
            .map(|l| 2 * (l.c_in * l.c_out * 9 * h * w) as u64)
            .sum()
    }

    fn check_input(&self, input: &Field) -> Result<()> {
        let g = input.grid();
        if (g.nh(), g.nw()) != (self.h, self.w) {
            return invalid(format!(
                "input is {}x{}, model was built for {}x{}",
                g.nh(),
                g.nw(),
                self.h,
                self.w
            ));
        }
        if input.channels() != self.config.in_channels {
            return invalid(format!(
                "input has {} channels, model expects {}",
                input.channels(),
                self.config.in_channels
            ));
        }
        Ok(())
    }

    /// Record the forward pass on `g`.
    pub fn forward_graph(&self, g: &mut Graph, input: &Field) -> Result<ModelOutput> {
        self.forward_graph_with(g, input, &self.store)
    }

    /// Forward pass reading parameter values from `store`, which must share
    /// this model's layout (a clone of [`MRFModel::store`]).
    pub fn forward_graph_with(&self, g: &mut Graph, input: &Field, store: &ParamStore) -> Result<ModelOutput> {
        if store.len() != self.store.len() {
            return invalid("parameter store does not match the model layout");
        }
        self.check_input(input)?;
        let x = g.constant(
            Shape::new(self.config.in_channels, self.h, self.w),
            self.norm.apply(input)?,
        )?;
        let mut outs = Vec::with_capacity(self.branches.len());
        let mut u: Option<NodeId> = None;
        for (bi, b) in self.branches.iter().enumerate() {
            let mut h = x;
            for (l, layer) in b.layers.iter().enumerate() {
                let wn = g.param(store, layer.weight);
                let bn = g.param(store, layer.bias);
                h = g.conv2d(h, wn, bn, b.dilation)?;
                if l + 1 < b.layers.len() {
                    h = g.tanh(h);
                }
            }
            g.check_finite(h, &format!("branch {bi} (k={})", b.config.k))?;
            outs.push(h);
            let t = g.param(store, b.theta);
            let term = g.scalar_mul(t, h)?;
            u = Some(match u {
                None => term,
                Some(acc) => g.add(acc, term)?,
            });
        }
        let u = u.expect("at least one branch");
        Ok(ModelOutput { u, branches: outs })
    }

    /// Evaluate without recording gradients: `(u_pinn, branch outputs)`.
    pub fn forward(&self, input: &Field) -> Result<(Field, Vec<Field>)> {
        let mut g = Graph::new();
        let out = self.forward_graph(&mut g, input)?;
        let grid: Grid2D = *input.grid();
        let c = self.config.out_channels;
        let u = Field::from_data(grid, c, g.value(out.u).to_vec())?;
        let branches = out
            .branches
            .iter()
            .map(|&b| Field::from_data(grid, c, g.value(b).to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok((u, branches))
    }
}
