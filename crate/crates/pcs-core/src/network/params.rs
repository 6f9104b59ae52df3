//! Parameter containers, initialization, and the canonical flat tensor
//! order shared by the optimizer, the gradient checker, and checkpoints.

use crate::autodiff::{Tensor, Var};
use crate::geom::Rng;
use serde::{Deserialize, Serialize};

use super::VarSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    /// in x out
    pub weight: Tensor,
    /// 1 x out
    pub bias: Tensor,
}

impl LinearParams {
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        // Xavier-uniform bound keeps activations and gradients on one scale
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weight = Tensor::from_vec(
            fan_in,
            fan_out,
            (0..fan_in * fan_out).map(|_| rng.range_f64(-s, s)).collect(),
        )
        .expect("sized data");
        LinearParams {
            weight,
            bias: Tensor::zeros(1, fan_out),
        }
    }

    fn zero(&mut self) {
        self.weight = Tensor::zeros(self.weight.rows(), self.weight.cols());
        self.bias = Tensor::zeros(1, self.bias.cols());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockParams {
    /// 2k -> k over edge features
    pub edge: LinearParams,
    /// 2k -> k after the dense concatenation
    pub reproject: LinearParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExtractorParams {
    /// 3 -> k pointwise lift
    pub lift: LinearParams,
    pub blocks: Vec<BlockParams>,
}

impl FeatureExtractorParams {
    fn init(k: usize, blocks: usize, rng: &mut Rng) -> Self {
        FeatureExtractorParams {
            lift: LinearParams::init(3, k, rng),
            blocks: (0..blocks)
                .map(|_| BlockParams {
                    edge: LinearParams::init(2 * k, k, rng),
                    reproject: LinearParams::init(2 * k, k, rng),
                })
                .collect(),
        }
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        out.push(&self.lift.weight);
        out.push(&self.lift.bias);
        for b in &self.blocks {
            out.push(&b.edge.weight);
            out.push(&b.edge.bias);
            out.push(&b.reproject.weight);
            out.push(&b.reproject.bias);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        out.push(&mut self.lift.weight);
        out.push(&mut self.lift.bias);
        for b in &mut self.blocks {
            out.push(&mut b.edge.weight);
            out.push(&mut b.edge.bias);
            out.push(&mut b.reproject.weight);
            out.push(&mut b.reproject.bias);
        }
    }

    fn tensor_count(&self) -> usize {
        2 + 4 * self.blocks.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<LinearParams>,
}

impl MlpParams {
    fn init(input: usize, widths: &[usize], rng: &mut Rng) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for &w in widths {
            layers.push(LinearParams::init(fan_in, w, rng));
            fan_in = w;
        }
        MlpParams { layers }
    }

    fn collect<'a>(&'a self, out: &mut Vec<&'a Tensor>) {
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
        }
    }

    fn collect_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Tensor>) {
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
    }
}

/// Structural knobs of the feature extractor (weights live elsewhere).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    /// feature channels per point
    pub k: usize,
    /// kNN group size inside edge convolutions
    pub g_knn: usize,
    /// number of edge-convolution blocks
    pub blocks: usize,
}

/// Architecture of the simplifier, used to initialize parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub k: usize,
    pub g_knn: usize,
    pub blocks: usize,
    /// output points per patch
    pub m: usize,
    /// offset-head layer widths; the last must be 3
    pub g_widths: Vec<usize>,
    /// one extractor for everything, instead of a separate instance for
    /// the selection logits
    pub share_extractor: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            k: 32,
            g_knn: 8,
            blocks: 2,
            m: 32,
            g_widths: vec![128, 128, 64, 3],
            share_extractor: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplifierParams {
    pub extractor: ExtractorConfig,
    pub m: usize,
    /// extractor instance feeding the selection logits
    pub f1: FeatureExtractorParams,
    /// extractor instance for the refinement features; `None` reuses `f1`
    pub f23: Option<FeatureExtractorParams>,
    /// k -> m logit projection; bias-free because a per-output constant
    /// cancels in the row softmax
    pub proj_to_m: Tensor,
    /// offset head over the 2k multi-scale features
    pub g_mlp: MlpParams,
}

impl SimplifierParams {
    pub fn init(cfg: &NetworkConfig, rng: &mut Rng) -> Self {
        assert_eq!(
            cfg.g_widths.last(),
            Some(&3),
            "offset head must end in 3 coordinate channels"
        );
        let extractor = ExtractorConfig {
            k: cfg.k,
            g_knn: cfg.g_knn,
            blocks: cfg.blocks,
        };
        SimplifierParams {
            extractor,
            m: cfg.m,
            f1: FeatureExtractorParams::init(cfg.k, cfg.blocks, rng),
            f23: if cfg.share_extractor {
                None
            } else {
                Some(FeatureExtractorParams::init(cfg.k, cfg.blocks, rng))
            },
            proj_to_m: LinearParams::init(cfg.k, cfg.m, rng).weight,
            g_mlp: MlpParams::init(2 * cfg.k, &cfg.g_widths, rng),
        }
    }

    pub fn zero_g_mlp(&mut self) {
        for l in &mut self.g_mlp.layers {
            l.zero();
        }
    }

    pub fn f1_offset(&self) -> usize {
        0
    }

    pub fn f23_offset(&self) -> usize {
        match &self.f23 {
            Some(_) => self.f1.tensor_count(),
            None => 0,
        }
    }

    fn proj_offset(&self) -> usize {
        self.f1.tensor_count() + self.f23.as_ref().map_or(0, |f| f.tensor_count())
    }

    pub fn proj_var(&self, vars: &VarSet) -> Var {
        vars.flat()[self.proj_offset()]
    }

    pub fn g_mlp_vars(&self, vars: &VarSet) -> Vec<(Var, Var)> {
        let o = self.proj_offset() + 1;
        (0..self.g_mlp.layers.len())
            .map(|i| (vars.flat()[o + 2 * i], vars.flat()[o + 2 * i + 1]))
            .collect()
    }

    pub fn flat_tensors_cloned(&self) -> Vec<Tensor> {
        self.flat_tensors().into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyNetConfig {
    pub k: usize,
    pub g_knn: usize,
    pub blocks: usize,
    /// head layer widths; the last must be 1
    pub head_widths: Vec<usize>,
}

impl Default for SaliencyNetConfig {
    fn default() -> Self {
        SaliencyNetConfig {
            k: 32,
            g_knn: 8,
            blocks: 2,
            head_widths: vec![128, 128, 64, 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyNetParams {
    pub extractor: ExtractorConfig,
    pub f: FeatureExtractorParams,
    pub head: MlpParams,
}

impl SaliencyNetParams {
    pub fn init(cfg: &SaliencyNetConfig, rng: &mut Rng) -> Self {
        assert_eq!(
            cfg.head_widths.last(),
            Some(&1),
            "saliency head must end in 1 channel"
        );
        SaliencyNetParams {
            extractor: ExtractorConfig {
                k: cfg.k,
                g_knn: cfg.g_knn,
                blocks: cfg.blocks,
            },
            f: FeatureExtractorParams::init(cfg.k, cfg.blocks, rng),
            head: MlpParams::init(cfg.k, &cfg.head_widths, rng),
        }
    }

    pub fn zero_head(&mut self) {
        for l in &mut self.head.layers {
            l.zero();
        }
    }

    pub fn head_vars(&self, vars: &VarSet) -> Vec<(Var, Var)> {
        let o = self.f.tensor_count();
        (0..self.head.layers.len())
            .map(|i| (vars.flat()[o + 2 * i], vars.flat()[o + 2 * i + 1]))
            .collect()
    }

    pub fn flat_tensors_cloned(&self) -> Vec<Tensor> {
        self.flat_tensors().into_iter().cloned().collect()
    }
}

/// Anything with a canonical flat list of parameter tensors.
pub trait ParamSet {
    fn flat_tensors(&self) -> Vec<&Tensor>;
    fn flat_tensors_mut(&mut self) -> Vec<&mut Tensor>;
}

impl ParamSet for SimplifierParams {
    fn flat_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.f1.collect(&mut out);
        if let Some(f) = &self.f23 {
            f.collect(&mut out);
        }
        out.push(&self.proj_to_m);
        self.g_mlp.collect(&mut out);
        out
    }

    fn flat_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.f1.collect_mut(&mut out);
        if let Some(f) = &mut self.f23 {
            f.collect_mut(&mut out);
        }
        out.push(&mut self.proj_to_m);
        self.g_mlp.collect_mut(&mut out);
        out
    }
}

impl ParamSet for SaliencyNetParams {
    fn flat_tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.f.collect(&mut out);
        self.head.collect(&mut out);
        out
    }

    fn flat_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.f.collect_mut(&mut out);
        self.head.collect_mut(&mut out);
        out
    }
}
