//! Optimization of the simplifier (and the saliency head) over patch sets:
//! temperature annealing, per-patch Adam steps, epoch logs, and resumable
//! checkpoints.

use crate::autodiff::{Graph, Tensor};
use crate::error::{Error, Result};
use crate::geom::Rng;
use crate::losses::{self, LossMode, LossWeights};
use crate::network::{
    forward_patch, insert_params, predict_saliency, NetworkConfig, ParamSet, SaliencyNetConfig,
    SaliencyNetParams, SimplifierParams,
};
use crate::patching::Patch;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub t_start: f64,
    pub t_end: f64,
    /// ramp window; when unset, defaults to the 60%..80% stretch of the run
    pub anneal_begin: Option<usize>,
    pub anneal_end: Option<usize>,
    pub weights: LossWeights,
    pub network: NetworkConfig,
    /// points drawn per patch when cutting training data
    pub patch_input: usize,
    /// train with the refinement head (off reproduces the selection-only
    /// baseline)
    pub train_refine: bool,
    /// head widths for the saliency network variant
    pub saliency_head_widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            learning_rate: 1e-3,
            seed: 0,
            t_start: 1.0,
            t_end: 0.1,
            anneal_begin: None,
            anneal_end: None,
            weights: LossWeights::default(),
            network: NetworkConfig::default(),
            patch_input: 256,
            train_refine: true,
            saliency_head_widths: vec![128, 128, 64, 1],
        }
    }
}

impl TrainConfig {
    /// Ramp endpoints, defaulting to 60% and 80% of the epoch budget (the
    /// proportions of the reference 1200/1600-of-2000 schedule).
    pub fn anneal_window(&self) -> (usize, usize) {
        let begin = self
            .anneal_begin
            .unwrap_or_else(|| (self.epochs as f64 * 0.6).round() as usize);
        let end = self
            .anneal_end
            .unwrap_or_else(|| (self.epochs as f64 * 0.8).round() as usize);
        (begin, end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return self.weights.validate();
        }
        let (begin, end) = self.anneal_window();
        if !(begin < end && end <= self.epochs) {
            return Err(Error::InvalidInput(format!(
                "anneal window {begin}..{end} must sit inside 0..{}",
                self.epochs
            )));
        }
        if !(self.t_start >= self.t_end && self.t_end > 0.0) {
            return Err(Error::InvalidInput(format!(
                "temperatures must satisfy t_start >= t_end > 0, got {} and {}",
                self.t_start, self.t_end
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        self.weights.validate()
    }

    pub fn saliency_net_config(&self) -> SaliencyNetConfig {
        SaliencyNetConfig {
            k: self.network.k,
            g_knn: self.network.g_knn,
            blocks: self.network.blocks,
            head_widths: self.saliency_head_widths.clone(),
        }
    }
}

/// Piecewise-linear temperature: flat at `t_start`, one even ramp down
/// across the anneal window, flat at `t_end` after.
pub fn temperature_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    let (begin, end) = cfg.anneal_window();
    if epoch < begin {
        cfg.t_start
    } else if epoch >= end {
        cfg.t_end
    } else {
        let frac = (epoch - begin) as f64 / (end - begin) as f64;
        cfg.t_start + (cfg.t_end - cfg.t_start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(lr: f64, shapes: &[(usize, usize)]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    /// One update over the canonical flat parameter list. Missing gradients
    /// count as zero so the moment estimates stay in lockstep.
    pub fn apply(&mut self, params: &mut [&mut Tensor], grads: &[Option<Tensor>]) {
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in params.iter_mut().enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let pd = p.data_mut();
            for e in 0..pd.len() {
                let g = grads[i].as_ref().map_or(0.0, |t| t.data()[e]);
                m[e] = self.beta1 * m[e] + (1.0 - self.beta1) * g;
                v[e] = self.beta2 * v[e] + (1.0 - self.beta2) * g * g;
                let m_hat = m[e] / b1t;
                let v_hat = v[e] / b2t;
                pd[e] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Per-epoch means of the loss components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_r: f64,
    pub l_cov: f64,
    pub l_rep: f64,
    pub l: f64,
    pub t: f64,
}

/// Writes the training log as `epoch,L_r,L_sp_or_s,L_rep,L,t`.
pub fn write_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,L_r,L_sp_or_s,L_rep,L,t\n");
    for e in log {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            e.epoch, e.l_r, e.l_cov, e.l_rep, e.l, e.t
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    Simplifier(SimplifierParams),
    Saliency(SaliencyNetParams),
}

/// Everything needed to continue a run exactly where it stopped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub epoch: usize,
    pub config: TrainConfig,
    pub config_hash: String,
    pub rng_seed: u64,
    pub rng_word_lo: u64,
    pub rng_word_hi: u64,
    pub model: ModelParams,
    pub opt: AdamState,
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, serde_json::to_vec(ckpt)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let ckpt: Checkpoint = serde_json::from_slice(&fs::read(path)?)?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::InvalidInput(format!(
            "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    Ok(ckpt)
}

/// FNV-1a over the serialized config; a cheap integrity tag for checkpoints.
pub fn config_hash(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in json.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Stateful trainer for the simplifier. Construction seeds the parameter
/// init; each epoch shuffles the patch order and takes one Adam step per
/// patch.
pub struct PcsTrainer {
    pub cfg: TrainConfig,
    pub params: SimplifierParams,
    pub epoch: usize,
    opt: AdamState,
    rng: Rng,
}

impl PcsTrainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::from_seed(cfg.seed);
        let params = SimplifierParams::init(&cfg.network, &mut rng);
        let shapes: Vec<(usize, usize)> =
            params.flat_tensors().iter().map(|t| t.shape()).collect();
        let opt = AdamState::new(cfg.learning_rate, &shapes);
        Ok(PcsTrainer {
            cfg,
            params,
            epoch: 0,
            opt,
            rng,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let params = match ckpt.model {
            ModelParams::Simplifier(p) => p,
            ModelParams::Saliency(_) => {
                return Err(Error::InvalidInput(
                    "checkpoint holds a saliency model, not a simplifier".into(),
                ))
            }
        };
        let word_pos = ((ckpt.rng_word_hi as u128) << 64) | ckpt.rng_word_lo as u128;
        Ok(PcsTrainer {
            cfg: ckpt.config,
            params,
            epoch: ckpt.epoch,
            opt: ckpt.opt,
            rng: Rng::restore(ckpt.rng_seed, word_pos),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let word_pos = self.rng.word_pos();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            epoch: self.epoch,
            config: self.cfg.clone(),
            config_hash: config_hash(&self.cfg),
            rng_seed: self.rng.seed(),
            rng_word_lo: word_pos as u64,
            rng_word_hi: (word_pos >> 64) as u64,
            model: ModelParams::Simplifier(self.params.clone()),
            opt: self.opt.clone(),
        }
    }

    /// Runs from the current epoch to the configured budget, returning one
    /// log entry per epoch trained.
    pub fn run(&mut self, patches: &[Patch]) -> Result<Vec<EpochLog>> {
        let remaining = self.cfg.epochs.saturating_sub(self.epoch);
        self.run_epochs(patches, remaining)
    }

    /// Runs at most `count` epochs (useful for checkpointing mid-run).
    pub fn run_epochs(&mut self, patches: &[Patch], count: usize) -> Result<Vec<EpochLog>> {
        if patches.is_empty() {
            return Err(Error::InvalidInput("no training patches".into()));
        }
        if self.cfg.weights.mode == LossMode::Saliency
            && patches.iter().any(|p| p.saliency.is_none())
        {
            return Err(Error::MissingSaliency);
        }
        let stop = self.cfg.epochs.min(self.epoch + count);
        let mut log = Vec::new();
        while self.epoch < stop {
            let t = temperature_at(self.epoch, &self.cfg);
            let mut order: Vec<usize> = (0..patches.len()).collect();
            self.rng.shuffle(&mut order);

            let mut sums = [0.0f64; 4];
            for &pi in &order {
                let patch = &patches[pi];
                let (l_r, l_cov, l_rep, l) = self.step_patch(patch, t).map_err(|e| {
                    match e {
                        Error::NonFinite { context } => Error::NonFinite {
                            context: format!(
                                "{context} (epoch {}, patch {pi})",
                                self.epoch
                            ),
                        },
                        other => other,
                    }
                })?;
                sums[0] += l_r;
                sums[1] += l_cov;
                sums[2] += l_rep;
                sums[3] += l;
            }
            let n = patches.len() as f64;
            log.push(EpochLog {
                epoch: self.epoch,
                l_r: sums[0] / n,
                l_cov: sums[1] / n,
                l_rep: sums[2] / n,
                l: sums[3] / n,
                t,
            });
            self.epoch += 1;
        }
        Ok(log)
    }

    fn step_patch(&mut self, patch: &Patch, t: f64) -> Result<(f64, f64, f64, f64)> {
        let mut g = Graph::new();
        let vars = insert_params(&mut g, &self.params);
        let pv = g.constant(Tensor::from_points(&patch.points));
        let q = forward_patch(&mut g, pv, &self.params, &vars, t, self.cfg.train_refine)?;
        let s_hat = match self.cfg.weights.mode {
            LossMode::Spread => None,
            LossMode::Saliency => {
                let s = patch.saliency.as_ref().ok_or(Error::MissingSaliency)?;
                Some(g.constant(Tensor::column(s)))
            }
        };
        let parts = losses::joint(&mut g, q, pv, s_hat, &self.cfg.weights)?;
        let total = g.value(parts.total).scalar()?;
        if !total.is_finite() {
            return Err(Error::NonFinite {
                context: "training loss".into(),
            });
        }
        let grads = g.backward(parts.total)?;
        let grad_list: Vec<Option<Tensor>> = vars
            .flat()
            .iter()
            .map(|&v| grads.get(v).cloned())
            .collect();
        let components = (
            g.value(parts.reconstruction).scalar()?,
            g.value(parts.coverage).scalar()?,
            g.value(parts.repulsion).scalar()?,
            total,
        );
        let mut tensors = self.params.flat_tensors_mut();
        self.opt.apply(&mut tensors, &grad_list);
        Ok(components)
    }
}

/// Convenience one-shot API.
pub fn train_pcs(patches: &[Patch], cfg: TrainConfig) -> Result<(SimplifierParams, Vec<EpochLog>)> {
    let mut trainer = PcsTrainer::new(cfg)?;
    let log = trainer.run(patches)?;
    Ok((trainer.params, log))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaliencyEpochLog {
    pub epoch: usize,
    pub mse: f64,
}

/// Trainer for the saliency prediction head: mean squared error against the
/// per-point targets carried by the patches.
pub struct SaliencyTrainer {
    pub cfg: TrainConfig,
    pub params: SaliencyNetParams,
    pub epoch: usize,
    opt: AdamState,
    rng: Rng,
}

impl SaliencyTrainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::from_seed(cfg.seed);
        let params = SaliencyNetParams::init(&cfg.saliency_net_config(), &mut rng);
        let shapes: Vec<(usize, usize)> =
            params.flat_tensors().iter().map(|t| t.shape()).collect();
        let opt = AdamState::new(cfg.learning_rate, &shapes);
        Ok(SaliencyTrainer {
            cfg,
            params,
            epoch: 0,
            opt,
            rng,
        })
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let params = match ckpt.model {
            ModelParams::Saliency(p) => p,
            ModelParams::Simplifier(_) => {
                return Err(Error::InvalidInput(
                    "checkpoint holds a simplifier, not a saliency model".into(),
                ))
            }
        };
        let word_pos = ((ckpt.rng_word_hi as u128) << 64) | ckpt.rng_word_lo as u128;
        Ok(SaliencyTrainer {
            cfg: ckpt.config,
            params,
            epoch: ckpt.epoch,
            opt: ckpt.opt,
            rng: Rng::restore(ckpt.rng_seed, word_pos),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let word_pos = self.rng.word_pos();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            epoch: self.epoch,
            config: self.cfg.clone(),
            config_hash: config_hash(&self.cfg),
            rng_seed: self.rng.seed(),
            rng_word_lo: word_pos as u64,
            rng_word_hi: (word_pos >> 64) as u64,
            model: ModelParams::Saliency(self.params.clone()),
            opt: self.opt.clone(),
        }
    }

    pub fn run(&mut self, patches: &[Patch]) -> Result<Vec<SaliencyEpochLog>> {
        if patches.is_empty() {
            return Err(Error::InvalidInput("no training patches".into()));
        }
        if patches.iter().any(|p| p.saliency.is_none()) {
            return Err(Error::MissingSaliency);
        }
        let mut log = Vec::new();
        while self.epoch < self.cfg.epochs {
            let mut order: Vec<usize> = (0..patches.len()).collect();
            self.rng.shuffle(&mut order);
            let mut sum = 0.0;
            for &pi in &order {
                sum += self.step_patch(&patches[pi])?;
            }
            log.push(SaliencyEpochLog {
                epoch: self.epoch,
                mse: sum / patches.len() as f64,
            });
            self.epoch += 1;
        }
        Ok(log)
    }

    fn step_patch(&mut self, patch: &Patch) -> Result<f64> {
        let targets = patch.saliency.as_ref().ok_or(Error::MissingSaliency)?;
        let mut g = Graph::new();
        let vars = insert_params(&mut g, &self.params);
        let pv = g.constant(Tensor::from_points(&patch.points));
        let pred = predict_saliency(&mut g, pv, &self.params, &vars)?;
        let tv = g.constant(Tensor::column(targets));
        let diff = g.sub(pred, tv)?;
        let sq = g.square(diff);
        let mse_var = g.reduce_mean(sq);
        let mse = g.value(mse_var).scalar()?;
        if !mse.is_finite() {
            return Err(Error::NonFinite {
                context: "saliency training loss".into(),
            });
        }
        let grads = g.backward(mse_var)?;
        let grad_list: Vec<Option<Tensor>> = vars
            .flat()
            .iter()
            .map(|&v| grads.get(v).cloned())
            .collect();
        let mut tensors = self.params.flat_tensors_mut();
        self.opt.apply(&mut tensors, &grad_list);
        Ok(mse)
    }
}

pub fn train_saliency_net(
    patches: &[Patch],
    cfg: TrainConfig,
) -> Result<(SaliencyNetParams, Vec<SaliencyEpochLog>)> {
    let mut trainer = SaliencyTrainer::new(cfg)?;
    let log = trainer.run(patches)?;
    Ok((trainer.params, log))
}
