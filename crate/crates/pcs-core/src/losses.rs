//! Training losses over output points: shape fidelity (reconstruction),
//! coverage (spread / saliency-weighted spread), and local uniformity
//! (repulsion), combined into one weighted objective.

use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// plain coverage term over all inputs
    Spread,
    /// coverage weighted by smoothed saliency
    Saliency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub mode: LossMode,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            alpha: 0.01,
            beta: 0.0012,
            mode: LossMode::Spread,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidInput(format!(
                "loss weights must be positive, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Mean over output points of the squared distance to the nearest input:
/// zero exactly when every output coincides with an input point.
pub fn reconstruction(g: &mut Graph, q: Var, p: Var) -> Result<Var> {
    let d = g.pairwise_sq_dist(q, p)?;
    let mins = g.row_min(d, false)?;
    Ok(g.reduce_mean(mins))
}

/// Mean over input points of the squared distance to the nearest output:
/// pulls outputs to cover the whole input.
pub fn spread(g: &mut Graph, q: Var, p: Var) -> Result<Var> {
    let d = g.pairwise_sq_dist(p, q)?;
    let mins = g.row_min(d, false)?;
    Ok(g.reduce_mean(mins))
}

/// Negated mean nearest-other-neighbor squared distance among outputs:
/// minimizing it pushes neighboring outputs apart.
pub fn repulsion(g: &mut Graph, q: Var) -> Result<Var> {
    if g.value(q).rows() < 2 {
        return Err(Error::InvalidInput(
            "repulsion needs at least 2 output points".into(),
        ));
    }
    let d = g.pairwise_sq_dist(q, q)?;
    let mins = g.row_min(d, true)?;
    let mean = g.reduce_mean(mins);
    Ok(g.scalar_mul(mean, -1.0))
}

/// Spread weighted per input point by (smoothed) saliency, so outputs
/// consolidate near feature-rich regions.
pub fn saliency_weighted(g: &mut Graph, q: Var, p: Var, s_hat: Var) -> Result<Var> {
    let (n, _) = g.value(p).shape();
    let sv = g.value(s_hat);
    if sv.shape() != (n, 1) {
        return Err(Error::ShapeMismatch {
            op: "saliency_weighted",
            lhs_rows: n,
            lhs_cols: 1,
            rhs_rows: sv.rows(),
            rhs_cols: sv.cols(),
        });
    }
    let d = g.pairwise_sq_dist(p, q)?;
    let mins = g.row_min(d, false)?;
    let weighted = g.mul(mins, s_hat)?;
    Ok(g.reduce_mean(weighted))
}

/// Component vars of one joint-loss evaluation, for logging.
#[derive(Debug, Clone, Copy)]
pub struct JointLoss {
    pub total: Var,
    pub reconstruction: Var,
    pub coverage: Var,
    pub repulsion: Var,
}

/// `alpha * L_r + L_sp + beta * L_rep`, with the coverage term replaced by
/// the saliency-weighted variant in saliency mode (`s_hat` required then).
pub fn joint(
    g: &mut Graph,
    q: Var,
    p: Var,
    s_hat: Option<Var>,
    w: &LossWeights,
) -> Result<JointLoss> {
    w.validate()?;
    let l_r = reconstruction(g, q, p)?;
    let coverage = match w.mode {
        LossMode::Spread => spread(g, q, p)?,
        LossMode::Saliency => {
            let s = s_hat.ok_or(Error::MissingSaliency)?;
            saliency_weighted(g, q, p, s)?
        }
    };
    let l_rep = repulsion(g, q)?;
    let a = g.scalar_mul(l_r, w.alpha);
    let b = g.scalar_mul(l_rep, w.beta);
    let partial = g.add(a, coverage)?;
    let total = g.add(partial, b)?;
    Ok(JointLoss {
        total,
        reconstruction: l_r,
        coverage,
        repulsion: l_rep,
    })
}

/// Forward-only evaluation helpers over plain tensors. These run the same
/// graph kernels as training, just without gradients.
pub fn eval_reconstruction(q: &Tensor, p: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let qv = g.constant(q.clone());
    let pv = g.constant(p.clone());
    let l = reconstruction(&mut g, qv, pv)?;
    g.value(l).scalar()
}

pub fn eval_spread(q: &Tensor, p: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let qv = g.constant(q.clone());
    let pv = g.constant(p.clone());
    let l = spread(&mut g, qv, pv)?;
    g.value(l).scalar()
}

pub fn eval_repulsion(q: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let qv = g.constant(q.clone());
    let l = repulsion(&mut g, qv)?;
    g.value(l).scalar()
}

pub fn eval_saliency_weighted(q: &Tensor, p: &Tensor, s_hat: &[f64]) -> Result<f64> {
    let mut g = Graph::new();
    let qv = g.constant(q.clone());
    let pv = g.constant(p.clone());
    let sv = g.constant(Tensor::column(s_hat));
    let l = saliency_weighted(&mut g, qv, pv, sv)?;
    g.value(l).scalar()
}
