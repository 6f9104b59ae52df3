//! Named finite-difference verification suites over the autodiff
//! primitives, the losses, and the full per-patch pipeline. The `gradcheck`
//! subcommand and the acceptance tests both run these.

use crate::autodiff::{grad_check, Graph, Tensor, Var};
use crate::error::Result;
use crate::geom::Rng;
use crate::losses::{self, LossWeights};
use crate::network::{forward_patch, NetworkConfig, SimplifierParams, VarSet};

pub type Builder = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var> + Send + Sync>;

pub struct Case {
    pub name: String,
    pub builder: Builder,
    pub inputs: Vec<Tensor>,
    pub step: f64,
    pub tol: f64,
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn run_case(case: &Case) -> Result<CheckOutcome> {
    let report = grad_check(case.builder.as_ref(), &case.inputs, case.step, case.tol)?;
    Ok(CheckOutcome {
        name: case.name.clone(),
        max_rel_err: report.max_rel_err,
        tol: case.tol,
        passed: report.passed(),
    })
}

fn random_tensor(rows: usize, cols: usize, rng: &mut Rng) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.range_f64(-2.0, 2.0)).collect(),
    )
    .expect("sized data")
}

fn scalarized(name: &str, trial: usize, f: impl Fn(&mut Graph, &[Var]) -> Result<Var> + Send + Sync + 'static, inputs: Vec<Tensor>, step: f64, tol: f64) -> Case {
    Case {
        name: format!("{name}[{trial}]"),
        builder: Box::new(f),
        inputs,
        step,
        tol,
    }
}

/// One trial's worth of primitive checks on random shapes.
pub fn primitive_cases(trial: usize, tol: f64, rng: &mut Rng) -> Vec<Case> {
    let rows = 1 + rng.index(5);
    let cols = 1 + rng.index(5);
    let x = random_tensor(rows, cols, rng);
    let y = random_tensor(rows, cols, rng);
    let w = random_tensor(cols, 1 + rng.index(4), rng);
    let bias = random_tensor(1, w.cols(), rng);
    let pos = x.map(|v| v.abs() + 0.5);
    let step = 1e-5;

    let mut cases = vec![
        scalarized(
            "matmul",
            trial,
            |g, v| {
                let p = g.matmul(v[0], v[1])?;
                Ok(g.reduce_sum(p))
            },
            vec![x.clone(), w.clone()],
            step,
            tol,
        ),
        scalarized(
            "transpose",
            trial,
            |g, v| {
                let t = g.transpose(v[0]);
                let s = g.square(t);
                Ok(g.reduce_sum(s))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "add",
            trial,
            |g, v| {
                let s = g.add(v[0], v[1])?;
                let sq = g.square(s);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone(), y.clone()],
            step,
            tol,
        ),
        scalarized(
            "sub",
            trial,
            |g, v| {
                let s = g.sub(v[0], v[1])?;
                let sq = g.square(s);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone(), y.clone()],
            step,
            tol,
        ),
        scalarized(
            "mul",
            trial,
            |g, v| {
                let s = g.mul(v[0], v[1])?;
                Ok(g.reduce_sum(s))
            },
            vec![x.clone(), y.clone()],
            step,
            tol,
        ),
        scalarized(
            "scalar_mul",
            trial,
            |g, v| {
                let s = g.scalar_mul(v[0], -1.7);
                let sq = g.square(s);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "add_row_broadcast",
            trial,
            |g, v| {
                let p = g.matmul(v[0], v[1])?;
                let s = g.add_row_broadcast(p, v[2])?;
                let sq = g.square(s);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone(), w.clone(), bias.clone()],
            step,
            tol,
        ),
        scalarized(
            "concat_cols",
            trial,
            |g, v| {
                let s = g.concat_cols(v[0], v[1])?;
                let sq = g.square(s);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone(), y.clone()],
            step,
            tol,
        ),
        scalarized(
            "relu",
            trial,
            |g, v| {
                let r = g.relu(v[0]);
                let sq = g.square(r);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "leaky_relu",
            trial,
            |g, v| {
                let r = g.leaky_relu(v[0], 0.1);
                let sq = g.square(r);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "softplus",
            trial,
            |g, v| {
                let r = g.softplus(v[0]);
                let sq = g.square(r);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "square",
            trial,
            |g, v| {
                let s = g.square(v[0]);
                Ok(g.reduce_sum(s))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "sqrt",
            trial,
            |g, v| {
                let s = g.sqrt(v[0]);
                Ok(g.reduce_sum(s))
            },
            vec![pos],
            step,
            tol,
        ),
        scalarized(
            "exp",
            trial,
            |g, v| {
                let s = g.exp(v[0]);
                Ok(g.reduce_sum(s))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "reduce_sum",
            trial,
            |g, v| {
                let s = g.square(v[0]);
                Ok(g.reduce_sum(s))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "reduce_mean",
            trial,
            |g, v| {
                let s = g.square(v[0]);
                Ok(g.reduce_mean(s))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "gather_rows",
            trial,
            {
                move |g: &mut Graph, v: &[Var]| {
                    let n = g.value(v[0]).rows();
                    let idx: Vec<usize> = (0..2 * n).map(|i| (i * 7 + 3) % n).collect();
                    let gathered = g.gather_rows(v[0], idx)?;
                    let sq = g.square(gathered);
                    Ok(g.reduce_sum(sq))
                }
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "t_softmax_rows",
            trial,
            |g, v| {
                let s = g.t_softmax_rows(v[0], 0.7)?;
                let sq = g.square(s);
                Ok(g.reduce_sum(sq))
            },
            vec![x.clone()],
            step,
            tol,
        ),
        scalarized(
            "pairwise_sq_dist",
            trial,
            |g, v| {
                let d = g.pairwise_sq_dist(v[0], v[1])?;
                Ok(g.reduce_mean(d))
            },
            vec![x.clone(), y.clone()],
            step,
            tol,
        ),
    ];

    // min/max reductions need well-separated entries so the step cannot
    // cross an argmin tie
    let r2 = 2 + rng.index(4);
    let c2 = 2 + rng.index(4);
    let separated = Tensor::from_vec(
        r2,
        c2,
        (0..r2 * c2).map(|_| rng.index(1000) as f64 * 0.01).collect(),
    )
    .expect("sized data");
    cases.push(scalarized(
        "row_min",
        trial,
        |g, v| {
            let m = g.row_min(v[0], false)?;
            let sq = g.square(m);
            Ok(g.reduce_sum(sq))
        },
        vec![separated],
        1e-6,
        tol,
    ));

    let groups = 1 + rng.index(4);
    let g_size = 2 + rng.index(3);
    let gx = random_tensor(groups * g_size, 1 + rng.index(4), rng);
    cases.push(scalarized(
        "group_max_rows",
        trial,
        move |g, v| {
            let m = g.group_max_rows(v[0], g_size)?;
            let sq = g.square(m);
            Ok(g.reduce_sum(sq))
        },
        vec![gx],
        1e-6,
        tol,
    ));

    cases
}

fn random_points(n: usize, extent: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_vec(
        n,
        3,
        (0..3 * n).map(|_| rng.range_f64(-extent, extent)).collect(),
    )
    .expect("sized data")
}

/// Loss gradients w.r.t. the output points.
pub fn loss_cases(trial: usize, tol: f64, rng: &mut Rng) -> Vec<Case> {
    let q = random_points(6, 1.0, rng);
    let p = random_points(9, 1.0, rng);
    let s: Vec<f64> = (0..9).map(|_| rng.f64() + 0.1).collect();
    let step = 1e-5;

    vec![
        scalarized(
            "loss_reconstruction",
            trial,
            {
                let p = p.clone();
                move |g: &mut Graph, v: &[Var]| {
                    let pv = g.constant(p.clone());
                    losses::reconstruction(g, v[0], pv)
                }
            },
            vec![q.clone()],
            step,
            tol,
        ),
        scalarized(
            "loss_spread",
            trial,
            {
                let p = p.clone();
                move |g: &mut Graph, v: &[Var]| {
                    let pv = g.constant(p.clone());
                    losses::spread(g, v[0], pv)
                }
            },
            vec![q.clone()],
            step,
            tol,
        ),
        scalarized(
            "loss_repulsion",
            trial,
            |g: &mut Graph, v: &[Var]| losses::repulsion(g, v[0]),
            vec![q.clone()],
            step,
            tol,
        ),
        scalarized(
            "loss_saliency",
            trial,
            {
                let p = p.clone();
                move |g: &mut Graph, v: &[Var]| {
                    let pv = g.constant(p.clone());
                    let sv = g.constant(Tensor::column(&s));
                    losses::saliency_weighted(g, v[0], pv, sv)
                }
            },
            vec![q],
            step,
            tol,
        ),
    ]
}

/// The full per-patch pipeline loss w.r.t. every parameter tensor, at toy
/// sizes n=16, m=4, k=8 on patch-scale data. Both extractor-sharing modes
/// are covered.
///
/// In separate mode the selection extractor's final bias shifts every
/// logit row uniformly and so has an exactly-zero gradient through the row
/// softmax; the finite difference there is pure rounding noise with
/// magnitude eps*|loss|/(2*step), which the tighter patch extent keeps
/// well under the tolerance.
pub fn pipeline_cases(seed: u64, tol: f64) -> Vec<Case> {
    [(true, 0.3), (false, 0.15)]
        .into_iter()
        .map(|(share, extent)| {
            let cfg = NetworkConfig {
                k: 8,
                g_knn: 3,
                blocks: 2,
                m: 4,
                g_widths: vec![32, 32, 16, 3],
                share_extractor: share,
            };
            let mut rng = Rng::from_seed(seed);
            let params = SimplifierParams::init(&cfg, &mut rng);
            let patch = random_points(16, extent, &mut rng);
            let weights = LossWeights::default();
            let inputs = params.flat_tensors_cloned();
            Case {
                name: if share {
                    "pipeline_joint_loss[shared_f]".into()
                } else {
                    "pipeline_joint_loss[separate_f1]".into()
                },
                builder: Box::new(move |g, vars| {
                    let var_set = VarSet::from_slice(vars);
                    let pv = g.constant(patch.clone());
                    let q = forward_patch(g, pv, &params, &var_set, 0.7, true)?;
                    let parts = losses::joint(g, q, pv, None, &weights)?;
                    Ok(parts.total)
                }),
                inputs,
                step: 1e-5,
                tol,
            }
        })
        .collect()
}

/// Runs everything; `full` raises the trial counts.
pub fn run_all(full: bool, seed: u64) -> Result<Vec<CheckOutcome>> {
    let trials = if full { 10 } else { 3 };
    let tol = 1e-4;
    let mut rng = Rng::from_seed(seed);
    let mut outcomes = Vec::new();
    for t in 0..trials {
        for case in primitive_cases(t, tol, &mut rng) {
            outcomes.push(run_case(&case)?);
        }
        for case in loss_cases(t, tol, &mut rng) {
            outcomes.push(run_case(&case)?);
        }
    }
    for case in pipeline_cases(seed.wrapping_add(119), tol) {
        outcomes.push(run_case(&case)?);
    }
    Ok(outcomes)
}
