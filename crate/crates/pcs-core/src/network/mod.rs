//! The simplification network: a per-point feature extractor with
//! kNN-grouped edge convolutions, a learned row-stochastic sampling matrix
//! (temperature softmax over per-output logits), a double-scale refinement
//! head that regresses coordinate offsets, and a saliency prediction head.

mod params;

pub use params::{
    ParamSet,
    BlockParams, ExtractorConfig, FeatureExtractorParams, LinearParams, MlpParams,
    NetworkConfig, SaliencyNetConfig, SaliencyNetParams, SimplifierParams,
};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::geom::KnnIndex;

/// Graph handles for one inserted parameter set, in the same order as the
/// owning struct's `flat_tensors`.
pub struct VarSet {
    vars: Vec<Var>,
}

impl VarSet {
    pub fn from_slice(vars: &[Var]) -> VarSet {
        VarSet {
            vars: vars.to_vec(),
        }
    }

    pub fn flat(&self) -> &[Var] {
        &self.vars
    }

    fn at(&self, i: usize) -> Var {
        self.vars[i]
    }
}

/// Inserts every tensor of a parameter set into the graph as a
/// differentiable leaf.
pub fn insert_params<P: params::ParamSet>(g: &mut Graph, p: &P) -> VarSet {
    VarSet {
        vars: p.flat_tensors().into_iter().map(|t| g.param(t.clone())).collect(),
    }
}

/// Like [`insert_params`] but as constants (inference only; skips gradient
/// bookkeeping).
pub fn insert_params_frozen<P: params::ParamSet>(g: &mut Graph, p: &P) -> VarSet {
    VarSet {
        vars: p
            .flat_tensors()
            .into_iter()
            .map(|t| g.constant(t.clone()))
            .collect(),
    }
}

fn linear(g: &mut Graph, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let p = g.matmul(x, weight)?;
    g.add_row_broadcast(p, bias)
}

/// Shared MLP applied row-wise: hidden layers take a relu, the final layer
/// stays linear (it regresses offsets or saliency).
fn mlp(g: &mut Graph, mut x: Var, layers: &[(Var, Var)]) -> Result<Var> {
    for (i, &(w, b)) in layers.iter().enumerate() {
        x = linear(g, x, w, b)?;
        if i + 1 < layers.len() {
            x = g.relu(x);
        }
    }
    Ok(x)
}

/// Per-point features via kNN-grouped edge convolutions.
///
/// Each block gathers every point's `g_knn` coordinate-space neighbors
/// (self included as the nearest), forms edge features
/// `[h_j - h_i, h_i]`, applies a shared linear+relu, max-pools over the
/// neighbors, concatenates with the block input (dense connection), and
/// re-projects linearly back to `k` channels.
pub fn extract_features(
    g: &mut Graph,
    points: Var,
    cfg: &ExtractorConfig,
    vars: &VarSet,
    offset: usize,
) -> Result<Var> {
    let coords = g.value(points).clone();
    let n = coords.rows();
    if n < cfg.g_knn {
        return Err(Error::PatchTooSmall { n, g: cfg.g_knn });
    }
    let pts = coords.to_points()?;
    let index = KnnIndex::from_points(pts.clone());
    let mut neighbor_ids = Vec::with_capacity(n * cfg.g_knn);
    let mut center_ids = Vec::with_capacity(n * cfg.g_knn);
    for (i, &p) in pts.iter().enumerate() {
        for (j, _) in index.knn(p, cfg.g_knn)? {
            neighbor_ids.push(j);
            center_ids.push(i);
        }
    }

    // tensor order per extractor: lift(w,b), then per block edge(w,b), reproject(w,b)
    let mut slot = offset;
    let mut take = || {
        let pair = (vars.at(slot), vars.at(slot + 1));
        slot += 2;
        pair
    };
    let (lift_w, lift_b) = take();
    let lifted = linear(g, points, lift_w, lift_b)?;
    let mut h = g.relu(lifted);

    for _ in 0..cfg.blocks {
        let (edge_w, edge_b) = take();
        let (proj_w, proj_b) = take();
        let gathered = g.gather_rows(h, neighbor_ids.clone())?;
        let centers = g.gather_rows(h, center_ids.clone())?;
        let diff = g.sub(gathered, centers)?;
        let edge = g.concat_cols(diff, centers)?;
        let e = linear(g, edge, edge_w, edge_b)?;
        let e = g.relu(e);
        let pooled = g.group_max_rows(e, cfg.g_knn)?;
        let dense = g.concat_cols(h, pooled)?;
        h = linear(g, dense, proj_w, proj_b)?;
    }
    Ok(h)
}

/// Output of the simplification stage: the selected points and the sampling
/// matrix that produced them.
pub struct Simplified {
    /// m x 3 convex combinations of input points
    pub selected: Var,
    /// m x n row-stochastic sampling matrix
    pub sampling: Var,
}

/// Learns which points to keep: per-output logits over all inputs, sharpened
/// by the temperature softmax, then applied to the coordinates. Every output
/// row is a convex combination of input points; as `t` anneals toward zero
/// the rows approach one-hot selections.
pub fn simplify(
    g: &mut Graph,
    patch: Var,
    params: &SimplifierParams,
    vars: &VarSet,
    t: f64,
) -> Result<Simplified> {
    if !(t > 0.0) {
        return Err(Error::InvalidTemperature { t });
    }
    let n = g.value(patch).rows();
    if params.m > n || params.m == 0 {
        return Err(Error::InvalidInput(format!(
            "output size m={} must satisfy 1 <= m <= n={n}",
            params.m
        )));
    }
    let feat = extract_features(g, patch, &params.extractor, vars, params.f1_offset())?;
    let logits_nm = g.matmul(feat, params.proj_var(vars))?;
    let logits = g.transpose(logits_nm);
    let sampling = g.t_softmax_rows(logits, t)?;
    let selected = g.matmul(sampling, patch)?;
    Ok(Simplified {
        selected,
        sampling,
    })
}

/// Double-scale refinement: features from the dense patch (attention-pooled
/// through the sampling matrix) and from the selected points are
/// concatenated and fed to the offset MLP; offsets are added to the
/// selection.
pub fn resample(
    g: &mut Graph,
    patch: Var,
    simplified: &Simplified,
    params: &SimplifierParams,
    vars: &VarSet,
) -> Result<Var> {
    let f23_offset = params.f23_offset();
    let dense_feat = extract_features(g, patch, &params.extractor, vars, f23_offset)?;
    let sparse_feat =
        extract_features(g, simplified.selected, &params.extractor, vars, f23_offset)?;
    let pooled = g.matmul(simplified.sampling, dense_feat)?;
    let multi = g.concat_cols(pooled, sparse_feat)?;
    let offsets = mlp(g, multi, &params.g_mlp_vars(vars))?;
    g.add(simplified.selected, offsets)
}

/// Subtracts the row centroid: patches enter the network in a canonical
/// translation frame so a cell's position carries no signal. Returns the
/// centered rows and the 1x3 centroid.
pub fn center_rows(g: &mut Graph, x: Var) -> Result<(Var, Var)> {
    let n = g.value(x).rows();
    let mean_weights = crate::autodiff::Tensor::from_vec(1, n, vec![1.0 / n as f64; n])?;
    let ones = g.constant(mean_weights);
    let centroid = g.matmul(ones, x)?;
    let neg = g.scalar_mul(centroid, -1.0);
    let centered = g.add_row_broadcast(x, neg)?;
    Ok((centered, centroid))
}

/// Full per-patch forward pass; `refine` off reproduces the
/// selection-only baseline. Coordinates are centered on the patch centroid
/// for the network and shifted back afterwards, which leaves the losses
/// unchanged (they are translation invariant) but makes the learned
/// selection independent of where the patch sits.
pub fn forward_patch(
    g: &mut Graph,
    patch: Var,
    params: &SimplifierParams,
    vars: &VarSet,
    t: f64,
    refine: bool,
) -> Result<Var> {
    let (centered, centroid) = center_rows(g, patch)?;
    let simplified = simplify(g, centered, params, vars, t)?;
    let out = if refine {
        resample(g, centered, &simplified, params, vars)?
    } else {
        simplified.selected
    };
    g.add_row_broadcast(out, centroid)
}

/// Nonnegative per-point saliency from the shared extractor plus an MLP
/// head under a softplus.
pub fn predict_saliency(
    g: &mut Graph,
    patch: Var,
    params: &SaliencyNetParams,
    vars: &VarSet,
) -> Result<Var> {
    let (centered, _) = center_rows(g, patch)?;
    let feat = extract_features(g, centered, &params.extractor, vars, 0)?;
    let raw = mlp(g, feat, &params.head_vars(vars))?;
    Ok(g.softplus(raw))
}


#[cfg(test)]
mod tests {
    use super::tests_helpers::*;
    use super::*;
    use crate::autodiff::{grad_check, Tensor};
    use crate::geom::Rng;
    use crate::losses::{self, LossWeights};

    #[test]
    fn identical_input_gives_bit_identical_output() {
        let mut rng = Rng::from_seed(110);
        let params = SimplifierParams::init(&toy_config(), &mut rng);
        let patch = random_patch(16, &mut rng);

        let run = || -> Vec<u64> {
            let mut g = Graph::new();
            let vars = insert_params(&mut g, &params);
            let pv = g.constant(patch.clone());
            let q = forward_patch(&mut g, pv, &params, &vars, 0.5, true).unwrap();
            g.value(q).data().iter().map(|v| v.to_bits()).collect()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn permuted_rows_permute_features() {
        let mut rng = Rng::from_seed(111);
        let cfg = toy_config();
        let params = SimplifierParams::init(&cfg, &mut rng);
        let n = 12;
        let patch = random_patch(n, &mut rng);

        let features = |input: &Tensor| -> Tensor {
            let mut g = Graph::new();
            let vars = insert_params(&mut g, &params);
            let pv = g.constant(input.clone());
            let f = extract_features(&mut g, pv, &params.extractor, &vars, params.f1_offset())
                .unwrap();
            g.value(f).clone()
        };

        let base = features(&patch);
        // reverse the rows
        let perm: Vec<usize> = (0..n).rev().collect();
        let permuted = Tensor::from_vec(
            n,
            3,
            perm.iter().flat_map(|&i| patch.row(i).to_vec()).collect(),
        )
        .unwrap();
        let out = features(&permuted);
        for (new_row, &src) in perm.iter().enumerate() {
            for c in 0..base.cols() {
                let a = out.get(new_row, c);
                let b = base.get(src, c);
                assert!((a - b).abs() < 1e-12, "row {new_row} col {c}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn selected_points_are_convex_combinations() {
        let mut rng = Rng::from_seed(112);
        let params = SimplifierParams::init(&toy_config(), &mut rng);
        let patch = random_patch(16, &mut rng);
        let mut g = Graph::new();
        let vars = insert_params(&mut g, &params);
        let pv = g.constant(patch.clone());
        let out = simplify(&mut g, pv, &params, &vars, 1.0).unwrap();

        let s = g.value(out.sampling);
        for r in 0..s.rows() {
            let sum: f64 = s.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(s.row(r).iter().all(|&v| v >= 0.0));
        }

        // every output coordinate lies inside the input's bounding box
        let sel = g.value(out.selected);
        for c in 0..3 {
            let lo = (0..patch.rows()).map(|r| patch.get(r, c)).fold(f64::INFINITY, f64::min);
            let hi = (0..patch.rows())
                .map(|r| patch.get(r, c))
                .fold(f64::NEG_INFINITY, f64::max);
            for r in 0..sel.rows() {
                let v = sel.get(r, c);
                assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn separated_logits_select_input_points_at_low_temperature() {
        // force one-hot behavior by driving the sampling matrix with
        // logits_nm built from a known selection
        let mut rng = Rng::from_seed(113);
        let n = 10;
        let m = 3;
        let patch = random_patch(n, &mut rng);
        let mut g = Graph::new();
        let pv = g.constant(patch.clone());

        // logits m x n with a gap of 1 favoring chosen indices
        let chosen = [7usize, 2, 5];
        let mut logits = Tensor::zeros(m, n);
        for (r, &c) in chosen.iter().enumerate() {
            logits.set(r, c, 1.0);
        }
        let lv = g.constant(logits);
        let s = g.t_softmax_rows(lv, 0.1).unwrap();
        let r = g.matmul(s, pv).unwrap();
        let rv = g.value(r);
        for (row, &c) in chosen.iter().enumerate() {
            for col in 0..3 {
                assert!(
                    (rv.get(row, col) - patch.get(c, col)).abs() < 1e-6,
                    "row {row} col {col}"
                );
            }
        }
    }

    #[test]
    fn identity_selection_reproduces_the_patch() {
        // n == m with identity-favoring logits
        let n = 6;
        let mut rng = Rng::from_seed(114);
        let patch = random_patch(n, &mut rng);
        let mut g = Graph::new();
        let pv = g.constant(patch.clone());
        let mut logits = Tensor::zeros(n, n);
        for i in 0..n {
            logits.set(i, i, 2.0);
        }
        let lv = g.constant(logits);
        let s = g.t_softmax_rows(lv, 0.1).unwrap();
        let r = g.matmul(s, pv).unwrap();
        for (a, b) in g.value(r).data().iter().zip(patch.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn zeroed_offset_head_is_the_identity_refinement() {
        let mut rng = Rng::from_seed(115);
        let mut params = SimplifierParams::init(&toy_config(), &mut rng);
        params.zero_g_mlp();
        let patch = random_patch(16, &mut rng);
        let mut g = Graph::new();
        let vars = insert_params(&mut g, &params);
        let pv = g.constant(patch);
        let simplified = simplify(&mut g, pv, &params, &vars, 0.7).unwrap();
        let q = resample(&mut g, pv, &simplified, &params, &vars).unwrap();
        assert_eq!(g.value(q).data(), g.value(simplified.selected).data());
    }

    #[test]
    fn offsets_respect_an_interval_arithmetic_bound() {
        let mut rng = Rng::from_seed(116);
        let cfg = toy_config();
        let params = SimplifierParams::init(&cfg, &mut rng);
        let patch = random_patch(16, &mut rng);

        let mut g = Graph::new();
        let vars = insert_params(&mut g, &params);
        let pv = g.constant(patch);
        let simplified = simplify(&mut g, pv, &params, &vars, 0.7).unwrap();
        let f23 = params.f23_offset();
        let dense = extract_features(&mut g, pv, &params.extractor, &vars, f23).unwrap();
        let sparse =
            extract_features(&mut g, simplified.selected, &params.extractor, &vars, f23)
                .unwrap();
        let pooled = g.matmul(simplified.sampling, dense).unwrap();
        let multi = g.concat_cols(pooled, sparse).unwrap();
        let offsets = mlp(&mut g, multi, &params.g_mlp_vars(&vars)).unwrap();

        // propagate |x|_inf through each layer: B_out = max_col sum |W| * B_in + max |b|
        let mut bound = g
            .value(multi)
            .data()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        for (w, b) in params.g_mlp_vars(&vars) {
            let wv = g.value(w);
            let mut col_sum_max = 0.0f64;
            for c in 0..wv.cols() {
                let s: f64 = (0..wv.rows()).map(|r| wv.get(r, c).abs()).sum();
                col_sum_max = col_sum_max.max(s);
            }
            let bmax = g.value(b).data().iter().fold(0.0f64, |m, &v| m.max(v.abs()));
            bound = col_sum_max * bound + bmax;
        }
        let actual = g
            .value(offsets)
            .data()
            .iter()
            .fold(0.0f64, |m, &v| m.max(v.abs()));
        assert!(actual <= bound + 1e-12, "offset {actual} exceeds bound {bound}");
    }

    #[test]
    fn too_small_patch_is_rejected() {
        let mut rng = Rng::from_seed(117);
        let cfg = NetworkConfig {
            m: 2,
            ..toy_config()
        };
        let params = SimplifierParams::init(&cfg, &mut rng);
        let patch = random_patch(2, &mut rng); // below g_knn = 3
        let mut g = Graph::new();
        let vars = insert_params(&mut g, &params);
        let pv = g.constant(patch);
        let err = forward_patch(&mut g, pv, &params, &vars, 1.0, true).unwrap_err();
        assert_eq!(err.code(), "patch-too-small");
    }

    #[test]
    fn one_extractor_block_passes_finite_differences() {
        let mut rng = Rng::from_seed(118);
        let cfg = NetworkConfig {
            k: 8,
            g_knn: 3,
            blocks: 1,
            m: 4,
            g_widths: vec![8, 3],
            share_extractor: false,
        };
        let params = SimplifierParams::init(&cfg, &mut rng);
        let patch = random_patch(10, &mut rng);

        let tensors = params.flat_tensors_cloned();
        let report = grad_check(
            |g, vars| {
                let var_set = VarSet { vars: vars.to_vec() };
                let pv = g.constant(patch.clone());
                let f =
                    extract_features(g, pv, &params.extractor, &var_set, params.f1_offset())?;
                let sq = g.square(f);
                Ok(g.reduce_sum(sq))
            },
            &tensors,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "max rel err {}", report.max_rel_err);
    }

    #[test]
    fn full_pipeline_loss_passes_finite_differences() {
        // toy sizes: n=16, m=4, k=8
        let mut rng = Rng::from_seed(119);
        let params = SimplifierParams::init(&toy_config(), &mut rng);
        let patch = random_local_patch(16, &mut rng);
        let weights = LossWeights::default();

        let tensors = params.flat_tensors_cloned();
        let report = grad_check(
            |g, vars| {
                let var_set = VarSet { vars: vars.to_vec() };
                let pv = g.constant(patch.clone());
                let q = forward_patch(g, pv, &params, &var_set, 0.7, true)?;
                let parts = losses::joint(g, q, pv, None, &weights)?;
                Ok(parts.total)
            },
            &tensors,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(
            report.passed(),
            "max rel err {} at {:?}",
            report.max_rel_err,
            report.worst_entry
        );
    }

    #[test]
    fn zeroed_saliency_head_outputs_ln2() {
        let mut rng = Rng::from_seed(120);
        let cfg = SaliencyNetConfig {
            k: 8,
            g_knn: 3,
            blocks: 1,
            head_widths: vec![8, 1],
        };
        let mut params = SaliencyNetParams::init(&cfg, &mut rng);
        params.zero_head();
        let patch = random_patch(10, &mut rng);
        let mut g = Graph::new();
        let vars = insert_params(&mut g, &params);
        let pv = g.constant(patch);
        let s = predict_saliency(&mut g, pv, &params, &vars).unwrap();
        let ln2 = 2.0f64.ln();
        assert_eq!(g.value(s).shape(), (10, 1));
        for &v in g.value(s).data() {
            assert!((v - ln2).abs() < 1e-12);
        }
    }
}
