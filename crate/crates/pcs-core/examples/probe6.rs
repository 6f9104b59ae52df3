//! scratch diagnosis for the toy end-to-end run (not shipped)

use pcs_core::autodiff::{Graph, Tensor};
use pcs_core::geom::{normalize_to_unit_sphere, KnnIndex, PointCloud, Rng};
use pcs_core::losses::{LossMode, LossWeights};
use pcs_core::metrics::chamfer;
use pcs_core::network::{forward_patch, insert_params_frozen, simplify, NetworkConfig};
use pcs_core::patching::{extract_patch_input, make_partition, PartitionMode};
use pcs_core::pipeline::{add_gaussian_noise, baseline_select, simplify_cloud, unit_sphere_cloud, BaselineMethod, PipelineConfig, SimplifyMode};
use pcs_core::trainer::{PcsTrainer, TrainConfig};

fn main() {
    let mut rng = Rng::from_seed(600);
    let clean = unit_sphere_cloud(5000, &mut rng);
    let noisy = add_gaussian_noise(&clean, 2.0, &mut rng).unwrap();
    let (normalized, _, _) = normalize_to_unit_sphere(&noisy).unwrap();
    let mut patch_rng = Rng::from_seed(601);
    let partition = make_partition(&normalized, 16, PartitionMode::Uniform, &mut patch_rng).unwrap();
    let multipart = std::env::args().nth(3).map(|a| a == "multipart").unwrap_or(false);
    let fullcell = std::env::args().nth(3).map(|a| a == "fullcell").unwrap_or(false);
    let mut patches = Vec::new();
    if fullcell {
        for slot in 0..partition.seeds.len() {
            let n = partition.cell(slot).len();
            patches.push(extract_patch_input(&normalized, &partition, slot, n, &mut patch_rng).unwrap());
        }
    } else if multipart {
        for pseed in [601u64, 604, 605] {
            let mut prng = Rng::from_seed(pseed);
            let part = make_partition(&normalized, 16, PartitionMode::Uniform, &mut prng).unwrap();
            for slot in 0..part.seeds.len() {
                patches.push(extract_patch_input(&normalized, &part, slot, 256, &mut prng).unwrap());
            }
        }
    } else {
        for _ in 0..std::env::args().nth(2).and_then(|a| a.parse::<usize>().ok()).unwrap_or(1) {
            for slot in 0..partition.seeds.len() {
                patches.push(extract_patch_input(&normalized, &partition, slot, 256, &mut patch_rng).unwrap());
            }
        }
    }
    
    let lr: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(1e-3);
    let draws: usize = std::env::args().nth(2).and_then(|a| a.parse().ok()).unwrap_or(1);
    let cfg = TrainConfig {
        epochs: 200,
        learning_rate: lr,
        seed: 602,
        network: NetworkConfig { k: 32, g_knn: 8, blocks: 2, m: 32, g_widths: vec![128,128,64,3], share_extractor: std::env::var("SHARE").is_ok() },
        patch_input: 256,
        weights: LossWeights { mode: LossMode::Spread, ..LossWeights::default() },
        ..TrainConfig::default()
    };
    let redraw = std::env::args().nth(3).map(|a| a == "redraw").unwrap_or(false);
    let mut trainer = PcsTrainer::new(cfg).unwrap();
    let log = if redraw {
        let mut log = Vec::new();
        let mut draw_rng = Rng::from_seed(603);
        for _ in 0..200 {
            let fresh: Vec<_> = (0..partition.seeds.len())
                .map(|slot| extract_patch_input(&normalized, &partition, slot, 256, &mut draw_rng).unwrap())
                .collect();
            log.extend(trainer.run_epochs(&fresh, 1).unwrap());
        }
        log
    } else {
        trainer.run(&patches).unwrap()
    };
    println!("loss: {} -> {}", log.first().unwrap().l, log.last().unwrap().l);
    for e in log.iter().step_by(20) {
        println!("  epoch {:3}  l_r {:.5}  l_cov {:.5}  l_rep {:.6}  L {:.5}  t {:.2}", e.epoch, e.l_r, e.l_cov, e.l_rep, e.l, e.t);
    }
    let params = trainer.params;

    // per-patch diagnosis: distinct hard selections + per-patch coverage
    for (pi, patch) in patches.iter().enumerate().take(4) {
        let mut g = Graph::new();
        let vars = insert_params_frozen(&mut g, &params);
        let pv = g.constant(Tensor::from_points(&patch.points));
        let simp = simplify(&mut g, pv, &params, &vars, 0.1).unwrap();
        let s = g.value(simp.sampling);
        let mut argmaxes: Vec<usize> = (0..s.rows()).map(|r| {
            let row = s.row(r);
            row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0
        }).collect();
        argmaxes.sort_unstable();
        argmaxes.dedup();
        let q = forward_patch(&mut g, pv, &params, &vars, 0.1, true).unwrap();
        let qc = PointCloud::new(g.value(q).to_points().unwrap()).unwrap();
        let pc = PointCloud::new(patch.points.clone()).unwrap();
        // directed coverage of the patch by the output
        let idx = KnnIndex::build(&qc);
        let cov: f64 = pc.points().iter().map(|&x| idx.nearest_sq(x).1).sum::<f64>() / pc.len() as f64;
        println!("patch {pi}: distinct hard selections {}/32, patch->out coverage {:.6}", argmaxes.len(), cov);
    }

    // decomposition experiments
    let custom = |label: &str, pseed: u64, full_cell: bool| {
        let mut prng = Rng::from_seed(pseed);
        let part = make_partition(&normalized, 16, PartitionMode::Uniform, &mut prng).unwrap();
        let mut outs = Vec::new();
        for slot in 0..part.seeds.len() {
            let n = if full_cell { part.cell(slot).len() } else { 256 };
            let patch = extract_patch_input(&normalized, &part, slot, n, &mut prng).unwrap();
            let mut g = Graph::new();
            let vars = insert_params_frozen(&mut g, &params);
            let pv = g.constant(Tensor::from_points(&patch.points));
            let q = forward_patch(&mut g, pv, &params, &vars, 0.1, true).unwrap();
            outs.push(PointCloud::new(g.value(q).to_points().unwrap()).unwrap());
        }
        let merged = pcs_core::patching::merge_outputs(&outs, 512, &mut prng).unwrap();
        let mut rr = Rng::from_seed(610);
        let cref = unit_sphere_cloud(10_000, &mut rr);
        // denormalize matches identity here since the sphere is ~normalized
        let (_, center, radius) = normalize_to_unit_sphere(&noisy).unwrap();
        let denorm = pcs_core::geom::denormalize(&merged, center, radius).unwrap();
        println!("{label}: chamfer {:.6}", chamfer(&cref, &denorm).unwrap());
    };
    custom("train-partition fresh-draws n=256", 601, false);
    custom("fresh-partition n=256            ", 611, false);
    custom("fresh-partition full-cell        ", 611, true);
    custom("fresh-partition full-cell s613   ", 613, true);

    let pipe_cfg = PipelineConfig { num_patches: None, patch_input: 256, temperature: 0.1 };
    let ours = simplify_cloud(&noisy, &params, SimplifyMode::Uniform, 512, &pipe_cfg, None, &mut Rng::from_seed(611)).unwrap();
    let fps = baseline_select(&noisy, 512, BaselineMethod::Fps, &mut Rng::from_seed(612)).unwrap();
    let mut ref_rng = Rng::from_seed(610);
    let clean_ref = unit_sphere_cloud(10_000, &mut ref_rng);

    let directed = |a: &PointCloud, b: &PointCloud| {
        let idx = KnnIndex::build(b);
        a.points().iter().map(|&p| idx.nearest_sq(p).1).sum::<f64>() / a.len() as f64
    };
    println!("ours:  ref->out {:.6}  out->ref {:.6}  chamfer {:.6}", directed(&clean_ref, &ours), directed(&ours, &clean_ref), chamfer(&clean_ref, &ours).unwrap());
    println!("fps:   ref->out {:.6}  out->ref {:.6}  chamfer {:.6}", directed(&clean_ref, &fps), directed(&fps, &clean_ref), chamfer(&clean_ref, &fps).unwrap());

    // distinct nearest-clean stats for radial behavior
    let radial = |c: &PointCloud| {
        let m = c.points().iter().map(|p| p.norm()).sum::<f64>() / c.len() as f64;
        let mx = c.points().iter().map(|p| p.norm()).fold(0.0, f64::max);
        (m, mx)
    };
    println!("radial mean/max ours {:?} fps {:?}", radial(&ours), radial(&fps));
}
