//! Acceptance suite: one test per criterion, each printing a pass line.
//! Run with `cargo test --test acceptance -- --nocapture` to see them.

use pcs_core::autodiff::{Graph, Tensor};
use pcs_core::geom::{
    dist_sq, normalize_to_unit_sphere, KnnIndex, Point3, PointCloud, Rng,
};
use pcs_core::io::TriangleMesh;
use pcs_core::losses::{self, LossMode, LossWeights};
use pcs_core::metrics::{chamfer, hausdorff, point_to_face, triangle_quality};
use pcs_core::network::NetworkConfig;
use pcs_core::patching::{extract_patch_input, make_partition, PartitionMode};
use pcs_core::pipeline::{
    add_gaussian_noise, baseline_select, simplify_cloud, unit_sphere_cloud, BaselineMethod,
    PipelineConfig, SimplifyMode,
};
use pcs_core::saliency::{raw_saliency, smooth_saliency, SaliencyField};
use pcs_core::trainer::{temperature_at, PcsTrainer, TrainConfig};
use std::time::Instant;

fn random_points(n: usize, extent: f64, rng: &mut Rng) -> Tensor {
    Tensor::from_vec(
        n,
        3,
        (0..3 * n).map(|_| rng.range_f64(-extent, extent)).collect(),
    )
    .unwrap()
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[test]
fn criterion_1_gradient_correctness() {
    let started = Instant::now();
    let outcomes = pcs_core::gradsuite::run_all(true, 0).expect("suite runs");
    let failed: Vec<_> = outcomes.iter().filter(|o| !o.passed).collect();
    assert!(
        failed.is_empty(),
        "failing checks: {:?}",
        failed
            .iter()
            .map(|o| (o.name.clone(), o.max_rel_err))
            .collect::<Vec<_>>()
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "gradient suite took {elapsed:?}, budget is 60 s"
    );
    println!(
        "acceptance criterion 1 (gradient correctness, {} checks in {elapsed:?}): PASS",
        outcomes.len()
    );
}

#[test]
fn criterion_2_loss_oracle_equivalence() {
    let mut rng = Rng::from_seed(200);
    for trial in 0..100 {
        let m = 2 + rng.index(99);
        let n = 1 + rng.index(100);
        let q = random_points(m, 1.0, &mut rng);
        let p = random_points(n, 1.0, &mut rng);
        let s: Vec<f64> = (0..n).map(|_| rng.f64() * 2.0).collect();

        // independent brute-force double loops
        let recon_oracle = {
            let mut sum = 0.0;
            for i in 0..m {
                let mut best = f64::INFINITY;
                for j in 0..n {
                    best = best.min(sq(q.row(i), p.row(j)));
                }
                sum += best;
            }
            sum / m as f64
        };
        let spread_oracle = {
            let mut sum = 0.0;
            for j in 0..n {
                let mut best = f64::INFINITY;
                for i in 0..m {
                    best = best.min(sq(p.row(j), q.row(i)));
                }
                sum += best;
            }
            sum / n as f64
        };
        let rep_oracle = {
            let mut sum = 0.0;
            for i in 0..m {
                let mut best = f64::INFINITY;
                for j in 0..m {
                    if i != j {
                        best = best.min(sq(q.row(i), q.row(j)));
                    }
                }
                sum += best;
            }
            -sum / m as f64
        };
        let sal_oracle = {
            let mut sum = 0.0;
            for j in 0..n {
                let mut best = f64::INFINITY;
                for i in 0..m {
                    best = best.min(sq(p.row(j), q.row(i)));
                }
                sum += s[j] * best;
            }
            sum / n as f64
        };

        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
        assert!(
            close(losses::eval_reconstruction(&q, &p).unwrap(), recon_oracle),
            "trial {trial} reconstruction"
        );
        assert!(
            close(losses::eval_spread(&q, &p).unwrap(), spread_oracle),
            "trial {trial} spread"
        );
        assert!(
            close(losses::eval_repulsion(&q).unwrap(), rep_oracle),
            "trial {trial} repulsion"
        );
        assert!(
            close(losses::eval_saliency_weighted(&q, &p, &s).unwrap(), sal_oracle),
            "trial {trial} saliency"
        );

        // identity: unit saliency reduces to spread
        let ones = vec![1.0; n];
        assert!(close(
            losses::eval_saliency_weighted(&q, &p, &ones).unwrap(),
            losses::eval_spread(&q, &p).unwrap()
        ));
    }

    // identities with hand values
    let mut rng = Rng::from_seed(201);
    let p = random_points(20, 1.0, &mut rng);
    let subset = Tensor::from_vec(4, 3, p.data()[0..12].to_vec()).unwrap();
    assert_eq!(losses::eval_reconstruction(&subset, &p).unwrap(), 0.0);

    let d = 1.3;
    let two = Tensor::from_vec(2, 3, vec![0.0, 0.0, 0.0, d, 0.0, 0.0]).unwrap();
    let rep = losses::eval_repulsion(&two).unwrap();
    assert!((rep + d * d).abs() < 1e-12 * (d * d));

    println!("acceptance criterion 2 (loss oracle equivalence, 100 instances): PASS");
}

#[test]
fn criterion_3_t_softmax_contract() {
    let mut rng = Rng::from_seed(300);
    let mut g = Graph::new();

    // rows sum to one at every scheduled temperature
    let logits = g.constant(random_points(8, 2.0, &mut rng));
    for t in [1.0, 0.5, 0.1] {
        let s = g.t_softmax_rows(logits, t).unwrap();
        let sv = g.value(s);
        for r in 0..sv.rows() {
            let sum: f64 = sv.row(r).iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "t={t} row {r} sums to {sum}");
        }
    }

    // a gap of 1 at t = 0.1 scales to 100 in the exponent: winner take all
    let mut gap = Tensor::zeros(3, 10);
    for (r, c) in [(0usize, 7usize), (1, 2), (2, 5)] {
        gap.set(r, c, 1.0);
    }
    let gap_v = g.constant(gap);
    let s = g.t_softmax_rows(gap_v, 0.1).unwrap();
    let sv = g.value(s);
    for (r, c) in [(0usize, 7usize), (1, 2), (2, 5)] {
        assert!(sv.get(r, c) > 1.0 - 1e-9);
    }

    // entropy is nonincreasing as t drops
    let fresh = random_points(6, 2.0, &mut rng);
    let entropy = |t: f64| -> f64 {
        let mut g = Graph::new();
        let l = g.constant(fresh.clone());
        let s = g.t_softmax_rows(l, t).unwrap();
        g.value(s)
            .data()
            .iter()
            .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
            .sum()
    };
    let (e1, e05, e01) = (entropy(1.0), entropy(0.5), entropy(0.1));
    assert!(e1 >= e05 && e05 >= e01, "entropies {e1} {e05} {e01}");

    // separated logits select actual input points at t = 0.1
    let patch = random_points(10, 1.0, &mut rng);
    let chosen = [7usize, 2, 5];
    let mut logits = Tensor::zeros(3, 10);
    for (r, &c) in chosen.iter().enumerate() {
        logits.set(r, c, 1.0);
    }
    let pv = g.constant(patch.clone());
    let lv = g.constant(logits);
    let s = g.t_softmax_rows(lv, 0.1).unwrap();
    let r = g.matmul(s, pv).unwrap();
    let rv = g.value(r);
    for (row, &c) in chosen.iter().enumerate() {
        for col in 0..3 {
            assert!((rv.get(row, col) - patch.get(c, col)).abs() < 1e-6);
        }
    }

    // reference temperature schedule
    let cfg = TrainConfig {
        epochs: 2000,
        anneal_begin: Some(1200),
        anneal_end: Some(1600),
        ..TrainConfig::default()
    };
    assert_eq!(temperature_at(0, &cfg), 1.0);
    assert!((temperature_at(1400, &cfg) - 0.55).abs() < 1e-12);
    assert_eq!(temperature_at(1900, &cfg), 0.1);

    println!("acceptance criterion 3 (temperature softmax contract): PASS");
}

#[test]
fn criterion_4_metric_oracles() {
    let mut rng = Rng::from_seed(400);
    for trial in 0..10 {
        let n = 1 + rng.index(500);
        let m = 1 + rng.index(500);
        let p = PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.normal(), rng.normal(), rng.normal()))
                .collect(),
        )
        .unwrap();
        let q = PointCloud::new(
            (0..m)
                .map(|_| Point3::new(rng.normal(), rng.normal(), rng.normal()))
                .collect(),
        )
        .unwrap();

        let directed_mean = |a: &PointCloud, b: &PointCloud| -> f64 {
            a.points()
                .iter()
                .map(|&x| {
                    b.points()
                        .iter()
                        .map(|&y| dist_sq(x, y))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / a.len() as f64
        };
        let directed_max = |a: &PointCloud, b: &PointCloud| -> f64 {
            a.points()
                .iter()
                .map(|&x| {
                    b.points()
                        .iter()
                        .map(|&y| dist_sq(x, y))
                        .fold(f64::INFINITY, f64::min)
                })
                .fold(0.0, f64::max)
        };
        assert_eq!(
            chamfer(&p, &q).unwrap(),
            directed_mean(&p, &q) + directed_mean(&q, &p),
            "trial {trial} chamfer"
        );
        assert_eq!(
            hausdorff(&p, &q).unwrap(),
            directed_max(&p, &q).max(directed_max(&q, &p)),
            "trial {trial} hausdorff"
        );
    }

    // on-surface points have zero face distance
    let (tetra, _) = TriangleMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]],
    )
    .unwrap();
    let mut rng = Rng::from_seed(401);
    let on_surface = pcs_core::io::sample_mesh_surface(&tetra, 2000, &mut rng).unwrap();
    assert!(point_to_face(&on_surface, &tetra).unwrap() < 1e-12);

    // triangle quality reference values
    let (equilateral, _) = TriangleMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.5, 3.0f64.sqrt() / 2.0, 0.0),
        ],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let q = triangle_quality(&equilateral).unwrap();
    assert!((q.g_mean - 1.0).abs() < 1e-12, "G(equilateral) = {}", q.g_mean);

    let (right_isoceles, _) = TriangleMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let q = triangle_quality(&right_isoceles).unwrap();
    let expected = 3.0f64.sqrt() / (1.0 + 2.0f64.sqrt());
    assert!((q.g_mean - expected).abs() < 1e-9);

    println!("acceptance criterion 4 (metric oracles): PASS");
}

#[test]
fn criterion_5_saliency() {
    // planar cloud: raw saliency vanishes
    let mut pts = Vec::new();
    for i in 0..40 {
        for j in 0..40 {
            pts.push(Point3::new(i as f64 * 0.05, j as f64 * 0.05, 0.0));
        }
    }
    let plane = PointCloud::new(pts).unwrap();
    let field = raw_saliency(&plane, 20).unwrap();
    assert!(field.values.iter().all(|&s| s < 1e-9));

    // smoothing is a neighborhood convex combination on 100 random fields
    let mut rng = Rng::from_seed(500);
    for trial in 0..100 {
        let cloud = unit_sphere_cloud(120, &mut rng);
        let raw = SaliencyField {
            values: (0..cloud.len()).map(|_| rng.f64() * 3.0).collect(),
            smoothed: false,
            degenerate_count: 0,
        };
        let k = 12;
        let smoothed = smooth_saliency(&cloud, &raw, k, 0.05).unwrap();
        let index = KnnIndex::build(&cloud);
        for (i, &v) in smoothed.values.iter().enumerate() {
            let hits = index.knn(cloud.points()[i], k + 1).unwrap();
            let mut lo = raw.values[i];
            let mut hi = raw.values[i];
            for &(j, _) in hits.iter().filter(|(j, _)| *j != i).take(k) {
                lo = lo.min(raw.values[j]);
                hi = hi.max(raw.values[j]);
            }
            assert!(
                v >= lo - 1e-12 && v <= hi + 1e-12,
                "trial {trial} point {i}: {v} outside [{lo}, {hi}]"
            );
        }
    }

    // invariance under a rigid motion
    let mut rng = Rng::from_seed(501);
    let cloud = pcs_core::pipeline::unit_sphere_cloud(600, &mut rng);
    let base = raw_saliency(&cloud, 15).unwrap();
    let rot = |p: &Point3| {
        let (s, c) = 0.9f64.sin_cos();
        Point3::new(c * p.x - s * p.y + 4.0, s * p.x + c * p.y - 2.0, p.z + 0.5)
    };
    let moved = PointCloud::new(cloud.points().iter().map(rot).collect()).unwrap();
    let moved_field = raw_saliency(&moved, 15).unwrap();
    for (a, b) in base.values.iter().zip(&moved_field.values) {
        assert!((a - b).abs() < 1e-9);
    }

    println!("acceptance criterion 5 (saliency properties): PASS");
}

/// Shared setup for criterion 6: noisy sphere, trained desk-scale model.
fn toy_training() -> (PointCloud, PointCloud, pcs_core::network::SimplifierParams, f64, f64) {
    let mut rng = Rng::from_seed(600);
    let clean = unit_sphere_cloud(5000, &mut rng);
    let noisy = add_gaussian_noise(&clean, 2.0, &mut rng).unwrap();

    // patches are cut from the normalized noisy cloud
    let (normalized, _, _) = normalize_to_unit_sphere(&noisy).unwrap();
    let mut patch_rng = Rng::from_seed(601);
    let partition =
        make_partition(&normalized, 16, PartitionMode::Uniform, &mut patch_rng).unwrap();
    let patches: Vec<_> = (0..partition.seeds.len())
        .map(|slot| {
            extract_patch_input(&normalized, &partition, slot, 256, &mut patch_rng).unwrap()
        })
        .collect();

    let cfg = TrainConfig {
        epochs: 200,
        seed: 602,
        network: NetworkConfig {
            k: 32,
            g_knn: 8,
            blocks: 2,
            m: 32,
            g_widths: vec![128, 128, 64, 3],
            share_extractor: false,
        },
        patch_input: 256,
        weights: LossWeights {
            mode: LossMode::Spread,
            ..LossWeights::default()
        },
        ..TrainConfig::default()
    };
    let mut trainer = PcsTrainer::new(cfg).unwrap();
    let log = trainer.run(&patches).unwrap();
    let first = log.first().unwrap().l;
    let last = log.last().unwrap().l;
    (clean, noisy, trainer.params, first, last)
}

#[test]
fn criterion_6_toy_end_to_end() {
    let started = Instant::now();
    let (_, noisy, params, first_loss, last_loss) = toy_training();

    // (a) the loss halves over the run
    assert!(
        last_loss < 0.5 * first_loss,
        "loss only moved {first_loss} -> {last_loss}"
    );

    // (b) trained simplification beats the farthest-point baseline on
    // chamfer distance against a clean reference sampling
    let mut ref_rng = Rng::from_seed(610);
    let clean_ref = unit_sphere_cloud(10_000, &mut ref_rng);

    let cfg = PipelineConfig {
        num_patches: None,
        patch_input: 256,
        temperature: 0.1,
    };
    let simplified = simplify_cloud(
        &noisy,
        &params,
        SimplifyMode::Uniform,
        512,
        &cfg,
        None,
        &mut Rng::from_seed(611),
    )
    .unwrap();
    assert_eq!(simplified.len(), 512);

    let fps = baseline_select(&noisy, 512, BaselineMethod::Fps, &mut Rng::from_seed(612))
        .unwrap();
    let ours = chamfer(&clean_ref, &simplified).unwrap();
    let theirs = chamfer(&clean_ref, &fps).unwrap();
    assert!(
        ours < theirs,
        "chamfer: trained {ours:.6e} vs fps baseline {theirs:.6e}"
    );

    // (c) refinement evens out the nearest-neighbor spacing: lower
    // coefficient of variation than the selection-only baseline
    let baseline_out = simplify_cloud(
        &noisy,
        &params,
        SimplifyMode::Baseline,
        512,
        &cfg,
        None,
        &mut Rng::from_seed(611),
    )
    .unwrap();
    let cv = |cloud: &PointCloud| -> f64 {
        let index = KnnIndex::build(cloud);
        let spacings: Vec<f64> = cloud
            .points()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                index
                    .knn(p, 2)
                    .unwrap()
                    .into_iter()
                    .find(|(j, _)| *j != i)
                    .map(|(_, d)| d)
                    .unwrap_or(0.0)
            })
            .collect();
        let mean = spacings.iter().sum::<f64>() / spacings.len() as f64;
        let var = spacings.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
            / spacings.len() as f64;
        var.sqrt() / mean
    };
    let cv_refined = cv(&simplified);
    let cv_baseline = cv(&baseline_out);
    assert!(
        cv_refined < cv_baseline,
        "nearest-neighbor spacing CV: refined {cv_refined:.4} vs baseline {cv_baseline:.4}"
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 600,
        "end-to-end run took {elapsed:?}, budget is 10 min"
    );
    println!(
        "acceptance criterion 6 (toy end-to-end in {elapsed:?}): PASS \
         [loss {first_loss:.4} -> {last_loss:.4}; chamfer ours {ours:.3e} vs fps {theirs:.3e}; \
         spacing CV {cv_refined:.3} vs {cv_baseline:.3}]"
    );
}

#[test]
fn criterion_7_determinism() {
    let mut rng = Rng::from_seed(700);
    let cloud = unit_sphere_cloud(1500, &mut rng);
    let cfg = NetworkConfig {
        k: 16,
        g_knn: 6,
        blocks: 2,
        m: 16,
        g_widths: vec![32, 16, 3],
        share_extractor: false,
    };
    let params =
        pcs_core::network::SimplifierParams::init(&cfg, &mut Rng::from_seed(701));
    let pipe_cfg = PipelineConfig {
        num_patches: None,
        patch_input: 96,
        temperature: 0.1,
    };

    // single-thread mode, as the reproducibility contract states
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let run = || {
        pool.install(|| {
            simplify_cloud(
                &cloud,
                &params,
                SimplifyMode::Uniform,
                256,
                &pipe_cfg,
                None,
                &mut Rng::from_seed(702),
            )
            .unwrap()
        })
    };
    let a = run();
    let b = run();
    assert_eq!(a.len(), 256);
    let bits = |c: &PointCloud| -> Vec<u64> {
        c.points()
            .iter()
            .flat_map(|p| [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()])
            .collect()
    };
    assert_eq!(bits(&a), bits(&b), "outputs differ between identical runs");
    println!("acceptance criterion 7 (bit-exact determinism): PASS");
}

#[test]
fn criterion_8_io_roundtrips_and_fuzzing() {
    use pcs_core::io::{
        read_cloud, read_mesh, write_cloud, write_cloud_as, write_mesh, CloudFormat,
    };
    use std::panic::{catch_unwind, AssertUnwindSafe};

    let dir = tempfile::tempdir().unwrap();
    let mut rng = Rng::from_seed(800);

    // exact round-trips
    let points: Vec<Point3> = (0..400)
        .map(|_| Point3::new(rng.normal() * 1e3, rng.normal(), rng.f64() * 1e-6))
        .collect();
    let saliency: Vec<f64> = (0..400).map(|_| rng.f64()).collect();
    let cloud = PointCloud::with_saliency(points, saliency).unwrap();

    let xyz = dir.path().join("c.xyz");
    write_cloud(&cloud, &xyz).unwrap();
    assert_eq!(read_cloud(&xyz).unwrap(), cloud);

    let ply = dir.path().join("c.ply");
    write_cloud(&cloud, &ply).unwrap();
    assert_eq!(read_cloud(&ply).unwrap(), cloud);

    let ply_bin = dir.path().join("b.ply");
    write_cloud_as(&cloud, &ply_bin, CloudFormat::PlyBinaryLittleEndian).unwrap();
    let back = read_cloud(&ply_bin).unwrap();
    for (a, b) in back.points().iter().zip(cloud.points()) {
        assert_eq!(a.x, b.x as f32 as f64);
        assert_eq!(a.y, b.y as f32 as f64);
        assert_eq!(a.z, b.z as f32 as f64);
    }

    let (mesh, _) = TriangleMesh::new(
        (0..30)
            .map(|_| Point3::new(rng.normal(), rng.normal(), rng.normal()))
            .collect(),
        (0..28).map(|i| [i, i + 1, i + 2]).collect(),
    )
    .unwrap();
    let obj = dir.path().join("m.obj");
    write_mesh(&mesh, &obj).unwrap();
    assert_eq!(read_mesh(&obj).unwrap(), mesh);
    let mply = dir.path().join("m.ply");
    write_mesh(&mesh, &mply).unwrap();
    assert_eq!(read_mesh(&mply).unwrap(), mesh);

    // 1000 fuzz cases over truncated/corrupted/garbage files: errors are
    // fine, panics are not
    let mut templates: Vec<(String, Vec<u8>)> = vec![
        ("xyz".into(), std::fs::read(&xyz).unwrap()),
        ("ply".into(), std::fs::read(&ply).unwrap()),
        ("ply".into(), std::fs::read(&ply_bin).unwrap()),
        ("obj".into(), std::fs::read(&obj).unwrap()),
        ("ply".into(), std::fs::read(&mply).unwrap()),
    ];
    templates.push(("xyz".into(), b"1 2 3\n4 5\n".to_vec()));
    templates.push(("obj".into(), b"v 0 0 0\nf 1 2 9\n".to_vec()));

    for case in 0..1000u64 {
        let mut fuzz_rng = Rng::from_seed(9000 + case);
        let (ext, template) = &templates[fuzz_rng.index(templates.len())];
        let mut bytes = template.clone();
        match fuzz_rng.index(4) {
            0 => {
                // truncate
                let keep = fuzz_rng.index(bytes.len().max(1));
                bytes.truncate(keep);
            }
            1 => {
                // flip random bytes
                for _ in 0..1 + fuzz_rng.index(16) {
                    if bytes.is_empty() {
                        break;
                    }
                    let i = fuzz_rng.index(bytes.len());
                    bytes[i] = (fuzz_rng.index(256)) as u8;
                }
            }
            2 => {
                // splice garbage into the middle
                let at = fuzz_rng.index(bytes.len().max(1));
                let junk: Vec<u8> =
                    (0..fuzz_rng.index(64)).map(|_| fuzz_rng.index(256) as u8).collect();
                bytes.splice(at..at, junk);
            }
            _ => {
                // pure noise
                bytes = (0..fuzz_rng.index(512))
                    .map(|_| fuzz_rng.index(256) as u8)
                    .collect();
            }
        }
        let path = dir.path().join(format!("fuzz.{ext}"));
        std::fs::write(&path, &bytes).unwrap();
        let outcome = catch_unwind(AssertUnwindSafe(|| {
            let _ = read_cloud(&path);
            let _ = read_mesh(&path);
        }));
        assert!(outcome.is_ok(), "fuzz case {case} panicked");
    }

    println!("acceptance criterion 8 (I/O round-trips + 1000 fuzz cases): PASS");
}
