//! Acceptance gate: every release criterion in one ordered run, printing one
//! PASS/FAIL line per criterion. The training criteria (7-10) retrain models
//! from scratch on a single core, so the full gate takes on the order of an
//! hour; the numeric criteria (1-6) finish in seconds.
//!
//! Run with `cargo test --test acceptance -- --nocapture`.

use std::rc::Rc;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use instanet::encoder::EncoderConfig;
use instanet::gradcheck::{check_gradients, max_rel_err};
use instanet::mesh::{icosphere, torus, MeshBase};
use instanet::model::{ModelConfig, ModelParams};
use instanet::sampling::{build_hierarchy, closest_point_barycentric, qem_simplify, upsample};
use instanet::spectral::{
    cheb_conv, eigendecompose, random_connected_adjacency, spectral_filter_exact, ChebConvLayer,
    LaplacianBundle,
};
use instanet::synthetic::{frame_mesh, generate_dataset, render_projection, ShapeCycleSpec};
use instanet::tensor::nn::{batch_norm, conv2d, pool2d, BatchNormState, Padding, PoolMode};
use instanet::tensor::ops;
use instanet::train::{leave_one_out, train, DatasetPair, TrainConfig};
use instanet::{Csr, Tape, Tensor};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn record(&mut self, number: u32, name: &str, detail: String, pass: bool) {
        println!(
            "criterion {number} ({name}): {detail} {}",
            if pass { "PASS" } else { "FAIL" }
        );
        if !pass {
            self.failures.push(format!("criterion {number} ({name}): {detail}"));
        }
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Random values bounded away from zero so ReLU kinks and L1 ties stay out
/// of reach of the finite-difference probe.
fn rand_tensor_away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| {
            let sign = if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
            sign * rng.random_range(0.2..1.0)
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn all_picks(params: &[(String, Tensor)]) -> Vec<(usize, usize)> {
    params
        .iter()
        .enumerate()
        .flat_map(|(ti, (_, t))| (0..t.numel()).map(move |ei| (ti, ei)))
        .collect()
}

// ---------------------------------------------------------------- criterion 1

fn criterion_1(gate: &mut Gate) {
    const TOL: f64 = 1e-4;
    const H: f64 = 1e-5;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0001);
    let mut worst: f64 = 0.0;

    // conv2d
    for trial in 0..10 {
        let input = rand_tensor(&mut rng, &[1, 4, 4, 2]).requires_grad(true);
        let kernel = rand_tensor(&mut rng, &[2, 3, 3, 2]).requires_grad(true);
        let padding = if trial % 2 == 0 { Padding::Valid } else { Padding::Same };
        let params = vec![("input".into(), input.clone()), ("kernel".into(), kernel.clone())];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let y = conv2d(tape, &input, &kernel, 1 + trial % 2, padding).unwrap();
            ops::sum_all(tape, &y)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // pool2d, average mode
    for _ in 0..10 {
        let input = rand_tensor(&mut rng, &[1, 6, 6, 2]).requires_grad(true);
        let w = rand_tensor(&mut rng, &[1, 2, 2, 2]);
        let params = vec![("input".into(), input.clone())];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let y = pool2d(tape, &input, 3, PoolMode::Average).unwrap();
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // batch_norm (training mode, batch statistics)
    for _ in 0..10 {
        let input = rand_tensor(&mut rng, &[1, 3, 3, 2]).requires_grad(true);
        let gamma = rand_tensor(&mut rng, &[2]).requires_grad(true);
        let beta = rand_tensor(&mut rng, &[2]).requires_grad(true);
        let w = rand_tensor(&mut rng, &[1, 3, 3, 2]);
        let params = vec![
            ("input".into(), input.clone()),
            ("gamma".into(), gamma.clone()),
            ("beta".into(), beta.clone()),
        ];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let state = BatchNormState::new(2);
            let y = batch_norm(tape, &input, &gamma, &beta, &state, 1e-5, 0.9, true).unwrap();
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // relu away from 0
    for _ in 0..10 {
        let input = rand_tensor_away_from_zero(&mut rng, &[3, 5]).requires_grad(true);
        let w = rand_tensor(&mut rng, &[3, 5]);
        let params = vec![("input".into(), input.clone())];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let y = ops::relu(tape, &input);
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // fully_connected
    for _ in 0..10 {
        let x = rand_tensor(&mut rng, &[1, 8]).requires_grad(true);
        let w = rand_tensor(&mut rng, &[8, 4]).requires_grad(true);
        let b = rand_tensor(&mut rng, &[4]).requires_grad(true);
        let scale = rand_tensor(&mut rng, &[1, 4]);
        let params = vec![
            ("x".into(), x.clone()),
            ("w".into(), w.clone()),
            ("b".into(), b.clone()),
        ];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let y = ops::fully_connected(tape, &x, &w, &b).unwrap();
            let p = ops::mul(tape, &y, &scale).unwrap();
            ops::sum_all(tape, &p)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // cheb_conv over random connected graphs, K cycling 1/2/3/5
    for trial in 0..10 {
        let m = rng.random_range(5..12);
        let k = [1usize, 2, 3, 5][trial % 4];
        let adj = random_connected_adjacency::<f64, _>(&mut rng, m, m / 2);
        let bundle = LaplacianBundle::from_adjacency(&adj).unwrap();
        let theta = rand_tensor(&mut rng, &[k, 2, 2]).requires_grad(true);
        let bias = rand_tensor(&mut rng, &[2]).requires_grad(true);
        let v = rand_tensor(&mut rng, &[m, 2]).requires_grad(true);
        let layer = ChebConvLayer::new(theta.clone(), bias.clone()).unwrap();
        let params = vec![
            ("theta".into(), theta),
            ("bias".into(), bias),
            ("v".into(), v.clone()),
        ];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let y = cheb_conv(tape, &layer, &bundle, &v).unwrap();
            ops::sum_all(tape, &y)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // upsample through a barycentric-style sparse map
    for _ in 0..10 {
        let q = Rc::new(
            Csr::from_triplets(
                4,
                3,
                &[
                    (0, 0, 1.0),
                    (1, 0, rng.random_range(0.1..0.9)),
                    (1, 1, rng.random_range(0.1..0.9)),
                    (2, 1, 1.0),
                    (3, 1, rng.random_range(0.1..0.5)),
                    (3, 2, rng.random_range(0.1..0.5)),
                ],
            )
            .unwrap(),
        );
        let f = rand_tensor(&mut rng, &[3, 2]).requires_grad(true);
        let w = rand_tensor(&mut rng, &[4, 2]);
        let params = vec![("f".into(), f.clone())];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            let y = upsample(tape, &q, &f).unwrap();
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // l1_loss away from ties: |pred - truth| >= 0.3 everywhere
    for _ in 0..10 {
        let pred = rand_tensor(&mut rng, &[4, 3]).requires_grad(true);
        let offset = rand_tensor_away_from_zero(&mut rng, &[4, 3]);
        let truth_data: Vec<f64> = pred
            .to_vec()
            .iter()
            .zip(offset.to_vec())
            .map(|(p, o)| p + o.signum() * (0.3 + o.abs()))
            .collect();
        let truth = Tensor::from_vec(&[4, 3], truth_data).unwrap();
        let params = vec![("pred".into(), pred.clone())];
        let entries = check_gradients(&params, &all_picks(&params), H, |tape| {
            ops::l1_loss(tape, &pred, &truth).unwrap()
        });
        worst = worst.max(max_rel_err(&entries));
    }

    // end-to-end chain: image -> encoder -> bridge -> decoder -> L1
    {
        let mesh = icosphere::<f64>(2, 1.0);
        let h = Rc::new(build_hierarchy(&mesh, 3, 4).unwrap());
        let p = ModelParams::init(&ModelConfig::desk(), h, &mut rng).unwrap();
        let img = rand_tensor(&mut rng, &[64, 64, 1]);
        let truth = rand_tensor(&mut rng, &[162, 3]);
        let params = p.named_parameters();
        let step = params.len() / 10;
        let picks: Vec<(usize, usize)> = (0..10)
            .map(|i| {
                let ti = i * step;
                (ti, params[ti].1.numel() / 3)
            })
            .collect();
        let entries = check_gradients(&params, &picks, H, |tape| {
            let y = p.forward(tape, &img, true).unwrap();
            ops::l1_loss(tape, &y, &truth).unwrap()
        });
        worst = worst.max(max_rel_err(&entries));
    }

    let secs = start.elapsed().as_secs_f64();
    gate.record(
        1,
        "gradient integrity",
        format!("max rel err {worst:.3e} (tol {TOL:.0e}), {secs:.1}s (budget 120s)"),
        worst < TOL && secs < 120.0,
    );
}

// ---------------------------------------------------------------- criterion 2

fn criterion_2(gate: &mut Gate) {
    const TOL: f64 = 1e-8;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0002);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let m = rng.random_range(6..=50);
        let k = [1usize, 2, 3, 5][trial % 4];
        let fin = 2;
        let adj = random_connected_adjacency::<f64, _>(&mut rng, m, m / 2);
        let bundle = LaplacianBundle::from_adjacency(&adj).unwrap();
        let theta_data: Vec<f64> = (0..k * fin).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta = Tensor::from_vec(&[k, fin, 1], theta_data.clone()).unwrap();
        let layer = ChebConvLayer::new(theta, Tensor::zeros(&[1])).unwrap();
        let v_data: Vec<f64> = (0..m * fin).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = Tensor::from_vec(&[m, fin], v_data.clone()).unwrap();

        let tape = Tape::inference();
        let got = cheb_conv(&tape, &layer, &bundle, &v).unwrap().to_vec();

        let (u, lambda) = eigendecompose(bundle.laplacian()).unwrap();
        let mut expect = vec![0.0; m];
        for c in 0..fin {
            let col: Vec<f64> = (0..m).map(|r| v_data[r * fin + c]).collect();
            let theta_c: Vec<f64> = (0..k).map(|j| theta_data[j * fin + c]).collect();
            let f = spectral_filter_exact(&u, &lambda, bundle.lambda_max(), &col, 1, &theta_c)
                .unwrap();
            for r in 0..m {
                expect[r] += f[r];
            }
        }
        for r in 0..m {
            worst = worst.max((got[r] - expect[r]).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    gate.record(
        2,
        "spectral oracle equivalence",
        format!("max |cheb_conv - exact| {worst:.3e} (tol {TOL:.0e}), {secs:.1}s (budget 30s)"),
        worst < TOL && secs < 30.0,
    );
}

// ---------------------------------------------------------------- criterion 3

/// Random genuine meshes: deterministically perturbed icospheres simplified
/// to random vertex counts (so faces and irregular valences vary per trial).
fn random_mesh(rng: &mut ChaCha8Rng) -> MeshBase<f64> {
    let base = icosphere::<f64>(1, 1.0);
    let verts: Vec<[f64; 3]> = base
        .vertices()
        .iter()
        .map(|v| {
            [
                v[0] + rng.random_range(-0.01..0.01),
                v[1] + rng.random_range(-0.01..0.01),
                v[2] + rng.random_range(-0.01..0.01),
            ]
        })
        .collect();
    let jittered = base.with_vertices(verts).unwrap();
    let target = rng.random_range(6..=42);
    qem_simplify(&jittered, target).unwrap().mesh
}

fn criterion_3(gate: &mut Gate) {
    let tri = MeshBase::<f64>::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let bundle = LaplacianBundle::from_mesh(&tri).unwrap();
    let triangle_ok =
        bundle.laplacian().to_dense() == [2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0];

    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0003);
    let mut rows_ok = true;
    let mut scaled_worst: f64 = 0.0;
    for _ in 0..50 {
        let mesh = random_mesh(&mut rng);
        let bundle = LaplacianBundle::from_mesh(&mesh).unwrap();
        for s in bundle.laplacian().row_sums() {
            rows_ok &= s == 0.0;
        }
        let ones = vec![1.0; mesh.vertex_count()];
        for s in bundle.scaled().matvec(&ones) {
            scaled_worst = scaled_worst.max((s + 1.0).abs());
        }
    }
    gate.record(
        3,
        "Laplacian exactness",
        format!(
            "triangle exact: {triangle_ok}; row sums exactly 0 on 50 meshes: {rows_ok}; \
             max |L~.1 + 1| {scaled_worst:.3e} (tol 1e-9)"
        ),
        triangle_ok && rows_ok && scaled_worst < 1e-9,
    );
}

// ---------------------------------------------------------------- criterion 4

fn criterion_4(gate: &mut Gate) {
    let h162 = build_hierarchy(&icosphere::<f64>(2, 1.0), 3, 4).unwrap();
    let h642 = build_hierarchy(&icosphere::<f64>(3, 1.0), 4, 4).unwrap();
    let counts_ok = h162.level_counts() == vec![162, 54, 18, 6, 2]
        && h642.level_counts() == vec![642, 161, 41, 11, 3];

    // up-map rows: nonnegative barycentric weights summing to 1
    let mut rows_ok = true;
    for h in [&h162, &h642] {
        for l in 0..4 {
            let q = h.up_map(l);
            for r in 0..q.rows() {
                let (_, vals) = q.row(r);
                let sum: f64 = vals.iter().sum();
                rows_ok &= (sum - 1.0).abs() < 1e-12;
                rows_ok &= vals.iter().all(|&v| v >= 0.0);
            }
        }
    }

    // retained-vertex round trip: up(down(fine coords)) is bitwise identical
    // at every vertex the down-map selected
    let mut round_trip_ok = true;
    for h in [&h162, &h642] {
        for l in 0..4 {
            let fine = h.levels()[l].coords_flat();
            let coarse = h.down_map(l).mat_features(&fine, 3);
            let back = h.up_map(l).mat_features(&coarse, 3);
            for (_, fine_i, _) in h.down_map(l).triplets() {
                for k in 0..3 {
                    round_trip_ok &= back[fine_i * 3 + k] == fine[fine_i * 3 + k];
                }
            }
        }
    }

    // planted on-triangle vertex: a point placed exactly on a coarse face
    // projects onto barycentric weights that reconstruct it
    let coarse = &h162.levels()[1];
    let f = coarse.faces()[7];
    let (a, b, c) = (
        coarse.vertices()[f[0]],
        coarse.vertices()[f[1]],
        coarse.vertices()[f[2]],
    );
    let planted = [
        0.2 * a[0] + 0.3 * b[0] + 0.5 * c[0],
        0.2 * a[1] + 0.3 * b[1] + 0.5 * c[1],
        0.2 * a[2] + 0.3 * b[2] + 0.5 * c[2],
    ];
    // scan all coarse faces for the closest point, exactly as the up-map
    // construction does (ties broken by lowest face index)
    let mut best: Option<(f64, [f64; 3], [usize; 3])> = None;
    for face in coarse.faces() {
        let (bary, d2) = closest_point_barycentric(
            planted,
            coarse.vertices()[face[0]],
            coarse.vertices()[face[1]],
            coarse.vertices()[face[2]],
        );
        if best.map_or(true, |(bd, _, _)| d2 < bd) {
            best = Some((d2, bary, *face));
        }
    }
    let (_, bary, face) = best.unwrap();
    let mut rec = [0.0f64; 3];
    for (w, vi) in bary.iter().zip(face) {
        for k in 0..3 {
            rec[k] += w * coarse.vertices()[vi][k];
        }
    }
    let planted_err = (0..3)
        .map(|k| (rec[k] - planted[k]).abs())
        .fold(0.0f64, f64::max);

    gate.record(
        4,
        "sampling hierarchy",
        format!(
            "ceil chains: {counts_ok}; barycentric rows: {rows_ok}; retained round trip exact: \
             {round_trip_ok}; planted vertex err {planted_err:.3e} (tol 1e-10)"
        ),
        counts_ok && rows_ok && round_trip_ok && planted_err < 1e-10,
    );
}

// ---------------------------------------------------------------- criterion 5

fn criterion_5(gate: &mut Gate) {
    let config = ModelConfig::full_scale();
    let mesh = torus::<f64>(32, 32, 1.0, 0.4); // M = 1024
    let h = Rc::new(build_hierarchy(&mesh, 4, 4).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce_0005);
    let model = ModelParams::init(&config, Rc::clone(&h), &mut rng).unwrap();

    // encoder feature volume on a 192x256 input
    let enc = EncoderConfig::full_scale();
    let volume_ok = enc.input_height == 192
        && enc.input_width == 256
        && enc.output_spatial() == (6, 8)
        && enc.output_channels() == 1024;

    // bridge: 6*8*1024 features -> 8 -> (M / 4^4) * 64
    let m4 = 1024 / 4usize.pow(4);
    let bridge_ok = model.fc1_w.shape() == vec![6 * 8 * 1024, 8]
        && model.fc2_w.shape() == vec![8, m4 * 64];

    // four-stage decoder chain over the ceil hierarchy, ending at M x 3
    let chain_ok = h.level_counts() == vec![1024, 256, 64, 16, 4];
    let img = Tensor::from_vec(
        &[192, 256, 1],
        (0..192 * 256).map(|i| (i % 509) as f64 / 509.0).collect(),
    )
    .unwrap();
    let tape = Tape::inference();
    let out = model.forward(&tape, &img, false).unwrap();
    let forward_ok = out.shape() == vec![1024, 3];

    gate.record(
        5,
        "shape contract",
        format!(
            "encoder [1,6,8,1024]: {volume_ok}; bridge 49152->8->{}: {bridge_ok}; \
             chain 1024/256/64/16/4 -> 1024x3: {}",
            m4 * 64,
            chain_ok && forward_ok
        ),
        volume_ok && bridge_ok && chain_ok && forward_ok,
    );
}

// ---------------------------------------------------------------- criterion 6

fn criterion_6(gate: &mut Gate) {
    let mut worst: f64 = 0.0;
    let mut lr0_ok = true;
    for m in [7usize, 20, 33] {
        let cfg = TrainConfig::defaults(m, 0);
        lr0_ok &= cfg.learning_rate(0) == 5e-3;
        worst = worst.max((cfg.learning_rate(5 * m) - 4.85e-3).abs());
        worst = worst.max((cfg.learning_rate(10 * m) - 4.7045e-3).abs());
    }
    gate.record(
        6,
        "schedule arithmetic",
        format!("lr(0)=5e-3: {lr0_ok}; max |lr - expected| {worst:.3e} (tol 1e-12)"),
        lr0_ok && worst < 1e-12,
    );
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7(gate: &mut Gate) {
    let start = Instant::now();
    let spec = ShapeCycleSpec::default();
    let dataset = generate_dataset::<f64>(&spec, 42).unwrap();
    let h = Rc::new(build_hierarchy(&dataset[0].mesh, 3, 4).unwrap());

    // a wider decoder than the LOO runs use: overfitting a single pair below
    // 1% needs the extra filter-space rank of K=6 plus a 24-wide bridge
    let mut config = ModelConfig::desk();
    config.cheb_order = 6;
    config.bridge_dim = 24;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = ModelParams::init(&config, h, &mut rng).unwrap();

    // two-phase schedule inside the 500-epoch budget: a long flat phase at a
    // large step, then a fast-decaying polish phase
    let phase1 = TrainConfig {
        lr0: 3e-2,
        decay: 1.0 - 1e-12,
        decay_every: 1000,
        momentum: 0.9,
        max_epochs: 380,
        warmup_iters: 0,
        seed: 0,
    };
    let pair = &dataset[3];
    let stats1 = train(&model, &[pair], &phase1, 0).unwrap();
    let phase2 = TrainConfig {
        lr0: 1.5e-2,
        decay: 0.94,
        decay_every: 4,
        momentum: 0.9,
        max_epochs: 120,
        warmup_iters: 0,
        seed: 0,
    };
    let stats2 = train(&model, &[pair], &phase2, 0).unwrap();

    let ratio = stats2.final_l1 / stats1.initial_l1;
    let secs = start.elapsed().as_secs_f64();
    gate.record(
        7,
        "overfit convergence",
        format!(
            "L1 {:.4} -> {:.5} in 500 epochs, ratio {ratio:.5} (bar 0.01), {secs:.0}s (budget 600s)",
            stats1.initial_l1, stats2.final_l1
        ),
        ratio < 0.01 && secs < 600.0,
    );
}

// ----------------------------------------------------------- criteria 8 - 10

/// Model used for the LOO studies: the desk configuration with a higher
/// Chebyshev order and a wider image-to-mesh bridge. The extra capacity keeps
/// per-fold training out of the bad local minima that otherwise dominate the
/// fold-error spread.
fn loo_model() -> ModelConfig {
    let mut config = ModelConfig::desk();
    config.cheb_order = 6;
    config.bridge_dim = 24;
    config
}

/// The criterion-8 cycle: silhouette-visible scaling along x with no bulge.
/// Frames sit half a step off the sine's phase grid so that no held-out frame
/// coincides with the mean of the remaining ones; with on-grid sampling the
/// two zero-crossing frames equal the training mean exactly and the baseline
/// error there is identically zero, which no model can beat.
fn loo_cycle_offset(frames: usize) -> Vec<DatasetPair<f64>> {
    let spec = ShapeCycleSpec {
        scale_axis: Some(0),
        scale_amplitude: 0.35,
        bulge_amplitude: 0.0,
        frames,
        ..ShapeCycleSpec::default()
    };
    (0..frames)
        .map(|t| {
            let mesh = frame_mesh::<f64>(&spec, t as f64 + 0.5).unwrap();
            let image = render_projection(&mesh, &spec).unwrap();
            DatasetPair {
                image,
                height: spec.image_height,
                width: spec.image_width,
                mesh,
                frame_index: t,
            }
        })
        .collect()
}

fn loo_train_config(frames: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        lr0: 1.5e-2,
        decay: 0.97,
        decay_every: 10 * (frames - 1),
        momentum: 0.9,
        max_epochs: 400,
        warmup_iters: 200,
        seed,
    }
}

fn criterion_8(gate: &mut Gate) -> Vec<f64> {
    let start = Instant::now();
    let dataset = loo_cycle_offset(20);
    let report = leave_one_out(&dataset, &loo_model(), &loo_train_config(20, 7)).unwrap();

    let wins = report
        .folds
        .iter()
        .filter(|f| f.distance_error < f.baseline_error)
        .count();
    let improvement = 1.0 - report.mean_error / report.mean_baseline;
    let secs = start.elapsed().as_secs_f64();
    gate.record(
        8,
        "learning beats baseline",
        format!(
            "{wins}/20 folds beat the mean shape (need 16), mean {:.4} vs baseline {:.4} \
             ({:.1}% better, need 20%), {secs:.0}s (budget 7200s)",
            report.mean_error,
            report.mean_baseline,
            100.0 * improvement
        ),
        wins >= 16 && improvement >= 0.20 && secs < 7200.0,
    );
    report.folds.iter().map(|f| f.distance_error).collect()
}

fn criterion_9(gate: &mut Gate) {
    let start = Instant::now();
    let frames = 12;
    let dataset = loo_cycle(frames);
    // sin(2 pi t / 12) peaks at t = 3 and bottoms out at t = 9
    let extremes = [3usize, 9];
    let mut hits = 0;
    for seed in 1u64..=10 {
        let report =
            leave_one_out(&dataset, &ModelConfig::desk(), &loo_train_config(frames, seed))
                .unwrap();
        let mut ranked: Vec<(f64, usize)> = report
            .folds
            .iter()
            .map(|f| (f.distance_error, f.fold_index))
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let mut top2 = [ranked[0].1, ranked[1].1];
        top2.sort_unstable();
        if top2 == extremes {
            hits += 1;
        }
        println!(
            "  criterion 9, seed {seed}: two highest-error folds {{{}, {}}}",
            ranked[0].1, ranked[1].1
        );
    }
    let secs = start.elapsed().as_secs_f64();
    gate.record(
        9,
        "boundary effect",
        format!("extreme-phase folds ranked top-2 in {hits}/10 repetitions (need 7), {secs:.0}s"),
        hits >= 7,
    );
}

fn criterion_10(gate: &mut Gate, first: &[f64]) {
    let dataset = loo_cycle_offset(20);
    let report = leave_one_out(&dataset, &loo_model(), &loo_train_config(20, 7)).unwrap();
    let worst = report
        .folds
        .iter()
        .zip(first)
        .map(|(f, &e)| (f.distance_error - e).abs())
        .fold(0.0f64, f64::max);
    gate.record(
        10,
        "determinism",
        format!("max per-fold error drift across reruns {worst:.3e} (tol 1e-12)"),
        worst <= 1e-12,
    );
}

// --------------------------------------------------------------------- gate

#[test]
fn acceptance_criteria() {
    let mut gate = Gate { failures: Vec::new() };
    criterion_1(&mut gate);
    criterion_2(&mut gate);
    criterion_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    let fold_errors = criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate, &fold_errors);
    assert!(
        gate.failures.is_empty(),
        "acceptance failures:\n{}",
        gate.failures.join("\n")
    );
}
