//! Command-line entry point for the instantiation pipeline.
//!
//! Exit codes: 0 success, 1 runtime/configuration failure, 2 usage errors
//! (including an invalid experiment config file).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::rc::Rc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use instanet::io::config::ExperimentConfig;
use instanet::io::pgm::Image;
use instanet::io::{checkpoint, hierarchy, off, pgm};
use instanet::model::ModelParams;
use instanet::sampling::build_hierarchy;
use instanet::synthetic;
use instanet::train::{run_fold, DatasetPair, FoldResult};
use instanet::{Error, Result, Tensor};

#[derive(Parser)]
#[command(name = "instanet", version, about = "3D mesh instantiation from a single 2D image")]
struct Cli {
    /// Experiment config file (flat key=value); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's output directory (also: INSTANET_OUTPUT_DIR).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic deforming-shape cycle dataset.
    GenerateData {
        #[arg(long)]
        seed: u64,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Leave-one-out training over the dataset; one checkpoint per fold.
    Train {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        force: bool,
        /// Run a single fold instead of all of them.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Evaluate a fold checkpoint on every frame of the dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
    },
    /// Reconstruct a mesh from one image.
    Infer {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        hierarchy: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Finite-difference verification of every differentiable operation.
    Gradcheck,
    /// Spectral-filter and Laplacian oracle suites.
    OracleCheck,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run(cli, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Ok(dir) = std::env::var("INSTANET_OUTPUT_DIR") {
        cfg.output_dir = PathBuf::from(dir);
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli, cfg: ExperimentConfig) -> Result<()> {
    match cli.cmd {
        Cmd::GenerateData { seed, force } => generate_data(&cfg, seed, force),
        Cmd::Train { seed, force, fold } => train_cmd(&cfg, seed, force, fold),
        Cmd::Eval {
            checkpoint,
            hierarchy,
        } => eval_cmd(&cfg, &checkpoint, &hierarchy),
        Cmd::Infer {
            image,
            checkpoint,
            hierarchy,
            output,
            force,
        } => infer_cmd(&cfg, &image, &checkpoint, &hierarchy, &output, force),
        Cmd::Gradcheck => gradcheck_cmd(),
        Cmd::OracleCheck => oracle_check_cmd(),
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn generate_data(cfg: &ExperimentConfig, seed: u64, force: bool) -> Result<()> {
    let dir = &cfg.dataset_dir;
    let manifest_path = dir.join("manifest.txt");
    if manifest_path.exists() && !force {
        eprintln!(
            "dataset manifest {} already exists; skipping (use --force to regenerate)",
            manifest_path.display()
        );
        return Ok(());
    }
    let spec = cfg.shape_spec();
    let dataset = synthetic::generate_dataset::<f64>(&spec, seed)?;

    let mut manifest = String::new();
    manifest.push_str(&format!(
        "seed {seed}\nframes {}\nsubdivision {}\nscale_amplitude {}\nbulge_amplitude {}\n\
         noise_sigma {}\nimage {}x{}\nfrustum_half_width {}\n",
        spec.frames,
        spec.subdivision,
        spec.scale_amplitude,
        spec.bulge_amplitude,
        spec.noise_sigma,
        spec.image_height,
        spec.image_width,
        spec.frustum_half_width,
    ));
    for pair in &dataset {
        let off_path = dir.join(format!("frame_{}.off", pair.frame_index));
        let pgm_path = dir.join(format!("frame_{}.pgm", pair.frame_index));
        off::write_off(&pair.mesh, &off_path)?;
        let img = Image {
            height: pair.height,
            width: pair.width,
            pixels: pair.image.clone(),
        };
        pgm::write_pgm(&img, 65535, &pgm_path)?;
        manifest.push_str(&format!(
            "sha256 frame_{}.off {}\n",
            pair.frame_index,
            sha256_file(&off_path)?
        ));
        manifest.push_str(&format!(
            "sha256 frame_{}.pgm {}\n",
            pair.frame_index,
            sha256_file(&pgm_path)?
        ));
    }
    instanet::io::atomic_write(&manifest_path, manifest.as_bytes())?;
    eprintln!("wrote {} frames to {}", dataset.len(), dir.display());
    Ok(())
}

fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<DatasetPair<f64>>> {
    let dir = &cfg.dataset_dir;
    let mut out = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let mesh = off::parse_off(&dir.join(format!("frame_{t}.off")))?;
        let img: Image<f64> = pgm::parse_pgm(&dir.join(format!("frame_{t}.pgm")))?;
        if img.height != cfg.image_height || img.width != cfg.image_width {
            return Err(Error::config(format!(
                "frame {t} image is {}x{}, config says {}x{}",
                img.height, img.width, cfg.image_height, cfg.image_width
            )));
        }
        out.push(DatasetPair {
            image: img.pixels,
            height: img.height,
            width: img.width,
            mesh,
            frame_index: t,
        });
    }
    Ok(out)
}

fn thread_count() -> usize {
    std::env::var("INSTANET_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .max(1)
}

fn train_cmd(cfg: &ExperimentConfig, seed: u64, force: bool, fold: Option<usize>) -> Result<()> {
    let out_dir = &cfg.output_dir;
    let csv_path = out_dir.join("folds.csv");
    if csv_path.exists() && !force {
        eprintln!(
            "{} already exists; skipping training (use --force to retrain)",
            csv_path.display()
        );
        return Ok(());
    }
    let dataset = load_dataset(cfg)?;
    if dataset.len() < 3 {
        return Err(Error::config("leave-one-out needs at least 3 frames"));
    }
    let model_config = cfg.model_config();
    let train_config = cfg.train_config(seed);

    // persist the hierarchy sidecar so eval/infer can reload it
    std::fs::create_dir_all(out_dir)?;
    let h = build_hierarchy(&dataset[0].mesh, model_config.stride, 4)?;
    hierarchy::save(&h, &out_dir.join("hierarchy.txt"))?;
    drop(h);

    let folds: Vec<usize> = match fold {
        Some(k) => {
            if k >= dataset.len() {
                return Err(Error::config(format!(
                    "fold {k} out of range for {} frames",
                    dataset.len()
                )));
            }
            vec![k]
        }
        None => (0..dataset.len()).collect(),
    };

    let threads = thread_count().min(folds.len());
    let mut results: Vec<FoldResult> = if threads <= 1 {
        folds
            .iter()
            .map(|&held| {
                eprintln!("fold {held}: training on {} frames", dataset.len() - 1);
                run_fold(&dataset, held, &model_config, &train_config, Some(out_dir))
            })
            .collect::<Result<_>>()?
    } else {
        let chunks: Vec<Vec<usize>> = (0..threads)
            .map(|t| folds.iter().copied().skip(t).step_by(threads).collect())
            .collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .into_iter()
                .map(|chunk| {
                    let dataset = &dataset;
                    let model_config = &model_config;
                    let train_config = &train_config;
                    scope.spawn(move || {
                        chunk
                            .into_iter()
                            .map(|held| {
                                run_fold(dataset, held, model_config, train_config, Some(out_dir))
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                })
                .collect();
            let mut all = Vec::new();
            for h in handles {
                all.extend(h.join().expect("fold thread panicked")?);
            }
            Ok::<_, Error>(all)
        })?
    };
    results.sort_by_key(|r| r.fold_index);

    let mut csv = String::from("fold_index,frames_trained,final_l1,distance_error_mm,wall_seconds\n");
    for r in &results {
        csv.push_str(&format!(
            "{},{},{:.17e},{:.17e},{:.3}\n",
            r.fold_index, r.frames_trained, r.final_l1, r.distance_error, r.wall_seconds
        ));
        eprintln!(
            "fold {}: distance error {:.4} (baseline {:.4}), final L1 {:.6}",
            r.fold_index, r.distance_error, r.baseline_error, r.final_l1
        );
    }
    instanet::io::atomic_write(&csv_path, csv.as_bytes())?;
    let mean = results.iter().map(|r| r.distance_error).sum::<f64>() / results.len() as f64;
    let mean_base = results.iter().map(|r| r.baseline_error).sum::<f64>() / results.len() as f64;
    eprintln!("mean distance error {mean:.4} vs mean-shape baseline {mean_base:.4}");
    Ok(())
}

fn restore_model(
    cfg: &ExperimentConfig,
    ckpt_path: &Path,
    hier_path: &Path,
) -> Result<(ModelParams<f64>, checkpoint::Checkpoint)> {
    let ckpt = checkpoint::load(ckpt_path)?;
    let (h, sidecar_hash) = hierarchy::load_any::<f64>(hier_path)?;
    match ckpt.meta.get("template_sha256") {
        Some(stored) if *stored == sidecar_hash => {}
        Some(stored) => {
            return Err(Error::config(format!(
                "checkpoint was trained against template {stored} but the \
                 hierarchy sidecar carries {sidecar_hash}"
            )));
        }
        None => return Err(Error::config("checkpoint lacks a template hash")),
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let model = ModelParams::init(&cfg.model_config(), Rc::new(h), &mut rng)?;
    let mut entries = model.named_parameters();
    entries.extend(model.named_states());
    checkpoint::restore_into(&ckpt, &entries)?;
    Ok((model, ckpt))
}

fn eval_cmd(cfg: &ExperimentConfig, ckpt_path: &Path, hier_path: &Path) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let (model, _) = restore_model(cfg, ckpt_path, hier_path)?;
    let mut total = 0.0;
    println!("frame,distance_error_mm");
    for pair in &dataset {
        let pred = model.infer_mesh(&pair.image_tensor())?;
        let err = instanet::train::distance_error(&pred.coords_flat(), &pair.mesh.coords_flat())?;
        println!("{},{err:.6}", pair.frame_index);
        total += err;
    }
    println!("mean,{:.6}", total / dataset.len() as f64);
    Ok(())
}

fn infer_cmd(
    cfg: &ExperimentConfig,
    image: &Path,
    ckpt_path: &Path,
    hier_path: &Path,
    output: &Path,
    force: bool,
) -> Result<()> {
    if output.exists() && !force {
        eprintln!(
            "{} already exists; skipping (use --force to overwrite)",
            output.display()
        );
        return Ok(());
    }
    let (model, _) = restore_model(cfg, ckpt_path, hier_path)?;
    let img: Image<f64> = pgm::parse_pgm(image)?;
    let tensor = Tensor::from_vec(&[img.height, img.width, 1], img.pixels)?;
    let start = Instant::now();
    let mesh = model.infer_mesh(&tensor)?;
    let elapsed = start.elapsed().as_secs_f64();
    off::write_off(&mesh, output)?;
    eprintln!("inference took {elapsed:.3} s; wrote {}", output.display());
    Ok(())
}

fn report(name: &str, value: f64, tol: f64) -> bool {
    let ok = value < tol;
    println!(
        "{name}: max rel err {value:.3e} (tol {tol:.0e}) {}",
        if ok { "PASS" } else { "FAIL" }
    );
    ok
}

fn gradcheck_cmd() -> Result<()> {
    use instanet::gradcheck::{check_gradients, max_rel_err};
    use instanet::tensor::nn::{batch_norm, conv2d, pool2d, BatchNormState, Padding, PoolMode};
    use instanet::tensor::ops;

    let mut rng = ChaCha8Rng::seed_from_u64(0x6ead);
    let mut rand_tensor = |shape: &[usize]| {
        use rand::Rng;
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::from_vec(shape, data).unwrap()
    };
    let all_picks = |params: &[(String, Tensor)]| -> Vec<(usize, usize)> {
        params
            .iter()
            .enumerate()
            .flat_map(|(ti, (_, t))| (0..t.numel()).map(move |ei| (ti, ei)))
            .collect()
    };
    let mut ok = true;

    {
        let input = rand_tensor(&[1, 4, 4, 2]).requires_grad(true);
        let kernel = rand_tensor(&[2, 3, 3, 2]).requires_grad(true);
        let params = vec![("input".into(), input.clone()), ("kernel".into(), kernel.clone())];
        let entries = check_gradients(&params, &all_picks(&params), 1e-5, |tape| {
            let y = conv2d(tape, &input, &kernel, 1, Padding::Same).unwrap();
            ops::sum_all(tape, &y)
        });
        ok &= report("conv2d", max_rel_err(&entries), 1e-4);
    }
    {
        let input = rand_tensor(&[1, 4, 4, 1]).requires_grad(true);
        let params = vec![("input".into(), input.clone())];
        let entries = check_gradients(&params, &all_picks(&params), 1e-5, |tape| {
            let y = pool2d(tape, &input, 2, PoolMode::Average).unwrap();
            let w = Tensor::from_vec(&y.shape(), (0..4).map(|i| 1.0 + i as f64).collect()).unwrap();
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        ok &= report("pool2d-average", max_rel_err(&entries), 1e-4);
    }
    {
        let input = rand_tensor(&[1, 3, 3, 2]).requires_grad(true);
        let gamma = rand_tensor(&[2]).requires_grad(true);
        let beta = rand_tensor(&[2]).requires_grad(true);
        let params = vec![
            ("input".into(), input.clone()),
            ("gamma".into(), gamma.clone()),
            ("beta".into(), beta.clone()),
        ];
        let entries = check_gradients(&params, &all_picks(&params), 1e-5, |tape| {
            let state = BatchNormState::new(2);
            let y = batch_norm(tape, &input, &gamma, &beta, &state, 1e-5, 0.9, true).unwrap();
            let w = Tensor::from_vec(
                &y.shape(),
                (0..y.numel()).map(|i| ((i * 5 % 11) as f64) - 5.0).collect(),
            )
            .unwrap();
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        ok &= report("batch_norm", max_rel_err(&entries), 1e-4);
    }
    {
        let x = rand_tensor(&[1, 6]).requires_grad(true);
        let w = rand_tensor(&[6, 3]).requires_grad(true);
        let b = rand_tensor(&[3]).requires_grad(true);
        let truth = rand_tensor(&[1, 3]);
        let params = vec![
            ("x".into(), x.clone()),
            ("w".into(), w.clone()),
            ("b".into(), b.clone()),
        ];
        let entries = check_gradients(&params, &all_picks(&params), 1e-5, |tape| {
            let y = ops::fully_connected(tape, &x, &w, &b).unwrap();
            let y = ops::relu(tape, &y);
            ops::l1_loss(tape, &y, &truth).unwrap()
        });
        ok &= report("fully_connected+relu+l1", max_rel_err(&entries), 1e-4);
    }
    {
        use instanet::spectral::{ChebConvLayer, LaplacianBundle};
        let adj = instanet::spectral::random_connected_adjacency::<f64, _>(&mut ChaCha8Rng::seed_from_u64(5), 9, 6);
        let bundle = LaplacianBundle::from_adjacency(&adj)?;
        let theta = rand_tensor(&[3, 2, 2]).requires_grad(true);
        let bias = rand_tensor(&[2]).requires_grad(true);
        let v = rand_tensor(&[9, 2]).requires_grad(true);
        let layer = ChebConvLayer::new(theta.clone(), bias.clone())?;
        let params = vec![
            ("theta".into(), theta),
            ("bias".into(), bias),
            ("v".into(), v.clone()),
        ];
        let entries = check_gradients(&params, &all_picks(&params), 1e-5, |tape| {
            let y = instanet::spectral::cheb_conv(tape, &layer, &bundle, &v).unwrap();
            ops::sum_all(tape, &y)
        });
        ok &= report("cheb_conv", max_rel_err(&entries), 1e-4);
    }
    {
        let q = Rc::new(instanet::Csr::from_triplets(
            3,
            2,
            &[(0, 0, 1.0), (1, 0, 0.5), (1, 1, 0.5), (2, 1, 1.0)],
        )?);
        let f = rand_tensor(&[2, 2]).requires_grad(true);
        let w = rand_tensor(&[3, 2]);
        let params = vec![("f".into(), f.clone())];
        let entries = check_gradients(&params, &all_picks(&params), 1e-5, |tape| {
            let y = instanet::sampling::upsample(tape, &q, &f).unwrap();
            let p = ops::mul(tape, &y, &w).unwrap();
            ops::sum_all(tape, &p)
        });
        ok &= report("upsample", max_rel_err(&entries), 1e-4);
    }

    if ok {
        Ok(())
    } else {
        Err(Error::Autodiff("gradient check suite failed".into()))
    }
}

fn oracle_check_cmd() -> Result<()> {
    use instanet::spectral::{
        cheb_conv, eigendecompose, spectral_filter_exact, ChebConvLayer, LaplacianBundle,
        random_connected_adjacency,
    };
    use instanet::tensor::Tape;
    use rand::Rng;

    let mut ok = true;
    let mut rng = ChaCha8Rng::seed_from_u64(0x0_2ac1e);

    // Chebyshev filtering vs dense eigendecomposition on random graphs
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let m = rng.random_range(6..=50);
        let k = [1usize, 2, 3, 5][trial % 4];
        let fin = 2;
        let adj = random_connected_adjacency::<f64, _>(&mut rng, m, m / 2);
        let bundle = LaplacianBundle::from_adjacency(&adj)?;
        let theta_data: Vec<f64> = (0..k * fin).map(|_| rng.random_range(-1.0..1.0)).collect();
        let theta = Tensor::from_vec(&[k, fin, 1], theta_data.clone())?;
        let bias = Tensor::zeros(&[1]);
        let layer = ChebConvLayer::new(theta, bias)?;
        let v_data: Vec<f64> = (0..m * fin).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = Tensor::from_vec(&[m, fin], v_data.clone())?;

        let tape = Tape::inference();
        let got = cheb_conv(&tape, &layer, &bundle, &v)?.to_vec();

        let (u, lambda) = eigendecompose(bundle.laplacian())?;
        let mut expect = vec![0.0; m];
        for c in 0..fin {
            let col: Vec<f64> = (0..m).map(|r| v_data[r * fin + c]).collect();
            let theta_c: Vec<f64> = (0..k).map(|j| theta_data[j * fin + c]).collect();
            let f = spectral_filter_exact(&u, &lambda, bundle.lambda_max(), &col, 1, &theta_c)?;
            for r in 0..m {
                expect[r] += f[r];
            }
        }
        for r in 0..m {
            worst = worst.max((got[r] - expect[r]).abs());
        }
    }
    ok &= {
        let pass = worst < 1e-8;
        println!(
            "spectral oracle: max |cheb - exact| {worst:.3e} (tol 1e-8) {}",
            if pass { "PASS" } else { "FAIL" }
        );
        pass
    };

    // Laplacian exactness
    let tri = instanet::mesh::MeshBase::<f64>::new(
        vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        vec![[0, 1, 2]],
    )?;
    let bundle = LaplacianBundle::from_mesh(&tri)?;
    let dense = bundle.laplacian().to_dense();
    let expect = [2.0, -1.0, -1.0, -1.0, 2.0, -1.0, -1.0, -1.0, 2.0];
    let tri_ok = dense == expect;
    println!(
        "triangle Laplacian exact: {}",
        if tri_ok { "PASS" } else { "FAIL" }
    );
    ok &= tri_ok;

    let mut rows_ok = true;
    let mut scaled_ok = true;
    for _ in 0..50 {
        let m = rng.random_range(4..=30);
        let adj = random_connected_adjacency::<f64, _>(&mut rng, m, m / 3);
        let bundle = LaplacianBundle::from_adjacency(&adj)?;
        for s in bundle.laplacian().row_sums() {
            rows_ok &= s == 0.0;
        }
        let ones = vec![1.0; m];
        for s in bundle.scaled().matvec(&ones) {
            scaled_ok &= (s + 1.0).abs() < 1e-9;
        }
    }
    println!(
        "Laplacian row sums exactly 0: {}",
        if rows_ok { "PASS" } else { "FAIL" }
    );
    println!(
        "scaled Laplacian maps 1 to -1 within 1e-9: {}",
        if scaled_ok { "PASS" } else { "FAIL" }
    );
    ok &= rows_ok && scaled_ok;

    if ok {
        Ok(())
    } else {
        Err(Error::Config("oracle suite failed".into()))
    }
}
