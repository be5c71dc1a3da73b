//! SGD-with-momentum trainer, step-decay schedule, evaluation metrics, and
//! the leave-one-out cross-validation driver with a mean-shape baseline.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mesh::MeshBase;
use crate::model::{ModelConfig, ModelParams};
use crate::sampling::build_hierarchy;
use crate::scalar::Scalar;
use crate::tensor::{ops, Tape, TensorBase};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay: f64,
    /// Optimizer steps between decay applications (5 x frame count).
    pub decay_every: usize,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Linear learning-rate ramp over the first N steps (0 disables it).
    /// Guards the decoder's ReLU stages against dying in the large swings
    /// of the first few L1 steps.
    pub warmup_iters: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Published constants: lr 5e-3 decayed by 0.97 every 5*M steps,
    /// momentum 0.9, up to 1200 epochs.
    pub fn defaults(m_frames: usize, seed: u64) -> Self {
        TrainConfig {
            lr0: 5e-3,
            decay: 0.97,
            decay_every: 5 * m_frames.max(1),
            momentum: 0.9,
            max_epochs: 1200,
            warmup_iters: 0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr0 <= 0.0 || self.decay_every == 0 || self.max_epochs == 0 {
            return Err(Error::config("learning rate, decay period and epochs must be positive"));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::config("decay must lie in (0, 1)"));
        }
        if self.momentum < 0.0 || self.momentum >= 1.0 {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Right-continuous step schedule: lr0 * decay^(iteration / decay_every),
    /// scaled by the linear warmup ramp while iteration < warmup_iters.
    pub fn learning_rate(&self, iteration: usize) -> f64 {
        let base = self.lr0 * self.decay.powi((iteration / self.decay_every) as i32);
        if iteration < self.warmup_iters {
            base * (iteration + 1) as f64 / self.warmup_iters as f64
        } else {
            base
        }
    }
}

/// One supervised frame: image (flat H*W floats in [0,1]) plus its mesh.
/// Plain buffers so datasets cross thread boundaries freely.
#[derive(Debug, Clone)]
pub struct DatasetPair<S: Scalar> {
    pub image: Vec<S>,
    pub height: usize,
    pub width: usize,
    pub mesh: MeshBase<S>,
    pub frame_index: usize,
}

impl<S: Scalar> DatasetPair<S> {
    pub fn image_tensor(&self) -> TensorBase<S> {
        TensorBase::from_vec(&[self.height, self.width, 1], self.image.clone())
            .expect("image buffer matches dims")
    }

    pub fn target_tensor(&self) -> TensorBase<S> {
        let coords = self.mesh.coords_flat();
        TensorBase::from_vec(&[self.mesh.vertex_count(), 3], coords)
            .expect("mesh coords are M x 3")
    }

    fn digest(&self, hasher: &mut Sha256) {
        hasher.update(self.frame_index.to_le_bytes());
        for v in &self.image {
            hasher.update(v.to_f64_lossy().to_le_bytes());
        }
        for v in self.mesh.coords_flat() {
            hasher.update(v.to_f64_lossy().to_le_bytes());
        }
    }
}

fn checksum_pairs<S: Scalar>(pairs: &[&DatasetPair<S>]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for p in pairs {
        p.digest(&mut hasher);
    }
    hasher.finalize().into()
}

/// Mean 3D distance over vertices (Eq. 13 style), same units as the input.
pub fn distance_error<S: Scalar>(pred: &[S], truth: &[S]) -> Result<S> {
    if pred.len() != truth.len() || pred.len() % 3 != 0 {
        return Err(Error::dim(format!(
            "distance_error: buffers of {} vs {} coords",
            pred.len(),
            truth.len()
        )));
    }
    let m = pred.len() / 3;
    let mut acc = S::zero();
    for v in 0..m {
        let mut d2 = S::zero();
        for k in 0..3 {
            let d = pred[v * 3 + k] - truth[v * 3 + k];
            d2 += d * d;
        }
        acc += d2.sqrt();
    }
    Ok(acc / S::from_usize(m).unwrap())
}

/// Coordinate-wise mean over meshes with shared connectivity.
pub fn mean_shape_baseline<S: Scalar>(meshes: &[&MeshBase<S>]) -> Result<Vec<S>> {
    let first = meshes.first().ok_or_else(|| Error::config("no meshes to average"))?;
    let n = first.vertex_count() * 3;
    let mut acc = vec![S::zero(); n];
    for m in meshes {
        if m.vertex_count() != first.vertex_count() {
            return Err(Error::Mesh("vertex counts differ across meshes".into()));
        }
        for (a, v) in acc.iter_mut().zip(m.coords_flat()) {
            *a += v;
        }
    }
    let inv = S::one() / S::from_usize(meshes.len()).unwrap();
    for a in &mut acc {
        *a *= inv;
    }
    Ok(acc)
}

/// Per-parameter momentum buffers keyed by parameter name.
#[derive(Default)]
pub struct SgdState<S: Scalar> {
    velocity: HashMap<String, Vec<S>>,
}

impl<S: Scalar> SgdState<S> {
    pub fn new() -> Self {
        SgdState {
            velocity: HashMap::new(),
        }
    }
}

/// v <- momentum * v + grad; param <- param - lr(iteration) * v.
pub fn sgd_step<S: Scalar>(
    params: &[(String, TensorBase<S>)],
    state: &mut SgdState<S>,
    config: &TrainConfig,
    iteration: usize,
) -> Result<()> {
    let lr = S::c(config.learning_rate(iteration));
    let momentum = S::c(config.momentum);
    for (name, p) in params {
        let grad = p
            .grad()
            .ok_or_else(|| Error::Autodiff(format!("missing gradient for parameter {name}")))?;
        let v = state
            .velocity
            .entry(name.clone())
            .or_insert_with(|| vec![S::zero(); grad.len()]);
        let mut data = p.data_mut();
        for i in 0..grad.len() {
            v[i] = momentum * v[i] + grad[i];
            data[i] -= lr * v[i];
        }
    }
    Ok(())
}

#[derive(Debug)]
pub struct TrainStats {
    pub initial_l1: f64,
    pub final_l1: f64,
    pub iterations: usize,
}

/// Train `model` in place on `pairs` with batch size 1, shuffling with a
/// seeded generator each epoch. Diverges (non-finite loss) into an error
/// carrying the fold/epoch/step it happened at.
pub fn train<S: Scalar>(
    model: &ModelParams<S>,
    pairs: &[&DatasetPair<S>],
    config: &TrainConfig,
    fold_index: usize,
) -> Result<TrainStats> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::config("empty training set"));
    }
    let params = model.named_parameters();
    let mut state = SgdState::new();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ shuffle_stream(fold_index));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut iteration = 0usize;
    let mut initial_l1 = f64::NAN;
    let mut final_l1 = f64::NAN;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut shuffle_rng);
        for (step, &pi) in order.iter().enumerate() {
            let pair = pairs[pi];
            let tape = Tape::new();
            let pred = model.forward(&tape, &pair.image_tensor(), true)?;
            let loss = ops::l1_loss(&tape, &pred, &pair.target_tensor())?;
            let l = loss.item().to_f64_lossy();
            if !l.is_finite() {
                return Err(Error::Diverged {
                    fold: fold_index,
                    epoch,
                    step,
                });
            }
            if iteration == 0 {
                initial_l1 = l;
            }
            final_l1 = l;
            tape.backward(&loss)?;
            sgd_step(&params, &mut state, config, iteration)?;
            for (_, p) in &params {
                p.zero_grad();
            }
            iteration += 1;
        }
    }
    Ok(TrainStats {
        initial_l1,
        final_l1,
        iterations: iteration,
    })
}

// fold-specific stream for the epoch shuffle, distinct from model init
fn shuffle_stream(fold: usize) -> u64 {
    (fold as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17) | 1
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold_index: usize,
    pub frames_trained: usize,
    pub final_l1: f64,
    pub distance_error: f64,
    pub baseline_error: f64,
    pub wall_seconds: f64,
}

pub struct LooReport {
    pub folds: Vec<FoldResult>,
    pub mean_error: f64,
    pub mean_baseline: f64,
}

/// Leave-one-out cross-validation: one fold per frame, fresh parameters per
/// fold, mean-shape baseline evaluated on the same split. Returns per-fold
/// results in frame order.
pub fn leave_one_out<S: Scalar>(
    dataset: &[DatasetPair<S>],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<LooReport> {
    if dataset.len() < 3 {
        return Err(Error::config("leave-one-out needs at least 3 frames"));
    }
    let template = &dataset[0].mesh;
    for p in dataset {
        if !p.mesh.same_connectivity(template) {
            return Err(Error::Mesh(format!(
                "frame {} connectivity differs from template",
                p.frame_index
            )));
        }
    }

    let mut folds = Vec::with_capacity(dataset.len());
    for held in 0..dataset.len() {
        folds.push(run_fold(dataset, held, model_config, train_config, None)?);
    }
    let mean_error = folds.iter().map(|f| f.distance_error).sum::<f64>() / folds.len() as f64;
    let mean_baseline = folds.iter().map(|f| f.baseline_error).sum::<f64>() / folds.len() as f64;
    Ok(LooReport {
        folds,
        mean_error,
        mean_baseline,
    })
}

/// Train and evaluate a single fold. Public so the CLI can parallelize folds
/// across threads (everything consumed here is Send). When `artifacts_dir`
/// is given, the fold's checkpoint and predicted mesh land there.
pub fn run_fold<S: Scalar>(
    dataset: &[DatasetPair<S>],
    held: usize,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    artifacts_dir: Option<&std::path::Path>,
) -> Result<FoldResult> {
    // the fold's training list exists before any parameters do; the held-out
    // pair is never inserted, and the checksum proves training left the list
    // untouched
    let train_set: Vec<&DatasetPair<S>> = dataset
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != held)
        .map(|(_, p)| p)
        .collect();
    let before = checksum_pairs(&train_set);

    let start = Instant::now();
    let hierarchy = Rc::new(build_hierarchy(
        &dataset[0].mesh,
        model_config.stride,
        4,
    )?);
    let fold_seed = train_config
        .seed
        .wrapping_add((held as u64).wrapping_mul(0x1000_0001));
    let mut rng = ChaCha8Rng::seed_from_u64(fold_seed);
    let model = ModelParams::init(model_config, hierarchy, &mut rng)?;

    let stats = train(&model, &train_set, train_config, held)?;
    let after = checksum_pairs(&train_set);
    if before != after {
        return Err(Error::config("training mutated its dataset (checksum mismatch)"));
    }

    let held_pair = &dataset[held];
    let pred = model.infer_mesh(&held_pair.image_tensor())?;
    let err = distance_error(&pred.coords_flat(), &held_pair.mesh.coords_flat())?
        .to_f64_lossy();

    let train_meshes: Vec<&MeshBase<S>> = train_set.iter().map(|p| &p.mesh).collect();
    let baseline = mean_shape_baseline(&train_meshes)?;
    let baseline_err =
        distance_error(&baseline, &held_pair.mesh.coords_flat())?.to_f64_lossy();

    if let Some(dir) = artifacts_dir {
        let mut entries = model.named_parameters();
        entries.extend(model.named_states());
        let meta = vec![
            ("template_sha256".to_string(), crate::io::hierarchy::mesh_hash(model.template())),
            ("reshape_order".to_string(), "vertex-major".to_string()),
            ("seed".to_string(), train_config.seed.to_string()),
            ("fold".to_string(), held.to_string()),
        ];
        crate::io::checkpoint::save(&entries, &meta, &dir.join(format!("fold_{held}.ckpt")))?;
        crate::io::off::write_off(&pred, &dir.join(format!("fold_{held}_pred.off")))?;
    }

    Ok(FoldResult {
        fold_index: held,
        frames_trained: train_set.len(),
        final_l1: stats.final_l1,
        distance_error: err,
        baseline_error: baseline_err,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
