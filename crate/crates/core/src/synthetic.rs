//! Synthetic deforming-shape cycles and their 2D projections.
//!
//! A base icosphere deforms through a periodic "cardiac-like" cycle:
//! anisotropic scaling on one axis plus a radial spherical-harmonic bulge,
//! both smooth in the frame phase. Each frame renders to an orthographic
//! depth-shaded silhouette, giving (image, mesh) supervision pairs with
//! consistent connectivity across frames.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mesh::{icosphere, MeshBase};
use crate::scalar::Scalar;
use crate::train::DatasetPair;

#[derive(Debug, Clone)]
pub struct ShapeCycleSpec {
    /// Icosphere subdivision level of the base mesh (2 -> 162, 3 -> 642).
    pub subdivision: usize,
    pub radius: f64,
    /// Number of frames T in one cycle.
    pub frames: usize,
    /// Peak relative scale change on the scaled axis; |amplitude| < 0.5.
    pub scale_amplitude: f64,
    /// Axis receiving the scale; `None` scales all three uniformly.
    pub scale_axis: Option<usize>,
    /// Peak relative radial bulge; |amplitude| < 0.5.
    pub bulge_amplitude: f64,
    /// Per-coordinate Gaussian noise sigma.
    pub noise_sigma: f64,
    pub image_height: usize,
    pub image_width: usize,
    /// Half-width of the square orthographic view window and depth range.
    pub frustum_half_width: f64,
}

impl Default for ShapeCycleSpec {
    fn default() -> Self {
        ShapeCycleSpec {
            subdivision: 2,
            radius: 1.0,
            frames: 20,
            scale_amplitude: 0.25,
            scale_axis: Some(2),
            bulge_amplitude: 0.1,
            noise_sigma: 0.0,
            image_height: 64,
            image_width: 64,
            frustum_half_width: 2.0,
        }
    }
}

impl ShapeCycleSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 3 {
            return Err(Error::config("a cycle needs at least 3 frames"));
        }
        // combined amplitude below 0.5 keeps every radius positive, so the
        // per-frame deformation stays bijective
        if self.scale_amplitude.abs() + self.bulge_amplitude.abs() >= 0.5 {
            return Err(Error::config(format!(
                "amplitudes {} + {} exceed the documented bound 0.5",
                self.scale_amplitude, self.bulge_amplitude
            )));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::config("noise sigma must be nonnegative"));
        }
        if let Some(a) = self.scale_axis {
            if a > 2 {
                return Err(Error::config("scale axis must be 0, 1 or 2"));
            }
        }
        if self.image_height == 0 || self.image_width == 0 {
            return Err(Error::config("image dims must be positive"));
        }
        if self.frustum_half_width <= 0.0 {
            return Err(Error::config("frustum half-width must be positive"));
        }
        Ok(())
    }

    pub fn base_mesh<S: Scalar>(&self) -> MeshBase<S> {
        icosphere(self.subdivision, S::c(self.radius))
    }
}

/// Deform one vertex of the unit-direction base shape at the given phase.
fn deform<S: Scalar>(spec: &ShapeCycleSpec, v: [S; 3], phase: f64) -> [S; 3] {
    let s = 1.0 + spec.scale_amplitude * phase.sin();
    let mut out = v;
    match spec.scale_axis {
        Some(axis) => out[axis] = out[axis] * S::c(s),
        None => {
            for c in &mut out {
                *c = *c * S::c(s);
            }
        }
    }
    if spec.bulge_amplitude != 0.0 {
        // real spherical harmonic Y_2^0 up the z-axis: (3 cos^2 theta - 1)/2.
        // Driven by cos(phase) while the scale follows sin(phase), so the
        // (sin, cos) pair identifies the frame uniquely and no two frames of
        // a cycle coincide (keeps the regression target well-posed).
        let r2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
        let r = r2.sqrt();
        if r > S::zero() {
            let cos_t = (v[2] / r).to_f64_lossy();
            let y20 = 0.5 * (3.0 * cos_t * cos_t - 1.0);
            let f = S::c(1.0 + spec.bulge_amplitude * phase.cos() * y20);
            for c in &mut out {
                *c = *c * f;
            }
        }
    }
    out
}

/// Deterministic standard normal via Box-Muller on the seeded generator.
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Mesh at an arbitrary (possibly fractional) frame phase, noise-free.
pub fn frame_mesh<S: Scalar>(spec: &ShapeCycleSpec, t: f64) -> Result<MeshBase<S>> {
    spec.validate()?;
    let base = spec.base_mesh::<S>();
    let phase = 2.0 * std::f64::consts::PI * t / spec.frames as f64;
    let verts = base
        .vertices()
        .iter()
        .map(|&v| deform(spec, v, phase))
        .collect();
    base.with_vertices(verts)
}

/// All T meshes of one cycle; deterministic in (spec, seed).
pub fn generate_cycle<S: Scalar>(spec: &ShapeCycleSpec, seed: u64) -> Result<Vec<MeshBase<S>>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let mut mesh = frame_mesh::<S>(spec, t as f64)?;
        if spec.noise_sigma > 0.0 {
            for v in mesh.vertices_mut() {
                for c in v.iter_mut() {
                    *c += S::c(spec.noise_sigma * gaussian(&mut rng));
                }
            }
        }
        out.push(mesh);
    }
    Ok(out)
}

/// Orthographic depth-shaded silhouette along -z: intensity is the depth of
/// the nearest surface normalized over the frustum, 0 outside the silhouette.
pub fn render_projection<S: Scalar>(mesh: &MeshBase<S>, spec: &ShapeCycleSpec) -> Result<Vec<S>> {
    let w = spec.frustum_half_width;
    for (i, v) in mesh.vertices().iter().enumerate() {
        if v.iter().any(|c| c.to_f64_lossy().abs() > w) {
            return Err(Error::Mesh(format!(
                "vertex {i} lies outside the +-{w} view frustum"
            )));
        }
    }
    let (h_px, w_px) = (spec.image_height, spec.image_width);
    let mut depth = vec![f64::NEG_INFINITY; h_px * w_px];

    // pixel centers sample the window [-w, w] x [-w, w]
    let to_px_x = |x: f64| (x + w) / (2.0 * w) * w_px as f64 - 0.5;
    let to_px_y = |y: f64| (y + w) / (2.0 * w) * h_px as f64 - 0.5;

    for f in mesh.faces() {
        let p: Vec<[f64; 3]> = f
            .iter()
            .map(|&vi| {
                let v = mesh.vertices()[vi];
                [
                    v[0].to_f64_lossy(),
                    v[1].to_f64_lossy(),
                    v[2].to_f64_lossy(),
                ]
            })
            .collect();
        let (ax, ay) = (to_px_x(p[0][0]), to_px_y(p[0][1]));
        let (bx, by) = (to_px_x(p[1][0]), to_px_y(p[1][1]));
        let (cx, cy) = (to_px_x(p[2][0]), to_px_y(p[2][1]));
        let det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay);
        if det.abs() < 1e-12 {
            continue; // edge-on face
        }
        let min_r = ay.min(by).min(cy).floor().max(0.0) as usize;
        let max_r = (ay.max(by).max(cy).ceil() as usize).min(h_px.saturating_sub(1));
        let min_c = ax.min(bx).min(cx).floor().max(0.0) as usize;
        let max_c = (ax.max(bx).max(cx).ceil() as usize).min(w_px.saturating_sub(1));
        for r in min_r..=max_r {
            for cpx in min_c..=max_c {
                let (px, py) = (cpx as f64, r as f64);
                let l1 = ((bx - px) * (cy - py) - (cx - px) * (by - py)) / det;
                let l2 = ((cx - px) * (ay - py) - (ax - px) * (cy - py)) / det;
                let l3 = 1.0 - l1 - l2;
                if l1 < 0.0 || l2 < 0.0 || l3 < 0.0 {
                    continue;
                }
                let z = l1 * p[0][2] + l2 * p[1][2] + l3 * p[2][2];
                let idx = r * w_px + cpx;
                if z > depth[idx] {
                    depth[idx] = z;
                }
            }
        }
    }

    // nearest depth z in [-w, w] maps to [0.1, 1.0]; background stays 0
    Ok(depth
        .into_iter()
        .map(|z| {
            if z == f64::NEG_INFINITY {
                S::zero()
            } else {
                S::c(0.1 + 0.9 * (z + w) / (2.0 * w))
            }
        })
        .collect())
}

/// Full supervised dataset for one cycle.
pub fn generate_dataset<S: Scalar>(
    spec: &ShapeCycleSpec,
    seed: u64,
) -> Result<Vec<DatasetPair<S>>> {
    let meshes = generate_cycle::<S>(spec, seed)?;
    meshes
        .into_iter()
        .enumerate()
        .map(|(t, mesh)| {
            let image = render_projection(&mesh, spec)?;
            Ok(DatasetPair {
                image,
                height: spec.image_height,
                width: spec.image_width,
                mesh,
                frame_index: t,
            })
        })
        .collect()
}
