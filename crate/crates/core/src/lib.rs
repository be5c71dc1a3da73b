//! Reconstruction of a fixed-connectivity 3D surface mesh from a single 2D
//! grayscale image.
//!
//! The pipeline is a dense-block convolutional image encoder, a two-layer
//! fully-connected bridge, and a Chebyshev spectral graph-convolutional mesh
//! decoder that upsamples through a precomputed multi-resolution mesh
//! hierarchy. Everything trains end-to-end with SGD on an L1 vertex loss;
//! the numeric building blocks (reverse-mode autodiff, spectral filtering,
//! quadric-error-metric simplification) are implemented here and checked
//! against independent oracles.
//!
//! Core math is generic over [`scalar::Scalar`]; the aliases below pin the
//! `f64` instantiation used by the model, trainer and CLI.

pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod mesh;
pub mod model;
pub mod sampling;
pub mod scalar;
pub mod sparse;
pub mod spectral;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default scalar type for the full pipeline.
pub type Real = f64;

pub type Tensor = tensor::TensorBase<Real>;
pub type Tape = tensor::Tape<Real>;
pub type Csr = sparse::CsrMatrix<Real>;
pub type Mesh = mesh::MeshBase<Real>;
pub type Laplacian = spectral::LaplacianBundle<Real>;
pub type ChebConv = spectral::ChebConvLayer<Real>;
