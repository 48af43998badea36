//! Periodic space-time grids, noise, kernels, convolution, and
//! Hölder-exponent estimation.

pub mod fft;
pub mod grid;
pub mod kernel;
pub mod noise;
pub mod testfn;

pub use fft::{convolve, convolve_shifted};
pub use grid::{Field, TorusGrid};
pub use kernel::{
    build_kernel, build_kernel_with_radius, truncated_semigroup, KernelDecomposition,
};
pub use noise::{mollify, sample_white_noise, Mollifier};
pub use testfn::{holder_exponent, lambda_ladder, pair, HolderReport, TestFunction};

pub(crate) use kernel::solve_dense as kernel_solve;
