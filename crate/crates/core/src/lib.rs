//! Muon optimizer toolkit.
//!
//! Dense matrices, Newton-Schulz orthogonalization, the Muon and AdamW
//! optimizers, a simulated ZeRO-1 data-parallel world running Distributed
//! Muon, spectral and scaling-law analyses, two MoE routing utilities and a
//! small training harness for toy matrix networks.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, configuration
//! parsing and the command-line front end live in `muon-cli`.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dist;
pub mod matrix;
pub mod moe;
pub mod newton_schulz;
pub mod optim;
pub mod random;
pub mod scaling;
pub mod spectral;
pub mod svd;
pub mod trainer;

pub use matrix::{Matrix, MatrixError};
pub use newton_schulz::{newton_schulz, scalar_ns_trajectory, NsConfig, NsError};
pub use optim::{
    adamw_step, hybrid_step, muon_step, muon_step_with, scale_update, AdamWConfig, Buffers,
    HybridConfig, MuonConfig, NewtonSchulzBackend, OptimError, Orthogonalize, ParamKind,
    ParamState, ScalingMode, ScalingVariant, SvdPolarBackend, UpdateStats,
};
pub use svd::{svd, SvdResult};
