//! RIS cascaded channel simulation.
//!
//! The processed observation of one user after pilot despreading is
//! `Y = H + N_eff`, where `H = h_rbᵀ · diag(ψ) · h_ru` is the cascaded channel
//! and `N_eff = n · Φ_k*` is white whenever the pilot book is orthonormal.
//! Complex `N_b × N_u` matrices are handed to the networks as real
//! `N_b × 2N_u` "super matrices" (real parts left, imaginary parts right).

mod dataset;
mod geometry;
pub(crate) mod io;
mod observe;
mod pilots;

pub use dataset::{
    gen_dataset, gen_split, sigma_for_snr, Dataset, DatasetConfig, Sample, SnrRange, Split, SystemGeometry,
};
pub use geometry::{
    cascade, draw_paths, draw_realization, gen_path_channel, steering_vector, ArrayGeometry,
    ChannelRealization, PathParams,
};
pub use io::{decode_split, encode_split, read_split, write_split, SplitHeader, DATASET_MAGIC};
pub use observe::{observe, pack_real, unpack_real, Observation};
pub use pilots::{make_pilots, PilotBook};
