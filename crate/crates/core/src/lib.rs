//! Locality-optimised execution planning for unstructured-mesh loops.
//!
//! The pipeline reorders mesh elements and data (GPS renumbering or
//! partition-based blocking), colours threads at block and intra-block level
//! to remove write races, and runs the resulting schedule on a deterministic
//! lockstep cost model that counts 32-byte cache-line transactions.

pub mod colouring;
pub mod compare;
pub mod error;
pub mod hw;
pub mod kernel;
pub mod kernels;
pub mod mesh;
pub mod partition;
pub mod perm;
pub mod plan;
pub mod reorder;
pub mod sim;

pub use error::{Error, Result};
pub use mesh::{DataArray, ElemType, Layout, Mapping, Mesh, Scalar, SetHandle, Values};
pub use perm::Permutation;
