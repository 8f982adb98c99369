//! Block-structured PE/PI layers built from two shared sub-matrices.
//!
//! At scale `K` a layer's effective weight matrix is the `K x K` block grid
//!
//! ```text
//! | S O ... O |
//! | O S ... O |
//! | .   .   . |
//! | O O ... S |
//! ```
//!
//! which is never materialized on the hot path: output block `k` is computed as
//! `act((S - O) h_k + O * sum_j h_j + bias)`. [`build_effective_matrix`] keeps
//! the explicit form around as a reference.

mod layer;
mod model;
mod pair;

pub use layer::{pepi_layer_backward, pepi_layer_forward, pi_readout, ForwardCache, PairGrads};
pub(crate) use model::argmax;
pub use model::{count_parameters, rescale, ArchSpec, ModelCache, ParamCountReport, PepiLayer, ScaledModel};
pub use pair::{build_effective_matrix, new_sub_matrix_pair, EffectiveMatrix, SubMatrixPair};
