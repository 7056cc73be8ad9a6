//! Error-triggered three-factor plasticity.
//!
//! The update applied at a learning epoch is `dw_ij = eta * p_j * e_i`, where
//! `p_j` is the pre-synaptic trace at the epoch boundary and `e_i` is the
//! gated spike-count error of post-synaptic neuron `i` over the last window.
//! On hardware the error travels through a non-negative post-trace, so it is
//! offset-encoded with a constant `c` and the value `0` means "no learning".

mod epoch;
mod rule;
mod soel;

pub use epoch::{learning_epoch_step, EpochInputs, EpochOutcome, SoelState, UpdateRule};
pub use rule::{Bindings, Factor, SumOfProductsRule, Term, Variable};
pub use soel::{compute_window_error, decode_posttrace, encode_posttrace, soel_update, soel_update_into, SoelConfig};
