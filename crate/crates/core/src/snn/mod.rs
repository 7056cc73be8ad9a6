//! Current-based leaky integrate-and-fire (CUBA-LIF) dynamics.
//!
//! One simulation step of a layer is
//!
//! ```text
//! u <- alpha_u * u + (1 - alpha_u) * W x
//! v <- alpha_v * v + (1 - alpha_v) * u
//! s <- v >= threshold
//! v <- v * (1 - s)          (hard reset)   or   v - threshold * s   (soft reset)
//! ```
//!
//! The synaptic current is kept per post-synaptic neuron. By linearity this
//! equals the sum of per-synapse currents even when weights change between
//! steps, so no `pre x post` state is needed.

mod fixed;
mod network;
mod neuron;
mod trace;

pub use fixed::{FixedLayerState, FixedPoint};
pub use network::{run_network, Arithmetic, Layer, NetworkRecord, NetworkTopology, Simulator};
pub use neuron::{step_cuba_layer, LayerState, NeuronConfig, ResetMode};
pub use trace::{update_presyn_trace, TraceState};
