//! The two-headed network (shared trunk `g`, heads `f_pri` and `f_aux`) and its checkpoints.

pub mod checkpoint;
mod net;

pub use checkpoint::{load, save, Checkpoint, CheckpointMeta};
pub use net::{Architecture, BothHeads, Head, MultiHeadNet, NetGradient, NetGrads};
