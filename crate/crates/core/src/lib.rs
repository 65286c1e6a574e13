//! Desk-scale soft-object manipulation sandbox.
//!
//! The pipeline: a plastic particle dough is poked by rigid tools
//! ([`sim`]), its surface is reduced to a small skeleton graph
//! ([`skeleton`]), skeleton plus tool pose form a heterogeneous scene graph
//! that is encoded into a 32-wide latent ([`graph`]), a causal transformer
//! predicts the next object latent ([`dynamics`]), and a goal-conditioned
//! actor-critic learns tool poses with imagined rollouts from that model
//! ([`policy`]). [`explorer`] builds the pretraining corpus.

pub mod dynamics;
pub mod error;
pub mod explorer;
pub mod gradcheck;
pub mod graph;
pub mod policy;
pub mod sim;
pub mod skeleton;
pub mod tensor;

pub use error::{Error, Result};
