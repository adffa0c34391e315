//! A small driving world, a DDPG agent that learns to drive it, and a
//! visual question answering model that explains the agent's actions.
//!
//! - [`sim`]: tracks, vehicle physics, rewards and action categories.
//! - [`render`]: top-down frames of the world.
//! - [`neural`]: dense, convolutional and recurrent layers with hand-written
//!   gradients, Adam and checkpoints.
//! - [`ddpg`]: the actor–critic agent and its training loop.
//! - [`dataset`]: recording drives and sampling the question–answer corpus.
//! - [`vqa`]: the explainer network, training and evaluation.
//!
//! The guide in `book/` walks through each part.

pub mod dataset;
pub mod ddpg;
pub mod neural;
pub mod render;
pub mod sim;
pub mod vqa;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/world.md")]
    mod world {}
    #[doc = include_str!("../../../book/src/neural.md")]
    mod neural {}
    #[doc = include_str!("../../../book/src/agent.md")]
    mod agent {}
    #[doc = include_str!("../../../book/src/corpus.md")]
    mod corpus {}
    #[doc = include_str!("../../../book/src/vqa.md")]
    mod vqa {}
}
