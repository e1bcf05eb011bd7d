//! Synthetic flax field, frame rendering, spray controller and herbicide
//! accounting.

mod sim;
mod world;

pub use sim::*;
pub use world::*;
