//! Scheduler synthesis for event-triggered control loops sharing a network.
//!
//! Loops are abstracted into timed game automata, composed with a network
//! model, and a safety game over the product yields a conflict-free
//! scheduling strategy that is then co-simulated with the plants.

pub mod automata;
pub mod config;
pub mod etc;
pub mod game;
pub mod pipeline;
pub mod sim;
pub mod zones;
