//! Plain-code serialization of runtime objects.
//!
//! Objects are turned into source statements that rebuild them when executed. Types whose
//! state can be driven through constructors, setters and assignable fields get a
//! cost-minimal structure-based plan; everything else is rebuilt by replaying the mutating
//! calls recorded in an event trace. Both strategies meet in the emitter, which also powers
//! Arrange-Act-Assert test generation.

pub mod analyzer;
pub mod emit;
pub mod equality;
pub mod model;
pub mod recorder;
pub mod synth;
pub mod testgen;
pub mod trace;
pub mod wire;

pub use model::*;
