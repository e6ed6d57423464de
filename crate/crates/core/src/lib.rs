//! Coverage-guided differential fuzzing engine for the MiniRV toy CPU pair.
//!
//! The crate bundles a small deterministic ISA ("MiniRV"), a golden reference
//! interpreter, a coverage-instrumented device-under-test with a planted-bug
//! catalog, and the fuzzing machinery that drives them: multi-interrupt and
//! exception scheduling, instruction-relationship extraction, input
//! distillation via a variant ant-colony optimizer, and hardware-aware seed
//! selection and mutation.
//!
//! Everything in here is `no_std` (with `alloc`) and fully deterministic: a
//! campaign is a pure function of its configuration and RNG seed. Time is
//! virtual — each simulated execution advances a model clock — so repeated
//! runs produce bit-identical statistics. File formats, CLI handling, and
//! report emission live in the companion `minifuzz-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dut;
pub mod events;
pub mod fuzzer;
pub mod golden;
pub mod isa;
pub mod machine;
pub mod relations;
pub mod vaco;

mod fnv;
mod softfp;

pub use fnv::{fnv1a_32, fnv1a_64};
