//! Coverage-guided protocol fuzzing over a simulated attach procedure.
//!
//! The crate is layered bottom-up: [`packet`] and [`dissector`] model bytes
//! and fields, [`mutation`], [`replay`] and [`seed`] describe what gets done
//! to a packet, [`probability`] and [`coverage`] drive adaptation,
//! [`fuzzer`] combines them per packet, [`sim`] runs iterations against the
//! built-in UE and eNB machines and [`campaign`] orchestrates experiments.

pub mod campaign;
pub mod coverage;
pub mod dissector;
pub mod error;
pub mod fuzzer;
pub mod mutation;
pub mod packet;
pub mod probability;
pub mod replay;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
