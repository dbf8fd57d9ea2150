//! Runtime verification of linearizability.
//!
//! The crate provides a linearizability checker for a catalog of sequential
//! objects, a wrapper that turns any implementation into one whose
//! operations also return a view of the execution, and verifiers that
//! rebuild histories from those views and test them at runtime. Everything
//! runs on a deterministic shared-memory simulator, so executions can be
//! replayed exactly from a schedule.

pub mod audit;
pub mod enforce;
pub mod format;
pub mod gen;
pub mod history;
pub mod membership;
pub mod scenarios;
pub mod sim;
pub mod spec;
pub mod value;
pub mod verifier;
pub mod views;
pub mod workload;

pub use history::{Event, EventKind, History, HistoryError, OpDescriptor, ProcessId, Uid};
pub use membership::{is_linearizable, lin_object, GenLinObject, Linearization};
pub use spec::SeqSpec;
pub use value::Value;
