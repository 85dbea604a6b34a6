//! Shared ownership for concurrent programs.
//!
//! Processes and resources form an [`OwnershipGraph`]. A process may read a
//! resource when it is one of its roots and write it when it is the only
//! root. The crate provides:
//!
//! * [`graph`]: the graph itself, root computation and validation,
//! * [`semantics`]: the statement vocabulary and transition rules,
//! * [`checker`]: a thread-safe session that checks statements as they
//!   happen in a running program,
//! * [`sync`]: channels, queues, locks and readers-writer locks that emit
//!   the ownership transfers their synchronization implies,
//! * [`trace`]: a JSON-lines event log and its replayer,
//! * [`explorer`]: exhaustive interleaving exploration of small programs,
//! * [`bench`]: overhead workloads for the different checking modes.
//!
//! ```
//! use som::{Mode, Session};
//!
//! let s = Session::new(Mode::Full);
//! let main = s.root();
//! let list = s.on_allocate(main);
//! let node = s.on_allocate(main);
//! s.on_field_assign(main, list, node)?; // the list becomes the node's owner
//! s.on_field_write(main, node)?;
//! assert_eq!(s.violation_count(), 0);
//! # Ok::<(), som::Violation>(())
//! ```

#![allow(clippy::result_large_err)]

pub mod bench;
pub mod checker;
pub mod explorer;
pub mod graph;
pub mod semantics;
pub mod sync;
pub mod trace;

pub use checker::{Mode, Session, Violation};
pub use graph::{Access, Edge, EntityId, EntityKind, GraphError, OwnershipGraph, ProcessId, ResourceId};
pub use semantics::{premise, Configuration, Rules, Statement, ViolationKind};
