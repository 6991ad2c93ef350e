//! Incremental knowledge-base question answering.
//!
//! Questions arrive in phases, each phase adding relation types that were
//! never seen before while the fact store only grows. A matching model scores
//! `(mention, pattern)` against `(subject, relation)` candidates and is trained
//! phase by phase with a hinge ranking loss on new data plus a squared-error
//! distillation loss on a small set of retained exemplars.
//!
//! Module map:
//!
//! * [`kbstream`]: triples, questions, phase construction, corpus I/O
//! * [`pairgen`]: mention/pattern conversion and candidate generation
//! * [`encoder`]: char/word CNN encoders, a small reverse-mode tape, Adam
//! * [`training`]: scoring, losses, label snapshots, the per-phase loop
//! * [`exemplars`]: collaborative, herding and random exemplar selection
//! * [`evaluation`]: accuracy, forgetting matrix, permutation test, resources
//! * [`pipeline`]: multi-phase runner shared by the CLI and tests
//! * [`cli`]: the `ikbqa` command line

pub mod cli;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod exemplars;
pub mod kbstream;
pub mod pairgen;
pub mod pipeline;
pub mod training;
pub mod util;

pub use error::{Error, Result};
