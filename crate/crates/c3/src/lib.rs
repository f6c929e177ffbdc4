//! Compromised-credential checking (C3) toolkit.
//!
//! A C3 service answers one question: does this password (or this
//! username-password pair) appear in known breach data? The catch is
//! doing so without the query itself leaking the credential. This crate
//! implements the four bucketized set-membership protocols in use or
//! proposed for that problem, the dataset pipeline that prepares leaked
//! corpora for them, and a simulation lab that measures exactly how much
//! password-guessing advantage each protocol hands a curious server.
//!
//! - `hashes` / `credentials`: canonical digest and corpus types.
//! - `pipeline`: streaming corpus preprocessing, the minimum-safe
//!   hash-prefix computation, bucket population and statistics.
//! - `estimator`: the hybrid histogram + 3-gram password distribution
//!   estimate shared by server, client, and simulated attacker.
//! - `bucketize`: hash-prefix (HPB), frequency-smoothing (FSB), and
//!   identifier-based (IDB) bucketization, the sharded interval-tree
//!   store behind FSB, and bandwidth bounds.
//! - `psi`: the OPRF-based private set membership engine.
//! - `kv` / `server`: persistence and the HTTP query service.
//! - `client`: the checking client for all four protocols.
//! - `simlab`: exact and Monte-Carlo guessing games, theorem checks, and
//!   attack experiments on synthetic credential worlds.

pub mod bucketize;
pub mod client;
pub mod credentials;
pub mod estimator;
pub mod hashes;
pub mod kv;
pub mod pipeline;
pub mod psi;
pub mod server;
pub mod simlab;
mod wire;
