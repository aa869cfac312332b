//! Random Access Concatenated Libraries.
//!
//! Many files or fixed-width records are packed into one headerless library
//! file of equal-length records; each member is fetched with one positional
//! read, so fetch cost does not depend on where the member sits in the file.
//!
//! - [`store`]: the library file itself.
//! - [`serial_index`]: ASCII line-per-member index searched by token scan.
//! - [`computed_index`]: 26³ fixed-width index addressed by name letters.
//! - [`ssdi`]: 64-byte death records grouped by that index.
//! - [`neuro`]: brain coordinates grouped by region and 10 mm block.
//! - [`library`], [`cache`], [`server`]: packed collections served over
//!   HTTP through a rotating disk cache.
//! - [`bench`]: latency measurements and a scan-only archive baseline.
//!
//! Runnable walkthroughs live in `examples/`.

pub mod bench;
pub mod cache;
pub mod cli;
pub mod computed_index;
pub mod config;
pub mod error;
pub mod library;
pub mod neuro;
pub mod serial_index;
pub mod server;
pub mod ssdi;
pub mod store;

pub use cache::{DeliveryRequest, DiskCache, EnsureOutcome, Resolver, Source};
pub use computed_index::{key_ordinal, trigram_of, GroupEntry, GroupIndex, TrigramKey};
pub use config::Config;
pub use error::{Error, Result};
pub use library::{pack, Collection, Library};
pub use neuro::{block_of, decode_coord, encode_coord, BlockName, NeuroLibrary, Voxel};
pub use serial_index::{SerialIndex, SerialIndexEntry};
pub use ssdi::{DeathLibrary, DeathRecord, SearchQuery};
pub use store::{RecordSetRef, RecordStore, StoreMeta};
