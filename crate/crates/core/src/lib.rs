//! Batch Loss Score: per-sample importance scores built from mean batch
//! losses, with the filtering, spectral and pruning machinery around them.

pub mod log;
pub mod pruning;
pub mod replay;
pub mod report;
pub mod score;
pub mod session;
pub mod signal;
pub mod spectral;
pub mod trainer;

pub use pruning::{ActiveSet, CycleSchedule, PrunePolicy, WindowProgress};
pub use score::{BatchRecord, BlsHandler, EmaConfig, InitPolicy, SampleId, ScoreSnapshot, ScoreTable};
pub use session::{create_handler, BlsSession, SessionConfig};
