//! Dense toy networks and four teacher-student training frameworks: redundant
//! information distillation (RID), variational information distillation
//! (VID), task-aware layer-wise distillation (TED) and a plain baseline (BAS).
//!
//! The teacher is never updated. Each run records per-epoch accuracies and
//! losses, and periodically estimates the information atoms shared between
//! one teacher layer and the matching student layer.

pub mod config;
pub mod gradcheck;
pub mod loss;
pub mod nn;
pub mod objective;
pub mod report;
pub mod train;

pub use config::{DistillConfig, Framework, LayerPair, LrSchedule, TeacherMode};
pub use nn::{Network, SgdConfig, SigmaVec};
pub use report::TrainReport;
pub use train::{build_teacher, train, Phase, Trainer};
