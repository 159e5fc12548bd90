//! Plugin registry, job execution and the HTTP job-control API.

pub mod config;
pub mod http;
pub mod job;
pub mod manager;
pub mod notify;
pub mod registry;

pub use config::ServerConfig;
pub use job::{JobState, JobStatus, StepState, StepStatus};
pub use manager::{ControlError, JobManager, ManagerOptions, SubmitError, Upload, UploadSource};
pub use notify::{LogNotifier, Notifier};
pub use registry::Registry;
