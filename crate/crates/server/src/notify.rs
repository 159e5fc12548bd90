//! Completion notifications.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use crate::job::JobStatus;

/// Called once when a job reaches a terminal state. Failures never affect the job.
pub trait Notifier: Send + Sync {
    fn notify(&self, status: &JobStatus) -> Result<(), String>;
}

/// Appends `<time> <job id> <state>` lines to a log file.
pub struct LogNotifier {
    pub path: PathBuf,
}

impl Notifier for LogNotifier {
    fn notify(&self, status: &JobStatus) -> Result<(), String> {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| format!("{}: {e}", self.path.display()))?;
        writeln!(f, "{} {} {}", crate::job::now(), status.id, status.state).map_err(|e| e.to_string())
    }
}

/// Runs the hook, containing errors and panics.
pub(crate) fn fire(hook: &dyn Notifier, status: &JobStatus) {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| hook.notify(status))) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => tracing::error!(job = %status.id, "notification failed: {e}"),
        Err(_) => tracing::error!(job = %status.id, "notification hook panicked"),
    }
}
