//! Job scheduling and execution.
//!
//! Every job runs on its own thread. Process groups of a plan run one after
//! another; the steps of a piped group are spawned together with their
//! stdout/stdin joined by OS pipes. Each child leads its own process group so
//! pause, resume and cancel can signal it as a unit.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::{Component, Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use pline_core::names::{sanitize_filename, unique_name};
use pline_core::pipeline::{export_pipeline, plan, ExecutionPlan, PipelineSpec, PlanDiagnostic, PlannedStep};
use pline_core::synth::{StdinSource, StdoutTarget};
use rand::distr::{Alphanumeric, SampleString};
use serde::Serialize;
use thiserror::Error;

use crate::job::{self, now, JobState, JobStatus, StepState, StepStatus};
use crate::notify::{self, LogNotifier, Notifier};
use crate::registry::{find_program, Registry};

pub const UPLOAD_DIR: &str = "uploads";
pub const STDOUT_LOG: &str = "stdout.log";
pub const STDERR_LOG: &str = "stderr.log";
pub const NOTIFICATIONS_LOG: &str = "notifications.log";

/// Whether pause/resume can be honoured on this platform.
pub const SUPPORTS_SUSPEND: bool = cfg!(unix);

pub struct Upload {
    pub name: String,
    pub source: UploadSource,
}

pub enum UploadSource {
    Bytes(Vec<u8>),
    Path(PathBuf),
}

#[derive(Debug, Error)]
pub enum SubmitError {
    #[error("pipeline cannot run: {}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; "))]
    Plan(Vec<PlanDiagnostic>),
    #[error("no uploaded file named '{0}'")]
    MissingUpload(String),
    #[error("upload name '{0}' is not usable")]
    BadUploadName(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SubmitError {
    /// Every blocking message, for client display.
    pub fn messages(&self) -> Vec<String> {
        match self {
            SubmitError::Plan(diags) => diags
                .iter()
                .flat_map(|d| if d.errors.is_empty() { vec![d.message.clone()] } else { d.errors.clone() })
                .collect(),
            other => vec![other.to_string()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ControlError {
    #[error("unknown job '{0}'")]
    NotFound(String),
    #[error("cannot {action} a job that is {state}")]
    Illegal { action: &'static str, state: JobState },
    #[error("process suspension is not supported on this platform")]
    Unsupported,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub size: u64,
}

pub struct ManagerOptions {
    pub work_dir: PathBuf,
    pub max_jobs: usize,
    /// Defaults to a `notifications.log` in the work directory.
    pub notifier: Option<Arc<dyn Notifier>>,
    /// `PATH` handed to child processes and used for program lookup.
    pub path_var: Option<String>,
}

impl ManagerOptions {
    pub fn new(work_dir: impl Into<PathBuf>, max_jobs: usize) -> Self {
        ManagerOptions {
            work_dir: work_dir.into(),
            max_jobs,
            notifier: None,
            path_var: std::env::var("PATH").ok(),
        }
    }
}

struct JobInner {
    status: JobStatus,
    /// Process group ids of live children.
    live: Vec<i32>,
    spawned: usize,
    history: Vec<(JobState, JobState)>,
    /// The executor thread is gone (or never existed).
    finished: bool,
}

struct Job {
    id: String,
    dir: PathBuf,
    plan: Option<ExecutionPlan>,
    inner: Mutex<JobInner>,
    cv: Condvar,
}

impl Job {
    fn lock(&self) -> MutexGuard<'_, JobInner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }
}

#[derive(Default)]
struct Sched {
    jobs: BTreeMap<String, Arc<Job>>,
    queue: VecDeque<String>,
    running: usize,
}

struct Inner {
    work_dir: PathBuf,
    max_jobs: usize,
    registry: Arc<Registry>,
    notifier: Arc<dyn Notifier>,
    path_var: Option<String>,
    sched: Mutex<Sched>,
}

#[derive(Clone)]
pub struct JobManager {
    inner: Arc<Inner>,
}

/// Moves `g` to `next` if the relation allows it; persists and returns a
/// snapshot when the new state is terminal.
fn transition(job: &Job, g: &mut JobInner, next: JobState) -> Result<Option<JobStatus>, JobState> {
    let cur = g.status.state;
    if !cur.can_become(next) {
        return Err(cur);
    }
    g.history.push((cur, next));
    g.status.state = next;
    if next.is_terminal() {
        for s in g.status.steps.iter_mut() {
            if s.state == StepState::Queued {
                s.state = StepState::Skipped;
            }
        }
    }
    save(job, g);
    job.cv.notify_all();
    Ok(next.is_terminal().then(|| g.status.clone()))
}

fn save(job: &Job, g: &JobInner) {
    if let Err(e) = job::persist(&job.dir, &g.status) {
        tracing::error!(job = %job.id, "cannot write status: {e}");
    }
}

fn signal_all(pgids: &[i32], sig: libc::c_int) {
    for &pg in pgids {
        // SAFETY: plain syscall on a process group we spawned.
        unsafe {
            libc::kill(-pg, sig);
        }
    }
}

fn new_job_id(taken: &BTreeMap<String, Arc<Job>>, work_dir: &Path) -> String {
    loop {
        let id = Alphanumeric.sample_string(&mut rand::rng(), 16);
        if !taken.contains_key(&id) && !work_dir.join(&id).exists() {
            return id;
        }
    }
}

impl JobManager {
    /// Opens the work directory, recovering jobs persisted by earlier runs.
    /// Jobs that were still active are marked CANCELLED.
    pub fn open(registry: Arc<Registry>, opts: ManagerOptions) -> std::io::Result<JobManager> {
        fs::create_dir_all(&opts.work_dir)?;
        let notifier = opts.notifier.unwrap_or_else(|| {
            Arc::new(LogNotifier {
                path: opts.work_dir.join(NOTIFICATIONS_LOG),
            })
        });
        let inner = Arc::new(Inner {
            work_dir: opts.work_dir,
            max_jobs: opts.max_jobs.max(1),
            registry,
            notifier,
            path_var: opts.path_var,
            sched: Mutex::new(Sched::default()),
        });
        let mut recovered = Vec::new();
        for entry in fs::read_dir(&inner.work_dir)? {
            let dir = entry?.path();
            let Some(mut status) = job::load(&dir) else { continue };
            if dir.file_name().and_then(|n| n.to_str()) != Some(status.id.as_str()) {
                continue;
            }
            let mut history = Vec::new();
            let mut ended = None;
            if !status.state.is_terminal() {
                history.push((status.state, JobState::Cancelled));
                status.state = JobState::Cancelled;
                for s in status.steps.iter_mut() {
                    match s.state {
                        StepState::Running => {
                            s.state = StepState::Cancelled;
                            s.ended = Some(now());
                        }
                        StepState::Queued => s.state = StepState::Skipped,
                        _ => {}
                    }
                }
                ended = Some(status.clone());
            }
            let job = Arc::new(Job {
                id: status.id.clone(),
                dir: dir.clone(),
                plan: None,
                inner: Mutex::new(JobInner {
                    status,
                    live: Vec::new(),
                    spawned: 0,
                    history,
                    finished: true,
                }),
                cv: Condvar::new(),
            });
            if let Some(snapshot) = ended {
                save(&job, &job.lock());
                tracing::warn!(job = %job.id, "job was interrupted by a restart; marked CANCELLED");
                recovered.push(snapshot);
            }
            inner.sched.lock().unwrap().jobs.insert(job.id.clone(), job);
        }
        for s in recovered {
            notify::fire(&*inner.notifier, &s);
        }
        Ok(JobManager { inner })
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.inner.registry
    }

    pub fn work_dir(&self) -> &Path {
        &self.inner.work_dir
    }

    fn job(&self, id: &str) -> Result<Arc<Job>, ControlError> {
        self.inner
            .sched
            .lock()
            .unwrap()
            .jobs
            .get(id)
            .cloned()
            .ok_or_else(|| ControlError::NotFound(id.to_string()))
    }

    /// Plans the pipeline against the registry, stores uploads and queues the job.
    pub fn submit(&self, pipeline: &PipelineSpec, uploads: Vec<Upload>) -> Result<String, SubmitError> {
        let plan = plan(pipeline, &*self.inner.registry).map_err(SubmitError::Plan)?;

        let mut stored: BTreeMap<String, UploadSource> = BTreeMap::new();
        for u in uploads {
            let clean = sanitize_filename(&u.name).ok_or_else(|| SubmitError::BadUploadName(u.name.clone()))?;
            let name = unique_name(&clean, &|c| stored.contains_key(c));
            stored.insert(name, u.source);
        }
        for step in plan.groups.iter().flat_map(|g| &g.steps) {
            for f in &step.command.input_files {
                let found = sanitize_filename(&f.token).is_some_and(|t| stored.contains_key(&t));
                if !found {
                    return Err(SubmitError::MissingUpload(f.token.clone()));
                }
            }
        }

        let mut sched = self.inner.sched.lock().unwrap();
        let id = new_job_id(&sched.jobs, &self.inner.work_dir);
        let dir = self.inner.work_dir.join(&id);
        let up = dir.join(UPLOAD_DIR);
        let write = || -> std::io::Result<()> {
            fs::create_dir_all(&up)?;
            for (name, src) in &stored {
                match src {
                    UploadSource::Bytes(b) => fs::write(up.join(name), b)?,
                    UploadSource::Path(p) => {
                        fs::copy(p, up.join(name))?;
                    }
                }
            }
            let doc = serde_json::to_string_pretty(&export_pipeline(pipeline)).expect("json");
            fs::write(dir.join("pipeline.json"), doc + "\n")
        };
        if let Err(e) = write() {
            let _ = fs::remove_dir_all(&dir);
            return Err(e.into());
        }
        let steps = pipeline
            .steps
            .iter()
            .map(|s| StepStatus {
                plugin_id: s.plugin_id.clone(),
                state: StepState::Queued,
                exit_code: None,
                started: None,
                ended: None,
                error: None,
            })
            .collect();
        let status = JobStatus {
            id: id.clone(),
            state: JobState::Queued,
            steps,
            created: now(),
            name: (!pipeline.name.is_empty()).then(|| pipeline.name.clone()),
        };
        let job = Arc::new(Job {
            id: id.clone(),
            dir,
            plan: Some(plan),
            inner: Mutex::new(JobInner {
                status,
                live: Vec::new(),
                spawned: 0,
                history: Vec::new(),
                finished: false,
            }),
            cv: Condvar::new(),
        });
        save(&job, &job.lock());
        sched.jobs.insert(id.clone(), job);
        sched.queue.push_back(id.clone());
        drop(sched);
        tracing::info!(job = %id, "job queued");
        self.pump();
        Ok(id)
    }

    /// Starts queued jobs while slots are free.
    fn pump(&self) {
        let mut sched = self.inner.sched.lock().unwrap();
        while sched.running < self.inner.max_jobs {
            let Some(id) = sched.queue.pop_front() else { break };
            let job = sched.jobs[&id].clone();
            {
                let mut g = job.lock();
                if transition(&job, &mut g, JobState::Running).is_err() {
                    continue;
                }
            }
            sched.running += 1;
            let mgr = self.clone();
            std::thread::Builder::new()
                .name(format!("job-{id}"))
                .spawn(move || {
                    mgr.run(&job);
                    job.lock().finished = true;
                    job.cv.notify_all();
                    mgr.inner.sched.lock().unwrap().running -= 1;
                    mgr.pump();
                })
                .expect("spawn job thread");
        }
    }

    pub fn pause(&self, id: &str) -> Result<JobStatus, ControlError> {
        if !SUPPORTS_SUSPEND {
            return Err(ControlError::Unsupported);
        }
        let job = self.job(id)?;
        let mut g = job.lock();
        let live = g.live.clone();
        transition(&job, &mut g, JobState::Paused).map_err(|state| ControlError::Illegal { action: "pause", state })?;
        signal_all(&live, libc::SIGSTOP);
        Ok(g.status.clone())
    }

    pub fn resume(&self, id: &str) -> Result<JobStatus, ControlError> {
        if !SUPPORTS_SUSPEND {
            return Err(ControlError::Unsupported);
        }
        let job = self.job(id)?;
        let mut g = job.lock();
        if g.status.state != JobState::Paused {
            return Err(ControlError::Illegal { action: "resume", state: g.status.state });
        }
        transition(&job, &mut g, JobState::Running).map_err(|state| ControlError::Illegal { action: "resume", state })?;
        signal_all(&g.live, libc::SIGCONT);
        Ok(g.status.clone())
    }

    pub fn cancel(&self, id: &str) -> Result<JobStatus, ControlError> {
        let job = self.job(id)?;
        let mut sched = self.inner.sched.lock().unwrap();
        let mut g = job.lock();
        let was = g.status.state;
        let snapshot =
            transition(&job, &mut g, JobState::Cancelled).map_err(|state| ControlError::Illegal { action: "cancel", state })?;
        if was == JobState::Queued {
            sched.queue.retain(|q| q != id);
            g.finished = true;
        }
        drop(sched);
        signal_all(&g.live, libc::SIGKILL);
        let out = g.status.clone();
        drop(g);
        if let Some(s) = snapshot {
            notify::fire(&*self.inner.notifier, &s);
        }
        Ok(out)
    }

    pub fn status(&self, id: &str) -> Result<JobStatus, ControlError> {
        Ok(self.job(id)?.lock().status.clone())
    }

    /// All jobs, oldest first.
    pub fn list(&self) -> Vec<JobStatus> {
        let jobs: Vec<Arc<Job>> = self.inner.sched.lock().unwrap().jobs.values().cloned().collect();
        let mut out: Vec<JobStatus> = jobs.iter().map(|j| j.lock().status.clone()).collect();
        out.sort_by(|a, b| a.created.cmp(&b.created).then(a.id.cmp(&b.id)));
        out
    }

    /// Every state change the job went through.
    pub fn history(&self, id: &str) -> Result<Vec<(JobState, JobState)>, ControlError> {
        Ok(self.job(id)?.lock().history.clone())
    }

    /// Number of processes started for the job.
    pub fn spawned(&self, id: &str) -> Result<usize, ControlError> {
        Ok(self.job(id)?.lock().spawned)
    }

    pub fn job_dir(&self, id: &str) -> Result<PathBuf, ControlError> {
        Ok(self.job(id)?.dir.clone())
    }

    /// Blocks until the job is terminal and its processes are reaped.
    pub fn wait(&self, id: &str, timeout: Duration) -> Result<Option<JobStatus>, ControlError> {
        let job = self.job(id)?;
        let deadline = Instant::now() + timeout;
        let mut g = job.lock();
        loop {
            if g.status.state.is_terminal() && g.finished {
                return Ok(Some(g.status.clone()));
            }
            let left = deadline.saturating_duration_since(Instant::now());
            if left.is_zero() {
                return Ok(None);
            }
            g = job.cv.wait_timeout(g, left).unwrap_or_else(|e| e.into_inner()).0;
        }
    }

    /// Last `max` bytes of each step's stdout and stderr logs.
    pub fn log_tails(&self, id: &str, max: usize) -> Result<Vec<(String, String)>, ControlError> {
        let job = self.job(id)?;
        let n = job.lock().status.steps.len();
        Ok((0..n)
            .map(|i| {
                let d = job::step_dir(&job.dir, i);
                (job::tail(&d.join(STDOUT_LOG), max), job::tail(&d.join(STDERR_LOG), max))
            })
            .collect())
    }

    pub fn files(&self, id: &str) -> Result<Vec<FileEntry>, ControlError> {
        let job = self.job(id)?;
        let mut out: Vec<FileEntry> = walkdir::WalkDir::new(&job.dir)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .filter_map(|e| {
                let rel = e.path().strip_prefix(&job.dir).ok()?.to_str()?.to_string();
                if rel.starts_with('.') {
                    return None;
                }
                Some(FileEntry {
                    path: rel,
                    size: e.metadata().map(|m| m.len()).unwrap_or(0),
                })
            })
            .collect();
        out.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(out)
    }

    /// Resolves a relative name to a file inside the job directory.
    pub fn file_path(&self, id: &str, name: &str) -> Result<Option<PathBuf>, ControlError> {
        let job = self.job(id)?;
        Ok(confine(&job.dir, name))
    }

    fn run(&self, job: &Job) {
        let plan = job.plan.clone().unwrap_or_default();
        let mut failed = false;
        for group in &plan.groups {
            if !self.wait_unpaused(job) {
                break;
            }
            failed = !self.run_group(job, &plan, &group.steps);
            if failed {
                break;
            }
        }
        if !self.wait_unpaused(job) {
            return;
        }
        let mut g = job.lock();
        let target = if failed { JobState::Failed } else { JobState::Done };
        if let Ok(Some(snapshot)) = transition(job, &mut g, target) {
            drop(g);
            tracing::info!(job = %job.id, state = %target, "job finished");
            notify::fire(&*self.inner.notifier, &snapshot);
        }
    }

    /// Waits out a pause. False once the job has been cancelled.
    fn wait_unpaused(&self, job: &Job) -> bool {
        let mut g = job.lock();
        while g.status.state == JobState::Paused {
            g = job.cv.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        g.status.state == JobState::Running
    }

    fn step_failed(&self, job: &Job, index: usize, message: String) {
        tracing::warn!(job = %job.id, step = index, "{message}");
        let d = job::step_dir(&job.dir, index);
        let _ = fs::create_dir_all(&d);
        let _ = fs::write(d.join(STDERR_LOG), format!("{message}\n"));
        let mut g = job.lock();
        let s = &mut g.status.steps[index];
        s.state = StepState::Failed;
        s.error = Some(message);
        s.ended = Some(now());
        save(job, &g);
    }

    fn prepare(&self, job: &Job, plan: &ExecutionPlan, step: &PlannedStep) -> Result<PathBuf, String> {
        let dir = job::step_dir(&job.dir, step.index);
        fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
        let uploads = job.dir.join(UPLOAD_DIR);
        for f in &step.command.input_files {
            let src = uploads.join(sanitize_filename(&f.token).unwrap_or_default());
            fs::copy(&src, dir.join(&f.destination)).map_err(|e| format!("cannot stage '{}': {e}", f.token))?;
        }
        for h in plan.handoffs.iter().filter(|h| h.to_step == step.index) {
            let src = job::step_dir(&job.dir, h.from_step).join(&h.from_file);
            fs::copy(&src, dir.join(&h.to_file))
                .map_err(|e| format!("step {} did not produce '{}': {e}", h.from_step + 1, h.from_file))?;
        }
        if let Some(cfg) = &step.command.config_file {
            fs::write(dir.join(&cfg.filename), &cfg.content).map_err(|e| format!("cannot write {}: {e}", cfg.filename))?;
        }
        Ok(dir)
    }

    /// Runs one process group to completion. False when any step failed.
    fn run_group(&self, job: &Job, plan: &ExecutionPlan, steps: &[PlannedStep]) -> bool {
        let mut children: Vec<(usize, Child)> = Vec::new();
        let mut ok = true;
        let mut prev_stdout = None;
        for step in steps {
            let dir = match self.prepare(job, plan, step) {
                Ok(d) => d,
                Err(msg) => {
                    self.step_failed(job, step.index, msg);
                    ok = false;
                    break;
                }
            };
            let cmd = &step.command;
            let plugin_dir = self
                .inner
                .registry
                .get(&step.plugin_id)
                .map(|p| p.dir().to_path_buf())
                .unwrap_or_default();
            let Some(program) = find_program(&cmd.program, &plugin_dir, self.inner.path_var.as_deref()) else {
                self.step_failed(job, step.index, format!("SPAWN_FAILURE: program '{}' not found", cmd.program));
                ok = false;
                break;
            };
            let open = |name: &str| File::create(dir.join(name));
            let stdout: Stdio = match &cmd.stdout_to {
                StdoutTarget::Pipe => Stdio::piped(),
                StdoutTarget::File(name) => match open(name) {
                    Ok(f) => f.into(),
                    Err(e) => {
                        self.step_failed(job, step.index, format!("cannot create {name}: {e}"));
                        ok = false;
                        break;
                    }
                },
                StdoutTarget::None => match open(STDOUT_LOG) {
                    Ok(f) => f.into(),
                    Err(e) => {
                        self.step_failed(job, step.index, format!("cannot create {STDOUT_LOG}: {e}"));
                        ok = false;
                        break;
                    }
                },
            };
            let stderr: Stdio = match open(STDERR_LOG) {
                Ok(f) => f.into(),
                Err(e) => {
                    self.step_failed(job, step.index, format!("cannot create {STDERR_LOG}: {e}"));
                    ok = false;
                    break;
                }
            };
            let stdin: Stdio = match (cmd.stdin_from, prev_stdout.take()) {
                (StdinSource::Pipe, Some(out)) => Stdio::from(out),
                _ => Stdio::null(),
            };
            let mut command = Command::new(&program);
            command
                .args(&cmd.argv)
                .current_dir(&dir)
                .env_clear()
                .env("TMPDIR", &dir)
                .stdin(stdin)
                .stdout(stdout)
                .stderr(stderr)
                .process_group(0);
            if let Some(p) = &self.inner.path_var {
                command.env("PATH", p);
            }
            if let Some(h) = std::env::var_os("HOME") {
                command.env("HOME", h);
            }

            let mut g = job.lock();
            if g.status.state == JobState::Cancelled {
                ok = false;
                break;
            }
            match command.spawn() {
                Ok(mut child) => {
                    let pid = child.id() as i32;
                    g.live.push(pid);
                    g.spawned += 1;
                    if g.status.state == JobState::Paused {
                        signal_all(&[pid], libc::SIGSTOP);
                    }
                    let s = &mut g.status.steps[step.index];
                    s.state = StepState::Running;
                    s.started = Some(now());
                    save(job, &g);
                    drop(g);
                    prev_stdout = child.stdout.take();
                    children.push((step.index, child));
                }
                Err(e) => {
                    drop(g);
                    self.step_failed(job, step.index, format!("SPAWN_FAILURE: cannot start '{}': {e}", cmd.program));
                    ok = false;
                    break;
                }
            }
        }
        drop(prev_stdout);
        if !ok {
            // A broken group: stop whatever already started.
            let g = job.lock();
            let pids: Vec<i32> = children.iter().map(|(_, c)| c.id() as i32).collect();
            signal_all(&pids, libc::SIGKILL);
            drop(g);
        }
        for (index, mut child) in children {
            let status = child.wait();
            let mut g = job.lock();
            let pid = child.id() as i32;
            g.live.retain(|p| *p != pid);
            let cancelled = g.status.state == JobState::Cancelled;
            let s = &mut g.status.steps[index];
            s.ended = Some(now());
            match status {
                Ok(st) if st.code() == Some(0) => {
                    s.exit_code = Some(0);
                    s.state = StepState::Done;
                }
                Ok(st) => {
                    s.exit_code = st.code();
                    s.state = if cancelled { StepState::Cancelled } else { StepState::Failed };
                    if let Some(sig) = st.signal() {
                        s.error = Some(format!("terminated by signal {sig}"));
                    }
                    ok = false;
                }
                Err(e) => {
                    s.state = StepState::Failed;
                    s.error = Some(e.to_string());
                    ok = false;
                }
            }
            save(job, &g);
        }
        ok
    }
}

/// Joins a client-supplied relative path under `root`, refusing anything that escapes it.
pub fn confine(root: &Path, name: &str) -> Option<PathBuf> {
    let rel = Path::new(name);
    if name.is_empty() || !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    let full = root.join(rel).canonicalize().ok()?;
    let root = root.canonicalize().ok()?;
    (full.starts_with(&root) && full.is_file()).then_some(full)
}
