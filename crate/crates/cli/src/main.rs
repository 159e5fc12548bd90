use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use pline_core::pipeline::{export_pipeline, import_pipeline, ImportOptions, PipelineSpec};
use pline_core::spec::validate_plugin;
use pline_core::synth::{render_preview, synthesize};
use pline_core::{apply_input, apply_preset, parse_plugin_with, resolve, ParseOptions, SessionState};
use pline_server::http::{build_state, serve};
use pline_server::{JobManager, JobState, ManagerOptions, Registry, ServerConfig, Upload, UploadSource};

/// Turn command-line program descriptors into runnable interfaces and pipelines.
#[derive(Parser)]
#[command(name = "pline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and check descriptors.
    Validate {
        #[arg(required = true)]
        descriptors: Vec<PathBuf>,
        /// Report unknown fields as warnings instead of errors.
        #[arg(long)]
        lax: bool,
    },
    /// Print the command a descriptor would run, without running it.
    Dryrun {
        descriptor: PathBuf,
        /// Input value, `id=value`. Repeatable.
        #[arg(long = "set", value_name = "ID=VALUE")]
        set: Vec<String>,
        /// Apply a preset before the `--set` values.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Run a pipeline document locally.
    Run {
        pipeline: PathBuf,
        /// File for a FILE input, `[step:]id=path` (steps count from 1). Repeatable.
        #[arg(long = "input", value_name = "[STEP:]ID=PATH")]
        inputs: Vec<String>,
        #[arg(long, env = "PLINE_PLUGIN_DIR", default_value = "plugins")]
        plugins: PathBuf,
        #[arg(long, env = "PLINE_WORK_DIR", default_value = "pline-work")]
        work_dir: PathBuf,
        /// Accept plugins whose version differs from the document.
        #[arg(long)]
        lax_versions: bool,
    },
    /// Start the job server.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Copy a pipeline with its descriptors and programs into a self-contained directory.
    Bundle {
        pipeline: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "PLINE_PLUGIN_DIR", default_value = "plugins")]
        plugins: PathBuf,
        /// Web client assets to include.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve { .. }) { "info" } else { "warn" };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default_level.into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let res = match cli.command {
        Command::Validate { descriptors, lax } => validate(&descriptors, lax),
        Command::Dryrun { descriptor, set, preset } => dryrun(&descriptor, &set, preset.as_deref()),
        Command::Run {
            pipeline,
            inputs,
            plugins,
            work_dir,
            lax_versions,
        } => run(&pipeline, &inputs, &plugins, &work_dir, lax_versions),
        Command::Serve { config } => serve_cmd(&config),
        Command::Bundle {
            pipeline,
            out,
            plugins,
            static_dir,
        } => bundle(&pipeline, &out, &plugins, static_dir.as_deref()),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn validate(paths: &[PathBuf], lax: bool) -> Result<bool> {
    let mut ok = true;
    for path in paths {
        let prefix = if paths.len() > 1 { format!("{}: ", path.display()) } else { String::new() };
        match parse_plugin_with(&read(path)?, ParseOptions { lax }) {
            Ok(parsed) => {
                for w in parsed.warnings.iter().chain(validate_plugin(&parsed.spec).iter()) {
                    println!("{prefix}{w}");
                }
                println!("{prefix}OK");
            }
            Err(e) => {
                println!("{prefix}{e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=').ok_or_else(|| anyhow!("expected ID=VALUE, got '{s}'"))
}

fn dryrun(path: &Path, sets: &[String], preset: Option<&str>) -> Result<bool> {
    let spec = parse_plugin_with(&read(path)?, ParseOptions::default())
        .map_err(|e| anyhow!("{}: {e}", path.display()))?
        .spec;
    let mut state = SessionState::default();
    if let Some(p) = preset {
        state = apply_preset(&spec, &state, p)?;
    }
    for s in sets {
        let (id, raw) = split_assignment(s)?;
        let input = spec.input(id).ok_or_else(|| anyhow!("unknown input '{id}'"))?;
        let value = input.coerce_str(raw).map_err(|e| anyhow!("{e}"))?;
        state = apply_input(&spec, &state, id, value)?;
    }
    let resolved = resolve(&spec, &state);
    match synthesize(&spec, &resolved) {
        Ok(plan) => {
            println!("{}", render_preview(&plan));
            if let Some(cfg) = &plan.config_file {
                println!("# {}", cfg.filename);
                print!("{}", cfg.content);
            }
            Ok(true)
        }
        Err(not_ready) => {
            for e in not_ready.errors {
                eprintln!("{e}");
            }
            Ok(false)
        }
    }
}

/// Applies `--input [step:]id=path` to the pipeline and returns the uploads.
fn attach_inputs(pipeline: &mut PipelineSpec, reg: &Registry, inputs: &[String]) -> Result<Vec<Upload>> {
    let mut uploads = Vec::new();
    for arg in inputs {
        let (target, path) = split_assignment(arg)?;
        let (step, id) = match target.split_once(':') {
            Some((n, id)) => {
                let n: usize = n.parse().map_err(|_| anyhow!("bad step number in '{arg}'"))?;
                if n == 0 || n > pipeline.steps.len() {
                    bail!("step {n} does not exist");
                }
                (n - 1, id)
            }
            None => {
                let found = pipeline
                    .steps
                    .iter()
                    .position(|s| reg.get(&s.plugin_id).is_some_and(|p| p.spec.input(target).is_some()));
                (found.ok_or_else(|| anyhow!("no step has an input '{target}'"))?, target)
            }
        };
        let name = Path::new(path)
            .file_name()
            .and_then(|n| n.to_str())
            .ok_or_else(|| anyhow!("'{path}' is not a file path"))?
            .to_string();
        let s = &mut pipeline.steps[step];
        let spec = &reg.get(&s.plugin_id).ok_or_else(|| anyhow!("unknown plugin '{}'", s.plugin_id))?.spec;
        s.session = apply_input(spec, &s.session, id, pline_core::Value::file(&name))?;
        uploads.push(Upload {
            name,
            source: UploadSource::Path(PathBuf::from(path)),
        });
    }
    Ok(uploads)
}

fn run(pipeline_path: &Path, inputs: &[String], plugins: &Path, work_dir: &Path, lax_versions: bool) -> Result<bool> {
    let reg = Arc::new(Registry::load(plugins));
    for d in &reg.diagnostics {
        eprintln!("warning: {d}");
    }
    let mut pipeline = import_pipeline(&read(pipeline_path)?, &*reg, ImportOptions { lax_versions })?;
    let uploads = attach_inputs(&mut pipeline, &reg, inputs)?;
    let manager = JobManager::open(reg, ManagerOptions::new(work_dir, 1))?;
    let id = match manager.submit(&pipeline, uploads) {
        Ok(id) => id,
        Err(e) => {
            for m in e.messages() {
                eprintln!("{m}");
            }
            return Ok(false);
        }
    };
    println!("job {id} QUEUED");
    let mut last = manager.status(&id)?;
    loop {
        let done = manager.wait(&id, Duration::from_millis(100))?;
        let now = manager.status(&id)?;
        for (i, (a, b)) in last.steps.iter().zip(&now.steps).enumerate() {
            if a.state != b.state {
                let code = b.exit_code.map(|c| format!(" (exit {c})")).unwrap_or_default();
                println!("step {} {} {}{code}", i + 1, b.plugin_id, b.state);
            }
        }
        if now.state != last.state {
            println!("job {id} {}", now.state);
        }
        last = now;
        if let Some(fin) = done {
            for (i, s) in fin.steps.iter().enumerate() {
                if let Some(err) = &s.error {
                    eprintln!("step {}: {err}", i + 1);
                }
            }
            println!("work directory: {}", manager.job_dir(&id)?.display());
            return Ok(fin.state == JobState::Done);
        }
    }
}

fn serve_cmd(config: &Path) -> Result<bool> {
    let mut cfg = ServerConfig::load(config)?;
    cfg.apply_env(|k| std::env::var(k).ok())?;
    cfg.validate()?;
    let state = build_state(&cfg)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&cfg.listen)
            .await
            .with_context(|| format!("cannot listen on {}", cfg.listen))?;
        let url = format!("http://{}/", listener.local_addr()?);
        println!("listening on {url}");
        tracing::info!(plugins = state.manager.registry().plugins.len(), "server ready");
        if cfg.open_browser {
            open_browser(&url);
        }
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        serve(listener, state, cfg.static_dir.clone(), shutdown).await?;
        Ok(true)
    })
}

fn open_browser(url: &str) {
    let opener = if cfg!(target_os = "macos") { "open" } else { "xdg-open" };
    if let Err(e) = std::process::Command::new(opener).arg(url).spawn() {
        tracing::warn!("cannot open a browser: {e}");
    }
}

fn copy_tree(from: &Path, to: &Path) -> Result<()> {
    for entry in walkdir::WalkDir::new(from) {
        let entry = entry?;
        let rel = entry.path().strip_prefix(from)?;
        let dest = to.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&dest)?;
        } else {
            std::fs::copy(entry.path(), &dest).with_context(|| format!("cannot copy {}", entry.path().display()))?;
        }
    }
    Ok(())
}

fn bundle(pipeline_path: &Path, out: &Path, plugins: &Path, static_dir: Option<&Path>) -> Result<bool> {
    let reg = Registry::load(plugins);
    let pipeline = import_pipeline(&read(pipeline_path)?, &reg, ImportOptions::default())?;
    let plugin_out = out.join("plugins");
    std::fs::create_dir_all(&plugin_out)?;
    let mut copied = BTreeMap::new();
    for step in &pipeline.steps {
        if copied.contains_key(&step.plugin_id) {
            continue;
        }
        let p = reg.get(&step.plugin_id).expect("imported against this registry");
        let dir = plugin_out.join(&step.plugin_id);
        std::fs::create_dir_all(&dir)?;
        let file = p.path.file_name().expect("descriptor file name");
        std::fs::copy(&p.path, dir.join(file))?;
        // Programs shipped next to the descriptor travel with it.
        let program = p.dir().join(&p.spec.program);
        if !p.spec.program.contains('/') && program.is_file() {
            std::fs::copy(&program, dir.join(&p.spec.program))?;
        }
        copied.insert(step.plugin_id.clone(), dir);
    }
    let doc = serde_json::to_string_pretty(&export_pipeline(&pipeline))? + "\n";
    std::fs::write(out.join("pipeline.json"), doc)?;
    let mut cfg = serde_json::json!({
        "listen": "127.0.0.1:8080",
        "plugin_dir": "plugins",
        "work_dir": "work",
        "max_jobs": 2,
    });
    if let Some(s) = static_dir {
        copy_tree(s, &out.join("static"))?;
        cfg["static_dir"] = "static".into();
    }
    std::fs::write(out.join("pline.json"), serde_json::to_string_pretty(&cfg)? + "\n")?;
    println!("bundled {} plugin(s) into {}", copied.len(), out.display());
    Ok(true)
}
