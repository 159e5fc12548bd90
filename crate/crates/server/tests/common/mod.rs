#![allow(dead_code)]

use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::sync::Arc;

use pline_core::pipeline::{add_step, FileSource, PipelineSpec};
use pline_core::{apply_input, Value};
use pline_server::{JobManager, ManagerOptions, Registry};

/// Writes a descriptor and an executable script next to it.
pub fn plugin(dir: &Path, id: &str, script: &str, descriptor: serde_json::Value) {
    let d = dir.join(id);
    std::fs::create_dir_all(&d).unwrap();
    let prog = d.join(format!("{id}.sh"));
    std::fs::write(&prog, format!("#!/bin/sh\n{script}\n")).unwrap();
    std::fs::set_permissions(&prog, std::fs::Permissions::from_mode(0o755)).unwrap();
    let mut doc = descriptor;
    doc["id"] = id.into();
    doc["program"] = format!("{id}.sh").into();
    std::fs::write(d.join(format!("{id}.json")), doc.to_string()).unwrap();
}

/// The plugins used across the server tests.
pub fn standard_plugins(dir: &Path) {
    use serde_json::json;
    plugin(dir, "sleeper", r#"sleep "$1"; echo woke"#, json!({"name": "Sleeper", "options": [{"number": "", "id": "secs", "default": 0.3}]}));
    plugin(dir, "failer", "echo bad >&2; exit 3", json!({"name": "Failer", "options": []}));
    plugin(
        dir,
        "copier",
        r#"cat "$1""#,
        json!({"name": "Copier", "outputs": [{"id": "out", "file": "copy.txt", "stdout": true}],
               "options": [{"file": "", "id": "input", "required": "Input file missing!"}]}),
    );
    plugin(
        dir,
        "lines",
        r#"i=0; while [ $i -lt "$1" ]; do i=$((i+1)); echo "line $i"; done"#,
        json!({"name": "Lines", "outputs": [{"id": "out", "file": "lines.txt", "stdout": true}],
               "options": [{"number": "", "id": "n", "default": 5}]}),
    );
    plugin(dir, "argdump", r#"for a in "$@"; do printf '[%s]\n' "$a"; done"#, json!({"name": "Args", "options": [{"text": "", "id": "msg"}]}));
}

pub struct Env {
    pub root: tempfile::TempDir,
    pub manager: JobManager,
}

impl Env {
    pub fn new(max_jobs: usize) -> Env {
        let root = tempfile::tempdir().unwrap();
        standard_plugins(&root.path().join("plugins"));
        let manager = open(root.path(), max_jobs);
        Env { root, manager }
    }

    pub fn registry(&self) -> &Registry {
        self.manager.registry()
    }

    pub fn pipeline(&self, steps: &[&str]) -> PipelineSpec {
        steps.iter().fold(PipelineSpec::default(), |p, id| add_step(&p, id, self.registry()).unwrap())
    }

    pub fn set(&self, p: &mut PipelineSpec, step: usize, id: &str, v: Value) {
        let spec = &self.registry().get(&p.steps[step].plugin_id).unwrap().spec;
        p.steps[step].session = apply_input(spec, &p.steps[step].session, id, v).unwrap();
    }

    pub fn bind(&self, p: &mut PipelineSpec, step: usize, id: &str, src: FileSource) {
        p.steps[step].bindings.insert(id.into(), src);
    }
}

pub fn open(root: &Path, max_jobs: usize) -> JobManager {
    let reg = Arc::new(Registry::load(&root.join("plugins")));
    JobManager::open(reg, ManagerOptions::new(root.join("work"), max_jobs)).unwrap()
}
