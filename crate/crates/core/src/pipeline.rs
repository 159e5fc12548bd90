//! Linear pipelines of plugin steps and their execution plans.
//!
//! A FILE input of a step can take an uploaded file, a file output of an
//! earlier step, or the standard output of the step right before it. Pipe
//! bindings fuse adjacent steps into one process group; file bindings split
//! groups and become handoffs copied between step directories.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::resolver::{import_session_json, resolve, SessionError, SessionState};
use crate::spec::{InputKind, PluginSpec};
use crate::synth::{synthesize_with, CommandPlan, StdinSource, StdoutTarget};
use crate::value::Value;

/// Read access to registered plugin specs.
pub trait SpecSource {
    fn spec(&self, id: &str) -> Option<&PluginSpec>;
}

impl SpecSource for BTreeMap<String, PluginSpec> {
    fn spec(&self, id: &str) -> Option<&PluginSpec> {
        self.get(id)
    }
}

impl SpecSource for HashMap<String, PluginSpec> {
    fn spec(&self, id: &str) -> Option<&PluginSpec> {
        self.get(id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FileSource {
    Upload,
    StepOutput { step: usize, output: String },
    /// Standard output of the immediately preceding step.
    Pipe,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub plugin_id: String,
    pub plugin_version: Option<String>,
    pub session: SessionState,
    /// FILE input id -> where its file comes from; unbound inputs are uploads.
    pub bindings: BTreeMap<String, FileSource>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineSpec {
    pub name: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlannedStep {
    pub index: usize,
    pub plugin_id: String,
    pub command: CommandPlan,
}

/// Steps connected stdout -> stdin, started together.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProcessGroup {
    pub steps: Vec<PlannedStep>,
}

/// A producer's output file copied into a later step's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Handoff {
    pub from_step: usize,
    pub from_file: String,
    pub to_step: usize,
    pub to_file: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ExecutionPlan {
    pub groups: Vec<ProcessGroup>,
    pub handoffs: Vec<Handoff>,
}

impl ExecutionPlan {
    pub fn step_count(&self) -> usize {
        self.groups.iter().map(|g| g.steps.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlanErrorCode {
    UnknownPlugin,
    ForwardRef,
    DoublePipe,
    BadBinding,
    PipeSource,
    NotReady,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PlanDiagnostic {
    pub step: usize,
    pub code: PlanErrorCode,
    pub message: String,
    /// Blocking validation messages for NOT_READY.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

impl PlanDiagnostic {
    fn new(step: usize, code: PlanErrorCode, message: impl Into<String>) -> Self {
        PlanDiagnostic {
            step,
            code,
            message: message.into(),
            errors: Vec::new(),
        }
    }
}

impl std::fmt::Display for PlanDiagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "step {}: {}", self.step + 1, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PipelineError {
    #[error("unknown plugin '{0}'")]
    UnknownPlugin(String),
    #[error("plugin '{plugin}' is version {registered}, pipeline expects {requested}")]
    VersionMismatch {
        plugin: String,
        requested: String,
        registered: String,
    },
    #[error("malformed pipeline document: {0}")]
    Syntax(String),
    #[error("step {}: {source}", step + 1)]
    Session { step: usize, source: SessionError },
}

/// Appends an empty step for a registered plugin.
pub fn add_step(pipeline: &PipelineSpec, plugin_id: &str, specs: &dyn SpecSource) -> Result<PipelineSpec, PipelineError> {
    let spec = specs
        .spec(plugin_id)
        .ok_or_else(|| PipelineError::UnknownPlugin(plugin_id.to_string()))?;
    let mut next = pipeline.clone();
    next.steps.push(Step {
        plugin_id: spec.id.clone(),
        plugin_version: spec.version.clone(),
        session: SessionState::default(),
        bindings: BTreeMap::new(),
    });
    Ok(next)
}

/// Partitions the pipeline into process groups and synthesizes every step.
pub fn plan(pipeline: &PipelineSpec, specs: &dyn SpecSource) -> Result<ExecutionPlan, Vec<PlanDiagnostic>> {
    let mut diags = Vec::new();
    let mut planned: Vec<Option<PlannedStep>> = Vec::new();
    let mut output_names: Vec<BTreeMap<String, String>> = Vec::new();
    let mut handoffs = Vec::new();
    let mut piped_from_prev = vec![false; pipeline.steps.len()];

    for (i, step) in pipeline.steps.iter().enumerate() {
        let Some(spec) = specs.spec(&step.plugin_id) else {
            diags.push(PlanDiagnostic::new(i, PlanErrorCode::UnknownPlugin, format!("unknown plugin '{}'", step.plugin_id)));
            planned.push(None);
            output_names.push(BTreeMap::new());
            continue;
        };
        let mut state = step.session.clone();
        let mut stdin_inputs = BTreeSet::new();
        let mut file_inputs: BTreeMap<String, (usize, String)> = BTreeMap::new();
        let mut pipes = 0;
        let mut ok = true;
        for (input_id, source) in &step.bindings {
            if !spec.input(input_id).is_some_and(|inp| inp.kind == InputKind::File) {
                diags.push(PlanDiagnostic::new(i, PlanErrorCode::BadBinding, format!("'{input_id}' is not a file input of '{}'", spec.id)));
                ok = false;
                continue;
            }
            match source {
                FileSource::Upload => {}
                FileSource::StepOutput { step: j, output } => {
                    if *j >= i {
                        diags.push(PlanDiagnostic::new(
                            i,
                            PlanErrorCode::ForwardRef,
                            format!("'{input_id}' reads from step {}, which does not run before step {}", j + 1, i + 1),
                        ));
                        ok = false;
                        continue;
                    }
                    let producer = specs.spec(&pipeline.steps[*j].plugin_id);
                    if producer.is_some_and(|p| !p.outputs.iter().any(|o| &o.id == output)) {
                        diags.push(PlanDiagnostic::new(i, PlanErrorCode::BadBinding, format!("step {} has no output '{output}'", j + 1)));
                        ok = false;
                        continue;
                    }
                    match output_names[*j].get(output) {
                        Some(name) => {
                            state.values.insert(input_id.clone(), Value::File(name.clone()));
                            file_inputs.insert(input_id.clone(), (*j, name.clone()));
                        }
                        None => ok = false,
                    }
                }
                FileSource::Pipe => {
                    pipes += 1;
                    if i == 0 {
                        diags.push(PlanDiagnostic::new(i, PlanErrorCode::ForwardRef, format!("'{input_id}' is piped but there is no previous step")));
                        ok = false;
                        continue;
                    }
                    let producer = specs.spec(&pipeline.steps[i - 1].plugin_id);
                    let stdout = producer.and_then(|p| p.outputs.iter().find(|o| o.is_stdout));
                    match (producer, stdout) {
                        (Some(_), None) => {
                            diags.push(PlanDiagnostic::new(
                                i,
                                PlanErrorCode::PipeSource,
                                format!("step {} does not write to standard output", i),
                            ));
                            ok = false;
                        }
                        (None, _) => ok = false,
                        (Some(_), Some(out)) => {
                            let name = output_names[i - 1].get(&out.id).cloned().unwrap_or_else(|| "stdin".into());
                            state.values.insert(input_id.clone(), Value::File(name));
                            stdin_inputs.insert(input_id.clone());
                        }
                    }
                }
            }
        }
        if pipes > 1 {
            diags.push(PlanDiagnostic::new(i, PlanErrorCode::DoublePipe, "more than one input reads the pipe"));
            ok = false;
        }
        piped_from_prev[i] = pipes > 0;

        let resolved = resolve(spec, &state);
        output_names.push(resolved.output_names.clone());
        if !ok {
            planned.push(None);
            continue;
        }
        match synthesize_with(spec, &resolved, &stdin_inputs) {
            Ok(mut command) => {
                if !stdin_inputs.is_empty() {
                    command.stdin_from = StdinSource::Pipe;
                }
                command.input_files.retain(|f| match file_inputs.get(&f.input) {
                    Some((from_step, from_file)) => {
                        handoffs.push(Handoff {
                            from_step: *from_step,
                            from_file: from_file.clone(),
                            to_step: i,
                            to_file: f.destination.clone(),
                        });
                        false
                    }
                    None => true,
                });
                planned.push(Some(PlannedStep {
                    index: i,
                    plugin_id: spec.id.clone(),
                    command,
                }));
            }
            Err(not_ready) => {
                let mut d = PlanDiagnostic::new(
                    i,
                    PlanErrorCode::NotReady,
                    format!("'{}' is not ready: {}", spec.id, not_ready.errors.join("; ")),
                );
                d.errors = not_ready.errors;
                diags.push(d);
                planned.push(None);
            }
        }
    }

    // Groups follow bindings alone.
    let mut group_of = vec![0usize; pipeline.steps.len()];
    let mut group = 0;
    for i in 0..pipeline.steps.len() {
        if i > 0 && !piped_from_prev[i] {
            group += 1;
        }
        group_of[i] = group;
    }
    for h in &handoffs {
        if group_of[h.from_step] == group_of[h.to_step] {
            diags.push(PlanDiagnostic::new(
                h.to_step,
                PlanErrorCode::ForwardRef,
                format!("step {} reads a file from step {} in the same piped group", h.to_step + 1, h.from_step + 1),
            ));
        }
        let producer_piped = h.from_step + 1 < piped_from_prev.len() && piped_from_prev[h.from_step + 1];
        if producer_piped {
            if let Some(Some(p)) = planned.get(h.from_step) {
                if p.command.stdout_to == StdoutTarget::File(h.from_file.clone()) {
                    diags.push(PlanDiagnostic::new(
                        h.to_step,
                        PlanErrorCode::BadBinding,
                        format!("output '{}' of step {} is piped and never written to disk", h.from_file, h.from_step + 1),
                    ));
                }
            }
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let mut steps: Vec<PlannedStep> = planned.into_iter().map(|p| p.expect("no diagnostics")).collect();
    for i in 1..steps.len() {
        if piped_from_prev[i] {
            steps[i - 1].command.stdout_to = StdoutTarget::Pipe;
        }
    }
    let mut groups: Vec<ProcessGroup> = Vec::new();
    for (i, s) in steps.into_iter().enumerate() {
        if i > 0 && piped_from_prev[i] {
            groups.last_mut().unwrap().steps.push(s);
        } else {
            groups.push(ProcessGroup { steps: vec![s] });
        }
    }
    Ok(ExecutionPlan { groups, handoffs })
}

// ---------------------------------------------------------------------------
// Documents

fn session_json(step: &Step) -> Json {
    let mut m = Map::new();
    m.insert("plugin_id".into(), Json::String(step.plugin_id.clone()));
    m.insert("plugin_version".into(), step.plugin_version.clone().map_or(Json::Null, Json::String));
    m.insert("session_name".into(), Json::String(step.session.session_name.clone()));
    m.insert(
        "active_preset".into(),
        step.session.active_preset.clone().map_or(Json::Null, Json::String),
    );
    let values: Map<String, Json> = step.session.values.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
    m.insert("values".into(), Json::Object(values));
    Json::Object(m)
}

fn binding_json(src: &FileSource) -> Json {
    match src {
        FileSource::Upload => Json::String("upload".into()),
        FileSource::Pipe => Json::String("pipe".into()),
        FileSource::StepOutput { step, output } => {
            let mut m = Map::new();
            m.insert("step".into(), Json::from(*step));
            m.insert("output".into(), Json::String(output.clone()));
            Json::Object(m)
        }
    }
}

/// Pipeline document: `{name, steps: [{plugin_id, plugin_version, session, bindings}]}`.
pub fn export_pipeline(pipeline: &PipelineSpec) -> Json {
    let steps = pipeline
        .steps
        .iter()
        .map(|s| {
            let mut m = Map::new();
            m.insert("plugin_id".into(), Json::String(s.plugin_id.clone()));
            m.insert("plugin_version".into(), s.plugin_version.clone().map_or(Json::Null, Json::String));
            m.insert("session".into(), session_json(s));
            let bindings: Map<String, Json> = s.bindings.iter().map(|(k, v)| (k.clone(), binding_json(v))).collect();
            m.insert("bindings".into(), Json::Object(bindings));
            Json::Object(m)
        })
        .collect();
    let mut m = Map::new();
    m.insert("name".into(), Json::String(pipeline.name.clone()));
    m.insert("steps".into(), Json::Array(steps));
    Json::Object(m)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ImportOptions {
    /// Accept registered plugins whose version differs from the document's.
    pub lax_versions: bool,
}

pub fn import_pipeline(text: &str, specs: &dyn SpecSource, opts: ImportOptions) -> Result<PipelineSpec, PipelineError> {
    let doc: Json = serde_json::from_str(text).map_err(|e| PipelineError::Syntax(e.to_string()))?;
    import_pipeline_json(&doc, specs, opts)
}

pub fn import_pipeline_json(doc: &Json, specs: &dyn SpecSource, opts: ImportOptions) -> Result<PipelineSpec, PipelineError> {
    let syntax = |m: &str| PipelineError::Syntax(m.to_string());
    let obj = doc.as_object().ok_or_else(|| syntax("pipeline must be an object"))?;
    for k in obj.keys() {
        if k != "name" && k != "steps" {
            return Err(PipelineError::Syntax(format!("unknown field '{k}'")));
        }
    }
    let name = match obj.get("name") {
        None | Some(Json::Null) => String::new(),
        Some(Json::String(s)) => s.clone(),
        Some(_) => return Err(syntax("'name' must be a string")),
    };
    let steps_json = match obj.get("steps") {
        None => &Vec::new(),
        Some(Json::Array(a)) => a,
        Some(_) => return Err(syntax("'steps' must be an array")),
    };
    let mut steps = Vec::new();
    for (i, sj) in steps_json.iter().enumerate() {
        let so = sj.as_object().ok_or_else(|| PipelineError::Syntax(format!("step {} must be an object", i + 1)))?;
        for k in so.keys() {
            if !["plugin_id", "plugin_version", "session", "bindings"].contains(&k.as_str()) {
                return Err(PipelineError::Syntax(format!("step {}: unknown field '{k}'", i + 1)));
            }
        }
        let plugin_id = so
            .get("plugin_id")
            .and_then(Json::as_str)
            .ok_or_else(|| PipelineError::Syntax(format!("step {}: missing 'plugin_id'", i + 1)))?;
        let spec = specs
            .spec(plugin_id)
            .ok_or_else(|| PipelineError::UnknownPlugin(plugin_id.to_string()))?;
        let requested = match so.get("plugin_version") {
            None | Some(Json::Null) => None,
            Some(Json::String(v)) => Some(v.clone()),
            Some(_) => return Err(PipelineError::Syntax(format!("step {}: 'plugin_version' must be a string", i + 1))),
        };
        if requested != spec.version && !opts.lax_versions {
            return Err(PipelineError::VersionMismatch {
                plugin: plugin_id.to_string(),
                requested: requested.unwrap_or_else(|| "unversioned".into()),
                registered: spec.version.clone().unwrap_or_else(|| "unversioned".into()),
            });
        }
        let session = match so.get("session") {
            None | Some(Json::Null) => SessionState::default(),
            Some(sess) => {
                let mut sess = sess.clone();
                if opts.lax_versions {
                    if let Some(o) = sess.as_object_mut() {
                        o.insert("plugin_version".into(), spec.version.clone().map_or(Json::Null, Json::String));
                    }
                }
                import_session_json(spec, &sess).map_err(|source| PipelineError::Session { step: i, source })?
            }
        };
        let mut bindings = BTreeMap::new();
        match so.get("bindings") {
            None | Some(Json::Null) => {}
            Some(Json::Object(b)) => {
                for (input, src) in b {
                    let source = match src {
                        Json::String(s) if s == "upload" => FileSource::Upload,
                        Json::String(s) if s == "pipe" => FileSource::Pipe,
                        Json::Object(o) => {
                            let step = o.get("step").and_then(Json::as_u64);
                            let output = o.get("output").and_then(Json::as_str);
                            match (step, output, o.len()) {
                                (Some(step), Some(output), 2) => FileSource::StepOutput {
                                    step: step as usize,
                                    output: output.to_string(),
                                },
                                _ => return Err(PipelineError::Syntax(format!("step {}: binding '{input}' needs {{step, output}}", i + 1))),
                            }
                        }
                        _ => return Err(PipelineError::Syntax(format!("step {}: invalid binding for '{input}'", i + 1))),
                    };
                    bindings.insert(input.clone(), source);
                }
            }
            Some(_) => return Err(PipelineError::Syntax(format!("step {}: 'bindings' must be an object", i + 1))),
        }
        steps.push(Step {
            plugin_id: spec.id.clone(),
            plugin_version: spec.version.clone(),
            session,
            bindings,
        });
    }
    Ok(PipelineSpec { name, steps })
}
