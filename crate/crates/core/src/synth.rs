//! Program invocations synthesized from a resolved interface.
//!
//! A [`CommandPlan`] is an argv vector handed to process creation as-is.
//! Nothing here builds a string for a shell; [`render_preview`] output is for display only.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::names::{sanitize_filename, unique_name};
use crate::resolver::ResolvedInterface;
use crate::spec::{InputKind, LaunchMode, PluginSpec, ValueSeparator};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigFile {
    pub filename: String,
    pub content: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StdinSource {
    None,
    Pipe,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StdoutTarget {
    None,
    File(String),
    Pipe,
}

/// A file the step needs in its working directory before it starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputFile {
    pub input: String,
    /// The name the value refers to (an upload, or a producer's output name).
    pub token: String,
    /// Sanitized name inside the step directory.
    pub destination: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CommandPlan {
    pub program: String,
    pub argv: Vec<String>,
    pub config_file: Option<ConfigFile>,
    pub stdin_from: StdinSource,
    pub stdout_to: StdoutTarget,
    pub expected_outputs: Vec<String>,
    pub input_files: Vec<InputFile>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("not ready: {}", errors.join("; "))]
pub struct NotReady {
    pub errors: Vec<String>,
}

/// Argument emitted for a FILE input that reads the previous step's stdout.
pub const STDIN_ARG: &str = "-";

/// Synthesizes the invocation for a ready interface.
pub fn synthesize(spec: &PluginSpec, resolved: &ResolvedInterface) -> Result<CommandPlan, NotReady> {
    synthesize_with(spec, resolved, &BTreeSet::new())
}

/// Like [`synthesize`], with `stdin_inputs` naming FILE inputs fed from a pipe.
pub fn synthesize_with(
    spec: &PluginSpec,
    resolved: &ResolvedInterface,
    stdin_inputs: &BTreeSet<String>,
) -> Result<CommandPlan, NotReady> {
    if !resolved.ready {
        return Err(NotReady {
            errors: resolved.error_messages(),
        });
    }
    let merge_sources = spec.merge_sources();
    let resolved_by_id: HashMap<&str, _> = resolved.inputs.iter().map(|r| (r.id.as_str(), r)).collect();

    let mut input_files: Vec<InputFile> = Vec::new();
    // (argument name, flag, separator, value string or None for a bare flag)
    let mut contributions: Vec<(String, String, ValueSeparator, Option<String>)> = Vec::new();
    let mut reads_stdin = false;

    for input in spec.all_inputs() {
        if input.kind == InputKind::Group || merge_sources.contains(&input.id) {
            continue;
        }
        let Some(r) = resolved_by_id.get(input.id.as_str()) else { continue };
        if !r.is_active() {
            continue;
        }
        let text = match &r.value {
            None => continue,
            Some(Value::Bool(false)) => continue,
            Some(Value::Bool(true)) => None,
            Some(Value::File(token)) => {
                if stdin_inputs.contains(&input.id) {
                    reads_stdin = true;
                    Some(STDIN_ARG.to_string())
                } else {
                    let base = sanitize_filename(token).unwrap_or_else(|| "upload".into());
                    let dest = unique_name(&base, &|n| input_files.iter().any(|f| f.destination == n));
                    input_files.push(InputFile {
                        input: input.id.clone(),
                        token: token.clone(),
                        destination: dest.clone(),
                    });
                    Some(dest)
                }
            }
            Some(v) => Some(v.to_arg()),
        };
        let name = if input.flag.is_empty() { input.id.clone() } else { input.flag.clone() };
        contributions.push((name, input.flag.clone(), input.separator, text));
    }

    let mut argv = Vec::new();
    let mut config_file = None;
    match &spec.launch {
        LaunchMode::Args => {
            for (_, flag, sep, text) in contributions {
                match (flag.is_empty(), text) {
                    (false, None) => argv.push(flag),
                    (true, None) => argv.push("true".into()),
                    (true, Some(v)) => argv.push(v),
                    (false, Some(v)) => match sep {
                        ValueSeparator::Space => {
                            argv.push(flag);
                            argv.push(v);
                        }
                        ValueSeparator::Equals => argv.push(format!("{flag}={v}")),
                        ValueSeparator::None => argv.push(format!("{flag}{v}")),
                    },
                }
            }
        }
        LaunchMode::ConfigFile { separator } => {
            let mut content = String::new();
            for (name, _, _, text) in contributions {
                content.push_str(&name);
                content.push_str(separator);
                content.push_str(text.as_deref().unwrap_or("1"));
                content.push('\n');
            }
            let filename = format!("{}.cfg", sanitize_filename(&spec.id).unwrap_or_else(|| "plugin".into()));
            argv.push(filename.clone());
            config_file = Some(ConfigFile { filename, content });
        }
    }

    let expected_outputs: Vec<String> = spec
        .outputs
        .iter()
        .filter_map(|o| resolved.output_names.get(&o.id).cloned())
        .collect();
    let stdout_to = spec
        .outputs
        .iter()
        .find(|o| o.is_stdout)
        .and_then(|o| resolved.output_names.get(&o.id))
        .map_or(StdoutTarget::None, |n| StdoutTarget::File(n.clone()));

    Ok(CommandPlan {
        program: spec.program.clone(),
        argv,
        config_file,
        stdin_from: if reads_stdin { StdinSource::Pipe } else { StdinSource::None },
        stdout_to,
        expected_outputs,
        input_files,
    })
}

fn is_safe_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || "_@%+=:,./-".contains(c)
}

/// Quotes one argument for display in POSIX shell notation.
pub fn quote_arg(arg: &str) -> String {
    if !arg.is_empty() && arg.chars().all(is_safe_char) {
        return arg.to_string();
    }
    if arg.chars().any(char::is_control) {
        let mut s = String::from("$'");
        for c in arg.chars() {
            match c {
                '\n' => s.push_str("\\n"),
                '\t' => s.push_str("\\t"),
                '\r' => s.push_str("\\r"),
                '\'' => s.push_str("\\'"),
                '\\' => s.push_str("\\\\"),
                c if c.is_control() => s.push_str(&format!("\\x{:02x}", c as u32)),
                c => s.push(c),
            }
        }
        s.push('\'');
        return s;
    }
    format!("'{}'", arg.replace('\'', "'\\''"))
}

/// One-line, display-only rendering of a plan.
pub fn render_preview(plan: &CommandPlan) -> String {
    let mut parts = vec![quote_arg(&plan.program)];
    parts.extend(plan.argv.iter().map(|a| quote_arg(a)));
    if let StdoutTarget::File(f) = &plan.stdout_to {
        parts.push(">".into());
        parts.push(quote_arg(f));
    }
    parts.join(" ")
}
