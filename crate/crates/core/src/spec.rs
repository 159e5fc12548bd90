//! Plugin descriptors: the data model, the JSON parser and the canonical emitter.
//!
//! A descriptor names one executable and lists its inputs in command-line
//! order. Option records use the kind as key and the flag as value, e.g.
//! `{"checkbox": "--count", "title": "Count sequences"}`; an empty flag makes
//! the input positional.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::Serialize;
use serde_json::{Map, Number, Value as Json};
use thiserror::Error;

use crate::dsl::{self, Condition, Rule};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Text,
    Number,
    Bool,
    Select,
    File,
    Hidden,
    Group,
}

impl InputKind {
    /// Key used for the kind in option records.
    pub fn key(self) -> &'static str {
        match self {
            InputKind::Text => "text",
            InputKind::Number => "number",
            InputKind::Bool => "checkbox",
            InputKind::Select => "select",
            InputKind::File => "file",
            InputKind::Hidden => "hidden",
            InputKind::Group => "group",
        }
    }

    fn from_key(key: &str) -> Option<Self> {
        Some(match key {
            "text" => InputKind::Text,
            "number" => InputKind::Number,
            "checkbox" | "bool" => InputKind::Bool,
            "select" => InputKind::Select,
            "file" => InputKind::File,
            "hidden" => InputKind::Hidden,
            "group" => InputKind::Group,
            _ => return None,
        })
    }
}

impl fmt::Display for InputKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// How a named flag and its value are joined on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueSeparator {
    #[default]
    Space,
    Equals,
    None,
}

impl ValueSeparator {
    fn name(self) -> &'static str {
        match self {
            ValueSeparator::Space => "space",
            ValueSeparator::Equals => "equals",
            ValueSeparator::None => "none",
        }
    }
}

/// A fixed value or a rule that derives one.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueSource {
    Literal(Value),
    Rule(Rule),
}

impl ValueSource {
    pub fn references(&self) -> BTreeSet<String> {
        match self {
            ValueSource::Literal(_) => BTreeSet::new(),
            ValueSource::Rule(r) => r.references(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct NumberBounds {
    pub min: Option<Number>,
    pub max: Option<Number>,
    pub integer: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelectOption {
    pub label: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileFilter {
    /// Lower-case extensions including the leading dot.
    pub extensions: Vec<String>,
}

impl FileFilter {
    pub fn accepts(&self, filename: &str) -> bool {
        let lower = filename.to_lowercase();
        self.extensions.iter().any(|ext| lower.ends_with(ext))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMode {
    /// Joins the string forms of the set source values.
    Join,
    /// Joins the zero-based positions of the sources that are ticked.
    Indices,
}

/// Proxy input: several source inputs collapsed into one argument.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Merge {
    pub from: Vec<String>,
    pub mode: MergeMode,
    pub separator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InputDescriptor {
    pub id: String,
    pub kind: InputKind,
    /// Empty for positional arguments.
    pub flag: String,
    pub title: String,
    pub description: String,
    pub default: Option<ValueSource>,
    /// Message shown when the input is missing.
    pub required: Option<String>,
    pub enabled_when: Option<Rule>,
    pub visible_when: Option<Rule>,
    pub fix_value: Option<ValueSource>,
    pub select_options: Vec<SelectOption>,
    pub number_bounds: Option<NumberBounds>,
    pub filter: Option<FileFilter>,
    pub merge: Option<Merge>,
    pub children: Vec<InputDescriptor>,
    pub separator: ValueSeparator,
}

impl InputDescriptor {
    pub fn new(id: impl Into<String>, kind: InputKind) -> Self {
        InputDescriptor {
            id: id.into(),
            kind,
            flag: String::new(),
            title: String::new(),
            description: String::new(),
            default: None,
            required: None,
            enabled_when: None,
            visible_when: None,
            fix_value: None,
            select_options: Vec::new(),
            number_bounds: None,
            filter: None,
            merge: None,
            children: Vec::new(),
            separator: ValueSeparator::Space,
        }
    }

    pub fn is_positional(&self) -> bool {
        self.flag.is_empty()
    }

    /// Inputs read by this input's rules (value, visibility and enabling) and merge.
    pub fn references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for src in self.default.iter().chain(self.fix_value.iter()) {
            out.extend(src.references());
        }
        for r in self.visible_when.iter().chain(self.enabled_when.iter()) {
            out.extend(r.references());
        }
        if let Some(m) = &self.merge {
            out.extend(m.from.iter().cloned());
        }
        out
    }

    /// Inputs whose values feed this input's effective value.
    pub fn value_references(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for src in self.default.iter().chain(self.fix_value.iter()) {
            out.extend(src.references());
        }
        if let Some(m) = &self.merge {
            out.extend(m.from.iter().cloned());
        }
        out
    }

    /// Checks a value against this input's kind and local constraints.
    pub fn check_value(&self, value: &Value) -> Result<(), ValueCheck> {
        let kind_ok = match (self.kind, value) {
            (InputKind::Text | InputKind::Select, Value::Text(_)) => true,
            (InputKind::Number, Value::Number(_)) => true,
            (InputKind::Bool, Value::Bool(_)) => true,
            (InputKind::File, Value::File(_)) => true,
            (InputKind::Hidden, _) => true,
            _ => false,
        };
        if !kind_ok {
            return Err(ValueCheck::KindMismatch(format!(
                "input '{}' ({}) cannot hold value '{value}'",
                self.id, self.kind
            )));
        }
        match (self.kind, value) {
            (InputKind::Number, Value::Number(n)) => {
                let bounds = self.number_bounds.clone().unwrap_or_default();
                let x = n.as_f64().unwrap_or(f64::NAN);
                if bounds.integer && x.fract() != 0.0 {
                    return Err(ValueCheck::Invalid(format!(
                        "input '{}' expects a whole number",
                        self.id
                    )));
                }
                if let Some(min) = bounds.min.as_ref().and_then(Number::as_f64) {
                    if x < min {
                        return Err(ValueCheck::Invalid(format!(
                            "input '{}' must be at least {min}",
                            self.id
                        )));
                    }
                }
                if let Some(max) = bounds.max.as_ref().and_then(Number::as_f64) {
                    if x > max {
                        return Err(ValueCheck::Invalid(format!(
                            "input '{}' must be at most {max}",
                            self.id
                        )));
                    }
                }
            }
            (InputKind::Select, Value::Text(s)) => {
                if !self.select_options.iter().any(|o| &o.value == s) {
                    return Err(ValueCheck::Invalid(format!(
                        "'{s}' is not an option of input '{}'",
                        self.id
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Reads a JSON scalar as a value of this input's kind.
    pub fn coerce_json(&self, v: &Json) -> Result<Value, ValueCheck> {
        let mismatch = || {
            ValueCheck::KindMismatch(format!(
                "input '{}' ({}) cannot hold {v}",
                self.id, self.kind
            ))
        };
        let value = match (self.kind, v) {
            (InputKind::Text | InputKind::Select, Json::String(s)) => Value::Text(s.clone()),
            (InputKind::Text | InputKind::Select, Json::Number(n)) => Value::Text(n.to_string()),
            (InputKind::Number, Json::Number(n)) => Value::Number(n.clone()),
            (InputKind::Bool, Json::Bool(b)) => Value::Bool(*b),
            (InputKind::File, Json::String(s)) => Value::File(s.clone()),
            (InputKind::Hidden, v) => Value::from_json_scalar(v).ok_or_else(mismatch)?,
            _ => return Err(mismatch()),
        };
        self.check_value(&value)?;
        Ok(value)
    }

    /// Reads a command-line style string (`--set id=value`) as a value of this kind.
    pub fn coerce_str(&self, s: &str) -> Result<Value, ValueCheck> {
        let value = match self.kind {
            InputKind::Text | InputKind::Select => Value::Text(s.to_string()),
            InputKind::Number => crate::value::parse_number(s)
                .map(Value::Number)
                .ok_or_else(|| {
                    ValueCheck::KindMismatch(format!("input '{}' expects a number", self.id))
                })?,
            InputKind::Bool => match s {
                "true" | "1" | "yes" | "on" => Value::Bool(true),
                "false" | "0" | "no" | "off" => Value::Bool(false),
                _ => {
                    return Err(ValueCheck::KindMismatch(format!(
                        "input '{}' expects true or false",
                        self.id
                    )))
                }
            },
            InputKind::File => Value::File(s.to_string()),
            InputKind::Hidden => match crate::value::parse_number(s) {
                Some(n) => Value::Number(n),
                None => Value::Text(s.to_string()),
            },
            InputKind::Group => {
                return Err(ValueCheck::KindMismatch(format!(
                    "group '{}' has no value",
                    self.id
                )))
            }
        };
        self.check_value(&value)?;
        Ok(value)
    }

    /// Converts a rule result to this input's kind; rules are loosely typed.
    pub fn coerce_rule_result(&self, v: Value) -> Result<Value, ValueCheck> {
        let value = match (self.kind, v) {
            (InputKind::Text | InputKind::Select, Value::Number(n)) => Value::Text(n.to_string()),
            (InputKind::Text | InputKind::Select, Value::File(s)) => Value::Text(s),
            (InputKind::Number, Value::Text(s)) => match crate::value::parse_number(&s) {
                Some(n) => Value::Number(n),
                None => Value::Text(s),
            },
            (InputKind::File, Value::Text(s)) => Value::File(s),
            (_, v) => v,
        };
        self.check_value(&value)?;
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValueCheck {
    #[error("{0}")]
    KindMismatch(String),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputDecl {
    pub id: String,
    pub filename: ValueSource,
    pub is_stdout: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub id: String,
    pub title: String,
    pub values: BTreeMap<String, Value>,
}

/// Presentation properties stored and handed to clients verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PresentationHints {
    pub icon: Option<String>,
    pub doc_url: Option<String>,
    pub markup: Option<String>,
    pub style: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LaunchMode {
    #[default]
    Args,
    /// Arguments go into `<id>.cfg`, one `name<separator>value` line each.
    ConfigFile { separator: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PluginSpec {
    pub id: String,
    pub program: String,
    pub name: String,
    pub desc: String,
    pub version: Option<String>,
    pub inputs: Vec<InputDescriptor>,
    pub outputs: Vec<OutputDecl>,
    pub launch: LaunchMode,
    pub presets: Vec<Preset>,
    pub presentation: PresentationHints,
}

impl PluginSpec {
    /// All inputs in declaration order, groups before their children.
    pub fn all_inputs(&self) -> Vec<&InputDescriptor> {
        fn walk<'a>(items: &'a [InputDescriptor], out: &mut Vec<&'a InputDescriptor>) {
            for i in items {
                out.push(i);
                walk(&i.children, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.inputs, &mut out);
        out
    }

    pub fn input(&self, id: &str) -> Option<&InputDescriptor> {
        self.all_inputs().into_iter().find(|i| i.id == id)
    }

    /// Maps each nested input id to its enclosing group id.
    pub fn parents(&self) -> HashMap<String, String> {
        fn walk(items: &[InputDescriptor], parent: Option<&str>, out: &mut HashMap<String, String>) {
            for i in items {
                if let Some(p) = parent {
                    out.insert(i.id.clone(), p.to_string());
                }
                walk(&i.children, Some(&i.id), out);
            }
        }
        let mut out = HashMap::new();
        walk(&self.inputs, None, &mut out);
        out
    }

    pub fn preset(&self, id: &str) -> Option<&Preset> {
        self.presets.iter().find(|p| p.id == id)
    }

    /// Ids of inputs consumed by a merged input.
    pub fn merge_sources(&self) -> BTreeSet<String> {
        self.all_inputs()
            .iter()
            .filter_map(|i| i.merge.as_ref())
            .flat_map(|m| m.from.iter().cloned())
            .collect()
    }

    /// The rule reference graph: input id -> ids it reads.
    pub fn reference_graph(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.all_inputs()
            .iter()
            .map(|i| (i.id.clone(), i.references()))
            .collect()
    }

    /// Input ids ordered so every input comes after the inputs its value reads.
    pub fn value_order(&self) -> Vec<String> {
        let graph: BTreeMap<String, BTreeSet<String>> = self
            .all_inputs()
            .iter()
            .map(|i| (i.id.clone(), i.value_references()))
            .collect();
        let declared: Vec<String> = self.all_inputs().iter().map(|i| i.id.clone()).collect();
        topo_order(&declared, &graph).expect("acyclic by construction")
    }
}

/// Depth-first topological order; stable with respect to `nodes` order.
fn topo_order(
    nodes: &[String],
    edges: &BTreeMap<String, BTreeSet<String>>,
) -> Result<Vec<String>, Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn visit(
        n: &str,
        edges: &BTreeMap<String, BTreeSet<String>>,
        marks: &mut HashMap<String, Mark>,
        stack: &mut Vec<String>,
        out: &mut Vec<String>,
    ) -> Result<(), Vec<String>> {
        match marks.get(n).copied().unwrap_or(Mark::New) {
            Mark::Done => return Ok(()),
            Mark::Active => {
                let start = stack.iter().position(|s| s == n).unwrap();
                return Err(stack[start..].to_vec());
            }
            Mark::New => {}
        }
        marks.insert(n.to_string(), Mark::Active);
        stack.push(n.to_string());
        if let Some(next) = edges.get(n) {
            for m in next {
                if edges.contains_key(m) {
                    visit(m, edges, marks, stack, out)?;
                }
            }
        }
        stack.pop();
        marks.insert(n.to_string(), Mark::Done);
        out.push(n.to_string());
        Ok(())
    }
    let mut marks = HashMap::new();
    let mut out = Vec::new();
    for n in nodes {
        let mut stack = Vec::new();
        visit(n, edges, &mut marks, &mut stack, &mut out)?;
    }
    Ok(out)
}

/// Returns the ids along one directed cycle, if the graph has any.
pub fn find_cycle(edges: &BTreeMap<String, BTreeSet<String>>) -> Option<Vec<String>> {
    let nodes: Vec<String> = edges.keys().cloned().collect();
    topo_order(&nodes, edges).err()
}

// ---------------------------------------------------------------------------
// Diagnostics

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParseErrorKind {
    Syntax,
    MissingField,
    UnknownField,
    DanglingRef,
    Cycle,
    KindMismatch,
    InvalidValue,
    DuplicateId,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).unwrap();
        f.write_str(s.as_str().unwrap())
    }
}

/// Where in a document a diagnostic applies.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct Location {
    /// Field path such as `options[1].visible_when`; empty for the document root.
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}"),
            _ if self.path.is_empty() => f.write_str("document root"),
            _ => f.write_str(&self.path),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
#[error("{kind} at {location}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub message: String,
    pub location: Location,
    /// Input ids involved (the cycle members for CYCLE).
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
}

impl ParseError {
    fn at(kind: ParseErrorKind, path: &str, message: impl Into<String>) -> Self {
        ParseError {
            kind,
            message: message.into(),
            location: Location {
                path: path.to_string(),
                ..Location::default()
            },
            ids: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticCode {
    UnknownField,
    UnreachableInput,
    PresetFixesHidden,
    EmptySelect,
}

/// A non-blocking warning about a descriptor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub message: String,
    pub path: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let code = serde_json::to_value(self.code).unwrap();
        write!(f, "warning {} at {}: {}", code.as_str().unwrap(), self.path, self.message)
    }
}

// ---------------------------------------------------------------------------
// Parsing

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// Downgrade unknown fields to warnings.
    pub lax: bool,
}

#[derive(Debug, Clone)]
pub struct Parsed {
    pub spec: PluginSpec,
    pub warnings: Vec<Diagnostic>,
}

/// Parses and validates a descriptor in strict mode.
pub fn parse_plugin(text: &str) -> Result<PluginSpec, ParseError> {
    parse_plugin_with(text, ParseOptions::default()).map(|p| p.spec)
}

pub fn parse_plugin_with(text: &str, opts: ParseOptions) -> Result<Parsed, ParseError> {
    let doc: Json = serde_json::from_str(text).map_err(|e| ParseError {
        kind: ParseErrorKind::Syntax,
        message: e.to_string(),
        location: Location {
            path: String::new(),
            line: Some(e.line()),
            column: Some(e.column()),
        },
        ids: Vec::new(),
    })?;
    let mut p = DocParser {
        opts,
        warnings: Vec::new(),
    };
    let spec = p.plugin(&doc)?;
    check_semantics(&spec)?;
    Ok(Parsed {
        spec,
        warnings: p.warnings,
    })
}

const TOP_FIELDS: &[&str] = &[
    "id", "program", "name", "desc", "version", "outfile", "outputs", "configfile", "valuesep",
    "options", "presets", "icon", "doc_url", "markup", "style",
];
const OPTION_FIELDS: &[&str] = &[
    "id", "name", "flag", "title", "desc", "separator", "default", "required", "visible_when",
    "enabled_when", "fix_value", "choices", "min", "max", "integer", "filter", "merge", "options",
];
const KIND_KEYS: &[&str] = &["text", "number", "checkbox", "bool", "select", "file", "hidden", "group"];

struct DocParser {
    opts: ParseOptions,
    warnings: Vec<Diagnostic>,
}

fn type_name(v: &Json) -> &'static str {
    match v {
        Json::Null => "null",
        Json::Bool(_) => "boolean",
        Json::Number(_) => "number",
        Json::String(_) => "string",
        Json::Array(_) => "array",
        Json::Object(_) => "object",
    }
}

fn join_path(base: &str, field: &str) -> String {
    if base.is_empty() {
        field.to_string()
    } else {
        format!("{base}.{field}")
    }
}

fn mismatch(path: &str, expected: &str, got: &Json) -> ParseError {
    ParseError::at(
        ParseErrorKind::KindMismatch,
        path,
        format!("expected {expected}, found {}", type_name(got)),
    )
}

fn as_object<'a>(v: &'a Json, path: &str) -> Result<&'a Map<String, Json>, ParseError> {
    v.as_object().ok_or_else(|| mismatch(path, "an object", v))
}

fn opt_string(obj: &Map<String, Json>, key: &str, path: &str) -> Result<Option<String>, ParseError> {
    match obj.get(key) {
        None => Ok(None),
        Some(Json::String(s)) => Ok(Some(s.clone())),
        Some(v) => Err(mismatch(&join_path(path, key), "a string", v)),
    }
}

fn opt_bool(obj: &Map<String, Json>, key: &str, path: &str) -> Result<Option<bool>, ParseError> {
    match obj.get(key) {
        None => Ok(None),
        Some(Json::Bool(b)) => Ok(Some(*b)),
        Some(v) => Err(mismatch(&join_path(path, key), "a boolean", v)),
    }
}

fn rule_error(path: &str, text: &str, e: dsl::RuleError) -> ParseError {
    let kind = match e.kind {
        dsl::RuleErrorKind::Syntax => ParseErrorKind::Syntax,
        dsl::RuleErrorKind::Type => ParseErrorKind::KindMismatch,
    };
    ParseError::at(kind, path, format!("in rule: {}", e.caret(text)))
}

/// Derives an id from a flag: `--out-file` becomes `out-file`.
fn id_from_flag(flag: &str) -> String {
    flag.trim_start_matches('-')
        .chars()
        .take_while(|c| *c != '=')
        .filter(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '-')
        .collect()
}

impl DocParser {
    fn check_fields(&mut self, obj: &Map<String, Json>, allowed: &[&str], path: &str) -> Result<(), ParseError> {
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                let at = join_path(path, key);
                if self.opts.lax {
                    self.warnings.push(Diagnostic {
                        code: DiagnosticCode::UnknownField,
                        message: format!("unknown field '{key}' ignored"),
                        path: at,
                    });
                } else {
                    return Err(ParseError::at(
                        ParseErrorKind::UnknownField,
                        &at,
                        format!("unknown field '{key}'"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn plugin(&mut self, doc: &Json) -> Result<PluginSpec, ParseError> {
        let obj = as_object(doc, "")?;
        self.check_fields(obj, TOP_FIELDS, "")?;
        let program = opt_string(obj, "program", "")?
            .ok_or_else(|| ParseError::at(ParseErrorKind::MissingField, "program", "missing executable name 'program'"))?;
        if program.is_empty() || program.contains(['/', '\\']) || program.chars().any(char::is_whitespace) {
            return Err(ParseError::at(
                ParseErrorKind::InvalidValue,
                "program",
                "program must be a bare executable name without path separators or whitespace",
            ));
        }
        let id = opt_string(obj, "id", "")?.unwrap_or_else(|| program.clone());
        if id.is_empty() || id.contains(['/', '\\']) || id.chars().any(char::is_whitespace) {
            return Err(ParseError::at(ParseErrorKind::InvalidValue, "id", "plugin id must be a non-empty token"));
        }
        let name = opt_string(obj, "name", "")?.unwrap_or_else(|| program.clone());
        let desc = opt_string(obj, "desc", "")?.unwrap_or_default();
        let version = opt_string(obj, "version", "")?;

        let configfile = opt_bool(obj, "configfile", "")?.unwrap_or(false);
        let valuesep = opt_string(obj, "valuesep", "")?;
        let launch = match (configfile, valuesep) {
            (true, Some(separator)) => LaunchMode::ConfigFile { separator },
            (true, None) => {
                return Err(ParseError::at(
                    ParseErrorKind::MissingField,
                    "valuesep",
                    "'configfile' requires 'valuesep'",
                ))
            }
            (false, Some(_)) => {
                return Err(ParseError::at(
                    ParseErrorKind::KindMismatch,
                    "valuesep",
                    "'valuesep' only applies when 'configfile' is true",
                ))
            }
            (false, None) => LaunchMode::Args,
        };

        let mut outputs = Vec::new();
        if let Some(v) = obj.get("outfile") {
            outputs.push(OutputDecl {
                id: "outfile".into(),
                filename: self.value_source(v, "outfile", None)?,
                is_stdout: false,
            });
        }
        if let Some(v) = obj.get("outputs") {
            let arr = v.as_array().ok_or_else(|| mismatch("outputs", "an array", v))?;
            for (i, item) in arr.iter().enumerate() {
                outputs.push(self.output(item, &format!("outputs[{i}]"))?);
            }
        }

        let inputs = match obj.get("options") {
            None => Vec::new(),
            Some(v) => self.option_list(v, "options")?,
        };

        let mut spec = PluginSpec {
            id,
            program,
            name,
            desc,
            version,
            inputs,
            outputs,
            launch,
            presets: Vec::new(),
            presentation: PresentationHints {
                icon: opt_string(obj, "icon", "")?,
                doc_url: opt_string(obj, "doc_url", "")?,
                markup: opt_string(obj, "markup", "")?,
                style: opt_string(obj, "style", "")?,
            },
        };
        assign_ids(&mut spec.inputs)?;

        if let Some(v) = obj.get("presets") {
            let arr = v.as_array().ok_or_else(|| mismatch("presets", "an array", v))?;
            for (i, item) in arr.iter().enumerate() {
                let preset = self.preset(&spec, item, &format!("presets[{i}]"))?;
                spec.presets.push(preset);
            }
        }
        Ok(spec)
    }

    fn output(&mut self, v: &Json, path: &str) -> Result<OutputDecl, ParseError> {
        let obj = as_object(v, path)?;
        self.check_fields(obj, &["id", "file", "stdout"], path)?;
        let id = opt_string(obj, "id", path)?
            .ok_or_else(|| ParseError::at(ParseErrorKind::MissingField, &join_path(path, "id"), "output needs an id"))?;
        let file = obj
            .get("file")
            .ok_or_else(|| ParseError::at(ParseErrorKind::MissingField, &join_path(path, "file"), "output needs a file name"))?;
        Ok(OutputDecl {
            id,
            filename: self.value_source(file, &join_path(path, "file"), None)?,
            is_stdout: opt_bool(obj, "stdout", path)?.unwrap_or(false),
        })
    }

    fn option_list(&mut self, v: &Json, path: &str) -> Result<Vec<InputDescriptor>, ParseError> {
        let arr = v.as_array().ok_or_else(|| mismatch(path, "an array", v))?;
        arr.iter()
            .enumerate()
            .map(|(i, item)| self.option(item, &format!("{path}[{i}]")))
            .collect()
    }

    fn option(&mut self, v: &Json, path: &str) -> Result<InputDescriptor, ParseError> {
        let obj = as_object(v, path)?;
        let kind_keys: Vec<&String> = obj.keys().filter(|k| KIND_KEYS.contains(&k.as_str())).collect();
        if kind_keys.len() > 1 {
            return Err(ParseError::at(
                ParseErrorKind::KindMismatch,
                path,
                format!("option has more than one kind: {}", kind_keys.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(", ")),
            ));
        }
        let mut allowed: Vec<&str> = OPTION_FIELDS.to_vec();
        allowed.extend(KIND_KEYS);
        self.check_fields(obj, &allowed, path)?;

        let (kind, flag) = match kind_keys.first() {
            Some(key) => {
                if obj.contains_key("flag") {
                    return Err(ParseError::at(
                        ParseErrorKind::KindMismatch,
                        &join_path(path, "flag"),
                        format!("flag already given by '{key}'"),
                    ));
                }
                let flag = match &obj[key.as_str()] {
                    Json::String(s) => s.clone(),
                    other => return Err(mismatch(&join_path(path, key), "a flag string", other)),
                };
                (InputKind::from_key(key).unwrap(), flag)
            }
            None => (InputKind::Text, opt_string(obj, "flag", path)?.unwrap_or_default()),
        };
        if flag.chars().any(char::is_whitespace) {
            return Err(ParseError::at(ParseErrorKind::InvalidValue, path, "flag must not contain whitespace"));
        }
        if kind == InputKind::Group && !flag.is_empty() {
            return Err(ParseError::at(ParseErrorKind::KindMismatch, path, "a group has no flag"));
        }

        let id = match (opt_string(obj, "id", path)?, opt_string(obj, "name", path)?) {
            (Some(_), Some(_)) => {
                return Err(ParseError::at(ParseErrorKind::KindMismatch, &join_path(path, "name"), "give either 'id' or 'name', not both"))
            }
            (Some(id), None) | (None, Some(id)) => {
                if id.is_empty() || id.chars().any(char::is_whitespace) {
                    return Err(ParseError::at(ParseErrorKind::InvalidValue, &join_path(path, "id"), "input id must be a non-empty token"));
                }
                id
            }
            (None, None) => String::new(),
        };

        let mut input = InputDescriptor::new(id, kind);
        input.flag = flag;
        input.title = opt_string(obj, "title", path)?.unwrap_or_default();
        input.description = opt_string(obj, "desc", path)?.unwrap_or_default();

        let only = |field: &str, kinds: &[InputKind]| -> Result<(), ParseError> {
            if obj.contains_key(field) && !kinds.contains(&kind) {
                Err(ParseError::at(
                    ParseErrorKind::KindMismatch,
                    &join_path(path, field),
                    format!("'{field}' does not apply to {kind} inputs"),
                ))
            } else {
                Ok(())
            }
        };
        use InputKind::*;
        only("separator", &[Text, Number, Bool, Select, File, Hidden])?;
        only("default", &[Text, Number, Bool, Select, File, Hidden])?;
        only("required", &[Text, Number, Bool, Select, File, Hidden])?;
        only("fix_value", &[Text, Number, Bool, Select, File, Hidden])?;
        only("choices", &[Select])?;
        only("min", &[Number])?;
        only("max", &[Number])?;
        only("integer", &[Number])?;
        only("filter", &[File])?;
        only("merge", &[Hidden])?;
        only("options", &[Group])?;

        if let Some(v) = obj.get("separator") {
            input.separator = match v.as_str() {
                Some("space") => ValueSeparator::Space,
                Some("equals") => ValueSeparator::Equals,
                Some("none") => ValueSeparator::None,
                _ => {
                    return Err(ParseError::at(
                        ParseErrorKind::InvalidValue,
                        &join_path(path, "separator"),
                        "separator must be one of \"space\", \"equals\", \"none\"",
                    ))
                }
            };
        }

        if kind == Number {
            let num = |key: &str| -> Result<Option<serde_json::Number>, ParseError> {
                match obj.get(key) {
                    None => Ok(None),
                    Some(Json::Number(n)) => Ok(Some(n.clone())),
                    Some(v) => Err(mismatch(&join_path(path, key), "a number", v)),
                }
            };
            let bounds = NumberBounds {
                min: num("min")?,
                max: num("max")?,
                integer: opt_bool(obj, "integer", path)?.unwrap_or(false),
            };
            if bounds != NumberBounds::default() {
                input.number_bounds = Some(bounds);
            }
        }

        if let Some(v) = obj.get("choices") {
            let at = join_path(path, "choices");
            let arr = v.as_array().ok_or_else(|| mismatch(&at, "an array", v))?;
            for (i, c) in arr.iter().enumerate() {
                let cp = format!("{at}[{i}]");
                let scalar = |v: &Json, p: &str| -> Result<String, ParseError> {
                    match v {
                        Json::String(s) => Ok(s.clone()),
                        Json::Number(n) => Ok(n.to_string()),
                        other => Err(mismatch(p, "a string", other)),
                    }
                };
                let opt = match c {
                    Json::Object(o) => {
                        self.check_fields(o, &["label", "value"], &cp)?;
                        let value = o
                            .get("value")
                            .ok_or_else(|| ParseError::at(ParseErrorKind::MissingField, &join_path(&cp, "value"), "choice needs a value"))
                            .and_then(|v| scalar(v, &join_path(&cp, "value")))?;
                        let label = match o.get("label") {
                            Some(l) => scalar(l, &join_path(&cp, "label"))?,
                            None => value.clone(),
                        };
                        SelectOption { label, value }
                    }
                    Json::Array(pair) if pair.len() == 2 => SelectOption {
                        label: scalar(&pair[0], &cp)?,
                        value: scalar(&pair[1], &cp)?,
                    },
                    other => {
                        let value = scalar(other, &cp)?;
                        SelectOption { label: value.clone(), value }
                    }
                };
                input.select_options.push(opt);
            }
        }

        if let Some(v) = obj.get("filter") {
            let at = join_path(path, "filter");
            let arr = v.as_array().ok_or_else(|| mismatch(&at, "an array of extensions", v))?;
            let mut extensions = Vec::new();
            for (i, e) in arr.iter().enumerate() {
                let s = e.as_str().ok_or_else(|| mismatch(&format!("{at}[{i}]"), "a string", e))?;
                let s = s.trim().to_lowercase();
                if s.is_empty() || s == "." {
                    return Err(ParseError::at(ParseErrorKind::InvalidValue, &format!("{at}[{i}]"), "empty extension"));
                }
                extensions.push(if s.starts_with('.') { s } else { format!(".{s}") });
            }
            input.filter = Some(FileFilter { extensions });
        }

        if let Some(v) = obj.get("merge") {
            let at = join_path(path, "merge");
            let m = as_object(v, &at)?;
            self.check_fields(m, &["from", "mode", "sep"], &at)?;
            let from_v = m
                .get("from")
                .ok_or_else(|| ParseError::at(ParseErrorKind::MissingField, &join_path(&at, "from"), "merge needs source inputs"))?;
            let from_arr = from_v.as_array().ok_or_else(|| mismatch(&join_path(&at, "from"), "an array", from_v))?;
            let mut from = Vec::new();
            for (i, f) in from_arr.iter().enumerate() {
                from.push(
                    f.as_str()
                        .ok_or_else(|| mismatch(&format!("{at}.from[{i}]"), "an input id", f))?
                        .to_string(),
                );
            }
            if from.is_empty() {
                return Err(ParseError::at(ParseErrorKind::InvalidValue, &join_path(&at, "from"), "merge needs at least one source"));
            }
            let mode = match opt_string(m, "mode", &at)?.as_deref() {
                None | Some("join") => MergeMode::Join,
                Some("indices") => MergeMode::Indices,
                Some(other) => {
                    return Err(ParseError::at(
                        ParseErrorKind::InvalidValue,
                        &join_path(&at, "mode"),
                        format!("unknown merge mode '{other}' (expected \"join\" or \"indices\")"),
                    ))
                }
            };
            input.merge = Some(Merge {
                from,
                mode,
                separator: opt_string(m, "sep", &at)?.unwrap_or_else(|| " ".into()),
            });
        }

        if let Some(v) = obj.get("required") {
            input.required = Some(match v {
                Json::String(s) => s.clone(),
                Json::Bool(true) => {
                    let label = if input.title.is_empty() { &input.flag } else { &input.title };
                    format!("{} is required", if label.is_empty() { kind.key() } else { label })
                }
                other => return Err(mismatch(&join_path(path, "required"), "an error message", other)),
            });
        }

        if let Some(v) = obj.get("default") {
            input.default = Some(self.value_source(v, &join_path(path, "default"), Some(&input))?);
        }
        if let Some(v) = obj.get("fix_value") {
            input.fix_value = Some(self.value_source(v, &join_path(path, "fix_value"), Some(&input))?);
        }
        if let Some(v) = obj.get("visible_when") {
            input.visible_when = Some(self.bool_rule(v, &join_path(path, "visible_when"))?);
        }
        if let Some(v) = obj.get("enabled_when") {
            input.enabled_when = Some(self.bool_rule(v, &join_path(path, "enabled_when"))?);
        }
        if let Some(v) = obj.get("options") {
            input.children = self.option_list(v, &join_path(path, "options"))?;
        }
        Ok(input)
    }

    /// A value-producing property: literal scalar, `{"value": ..}`, or an `if` rule.
    fn value_source(&mut self, v: &Json, path: &str, input: Option<&InputDescriptor>) -> Result<ValueSource, ParseError> {
        let literal = |v: &Json| -> Result<ValueSource, ParseError> {
            let value = match input {
                Some(inp) => inp.coerce_json(v).map_err(|e| match e {
                    ValueCheck::KindMismatch(m) => ParseError::at(ParseErrorKind::KindMismatch, path, m),
                    ValueCheck::Invalid(m) => ParseError::at(ParseErrorKind::InvalidValue, path, m),
                })?,
                None => match v {
                    Json::String(s) if !s.is_empty() => Value::Text(s.clone()),
                    other => return Err(mismatch(path, "a file name", other)),
                },
            };
            Ok(ValueSource::Literal(value))
        };
        match v {
            Json::String(s) if dsl::looks_like_rule(s) => {
                let rule = dsl::parse_rule(s).map_err(|e| rule_error(path, s, e))?;
                Ok(ValueSource::Rule(rule))
            }
            Json::Object(o) => {
                self.check_fields(o, &["value", "rule"], path)?;
                match (o.get("value"), o.get("rule")) {
                    (Some(v), None) => literal(v),
                    (None, Some(Json::String(s))) => {
                        let rule = dsl::parse_rule(s).map_err(|e| rule_error(path, s, e))?;
                        if rule.branches.is_none() {
                            return Err(ParseError::at(
                                ParseErrorKind::KindMismatch,
                                path,
                                "a value rule needs the form 'if <condition> then <value>'",
                            ));
                        }
                        Ok(ValueSource::Rule(rule))
                    }
                    _ => Err(ParseError::at(ParseErrorKind::InvalidValue, path, "expected {\"value\": ...} or {\"rule\": \"...\"}")),
                }
            }
            other => literal(other),
        }
    }

    /// A visibility/enabling property: a boolean or a rule sentence.
    fn bool_rule(&mut self, v: &Json, path: &str) -> Result<Rule, ParseError> {
        match v {
            Json::Bool(b) => Ok(Rule {
                condition: Condition::Const(*b),
                branches: None,
            }),
            Json::String(s) => {
                let rule = dsl::parse_rule(s).map_err(|e| rule_error(path, s, e))?;
                if rule.literal_results().iter().any(|r| r.as_bool().is_none()) {
                    return Err(ParseError::at(
                        ParseErrorKind::KindMismatch,
                        path,
                        "visibility and enabling rules must produce true or false",
                    ));
                }
                Ok(rule)
            }
            other => Err(mismatch(path, "a boolean or a rule", other)),
        }
    }

    fn preset(&mut self, spec: &PluginSpec, v: &Json, path: &str) -> Result<Preset, ParseError> {
        let obj = as_object(v, path)?;
        self.check_fields(obj, &["id", "title", "values"], path)?;
        let id = opt_string(obj, "id", path)?
            .ok_or_else(|| ParseError::at(ParseErrorKind::MissingField, &join_path(path, "id"), "preset needs an id"))?;
        let title = opt_string(obj, "title", path)?.unwrap_or_else(|| id.clone());
        let mut values = BTreeMap::new();
        if let Some(v) = obj.get("values") {
            let at = join_path(path, "values");
            for (key, val) in as_object(v, &at)? {
                let kp = join_path(&at, key);
                let input = spec
                    .input(key)
                    .ok_or_else(|| ParseError::at(ParseErrorKind::DanglingRef, &kp, format!("preset sets unknown input '{key}'")))?;
                if input.kind == InputKind::Group {
                    return Err(ParseError::at(ParseErrorKind::KindMismatch, &kp, format!("'{key}' is a group")));
                }
                let value = input.coerce_json(val).map_err(|e| match e {
                    ValueCheck::KindMismatch(m) => ParseError::at(ParseErrorKind::KindMismatch, &kp, m),
                    ValueCheck::Invalid(m) => ParseError::at(ParseErrorKind::InvalidValue, &kp, m),
                })?;
                values.insert(key.clone(), value);
            }
        }
        Ok(Preset { id, title, values })
    }
}

/// Fills in missing ids (flag, then kind name) and rejects duplicates.
fn assign_ids(inputs: &mut [InputDescriptor]) -> Result<(), ParseError> {
    fn collect(items: &[InputDescriptor], out: &mut BTreeSet<String>) -> Result<(), ParseError> {
        for i in items {
            if !i.id.is_empty() && !out.insert(i.id.clone()) {
                return Err(ParseError::at(ParseErrorKind::DuplicateId, &i.id, format!("input id '{}' is used twice", i.id)));
            }
            collect(&i.children, out)?;
        }
        Ok(())
    }
    fn fill(items: &mut [InputDescriptor], taken: &mut BTreeSet<String>) {
        for i in items.iter_mut() {
            if i.id.is_empty() {
                let mut base = id_from_flag(&i.flag);
                if base.is_empty() {
                    base = i.kind.key().to_string();
                }
                let mut candidate = base.clone();
                let mut n = 2;
                while taken.contains(&candidate) {
                    candidate = format!("{base}_{n}");
                    n += 1;
                }
                taken.insert(candidate.clone());
                i.id = candidate;
            }
            fill(&mut i.children, taken);
        }
    }
    let mut taken = BTreeSet::new();
    collect(inputs, &mut taken)?;
    fill(inputs, &mut taken);
    Ok(())
}

fn check_semantics(spec: &PluginSpec) -> Result<(), ParseError> {
    let inputs = spec.all_inputs();
    let kinds: HashMap<&str, InputKind> = inputs.iter().map(|i| (i.id.as_str(), i.kind)).collect();
    for input in &inputs {
        for r in input.references() {
            match kinds.get(r.as_str()) {
                None => {
                    let mut e = ParseError::at(
                        ParseErrorKind::DanglingRef,
                        &input.id,
                        format!("input '{}' refers to unknown input '{r}'", input.id),
                    );
                    e.ids = vec![input.id.clone(), r];
                    return Err(e);
                }
                Some(InputKind::Group) => {
                    return Err(ParseError::at(
                        ParseErrorKind::KindMismatch,
                        &input.id,
                        format!("input '{}' refers to group '{r}', which has no value", input.id),
                    ))
                }
                Some(_) => {}
            }
        }
    }
    for (i, out) in spec.outputs.iter().enumerate() {
        for r in out.filename.references() {
            if !matches!(kinds.get(r.as_str()), Some(k) if *k != InputKind::Group) {
                let mut e = ParseError::at(
                    ParseErrorKind::DanglingRef,
                    &format!("outputs[{i}]"),
                    format!("output '{}' refers to unknown input '{r}'", out.id),
                );
                e.ids = vec![r];
                return Err(e);
            }
        }
    }
    let mut out_ids = BTreeSet::new();
    for out in &spec.outputs {
        if !out_ids.insert(out.id.as_str()) {
            return Err(ParseError::at(ParseErrorKind::DuplicateId, "outputs", format!("output id '{}' is used twice", out.id)));
        }
    }
    if spec.outputs.iter().filter(|o| o.is_stdout).count() > 1 {
        return Err(ParseError::at(ParseErrorKind::InvalidValue, "outputs", "at most one output can be standard output"));
    }
    let mut preset_ids = BTreeSet::new();
    for p in &spec.presets {
        if !preset_ids.insert(p.id.as_str()) {
            return Err(ParseError::at(ParseErrorKind::DuplicateId, "presets", format!("preset id '{}' is used twice", p.id)));
        }
    }
    if let Some(cycle) = find_cycle(&spec.reference_graph()) {
        let mut e = ParseError::at(
            ParseErrorKind::Cycle,
            &cycle[0],
            format!("rule dependency cycle: {}", cycle.join(" -> ")),
        );
        e.ids = cycle;
        return Err(e);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lint

/// Non-blocking warnings for a parsed spec; empty means clean.
pub fn validate_plugin(spec: &PluginSpec) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let empty: BTreeMap<String, Value> = BTreeMap::new();
    let statically_false = |r: &Rule| {
        r.references().is_empty() && matches!(r.evaluate(&empty), Ok(Some(Value::Bool(false))) | Ok(None))
    };
    for input in spec.all_inputs() {
        if input.visible_when.as_ref().is_some_and(statically_false) {
            out.push(Diagnostic {
                code: DiagnosticCode::UnreachableInput,
                message: format!("input '{}' can never be shown", input.id),
                path: input.id.clone(),
            });
        }
        if input.kind == InputKind::Select && input.select_options.is_empty() {
            out.push(Diagnostic {
                code: DiagnosticCode::EmptySelect,
                message: format!("select input '{}' has no choices", input.id),
                path: input.id.clone(),
            });
        }
    }
    for p in &spec.presets {
        for key in p.values.keys() {
            let Some(input) = spec.input(key) else { continue };
            if input.kind == InputKind::Hidden || input.fix_value.is_some() {
                out.push(Diagnostic {
                    code: DiagnosticCode::PresetFixesHidden,
                    message: format!("preset '{}' sets '{key}', which users cannot change", p.id),
                    path: format!("presets.{}.{key}", p.id),
                });
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Canonical form

fn source_json(src: &ValueSource) -> Json {
    match src {
        ValueSource::Rule(r) => Json::String(r.to_string()),
        ValueSource::Literal(v) => {
            let j = v.to_json();
            match &j {
                Json::String(s) if dsl::looks_like_rule(s) => {
                    let mut m = Map::new();
                    m.insert("value".into(), j.clone());
                    Json::Object(m)
                }
                _ => j,
            }
        }
    }
}

fn bool_rule_json(r: &Rule) -> Json {
    match (&r.condition, &r.branches) {
        (Condition::Const(b), None) => Json::Bool(*b),
        _ => Json::String(r.to_string()),
    }
}

fn input_json(i: &InputDescriptor) -> Json {
    let mut m = Map::new();
    m.insert(i.kind.key().into(), Json::String(i.flag.clone()));
    m.insert("id".into(), Json::String(i.id.clone()));
    if !i.title.is_empty() {
        m.insert("title".into(), Json::String(i.title.clone()));
    }
    if !i.description.is_empty() {
        m.insert("desc".into(), Json::String(i.description.clone()));
    }
    if i.separator != ValueSeparator::Space {
        m.insert("separator".into(), Json::String(i.separator.name().into()));
    }
    if let Some(d) = &i.default {
        m.insert("default".into(), source_json(d));
    }
    if let Some(r) = &i.required {
        m.insert("required".into(), Json::String(r.clone()));
    }
    if let Some(r) = &i.visible_when {
        m.insert("visible_when".into(), bool_rule_json(r));
    }
    if let Some(r) = &i.enabled_when {
        m.insert("enabled_when".into(), bool_rule_json(r));
    }
    if let Some(f) = &i.fix_value {
        m.insert("fix_value".into(), source_json(f));
    }
    if i.kind == InputKind::Select {
        let choices = i
            .select_options
            .iter()
            .map(|o| {
                let mut c = Map::new();
                c.insert("label".into(), Json::String(o.label.clone()));
                c.insert("value".into(), Json::String(o.value.clone()));
                Json::Object(c)
            })
            .collect();
        m.insert("choices".into(), Json::Array(choices));
    }
    if let Some(b) = &i.number_bounds {
        if let Some(min) = &b.min {
            m.insert("min".into(), Json::Number(min.clone()));
        }
        if let Some(max) = &b.max {
            m.insert("max".into(), Json::Number(max.clone()));
        }
        if b.integer {
            m.insert("integer".into(), Json::Bool(true));
        }
    }
    if let Some(f) = &i.filter {
        m.insert(
            "filter".into(),
            Json::Array(f.extensions.iter().cloned().map(Json::String).collect()),
        );
    }
    if let Some(mg) = &i.merge {
        let mut o = Map::new();
        o.insert("from".into(), Json::Array(mg.from.iter().cloned().map(Json::String).collect()));
        o.insert(
            "mode".into(),
            Json::String(match mg.mode {
                MergeMode::Join => "join".into(),
                MergeMode::Indices => "indices".into(),
            }),
        );
        o.insert("sep".into(), Json::String(mg.separator.clone()));
        m.insert("merge".into(), Json::Object(o));
    }
    if i.kind == InputKind::Group {
        m.insert("options".into(), Json::Array(i.children.iter().map(input_json).collect()));
    }
    Json::Object(m)
}

/// The canonical descriptor as a JSON value (keys in schema order).
pub fn canonical_json(spec: &PluginSpec) -> Json {
    let mut m = Map::new();
    m.insert("id".into(), Json::String(spec.id.clone()));
    m.insert("program".into(), Json::String(spec.program.clone()));
    m.insert("name".into(), Json::String(spec.name.clone()));
    m.insert("desc".into(), Json::String(spec.desc.clone()));
    if let Some(v) = &spec.version {
        m.insert("version".into(), Json::String(v.clone()));
    }
    match spec.outputs.as_slice() {
        [] => {}
        [only] if only.id == "outfile" && !only.is_stdout => {
            m.insert("outfile".into(), source_json(&only.filename));
        }
        outs => {
            let arr = outs
                .iter()
                .map(|o| {
                    let mut om = Map::new();
                    om.insert("id".into(), Json::String(o.id.clone()));
                    om.insert("file".into(), source_json(&o.filename));
                    if o.is_stdout {
                        om.insert("stdout".into(), Json::Bool(true));
                    }
                    Json::Object(om)
                })
                .collect();
            m.insert("outputs".into(), Json::Array(arr));
        }
    }
    if let LaunchMode::ConfigFile { separator } = &spec.launch {
        m.insert("configfile".into(), Json::Bool(true));
        m.insert("valuesep".into(), Json::String(separator.clone()));
    }
    m.insert("options".into(), Json::Array(spec.inputs.iter().map(input_json).collect()));
    if !spec.presets.is_empty() {
        let arr = spec
            .presets
            .iter()
            .map(|p| {
                let mut pm = Map::new();
                pm.insert("id".into(), Json::String(p.id.clone()));
                pm.insert("title".into(), Json::String(p.title.clone()));
                let values: Map<String, Json> = p.values.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
                pm.insert("values".into(), Json::Object(values));
                Json::Object(pm)
            })
            .collect();
        m.insert("presets".into(), Json::Array(arr));
    }
    let hints = &spec.presentation;
    for (key, val) in [("icon", &hints.icon), ("doc_url", &hints.doc_url), ("markup", &hints.markup), ("style", &hints.style)] {
        if let Some(v) = val {
            m.insert(key.into(), Json::String(v.clone()));
        }
    }
    Json::Object(m)
}

/// Emits the canonical document: two-space indentation, schema key order, LF, trailing newline.
pub fn canonicalize(spec: &PluginSpec) -> String {
    let mut s = serde_json::to_string_pretty(&canonical_json(spec)).expect("json values serialize");
    s.push('\n');
    s
}
