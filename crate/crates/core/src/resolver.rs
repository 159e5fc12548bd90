//! Live interface state as a pure function of (spec, session).

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;
use serde_json::{Map, Value as Json};
use thiserror::Error;

use crate::names::sanitize_filename;
use crate::spec::{InputKind, MergeMode, PluginSpec, ValueCheck, ValueSource};
use crate::value::Value;

/// User-supplied values for one plugin instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionState {
    /// Only inputs the user (or a preset) touched.
    pub values: BTreeMap<String, Value>,
    pub active_preset: Option<String>,
    pub session_name: String,
}

impl SessionState {
    /// FILE inputs whose values are name placeholders awaiting an actual upload.
    pub fn pending_attachments(&self, spec: &PluginSpec) -> Vec<String> {
        self.values
            .iter()
            .filter(|(id, v)| matches!(v, Value::File(_)) && spec.input(id).is_some_and(|i| i.kind == InputKind::File))
            .map(|(id, _)| id.clone())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    User,
    DefaultRule,
    Preset,
    Fixed,
    /// Collapsed from the sources of a merged input.
    Merged,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedInput {
    pub id: String,
    pub kind: InputKind,
    pub visible: bool,
    pub enabled: bool,
    pub value: Option<Value>,
    pub provenance: Option<Provenance>,
    pub error: Option<String>,
}

impl ResolvedInput {
    /// Shown and enabled, including all enclosing groups.
    pub fn is_active(&self) -> bool {
        self.visible && self.enabled
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ResolveError {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedInterface {
    /// Declaration order, groups before their children.
    pub inputs: Vec<ResolvedInput>,
    pub ready: bool,
    pub errors: Vec<ResolveError>,
    pub output_names: BTreeMap<String, String>,
}

impl ResolvedInterface {
    pub fn input(&self, id: &str) -> Option<&ResolvedInput> {
        self.inputs.iter().find(|i| i.id == id)
    }

    pub fn error_messages(&self) -> Vec<String> {
        self.errors.iter().map(|e| e.message.clone()).collect()
    }
}

fn truthy(result: Result<Option<Value>, crate::dsl::EvalError>) -> Result<bool, String> {
    match result {
        Ok(Some(Value::Bool(b))) => Ok(b),
        Ok(_) => Ok(false),
        Err(e) => Err(e.to_string()),
    }
}

/// Resolves visibility, enabling, effective values and errors for every input.
pub fn resolve(spec: &PluginSpec, state: &SessionState) -> ResolvedInterface {
    let all = spec.all_inputs();
    let by_id: HashMap<&str, _> = all.iter().map(|i| (i.id.as_str(), *i)).collect();
    let active_preset = state.active_preset.as_deref().and_then(|p| spec.preset(p));

    let mut values: BTreeMap<String, Value> = BTreeMap::new();
    let mut provenance: HashMap<String, Provenance> = HashMap::new();
    let mut value_errors: HashMap<String, String> = HashMap::new();

    for id in spec.value_order() {
        let input = by_id[id.as_str()];
        if input.kind == InputKind::Group {
            continue;
        }
        let eval = |src: &ValueSource, values: &BTreeMap<String, Value>| -> Result<Option<Value>, String> {
            match src {
                ValueSource::Literal(v) => Ok(Some(v.clone())),
                ValueSource::Rule(r) => r.evaluate(values).map_err(|e| e.to_string()),
            }
        };
        let mut chosen: Option<(Value, Provenance)> = None;
        if let Some(merge) = &input.merge {
            let parts: Vec<String> = match merge.mode {
                MergeMode::Join => merge
                    .from
                    .iter()
                    .filter_map(|s| values.get(s))
                    .filter(|v| !matches!(v, Value::Bool(false)))
                    .map(Value::to_arg)
                    .collect(),
                MergeMode::Indices => merge
                    .from
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| matches!(values.get(*s), Some(Value::Bool(true))))
                    .map(|(i, _)| i.to_string())
                    .collect(),
            };
            if !parts.is_empty() {
                chosen = Some((Value::Text(parts.join(&merge.separator)), Provenance::Merged));
            }
        } else {
            if let Some(fix) = &input.fix_value {
                match eval(fix, &values) {
                    Ok(Some(v)) => chosen = Some((v, Provenance::Fixed)),
                    Ok(None) => {}
                    Err(e) => {
                        value_errors.insert(id.clone(), e);
                    }
                }
            }
            if chosen.is_none() {
                if let Some(v) = state.values.get(&id) {
                    let from_preset = active_preset.is_some_and(|p| p.values.get(&id) == Some(v));
                    let prov = if from_preset { Provenance::Preset } else { Provenance::User };
                    chosen = Some((v.clone(), prov));
                }
            }
            if chosen.is_none() {
                if let Some(def) = &input.default {
                    match eval(def, &values) {
                        Ok(Some(v)) => chosen = Some((v, Provenance::DefaultRule)),
                        Ok(None) => {}
                        Err(e) => {
                            value_errors.entry(id.clone()).or_insert(e);
                        }
                    }
                }
            }
            if chosen.is_none() && input.kind == InputKind::Bool {
                chosen = Some((Value::Bool(false), Provenance::DefaultRule));
            }
        }
        if let Some((v, prov)) = chosen {
            if matches!(&v, Value::Text(s) if s.is_empty()) {
                continue;
            }
            let v = match prov {
                Provenance::User | Provenance::Preset | Provenance::Merged => v,
                _ => match input.coerce_rule_result(v.clone()) {
                    Ok(c) => c,
                    Err(ValueCheck::KindMismatch(m) | ValueCheck::Invalid(m)) => {
                        value_errors.entry(id.clone()).or_insert(m);
                        v
                    }
                },
            };
            values.insert(id.clone(), v);
            provenance.insert(id.clone(), prov);
        }
    }

    let parents = spec.parents();
    let mut flags: HashMap<String, (bool, bool)> = HashMap::new();
    let mut rule_errors: HashMap<String, String> = HashMap::new();
    let mut inputs = Vec::with_capacity(all.len());
    for input in &all {
        let (parent_visible, parent_enabled) = parents
            .get(&input.id)
            .and_then(|p| flags.get(p))
            .copied()
            .unwrap_or((true, true));
        let mut check = |rule: &Option<crate::dsl::Rule>| match rule {
            None => true,
            Some(r) => match truthy(r.evaluate(&values)) {
                Ok(b) => b,
                Err(e) => {
                    rule_errors.entry(input.id.clone()).or_insert(e);
                    true
                }
            },
        };
        let visible = parent_visible && check(&input.visible_when);
        let enabled = parent_enabled && check(&input.enabled_when);
        flags.insert(input.id.clone(), (visible, enabled));

        let value = values.get(&input.id).cloned();
        let mut error = None;
        if visible && enabled && input.kind != InputKind::Group {
            error = rule_errors
                .get(&input.id)
                .or_else(|| value_errors.get(&input.id))
                .cloned();
            if error.is_none() {
                error = match &value {
                    None => input.required.clone(),
                    Some(v) => match input.check_value(v) {
                        Err(ValueCheck::KindMismatch(m) | ValueCheck::Invalid(m)) => Some(m),
                        Ok(()) => match (&input.filter, v) {
                            (Some(f), Value::File(name)) if !f.accepts(name) => Some(format!(
                                "File type not accepted: expected {}",
                                f.extensions.join(", ")
                            )),
                            _ => None,
                        },
                    },
                };
            }
        } else if visible && input.kind == InputKind::Group {
            error = rule_errors.get(&input.id).cloned();
        }
        inputs.push(ResolvedInput {
            id: input.id.clone(),
            kind: input.kind,
            visible,
            enabled,
            provenance: value.as_ref().and_then(|_| provenance.get(&input.id).copied()),
            value,
            error,
        });
    }

    let mut errors: Vec<ResolveError> = inputs
        .iter()
        .filter_map(|i| {
            i.error.as_ref().map(|m| ResolveError {
                input: Some(i.id.clone()),
                message: m.clone(),
            })
        })
        .collect();

    let mut output_names = BTreeMap::new();
    for out in &spec.outputs {
        let name = match &out.filename {
            ValueSource::Literal(v) => Ok(Some(v.to_arg())),
            ValueSource::Rule(r) => r.evaluate(&values).map(|v| v.map(|v| v.to_arg())),
        };
        match name {
            Ok(Some(n)) => match sanitize_filename(&n) {
                Some(clean) => {
                    output_names.insert(out.id.clone(), clean);
                }
                None => errors.push(ResolveError {
                    input: None,
                    message: format!("Output file name for '{}' is not usable: '{n}'", out.id),
                }),
            },
            Ok(None) => errors.push(ResolveError {
                input: None,
                message: format!("Output file name for '{}' could not be resolved", out.id),
            }),
            Err(e) => errors.push(ResolveError {
                input: None,
                message: format!("Output file name for '{}': {e}", out.id),
            }),
        }
    }

    ResolvedInterface {
        ready: errors.is_empty(),
        inputs,
        errors,
        output_names,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("unknown input '{0}'")]
    UnknownInput(String),
    #[error("{0}")]
    KindMismatch(String),
    #[error("{0}")]
    InvalidValue(String),
    #[error("input '{0}' has a fixed value")]
    FixedInput(String),
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("session belongs to {found}, not {expected}")]
    SpecMismatch { expected: String, found: String },
    #[error("malformed session document: {0}")]
    Syntax(String),
}

impl From<ValueCheck> for SessionError {
    fn from(e: ValueCheck) -> Self {
        match e {
            ValueCheck::KindMismatch(m) => SessionError::KindMismatch(m),
            ValueCheck::Invalid(m) => SessionError::InvalidValue(m),
        }
    }
}

fn editable_input<'a>(
    spec: &'a PluginSpec,
    state: &SessionState,
    id: &str,
) -> Result<&'a crate::spec::InputDescriptor, SessionError> {
    let input = spec.input(id).ok_or_else(|| SessionError::UnknownInput(id.to_string()))?;
    if input.kind == InputKind::Group {
        return Err(SessionError::KindMismatch(format!("group '{id}' has no value")));
    }
    if input.merge.is_some() {
        return Err(SessionError::KindMismatch(format!(
            "input '{id}' is derived from other inputs"
        )));
    }
    let resolved = resolve(spec, state);
    if resolved.input(id).and_then(|r| r.provenance) == Some(Provenance::Fixed) {
        return Err(SessionError::FixedInput(id.to_string()));
    }
    Ok(input)
}

fn detach_preset(spec: &PluginSpec, state: &mut SessionState) {
    if let Some(p) = state.active_preset.as_deref().and_then(|p| spec.preset(p)) {
        let matches = p.values.iter().all(|(k, v)| state.values.get(k) == Some(v));
        if !matches {
            state.active_preset = None;
        }
    }
}

/// Sets one input; detaches the active preset once the values stop matching it.
pub fn apply_input(
    spec: &PluginSpec,
    state: &SessionState,
    id: &str,
    value: Value,
) -> Result<SessionState, SessionError> {
    let input = editable_input(spec, state, id)?;
    input.check_value(&value)?;
    let mut next = state.clone();
    next.values.insert(id.to_string(), value);
    detach_preset(spec, &mut next);
    Ok(next)
}

/// Returns an input to its default (removes the user value).
pub fn clear_input(spec: &PluginSpec, state: &SessionState, id: &str) -> Result<SessionState, SessionError> {
    editable_input(spec, state, id)?;
    let mut next = state.clone();
    next.values.remove(id);
    detach_preset(spec, &mut next);
    Ok(next)
}

/// Copies every preset value into the session and marks the preset active.
pub fn apply_preset(spec: &PluginSpec, state: &SessionState, preset_id: &str) -> Result<SessionState, SessionError> {
    let preset = spec
        .preset(preset_id)
        .ok_or_else(|| SessionError::UnknownPreset(preset_id.to_string()))?;
    let mut next = state.clone();
    for (k, v) in &preset.values {
        next.values.insert(k.clone(), v.clone());
    }
    next.active_preset = Some(preset.id.clone());
    Ok(next)
}

/// Session document: `{plugin_id, plugin_version, session_name, active_preset, values}`.
pub fn export_session(spec: &PluginSpec, state: &SessionState) -> Json {
    let mut m = Map::new();
    m.insert("plugin_id".into(), Json::String(spec.id.clone()));
    m.insert(
        "plugin_version".into(),
        spec.version.clone().map_or(Json::Null, Json::String),
    );
    m.insert("session_name".into(), Json::String(state.session_name.clone()));
    m.insert(
        "active_preset".into(),
        state.active_preset.clone().map_or(Json::Null, Json::String),
    );
    let values: Map<String, Json> = state.values.iter().map(|(k, v)| (k.clone(), v.to_json())).collect();
    m.insert("values".into(), Json::Object(values));
    Json::Object(m)
}

pub fn import_session(spec: &PluginSpec, text: &str) -> Result<SessionState, SessionError> {
    let doc: Json = serde_json::from_str(text).map_err(|e| SessionError::Syntax(e.to_string()))?;
    import_session_json(spec, &doc)
}

pub fn import_session_json(spec: &PluginSpec, doc: &Json) -> Result<SessionState, SessionError> {
    let obj = doc
        .as_object()
        .ok_or_else(|| SessionError::Syntax("session must be an object".into()))?;
    for key in obj.keys() {
        if !["plugin_id", "plugin_version", "session_name", "active_preset", "values"].contains(&key.as_str()) {
            return Err(SessionError::Syntax(format!("unknown field '{key}'")));
        }
    }
    let plugin_id = obj
        .get("plugin_id")
        .and_then(Json::as_str)
        .ok_or_else(|| SessionError::Syntax("missing 'plugin_id'".into()))?;
    if plugin_id != spec.id {
        return Err(SessionError::SpecMismatch {
            expected: spec.id.clone(),
            found: plugin_id.to_string(),
        });
    }
    let version = match obj.get("plugin_version") {
        None | Some(Json::Null) => None,
        Some(Json::String(s)) => Some(s.clone()),
        Some(_) => return Err(SessionError::Syntax("'plugin_version' must be a string".into())),
    };
    if version != spec.version {
        let show = |v: &Option<String>| format!("{}@{}", spec.id, v.as_deref().unwrap_or("unversioned"));
        return Err(SessionError::SpecMismatch {
            expected: show(&spec.version),
            found: show(&version),
        });
    }
    let session_name = match obj.get("session_name") {
        None | Some(Json::Null) => String::new(),
        Some(Json::String(s)) => s.clone(),
        Some(_) => return Err(SessionError::Syntax("'session_name' must be a string".into())),
    };
    let active_preset = match obj.get("active_preset") {
        None | Some(Json::Null) => None,
        Some(Json::String(p)) => {
            if spec.preset(p).is_none() {
                return Err(SessionError::UnknownPreset(p.clone()));
            }
            Some(p.clone())
        }
        Some(_) => return Err(SessionError::Syntax("'active_preset' must be a string".into())),
    };
    let mut values = BTreeMap::new();
    match obj.get("values") {
        None | Some(Json::Null) => {}
        Some(Json::Object(m)) => {
            for (k, v) in m {
                let input = spec.input(k).ok_or_else(|| SessionError::UnknownInput(k.clone()))?;
                if input.kind == InputKind::Group || input.merge.is_some() {
                    return Err(SessionError::KindMismatch(format!("input '{k}' cannot hold a value")));
                }
                values.insert(k.clone(), input.coerce_json(v)?);
            }
        }
        Some(_) => return Err(SessionError::Syntax("'values' must be an object".into())),
    }
    Ok(SessionState {
        values,
        active_preset,
        session_name,
    })
}
