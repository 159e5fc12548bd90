//! Engine for declarative command-line program descriptors.
//!
//! - [`spec`]: descriptor model, parser, lint and canonical form
//! - [`dsl`]: the conditional rule language
//! - [`resolver`]: live interface state from a spec and a session
//! - [`synth`]: argv / config-file synthesis
//! - [`pipeline`]: multi-step pipelines and their execution plans

pub mod dsl;
pub mod names;
pub mod pipeline;
pub mod resolver;
pub mod spec;
pub mod synth;
pub mod value;

pub use dsl::{parse_rule, Condition, EvalContext, Rule, RuleError};
pub use pipeline::{
    add_step, export_pipeline, import_pipeline, import_pipeline_json, plan, ExecutionPlan, FileSource, ImportOptions,
    PipelineError, PipelineSpec, PlanDiagnostic, SpecSource, Step,
};
pub use resolver::{
    apply_input, apply_preset, clear_input, export_session, import_session, import_session_json, resolve,
    Provenance, ResolvedInterface, SessionError, SessionState,
};
pub use spec::{
    canonicalize, parse_plugin, parse_plugin_with, validate_plugin, Diagnostic, InputDescriptor, InputKind,
    ParseError, ParseErrorKind, ParseOptions, PluginSpec,
};
pub use synth::{render_preview, synthesize, CommandPlan, NotReady, StdinSource, StdoutTarget};
pub use value::Value;
