//! Generators and oracles shared by the property tests and the acceptance suite.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use pline_core::pipeline::{FileSource, PipelineSpec, Step};
use pline_core::{parse_plugin, PluginSpec, SessionState, Value};
use proptest::prelude::*;
use serde_json::{json, Value as Json};

pub const GAP_REMOVER: &str = r#"{
  "program": "remove_gaps.py",
  "name": "Gaps remover",
  "desc": "Trims gaps-only sites from the input sequence alignment",
  "outfile": "output.fa",
  "options": [
    {"file": "", "required": "Input file missing!"},
    {"checkbox": "--count", "title": "Count sequences"}
  ]
}"#;

pub const CODEML: &str = r#"{
  "id": "codeml",
  "program": "codeml",
  "name": "CodeML",
  "version": "4.9",
  "configfile": true,
  "valuesep": " = ",
  "options": [
    {"file": "", "id": "seqfile", "required": "Sequence file missing!"},
    {"file": "", "id": "treefile"},
    {"select": "", "id": "model", "choices": ["0", "1", "2"], "default": "0"},
    {"select": "", "id": "NSsites", "choices": ["0", "1", "2", "7", "8"], "default": "0"},
    {"number": "", "id": "omega", "min": 0, "default": 0.4},
    {"checkbox": "", "id": "fix_omega", "default": false},
    {"group": "", "id": "branch", "title": "Branch options", "visible_when": "model == 2", "options": [
      {"text": "", "id": "labels", "required": "Branch labels missing!"}
    ]},
    {"checkbox": "", "id": "clean", "fix_value": "if model == 0 then false"}
  ],
  "presets": [
    {"id": "branch-site", "title": "Branch-site model A", "values": {"model": "2", "NSsites": "2", "fix_omega": false, "omega": 1.0}},
    {"id": "branch-site-null", "title": "Branch-site null", "values": {"model": "2", "NSsites": "2", "fix_omega": true, "omega": 1.0}},
    {"id": "m7m8", "title": "M7 vs M8", "values": {"NSsites": "7", "omega": 0.5}}
  ]
}"#;

// ---------------------------------------------------------------------------
// Boolean rules and their truth-table oracle

pub const VARS: [&str; 4] = ["a", "b", "c", "d"];

#[derive(Debug, Clone)]
pub enum BoolExpr {
    Const(bool),
    Eq(usize, bool),
    Ne(usize, bool),
    VarEq(usize, usize),
    VarNe(usize, usize),
    IsSet(usize),
    IsUnset(usize),
    Not(Box<BoolExpr>),
    And(Vec<BoolExpr>),
    Or(Vec<BoolExpr>),
}

impl BoolExpr {
    /// Direct recursive evaluation; `None` is an unset input.
    pub fn eval(&self, env: &[Option<bool>; 4]) -> bool {
        match self {
            BoolExpr::Const(b) => *b,
            BoolExpr::Eq(i, b) => env[*i] == Some(*b),
            BoolExpr::Ne(i, b) => env[*i].is_some_and(|v| v != *b),
            BoolExpr::VarEq(i, j) => matches!((env[*i], env[*j]), (Some(x), Some(y)) if x == y),
            BoolExpr::VarNe(i, j) => matches!((env[*i], env[*j]), (Some(x), Some(y)) if x != y),
            BoolExpr::IsSet(i) => env[*i].is_some(),
            BoolExpr::IsUnset(i) => env[*i].is_none(),
            BoolExpr::Not(e) => !e.eval(env),
            BoolExpr::And(es) => es.iter().all(|e| e.eval(env)),
            BoolExpr::Or(es) => es.iter().any(|e| e.eval(env)),
        }
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            BoolExpr::Const(_) => {}
            BoolExpr::Eq(i, _) | BoolExpr::Ne(i, _) | BoolExpr::IsSet(i) | BoolExpr::IsUnset(i) => {
                out.insert(VARS[*i].to_string());
            }
            BoolExpr::VarEq(i, j) | BoolExpr::VarNe(i, j) => {
                out.insert(VARS[*i].to_string());
                out.insert(VARS[*j].to_string());
            }
            BoolExpr::Not(e) => e.vars(out),
            BoolExpr::And(es) | BoolExpr::Or(es) => es.iter().for_each(|e| e.vars(out)),
        }
    }

    /// Source text; `flip` swaps comparison operands where that is legal.
    pub fn render(&self, flip: bool) -> String {
        let cmp = |l: String, op: &str, r: String| if flip { format!("{r} {op} {l}") } else { format!("{l} {op} {r}") };
        match self {
            BoolExpr::Const(b) => b.to_string(),
            BoolExpr::Eq(i, b) => cmp(VARS[*i].into(), "==", b.to_string()),
            BoolExpr::Ne(i, b) => cmp(VARS[*i].into(), "!=", b.to_string()),
            BoolExpr::VarEq(i, j) => cmp(VARS[*i].into(), "==", VARS[*j].into()),
            BoolExpr::VarNe(i, j) => cmp(VARS[*i].into(), "!=", VARS[*j].into()),
            BoolExpr::IsSet(i) => format!("{} is set", VARS[*i]),
            BoolExpr::IsUnset(i) => format!("{} is unset", VARS[*i]),
            BoolExpr::Not(e) => format!("not ({})", e.render(flip)),
            BoolExpr::And(es) => es.iter().map(|e| format!("({})", e.render(flip))).collect::<Vec<_>>().join(" and "),
            BoolExpr::Or(es) => es.iter().map(|e| format!("({})", e.render(flip))).collect::<Vec<_>>().join(" or "),
        }
    }
}

pub fn arb_bool_expr() -> impl Strategy<Value = BoolExpr> {
    let leaf = prop_oneof![
        any::<bool>().prop_map(BoolExpr::Const),
        (0..4usize, any::<bool>()).prop_map(|(i, b)| BoolExpr::Eq(i, b)),
        (0..4usize, any::<bool>()).prop_map(|(i, b)| BoolExpr::Ne(i, b)),
        (0..4usize, 0..4usize).prop_map(|(i, j)| BoolExpr::VarEq(i, j)),
        (0..4usize, 0..4usize).prop_map(|(i, j)| BoolExpr::VarNe(i, j)),
        (0..4usize).prop_map(BoolExpr::IsSet),
        (0..4usize).prop_map(BoolExpr::IsUnset),
    ];
    leaf.prop_recursive(3, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|e| BoolExpr::Not(Box::new(e))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(BoolExpr::And),
            prop::collection::vec(inner, 2..4).prop_map(BoolExpr::Or),
        ]
    })
}

/// How a generated condition is wrapped into a rule sentence.
#[derive(Debug, Clone, Copy)]
pub enum RuleShape {
    Bare,
    ThenElse,
    ThenOnly,
}

pub fn arb_rule_shape() -> impl Strategy<Value = RuleShape> {
    prop_oneof![Just(RuleShape::Bare), Just(RuleShape::ThenElse), Just(RuleShape::ThenOnly)]
}

pub fn rule_text(expr: &BoolExpr, shape: RuleShape, flip: bool) -> String {
    let c = expr.render(flip);
    match shape {
        RuleShape::Bare => c,
        RuleShape::ThenElse => format!("if {c} then 1 else 0"),
        RuleShape::ThenOnly => format!("if {c} then \"yes\""),
    }
}

/// What the oracle says the rule evaluates to.
pub fn oracle_result(expr: &BoolExpr, shape: RuleShape, env: &[Option<bool>; 4]) -> Option<Value> {
    let t = expr.eval(env);
    match shape {
        RuleShape::Bare => Some(Value::Bool(t)),
        RuleShape::ThenElse => Some(Value::int(if t { 1 } else { 0 })),
        RuleShape::ThenOnly => t.then(|| Value::text("yes")),
    }
}

pub fn env_map(env: &[Option<bool>; 4]) -> BTreeMap<String, Value> {
    VARS.iter()
        .zip(env)
        .filter_map(|(n, v)| v.map(|b| (n.to_string(), Value::Bool(b))))
        .collect()
}

pub fn all_set_assignments() -> Vec<[Option<bool>; 4]> {
    (0..16u32)
        .map(|m| std::array::from_fn(|i| Some(m & (1 << i) != 0)))
        .collect()
}

pub fn all_partial_assignments() -> Vec<[Option<bool>; 4]> {
    let states = [None, Some(false), Some(true)];
    (0..81usize)
        .map(|m| {
            let mut k = m;
            std::array::from_fn(|_| {
                let s = states[k % 3];
                k /= 3;
                s
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Plugin descriptors

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Text,
    Number,
    Checkbox,
    Select,
    File,
}

impl Kind {
    pub fn key(self) -> &'static str {
        match self {
            Kind::Text => "text",
            Kind::Number => "number",
            Kind::Checkbox => "checkbox",
            Kind::Select => "select",
            Kind::File => "file",
        }
    }
}

pub const CHOICES: [&str; 3] = ["lo", "mid", "hi"];

#[derive(Debug, Clone)]
pub struct GenInput {
    pub id: String,
    pub kind: Kind,
    pub flag: String,
    pub separator: &'static str,
    pub default: Option<Json>,
    pub visible_when: Option<Json>,
    pub required: Option<String>,
    pub fixed: Option<Json>,
    pub in_group: bool,
}

#[derive(Debug, Clone)]
pub struct GenSpec {
    pub id: String,
    pub version: String,
    pub configfile: bool,
    pub inputs: Vec<GenInput>,
    pub group_rule: Option<String>,
    pub presets: Vec<BTreeMap<String, Json>>,
    pub outfile: Option<String>,
    pub stdout: bool,
}

pub fn value_json(v: &Value) -> Json {
    v.to_json()
}

pub fn arb_value(kind: Kind) -> BoxedStrategy<Value> {
    match kind {
        Kind::Text => "[a-zA-Z0-9 ;|$()`'\"\\\\\n._-]{1,12}".prop_map(Value::text).boxed(),
        Kind::Number => (0i64..100).prop_map(Value::int).boxed(),
        Kind::Checkbox => any::<bool>().prop_map(Value::Bool).boxed(),
        Kind::Select => prop::sample::select(&CHOICES[..]).prop_map(Value::text).boxed(),
        Kind::File => "[a-z]{1,6}\\.(fa|txt)".prop_map(Value::file).boxed(),
    }
}

/// A value of `kind` different from `v`.
pub fn other_value(kind: Kind, v: &Value) -> Value {
    match (kind, v) {
        (Kind::Checkbox, Value::Bool(b)) => Value::Bool(!b),
        (Kind::Number, _) => Value::int(if v.as_f64() == Some(7.0) { 8 } else { 7 }),
        (Kind::Select, Value::Text(s)) => Value::text(if s == CHOICES[0] { CHOICES[1] } else { CHOICES[0] }),
        (Kind::File, Value::File(s)) => Value::file(format!("x{s}")),
        (_, other) => Value::text(format!("{}x", other.to_arg())),
    }
}

fn literal_for(kind: Kind, pick: u8) -> Json {
    match kind {
        Kind::Text => json!(format!("t{pick}")),
        Kind::Number => json!(pick as i64 * 3),
        Kind::Checkbox => json!(pick.is_multiple_of(2)),
        Kind::Select => json!(CHOICES[pick as usize % 3]),
        Kind::File => json!(format!("f{pick}.fa")),
    }
}

fn rule_literal(kind: Kind, pick: u8) -> String {
    match literal_for(kind, pick) {
        Json::String(s) => format!("\"{s}\""),
        other => other.to_string(),
    }
}

/// Condition over an earlier input `src`.
fn condition_on(src: &GenInput, pick: u8) -> String {
    match (src.kind, pick % 3) {
        (_, 0) => format!("{} is set", src.id),
        (Kind::Checkbox, _) => format!("{} == {}", src.id, pick.is_multiple_of(2)),
        (Kind::Number, 1) => format!("{} > {}", src.id, pick as i64 * 5),
        (k, _) => format!("{} != {}", src.id, rule_literal(k, pick)),
    }
}

fn arb_kind() -> impl Strategy<Value = Kind> {
    prop_oneof![Just(Kind::Text), Just(Kind::Number), Just(Kind::Checkbox), Just(Kind::Select), Just(Kind::File)]
}

#[derive(Debug, Clone)]
struct InputDraw {
    kind: Kind,
    flagged: bool,
    sep: u8,
    default_mode: u8,
    vis_mode: u8,
    required: bool,
    fixed: bool,
    picks: (u8, u8, u8),
    src: usize,
}

fn arb_input_draw() -> impl Strategy<Value = InputDraw> {
    (
        arb_kind(),
        any::<bool>(),
        0u8..3,
        0u8..3,
        0u8..4,
        prop::bool::weighted(0.25),
        prop::bool::weighted(0.1),
        (any::<u8>(), any::<u8>(), any::<u8>()),
        any::<usize>(),
    )
        .prop_map(|(kind, flagged, sep, default_mode, vis_mode, required, fixed, picks, src)| InputDraw {
            kind,
            flagged,
            sep,
            default_mode,
            vis_mode,
            required,
            fixed,
            picks,
            src,
        })
}

pub fn arb_gen_spec() -> impl Strategy<Value = GenSpec> {
    (
        prop::collection::vec(arb_input_draw(), 1..7),
        any::<bool>(),
        0usize..3,
        prop::option::of(any::<u8>()),
        prop::collection::vec(prop::collection::vec((any::<usize>(), any::<u8>()), 1..4), 0..3),
        prop::option::of("[a-z]{1,6}\\.out"),
        any::<bool>(),
        "[a-z][a-z0-9]{0,5}",
        "[0-9]\\.[0-9]",
    )
        .prop_map(|(draws, configfile, grouped, group_pick, preset_draws, outfile, stdout, id, version)| {
            let mut inputs: Vec<GenInput> = Vec::new();
            let n = draws.len();
            for (k, d) in draws.into_iter().enumerate() {
                let id = format!("i{k}");
                let flag = if d.flagged || d.kind == Kind::Checkbox { format!("--{id}") } else { String::new() };
                let separator = ["space", "equals", "none"][d.sep as usize];
                let earlier = (k > 0).then(|| &inputs[d.src % k]);
                let default = match (d.default_mode, earlier) {
                    (1, _) => Some(literal_for(d.kind, d.picks.0)),
                    (2, Some(src)) => Some(json!(format!(
                        "if {} then {} else {}",
                        condition_on(src, d.picks.1),
                        rule_literal(d.kind, d.picks.0),
                        rule_literal(d.kind, d.picks.2)
                    ))),
                    _ => None,
                };
                let visible_when = match (d.vis_mode, earlier) {
                    (1, _) => Some(json!(d.picks.1 % 4 != 0)),
                    (2 | 3, Some(src)) => Some(json!(condition_on(src, d.picks.2))),
                    _ => None,
                };
                inputs.push(GenInput {
                    id: id.clone(),
                    kind: d.kind,
                    flag,
                    separator,
                    default,
                    visible_when,
                    required: d.required.then(|| format!("{id} is required")),
                    fixed: d.fixed.then(|| literal_for(d.kind, d.picks.2)),
                    in_group: false,
                });
            }
            let grouped = grouped.min(n.saturating_sub(1));
            for inp in inputs.iter_mut().rev().take(grouped) {
                inp.in_group = true;
            }
            let group_rule = match (group_pick, grouped > 0) {
                (Some(p), true) => Some(condition_on(&inputs[p as usize % (n - grouped)], p)),
                _ => None,
            };
            let presets = preset_draws
                .into_iter()
                .map(|vals| {
                    vals.into_iter()
                        .filter_map(|(i, p)| {
                            let inp = &inputs[i % n];
                            (inp.fixed.is_none()).then(|| (inp.id.clone(), literal_for(inp.kind, p)))
                        })
                        .collect::<BTreeMap<_, _>>()
                })
                .filter(|m| !m.is_empty())
                .collect();
            GenSpec {
                id: format!("p{id}"),
                version,
                configfile,
                inputs,
                group_rule,
                presets,
                outfile,
                stdout,
            }
        })
}

impl GenSpec {
    pub fn input_json(inp: &GenInput) -> Json {
        let mut o = serde_json::Map::new();
        o.insert(inp.kind.key().into(), json!(inp.flag));
        o.insert("id".into(), json!(inp.id));
        if !inp.flag.is_empty() {
            o.insert("separator".into(), json!(inp.separator));
        }
        if inp.kind == Kind::Select {
            o.insert("choices".into(), json!(CHOICES));
        }
        if inp.kind == Kind::Number {
            o.insert("min".into(), json!(0));
            o.insert("max".into(), json!(1000));
        }
        if let Some(d) = &inp.default {
            o.insert("default".into(), d.clone());
        }
        if let Some(v) = &inp.visible_when {
            o.insert("visible_when".into(), v.clone());
        }
        if let Some(r) = &inp.required {
            o.insert("required".into(), json!(r));
        }
        if let Some(f) = &inp.fixed {
            o.insert("fix_value".into(), f.clone());
        }
        Json::Object(o)
    }

    pub fn to_json(&self) -> Json {
        let mut options: Vec<Json> = self.inputs.iter().filter(|i| !i.in_group).map(Self::input_json).collect();
        let grouped: Vec<Json> = self.inputs.iter().filter(|i| i.in_group).map(Self::input_json).collect();
        if !grouped.is_empty() {
            let mut g = json!({"group": "", "id": "grp", "title": "More", "options": grouped});
            if let Some(r) = &self.group_rule {
                g["visible_when"] = json!(r);
            }
            options.push(g);
        }
        let mut doc = json!({
            "id": self.id,
            "program": "prog",
            "name": format!("Generated {}", self.id),
            "version": self.version,
            "options": options,
        });
        if self.configfile {
            doc["configfile"] = json!(true);
            doc["valuesep"] = json!(" = ");
        }
        if let Some(o) = &self.outfile {
            if self.stdout {
                doc["outputs"] = json!([{"id": "out", "file": o, "stdout": true}]);
            } else {
                doc["outfile"] = json!(o);
            }
        }
        if !self.presets.is_empty() {
            doc["presets"] = Json::Array(
                self.presets
                    .iter()
                    .enumerate()
                    .map(|(i, vals)| json!({"id": format!("preset{i}"), "title": format!("Preset {i}"), "values": vals}))
                    .collect(),
            );
        }
        doc
    }

    pub fn parse(&self) -> PluginSpec {
        parse_plugin(&self.to_json().to_string()).unwrap_or_else(|e| panic!("generated spec must parse: {e}\n{}", self.to_json()))
    }

    pub fn kind_of(&self, id: &str) -> Kind {
        self.inputs.iter().find(|i| i.id == id).unwrap().kind
    }

    /// Inputs a user may edit.
    pub fn editable(&self) -> Vec<&GenInput> {
        self.inputs.iter().filter(|i| i.fixed.is_none()).collect()
    }
}

/// A spec plus a list of edits (distinct ids, editable inputs only).
pub fn arb_spec_and_edits() -> impl Strategy<Value = (GenSpec, Vec<(String, Value)>)> {
    arb_gen_spec().prop_flat_map(|g| {
        let editable: Vec<(String, Kind)> = g.editable().iter().map(|i| (i.id.clone(), i.kind)).collect();
        let edits: Vec<BoxedStrategy<Option<(String, Value)>>> = editable
            .into_iter()
            .map(|(id, k)| prop::option::of(arb_value(k).prop_map(move |v| (id.clone(), v))).boxed())
            .collect();
        (Just(g), edits).prop_map(|(g, e)| (g, e.into_iter().flatten().collect::<Vec<_>>()))
    })
}

pub fn state_from(spec: &PluginSpec, edits: &[(String, Value)]) -> SessionState {
    edits.iter().fold(SessionState::default(), |s, (id, v)| {
        pline_core::apply_input(spec, &s, id, v.clone()).unwrap_or_else(|e| panic!("apply {id}={v:?}: {e}"))
    })
}

// ---------------------------------------------------------------------------
// Pipelines

pub fn arb_registry() -> impl Strategy<Value = Vec<GenSpec>> {
    prop::collection::vec(arb_gen_spec(), 1..4).prop_map(|mut specs| {
        for (i, s) in specs.iter_mut().enumerate() {
            s.id = format!("{}{i}", s.id);
        }
        specs
    })
}

pub fn registry_of(specs: &[GenSpec]) -> BTreeMap<String, PluginSpec> {
    specs.iter().map(|g| (g.id.clone(), g.parse())).collect()
}

#[derive(Debug, Clone)]
struct StepDraw {
    plugin: usize,
    values: Vec<(String, Value)>,
    session_name: String,
    bind: u8,
    src: usize,
}

fn arb_step(reg: Vec<GenSpec>) -> impl Strategy<Value = StepDraw> {
    (0..reg.len()).prop_flat_map(move |p| {
        let values: Vec<BoxedStrategy<Option<(String, Value)>>> = reg[p]
            .editable()
            .iter()
            .map(|inp| {
                let id = inp.id.clone();
                prop::option::of(arb_value(inp.kind).prop_map(move |v| (id.clone(), v))).boxed()
            })
            .collect();
        (Just(p), values, "[a-z ]{0,8}", any::<u8>(), any::<usize>()).prop_map(
            |(plugin, values, session_name, bind, src)| StepDraw {
                plugin,
                values: values.into_iter().flatten().collect(),
                session_name,
                bind,
                src,
            },
        )
    })
}

pub fn arb_pipeline() -> impl Strategy<Value = (Vec<GenSpec>, PipelineSpec)> {
    arb_registry().prop_flat_map(|reg| {
        let steps = prop::collection::vec(arb_step(reg.clone()), 0..5);
        (Just(reg), steps, "[A-Za-z0-9 _-]{0,12}").prop_map(|(reg, draws, name)| {
            let mut steps = Vec::new();
            for (idx, d) in draws.into_iter().enumerate() {
                let g = &reg[d.plugin];
                let spec = g.parse();
                let mut session = SessionState {
                    values: d.values.into_iter().collect(),
                    active_preset: None,
                    session_name: d.session_name,
                };
                if !spec.presets.is_empty() && d.bind % 3 == 0 {
                    let pid = spec.presets[d.bind as usize % spec.presets.len()].id.clone();
                    session = pline_core::apply_preset(&spec, &session, &pid).unwrap();
                }
                let mut bindings = BTreeMap::new();
                for (k, inp) in g.inputs.iter().filter(|i| i.kind == Kind::File).enumerate() {
                    let src = match (d.bind as usize + k) % 3 {
                        0 => FileSource::Upload,
                        1 if idx > 0 => FileSource::Pipe,
                        _ if idx > 0 => FileSource::StepOutput { step: d.src % idx, output: "out".into() },
                        _ => FileSource::Upload,
                    };
                    bindings.insert(inp.id.clone(), src);
                }
                steps.push(Step {
                    plugin_id: spec.id.clone(),
                    plugin_version: spec.version.clone(),
                    session,
                    bindings,
                });
            }
            (reg, PipelineSpec { name, steps })
        })
    })
}

// ---------------------------------------------------------------------------
// Reference graphs

/// Random directed graph on `n` nodes as adjacency lists.
pub fn arb_graph() -> impl Strategy<Value = Vec<Vec<usize>>> {
    (1usize..=8).prop_flat_map(|n| prop::collection::vec(prop::collection::vec(0..n, 0..3), n))
}

/// Brute-force reachability: does any node reach itself?
pub fn has_cycle(adj: &[Vec<usize>]) -> bool {
    let n = adj.len();
    (0..n).any(|start| {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = adj[start].clone();
        while let Some(v) = stack.pop() {
            if v == start {
                return true;
            }
            if !seen[v] {
                seen[v] = true;
                stack.extend(&adj[v]);
            }
        }
        false
    })
}

/// Descriptor whose rule references follow the graph edges.
pub fn graph_doc(adj: &[Vec<usize>], use_visibility: &[bool]) -> Json {
    let options: Vec<Json> = adj
        .iter()
        .enumerate()
        .map(|(i, succ)| {
            let mut o = json!({"number": format!("--n{i}"), "id": format!("n{i}")});
            if !succ.is_empty() {
                let cond = succ.iter().map(|j| format!("n{j} is set")).collect::<Vec<_>>().join(" or ");
                if use_visibility.get(i).copied().unwrap_or(false) {
                    o["visible_when"] = json!(cond);
                } else {
                    o["default"] = json!(format!("if {cond} then 1 else 2"));
                }
            }
            o
        })
        .collect();
    json!({"program": "g", "options": options})
}
