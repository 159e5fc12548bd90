mod support;

use std::collections::{BTreeMap, BTreeSet};

use pline_core::dsl::{Condition, Operand};
use pline_core::pipeline::ImportOptions;
use pline_core::spec::{canonical_json, ParseErrorKind};
use pline_core::synth::synthesize;
use pline_core::{
    apply_input, apply_preset, canonicalize, export_pipeline, export_session, import_pipeline, import_session,
    parse_plugin, parse_rule, resolve, Provenance, SessionState, Value,
};
use proptest::prelude::*;
use serde_json::{json, Value as Json};
use support::*;

/// Second traversal, independent of `Rule::references`.
fn walk_refs(c: &Condition, out: &mut BTreeSet<String>) {
    let operand = |o: &Operand, out: &mut BTreeSet<String>| {
        if let Operand::Input(id) = o {
            out.insert(id.clone());
        }
    };
    match c {
        Condition::Or(cs) | Condition::And(cs) => cs.iter().for_each(|c| walk_refs(c, out)),
        Condition::Not(c) => walk_refs(c, out),
        Condition::Cmp { lhs, rhs, .. } => {
            operand(lhs, out);
            operand(rhs, out);
        }
        Condition::IsSet(id) => {
            out.insert(id.clone());
        }
        Condition::Const(_) => {}
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn rules_match_truth_table(expr in arb_bool_expr(), shape in arb_rule_shape(), flip in any::<bool>()) {
        let text = rule_text(&expr, shape, flip);
        let rule = parse_rule(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e:?}")))?;
        for env in all_partial_assignments() {
            let got = rule.evaluate(&env_map(&env)).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(got, oracle_result(&expr, shape, &env), "{} under {:?}", text, env);
        }
    }

    #[test]
    fn references_match_independent_walk(expr in arb_bool_expr(), shape in arb_rule_shape()) {
        let rule = parse_rule(&rule_text(&expr, shape, false)).unwrap();
        let mut walked = BTreeSet::new();
        walk_refs(&rule.condition, &mut walked);
        let mut generated = BTreeSet::new();
        expr.vars(&mut generated);
        prop_assert_eq!(&rule.references(), &walked);
        prop_assert_eq!(&rule.references(), &generated);
    }

    #[test]
    fn printer_round_trips(expr in arb_bool_expr(), shape in arb_rule_shape(), flip in any::<bool>()) {
        let rule = parse_rule(&rule_text(&expr, shape, flip)).unwrap();
        let printed = rule.to_string();
        let reparsed = parse_rule(&printed).unwrap();
        prop_assert_eq!(&reparsed, &rule);
        prop_assert_eq!(reparsed.to_string(), printed);
    }

    #[test]
    fn evaluation_is_pure(expr in arb_bool_expr()) {
        let rule = parse_rule(&expr.render(false)).unwrap();
        for env in all_set_assignments() {
            let ctx = env_map(&env);
            prop_assert_eq!(rule.evaluate(&ctx).unwrap(), rule.evaluate(&ctx).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn canonical_form_round_trips(g in arb_gen_spec()) {
        let spec = g.parse();
        let text = canonicalize(&spec);
        let back = parse_plugin(&text).unwrap();
        prop_assert_eq!(&back, &spec);
        prop_assert_eq!(canonicalize(&back), text);
    }

    #[test]
    fn unknown_fields_are_rejected(g in arb_gen_spec(), name in "[a-z_]{1,10}", at_option in any::<bool>()) {
        let known = [
            "id", "program", "name", "desc", "version", "outfile", "outputs", "configfile", "valuesep",
            "options", "presets", "icon", "doc_url", "markup", "style", "flag", "title", "separator",
            "default", "required", "visible_when", "enabled_when", "fix_value", "choices", "min", "max",
            "integer", "filter", "merge", "text", "number", "checkbox", "bool", "select", "file", "hidden", "group",
        ];
        prop_assume!(!known.contains(&name.as_str()));
        let mut doc = g.to_json();
        if at_option {
            doc["options"][0][&name] = json!(1);
        } else {
            doc[&name] = json!(1);
        }
        let err = parse_plugin(&doc.to_string()).unwrap_err();
        prop_assert_eq!(err.kind, ParseErrorKind::UnknownField);
        prop_assert!(err.message.contains(&name));
    }

    #[test]
    fn cycle_detection_is_exact(adj in arb_graph(), vis in prop::collection::vec(any::<bool>(), 8)) {
        let doc = graph_doc(&adj, &vis);
        let res = parse_plugin(&doc.to_string());
        if has_cycle(&adj) {
            let err = res.unwrap_err();
            prop_assert_eq!(err.kind, ParseErrorKind::Cycle);
            // The reported ids form a real cycle.
            let idx = |id: &String| id[1..].parse::<usize>().unwrap();
            let ids = &err.ids;
            prop_assert!(!ids.is_empty());
            for (k, id) in ids.iter().enumerate() {
                let next = &ids[(k + 1) % ids.len()];
                prop_assert!(adj[idx(id)].contains(&idx(next)), "{:?} not a cycle in {:?}", ids, adj);
            }
        } else {
            prop_assert!(res.is_ok(), "{:?}", res.err());
        }
    }

    #[test]
    fn resolve_is_pure_and_a_fixpoint((g, edits) in arb_spec_and_edits()) {
        let spec = g.parse();
        let state = state_from(&spec, &edits);
        let before = state.clone();
        let first = resolve(&spec, &state);
        prop_assert_eq!(&state, &before);
        prop_assert_eq!(&resolve(&spec, &state), &first);

        // Re-applying every stored value changes nothing.
        let replayed = state.values.iter().fold(state.clone(), |s, (id, v)| apply_input(&spec, &s, id, v.clone()).unwrap());
        prop_assert_eq!(&resolve(&spec, &replayed), &first);

        // Each rule-derived value equals its rule evaluated over the resolved values.
        let env: BTreeMap<String, Value> = first.inputs.iter().filter_map(|r| r.value.clone().map(|v| (r.id.clone(), v))).collect();
        for r in &first.inputs {
            if r.provenance == Some(Provenance::DefaultRule) {
                if let Some(pline_core::spec::ValueSource::Rule(rule)) = &spec.input(&r.id).unwrap().default {
                    let again = rule.evaluate(&env).ok().flatten();
                    let again = again.and_then(|v| spec.input(&r.id).unwrap().coerce_rule_result(v).ok());
                    prop_assert_eq!(&again, &r.value, "input {}", r.id);
                }
            }
        }
        // Invisible inputs never raise errors.
        for e in &first.errors {
            if let Some(id) = &e.input {
                prop_assert!(first.input(id).unwrap().is_active(), "{} errors while inactive", id);
            }
        }
    }

    #[test]
    fn edit_order_does_not_matter((g, edits) in arb_spec_and_edits(), seed in any::<u64>()) {
        let spec = g.parse();
        let mut shuffled = edits.clone();
        let mut s = seed;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(resolve(&spec, &state_from(&spec, &edits)), resolve(&spec, &state_from(&spec, &shuffled)));
    }

    #[test]
    fn presets_detach_on_any_divergent_edit(g in arb_gen_spec()) {
        let spec = g.parse();
        for preset in &spec.presets {
            let base = apply_preset(&spec, &SessionState::default(), &preset.id).unwrap();
            prop_assert_eq!(base.active_preset.as_deref(), Some(preset.id.as_str()));
            for (id, v) in &preset.values {
                let edited = apply_input(&spec, &base, id, other_value(g.kind_of(id), v)).unwrap();
                prop_assert_eq!(&edited.active_preset, &None);
                // Restoring the value does not reactivate it.
                let restored = apply_input(&spec, &edited, id, v.clone()).unwrap();
                prop_assert_eq!(restored.active_preset, None);
            }
        }
    }

    #[test]
    fn session_documents_round_trip((g, edits) in arb_spec_and_edits(), name in "[ -~]{0,16}") {
        let spec = g.parse();
        let mut state = state_from(&spec, &edits);
        state.session_name = name;
        let doc = export_session(&spec, &state).to_string();
        prop_assert_eq!(import_session(&spec, &doc).unwrap(), state);
    }

    #[test]
    fn pipeline_documents_round_trip((reg, p) in arb_pipeline()) {
        let specs = registry_of(&reg);
        let doc = export_pipeline(&p).to_string();
        prop_assert_eq!(import_pipeline(&doc, &specs, ImportOptions::default()).unwrap(), p);
    }

    #[test]
    fn group_boundaries_depend_on_bindings_only((reg, p) in arb_pipeline(), seed in any::<u64>()) {
        let specs = registry_of(&reg);
        let mut other = p.clone();
        // Replace every session with a different one; bindings stay.
        for (i, step) in other.steps.iter_mut().enumerate() {
            let mut s = SessionState::default();
            if (seed >> (i % 64)) & 1 == 1 {
                s.values = step.session.values.clone();
            }
            step.session = s;
        }
        if let (Ok(a), Ok(b)) = (pline_core::plan(&p, &specs), pline_core::plan(&other, &specs)) {
            let shape = |plan: &pline_core::ExecutionPlan| plan.groups.iter().map(|g| g.steps.iter().map(|s| s.index).collect::<Vec<_>>()).collect::<Vec<_>>();
            prop_assert_eq!(shape(&a), shape(&b));
        }
    }

    #[test]
    fn plans_never_read_from_later_groups((reg, p) in arb_pipeline()) {
        let specs = registry_of(&reg);
        if let Ok(plan) = pline_core::plan(&p, &specs) {
            let group_of: BTreeMap<usize, usize> = plan.groups.iter().enumerate()
                .flat_map(|(gi, g)| g.steps.iter().map(move |s| (s.index, gi))).collect();
            for h in &plan.handoffs {
                prop_assert!(group_of[&h.from_step] < group_of[&h.to_step]);
            }
            for g in &plan.groups {
                for pair in g.steps.windows(2) {
                    prop_assert_eq!(&pair[0].command.stdout_to, &pline_core::StdoutTarget::Pipe);
                    prop_assert_eq!(pair[1].command.stdin_from, pline_core::StdinSource::Pipe);
                }
            }
        }
    }

    #[test]
    fn hidden_inputs_drop_only_their_own_arguments((g, edits) in arb_spec_and_edits(), k in any::<usize>()) {
        // Plain values only: no rules, no groups, no fixed values.
        let mut g = g;
        for i in g.inputs.iter_mut() {
            i.default = None;
            i.visible_when = None;
            i.required = None;
            i.fixed = None;
            i.in_group = false;
        }
        g.outfile = None;
        let spec = g.parse();
        let state = state_from(&spec, &edits);
        let contribution = |id: &str| -> Vec<String> {
            let mut single = g.clone();
            single.inputs.retain(|i| i.id == id);
            single.presets.clear();
            let s = single.parse();
            let st = SessionState { values: state.values.iter().filter(|(k, _)| *k == id).map(|(k, v)| (k.clone(), v.clone())).collect(), ..Default::default() };
            let plan = synthesize(&s, &resolve(&s, &st)).unwrap();
            match plan.config_file {
                Some(cfg) => cfg.content.lines().map(str::to_string).collect(),
                None => plan.argv,
            }
        };
        let tokens = |spec: &pline_core::PluginSpec| -> Result<Vec<String>, TestCaseError> {
            let plan = synthesize(spec, &resolve(spec, &state)).unwrap();
            match plan.config_file {
                Some(cfg) => {
                    prop_assert_eq!(plan.argv.len(), 1);
                    Ok(cfg.content.lines().map(str::to_string).collect())
                }
                None => Ok(plan.argv),
            }
        };
        let full = tokens(&spec)?;
        let expected: Vec<String> = g.inputs.iter().flat_map(|i| contribution(&i.id)).collect();
        prop_assert_eq!(&full, &expected);

        let hidden = &g.inputs[k % g.inputs.len()].id;
        let mut doc = g.to_json();
        for o in doc["options"].as_array_mut().unwrap() {
            if o["id"] == Json::String(hidden.clone()) {
                o["visible_when"] = json!(false);
            }
        }
        let hidden_spec = parse_plugin(&doc.to_string()).unwrap();
        let without: Vec<String> = g.inputs.iter().filter(|i| &i.id != hidden).flat_map(|i| contribution(&i.id)).collect();
        prop_assert_eq!(tokens(&hidden_spec)?, without);
    }
}

#[test]
fn codeml_presets_detach_exhaustively() {
    let spec = parse_plugin(CODEML).unwrap();
    for preset in &spec.presets {
        let base = apply_preset(&spec, &SessionState::default(), &preset.id).unwrap();
        for (id, v) in &preset.values {
            let other = match v {
                Value::Bool(b) => Value::Bool(!b),
                Value::Number(_) => Value::float(2.5).unwrap(),
                Value::Text(s) => Value::text(if s == "0" { "1" } else { "0" }),
                Value::File(_) => unreachable!(),
            };
            let edited = apply_input(&spec, &base, id, other).unwrap();
            assert_eq!(edited.active_preset, None, "{} / {id}", preset.id);
        }
    }
}

#[test]
fn gap_remover_fixture() {
    let spec = parse_plugin(GAP_REMOVER).unwrap();
    let empty = resolve(&spec, &SessionState::default());
    assert!(!empty.ready);
    assert_eq!(empty.error_messages(), ["Input file missing!"]);
    let s = apply_input(&spec, &SessionState::default(), "file", Value::file("aln.fa")).unwrap();
    let s = apply_input(&spec, &s, "count", Value::Bool(true)).unwrap();
    let plan = synthesize(&spec, &resolve(&spec, &s)).unwrap();
    assert_eq!(plan.program, "remove_gaps.py");
    assert_eq!(plan.argv, ["aln.fa", "--count"]);
    assert_eq!(plan.expected_outputs, ["output.fa"]);
    assert_eq!(canonical_json(&spec)["name"], "Gaps remover");
}
