use std::collections::{BTreeMap, HashMap};

use super::{Block, BlockId, Diagnostic, EmissionUnit, Expr, Line, NamingContext, Section, Stmt};
use crate::model::{
    ActionKind, BoundAction, CapturedValue, InstantiatedPlan, ObjectId, ObjectRefKey, Primitive,
};
use crate::trace::{ReconstructionDb, Resolution, ResolveError};

struct Built {
    var: String,
    /// Value of the mutation epoch when the object was last known to be in its captured state.
    epoch: u64,
}

struct Replayed {
    var: String,
    emitted: usize,
    epoch: u64,
    in_progress: bool,
}

/// Statement builder for one scope. Structure-based objects come from `plans`; every other
/// object reference is resolved against the reconstruction database.
pub struct Emitter<'a> {
    db: &'a ReconstructionDb,
    plans: &'a BTreeMap<ObjectRefKey, InstantiatedPlan>,
    pub naming: NamingContext,
    lines: Vec<Line>,
    blocks: BTreeMap<BlockId, Block>,
    stack: Vec<BlockId>,
    next_block: BlockId,
    section: Section,
    planned: HashMap<ObjectRefKey, Option<Built>>,
    replayed: HashMap<ObjectId, Replayed>,
    // Bumped whenever a replayed call may have changed objects other than its receiver.
    epoch: u64,
    diagnostics: Vec<Diagnostic>,
}

impl<'a> Emitter<'a> {
    pub fn new(db: &'a ReconstructionDb, plans: &'a BTreeMap<ObjectRefKey, InstantiatedPlan>) -> Self {
        Emitter {
            db,
            plans,
            naming: NamingContext::new(),
            lines: Vec::new(),
            blocks: BTreeMap::new(),
            stack: Vec::new(),
            next_block: 0,
            section: Section::None,
            planned: HashMap::new(),
            replayed: HashMap::new(),
            epoch: 0,
            diagnostics: Vec::new(),
        }
    }

    pub fn set_section(&mut self, section: Section) {
        self.section = section;
    }

    /// Stops reusing already built objects; later references are rebuilt from scratch.
    pub fn forget_objects(&mut self) {
        self.planned.clear();
        self.replayed.clear();
    }

    pub fn push(&mut self, stmt: Stmt) {
        self.lines.push(Line { stmt, section: self.section, blocks: self.stack.clone() });
    }

    /// Notes that arbitrary objects may have changed (e.g. after invoking the method under test).
    pub fn invalidate(&mut self) {
        self.epoch += 1;
    }

    pub fn diagnose(&mut self, d: Diagnostic) {
        if !self.diagnostics.contains(&d) {
            self.diagnostics.push(d);
        }
    }

    fn open_block(&mut self) -> BlockId {
        let id = self.next_block;
        self.next_block += 1;
        self.stack.push(id);
        id
    }

    fn close_block(&mut self, id: BlockId, var: &str, type_name: &str) {
        let top = self.stack.pop();
        debug_assert_eq!(top, Some(id));
        self.blocks.insert(id, Block { var: var.to_string(), type_name: type_name.to_string() });
    }

    /// Host-language type of a captured value; `hint` wins when present.
    pub fn type_for(&self, v: &CapturedValue, hint: &str) -> String {
        if !hint.is_empty() {
            return hint.to_string();
        }
        match v {
            CapturedValue::PrimitiveLiteral { type_name, .. } => type_name.clone(),
            CapturedValue::Text { .. } => "String".into(),
            CapturedValue::EnumConstant { type_name, .. } => type_name.clone(),
            CapturedValue::Sequence { elements, .. } => {
                let elem = elements.iter().find(|e| **e != CapturedValue::Null).map(|e| self.type_for(e, ""));
                format!("{}[]", elem.unwrap_or_else(|| "int".into()))
            }
            CapturedValue::MapValue { entries, .. } => {
                let (k, v) = entries
                    .first()
                    .map(|(k, v)| (self.type_for(k, ""), self.type_for(v, "")))
                    .unwrap_or_else(|| ("String".into(), "String".into()));
                format!("Map<{k}, {v}>")
            }
            CapturedValue::Null => String::new(),
            CapturedValue::ObjectRef { object_id, logical_time } => {
                let key = ObjectRefKey { object_id: *object_id, logical_time: *logical_time };
                self.plans
                    .get(&key)
                    .map(|p| p.target_type.clone())
                    .or_else(|| self.db.type_of(*object_id).map(str::to_string))
                    .unwrap_or_default()
            }
            CapturedValue::Opaque { type_name } => type_name.clone(),
        }
    }

    /// Expression for a value; sequences, maps and objects are built into locals first.
    pub fn value(&mut self, v: &CapturedValue, hint: &str, name: Option<&str>) -> Expr {
        match v {
            CapturedValue::PrimitiveLiteral { value, .. } => match *value {
                Primitive::Int(i) => Expr::Int(i),
                Primitive::Double(d) => Expr::Double(d),
                Primitive::Bool(b) => Expr::Bool(b),
            },
            CapturedValue::Text { value } => Expr::Text(value.clone()),
            CapturedValue::EnumConstant { type_name, constant_name } => {
                Expr::EnumConstant { type_name: type_name.clone(), constant: constant_name.clone() }
            }
            CapturedValue::Null => Expr::Null,
            CapturedValue::Opaque { type_name } => {
                self.diagnose(Diagnostic::Opaque { type_name: type_name.clone() });
                Expr::Placeholder { reason: format!("opaque {type_name}") }
            }
            CapturedValue::Sequence { elements, truncated } => {
                if *truncated {
                    self.diagnose(Diagnostic::Truncated { object: None });
                }
                let ty = self.type_for(v, hint);
                let elem_type = ty.strip_suffix("[]").unwrap_or("int").to_string();
                let block = self.open_block();
                let elements: Vec<_> = elements.iter().map(|e| self.value(e, &elem_type, None)).collect();
                let var = self.naming.fresh(name, &ty);
                self.push(Stmt::Let { name: var.clone(), type_name: ty.clone(), value: Expr::Sequence { elem_type, elements } });
                self.close_block(block, &var, &ty);
                Expr::Local(var)
            }
            CapturedValue::MapValue { entries, truncated } => {
                if *truncated {
                    self.diagnose(Diagnostic::Truncated { object: None });
                }
                let ty = self.type_for(v, hint);
                let (key_type, value_type) = split_map_type(&ty);
                let block = self.open_block();
                let entries: Vec<_> = entries
                    .iter()
                    .map(|(k, val)| (self.value(k, &key_type, None), self.value(val, &value_type, None)))
                    .collect();
                let var = self.naming.fresh(name, &ty);
                self.push(Stmt::Let { name: var.clone(), type_name: ty.clone(), value: Expr::Map { key_type, value_type, entries } });
                self.close_block(block, &var, &ty);
                Expr::Local(var)
            }
            CapturedValue::ObjectRef { object_id, logical_time } => {
                let key = ObjectRefKey { object_id: *object_id, logical_time: *logical_time };
                self.object(key, hint, name)
            }
        }
    }

    /// Like [`value`](Self::value) but binds literals to a local, as done for call arguments.
    pub fn bind(&mut self, v: &CapturedValue, hint: &str, name: Option<&str>) -> Expr {
        let ty = self.type_for(v, hint);
        let e = self.value(v, &ty, name);
        match e {
            Expr::Local(_) => e,
            Expr::Null if ty.is_empty() => e,
            other => {
                let var = self.naming.fresh(name, &ty);
                self.push(Stmt::Let { name: var.clone(), type_name: ty, value: other });
                Expr::Local(var)
            }
        }
    }

    fn bind_args(&mut self, action: &BoundAction) -> Vec<Expr> {
        let params = action.action.callable.as_ref().map(|c| c.parameters.clone()).unwrap_or_default();
        action
            .arguments
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let p = params.get(i);
                let hint = p.map(|p| p.type_name.as_str()).unwrap_or("");
                self.bind(a, hint, p.map(|p| p.name.as_str()))
            })
            .collect()
    }

    fn object(&mut self, key: ObjectRefKey, hint: &str, name: Option<&str>) -> Expr {
        if let Some(plan) = self.plans.get(&key) {
            return self.planned_object(key, plan, name);
        }
        let (res, adapter_diags) = self.db.resolve_reporting(key);
        for d in adapter_diags {
            self.diagnose(Diagnostic::AdapterFailed { adapter: d.adapter, message: d.message });
        }
        match res {
            Err(e) => {
                let d = match e {
                    ResolveError::UnknownObject { .. } => Diagnostic::Unresolved { object: key },
                    ResolveError::Incomplete { object_id, since } => Diagnostic::Incomplete { object_id, since },
                    ResolveError::MidCall { object_id, time } => Diagnostic::MidCall { object_id, time },
                };
                self.diagnose(d);
                Expr::Placeholder { reason: format!("{} {key}", e_code(&e)) }
            }
            Ok(Resolution::Constant(action)) => {
                let ty = self.db.type_of(key.object_id).map(str::to_string).unwrap_or_else(|| hint.to_string());
                let member = action.member.expect("constant actions name their member");
                let var = self.naming.fresh(name, &ty);
                self.push(Stmt::Let { name: var.clone(), type_name: ty, value: Expr::StaticRead(member) });
                Expr::Local(var)
            }
            Ok(Resolution::Replay(actions)) => self.replayed_object(key, &actions, hint, name),
        }
    }

    fn planned_object(&mut self, key: ObjectRefKey, plan: &InstantiatedPlan, name: Option<&str>) -> Expr {
        match self.planned.get(&key) {
            Some(Some(b)) if b.epoch == self.epoch => return Expr::Local(b.var.clone()),
            Some(None) => {
                self.diagnose(Diagnostic::UnbreakableCycle { object: key });
                return Expr::Placeholder { reason: format!("cycle through {key}") };
            }
            _ => {}
        }
        let ty = plan.target_type.clone();
        let Some((first, rest)) = plan.actions.split_first() else {
            self.diagnose(Diagnostic::Unresolved { object: key });
            return Expr::Placeholder { reason: format!("empty plan for {key}") };
        };
        match first.action.kind {
            ActionKind::UseEnumConstant => {
                let constant = first.action.member.as_ref().map(|m| m.member.clone()).unwrap_or_default();
                return Expr::EnumConstant { type_name: ty, constant };
            }
            ActionKind::UseObjectReference => {
                return match first.arguments.first() {
                    Some(v) => self.value(&v.clone(), &ty, name),
                    None => Expr::Placeholder { reason: format!("dangling reference {key}") },
                };
            }
            _ => {}
        }
        self.planned.insert(key, None);
        let block = self.open_block();
        let value = match first.action.kind {
            ActionKind::UseStaticField | ActionKind::UseNamedConstant => {
                Expr::StaticRead(first.action.member.clone().expect("constant actions name their member"))
            }
            ActionKind::CallFactoryMethod => {
                let args = self.bind_args(first);
                Expr::StaticCall { owner: ty.clone(), method: first.action.callable_name().to_string(), args }
            }
            _ => {
                let args = self.bind_args(first);
                Expr::New { type_name: ty.clone(), args }
            }
        };
        let var = self.naming.fresh(name, &ty);
        self.push(Stmt::Let { name: var.clone(), type_name: ty.clone(), value });
        self.planned.insert(key, Some(Built { var: var.clone(), epoch: self.epoch }));
        for action in rest {
            self.apply(&var, action);
        }
        self.close_block(block, &var, &ty);
        self.planned.insert(key, Some(Built { var: var.clone(), epoch: self.epoch }));
        Expr::Local(var)
    }

    fn apply(&mut self, var: &str, action: &BoundAction) {
        if action.action.kind == ActionKind::AssignField {
            let field = action.action.covered_fields.iter().next().cloned().unwrap_or_default();
            let value = match action.arguments.first() {
                Some(v) => {
                    let hint = action.action.field_type.clone().unwrap_or_default();
                    self.bind(v, &hint, Some(&field))
                }
                None => Expr::Null,
            };
            self.push(Stmt::Assign { target: var.to_string(), field, value });
        } else {
            let args = self.bind_args(action);
            let method = action.action.callable_name().to_string();
            self.push(Stmt::Expr(Expr::Call { target: Box::new(Expr::Local(var.to_string())), method, args }));
        }
    }

    fn replayed_object(&mut self, key: ObjectRefKey, actions: &[BoundAction], hint: &str, name: Option<&str>) -> Expr {
        let n = actions.len();
        if let Some(r) = self.replayed.get(&key.object_id) {
            if r.emitted == n && r.epoch == self.epoch {
                return Expr::Local(r.var.clone());
            }
            if r.in_progress {
                self.diagnose(Diagnostic::UnbreakableCycle { object: key });
                return Expr::Placeholder { reason: format!("cycle through {key}") };
            }
        }
        let ty = self.db.type_of(key.object_id).map(str::to_string).unwrap_or_else(|| hint.to_string());
        let block = self.open_block();
        let args = self.bind_args(&actions[0]);
        let var = self.naming.fresh(name, &ty);
        self.push(Stmt::Let { name: var.clone(), type_name: ty.clone(), value: Expr::New { type_name: ty.clone(), args } });
        self.replayed.insert(key.object_id, Replayed { var: var.clone(), emitted: 1, epoch: self.epoch, in_progress: true });
        for action in &actions[1..] {
            self.apply(&var, action);
            self.epoch += 1;
            let r = self.replayed.get_mut(&key.object_id).expect("inserted above");
            r.emitted += 1;
            r.epoch = self.epoch;
        }
        self.replayed.get_mut(&key.object_id).expect("inserted above").in_progress = false;
        self.close_block(block, &var, &ty);
        Expr::Local(var)
    }

    pub fn finish(self, root: Expr, root_type: String) -> EmissionUnit {
        let used: std::collections::BTreeSet<BlockId> = self.lines.iter().flat_map(|l| l.blocks.iter().copied()).collect();
        let blocks = self.blocks.into_iter().filter(|(id, _)| used.contains(id)).collect();
        EmissionUnit { lines: self.lines, root, root_type, blocks, helpers: Vec::new(), diagnostics: self.diagnostics }
    }
}

fn e_code(e: &ResolveError) -> &'static str {
    match e {
        ResolveError::UnknownObject { .. } => "unresolved",
        ResolveError::Incomplete { .. } => "incomplete",
        ResolveError::MidCall { .. } => "mid-call",
    }
}

/// Splits `Map<K, V>` into its type arguments.
pub(crate) fn split_map_type(ty: &str) -> (String, String) {
    let inner = ty.strip_prefix("Map<").and_then(|s| s.strip_suffix('>')).unwrap_or("String, String");
    let mut depth = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '<' => depth += 1,
            '>' => depth -= 1,
            ',' if depth == 0 => return (inner[..i].trim().to_string(), inner[i + 1..].trim().to_string()),
            _ => {}
        }
    }
    (inner.trim().to_string(), String::new())
}

/// Emits the statements rebuilding a single value; the root is the unit's result.
pub fn emit_value(
    v: &CapturedValue,
    db: &ReconstructionDb,
    plans: &BTreeMap<ObjectRefKey, InstantiatedPlan>,
) -> EmissionUnit {
    let mut e = Emitter::new(db, plans);
    let ty = e.type_for(v, "");
    let root = e.value(v, &ty, None);
    e.finish(root, ty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::{fixtures, models_for};
    use crate::model::{Action, CallableSpec, CostTable, Event, Parameter};
    use crate::synth::{instantiate_plan, synthesize};

    fn db_from(events: Vec<Event>) -> ReconstructionDb {
        ReconstructionDb::from_events(&events, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn single_primitive_is_a_literal_without_statements() {
        let unit = emit_value(&CapturedValue::int(7), &ReconstructionDb::empty(), &BTreeMap::new());
        assert!(unit.lines.is_empty());
        assert_eq!(unit.root, Expr::Int(7));
    }

    #[test]
    fn unknown_reference_is_a_placeholder_and_an_error() {
        let unit = emit_value(&CapturedValue::object(4, 9), &ReconstructionDb::empty(), &BTreeMap::new());
        assert!(matches!(unit.root, Expr::Placeholder { .. }));
        assert_eq!(unit.check(), Err(super::super::EmitError::Unresolved(ObjectRefKey { object_id: 4, logical_time: 9 })));
    }

    fn construct(time: u64, id: u64, args: Vec<CapturedValue>) -> Event {
        Event::ConstructEvent {
            time,
            object_id: id,
            type_name: "Node".into(),
            constructor_name: "Node".into(),
            args,
            initial_fields: BTreeMap::new(),
        }
    }

    #[test]
    fn back_reference_to_an_earlier_state_breaks_the_cycle() {
        // a = new Node(); b = new Node(a); a.link(b)
        let db = db_from(vec![
            construct(1, 1, vec![]),
            construct(2, 2, vec![CapturedValue::object(1, 1)]),
            Event::MethodStartEvent { time: 3, call_id: 1, receiver: 1, qualified_method_name: "Node.link".into(), args: vec![CapturedValue::object(2, 2)] },
            Event::FieldSetEvent { time: 4, receiver: 1, field_name: "next".into(), old_value: CapturedValue::Null, new_value: CapturedValue::object(2, 4) },
            Event::MethodEndEvent { time: 5, call_id: 1, abnormal: false },
        ]);
        let unit = emit_value(&CapturedValue::object(1, 5), &db, &BTreeMap::new());
        assert!(unit.diagnostics.is_empty(), "{:?}", unit.diagnostics);
        assert!(unit.undefined_locals().is_empty());
        let lets = unit.statements().filter(|s| matches!(s, Stmt::Let { .. })).count();
        assert_eq!(lets, 2);
    }

    #[test]
    fn mutually_dependent_plans_are_an_unbreakable_cycle() {
        let callable = CallableSpec {
            name: "Pair".into(),
            parameters: vec![Parameter { name: "other".into(), type_name: "Pair".into(), binds_field: Some("other".into()) }],
            sets_fields: ["other".to_string()].into(),
            constructing: true,
            accessible: true,
            return_type: None,
        };
        let plan = |other: u64| InstantiatedPlan {
            target_type: "Pair".into(),
            actions: vec![BoundAction { action: Action::call_constructor(&callable), arguments: vec![CapturedValue::object(other, 1)] }],
            total_cost: 1,
        };
        let key = |id| ObjectRefKey { object_id: id, logical_time: 1 };
        let plans = BTreeMap::from([(key(1), plan(2)), (key(2), plan(1))]);
        let unit = emit_value(&CapturedValue::object(1, 1), &ReconstructionDb::empty(), &plans);
        assert!(unit.diagnostics.iter().any(|d| d.code() == "unbreakableCycle"), "{:?}", unit.diagnostics);
        assert!(unit.check().is_err());
    }

    #[test]
    fn monkey_with_traced_habitat() {
        let catalog = fixtures::zoo_catalog();
        let models = models_for(&["Monkey".to_string()].into(), &catalog).unwrap();
        let monkey = &models["Monkey"];
        let plan = synthesize(monkey, &CostTable::default()).unwrap();
        let values = BTreeMap::from([
            ("age".to_string(), CapturedValue::int(1)),
            ("eyeColor".to_string(), CapturedValue::enum_constant("EyeColor", "BROWN")),
            ("habitat".to_string(), CapturedValue::object(1, 5)),
        ]);
        let inst = instantiate_plan(&plan, &values).unwrap();
        let plans = BTreeMap::from([(ObjectRefKey { object_id: 2, logical_time: 5 }, inst)]);
        let db = db_from(vec![
            Event::ConstructEvent {
                time: 1,
                object_id: 1,
                type_name: "Habitat".into(),
                constructor_name: "Habitat".into(),
                args: vec![CapturedValue::text("42, 42")],
                initial_fields: BTreeMap::new(),
            },
            Event::MethodStartEvent { time: 2, call_id: 1, receiver: 1, qualified_method_name: "Habitat.grow".into(), args: vec![CapturedValue::int(42)] },
            Event::FieldSetEvent { time: 3, receiver: 1, field_name: "area".into(), old_value: CapturedValue::double(1.0), new_value: CapturedValue::double(2.0) },
            Event::MethodEndEvent { time: 4, call_id: 1, abnormal: false },
        ]);
        let unit = emit_value(&CapturedValue::object(2, 5), &db, &plans);
        assert!(unit.diagnostics.is_empty(), "{:?}", unit.diagnostics);
        assert!(unit.undefined_locals().is_empty());
        let stmts: Vec<_> = unit.statements().cloned().collect();
        // Habitat first (constructor and grow), then the monkey.
        assert!(matches!(&stmts.last().unwrap(), Stmt::Let { type_name, value: Expr::New { .. }, .. } if type_name == "Monkey"));
        let habitat_pos = stmts.iter().position(|s| matches!(s, Stmt::Let { type_name, .. } if type_name == "Habitat")).unwrap();
        assert!(matches!(&stmts[habitat_pos + 2], Stmt::Expr(Expr::Call { method, .. }) if method == "grow"));
        assert_eq!(unit.root, Expr::Local("monkey".into()));
    }

    #[test]
    fn same_object_twice_is_built_once() {
        let db = db_from(vec![Event::ConstructEvent {
            time: 1,
            object_id: 1,
            type_name: "P".into(),
            constructor_name: "P".into(),
            args: vec![],
            initial_fields: BTreeMap::new(),
        }]);
        let seq = CapturedValue::sequence(vec![CapturedValue::object(1, 2), CapturedValue::object(1, 3)]);
        let unit = emit_value(&seq, &db, &BTreeMap::new());
        let news = unit.statements().filter(|s| matches!(s, Stmt::Let { value: Expr::New { .. }, .. })).count();
        assert_eq!(news, 1);
    }

    #[test]
    fn map_types_split_at_top_level() {
        assert_eq!(split_map_type("Map<String, Map<int, P>>"), ("String".into(), "Map<int, P>".into()));
    }
}
