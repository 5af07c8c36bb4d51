//! Tree-walking interpreter. When given an [`Instrumentation`] it reports constructions,
//! public calls, field writes and serialization points of traced types to a recorder.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use plaincode_core::equality::{deep_equals, Equality, EqualityOptions, GraphValue, ObjectGraph, SimpleGraph};
use plaincode_core::recorder::{Identity, ObjectInspector, PendingRecord, RecordError, Recorder, RuntimeValue};
use plaincode_core::{ReconstructionPlan, SerializationRecord};
use thiserror::Error;

use crate::ast::*;
use crate::Program;

#[derive(Debug, Clone)]
pub enum Value {
    Null,
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(Rc<str>),
    Enum(Rc<str>, Rc<str>),
    Obj(Identity),
    Array(Rc<RefCell<Vec<Value>>>),
    /// Maps are immutable; `put` returns a new one.
    Map(Rc<Vec<(Value, Value)>>),
}

impl Value {
    pub fn text(s: &str) -> Value {
        Value::Str(Rc::from(s))
    }

    pub fn array(items: Vec<Value>) -> Value {
        Value::Array(Rc::new(RefCell::new(items)))
    }

    fn default_for(t: &Type) -> Value {
        match t {
            Type::Int => Value::Int(0),
            Type::Double => Value::Double(0.0),
            Type::Bool => Value::Bool(false),
            _ => Value::Null,
        }
    }

    fn truthy(&self) -> bool {
        matches!(self, Value::Bool(true))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("uncaught exception: {0}")]
    Uncaught(String),
    #[error("assertion failed: {0}")]
    AssertionFailed(String),
    #[error("execution ran out of fuel")]
    OutOfFuel,
    #[error("call depth limit exceeded")]
    StackOverflow,
    #[error("no method `{0}`")]
    NoSuchMethod(String),
    #[error(transparent)]
    Record(#[from] RecordError),
}

enum Unwind {
    Throw(String),
    Fatal(RuntimeError),
}

impl From<RecordError> for Unwind {
    fn from(e: RecordError) -> Self {
        Unwind::Fatal(RuntimeError::Record(e))
    }
}

enum Flow {
    Next,
    Return(Value),
}

type Exec<T> = Result<T, Unwind>;

#[derive(Debug, Clone)]
pub struct Object {
    pub class: Rc<str>,
    pub fields: Vec<(Rc<str>, Value)>,
}

/// All live objects; identities are slot indices.
#[derive(Debug, Default)]
pub struct Heap {
    pub objects: Vec<Object>,
}

impl Heap {
    pub fn get(&self, id: Identity) -> &Object {
        &self.objects[id as usize]
    }

    pub fn field(&self, id: Identity, name: &str) -> Option<&Value> {
        self.get(id).fields.iter().find(|(n, _)| &**n == name).map(|(_, v)| v)
    }

    pub fn runtime(&self, v: &Value) -> RuntimeValue {
        match v {
            Value::Null => RuntimeValue::Null,
            Value::Int(i) => RuntimeValue::Int(*i),
            Value::Double(d) => RuntimeValue::Double(*d),
            Value::Bool(b) => RuntimeValue::Bool(*b),
            Value::Str(s) => RuntimeValue::Text(s.to_string()),
            Value::Enum(t, c) => RuntimeValue::Enum { type_name: t.to_string(), constant: c.to_string() },
            Value::Obj(id) => RuntimeValue::Object(*id),
            Value::Array(items) => RuntimeValue::Sequence(items.borrow().iter().map(|v| self.runtime(v)).collect()),
            Value::Map(entries) => {
                RuntimeValue::Map(entries.iter().map(|(k, v)| (self.runtime(k), self.runtime(v))).collect())
            }
        }
    }

    pub fn graph_value(&self, v: &Value) -> GraphValue<Identity> {
        match v {
            Value::Null => GraphValue::Null,
            Value::Int(i) => GraphValue::Int(*i),
            Value::Double(d) => GraphValue::Double(*d),
            Value::Bool(b) => GraphValue::Bool(*b),
            Value::Str(s) => GraphValue::Text(s.to_string()),
            Value::Enum(t, c) => GraphValue::Enum { type_name: t.to_string(), constant: c.to_string() },
            Value::Obj(id) => GraphValue::Object(*id),
            Value::Array(items) => GraphValue::Sequence(items.borrow().iter().map(|v| self.graph_value(v)).collect()),
            Value::Map(entries) => {
                GraphValue::Map(entries.iter().map(|(k, v)| (self.graph_value(k), self.graph_value(v))).collect())
            }
        }
    }

    /// Deep copy of everything reachable from `v`, detached from this heap.
    pub fn snapshot(&self, v: &Value) -> Snapshot {
        let mut graph = SimpleGraph::default();
        let mut slots: HashMap<Identity, usize> = HashMap::new();
        let root = self.copy_into(&self.graph_value(v), &mut graph, &mut slots);
        Snapshot { graph, root }
    }

    fn copy_into(&self, v: &GraphValue<Identity>, g: &mut SimpleGraph, slots: &mut HashMap<Identity, usize>) -> GraphValue<usize> {
        match v {
            GraphValue::Null => GraphValue::Null,
            GraphValue::Int(i) => GraphValue::Int(*i),
            GraphValue::Double(d) => GraphValue::Double(*d),
            GraphValue::Bool(b) => GraphValue::Bool(*b),
            GraphValue::Text(s) => GraphValue::Text(s.clone()),
            GraphValue::Enum { type_name, constant } => GraphValue::Enum { type_name: type_name.clone(), constant: constant.clone() },
            GraphValue::Sequence(items) => GraphValue::Sequence(items.iter().map(|v| self.copy_into(v, g, slots)).collect()),
            GraphValue::Map(entries) => GraphValue::Map(
                entries.iter().map(|(k, v)| (self.copy_into(k, g, slots), self.copy_into(v, g, slots))).collect(),
            ),
            GraphValue::Object(id) => {
                if let Some(&slot) = slots.get(id) {
                    return GraphValue::Object(slot);
                }
                let slot = g.add(&self.get(*id).class, vec![]);
                slots.insert(*id, slot);
                for (name, fv) in ObjectGraph::fields(self, *id) {
                    let copied = self.copy_into(&fv, g, slots);
                    g.set(slot, &name, copied);
                }
                GraphValue::Object(slot)
            }
        }
    }
}

impl ObjectInspector for Heap {
    fn type_name(&self, identity: Identity) -> String {
        self.get(identity).class.to_string()
    }

    fn fields(&self, identity: Identity) -> Vec<(String, RuntimeValue)> {
        self.get(identity).fields.iter().map(|(n, v)| (n.to_string(), self.runtime(v))).collect()
    }
}

impl ObjectGraph for Heap {
    type Ref = Identity;

    fn type_name(&self, r: Identity) -> String {
        self.get(r).class.to_string()
    }

    fn fields(&self, r: Identity) -> Vec<(String, GraphValue<Identity>)> {
        let mut out: Vec<_> = self.get(r).fields.iter().map(|(n, v)| (n.to_string(), self.graph_value(v))).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

/// A detached copy of a value graph taken at serialization time.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub graph: SimpleGraph,
    pub root: GraphValue<usize>,
}

#[derive(Debug, Clone)]
pub struct Serialized {
    pub record: SerializationRecord,
    pub snapshot: Snapshot,
    pub latency: Duration,
}

/// Point id used by the `serialize(value)` builtin.
pub const SERIALIZE_POINT: &str = "serialize";

pub struct Instrumentation {
    pub recorder: Recorder,
    /// Types whose instances are registered with the recorder.
    pub traced: BTreeSet<String>,
    /// Method identifiers (`Type.method`) that produce serialization records.
    pub points: BTreeSet<String>,
    /// Structure-based plans embedded into records, by type.
    pub plans: BTreeMap<String, ReconstructionPlan>,
    /// Values passed to `serialize`, in call order.
    pub serialized: Vec<Serialized>,
}

impl Instrumentation {
    pub fn new(recorder: Recorder) -> Self {
        Instrumentation {
            recorder,
            traced: BTreeSet::new(),
            points: BTreeSet::new(),
            plans: BTreeMap::new(),
            serialized: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    /// Statements and calls executed before the run is aborted.
    pub fuel: u64,
    pub max_depth: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { fuel: 50_000_000, max_depth: 64 }
    }
}

struct Frame {
    this: Option<Identity>,
    locals: Vec<(String, Value)>,
}

impl Frame {
    fn lookup(&mut self, name: &str) -> &mut Value {
        &mut self.locals.iter_mut().rev().find(|(n, _)| n == name).expect("checked local").1
    }
}

pub struct Interpreter<'p> {
    program: &'p Program,
    pub heap: Heap,
    statics: HashMap<(String, String), Value>,
    limits: Limits,
    fuel: u64,
    depth: usize,
    instr: Option<Instrumentation>,
}

fn describe(heap: &Heap, v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Int(i) => i.to_string(),
        Value::Double(d) => format!("{d:?}"),
        Value::Bool(b) => b.to_string(),
        Value::Str(s) => s.to_string(),
        Value::Enum(_, c) => c.to_string(),
        Value::Obj(id) => format!("{}@{id}", heap.get(*id).class),
        Value::Array(items) => {
            format!("[{}]", items.borrow().iter().map(|v| describe(heap, v)).collect::<Vec<_>>().join(", "))
        }
        Value::Map(entries) => format!(
            "{{{}}}",
            entries.iter().map(|(k, v)| format!("{}: {}", describe(heap, k), describe(heap, v))).collect::<Vec<_>>().join(", ")
        ),
    }
}

/// Key equality for maps: values for leaves (doubles by bit pattern), identity otherwise.
fn same_key(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Double(x), Value::Double(y)) => x.to_bits() == y.to_bits(),
        _ => values_equal(a, b),
    }
}

fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Int(x), Value::Double(y)) | (Value::Double(y), Value::Int(x)) => (*x as f64) == *y,
        (Value::Double(x), Value::Double(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Enum(t, c), Value::Enum(u, d)) => t == u && c == d,
        (Value::Obj(x), Value::Obj(y)) => x == y,
        (Value::Array(x), Value::Array(y)) => Rc::ptr_eq(x, y),
        (Value::Map(x), Value::Map(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Double(d) => *d,
        _ => f64::NAN,
    }
}

impl<'p> Interpreter<'p> {
    /// Creates an interpreter and runs static initializers in declaration order.
    pub fn new(program: &'p Program, limits: Limits, instr: Option<Instrumentation>) -> Result<Self, RuntimeError> {
        let mut it = Interpreter {
            program,
            heap: Heap::default(),
            statics: HashMap::new(),
            limits,
            fuel: limits.fuel,
            depth: 0,
            instr,
        };
        it.run(|it| it.static_init())?;
        Ok(it)
    }

    pub fn instrumentation(&self) -> Option<&Instrumentation> {
        self.instr.as_ref()
    }

    pub fn into_instrumentation(self) -> Option<Instrumentation> {
        self.instr
    }

    pub fn static_value(&self, class: &str, field: &str) -> Option<&Value> {
        self.statics.get(&(class.to_string(), field.to_string()))
    }

    fn run<T>(&mut self, f: impl FnOnce(&mut Self) -> Exec<T>) -> Result<T, RuntimeError> {
        match f(self) {
            Ok(v) => Ok(v),
            Err(Unwind::Throw(msg)) => Err(RuntimeError::Uncaught(msg)),
            Err(Unwind::Fatal(e)) => Err(e),
        }
    }

    fn static_init(&mut self) -> Exec<()> {
        let program = self.program;
        for c in &program.classes {
            for f in c.fields.iter().filter(|f| f.modifiers.is_static) {
                self.statics.insert((c.name.clone(), f.name.clone()), Value::default_for(&f.ty));
            }
        }
        for c in &program.classes {
            for f in c.fields.iter().filter(|f| f.modifiers.is_static) {
                if let Some(init) = &f.init {
                    let mut frame = Frame { this: None, locals: Vec::new() };
                    let v = self.eval(&mut frame, init)?;
                    self.statics.insert((c.name.clone(), f.name.clone()), v);
                }
            }
        }
        if let Some(instr) = &self.instr {
            for c in &program.classes {
                if !instr.traced.contains(&c.name) {
                    continue;
                }
                for f in &c.fields {
                    let m = &f.modifiers;
                    if !(m.is_static && m.is_final && m.public) {
                        continue;
                    }
                    if let Some(Value::Obj(id)) = self.statics.get(&(c.name.clone(), f.name.clone())) {
                        instr.recorder.record_static_constant(&c.name, &f.name, *id)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn call_static(&mut self, class: &str, method: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        let program = self.program;
        let decl = program
            .class(class)
            .and_then(|c| c.method(method, args.len()))
            .filter(|m| m.modifiers.is_static)
            .ok_or_else(|| RuntimeError::NoSuchMethod(format!("{class}.{method}")))?;
        self.run(|it| it.invoke(class, decl, None, args))
    }

    pub fn instantiate(&mut self, class: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        if self.program.class(class).is_none() {
            return Err(RuntimeError::NoSuchMethod(format!("{class}.<init>")));
        }
        self.run(|it| it.construct(class, args))
    }

    pub fn call(&mut self, receiver: Identity, method: &str, args: Vec<Value>) -> Result<Value, RuntimeError> {
        let program = self.program;
        let class = self.heap.get(receiver).class.clone();
        let decl = program
            .class(&class)
            .and_then(|c| c.method(method, args.len()))
            .filter(|m| !m.modifiers.is_static)
            .ok_or_else(|| RuntimeError::NoSuchMethod(format!("{class}.{method}")))?;
        self.run(|it| it.invoke_instance(receiver, decl, args))
    }

    pub fn deep_equals(&self, a: &Value, b: &Value, opts: EqualityOptions) -> Equality {
        deep_equals(&self.heap, &self.heap.graph_value(a), &self.heap, &self.heap.graph_value(b), opts)
    }

    fn burn(&mut self) -> Exec<()> {
        if self.fuel == 0 {
            return Err(Unwind::Fatal(RuntimeError::OutOfFuel));
        }
        self.fuel -= 1;
        Ok(())
    }

    fn registered(&self, id: Identity) -> Option<u64> {
        let instr = self.instr.as_ref()?;
        if !instr.traced.contains(&*self.heap.get(id).class) {
            return None;
        }
        instr.recorder.object_id(id)
    }

    fn construct(&mut self, class: &str, args: Vec<Value>) -> Exec<Value> {
        self.burn()?;
        let program = self.program;
        let decl = program.class(class).expect("checked class");
        let captured = match &self.instr {
            Some(instr) if instr.traced.contains(class) => Some(
                args.iter().map(|a| instr.recorder.capture(&self.heap.runtime(a))).collect::<Result<Vec<_>, _>>()?,
            ),
            _ => None,
        };
        let id = self.heap.objects.len() as Identity;
        let class_rc: Rc<str> = Rc::from(class);
        let fields = decl.instance_fields().map(|f| (Rc::from(f.name.as_str()), Value::default_for(&f.ty))).collect();
        self.heap.objects.push(Object { class: class_rc, fields });
        for f in decl.instance_fields() {
            if let Some(init) = &f.init {
                let mut frame = Frame { this: Some(id), locals: Vec::new() };
                let v = self.eval(&mut frame, init)?;
                self.write_field(id, &f.name, v)?;
            }
        }
        if let Some(ctor) = decl.constructor(args.len()) {
            self.invoke(class, ctor, Some(id), args)?;
        }
        if let (Some(captured), Some(instr)) = (captured, &self.instr) {
            let fields: Vec<(String, RuntimeValue)> = ObjectInspector::fields(&self.heap, id);
            instr.recorder.record_construct(id, class, class, captured, &fields)?;
        }
        Ok(Value::Obj(id))
    }

    fn invoke_instance(&mut self, receiver: Identity, decl: &'p MethodDecl, args: Vec<Value>) -> Exec<Value> {
        let class = self.heap.get(receiver).class.clone();
        let tracked = if decl.modifiers.public { self.registered(receiver) } else { None };
        let Some(object_id) = tracked else {
            return self.invoke(&class, decl, Some(receiver), args);
        };
        let point = format!("{class}.{}", decl.name);
        let instr = self.instr.as_ref().expect("tracked implies instrumented");
        let rv_args: Vec<RuntimeValue> = args.iter().map(|a| self.heap.runtime(a)).collect();
        let pending: Option<PendingRecord> = if instr.points.contains(&point) {
            Some(instr.recorder.begin_serialization(&point, &RuntimeValue::Object(receiver), &rv_args, &self.heap, &instr.plans)?)
        } else {
            None
        };
        let call_id = instr.recorder.record_method_start(object_id, &point, &rv_args)?;
        let result = self.invoke(&class, decl, Some(receiver), args);
        let instr = self.instr.as_ref().expect("still instrumented");
        instr.recorder.record_method_end(call_id, result.is_err())?;
        if let (Some(pending), Ok(ret)) = (pending, &result) {
            let (ret_rv, post) = if decl.ret == Type::Void {
                (None, Some(RuntimeValue::Object(receiver)))
            } else {
                (Some(self.heap.runtime(ret)), None)
            };
            instr.recorder.complete_serialization(pending, ret_rv.as_ref(), post.as_ref(), &self.heap, &instr.plans)?;
        }
        result
    }

    fn invoke_static(&mut self, class: &str, decl: &'p MethodDecl, args: Vec<Value>) -> Exec<Value> {
        let point = format!("{class}.{}", decl.name);
        let pending = match &self.instr {
            Some(instr) if decl.modifiers.public && instr.points.contains(&point) => {
                let rv_args: Vec<RuntimeValue> = args.iter().map(|a| self.heap.runtime(a)).collect();
                Some(instr.recorder.begin_serialization(&point, &RuntimeValue::Null, &rv_args, &self.heap, &instr.plans)?)
            }
            _ => None,
        };
        let ret = self.invoke(class, decl, None, args)?;
        if let (Some(pending), Some(instr)) = (pending, &self.instr) {
            let ret_rv = (decl.ret != Type::Void).then(|| self.heap.runtime(&ret));
            instr.recorder.complete_serialization(pending, ret_rv.as_ref(), None, &self.heap, &instr.plans)?;
        }
        Ok(ret)
    }

    fn invoke(&mut self, _class: &str, decl: &'p MethodDecl, this: Option<Identity>, args: Vec<Value>) -> Exec<Value> {
        self.burn()?;
        if self.depth >= self.limits.max_depth {
            return Err(Unwind::Fatal(RuntimeError::StackOverflow));
        }
        let Some(body) = &decl.body else {
            return Err(Unwind::Throw(format!("abstract method `{}` called", decl.name)));
        };
        let locals = decl.params.iter().map(|(n, _)| n.clone()).zip(args).collect();
        let mut frame = Frame { this, locals };
        self.depth += 1;
        let flow = self.block(&mut frame, body);
        self.depth -= 1;
        match flow? {
            Flow::Return(v) => Ok(v),
            Flow::Next => Ok(Value::Null),
        }
    }

    fn block(&mut self, frame: &mut Frame, stmts: &'p [Stmt]) -> Exec<Flow> {
        let mark = frame.locals.len();
        let mut flow = Ok(Flow::Next);
        for s in stmts {
            flow = self.stmt(frame, s);
            if !matches!(flow, Ok(Flow::Next)) {
                break;
            }
        }
        frame.locals.truncate(mark);
        flow
    }

    fn stmt(&mut self, frame: &mut Frame, s: &'p Stmt) -> Exec<Flow> {
        self.burn()?;
        match &s.kind {
            StmtKind::Block(b) => self.block(frame, b),
            StmtKind::If(c, a, b) => {
                if self.eval(frame, c)?.truthy() {
                    self.block(frame, std::slice::from_ref(&**a))
                } else if let Some(b) = b {
                    self.block(frame, std::slice::from_ref(&**b))
                } else {
                    Ok(Flow::Next)
                }
            }
            StmtKind::While(c, body) => {
                while self.eval(frame, c)?.truthy() {
                    self.burn()?;
                    if let Flow::Return(v) = self.block(frame, std::slice::from_ref(&**body))? {
                        return Ok(Flow::Return(v));
                    }
                }
                Ok(Flow::Next)
            }
            StmtKind::Return(v) => Ok(Flow::Return(match v {
                Some(e) => self.eval(frame, e)?,
                None => Value::Null,
            })),
            StmtKind::Throw(e) => match self.eval(frame, e)? {
                Value::Str(s) => Err(Unwind::Throw(s.to_string())),
                _ => Err(Unwind::Throw("null".into())),
            },
            StmtKind::Try(body, var, handler) => match self.block(frame, body) {
                Err(Unwind::Throw(msg)) => {
                    let mark = frame.locals.len();
                    frame.locals.push((var.clone(), Value::text(&msg)));
                    let flow = self.block(frame, handler);
                    frame.locals.truncate(mark);
                    flow
                }
                other => other,
            },
            StmtKind::Local(_, name, init) => {
                let v = self.eval(frame, init)?;
                frame.locals.push((name.clone(), v));
                Ok(Flow::Next)
            }
            StmtKind::Assign(target, value) => {
                self.assign(frame, target, value)?;
                Ok(Flow::Next)
            }
            StmtKind::Expr(e) => {
                self.eval(frame, e)?;
                Ok(Flow::Next)
            }
        }
    }

    fn assign(&mut self, frame: &mut Frame, target: &'p Expr, value: &'p Expr) -> Exec<()> {
        match &target.kind {
            ExprKind::Local(n) => {
                let v = self.eval(frame, value)?;
                *frame.lookup(n) = v;
            }
            ExprKind::StaticField(c, f) => {
                let v = self.eval(frame, value)?;
                self.statics.insert((c.clone(), f.clone()), v);
            }
            ExprKind::Field(recv, f) => {
                let r = self.eval(frame, recv)?;
                let v = self.eval(frame, value)?;
                match r {
                    Value::Obj(id) => self.write_field(id, f, v)?,
                    _ => return Err(Unwind::Throw(format!("null dereference writing `{f}`"))),
                }
            }
            ExprKind::Index(arr, idx) => {
                let a = self.eval(frame, arr)?;
                let i = self.eval(frame, idx)?;
                let v = self.eval(frame, value)?;
                let (Value::Array(items), Value::Int(i)) = (a, i) else {
                    return Err(Unwind::Throw("null dereference in array store".into()));
                };
                let mut items = items.borrow_mut();
                let len = items.len();
                let slot = usize::try_from(i)
                    .ok()
                    .and_then(|i| items.get_mut(i))
                    .ok_or_else(|| Unwind::Throw(format!("index {i} out of bounds for length {len}")))?;
                *slot = v;
            }
            _ => unreachable!("checked assignment target"),
        }
        Ok(())
    }

    fn write_field(&mut self, id: Identity, field: &str, v: Value) -> Exec<()> {
        let old = {
            let slot = self.heap.objects[id as usize]
                .fields
                .iter_mut()
                .find(|(n, _)| &**n == field)
                .expect("checked field");
            std::mem::replace(&mut slot.1, v)
        };
        if let Some(object_id) = self.registered(id) {
            let new = self.heap.runtime(self.heap.field(id, field).expect("just written"));
            let instr = self.instr.as_ref().expect("registered implies instrumented");
            instr.recorder.record_field_set(object_id, field, &self.heap.runtime(&old), &new)?;
        }
        Ok(())
    }

    fn eval_args(&mut self, frame: &mut Frame, args: &'p [Expr]) -> Exec<Vec<Value>> {
        args.iter().map(|a| self.eval(frame, a)).collect()
    }

    fn eval(&mut self, frame: &mut Frame, e: &'p Expr) -> Exec<Value> {
        Ok(match &e.kind {
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Double(d) => Value::Double(*d),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Str(s) => Value::text(s),
            ExprKind::Null => Value::Null,
            ExprKind::This => Value::Obj(frame.this.expect("checked instance context")),
            ExprKind::Local(n) => frame.lookup(n).clone(),
            ExprKind::Name(n) => unreachable!("unresolved name `{n}`"),
            ExprKind::Field(recv, f) => match self.eval(frame, recv)? {
                Value::Obj(id) => self.heap.field(id, f).cloned().expect("checked field"),
                _ => return Err(Unwind::Throw(format!("null dereference reading `{f}`"))),
            },
            ExprKind::StaticField(c, f) => self.statics.get(&(c.clone(), f.clone())).cloned().unwrap_or(Value::Null),
            ExprKind::EnumConstant(t, c) => Value::Enum(Rc::from(t.as_str()), Rc::from(c.as_str())),
            ExprKind::Call(recv, m, args) => {
                let r = self.eval(frame, recv.as_deref().expect("resolved receiver"))?;
                let args = self.eval_args(frame, args)?;
                let Value::Obj(id) = r else {
                    return Err(Unwind::Throw(format!("null dereference calling `{m}`")));
                };
                let program = self.program;
                let class = self.heap.get(id).class.clone();
                let decl = program.class(&class).and_then(|c| c.method(m, args.len())).expect("checked method");
                self.invoke_instance(id, decl, args)?
            }
            ExprKind::StaticCall(c, m, args) => {
                let args = self.eval_args(frame, args)?;
                let program = self.program;
                let decl = program.class(c).and_then(|k| k.method(m, args.len())).expect("checked method");
                self.invoke_static(c, decl, args)?
            }
            ExprKind::Builtin(name, args) => {
                let args = self.eval_args(frame, args)?;
                self.builtin(name, args)?
            }
            ExprKind::Index(arr, idx) => {
                let a = self.eval(frame, arr)?;
                let i = self.eval(frame, idx)?;
                let (Value::Array(items), Value::Int(i)) = (a, i) else {
                    return Err(Unwind::Throw("null dereference in array load".into()));
                };
                let items = items.borrow();
                usize::try_from(i)
                    .ok()
                    .and_then(|i| items.get(i))
                    .cloned()
                    .ok_or_else(|| Unwind::Throw(format!("index {i} out of bounds for length {}", items.len())))?
            }
            ExprKind::Unary(op, inner) => match (op, self.eval(frame, inner)?) {
                (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                (UnOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                (UnOp::Neg, Value::Double(d)) => Value::Double(-d),
                _ => unreachable!("checked unary operand"),
            },
            ExprKind::Binary(op, a, b) => self.binary(frame, *op, a, b)?,
            ExprKind::New(c, args) => {
                let args = self.eval_args(frame, args)?;
                self.construct(c, args)?
            }
            ExprKind::NewArray(_, items) => Value::array(self.eval_args(frame, items)?),
            ExprKind::NewArraySized(elem, n) => match self.eval(frame, n)? {
                Value::Int(n) if (0..=10_000_000).contains(&n) => Value::array(vec![Value::default_for(elem); n as usize]),
                Value::Int(n) => return Err(Unwind::Throw(format!("invalid array size {n}"))),
                _ => unreachable!("checked array size"),
            },
            ExprKind::NewMap(_, _, entries) => {
                let mut out: Vec<(Value, Value)> = Vec::with_capacity(entries.len());
                for (k, v) in entries {
                    let k = self.eval(frame, k)?;
                    let v = self.eval(frame, v)?;
                    match out.iter_mut().find(|(x, _)| same_key(x, &k)) {
                        Some(slot) => slot.1 = v,
                        None => out.push((k, v)),
                    }
                }
                Value::Map(Rc::new(out))
            }
            ExprKind::ToDouble(inner) => match self.eval(frame, inner)? {
                Value::Int(i) => Value::Double(i as f64),
                other => other,
            },
        })
    }

    fn binary(&mut self, frame: &mut Frame, op: BinOp, a: &'p Expr, b: &'p Expr) -> Exec<Value> {
        match op {
            BinOp::And => return Ok(Value::Bool(self.eval(frame, a)?.truthy() && self.eval(frame, b)?.truthy())),
            BinOp::Or => return Ok(Value::Bool(self.eval(frame, a)?.truthy() || self.eval(frame, b)?.truthy())),
            _ => {}
        }
        let x = self.eval(frame, a)?;
        let y = self.eval(frame, b)?;
        Ok(match (op, &x, &y) {
            (BinOp::Eq, ..) => Value::Bool(values_equal(&x, &y)),
            (BinOp::Ne, ..) => Value::Bool(!values_equal(&x, &y)),
            (BinOp::Add, Value::Str(_), _) | (BinOp::Add, _, Value::Str(_)) => {
                Value::text(&format!("{}{}", describe(&self.heap, &x), describe(&self.heap, &y)))
            }
            (_, Value::Int(i), Value::Int(j)) => {
                let (i, j) = (*i, *j);
                match op {
                    BinOp::Add => Value::Int(i.wrapping_add(j)),
                    BinOp::Sub => Value::Int(i.wrapping_sub(j)),
                    BinOp::Mul => Value::Int(i.wrapping_mul(j)),
                    BinOp::Div | BinOp::Rem if j == 0 => return Err(Unwind::Throw("division by zero".into())),
                    BinOp::Div => Value::Int(i.wrapping_div(j)),
                    BinOp::Rem => Value::Int(i.wrapping_rem(j)),
                    BinOp::Lt => Value::Bool(i < j),
                    BinOp::Le => Value::Bool(i <= j),
                    BinOp::Gt => Value::Bool(i > j),
                    BinOp::Ge => Value::Bool(i >= j),
                    _ => unreachable!(),
                }
            }
            _ => {
                let (i, j) = (as_f64(&x), as_f64(&y));
                match op {
                    BinOp::Add => Value::Double(i + j),
                    BinOp::Sub => Value::Double(i - j),
                    BinOp::Mul => Value::Double(i * j),
                    BinOp::Div => Value::Double(i / j),
                    BinOp::Rem => Value::Double(i % j),
                    BinOp::Lt => Value::Bool(i < j),
                    BinOp::Le => Value::Bool(i <= j),
                    BinOp::Gt => Value::Bool(i > j),
                    BinOp::Ge => Value::Bool(i >= j),
                    _ => unreachable!(),
                }
            }
        })
    }

    fn builtin(&mut self, name: &str, mut args: Vec<Value>) -> Exec<Value> {
        let null = |what: &str| Unwind::Throw(format!("null passed to `{what}`"));
        Ok(match name {
            "len" => Value::Int(match &args[0] {
                Value::Array(items) => items.borrow().len() as i64,
                Value::Str(s) => s.chars().count() as i64,
                Value::Map(entries) => entries.len() as i64,
                _ => return Err(null(name)),
            }),
            "append" => {
                let x = args.pop().expect("checked arity");
                let Value::Array(items) = &args[0] else { return Err(null(name)) };
                let mut copy = items.borrow().clone();
                copy.push(x);
                Value::array(copy)
            }
            "put" => {
                let v = args.pop().expect("checked arity");
                let k = args.pop().expect("checked arity");
                let Value::Map(entries) = &args[0] else { return Err(null(name)) };
                let mut copy = (**entries).clone();
                match copy.iter_mut().find(|(x, _)| same_key(x, &k)) {
                    Some(slot) => slot.1 = v,
                    None => copy.push((k, v)),
                }
                Value::Map(Rc::new(copy))
            }
            "get" | "containsKey" => {
                let Value::Map(entries) = &args[0] else { return Err(null(name)) };
                let hit = entries.iter().find(|(x, _)| same_key(x, &args[1])).map(|(_, v)| v.clone());
                match (name, hit) {
                    ("containsKey", hit) => Value::Bool(hit.is_some()),
                    (_, Some(v)) => v,
                    (_, None) => return Err(Unwind::Throw(format!("missing key {}", describe(&self.heap, &args[1])))),
                }
            }
            "assertEquals" => {
                let (expected, actual) = match (&args[0], &args[1]) {
                    (Value::Int(i), Value::Double(_)) => (Value::Double(*i as f64), args[1].clone()),
                    (Value::Double(_), Value::Int(j)) => (args[0].clone(), Value::Double(*j as f64)),
                    _ => (args[0].clone(), args[1].clone()),
                };
                if let Equality::Unequal { path, detail } = self.deep_equals(&expected, &actual, EqualityOptions::default()) {
                    return Err(Unwind::Fatal(RuntimeError::AssertionFailed(format!("at {path}: {detail}"))));
                }
                Value::Null
            }
            "serialize" => {
                if let Some(instr) = &mut self.instr {
                    let started = Instant::now();
                    let rv = self.heap.runtime(&args[0]);
                    let record = instr.recorder.request_serialization(SERIALIZE_POINT, &rv, &[], None, &self.heap, &instr.plans)?;
                    let latency = started.elapsed();
                    let snapshot = self.heap.snapshot(&args[0]);
                    instr.serialized.push(Serialized { record, snapshot, latency });
                }
                Value::Null
            }
            other => unreachable!("unknown builtin `{other}`"),
        })
    }
}
