//! Shared data types: type models, actions, plans, captured values and trace events.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub type ObjectId = u64;
pub type LogicalTime = u64;
pub type CallId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TypeKind {
    Composite,
    Enumeration,
    Primitive,
    Sequence,
    Map,
    Opaque,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldSpec {
    pub name: String,
    pub type_name: String,
    /// Visible at the reconstruction site.
    pub accessible: bool,
    /// Direct assignment is legal outside the declaring type.
    pub assignable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Parameter {
    pub name: String,
    pub type_name: String,
    /// The field this parameter is stored into, when the callable is a plain field initializer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binds_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallableSpec {
    pub name: String,
    pub parameters: Vec<Parameter>,
    pub sets_fields: BTreeSet<String>,
    pub constructing: bool,
    pub accessible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub return_type: Option<String>,
}

impl CallableSpec {
    /// True when every parameter feeds exactly one distinct field, so the callable can be
    /// driven entirely from captured field values.
    pub fn is_field_initializer(&self) -> bool {
        let mut seen = BTreeSet::new();
        self.parameters.iter().all(|p| match &p.binds_field {
            Some(f) => seen.insert(f.as_str()),
            None => false,
        }) && seen.len() == self.sets_fields.len()
            && seen.iter().all(|f| self.sets_fields.contains(*f))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticConstantField {
    pub field_name: String,
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TypeModel {
    pub type_name: String,
    pub kind: TypeKind,
    pub fields: Vec<FieldSpec>,
    pub constructors: Vec<CallableSpec>,
    pub factory_methods: Vec<CallableSpec>,
    pub setters: Vec<CallableSpec>,
    /// Remaining accessible instance methods; kept for signatures (parameter names and types).
    #[serde(default)]
    pub methods: Vec<CallableSpec>,
    pub enum_constants: Vec<String>,
    pub static_constant_fields: Vec<StaticConstantField>,
}

impl TypeModel {
    pub fn new(type_name: impl Into<String>, kind: TypeKind) -> Self {
        TypeModel {
            type_name: type_name.into(),
            kind,
            fields: Vec::new(),
            constructors: Vec::new(),
            factory_methods: Vec::new(),
            setters: Vec::new(),
            methods: Vec::new(),
            enum_constants: Vec::new(),
            static_constant_fields: Vec::new(),
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| f.name == name)
    }

    pub fn field_names(&self) -> BTreeSet<String> {
        self.fields.iter().map(|f| f.name.clone()).collect()
    }

    /// Finds an instance method or setter by name and arity.
    pub fn method(&self, name: &str, arity: usize) -> Option<&CallableSpec> {
        self.setters
            .iter()
            .chain(self.methods.iter())
            .find(|m| m.name == name && m.parameters.len() == arity)
    }

    pub fn constructor(&self, arity: usize) -> Option<&CallableSpec> {
        self.constructors.iter().find(|c| c.parameters.len() == arity)
    }

    fn callables(&self) -> impl Iterator<Item = (&'static str, &CallableSpec)> {
        self.constructors
            .iter()
            .map(|c| ("constructor", c))
            .chain(self.factory_methods.iter().map(|c| ("factory method", c)))
            .chain(self.setters.iter().map(|c| ("setter", c)))
            .chain(self.methods.iter().map(|c| ("method", c)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub subject: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

fn violation(subject: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation { subject: subject.into(), message: message.into() }
}

/// Reports every invariant violation of a type model. An empty result means the model is valid.
pub fn validate_type_model(model: &TypeModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    let mut reported = BTreeSet::new();
    for field in &model.fields {
        if !names.insert(field.name.as_str()) && reported.insert(field.name.as_str()) {
            out.push(violation(&field.name, "duplicate field name"));
        }
        if field.assignable && !field.accessible {
            out.push(violation(&field.name, "field is assignable but not accessible"));
        }
    }
    for (what, callable) in model.callables() {
        for f in &callable.sets_fields {
            if !names.contains(f.as_str()) {
                out.push(violation(
                    f,
                    format!("{what} `{}` declares unknown set field", callable.name),
                ));
            }
        }
        for p in &callable.parameters {
            if let Some(f) = &p.binds_field {
                if !callable.sets_fields.contains(f) {
                    out.push(violation(
                        f,
                        format!(
                            "{what} `{}` binds parameter `{}` to a field outside its set fields",
                            callable.name, p.name
                        ),
                    ));
                }
            }
        }
    }
    let is_enum = model.kind == TypeKind::Enumeration;
    if is_enum && model.enum_constants.is_empty() {
        out.push(violation(&model.type_name, "enumeration without constants"));
    }
    if !is_enum && !model.enum_constants.is_empty() {
        out.push(violation(&model.type_name, "enum constants on a non-enumeration type"));
    }
    out
}

/// The eight action archetypes. Declaration order is the tie-break priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ActionKind {
    CallConstructor,
    CallFactoryMethod,
    UseEnumConstant,
    CallMethod,
    AssignField,
    UseNamedConstant,
    UseStaticField,
    UseObjectReference,
}

impl ActionKind {
    pub const ALL: [ActionKind; 8] = [
        ActionKind::CallConstructor,
        ActionKind::CallFactoryMethod,
        ActionKind::UseEnumConstant,
        ActionKind::CallMethod,
        ActionKind::AssignField,
        ActionKind::UseNamedConstant,
        ActionKind::UseStaticField,
        ActionKind::UseObjectReference,
    ];

    pub fn is_always_constructing(self) -> bool {
        !matches!(self, ActionKind::CallMethod | ActionKind::AssignField)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::CallConstructor => "callConstructor",
            ActionKind::CallFactoryMethod => "callFactoryMethod",
            ActionKind::UseEnumConstant => "useEnumConstant",
            ActionKind::CallMethod => "callMethod",
            ActionKind::AssignField => "assignField",
            ActionKind::UseNamedConstant => "useNamedConstant",
            ActionKind::UseStaticField => "useStaticField",
            ActionKind::UseObjectReference => "useObjectReference",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MetaVariable {
    pub placeholder_name: String,
    pub bound_field: String,
}

/// A `Type.MEMBER` reference used by constant-reading actions.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MemberRef {
    pub owner: String,
    pub member: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Action {
    pub kind: ActionKind,
    pub constructing: bool,
    pub covered_fields: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub callable: Option<CallableSpec>,
    #[serde(default)]
    pub meta_variables: Vec<MetaVariable>,
    /// Constant or static field read by `useEnumConstant`, `useStaticField`, `useNamedConstant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member: Option<MemberRef>,
    /// Declared type of the field written by `assignField`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field_type: Option<String>,
}

impl Action {
    fn from_callable(kind: ActionKind, callable: &CallableSpec) -> Action {
        let meta_variables = callable
            .parameters
            .iter()
            .filter_map(|p| {
                p.binds_field.as_ref().map(|f| MetaVariable {
                    placeholder_name: p.name.clone(),
                    bound_field: f.clone(),
                })
            })
            .collect();
        Action {
            kind,
            constructing: kind.is_always_constructing() || callable.constructing,
            covered_fields: callable.sets_fields.clone(),
            callable: Some(callable.clone()),
            meta_variables,
            member: None,
            field_type: None,
        }
    }

    pub fn call_constructor(callable: &CallableSpec) -> Action {
        Action::from_callable(ActionKind::CallConstructor, callable)
    }

    pub fn call_factory(callable: &CallableSpec) -> Action {
        Action::from_callable(ActionKind::CallFactoryMethod, callable)
    }

    pub fn call_method(callable: &CallableSpec) -> Action {
        Action::from_callable(ActionKind::CallMethod, callable)
    }

    pub fn assign_field(field: &str) -> Action {
        Action {
            kind: ActionKind::AssignField,
            constructing: false,
            covered_fields: BTreeSet::from([field.to_string()]),
            callable: None,
            meta_variables: vec![MetaVariable {
                placeholder_name: field.to_string(),
                bound_field: field.to_string(),
            }],
            member: None,
            field_type: None,
        }
    }

    pub fn with_field_type(mut self, type_name: &str) -> Action {
        self.field_type = Some(type_name.to_string());
        self
    }

    fn constant(kind: ActionKind, owner: &str, member: Option<&str>) -> Action {
        Action {
            kind,
            constructing: true,
            covered_fields: BTreeSet::new(),
            callable: None,
            meta_variables: Vec::new(),
            member: member.map(|m| MemberRef { owner: owner.to_string(), member: m.to_string() }),
            field_type: None,
        }
    }

    /// Enum constant template; the constant is chosen when the plan is instantiated.
    pub fn use_enum_constant(type_name: &str) -> Action {
        let mut a = Action::constant(ActionKind::UseEnumConstant, type_name, None);
        a.meta_variables.push(MetaVariable {
            placeholder_name: "constant".into(),
            bound_field: "constant".into(),
        });
        a
    }

    pub fn use_static_field(owner: &str, field: &str) -> Action {
        Action::constant(ActionKind::UseStaticField, owner, Some(field))
    }

    pub fn use_named_constant(owner: &str, member: &str) -> Action {
        Action::constant(ActionKind::UseNamedConstant, owner, Some(member))
    }

    pub fn use_object_reference() -> Action {
        Action::constant(ActionKind::UseObjectReference, "", None)
    }

    pub fn callable_name(&self) -> &str {
        self.callable.as_ref().map(|c| c.name.as_str()).unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReconstructionPlan {
    pub actions: Vec<Action>,
    pub target_type: String,
    pub total_cost: u64,
}

/// Checks the plan shape: one constructing action, placed first, and full field coverage.
pub fn validate_plan(plan: &ReconstructionPlan, model: &TypeModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let constructing = plan.actions.iter().filter(|a| a.constructing).count();
    if constructing != 1 {
        out.push(violation(
            &plan.target_type,
            format!("expected exactly one constructing action, found {constructing}"),
        ));
    }
    if plan.actions.first().is_some_and(|a| !a.constructing) {
        out.push(violation(&plan.target_type, "first action is not constructing"));
    }
    let covered: BTreeSet<String> =
        plan.actions.iter().flat_map(|a| a.covered_fields.iter().cloned()).collect();
    if covered != model.field_names() {
        out.push(violation(&plan.target_type, "covered fields differ from the type's fields"));
    }
    out
}

/// An action together with the concrete values for its meta-variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundAction {
    pub action: Action,
    /// Ordered like the callable's parameters; a single value for `assignField`.
    pub arguments: Vec<CapturedValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InstantiatedPlan {
    pub target_type: String,
    pub actions: Vec<BoundAction>,
    pub total_cost: u64,
}

/// Primitive payload of a captured literal. Doubles keep their exact bit pattern.
#[derive(Debug, Clone, Copy)]
pub enum Primitive {
    Int(i64),
    Double(f64),
    Bool(bool),
}

impl Primitive {
    pub fn type_name(&self) -> &'static str {
        match self {
            Primitive::Int(_) => "int",
            Primitive::Double(_) => "double",
            Primitive::Bool(_) => "boolean",
        }
    }
}

impl PartialEq for Primitive {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Primitive::Int(a), Primitive::Int(b)) => a == b,
            (Primitive::Double(a), Primitive::Double(b)) => a.to_bits() == b.to_bits(),
            (Primitive::Bool(a), Primitive::Bool(b)) => a == b,
            _ => false,
        }
    }
}

impl Eq for Primitive {}

impl std::hash::Hash for Primitive {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        match self {
            Primitive::Int(v) => (0u8, *v).hash(state),
            Primitive::Double(v) => (1u8, v.to_bits()).hash(state),
            Primitive::Bool(v) => (2u8, *v).hash(state),
        }
    }
}

pub const NAN_SENTINEL: &str = "NaN";
pub const POS_INF_SENTINEL: &str = "Infinity";
pub const NEG_INF_SENTINEL: &str = "-Infinity";
/// The NaN produced by invalid arithmetic on common hardware: the canonical NaN with its sign set.
pub const NEG_NAN_SENTINEL: &str = "-NaN";

impl Serialize for Primitive {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::{Error, SerializeMap};
        let mut map = s.serialize_map(Some(1))?;
        match *self {
            Primitive::Int(v) => map.serialize_entry("int", &v)?,
            Primitive::Bool(v) => map.serialize_entry("bool", &v)?,
            Primitive::Double(v) if v.is_finite() => map.serialize_entry("double", &v)?,
            Primitive::Double(v) if v.is_nan() && v.to_bits() == (-f64::NAN).to_bits() => {
                map.serialize_entry("double", NEG_NAN_SENTINEL)?
            }
            Primitive::Double(v) if v.is_nan() => {
                if v.to_bits() != f64::NAN.to_bits() {
                    return Err(S::Error::custom(format!(
                        "NaN with payload {:#x} has no literal form",
                        v.to_bits()
                    )));
                }
                map.serialize_entry("double", NAN_SENTINEL)?
            }
            Primitive::Double(v) if v > 0.0 => map.serialize_entry("double", POS_INF_SENTINEL)?,
            Primitive::Double(_) => map.serialize_entry("double", NEG_INF_SENTINEL)?,
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Primitive {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum DoubleRepr {
            Number(f64),
            Sentinel(String),
        }
        #[derive(Deserialize)]
        #[serde(rename_all = "lowercase", deny_unknown_fields)]
        enum Repr {
            Int(i64),
            Bool(bool),
            Double(DoubleRepr),
        }
        Ok(match Repr::deserialize(d)? {
            Repr::Int(v) => Primitive::Int(v),
            Repr::Bool(v) => Primitive::Bool(v),
            Repr::Double(DoubleRepr::Number(v)) => Primitive::Double(v),
            Repr::Double(DoubleRepr::Sentinel(s)) => Primitive::Double(match s.as_str() {
                NAN_SENTINEL => f64::NAN,
                NEG_NAN_SENTINEL => -f64::NAN,
                POS_INF_SENTINEL => f64::INFINITY,
                NEG_INF_SENTINEL => f64::NEG_INFINITY,
                other => return Err(D::Error::custom(format!("unknown double sentinel `{other}`"))),
            }),
        })
    }
}

/// A snapshot of one runtime value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", rename_all_fields = "camelCase")]
pub enum CapturedValue {
    PrimitiveLiteral { value: Primitive, type_name: String },
    Text { value: String },
    EnumConstant { type_name: String, constant_name: String },
    Sequence { elements: Vec<CapturedValue>, truncated: bool },
    MapValue { entries: Vec<(CapturedValue, CapturedValue)>, truncated: bool },
    Null,
    ObjectRef { object_id: ObjectId, logical_time: LogicalTime },
    /// An object that could not be captured (unregistered at depth exhaustion).
    Opaque { type_name: String },
}

impl CapturedValue {
    pub fn int(v: i64) -> Self {
        CapturedValue::PrimitiveLiteral { value: Primitive::Int(v), type_name: "int".into() }
    }

    pub fn double(v: f64) -> Self {
        CapturedValue::PrimitiveLiteral { value: Primitive::Double(v), type_name: "double".into() }
    }

    pub fn boolean(v: bool) -> Self {
        CapturedValue::PrimitiveLiteral { value: Primitive::Bool(v), type_name: "boolean".into() }
    }

    pub fn text(v: impl Into<String>) -> Self {
        CapturedValue::Text { value: v.into() }
    }

    pub fn enum_constant(type_name: impl Into<String>, constant: impl Into<String>) -> Self {
        CapturedValue::EnumConstant { type_name: type_name.into(), constant_name: constant.into() }
    }

    pub fn object(object_id: ObjectId, logical_time: LogicalTime) -> Self {
        CapturedValue::ObjectRef { object_id, logical_time }
    }

    pub fn sequence(elements: Vec<CapturedValue>) -> Self {
        CapturedValue::Sequence { elements, truncated: false }
    }

    pub fn as_object_ref(&self) -> Option<ObjectRefKey> {
        match *self {
            CapturedValue::ObjectRef { object_id, logical_time } => {
                Some(ObjectRefKey { object_id, logical_time })
            }
            _ => None,
        }
    }

    /// Visits every value in this tree, including `self`.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a CapturedValue)) {
        f(self);
        match self {
            CapturedValue::Sequence { elements, .. } => elements.iter().for_each(|e| e.walk(f)),
            CapturedValue::MapValue { entries, .. } => entries.iter().for_each(|(k, v)| {
                k.walk(f);
                v.walk(f);
            }),
            _ => {}
        }
    }

    pub fn object_refs(&self) -> Vec<ObjectRefKey> {
        let mut out = Vec::new();
        self.walk(&mut |v| out.extend(v.as_object_ref()));
        out
    }

    pub fn is_truncated(&self) -> bool {
        let mut t = false;
        self.walk(&mut |v| {
            if let CapturedValue::Sequence { truncated: true, .. }
            | CapturedValue::MapValue { truncated: true, .. } = v
            {
                t = true;
            }
        });
        t
    }

    /// Value identity as seen by an assignment: object references compare by id only.
    pub fn same_value(&self, other: &CapturedValue) -> bool {
        use CapturedValue::*;
        match (self, other) {
            (ObjectRef { object_id: a, .. }, ObjectRef { object_id: b, .. }) => a == b,
            (Sequence { elements: a, truncated: ta }, Sequence { elements: b, truncated: tb }) => {
                ta == tb && a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_value(y))
            }
            (MapValue { entries: a, truncated: ta }, MapValue { entries: b, truncated: tb }) => {
                ta == tb
                    && a.len() == b.len()
                    && a.iter().zip(b).all(|((k1, v1), (k2, v2))| k1.same_value(k2) && v1.same_value(v2))
            }
            _ => self == other,
        }
    }
}

/// An `id@logical-time` reference marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectRefKey {
    pub object_id: ObjectId,
    pub logical_time: LogicalTime,
}

impl fmt::Display for ObjectRefKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}", self.object_id, self.logical_time)
    }
}

impl std::str::FromStr for ObjectRefKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (id, time) = s.split_once('@').ok_or_else(|| format!("missing `@` in `{s}`"))?;
        Ok(ObjectRefKey {
            object_id: id.parse().map_err(|e| format!("bad object id in `{s}`: {e}"))?,
            logical_time: time.parse().map_err(|e| format!("bad logical time in `{s}`: {e}"))?,
        })
    }
}

impl Serialize for ObjectRefKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ObjectRefKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all_fields = "camelCase")]
pub enum Event {
    ConstructEvent {
        time: LogicalTime,
        object_id: ObjectId,
        type_name: String,
        constructor_name: String,
        args: Vec<CapturedValue>,
        initial_fields: BTreeMap<String, CapturedValue>,
    },
    MethodStartEvent {
        time: LogicalTime,
        call_id: CallId,
        receiver: ObjectId,
        qualified_method_name: String,
        args: Vec<CapturedValue>,
    },
    MethodEndEvent {
        time: LogicalTime,
        call_id: CallId,
        /// The invocation completed by throwing.
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        abnormal: bool,
    },
    FieldSetEvent {
        time: LogicalTime,
        receiver: ObjectId,
        field_name: String,
        old_value: CapturedValue,
        new_value: CapturedValue,
    },
}

impl Event {
    pub fn time(&self) -> LogicalTime {
        match self {
            Event::ConstructEvent { time, .. }
            | Event::MethodStartEvent { time, .. }
            | Event::MethodEndEvent { time, .. }
            | Event::FieldSetEvent { time, .. } => *time,
        }
    }

    /// All captured values carried by the event.
    pub fn values(&self) -> Vec<&CapturedValue> {
        match self {
            Event::ConstructEvent { args, initial_fields, .. } => {
                args.iter().chain(initial_fields.values()).collect()
            }
            Event::MethodStartEvent { args, .. } => args.iter().collect(),
            Event::MethodEndEvent { .. } => Vec::new(),
            Event::FieldSetEvent { old_value, new_value, .. } => vec![old_value, new_value],
        }
    }
}

/// Checks the log-level event invariants: strictly increasing times, paired method events,
/// fresh object ids and references that never point into the future.
pub fn validate_events(events: &[Event]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut last: Option<LogicalTime> = None;
    let mut objects = BTreeSet::new();
    let mut open = BTreeSet::new();
    let mut closed = BTreeSet::new();
    for (i, e) in events.iter().enumerate() {
        let subject = format!("event #{i}");
        let t = e.time();
        if last.is_some_and(|l| t <= l) {
            out.push(violation(&subject, format!("time {t} does not increase")));
        }
        last = Some(t);
        for v in e.values() {
            for r in v.object_refs() {
                if r.logical_time > t {
                    out.push(violation(&subject, format!("reference {r} is later than the event")));
                }
            }
        }
        match e {
            Event::ConstructEvent { object_id, .. } => {
                if !objects.insert(*object_id) {
                    out.push(violation(&subject, format!("object id {object_id} is not fresh")));
                }
            }
            Event::MethodStartEvent { call_id, .. } => {
                if !open.insert(*call_id) || closed.contains(call_id) {
                    out.push(violation(&subject, format!("call id {call_id} reused")));
                }
            }
            Event::MethodEndEvent { call_id, .. } => {
                if !open.remove(call_id) {
                    out.push(violation(&subject, format!("end without start for call {call_id}")));
                }
                closed.insert(*call_id);
            }
            Event::FieldSetEvent { .. } => {}
        }
    }
    out
}

/// A `Type.FIELD` static constant holding a traced object, observed at startup.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StaticConstant {
    pub type_name: String,
    pub field_name: String,
    pub object_id: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SerializationRecord {
    pub point_id: String,
    pub receiver: CapturedValue,
    pub args: Vec<CapturedValue>,
    /// `None` for methods without a return value.
    pub return_value: Option<CapturedValue>,
    /// The receiver after the invocation; captured for methods without a return value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_receiver: Option<CapturedValue>,
    pub time: LogicalTime,
    pub embedded_plans: BTreeMap<ObjectRefKey, InstantiatedPlan>,
}

impl SerializationRecord {
    pub fn values(&self) -> impl Iterator<Item = &CapturedValue> {
        std::iter::once(&self.receiver)
            .chain(self.args.iter())
            .chain(self.return_value.iter())
            .chain(self.post_receiver.iter())
    }

    /// Object references that must be resolved against the trace log.
    pub fn unresolved_refs(&self) -> BTreeSet<ObjectRefKey> {
        let mut pending: Vec<ObjectRefKey> =
            self.values().flat_map(|v| v.object_refs()).collect();
        let mut seen = BTreeSet::new();
        let mut out = BTreeSet::new();
        while let Some(r) = pending.pop() {
            if !seen.insert(r) {
                continue;
            }
            match self.embedded_plans.get(&r) {
                Some(plan) => {
                    for a in &plan.actions {
                        for v in &a.arguments {
                            pending.extend(v.object_refs());
                        }
                    }
                }
                None => {
                    out.insert(r);
                }
            }
        }
        out
    }
}

/// Per-kind integer costs used by plan synthesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostTable(pub BTreeMap<ActionKind, u32>);

impl Default for CostTable {
    fn default() -> Self {
        use ActionKind::*;
        CostTable(BTreeMap::from([
            (CallConstructor, 1),
            (UseEnumConstant, 1),
            (UseNamedConstant, 1),
            (UseStaticField, 1),
            (CallFactoryMethod, 2),
            (CallMethod, 3),
            (UseObjectReference, 4),
            (AssignField, 5),
        ]))
    }
}

impl CostTable {
    pub fn get(&self, kind: ActionKind) -> Option<u32> {
        self.0.get(&kind).copied()
    }

    pub fn scaled(&self, factor: u32) -> CostTable {
        CostTable(self.0.iter().map(|(k, v)| (*k, v * factor)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn field(name: &str, ty: &str, public: bool) -> FieldSpec {
        FieldSpec { name: name.into(), type_name: ty.into(), accessible: public, assignable: public }
    }

    fn param(name: &str, ty: &str, field: Option<&str>) -> Parameter {
        Parameter { name: name.into(), type_name: ty.into(), binds_field: field.map(Into::into) }
    }

    fn callable(name: &str, params: Vec<Parameter>, constructing: bool) -> CallableSpec {
        CallableSpec {
            name: name.into(),
            sets_fields: params.iter().filter_map(|p| p.binds_field.clone()).collect(),
            parameters: params,
            constructing,
            accessible: true,
            return_type: None,
        }
    }

    pub(crate) fn monkey() -> TypeModel {
        let mut m = TypeModel::new("Monkey", TypeKind::Composite);
        m.fields = vec![
            field("age", "int", false),
            field("eyeColor", "EyeColor", true),
            field("habitat", "Habitat", true),
        ];
        m.constructors = vec![
            callable(
                "Monkey",
                vec![
                    param("age", "int", Some("age")),
                    param("eyeColor", "EyeColor", Some("eyeColor")),
                    param("habitat", "Habitat", Some("habitat")),
                ],
                true,
            ),
            callable("Monkey", vec![param("age", "int", Some("age"))], true),
        ];
        m.setters =
            vec![callable("setEyeColor", vec![param("eyeColor", "EyeColor", Some("eyeColor"))], false)];
        m
    }

    #[test]
    fn monkey_model_is_valid() {
        assert_eq!(validate_type_model(&monkey()), vec![]);
    }

    #[test]
    fn duplicate_field_is_reported_once() {
        let mut m = TypeModel::new("P", TypeKind::Composite);
        m.fields = vec![field("x", "int", true), field("x", "int", true)];
        let v = validate_type_model(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "x");
    }

    #[test]
    fn setter_on_unknown_field_is_reported() {
        let mut m = TypeModel::new("P", TypeKind::Composite);
        m.fields = vec![field("x", "int", true)];
        m.setters = vec![callable("setGhost", vec![param("g", "int", Some("ghost"))], false)];
        let v = validate_type_model(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].subject, "ghost");
    }

    #[test]
    fn enum_constants_iff_enumeration() {
        let e = TypeModel::new("Color", TypeKind::Enumeration);
        assert_eq!(validate_type_model(&e).len(), 1);
        let mut c = TypeModel::new("Box", TypeKind::Composite);
        c.enum_constants.push("A".into());
        assert_eq!(validate_type_model(&c).len(), 1);
    }

    #[test]
    fn assignable_requires_accessible() {
        let mut m = TypeModel::new("P", TypeKind::Composite);
        m.fields = vec![FieldSpec { name: "x".into(), type_name: "int".into(), accessible: false, assignable: true }];
        assert_eq!(validate_type_model(&m).len(), 1);
    }

    #[test]
    fn validate_never_mutates() {
        let m = monkey();
        let before = m.clone();
        let _ = validate_type_model(&m);
        assert_eq!(m, before);
    }

    #[test]
    fn action_invariants_hold_for_constructors() {
        let m = monkey();
        let full = Action::call_constructor(&m.constructors[0]);
        assert!(full.constructing);
        assert_eq!(full.covered_fields.len(), 3);
        let assign = Action::assign_field("habitat");
        assert!(!assign.constructing);
        assert_eq!(assign.covered_fields.len(), 1);
        for kind in ActionKind::ALL {
            if kind.is_always_constructing() {
                assert!(Action::constant(kind, "T", None).constructing);
            }
        }
    }

    #[test]
    fn default_costs_prefer_constructor_over_assignment() {
        let c = CostTable::default();
        assert!(c.get(ActionKind::CallConstructor) < c.get(ActionKind::CallMethod));
        assert!(c.get(ActionKind::CallMethod) < c.get(ActionKind::AssignField));
        assert!(ActionKind::ALL.iter().all(|k| c.get(*k).is_some()));
    }

    #[test]
    fn record_refs_resolve_through_embedded_plans() {
        let key = ObjectRefKey { object_id: 1, logical_time: 5 };
        let mut rec = SerializationRecord {
            point_id: "Zoo.feed".into(),
            receiver: CapturedValue::object(1, 5),
            args: vec![],
            return_value: Some(CapturedValue::Null),
            post_receiver: None,
            time: 6,
            embedded_plans: BTreeMap::new(),
        };
        assert_eq!(rec.unresolved_refs(), BTreeSet::from([key]));
        rec.embedded_plans.insert(
            key,
            InstantiatedPlan {
                target_type: "Monkey".into(),
                actions: vec![BoundAction {
                    action: Action::call_constructor(&monkey().constructors[1]),
                    arguments: vec![CapturedValue::object(2, 4)],
                }],
                total_cost: 1,
            },
        );
        assert_eq!(
            rec.unresolved_refs(),
            BTreeSet::from([ObjectRefKey { object_id: 2, logical_time: 4 }])
        );
    }

    #[test]
    fn event_validation_flags_every_invariant() {
        let events = vec![
            Event::ConstructEvent {
                time: 2,
                object_id: 1,
                type_name: "A".into(),
                constructor_name: "A".into(),
                args: vec![CapturedValue::object(9, 3)],
                initial_fields: BTreeMap::new(),
            },
            Event::ConstructEvent {
                time: 2,
                object_id: 1,
                type_name: "A".into(),
                constructor_name: "A".into(),
                args: vec![],
                initial_fields: BTreeMap::new(),
            },
            Event::MethodEndEvent { time: 4, call_id: 7, abnormal: false },
        ];
        let v = validate_events(&events);
        assert_eq!(v.len(), 4, "{v:?}");
    }

    #[test]
    fn object_ref_key_round_trips_through_text() {
        let k = ObjectRefKey { object_id: 7, logical_time: 9 };
        assert_eq!(k.to_string(), "7@9");
        assert_eq!("7@9".parse::<ObjectRefKey>().unwrap(), k);
        assert!("79".parse::<ObjectRefKey>().is_err());
    }
}
