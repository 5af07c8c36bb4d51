//! Pre-execution analysis: type models from host declarations, action enumeration,
//! serialization point selection and the closure of associated types.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    Action, CallableSpec, FieldSpec, Parameter, StaticConstantField, TypeKind, TypeModel,
};

/// Type names that are never modelled: primitives and text.
pub const LEAF_TYPES: &[&str] = &["int", "double", "boolean", "String", "void"];

pub fn is_leaf_type(name: &str) -> bool {
    LEAF_TYPES.contains(&name)
}

/// Named types mentioned by a type expression such as `Map<String,Habitat[]>`.
pub fn referenced_type_names(type_expr: &str) -> Vec<String> {
    type_expr
        .split(['<', '>', ',', '[', ']', ' '])
        .filter(|s| !s.is_empty() && *s != "Map")
        .map(str::to_string)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum DeclarationKind {
    Class,
    Enum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldDeclaration {
    pub name: String,
    pub type_name: String,
    pub public: bool,
    pub is_final: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AssignSource {
    Parameter(String),
    Constant,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FieldAssignment {
    pub field: String,
    pub source: AssignSource,
}

/// What the host adapter could tell about a callable body without the core parsing it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BodySummary {
    /// Top-level `this.field = ...` statements, in order.
    pub assignments: Vec<FieldAssignment>,
    /// Any statement besides top-level field assignments.
    pub other_statements: bool,
    /// Set when the body is exactly `return new T(args)`.
    pub returns_new: Option<(String, Vec<AssignSource>)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CallableDeclaration {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub return_type: Option<String>,
    pub public: bool,
    pub is_static: bool,
    pub is_abstract: bool,
    pub deprecated: bool,
    pub statement_count: usize,
    pub body: BodySummary,
    /// Explicit `parameter -> field` metadata; wins over body heuristics.
    pub declared_sets: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TypeDeclaration {
    pub name: String,
    pub kind: DeclarationKind,
    pub public: bool,
    pub is_abstract: bool,
    pub deprecated: bool,
    pub anonymous: bool,
    pub local: bool,
    pub fields: Vec<FieldDeclaration>,
    pub static_fields: Vec<FieldDeclaration>,
    pub constructors: Vec<CallableDeclaration>,
    pub methods: Vec<CallableDeclaration>,
    pub enum_constants: Vec<String>,
}

impl TypeDeclaration {
    pub fn method<'a>(&'a self, name: &'a str) -> impl Iterator<Item = &'a CallableDeclaration> + 'a {
        self.methods.iter().filter(move |m| m.name == name)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("type `{owner}` references unknown type `{missing}`")]
    UnknownType { owner: String, missing: String },
    #[error("unknown serialization point `{0}`")]
    UnknownPoint(String),
}

/// Names the analysis may rely on: declared types plus explicitly opaque ones.
#[derive(Debug, Clone, Default)]
pub struct TypeCatalog {
    pub declarations: BTreeMap<String, TypeDeclaration>,
    pub opaque: BTreeSet<String>,
}

impl TypeCatalog {
    pub fn new(decls: impl IntoIterator<Item = TypeDeclaration>) -> Self {
        TypeCatalog {
            declarations: decls.into_iter().map(|d| (d.name.clone(), d)).collect(),
            opaque: BTreeSet::new(),
        }
    }

    pub fn is_known(&self, name: &str) -> bool {
        is_leaf_type(name) || self.declarations.contains_key(name) || self.opaque.contains(name)
    }

    fn check(&self, owner: &str, type_expr: &str) -> Result<(), AnalysisError> {
        for name in referenced_type_names(type_expr) {
            if !self.is_known(&name) {
                return Err(AnalysisError::UnknownType { owner: owner.into(), missing: name });
            }
        }
        Ok(())
    }
}

fn parameters(params: &[(String, String)], bindings: &BTreeMap<String, String>) -> Vec<Parameter> {
    params
        .iter()
        .map(|(name, ty)| Parameter {
            name: name.clone(),
            type_name: ty.clone(),
            binds_field: bindings.get(name).cloned(),
        })
        .collect()
}

/// Parameter-to-field bindings of a constructor whose body only stores parameters
/// and constants into fields. Any other statement voids the bindings.
fn constructor_bindings(decl: &CallableDeclaration) -> BTreeMap<String, String> {
    if let Some(declared) = &decl.declared_sets {
        return declared.iter().cloned().collect();
    }
    if decl.body.other_statements {
        return BTreeMap::new();
    }
    let mut per_field: BTreeMap<&str, usize> = BTreeMap::new();
    for a in &decl.body.assignments {
        *per_field.entry(a.field.as_str()).or_default() += 1;
    }
    decl.body
        .assignments
        .iter()
        .filter_map(|a| match &a.source {
            AssignSource::Parameter(p) if per_field[a.field.as_str()] == 1 => {
                Some((p.clone(), a.field.clone()))
            }
            _ => None,
        })
        .collect()
}

/// A setter is a single-statement body `this.f = p` over its only parameter.
fn setter_bindings(decl: &CallableDeclaration) -> Option<BTreeMap<String, String>> {
    if decl.is_static {
        return None;
    }
    if let Some(declared) = &decl.declared_sets {
        return (!declared.is_empty()).then(|| declared.iter().cloned().collect());
    }
    match (decl.params.as_slice(), decl.body.assignments.as_slice()) {
        ([(p, _)], [FieldAssignment { field, source: AssignSource::Parameter(src) }])
            if src == p && !decl.body.other_statements && decl.statement_count == 1 =>
        {
            Some(BTreeMap::from([(p.clone(), field.clone())]))
        }
        _ => None,
    }
}

fn factory_bindings(
    decl: &CallableDeclaration,
    owner: &TypeDeclaration,
    ctor_bindings: &[(usize, BTreeMap<String, String>)],
) -> BTreeMap<String, String> {
    if let Some(declared) = &decl.declared_sets {
        return declared.iter().cloned().collect();
    }
    let Some((ty, args)) = &decl.body.returns_new else { return BTreeMap::new() };
    if ty != &owner.name {
        return BTreeMap::new();
    }
    let Some((ctor_idx, bindings)) = ctor_bindings
        .iter()
        .find(|(i, _)| owner.constructors[*i].params.len() == args.len())
    else {
        return BTreeMap::new();
    };
    let ctor = &owner.constructors[*ctor_idx];
    args.iter()
        .zip(&ctor.params)
        .filter_map(|(arg, (ctor_param, _))| match arg {
            AssignSource::Parameter(p) => bindings.get(ctor_param).map(|f| (p.clone(), f.clone())),
            _ => None,
        })
        .collect()
}

fn callable_spec(
    decl: &CallableDeclaration,
    bindings: &BTreeMap<String, String>,
    constructing: bool,
) -> CallableSpec {
    let mut params = parameters(&decl.params, bindings);
    // A parameter bound to a field some other parameter also feeds is ambiguous.
    let mut seen = BTreeSet::new();
    for p in &mut params {
        if let Some(f) = &p.binds_field {
            if !seen.insert(f.clone()) {
                p.binds_field = None;
            }
        }
    }
    CallableSpec {
        name: decl.name.clone(),
        sets_fields: params.iter().filter_map(|p| p.binds_field.clone()).collect(),
        parameters: params,
        constructing,
        accessible: decl.public,
        return_type: decl.return_type.clone(),
    }
}

/// Builds the type model of one declaration.
pub fn extract_type_model(
    decl: &TypeDeclaration,
    catalog: &TypeCatalog,
) -> Result<TypeModel, AnalysisError> {
    let owner = decl.name.as_str();
    for f in decl.fields.iter().chain(&decl.static_fields) {
        catalog.check(owner, &f.type_name)?;
    }
    for c in decl.constructors.iter().chain(&decl.methods) {
        for (_, ty) in &c.params {
            catalog.check(owner, ty)?;
        }
        if let Some(ret) = &c.return_type {
            catalog.check(owner, ret)?;
        }
    }

    let kind = match decl.kind {
        DeclarationKind::Enum => TypeKind::Enumeration,
        DeclarationKind::Class => TypeKind::Composite,
    };
    let mut model = TypeModel::new(owner, kind);
    model.enum_constants = decl.enum_constants.clone();
    model.fields = decl
        .fields
        .iter()
        .map(|f| FieldSpec {
            name: f.name.clone(),
            type_name: f.type_name.clone(),
            accessible: f.public,
            assignable: f.public && !f.is_final,
        })
        .collect();
    let field_names = model.field_names();
    let keep_known = |b: BTreeMap<String, String>| -> BTreeMap<String, String> {
        b.into_iter().filter(|(_, f)| field_names.contains(f)).collect()
    };

    let mut ctor_bindings = Vec::new();
    for (i, c) in decl.constructors.iter().enumerate() {
        let b = keep_known(constructor_bindings(c));
        let spec = callable_spec(c, &b, true);
        if spec.is_field_initializer() {
            ctor_bindings.push((i, b));
        }
        model.constructors.push(spec);
    }
    for m in &decl.methods {
        let returns_owner = m.return_type.as_deref() == Some(owner);
        if m.is_static && returns_owner {
            let b = keep_known(factory_bindings(m, decl, &ctor_bindings));
            model.factory_methods.push(callable_spec(m, &b, true));
        } else if m.is_static {
            continue;
        } else if let Some(b) = setter_bindings(m).map(keep_known).filter(|b| !b.is_empty()) {
            model.setters.push(callable_spec(m, &b, false));
        } else if m.public {
            model.methods.push(callable_spec(m, &BTreeMap::new(), false));
        }
    }
    model.static_constant_fields = decl
        .static_fields
        .iter()
        .filter(|f| f.public && f.is_final)
        .map(|f| StaticConstantField { field_name: f.name.clone(), type_name: f.type_name.clone() })
        .collect();
    Ok(model)
}

/// Lists every action that can take part in a reconstruction plan for `model`.
/// Only accessible callables and assignable fields produce actions.
pub fn enumerate_actions(model: &TypeModel) -> Vec<Action> {
    let mut out = Vec::new();
    if model.kind == TypeKind::Enumeration {
        out.push(Action::use_enum_constant(&model.type_name));
        return out;
    }
    let usable = |c: &&CallableSpec| c.accessible && c.is_field_initializer();
    out.extend(model.constructors.iter().filter(usable).map(Action::call_constructor));
    out.extend(model.factory_methods.iter().filter(usable).map(Action::call_factory));
    out.extend(model.setters.iter().filter(usable).map(Action::call_method));
    out.extend(model.fields.iter().filter(|f| f.assignable).map(|f| Action::assign_field(&f.name).with_field_type(&f.type_name)));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SelectionCriteria {
    pub require_public: bool,
    pub require_non_abstract: bool,
    pub require_non_static: bool,
    pub require_non_deprecated: bool,
    pub min_statements: usize,
    pub owner_public: bool,
    pub owner_non_anonymous: bool,
    pub owner_non_local: bool,
    pub owner_non_deprecated: bool,
}

impl Default for SelectionCriteria {
    fn default() -> Self {
        SelectionCriteria {
            require_public: true,
            require_non_abstract: true,
            require_non_static: true,
            require_non_deprecated: true,
            min_statements: 2,
            owner_public: true,
            owner_non_anonymous: true,
            owner_non_local: true,
            owner_non_deprecated: true,
        }
    }
}

impl SelectionCriteria {
    pub fn disabled() -> Self {
        SelectionCriteria {
            require_public: false,
            require_non_abstract: false,
            require_non_static: false,
            require_non_deprecated: false,
            min_statements: 0,
            owner_public: false,
            owner_non_anonymous: false,
            owner_non_local: false,
            owner_non_deprecated: false,
        }
    }

    pub fn accepts(&self, owner: &TypeDeclaration, m: &CallableDeclaration) -> bool {
        (!self.require_public || m.public)
            && (!self.require_non_abstract || !m.is_abstract)
            && (!self.require_non_static || !m.is_static)
            && (!self.require_non_deprecated || !m.deprecated)
            && m.statement_count >= self.min_statements
            && (!self.owner_public || owner.public)
            && (!self.owner_non_anonymous || !owner.anonymous)
            && (!self.owner_non_local || !owner.local)
            && (!self.owner_non_deprecated || !owner.deprecated)
    }
}

/// Method identifiers (`Type.method`) satisfying every enabled criterion, in declaration order.
pub fn select_serialization_points(
    module: &[TypeDeclaration],
    criteria: &SelectionCriteria,
) -> Vec<String> {
    let mut out = Vec::new();
    for owner in module {
        for m in &owner.methods {
            let id = format!("{}.{}", owner.name, m.name);
            if criteria.accepts(owner, m) && !out.contains(&id) {
                out.push(id);
            }
        }
    }
    out
}

/// Direct successors of a type in the association relation: field, constructor
/// and method parameter types (plus return types of methods).
fn associated(decl: &TypeDeclaration) -> Vec<String> {
    let mut out = Vec::new();
    for f in &decl.fields {
        out.extend(referenced_type_names(&f.type_name));
    }
    for c in decl.constructors.iter().chain(&decl.methods) {
        for (_, ty) in &c.params {
            out.extend(referenced_type_names(ty));
        }
        if let Some(ret) = &c.return_type {
            out.extend(referenced_type_names(ret));
        }
    }
    out
}

/// All declared types needed to reconstruct the receivers, arguments and return values
/// of the given entry points. Leaves (primitives, text, opaque) are excluded.
pub fn closure_of_associated_types(
    entry_points: &[String],
    catalog: &TypeCatalog,
) -> Result<BTreeSet<String>, AnalysisError> {
    let mut queue = VecDeque::new();
    for ep in entry_points {
        let (owner, method) =
            ep.rsplit_once('.').ok_or_else(|| AnalysisError::UnknownPoint(ep.clone()))?;
        let decl = catalog
            .declarations
            .get(owner)
            .ok_or_else(|| AnalysisError::UnknownPoint(ep.clone()))?;
        let mut matched = false;
        for m in decl.method(method) {
            matched = true;
            if !m.is_static {
                queue.push_back(owner.to_string());
            }
            for (_, ty) in &m.params {
                queue.extend(referenced_type_names(ty));
            }
            if let Some(ret) = &m.return_type {
                queue.extend(referenced_type_names(ret));
            }
        }
        if !matched {
            return Err(AnalysisError::UnknownPoint(ep.clone()));
        }
    }
    Ok(closure_of_types(queue, catalog))
}

/// Declared types reachable from `roots` through the association relation, roots included.
pub fn closure_of_types(roots: impl IntoIterator<Item = String>, catalog: &TypeCatalog) -> BTreeSet<String> {
    let mut queue: VecDeque<String> = roots.into_iter().collect();
    let mut seen = BTreeSet::new();
    while let Some(name) = queue.pop_front() {
        let Some(decl) = catalog.declarations.get(&name) else { continue };
        if seen.insert(name) {
            queue.extend(associated(decl));
        }
    }
    seen
}

/// Models for every type in the closure.
pub fn models_for(
    names: &BTreeSet<String>,
    catalog: &TypeCatalog,
) -> Result<BTreeMap<String, TypeModel>, AnalysisError> {
    names
        .iter()
        .filter_map(|n| catalog.declarations.get(n))
        .map(|d| extract_type_model(d, catalog).map(|m| (d.name.clone(), m)))
        .collect()
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn field(name: &str, ty: &str, public: bool) -> FieldDeclaration {
        FieldDeclaration { name: name.into(), type_name: ty.into(), public, is_final: false }
    }

    pub fn assigns(pairs: &[(&str, &str)]) -> BodySummary {
        BodySummary {
            assignments: pairs
                .iter()
                .map(|(f, p)| FieldAssignment {
                    field: f.to_string(),
                    source: AssignSource::Parameter(p.to_string()),
                })
                .collect(),
            other_statements: false,
            returns_new: None,
        }
    }

    pub fn callable(name: &str, params: &[(&str, &str)], body: BodySummary) -> CallableDeclaration {
        CallableDeclaration {
            name: name.into(),
            params: params.iter().map(|(n, t)| (n.to_string(), t.to_string())).collect(),
            return_type: None,
            public: true,
            is_static: false,
            is_abstract: false,
            deprecated: false,
            statement_count: body.assignments.len() + usize::from(body.other_statements),
            body,
            declared_sets: None,
        }
    }

    pub fn class(name: &str) -> TypeDeclaration {
        TypeDeclaration {
            name: name.into(),
            kind: DeclarationKind::Class,
            public: true,
            is_abstract: false,
            deprecated: false,
            anonymous: false,
            local: false,
            fields: vec![],
            static_fields: vec![],
            constructors: vec![],
            methods: vec![],
            enum_constants: vec![],
        }
    }

    pub fn eye_color() -> TypeDeclaration {
        let mut e = class("EyeColor");
        e.kind = DeclarationKind::Enum;
        e.enum_constants = vec!["BROWN".into(), "BLUE".into(), "GREEN".into()];
        e
    }

    pub fn habitat() -> TypeDeclaration {
        let mut h = class("Habitat");
        h.fields = vec![field("coordinate", "String", false), field("area", "double", false)];
        h.constructors = vec![callable(
            "Habitat",
            &[("coordinate", "String")],
            BodySummary {
                assignments: vec![
                    FieldAssignment { field: "coordinate".into(), source: AssignSource::Parameter("coordinate".into()) },
                    FieldAssignment { field: "area".into(), source: AssignSource::Constant },
                ],
                other_statements: false,
                returns_new: None,
            },
        )];
        let mut grow = callable("grow", &[("amount", "int")], BodySummary::default());
        grow.body.assignments.push(FieldAssignment { field: "area".into(), source: AssignSource::Other });
        grow.statement_count = 1;
        h.methods = vec![grow];
        h
    }

    pub fn monkey() -> TypeDeclaration {
        let mut m = class("Monkey");
        m.fields = vec![
            field("age", "int", false),
            field("eyeColor", "EyeColor", true),
            field("habitat", "Habitat", true),
        ];
        m.constructors = vec![
            callable(
                "Monkey",
                &[("age", "int"), ("eyeColor", "EyeColor"), ("habitat", "Habitat")],
                assigns(&[("age", "age"), ("eyeColor", "eyeColor"), ("habitat", "habitat")]),
            ),
            callable("Monkey", &[("age", "int")], assigns(&[("age", "age")])),
        ];
        m.methods = vec![callable("setEyeColor", &[("eyeColor", "EyeColor")], assigns(&[("eyeColor", "eyeColor")]))];
        m
    }

    pub fn zoo_catalog() -> TypeCatalog {
        let mut zoo = class("Zoo");
        let mut admit = callable("admit", &[("monkey", "Monkey")], BodySummary::default());
        admit.is_static = true;
        admit.statement_count = 2;
        let mut count = callable("count", &[("a", "int"), ("b", "double")], BodySummary::default());
        count.is_static = true;
        count.statement_count = 2;
        zoo.methods = vec![admit, count];
        TypeCatalog::new([eye_color(), habitat(), monkey(), zoo])
    }
}
