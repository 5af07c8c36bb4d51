//! Adapter from checked classes to the analyzer's declaration records.

use plaincode_core::analyzer::{
    AssignSource, BodySummary, CallableDeclaration, DeclarationKind, FieldAssignment, FieldDeclaration,
    TypeDeclaration,
};

use crate::ast::*;
use crate::check::is_constant;

fn source_of(e: &Expr, params: &[(String, Type)]) -> AssignSource {
    match &e.kind {
        ExprKind::Local(n) if params.iter().any(|(p, _)| p == n) => AssignSource::Parameter(n.clone()),
        _ if is_constant(e) => AssignSource::Constant,
        _ => AssignSource::Other,
    }
}

fn count(stmts: &[Stmt]) -> usize {
    stmts
        .iter()
        .map(|s| match &s.kind {
            StmtKind::Block(b) => count(b),
            StmtKind::If(_, a, b) => 1 + count(std::slice::from_ref(&**a)) + b.as_deref().map_or(0, |b| count(std::slice::from_ref(b))),
            StmtKind::While(_, body) => 1 + count(std::slice::from_ref(&**body)),
            StmtKind::Try(a, _, b) => 1 + count(a) + count(b),
            _ => 1,
        })
        .sum()
}

fn summary(m: &MethodDecl) -> BodySummary {
    let mut out = BodySummary::default();
    let body = m.body.as_deref().unwrap_or_default();
    for s in body {
        match &s.kind {
            StmtKind::Assign(Expr { kind: ExprKind::Field(recv, field), .. }, value) if matches!(recv.kind, ExprKind::This) => {
                out.assignments.push(FieldAssignment { field: field.clone(), source: source_of(value, &m.params) });
            }
            _ => out.other_statements = true,
        }
    }
    if let [Stmt { kind: StmtKind::Return(Some(Expr { kind: ExprKind::New(t, args), .. })), .. }] = body {
        out.returns_new = Some((t.clone(), args.iter().map(|a| source_of(a, &m.params)).collect()));
    }
    out
}

fn callable(m: &MethodDecl) -> CallableDeclaration {
    CallableDeclaration {
        name: m.name.clone(),
        params: m.params.iter().map(|(n, t)| (n.clone(), t.to_string())).collect(),
        return_type: (m.ret != Type::Void).then(|| m.ret.to_string()),
        public: m.modifiers.public,
        is_static: m.modifiers.is_static,
        is_abstract: m.modifiers.is_abstract,
        deprecated: m.modifiers.deprecated,
        statement_count: m.body.as_deref().map_or(0, count),
        body: summary(m),
        declared_sets: m.modifiers.sets.clone(),
    }
}

fn field(f: &FieldDecl) -> FieldDeclaration {
    FieldDeclaration {
        name: f.name.clone(),
        type_name: f.ty.to_string(),
        public: f.modifiers.public,
        is_final: f.modifiers.is_final,
    }
}

pub fn type_declaration(c: &ClassDecl) -> TypeDeclaration {
    let mut constructors: Vec<CallableDeclaration> = c.constructors.iter().map(callable).collect();
    if c.constructors.is_empty() && !c.is_enum {
        // The implicit no-argument constructor.
        constructors.push(CallableDeclaration {
            name: c.name.clone(),
            params: Vec::new(),
            return_type: None,
            public: true,
            is_static: false,
            is_abstract: false,
            deprecated: false,
            statement_count: 0,
            body: BodySummary::default(),
            declared_sets: None,
        });
    }
    TypeDeclaration {
        name: c.name.clone(),
        kind: if c.is_enum { DeclarationKind::Enum } else { DeclarationKind::Class },
        public: c.modifiers.public,
        is_abstract: c.modifiers.is_abstract,
        deprecated: c.modifiers.deprecated,
        anonymous: false,
        local: false,
        fields: c.fields.iter().filter(|f| !f.modifiers.is_static).map(field).collect(),
        static_fields: c.fields.iter().filter(|f| f.modifiers.is_static).map(field).collect(),
        constructors,
        methods: c.methods.iter().map(callable).collect(),
        enum_constants: c.enum_constants.clone(),
    }
}
