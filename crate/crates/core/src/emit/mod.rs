//! Turns captured values into abstract statements, then into source text.
//!
//! The builder produces an [`EmissionUnit`]; [`transform`] folds literals, collapses
//! duplicate reconstructions and outlines helpers; [`render`] prints a unit in the
//! Java-like host language.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LogicalTime, MemberRef, ObjectId, ObjectRefKey};

mod build;
pub mod naming;
pub mod render;
pub mod transform;

pub use build::{emit_value, Emitter};
pub use naming::NamingContext;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Double(f64),
    Bool(bool),
    Text(String),
    Null,
    Local(String),
    EnumConstant { type_name: String, constant: String },
    StaticRead(MemberRef),
    New { type_name: String, args: Vec<Expr> },
    StaticCall { owner: String, method: String, args: Vec<Expr> },
    Call { target: Box<Expr>, method: String, args: Vec<Expr> },
    Sequence { elem_type: String, elements: Vec<Expr> },
    Map { key_type: String, value_type: String, entries: Vec<(Expr, Expr)> },
    HelperCall { name: String },
    /// Stands for a value that could not be reconstructed; never compiles.
    Placeholder { reason: String },
}

impl Expr {
    /// Literal values that can be moved to their use site without changing behaviour.
    pub fn is_literal(&self) -> bool {
        match self {
            Expr::Int(_) | Expr::Double(_) | Expr::Bool(_) | Expr::Text(_) | Expr::Null | Expr::EnumConstant { .. } => true,
            Expr::Sequence { elements, .. } => elements.iter().all(Expr::is_literal),
            _ => false,
        }
    }

    pub fn visit_locals<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::Local(n) => f(n),
            Expr::New { args, .. } | Expr::StaticCall { args, .. } => args.iter().for_each(|a| a.visit_locals(f)),
            Expr::Call { target, args, .. } => {
                target.visit_locals(f);
                args.iter().for_each(|a| a.visit_locals(f));
            }
            Expr::Sequence { elements, .. } => elements.iter().for_each(|e| e.visit_locals(f)),
            Expr::Map { entries, .. } => entries.iter().for_each(|(k, v)| {
                k.visit_locals(f);
                v.visit_locals(f);
            }),
            _ => {}
        }
    }

    pub fn visit_helpers<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Expr::HelperCall { name } => f(name),
            Expr::New { args, .. } | Expr::StaticCall { args, .. } => args.iter().for_each(|a| a.visit_helpers(f)),
            Expr::Call { target, args, .. } => {
                target.visit_helpers(f);
                args.iter().for_each(|a| a.visit_helpers(f));
            }
            Expr::Sequence { elements, .. } => elements.iter().for_each(|e| e.visit_helpers(f)),
            Expr::Map { entries, .. } => entries.iter().for_each(|(k, v)| {
                k.visit_helpers(f);
                v.visit_helpers(f);
            }),
            _ => {}
        }
    }

    /// Replaces every local for which `f` returns a new expression.
    pub fn rewrite_locals(&mut self, f: &mut impl FnMut(&str) -> Option<Expr>) {
        match self {
            Expr::Local(n) => {
                if let Some(e) = f(n) {
                    *self = e;
                }
            }
            Expr::New { args, .. } | Expr::StaticCall { args, .. } => args.iter_mut().for_each(|a| a.rewrite_locals(f)),
            Expr::Call { target, args, .. } => {
                target.rewrite_locals(f);
                args.iter_mut().for_each(|a| a.rewrite_locals(f));
            }
            Expr::Sequence { elements, .. } => elements.iter_mut().for_each(|e| e.rewrite_locals(f)),
            Expr::Map { entries, .. } => entries.iter_mut().for_each(|(k, v)| {
                k.rewrite_locals(f);
                v.rewrite_locals(f);
            }),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let { name: String, type_name: String, value: Expr },
    Expr(Expr),
    Assign { target: String, field: String, value: Expr },
    Assert { expected: Expr, actual: Expr },
}

impl Stmt {
    pub fn defined(&self) -> Option<&str> {
        match self {
            Stmt::Let { name, .. } => Some(name),
            _ => None,
        }
    }

    pub fn visit_locals<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Stmt::Let { value, .. } | Stmt::Expr(value) => value.visit_locals(f),
            Stmt::Assign { target, value, .. } => {
                f(target);
                value.visit_locals(f);
            }
            Stmt::Assert { expected, actual } => {
                expected.visit_locals(f);
                actual.visit_locals(f);
            }
        }
    }

    pub fn visit_helpers<'a>(&'a self, f: &mut impl FnMut(&'a str)) {
        match self {
            Stmt::Let { value, .. } | Stmt::Expr(value) | Stmt::Assign { value, .. } => value.visit_helpers(f),
            Stmt::Assert { expected, actual } => {
                expected.visit_helpers(f);
                actual.visit_helpers(f);
            }
        }
    }

    /// Rewrites locals in value positions (assignment targets are left alone).
    pub fn rewrite_locals(&mut self, f: &mut impl FnMut(&str) -> Option<Expr>) {
        match self {
            Stmt::Let { value, .. } | Stmt::Expr(value) | Stmt::Assign { value, .. } => value.rewrite_locals(f),
            Stmt::Assert { expected, actual } => {
                expected.rewrite_locals(f);
                actual.rewrite_locals(f);
            }
        }
    }

    /// Renames every local, including definitions and assignment targets.
    pub fn rename(&mut self, f: &impl Fn(&str) -> String) {
        match self {
            Stmt::Let { name, .. } => *name = f(name),
            Stmt::Assign { target, .. } => *target = f(target),
            _ => {}
        }
        self.rewrite_locals(&mut |n| Some(Expr::Local(f(n))));
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Section {
    None,
    Arrange,
    Act,
    Assert,
}

pub type BlockId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub stmt: Stmt,
    pub section: Section,
    /// Enclosing reconstruction blocks, outermost first.
    pub blocks: Vec<BlockId>,
}

/// The statements that rebuild one object, sequence or map, ending in `var`.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub var: String,
    pub type_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Helper {
    pub name: String,
    pub type_name: String,
    pub body: Vec<Stmt>,
    pub result: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", tag = "code", rename_all_fields = "camelCase")]
pub enum Diagnostic {
    Truncated { object: Option<ObjectRefKey> },
    Unresolved { object: ObjectRefKey },
    Incomplete { object_id: ObjectId, since: LogicalTime },
    MidCall { object_id: ObjectId, time: LogicalTime },
    UnbreakableCycle { object: ObjectRefKey },
    Opaque { type_name: String },
    AdapterFailed { adapter: String, message: String },
}

impl Diagnostic {
    /// Blocking diagnostics leave a placeholder in the output.
    pub fn is_blocking(&self) -> bool {
        !matches!(self, Diagnostic::Truncated { .. } | Diagnostic::AdapterFailed { .. })
    }

    pub fn code(&self) -> &'static str {
        match self {
            Diagnostic::Truncated { .. } => "truncated",
            Diagnostic::Unresolved { .. } => "unresolved",
            Diagnostic::Incomplete { .. } => "incomplete",
            Diagnostic::MidCall { .. } => "midCall",
            Diagnostic::UnbreakableCycle { .. } => "unbreakableCycle",
            Diagnostic::Opaque { .. } => "opaque",
            Diagnostic::AdapterFailed { .. } => "adapterFailed",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmitError {
    #[error("unresolvable object reference {0}")]
    Unresolved(ObjectRefKey),
    #[error("cannot emit: {}", .0.iter().map(Diagnostic::code).collect::<Vec<_>>().join(", "))]
    Blocked(Vec<Diagnostic>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionUnit {
    pub lines: Vec<Line>,
    pub root: Expr,
    pub root_type: String,
    pub blocks: BTreeMap<BlockId, Block>,
    /// Names of helpers called from this unit (directly or through other helpers).
    pub helpers: Vec<String>,
    pub diagnostics: Vec<Diagnostic>,
}

impl EmissionUnit {
    pub fn statements(&self) -> impl Iterator<Item = &Stmt> {
        self.lines.iter().map(|l| &l.stmt)
    }

    pub fn is_blocked(&self) -> bool {
        self.diagnostics.iter().any(Diagnostic::is_blocking)
    }

    pub fn is_truncated(&self) -> bool {
        self.diagnostics.iter().any(|d| matches!(d, Diagnostic::Truncated { .. }))
    }

    /// Fails on blocking diagnostics, naming the first unresolved reference if any.
    pub fn check(&self) -> Result<(), EmitError> {
        if let Some(Diagnostic::Unresolved { object }) = self.diagnostics.iter().find(|d| matches!(d, Diagnostic::Unresolved { .. })) {
            return Err(EmitError::Unresolved(*object));
        }
        let blocking: Vec<_> = self.diagnostics.iter().filter(|d| d.is_blocking()).cloned().collect();
        if blocking.is_empty() {
            Ok(())
        } else {
            Err(EmitError::Blocked(blocking))
        }
    }

    /// Checks that every local is defined before use.
    pub fn undefined_locals(&self) -> BTreeSet<String> {
        let mut defined = BTreeSet::new();
        let mut missing = BTreeSet::new();
        for line in &self.lines {
            line.stmt.visit_locals(&mut |n| {
                if !defined.contains(n) {
                    missing.insert(n.to_string());
                }
            });
            if let Some(d) = line.stmt.defined() {
                defined.insert(d.to_string());
            }
        }
        self.root.visit_locals(&mut |n| {
            if !defined.contains(n) {
                missing.insert(n.to_string());
            }
        });
        missing
    }
}
