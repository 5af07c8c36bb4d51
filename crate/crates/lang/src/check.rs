//! Name resolution and type checking. Resolution rewrites bare names, receiver-less calls
//! and type-qualified accesses into their explicit forms so the interpreter never guesses.

use std::collections::{BTreeMap, BTreeSet};

use crate::ast::*;
use crate::CompileError;

pub const BUILTINS: &[&str] = &["len", "append", "put", "get", "containsKey", "assertEquals", "serialize"];

struct Scope<'p> {
    classes: &'p BTreeMap<String, ClassDecl>,
    file: String,
    class: String,
    is_static: bool,
    in_ctor: bool,
    ret: Type,
    locals: Vec<(String, Type)>,
}

fn err(file: &str, line: usize, message: impl Into<String>) -> CompileError {
    CompileError { file: file.to_string(), line, message: message.into() }
}

pub fn assignable(from: &Type, to: &Type) -> bool {
    from == to || (*from == Type::Int && *to == Type::Double) || (*from == Type::Null && to.is_reference() && *to != Type::Null)
}

fn comparable(a: &Type, b: &Type) -> bool {
    (a.is_numeric() && b.is_numeric()) || assignable(a, b) || assignable(b, a)
}

fn is_literal(e: &Expr) -> bool {
    match &e.kind {
        ExprKind::Int(_) | ExprKind::Double(_) | ExprKind::Bool(_) | ExprKind::Str(_) | ExprKind::Null => true,
        ExprKind::EnumConstant(..) => true,
        ExprKind::ToDouble(inner) => is_literal(inner),
        ExprKind::Unary(UnOp::Neg, inner) => matches!(inner.kind, ExprKind::Int(_) | ExprKind::Double(_)),
        ExprKind::Binary(BinOp::Sub, a, b) => is_literal(a) && is_literal(b),
        _ => false,
    }
}

/// Whether a literal-only expression is a compile-time constant of a leaf type.
pub fn is_constant(e: &Expr) -> bool {
    is_literal(e)
}

fn returns(stmts: &[Stmt]) -> bool {
    stmts.last().is_some_and(stmt_returns)
}

fn stmt_returns(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Return(_) | StmtKind::Throw(_) => true,
        StmtKind::Block(b) => returns(b),
        StmtKind::If(_, a, Some(b)) => stmt_returns(a) && stmt_returns(b),
        StmtKind::While(Expr { kind: ExprKind::Bool(true), .. }, _) => true,
        StmtKind::Try(a, _, b) => returns(a) && returns(b),
        _ => false,
    }
}

impl<'p> Scope<'p> {
    fn err(&self, line: usize, message: impl Into<String>) -> CompileError {
        err(&self.file, line, message)
    }

    fn class_decl(&self) -> &'p ClassDecl {
        &self.classes[&self.class]
    }

    fn local(&self, name: &str) -> Option<&Type> {
        self.locals.iter().rev().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn declare(&mut self, line: usize, name: &str, ty: Type) -> Result<(), CompileError> {
        if self.local(name).is_some() {
            return Err(self.err(line, format!("variable `{name}` is already defined")));
        }
        if crate::lexer::is_keyword(name) || BUILTINS.contains(&name) {
            return Err(self.err(line, format!("`{name}` cannot be used as a variable name")));
        }
        self.locals.push((name.to_string(), ty));
        Ok(())
    }

    fn check_type(&self, line: usize, t: &Type) -> Result<(), CompileError> {
        check_type(self.classes, &self.file, line, t)
    }

    fn expect(&self, line: usize, from: &Type, to: &Type) -> Result<(), CompileError> {
        if assignable(from, to) {
            Ok(())
        } else {
            Err(self.err(line, format!("expected `{to}`, found `{from}`")))
        }
    }

    fn coerce(&self, e: &mut Expr, from: &Type, to: &Type) -> Result<(), CompileError> {
        self.expect(e.line, from, to)?;
        if *from == Type::Int && *to == Type::Double {
            let line = e.line;
            let inner = std::mem::replace(e, Expr { kind: ExprKind::Null, line });
            *e = Expr { kind: ExprKind::ToDouble(Box::new(inner)), line };
        }
        Ok(())
    }

    fn visible(&self, owner: &str, private: bool) -> bool {
        !private || owner == self.class
    }

    fn block(&mut self, stmts: &mut [Stmt]) -> Result<(), CompileError> {
        let mark = self.locals.len();
        for s in stmts.iter_mut() {
            self.stmt(s)?;
        }
        self.locals.truncate(mark);
        Ok(())
    }

    fn stmt(&mut self, s: &mut Stmt) -> Result<(), CompileError> {
        let line = s.line;
        match &mut s.kind {
            StmtKind::Block(b) => self.block(b),
            StmtKind::If(c, a, b) => {
                let t = self.expr(c)?;
                self.expect(line, &t, &Type::Bool)?;
                self.block(std::slice::from_mut(&mut **a))?;
                if let Some(b) = b {
                    self.block(std::slice::from_mut(&mut **b))?;
                }
                Ok(())
            }
            StmtKind::While(c, body) => {
                let t = self.expr(c)?;
                self.expect(line, &t, &Type::Bool)?;
                self.block(std::slice::from_mut(&mut **body))
            }
            StmtKind::Return(v) => match (v, self.ret.clone()) {
                (None, Type::Void) => Ok(()),
                (None, t) => Err(self.err(line, format!("missing return value of type `{t}`"))),
                (Some(_), Type::Void) => Err(self.err(line, "cannot return a value from a void method")),
                (Some(e), t) => {
                    let found = self.expr(e)?;
                    self.coerce(e, &found, &t)
                }
            },
            StmtKind::Throw(e) => {
                let t = self.expr(e)?;
                self.expect(line, &t, &Type::Str)
            }
            StmtKind::Try(body, var, handler) => {
                self.block(body)?;
                let mark = self.locals.len();
                self.declare(line, var, Type::Str)?;
                self.block(handler)?;
                self.locals.truncate(mark);
                Ok(())
            }
            StmtKind::Local(ty, name, init) => {
                self.check_type(line, ty)?;
                let t = self.expr(init)?;
                self.coerce(init, &t, ty)?;
                let (ty, name) = (ty.clone(), name.clone());
                self.declare(line, &name, ty)
            }
            StmtKind::Assign(target, value) => {
                let target_ty = self.target(target)?;
                let t = self.expr(value)?;
                self.coerce(value, &t, &target_ty)
            }
            StmtKind::Expr(e) => {
                if !matches!(
                    e.kind,
                    ExprKind::Call(..) | ExprKind::StaticCall(..) | ExprKind::Builtin(..) | ExprKind::New(..)
                ) {
                    return Err(self.err(line, "not a statement"));
                }
                self.expr(e).map(|_| ())
            }
        }
    }

    /// Resolves an assignment target and returns its type.
    fn target(&mut self, e: &mut Expr) -> Result<Type, CompileError> {
        let line = e.line;
        match &mut e.kind {
            ExprKind::Name(n) => {
                if let Some(t) = self.local(n) {
                    let t = t.clone();
                    e.kind = ExprKind::Local(n.clone());
                    return Ok(t);
                }
                if let Some(f) = self.class_decl().field(n) {
                    if f.modifiers.is_static {
                        if f.modifiers.is_final {
                            return Err(self.err(line, format!("cannot assign to final field `{n}`")));
                        }
                        let ty = f.ty.clone();
                        e.kind = ExprKind::StaticField(self.class.clone(), n.clone());
                        return Ok(ty);
                    }
                    return Err(self.err(line, format!("instance field `{n}` must be written as `this.{n}`")));
                }
                Err(self.err(line, format!("unknown variable `{n}`")))
            }
            ExprKind::Field(..) => {
                let ty = self.expr(e)?;
                match &e.kind {
                    ExprKind::Field(recv, f) => {
                        let final_ok = self.in_ctor && matches!(recv.kind, ExprKind::This);
                        let Type::Named(owner) = self.expr_type_of_receiver(recv)? else { unreachable!() };
                        let decl = &self.classes[&owner].field(f).expect("resolved field");
                        if decl.modifiers.is_final && !final_ok {
                            return Err(self.err(line, format!("cannot assign to final field `{f}`")));
                        }
                        Ok(ty)
                    }
                    ExprKind::StaticField(owner, f) => {
                        if self.classes[owner].field(f).is_some_and(|d| d.modifiers.is_final) {
                            return Err(self.err(line, format!("cannot assign to final field `{f}`")));
                        }
                        Ok(ty)
                    }
                    _ => Err(self.err(line, "invalid assignment target")),
                }
            }
            ExprKind::Index(..) => self.expr(e),
            _ => Err(self.err(line, "invalid assignment target")),
        }
    }

    /// Type of an already resolved receiver expression, without re-resolving it.
    fn expr_type_of_receiver(&mut self, recv: &Expr) -> Result<Type, CompileError> {
        let mut copy = recv.clone();
        self.expr(&mut copy)
    }

    fn args(&mut self, line: usize, what: &str, params: &[(String, Type)], args: &mut [Expr]) -> Result<(), CompileError> {
        if params.len() != args.len() {
            return Err(self.err(line, format!("`{what}` takes {} arguments, {} given", params.len(), args.len())));
        }
        for ((_, pt), a) in params.iter().zip(args.iter_mut()) {
            let t = self.expr(a)?;
            self.coerce(a, &t, pt)?;
        }
        Ok(())
    }

    fn type_name_in_scope(&self, n: &str) -> bool {
        self.local(n).is_none() && (self.classes.contains_key(n) || n == "Double")
    }

    pub fn expr(&mut self, e: &mut Expr) -> Result<Type, CompileError> {
        let line = e.line;
        let mut resolved: Option<ExprKind> = None;
        let ty = match &mut e.kind {
            ExprKind::Int(_) => Type::Int,
            ExprKind::Double(_) => Type::Double,
            ExprKind::Bool(_) => Type::Bool,
            ExprKind::Str(_) => Type::Str,
            ExprKind::Null => Type::Null,
            ExprKind::This => {
                if self.is_static {
                    return Err(self.err(line, "`this` in a static context"));
                }
                return Ok(Type::Named(self.class.clone()));
            }
            ExprKind::Name(n) => {
                if let Some(t) = self.local(n) {
                    let t = t.clone();
                    e.kind = ExprKind::Local(n.clone());
                    return Ok(t);
                }
                match self.class_decl().field(n) {
                    Some(f) if f.modifiers.is_static => {
                        let t = f.ty.clone();
                        e.kind = ExprKind::StaticField(self.class.clone(), n.clone());
                        return Ok(t);
                    }
                    Some(_) => return Err(self.err(line, format!("instance field `{n}` must be read as `this.{n}`"))),
                    None => return Err(self.err(line, format!("unknown variable `{n}`"))),
                }
            }
            ExprKind::Local(n) => return self.local(n).cloned().ok_or_else(|| self.err(line, format!("unknown variable `{n}`"))),
            ExprKind::StaticField(owner, f) => {
                let decl = self.classes.get(owner.as_str()).and_then(|c| c.field(f));
                return decl.map(|d| d.ty.clone()).ok_or_else(|| self.err(line, format!("unknown field `{owner}.{f}`")));
            }
            ExprKind::EnumConstant(t, _) => return Ok(Type::Named(t.clone())),
            ExprKind::Field(recv, f) => {
                if let ExprKind::Name(t) = &recv.kind {
                    if self.type_name_in_scope(t) {
                        let (t, f) = (t.clone(), f.clone());
                        return self.static_member(e, line, &t, &f);
                    }
                }
                let rt = self.expr(recv)?;
                let Type::Named(owner) = &rt else {
                    return Err(self.err(line, format!("`{rt}` has no field `{f}`")));
                };
                let decl = self
                    .classes
                    .get(owner)
                    .and_then(|c| c.field(f))
                    .filter(|d| !d.modifiers.is_static)
                    .ok_or_else(|| self.err(line, format!("`{owner}` has no field `{f}`")))?;
                if !self.visible(owner, decl.modifiers.private) {
                    return Err(self.err(line, format!("field `{owner}.{f}` is private")));
                }
                decl.ty.clone()
            }
            ExprKind::Call(recv, m, args) => {
                match recv {
                    Some(r) if matches!(&r.kind, ExprKind::Name(t) if self.type_name_in_scope(t)) => {
                        let ExprKind::Name(t) = &r.kind else { unreachable!() };
                        let owner = t.clone();
                        let (ret, m, args) = self.static_call(line, &owner, m, args)?;
                        resolved = Some(ExprKind::StaticCall(owner, m, args));
                        ret
                    }
                    Some(r) => {
                        let rt = self.expr(r)?;
                        let Type::Named(owner) = &rt else {
                            return Err(self.err(line, format!("`{rt}` has no method `{m}`")));
                        };
                        let decl = self
                            .classes
                            .get(owner)
                            .and_then(|c| c.method(m, args.len()))
                            .filter(|d| !d.modifiers.is_static)
                            .ok_or_else(|| self.err(line, format!("`{owner}` has no method `{m}` taking {} arguments", args.len())))?;
                        if !self.visible(owner, decl.modifiers.private) {
                            return Err(self.err(line, format!("method `{owner}.{m}` is private")));
                        }
                        let (params, ret) = (decl.params.clone(), decl.ret.clone());
                        self.args(line, m, &params, args)?;
                        return Ok(ret);
                    }
                    None => {
                        if let Some(decl) = self.class_decl().method(m, args.len()) {
                            let (params, ret, is_static) = (decl.params.clone(), decl.ret.clone(), decl.modifiers.is_static);
                            if !is_static && self.is_static {
                                return Err(self.err(line, format!("instance method `{m}` called from a static context")));
                            }
                            self.args(line, m, &params, args)?;
                            let (m, args) = (m.clone(), std::mem::take(args));
                            e.kind = if is_static {
                                ExprKind::StaticCall(self.class.clone(), m, args)
                            } else {
                                ExprKind::Call(Some(Box::new(Expr { kind: ExprKind::This, line })), m, args)
                            };
                            return Ok(ret);
                        }
                        if BUILTINS.contains(&m.as_str()) {
                            let args = std::mem::take(args);
                            e.kind = ExprKind::Builtin(m.clone(), args);
                            return self.expr(e);
                        }
                        return Err(self.err(line, format!("unknown method `{m}`")));
                    }
                }
            }
            ExprKind::StaticCall(owner, m, args) => {
                let owner = owner.clone();
                let (ret, m, args) = self.static_call(line, &owner, m, args)?;
                resolved = Some(ExprKind::StaticCall(owner, m, args));
                ret
            }
            ExprKind::Builtin(name, args) => return self.builtin(line, name, args),
            ExprKind::ToDouble(inner) => {
                self.expr(inner)?;
                Type::Double
            }
            ExprKind::Index(a, i) => {
                let at = self.expr(a)?;
                let it = self.expr(i)?;
                self.expect(line, &it, &Type::Int)?;
                match at {
                    Type::Array(elem) => *elem,
                    other => return Err(self.err(line, format!("cannot index `{other}`"))),
                }
            }
            ExprKind::Unary(op, inner) => {
                let t = self.expr(inner)?;
                match op {
                    UnOp::Not if t == Type::Bool => Type::Bool,
                    UnOp::Neg if t.is_numeric() => t,
                    _ => return Err(self.err(line, format!("bad operand `{t}` for unary operator"))),
                }
            }
            ExprKind::Binary(op, a, b) => {
                let (ta, tb) = (self.expr(a)?, self.expr(b)?);
                let numeric = || if ta == Type::Double || tb == Type::Double { Type::Double } else { Type::Int };
                match op {
                    BinOp::Or | BinOp::And if ta == Type::Bool && tb == Type::Bool => Type::Bool,
                    BinOp::Add if ta == Type::Str || tb == Type::Str => {
                        if ta == Type::Void || tb == Type::Void {
                            return Err(self.err(line, "cannot concatenate void"));
                        }
                        Type::Str
                    }
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem if ta.is_numeric() && tb.is_numeric() => numeric(),
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge if ta.is_numeric() && tb.is_numeric() => Type::Bool,
                    BinOp::Eq | BinOp::Ne if comparable(&ta, &tb) => Type::Bool,
                    _ => return Err(self.err(line, format!("bad operands `{ta}` and `{tb}` for {op:?}"))),
                }
            }
            ExprKind::New(c, args) => {
                let decl = self.classes.get(c.as_str()).ok_or_else(|| self.err(line, format!("unknown class `{c}`")))?;
                if decl.is_enum || decl.modifiers.is_abstract {
                    return Err(self.err(line, format!("`{c}` cannot be instantiated")));
                }
                let params = match decl.constructor(args.len()) {
                    Some(ctor) if !self.visible(c, ctor.modifiers.private) => {
                        return Err(self.err(line, format!("constructor of `{c}` is private")))
                    }
                    Some(ctor) => ctor.params.clone(),
                    None if decl.constructors.is_empty() && args.is_empty() => Vec::new(),
                    None => return Err(self.err(line, format!("`{c}` has no constructor taking {} arguments", args.len()))),
                };
                let c = c.clone();
                self.args(line, &c, &params, args)?;
                Type::Named(c)
            }
            ExprKind::NewArray(elem, items) => {
                self.check_type(line, elem)?;
                let elem = elem.clone();
                for it in items.iter_mut() {
                    let t = self.expr(it)?;
                    self.coerce(it, &t, &elem)?;
                }
                Type::Array(Box::new(elem))
            }
            ExprKind::NewArraySized(elem, n) => {
                self.check_type(line, elem)?;
                let elem = elem.clone();
                let t = self.expr(n)?;
                self.expect(line, &t, &Type::Int)?;
                Type::Array(Box::new(elem))
            }
            ExprKind::NewMap(k, v, entries) => {
                let (k, v) = (k.clone(), v.clone());
                self.check_type(line, &k)?;
                self.check_type(line, &v)?;
                for (ke, ve) in entries.iter_mut() {
                    let t = self.expr(ke)?;
                    self.coerce(ke, &t, &k)?;
                    let t = self.expr(ve)?;
                    self.coerce(ve, &t, &v)?;
                }
                Type::Map(Box::new(k), Box::new(v))
            }
        };
        if let Some(kind) = resolved {
            e.kind = kind;
        }
        Ok(ty)
    }

    fn static_member(&mut self, e: &mut Expr, line: usize, owner: &str, member: &str) -> Result<Type, CompileError> {
        if owner == "Double" {
            let d = match member {
                "NaN" => f64::NAN,
                "POSITIVE_INFINITY" => f64::INFINITY,
                "NEGATIVE_INFINITY" => f64::NEG_INFINITY,
                "MAX_VALUE" => f64::MAX,
                "MIN_VALUE" => f64::from_bits(1),
                _ => return Err(self.err(line, format!("unknown member `Double.{member}`"))),
            };
            e.kind = ExprKind::Double(d);
            return Ok(Type::Double);
        }
        let decl = &self.classes[owner];
        if decl.is_enum {
            if !decl.enum_constants.iter().any(|c| c == member) {
                return Err(self.err(line, format!("`{owner}` has no constant `{member}`")));
            }
            e.kind = ExprKind::EnumConstant(owner.to_string(), member.to_string());
            return Ok(Type::Named(owner.to_string()));
        }
        let f = decl
            .field(member)
            .filter(|f| f.modifiers.is_static)
            .ok_or_else(|| self.err(line, format!("`{owner}` has no static field `{member}`")))?;
        if !self.visible(owner, f.modifiers.private) {
            return Err(self.err(line, format!("field `{owner}.{member}` is private")));
        }
        let t = f.ty.clone();
        e.kind = ExprKind::StaticField(owner.to_string(), member.to_string());
        Ok(t)
    }

    fn static_call(&mut self, line: usize, owner: &str, m: &str, args: &mut Vec<Expr>) -> Result<(Type, String, Vec<Expr>), CompileError> {
        let decl = self
            .classes
            .get(owner)
            .and_then(|c| c.method(m, args.len()))
            .filter(|d| d.modifiers.is_static)
            .ok_or_else(|| self.err(line, format!("`{owner}` has no static method `{m}` taking {} arguments", args.len())))?;
        if !self.visible(owner, decl.modifiers.private) {
            return Err(self.err(line, format!("method `{owner}.{m}` is private")));
        }
        let (params, ret) = (decl.params.clone(), decl.ret.clone());
        self.args(line, m, &params, args)?;
        Ok((ret, m.to_string(), std::mem::take(args)))
    }

    fn builtin(&mut self, line: usize, name: &str, args: &mut [Expr]) -> Result<Type, CompileError> {
        let mut types = Vec::with_capacity(args.len());
        for a in args.iter_mut() {
            types.push(self.expr(a)?);
        }
        let arity = |n: usize| {
            if types.len() == n {
                Ok(())
            } else {
                Err(err(&self.file, line, format!("`{name}` takes {n} arguments, {} given", types.len())))
            }
        };
        let bad = |what: &str| Err(err(&self.file, line, format!("`{name}`: {what}")));
        match name {
            "len" => {
                arity(1)?;
                match &types[0] {
                    Type::Array(_) | Type::Str | Type::Map(..) => Ok(Type::Int),
                    t => bad(&format!("`{t}` has no length")),
                }
            }
            "append" => {
                arity(2)?;
                match &types[0] {
                    Type::Array(elem) if assignable(&types[1], elem) => {
                        self.coerce(&mut args[1], &types[1], elem)?;
                        Ok(types[0].clone())
                    }
                    t => bad(&format!("cannot append `{}` to `{t}`", types[1])),
                }
            }
            "put" => {
                arity(3)?;
                match &types[0] {
                    Type::Map(k, v) if assignable(&types[1], k) && assignable(&types[2], v) => {
                        self.coerce(&mut args[1], &types[1], k)?;
                        self.coerce(&mut args[2], &types[2], v)?;
                        Ok(types[0].clone())
                    }
                    t => bad(&format!("argument types do not match `{t}`")),
                }
            }
            "get" | "containsKey" => {
                arity(2)?;
                match &types[0] {
                    Type::Map(k, v) if assignable(&types[1], k) => {
                        self.coerce(&mut args[1], &types[1], k)?;
                        Ok(if name == "get" { (**v).clone() } else { Type::Bool })
                    }
                    t => bad(&format!("argument types do not match `{t}`")),
                }
            }
            "assertEquals" => {
                arity(2)?;
                if types.contains(&Type::Void) || !comparable(&types[0], &types[1]) {
                    return bad(&format!("cannot compare `{}` with `{}`", types[0], types[1]));
                }
                Ok(Type::Void)
            }
            "serialize" => {
                arity(1)?;
                if types[0] == Type::Void {
                    return bad("cannot serialize void");
                }
                Ok(Type::Void)
            }
            _ => bad("unknown builtin"),
        }
    }
}

fn check_type(classes: &BTreeMap<String, ClassDecl>, file: &str, line: usize, t: &Type) -> Result<(), CompileError> {
    match t {
        Type::Named(n) if !classes.contains_key(n) => Err(err(file, line, format!("unknown type `{n}`"))),
        Type::Array(e) => check_type(classes, file, line, e),
        Type::Map(k, v) => {
            check_type(classes, file, line, k)?;
            check_type(classes, file, line, v)
        }
        Type::Void | Type::Null => Err(err(file, line, format!("`{t}` is not a value type"))),
        _ => Ok(()),
    }
}

/// Checks every class and rewrites names into resolved forms.
pub fn check_program(classes: Vec<ClassDecl>) -> Result<Vec<ClassDecl>, CompileError> {
    let mut index = BTreeMap::new();
    for c in &classes {
        if matches!(c.name.as_str(), "int" | "double" | "boolean" | "String" | "Map" | "Double" | "void")
            || crate::lexer::is_keyword(&c.name)
        {
            return Err(err(&c.file, c.line, format!("`{}` is a reserved name", c.name)));
        }
        if index.insert(c.name.clone(), c.clone()).is_some() {
            return Err(err(&c.file, c.line, format!("duplicate class `{}`", c.name)));
        }
    }
    for c in &classes {
        check_signatures(&index, c)?;
    }
    let mut out = Vec::with_capacity(classes.len());
    for mut c in classes {
        let name = c.name.clone();
        let file = c.file.clone();
        let scope = |is_static: bool, in_ctor: bool, ret: Type| Scope {
            classes: &index,
            file: file.clone(),
            class: name.clone(),
            is_static,
            in_ctor,
            ret,
            locals: Vec::new(),
        };
        for f in &mut c.fields {
            if let Some(init) = &mut f.init {
                let mut s = scope(f.modifiers.is_static, false, Type::Void);
                let t = s.expr(init)?;
                s.coerce(init, &t, &f.ty)?;
            }
        }
        for (is_ctor, m) in c.constructors.iter_mut().map(|m| (true, m)).chain(c.methods.iter_mut().map(|m| (false, m))) {
            let mut s = scope(m.modifiers.is_static, is_ctor, m.ret.clone());
            for (p, t) in &m.params {
                s.declare(m.line, p, t.clone())?;
            }
            if let Some(body) = &mut m.body {
                s.block(body)?;
                if m.ret != Type::Void && !returns(body) {
                    return Err(err(&file, m.line, format!("method `{}` may finish without returning", m.name)));
                }
            }
        }
        out.push(c);
    }
    Ok(out)
}

fn check_signatures(index: &BTreeMap<String, ClassDecl>, c: &ClassDecl) -> Result<(), CompileError> {
    let f = c.file.as_str();
    let mut seen = BTreeSet::new();
    for k in &c.enum_constants {
        if !seen.insert(k.clone()) {
            return Err(err(f, c.line, format!("duplicate constant `{k}`")));
        }
    }
    let mut seen = BTreeSet::new();
    for fd in &c.fields {
        check_type(index, f, fd.line, &fd.ty)?;
        if !seen.insert(fd.name.clone()) {
            return Err(err(f, fd.line, format!("duplicate field `{}`", fd.name)));
        }
        if fd.modifiers.is_abstract || fd.modifiers.test || fd.modifiers.sets.is_some() {
            return Err(err(f, fd.line, "invalid modifier on a field"));
        }
    }
    let mut seen = BTreeSet::new();
    for m in c.constructors.iter().chain(&c.methods) {
        if m.ret != Type::Void {
            check_type(index, f, m.line, &m.ret)?;
        }
        let mut names = BTreeSet::new();
        for (p, t) in &m.params {
            check_type(index, f, m.line, t)?;
            if !names.insert(p) {
                return Err(err(f, m.line, format!("duplicate parameter `{p}`")));
            }
        }
        let is_ctor = m.name == c.name && m.ret == Type::Void && c.constructors.iter().any(|k| std::ptr::eq(k, m));
        if !seen.insert((is_ctor, m.name.clone(), m.params.len())) {
            return Err(err(f, m.line, format!("duplicate definition of `{}` with {} parameters", m.name, m.params.len())));
        }
        if m.modifiers.is_abstract && !c.modifiers.is_abstract {
            return Err(err(f, m.line, format!("abstract method `{}` in a concrete class", m.name)));
        }
        if m.modifiers.test && (m.modifiers.is_static || !m.params.is_empty() || m.ret != Type::Void) {
            return Err(err(f, m.line, format!("test method `{}` must be a void instance method without parameters", m.name)));
        }
        if let Some(sets) = &m.modifiers.sets {
            for (p, field) in sets {
                if !m.params.iter().any(|(q, _)| q == p) || c.field(field).is_none() {
                    return Err(err(f, m.line, format!("`@Sets({p} = {field})` does not name a parameter and a field")));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::compile;

    fn fails(src: &str, needle: &str) {
        let e = compile(&[("t.mj", src)]).unwrap_err();
        assert!(e.message.contains(needle), "{e}");
    }

    #[test]
    fn accepts_widening_and_null() {
        compile(&[(
            "t.mj",
            "class P { double x; P next; P(int x) { this.x = x; this.next = null; } double f() { double d = 1; return d + this.x; } }",
        )])
        .unwrap();
    }

    #[test]
    fn rejects_common_mistakes() {
        fails("class A { int f() { return 1.5; } }", "expected `int`");
        fails("class A { int x; void f() { x = 1; } }", "this.x");
        fails("class A { void f() { B b = null; } }", "unknown type `B`");
        fails("class A { private int x; } class B { int f(A a) { return a.x; } }", "private");
        fails("class A { final int x; void f() { this.x = 2; } }", "final");
        fails("class A { int f(int a) { if (a > 0) { return 1; } } }", "without returning");
        fails("class A { void f() { int a = 1; int a = 2; } }", "already defined");
        fails("class A { A(int x) {} void f() { A a = new A(); } }", "no constructor");
        fails("class A { static void f() { this.g(); } void g() {} }", "static context");
        fails("class A { void f() { 1 + 2; } }", "not a statement");
        fails("class A { void f() { int[] a = new double[]{1.0}; } }", "expected `int[]`");
        fails("class A { void f() { __unresolved(\"x\"); } }", "unknown method");
    }

    #[test]
    fn resolves_static_members() {
        let p = compile(&[(
            "t.mj",
            "enum E { X } class A { public static final A ZERO = new A(); static int count = 0; static A make() { count = count + 1; return ZERO; } E e() { return E.X; } double nan() { return Double.NaN; } }",
        )])
        .unwrap();
        assert!(p.class("A").is_some());
    }
}
