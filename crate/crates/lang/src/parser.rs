use crate::ast::*;
use crate::lexer::{lex, Tok, Token};
use crate::CompileError;

pub fn parse_file(file: &str, src: &str) -> Result<Vec<ClassDecl>, CompileError> {
    let tokens = lex(file, src)?;
    let mut p = Parser { file, tokens, pos: 0 };
    let mut out = Vec::new();
    while !p.at_eof() {
        out.push(p.class()?);
    }
    Ok(out)
}

/// Parses a single expression, used by tests and tooling.
pub fn parse_expr(src: &str) -> Result<Expr, CompileError> {
    let tokens = lex("<expr>", src)?;
    let mut p = Parser { file: "<expr>", tokens, pos: 0 };
    let e = p.expr()?;
    if !p.at_eof() {
        return Err(p.error("trailing input after expression"));
    }
    Ok(e)
}

struct Parser<'a> {
    file: &'a str,
    tokens: Vec<Token>,
    pos: usize,
}

fn binop(p: &str) -> Option<(BinOp, u8)> {
    Some(match p {
        "||" => (BinOp::Or, 1),
        "&&" => (BinOp::And, 2),
        "==" => (BinOp::Eq, 3),
        "!=" => (BinOp::Ne, 3),
        "<" => (BinOp::Lt, 4),
        "<=" => (BinOp::Le, 4),
        ">" => (BinOp::Gt, 4),
        ">=" => (BinOp::Ge, 4),
        "+" => (BinOp::Add, 5),
        "-" => (BinOp::Sub, 5),
        "*" => (BinOp::Mul, 6),
        "/" => (BinOp::Div, 6),
        "%" => (BinOp::Rem, 6),
        _ => return None,
    })
}

impl<'a> Parser<'a> {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.tokens[(self.pos + n).min(self.tokens.len() - 1)].tok
    }

    fn line(&self) -> usize {
        self.tokens[self.pos].line
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn error(&self, message: impl Into<String>) -> CompileError {
        CompileError { file: self.file.to_string(), line: self.line(), message: message.into() }
    }

    fn advance(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        let hit = self.is_punct(p);
        if hit {
            self.advance();
        }
        hit
    }

    fn eat_word(&mut self, w: &str) -> bool {
        let hit = self.is_word(w);
        if hit {
            self.advance();
        }
        hit
    }

    fn expect(&mut self, p: &str) -> Result<(), CompileError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{p}`, found {}", self.describe())))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Int(i) => format!("`{i}`"),
            Tok::Double(d) => format!("`{d}`"),
            Tok::Str(_) => "string literal".into(),
            Tok::Punct(p) => format!("`{p}`"),
            Tok::Eof => "end of file".into(),
        }
    }

    fn ident(&mut self) -> Result<String, CompileError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.advance();
                Ok(s)
            }
            _ => Err(self.error(format!("expected identifier, found {}", self.describe()))),
        }
    }

    fn modifiers(&mut self) -> Result<Modifiers, CompileError> {
        let mut m = Modifiers::default();
        loop {
            if self.eat_punct("@") {
                match self.ident()?.as_str() {
                    "Deprecated" => m.deprecated = true,
                    "Test" => m.test = true,
                    "Sets" => {
                        self.expect("(")?;
                        let mut pairs = Vec::new();
                        while !self.eat_punct(")") {
                            if !pairs.is_empty() {
                                self.expect(",")?;
                            }
                            let p = self.ident()?;
                            self.expect("=")?;
                            pairs.push((p, self.ident()?));
                        }
                        m.sets = Some(pairs);
                    }
                    other => return Err(self.error(format!("unknown annotation `@{other}`"))),
                }
                continue;
            }
            let flag = match self.peek() {
                Tok::Ident(s) => match s.as_str() {
                    "public" => &mut m.public,
                    "private" => &mut m.private,
                    "static" => &mut m.is_static,
                    "final" => &mut m.is_final,
                    "abstract" => &mut m.is_abstract,
                    _ => break,
                },
                _ => break,
            };
            if *flag {
                return Err(self.error(format!("repeated modifier {}", self.describe())));
            }
            *flag = true;
            self.advance();
        }
        if m.public && m.private {
            return Err(self.error("a member cannot be both public and private"));
        }
        Ok(m)
    }

    fn class(&mut self) -> Result<ClassDecl, CompileError> {
        let line = self.line();
        let modifiers = self.modifiers()?;
        let is_enum = if self.eat_word("class") {
            false
        } else if self.eat_word("enum") {
            true
        } else {
            return Err(self.error(format!("expected `class` or `enum`, found {}", self.describe())));
        };
        let name = self.ident()?;
        let mut class = ClassDecl {
            name,
            is_enum,
            modifiers,
            fields: Vec::new(),
            constructors: Vec::new(),
            methods: Vec::new(),
            enum_constants: Vec::new(),
            file: self.file.to_string(),
            line,
        };
        self.expect("{")?;
        if is_enum {
            while let Tok::Ident(_) = self.peek() {
                class.enum_constants.push(self.ident()?);
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.eat_punct(";");
            self.expect("}")?;
            return Ok(class);
        }
        while !self.eat_punct("}") {
            if self.at_eof() {
                return Err(self.error(format!("unterminated class `{}`", class.name)));
            }
            self.member(&mut class)?;
        }
        Ok(class)
    }

    fn member(&mut self, class: &mut ClassDecl) -> Result<(), CompileError> {
        let line = self.line();
        let modifiers = self.modifiers()?;
        if self.is_word(&class.name) && matches!(self.peek_at(1), Tok::Punct("(")) {
            self.advance();
            let params = self.params()?;
            let body = Some(self.block()?);
            let name = class.name.clone();
            class.constructors.push(MethodDecl { name, params, ret: Type::Void, modifiers, body, line });
            return Ok(());
        }
        let ty = if self.eat_word("void") { Type::Void } else { self.ty()? };
        let name = self.ident()?;
        if self.is_punct("(") {
            let params = self.params()?;
            let body = if modifiers.is_abstract {
                self.expect(";")?;
                None
            } else {
                Some(self.block()?)
            };
            class.methods.push(MethodDecl { name, params, ret: ty, modifiers, body, line });
        } else {
            if ty == Type::Void {
                return Err(self.error("fields cannot be void"));
            }
            let init = if self.eat_punct("=") { Some(self.expr()?) } else { None };
            self.expect(";")?;
            class.fields.push(FieldDecl { name, ty, modifiers, init, line });
        }
        Ok(())
    }

    fn params(&mut self) -> Result<Vec<(String, Type)>, CompileError> {
        self.expect("(")?;
        let mut out = Vec::new();
        while !self.eat_punct(")") {
            if !out.is_empty() {
                self.expect(",")?;
            }
            let ty = self.ty()?;
            out.push((self.ident()?, ty));
        }
        Ok(out)
    }

    fn base_type(&mut self) -> Result<Type, CompileError> {
        let name = self.ident()?;
        Ok(match name.as_str() {
            "int" => Type::Int,
            "double" => Type::Double,
            "boolean" => Type::Bool,
            "String" => Type::Str,
            "Map" => {
                self.expect("<")?;
                let k = self.ty()?;
                self.expect(",")?;
                let v = self.ty()?;
                self.expect(">")?;
                Type::Map(Box::new(k), Box::new(v))
            }
            "void" => return Err(self.error("`void` is not a value type")),
            _ => Type::Named(name),
        })
    }

    fn ty(&mut self) -> Result<Type, CompileError> {
        let mut t = self.base_type()?;
        while self.is_punct("[") && matches!(self.peek_at(1), Tok::Punct("]")) {
            self.advance();
            self.advance();
            t = Type::Array(Box::new(t));
        }
        Ok(t)
    }

    fn block(&mut self) -> Result<Vec<Stmt>, CompileError> {
        self.expect("{")?;
        let mut out = Vec::new();
        while !self.eat_punct("}") {
            if self.at_eof() {
                return Err(self.error("unterminated block"));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    /// `T name =` at the current position.
    fn starts_local(&mut self) -> bool {
        let save = self.pos;
        let ok = matches!(self.peek(), Tok::Ident(_))
            && self.ty().is_ok()
            && matches!(self.peek(), Tok::Ident(_))
            && matches!(self.peek_at(1), Tok::Punct("="));
        self.pos = save;
        ok
    }

    fn stmt(&mut self) -> Result<Stmt, CompileError> {
        let line = self.line();
        let kind = if self.is_punct("{") {
            StmtKind::Block(self.block()?)
        } else if self.eat_word("if") {
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            let then = Box::new(self.stmt()?);
            let otherwise = if self.eat_word("else") { Some(Box::new(self.stmt()?)) } else { None };
            StmtKind::If(cond, then, otherwise)
        } else if self.eat_word("while") {
            self.expect("(")?;
            let cond = self.expr()?;
            self.expect(")")?;
            StmtKind::While(cond, Box::new(self.stmt()?))
        } else if self.eat_word("return") {
            let value = if self.is_punct(";") { None } else { Some(self.expr()?) };
            self.expect(";")?;
            StmtKind::Return(value)
        } else if self.eat_word("throw") {
            let value = self.expr()?;
            self.expect(";")?;
            StmtKind::Throw(value)
        } else if self.eat_word("try") {
            let body = self.block()?;
            if !self.eat_word("catch") {
                return Err(self.error("expected `catch`"));
            }
            self.expect("(")?;
            if self.base_type()? != Type::Str {
                return Err(self.error("only `String` can be caught"));
            }
            let var = self.ident()?;
            self.expect(")")?;
            StmtKind::Try(body, var, self.block()?)
        } else if self.starts_local() {
            let ty = self.ty()?;
            let name = self.ident()?;
            self.expect("=")?;
            let init = self.expr()?;
            self.expect(";")?;
            StmtKind::Local(ty, name, init)
        } else {
            let target = self.expr()?;
            let kind = if self.eat_punct("=") {
                if !matches!(target.kind, ExprKind::Name(_) | ExprKind::Field(..) | ExprKind::Index(..)) {
                    return Err(self.error("invalid assignment target"));
                }
                StmtKind::Assign(target, self.expr()?)
            } else {
                StmtKind::Expr(target)
            };
            self.expect(";")?;
            kind
        };
        Ok(Stmt { kind, line })
    }

    pub fn expr(&mut self) -> Result<Expr, CompileError> {
        self.binary(1)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, CompileError> {
        let mut lhs = self.unary()?;
        loop {
            let Tok::Punct(p) = self.peek() else { break };
            let Some((op, prec)) = binop(p) else { break };
            if prec < min_prec {
                break;
            }
            let line = self.line();
            self.advance();
            let rhs = self.binary(prec + 1)?;
            lhs = Expr { kind: ExprKind::Binary(op, Box::new(lhs), Box::new(rhs)), line };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, CompileError> {
        let line = self.line();
        let op = if self.eat_punct("!") {
            UnOp::Not
        } else if self.eat_punct("-") {
            UnOp::Neg
        } else {
            return self.postfix();
        };
        Ok(Expr { kind: ExprKind::Unary(op, Box::new(self.unary()?)), line })
    }

    fn args(&mut self) -> Result<Vec<Expr>, CompileError> {
        self.expect("(")?;
        let mut out = Vec::new();
        while !self.eat_punct(")") {
            if !out.is_empty() {
                self.expect(",")?;
            }
            out.push(self.expr()?);
        }
        Ok(out)
    }

    fn postfix(&mut self) -> Result<Expr, CompileError> {
        let mut e = self.primary()?;
        loop {
            let line = self.line();
            if self.eat_punct(".") {
                let name = self.ident()?;
                e = if self.is_punct("(") {
                    Expr { kind: ExprKind::Call(Some(Box::new(e)), name, self.args()?), line }
                } else {
                    Expr { kind: ExprKind::Field(Box::new(e), name), line }
                };
            } else if self.eat_punct("[") {
                let index = self.expr()?;
                self.expect("]")?;
                e = Expr { kind: ExprKind::Index(Box::new(e), Box::new(index)), line };
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, CompileError> {
        let line = self.line();
        let kind = match self.advance() {
            Tok::Int(i) => ExprKind::Int(i),
            Tok::Double(d) => ExprKind::Double(d),
            Tok::Str(s) => ExprKind::Str(s),
            Tok::Punct("(") => {
                let e = self.expr()?;
                self.expect(")")?;
                return Ok(e);
            }
            Tok::Ident(w) => match w.as_str() {
                "true" => ExprKind::Bool(true),
                "false" => ExprKind::Bool(false),
                "null" => ExprKind::Null,
                "this" => ExprKind::This,
                "new" => return self.new_expr(line),
                _ if self.is_punct("(") => ExprKind::Call(None, w, self.args()?),
                _ => ExprKind::Name(w),
            },
            _ => {
                self.pos -= 1;
                return Err(self.error(format!("expected expression, found {}", self.describe())));
            }
        };
        Ok(Expr { kind, line })
    }

    fn new_expr(&mut self, line: usize) -> Result<Expr, CompileError> {
        let base = self.base_type()?;
        if let Type::Map(k, v) = &base {
            let mut entries = Vec::new();
            if self.eat_punct("(") {
                self.expect(")")?;
            } else {
                self.expect("{")?;
                while !self.eat_punct("}") {
                    if !entries.is_empty() {
                        self.expect(",")?;
                    }
                    let key = self.expr()?;
                    self.expect(":")?;
                    entries.push((key, self.expr()?));
                }
            }
            return Ok(Expr { kind: ExprKind::NewMap((**k).clone(), (**v).clone(), entries), line });
        }
        if self.is_punct("[") {
            let kind = if matches!(self.peek_at(1), Tok::Punct("]")) {
                let mut elem = base;
                self.advance();
                self.advance();
                while self.is_punct("[") && matches!(self.peek_at(1), Tok::Punct("]")) {
                    self.advance();
                    self.advance();
                    elem = Type::Array(Box::new(elem));
                }
                self.expect("{")?;
                let mut items = Vec::new();
                while !self.eat_punct("}") {
                    if !items.is_empty() {
                        self.expect(",")?;
                    }
                    items.push(self.expr()?);
                }
                ExprKind::NewArray(elem, items)
            } else {
                self.advance();
                let size = self.expr()?;
                self.expect("]")?;
                let mut elem = base;
                while self.is_punct("[") && matches!(self.peek_at(1), Tok::Punct("]")) {
                    self.advance();
                    self.advance();
                    elem = Type::Array(Box::new(elem));
                }
                ExprKind::NewArraySized(elem, Box::new(size))
            };
            return Ok(Expr { kind, line });
        }
        match base {
            Type::Named(name) => Ok(Expr { kind: ExprKind::New(name, self.args()?), line }),
            other => Err(self.error(format!("cannot instantiate `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_and_postfix() {
        let e = parse_expr("a.b(1)[2] + 3 * -x == 4 || !y").unwrap();
        let ExprKind::Binary(BinOp::Or, lhs, _) = e.kind else { panic!() };
        let ExprKind::Binary(BinOp::Eq, sum, _) = lhs.kind else { panic!() };
        let ExprKind::Binary(BinOp::Add, idx, prod) = sum.kind else { panic!() };
        assert!(matches!(idx.kind, ExprKind::Index(..)));
        assert!(matches!(prod.kind, ExprKind::Binary(BinOp::Mul, _, _)));
        assert!(matches!(parse_expr("(-9223372036854775807 - 1)").unwrap().kind, ExprKind::Binary(BinOp::Sub, ..)));
    }

    #[test]
    fn allocation_forms() {
        let e = parse_expr("new int[][]{new int[]{1}, new int[3]}").unwrap();
        let ExprKind::NewArray(Type::Array(inner), items) = e.kind else { panic!() };
        assert_eq!(*inner, Type::Int);
        assert!(matches!(items[1].kind, ExprKind::NewArraySized(Type::Int, _)));
        let m = parse_expr("new Map<String, Point[]>{\"a\": null}").unwrap();
        assert!(matches!(m.kind, ExprKind::NewMap(Type::Str, Type::Array(_), ref e) if e.len() == 1));
        assert!(matches!(parse_expr("new Map<String, int>()").unwrap().kind, ExprKind::NewMap(_, _, ref e) if e.is_empty()));
    }

    #[test]
    fn class_members() {
        let src = r#"
            public class Habitat {
                private String coordinate;
                private double area;
                public static final Habitat ORIGIN = new Habitat("0, 0");
                public Habitat(String coordinate) { this.coordinate = coordinate; this.area = 1.0; }
                @Sets(amount = area) @Deprecated
                public void grow(int amount) { this.area = this.area + amount / 42.0; }
                abstract int size();
            }
            enum EyeColor { BROWN, BLUE, }
        "#;
        let classes = parse_file("zoo.mj", src).unwrap();
        assert_eq!(classes.len(), 2);
        let h = &classes[0];
        assert_eq!(h.fields.len(), 3);
        assert!(h.fields[2].modifiers.is_static && h.fields[2].init.is_some());
        assert_eq!(h.constructors[0].params, vec![("coordinate".to_string(), Type::Str)]);
        let grow = &h.methods[0];
        assert_eq!(grow.modifiers.sets, Some(vec![("amount".into(), "area".into())]));
        assert!(grow.modifiers.deprecated && h.methods[1].body.is_none());
        assert_eq!(classes[1].enum_constants, vec!["BROWN", "BLUE"]);
    }

    #[test]
    fn statements_disambiguate_locals() {
        let src = "class A { void f() { Map<String, int> m = new Map<String, int>(); x.y = 1; a[0] = 2; B[] b = null; g(); try { throw \"e\"; } catch (String e) { } } }";
        let c = &parse_file("a.mj", src).unwrap()[0];
        let body = c.methods[0].body.as_ref().unwrap();
        assert!(matches!(body[0].kind, StmtKind::Local(Type::Map(..), _, _)));
        assert!(matches!(body[1].kind, StmtKind::Assign(..)));
        assert!(matches!(body[2].kind, StmtKind::Assign(..)));
        assert!(matches!(body[3].kind, StmtKind::Local(Type::Array(_), _, _)));
        assert!(matches!(body[5].kind, StmtKind::Try(..)));
    }

    #[test]
    fn errors_carry_lines() {
        let err = parse_file("bad.mj", "class A {\n void f() {\n 1 + ; } }").unwrap_err();
        assert_eq!((err.file.as_str(), err.line), ("bad.mj", 3));
    }
}
