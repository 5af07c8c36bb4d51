use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Double,
    Bool,
    Str,
    Named(String),
    Array(Box<Type>),
    Map(Box<Type>, Box<Type>),
    /// The type of the `null` literal.
    Null,
    Void,
}

impl Type {
    pub fn is_reference(&self) -> bool {
        matches!(self, Type::Str | Type::Named(_) | Type::Array(_) | Type::Map(..) | Type::Null)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Type::Int | Type::Double)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Double => f.write_str("double"),
            Type::Bool => f.write_str("boolean"),
            Type::Str => f.write_str("String"),
            Type::Named(n) => f.write_str(n),
            Type::Array(e) => write!(f, "{e}[]"),
            Type::Map(k, v) => write!(f, "Map<{k}, {v}>"),
            Type::Null => f.write_str("null"),
            Type::Void => f.write_str("void"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Not,
    Neg,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Double(f64),
    Bool(bool),
    Str(String),
    Null,
    This,
    /// A bare identifier; the checker turns it into a local, a field of `this` or a type.
    Name(String),
    Local(String),
    Field(Box<Expr>, String),
    StaticField(String, String),
    EnumConstant(String, String),
    /// `recv.m(args)`, or `m(args)` before resolution when the receiver is absent.
    Call(Option<Box<Expr>>, String, Vec<Expr>),
    StaticCall(String, String, Vec<Expr>),
    Builtin(String, Vec<Expr>),
    Index(Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    New(String, Vec<Expr>),
    NewArray(Type, Vec<Expr>),
    NewArraySized(Type, Box<Expr>),
    NewMap(Type, Type, Vec<(Expr, Expr)>),
    /// Implicit int to double widening inserted by the checker.
    ToDouble(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Block(Vec<Stmt>),
    If(Expr, Box<Stmt>, Option<Box<Stmt>>),
    While(Expr, Box<Stmt>),
    Return(Option<Expr>),
    Throw(Expr),
    Try(Vec<Stmt>, String, Vec<Stmt>),
    Local(Type, String, Expr),
    /// Target is a local, a field access or an index expression.
    Assign(Expr, Expr),
    Expr(Expr),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Modifiers {
    pub public: bool,
    pub private: bool,
    pub is_static: bool,
    pub is_final: bool,
    pub is_abstract: bool,
    pub deprecated: bool,
    pub test: bool,
    /// `@Sets(param = field, ...)`
    pub sets: Option<Vec<(String, String)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: Type,
    pub modifiers: Modifiers,
    pub init: Option<Expr>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodDecl {
    pub name: String,
    pub params: Vec<(String, Type)>,
    /// `Void` for void methods and constructors.
    pub ret: Type,
    pub modifiers: Modifiers,
    pub body: Option<Vec<Stmt>>,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassDecl {
    pub name: String,
    pub is_enum: bool,
    pub modifiers: Modifiers,
    pub fields: Vec<FieldDecl>,
    pub constructors: Vec<MethodDecl>,
    pub methods: Vec<MethodDecl>,
    pub enum_constants: Vec<String>,
    pub file: String,
    pub line: usize,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<&FieldDecl> {
        self.fields.iter().find(|f| f.name == name)
    }

    pub fn instance_fields(&self) -> impl Iterator<Item = &FieldDecl> {
        self.fields.iter().filter(|f| !f.modifiers.is_static)
    }

    pub fn method(&self, name: &str, arity: usize) -> Option<&MethodDecl> {
        self.methods.iter().find(|m| m.name == name && m.params.len() == arity)
    }

    pub fn constructor(&self, arity: usize) -> Option<&MethodDecl> {
        self.constructors.iter().find(|m| m.params.len() == arity)
    }
}
