//! Local variable naming.

use std::collections::BTreeSet;

/// Words that cannot be used as identifiers in the host language.
pub const RESERVED: &[&str] = &[
    "abstract", "boolean", "break", "catch", "class", "continue", "double", "else", "enum", "extends", "false", "final",
    "for", "if", "int", "new", "null", "private", "public", "return", "static", "this", "throw", "true", "try",
    "void", "while", "assertEquals", "len", "append", "put", "get", "containsKey", "var", "String", "Map",
];

/// Turns arbitrary text into a valid identifier.
pub fn sanitize(raw: &str) -> String {
    let mut out: String = raw.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect();
    if out.is_empty() || out.chars().all(|c| c == '_') {
        out = "value".into();
    }
    if out.starts_with(|c: char| c.is_ascii_digit()) {
        out.insert(0, '_');
    }
    if RESERVED.contains(&out.as_str()) {
        out.push_str("Value");
    }
    out
}

pub fn decapitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Base name for a value of the given type: `Point[]` becomes `points`, `Map<K, V>` `map`.
pub fn type_based_name(type_name: &str) -> String {
    if let Some(elem) = type_name.strip_suffix("[]") {
        let base = type_based_name(elem);
        return if base.ends_with('s') { format!("{base}List") } else { format!("{base}s") };
    }
    let simple = type_name.split('<').next().unwrap_or(type_name);
    decapitalize(simple.rsplit('.').next().unwrap_or(simple))
}

/// Synthetic parameter names such as `arg0` carry no information.
fn is_synthetic(name: &str) -> bool {
    name.strip_prefix("arg").is_some_and(|rest| !rest.is_empty() && rest.chars().all(|c| c.is_ascii_digit()))
}

/// Hands out unique identifiers within one scope.
#[derive(Debug, Clone, Default)]
pub struct NamingContext {
    used: BTreeSet<String>,
}

impl NamingContext {
    pub fn new() -> Self {
        NamingContext::default()
    }

    pub fn reserve(&mut self, name: &str) {
        self.used.insert(name.to_string());
    }

    pub fn is_used(&self, name: &str) -> bool {
        self.used.contains(name)
    }

    /// Picks the preferred name (parameter or field name) or a type-based one, appending 1, 2, 3
    /// on collision.
    pub fn fresh(&mut self, preferred: Option<&str>, type_name: &str) -> String {
        let base = match preferred.filter(|p| !p.is_empty() && !is_synthetic(p)) {
            Some(p) => sanitize(p),
            None => sanitize(&type_based_name(type_name)),
        };
        let mut candidate = base.clone();
        let mut n = 1;
        while self.used.contains(&candidate) {
            candidate = format!("{base}{n}");
            n += 1;
        }
        self.used.insert(candidate.clone());
        candidate
    }
}
