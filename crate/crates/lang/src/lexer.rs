use crate::CompileError;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Int(i64),
    Double(f64),
    Str(String),
    Punct(&'static str),
    Eof,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
}

const PUNCT: &[&str] = &[
    "&&", "||", "==", "!=", "<=", ">=", "{", "}", "(", ")", "[", "]", ";", ",", ".", "=", "<", ">", "+", "-", "*",
    "/", "%", "!", "@", ":",
];

const KEYWORDS: &[&str] = &[
    "class", "enum", "new", "this", "null", "true", "false", "if", "else", "while", "return", "throw", "try", "catch",
    "void", "public", "private", "static", "final", "abstract", "int", "double", "boolean",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

pub fn lex(file: &str, src: &str) -> Result<Vec<Token>, CompileError> {
    let err = |line: usize, message: String| CompileError { file: file.to_string(), line, message };
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut line = 1;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            i += 1;
        } else if c.is_whitespace() {
            i += 1;
        } else if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < chars.len() && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                if chars[i] == '\n' {
                    line += 1;
                }
                i += 1;
            }
            if i >= chars.len() {
                return Err(err(line, "unterminated comment".into()));
            }
            i += 2;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line });
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let mut is_double = false;
            if chars.get(i) == Some(&'.') && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                is_double = true;
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            if matches!(chars.get(i), Some('e' | 'E')) {
                let mut j = i + 1;
                if matches!(chars.get(j), Some('+' | '-')) {
                    j += 1;
                }
                if chars.get(j).is_some_and(|d| d.is_ascii_digit()) {
                    is_double = true;
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let tok = if is_double {
                Tok::Double(text.parse().map_err(|_| err(line, format!("bad number `{text}`")))?)
            } else {
                Tok::Int(text.parse().map_err(|_| err(line, format!("integer literal `{text}` out of range")))?)
            };
            out.push(Token { tok, line });
        } else if c == '"' {
            i += 1;
            let mut s = String::new();
            loop {
                let Some(&ch) = chars.get(i) else { return Err(err(line, "unterminated string".into())) };
                i += 1;
                match ch {
                    '"' => break,
                    '\n' => return Err(err(line, "newline in string literal".into())),
                    '\\' => {
                        let Some(&esc) = chars.get(i) else { return Err(err(line, "unterminated string".into())) };
                        i += 1;
                        match esc {
                            'n' => s.push('\n'),
                            't' => s.push('\t'),
                            'r' => s.push('\r'),
                            '"' => s.push('"'),
                            '\\' => s.push('\\'),
                            'u' => {
                                let hex: String = chars.get(i..i + 4).map(|h| h.iter().collect()).unwrap_or_default();
                                let code = u32::from_str_radix(&hex, 16).ok().and_then(char::from_u32);
                                s.push(code.ok_or_else(|| err(line, format!("bad unicode escape `\\u{hex}`")))?);
                                i += 4;
                            }
                            other => return Err(err(line, format!("unknown escape `\\{other}`"))),
                        }
                    }
                    ch => s.push(ch),
                }
            }
            out.push(Token { tok: Tok::Str(s), line });
        } else {
            let rest: String = chars[i..(i + 2).min(chars.len())].iter().collect();
            let p = PUNCT
                .iter()
                .find(|p| rest.starts_with(**p))
                .ok_or_else(|| err(line, format!("unexpected character `{c}`")))?;
            i += p.chars().count();
            out.push(Token { tok: Tok::Punct(p), line });
        }
    }
    out.push(Token { tok: Tok::Eof, line });
    Ok(out)
}
