use crate::diagnostics::{Diagnostic, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Digits as written, so constants like `007` survive.
    Int(String),
    Str(String),
    Slash,
    Semi,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Comma,
    Colon,
    Arrow,
    Turnstile,
    Pipe,
    Eq,
    /// `<=`
    AccessArrow,
    /// `<-`
    From,
    /// `:=`
    Assign,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Int(n) => format!("integer `{n}`"),
            Tok::Str(s) => format!("string {s:?}"),
            other => format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Slash => "/",
            Tok::Semi => ";",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Arrow => "->",
            Tok::Turnstile => ":-",
            Tok::Pipe => "|",
            Tok::Eq => "=",
            Tok::AccessArrow => "<=",
            Tok::From => "<-",
            Tok::Assign => ":=",
            Tok::Ident(_) | Tok::Int(_) | Tok::Str(_) => "",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '\''
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: usize,
    col: usize,
}

impl Cursor<'_> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span_from(&self, start: (usize, usize, usize)) -> Span {
        Span {
            offset: start.0,
            len: self.pos - start.0,
            line: start.1,
            col: start.2,
        }
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut c = Cursor {
        src,
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    while let Some(ch) = c.peek() {
        let start = (c.pos, c.line, c.col);
        if ch.is_whitespace() {
            c.bump();
            continue;
        }
        if ch == '#' {
            while c.peek().is_some_and(|x| x != '\n') {
                c.bump();
            }
            continue;
        }
        let tok = if is_ident_start(ch) {
            while c.peek().is_some_and(is_ident_char) {
                c.bump();
            }
            Tok::Ident(src[start.0..c.pos].to_string())
        } else if ch.is_ascii_digit() {
            while c.peek().is_some_and(|x| x.is_ascii_digit()) {
                c.bump();
            }
            Tok::Int(src[start.0..c.pos].to_string())
        } else if ch == '"' {
            c.bump();
            Tok::Str(string_body(&mut c, start)?)
        } else {
            c.bump();
            let two = |c: &mut Cursor, next: char, yes: Tok, no: Option<Tok>| {
                if c.peek() == Some(next) {
                    c.bump();
                    Some(yes)
                } else {
                    no
                }
            };
            let t = match ch {
                '/' => Some(Tok::Slash),
                ';' => Some(Tok::Semi),
                '(' => Some(Tok::LParen),
                ')' => Some(Tok::RParen),
                '{' => Some(Tok::LBrace),
                '}' => Some(Tok::RBrace),
                ',' => Some(Tok::Comma),
                '|' => Some(Tok::Pipe),
                '=' => Some(Tok::Eq),
                '-' => two(&mut c, '>', Tok::Arrow, None),
                ':' => match c.peek() {
                    Some('-') => {
                        c.bump();
                        Some(Tok::Turnstile)
                    }
                    Some('=') => {
                        c.bump();
                        Some(Tok::Assign)
                    }
                    _ => Some(Tok::Colon),
                },
                '<' => match c.peek() {
                    Some('=') => two(&mut c, '=', Tok::AccessArrow, None),
                    _ => two(&mut c, '-', Tok::From, None),
                },
                _ => None,
            };
            match t {
                Some(t) => t,
                None => {
                    return Err(Diagnostic::error(
                        c.span_from(start),
                        format!("unexpected character `{}`", &src[start.0..c.pos]),
                    ))
                }
            }
        };
        out.push(Token {
            tok,
            span: c.span_from(start),
        });
    }
    Ok(out)
}

/// Reads a string literal after its opening quote. Escapes follow the
/// ones the printer emits.
fn string_body(c: &mut Cursor, start: (usize, usize, usize)) -> Result<String, Diagnostic> {
    let mut s = String::new();
    loop {
        match c.bump() {
            None | Some('\n') => return Err(Diagnostic::error(c.span_from(start), "unterminated string")),
            Some('"') => return Ok(s),
            Some('\\') => {
                let esc = c.bump();
                let ch = match esc {
                    Some('n') => '\n',
                    Some('t') => '\t',
                    Some('r') => '\r',
                    Some('0') => '\0',
                    Some(q @ ('"' | '\\' | '\'')) => q,
                    Some('u') if c.peek() == Some('{') => {
                        c.bump();
                        let mut hex = String::new();
                        while let Some(h) = c.peek().filter(|h| *h != '}') {
                            hex.push(h);
                            c.bump();
                        }
                        c.bump();
                        u32::from_str_radix(&hex, 16)
                            .ok()
                            .and_then(char::from_u32)
                            .ok_or_else(|| Diagnostic::error(c.span_from(start), "invalid unicode escape"))?
                    }
                    _ => return Err(Diagnostic::error(c.span_from(start), "invalid escape in string")),
                };
                s.push(ch);
            }
            Some(ch) => s.push(ch),
        }
    }
}
