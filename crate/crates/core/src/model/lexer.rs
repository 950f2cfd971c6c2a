use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum TokKind {
    Ident,
    Number,
    Str,
    Char,
    Punct,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub kind: TokKind,
    pub text: String,
    pub line: u32,
    pub col: u32,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
}

impl Token {
    pub fn is(&self, punct: &str) -> bool {
        self.kind == TokKind::Punct && self.text == punct
    }

    pub fn is_ident(&self, word: &str) -> bool {
        self.kind == TokKind::Ident && self.text == word
    }
}

// Longest first so that greedy matching works.
const PUNCTS: &[&str] = &[
    "<<=", ">>=", "...", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=",
    "-=", "*=", "/=", "%=", "&=", "|=", "^=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "~",
    "&", "|", "^", "?", ":", ";", ",", ".", "(", ")", "[", "]", "{", "}",
];

pub(crate) fn tokenize(file: &str, src: &str) -> Result<Vec<Token>, ModelError> {
    let bytes = src.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0usize;
    let mut line = 1u32;
    let mut line_start = 0usize;

    let err = |line: u32, col: u32, message: String| ModelError::Syntax {
        file: file.to_string(),
        line,
        col,
        message,
    };

    while i < bytes.len() {
        let c = bytes[i];
        let col = (i - line_start) as u32 + 1;
        if c == b'\n' {
            i += 1;
            line += 1;
            line_start = i;
            continue;
        }
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        if c == b'#' && src[line_start..i].trim().is_empty() {
            return Err(ModelError::Unsupported {
                file: file.to_string(),
                line,
                col,
                construct: "preprocessor directive".into(),
            });
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        if c == b'/' && bytes.get(i + 1) == Some(&b'*') {
            let (start_line, start_col) = (line, col);
            i += 2;
            loop {
                if i + 1 >= bytes.len() {
                    return Err(err(start_line, start_col, "unterminated comment".into()));
                }
                if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                    i += 2;
                    break;
                }
                if bytes[i] == b'\n' {
                    line += 1;
                    line_start = i + 1;
                }
                i += 1;
            }
            continue;
        }
        let start = i;
        let kind;
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            kind = TokKind::Ident;
        } else if c.is_ascii_digit() {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'.') {
                i += 1;
            }
            kind = TokKind::Number;
        } else if c == b'"' || c == b'\'' {
            let quote = c;
            i += 1;
            loop {
                match bytes.get(i) {
                    None | Some(b'\n') => {
                        return Err(err(line, col, "unterminated literal".into()));
                    }
                    Some(b'\\') => i += 2,
                    Some(&b) if b == quote => {
                        i += 1;
                        break;
                    }
                    Some(_) => i += 1,
                }
            }
            kind = if quote == b'"' {
                TokKind::Str
            } else {
                TokKind::Char
            };
        } else if let Some(p) = PUNCTS.iter().find(|p| src[i..].starts_with(**p)) {
            i += p.len();
            kind = TokKind::Punct;
        } else {
            let ch = src[i..].chars().next().unwrap_or('?');
            return Err(err(line, col, format!("unexpected character `{ch}`")));
        };
        toks.push(Token {
            kind,
            text: src[start..i].to_string(),
            line,
            col,
            start,
            end: i,
        });
    }
    toks.push(Token {
        kind: TokKind::Eof,
        text: String::new(),
        line,
        col: (bytes.len() - line_start) as u32 + 1,
        start: bytes.len(),
        end: bytes.len(),
    });
    Ok(toks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("a.c", "int x;\n  y += 2;").unwrap();
        let y = toks.iter().find(|t| t.text == "y").unwrap();
        assert_eq!((y.line, y.col), (2, 3));
        assert!(toks.iter().any(|t| t.is("+=")));
    }

    #[test]
    fn comments_and_strings() {
        let toks = tokenize("a.c", "/* a\n b */ s = \"x;y\"; // tail").unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        assert_eq!(
            kinds,
            vec![
                TokKind::Ident,
                TokKind::Punct,
                TokKind::Str,
                TokKind::Punct,
                TokKind::Eof
            ]
        );
        assert_eq!(toks[0].line, 2);
    }

    #[test]
    fn rejects_preprocessor() {
        let e = tokenize("a.c", "#include <x.h>\nint f(){}").unwrap_err();
        assert!(matches!(e, ModelError::Unsupported { line: 1, .. }));
    }
}
