use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Ident(String),
    /// Upper-cased reserved word.
    Keyword(&'static str),
    Number(f64),
    Str(String),
    LParen,
    RParen,
    Comma,
    Dot,
    Star,
    Plus,
    Minus,
    Slash,
    Eq,
    NotEq,
    Lt,
    LtEq,
    Gt,
    GtEq,
    Semicolon,
    Eof,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

pub const KEYWORDS: &[&str] = &[
    "SELECT", "FROM", "WHERE", "JOIN", "INNER", "ON", "AND", "OR", "NOT", "IN", "AS", "CASE",
    "WHEN", "THEN", "ELSE", "END", "TRUE", "FALSE", "UNION", "ALL", "PREDICT", "NULL", "IS",
    // recognized only to be rejected
    "LEFT", "RIGHT", "FULL", "OUTER", "CROSS", "GROUP", "BY", "ORDER", "HAVING", "LIMIT",
    "DISTINCT", "WITH", "EXISTS", "BETWEEN", "LIKE", "OFFSET", "INTERSECT", "EXCEPT",
];

pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let err = |line, column, message: String| Error::Syntax {
        line,
        column,
        message,
    };
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let mut push = |tok: Tok, len: usize, i: &mut usize, col: &mut usize| {
            out.push(Token {
                tok,
                line: tl,
                column: tc,
            });
            *i += len;
            *col += len;
        };
        match c {
            '\n' => {
                i += 1;
                line += 1;
                col = 1;
            }
            c if c.is_whitespace() => {
                i += 1;
                col += 1;
            }
            '-' if chars.get(i + 1) == Some(&'-') => {
                while i < chars.len() && chars[i] != '\n' {
                    i += 1;
                }
            }
            '(' => push(Tok::LParen, 1, &mut i, &mut col),
            ')' => push(Tok::RParen, 1, &mut i, &mut col),
            ',' => push(Tok::Comma, 1, &mut i, &mut col),
            '.' if !chars.get(i + 1).is_some_and(char::is_ascii_digit) => push(Tok::Dot, 1, &mut i, &mut col),
            '*' => push(Tok::Star, 1, &mut i, &mut col),
            '+' => push(Tok::Plus, 1, &mut i, &mut col),
            '-' => push(Tok::Minus, 1, &mut i, &mut col),
            '/' => push(Tok::Slash, 1, &mut i, &mut col),
            ';' => push(Tok::Semicolon, 1, &mut i, &mut col),
            '=' => push(Tok::Eq, 1, &mut i, &mut col),
            '!' if chars.get(i + 1) == Some(&'=') => push(Tok::NotEq, 2, &mut i, &mut col),
            '<' => match chars.get(i + 1) {
                Some('=') => push(Tok::LtEq, 2, &mut i, &mut col),
                Some('>') => push(Tok::NotEq, 2, &mut i, &mut col),
                _ => push(Tok::Lt, 1, &mut i, &mut col),
            },
            '>' => match chars.get(i + 1) {
                Some('=') => push(Tok::GtEq, 2, &mut i, &mut col),
                _ => push(Tok::Gt, 1, &mut i, &mut col),
            },
            '\'' => {
                let mut s = String::new();
                let mut j = i + 1;
                loop {
                    match chars.get(j) {
                        None => return Err(err(tl, tc, "unterminated string literal".into())),
                        Some('\'') if chars.get(j + 1) == Some(&'\'') => {
                            s.push('\'');
                            j += 2;
                        }
                        Some('\'') => break,
                        Some('\n') => return Err(err(tl, tc, "newline in string literal".into())),
                        Some(ch) => {
                            s.push(*ch);
                            j += 1;
                        }
                    }
                }
                let len = j + 1 - i;
                push(Tok::Str(s), len, &mut i, &mut col);
            }
            '"' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j] != '"' && chars[j] != '\n' {
                    j += 1;
                }
                if chars.get(j) != Some(&'"') || j == i + 1 {
                    return Err(err(tl, tc, "malformed quoted identifier".into()));
                }
                let name: String = chars[i + 1..j].iter().collect();
                push(Tok::Ident(name), j + 1 - i, &mut i, &mut col);
            }
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                    j += 1;
                }
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| err(tl, tc, format!("malformed number `{text}`")))?;
                if !v.is_finite() {
                    return Err(err(tl, tc, format!("number `{text}` is out of range")));
                }
                if chars.get(j).is_some_and(|c| c.is_alphanumeric() || *c == '_') {
                    return Err(err(tl, tc, format!("malformed number `{text}{}`", chars[j])));
                }
                push(Tok::Number(v), j - i, &mut i, &mut col);
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let word: String = chars[i..j].iter().collect();
                let upper = word.to_ascii_uppercase();
                let tok = match KEYWORDS.iter().find(|k| **k == upper) {
                    Some(k) => Tok::Keyword(k),
                    None => Tok::Ident(word),
                };
                push(tok, j - i, &mut i, &mut col);
            }
            other => return Err(err(tl, tc, format!("unexpected character `{other}`"))),
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keywords_are_case_insensitive() {
        let t = tokenize("select Age from T").unwrap();
        assert_eq!(t[0].tok, Tok::Keyword("SELECT"));
        assert_eq!(t[1].tok, Tok::Ident("Age".into()));
        assert_eq!(t[2].tok, Tok::Keyword("FROM"));
    }

    #[test]
    fn numbers_and_positions() {
        let t = tokenize("x <= 1.5e-3\n  AND y = 'a''b'").unwrap();
        assert_eq!(t[2].tok, Tok::Number(1.5e-3));
        assert_eq!((t[3].line, t[3].column), (2, 3));
        assert_eq!(t[6].tok, Tok::Str("a'b".into()));
    }

    #[test]
    fn bad_character_reports_position() {
        match tokenize("SELECT a\nFROM t WHERE a # 1") {
            Err(Error::Syntax { line, column, .. }) => assert_eq!((line, column), (2, 16)),
            other => panic!("unexpected {other:?}"),
        }
    }
}
