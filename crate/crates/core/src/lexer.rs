//! Indentation-sensitive tokenizer for VGDL game descriptions.
//!
//! Layout is tracked with a stack of indentation columns. A deeper line pushes
//! a column and emits `Indent`; a shallower line pops until it meets an equal
//! column, emitting one `Dedent` per pop. `#` starts a comment that runs to
//! the end of the line, and lines that are blank after comment removal produce
//! no tokens at all.

use serde::{Deserialize, Serialize};

use crate::parser::{ParseCategory, ParseError};

pub const DEFAULT_TAB_WIDTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    /// A single non-identifier character such as `.` or `0`.
    Char,
    Gt,
    Equals,
    Literal,
    Newline,
    Indent,
    Dedent,
    Eof,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub line: usize,
    pub col: usize,
}

impl Token {
    fn new(kind: TokenKind, text: impl Into<String>, line: usize, col: usize) -> Self {
        Token { kind, text: text.into(), line, col }
    }

    /// The single character of a one-character word, regardless of whether it
    /// lexed as an identifier or a bare char.
    pub fn as_single_char(&self) -> Option<char> {
        if !matches!(self.kind, TokenKind::Identifier | TokenKind::Char) {
            return None;
        }
        let mut chars = self.text.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => Some(c),
            _ => None,
        }
    }
}

pub fn is_identifier(word: &str) -> bool {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => chars.all(|c| c.is_alphanumeric() || c == '_'),
        _ => false,
    }
}

fn classify(word: &str) -> TokenKind {
    if is_identifier(word) {
        TokenKind::Identifier
    } else if word.chars().count() == 1 {
        TokenKind::Char
    } else {
        TokenKind::Literal
    }
}

/// Width in columns of the leading whitespace of `line`.
fn indentation(line: &str, tab_width: usize) -> (usize, usize) {
    let mut cols = 0;
    let mut bytes = 0;
    for c in line.chars() {
        match c {
            ' ' => cols += 1,
            '\t' => cols += tab_width,
            _ => break,
        }
        bytes += c.len_utf8();
    }
    (cols, bytes)
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => &line[..i],
        None => line,
    }
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, ParseError> {
    tokenize_with(text, DEFAULT_TAB_WIDTH)
}

pub fn tokenize_with(text: &str, tab_width: usize) -> Result<Vec<Token>, ParseError> {
    let mut tokens = Vec::new();
    let mut stack = vec![0usize];
    let mut last_line = 0;

    for (idx, raw) in text.split('\n').enumerate() {
        let line_no = idx + 1;
        last_line = line_no;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let content = strip_comment(line);
        if content.trim().is_empty() {
            continue;
        }
        let (indent, offset) = indentation(content, tab_width);
        let top = *stack.last().expect("stack never empty");
        if indent > top {
            stack.push(indent);
            tokens.push(Token::new(TokenKind::Indent, "", line_no, 1));
        } else if indent < top {
            while *stack.last().expect("stack never empty") > indent {
                stack.pop();
                tokens.push(Token::new(TokenKind::Dedent, "", line_no, 1));
            }
            if *stack.last().expect("stack never empty") != indent {
                return Err(ParseError::new(
                    ParseCategory::Syntax,
                    format!("inconsistent dedent to column {indent}"),
                    line_no,
                    indent + 1,
                ));
            }
        }
        lex_line(content, offset, line_no, &mut tokens);
        tokens.push(Token::new(TokenKind::Newline, "", line_no, content.chars().count() + 1));
    }

    let eof_line = last_line.max(1);
    for _ in 1..stack.len() {
        tokens.push(Token::new(TokenKind::Dedent, "", eof_line, 1));
    }
    tokens.push(Token::new(TokenKind::Eof, "", eof_line, 1));
    Ok(tokens)
}

fn lex_line(content: &str, start: usize, line_no: usize, out: &mut Vec<Token>) {
    let col_of = |byte: usize| content[..byte].chars().count() + 1;
    let mut iter = content[start..].char_indices().map(|(i, c)| (i + start, c)).peekable();
    while let Some((i, c)) = iter.next() {
        match c {
            c if c.is_whitespace() => {}
            '>' => out.push(Token::new(TokenKind::Gt, ">", line_no, col_of(i))),
            '=' => out.push(Token::new(TokenKind::Equals, "=", line_no, col_of(i))),
            _ => {
                let mut end = i + c.len_utf8();
                while let Some(&(j, d)) = iter.peek() {
                    if d.is_whitespace() || d == '>' || d == '=' {
                        break;
                    }
                    end = j + d.len_utf8();
                    iter.next();
                }
                let word = &content[i..end];
                out.push(Token::new(classify(word), word, line_no, col_of(i)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TokenKind::*;

    fn kinds(text: &str) -> Vec<TokenKind> {
        tokenize(text).unwrap().into_iter().map(|t| t.kind).collect()
    }

    #[test]
    fn minimal_two_line_block() {
        let toks = tokenize("BasicGame\n    SpriteSet\n").unwrap();
        let got: Vec<_> = toks.iter().map(|t| (t.kind, t.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (Identifier, "BasicGame"),
                (Newline, ""),
                (Indent, ""),
                (Identifier, "SpriteSet"),
                (Newline, ""),
                (Dedent, ""),
                (Eof, ""),
            ]
        );
    }

    #[test]
    fn comments_are_dropped() {
        let toks = tokenize("a > b # comment\n").unwrap();
        let got: Vec<_> = toks.iter().map(|t| (t.kind, t.text.as_str())).collect();
        assert_eq!(
            got,
            vec![(Identifier, "a"), (Gt, ">"), (Identifier, "b"), (Newline, ""), (Eof, "")]
        );
    }

    #[test]
    fn dedent_to_unknown_column_is_syntax_error() {
        let err = tokenize("a\n    b\n   c\n").unwrap_err();
        assert_eq!(err.category, ParseCategory::Syntax);
        assert_eq!(err.line, 3);
    }

    #[test]
    fn blank_and_comment_lines_emit_nothing() {
        assert_eq!(kinds("\n   \n# only a comment\n    # indented comment\n"), vec![Eof]);
    }

    #[test]
    fn tabs_count_as_configured_width() {
        let text = "a\n\tb\n    c\n";
        assert_eq!(kinds(text), vec![Identifier, Newline, Indent, Identifier, Newline, Identifier, Newline, Dedent, Eof]);
        let wide = tokenize_with(text, 8).unwrap_err();
        assert_eq!(wide.line, 3);
    }

    #[test]
    fn crlf_is_stripped() {
        assert_eq!(kinds("a > b\r\n"), vec![Identifier, Gt, Identifier, Newline, Eof]);
    }

    #[test]
    fn options_and_literals() {
        let toks = tokenize("bomb > orientation=DOWN speed=0.5 scoreChange=-1 . 0\n").unwrap();
        let got: Vec<_> = toks.iter().map(|t| (t.kind, t.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (Identifier, "bomb"),
                (Gt, ">"),
                (Identifier, "orientation"),
                (Equals, "="),
                (Identifier, "DOWN"),
                (Identifier, "speed"),
                (Equals, "="),
                (Literal, "0.5"),
                (Identifier, "scoreChange"),
                (Equals, "="),
                (Literal, "-1"),
                (Char, "."),
                (Char, "0"),
                (Newline, ""),
                (Eof, ""),
            ]
        );
        assert_eq!(toks[7].col, 31);
    }

    #[test]
    fn positions_are_one_based() {
        let toks = tokenize("x\n  y > z\n").unwrap();
        let y = toks.iter().find(|t| t.text == "y").unwrap();
        assert_eq!((y.line, y.col), (2, 3));
    }
}
