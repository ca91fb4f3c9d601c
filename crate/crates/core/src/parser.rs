//! Recursive-descent parser for game descriptions and level text.
//!
//! Errors fall into two categories. A `Keyword` error is reported only when the
//! whole token stream is structurally valid and some reserved-word position
//! (the game class or a block header) holds an unknown word. Every other
//! failure is a `Syntax` error. Only the first error is reported.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{
    BlockKind, CharMap, GameSpec, InteractionDef, LevelGrid, Opt, OptionValue, SpriteDef,
    TerminationDef,
};
use crate::lexer::{tokenize_with, Token, TokenKind, DEFAULT_TAB_WIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseCategory {
    Keyword,
    Syntax,
}

impl fmt::Display for ParseCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseCategory::Keyword => f.write_str("keyword"),
            ParseCategory::Syntax => f.write_str("syntax"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{category} error at {line}:{col}: {message}")]
pub struct ParseError {
    pub category: ParseCategory,
    pub message: String,
    pub line: usize,
    pub col: usize,
}

impl ParseError {
    pub fn new(category: ParseCategory, message: impl Into<String>, line: usize, col: usize) -> Self {
        ParseError { category, message: message.into(), line, col }
    }

    fn syntax(message: impl Into<String>, tok: &Token) -> Self {
        Self::new(ParseCategory::Syntax, message, tok.line, tok.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseOptions {
    pub tab_width: usize,
    pub known_game_classes: Vec<String>,
    /// Require the canonical block order and all four blocks.
    pub strict_block_order: bool,
    /// Reject bare words after an interaction method (`removeSprite goal`).
    /// When false they are kept in [`InteractionDef::bare_args`].
    pub strict_interaction_args: bool,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            tab_width: DEFAULT_TAB_WIDTH,
            known_game_classes: vec!["BasicGame".to_owned()],
            strict_block_order: false,
            strict_interaction_args: true,
        }
    }
}

pub fn parse_game(text: &str) -> Result<GameSpec, ParseError> {
    parse_game_with(text, &ParseOptions::default())
}

pub fn parse_game_with(text: &str, opts: &ParseOptions) -> Result<GameSpec, ParseError> {
    let tokens = tokenize_with(text, opts.tab_width)?;
    Parser { toks: &tokens, pos: 0, opts, keyword_error: None }.game()
}

/// Reads a level grid. Trailing blank lines are dropped and ragged rows are
/// right-padded with `background`; characters are not interpreted.
pub fn parse_level(text: &str, background: char) -> Result<LevelGrid, ParseError> {
    let mut rows: Vec<&str> = text
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    while rows.last().is_some_and(|r| r.trim().is_empty()) {
        rows.pop();
    }
    LevelGrid::from_rows(&rows, background)
        .ok_or_else(|| ParseError::new(ParseCategory::Syntax, "empty level", 1, 1))
}

struct Parser<'a> {
    toks: &'a [Token],
    pos: usize,
    opts: &'a ParseOptions,
    keyword_error: Option<ParseError>,
}

type PResult<T> = Result<T, ParseError>;

impl<'a> Parser<'a> {
    fn peek(&self) -> &'a Token {
        &self.toks[self.pos.min(self.toks.len() - 1)]
    }

    fn next(&mut self) -> &'a Token {
        let t = self.peek();
        if self.pos < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, kind: TokenKind, what: &str) -> PResult<&'a Token> {
        let t = self.next();
        if t.kind == kind {
            Ok(t)
        } else {
            Err(ParseError::syntax(format!("expected {what}, found {}", describe(t)), t))
        }
    }

    fn defer_keyword(&mut self, message: String, tok: &Token) {
        if self.keyword_error.is_none() {
            self.keyword_error = Some(ParseError::new(ParseCategory::Keyword, message, tok.line, tok.col));
        }
    }

    /// Tokens up to (not including) the next newline; consumes the newline.
    fn line(&mut self) -> PResult<&'a [Token]> {
        let start = self.pos;
        loop {
            let t = self.peek();
            match t.kind {
                TokenKind::Newline => {
                    let line = &self.toks[start..self.pos];
                    self.pos += 1;
                    return Ok(line);
                }
                TokenKind::Indent if self.pos == start => {
                    let at = &self.toks[(self.pos + 1).min(self.toks.len() - 1)];
                    return Err(ParseError::syntax("unexpected indentation", at));
                }
                TokenKind::Indent | TokenKind::Dedent | TokenKind::Eof => {
                    return Err(ParseError::syntax("unterminated line", t));
                }
                _ => self.pos += 1,
            }
        }
    }

    fn game(mut self) -> PResult<GameSpec> {
        let head = self.peek();
        if head.kind == TokenKind::Eof {
            return Err(ParseError::syntax("empty game description", head));
        }
        let line = self.line()?;
        let class_tok = match line {
            [t] if t.kind == TokenKind::Identifier => t,
            [t, rest @ ..] if t.kind == TokenKind::Identifier => {
                return Err(ParseError::syntax(
                    format!("unexpected {} after game class", describe(&rest[0])),
                    &rest[0],
                ))
            }
            [t, ..] => return Err(ParseError::syntax(format!("expected game class, found {}", describe(t)), t)),
            [] => unreachable!("blank lines emit no tokens"),
        };
        if !self.opts.known_game_classes.iter().any(|k| k == &class_tok.text) {
            self.defer_keyword(format!("unknown game class `{}`", class_tok.text), class_tok);
        }
        let mut spec = GameSpec::empty(&class_tok.text);

        self.expect(TokenKind::Indent, "an indented block after the game class")?;
        loop {
            match self.peek().kind {
                TokenKind::Dedent => {
                    self.next();
                    break;
                }
                _ => self.block(&mut spec)?,
            }
        }
        let tail = self.peek();
        if tail.kind != TokenKind::Eof {
            return Err(ParseError::syntax(format!("unexpected {} after the game description", describe(tail)), tail));
        }

        if self.opts.strict_block_order && spec.block_order != BlockKind::ALL {
            let tok = self.peek();
            return Err(ParseError::syntax(
                format!(
                    "blocks must appear as LevelMapping, SpriteSet, InteractionSet, TerminationSet (found {:?})",
                    spec.block_order
                ),
                tok,
            ));
        }
        match self.keyword_error {
            Some(err) => Err(err),
            None => Ok(spec),
        }
    }

    fn block(&mut self, spec: &mut GameSpec) -> PResult<()> {
        let line = self.line()?;
        let header = match line {
            [t] if t.kind == TokenKind::Identifier => t,
            [t, ..] => {
                return Err(ParseError::syntax(format!("expected a block header, found {}", describe_line(line)), t))
            }
            [] => unreachable!("blank lines emit no tokens"),
        };
        let Some(kind) = BlockKind::from_keyword(&header.text) else {
            self.defer_keyword(format!("unknown block `{}`", header.text), header);
            return self.skip_body();
        };
        if spec.has_block(kind) {
            return Err(ParseError::syntax(format!("duplicate {kind} block"), header));
        }
        spec.block_order.push(kind);
        let has_body = self.peek().kind == TokenKind::Indent;
        if has_body {
            self.next();
        }
        match kind {
            BlockKind::LevelMapping => {
                let mut maps: Vec<CharMap> = Vec::new();
                while has_body && !self.at_dedent() {
                    let (map, tok) = self.char_map()?;
                    if maps.iter().any(|m| m.ch == map.ch) {
                        return Err(ParseError::syntax(format!("character `{}` mapped twice", map.ch), tok));
                    }
                    maps.push(map);
                }
                spec.level_mapping = Some(maps);
            }
            BlockKind::SpriteSet => {
                let mut seen = HashSet::new();
                let mut defs = Vec::new();
                while has_body && !self.at_dedent() {
                    defs.push(self.sprite_def(&mut seen)?);
                }
                spec.sprite_set = Some(defs);
            }
            BlockKind::InteractionSet => {
                let mut defs = Vec::new();
                while has_body && !self.at_dedent() {
                    defs.push(self.interaction_def()?);
                }
                spec.interaction_set = Some(defs);
            }
            BlockKind::TerminationSet => {
                let mut defs = Vec::new();
                while has_body && !self.at_dedent() {
                    defs.push(self.termination_def()?);
                }
                spec.termination_set = Some(defs);
            }
        }
        if has_body {
            self.expect(TokenKind::Dedent, "end of block")?;
        }
        Ok(())
    }

    /// Checks for the end of the current indented body. An unexpected deeper
    /// indentation is left for the item parser to reject.
    fn at_dedent(&self) -> bool {
        matches!(self.peek().kind, TokenKind::Dedent | TokenKind::Eof)
    }

    fn skip_body(&mut self) -> PResult<()> {
        if self.peek().kind != TokenKind::Indent {
            return Ok(());
        }
        let mut depth = 0usize;
        loop {
            let t = self.next();
            match t.kind {
                TokenKind::Indent => depth += 1,
                TokenKind::Dedent => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(());
                    }
                }
                TokenKind::Eof => return Err(ParseError::syntax("unterminated block", t)),
                _ => {}
            }
        }
    }

    fn reject_nested(&self) -> PResult<()> {
        let t = self.peek();
        if t.kind == TokenKind::Indent {
            let line = &self.toks[(self.pos + 1).min(self.toks.len() - 1)];
            return Err(ParseError::syntax("unexpected indentation", line));
        }
        Ok(())
    }

    fn char_map(&mut self) -> PResult<(CharMap, &'a Token)> {
        let line = self.line()?;
        let first = &line[0];
        let ch = first
            .as_single_char()
            .ok_or_else(|| ParseError::syntax(format!("expected a single map character, found {}", describe(first)), first))?;
        match line.get(1) {
            Some(t) if t.kind == TokenKind::Gt => {}
            Some(t) => return Err(ParseError::syntax(format!("expected `>` after map character, found {}", describe(t)), t)),
            None => return Err(ParseError::syntax("expected `>` after map character", first)),
        }
        let targets = &line[2..];
        if targets.is_empty() {
            return Err(ParseError::syntax("character map needs at least one sprite type", &line[1]));
        }
        let mut stypes = Vec::new();
        for t in targets {
            if t.kind != TokenKind::Identifier {
                return Err(ParseError::syntax(format!("expected a sprite type, found {}", describe(t)), t));
            }
            stypes.push(t.text.clone());
        }
        self.reject_nested()?;
        Ok((CharMap { ch, stypes }, first))
    }

    fn sprite_def(&mut self, seen: &mut HashSet<String>) -> PResult<SpriteDef> {
        let line = self.line()?;
        let name = &line[0];
        if name.kind != TokenKind::Identifier {
            return Err(ParseError::syntax(format!("expected a sprite type, found {}", describe(name)), name));
        }
        match line.get(1) {
            Some(t) if t.kind == TokenKind::Gt => {}
            Some(t) => return Err(ParseError::syntax(format!("expected `>` after sprite type, found {}", describe(t)), t)),
            None => return Err(ParseError::syntax(format!("expected `>` after sprite type `{}`", name.text), name)),
        }
        if !seen.insert(name.text.clone()) {
            return Err(ParseError::syntax(format!("duplicate sprite type `{}`", name.text), name));
        }
        let mut rest = &line[2..];
        let mut sprite_class = None;
        if let [cls, tail @ ..] = rest {
            let is_option = tail.first().is_some_and(|t| t.kind == TokenKind::Equals);
            if cls.kind == TokenKind::Identifier && !is_option {
                sprite_class = Some(cls.text.clone());
                rest = tail;
            }
        }
        let (options, bare) = options(rest, false)?;
        debug_assert!(bare.is_empty());
        let mut def = SpriteDef { stype: name.text.clone(), sprite_class, options, children: Vec::new() };
        if self.peek().kind == TokenKind::Indent {
            self.next();
            while !self.at_dedent() {
                def.children.push(self.sprite_def(seen)?);
            }
            self.expect(TokenKind::Dedent, "end of nested sprites")?;
        }
        Ok(def)
    }

    fn interaction_def(&mut self) -> PResult<InteractionDef> {
        let line = self.line()?;
        let mut types = Vec::new();
        let mut i = 0;
        while i < line.len() && line[i].kind != TokenKind::Gt {
            let t = &line[i];
            if t.kind != TokenKind::Identifier {
                return Err(ParseError::syntax(format!("expected a sprite type, found {}", describe(t)), t));
            }
            types.push(t);
            i += 1;
        }
        if i == line.len() {
            let last = line.last().expect("non-empty line");
            return Err(ParseError::syntax("expected `>` in interaction", last));
        }
        if types.len() != 2 {
            return Err(ParseError::syntax(
                format!("an interaction names exactly two sprite types, found {}", types.len()),
                &line[i],
            ));
        }
        let method = line
            .get(i + 1)
            .ok_or_else(|| ParseError::syntax("expected an interaction method after `>`", &line[i]))?;
        if method.kind != TokenKind::Identifier {
            return Err(ParseError::syntax(format!("expected an interaction method, found {}", describe(method)), method));
        }
        let (options, bare_args) = options(&line[i + 2..], !self.opts.strict_interaction_args)?;
        self.reject_nested()?;
        Ok(InteractionDef {
            subject: types[0].text.clone(),
            object: types[1].text.clone(),
            method: method.text.clone(),
            options,
            bare_args,
        })
    }

    fn termination_def(&mut self) -> PResult<TerminationDef> {
        let line = self.line()?;
        let class = &line[0];
        if class.kind != TokenKind::Identifier {
            return Err(ParseError::syntax(format!("expected a termination class, found {}", describe(class)), class));
        }
        let (options, _) = options(&line[1..], false)?;
        self.reject_nested()?;
        Ok(TerminationDef { termination_class: class.text.clone(), options })
    }
}

/// Parses `key=value` groups. With `allow_bare`, lone identifiers are
/// collected separately instead of being rejected.
fn options(mut toks: &[Token], allow_bare: bool) -> PResult<(Vec<Opt>, Vec<String>)> {
    let mut opts: Vec<Opt> = Vec::new();
    let mut bare = Vec::new();
    while let Some(key) = toks.first() {
        match toks {
            [k, eq, v, rest @ ..]
                if k.kind == TokenKind::Identifier
                    && eq.kind == TokenKind::Equals
                    && matches!(v.kind, TokenKind::Identifier | TokenKind::Char | TokenKind::Literal) =>
            {
                if opts.iter().any(|o| o.key == k.text) {
                    return Err(ParseError::syntax(format!("duplicate option `{}`", k.text), k));
                }
                opts.push(Opt { key: k.text.clone(), value: OptionValue::new(v.text.clone()) });
                toks = rest;
            }
            [k, eq, ..] if k.kind == TokenKind::Identifier && eq.kind == TokenKind::Equals => {
                let at = toks.get(2).unwrap_or(eq);
                return Err(ParseError::syntax(format!("expected a value for option `{}`", k.text), at));
            }
            [k, rest @ ..] if allow_bare && k.kind == TokenKind::Identifier => {
                bare.push(k.text.clone());
                toks = rest;
            }
            _ => {
                return Err(ParseError::syntax(
                    format!("expected `key=value` option, found {}", describe(key)),
                    key,
                ))
            }
        }
    }
    Ok((opts, bare))
}

fn describe(t: &Token) -> String {
    match t.kind {
        TokenKind::Newline => "end of line".to_owned(),
        TokenKind::Indent => "indentation".to_owned(),
        TokenKind::Dedent => "dedent".to_owned(),
        TokenKind::Eof => "end of input".to_owned(),
        _ => format!("`{}`", t.text),
    }
}

fn describe_line(line: &[Token]) -> String {
    let words: Vec<&str> = line.iter().map(|t| t.text.as_str()).collect();
    format!("`{}`", words.join(" "))
}
