//! Pulls candidate game descriptions and levels out of free-form model output.
//!
//! Responses wrap VGDL in prose and markdown code fences. Fenced blocks are
//! classified in order as a full rules block (first word is a known game
//! class), a rules fragment (first line is a bare block header such as
//! `SpriteSet`), or a level grid. Consecutive fragments are stitched into one
//! rules candidate under the default game class. Each rules candidate is
//! paired with the nearest level grid that follows it. Fence language tags
//! are ignored.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::BlockKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum ExtractionError {
    #[error("no game description found in response")]
    NoRules,
}

/// Where a level was found relative to its rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelPlacement {
    /// A separate artifact (its own fenced block or text run).
    #[default]
    Separate,
    /// Embedded at the tail of the rules block.
    Inline,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub rules_text: String,
    pub level_text: Option<String>,
    pub placement: LevelPlacement,
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub known_game_classes: Vec<String>,
    pub background: Vec<char>,
    /// Level characters accepted even when the rules do not map them.
    pub default_alphabet: Vec<char>,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            known_game_classes: vec!["BasicGame".to_owned()],
            background: vec![' ', '.'],
            default_alphabet: vec!['W', 'A', 'G'],
        }
    }
}

pub fn extract_candidates(response: &str) -> Result<Vec<Candidate>, ExtractionError> {
    extract_candidates_with(response, &ExtractOptions::default())
}

pub fn extract_candidates_with(response: &str, opts: &ExtractOptions) -> Result<Vec<Candidate>, ExtractionError> {
    let lines: Vec<&str> = response
        .split('\n')
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .collect();
    let candidates = match fenced_blocks(&lines) {
        Some(blocks) => from_blocks(&blocks, opts),
        None => from_raw_lines(&lines, opts),
    };
    if candidates.is_empty() {
        Err(ExtractionError::NoRules)
    } else {
        Ok(candidates)
    }
}

/// Contents of every fenced block, or `None` when the text has no fences.
fn fenced_blocks<'a>(lines: &[&'a str]) -> Option<Vec<Vec<&'a str>>> {
    let mut blocks = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    let mut seen_fence = false;
    for &line in lines {
        if line.trim_start().starts_with("```") {
            seen_fence = true;
            match current.take() {
                Some(block) => blocks.push(block),
                None => current = Some(Vec::new()),
            }
        } else if let Some(block) = current.as_mut() {
            block.push(line);
        }
    }
    if let Some(block) = current {
        blocks.push(block);
    }
    seen_fence.then_some(blocks)
}

enum BlockClass {
    Rules,
    Fragment,
    Level(String),
    Other,
}

fn first_word<'a>(lines: &[&'a str]) -> Option<&'a str> {
    lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| l.split_whitespace().next())
}

fn is_markdown_line(line: &str) -> bool {
    if line.starts_with(char::is_whitespace) {
        return false;
    }
    let hashes = line.chars().take_while(|&c| c == '#').count();
    if (1..=6).contains(&hashes) {
        let rest = &line[hashes..];
        if rest.starts_with(' ') && rest.trim_start().starts_with(char::is_alphabetic) {
            return true;
        }
    }
    line.starts_with("- ") || line.starts_with("* ") || line.starts_with("**")
}

fn is_rules_block(lines: &[&str], opts: &ExtractOptions) -> bool {
    first_word(lines).is_some_and(|w| opts.known_game_classes.iter().any(|k| k == w))
        && !lines.iter().any(|l| is_markdown_line(l))
}

fn is_fragment_block(lines: &[&str]) -> bool {
    lines
        .iter()
        .find(|l| !l.trim().is_empty())
        .is_some_and(|l| BlockKind::from_keyword(l.trim()).is_some())
        && !lines.iter().any(|l| is_markdown_line(l))
}

/// Characters mapped by `X > ...` lines of a rules text, read leniently.
fn mapped_chars(rules: &str) -> BTreeSet<char> {
    rules
        .lines()
        .filter_map(|l| {
            let mut words = l.split_whitespace();
            let first = words.next()?;
            let mut chars = first.chars();
            let c = chars.next()?;
            (chars.next().is_none() && words.next() == Some(">")).then_some(c)
        })
        .collect()
}

struct LevelAlphabet(BTreeSet<char>);

impl LevelAlphabet {
    fn new(rules: Option<&str>, opts: &ExtractOptions) -> Self {
        let mut set: BTreeSet<char> = rules.map(mapped_chars).unwrap_or_default();
        set.extend(opts.default_alphabet.iter().copied());
        set.extend(opts.background.iter().copied());
        set.extend('0'..='9');
        set.insert('#');
        LevelAlphabet(set)
    }

    fn admits(&self, line: &str) -> bool {
        line.chars().all(|c| self.0.contains(&c))
    }

    fn is_grid_line(&self, line: &str) -> bool {
        let t = line.trim_end();
        !t.trim().is_empty() && self.admits(t)
    }
}

fn is_level_label(line: &str) -> bool {
    let t = line.trim().trim_end_matches(':').trim_end();
    t.eq_ignore_ascii_case("level")
}

fn trim_blank_edges<'a>(lines: &'a [&'a str]) -> &'a [&'a str] {
    let start = lines.iter().position(|l| !l.trim().is_empty()).unwrap_or(lines.len());
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(start, |i| i + 1);
    &lines[start..end]
}

/// Level text if `lines` read as a grid, after dropping an optional
/// `Level` label line.
fn as_level(lines: &[&str], alphabet: &LevelAlphabet) -> Option<String> {
    let mut body = trim_blank_edges(lines);
    if body.len() > 1 && is_level_label(body[0]) {
        body = trim_blank_edges(&body[1..]);
    }
    if body.is_empty() || !body.iter().all(|l| l.trim().is_empty() || alphabet.admits(l.trim_end())) {
        return None;
    }
    Some(join(body))
}

fn join(lines: &[&str]) -> String {
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

/// Splits a grid trailing the rules text off as an inline level.
fn split_inline(lines: &[&str], alphabet: &LevelAlphabet) -> (String, Option<String>) {
    let body = trim_blank_edges(lines);
    let mut start = body.len();
    while start > 0 && alphabet.is_grid_line(body[start - 1]) {
        start -= 1;
    }
    if body.len() - start < 2 || start == 0 {
        return (join(body), None);
    }
    let grid = join(&body[start..]);
    let mut rules_end = start;
    while rules_end > 0 && body[rules_end - 1].trim().is_empty() {
        rules_end -= 1;
    }
    if rules_end > 1 && is_level_label(body[rules_end - 1]) {
        rules_end -= 1;
    }
    (join(trim_blank_edges(&body[..rules_end])), Some(grid))
}

fn stitch_fragments(fragments: &[Vec<&str>], opts: &ExtractOptions) -> String {
    let class = opts.known_game_classes.first().map_or("BasicGame", String::as_str);
    let mut out = format!("{class}\n");
    for frag in fragments {
        for line in trim_blank_edges(frag) {
            if line.trim().is_empty() {
                out.push('\n');
            } else {
                out.push_str("    ");
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

fn from_blocks(blocks: &[Vec<&str>], opts: &ExtractOptions) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = Vec::new();
    let mut fragments: Vec<Vec<&str>> = Vec::new();
    // Index into `out` of the newest candidate still waiting for a level.
    let mut open: Option<usize> = None;

    let flush = |fragments: &mut Vec<Vec<&str>>, out: &mut Vec<Candidate>, open: &mut Option<usize>| {
        if !fragments.is_empty() {
            let rules_text = stitch_fragments(fragments, opts);
            fragments.clear();
            out.push(Candidate { rules_text, level_text: None, placement: LevelPlacement::Separate });
            *open = Some(out.len() - 1);
        }
    };

    for block in blocks {
        let class = if is_rules_block(block, opts) {
            BlockClass::Rules
        } else if is_fragment_block(block) {
            BlockClass::Fragment
        } else {
            let rules = open.map(|i| out[i].rules_text.as_str());
            let mut alphabet = LevelAlphabet::new(rules, opts);
            // Pending fragments are not flushed yet; read their mappings too.
            for frag in &fragments {
                alphabet.0.extend(mapped_chars(&frag.join("\n")));
            }
            match as_level(block, &alphabet) {
                Some(level) => BlockClass::Level(level),
                None => BlockClass::Other,
            }
        };
        match class {
            BlockClass::Rules => {
                flush(&mut fragments, &mut out, &mut open);
                let alphabet = LevelAlphabet::new(Some(&block.join("\n")), opts);
                let (rules_text, inline) = split_inline(block, &alphabet);
                let placement = if inline.is_some() { LevelPlacement::Inline } else { LevelPlacement::Separate };
                out.push(Candidate { rules_text, level_text: inline.clone(), placement });
                open = inline.is_none().then_some(out.len() - 1);
            }
            BlockClass::Fragment => fragments.push(block.clone()),
            BlockClass::Level(level) => {
                flush(&mut fragments, &mut out, &mut open);
                if let Some(i) = open.take() {
                    out[i].level_text = Some(level);
                }
            }
            BlockClass::Other => {}
        }
    }
    flush(&mut fragments, &mut out, &mut open);
    out
}

fn indent_of(line: &str) -> usize {
    line.chars().take_while(|c| c.is_whitespace()).count()
}

fn from_raw_lines(lines: &[&str], opts: &ExtractOptions) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i];
        let is_header = line
            .split_whitespace()
            .next()
            .is_some_and(|w| opts.known_game_classes.iter().any(|k| k == w));
        if !is_header {
            i += 1;
            continue;
        }
        let base = indent_of(line);
        let mut end = i + 1;
        while end < lines.len() && (lines[end].trim().is_empty() || indent_of(lines[end]) > base) {
            end += 1;
        }
        let block = &lines[i..end];
        let alphabet = LevelAlphabet::new(Some(&block.join("\n")), opts);
        let (rules_text, inline) = split_inline(block, &alphabet);
        let mut cand = Candidate {
            rules_text,
            placement: if inline.is_some() { LevelPlacement::Inline } else { LevelPlacement::Separate },
            level_text: inline,
        };
        i = end;
        if cand.level_text.is_none() {
            while i < lines.len() && lines[i].trim().is_empty() {
                i += 1;
            }
            let start = i;
            while i < lines.len() && !lines[i].trim().is_empty() {
                i += 1;
            }
            match as_level(&lines[start..i], &alphabet) {
                Some(level) => cand.level_text = Some(level),
                None => i = start,
            }
        }
        out.push(cand);
    }
    out
}
