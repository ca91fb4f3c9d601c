//! Prompt assembly from the context blocks: instruction, level notation,
//! grammar (base plus an optional constraint) and an example game.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const INSTRUCTION: &str = include_str!("../assets/prompts/instruction.txt");
const LEVEL: &str = include_str!("../assets/prompts/level.txt");
const GRAMMAR_BASE: &str = include_str!("../assets/prompts/grammar_base.txt");
const C1: &str = include_str!("../assets/prompts/c1.txt");
const C2: &str = include_str!("../assets/prompts/c2.txt");
const EXAMPLE: &str = include_str!("../assets/prompts/example.txt");

const GAME_PLACEHOLDER: &str = "<Game>";

/// Asset text without the final newline of the file.
fn asset(raw: &'static str) -> &'static str {
    raw.strip_suffix('\n').unwrap_or(raw)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("a grammar constraint requires the grammar base block")]
    ConstraintWithoutBase,
    #[error("unknown preset `{0}` (expected p1..p7)")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    C1,
    C2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrammarRendering {
    /// Grammar listing exactly as published, including its `textgreater` artefacts.
    #[default]
    Faithful,
    /// `textgreater` replaced by `>`.
    Normalized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Instruction,
    Mechanics,
    Level,
    GrammarBase,
    C1,
    C2,
    Example,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptConfig {
    pub game_name: String,
    pub include_level: bool,
    pub include_grammar_base: bool,
    pub constraint: Option<Constraint>,
    pub include_example: bool,
    /// Free-form description of a self-defined game's mechanics.
    pub mechanics: Option<String>,
    pub grammar: GrammarRendering,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            game_name: "maze game".to_owned(),
            include_level: false,
            include_grammar_base: false,
            constraint: None,
            include_example: false,
            mechanics: None,
            grammar: GrammarRendering::Faithful,
        }
    }
}

impl PromptConfig {
    pub fn check(&self) -> Result<(), ConfigError> {
        if self.constraint.is_some() && !self.include_grammar_base {
            return Err(ConfigError::ConstraintWithoutBase);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PresetId {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
}

impl PresetId {
    pub const ALL: [PresetId; 7] =
        [PresetId::P1, PresetId::P2, PresetId::P3, PresetId::P4, PresetId::P5, PresetId::P6, PresetId::P7];

    pub fn number(self) -> usize {
        self as usize + 1
    }

    /// The preset whose block set equals `blocks`, ignoring any mechanics block.
    pub fn from_blocks(blocks: &[Block]) -> Option<PresetId> {
        let mut wanted: Vec<Block> = blocks.iter().copied().filter(|b| *b != Block::Mechanics).collect();
        wanted.sort();
        PresetId::ALL.into_iter().find(|p| {
            let mut have = build(&preset(*p, "x")).map(|t| t.blocks).unwrap_or_default();
            have.sort();
            have == wanted
        })
    }
}

impl fmt::Display for PresetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.number())
    }
}

impl FromStr for PresetId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = s
            .strip_prefix(['p', 'P'])
            .and_then(|d| d.parse::<usize>().ok())
            .filter(|n| (1..=7).contains(n))
            .ok_or_else(|| ConfigError::UnknownPreset(s.to_owned()))?;
        Ok(PresetId::ALL[n - 1])
    }
}

pub fn preset(id: PresetId, game_name: &str) -> PromptConfig {
    let n = id.number();
    PromptConfig {
        game_name: game_name.to_owned(),
        include_level: n >= 2,
        include_grammar_base: n >= 3,
        constraint: match id {
            PresetId::P4 | PresetId::P6 => Some(Constraint::C1),
            PresetId::P5 | PresetId::P7 => Some(Constraint::C2),
            _ => None,
        },
        include_example: n >= 6,
        ..PromptConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub blocks: Vec<Block>,
}

impl PromptText {
    pub fn preset(&self) -> Option<PresetId> {
        PresetId::from_blocks(&self.blocks)
    }
}

/// "maze game" reads as "a maze game"; names that already carry an article
/// or are capitalised proper names are used as given.
fn game_phrase(name: &str) -> String {
    let name = name.trim();
    let lower = name.to_lowercase();
    let has_article = ["a ", "an ", "the "].iter().any(|a| lower.starts_with(a));
    if has_article || name.is_empty() || name.starts_with(|c: char| c.is_uppercase()) {
        return name.to_owned();
    }
    let article = if lower.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
    format!("{article} {name}")
}

pub fn block_text(block: Block, config: &PromptConfig) -> String {
    match block {
        Block::Instruction => asset(INSTRUCTION).replace(GAME_PLACEHOLDER, &game_phrase(&config.game_name)),
        Block::Mechanics => config.mechanics.clone().unwrap_or_default(),
        Block::Level => asset(LEVEL).to_owned(),
        Block::GrammarBase => match config.grammar {
            GrammarRendering::Faithful => asset(GRAMMAR_BASE).to_owned(),
            GrammarRendering::Normalized => asset(GRAMMAR_BASE).replace(" textgreater ", " > "),
        },
        Block::C1 => asset(C1).to_owned(),
        Block::C2 => asset(C2).to_owned(),
        Block::Example => asset(EXAMPLE).to_owned(),
    }
}

pub fn build(config: &PromptConfig) -> Result<PromptText, ConfigError> {
    config.check()?;
    let mut blocks = vec![Block::Instruction];
    if config.mechanics.as_deref().is_some_and(|m| !m.trim().is_empty()) {
        blocks.push(Block::Mechanics);
    }
    if config.include_level {
        blocks.push(Block::Level);
    }
    if config.include_grammar_base {
        blocks.push(Block::GrammarBase);
    }
    match config.constraint {
        Some(Constraint::C1) => blocks.push(Block::C1),
        Some(Constraint::C2) => blocks.push(Block::C2),
        None => {}
    }
    if config.include_example {
        blocks.push(Block::Example);
    }
    let text = blocks.iter().map(|b| block_text(*b, config)).collect::<Vec<_>>().join("\n\n");
    Ok(PromptText { text, blocks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn p1_is_instruction_only() {
        let p = build(&preset(PresetId::P1, "maze game")).unwrap();
        assert_eq!(
            p.text,
            "Please create a VGDL representation for a maze game. Please create a game level as well."
        );
        assert_eq!(p.blocks, vec![Block::Instruction]);
    }

    #[test]
    fn p2_appends_level_notation() {
        let p1 = build(&preset(PresetId::P1, "maze game")).unwrap().text;
        let p2 = build(&preset(PresetId::P2, "maze game")).unwrap().text;
        assert_eq!(
            p2,
            format!("{p1}\n\nUse \"W\" to represent walls, \"A\" for the avatar, and \"G\" for the goal.")
        );
    }

    #[test]
    fn preset_rows() {
        let p4 = preset(PresetId::P4, "g");
        assert_eq!((p4.constraint, p4.include_example), (Some(Constraint::C1), false));
        let p6 = preset(PresetId::P6, "g");
        assert_eq!((p6.constraint, p6.include_example), (Some(Constraint::C1), true));
        let p1 = preset(PresetId::P1, "g");
        assert!(!p1.include_level && !p1.include_grammar_base && p1.constraint.is_none() && !p1.include_example);
        let p7 = build(&preset(PresetId::P7, "g")).unwrap();
        assert_eq!(p7.blocks, vec![Block::Instruction, Block::Level, Block::GrammarBase, Block::C2, Block::Example]);
        assert!(p7.text.contains("'<Sprite Not To Be Removed> <Sprite To Be Removed> > removeSprite'"));
    }

    #[test]
    fn constraint_needs_base() {
        let cfg = PromptConfig { constraint: Some(Constraint::C2), ..PromptConfig::default() };
        assert_eq!(build(&cfg), Err(ConfigError::ConstraintWithoutBase));
    }

    #[test]
    fn preset_inferred_back_from_blocks() {
        for id in PresetId::ALL {
            assert_eq!(build(&preset(id, "maze game")).unwrap().preset(), Some(id));
        }
    }

    #[test]
    fn preset_ids_parse() {
        assert_eq!("p7".parse::<PresetId>().unwrap(), PresetId::P7);
        assert_eq!("P1".parse::<PresetId>().unwrap(), PresetId::P1);
        assert!("p8".parse::<PresetId>().is_err());
    }

    #[test]
    fn mechanics_follow_instruction() {
        let cfg = PromptConfig {
            game_name: "Sokoban".into(),
            mechanics: Some("Push boxes onto targets.".into()),
            include_level: true,
            ..PromptConfig::default()
        };
        let p = build(&cfg).unwrap();
        assert_eq!(p.blocks, vec![Block::Instruction, Block::Mechanics, Block::Level]);
        assert!(p.text.starts_with("Please create a VGDL representation for Sokoban. Please create a game level as well.\n\nPush boxes"));
        assert_eq!(p.preset(), Some(PresetId::P2));
    }

    #[test]
    fn normalized_grammar_drops_textgreater() {
        let mut cfg = preset(PresetId::P3, "maze game");
        assert!(build(&cfg).unwrap().text.contains(" textgreater "));
        cfg.grammar = GrammarRendering::Normalized;
        let text = build(&cfg).unwrap().text;
        assert!(!text.contains("textgreater"));
        assert!(text.contains("<game> ::= game_class <eol> INDENT"));
    }

    #[test]
    fn config_from_toml() {
        let cfg: PromptConfig = toml::from_str("game_name = \"a maze\"\ninclude_level = true\n").unwrap();
        assert_eq!(build(&cfg).unwrap().preset(), Some(PresetId::P2));
    }
}
