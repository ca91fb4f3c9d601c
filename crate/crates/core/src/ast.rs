//! Syntax tree for VGDL game descriptions and level grids.
//!
//! The sprite-class ontology is left open here: any identifier is accepted as a
//! sprite class, interaction method or termination class. Restricting to the
//! executable subset is the job of [`crate::validator`] and [`crate::engine`].

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MOVING_AVATAR: &str = "MovingAvatar";
pub const IMMOVABLE: &str = "Immovable";
pub const SPRITE_COUNTER: &str = "SpriteCounter";
pub const STEP_BACK: &str = "stepBack";
pub const KILL_SPRITE: &str = "killSprite";
pub const REMOVE_SPRITE: &str = "removeSprite";
/// Pseudo sprite type standing for the edge of the screen.
pub const EOS: &str = "EOS";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AstError {
    #[error("undefined sprite type `{0}`")]
    UndefinedSpriteType(String),
}

/// The four top-level blocks of a game description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BlockKind {
    LevelMapping,
    SpriteSet,
    InteractionSet,
    TerminationSet,
}

impl BlockKind {
    /// Canonical grammar order.
    pub const ALL: [BlockKind; 4] = [
        BlockKind::LevelMapping,
        BlockKind::SpriteSet,
        BlockKind::InteractionSet,
        BlockKind::TerminationSet,
    ];

    pub fn keyword(self) -> &'static str {
        match self {
            BlockKind::LevelMapping => "LevelMapping",
            BlockKind::SpriteSet => "SpriteSet",
            BlockKind::InteractionSet => "InteractionSet",
            BlockKind::TerminationSet => "TerminationSet",
        }
    }

    pub fn from_keyword(word: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.keyword() == word)
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.keyword())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Integer,
    Float,
    Boolean,
    Identifier,
}

/// Raw option value with its inferred kind. Consumers coerce on use.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OptionValue {
    pub raw: String,
    pub kind: ValueKind,
}

impl OptionValue {
    pub fn new(raw: impl Into<String>) -> Self {
        let raw = raw.into();
        let kind = infer_kind(&raw);
        OptionValue { raw, kind }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self.kind {
            ValueKind::Integer => self.raw.parse().ok(),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self.kind {
            ValueKind::Integer | ValueKind::Float => self.raw.parse().ok(),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self.raw.as_str() {
            "True" | "true" => Some(true),
            "False" | "false" => Some(false),
            _ => None,
        }
    }

    pub fn as_identifier(&self) -> Option<&str> {
        match self.kind {
            ValueKind::Identifier => Some(&self.raw),
            _ => None,
        }
    }
}

fn infer_kind(raw: &str) -> ValueKind {
    if matches!(raw, "True" | "False" | "true" | "false") {
        ValueKind::Boolean
    } else if raw.parse::<i64>().is_ok() {
        ValueKind::Integer
    } else if raw.parse::<f64>().is_ok() && raw.chars().any(|c| c.is_ascii_digit()) {
        ValueKind::Float
    } else {
        ValueKind::Identifier
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Opt {
    pub key: String,
    pub value: OptionValue,
}

impl Opt {
    pub fn new(key: impl Into<String>, value: impl Into<String>) -> Self {
        Opt { key: key.into(), value: OptionValue::new(value) }
    }
}

fn find_opt<'a>(options: &'a [Opt], key: &str) -> Option<&'a OptionValue> {
    options.iter().find(|o| o.key == key).map(|o| &o.value)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpriteDef {
    pub stype: String,
    pub sprite_class: Option<String>,
    pub options: Vec<Opt>,
    pub children: Vec<SpriteDef>,
}

impl SpriteDef {
    pub fn new(stype: impl Into<String>, sprite_class: Option<&str>) -> Self {
        SpriteDef {
            stype: stype.into(),
            sprite_class: sprite_class.map(str::to_owned),
            options: Vec::new(),
            children: Vec::new(),
        }
    }

    pub fn option(&self, key: &str) -> Option<&OptionValue> {
        find_opt(&self.options, key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharMap {
    pub ch: char,
    pub stypes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionDef {
    pub subject: String,
    pub object: String,
    pub method: String,
    pub options: Vec<Opt>,
    /// Bare trailing words after the method. Only populated by the lenient
    /// parser mode; the strict grammar rejects them.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bare_args: Vec<String>,
}

impl InteractionDef {
    pub fn new(subject: &str, object: &str, method: &str) -> Self {
        InteractionDef {
            subject: subject.to_owned(),
            object: object.to_owned(),
            method: method.to_owned(),
            options: Vec::new(),
            bare_args: Vec::new(),
        }
    }

    /// The sprite type whose instance this interaction removes, if any:
    /// `killSprite` removes the first-position sprite, `removeSprite` the second.
    pub fn removal_target(&self) -> Option<&str> {
        match self.method.as_str() {
            KILL_SPRITE => Some(&self.subject),
            REMOVE_SPRITE => Some(&self.object),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TerminationDef {
    pub termination_class: String,
    pub options: Vec<Opt>,
}

impl TerminationDef {
    pub fn option(&self, key: &str) -> Option<&OptionValue> {
        find_opt(&self.options, key)
    }

    /// `win=True` present on this rule.
    pub fn is_win(&self) -> bool {
        self.option("win").and_then(OptionValue::as_bool) == Some(true)
    }

    /// Typed view of a well-formed SpriteCounter.
    pub fn sprite_counter(&self) -> Result<SpriteCounter, String> {
        if self.termination_class != SPRITE_COUNTER {
            return Err(format!("`{}` is not a SpriteCounter", self.termination_class));
        }
        let stype = self
            .option("stype")
            .ok_or("SpriteCounter is missing `stype`")?
            .as_identifier()
            .ok_or("SpriteCounter `stype` is not a sprite type")?
            .to_owned();
        let limit = self
            .option("limit")
            .ok_or("SpriteCounter is missing `limit`")?
            .as_i64()
            .filter(|l| *l >= 0)
            .ok_or("SpriteCounter `limit` is not a non-negative integer")?;
        let win = self
            .option("win")
            .ok_or("SpriteCounter is missing `win`")?
            .as_bool()
            .ok_or("SpriteCounter `win` is not a boolean")?;
        Ok(SpriteCounter { stype, limit: limit as usize, win })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpriteCounter {
    pub stype: String,
    pub limit: usize,
    pub win: bool,
}

/// A parsed game description. Blocks absent from the source are `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameSpec {
    pub game_class: String,
    pub sprite_set: Option<Vec<SpriteDef>>,
    pub level_mapping: Option<Vec<CharMap>>,
    pub interaction_set: Option<Vec<InteractionDef>>,
    pub termination_set: Option<Vec<TerminationDef>>,
    /// Blocks in the order they appeared in source.
    pub block_order: Vec<BlockKind>,
}

impl GameSpec {
    pub fn empty(game_class: &str) -> Self {
        GameSpec {
            game_class: game_class.to_owned(),
            sprite_set: None,
            level_mapping: None,
            interaction_set: None,
            termination_set: None,
            block_order: Vec::new(),
        }
    }

    /// Equality of content, ignoring the source order of blocks.
    pub fn structurally_eq(&self, other: &GameSpec) -> bool {
        self.game_class == other.game_class
            && self.sprite_set == other.sprite_set
            && self.level_mapping == other.level_mapping
            && self.interaction_set == other.interaction_set
            && self.termination_set == other.termination_set
    }

    pub fn has_block(&self, kind: BlockKind) -> bool {
        match kind {
            BlockKind::LevelMapping => self.level_mapping.is_some(),
            BlockKind::SpriteSet => self.sprite_set.is_some(),
            BlockKind::InteractionSet => self.interaction_set.is_some(),
            BlockKind::TerminationSet => self.termination_set.is_some(),
        }
    }

    pub fn sprites(&self) -> &[SpriteDef] {
        self.sprite_set.as_deref().unwrap_or(&[])
    }

    pub fn mappings(&self) -> &[CharMap] {
        self.level_mapping.as_deref().unwrap_or(&[])
    }

    pub fn interactions(&self) -> &[InteractionDef] {
        self.interaction_set.as_deref().unwrap_or(&[])
    }

    pub fn terminations(&self) -> &[TerminationDef] {
        self.termination_set.as_deref().unwrap_or(&[])
    }

    /// Pre-order walk of the sprite tree with each node's ancestor chain.
    pub fn walk_sprites(&self) -> Vec<(&SpriteDef, Vec<&SpriteDef>)> {
        fn go<'a>(
            defs: &'a [SpriteDef],
            path: &mut Vec<&'a SpriteDef>,
            out: &mut Vec<(&'a SpriteDef, Vec<&'a SpriteDef>)>,
        ) {
            for def in defs {
                out.push((def, path.clone()));
                path.push(def);
                go(&def.children, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        go(self.sprites(), &mut Vec::new(), &mut out);
        out
    }

    pub fn find_sprite(&self, stype: &str) -> Option<&SpriteDef> {
        self.walk_sprites().into_iter().map(|(d, _)| d).find(|d| d.stype == stype)
    }

    pub fn is_defined(&self, stype: &str) -> bool {
        self.find_sprite(stype).is_some()
    }

    /// Nearest sprite class on the path from `stype` up to the root.
    pub fn resolve_sprite_class(&self, stype: &str) -> Option<&str> {
        let (def, ancestors) = self.walk_sprites().into_iter().find(|(d, _)| d.stype == stype)?;
        std::iter::once(def)
            .chain(ancestors.into_iter().rev())
            .find_map(|d| d.sprite_class.as_deref())
    }

    /// `stype` plus every transitive child type.
    pub fn descendant_types(&self, stype: &str) -> Result<BTreeSet<String>, AstError> {
        fn collect(def: &SpriteDef, out: &mut BTreeSet<String>) {
            out.insert(def.stype.clone());
            for child in &def.children {
                collect(child, out);
            }
        }
        let def = self
            .find_sprite(stype)
            .ok_or_else(|| AstError::UndefinedSpriteType(stype.to_owned()))?;
        let mut out = BTreeSet::new();
        collect(def, &mut out);
        Ok(out)
    }

    /// Like [`descendant_types`](Self::descendant_types) but an undefined type
    /// covers only itself.
    pub fn covered_types(&self, stype: &str) -> BTreeSet<String> {
        self.descendant_types(stype)
            .unwrap_or_else(|_| BTreeSet::from([stype.to_owned()]))
    }

    /// Does a rule naming `rule_type` apply to a sprite of type `concrete`?
    pub fn covers(&self, rule_type: &str, concrete: &str) -> bool {
        self.covered_types(rule_type).contains(concrete)
    }

    pub fn char_map(&self, ch: char) -> Option<&CharMap> {
        self.mappings().iter().find(|m| m.ch == ch)
    }
}

/// A rectangular character grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelGrid {
    rows: Vec<Vec<char>>,
    width: usize,
}

impl LevelGrid {
    /// Builds a grid, right-padding ragged rows with `background`.
    /// Returns `None` when there are no rows or every row is empty.
    pub fn from_rows<S: AsRef<str>>(rows: &[S], background: char) -> Option<Self> {
        let mut rows: Vec<Vec<char>> = rows.iter().map(|r| r.as_ref().chars().collect()).collect();
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        if rows.is_empty() || width == 0 {
            return None;
        }
        for row in &mut rows {
            row.resize(width, background);
        }
        Some(LevelGrid { rows, width })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, x: usize, y: usize) -> Option<char> {
        self.rows.get(y).and_then(|r| r.get(x)).copied()
    }

    pub fn rows(&self) -> impl Iterator<Item = String> + '_ {
        self.rows.iter().map(|r| r.iter().collect())
    }

    /// Cells in row-major order as `(x, y, ch)`.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, char)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(y, row)| row.iter().enumerate().map(move |(x, &c)| (x, y, c)))
    }
}

impl fmt::Display for LevelGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.rows() {
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}
