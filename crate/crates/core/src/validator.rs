//! Rule-based validation of generated games: parsable, logical and mappable
//! checks, the error taxonomy, and the G/R/L/W outcome.
//!
//! The logical checks are written for the avatar / wall / goal role pattern of
//! a maze. Role types are resolved from the spec (see [`resolve_roles`]) so
//! that generated variants such as `player` or `winGoal` are recognised.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ast::{BlockKind, GameSpec, LevelGrid, MOVING_AVATAR, STEP_BACK};
use crate::extract::{Candidate, LevelPlacement};
use crate::parser::{parse_game_with, parse_level, ParseCategory, ParseError, ParseOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Unparsable,
    Illogical,
    Unmappable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCode {
    #[serde(rename = "unparsable.keyword")]
    Keyword,
    #[serde(rename = "unparsable.syntax")]
    Syntax,
    #[serde(rename = "illogical.component")]
    Component,
    #[serde(rename = "illogical.interaction")]
    Interaction,
    #[serde(rename = "illogical.termination")]
    Termination,
    #[serde(rename = "unmappable.no_level")]
    NoLevel,
    #[serde(rename = "unmappable.place")]
    Place,
    #[serde(rename = "unmappable.mapping")]
    Mapping,
    #[serde(rename = "unmappable.sprite")]
    Sprite,
}

impl ErrorCode {
    /// Table order.
    pub const ALL: [ErrorCode; 9] = [
        ErrorCode::Keyword,
        ErrorCode::Syntax,
        ErrorCode::Component,
        ErrorCode::Interaction,
        ErrorCode::Termination,
        ErrorCode::NoLevel,
        ErrorCode::Place,
        ErrorCode::Mapping,
        ErrorCode::Sprite,
    ];

    pub fn family(self) -> Family {
        match self {
            ErrorCode::Keyword | ErrorCode::Syntax => Family::Unparsable,
            ErrorCode::Component | ErrorCode::Interaction | ErrorCode::Termination => Family::Illogical,
            ErrorCode::NoLevel | ErrorCode::Place | ErrorCode::Mapping | ErrorCode::Sprite => Family::Unmappable,
        }
    }

    /// Stable machine-readable name.
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::Keyword => "unparsable.keyword",
            ErrorCode::Syntax => "unparsable.syntax",
            ErrorCode::Component => "illogical.component",
            ErrorCode::Interaction => "illogical.interaction",
            ErrorCode::Termination => "illogical.termination",
            ErrorCode::NoLevel => "unmappable.no_level",
            ErrorCode::Place => "unmappable.place",
            ErrorCode::Mapping => "unmappable.mapping",
            ErrorCode::Sprite => "unmappable.sprite",
        }
    }

    /// Column heading used in text reports.
    pub fn heading(self) -> &'static str {
        match self {
            ErrorCode::Keyword => "Keyword",
            ErrorCode::Syntax => "Syntax",
            ErrorCode::Component => "Component",
            ErrorCode::Interaction => "Interaction",
            ErrorCode::Termination => "Termination",
            ErrorCode::NoLevel => "NoLevel",
            ErrorCode::Place => "Place",
            ErrorCode::Mapping => "Mapping",
            ErrorCode::Sprite => "Sprite",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<ParseCategory> for ErrorCode {
    fn from(c: ParseCategory) -> Self {
        match c {
            ParseCategory::Keyword => ErrorCode::Keyword,
            ParseCategory::Syntax => ErrorCode::Syntax,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Location {
    Source { line: usize, col: usize },
    Cell { x: usize, y: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationError {
    pub family: Family,
    pub code: ErrorCode,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub location: Option<Location>,
}

impl ValidationError {
    pub fn new(code: ErrorCode, detail: impl Into<String>) -> Self {
        ValidationError { family: code.family(), code, detail: detail.into(), location: None }
    }

    pub fn at(mut self, location: Location) -> Self {
        self.location = Some(location);
        self
    }
}

impl From<&ParseError> for ValidationError {
    fn from(e: &ParseError) -> Self {
        ValidationError::new(e.category.into(), e.message.clone())
            .at(Location::Source { line: e.line, col: e.col })
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)?;
        match self.location {
            Some(Location::Source { line, col }) => write!(f, " (line {line}, col {col})"),
            Some(Location::Cell { x, y }) => write!(f, " (cell {x},{y})"),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    /// Rule and level both correct.
    G,
    /// Rule correct, level wrong.
    R,
    /// Rule wrong, level correct.
    L,
    /// Neither.
    W,
}

impl Outcome {
    pub fn classify(rule_correct: bool, level_correct: bool) -> Self {
        match (rule_correct, level_correct) {
            (true, true) => Outcome::G,
            (true, false) => Outcome::R,
            (false, true) => Outcome::L,
            (false, false) => Outcome::W,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub parsable: bool,
    pub logical: bool,
    pub mappable: bool,
    pub correct: bool,
    pub errors: Vec<ValidationError>,
    pub outcome: Outcome,
}

impl ValidationReport {
    fn assemble(parsable: bool, logical: bool, errors: Vec<ValidationError>) -> Self {
        let mappable = !errors.iter().any(|e| e.family == Family::Unmappable);
        let correct = parsable && logical && mappable;
        ValidationReport {
            parsable,
            logical,
            mappable,
            correct,
            outcome: Outcome::classify(parsable && logical, mappable),
            errors,
        }
    }

    pub fn codes(&self) -> BTreeSet<ErrorCode> {
        self.errors.iter().map(|e| e.code).collect()
    }

    pub fn has(&self, code: ErrorCode) -> bool {
        self.errors.iter().any(|e| e.code == code)
    }
}

#[derive(Debug, Clone)]
pub struct ValidationOptions {
    pub parse: ParseOptions,
    /// Characters exempt from mapping coverage.
    pub background: Vec<char>,
    /// Level alphabet assumed when the rules cannot be parsed.
    pub default_alphabet: Vec<char>,
    pub wall_char: char,
    pub avatar_char: char,
    pub goal_char: char,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            parse: ParseOptions::default(),
            background: vec![' ', '.'],
            default_alphabet: vec!['W', 'A', 'G'],
            wall_char: 'W',
            avatar_char: 'A',
            goal_char: 'G',
        }
    }
}

/// The three role types of a maze-style game.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roles {
    pub avatar: String,
    pub wall: String,
    pub goal: String,
}

/// Why [`resolve_roles`] failed; each case is reported by a later check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoleError {
    /// No sprite resolves to MovingAvatar (a Component error).
    NoAvatar,
    /// No win counter and no `goal` sprite (a Termination error).
    NoGoal,
}

fn avatar_type(spec: &GameSpec) -> Option<String> {
    spec.walk_sprites()
        .into_iter()
        .map(|(d, _)| d.stype.as_str())
        .find(|t| spec.resolve_sprite_class(t) == Some(MOVING_AVATAR))
        .map(str::to_owned)
}

fn wall_type(spec: &GameSpec, opts: &ValidationOptions) -> String {
    spec.char_map(opts.wall_char)
        .and_then(|m| m.stypes.first().cloned())
        .unwrap_or_else(|| "wall".to_owned())
}

fn goal_type(spec: &GameSpec) -> Option<String> {
    spec.terminations()
        .iter()
        .filter(|t| t.is_win())
        .find_map(|t| t.option("stype").map(|v| v.raw.clone()))
        .or_else(|| spec.is_defined("goal").then(|| "goal".to_owned()))
}

pub fn resolve_roles(spec: &GameSpec) -> Result<Roles, RoleError> {
    resolve_roles_with(spec, &ValidationOptions::default())
}

pub fn resolve_roles_with(spec: &GameSpec, opts: &ValidationOptions) -> Result<Roles, RoleError> {
    let avatar = avatar_type(spec).ok_or(RoleError::NoAvatar)?;
    let goal = goal_type(spec).ok_or(RoleError::NoGoal)?;
    Ok(Roles { avatar, wall: wall_type(spec, opts), goal })
}

pub fn check_components(spec: &GameSpec) -> Vec<ValidationError> {
    let mut errors: Vec<ValidationError> = BlockKind::ALL
        .into_iter()
        .filter(|k| !spec.has_block(*k))
        .map(|k| ValidationError::new(ErrorCode::Component, format!("missing {k}")))
        .collect();
    for def in spec.sprites() {
        if def.sprite_class.is_none() {
            errors.push(ValidationError::new(
                ErrorCode::Component,
                format!("top-level sprite `{}` has no sprite class", def.stype),
            ));
        }
    }
    if avatar_type(spec).is_none() {
        errors.push(ValidationError::new(ErrorCode::Component, "no sprite resolves to MovingAvatar"));
    }
    errors
}

/// Does `target` remove instances of `goal`? True when either type covers the other.
fn removes(spec: &GameSpec, target: &str, goal: &str) -> bool {
    spec.covers(target, goal) || spec.covers(goal, target)
}

/// Avatar–goal interactions, in declaration order.
fn avatar_goal_pairs<'a>(
    spec: &'a GameSpec,
    avatar: &str,
    goal: &str,
) -> impl Iterator<Item = &'a crate::ast::InteractionDef> {
    let avatar = avatar.to_owned();
    let goal = goal.to_owned();
    spec.interactions().iter().filter(move |i| {
        (spec.covers(&i.subject, &avatar) && spec.covers(&i.object, &goal))
            || (spec.covers(&i.subject, &goal) && spec.covers(&i.object, &avatar))
    })
}

pub fn check_interactions(spec: &GameSpec, avatar: &str, wall: &str, goal: &str) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let blocks_walls = spec.interactions().iter().any(|i| {
        i.method == STEP_BACK && spec.covers(&i.subject, avatar) && spec.covers(&i.object, wall)
    });
    if !blocks_walls {
        errors.push(ValidationError::new(
            ErrorCode::Interaction,
            format!("no `{avatar} {wall} > stepBack` interaction"),
        ));
    }
    let pairs: Vec<_> = avatar_goal_pairs(spec, avatar, goal).collect();
    if pairs.is_empty() {
        errors.push(ValidationError::new(
            ErrorCode::Interaction,
            format!("no interaction between `{avatar}` and `{goal}`"),
        ));
    } else if !pairs
        .iter()
        .any(|i| i.removal_target().is_some_and(|t| removes(spec, t, goal)))
    {
        let first = pairs[0];
        let target = first.removal_target().unwrap_or("nothing");
        errors.push(ValidationError::new(
            ErrorCode::Interaction,
            format!(
                "`{} {} > {}` removes {target}, not `{goal}`",
                first.subject, first.object, first.method
            ),
        ));
    }
    errors
}

fn instance_counts(spec: &GameSpec, level: &LevelGrid) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for (_, _, c) in level.cells() {
        if let Some(m) = spec.char_map(c) {
            for t in &m.stypes {
                *counts.entry(t.clone()).or_insert(0) += 1;
            }
        }
    }
    counts
}

fn count_covered(spec: &GameSpec, counts: &BTreeMap<String, usize>, stype: &str) -> usize {
    let covered = spec.covered_types(stype);
    counts.iter().filter(|(t, _)| covered.contains(*t)).map(|(_, n)| n).sum()
}

pub fn check_termination(spec: &GameSpec, level: Option<&LevelGrid>) -> Vec<ValidationError> {
    let mut errors = Vec::new();
    let terms = spec.terminations();
    if !terms.iter().any(|t| t.is_win()) {
        errors.push(ValidationError::new(ErrorCode::Termination, "no termination with win=True"));
    }
    let counts = level.map(|l| instance_counts(spec, l));
    for t in terms.iter().filter(|t| t.termination_class == crate::ast::SPRITE_COUNTER) {
        let counter = match t.sprite_counter() {
            Ok(c) => c,
            Err(msg) => {
                errors.push(ValidationError::new(ErrorCode::Termination, msg));
                continue;
            }
        };
        if let Some(counts) = &counts {
            let n = count_covered(spec, counts, &counter.stype);
            if n <= counter.limit {
                errors.push(ValidationError::new(
                    ErrorCode::Termination,
                    format!(
                        "SpriteCounter stype={} limit={} holds at the start ({n} in level)",
                        counter.stype, counter.limit
                    ),
                ));
            }
        }
        if counter.win {
            let removable = spec.interactions().iter().any(|i| {
                i.removal_target().is_some_and(|target| {
                    let a = spec.covered_types(target);
                    let b = spec.covered_types(&counter.stype);
                    a.intersection(&b).next().is_some()
                })
            });
            if !removable {
                errors.push(ValidationError::new(
                    ErrorCode::Termination,
                    format!("win unreachable: no interaction removes `{}`", counter.stype),
                ));
            }
        }
    }
    errors
}

pub fn check_mappable(spec: &GameSpec, level: Option<&LevelGrid>, placement: LevelPlacement) -> Vec<ValidationError> {
    check_mappable_with(spec, level, placement, &ValidationOptions::default())
}

pub fn check_mappable_with(
    spec: &GameSpec,
    level: Option<&LevelGrid>,
    placement: LevelPlacement,
    opts: &ValidationOptions,
) -> Vec<ValidationError> {
    let Some(level) = level else {
        return vec![ValidationError::new(ErrorCode::NoLevel, "no level found")];
    };
    let mut errors = Vec::new();
    if placement == LevelPlacement::Inline {
        errors.push(ValidationError::new(ErrorCode::Place, "level is embedded in the game description"));
    }
    for m in spec.mappings() {
        if m.ch == '#' {
            errors.push(ValidationError::new(ErrorCode::Mapping, "`#` may not be used as a map character"));
        }
    }
    unmapped_chars(level, |c| spec.char_map(c).is_some() || opts.background.contains(&c), &mut errors);

    let counts = instance_counts(spec, level);
    let avatar = avatar_type(spec);
    let goal = goal_type(spec);
    if let Some(avatar) = &avatar {
        role_counts(count_covered(spec, &counts, avatar), "avatar", avatar, &mut errors);
    }
    if let Some(goal) = &goal {
        if count_covered(spec, &counts, goal) == 0 {
            errors.push(ValidationError::new(ErrorCode::Sprite, format!("level has no `{goal}` (goal)")));
        }
    }
    errors
}

fn unmapped_chars(level: &LevelGrid, is_mapped: impl Fn(char) -> bool, errors: &mut Vec<ValidationError>) {
    let mut reported = BTreeSet::new();
    for (x, y, c) in level.cells() {
        if is_mapped(c) || !reported.insert(c) {
            continue;
        }
        let detail = if c == '#' {
            "`#` is prohibited in levels".to_owned()
        } else {
            format!("level character `{c}` is not mapped")
        };
        errors.push(ValidationError::new(ErrorCode::Mapping, detail).at(Location::Cell { x, y }));
    }
}

/// Exactly one avatar instance: none is a missing sprite, several means the
/// avatar character is being used as terrain.
fn role_counts(n: usize, role: &str, stype: &str, errors: &mut Vec<ValidationError>) {
    match n {
        0 => errors.push(ValidationError::new(ErrorCode::Sprite, format!("level has no `{stype}` ({role})"))),
        1 => {}
        n => errors.push(ValidationError::new(
            ErrorCode::Mapping,
            format!("`{stype}` ({role}) is instantiated {n} times"),
        )),
    }
}

/// Level check when the rules are unparsable, against the default alphabet.
fn check_level_alphabet(level: Option<&LevelGrid>, opts: &ValidationOptions) -> Vec<ValidationError> {
    let Some(level) = level else {
        return vec![ValidationError::new(ErrorCode::NoLevel, "no level found")];
    };
    let mut errors = Vec::new();
    unmapped_chars(
        level,
        |c| opts.default_alphabet.contains(&c) || opts.background.contains(&c),
        &mut errors,
    );
    let count = |ch: char| level.cells().filter(|(_, _, c)| *c == ch).count();
    role_counts(count(opts.avatar_char), "avatar", &opts.avatar_char.to_string(), &mut errors);
    if count(opts.goal_char) == 0 {
        errors.push(ValidationError::new(ErrorCode::Sprite, format!("level has no `{}` (goal)", opts.goal_char)));
    }
    errors
}

pub fn validate(rules_text: &str, level_text: Option<&str>) -> ValidationReport {
    validate_with(rules_text, level_text, LevelPlacement::Separate, &ValidationOptions::default())
}

pub fn validate_candidate(candidate: &Candidate, opts: &ValidationOptions) -> ValidationReport {
    validate_with(&candidate.rules_text, candidate.level_text.as_deref(), candidate.placement, opts)
}

pub fn validate_with(
    rules_text: &str,
    level_text: Option<&str>,
    placement: LevelPlacement,
    opts: &ValidationOptions,
) -> ValidationReport {
    let background = opts.background.first().copied().unwrap_or(' ');
    let level = level_text.and_then(|t| parse_level(t, background).ok());

    let spec = match parse_game_with(rules_text, &opts.parse) {
        Ok(spec) => spec,
        Err(e) => {
            let mut errors = vec![ValidationError::from(&e)];
            let mut level_errors = check_level_alphabet(level.as_ref(), opts);
            if placement == LevelPlacement::Inline && level.is_some() {
                level_errors.insert(0, ValidationError::new(ErrorCode::Place, "level is embedded in the game description"));
            }
            errors.extend(level_errors);
            return ValidationReport::assemble(false, false, errors);
        }
    };

    let mut logical = check_components(&spec);
    // A missing block is a Component error; its contents are not checked further.
    let termination = if spec.has_block(BlockKind::TerminationSet) {
        check_termination(&spec, level.as_ref())
    } else {
        Vec::new()
    };
    match resolve_roles_with(&spec, opts) {
        Ok(roles) => {
            let interaction = if spec.has_block(BlockKind::InteractionSet) {
                check_interactions(&spec, &roles.avatar, &roles.wall, &roles.goal)
            } else {
                Vec::new()
            };
            let goal_pair_flagged = interaction.iter().any(|e| e.detail.contains(&format!("`{}`", roles.goal)));
            logical.extend(interaction);
            // A wrong or missing avatar–goal interaction already explains an
            // unreachable goal counter; count the defect once.
            logical.extend(termination.into_iter().filter(|e| {
                !(goal_pair_flagged && e.detail.starts_with("win unreachable") && e.detail.ends_with(&format!("`{}`", roles.goal)))
            }));
        }
        // Component already reports the missing avatar.
        Err(RoleError::NoAvatar) => logical.extend(termination),
        Err(RoleError::NoGoal) => {
            if termination.is_empty() && spec.has_block(BlockKind::TerminationSet) {
                logical.push(ValidationError::new(ErrorCode::Termination, "no goal sprite can be identified"));
            }
            logical.extend(termination);
        }
    }
    let is_logical = logical.is_empty();
    let mut errors = logical;
    errors.extend(check_mappable_with(&spec, level.as_ref(), placement, opts));
    ValidationReport::assemble(true, is_logical, errors)
}
