//! Grid execution of the constrained VGDL subset and a breadth-first
//! winnability solver.
//!
//! Only the avatar moves. A move resolves collisions in the destination cell
//! against every interaction in declaration order, then evaluates the
//! termination rules in order; the first one that holds ends the game.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::{
    AstError, GameSpec, LevelGrid, EOS, IMMOVABLE, KILL_SPRITE, MOVING_AVATAR, REMOVE_SPRITE, SPRITE_COUNTER, STEP_BACK,
};

/// Level characters that spawn nothing unless the mapping says otherwise.
pub const BACKGROUND: [char; 2] = [' ', '.'];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("expected exactly one avatar instance, found {0}")]
    AvatarCount(usize),
    #[error("game has already terminated")]
    Terminated,
    #[error("unsupported by the engine: {0}")]
    Unsupported(String),
    #[error("undefined sprite type `{0}`")]
    UndefinedSpriteType(String),
    #[error("level character `{ch}` at ({x},{y}) is not mapped")]
    Unmappable { ch: char, x: usize, y: usize },
}

impl From<AstError> for EngineError {
    fn from(e: AstError) -> Self {
        match e {
            AstError::UndefinedSpriteType(t) => EngineError::UndefinedSpriteType(t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Noop,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Noop];
    /// Actions that can change the state; `Noop` never does.
    pub const MOVES: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Noop => (0, 0),
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl std::str::FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Action::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Status {
    Running,
    Won,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    pub id: usize,
    pub stype: String,
    pub x: usize,
    pub y: usize,
    pub alive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GameState {
    pub width: usize,
    pub height: usize,
    /// Every spawned instance, in row-major spawn order. Removed instances
    /// stay with `alive == false` so ids remain stable.
    pub instances: Vec<Instance>,
    pub avatar: usize,
    pub step_count: usize,
    pub status: Status,
}

impl GameState {
    /// Current avatar cell, or `None` once it has been removed.
    pub fn avatar_pos(&self) -> Option<(usize, usize)> {
        let a = &self.instances[self.avatar];
        a.alive.then_some((a.x, a.y))
    }

    pub fn occupants(&self, x: usize, y: usize) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(move |i| i.alive && i.x == x && i.y == y)
    }

    pub fn count_alive(&self, types: &BTreeSet<String>) -> usize {
        self.instances.iter().filter(|i| i.alive && types.contains(&i.stype)).count()
    }

    pub fn alive_count(&self) -> usize {
        self.instances.iter().filter(|i| i.alive).count()
    }

    fn key(&self) -> StateKey {
        let mut alive = vec![0u64; self.instances.len().div_ceil(64)];
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.alive {
                alive[i / 64] |= 1 << (i % 64);
            }
        }
        (self.avatar_pos(), alive)
    }
}

type StateKey = (Option<(usize, usize)>, Vec<u64>);

#[derive(Debug, Clone)]
struct Rule {
    text: String,
    subject: BTreeSet<String>,
    object: BTreeSet<String>,
    method: String,
}

#[derive(Debug, Clone)]
struct Counter {
    types: BTreeSet<String>,
    limit: usize,
    win: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub state: GameState,
    /// Interactions that fired, as `subject object > method`.
    pub fired: Vec<String>,
    /// The avatar left the grid and no EOS rule applied.
    pub eos_default: bool,
}

/// A spec compiled against a level.
#[derive(Debug, Clone)]
pub struct Engine {
    rules: Vec<Rule>,
    counters: Vec<Counter>,
    initial: GameState,
}

fn rule_types(spec: &GameSpec, stype: &str) -> Result<BTreeSet<String>, EngineError> {
    if stype == EOS {
        return Ok(BTreeSet::from([EOS.to_owned()]));
    }
    Ok(spec.descendant_types(stype)?)
}

fn compile(spec: &GameSpec) -> Result<(Vec<Rule>, Vec<Counter>), EngineError> {
    for (def, _) in spec.walk_sprites() {
        match spec.resolve_sprite_class(&def.stype) {
            Some(MOVING_AVATAR) | Some(IMMOVABLE) => {}
            Some(other) => return Err(EngineError::Unsupported(format!("sprite class {other}"))),
            None => return Err(EngineError::Unsupported(format!("sprite `{}` has no class", def.stype))),
        }
    }
    let mut rules = Vec::new();
    for i in spec.interactions() {
        if ![STEP_BACK, KILL_SPRITE, REMOVE_SPRITE].contains(&i.method.as_str()) {
            return Err(EngineError::Unsupported(format!("interaction {}", i.method)));
        }
        rules.push(Rule {
            text: format!("{} {} > {}", i.subject, i.object, i.method),
            subject: rule_types(spec, &i.subject)?,
            object: rule_types(spec, &i.object)?,
            method: i.method.clone(),
        });
    }
    let mut counters = Vec::new();
    for t in spec.terminations() {
        if t.termination_class != SPRITE_COUNTER {
            return Err(EngineError::Unsupported(format!("termination {}", t.termination_class)));
        }
        let c = t.sprite_counter().map_err(EngineError::Unsupported)?;
        counters.push(Counter { types: spec.descendant_types(&c.stype)?, limit: c.limit, win: c.win });
    }
    Ok((rules, counters))
}

impl Engine {
    pub fn new(spec: &GameSpec, level: &LevelGrid) -> Result<Self, EngineError> {
        let (rules, counters) = compile(spec)?;
        let mut instances = Vec::new();
        for (x, y, ch) in level.cells() {
            let Some(map) = spec.char_map(ch) else {
                if BACKGROUND.contains(&ch) {
                    continue;
                }
                return Err(EngineError::Unmappable { ch, x, y });
            };
            for stype in &map.stypes {
                if !spec.is_defined(stype) {
                    return Err(EngineError::UndefinedSpriteType(stype.clone()));
                }
                instances.push(Instance { id: instances.len(), stype: stype.clone(), x, y, alive: true });
            }
        }
        let avatars: Vec<usize> = instances
            .iter()
            .filter(|i| spec.resolve_sprite_class(&i.stype) == Some(MOVING_AVATAR))
            .map(|i| i.id)
            .collect();
        if avatars.len() != 1 {
            return Err(EngineError::AvatarCount(avatars.len()));
        }
        let mut initial = GameState {
            width: level.width(),
            height: level.height(),
            instances,
            avatar: avatars[0],
            step_count: 0,
            status: Status::Running,
        };
        let mut engine = Engine { rules, counters, initial: initial.clone() };
        initial.status = engine.evaluate(&initial);
        engine.initial = initial;
        Ok(engine)
    }

    pub fn initial_state(&self) -> &GameState {
        &self.initial
    }

    fn evaluate(&self, state: &GameState) -> Status {
        for c in &self.counters {
            if state.count_alive(&c.types) <= c.limit {
                return if c.win { Status::Won } else { Status::Lost };
            }
        }
        Status::Running
    }

    pub fn step(&self, state: &GameState, action: Action) -> Result<StepResult, EngineError> {
        if state.status != Status::Running {
            return Err(EngineError::Terminated);
        }
        let mut next = state.clone();
        let mut fired = Vec::new();
        let mut eos_default = false;
        if let (Some((x, y)), false) = (state.avatar_pos(), action == Action::Noop) {
            let (dx, dy) = action.delta();
            let tx = x as isize + dx;
            let ty = y as isize + dy;
            let avatar = next.avatar;
            let avatar_type = next.instances[avatar].stype.clone();
            if tx < 0 || ty < 0 || tx as usize >= state.width || ty as usize >= state.height {
                let mut any = false;
                for rule in &self.rules {
                    let first = if rule.subject.contains(&avatar_type) && rule.object.contains(EOS) {
                        true
                    } else if rule.subject.contains(EOS) && rule.object.contains(&avatar_type) {
                        false
                    } else {
                        continue;
                    };
                    if !next.instances[avatar].alive {
                        break;
                    }
                    any = true;
                    fired.push(rule.text.clone());
                    // The avatar never actually leaves the grid, so a stepBack is a no-op.
                    let removes_avatar = (rule.method == KILL_SPRITE && first) || (rule.method == REMOVE_SPRITE && !first);
                    if removes_avatar {
                        next.instances[avatar].alive = false;
                    }
                }
                eos_default = !any;
            } else {
                let (tx, ty) = (tx as usize, ty as usize);
                let occupants: Vec<usize> = state.occupants(tx, ty).map(|i| i.id).collect();
                next.instances[avatar].x = tx;
                next.instances[avatar].y = ty;
                for occ in occupants {
                    let occ_type = next.instances[occ].stype.clone();
                    for rule in &self.rules {
                        // (first, second) instance ids in rule order.
                        let pair = if rule.subject.contains(&avatar_type) && rule.object.contains(&occ_type) {
                            (avatar, occ)
                        } else if rule.subject.contains(&occ_type) && rule.object.contains(&avatar_type) {
                            (occ, avatar)
                        } else {
                            continue;
                        };
                        if !next.instances[avatar].alive || !next.instances[occ].alive {
                            break;
                        }
                        fired.push(rule.text.clone());
                        match rule.method.as_str() {
                            STEP_BACK if pair.0 == avatar => {
                                next.instances[avatar].x = x;
                                next.instances[avatar].y = y;
                            }
                            KILL_SPRITE => next.instances[pair.0].alive = false,
                            REMOVE_SPRITE => next.instances[pair.1].alive = false,
                            _ => {}
                        }
                    }
                }
            }
        }
        next.step_count += 1;
        next.status = self.evaluate(&next);
        Ok(StepResult { state: next, fired, eos_default })
    }

    /// Breadth-first search for the shortest winning action sequence.
    pub fn solve(&self, max_steps: usize) -> Solution {
        self.search(max_steps, false)
    }

    /// Same result as [`solve`](Self::solve), expanding each frontier in parallel.
    pub fn solve_parallel(&self, max_steps: usize) -> Solution {
        self.search(max_steps, true)
    }

    fn search(&self, max_steps: usize, parallel: bool) -> Solution {
        match self.initial.status {
            Status::Won => return Solution::Winnable { steps: 0, plan: Vec::new() },
            Status::Lost => return Solution::NotWinnable,
            Status::Running => {}
        }
        // (parent node, action that reached it)
        let mut nodes: Vec<(usize, Option<Action>)> = vec![(0, None)];
        let mut states = vec![self.initial.clone()];
        let mut visited = HashSet::from([self.initial.key()]);
        let mut frontier = vec![0usize];
        let expand = |s: &GameState| -> Vec<(Action, GameState)> {
            if s.avatar_pos().is_none() {
                return Vec::new();
            }
            Action::MOVES
                .into_iter()
                .filter_map(|a| self.step(s, a).ok().map(|r| (a, r.state)))
                .collect()
        };
        for depth in 0..max_steps {
            if frontier.is_empty() {
                return Solution::NotWinnable;
            }
            let expanded: Vec<Vec<(Action, GameState)>> = if parallel {
                frontier.par_iter().map(|id| expand(&states[*id])).collect()
            } else {
                frontier.iter().map(|id| expand(&states[*id])).collect()
            };
            let mut next_frontier = Vec::new();
            let mut new_states = Vec::new();
            for (parent, succs) in frontier.iter().zip(expanded) {
                for (action, state) in succs {
                    if !visited.insert(state.key()) {
                        continue;
                    }
                    let id = nodes.len() + new_states.len();
                    match state.status {
                        Status::Won => {
                            nodes.extend(new_states.iter().map(|(n, _)| *n));
                            nodes.push((*parent, Some(action)));
                            return Solution::Winnable { steps: depth + 1, plan: plan_to(&nodes, id) };
                        }
                        Status::Lost => {}
                        Status::Running => next_frontier.push(id),
                    }
                    new_states.push(((*parent, Some(action)), state));
                }
            }
            for (node, state) in new_states {
                nodes.push(node);
                states.push(state);
            }
            frontier = next_frontier;
        }
        if frontier.is_empty() {
            Solution::NotWinnable
        } else {
            Solution::Budget
        }
    }

    /// Replays `actions`, one line per step.
    pub fn trace(&self, actions: &[Action]) -> Result<Vec<String>, EngineError> {
        let mut state = self.initial.clone();
        let mut lines = Vec::new();
        for (i, &a) in actions.iter().enumerate() {
            let r = self.step(&state, a)?;
            lines.push(trace_line(i + 1, a, &r));
            state = r.state;
        }
        Ok(lines)
    }
}

fn plan_to(nodes: &[(usize, Option<Action>)], mut id: usize) -> Vec<Action> {
    let mut plan = Vec::new();
    while let (parent, Some(a)) = nodes[id] {
        plan.push(a);
        id = parent;
    }
    plan.reverse();
    plan
}

pub fn trace_line(index: usize, action: Action, r: &StepResult) -> String {
    let cell = match r.state.avatar_pos() {
        Some((x, y)) => format!("({x},{y})"),
        None => "-".to_owned(),
    };
    let mut line = format!("{index} {action} {cell} [{}] {:?}", r.fired.join("; "), r.state.status);
    if r.eos_default {
        line.push_str(" eos:stepBack");
    }
    line
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result")]
pub enum Solution {
    Winnable { steps: usize, plan: Vec<Action> },
    NotWinnable,
    Budget,
}

impl Solution {
    pub fn steps(&self) -> Option<usize> {
        match self {
            Solution::Winnable { steps, .. } => Some(*steps),
            _ => None,
        }
    }
}

impl fmt::Display for Solution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Solution::Winnable { steps, .. } => write!(f, "Winnable({steps})"),
            Solution::NotWinnable => f.write_str("NotWinnable"),
            Solution::Budget => f.write_str("Budget"),
        }
    }
}

pub fn init_state(spec: &GameSpec, level: &LevelGrid) -> Result<GameState, EngineError> {
    Engine::new(spec, level).map(|e| e.initial)
}

/// One step of `state` under `spec`; the state carries its own grid.
pub fn step(state: &GameState, spec: &GameSpec, action: Action) -> Result<GameState, EngineError> {
    let (rules, counters) = compile(spec)?;
    let engine = Engine { rules, counters, initial: state.clone() };
    engine.step(state, action).map(|r| r.state)
}

pub fn solve(spec: &GameSpec, level: &LevelGrid, max_steps: usize) -> Result<Solution, EngineError> {
    Ok(Engine::new(spec, level)?.solve(max_steps))
}
