#![allow(dead_code)]

use std::collections::HashMap;

use llmgg::ast::LevelGrid;
use llmgg::engine::{Action, Engine, GameState, Status};
use llmgg::parser::parse_game;
use llmgg::GameSpec;
use rand::Rng;

pub const GOAL_KILLS_AVATAR_WRONG: &str = "avatar goal > killSprite";
pub const GOAL_KILLED: &str = "goal avatar > killSprite";
pub const GOAL_REMOVED: &str = "avatar goal > removeSprite";
pub const AVATAR_REMOVED: &str = "goal avatar > removeSprite";

pub const VARIANTS: [&str; 4] = [GOAL_KILLED, GOAL_REMOVED, GOAL_KILLS_AVATAR_WRONG, AVATAR_REMOVED];

pub fn maze_spec(goal_rule: &str) -> GameSpec {
    parse_game(&format!(
        "BasicGame
    SpriteSet
        wall > Immovable
        avatar > MovingAvatar
        goal > Immovable
    LevelMapping
        W > wall
        A > avatar
        G > goal
    InteractionSet
        avatar wall > stepBack
        {goal_rule}
    TerminationSet
        SpriteCounter stype=goal limit=0 win=True
"
    ))
    .expect("maze spec parses")
}

pub fn grid(rows: &[String]) -> LevelGrid {
    LevelGrid::from_rows(rows, ' ').expect("non-empty grid")
}

/// Every placement of one avatar, one goal and any wall subset on a w×h grid.
pub fn all_mazes(w: usize, h: usize) -> Vec<LevelGrid> {
    let n = w * h;
    let mut out = Vec::new();
    for a in 0..n {
        for g in 0..n {
            if a == g {
                continue;
            }
            let rest: Vec<usize> = (0..n).filter(|c| *c != a && *c != g).collect();
            for mask in 0u32..(1 << rest.len()) {
                let mut cells = vec![' '; n];
                cells[a] = 'A';
                cells[g] = 'G';
                for (bit, c) in rest.iter().enumerate() {
                    if mask & (1 << bit) != 0 {
                        cells[*c] = 'W';
                    }
                }
                let rows: Vec<String> = cells.chunks(w).map(|r| r.iter().collect()).collect();
                out.push(grid(&rows));
            }
        }
    }
    out
}

pub fn random_maze(rng: &mut impl Rng, w: usize, h: usize, wall_p: f64) -> LevelGrid {
    let n = w * h;
    let a = rng.gen_range(0..n);
    let mut g = rng.gen_range(0..n - 1);
    if g >= a {
        g += 1;
    }
    let cells: Vec<char> = (0..n)
        .map(|i| match i {
            i if i == a => 'A',
            i if i == g => 'G',
            _ if rng.gen_bool(wall_p) => 'W',
            _ => ' ',
        })
        .collect();
    let rows: Vec<String> = cells.chunks(w).map(|r| r.iter().collect()).collect();
    grid(&rows)
}

type Key = (Option<(usize, usize)>, Vec<bool>);

pub fn key(s: &GameState) -> Key {
    (s.avatar_pos(), s.instances.iter().map(|i| i.alive).collect())
}

/// Number of instances some interaction could remove: every non-wall,
/// non-avatar instance in these mazes.
pub fn removable_count(s: &GameState) -> usize {
    s.instances.iter().filter(|i| i.stype == "goal").count()
}

pub fn oracle_depth(level: &LevelGrid, s: &GameState) -> usize {
    let free = level.cells().filter(|(_, _, c)| *c != 'W').count();
    free * (1 + removable_count(s))
}

/// Depth-first enumeration of every action sequence of length ≤ `budget`.
/// A state already explored with at least as much remaining budget is not
/// expanded again, which keeps the enumeration exhaustive.
fn reaches_win(engine: &Engine, s: &GameState, budget: usize, seen: &mut HashMap<Key, usize>) -> bool {
    match s.status {
        Status::Won => return true,
        Status::Lost => return false,
        Status::Running => {}
    }
    if budget == 0 {
        return false;
    }
    let k = key(s);
    if seen.get(&k).is_some_and(|b| *b >= budget) {
        return false;
    }
    seen.insert(k, budget);
    Action::ALL.into_iter().any(|a| {
        let next = engine.step(s, a).expect("running state steps").state;
        reaches_win(engine, &next, budget - 1, seen)
    })
}

/// Shortest winning sequence length found by iterative deepening, or `None`.
pub fn brute_force(engine: &Engine, max_depth: usize) -> Option<usize> {
    (0..=max_depth).find(|d| reaches_win(engine, engine.initial_state(), *d, &mut HashMap::new()))
}
