//! Canonical text rendering of a [`GameSpec`].
//!
//! Blocks are written in grammar order regardless of their source order, with
//! four spaces per indentation level.

use std::fmt::Write;

use crate::ast::{BlockKind, GameSpec, Opt, SpriteDef};

const INDENT: &str = "    ";

pub fn pretty_print(spec: &GameSpec) -> String {
    let mut out = String::new();
    out.push_str(&spec.game_class);
    out.push('\n');
    for kind in BlockKind::ALL {
        if !spec.has_block(kind) {
            continue;
        }
        let _ = writeln!(out, "{INDENT}{kind}");
        match kind {
            BlockKind::LevelMapping => {
                for m in spec.mappings() {
                    let _ = writeln!(out, "{INDENT}{INDENT}{} > {}", m.ch, m.stypes.join(" "));
                }
            }
            BlockKind::SpriteSet => {
                for def in spec.sprites() {
                    sprite(&mut out, def, 2);
                }
            }
            BlockKind::InteractionSet => {
                for i in spec.interactions() {
                    let _ = write!(out, "{INDENT}{INDENT}{} {} > {}", i.subject, i.object, i.method);
                    for arg in &i.bare_args {
                        let _ = write!(out, " {arg}");
                    }
                    options(&mut out, &i.options);
                    out.push('\n');
                }
            }
            BlockKind::TerminationSet => {
                for t in spec.terminations() {
                    let _ = write!(out, "{INDENT}{INDENT}{}", t.termination_class);
                    options(&mut out, &t.options);
                    out.push('\n');
                }
            }
        }
    }
    out
}

fn sprite(out: &mut String, def: &SpriteDef, depth: usize) {
    out.push_str(&INDENT.repeat(depth));
    let _ = write!(out, "{} >", def.stype);
    if let Some(class) = &def.sprite_class {
        let _ = write!(out, " {class}");
    }
    options(out, &def.options);
    out.push('\n');
    for child in &def.children {
        sprite(out, child, depth + 1);
    }
}

fn options(out: &mut String, opts: &[Opt]) {
    for o in opts {
        let _ = write!(out, " {}={}", o.key, o.value.raw);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::parse_game;

    #[test]
    fn canonical_order_and_shape() {
        let g = parse_game(
            "BasicGame\n  InteractionSet\n    a b > killSprite scoreChange=1\n  SpriteSet\n    a > Immovable\n      b > color=RED\n  LevelMapping\n    . > a b\n",
        )
        .unwrap();
        assert_eq!(
            pretty_print(&g),
            "BasicGame\n    LevelMapping\n        . > a b\n    SpriteSet\n        a > Immovable\n            b > color=RED\n    InteractionSet\n        a b > killSprite scoreChange=1\n"
        );
    }
}
