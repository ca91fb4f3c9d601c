use std::collections::VecDeque;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use llmgg::corpus;
use llmgg::extract::extract_candidates;
use llmgg::prompt::{build, preset, PresetId};

fn llmgg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llmgg")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes the GPT-4/P7 rules and level to `dir`.
fn maze_files(dir: &Path) -> (String, String, String) {
    let c = &extract_candidates(corpus::response("gpt-4", PresetId::P7).unwrap()).unwrap()[0];
    let rules = dir.join("maze.vgdl");
    let level = dir.join("maze.txt");
    fs::write(&rules, &c.rules_text).unwrap();
    fs::write(&level, c.level_text.as_ref().unwrap()).unwrap();
    (rules.display().to_string(), level.display().to_string(), c.level_text.clone().unwrap())
}

/// Shortest avatar-to-goal walk over non-wall cells.
fn grid_distance(level: &str) -> Option<usize> {
    let rows: Vec<Vec<char>> = level.lines().map(|l| l.chars().collect()).collect();
    let find = |ch| {
        rows.iter().enumerate().find_map(|(y, r)| r.iter().position(|c| *c == ch).map(|x| (x, y)))
    };
    let (start, goal) = (find('A')?, find('G')?);
    let mut dist = vec![vec![usize::MAX; 64]; rows.len()];
    let mut queue = VecDeque::from([start]);
    dist[start.1][start.0] = 0;
    while let Some((x, y)) = queue.pop_front() {
        if (x, y) == goal {
            return Some(dist[y][x]);
        }
        let steps = [(x.wrapping_sub(1), y), (x + 1, y), (x, y.wrapping_sub(1)), (x, y + 1)];
        for (nx, ny) in steps {
            let Some(c) = rows.get(ny).and_then(|r| r.get(nx)) else { continue };
            if *c != 'W' && dist[ny][nx] == usize::MAX {
                dist[ny][nx] = dist[y][x] + 1;
                queue.push_back((nx, ny));
            }
        }
    }
    None
}

#[test]
fn generate_prints_the_preset_prompt() {
    let out = llmgg(&["generate", "--preset", "p6", "--game", "maze game"]);
    assert!(out.status.success());
    let expected = build(&preset(PresetId::P6, "maze game")).unwrap().text;
    assert_eq!(stdout(&out), format!("{expected}\n"));
}

#[test]
fn generate_against_builtin_replay() {
    let out = llmgg(&["generate", "--preset", "p7", "--provider", "builtin"]);
    assert!(out.status.success());
    // The first builtin provider is gpt-3.5.
    assert_eq!(stdout(&out), format!("{}\n", corpus::response("gpt-3.5", PresetId::P7).unwrap()));
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (rules, level, _) = maze_files(dir.path());
    let ok = llmgg(&["validate", &rules, &level]);
    assert!(ok.status.success(), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("outcome=G"));

    let broken = dir.path().join("broken.vgdl");
    fs::write(&broken, fs::read_to_string(&rules).unwrap().replace("avatar goal > removeSprite", "avatar goal > killSprite")).unwrap();
    let bad = llmgg(&["validate", broken.to_str().unwrap(), &level]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("illogical.interaction"));

    let response = dir.path().join("response.md");
    fs::write(&response, corpus::response("gpt-4", PresetId::P1).unwrap()).unwrap();
    let json = llmgg(&["validate", "--response", "--json", response.to_str().unwrap()]);
    assert_eq!(json.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["outcome"], "L");
}

#[test]
fn solve_matches_grid_distance_and_traces() {
    let dir = tempfile::tempdir().unwrap();
    let (rules, level, level_text) = maze_files(dir.path());
    let expected = grid_distance(&level_text).expect("maze is connected");
    let out = llmgg(&["solve", &rules, &level, "--trace"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(format!("Winnable({expected})").as_str()));
    let trace: Vec<&str> = lines.collect();
    assert_eq!(trace.len(), expected);
    assert!(trace.last().unwrap().ends_with("[avatar goal > removeSprite] Won"));
    assert!(trace[0].starts_with("1 "));
}

#[test]
fn run_then_report_formats() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = llmgg(&["run", "--presets", "p1,p7", "--trials", "2", "--fresh", "--out", out.to_str().unwrap()]);
    assert!(run.status.success());
    let journal = out.join("journal.jsonl");
    assert_eq!(fs::read_to_string(&journal).unwrap().lines().count(), 3 * 2 * 2);

    let text = llmgg(&["report", journal.to_str().unwrap()]);
    assert!(stdout(&text).contains("Parsable Logical Mappable Correct"));
    assert_eq!(stdout(&text), fs::read_to_string(out.join("report.txt")).unwrap());
    let tsv = llmgg(&["report", journal.to_str().unwrap(), "--format", "tsv"]);
    assert_eq!(stdout(&tsv).lines().count(), 1 + 6);
    assert!(stdout(&tsv).lines().next().unwrap().contains("unparsable.syntax"));
    let jsonl = llmgg(&["report", journal.to_str().unwrap(), "--format", "jsonl"]);
    for line in stdout(&jsonl).lines() {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
}

#[test]
fn unreachable_providers_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("providers.toml");
    fs::write(
        &cfg,
        "[[provider]]\nname = \"down\"\nkind = \"live\"\nendpoint = \"http://127.0.0.1:9/v1/chat/completions\"\nmodel = \"m\"\nattempts = 1\ntimeout_secs = 2\n",
    )
    .unwrap();
    let out = llmgg(&["run", "--providers", cfg.to_str().unwrap(), "--presets", "p1", "--trials", "1", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let report = fs::read_to_string(dir.path().join("o/report.txt")).unwrap();
    assert!(report.lines().nth(1).unwrap().trim_end().ends_with('1'), "{report}");
}
