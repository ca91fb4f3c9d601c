//! Trial runner, append-only journal, and report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ast::LevelGrid;
use crate::engine::{Engine, Solution};
use crate::extract::{extract_candidates_with, Candidate, ExtractOptions};
use crate::llm::{prompt_hash, Provider};
use crate::parser::{parse_game_with, parse_level};
use crate::prompt::{build, preset, GrammarRendering, PresetId};
use crate::validator::{validate_candidate, validate_with, ErrorCode, Outcome, ValidationOptions, ValidationReport};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("trial count must be at least 1")]
    NoTrials,
    #[error("every provider was unreachable")]
    AllProvidersUnreachable { records: Vec<TrialRecord> },
    #[error("journal {path}: {source}")]
    Journal { path: PathBuf, source: std::io::Error },
    #[error("journal {path} line {line}: {message}")]
    BadJournal { path: PathBuf, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Extraction {
    Candidates { count: usize, chosen: Candidate },
    Error { message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub provider: String,
    pub model: String,
    pub temperature: f64,
    pub preset: PresetId,
    pub trial_index: usize,
    pub prompt_hash: String,
    /// Provider failure; such a trial is Errored and excluded from counts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<Extraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solvable: Option<Solution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub engine_error: Option<String>,
    pub wall_time: Option<f64>,
}

impl TrialRecord {
    pub fn is_errored(&self) -> bool {
        self.error.is_some()
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.report.as_ref().map(|r| r.outcome)
    }

    fn key(&self) -> (String, PresetId, usize) {
        (self.provider.clone(), self.preset, self.trial_index)
    }
}

#[derive(Debug, Clone)]
pub struct HarnessOptions {
    pub game_name: String,
    pub grammar: GrammarRendering,
    pub extract: ExtractOptions,
    pub validation: ValidationOptions,
    /// Depth bound handed to the solver for correct games.
    pub max_steps: usize,
    /// Record elapsed seconds per trial. Off for replay runs so journals are
    /// reproducible byte for byte.
    pub record_wall_time: bool,
}

impl Default for HarnessOptions {
    fn default() -> Self {
        HarnessOptions {
            game_name: "maze game".to_owned(),
            grammar: GrammarRendering::Faithful,
            extract: ExtractOptions::default(),
            validation: ValidationOptions::default(),
            max_steps: 1000,
            record_wall_time: false,
        }
    }
}

fn solve_candidate(c: &Candidate, opts: &HarnessOptions) -> Result<Solution, String> {
    let spec = parse_game_with(&c.rules_text, &opts.validation.parse).map_err(|e| e.to_string())?;
    let text = c.level_text.as_deref().ok_or("no level")?;
    let background = opts.validation.background.first().copied().unwrap_or(' ');
    let level: LevelGrid = parse_level(text, background).map_err(|e| e.to_string())?;
    let engine = Engine::new(&spec, &level).map_err(|e| e.to_string())?;
    Ok(engine.solve(opts.max_steps))
}

/// Classifies one response: extract, validate, and solve when correct.
pub fn classify(response: &str, opts: &HarnessOptions) -> (Extraction, ValidationReport, Option<Result<Solution, String>>) {
    match extract_candidates_with(response, &opts.extract) {
        Ok(cands) => {
            let chosen = cands[0].clone();
            let report = validate_candidate(&chosen, &opts.validation);
            let solved = report.correct.then(|| solve_candidate(&chosen, opts));
            (Extraction::Candidates { count: cands.len(), chosen }, report, solved)
        }
        Err(e) => {
            // Nothing looked like a game; the whole response is what was offered.
            let report = validate_with(response, None, Default::default(), &opts.validation);
            (Extraction::Error { message: e.to_string() }, report, None)
        }
    }
}

pub fn run_one(
    provider: &dyn Provider,
    id: PresetId,
    trial_index: usize,
    opts: &HarnessOptions,
) -> TrialRecord {
    let mut cfg = preset(id, &opts.game_name);
    cfg.grammar = opts.grammar;
    let prompt = build(&cfg).expect("presets are valid");
    let started = Instant::now();
    let mut rec = TrialRecord {
        provider: provider.name().to_owned(),
        model: provider.model().to_owned(),
        temperature: provider.temperature(),
        preset: id,
        trial_index,
        prompt_hash: prompt_hash(&prompt.text),
        error: None,
        response: None,
        extraction: None,
        report: None,
        solvable: None,
        engine_error: None,
        wall_time: None,
    };
    match provider.complete(&prompt) {
        Err(e) => rec.error = Some(e.to_string()),
        Ok(response) => {
            let (extraction, report, solved) = classify(&response, opts);
            match solved {
                Some(Ok(s)) => rec.solvable = Some(s),
                Some(Err(e)) => rec.engine_error = Some(e),
                None => {}
            }
            rec.response = Some(response);
            rec.extraction = Some(extraction);
            rec.report = Some(report);
        }
    }
    if opts.record_wall_time {
        rec.wall_time = Some(started.elapsed().as_secs_f64());
    }
    rec
}

/// Append-only line-delimited record store.
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn open(path: &Path, fresh: bool) -> Result<Self, HarnessError> {
        let io = |source| HarnessError::Journal { path: path.to_owned(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(!fresh)
            .write(true)
            .truncate(fresh)
            .open(path)
            .map_err(io)?;
        Ok(Journal { path: path.to_owned(), file })
    }

    pub fn append(&mut self, rec: &TrialRecord) -> Result<(), HarnessError> {
        let line = serde_json::to_string(rec).expect("records serialize");
        writeln!(self.file, "{line}")
            .and_then(|_| self.file.flush())
            .map_err(|source| HarnessError::Journal { path: self.path.clone(), source })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_journal(path: &Path) -> Result<Vec<TrialRecord>, HarnessError> {
    let file = File::open(path).map_err(|source| HarnessError::Journal { path: path.to_owned(), source })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| HarnessError::Journal { path: path.to_owned(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(&line) {
            Ok(rec) => out.push(rec),
            // A torn final line from an interrupted run is dropped.
            Err(e) if e.is_eof() => warn!("{}: ignoring truncated line {}", path.display(), i + 1),
            Err(e) => {
                return Err(HarnessError::BadJournal { path: path.to_owned(), line: i + 1, message: e.to_string() })
            }
        }
    }
    Ok(out)
}

fn unreachable_error(e: &str) -> bool {
    ["network error", "request timed out", "authentication failed"].iter().any(|p| e.starts_with(p))
}

/// Runs `n` trials for every (provider, preset) pair, persisting each record
/// before the next starts. Trials already present in `journal` are skipped.
pub fn run_trials(
    presets: &[PresetId],
    providers: &[Box<dyn Provider>],
    n: usize,
    journal: Option<&mut Journal>,
    opts: &HarnessOptions,
) -> Result<Vec<TrialRecord>, HarnessError> {
    if n == 0 {
        return Err(HarnessError::NoTrials);
    }
    let mut done: BTreeMap<(String, PresetId, usize), TrialRecord> = BTreeMap::new();
    let mut journal = journal;
    if let Some(j) = journal.as_deref() {
        for rec in read_journal(j.path())? {
            done.insert(rec.key(), rec);
        }
        if !done.is_empty() {
            info!("resuming with {} journaled trials", done.len());
        }
    }
    let mut out = Vec::new();
    let mut attempted = 0;
    let mut unreachable = 0;
    for provider in providers {
        for &id in presets {
            for t in 0..n {
                let key = (provider.name().to_owned(), id, t);
                if let Some(rec) = done.remove(&key) {
                    out.push(rec);
                    continue;
                }
                let rec = run_one(provider.as_ref(), id, t, opts);
                attempted += 1;
                if rec.error.as_deref().is_some_and(unreachable_error) {
                    unreachable += 1;
                }
                if let Some(j) = journal.as_deref_mut() {
                    j.append(&rec)?;
                }
                out.push(rec);
            }
        }
    }
    if attempted > 0 && unreachable == attempted {
        return Err(HarnessError::AllProvidersUnreachable { records: out });
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowCounts {
    /// Non-errored trials.
    pub trials: usize,
    pub errored: usize,
    pub parsable: usize,
    pub logical: usize,
    pub mappable: usize,
    pub correct: usize,
    pub winnable: usize,
    pub errors: BTreeMap<ErrorCode, usize>,
    pub outcomes: BTreeMap<Outcome, usize>,
}

impl RowCounts {
    pub fn add(&mut self, rec: &TrialRecord) {
        let Some(report) = rec.report.as_ref().filter(|_| !rec.is_errored()) else {
            self.errored += 1;
            return;
        };
        self.trials += 1;
        self.parsable += report.parsable as usize;
        self.logical += report.logical as usize;
        self.mappable += report.mappable as usize;
        self.correct += report.correct as usize;
        self.winnable += matches!(rec.solvable, Some(Solution::Winnable { .. })) as usize;
        for code in report.codes() {
            *self.errors.entry(code).or_insert(0) += 1;
        }
        *self.outcomes.entry(report.outcome).or_insert(0) += 1;
    }

    pub fn merge(&mut self, other: &RowCounts) {
        self.trials += other.trials;
        self.errored += other.errored;
        self.parsable += other.parsable;
        self.logical += other.logical;
        self.mappable += other.mappable;
        self.correct += other.correct;
        self.winnable += other.winnable;
        for (k, v) in &other.errors {
            *self.errors.entry(*k).or_insert(0) += v;
        }
        for (k, v) in &other.outcomes {
            *self.outcomes.entry(*k).or_insert(0) += v;
        }
    }

    pub fn error(&self, code: ErrorCode) -> usize {
        self.errors.get(&code).copied().unwrap_or(0)
    }

    pub fn outcome(&self, o: Outcome) -> usize {
        self.outcomes.get(&o).copied().unwrap_or(0)
    }

    /// Logical is undefined when nothing parsed.
    pub fn logical_cell(&self) -> Option<usize> {
        (self.parsable > 0).then_some(self.logical)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: BTreeMap<(String, PresetId), RowCounts>,
}

impl ReportTable {
    pub fn add(&mut self, rec: &TrialRecord) {
        self.rows.entry((rec.provider.clone(), rec.preset)).or_default().add(rec);
    }

    pub fn merge(&mut self, other: &ReportTable) {
        for (k, row) in &other.rows {
            self.rows.entry(k.clone()).or_default().merge(row);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

pub fn tabulate(records: &[TrialRecord]) -> ReportTable {
    let mut t = ReportTable::default();
    for r in records {
        t.add(r);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Tsv,
    Jsonl,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(Format::Text),
            "tsv" => Ok(Format::Tsv),
            "jsonl" | "json-lines" => Ok(Format::Jsonl),
            _ => Err(format!("unknown format `{s}`")),
        }
    }
}

const OUTCOMES: [Outcome; 4] = [Outcome::G, Outcome::R, Outcome::L, Outcome::W];

pub fn render(table: &ReportTable, format: Format) -> String {
    match format {
        Format::Text => render_text(table),
        Format::Tsv => render_tsv(table),
        Format::Jsonl => render_jsonl(table),
    }
}

fn provider_width(table: &ReportTable) -> usize {
    table.rows.keys().map(|(p, _)| p.len()).max().unwrap_or(0).max("LLM".len())
}

fn render_text(table: &ReportTable) -> String {
    let pw = provider_width(table);
    let mut out = String::new();
    let cols = ["Trials", "Parsable", "Logical", "Mappable", "Correct", "Winnable", "Errored"];
    let _ = writeln!(out, "{:<pw$} Prompt {}", "LLM", cols.join(" "));
    for ((provider, id), row) in &table.rows {
        let logical = row.logical_cell().map_or("-".to_owned(), |n| n.to_string());
        let values = [
            row.trials.to_string(),
            row.parsable.to_string(),
            logical,
            row.mappable.to_string(),
            row.correct.to_string(),
            row.winnable.to_string(),
            row.errored.to_string(),
        ];
        let cells: Vec<String> = cols.iter().zip(values).map(|(h, v)| format!("{v:>w$}", w = h.len())).collect();
        let _ = writeln!(out, "{provider:<pw$} {:<6} {}", id.to_string(), cells.join(" "));
    }
    out.push('\n');
    let mut heads: Vec<&str> = ErrorCode::ALL.iter().map(|c| c.heading()).collect();
    heads.extend(["G", "R", "L", "W"]);
    let _ = writeln!(out, "{:<pw$} Prompt {}", "LLM", heads.join(" "));
    for ((provider, id), row) in &table.rows {
        let mut values: Vec<usize> = ErrorCode::ALL.iter().map(|c| row.error(*c)).collect();
        values.extend(OUTCOMES.iter().map(|o| row.outcome(*o)));
        let cells: Vec<String> = heads.iter().zip(values).map(|(h, v)| format!("{v:>w$}", w = h.len())).collect();
        let _ = writeln!(out, "{provider:<pw$} {:<6} {}", id.to_string(), cells.join(" "));
    }
    out
}

fn render_tsv(table: &ReportTable) -> String {
    let mut header: Vec<&str> =
        vec!["provider", "preset", "trials", "errored", "parsable", "logical", "mappable", "correct", "winnable"];
    header.extend(ErrorCode::ALL.iter().map(|c| c.as_str()));
    header.extend(["G", "R", "L", "W"]);
    let mut out = header.join("\t");
    out.push('\n');
    for ((provider, id), row) in &table.rows {
        let mut cells = vec![
            provider.clone(),
            id.to_string(),
            row.trials.to_string(),
            row.errored.to_string(),
            row.parsable.to_string(),
            row.logical_cell().map_or("null".to_owned(), |n| n.to_string()),
            row.mappable.to_string(),
            row.correct.to_string(),
            row.winnable.to_string(),
        ];
        cells.extend(ErrorCode::ALL.iter().map(|c| row.error(*c).to_string()));
        cells.extend(OUTCOMES.iter().map(|o| row.outcome(*o).to_string()));
        out.push_str(&cells.join("\t"));
        out.push('\n');
    }
    out
}

fn render_jsonl(table: &ReportTable) -> String {
    let mut out = String::new();
    for ((provider, id), row) in &table.rows {
        let errors: serde_json::Map<String, serde_json::Value> =
            ErrorCode::ALL.iter().map(|c| (c.as_str().to_owned(), row.error(*c).into())).collect();
        let outcomes: serde_json::Map<String, serde_json::Value> =
            OUTCOMES.iter().map(|o| (format!("{o:?}"), row.outcome(*o).into())).collect();
        let value = serde_json::json!({
            "provider": provider,
            "preset": id,
            "trials": row.trials,
            "errored": row.errored,
            "parsable": row.parsable,
            "logical": row.logical_cell(),
            "mappable": row.mappable,
            "correct": row.correct,
            "winnable": row.winnable,
            "errors": errors,
            "outcomes": outcomes,
        });
        out.push_str(&value.to_string());
        out.push('\n');
    }
    out
}

/// Records as JSON lines, the journal format.
pub fn render_records(records: &[TrialRecord]) -> String {
    records.iter().map(|r| serde_json::to_string(r).expect("records serialize") + "\n").collect()
}

/// Providers for which every attempted trial failed.
pub fn failing_providers(records: &[TrialRecord]) -> BTreeSet<String> {
    let mut seen: BTreeMap<&str, bool> = BTreeMap::new();
    for r in records {
        let all_failed = seen.entry(&r.provider).or_insert(true);
        *all_failed &= r.is_errored();
    }
    seen.into_iter().filter(|(_, f)| *f).map(|(p, _)| p.to_owned()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{build_provider, ProviderConfig};

    fn providers(names: &[&str]) -> Vec<Box<dyn Provider>> {
        names.iter().map(|n| build_provider(&ProviderConfig::builtin(n)).unwrap()).collect()
    }

    #[test]
    fn gpt4_p7_is_all_g() {
        let recs = run_trials(&[PresetId::P7], &providers(&["gpt-4"]), 10, None, &HarnessOptions::default()).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().all(|r| r.outcome() == Some(Outcome::G)));
        assert!(recs.iter().all(|r| matches!(r.solvable, Some(Solution::Winnable { .. }))));
        let t = tabulate(&recs);
        let row = &t.rows[&("gpt-4".to_owned(), PresetId::P7)];
        assert_eq!((row.parsable, row.logical, row.mappable, row.correct), (10, 10, 10, 10));
        assert_eq!(row.outcome(Outcome::G), 10);
    }

    #[test]
    fn empty_replay_gives_errored_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(&path, "").unwrap();
        let cfg = ProviderConfig { name: "x".into(), transcript_path: Some(path), ..ProviderConfig::default() };
        let p: Vec<Box<dyn Provider>> = vec![build_provider(&cfg).unwrap()];
        let recs = run_trials(&[PresetId::P1], &p, 10, None, &HarnessOptions::default()).unwrap();
        assert_eq!(recs.len(), 10);
        assert!(recs.iter().all(|r| r.is_errored() && r.report.is_none()));
        let row = &tabulate(&recs).rows[&("x".to_owned(), PresetId::P1)];
        assert_eq!((row.trials, row.errored), (0, 10));
        assert_eq!(failing_providers(&recs), BTreeSet::from(["x".to_owned()]));
    }

    #[test]
    fn unreachable_live_provider_aborts() {
        let cfg = ProviderConfig {
            name: "down".into(),
            kind: crate::llm::ProviderKind::Live,
            endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
            model: "m".into(),
            attempts: 1,
            timeout_secs: 2,
            ..ProviderConfig::default()
        };
        let p: Vec<Box<dyn Provider>> = vec![build_provider(&cfg).unwrap()];
        match run_trials(&[PresetId::P1], &p, 2, None, &HarnessOptions::default()) {
            Err(HarnessError::AllProvidersUnreachable { records }) => assert_eq!(records.len(), 2),
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn empty_table_renders() {
        let t = tabulate(&[]);
        assert!(t.is_empty());
        let tsv = render(&t, Format::Tsv);
        assert_eq!(tsv.lines().count(), 1);
        assert!(tsv.starts_with("provider\tpreset\t"));
        assert_eq!(render(&t, Format::Jsonl), "");
    }

    #[test]
    fn text_header_and_blank_logical() {
        let recs = run_trials(&[PresetId::P1, PresetId::P7], &providers(&["gemma-7b", "gpt-4"]), 1, None, &HarnessOptions::default())
            .unwrap();
        let text = render(&tabulate(&recs), Format::Text);
        assert!(text.contains("Parsable Logical Mappable Correct"));
        let gemma_p1 = text.lines().find(|l| l.starts_with("gemma-7b P1")).unwrap();
        assert_eq!(gemma_p1.split_whitespace().nth(4), Some("-"));
        let jsonl = render(&tabulate(&recs), Format::Jsonl);
        assert!(jsonl.lines().next().unwrap().contains("\"logical\":null"));
        let g = recs.iter().find(|r| r.outcome() == Some(Outcome::G)).unwrap();
        assert!(render_records(std::slice::from_ref(g)).contains("\"outcome\":\"G\""));
    }

    #[test]
    fn journal_resume_skips_done_trials() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.jsonl");
        let opts = HarnessOptions::default();
        let mut j = Journal::open(&path, true).unwrap();
        let first = run_trials(&[PresetId::P7], &providers(&["gpt-4"]), 2, Some(&mut j), &opts).unwrap();
        drop(j);
        let mut j = Journal::open(&path, false).unwrap();
        let second = run_trials(&[PresetId::P7], &providers(&["gpt-4"]), 3, Some(&mut j), &opts).unwrap();
        assert_eq!(second.len(), 3);
        assert_eq!(&second[..2], &first[..]);
        assert_eq!(read_journal(&path).unwrap().len(), 3);
    }
}
