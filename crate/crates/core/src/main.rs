use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use llmgg::engine::{Engine, Solution};
use llmgg::extract::extract_candidates;
use llmgg::harness::{self, Format, HarnessError, HarnessOptions, Journal};
use llmgg::llm::{build_provider, Provider, ProviderKind, ProvidersFile};
use llmgg::parser::{parse_game, parse_level};
use llmgg::prompt::{build, preset, GrammarRendering, PresetId, PromptConfig};
use llmgg::validator::{validate, validate_candidate, ValidationOptions};

#[derive(Parser)]
#[command(name = "llmgg", version, about = "Generate, validate and play-test VGDL games produced by language models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a prompt and optionally send it to a provider.
    Generate {
        #[arg(long, default_value = "p1")]
        preset: PresetId,
        #[arg(long, default_value = "maze game")]
        game: String,
        /// TOML prompt config; overrides --preset.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Print the prompt text.
        #[arg(long)]
        print_prompt: bool,
        /// Render grammar `textgreater` as `>`.
        #[arg(long)]
        normalized: bool,
        /// Providers file (or `builtin`); the first provider is used.
        #[arg(long)]
        provider: Option<String>,
    },
    /// Run trials for every provider and preset.
    Run {
        /// Providers file, or `builtin` for the embedded replay corpus.
        #[arg(long, default_value = "builtin")]
        providers: String,
        /// `all` or a comma-separated list such as `p1,p7`.
        #[arg(long, default_value = "all")]
        presets: String,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "maze game")]
        game: String,
        /// Discard any existing journal instead of resuming it.
        #[arg(long)]
        fresh: bool,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
    },
    /// Validate a game; exits 0 iff it is correct.
    Validate {
        rules: PathBuf,
        level: Option<PathBuf>,
        /// Treat the rules file as a raw model response and extract from it.
        #[arg(long)]
        response: bool,
        #[arg(long)]
        json: bool,
    },
    /// Decide winnability by breadth-first search.
    Solve {
        rules: PathBuf,
        level: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_steps: usize,
        /// Print the step-by-step trace of the winning plan.
        #[arg(long)]
        trace: bool,
    },
    /// Tabulate a journal.
    Report {
        journal: PathBuf,
        #[arg(long, default_value = "text")]
        format: Format,
    },
}

type CliResult = Result<ExitCode, String>;

fn read(path: &Path) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_providers(spec: &str) -> Result<Vec<Box<dyn Provider>>, String> {
    let file = if spec == "builtin" {
        ProvidersFile::builtin()
    } else {
        ProvidersFile::load(Path::new(spec)).map_err(|e| format!("{spec}: {e}"))?
    };
    if file.providers.is_empty() {
        return Err(format!("{spec}: no providers configured"));
    }
    file.providers.iter().map(|c| build_provider(c).map_err(|e| format!("{}: {e}", c.name))).collect()
}

fn parse_presets(s: &str) -> Result<Vec<PresetId>, String> {
    if s == "all" {
        return Ok(PresetId::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse().map_err(|e| format!("{e}"))).collect()
}

fn generate(
    id: PresetId,
    game: &str,
    config: Option<&Path>,
    print_prompt: bool,
    normalized: bool,
    provider: Option<&str>,
) -> CliResult {
    let mut cfg = match config {
        Some(path) => toml::from_str::<PromptConfig>(&read(path)?).map_err(|e| format!("{}: {e}", path.display()))?,
        None => preset(id, game),
    };
    if normalized {
        cfg.grammar = GrammarRendering::Normalized;
    }
    let prompt = build(&cfg).map_err(|e| e.to_string())?;
    let Some(spec) = provider else {
        println!("{}", prompt.text);
        return Ok(ExitCode::SUCCESS);
    };
    if print_prompt {
        println!("{}\n", prompt.text);
    }
    let providers = load_providers(spec)?;
    let response = providers[0].complete(&prompt).map_err(|e| e.to_string())?;
    println!("{response}");
    Ok(ExitCode::SUCCESS)
}

fn run(
    providers_spec: &str,
    presets: &str,
    trials: usize,
    out: &Path,
    game: &str,
    fresh: bool,
    max_steps: usize,
) -> CliResult {
    let presets = parse_presets(presets)?;
    let live = providers_spec != "builtin"
        && ProvidersFile::load(Path::new(providers_spec))
            .map(|f| f.providers.iter().any(|p| p.kind == ProviderKind::Live))
            .unwrap_or(false);
    let providers = load_providers(providers_spec)?;
    let opts = HarnessOptions { game_name: game.to_owned(), max_steps, record_wall_time: live, ..Default::default() };
    let mut journal = Journal::open(&out.join("journal.jsonl"), fresh).map_err(|e| e.to_string())?;
    let (records, code) = match harness::run_trials(&presets, &providers, trials, Some(&mut journal), &opts) {
        Ok(r) => (r, ExitCode::SUCCESS),
        Err(HarnessError::AllProvidersUnreachable { records }) => {
            error!("every provider was unreachable");
            (records, ExitCode::from(3))
        }
        Err(e) => return Err(e.to_string()),
    };
    let table = harness::tabulate(&records);
    for (name, format) in [("report.txt", Format::Text), ("report.tsv", Format::Tsv), ("report.jsonl", Format::Jsonl)] {
        let path = out.join(name);
        fs::write(&path, harness::render(&table, format)).map_err(|e| format!("{}: {e}", path.display()))?;
    }
    print!("{}", harness::render(&table, Format::Text));
    Ok(code)
}

fn validate_cmd(rules: &Path, level: Option<&Path>, response: bool, json: bool) -> CliResult {
    let rules_text = read(rules)?;
    let report = if response {
        match extract_candidates(&rules_text) {
            Ok(c) => validate_candidate(&c[0], &ValidationOptions::default()),
            Err(_) => validate(&rules_text, None),
        }
    } else {
        let level_text = level.map(read).transpose()?;
        validate(&rules_text, level_text.as_deref())
    };
    if json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!(
            "parsable={} logical={} mappable={} correct={} outcome={:?}",
            report.parsable, report.logical, report.mappable, report.correct, report.outcome
        );
        for e in &report.errors {
            println!("  {e}");
        }
    }
    Ok(if report.correct { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn solve_cmd(rules: &Path, level: &Path, max_steps: usize, trace: bool) -> CliResult {
    let spec = parse_game(&read(rules)?).map_err(|e| format!("{}: {e}", rules.display()))?;
    let grid = parse_level(&read(level)?, ' ').map_err(|e| format!("{}: {e}", level.display()))?;
    let engine = Engine::new(&spec, &grid).map_err(|e| e.to_string())?;
    let solution = engine.solve(max_steps);
    println!("{solution}");
    if let (true, Solution::Winnable { plan, .. }) = (trace, &solution) {
        for line in engine.trace(plan).map_err(|e| e.to_string())? {
            println!("{line}");
        }
    }
    Ok(match solution {
        Solution::Winnable { .. } => ExitCode::SUCCESS,
        _ => ExitCode::FAILURE,
    })
}

fn report_cmd(journal: &Path, format: Format) -> CliResult {
    let records = harness::read_journal(journal).map_err(|e| e.to_string())?;
    print!("{}", harness::render(&harness::tabulate(&records), format));
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { preset, game, config, print_prompt, normalized, provider } => {
            generate(preset, &game, config.as_deref(), print_prompt, normalized, provider.as_deref())
        }
        Command::Run { providers, presets, trials, out, game, fresh, max_steps } => {
            run(&providers, &presets, trials, &out, &game, fresh, max_steps)
        }
        Command::Validate { rules, level, response, json } => validate_cmd(&rules, level.as_deref(), response, json),
        Command::Solve { rules, level, max_steps, trace } => solve_cmd(&rules, &level, max_steps, trace),
        Command::Report { journal, format } => report_cmd(&journal, format),
    };
    match result {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
