//! `salrank` command line: dict | forge | synth | train | eval | ablate | plot.
//!
//! Every subcommand resolves its effective config (defaults < `--config`
//! file < `--set` < dedicated flags) and writes into `<out>/<fingerprint>/`.
//! Exit status: 0 success, 2 usage errors, 3 config errors, 1 anything else.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{error::ErrorKind, Parser, Subcommand};
use serde_json::json;
use thiserror::Error;

use crate::config::{ConfigError, GridChoice, RunConfig};
use crate::corpus::{load_annotations, save_negatives, Filler, NegativeRecord, Split, WriteMode};
use crate::experiment::{
    ablate, coarse_grid, fine_grid, prepare_synthetic, run_experiment, score_split, PreparedData,
    RunSpec, SampleScores,
};
use crate::forge::llm::{fill_llm_many, LlmJob, NegativeCache};
use crate::forge::{build_hierarchy, forge_lexicon_hierarchy, ForgeError, HttpChatEndpoint};
use crate::model::ModelParams;
use crate::plot::PlotData;
use crate::synth::gen_corpus;
use crate::tagger::{build_dictionary, tag_query, Lexicon, PrimitiveDictionary, TaggedQuery};
use crate::util::fingerprint;

#[derive(Debug, Parser)]
#[command(name = "salrank", version, about = "Hard-negative forging and saliency ranking losses for temporal grounding")]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Config override, repeatable: `--set train.lr=0.05`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Parent directory of run directories.
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Tag an annotation file and build the primitive dictionary.
    Dict {
        #[arg(long)]
        annotations: PathBuf,
        /// `word<TAB>class` lexicon replacing the bundled one.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        /// Split whose queries are counted.
        #[arg(long, default_value = "train")]
        split: String,
    },
    /// Forge three levels of hard negatives for every query.
    Forge {
        #[arg(long)]
        annotations: PathBuf,
        /// Dictionary from `dict`; built from the train split when absent.
        #[arg(long)]
        dictionary: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long)]
        filler: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write the synthetic corpus annotations and metadata.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the toy scorer on the synthetic corpus.
    Train {
        #[arg(long)]
        seed: Option<u64>,
        /// Score the test splits after every epoch (slower).
        #[arg(long)]
        eval_each_epoch: bool,
    },
    /// Evaluate a checkpoint on the synthetic test splits.
    Eval {
        /// Defaults to the run directory's checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train and evaluate every loss configuration of a grid on every seed.
    Ablate {
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        seeds: Option<String>,
    },
    /// Emit plot data and an SVG for one evaluated sample.
    Plot {
        #[arg(long)]
        sample: String,
        /// Scores file from `eval`; defaults to the run directory's.
        #[arg(long)]
        scores: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error("{0}")]
    Tagger(#[from] crate::tagger::TaggerError),
    #[error("{0}")]
    Forge(#[from] ForgeError),
    #[error("{0}")]
    Synth(#[from] crate::synth::SynthError),
    #[error("{0}")]
    Model(#[from] crate::model::ModelError),
    #[error("{0}")]
    Experiment(#[from] crate::experiment::ExperimentError),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Corpus(_) => "corpus",
            CliError::Tagger(_) => "tagger",
            CliError::Forge(_) => "forge",
            CliError::Synth(_) => "synth",
            CliError::Model(_) => "model",
            CliError::Experiment(_) => "experiment",
            CliError::Input(_) => "input",
            CliError::Io(_) => "io",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            _ => 1,
        }
    }
}

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => {
                    eprint!("error[unknown-subcommand]: {e}");
                    2
                }
                _ => {
                    eprint!("error[usage]: {e}");
                    2
                }
            }
        }
    };
    match dispatch(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<PathBuf, CliError> {
    let mut overrides = cli.set.clone();
    let flag = |o: &mut Vec<String>, key: &str, v: Option<String>| {
        if let Some(v) = v {
            o.push(format!("{key}={v}"));
        }
    };
    match &cli.cmd {
        Cmd::Forge { ratios, filler, seed, .. } => {
            flag(&mut overrides, "forge.ratios", ratios.clone());
            flag(&mut overrides, "forge.filler", filler.clone());
            flag(&mut overrides, "forge.seed", seed.map(|s| s.to_string()));
        }
        Cmd::Synth { seed } => flag(&mut overrides, "synth.seed", seed.map(|s| s.to_string())),
        Cmd::Train { seed, .. } | Cmd::Eval { seed, .. } => {
            flag(&mut overrides, "seeds", seed.map(|s| s.to_string()))
        }
        Cmd::Ablate { grid, workers, seeds } => {
            flag(&mut overrides, "ablate.grid", grid.clone());
            flag(&mut overrides, "ablate.workers", workers.map(|w| w.to_string()));
            flag(&mut overrides, "seeds", seeds.clone());
        }
        Cmd::Dict { .. } | Cmd::Plot { .. } => {}
    }
    let cfg = RunConfig::layered(cli.config.as_deref(), &overrides)?;

    match cli.cmd {
        Cmd::Dict { annotations, lexicon, split } => {
            cmd_dict(&cfg, &cli.out, &annotations, lexicon.as_deref(), &split)
        }
        Cmd::Forge { annotations, dictionary, lexicon, .. } => {
            cmd_forge(&cfg, &cli.out, &annotations, dictionary.as_deref(), lexicon.as_deref())
        }
        Cmd::Synth { .. } => cmd_synth(&cfg, &cli.out),
        Cmd::Train { eval_each_epoch, .. } => cmd_train(&cfg, &cli.out, eval_each_epoch),
        Cmd::Eval { checkpoint, .. } => cmd_eval(&cfg, &cli.out, checkpoint.as_deref()),
        Cmd::Ablate { .. } => cmd_ablate(&cfg, &cli.out),
        Cmd::Plot { sample, scores } => cmd_plot(&cfg, &cli.out, &sample, scores.as_deref()),
    }
}

/// Creates `<out>/<fingerprint>` and records the effective config there.
/// `inputs` are files whose contents also feed the fingerprint.
fn run_dir(cfg: &RunConfig, out: &Path, inputs: &[&Path]) -> Result<PathBuf, CliError> {
    let mut text = cfg.to_text();
    for p in inputs {
        let bytes = fs::read(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        text.push_str(&fingerprint(&String::from_utf8_lossy(&bytes)));
        text.push('\n');
    }
    let dir = out.join(fingerprint(&text));
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("config.cfg"), cfg.to_text())?;
    Ok(dir)
}

fn load_lexicon(path: Option<&Path>) -> Result<Lexicon, CliError> {
    Ok(match path {
        Some(p) => Lexicon::load(p)?,
        None => Lexicon::bundled(),
    })
}

fn tagged_queries(annotations: &Path, lexicon: &Lexicon) -> Result<Vec<(Split, TaggedQuery)>, CliError> {
    load_annotations(annotations)?
        .into_iter()
        .map(|a| Ok((a.split, tag_query(a.query_id, &a.query_text, lexicon)?)))
        .collect()
}

fn parse_split(s: &str) -> Result<Split, CliError> {
    Split::ALL
        .into_iter()
        .find(|x| x.as_str() == s)
        .ok_or_else(|| CliError::Input(format!("unknown split {s:?}")))
}

fn dictionary_for(queries: &[(Split, TaggedQuery)], split: Split) -> Result<PrimitiveDictionary, CliError> {
    let chosen: Vec<TaggedQuery> = queries
        .iter()
        .filter(|(s, _)| *s == split)
        .map(|(_, q)| q.clone())
        .collect();
    Ok(build_dictionary(&chosen, split.as_str())?)
}

fn cmd_dict(
    cfg: &RunConfig,
    out: &Path,
    annotations: &Path,
    lexicon: Option<&Path>,
    split: &str,
) -> Result<PathBuf, CliError> {
    let split = parse_split(split)?;
    let mut inputs = vec![annotations];
    inputs.extend(lexicon);
    let dir = run_dir(cfg, out, &inputs)?;
    let queries = tagged_queries(annotations, &load_lexicon(lexicon)?)?;
    let dict = dictionary_for(&queries, split)?;
    dict.save(&dir.join("dictionary.json"))?;
    let tagged: String = queries
        .iter()
        .map(|(_, q)| serde_json::to_string(q).expect("tagged query serializes") + "\n")
        .collect();
    fs::write(dir.join("tagged.jsonl"), tagged)?;
    Ok(dir)
}

fn cmd_forge(
    cfg: &RunConfig,
    out: &Path,
    annotations: &Path,
    dictionary: Option<&Path>,
    lexicon: Option<&Path>,
) -> Result<PathBuf, CliError> {
    let mut inputs = vec![annotations];
    inputs.extend(dictionary);
    inputs.extend(lexicon);
    let dir = run_dir(cfg, out, &inputs)?;
    let queries = tagged_queries(annotations, &load_lexicon(lexicon)?)?;
    let dict = match dictionary {
        Some(p) => PrimitiveDictionary::load(p)?,
        None => dictionary_for(&queries, Split::Train)?,
    };

    let mut records: Vec<NegativeRecord> = Vec::new();
    let mut skipped = Vec::new();
    let mut llm_stats = json!(null);
    match cfg.filler {
        Filler::Lexicon => {
            for (_, q) in &queries {
                match forge_lexicon_hierarchy(q, cfg.forge.ratios, &dict, cfg.forge.seed, cfg.forge.weighting) {
                    Ok(hn) => records.extend(hn),
                    Err(e @ (ForgeError::NoPrimitives(_) | ForgeError::ExhaustedClass(_))) => {
                        skipped.push(json!({"query_id": q.query_id, "reason": e.to_string()}))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Filler::Llm => {
            let url = cfg
                .llm
                .endpoint
                .as_deref()
                .ok_or(ConfigError::BadValue {
                    key: "llm.endpoint".into(),
                    value: String::new(),
                    reason: "required when forge.filler = llm".into(),
                })?;
            let endpoint = HttpChatEndpoint::from_env(url, &cfg.llm.key_env, &cfg.llm.model)?;
            let mut plans = Vec::new();
            for (_, q) in &queries {
                match build_hierarchy(q, cfg.forge.ratios) {
                    Ok(p) => plans.push((q, p)),
                    Err(e @ ForgeError::NoPrimitives(_)) => {
                        skipped.push(json!({"query_id": q.query_id, "reason": e.to_string()}))
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let jobs: Vec<LlmJob> = plans
                .iter()
                .flat_map(|(q, ps)| {
                    ps.iter()
                        .zip(crate::corpus::Level::ALL)
                        .map(move |(plan, level)| LlmJob { plan, query: q, level })
                })
                .collect();
            // shared across runs so repeated forging reuses earlier answers
            let mut cache = NegativeCache::open(&out.join("llm_cache.jsonl"))?;
            let outcomes = fill_llm_many(&jobs, &dict, &cfg.prompt_config(), &endpoint, &mut cache, cfg.llm.in_flight)?;
            llm_stats = json!({
                "cache_hits": outcomes.iter().filter(|o| o.cached).count(),
                "endpoint_calls": outcomes.iter().map(|o| o.attempts as usize).sum::<usize>(),
                "fallbacks": outcomes.iter().filter(|o| o.record.fallback).count(),
            });
            records.extend(outcomes.into_iter().map(|o| o.record));
        }
    }
    save_negatives(&records, &dir.join("negatives.jsonl"), WriteMode::Overwrite)?;
    let summary = json!({
        "queries": queries.len(),
        "records": records.len(),
        "skipped": skipped,
        "llm": llm_stats,
    });
    fs::write(dir.join("forge_summary.json"), format!("{summary:#}\n"))?;
    eprintln!("forged {} records from {} queries ({} skipped)", records.len(), queries.len(), skipped.len());
    Ok(dir)
}

fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    let dir = run_dir(cfg, out, &[])?;
    gen_corpus(&cfg.synth, cfg.synth_seed)?.write(&dir.join("corpus"))?;
    Ok(dir)
}

fn prepare(cfg: &RunConfig) -> Result<PreparedData, CliError> {
    let corpus = gen_corpus(&cfg.synth, cfg.synth_seed)?;
    Ok(prepare_synthetic(&corpus, &cfg.forge)?)
}

fn run_spec(cfg: &RunConfig, data: &PreparedData) -> RunSpec {
    RunSpec {
        objective: cfg.objective,
        train: cfg.train_config(cfg.seeds[0]),
        model: cfg.model_config(data.vocab.len()),
    }
}

fn cmd_train(cfg: &RunConfig, out: &Path, eval_each_epoch: bool) -> Result<PathBuf, CliError> {
    let dir = run_dir(cfg, out, &[])?;
    let data = prepare(cfg)?;
    let spec = run_spec(cfg, &data);
    let mut trace = fs::File::create(dir.join("trace.jsonl"))?;
    let res = run_experiment(&data, &spec, eval_each_epoch, Some(&mut trace))?;
    res.outcome.params.save(&dir.join("checkpoint.txt"))?;
    fs::write(dir.join("train_eval.json"), serde_json::to_string_pretty(&res.report).expect("report serializes") + "\n")?;
    Ok(dir)
}

fn cmd_eval(cfg: &RunConfig, out: &Path, checkpoint: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = run_dir(cfg, out, &[])?;
    let ckpt = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| dir.join("checkpoint.txt"));
    if !ckpt.exists() {
        return Err(CliError::Input(format!(
            "checkpoint {} not found; run `train` with the same config first",
            ckpt.display()
        )));
    }
    let params = ModelParams::load(&ckpt)?;
    let data = prepare(cfg)?;
    let seed = cfg.seeds[0];
    let mut splits = std::collections::BTreeMap::new();
    let mut lines = String::new();
    for (split, samples) in &data.tests {
        let scores = score_split(&params, samples, cfg.objective.coarse.q, seed)?;
        let m = crate::experiment::metrics_from_scores(&scores)
            .map_err(crate::experiment::ExperimentError::from)?;
        splits.insert(split.as_str().to_string(), m);
        for s in &scores {
            lines += &(serde_json::to_string(s).expect("scores serialize") + "\n");
        }
    }
    let report = crate::eval::EvalReport {
        fingerprint: run_spec(cfg, &data).fingerprint(),
        seed,
        splits,
    };
    fs::write(dir.join("eval.json"), serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    fs::write(dir.join("scores.jsonl"), lines)?;
    for (split, m) in &report.splits {
        eprintln!(
            "{split:<18} R1@0.5 {:.3}  R1@0.7 {:.3}  mIoU {:.3}  ordering {:.3}  violations {:.3}",
            m.r1_05, m.r1_07, m.miou, m.ordering_accuracy, m.hierarchy_violation_rate
        );
    }
    Ok(dir)
}

fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<PathBuf, CliError> {
    let dir = run_dir(cfg, out, &[])?;
    let data = prepare(cfg)?;
    let grid = match cfg.grid {
        GridChoice::Coarse => coarse_grid(),
        GridChoice::Fine => fine_grid(),
        GridChoice::All => {
            let mut g = coarse_grid();
            // the fine grid's first row is the base configuration again
            g.extend(fine_grid().into_iter().skip(1));
            g
        }
    };
    let model = cfg.model_config(data.vocab.len());
    let table = ablate(&grid, &data, &cfg.seeds, &cfg.train, &model, cfg.workers)?;
    fs::write(dir.join("table.json"), table.to_json())?;
    let text = table.render();
    fs::write(dir.join("table.txt"), &text)?;
    eprint!("{text}");
    Ok(dir)
}

fn cmd_plot(cfg: &RunConfig, out: &Path, sample: &str, scores: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = run_dir(cfg, out, &[])?;
    let path = scores.map(Path::to_path_buf).unwrap_or_else(|| dir.join("scores.jsonl"));
    let text = fs::read_to_string(&path).map_err(|e| {
        CliError::Input(format!("{}: {e}; run `eval` with the same config first", path.display()))
    })?;
    let find = |id: &str| -> Result<Option<SampleScores>, CliError> {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let s: SampleScores = serde_json::from_str(line)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            if s.id == id {
                return Ok(Some(s));
            }
        }
        Ok(None)
    };
    let s = find(sample)?.ok_or_else(|| CliError::Input(format!("sample {sample:?} not in {}", path.display())))?;

    let data = prepare(cfg)?;
    let item = data
        .tests
        .values()
        .flatten()
        .find(|x| x.id == s.id)
        .ok_or_else(|| CliError::Input(format!("sample {sample:?} not in the configured corpus")))?;
    let easy = data.tests.values().flatten().find(|x| x.id == s.easy_id);
    let words = data.vocab.words();
    let decode = |ids: &[usize]| ids.iter().map(|&i| words[i].as_str()).collect::<Vec<_>>().join(" ");
    let queries = [
        decode(&item.queries[0]),
        decode(&item.queries[1]),
        decode(&item.queries[2]),
        decode(&item.queries[3]),
        easy.map(|e| decode(&e.queries[0])).unwrap_or_default(),
    ];
    let plot = PlotData::from_scores(&s, queries);
    fs::write(dir.join(format!("plot-{sample}.json")), plot.to_json())?;
    fs::write(dir.join(format!("plot-{sample}.svg")), plot.to_svg())?;
    Ok(dir)
}
