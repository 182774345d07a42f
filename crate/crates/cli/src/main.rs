use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kbqa::io::{
    build_relation_detection_task, parse_override, read_gold_parses, read_task, write_task, AnswerRecord, RunConfig,
};
use kbqa::kb::KnowledgeBase;
use kbqa::linker::{link_top_k, read_prelinked, resolve_prelinked, PrelinkedEntry};
use kbqa::pipeline::Pipeline;
use kbqa::scorers::{Ensemble, RelationDetector, RelationScorer};
use kbqa::trainer::{build_vocab, evaluate_accuracy_parallel, train, train_with_dev, TrainingExample};

#[derive(Parser)]
#[command(name = "kbqa", version, about = "Relation detection and question answering over a triple store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a relation detector on a task file and write a checkpoint.
    Train {
        #[arg(long)]
        task: PathBuf,
        /// Held-out task file; the best epoch on it is kept.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch JSON lines.
        #[arg(long)]
        report: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the relation detection accuracy of one or more checkpoints.
    EvalRel {
        #[arg(long)]
        task: PathBuf,
        /// Repeat to average several detectors.
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Print the top-k linked entities of a question.
    Link {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        question: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Answer one question.
    Answer {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        question: String,
        /// Pre-linked entities file, used with --qid.
        #[arg(long, requires = "qid")]
        prelinked: Option<PathBuf>,
        #[arg(long)]
        qid: Option<String>,
        /// Print the full answer record as JSON.
        #[arg(long)]
        json: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Answer every gold parse and print the fraction whose entity and chain match.
    PipelineEval {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long = "checkpoint", required = true)]
        checkpoints: Vec<PathBuf>,
        #[arg(long)]
        parses: PathBuf,
        #[arg(long)]
        prelinked: Option<PathBuf>,
        /// Per-question answer records as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write the relation detection task built from gold parses.
    BuildTask {
        #[command(flatten)]
        kb: KbArgs,
        #[arg(long)]
        parses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct KbArgs {
    #[arg(long)]
    triples: PathBuf,
    /// Entity catalog: key, name, kind.
    #[arg(long)]
    entities: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. --set alpha=0.5.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
}

impl From<kbqa::Error> for Failure {
    fn from(e: kbqa::Error) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

type Outcome<T> = Result<T, Failure>;

fn open(path: &Path) -> Outcome<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Outcome<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Data(e.to_string())
}

impl ConfigArgs {
    fn load(&self) -> Outcome<RunConfig> {
        let file = match &self.config {
            Some(p) => Some(open(p).map_err(|e| Failure::Config(e.to_string()))?),
            None => None,
        };
        let overrides = self
            .overrides
            .iter()
            .map(|s| parse_override(s))
            .collect::<kbqa::Result<Vec<_>>>()?;
        Ok(RunConfig::load(file, &overrides)?)
    }
}

impl KbArgs {
    fn load(&self) -> Outcome<KnowledgeBase> {
        let triples = open(&self.triples)?;
        let catalog = self.entities.as_deref().map(open).transpose()?;
        Ok(KnowledgeBase::load(triples, catalog)?)
    }
}

fn load_examples(path: &Path) -> Outcome<Vec<TrainingExample>> {
    let records = read_task(open(path)?).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
    Ok(records.iter().map(|r| r.to_example()).collect::<kbqa::Result<_>>()?)
}

fn load_scorer(paths: &[PathBuf]) -> Outcome<Ensemble> {
    let mut members: Vec<(String, Box<dyn RelationScorer + Send + Sync>)> = Vec::new();
    for p in paths {
        let det = RelationDetector::load(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
        members.push((p.display().to_string(), Box::new(det)));
    }
    Ok(Ensemble::new(members)?)
}

fn load_prelinked(path: Option<&Path>) -> Outcome<Option<BTreeMap<String, Vec<PrelinkedEntry>>>> {
    path.map(|p| read_prelinked(open(p)?).map_err(|e| Failure::Data(format!("{}: {e}", p.display()))))
        .transpose()
}

fn run(cli: Cli) -> Outcome<()> {
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Train {
            task,
            dev,
            out: ckpt,
            report,
            config,
        } => {
            let cfg = config.load()?;
            let data = load_examples(&task)?;
            let dev = dev.as_deref().map(load_examples).transpose()?;
            let vocab = build_vocab(data.iter().chain(dev.iter().flatten()));
            let mut model = RelationDetector::new(cfg.scorer, vocab, cfg.train.seed)?;
            let rep = match &dev {
                Some(d) => train_with_dev(&mut model, &data, d, &cfg.train)?,
                None => train(&mut model, &data, &cfg.train)?,
            };
            model.save(&ckpt)?;
            if let Some(path) = report {
                let mut w = create(&path)?;
                rep.write_jsonl(&mut w)?;
                w.flush().map_err(io_failure)?;
            }
            if let Some(last) = rep.epochs.last() {
                eprintln!(
                    "trained {} epochs, final loss {:.4}, train accuracy {:.3}",
                    last.epoch, last.mean_loss, last.train_accuracy
                );
            }
        }
        Command::EvalRel {
            task,
            checkpoints,
            workers,
        } => {
            if workers == 0 {
                return Err(Failure::Config("workers must be at least 1".into()));
            }
            let data = load_examples(&task)?;
            let scorer = load_scorer(&checkpoints)?;
            let acc = evaluate_accuracy_parallel(&scorer, &data, workers)?;
            writeln!(out, "{acc:.3}").map_err(io_failure)?;
        }
        Command::Link { kb, question, config } => {
            let cfg = config.load()?;
            let kb = kb.load()?;
            for l in link_top_k(&question, &kb, cfg.pipeline.k)? {
                let e = kb.entity(l.entity);
                writeln!(out, "{}\t{}\t{}\t{:.6}", e.key, e.name, l.mention.text, l.score).map_err(io_failure)?;
            }
        }
        Command::Answer {
            kb,
            checkpoints,
            question,
            prelinked,
            qid,
            json,
            config,
        } => {
            let cfg = config.load()?;
            let kb = kb.load()?;
            let scorer = load_scorer(&checkpoints)?;
            let pipeline = Pipeline::new(&kb, &scorer, cfg.pipeline)?;
            let qid = qid.unwrap_or_default();
            let result = match load_prelinked(prelinked.as_deref())? {
                Some(map) => {
                    let entries = map.get(&qid).map(Vec::as_slice).unwrap_or_default();
                    let linked = resolve_prelinked(&kb, &question, entries, pipeline.config.k)?;
                    pipeline.answer_with_links(&question, linked)
                }
                None => pipeline.answer_question(&question),
            };
            if json {
                let rec = AnswerRecord::new(&kb, &qid, &question, &result);
                writeln!(out, "{}", rec.to_json()?).map_err(io_failure)?;
            } else {
                match result {
                    Ok(a) => {
                        for e in &a.answers {
                            writeln!(out, "{}", kb.entity(*e).name).map_err(io_failure)?;
                        }
                    }
                    Err(u) => eprintln!("unanswerable: {u}"),
                }
            }
        }
        Command::PipelineEval {
            kb,
            checkpoints,
            parses,
            prelinked,
            out: records,
            config,
        } => {
            let cfg = config.load()?;
            let kb = kb.load()?;
            let parses = read_gold_parses(open(&parses)?)?;
            let scorer = load_scorer(&checkpoints)?;
            let pipeline = Pipeline::new(&kb, &scorer, cfg.pipeline)?;
            let prelinked = load_prelinked(prelinked.as_deref())?;
            let mut sink = records.as_deref().map(create).transpose()?;
            let mut hits = 0usize;
            for p in &parses {
                let result = match &prelinked {
                    Some(map) => {
                        let entries = map.get(&p.qid).map(Vec::as_slice).unwrap_or_default();
                        let linked = resolve_prelinked(&kb, &p.question, entries, pipeline.config.k)?;
                        pipeline.answer_with_links(&p.question, linked)
                    }
                    None => pipeline.answer_question(&p.question),
                };
                if let Ok(a) = &result {
                    let chain: Vec<&str> = kb.chain_names(&a.query.chain);
                    if kb.entity(a.query.entity).key == p.topic && chain == p.chain {
                        hits += 1;
                    }
                }
                if let Some(w) = sink.as_mut() {
                    let rec = AnswerRecord::new(&kb, &p.qid, &p.question, &result);
                    writeln!(w, "{}", rec.to_json()?).map_err(io_failure)?;
                }
            }
            if let Some(mut w) = sink {
                w.flush().map_err(io_failure)?;
            }
            let acc = if parses.is_empty() {
                0.0
            } else {
                hits as f64 / parses.len() as f64
            };
            writeln!(out, "{acc:.3}").map_err(io_failure)?;
        }
        Command::BuildTask { kb, parses, out: path } => {
            let kb = kb.load()?;
            let parses = read_gold_parses(open(&parses)?)?;
            let (records, skipped) = build_relation_detection_task(&kb, &parses)?;
            let mut w = create(&path)?;
            write_task(&mut w, &records)?;
            w.flush().map_err(io_failure)?;
            eprintln!("{} records written, {skipped} parses skipped", records.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            match f {
                Failure::Config(_) => ExitCode::from(2),
                Failure::Data(_) => ExitCode::from(3),
            }
        }
    }
}
