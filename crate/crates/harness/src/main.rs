use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use tablequery::corpus::{index_table, Corpus};
use tablequery::eval::{predictions, summarize, EvalConfig};
use tablequery::service::{self, AppState, ServiceConfig};
use tablequery::synthetic::{generate, toy_tables, type_counts, GenConfig};
use tablequery::wikisql;
use tablequery_core::abstraction::SynonymDict;
use tablequery_core::chart::{parse_all, parse_best, SurfaceMode};
use tablequery_core::exec::execute;
use tablequery_core::pipeline::{answer, Resources};
use tablequery_core::rules;
use tablequery_core::scoring::{io as model_io, neural, Model, NeuralDims, NeuralModel, ScorerConfig, SparseModel};
use tablequery_core::sql::parse_sql;
use tablequery_core::table::Table;
use tablequery_core::training::{label_all, train, EpochReport, TrainerConfig, TrainingExample};
use tablequery_core::vocab::{English, Vocabulary};

#[derive(Parser)]
#[command(name = "tablequery", version, about = "Ask questions about a table in plain English")]
struct Cli {
    /// Model file; an untrained sparse model is used when absent.
    #[arg(long, global = true, env = "TQ_MODEL")]
    model: Option<PathBuf>,
    /// Common-word vocabulary file (defaults to the bundled English list).
    #[arg(long, global = true)]
    vocab: Option<PathBuf>,
    /// Synonym file: `phrase<TAB>column or value` per line.
    #[arg(long, global = true)]
    synonyms: Option<PathBuf>,
    /// Let annotation scores weigh in when choosing among utterances.
    #[arg(long, global = true)]
    weigh_annotations: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Show the abstracted utterances of a question.
    Abstract {
        #[arg(long)]
        table: PathBuf,
        question: String,
    },
    /// Print the rule inventory.
    Rules {
        /// Full dump with schemas and preconditions.
        #[arg(long)]
        dump: bool,
    },
    /// Parse a question and print the best derivation.
    Parse {
        #[arg(long)]
        table: PathBuf,
        /// Also count every derivation of each utterance.
        #[arg(long)]
        all: bool,
        question: String,
    },
    /// Run SQL against a table and print CSV.
    Exec {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        sql: String,
    },
    /// Train a scorer.
    Train(TrainArgs),
    /// Evaluate a model on a corpus.
    Eval {
        #[command(flatten)]
        source: Source,
        /// Write one JSON line per example here.
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Generate a synthetic corpus.
    Gen {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        typo_rate: f64,
        /// Directory of two-header CSV tables (defaults to the bundled toy tables).
        #[arg(long)]
        tables: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GenFormat::Native)]
        format: GenFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Table directory: loaded at start, uploads are saved here.
        #[arg(long)]
        tables: Option<PathBuf>,
        /// Static files served under /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
        #[arg(long, default_value_t = service::DEFAULT_UPLOAD_LIMIT)]
        upload_limit: usize,
    },
    /// Answer questions read from stdin, one per line.
    Repl {
        #[arg(long)]
        table: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GenFormat {
    Native,
    /// A WikiSQL-format slice over generated tables (`train` and `test` splits).
    Wikisql,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ScorerKind {
    Sparse,
    Neural,
}

#[derive(Args)]
struct Source {
    /// Native corpus directory.
    #[arg(long, conflicts_with = "wikisql")]
    corpus: Option<PathBuf>,
    /// WikiSQL directory; see `--split`.
    #[arg(long)]
    wikisql: Option<PathBuf>,
    #[arg(long, default_value = "train")]
    split: String,
    /// Use only the first N examples.
    #[arg(long)]
    limit: Option<usize>,
}

impl Source {
    fn load(&self) -> Result<Corpus> {
        let mut c = match (&self.corpus, &self.wikisql) {
            (Some(dir), None) => Corpus::load_native(dir)?,
            (None, Some(dir)) => wikisql::load_wikisql(dir, &self.split)?,
            _ => bail!("give one of --corpus or --wikisql"),
        };
        if let Some(n) = self.limit {
            c.examples.truncate(n);
        }
        if c.skipped > 0 {
            eprintln!("skipped {} malformed records", c.skipped);
        }
        Ok(c)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: Source,
    /// Dev corpus (native format) for checkpoint selection.
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScorerKind::Sparse)]
    scorer: ScorerKind,
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    margin: f64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Sum a hinge per (positive, negative) pair instead of one hinge.
    #[arg(long)]
    per_pair_hinge: bool,
    /// Keep every negative rather than the 50 highest scoring.
    #[arg(long)]
    all_negatives: bool,
    #[arg(long, default_value = "bidirectional")]
    surface: String,
    /// One rule feature per rule instead of per (rule, predicate).
    #[arg(long)]
    rule_level: bool,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch JSON lines.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn resources(cli: &Cli) -> Result<Resources> {
    let mut res = Resources::english();
    if let Some(p) = &cli.vocab {
        res.vocab = Vocabulary::load(p, &English).with_context(|| format!("vocabulary {}", p.display()))?;
    }
    if let Some(p) = &cli.synonyms {
        res.synonyms = SynonymDict::load(p, &English).with_context(|| format!("synonyms {}", p.display()))?;
    }
    res.weigh_annotations = cli.weigh_annotations;
    Ok(res)
}

fn load_model(cli: &Cli) -> Result<Model> {
    match &cli.model {
        Some(p) => model_io::load(p).with_context(|| format!("model {}", p.display())),
        None => {
            tracing::warn!("no model given (--model or TQ_MODEL); using an untrained sparse model");
            Ok(Model::Sparse(SparseModel::new(ScorerConfig::default())))
        }
    }
}

fn read_table(path: &Path) -> Result<Table> {
    Table::read_csv_path(path).with_context(|| format!("table {}", path.display()))
}

fn cmd_train(a: &TrainArgs, res: &Resources) -> Result<()> {
    let mode = SurfaceMode::parse(&a.surface).with_context(|| format!("unknown surface mode `{}`", a.surface))?;
    let config = ScorerConfig { mode, rule_level: a.rule_level };
    let corpus = a.source.load()?;
    corpus.check()?;
    let label = |c: &Corpus| -> Result<Vec<TrainingExample>> {
        let items: Vec<_> = c
            .examples
            .iter()
            .map(|e| (e.question.clone(), c.table(&e.table).expect("checked").as_ref(), e.sql.clone()))
            .collect();
        label_all(&items, res).into_iter().map(|r| r.map_err(Into::into)).collect()
    };
    let train_set = label(&corpus)?;
    let dev_set = match &a.dev {
        Some(d) => label(&Corpus::load_native(d)?)?,
        None => Vec::new(),
    };
    let tcfg = TrainerConfig {
        margin: a.margin,
        adam: tablequery_core::optim::AdamConfig { lr: a.lr, ..Default::default() },
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        max_negatives: if a.all_negatives { None } else { Some(50) },
        per_pair_hinge: a.per_pair_hinge,
        limits: res.limits,
    };
    let mut report_file = a.report.as_ref().map(std::fs::File::create).transpose()?;
    let mut on_epoch = |e: &EpochReport| {
        eprintln!(
            "epoch {:>3}  loss {:.4}  train {:.3}{}",
            e.epoch,
            e.loss,
            e.train_acc_qm,
            e.dev_acc_qm.map_or(String::new(), |d| format!("  dev {d:.3}"))
        );
        if let Some(f) = report_file.as_mut() {
            let _ = writeln!(f, "{}", serde_json::to_string(e).expect("report serializes"));
        }
    };
    let (model, report) = match a.scorer {
        ScorerKind::Sparse => {
            let (m, r) = train(SparseModel::new(config), &train_set, &dev_set, &tcfg, &mut on_epoch)?;
            (Model::Sparse(m), r)
        }
        ScorerKind::Neural => {
            let m = NeuralModel::new(config, NeuralDims::default(), neural::default_tokens(&res.vocab), a.seed);
            let (m, r) = train(m, &train_set, &dev_set, &tcfg, &mut on_epoch)?;
            (Model::Neural(m), r)
        }
    };
    if let Some(f) = report_file.as_mut() {
        let summary = serde_json::json!({ "summary": report });
        writeln!(f, "{summary}")?;
    }
    eprintln!(
        "{} examples: {} used, {} unreachable, {} unparseable; {:.1} trees per utterance",
        report.examples, report.used, report.unreachable, report.unparseable, report.avg_trees_per_utterance
    );
    model_io::save(&model, &a.out)?;
    eprintln!("saved {} model to {}", model.kind(), a.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let res = resources(&cli)?;
    match &cli.cmd {
        Cmd::Abstract { table, question } => {
            let index = index_table(read_table(table)?);
            for (i, c) in res.abstract_question(question, &index).iter().enumerate() {
                println!("[{i}] score {:.3}: {}", c.score, c.utterance.keys().join(" "));
                for a in &c.annotations {
                    let text: String = question.chars().skip(a.start).take(a.end - a.start).collect();
                    println!("    {text:?} -> {} ({}, {:.3})", a.symbol.describe(&index.table), a.kind.as_str(), a.score);
                }
            }
        }
        Cmd::Rules { dump } => {
            if *dump {
                print!("{}", rules::dump());
            } else {
                for r in tablequery_core::rules::RulePred::all() {
                    println!("{:>2} {}", r.index(), r.name());
                }
            }
        }
        Cmd::Parse { table, all, question } => {
            let model = load_model(&cli)?;
            let index = index_table(read_table(table)?);
            let utterances = res.abstract_question(question, &index);
            if utterances.is_empty() {
                bail!("no utterance: nothing in the question links to the table");
            }
            for (i, c) in utterances.iter().enumerate() {
                println!("[{i}] {}", c.utterance.keys().join(" "));
                if *all {
                    match parse_all(&c.utterance, &res.limits) {
                        Ok(trees) => println!("    {} derivations", trees.len()),
                        Err(e) => println!("    {e}"),
                    }
                }
                match parse_best(&c.utterance, &res.limits, &model) {
                    Ok((d, s)) => {
                        println!("    best score {s:.4}");
                        for line in d.pretty(&index.table).lines() {
                            println!("    {line}");
                        }
                    }
                    Err(e) => println!("    {e}"),
                }
            }
        }
        Cmd::Exec { table, sql } => {
            let t = read_table(table)?;
            let q = parse_sql(sql, Some(&t))?;
            print!("{}", execute(&q, &t)?.to_csv());
        }
        Cmd::Train(a) => cmd_train(a, &res)?,
        Cmd::Eval { source, predictions: out, threads } => {
            let model = load_model(&cli)?;
            let corpus = source.load()?;
            corpus.check()?;
            let preds = predictions(&corpus, &model, &res, &EvalConfig { threads: *threads });
            if let Some(p) = out {
                let mut f = std::fs::File::create(p)?;
                for x in &preds {
                    writeln!(f, "{}", serde_json::to_string(x)?)?;
                }
            }
            let report = summarize(&preds, corpus.skipped);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Cmd::Gen { n, seed, typo_rate, tables, format, out } => match format {
            GenFormat::Native => {
                let tables = match tables {
                    Some(dir) => {
                        let mut v = Vec::new();
                        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                            .filter_map(|e| e.ok().map(|e| e.path()))
                            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                            .collect();
                        paths.sort();
                        for p in paths {
                            let id = p.file_stem().unwrap_or_default().to_string_lossy().to_string();
                            v.push((id, read_table(&p)?));
                        }
                        v
                    }
                    None => toy_tables(),
                };
                let cfg = GenConfig { seed: *seed, n: *n, typo_rate: *typo_rate, check_reachable: true };
                let (corpus, types) = generate(&tables, &cfg, &res)?;
                corpus.save_native(out)?;
                for (t, k) in type_counts(&types) {
                    eprintln!("{t:?}: {k}");
                }
                eprintln!("wrote {} pairs to {}", corpus.len(), out.display());
            }
            GenFormat::Wikisql => {
                let (t, r) = wikisql::generate_slice(*seed, *n);
                let cut = r.len() * 4 / 5;
                wikisql::write_split(out, "train", &t, &r[..cut])?;
                wikisql::write_split(out, "test", &t, &r[cut..])?;
                eprintln!("wrote {} train and {} test records to {}", cut, r.len() - cut, out.display());
            }
        },
        Cmd::Serve { addr, tables, ui, upload_limit } => {
            let model = load_model(&cli)?;
            let config = ServiceConfig {
                table_dir: tables.clone(),
                ui_dir: Some(ui.clone().unwrap_or_else(service::default_ui_dir)),
                upload_limit: *upload_limit,
            };
            let state = AppState::new(res, model, config)?;
            tokio::runtime::Runtime::new()?.block_on(service::serve(state, addr))?;
        }
        Cmd::Repl { table } => {
            let model = load_model(&cli)?;
            let index = index_table(read_table(table)?);
            let stdin = std::io::stdin();
            let mut out = std::io::stdout();
            write!(out, "> ")?;
            out.flush()?;
            for line in stdin.lock().lines() {
                let q = line?;
                if !q.trim().is_empty() {
                    match answer(q.trim(), &index, &res, &model) {
                        Ok(a) => {
                            println!("{}", a.sql.to_sql(&index.table.name));
                            print!("{}", a.result.to_csv());
                        }
                        Err(e) => println!("error: {e}"),
                    }
                }
                write!(out, "> ")?;
                out.flush()?;
            }
            println!();
        }
    }
    Ok(())
}

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn,tablequery=info".into()))
        .with_writer(std::io::stderr)
        .init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
