use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use plkb::data::{self, load_csv, read_seed_spec, Dataset, SeedSpec};
use plkb::direct::{build_direct_kb, MaxArity};
use plkb::eval::{self, mean_f1, BenchResult, EvalReport, ExperimentConfig};
use plkb::explain::{explain, masked_string, Direction};
use plkb::inference::{apply_query, build_lp, InferenceResult};
use plkb::kb::{merge, parse_kb, serialize_kb, KnowledgeBase, WeightedClause};
use plkb::model::{Method, Model};
use plkb::query::{Domains, Query};
use plkb::tree::{build_id3, kb_from_tree, PathMode};

#[derive(Parser)]
#[command(name = "plkb", version, about = "Explainable classification with probabilistic knowledge bases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArgs {
    /// Header-rowed CSV file.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = data::SYNTH_LABEL_COLUMN)]
    label_col: String,
    #[arg(long, default_value = data::SYNTH_POSITIVE)]
    pos_label: String,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        load_csv(&self.input, &self.label_col, &self.pos_label).with_context(|| format!("loading {}", self.input.display()))
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long)]
    kb: PathBuf,
    /// CSV whose observed values define each feature's domain.
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Label column of the domains CSV.
    #[arg(long, default_value = data::SYNTH_LABEL_COLUMN)]
    label_col: String,
    /// Assignments such as `a1=0,a2=1`.
    #[arg(long)]
    query: String,
    /// Answer against the clauses whose body lies inside the query.
    #[arg(long)]
    relevant: bool,
}

impl QueryArgs {
    fn load(&self) -> Result<(Model, Domains, Query)> {
        let kb = read_kb(&self.kb)?;
        let domains = match &self.domains {
            Some(p) => load_csv(p, &self.label_col, "")
                .with_context(|| format!("loading {}", p.display()))?
                .domains(),
            None => Domains::new(),
        };
        let query: Query = self.query.parse().map_err(anyhow::Error::msg)?;
        let model = if self.relevant { Model::Relevant(kb) } else { Model::Full(kb) };
        Ok((model, domains, query))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "direct")]
    method: Method,
    /// Largest rule body counted by the direct method.
    #[arg(long)]
    max_arity: Option<usize>,
}

impl TrainArgs {
    fn max_arity(&self) -> MaxArity {
        self.max_arity.map_or(MaxArity::Unbounded, MaxArity::Limited)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Learn a knowledge base from a CSV file.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the tree, one node per line (tree methods only).
        #[arg(long)]
        tree_dump: Option<PathBuf>,
    },
    /// Bound the class probability of a query.
    Classify {
        #[command(flatten)]
        q: QueryArgs,
        /// Write the deviation-minimizing linear program in LP format.
        #[arg(long)]
        lp_dump: Option<PathBuf>,
    },
    /// Find the size-k part of a query that best explains its class.
    Explain {
        #[command(flatten)]
        q: QueryArgs,
        #[arg(short)]
        k: usize,
    },
    /// Generate seed-string data.
    Synth {
        #[arg(long)]
        length: usize,
        #[arg(long)]
        alphabet: u8,
        #[arg(long = "match")]
        match_count: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Seed string to use instead of a random one.
        #[arg(long)]
        seed_string: Option<String>,
        /// Directory receiving data.csv and seed.txt.
        #[arg(long)]
        out: PathBuf,
    },
    /// F1 on a held-out split, averaged over runs.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Clauses merged into the learned knowledge base.
        #[arg(long)]
        knowledge: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 0.7)]
        train_fraction: f64,
        /// Per-run CSV report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Explanation accuracy against the seed of synthetic data.
    ExplEval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Sidecar written by `synth`.
        #[arg(long)]
        seed_file: PathBuf,
        /// Explanation sizes; may be repeated.
        #[arg(short, required = true)]
        k: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
    },
    /// Time the deviation-minimizing solve on a random knowledge base.
    BenchLp {
        #[arg(long)]
        vars: usize,
        #[arg(long)]
        clauses: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        /// Append a row to this CSV, writing the header if the file is new.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Merge supplied clauses into a knowledge base.
    Inject {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        knowledge: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// F1 after merging seed rules and random rules into the learned knowledge base.
    KnowledgeExp {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        seed_file: PathBuf,
        #[arg(long = "true", default_value_t = 0)]
        n_true: usize,
        #[arg(long = "random", default_value_t = 0)]
        n_random: usize,
        #[arg(long, default_value_t = 0)]
        rng_seed: u64,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read_kb(path: &Path) -> Result<KnowledgeBase> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_kb(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn result_json(r: &InferenceResult) -> Value {
    json!({
        "label": r.label,
        "p_lower": r.p_lower,
        "p_upper": r.p_upper,
        "p_avg": r.p_avg,
        "objective_min": r.objective_min,
    })
}

fn report_json(r: &EvalReport) -> Value {
    json!({
        "f1": r.f1,
        "precision": r.precision,
        "recall": r.recall,
        "n_test": r.n_test,
        "confusion": {"tp": r.confusion.tp, "fp": r.confusion.fp, "fn": r.confusion.fn_, "tn": r.confusion.tn},
    })
}

fn reports_csv(reports: &[(u64, EvalReport)]) -> String {
    let mut out = String::from("seed,f1,precision,recall,n_test,tp,fp,fn,tn\n");
    for (seed, r) in reports {
        let c = r.confusion;
        out.push_str(&format!(
            "{seed},{:.6},{:.6},{:.6},{},{},{},{},{}\n",
            r.f1, r.precision, r.recall, r.n_test, c.tp, c.fp, c.fn_, c.tn
        ));
    }
    out
}

/// Length of the masked form when every feature is a position `a<i>`.
fn masked_length(query: &Query) -> Option<usize> {
    query
        .pairs()
        .map(|(f, v)| {
            let i = f.strip_prefix('a')?.parse::<usize>().ok().filter(|&i| i >= 1)?;
            (v.chars().count() == 1).then_some(i)
        })
        .try_fold(0, |m, i| i.map(|i| m.max(i)))
}

fn seeded_runs(
    ds: &Dataset,
    config: &ExperimentConfig,
    runs: usize,
    mut one: impl FnMut(&Dataset, &ExperimentConfig) -> Result<EvalReport, eval::EvalError>,
) -> Result<Vec<(u64, EvalReport)>> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    (0..runs as u64)
        .map(|i| {
            let seed = config.rng_seed.wrapping_add(i);
            let c = ExperimentConfig {
                rng_seed: seed,
                ..config.clone()
            };
            Ok((seed, one(ds, &c)?))
        })
        .collect()
}

fn runs_json(method: Method, reports: &[(u64, EvalReport)]) -> Value {
    let plain: Vec<EvalReport> = reports.iter().map(|(_, r)| *r).collect();
    json!({
        "method": method.name(),
        "runs": reports.len(),
        "mean_f1": mean_f1(&plain),
        "reports": reports.iter().map(|(s, r)| {
            let mut v = report_json(r);
            v["seed"] = json!(s);
            v
        }).collect::<Vec<_>>(),
    })
}

fn run(cli: Cli) -> Result<Value> {
    match cli.command {
        Command::Train {
            data,
            train,
            out,
            tree_dump,
        } => {
            if tree_dump.is_some() && train.method == Method::Direct {
                bail!("--tree-dump needs a tree method");
            }
            let ds = data.load()?;
            let kb = match train.method {
                Method::Direct => build_direct_kb(&ds, train.max_arity())?,
                Method::Tree | Method::TreeAll => {
                    let tree = build_id3(&ds)?;
                    if let Some(p) = &tree_dump {
                        write_file(p, &tree.dump())?;
                    }
                    let mode = if train.method == Method::Tree {
                        PathMode::Leaves
                    } else {
                        PathMode::AllNodes
                    };
                    kb_from_tree(&tree, mode)?
                }
            };
            write_file(&out, &serialize_kb(&kb))?;
            Ok(json!({"method": train.method.name(), "clauses": kb.len(), "instances": ds.len(), "out": out}))
        }
        Command::Classify { q, lp_dump } => {
            let (model, domains, query) = q.load()?;
            if let Some(p) = lp_dump {
                let program = apply_query(&build_lp(&model.kb_for(&query)?), &query, &domains);
                write_file(&p, &program.lp().to_lp_format())?;
            }
            Ok(result_json(&model.classify(&query, &domains)?))
        }
        Command::Explain { q, k } => {
            let (model, domains, query) = q.load()?;
            let report = explain(&model, &query, k, &domains)?;
            let e = &report.explanation;
            let mut out = json!({
                "query": query.to_string(),
                "k": k,
                "classification": result_json(&report.full),
                "explanation": e.sub_query.to_string(),
                "score": e.score,
                "direction": match e.direction { Direction::Max => "max", Direction::Min => "min" },
                "scores": report.scores.iter().map(|(s, p)| json!({"sub_query": s.to_string(), "p_avg": p})).collect::<Vec<_>>(),
            });
            if let Some(len) = masked_length(&query) {
                out["masked"] = json!(masked_string(&e.sub_query, len));
            }
            Ok(out)
        }
        Command::Synth {
            length,
            alphabet,
            match_count,
            n,
            rng_seed,
            seed_string,
            out,
        } => {
            let spec = match seed_string {
                Some(s) => SeedSpec::new(&s, alphabet, match_count)?,
                None => SeedSpec::from_rng_seed(length, alphabet, match_count, rng_seed)?,
            };
            if spec.length() != length {
                bail!("seed string has length {}, --length is {length}", spec.length());
            }
            let ds = data::generate_synthetic(&spec, n, rng_seed)?;
            data::write_synthetic(&ds, &spec, &out)?;
            Ok(json!({
                "seed": spec.seed_string(),
                "alphabet": alphabet,
                "match": match_count,
                "n": ds.len(),
                "positives": ds.n_positive(),
                "out": out,
            }))
        }
        Command::Eval {
            data,
            train,
            knowledge,
            rng_seed,
            runs,
            train_fraction,
            out,
        } => {
            let ds = data.load()?;
            let mut config = ExperimentConfig::new(train.method, rng_seed);
            config.max_arity = train.max_arity();
            config.train_fraction = train_fraction;
            if let Some(p) = knowledge {
                config.knowledge = read_kb(&p)?.iter().cloned().collect();
            }
            let reports = seeded_runs(&ds, &config, runs, eval::run_eval)?;
            if let Some(p) = out {
                write_file(&p, &reports_csv(&reports))?;
            }
            Ok(runs_json(train.method, &reports))
        }
        Command::ExplEval {
            data,
            train,
            seed_file,
            k,
            rng_seed,
        } => {
            let ds = data.load()?;
            let spec = read_seed_spec(&seed_file)?;
            let mut config = ExperimentConfig::new(train.method, rng_seed);
            config.max_arity = train.max_arity();
            let results = eval::run_explanation_eval_ks(&ds, &spec, &config, &k)?;
            Ok(json!({
                "method": train.method.name(),
                "results": k.iter().zip(&results).map(|(k, r)| json!({
                    "k": k,
                    "mean_accuracy": r.mean_accuracy,
                    "n_explained": r.n_explained,
                })).collect::<Vec<_>>(),
            }))
        }
        Command::BenchLp {
            vars,
            clauses,
            rng_seed,
            csv,
        } => {
            let r = eval::bench_lp(vars, clauses, rng_seed)?;
            if let Some(p) = csv {
                let fresh = !p.exists();
                let mut f = fs::OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(&p)
                    .with_context(|| format!("opening {}", p.display()))?;
                if fresh {
                    writeln!(f, "{}", BenchResult::CSV_HEADER)?;
                }
                writeln!(f, "{}", r.csv_row())?;
            }
            Ok(json!({"n_vars": r.n_vars, "n_clauses": r.n_clauses, "seconds": r.seconds, "objective": r.objective}))
        }
        Command::Inject { kb, knowledge, out } => {
            let base = read_kb(&kb)?;
            let extra: Vec<WeightedClause> = read_kb(&knowledge)?.iter().cloned().collect();
            let overridden = extra.iter().filter(|wc| base.contains(&wc.clause)).count();
            let merged = merge(&base, &extra)?;
            write_file(&out, &serialize_kb(&merged))?;
            Ok(json!({
                "clauses": merged.len(),
                "added": extra.len() - overridden,
                "overridden": overridden,
                "out": out,
            }))
        }
        Command::KnowledgeExp {
            data,
            train,
            seed_file,
            n_true,
            n_random,
            rng_seed,
            runs,
            out,
        } => {
            let ds = data.load()?;
            let spec = read_seed_spec(&seed_file)?;
            let mut config = ExperimentConfig::new(train.method, rng_seed);
            config.max_arity = train.max_arity();
            let reports = seeded_runs(&ds, &config, runs, |ds, c| {
                eval::run_knowledge_experiment(ds, &spec, c, n_true, n_random, c.rng_seed)
            })?;
            if let Some(p) = out {
                write_file(&p, &reports_csv(&reports))?;
            }
            let mut v = runs_json(train.method, &reports);
            v["true_clauses"] = json!(n_true);
            v["random_clauses"] = json!(n_random);
            Ok(v)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
