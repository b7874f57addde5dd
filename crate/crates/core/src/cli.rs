//! Command-line front end. [`run`] returns the process exit code:
//! 0 on success, 2 on usage errors, 1 on runtime failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::augment::{deleted_directions, make_pair, masked_rows, AugmentConfig};
use crate::io::{load_dataset, write_embeddings, Dataset, DatasetFile, LabelColumns, RunConfig};
use crate::metrics::{evaluate, MetricKind};
use crate::smiles::{extract_scaffold, parse_smiles, ScaffoldKey};
use crate::split::{random_split, scaffold_split, Split};
use crate::tensor::Tensor;
use crate::trainer::finetune::{embed_all, LabeledData, TaskSpec};
use crate::trainer::pretrain::write_metrics_csv;
use crate::trainer::{finetune, predict, Checkpoint, FineTunedModel, Pretrainer, TaskKind};

pub const SEED_ENV: &str = "DIGMOL_SEED";

#[derive(Debug, Parser)]
#[command(name = "digmol", version, about = "Graph contrastive pretraining and property prediction for molecules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a SMILES string and describe its graph.
    ///
    /// Prints the node feature matrix as CSV, one row per atom.
    Parse {
        smiles: String,
        /// Print the adjacency matrix instead of the features.
        #[arg(long, conflicts_with = "summary")]
        adjacency: bool,
        /// Print counts, atoms and scaffold instead of a matrix.
        #[arg(long)]
        summary: bool,
    },
    /// Draw two augmented views of a molecule.
    Augment {
        smiles: String,
        /// Fraction of atoms whose features are zeroed.
        #[arg(long, default_value_t = 0.25)]
        mask: f64,
        /// Fraction of bonds that lose one direction.
        #[arg(long, default_value_t = 0.25)]
        unidir: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Sub-stream index; distinct streams give independent pairs.
        #[arg(long, default_value_t = 0)]
        stream: u64,
    },
    /// Partition a dataset into train/valid/test.
    Split {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        /// Write `line,smiles,split` rows here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Contrastive pretraining on the SMILES column of a dataset.
    Pretrain {
        data: PathBuf,
        #[arg(long, default_value = "smiles")]
        smiles_column: String,
        #[command(flatten)]
        knobs: PretrainArgs,
        /// Continue from this checkpoint. Only --epochs may change its config.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long, default_value = "checkpoint.digm")]
        out: PathBuf,
        /// Per-epoch loss log (CSV).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Train a prediction head on a frozen pretrained encoder.
    Finetune {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        knobs: FinetuneArgs,
        #[arg(long, default_value = "model.digf")]
        out: PathBuf,
    },
    /// Score a fine-tuned model on a dataset.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        model: PathBuf,
        /// Which part of the split to score.
        #[arg(long, value_enum, default_value_t = Subset::All)]
        subset: Subset,
        /// Defaults to roc_auc for classification and rmse for regression.
        #[arg(long, value_parser = parse_metric)]
        metric: Option<MetricKind>,
        /// Also write the report as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Export graph embeddings with a 2-D PCA projection.
    Embed {
        data: PathBuf,
        #[arg(long, default_value = "smiles")]
        smiles_column: String,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "embeddings.csv")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// CSV with a header row.
    data: PathBuf,
    #[arg(long, default_value = "smiles")]
    smiles_column: String,
    /// Comma-separated label columns (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    labels: Vec<String>,
    #[arg(long, value_enum, default_value_t = Task::Classification)]
    task: Task,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long = "split", value_enum, default_value_t = SplitMethod::Scaffold)]
    method: SplitMethod,
    /// Train, valid and test fractions.
    #[arg(long, default_value = "0.8,0.1,0.1", value_parser = parse_fractions)]
    fractions: [f64; 3],
    /// Seed for random splits and training (falls back to $DIGMOL_SEED).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PretrainArgs {
    /// key=value run config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    mask: Option<f64>,
    #[arg(long)]
    unidir: Option<f64>,
    /// diffusion or gcn.
    #[arg(long)]
    encoder: Option<String>,
    #[arg(long)]
    num_layer: Option<usize>,
    #[arg(long)]
    emb_dim: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch")]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Task {
    Classification,
    Regression,
}

impl From<Task> for TaskKind {
    fn from(t: Task) -> Self {
        match t {
            Task::Classification => TaskKind::Classification,
            Task::Regression => TaskKind::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitMethod {
    Scaffold,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum Subset {
    All,
    Train,
    Valid,
    Test,
}

fn parse_fractions(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|_| "expected three comma-separated fractions".to_string())
}

fn parse_metric(s: &str) -> Result<MetricKind, String> {
    MetricKind::parse(s).ok_or_else(|| "expected roc_auc, prc_auc, rmse or mae".to_string())
}

enum CliError {
    Usage(String),
    Runtime(String),
}

type CliResult = Result<(), CliError>;

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

/// Explicit flag, then `$DIGMOL_SEED`, then `fallback`.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    0
                }
                _ => {
                    let _ = write!(err, "{text}");
                    2
                }
            };
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            2
        }
        Err(CliError::Runtime(m)) => {
            let _ = writeln!(err, "error: {m}");
            1
        }
    }
}

fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult {
    match cmd {
        Command::Parse { smiles, adjacency, summary } => cmd_parse(&smiles, adjacency, summary, out),
        Command::Augment {
            smiles,
            mask,
            unidir,
            seed,
            stream,
        } => cmd_augment(&smiles, mask, unidir, resolve_seed(seed, 0)?, stream, out),
        Command::Split { data, split, out: path } => cmd_split(&data, &split, path.as_deref(), out),
        Command::Pretrain {
            data,
            smiles_column,
            knobs,
            resume,
            out: path,
            metrics,
        } => cmd_pretrain(&data, &smiles_column, &knobs, resume.as_deref(), &path, metrics.as_deref(), out),
        Command::Finetune {
            data,
            split,
            checkpoint,
            knobs,
            out: path,
        } => cmd_finetune(&data, &split, &checkpoint, &knobs, &path, out),
        Command::Eval {
            data,
            split,
            model,
            subset,
            metric,
            csv,
        } => cmd_eval(&data, &split, &model, subset, metric, csv.as_deref(), out),
        Command::Embed {
            data,
            smiles_column,
            checkpoint,
            out: path,
        } => cmd_embed(&data, &smiles_column, &checkpoint, &path, out),
    }
}

fn write_io(r: std::io::Result<()>) -> CliResult {
    r.map_err(runtime)
}

fn atom_label(a: &crate::smiles::Atom) -> String {
    let sym = if a.aromatic {
        a.element.symbol().to_lowercase()
    } else {
        a.element.symbol().to_string()
    };
    match a.formal_charge {
        0 => sym,
        c => format!("{sym}{c:+}"),
    }
}

fn write_matrix_csv(out: &mut dyn Write, prefix: &str, labels: &[String], m: &Tensor) -> std::io::Result<()> {
    let header: Vec<String> = (0..m.cols()).map(|c| format!("{prefix}{c}")).collect();
    writeln!(out, "atom,{}", header.join(","))?;
    for (r, label) in labels.iter().enumerate() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{label},{}", row.join(","))?;
    }
    Ok(())
}

fn cmd_parse(smiles: &str, adjacency: bool, summary: bool, out: &mut dyn Write) -> CliResult {
    let g = parse_smiles(smiles).map_err(runtime)?;
    let labels: Vec<String> = g.atoms().iter().enumerate().map(|(i, a)| format!("{i}:{}", atom_label(a))).collect();
    write_io((|| {
        if adjacency {
            return write_matrix_csv(out, "a", &labels, g.adjacency());
        }
        if !summary {
            return write_matrix_csv(out, "f", &labels, g.features());
        }
        let scaffold = extract_scaffold(&g);
        writeln!(out, "nodes: {}", g.n_nodes())?;
        writeln!(out, "directed edges: {}", g.directed_edge_count())?;
        writeln!(out, "bonds: {}", g.bonds().len())?;
        let atoms: Vec<String> = g.atoms().iter().map(atom_label).collect();
        writeln!(out, "atoms: {}", atoms.join(" "))?;
        writeln!(out, "scaffold: {}", if scaffold.is_empty() { "(none)" } else { scaffold.as_str() })
    })())
}

fn cmd_augment(smiles: &str, mask: f64, unidir: f64, seed: u64, stream: u64, out: &mut dyn Write) -> CliResult {
    let cfg = AugmentConfig::new(mask, unidir, seed).map_err(usage)?;
    let g = parse_smiles(smiles).map_err(runtime)?;
    let (a, b) = make_pair(&g, &cfg, stream);
    write_io((|| {
        for (name, v) in [("view 1", &a), ("view 2", &b)] {
            let dirs: Vec<String> = deleted_directions(&g, v).iter().map(|(i, j)| format!("{i}->{j}")).collect();
            writeln!(out, "{name}: masked atoms {:?}; deleted directions [{}]", masked_rows(v), dirs.join(", "))?;
        }
        Ok(())
    })())
}

fn dataset_file(data: &DataArgs) -> DatasetFile {
    DatasetFile {
        path: data.data.clone(),
        smiles_column: data.smiles_column.clone(),
        label_columns: if data.labels.is_empty() {
            LabelColumns::AllOthers
        } else {
            LabelColumns::Named(data.labels.clone())
        },
        task: data.task.into(),
    }
}

fn load(file: &DatasetFile) -> Result<Dataset, CliError> {
    let (d, report) = load_dataset(file).map_err(runtime)?;
    if !report.failures.is_empty() {
        log::warn!("{} of {} rows skipped", report.failures.len(), report.rows);
    }
    Ok(d)
}

fn make_split(d: &Dataset, args: &SplitArgs, seed: u64) -> Result<Split, CliError> {
    match args.method {
        SplitMethod::Scaffold => {
            let keys: Vec<ScaffoldKey> = d.graphs.iter().map(extract_scaffold).collect();
            scaffold_split(&keys, args.fractions).map_err(usage)
        }
        SplitMethod::Random => random_split(d.len(), args.fractions, seed).map_err(usage),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn cmd_split(data: &DataArgs, args: &SplitArgs, path: Option<&Path>, out: &mut dyn Write) -> CliResult {
    let seed = resolve_seed(args.seed, 0)?;
    let d = load(&DatasetFile {
        label_columns: LabelColumns::Named(vec![]),
        ..dataset_file(data)
    })?;
    let split = make_split(&d, args, seed)?;
    let [tr, va, te] = split.sizes();
    write_io(writeln!(out, "train {tr}, valid {va}, test {te}"))?;
    if let Some(p) = path {
        let mut w = create(p)?;
        let names = split.assignment(d.len());
        write_io((|| {
            writeln!(w, "line,smiles,split")?;
            for i in 0..d.len() {
                writeln!(w, "{},{},{}", d.lines[i], d.smiles[i], names[i].unwrap_or(""))?;
            }
            w.flush()
        })())?;
    }
    Ok(())
}

fn load_run_config(path: Option<&Path>) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => RunConfig::load(p).map(|(c, _)| c).map_err(|e| usage(format!("{}: {e}", p.display()))),
        None => Ok(RunConfig::default()),
    }
}

fn apply(cfg: &mut RunConfig, key: &str, value: Option<String>) -> CliResult {
    match value {
        Some(v) => cfg.set(key, &v).map_err(usage),
        None => Ok(()),
    }
}

fn cmd_pretrain(
    data: &Path,
    smiles_column: &str,
    k: &PretrainArgs,
    resume: Option<&Path>,
    path: &Path,
    metrics_path: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let mut cfg = load_run_config(k.config.as_deref())?;
    let s = |v: Option<f64>| v.map(|x| x.to_string());
    let u = |v: Option<usize>| v.map(|x| x.to_string());
    apply(&mut cfg, "epochs", u(k.epochs))?;
    apply(&mut cfg, "batch_size", u(k.batch_size))?;
    apply(&mut cfg, "lr", s(k.lr))?;
    apply(&mut cfg, "temperature", s(k.temperature))?;
    apply(&mut cfg, "alpha", s(k.alpha))?;
    apply(&mut cfg, "beta", s(k.beta))?;
    apply(&mut cfg, "gamma", s(k.gamma))?;
    apply(&mut cfg, "momentum", s(k.momentum))?;
    apply(&mut cfg, "mask_ratio", s(k.mask))?;
    apply(&mut cfg, "unidir_delete_ratio", s(k.unidir))?;
    apply(&mut cfg, "encoder", k.encoder.clone())?;
    apply(&mut cfg, "num_layer", u(k.num_layer))?;
    apply(&mut cfg, "emb_dim", u(k.emb_dim))?;
    let seed = resolve_seed(k.seed, cfg.pretrain.seed)?;
    apply(&mut cfg, "seed", Some(seed.to_string()))?;

    let d = load(&DatasetFile {
        path: data.to_path_buf(),
        smiles_column: smiles_column.to_string(),
        label_columns: LabelColumns::Named(vec![]),
        task: TaskKind::Regression,
    })?;
    let mut trainer = match resume {
        Some(p) => {
            let mut t = Pretrainer::from_checkpoint(Checkpoint::load(p).map_err(runtime)?).map_err(runtime)?;
            if let Some(e) = k.epochs {
                t.set_total_epochs(e).map_err(usage)?;
            }
            t
        }
        None => {
            cfg.pretrain.validate().map_err(usage)?;
            Pretrainer::new(cfg.pretrain).map_err(runtime)?
        }
    };
    let metrics = trainer.run(&d.graphs).map_err(runtime)?;
    trainer.checkpoint().save(path).map_err(runtime)?;
    if let Some(p) = metrics_path {
        let mut w = create(p)?;
        write_io(write_metrics_csv(&mut w, &metrics).and_then(|_| w.flush()))?;
    }
    write_io((|| {
        if let (Some(first), Some(last)) = (metrics.first(), metrics.last()) {
            writeln!(
                out,
                "pretrained {} epochs on {} molecules: L_joint {:.4} -> {:.4}",
                metrics.len(),
                d.len(),
                first.loss.joint,
                last.loss.joint
            )?;
        }
        writeln!(out, "checkpoint written to {}", path.display())
    })())
}

fn labeled(d: &Dataset) -> LabeledData<'_> {
    LabeledData {
        graphs: &d.graphs,
        labels: &d.labels,
    }
}

fn cmd_finetune(
    data: &DataArgs,
    split_args: &SplitArgs,
    ckpt_path: &Path,
    k: &FinetuneArgs,
    path: &Path,
    out: &mut dyn Write,
) -> CliResult {
    let mut cfg = load_run_config(k.config.as_deref())?;
    let s = |v: Option<f64>| v.map(|x| x.to_string());
    let u = |v: Option<usize>| v.map(|x| x.to_string());
    apply(&mut cfg, "finetune_epochs", u(k.epochs))?;
    apply(&mut cfg, "finetune_batch_size", u(k.batch_size))?;
    apply(&mut cfg, "finetune_lr", s(k.lr))?;
    apply(&mut cfg, "head_hidden", u(k.hidden))?;
    apply(&mut cfg, "dropout", s(k.dropout))?;
    let seed = resolve_seed(split_args.seed, cfg.pretrain.seed)?;
    apply(&mut cfg, "seed", Some(seed.to_string()))?;
    cfg.finetune.validate().map_err(usage)?;

    let ckpt = Checkpoint::load(ckpt_path).map_err(runtime)?;
    let d = load(&dataset_file(data))?;
    let split = make_split(&d, split_args, seed)?;
    let tasks = TaskSpec {
        kind: data.task.into(),
        names: d.task_names.clone(),
    };
    let outcome = finetune(&ckpt.online, labeled(&d), &tasks, &split, &cfg.finetune).map_err(runtime)?;
    outcome.model.save(path).map_err(runtime)?;

    let metric = tasks.kind.selection_metric();
    let test_report = if split.test.is_empty() {
        None
    } else {
        let graphs: Vec<_> = split.test.iter().map(|&i| d.graphs[i].clone()).collect();
        let labels: Vec<_> = split.test.iter().map(|&i| d.labels[i].clone()).collect();
        let preds = predict(&outcome.model, &graphs).map_err(runtime)?;
        Some(evaluate(metric, &tasks.names, &preds, &labels).map_err(runtime)?)
    };
    write_io((|| {
        writeln!(out, "best epoch {} of {}", outcome.best_epoch, cfg.finetune.epochs)?;
        if let Some(r) = &test_report {
            writeln!(out, "test split:\n{r}")?;
        }
        writeln!(out, "model written to {}", path.display())
    })())
}

fn cmd_eval(
    data: &DataArgs,
    split_args: &SplitArgs,
    model_path: &Path,
    subset: Subset,
    metric: Option<MetricKind>,
    csv: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult {
    let model = FineTunedModel::load(model_path).map_err(runtime)?;
    let mut file = dataset_file(data);
    file.task = model.tasks.kind;
    if data.labels.is_empty() {
        file.label_columns = LabelColumns::Named(model.tasks.names.clone());
    }
    let d = load(&file)?;
    if d.task_names.len() != model.tasks.names.len() {
        return Err(usage(format!(
            "model predicts {} tasks but {} label columns were selected",
            model.tasks.names.len(),
            d.task_names.len()
        )));
    }
    let idx: Vec<usize> = if subset == Subset::All {
        (0..d.len()).collect()
    } else {
        let seed = resolve_seed(split_args.seed, 0)?;
        let split = make_split(&d, split_args, seed)?;
        match subset {
            Subset::Train => split.train,
            Subset::Valid => split.valid,
            _ => split.test,
        }
    };
    if idx.is_empty() {
        return Err(runtime("selected subset is empty"));
    }
    let graphs: Vec<_> = idx.iter().map(|&i| d.graphs[i].clone()).collect();
    let labels: Vec<_> = idx.iter().map(|&i| d.labels[i].clone()).collect();
    let preds = predict(&model, &graphs).map_err(runtime)?;
    let metric = metric.unwrap_or(model.tasks.kind.selection_metric());
    if metric.is_classification() != (model.tasks.kind == TaskKind::Classification) {
        return Err(usage(format!("{} does not fit a {} model", metric.as_str(), model.tasks.kind.as_str())));
    }
    let report = evaluate(metric, &d.task_names, &preds, &labels).map_err(runtime)?;
    if let Some(p) = csv {
        let mut w = create(p)?;
        write_io(w.write_all(report.to_csv().as_bytes()).and_then(|_| w.flush()))?;
    }
    write_io(writeln!(out, "{report}"))
}

fn cmd_embed(data: &Path, smiles_column: &str, ckpt_path: &Path, path: &Path, out: &mut dyn Write) -> CliResult {
    let ckpt = Checkpoint::load(ckpt_path).map_err(runtime)?;
    let d = load(&DatasetFile {
        path: data.to_path_buf(),
        smiles_column: smiles_column.to_string(),
        label_columns: LabelColumns::Named(vec![]),
        task: TaskKind::Regression,
    })?;
    let h = embed_all(&ckpt.online, &d.graphs).map_err(runtime)?;
    let w = create(path)?;
    write_embeddings(w, &d.smiles, &h).map_err(runtime)?;
    write_io(writeln!(out, "{} embeddings of width {} written to {}", h.rows(), h.cols(), path.display()))
}
