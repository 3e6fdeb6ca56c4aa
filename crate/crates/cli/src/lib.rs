//! `embedlab` command line: train, embed, plot, gradcheck and reproduce.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or config error, 3 failed
//! gradient check.

use std::path::{Path, PathBuf};
use std::process::Command;

use clap::{Args, Parser, Subcommand, ValueEnum};
use embedlab::data::{load_standard, DatasetName, Split};
use embedlab::gradcheck::{run_suite, Scope};
use embedlab::losses::{LossKind, LossSpec};
use embedlab::train::{default_data_root, train_with, TrainConfig};
use embedlab::viz::{
    embed_dataset, export_csv, read_csv, render_svg, render_unit_circle_projection, write_svg, EmbeddingSet,
    SvgOptions, View,
};
use embedlab::{Dataset64, Error, Model64};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

/// Shipped configuration for each loss, in figure-grid order.
pub const SHIPPED_CONFIGS: [(LossKind, &str); 7] = [
    (LossKind::Softmax, include_str!("../../../configs/softmax.cfg")),
    (LossKind::SoftmaxNormalized, include_str!("../../../configs/softmax_normalized.cfg")),
    (LossKind::Cosface, include_str!("../../../configs/cosface.cfg")),
    (LossKind::Center, include_str!("../../../configs/center.cfg")),
    (LossKind::Contrastive, include_str!("../../../configs/contrastive.cfg")),
    (LossKind::Triplet, include_str!("../../../configs/triplet.cfg")),
    (LossKind::Regression, include_str!("../../../configs/regression.cfg")),
];

/// One figure per technique, in grid order.
pub const TECHNIQUES: [&str; 8] = [
    "softmax",
    "softmax_normalized",
    "cosface",
    "cosface_projected",
    "center",
    "contrastive",
    "triplet",
    "regression_circle",
];

#[derive(Parser, Debug)]
#[command(name = "embedlab", version, about = "Train and plot low-dimensional metric-learning embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Train one model from a config file (or a shipped config via --loss).
    Train(TrainArgs),
    /// Write the embeddings of a dataset split to CSV.
    Embed(EmbedArgs),
    /// Render an embedding CSV or a checkpoint as an SVG scatter plot.
    Plot(PlotArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Train every loss and render the full figure grid.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct Overrides {
    /// Overrides train.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides train.epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Overrides data.root (default: $EMBEDLAB_DATA_DIR or ./data).
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Keep only the first N training samples.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Keep only the first N test samples.
    #[arg(long)]
    test_limit: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, required_unless_present = "loss", conflicts_with = "loss")]
    config: Option<PathBuf>,
    /// Use the shipped config for this loss.
    #[arg(long)]
    loss: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u8).range(2..=3))]
    dims: Option<u8>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset to embed (default: the checkpoint's).
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long)]
    data_root: Option<PathBuf>,
    /// Embed only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
    /// CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Style {
    Scatter,
    UnitCircle,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Embedding CSV or model checkpoint.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "scatter")]
    style: Style,
    /// For checkpoints: dataset to embed (default: the checkpoint's).
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_root: Option<PathBuf>,
    #[arg(long)]
    limit: Option<usize>,
    /// Single 3-D view as `azimuth,elevation` in degrees.
    #[arg(long, value_parser = parse_view)]
    view: Option<View>,
    #[arg(long)]
    title: Option<String>,
    /// SVG path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value = "all", value_parser = ["layers", "losses", "all"])]
    scope: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[arg(long)]
    figures_dir: PathBuf,
    /// Repeat for several datasets.
    #[arg(long, default_values = ["mnist"])]
    dataset: Vec<String>,
    /// Repeat for both.
    #[arg(long, default_values_t = [2u8], value_parser = clap::value_parser!(u8).range(2..=3))]
    dims: Vec<u8>,
    /// Train this many cells at once, each in its own process.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Points drawn per figure (first N test samples).
    #[arg(long, default_value_t = 2000)]
    plot_limit: usize,
    #[command(flatten)]
    overrides: Overrides,
}

fn parse_view(s: &str) -> Result<View, String> {
    let (a, e) = s.split_once(',').ok_or("expected azimuth,elevation")?;
    let azimuth = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let elevation = e.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok(View { azimuth, elevation })
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Embed(a) => cmd_embed(a),
        Cmd::Plot(a) => cmd_plot(a),
        Cmd::Gradcheck(a) => return cmd_gradcheck(a),
        Cmd::Reproduce(a) => cmd_reproduce(a),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

fn shipped_config(kind: LossKind) -> Result<TrainConfig, Error> {
    let (_, text) = SHIPPED_CONFIGS.iter().find(|(k, _)| *k == kind).expect("every loss has a shipped config");
    TrainConfig::parse(text, &PathBuf::from(format!("configs/{kind}.cfg")))
}

fn apply_overrides(cfg: &mut TrainConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(e) = o.epochs {
        cfg.epochs = e;
    }
    if let Some(r) = &o.data_root {
        cfg.data.root = r.clone();
    }
    if o.train_limit.is_some() {
        cfg.data.train_limit = o.train_limit;
    }
    if o.test_limit.is_some() {
        cfg.data.test_limit = o.test_limit;
    }
}

fn cmd_train(a: TrainArgs) -> Result<(), Error> {
    let mut cfg = match (&a.config, &a.loss) {
        (Some(p), _) => TrainConfig::from_file(p)?,
        (None, Some(l)) => shipped_config(l.parse()?)?,
        (None, None) => unreachable!("clap requires --config or --loss"),
    };
    if let Some(d) = &a.dataset {
        cfg.set_dataset(d.parse()?);
    }
    if let Some(d) = a.dims {
        cfg.network.embed_dim = usize::from(d);
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    apply_overrides(&mut cfg, &a.overrides);
    cfg.validate()?;
    let name = cfg.loss.kind();
    eprintln!("training {name} on {} ({}-D) for {} epochs", cfg.data.name, cfg.network.embed_dim, cfg.epochs);
    let (report, _) = train_with::<f64>(&cfg, &mut |r| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  test_acc {:.4}  intra_var {:.4}  inter_dist {:.4}",
            r.epoch, r.train_loss, r.test_accuracy, r.intra_class_variance, r.inter_class_distance
        );
    })?;
    if let Some(p) = &report.checkpoint {
        println!("{}", p.display());
    }
    eprintln!("done in {:.1}s", report.wall_clock.as_secs_f64());
    Ok(())
}

fn load_split(root: &Path, name: DatasetName, split: Split, limit: Option<usize>) -> Result<Dataset64, Error> {
    let ds: Dataset64 = load_standard(root, name, split)?;
    match limit {
        Some(n) => ds.take(n),
        None => Ok(ds),
    }
}

fn embed_checkpoint(
    checkpoint: &Path,
    dataset: Option<&str>,
    split: Split,
    root: Option<&Path>,
    limit: Option<usize>,
) -> Result<(Model64, EmbeddingSet<f64>), Error> {
    let model = Model64::load(checkpoint)?;
    let name = match dataset {
        Some(d) => d.parse()?,
        None => model.dataset,
    };
    let root = root.map_or_else(default_data_root, Path::to_path_buf);
    let ds = load_split(&root, name, split, limit)?;
    let es = embed_dataset(&model, &ds)?;
    Ok((model, es))
}

fn cmd_embed(a: EmbedArgs) -> Result<(), Error> {
    let split = match a.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let (_, es) = embed_checkpoint(&a.checkpoint, a.dataset.as_deref(), split, a.data_root.as_deref(), a.limit)?;
    export_csv(&es, &a.out)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<(), Error> {
    let is_csv = a.input.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let es = if is_csv {
        read_csv(&a.input)?
    } else {
        embed_checkpoint(&a.input, a.dataset.as_deref(), Split::Test, a.data_root.as_deref(), a.limit)?.1
    };
    let opts = SvgOptions { title: a.title.clone(), view: a.view, ..SvgOptions::default() };
    let svg = match a.style {
        Style::Scatter => render_svg(&es, &opts)?,
        Style::UnitCircle => {
            let r = render_unit_circle_projection(&es, &opts)?;
            if r.skipped > 0 {
                eprintln!("skipped {} zero-norm point(s)", r.skipped);
            }
            r.svg
        }
    };
    write_svg(&a.out, &svg)?;
    println!("{}", a.out.display());
    Ok(())
}

fn cmd_gradcheck(a: GradcheckArgs) -> i32 {
    let scope: Scope = a.scope.parse().expect("clap restricts the scope values");
    let results = run_suite(scope, a.seed);
    let mut failed = 0;
    for r in &results {
        println!("{r}");
        if !r.passed() {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("all {} gradient checks passed", results.len());
        EXIT_OK
    } else {
        println!("{failed} of {} gradient checks failed", results.len());
        EXIT_CHECK_FAILED
    }
}

/// One trained model of the figure grid.
struct Cell {
    dataset: DatasetName,
    dims: usize,
    cfg: TrainConfig,
}

impl Cell {
    fn prefix(&self) -> String {
        format!("{}_{}d", self.dataset, self.dims)
    }
}

fn loss_label(spec: &LossSpec) -> String {
    match spec {
        LossSpec::Softmax => "softmax".into(),
        LossSpec::SoftmaxNormalized => "normalized softmax".into(),
        LossSpec::Cosface { margin, scale, .. } => format!("cosface (m={margin}, s={scale})"),
        LossSpec::Center { lambda, .. } => format!("center loss (lambda={lambda})"),
        LossSpec::Contrastive { margin, .. } => format!("contrastive (m={margin})"),
        LossSpec::Triplet { margin, mining } => format!("triplet (m={margin}, {})", mining.as_str()),
        LossSpec::Regression { layout, .. } => format!("regression to {} targets", layout.as_str()),
    }
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<(), Error> {
    let mut cells = Vec::new();
    for d in &a.dataset {
        let dataset: DatasetName = d.parse()?;
        for &dims in &a.dims {
            for (kind, _) in SHIPPED_CONFIGS {
                let mut cfg = shipped_config(kind)?;
                cfg.set_dataset(dataset);
                cfg.network.embed_dim = usize::from(dims);
                apply_overrides(&mut cfg, &a.overrides);
                cfg.output_dir = a.figures_dir.join("runs").join(format!("{dataset}_{dims}d")).join(kind.as_str());
                cfg.validate()?;
                cells.push(Cell { dataset, dims: usize::from(dims), cfg });
            }
        }
    }
    std::fs::create_dir_all(&a.figures_dir).map_err(|e| Error::Io { path: a.figures_dir.clone(), source: e })?;

    if a.jobs <= 1 {
        for c in &cells {
            eprintln!("[{}] training {}", c.prefix(), c.cfg.loss.kind());
            train_with::<f64>(&c.cfg, &mut |r| {
                eprintln!("[{}] {} epoch {} test_acc {:.4}", c.prefix(), c.cfg.loss.kind(), r.epoch, r.test_accuracy);
            })?;
        }
    } else {
        train_in_processes(&cells, a.jobs as usize)?;
    }

    for chunk in cells.chunks(SHIPPED_CONFIGS.len()) {
        render_row(chunk, &a.figures_dir, a.plot_limit)?;
    }
    Ok(())
}

fn train_in_processes(cells: &[Cell], jobs: usize) -> Result<(), Error> {
    let exe = std::env::current_exe().map_err(|e| Error::Io { path: PathBuf::from("current executable"), source: e })?;
    let mut paths = Vec::new();
    for c in cells {
        std::fs::create_dir_all(&c.cfg.output_dir).map_err(|e| Error::Io { path: c.cfg.output_dir.clone(), source: e })?;
        let p = c.cfg.output_dir.join("cell.cfg");
        std::fs::write(&p, c.cfg.to_text()).map_err(|e| Error::Io { path: p.clone(), source: e })?;
        paths.push(p);
    }
    for batch in paths.chunks(jobs) {
        let mut children = Vec::new();
        for p in batch {
            let child = Command::new(&exe)
                .arg("train")
                .arg("--config")
                .arg(p)
                .spawn()
                .map_err(|e| Error::Io { path: exe.clone(), source: e })?;
            children.push((p, child));
        }
        for (p, mut child) in children {
            let status = child.wait().map_err(|e| Error::Io { path: exe.clone(), source: e })?;
            if !status.success() {
                return Err(Error::Config(format!("training cell {} failed ({status})", p.display())));
            }
        }
    }
    Ok(())
}

/// Eight figures for one (dataset, dims) row: one per technique.
fn render_row(row: &[Cell], dir: &Path, plot_limit: usize) -> Result<(), Error> {
    let first = &row[0];
    let test = load_split(&first.cfg.data.root, first.dataset, Split::Test, Some(plot_limit))?;
    let prefix = first.prefix();
    for c in row {
        let ckpt = c.cfg.output_dir.join(embedlab::train::CHECKPOINT_FILE);
        let mut model = Model64::load(&ckpt)?;
        let kind = model.loss.kind();
        let (technique, label) = match kind {
            LossKind::Regression => ("regression_circle", loss_label(&model.loss)),
            _ => (kind.as_str(), loss_label(&model.loss)),
        };
        if let LossSpec::Cosface { project_features, .. } = &mut model.loss {
            *project_features = false;
        }
        let es = embed_dataset(&model, &test)?;
        let title = format!("{} {}-D: {label}", c.dataset, c.dims);
        emit(dir, &prefix, technique, &es, &title, Style::Scatter)?;

        if kind == LossKind::Cosface {
            let title = format!("{} {}-D: {label}, projected onto the unit sphere", c.dataset, c.dims);
            if c.dims == 2 {
                emit(dir, &prefix, "cosface_projected", &es, &title, Style::UnitCircle)?;
            } else {
                if let LossSpec::Cosface { project_features, .. } = &mut model.loss {
                    *project_features = true;
                }
                let projected = embed_dataset(&model, &test)?;
                emit(dir, &prefix, "cosface_projected", &projected, &title, Style::Scatter)?;
            }
        }
    }
    Ok(())
}

fn emit(dir: &Path, prefix: &str, technique: &str, es: &EmbeddingSet<f64>, title: &str, style: Style) -> Result<(), Error> {
    let stem = format!("{prefix}_{technique}");
    export_csv(es, &dir.join(format!("{stem}.csv")))?;
    let opts = SvgOptions { title: Some(title.to_string()), ..SvgOptions::default() };
    let svg = match style {
        Style::Scatter => render_svg(es, &opts)?,
        Style::UnitCircle => render_unit_circle_projection(es, &opts)?.svg,
    };
    let path = dir.join(format!("{stem}.svg"));
    write_svg(&path, &svg)?;
    println!("{}", path.display());
    Ok(())
}
