//! Command-line front end: training, export, descriptor extraction,
//! matching, evaluation and the accounting reports.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bnvp::error::{Error, Result};
use bnvp::graph::{preset_named, FrozenNetwork, LayerKind, NetworkSpec};
use bnvp::io::{self, ModelData, RunConfig};
use bnvp::metrics;
use bnvp::train::{self, synth, LabeledDataset, TrainConfig};
use bnvp::vpr::{self, ReferenceDB};

#[derive(Parser)]
#[command(
    name = "bnvp",
    version,
    about = "Binary network place recognition toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Freeze a checkpoint into a feature extractor (FC stage stripped).
    Export(ExportArgs),
    /// Extract descriptors for every image in a directory.
    Extract(ExtractArgs),
    /// Match query descriptors against reference descriptors.
    Match(MatchArgs),
    /// Full evaluation: images + ground truth -> report and score summary.
    Eval(EvalArgs),
    /// Cumulative parameter/size table for a preset.
    Sizeof(SizeofArgs),
    /// Per-layer MAC counts for a preset.
    Macs(MacsArgs),
    /// Memory-efficiency summary from (name, precision, score, size) rows.
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Training config file (key = value lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory of per-class image subdirectories.
    #[arg(long, conflicts_with = "synthetic")]
    data: Option<PathBuf>,
    /// Use the built-in synthetic place dataset.
    #[arg(long)]
    synthetic: bool,
    /// Also write the synthetic dataset (reference/, query/, gt.csv) here.
    #[arg(long, requires = "synthetic")]
    dump_data: Option<PathBuf>,
    /// Preset architecture; defaults to the compact desk-scale network.
    #[arg(long)]
    preset: Option<String>,
    /// Input geometry HxWxC for the desk-scale network.
    #[arg(long, default_value = "32x32x3")]
    input: String,
    /// Weight precision override.
    #[arg(long)]
    bits: Option<u8>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Progress CSV (epoch,step,loss,accuracy); stdout when omitted.
    #[arg(long)]
    log: Option<PathBuf>,
    /// Images per class for the synthetic dataset.
    #[arg(long, default_value_t = 24)]
    per_class: usize,
}

#[derive(Args)]
struct ExportArgs {
    /// Checkpoint to freeze.
    #[arg(long)]
    model: PathBuf,
    /// Frozen extractor output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Frozen extractor.
    #[arg(long)]
    model: PathBuf,
    /// Image directory.
    #[arg(long)]
    data: PathBuf,
    /// Layer to extract from (defaults to the model's output layer).
    #[arg(long)]
    layer: Option<String>,
    /// Descriptor file output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    /// Reference descriptor file.
    #[arg(long)]
    db: PathBuf,
    /// Query descriptor file.
    #[arg(long)]
    queries: PathBuf,
    /// Ground truth CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Report CSV output path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Frozen extractor.
    #[arg(long)]
    model: PathBuf,
    /// Reference image directory.
    #[arg(long)]
    refs: PathBuf,
    /// Query image directory.
    #[arg(long)]
    queries: PathBuf,
    /// Ground truth CSV.
    #[arg(long)]
    gt: PathBuf,
    /// Layer override.
    #[arg(long)]
    layer: Option<String>,
    /// Report CSV output path.
    #[arg(long)]
    out: PathBuf,
    /// Score/efficiency summary JSON output path; stdout when omitted.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Model size in KiB for the efficiency figure (defaults to the
    /// accounting size of the model's architecture).
    #[arg(long)]
    size_kib: Option<f64>,
}

#[derive(Args)]
struct SizeofArgs {
    #[arg(long)]
    preset: String,
    /// Weight precision in bits.
    #[arg(long, default_value_t = 1)]
    bits: u8,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct MacsArgs {
    #[arg(long)]
    preset: String,
    /// Input geometry HxWxC.
    #[arg(long, default_value = "227x227x3")]
    input: String,
    /// CSV output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Input CSV with rows name,precision,s_p100,size_kib.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON output path.
    #[arg(long)]
    json: Option<PathBuf>,
}

fn parse_shape(text: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("expected HxWxC, got `{text}`")));
    }
    let dims: Vec<usize> = parts
        .iter()
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::Config(format!("bad dimension `{p}` in `{text}`")))
        })
        .collect::<Result<_>>()?;
    Ok((dims[0], dims[1], dims[2]))
}

fn load_class_dirs(dir: &Path, input: (usize, usize, usize)) -> Result<LabeledDataset> {
    let mut class_dirs: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().map(|t| t.is_dir()).unwrap_or(false))
        .map(|e| e.path())
        .collect();
    class_dirs.sort();
    if class_dirs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut images = Vec::new();
    for (label, cdir) in class_dirs.iter().enumerate() {
        for frame in io::load_image_dir(cdir, (input.0, input.1))? {
            images.push((frame.image, label));
        }
    }
    Ok(LabeledDataset {
        images,
        classes: class_dirs.len(),
    })
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(path) => TrainConfig::parse_str(&fs::read_to_string(path)?)?,
        None => TrainConfig {
            stop_at_accuracy: Some(0.95),
            ..TrainConfig::default()
        },
    };
    if let Some(bits) = args.bits {
        cfg.weight_bits = bits;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let input = parse_shape(&args.input)?;
    let spec: NetworkSpec = match &args.preset {
        Some(name) => preset_named(name)?,
        None => {
            if input.0 != input.1 || input.2 != 3 {
                return Err(Error::Config(
                    "the desk-scale network takes square NxNx3 input".into(),
                ));
            }
            synth::desk_network_spec(input.0, cfg.weight_bits)
        }
    };
    let dataset = if args.synthetic {
        let ds = synth::training_set(cfg.classes, args.per_class, spec.input_shape.0, cfg.seed);
        if let Some(dir) = &args.dump_data {
            dump_synthetic(dir, &cfg, spec.input_shape.0, &ds)?;
        }
        ds
    } else {
        let dir = args
            .data
            .as_ref()
            .ok_or_else(|| Error::Config("pass --data DIR or --synthetic".into()))?;
        let ds = load_class_dirs(dir, spec.input_shape)?;
        if ds.classes != cfg.classes {
            return Err(Error::ClassCountMismatch {
                expected: cfg.classes,
                got: ds.classes,
            });
        }
        ds
    };
    let model = match &args.log {
        Some(path) => {
            let mut file = fs::File::create(path)?;
            train::train(&dataset, &spec, &cfg, Some(&mut file))?
        }
        None => {
            let mut stdout = std::io::stdout();
            train::train(&dataset, &spec, &cfg, Some(&mut stdout))?
        }
    };
    io::save_model(&args.out, &ModelData::Checkpoint(model))?;
    eprintln!("wrote checkpoint {}", args.out.display());
    Ok(())
}

fn dump_synthetic(
    dir: &Path,
    cfg: &TrainConfig,
    size: usize,
    train_set: &LabeledDataset,
) -> Result<()> {
    let ref_dir = dir.join("reference");
    let query_dir = dir.join("query");
    fs::create_dir_all(&ref_dir)?;
    fs::create_dir_all(&query_dir)?;
    for (id, img) in synth::reference_images(cfg.classes, size, cfg.seed) {
        io::save_image(&ref_dir.join(format!("place{id:03}.png")), &img)?;
    }
    for (i, (id, img)) in synth::query_images(cfg.classes, 5, size, cfg.seed)
        .iter()
        .enumerate()
    {
        // query filenames sort in generation order so frame i maps to place i/5
        io::save_image(&query_dir.join(format!("q{i:03}_place{id:03}.png")), img)?;
    }
    // each place has 5 queries; queries of frame i belong to place i/5
    let mut gt = String::new();
    for i in 0..cfg.classes * 5 {
        gt.push_str(&format!("{},{}\n", i, i / 5));
    }
    fs::write(dir.join("gt.csv"), gt)?;
    for (i, (img, label)) in train_set.images.iter().enumerate() {
        let cdir = dir.join("train").join(format!("class{label:03}"));
        fs::create_dir_all(&cdir)?;
        io::save_image(&cdir.join(format!("s{i:05}.png")), img)?;
    }
    Ok(())
}

fn cmd_export(args: ExportArgs) -> Result<()> {
    let model = io::load_checkpoint(&args.model)?;
    let frozen = train::export_extractor(&model)?;
    io::save_model(&args.out, &ModelData::Frozen(frozen))?;
    eprintln!("wrote frozen extractor {}", args.out.display());
    Ok(())
}

fn cmd_extract(args: ExtractArgs) -> Result<()> {
    let net = io::load_frozen(&args.model)?;
    let (h, w, _) = net.spec.input_shape;
    let layer = args.layer.unwrap_or_else(|| net.spec.output_layer.clone());
    let frames = io::load_image_dir(&args.data, (h, w))?;
    let mut descriptors = Vec::with_capacity(frames.len());
    for f in &frames {
        descriptors.push(vpr::extract_at(&net, &f.image, &layer, f.frame)?);
    }
    io::save_descriptors(&args.out, &descriptors)?;
    eprintln!(
        "wrote {} descriptors to {}",
        descriptors.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_match(args: MatchArgs) -> Result<()> {
    let refs = io::load_descriptors(&args.db)?;
    let queries = io::load_descriptors(&args.queries)?;
    let gt = io::load_ground_truth(&args.gt)?;
    let mut db = ReferenceDB::new("reference");
    for d in refs {
        db.add(d.source_image, d)?;
    }
    let report = vpr::run_descriptor_queries(&queries, &db, &gt)?;
    fs::write(&args.out, report.to_csv())?;
    eprintln!(
        "matched {} queries, {} correct",
        report.entries.len(),
        report.correct_count()
    );
    Ok(())
}

/// Accounting size of a frozen network: its spec at the precision of the
/// first weighted layer.
fn accounting_size_kib(net: &FrozenNetwork) -> Result<f64> {
    let bits = net
        .spec
        .layers
        .iter()
        .find(|l| l.kind != LayerKind::Pool)
        .map(|l| l.weight_bits)
        .unwrap_or(32);
    Ok(metrics::size_breakdown(&net.spec, bits)?.total_kib())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let run = RunConfig {
        model: args.model.clone(),
        reference_dir: args.refs.clone(),
        query_dir: args.queries.clone(),
        ground_truth: args.gt.clone(),
        output_layer: args.layer.clone(),
    };
    let (report, score) = io::run_eval(&run)?;
    fs::write(&args.out, report.to_csv())?;
    let size_kib = match args.size_kib {
        Some(s) => s,
        None => accounting_size_kib(&io::load_frozen(&args.model)?)?,
    };
    let eta = metrics::memory_efficiency(score, size_kib)?;
    let summary = serde_json::json!({
        "queries": report.entries.len(),
        "correct": report.correct_count(),
        "s_p100": score,
        "size_kib": size_kib,
        "eta_m": eta,
    });
    let text = serde_json::to_string_pretty(&summary).expect("json serializes");
    match &args.summary {
        Some(path) => fs::write(path, text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_sizeof(args: SizeofArgs) -> Result<()> {
    let spec = preset_named(&args.preset)?;
    let table = metrics::size_breakdown(&spec, args.bits)?;
    let csv = table.to_csv();
    match &args.out {
        Some(path) => fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        fs::write(
            path,
            serde_json::to_string_pretty(&table).expect("json serializes"),
        )?;
    }
    eprintln!(
        "{} at {}-bit: {:.2} KiB ({:.2} MiB)",
        spec.name,
        args.bits,
        table.total_kib(),
        table.total_mib()
    );
    Ok(())
}

fn cmd_macs(args: MacsArgs) -> Result<()> {
    let spec = preset_named(&args.preset)?;
    let input = parse_shape(&args.input)?;
    let table = metrics::mac_breakdown(&spec, input)?;
    let csv = table.to_csv();
    match &args.out {
        Some(path) => fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        fs::write(
            path,
            serde_json::to_string_pretty(&table).expect("json serializes"),
        )?;
    }
    println!(
        "total={:.1}M binary={:.1}M full={:.1}M",
        table.total() as f64 / 1e6,
        table.binary_total() as f64 / 1e6,
        table.full_precision_total() as f64 / 1e6
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let text = fs::read_to_string(&args.input)?;
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("name,") {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Config(format!(
                "line {}: expected name,precision,s_p100,size_kib",
                lineno + 1
            )));
        }
        let s: f64 = f[2]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {}: bad score", lineno + 1)))?;
        let size: f64 = f[3]
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("line {}: bad size", lineno + 1)))?;
        rows.push((f[0].trim().to_string(), f[1].trim().to_string(), s, size));
    }
    let table = metrics::efficiency_table(&rows)?;
    let csv = metrics::efficiency_csv(&table);
    match &args.out {
        Some(path) => fs::write(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.json {
        fs::write(
            path,
            serde_json::to_string_pretty(&table).expect("json serializes"),
        )?;
    }
    let ranking = metrics::efficiency_ranking(&table);
    eprintln!("ranking (best first): {}", ranking.join(" > "));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(args),
        Command::Export(args) => cmd_export(args),
        Command::Extract(args) => cmd_extract(args),
        Command::Match(args) => cmd_match(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Sizeof(args) => cmd_sizeof(args),
        Command::Macs(args) => cmd_macs(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
