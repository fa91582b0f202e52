use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use ecgseg::csvio::{read_annotation_csv, write_annotation_csv};
use ecgseg::dataset::{self, DataConfig};
use ecgseg::evaluate::{evaluate_sets, Convention, EvalOptions, MetricsReport, TOLERANCE_MS};
use ecgseg::model::EcgModel;
use ecgseg::pipeline::{delineate_record, DelineateOptions};
use ecgseg::plot::render_svg;
use ecgseg::synth::{synth_record, write_synth_dataset, write_synth_record, SynthConfig, SynthDatasetConfig};
use ecgseg::train::{fit, load_examples, RunConfig, Scale};
use ecgseg::resample::resample_annotations;
use ecgseg::wfdb;
use ecgseg::AnnotationSet;

#[derive(Parser)]
#[command(name = "ecgseg", version, about = "ECG wave delineation: train, delineate, evaluate, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a TOML config.
    Train(TrainArgs),
    /// Write P/QRS/T boundaries of a WFDB record as CSV.
    Delineate(DelineateArgs),
    /// Score predicted boundaries against reference annotations.
    Eval(EvalArgs),
    /// Render a record and its boundaries as SVG.
    Plot(PlotArgs),
    /// Generate a synthetic WFDB dataset or a single long record.
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    config: PathBuf,
    /// Dataset root, overriding the config file.
    #[arg(long, env = "ECGSEG_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    use_cls_branch: Option<bool>,
    #[arg(long, conflicts_with = "full")]
    desk: bool,
    #[arg(long)]
    full: bool,
    /// Manifest split to train on.
    #[arg(long, default_value = "train")]
    split: String,
}

#[derive(Args)]
struct DelineateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Record path without extension.
    #[arg(long)]
    record: PathBuf,
    /// Leads to delineate; all leads when omitted.
    #[arg(long = "lead")]
    leads: Vec<String>,
    #[arg(long)]
    guidance: bool,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Reference annotations as CSV.
    #[arg(long = "ref", conflicts_with = "data_dir")]
    reference: Option<PathBuf>,
    /// WFDB dataset with a manifest, used for references and groups.
    #[arg(long, env = "ECGSEG_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Annotation extension for dataset references; `{lead}` expands per lead.
    #[arg(long, default_value = "{lead}")]
    ann_ext: String,
    #[arg(long, default_value = "generic")]
    dataset_convention: Convention,
    #[arg(long = "lead")]
    leads: Vec<String>,
    #[arg(long, default_value_t = TOLERANCE_MS)]
    tolerance_ms: f64,
    /// Metrics CSV output.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    record: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 20)]
    records: usize,
    #[arg(long, default_value_t = 10.0)]
    duration_s: f64,
    #[arg(long, default_value_t = 500.0)]
    fs: f64,
    #[arg(long, default_value_t = 0.2)]
    afib_fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write one record with this id instead of a dataset.
    #[arg(long)]
    single: Option<String>,
    #[arg(long)]
    afib: bool,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Delineate(a) => cmd_delineate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Synth(a) => cmd_synth(a),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config).with_context(|| format!("loading {}", a.config.display()))?;
    if let Some(dir) = a.data_dir {
        cfg.data = DataConfig { root: dir, manifest: PathBuf::from("manifest.csv"), ..cfg.data }.resolved(Path::new("."));
    }
    if let Some(seed) = a.seed {
        cfg.train.seed = seed;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(c) = a.use_cls_branch {
        cfg.train.use_cls_branch = c;
    }
    if a.desk {
        cfg.train.scale = Scale::Desk;
    }
    if a.full {
        cfg.train.scale = Scale::Full;
    }
    cfg.train.validate()?;
    let output = a.output.or(cfg.output.clone()).unwrap_or_else(|| PathBuf::from("ecgseg-run"));

    let examples = load_examples(&cfg.data, &cfg.train, &a.split)?;
    if examples.is_empty() {
        bail!("no usable training examples in split '{}'", a.split);
    }
    let model_cfg = cfg.train.scale.model_config().with_cls_branch(cfg.train.use_cls_branch);
    let mut model = EcgModel::new(model_cfg, cfg.train.seed)?;
    info!(
        "training {} parameters on {} examples for {} epochs",
        model.param_count(),
        examples.len(),
        cfg.train.epochs
    );
    fs::create_dir_all(&output)?;
    fs::write(output.join("config.toml"), toml::to_string(&cfg)?)?;
    fit(&mut model, &examples, &cfg.train, Some(&output))?;
    info!("wrote {}", output.join("model.ckpt").display());
    Ok(())
}

fn cmd_delineate(a: DelineateArgs) -> Result<()> {
    let model = EcgModel::load(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let (_, record) = wfdb::read_record(&a.record).with_context(|| format!("reading record {}", a.record.display()))?;
    let opts = DelineateOptions { guidance: a.guidance, ..Default::default() };
    let (set, leads) = delineate_record(&model, &record, &a.leads, &opts)?;
    for l in &leads {
        let guided = l.windows.iter().filter(|w| w.guided).count();
        info!("lead {}: {} windows, {guided} guided", l.lead, l.windows.len());
    }
    match a.output {
        Some(p) => write_annotation_csv(BufWriter::new(File::create(&p)?), &[set])?,
        None => write_annotation_csv(io::stdout().lock(), &[set])?,
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let pred_fs = 500.0;
    let pred = read_annotation_csv(File::open(&a.pred).with_context(|| format!("opening {}", a.pred.display()))?, pred_fs)
        .with_context(|| format!("parsing {}", a.pred.display()))?;
    let opts = EvalOptions { tolerance_ms: a.tolerance_ms, ..Default::default() };
    let (reference, groups) = if let Some(r) = &a.reference {
        let sets = read_annotation_csv(File::open(r).with_context(|| format!("opening {}", r.display()))?, pred_fs)
            .with_context(|| format!("parsing {}", r.display()))?;
        (sets, Vec::new())
    } else if let Some(dir) = &a.data_dir {
        let data = DataConfig { root: dir.clone(), annotation_ext: a.ann_ext.clone(), ..DataConfig::default() }.resolved(Path::new("."));
        let entries = dataset::read_manifest(&data.manifest)?;
        let chosen = dataset::split(&entries, &a.split);
        if chosen.is_empty() {
            bail!("no '{}' records in {}", a.split, data.manifest.display());
        }
        let mut sets = Vec::new();
        let mut groups = Vec::new();
        for e in chosen {
            let loaded = data.load(e)?;
            groups.push((loaded.record.record_id.clone(), loaded.group.clone()));
            sets.push(loaded.annotations);
        }
        (sets, groups)
    } else {
        bail!("give --ref or --data-dir");
    };
    let group_of = |id: &str| groups.iter().find(|(r, _)| r == id).and_then(|(_, g)| g.clone());
    let reports = evaluate_sets(&pred, &reference, a.dataset_convention, &a.leads, &opts, &group_of);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for (g, r) in &reports {
        writeln!(out, "== {g} ==\n{r}")?;
    }
    if let Some(p) = a.output {
        let mut text = String::from(MetricsReport::CSV_HEADER);
        text.push('\n');
        for (g, r) in &reports {
            text.push_str(&r.to_csv(g));
        }
        fs::write(p, text)?;
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<()> {
    let (_, record) = wfdb::read_record(&a.record).with_context(|| format!("reading record {}", a.record.display()))?;
    let annotations = match &a.annotations {
        Some(p) => {
            let sets = read_annotation_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?, record.fs)
                .with_context(|| format!("parsing {}", p.display()))?;
            let single = sets.len() == 1;
            let mut merged = ecgseg::AnnotationSet::new(record.record_id.clone(), record.fs);
            // a CSV holding one record applies whatever its id
            for s in sets.into_iter().filter(|s| single || s.record_id == record.record_id) {
                merged.items.extend(resample_annotations(&s, record.fs, Some(record.len())).items);
            }
            merged
        }
        None => AnnotationSet::new(record.record_id.clone(), record.fs),
    };
    fs::write(&a.output, render_svg(&record, &annotations))?;
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let record = SynthConfig { fs: a.fs, duration_s: a.duration_s, afib: a.afib, ..SynthConfig::default() };
    if let Some(id) = a.single {
        let s = synth_record(&id, &record, a.seed)?;
        write_synth_record(&a.output, &s)?;
        info!("wrote {}", a.output.join(&id).display());
        return Ok(());
    }
    let cfg = SynthDatasetConfig {
        n_records: a.records,
        test_fraction: a.test_fraction,
        afib_fraction: a.afib_fraction,
        record,
    };
    let entries = write_synth_dataset(&a.output, &cfg, a.seed)?;
    info!("wrote {} records to {}", entries.len(), a.output.display());
    Ok(())
}
