mod manifest;
mod settings;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nextpoi::baselines::{MajorityModel, ModelKind};
use nextpoi::dataio::{
    filter_dataset_with, parse_foursquare, sessionize, split_dataset, synth_corpus, toy_corpus, CheckIn, Dataset,
    DatasetSplit, FilterThresholds, Familiarity, IdMap, SynthSpec, ToySpec,
};
use nextpoi::evaluation::{
    evaluate, format_region_accuracy, format_report, ranks, region_accuracy, MetricReport, Scorer, Subset,
    REGION_HEADER, REPORT_HEADER,
};
use nextpoi::model::Model;
use nextpoi::regions::{build_profiles, label_movements, write_profiles, MeanShiftParams, ProfileWindow, RegionGrid};
use nextpoi::training::{
    format_loss_log, make_windows, parse_loss_log, train, EpochRecord, TrainObserver, TrainingWindow, Variant,
};

use manifest::{hash_files, RunManifest, MANIFEST_FILE};
use settings::{RunSettings, RUN_FILE};

#[derive(Parser)]
#[command(name = "nextpoi", version, about = "Next-POI prediction with a mixture of sequence experts")]
struct Cli {
    /// Relative output paths are resolved against this directory.
    #[arg(long, global = true, env = "NEXTPOI_OUT_ROOT")]
    out_root: Option<PathBuf>,
    /// Allow writing into a non-empty output directory.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw check-ins, split them into sessions and filter sparse users.
    Ingest(IngestArgs),
    /// Label every step familiar or unfamiliar from per-user region profiles.
    Classify(ClassifyArgs),
    /// Train one model and write its checkpoint and loss log.
    Train(TrainCmd),
    /// Score a trained model on the held-out sessions.
    Eval(EvalArgs),
    /// Train every ablation variant over several seeds.
    Ablate(AblateArgs),
    /// Generate a synthetic dataset with known structure.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Foursquare,
    Canonical,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum)]
    format: InputFormat,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 24.0)]
    gap_hours: f64,
    #[arg(long, default_value_t = 10)]
    min_session_len: usize,
    #[arg(long, default_value_t = 10)]
    min_user_sessions: usize,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Canonical dataset directory.
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long, default_value_t = 0.01)]
    cell_deg: f64,
    #[arg(long, default_value_t = 7)]
    window_days: u32,
    #[arg(long, default_value_t = 0.02)]
    bandwidth: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct TrainFlags {
    /// Canonical dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "moe")]
    model: ModelKind,
    #[arg(long, default_value = "full")]
    variant: Variant,
    #[arg(long, default_value_t = 5e-4)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    seq_len: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 3)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of sessions used for training.
    #[arg(long, default_value_t = 0.8)]
    split: f64,
    /// `key=value` file applied on top of the flags.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl TrainFlags {
    fn settings(&self) -> Result<RunSettings> {
        let mut s = RunSettings {
            model: self.model,
            variant: self.variant,
            split: self.split,
            ..Default::default()
        };
        s.train.lr = self.lr;
        s.train.batch_size = self.batch;
        s.train.seq_len = self.seq_len;
        s.train.max_epochs = self.epochs;
        s.train.patience = self.patience;
        s.train.seed = self.seed;
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Args)]
struct TrainCmd {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubsetChoice {
    All,
    Familiar,
    Unfamiliar,
    Total,
}

impl SubsetChoice {
    fn keeps(self, s: Subset) -> bool {
        match self {
            SubsetChoice::All => true,
            SubsetChoice::Familiar => s == Subset::Familiar,
            SubsetChoice::Unfamiliar => s == Subset::Unfamiliar,
            SubsetChoice::Total => s == Subset::Total,
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "all")]
    subsets: SubsetChoice,
    /// Also write per-region Top-1 accuracy.
    #[arg(long)]
    regions: bool,
    #[arg(long, default_value_t = 0.01)]
    cell_deg: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    flags: TrainFlags,
    #[arg(long, default_value_t = 3)]
    seeds: u64,
    /// Comma-separated variant names; defaults to all five.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<Variant>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Synth,
    Toy,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "synth")]
    kind: SynthKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    sessions_per_user: Option<usize>,
    /// Share of users on the long-memory regime.
    #[arg(long)]
    long_share: Option<f64>,
    #[arg(long)]
    revisit_prob: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Output directory that refuses to clobber unrelated files.
fn prepare_out(root: Option<&Path>, out: &Path, force: bool) -> Result<PathBuf> {
    let dir = match root {
        Some(r) if out.is_relative() => r.join(out),
        _ => out.to_path_buf(),
    };
    if dir.exists() {
        ensure!(dir.is_dir(), "{} exists and is not a directory", dir.display());
        let occupied = fs::read_dir(&dir)?.next().is_some();
        ensure!(!occupied || force, "{} is not empty; pass --force to overwrite", dir.display());
        if occupied {
            // stale outputs would otherwise end up in the manifest
            for entry in fs::read_dir(&dir)? {
                let p = entry?.path();
                if p.is_dir() {
                    fs::remove_dir_all(&p)?;
                } else {
                    fs::remove_file(&p)?;
                }
            }
        }
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn dataset_hash(dir: &Path) -> Result<String> {
    let files: Vec<PathBuf> = [Dataset::SESSIONS_FILE, Dataset::POIS_FILE, Dataset::IDMAP_FILE]
        .iter()
        .map(|f| dir.join(f))
        .filter(|p| p.exists())
        .collect();
    hash_files(&files)
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))
}

fn seal(manifest: RunManifest, dir: &Path) -> Result<()> {
    manifest.finish(dir)?;
    RunManifest::verify(dir)?;
    Ok(())
}

fn ingest(a: &IngestArgs, dir: &Path) -> Result<()> {
    ensure!(a.gap_hours > 0.0, "--gap-hours must be positive");
    let gap = (a.gap_hours * 3600.0).round() as i64;
    let (checkins, pois, ids): (Vec<CheckIn>, _, IdMap) = match a.format {
        InputFormat::Foursquare => {
            let p = parse_foursquare(&a.input)?;
            for s in &p.skipped {
                eprintln!("{}:{}: skipped: {}", a.input.display(), s.line, s.message);
            }
            eprintln!("read {} lines, skipped {}", p.total_lines, p.skipped.len());
            (p.checkins, p.pois, p.ids)
        }
        InputFormat::Canonical => {
            let d = load_dataset(&a.input)?;
            (d.sessions.iter().flat_map(|s| s.checkins()).collect(), d.pois, d.ids)
        }
    };
    let t = FilterThresholds {
        min_session_len: a.min_session_len,
        min_user_sessions: a.min_user_sessions,
    };
    let sessions = filter_dataset_with(sessionize(&checkins, gap), &t);
    ensure!(!sessions.is_empty(), "no sessions survive filtering");
    let ds = Dataset { sessions, pois, ids };
    ds.save(dir)?;
    let back = load_dataset(dir)?;
    ensure!(back.sessions.len() == ds.sessions.len(), "re-read session count differs");
    println!("wrote {} sessions over {} POIs to {}", ds.sessions.len(), ds.pois.len(), dir.display());

    let cfg = format!(
        "format={}\ngap_hours={}\nmin_session_len={}\nmin_user_sessions={}\n",
        match a.format {
            InputFormat::Foursquare => "foursquare",
            InputFormat::Canonical => "canonical",
        },
        a.gap_hours,
        a.min_session_len,
        a.min_user_sessions
    );
    let input_hash = if a.input.is_dir() {
        dataset_hash(&a.input)?
    } else {
        hash_files(&[a.input.clone()])?
    };
    seal(RunManifest::new("ingest", &cfg, input_hash, None), dir)
}

const PROFILES_FILE: &str = "profiles.tsv";

fn classify(a: &ClassifyArgs, dir: &Path) -> Result<()> {
    let ds = load_dataset(&a.sessions)?;
    let grid = RegionGrid::with_cell(a.cell_deg)?;
    let params = MeanShiftParams {
        bandwidth: a.bandwidth,
        ..Default::default()
    };
    params.validate()?;
    ensure!(a.window_days > 0, "--window-days must be positive");
    let profiles = build_profiles(&ds.sessions, &ds.pois, &grid, &params, &ProfileWindow::days(a.window_days))?;
    let labeled = label_movements(&ds.sessions, &profiles, &ds.pois, &grid)?;
    let out = Dataset {
        sessions: labeled,
        ..ds
    };
    out.save(dir)?;
    write_profiles(&dir.join(PROFILES_FILE), &profiles)?;
    let back = load_dataset(dir)?;
    ensure!(back == out, "re-read labeled dataset differs");
    let steps: Vec<Familiarity> = out.sessions.iter().flat_map(|s| s.familiarity_seq.iter().copied()).collect();
    let fam = steps.iter().filter(|&&f| f == Familiarity::Familiar).count();
    println!("labeled {} steps ({fam} familiar) for {} users", steps.len(), profiles.len());

    let cfg = format!("cell_deg={}\nwindow_days={}\nbandwidth={}\n", a.cell_deg, a.window_days, a.bandwidth);
    seal(RunManifest::new("classify", &cfg, dataset_hash(&a.sessions)?, None), dir)
}

struct Windows {
    split: DatasetSplit,
    train: Vec<TrainingWindow>,
    validation: Vec<TrainingWindow>,
}

fn windows_for(ds: &Dataset, s: &RunSettings) -> Result<Windows> {
    let split = split_dataset(&ds.sessions, &ds.pois, s.split, s.train.seed)?;
    let train = make_windows(&split.train, &ds.pois, s.train.seq_len)?;
    let validation = make_windows(&split.validation, &ds.pois, s.train.seq_len)?;
    ensure!(!train.is_empty(), "no training windows; sessions need at least two steps");
    Ok(Windows {
        split,
        train,
        validation,
    })
}

struct Progress(bool);

impl TrainObserver for Progress {
    fn on_epoch_end(&mut self, _: &Model, r: &EpochRecord) -> ControlFlow<()> {
        if self.0 {
            eprintln!("epoch {:>3}  train {:.6}  val {:.6}", r.epoch, r.train_loss, r.val_loss);
        }
        ControlFlow::Continue(())
    }
}

const MODEL_DIR: &str = "model";
const MAJORITY_FILE: &str = "majority.tsv";
const LOSS_FILE: &str = "loss.tsv";

/// Trained model of either kind.
enum Trained {
    Net(Model, Vec<EpochRecord>),
    Majority(MajorityModel),
}

impl Trained {
    fn scorer(&self) -> &dyn Scorer {
        match self {
            Trained::Net(m, _) => m,
            Trained::Majority(m) => m,
        }
    }
}

fn fit(s: &RunSettings, w: &Windows, verbose: bool) -> Result<Trained> {
    let base = s.model_config(w.split.poi_count, w.split.category_count)?;
    match s.model.build(&base, s.variant, s.train.seed)? {
        Some(model) => {
            let out = train(model, &w.train, &w.validation, &s.train, &mut Progress(verbose)).context("training failed")?;
            if out.stopped_early {
                eprintln!("stopped early; restored epoch {}", out.best_epoch);
            }
            Ok(Trained::Net(out.model, out.log))
        }
        None => Ok(Trained::Majority(MajorityModel::fit(&w.train, w.split.poi_count))),
    }
}

fn cmd_train(a: &TrainCmd, dir: &Path) -> Result<()> {
    let s = a.flags.settings()?;
    let ds = load_dataset(&a.flags.data)?;
    let w = windows_for(&ds, &s)?;
    eprintln!("{} training and {} validation windows", w.train.len(), w.validation.len());
    let trained = fit(&s, &w, true)?;
    write(&dir.join(RUN_FILE), &s.to_text())?;
    match &trained {
        Trained::Net(model, log) => {
            model.save(&dir.join(MODEL_DIR))?;
            write(&dir.join(LOSS_FILE), &format_loss_log(log))?;
            let back = Model::load(&dir.join(MODEL_DIR))?;
            ensure!(back.config == model.config, "re-read model config differs");
            ensure!(parse_loss_log(&fs::read_to_string(dir.join(LOSS_FILE))?)?.len() == log.len(), "bad loss log");
            println!("trained {} epochs; model in {}", log.len(), dir.join(MODEL_DIR).display());
        }
        Trained::Majority(m) => {
            write(&dir.join(MAJORITY_FILE), &m.to_text())?;
            MajorityModel::parse(&fs::read_to_string(dir.join(MAJORITY_FILE))?)?;
            println!("fitted majority vote; counts in {}", dir.join(MAJORITY_FILE).display());
        }
    }
    seal(
        RunManifest::new("train", &s.to_text(), dataset_hash(&a.flags.data)?, Some(s.train.seed)),
        dir,
    )
}

const REPORT_FILE: &str = "report.tsv";
const REGIONS_FILE: &str = "regions.tsv";

fn cmd_eval(a: &EvalArgs, dir: &Path) -> Result<()> {
    let run_cfg = a.checkpoint.join(RUN_FILE);
    let mut s = RunSettings::default();
    s.apply_file(&run_cfg)?;
    let ds = load_dataset(&a.data)?;
    let w = windows_for(&ds, &s)?;
    ensure!(!w.validation.is_empty(), "no held-out windows to evaluate");
    let trained = if a.checkpoint.join(MAJORITY_FILE).exists() {
        Trained::Majority(MajorityModel::parse(&fs::read_to_string(a.checkpoint.join(MAJORITY_FILE))?)?)
    } else {
        Trained::Net(Model::load(&a.checkpoint.join(MODEL_DIR))?, Vec::new())
    };
    let scorer = trained.scorer();
    let r = ranks(scorer, &w.validation)?;
    let reports: Vec<MetricReport> = nextpoi::evaluation::report_from_ranks(&r, &w.validation)?
        .into_iter()
        .filter(|m| a.subsets.keeps(m.subset))
        .collect();
    let name = match s.model {
        ModelKind::Moe => s.variant.name(),
        k => k.name(),
    };
    let report = format!("{REPORT_HEADER}\n{}", format_report(name, &reports));
    write(&dir.join(REPORT_FILE), &report)?;
    print!("{report}");
    if a.regions {
        let grid = RegionGrid::with_cell(a.cell_deg)?;
        let stats = region_accuracy(&r, &w.validation, &ds.pois, &grid)?;
        write(&dir.join(REGIONS_FILE), &format!("{REGION_HEADER}\n{}", format_region_accuracy(&stats)))?;
    }
    let rows = fs::read_to_string(dir.join(REPORT_FILE))?.lines().count();
    ensure!(rows == reports.len() + 1, "report has {rows} lines");

    let cfg = format!(
        "{}checkpoint_hash={}\nsubsets={}\nregions={}\ncell_deg={}\n",
        s.to_text(),
        hash_files(&manifest::files_under(&a.checkpoint)?.into_iter().filter(|p| !p.ends_with(MANIFEST_FILE)).collect::<Vec<_>>())?,
        match a.subsets {
            SubsetChoice::All => "all",
            SubsetChoice::Familiar => "familiar",
            SubsetChoice::Unfamiliar => "unfamiliar",
            SubsetChoice::Total => "total",
        },
        a.regions,
        a.cell_deg
    );
    seal(RunManifest::new("eval", &cfg, dataset_hash(&a.data)?, Some(s.train.seed)), dir)
}

const ABLATION_FILE: &str = "ablation.tsv";
const ABLATION_HEADER: &str = "variant\tseed\tsubset\ttop1\ttop5\ttop10\tmrr\tn";

fn ablation_row(out: &mut String, variant: &str, seed: &str, r: &MetricReport) {
    writeln!(
        out,
        "{variant}\t{seed}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
        r.subset, r.top1, r.top5, r.top10, r.mrr, r.n_queries
    )
    .unwrap();
}

fn cmd_ablate(a: &AblateArgs, dir: &Path) -> Result<()> {
    ensure!(a.seeds > 0, "--seeds must be positive");
    let mut base = a.flags.settings()?;
    base.model = ModelKind::Moe;
    let variants = if a.variants.is_empty() {
        Variant::ALL.to_vec()
    } else {
        a.variants.clone()
    };
    let ds = load_dataset(&a.flags.data)?;
    let mut text = format!("{ABLATION_HEADER}\n");
    let mut means = String::new();
    for &v in &variants {
        let mut per_seed: Vec<Vec<MetricReport>> = Vec::new();
        for seed in 0..a.seeds {
            let mut s = base.clone();
            s.variant = v;
            s.train.seed = base.train.seed + seed;
            let w = windows_for(&ds, &s)?;
            let Trained::Net(model, log) = fit(&s, &w, false)? else {
                unreachable!("ablation variants are networks")
            };
            write(&dir.join(format!("loss_{v}_{}.tsv", s.train.seed)), &format_loss_log(&log))?;
            let reports = evaluate(&model, &w.validation)?;
            for r in &reports {
                ablation_row(&mut text, v.name(), &s.train.seed.to_string(), r);
            }
            let total = reports.iter().find(|r| r.subset == Subset::Total).copied();
            if let Some(t) = total {
                eprintln!("{v} seed {}: top5 {:.4} after {} epochs", s.train.seed, t.top5, log.len());
            }
            per_seed.push(reports);
        }
        for (i, &subset) in Subset::ALL.iter().enumerate() {
            let n = per_seed.len() as f64;
            let avg = |f: fn(&MetricReport) -> f64| per_seed.iter().map(|r| f(&r[i])).sum::<f64>() / n;
            let mean = MetricReport {
                subset,
                top1: avg(|r| r.top1),
                top5: avg(|r| r.top5),
                top10: avg(|r| r.top10),
                mrr: avg(|r| r.mrr),
                n_queries: per_seed.iter().map(|r| r[i].n_queries).sum(),
            };
            ablation_row(&mut means, v.name(), "mean", &mean);
        }
    }
    text.push_str(&means);
    write(&dir.join(ABLATION_FILE), &text)?;
    print!("{text}");
    let rows = fs::read_to_string(dir.join(ABLATION_FILE))?.lines().count();
    ensure!(rows == 1 + variants.len() * (a.seeds as usize + 1) * Subset::ALL.len(), "ablation table incomplete");

    let names: Vec<&str> = variants.iter().map(|v| v.name()).collect();
    let cfg = format!("{}seeds={}\nvariants={}\n", base.to_text(), a.seeds, names.join(","));
    seal(
        RunManifest::new("ablate", &cfg, dataset_hash(&a.flags.data)?, Some(base.train.seed)),
        dir,
    )
}

const PLANTED_FILE: &str = "planted.tsv";
const SUCCESSOR_FILE: &str = "successor.tsv";

fn cmd_synth(a: &SynthArgs, dir: &Path) -> Result<()> {
    let mut cfg = format!("seed={}\n", a.seed);
    match a.kind {
        SynthKind::Synth => {
            let mut spec = SynthSpec::default();
            if let Some(u) = a.users {
                spec.users = u;
            }
            if let Some(n) = a.sessions_per_user {
                spec.sessions_per_user = n;
            }
            if let Some(p) = a.long_share {
                spec.long_memory_share = p;
            }
            if let Some(p) = a.revisit_prob {
                spec.revisit_prob = p;
            }
            writeln!(cfg, "kind=synth\n{spec:?}").unwrap();
            let corpus = synth_corpus(&spec, a.seed)?;
            let truth: BTreeMap<(u32, i64), Familiarity> = corpus
                .checkins
                .iter()
                .zip(&corpus.labels)
                .map(|(c, &l)| ((c.user, c.timestamp), l))
                .collect();
            let mut sessions = sessionize(&corpus.checkins, spec.session_gap_secs - 1);
            for s in &mut sessions {
                s.familiarity_seq = s.time_seq.iter().map(|&t| truth[&(s.user, t)]).collect();
            }
            Dataset {
                sessions,
                pois: corpus.pois,
                ids: IdMap::default(),
            }
            .save(dir)?;
            let mut planted = String::from("user\tregime\thome_region\tfamiliar_regions\tanchor_poi\n");
            for u in &corpus.users {
                let fam: Vec<String> = u.familiar_regions.iter().map(|r| r.to_string()).collect();
                writeln!(planted, "{}\t{:?}\t{}\t{}\t{}", u.user, u.regime, u.home_region, fam.join(","), u.anchor_poi)
                    .unwrap();
            }
            write(&dir.join(PLANTED_FILE), &planted)?;
        }
        SynthKind::Toy => {
            let mut spec = ToySpec::default();
            if let Some(u) = a.users {
                spec.users = u;
            }
            if let Some(n) = a.sessions_per_user {
                spec.sessions_per_user = n;
            }
            writeln!(cfg, "kind=toy\n{spec:?}").unwrap();
            let (checkins, pois, next) = toy_corpus(&spec, a.seed)?;
            Dataset {
                sessions: sessionize(&checkins, nextpoi::dataio::DEFAULT_SESSION_GAP_SECS),
                pois,
                ids: IdMap::default(),
            }
            .save(dir)?;
            let text: String = next.iter().enumerate().map(|(p, n)| format!("{p}\t{n}\n")).collect();
            write(&dir.join(SUCCESSOR_FILE), &text)?;
        }
    }
    let back = load_dataset(dir)?;
    println!("wrote {} sessions over {} POIs to {}", back.sessions.len(), back.pois.len(), dir.display());
    seal(RunManifest::new("synth", &cfg, String::new(), Some(a.seed)), dir)
}

fn run(cli: Cli) -> Result<()> {
    let root = cli.out_root.as_deref();
    let out = |p: &Path| prepare_out(root, p, cli.force);
    match &cli.command {
        Command::Ingest(a) => {
            if !a.input.exists() {
                bail!("input {} does not exist", a.input.display());
            }
            ingest(a, &out(&a.out)?)
        }
        Command::Classify(a) => {
            if !a.sessions.join(Dataset::SESSIONS_FILE).exists() {
                bail!("no {} in {}", Dataset::SESSIONS_FILE, a.sessions.display());
            }
            classify(a, &out(&a.out)?)
        }
        Command::Train(a) => {
            a.flags.settings()?;
            cmd_train(a, &out(&a.out)?)
        }
        Command::Eval(a) => cmd_eval(a, &out(&a.out)?),
        Command::Ablate(a) => {
            a.flags.settings()?;
            cmd_ablate(a, &out(&a.out)?)
        }
        Command::Synth(a) => cmd_synth(a, &out(&a.out)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
