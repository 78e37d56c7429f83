//! Command-line interface. `main.rs` only calls [`run`].

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::audfront::{invert_spectrogram, wav};
use crate::config::RunConfig;
use crate::data::{
    gen_synthetic, load_manifest, oracle_synth, split_by_speaker, write_dataset, ArticTrajectory, Item, OracleParams,
    Split,
};
use crate::error::{Error, Result};
use crate::eval::{export_trajectories, write_average_table, write_table, PpmcReport};
use crate::mirrornet::{
    infer_articulation, init_phase, learning_phase, LearnOptions, MirrorNet, OraclePlant, PhaseOptions, Plant,
};
use crate::study::{estimates, score, StudyData};
use crate::synth::{eval_synthesizer, synth_forward, train_synthesizer, SynthModel, SynthTrainOptions, Variant};

#[derive(Debug, Parser)]
#[command(name = "mirrornet", version, about = "Articulatory inversion with a synthesizer in the loop")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus from the closed-form oracle.
    GenSynthetic(GenArgs),
    /// Train an articulatory synthesizer on trajectory/spectrogram pairs.
    TrainSynth(TrainSynthArgs),
    /// Train a MirrorNet against a frozen plant.
    TrainMirrornet(TrainMirrorArgs),
    /// Score a MirrorNet checkpoint with PPMC.
    Eval(EvalArgs),
    /// Estimate a trajectory from a WAV file.
    Invert(InvertArgs),
    /// Render a trajectory to audio through a plant.
    SynthAudio(SynthAudioArgs),
    /// Run the whole desk-scale study and write both PPMC tables.
    PaperStudy(StudyArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub n: usize,
    /// Seconds per item.
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Speaker-disjoint split ratios as `train=0.8,dev=0.1,test=0.1`.
    /// Without it every item is tagged `train`.
    #[arg(long)]
    pub splits: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainSynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_enum, default_value_t = VariantArg::Ft)]
    pub variant: VariantArg,
    /// Input channels: 9 (TVs + source features) or 6 (TVs only).
    #[arg(long, default_value_t = 9)]
    pub channels: usize,
    /// Split trained on; `dev` items are used for validation.
    #[arg(long, default_value = "train")]
    pub split: Split,
    #[arg(long, default_value_t = 200)]
    pub crop_frames: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Ft,
    Lt,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Ft => Variant::Ft,
            VariantArg::Lt => Variant::Lt,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OnOff {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct TrainMirrorArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// `oracle` or a synthesizer checkpoint.
    #[arg(long)]
    pub synth: String,
    #[arg(long, value_enum)]
    pub init: OnOff,
    #[arg(long, default_value_t = 200)]
    pub crop_frames: usize,
    /// JSON-lines learning log; defaults to the checkpoint path with a
    /// `.jsonl` extension.
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub report_dir: PathBuf,
    /// Split to score; falls back to every item with a trajectory when the
    /// split is empty.
    #[arg(long, default_value = "test")]
    pub split: Split,
}

#[derive(Debug, Args)]
pub struct InvertArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long)]
    pub out_csv: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthAudioArgs {
    /// `oracle` or a synthesizer checkpoint.
    #[arg(long)]
    pub synth: String,
    #[arg(long)]
    pub traj: PathBuf,
    #[arg(long)]
    pub out_wav: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub n_train: usize,
    #[arg(long, default_value_t = 8)]
    pub n_init: usize,
    #[arg(long, default_value_t = 8)]
    pub n_dev: usize,
    #[arg(long, default_value_t = 16)]
    pub n_test: usize,
    #[arg(long, default_value_t = 2.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 200)]
    pub crop_frames: usize,
}

/// Parses arguments, runs the command and returns the process exit code:
/// 0 on success, 1 on runtime failure, 2 on usage or config errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn configure_threads() {
    if let Ok(v) = std::env::var("MIRRORNET_THREADS") {
        match v.parse::<usize>() {
            Ok(n) if n > 0 => {
                if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
                    log::warn!("thread pool already initialised; MIRRORNET_THREADS ignored");
                }
            }
            _ => log::warn!("MIRRORNET_THREADS={v} is not a positive integer; ignored"),
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynthetic(a) => gen(a),
        Command::TrainSynth(a) => train_synth(a),
        Command::TrainMirrornet(a) => train_mirror(a),
        Command::Eval(a) => eval(a),
        Command::Invert(a) => invert(a),
        Command::SynthAudio(a) => synth_audio(a),
        Command::PaperStudy(a) => paper_study(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

/// Parses `train=0.8,dev=0.1,test=0.1`.
pub fn parse_splits(s: &str) -> Result<Vec<(Split, f64)>> {
    s.split(',')
        .map(|part| {
            let (name, ratio) = part
                .split_once('=')
                .ok_or_else(|| usage(format!("split '{part}' is not name=ratio")))?;
            let split: Split = name.trim().parse().map_err(|_| usage(format!("unknown split '{name}'")))?;
            let r: f64 = ratio.trim().parse().map_err(|_| usage(format!("bad ratio '{ratio}'")))?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(usage(format!("ratio for {name} must be positive")));
            }
            Ok((split, r))
        })
        .collect()
}

fn gen(a: GenArgs) -> Result<()> {
    if a.n == 0 {
        return Err(usage("--n must be at least 1"));
    }
    if !(a.duration > 0.0 && a.duration.is_finite()) {
        return Err(usage("--duration must be positive"));
    }
    let mut items = gen_synthetic(a.n, a.duration, a.seed).map_err(|e| usage(e.to_string()))?;
    if let Some(s) = &a.splits {
        split_by_speaker(&mut items, &parse_splits(s)?, a.seed)?;
    }
    let manifest = write_dataset(&a.out, &items)?;
    println!("wrote {} items to {}", items.len(), manifest.display());
    Ok(())
}

fn of_split(items: &[Item], split: Split) -> Vec<Item> {
    items.iter().filter(|i| i.split == split).cloned().collect()
}

fn train_synth(a: TrainSynthArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    if a.channels != 9 && a.channels != 6 {
        return Err(usage("--channels must be 9 or 6"));
    }
    let items = load_manifest(&a.manifest)?;
    let train = of_split(&items, a.split);
    let dev = of_split(&items, Split::Dev);
    let model_cfg = cfg.model.with_latent_channels(a.channels);
    let (model, report) = train_synthesizer(
        &train,
        &dev,
        &model_cfg,
        &cfg.train_synth,
        SynthTrainOptions {
            variant: a.variant.into(),
            channels: a.channels,
            seed: cfg.seed,
            crop_frames: a.crop_frames,
            on_step: None,
        },
    )?;
    let metrics = serde_json::json!({
        "best_dev_mse": report.best_dev_mse,
        "initial_train_mse": report.initial_train_mse,
        "steps": report.steps,
    });
    model.save(&a.out, &cfg.fingerprint(), cfg.seed, metrics)?;
    println!(
        "trained {} synthesizer: {} steps, best dev MSE {:.5}; saved {}",
        a.variant.to_possible_value().unwrap().get_name(),
        report.steps,
        report.best_dev_mse,
        a.out.display()
    );
    Ok(())
}

/// `oracle` or a synthesizer checkpoint.
pub fn load_plant(spec: &str) -> Result<Box<dyn Plant>> {
    if spec == "oracle" {
        Ok(Box::new(OraclePlant::default()))
    } else {
        Ok(Box::new(SynthModel::load(Path::new(spec))?))
    }
}

fn train_mirror(a: TrainMirrorArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    let plant = load_plant(&a.synth)?;
    if plant.channels() != cfg.model.latent_channels {
        return Err(usage(format!(
            "plant takes {} channels but model.latent_channels is {}",
            plant.channels(),
            cfg.model.latent_channels
        )));
    }
    let items = load_manifest(&a.manifest)?;
    let train = of_split(&items, Split::Train);
    let mut model = MirrorNet::new(&cfg.model, plant.stats().clone(), cfg.seed)?;
    let opts = PhaseOptions {
        seed: cfg.seed,
        crop_frames: a.crop_frames,
    };
    let init_report = if a.init == OnOff::On {
        let sup = of_split(&items, Split::Init);
        if sup.is_empty() {
            return Err(usage("--init on needs items tagged 'init' in the manifest"));
        }
        Some(init_phase(&mut model, &sup, &cfg.init, opts)?)
    } else {
        None
    };
    let log_path = a.log.clone().unwrap_or_else(|| a.out.with_extension("jsonl"));
    let mut log = std::io::BufWriter::new(std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let report = learning_phase(
        &mut model,
        &train,
        plant.as_ref(),
        &cfg.learn,
        LearnOptions {
            seed: cfg.seed,
            crop_frames: a.crop_frames,
            log: Some(&mut log),
            observer: None,
        },
    )?;
    drop(log);
    let metrics = serde_json::json!({
        "e_c": report.final_.0,
        "e_d": report.final_.1,
        "iterations": report.iterations,
        "init_epochs": init_report.map_or(0, |r| r.epochs.len()),
    });
    let extra = serde_json::json!({
        "plant": plant.describe(),
        "plant_hash": report.plant_after,
        "init": a.init == OnOff::On,
    });
    model.save(&a.out, &cfg.fingerprint(), cfg.seed, metrics, extra)?;
    println!(
        "learning phase: e_c {:.5} -> {:.5}, e_d {:.5} -> {:.5}; saved {}",
        report.initial.0,
        report.final_.0,
        report.initial.1,
        report.final_.1,
        a.out.display()
    );
    Ok(())
}

fn scored_items(items: &[Item], split: Split) -> Vec<Item> {
    let chosen: Vec<Item> = of_split(items, split).into_iter().filter(|i| i.trajectory.is_some()).collect();
    if chosen.is_empty() {
        log::warn!("no '{}' items with trajectories; scoring every such item", split.as_str());
        items.iter().filter(|i| i.trajectory.is_some()).cloned().collect()
    } else {
        chosen
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = MirrorNet::load(&a.model)?;
    let items = load_manifest(&a.manifest)?;
    let test = scored_items(&items, a.split);
    let rows = estimates(&model, &test)?;
    let traj_dir = a.report_dir.join("trajectories");
    std::fs::create_dir_all(&traj_dir).map_err(|e| Error::io(&traj_dir, e))?;
    for (id, est, truth) in &rows {
        export_trajectories(est, truth, &traj_dir.join(format!("{id}.csv")))?;
    }
    let report = score(&model, &test)?;
    report.write(&a.report_dir, "MirrorNet")?;
    println!(
        "PPMC over {} items: avg 6 TVs {}, avg all {:.4}",
        rows.len(),
        report.avg_6tvs.map_or("-".into(), |v| format!("{v:.4}")),
        report.avg_all
    );
    Ok(())
}

fn invert(a: InvertArgs) -> Result<()> {
    let model = MirrorNet::load(&a.model)?;
    let (samples, fs) = wav::read(&a.wav)?;
    let traj = infer_articulation(&model, &samples, fs)?;
    traj.write_csv(&a.out_csv)?;
    println!("wrote {}×{} trajectory to {}", traj.channels(), traj.frames(), a.out_csv.display());
    Ok(())
}

fn render(synth: &str, traj: &ArticTrajectory) -> Result<crate::audfront::AuditorySpectrogram> {
    let k = traj.frames() / 4 * 4;
    if k == 0 {
        return Err(usage("trajectory needs at least 4 frames"));
    }
    let traj = traj.crop(0, k)?;
    if synth == "oracle" {
        oracle_synth(&OracleParams::default(), &traj)
    } else {
        synth_forward(&SynthModel::load(Path::new(synth))?, &traj)
    }
}

fn synth_audio(a: SynthAudioArgs) -> Result<()> {
    let traj = ArticTrajectory::read_csv(&a.traj)?;
    let spec = render(&a.synth, &traj)?;
    let inv = invert_spectrogram(&spec, a.iters, a.seed);
    wav::write(&a.out_wav, &inv.wav)?;
    println!(
        "wrote {:.2} s to {} (consistency {:.4})",
        inv.wav.len() as f64 / 16000.0,
        a.out_wav.display(),
        inv.consistency.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

fn paper_study(a: StudyArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    if a.n_train == 0 || a.n_init == 0 || a.n_test == 0 {
        return Err(usage("--n-train, --n-init and --n-test must be positive"));
    }
    let data = StudyData {
        n_train: a.n_train,
        n_init: a.n_init,
        n_dev: a.n_dev,
        n_test: a.n_test,
        duration_s: a.duration,
    };
    let items = data.generate(cfg.seed).map_err(|e| usage(e.to_string()))?;
    let data_dir = a.out.join("data");
    write_dataset(&data_dir, &items)?;
    let train = of_split(&items, Split::Train);
    let init = of_split(&items, Split::Init);
    let dev = of_split(&items, Split::Dev);
    let test = of_split(&items, Split::Test);
    let audio_only: Vec<Item> = train
        .iter()
        .cloned()
        .map(|mut i| {
            i.trajectory = None;
            i
        })
        .collect();

    let mut plants: Vec<(&str, Box<dyn Plant>)> = Vec::new();
    for (name, variant, data) in [("ft", Variant::Ft, &train), ("lt", Variant::Lt, &init)] {
        let (m, r) = train_synthesizer(
            data,
            &dev,
            &cfg.model,
            &cfg.train_synth,
            SynthTrainOptions {
                variant,
                seed: cfg.seed,
                crop_frames: a.crop_frames,
                ..Default::default()
            },
        )?;
        let test_mse = eval_synthesizer(&m, &test)?.mean_mse;
        log::info!("{name} synthesizer: best dev MSE {:.4}, test MSE {test_mse:.4}", r.best_dev_mse);
        m.save(
            &a.out.join(format!("synth_{name}.mnc")),
            &cfg.fingerprint(),
            cfg.seed,
            serde_json::json!({"best_dev_mse": r.best_dev_mse, "test_mse": test_mse}),
        )?;
        plants.push((name, Box::new(m)));
    }
    plants.push(("oracle", Box::new(OraclePlant::default())));

    let mut results: Vec<(String, PpmcReport)> = Vec::new();
    for (name, plant) in &plants {
        for with_init in [false, true] {
            let (model, outcome) = crate::study::train_and_score(
                &cfg.model,
                with_init.then_some(&cfg.init),
                &cfg.learn,
                plant.as_ref(),
                &audio_only,
                &init,
                &test,
                cfg.seed,
                a.crop_frames,
            )?;
            let tag = format!("{name}_{}", if with_init { "init" } else { "noinit" });
            model.save(
                &a.out.join(format!("mirrornet_{tag}.mnc")),
                &cfg.fingerprint(),
                cfg.seed,
                serde_json::json!({"avg_all": outcome.ppmc.avg_all, "avg_6tvs": outcome.ppmc.avg_6tvs}),
                serde_json::json!({"plant": plant.describe(), "init": with_init}),
            )?;
            outcome.ppmc.write(&a.out.join("reports").join(&tag), &tag)?;
            println!("{tag}: avg all {:.4}", outcome.ppmc.avg_all);
            results.push((tag, outcome.ppmc));
        }
    }
    let get = |t: &str| &results.iter().find(|r| r.0 == t).unwrap().1;
    write_table(
        &a.out.join("table1.csv"),
        &[("MirrorNet(no init)", get("ft_noinit")), ("MirrorNet(init)", get("ft_init"))],
    )?;
    write_average_table(
        &a.out.join("table2.csv"),
        &[("pseudo semi-supervised", get("ft_init")), ("semi-supervised", get("lt_init"))],
    )?;
    write_table(
        &a.out.join("table1_oracle.csv"),
        &[("MirrorNet(no init)", get("oracle_noinit")), ("MirrorNet(init)", get("oracle_init"))],
    )?;
    println!("tables written to {}", a.out.display());
    Ok(())
}
