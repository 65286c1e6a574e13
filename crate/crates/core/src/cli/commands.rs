use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use softworld::dynamics::{one_step_errors, pretrain as run_pretrain, OneStepErrors, SoftGpt};
use softworld::explorer::{generate_dataset, Dataset};
use softworld::graph::GraphEncoder;
use softworld::policy::{evaluate_with_frames, Agent, EpisodeLog, Trainer, Variant, CSV_HEADER, ENCODER_FILE};
use softworld::sim::{write_trajectory_dump, Shape, Task};

use super::config::RunConfig;
use super::{exit, svg, Common, Failure};

const SOFTGPT_FILE: &str = "softgpt.ckpt";
/// Keeps the fallback encoder's stream apart from the trainer's.
const ENCODER_SALT: u64 = 0x0065_6e63_6f64_6572;

fn load(common: &Common) -> Result<RunConfig, Failure> {
    match &common.config {
        Some(path) => RunConfig::load(path),
        None => {
            let cfg = RunConfig::default();
            cfg.validate()?;
            Ok(cfg)
        }
    }
}

fn pick(flag: Option<PathBuf>, configured: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    flag.or(configured).ok_or_else(|| Failure::config(format!("no {what} given on the command line or under `paths`")))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(())
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(anyhow::Error::from)?;
    text.push('\n');
    write_file(path, text)
}

pub fn gen_data(common: &Common) -> Result<(), Failure> {
    let cfg = load(common)?;
    let mut exploration = cfg.exploration.clone();
    if let Some(seed) = common.seed {
        exploration.seed = seed;
    }
    let out = pick(common.out.clone(), cfg.paths.dataset.clone(), "dataset directory")?;
    let manifest = generate_dataset(&exploration, &out)?;

    println!("{:<14} {:<10} {:>8} {:>12} {:>8} {:>8}", "tool", "shape", "episodes", "transitions", "kept", "dropped");
    for p in &manifest.pairs {
        println!("{:<14} {:<10} {:>8} {:>12} {:>8} {:>8}", p.tool.to_string(), p.shape.name(), p.episodes, p.total, p.kept, p.dropped);
    }
    let kept: usize = manifest.pairs.iter().map(|p| p.kept).sum();
    println!("{} shards, {kept} kept transitions in {}", manifest.shards.len(), out.display());
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

#[derive(Serialize)]
struct PretrainSummary {
    epochs: usize,
    train_sequences: usize,
    held_out_sequences: usize,
    /// Absent when no sequence was held out.
    held_out: Option<OneStepErrors>,
    held_out_ratio: Option<f64>,
}

pub fn pretrain(common: &Common, dataset: Option<PathBuf>) -> Result<(), Failure> {
    let cfg = load(common)?;
    let dir = pick(dataset, cfg.paths.dataset.clone(), "dataset directory")?;
    let out = pick(common.out.clone(), cfg.paths.checkpoint.clone(), "checkpoint directory")?;
    let mut pcfg = cfg.pretrain;
    if let Some(seed) = common.seed {
        pcfg.seed = seed;
    }

    let sequences = Dataset::load(&dir)?.sequences(None)?;
    if sequences.is_empty() {
        return Err(Failure::new(exit::EMPTY_DATASET, anyhow!("{} holds no kept transitions", dir.display())));
    }
    let every = cfg.held_out_every;
    let (held, train): (Vec<_>, Vec<_>) = sequences.into_iter().enumerate().partition(|(i, _)| i % every == every - 1);
    let train: Vec<_> = train.into_iter().map(|(_, s)| s).collect();
    let held: Vec<_> = held.into_iter().map(|(_, s)| s).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(pcfg.seed);
    let mut model = SoftGpt::new(cfg.softgpt, &mut rng)?;
    let mut encoder = GraphEncoder::new(&mut rng);
    let report = run_pretrain(&mut model, &mut encoder, &train, &pcfg)?;

    create_dir(&out)?;
    model.save(&out.join(SOFTGPT_FILE))?;
    encoder.save(&out.join(ENCODER_FILE))?;
    let mut csv = String::from("epoch,loss\n");
    for (e, loss) in report.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{e},{loss}\n"));
    }
    write_file(&out.join("loss.csv"), csv)?;

    let held_out = if held.is_empty() { None } else { Some(one_step_errors(&model, &encoder, &held)?) };
    let summary = PretrainSummary {
        epochs: pcfg.epochs,
        train_sequences: train.len(),
        held_out_sequences: held.len(),
        held_out_ratio: held_out.map(|h| h.ratio()),
        held_out,
    };
    write_json(&out.join("report.json"), &summary)?;
    match held_out {
        Some(h) => println!(
            "held-out one-step MSE {:.4e} vs persistence {:.4e} (ratio {:.3}) over {} transitions",
            h.model_mse,
            h.persistence_mse,
            h.ratio(),
            h.transitions
        ),
        None => println!("no held-out sequences; trained on {}", train.len()),
    }
    Ok(())
}

/// Base name of a run's directory and metrics CSV.
pub fn run_name(task: Task, variant: Variant, seed: u64) -> String {
    format!("{task}_{variant}_seed{seed}")
}

pub fn train(common: &Common, checkpoint: Option<PathBuf>, resume: bool) -> Result<(), Failure> {
    let cfg = load(common)?;
    let out = pick(common.out.clone(), cfg.paths.out.clone(), "output directory")?;
    let seeds = common.seed.map_or_else(|| cfg.seeds.clone(), |s| vec![s]);
    let checkpoint = checkpoint.or_else(|| cfg.paths.checkpoint.clone());
    let (encoder, gpt) = match &checkpoint {
        Some(dir) => {
            let encoder = GraphEncoder::load(&dir.join(ENCODER_FILE))?;
            let gpt = dir.join(SOFTGPT_FILE);
            (Some(encoder), if gpt.exists() { Some(SoftGpt::load(&gpt)?) } else { None })
        }
        None => (None, None),
    };
    create_dir(&out)?;

    for seed in seeds {
        let tc = cfg.train_config(seed);
        let name = run_name(cfg.task, cfg.variant, seed);
        let run_dir = out.join(&name);
        let csv = out.join(format!("{name}.csv"));
        let mut trainer = if resume && run_dir.join("trainer.json").exists() {
            let t = Trainer::resume(&run_dir, Some(tc.episodes))?;
            if t.config != tc {
                return Err(Failure::config(format!("{} was trained with a different configuration", run_dir.display())));
            }
            truncate_csv(&csv, t.episodes_done())?;
            t
        } else {
            let encoder = encoder.clone().unwrap_or_else(|| GraphEncoder::new(&mut ChaCha8Rng::seed_from_u64(seed ^ ENCODER_SALT)));
            let t = Trainer::new(tc, encoder, gpt.clone())?;
            write_file(&csv, format!("{CSV_HEADER}\n"))?;
            t
        };

        let mut file = OpenOptions::new().append(true).open(&csv).with_context(|| format!("opening {}", csv.display()))?;
        while trainer.episodes_done() < trainer.config.episodes {
            let log = trainer.run_episode()?;
            writeln!(file, "{}", log.csv_row()).with_context(|| format!("writing {}", csv.display()))?;
            if trainer.episodes_done() % cfg.checkpoint_every == 0 {
                create_dir(&run_dir)?;
                trainer.save(&run_dir)?;
            }
        }
        create_dir(&run_dir)?;
        trainer.save(&run_dir)?;
        println!("{name}: {} episodes, {} steps -> {}", trainer.episodes_done(), trainer.env_steps(), csv.display());
    }
    Ok(())
}

/// Keeps the header and the first `episodes` rows.
fn truncate_csv(path: &Path, episodes: usize) -> Result<(), Failure> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut kept: String = text.lines().take(episodes + 1).flat_map(|l| [l, "\n"]).collect();
    if kept.is_empty() {
        kept = format!("{CSV_HEADER}\n");
    }
    write_file(path, kept)
}

#[derive(Clone, Copy, Debug, Serialize)]
struct Stat {
    mean: f64,
    /// Sample standard deviation; absent for a single episode.
    std: Option<f64>,
}

impl Stat {
    fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.len() > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
        Self { mean, std }
    }
}

#[derive(Serialize)]
struct EvalReport {
    task: Task,
    shape: Shape,
    episodes: usize,
    reward: Stat,
    iou: Stat,
    sdf_score: Stat,
    density_score: Stat,
    per_episode: Vec<EpisodeLog>,
}

pub fn eval(common: &Common, checkpoint: &Path) -> Result<(), Failure> {
    let cfg = load(common)?;
    let out = pick(common.out.clone(), cfg.paths.out.clone(), "output directory")?;
    let tc = cfg.train_config(common.seed.unwrap_or(cfg.seeds[0]));
    if cfg.eval_episodes == 0 {
        return Err(Failure::config("eval_episodes must be positive"));
    }
    let agent = Agent::load(&checkpoint.join("agent"))?;
    let tool = tc.task.tool();
    if agent.kind != tool {
        return Err(Failure::new(
            exit::ACTION_MISMATCH,
            anyhow!(
                "checkpoint drives a {} ({} action dims); the {} task needs a {tool} ({})",
                agent.kind,
                agent.action_dim(),
                tc.task,
                tool.action_dim()
            ),
        ));
    }
    let encoder = GraphEncoder::load(&checkpoint.join(ENCODER_FILE))?;

    let mut frames: Vec<Vec<Vec<[f64; 3]>>> = vec![Vec::new(); cfg.eval_episodes];
    let logs = evaluate_with_frames(&agent, &encoder, &tc, cfg.eval_episodes, |k, positions| {
        frames[k].push(positions.to_vec());
        Ok(())
    })?;
    create_dir(&out)?;
    for (k, f) in frames.iter().enumerate() {
        write_trajectory_dump(&out.join(format!("frames/episode_{k:03}")), f)?;
    }
    let column = |f: fn(&EpisodeLog) -> f64| Stat::of(&logs.iter().map(f).collect::<Vec<_>>());
    let report = EvalReport {
        task: tc.task,
        shape: tc.shape,
        episodes: logs.len(),
        reward: column(|l| l.reward),
        iou: column(|l| l.iou),
        sdf_score: column(|l| l.sdf_score),
        density_score: column(|l| l.density_score),
        per_episode: logs,
    };
    write_json(&out.join("eval.json"), &report)?;
    let fmt = |s: Stat| match s.std {
        Some(sd) => format!("{:.4} ± {sd:.4}", s.mean),
        None => format!("{:.4}", s.mean),
    };
    println!("{} episodes: iou {}, sdf {}, density {}", report.episodes, fmt(report.iou), fmt(report.sdf_score), fmt(report.density_score));
    Ok(())
}

pub fn plot(csv_dir: &Path, out: Option<PathBuf>) -> Result<(), Failure> {
    let out = out.unwrap_or_else(|| csv_dir.to_path_buf());
    let mut paths: Vec<PathBuf> = fs::read_dir(csv_dir)
        .with_context(|| format!("listing {}", csv_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();

    // task -> variant -> seed -> rewards by episode
    let mut runs: BTreeMap<Task, BTreeMap<Variant, BTreeMap<u64, Vec<f64>>>> = BTreeMap::new();
    let mut metrics_files = 0;
    for path in &paths {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut lines = text.lines();
        if lines.next() != Some(CSV_HEADER) {
            log::info!("skipping {}: not a metrics file", path.display());
            continue;
        }
        metrics_files += 1;
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let row = EpisodeLog::parse_csv_row(line).with_context(|| path.display().to_string())?;
            let rewards = runs.entry(row.task).or_default().entry(row.variant).or_default().entry(row.seed).or_default();
            if rewards.len() != row.episode {
                return Err(anyhow!("{}: episode {} out of order", path.display(), row.episode).into());
            }
            rewards.push(row.reward);
        }
    }
    if metrics_files == 0 {
        return Err(Failure::new(exit::NO_CSV, anyhow!("no metrics CSVs in {}", csv_dir.display())));
    }
    create_dir(&out)?;
    for (task, variants) in &runs {
        let series: Vec<svg::Series> =
            variants.iter().map(|(v, seeds)| svg::Series { variant: *v, runs: seeds.values().cloned().collect() }).collect();
        let path = out.join(format!("{task}.svg"));
        write_file(&path, svg::learning_curves(&task.to_string(), &series))?;
        println!("{}", path.display());
    }
    Ok(())
}
