use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use feformer::harness::{history_tsv, phantom_generate, Phantom, TrainConfig, Trainer};
use feformer::model::{argmax_labels, decision_deltas, flop_count, Checkpoint, FeFormer, ModelConfig};
use feformer::spectral::haar::set_synthesis_sign_sabotage;
use feformer::verify::{attention_bench, bench_tsv, gradcheck_module, run_properties, GradModule};
use feformer::volume::{read_volume, write_volume, Dtype, VolumeData, VolumeHeader};
use feformer::{Ctx, FeError, Tensor, Var};

/// Reference values for the default 96³ configuration.
const PUBLISHED_PARAMS: f64 = 18.54e6;
const PUBLISHED_FLOPS: f64 = 39.13e9;

#[derive(Parser)]
#[command(name = "feformer", version, about = "Frequency-domain volumetric segmentation: checks, benchmarks, training, inference")]
struct Cli {
    /// Seed for every random draw the command makes.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the numerical property suite.
    Check {
        /// Only properties with this tag (or name prefix).
        #[arg(long)]
        filter: Option<String>,
        /// Flip the Haar synthesis sign (negative control).
        #[arg(long, hide = true)]
        sabotage_haar: bool,
    },
    /// Finite-difference gradient checks.
    Gradcheck {
        #[arg(long, default_value = "all")]
        module: String,
        /// Max relative error; defaults to 1e-4 per block and 1e-3 for the model.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Time spectral vs pairwise attention and print the complexity budget.
    Bench {
        /// Comma-separated cube sizes.
        #[arg(long, default_value = "8,16")]
        sizes: String,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value = "bench.tsv")]
        out: PathBuf,
    },
    /// Train on synthetic phantoms from a key=value config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Directory for history.tsv and model.fef.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop (and checkpoint) once this many steps have been taken.
        #[arg(long)]
        stop_at: Option<usize>,
    },
    /// Write the phantoms a training config uses as volumes.
    Phantom {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Segment a volume with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Ground-truth labels; prints per-class Dice when given.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
}

enum Failure {
    /// A property, gradient or accuracy check did not hold (exit 1).
    Verify(String),
    /// Bad flags, config or input (exit 2).
    Usage(String),
}

impl From<FeError> for Failure {
    fn from(e: FeError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Check { filter, sabotage_haar } => check(filter.as_deref(), sabotage_haar, cli.seed.unwrap_or(0)),
        Cmd::Gradcheck { module, tol } => gradcheck(&module, tol, cli.seed.unwrap_or(0)),
        Cmd::Bench { sizes, runs, channels, out } => bench(&sizes, runs, channels, &out, cli.seed.unwrap_or(0)),
        Cmd::Train { config, out_dir, resume, stop_at } => train(&config, &out_dir, resume.as_deref(), stop_at, cli.seed),
        Cmd::Phantom { config, out_dir } => phantom(&config, &out_dir, cli.seed),
        Cmd::Infer { checkpoint, input, output, labels } => infer(&checkpoint, &input, &output, labels.as_deref()),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(msg)) => {
            eprintln!("FAILED: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn check(filter: Option<&str>, sabotage: bool, seed: u64) -> CmdResult {
    set_synthesis_sign_sabotage(sabotage);
    let out = run_properties(filter, seed);
    if out.is_empty() {
        return Err(Failure::Usage(format!("no property matches filter {:?}", filter.unwrap_or(""))));
    }
    for o in &out {
        println!("{:<4} {:<36} [{}] {}", if o.passed { "pass" } else { "FAIL" }, o.name, o.tags.join(","), o.detail);
    }
    let passed = out.iter().filter(|o| o.passed).count();
    println!("{passed}/{} properties passed", out.len());
    match out.iter().find(|o| !o.passed) {
        Some(o) => Err(Failure::Verify(format!("property {}: {}", o.name, o.detail))),
        None => Ok(()),
    }
}

fn gradcheck(module: &str, tol: Option<f64>, seed: u64) -> CmdResult {
    let modules: Vec<GradModule> = match module {
        "all" => GradModule::ALL.to_vec(),
        m => vec![m.parse()?],
    };
    if let Some(t) = tol {
        if !(t > 0.0) {
            return Err(Failure::Usage(format!("--tol must be positive, got {t}")));
        }
    }
    println!("{:<7} {:>8} {:>12} {:>9}  {:<6} worst coordinate", "module", "checked", "max_rel_err", "tol", "result");
    let mut first_fail = None;
    for m in modules {
        let r = gradcheck_module(m, seed)?;
        let t = tol.unwrap_or(m.default_tol());
        let ok = r.passes(t);
        println!(
            "{:<7} {:>8} {:>12.3e} {:>9.0e}  {:<6} {} (analytic {:.6e}, numeric {:.6e})",
            m.name(),
            r.report.checked,
            r.report.max_rel_err,
            t,
            if ok { "pass" } else { "FAIL" },
            r.worst_site(),
            r.report.worst_analytic,
            r.report.worst_numeric
        );
        if !ok && first_fail.is_none() {
            first_fail = Some(format!(
                "module {} at {}: relative error {:.3e} > {t:.0e}",
                m.name(),
                r.worst_site(),
                r.report.max_rel_err
            ));
        }
    }
    first_fail.map_or(Ok(()), |msg| Err(Failure::Verify(msg)))
}

fn parse_sizes(s: &str) -> Result<Vec<usize>, Failure> {
    let sizes: Vec<usize> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Failure::Usage(format!("bad size {t:?} in --sizes"))))
        .collect::<Result<_, _>>()?;
    if sizes.is_empty() {
        return Err(Failure::Usage("--sizes needs at least one size".into()));
    }
    if let Some(z) = sizes.iter().find(|&&z| z < 2) {
        return Err(Failure::Usage(format!("size {z} too small; sizes must be at least 2")));
    }
    Ok(sizes)
}

fn bench(sizes: &str, runs: usize, channels: usize, out: &Path, seed: u64) -> CmdResult {
    let sizes = parse_sizes(sizes)?;
    if runs == 0 || channels == 0 {
        return Err(Failure::Usage("--runs and --channels must be positive".into()));
    }
    let cfg = ModelConfig::default();
    let flops = flop_count(&cfg, [96; 3])?;
    let rows = attention_bench(&sizes, channels, runs, seed)?;
    println!("{:>5} {:>8} {:>14} {:>14}", "size", "voxels", "freq_attn_ms", "pairwise_ms");
    for r in &rows {
        println!("{:>5} {:>8} {:>14.3} {:>14.3}", r.size, r.size.pow(3), r.freq_ms, r.pairwise_ms);
    }
    for w in rows.windows(2) {
        println!(
            "{}^3 -> {}^3 ({}x voxels): freq-attention x{:.2}, pairwise x{:.2}",
            w[0].size,
            w[1].size,
            (w[1].size.pow(3) as f64 / w[0].size.pow(3) as f64),
            w[1].freq_ms / w[0].freq_ms,
            w[1].pairwise_ms / w[0].pairwise_ms
        );
    }
    std::fs::write(out, bench_tsv(&rows, flops.total())).map_err(|e| Failure::Usage(format!("{}: {e}", out.display())))?;
    println!("wrote {}", out.display());

    let (_, store) = FeFormer::build(&cfg)?;
    let params = store.param_count() as f64;
    println!(
        "params (default config): {:.2}M vs {:.2}M reference ({:+.1}%)",
        params / 1e6,
        PUBLISHED_PARAMS / 1e6,
        100.0 * (params / PUBLISHED_PARAMS - 1.0)
    );
    println!(
        "flops at 96^3: {:.2}G (2x{:.2}G MACs + {:.2}G FFT) vs {:.2}G reference ({:+.1}%)",
        flops.total() / 1e9,
        flops.macs() / 1e9,
        flops.fft_flops() / 1e9,
        PUBLISHED_FLOPS / 1e9,
        100.0 * (flops.total() / PUBLISHED_FLOPS - 1.0)
    );
    println!("{:<28} {:<26} {:<30} {:>12}", "decision", "chosen", "alternative", "param delta");
    for d in decision_deltas(&cfg) {
        println!("{:<28} {:<26} {:<30} {:>+12}", d.decision, d.chosen, d.alternative, d.delta);
    }
    Ok(())
}

/// Reads a run config, applying `--seed` to both the model and data seeds.
fn load_run_config(path: &Path, seed: Option<u64>) -> Result<TrainConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut cfg = TrainConfig::from_kv(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.model.seed = s;
    }
    Ok(cfg)
}

fn training_phantoms(cfg: &TrainConfig) -> Result<Vec<Phantom>, Failure> {
    Ok(phantom_generate(cfg.seed, cfg.extent, cfg.model.n_classes, cfg.n_phantoms)?)
}

fn ensure_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Usage(format!("{}: {e}", dir.display())))
}

fn train(config: &Path, out_dir: &Path, resume: Option<&Path>, stop_at: Option<usize>, seed: Option<u64>) -> CmdResult {
    let cfg = load_run_config(config, seed)?;
    ensure_dir(out_dir)?;
    let phantoms = training_phantoms(&cfg)?;
    let mut trainer = match resume {
        Some(p) => {
            let (ck, saved) = Checkpoint::load(p)?;
            if saved != cfg.model {
                return Err(Failure::Usage(format!("checkpoint {} was written for a different model config", p.display())));
            }
            let t = Trainer::resume(&cfg, phantoms, &ck)?;
            println!("resuming at step {}", t.step_index());
            t
        }
        None => Trainer::new(&cfg, phantoms)?,
    };
    let k = cfg.model.n_classes;
    let report = trainer
        .run_until(stop_at.unwrap_or(cfg.steps), |r| {
            if let Some(d) = &r.dice {
                let fg = d[1..].iter().sum::<f64>() / (k - 1).max(1) as f64;
                println!("step {:>5}  lr {:.3e}  loss {:.5}  fg dice {:.2}", r.step + 1, r.lr, r.loss, fg);
            }
        })
        .map_err(|e| match e {
            FeError::NonFinite(m) => Failure::Verify(format!("non-finite {m}")),
            e => Failure::Usage(e.to_string()),
        })?;
    let hist = out_dir.join("history.tsv");
    std::fs::write(&hist, history_tsv(&trainer.history, k)).map_err(|e| Failure::Usage(format!("{}: {e}", hist.display())))?;
    let ck = out_dir.join("model.fef");
    trainer.checkpoint().save(&ck, &cfg.model)?;
    println!("wrote {} and {}", hist.display(), ck.display());
    match report {
        Some(r) => {
            let per: Vec<String> = r.dice.iter().map(|d| format!("{d:.2}")).collect();
            println!(
                "final mean foreground Dice {:.2} (per class {}), mean foreground HD95 {:.3} voxels, HD95 failures {}",
                r.mean_foreground_dice(),
                per.join(" "),
                r.mean_foreground_hd95(),
                r.hd95_failures.iter().sum::<usize>()
            );
        }
        None => println!("stopped at step {} of {}", trainer.step_index(), cfg.steps),
    }
    Ok(())
}

fn phantom(config: &Path, out_dir: &Path, seed: Option<u64>) -> CmdResult {
    let cfg = load_run_config(config, seed)?;
    ensure_dir(out_dir)?;
    for (i, p) in training_phantoms(&cfg)?.iter().enumerate() {
        let header = VolumeHeader::new(Dtype::F64, [p.extent; 3]);
        let img = out_dir.join(format!("phantom{i}.vol"));
        write_volume(&img, &header, &VolumeData::F64(p.volume.data().to_vec()))?;
        let lab = out_dir.join(format!("phantom{i}_labels.vol"));
        write_volume(&lab, &VolumeHeader::new(Dtype::U8, [p.extent; 3]), &VolumeData::from_labels(&p.labels)?)?;
        println!("wrote {} and {}", img.display(), lab.display());
    }
    Ok(())
}

fn infer(checkpoint: &Path, input: &Path, output: &Path, labels: Option<&Path>) -> CmdResult {
    if !checkpoint.exists() {
        return Err(Failure::Usage(format!("checkpoint {} not found", checkpoint.display())));
    }
    let (ck, cfg) = Checkpoint::load(checkpoint)?;
    let (model, mut store) = FeFormer::build(&cfg)?;
    ck.restore_into(&mut store)?;
    let (header, data) = read_volume(input)?;
    let [d, h, w] = header.extents;
    let x = Tensor::new(&[1, header.channels, d, h, w], data.to_f64())?;
    model.check_input(x.shape())?;
    let ctx = Ctx::new(&store, None, false, 0);
    let pred = argmax_labels(model.forward(&ctx, &Var::constant(x))?.value())?;
    let out_header = VolumeHeader { dtype: Dtype::U8, channels: 1, ..header.clone() };
    write_volume(output, &out_header, &VolumeData::from_labels(&pred)?)?;
    println!("wrote {} ({d}x{h}x{w} labels)", output.display());
    if let Some(lp) = labels {
        let (lh, ld) = read_volume(lp)?;
        if lh.extents != header.extents {
            return Err(Failure::Usage(format!("labels {:?} vs input {:?}", lh.extents, header.extents)));
        }
        let truth = ld.to_labels()?;
        for c in 0..cfg.n_classes {
            println!("class {c}: dice {:.2}", feformer::harness::dice_metric(&pred, &truth, c));
        }
    }
    Ok(())
}
