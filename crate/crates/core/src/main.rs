use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use abl_psp::abl::{evaluate, OptimizerKind};
use abl_psp::enumerate::{top_k_masks, FlipProbSeq};
use abl_psp::experiment::{generate_split, prepare, run_grid, run_prepared, write_outputs, ExperimentConfig, ExperimentError};
use abl_psp::models::{read_params, write_params, PerceptionModel};
use abl_psp::Dataset;

#[derive(Parser)]
#[command(name = "abl-psp", version, about = "Abductive learning with probabilistic symbol perception")]
struct Cli {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run only this seed instead of the config's seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write train/test datasets and print their checksums.
    Generate,
    /// Initialize the perception model and pretrain the scorer.
    Pretrain,
    /// Train with the configured optimizer; one CSV and JSON per seed.
    Run {
        #[arg(long)]
        optimizer: Option<String>,
    },
    /// Score a perception model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// List the k most probable revision masks for flip probabilities.
    Topk {
        #[arg(short, long, default_value_t = 1)]
        k: usize,
        /// Whitespace-separated probabilities in a file.
        #[arg(long)]
        file: Option<PathBuf>,
        probs: Vec<String>,
    },
    /// Run every optimizer on every seed and print a comparison.
    Bench,
}

enum Failure {
    Config(String),
    Io(String),
    Contract(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(m) => Failure::Config(m),
            ExperimentError::Io(e) => Failure::Io(e.to_string()),
            ExperimentError::Dataset(abl_psp::dataset::DatasetError::Io(e)) => Failure::Io(e.to_string()),
            ExperimentError::Dataset(e @ abl_psp::dataset::DatasetError::Parse { .. }) => Failure::Io(e.to_string()),
            ExperimentError::Dataset(e) => Failure::Config(e.to_string()),
            other => Failure::Contract(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, kind, msg) = match f {
                Failure::Config(m) => (2, "config error", m),
                Failure::Io(m) => (3, "i/o error", m),
                Failure::Contract(m) => (4, "error", m),
            };
            eprintln!("abl-psp: {kind}: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_file(p).map_err(|e| match e {
            ExperimentError::Io(e) => Failure::Io(format!("{}: {e}", p.display())),
            other => Failure::Config(format!("{}: {other}", p.display())),
        })?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    Ok(cfg)
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Topk { k, file, probs } => topk(*k, file.as_deref(), probs),
        Command::Generate => generate(cli),
        Command::Pretrain => pretrain(cli),
        Command::Run { optimizer } => run(cli, optimizer.as_deref()),
        Command::Eval { model, data } => eval(cli, model, data),
        Command::Bench => bench(cli),
    }
}

fn topk(k: usize, file: Option<&Path>, args: &[String]) -> Result<(), Failure> {
    let text = match file {
        Some(p) => std::fs::read_to_string(p).map_err(|e| Failure::Io(format!("{}: {e}", p.display())))?,
        None => args.join(" "),
    };
    let probs = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| Failure::Contract(format!("not a number: {t:?}"))))
        .collect::<Result<Vec<f64>, _>>()?;
    let pb = FlipProbSeq::new(probs).map_err(|e| Failure::Contract(e.to_string()))?;
    let stdout = std::io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    for m in top_k_masks(&pb, k) {
        writeln!(out, "{}\t{}", m.mask, format_g(m.prob(), 12))?;
    }
    out.flush()?;
    Ok(())
}

/// `%.{sig}g`-style formatting.
fn format_g(x: f64, sig: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", sig - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn generate(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    std::fs::create_dir_all(&cli.out)?;
    for &seed in &cfg.seeds {
        let (train, test) = generate_split(&cfg, seed)?;
        for (name, data) in [("train", &train), ("test", &test)] {
            let bytes = data.to_jsonl_bytes();
            let path = cli.out.join(format!("{name}_seed{seed}.jsonl"));
            std::fs::write(&path, &bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            println!("{}  {}", sha256_hex(&bytes), path.display());
        }
    }
    Ok(())
}

fn pretrain(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let complete = cfg.build_complete_kb()?;
    std::fs::create_dir_all(&cli.out)?;
    for &seed in &cfg.seeds {
        let prepared = prepare(&cfg, seed, &complete)?;
        let p_path = cli.out.join(format!("perception_seed{seed}.params"));
        let s_path = cli.out.join(format!("scorer_seed{seed}.params"));
        let save = |path: &Path, file: &abl_psp::models::ParamFile| -> Result<(), Failure> {
            let f = File::create(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            write_params(BufWriter::new(f), file).map_err(|e| Failure::Io(e.to_string()))
        };
        save(&p_path, &prepared.perception.to_param_file())?;
        save(&s_path, &prepared.scorer.to_param_file())?;
        println!(
            "seed {seed}: mapping {:?}, {} valid probes, init loss {:.6}, scorer pretrain loss {:.6}",
            prepared.init.mapping, prepared.init.valid_probes, prepared.init.train_loss, prepared.pretrain_loss
        );
    }
    Ok(())
}

fn run(cli: &Cli, optimizer: Option<&str>) -> Result<(), Failure> {
    let mut cfg = load_config(cli)?;
    if let Some(name) = optimizer {
        cfg.optimizer =
            OptimizerKind::parse(name).ok_or_else(|| Failure::Config(format!("unknown optimizer {name:?}")))?;
    }
    let complete = cfg.build_complete_kb()?;
    for &seed in &cfg.seeds {
        let start = Instant::now();
        let prepared = prepare(&cfg, seed, &complete)?;
        let result = run_prepared(&cfg, seed, cfg.optimizer, &prepared)?;
        write_outputs(&result, &cli.out)?;
        // wall time varies between runs, so it lives beside the deterministic summary
        let timing = serde_json::json!({ "seed": seed, "optimizer": cfg.optimizer, "wall_seconds": start.elapsed().as_secs_f64() });
        let stem = format!("{}_seed{seed}", cfg.optimizer.as_str());
        std::fs::write(cli.out.join(format!("{stem}.timing.json")), timing.to_string() + "\n")?;
        let s = &result.summary;
        println!(
            "{stem}: final acc {:.2}, best acc {:.2}, label acc {:.2}, rules {}, kb accesses {}",
            s.acc_final, s.acc_best, s.label_acc_final, s.rules_final, s.kb_accesses
        );
    }
    Ok(())
}

fn eval(cli: &Cli, model: &Path, data: &Path) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let open = |p: &Path| File::open(p).map(BufReader::new).map_err(|e| Failure::Io(format!("{}: {e}", p.display())));
    let params = read_params(open(model)?).map_err(|e| Failure::Io(format!("{}: {e}", model.display())))?;
    let perception = PerceptionModel::from_param_file(&params).map_err(|e| Failure::Contract(e.to_string()))?;
    let dataset = Dataset::read_jsonl(open(data)?).map_err(|e| Failure::Io(format!("{}: {e}", data.display())))?;
    let kb = cfg.build_kb()?;
    let ev = evaluate(&dataset, &perception, kb.as_ref(), cfg.abl.group_size).map_err(|e| Failure::Contract(e.to_string()))?;
    let json = serde_json::json!({
        "symbol_acc": ev.symbol_acc,
        "label_acc": ev.label_acc,
        "rules_generated": ev.rules_generated,
        "instances": dataset.len(),
    });
    println!("{}", serde_json::to_string_pretty(&json).expect("json"));
    Ok(())
}

fn bench(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    let start = Instant::now();
    let grid = run_grid(&cfg, &OptimizerKind::ALL)?;
    std::fs::create_dir_all(&cli.out)?;
    for runs in &grid {
        for r in runs {
            write_outputs(r, &cli.out)?;
        }
    }
    println!("{:<8} {:>10} {:>10} {:>10} {:>10} {:>8} {:>12}", "method", "acc_init", "acc_final", "acc_best", "label_acc", "rules", "kb_accesses");
    for (j, kind) in OptimizerKind::ALL.iter().enumerate() {
        let n = grid.len() as f64;
        let mean = |f: &dyn Fn(&abl_psp::experiment::RunSummary) -> f64| grid.iter().map(|runs| f(&runs[j].summary)).sum::<f64>() / n;
        println!(
            "{:<8} {:>10.2} {:>10.2} {:>10.2} {:>10.2} {:>8.2} {:>12.1}",
            kind.as_str(),
            mean(&|s| s.init_acc),
            mean(&|s| s.acc_final),
            mean(&|s| s.acc_best),
            mean(&|s| s.label_acc_final),
            mean(&|s| s.rules_final as f64),
            mean(&|s| s.kb_accesses as f64),
        );
    }
    println!("{} seeds in {:.1}s", grid.len(), start.elapsed().as_secs_f64());
    Ok(())
}
