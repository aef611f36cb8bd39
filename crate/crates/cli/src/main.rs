use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relnav::agent::{rollout, EpisodeTrace, RolloutContext, RolloutMode, RolloutOptions};
use relnav::autodiff::Graph;
use relnav::env::{generate_environment, EnvConfig, EnvironmentGraph};
use relnav::instruction::{read_jsonl, write_jsonl, Vocabulary};
use relnav::metrics::{annotate, compute_metrics, MetricsReport, SUCCESS_RADIUS};
use relnav::relations::{sor_build, RelationMatrix, SorConstants};
use relnav::rng;
use relnav::train::{ablate, build_dataset, evaluate, sample_episode, train, Checkpoint, SplitName, TrainConfig};

mod manifest;

use manifest::Manifest;

#[derive(Parser)]
#[command(
    name = "relnav",
    version,
    about = "Object-relation navigation experiments on synthetic graph worlds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate one environment and write it as JSON.
    GenEnv {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 24)]
        nodes: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 64)]
        vocab: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scan environments into a spatial relation matrix.
    BuildSor {
        #[arg(long, num_args = 1.., required = true)]
        envs: Vec<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        k1: f64,
        #[arg(long, default_value_t = 2.0)]
        k2: f64,
        #[arg(long, default_value_t = 5e-4)]
        k3: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on the generated splits and evaluate on val-unseen.
    Train {
        /// Training config JSON; defaults apply to missing fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's training seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "val_unseen")]
        split: String,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long, default_value = "greedy")]
        mode: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Roll out a single episode sampled in an environment file.
    RunEpisode {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        env: PathBuf,
        #[arg(long, default_value_t = 0)]
        episode: usize,
        #[arg(long, default_value = "greedy")]
        mode: String,
        #[arg(long, default_value_t = 1.0)]
        xi: f64,
        #[arg(long)]
        seed: Option<u64>,
        /// Relation matrix file; rebuilt from the checkpoint's training split when absent.
        #[arg(long)]
        matrix: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Write the relation matrix, and optionally per-step attention, as CSV.
    ExportRelations {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out_csv: PathBuf,
        /// Trace JSONL (from eval or run-episode) whose attention to export.
        #[arg(long, requires = "attention_csv")]
        trace: Option<PathBuf>,
        #[arg(long, requires = "trace")]
        attention_csv: Option<PathBuf>,
    },
    /// Train and evaluate every relation/penalty combination over several seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

enum Failure {
    Usage(String),
    Domain(String),
}

impl From<relnav::Error> for Failure {
    fn from(e: relnav::Error) -> Self {
        match e {
            relnav::Error::Config(_) => Failure::Usage(e.to_string()),
            other => Failure::Domain(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Domain(e.to_string())
    }
}

type Outcome<T = ()> = std::result::Result<T, Failure>;

fn read(path: &Path) -> Outcome<String> {
    fs::read_to_string(path).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn write(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).map_err(|e| Failure::Domain(format!("{}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Outcome<TrainConfig> {
    let cfg = match path {
        Some(p) => TrainConfig::from_json(&read(p)?)?,
        None => TrainConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn load_checkpoint(path: &Path) -> Outcome<Checkpoint> {
    Ok(Checkpoint::from_json(&read(path)?)?)
}

fn parse_mode(s: &str) -> Outcome<RolloutMode> {
    s.parse().map_err(|e: relnav::Error| Failure::Usage(e.to_string()))
}

fn rollout_options(cfg: &TrainConfig, mode: RolloutMode, xi: f64) -> Outcome<RolloutOptions> {
    let opts = RolloutOptions {
        xi,
        ..cfg.rollout(mode)
    };
    opts.validate()?;
    Ok(opts)
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Domain(format!("{}: {e}", dir.display())))
}

fn report_json(report: &MetricsReport) -> Outcome<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

fn metrics_csv(report: &MetricsReport) -> String {
    format!("{}\n{}\n", MetricsReport::CSV_HEADER, report.csv_row())
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn gen_env(seed: u64, nodes: usize, degree: usize, vocab: usize, out: &Path) -> Outcome {
    let cfg = EnvConfig {
        nodes,
        degree,
        vocab_size: vocab,
        ..EnvConfig::default()
    };
    let env = generate_environment(seed, &cfg)?;
    write(out, &env.to_json()?)?;
    println!("nodes {}", env.node_count());
    println!("edges {}", env.edge_count());
    println!("objects {}", env.objects().len());
    Ok(())
}

fn build_sor(envs: &[PathBuf], constants: SorConstants, out: &Path) -> Outcome {
    if !(constants.k1 > 0.0 && constants.k2 >= 0.0 && constants.k3 >= 0.0)
        || ![constants.k1, constants.k2, constants.k3].iter().all(|k| k.is_finite())
    {
        return Err(Failure::Usage("need k1 > 0 and finite k2, k3 >= 0".into()));
    }
    let loaded = envs
        .iter()
        .map(|p| EnvironmentGraph::from_json(&read(p)?).map_err(|e| Failure::Domain(format!("{}: {e}", p.display()))))
        .collect::<Outcome<Vec<_>>>()?;
    let refs: Vec<&EnvironmentGraph> = loaded.iter().collect();
    let m = sor_build(&refs, constants)?;
    write(out, &m.to_json()?)?;
    let v = m.values();
    let n = m.size();
    let nonneg = v.data().iter().all(|&x| x >= 0.0);
    let zero_diag = (0..n).all(|i| v.get(i, i) == 0.0);
    let pairs = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .filter(|&(i, j)| v.get(i, j) != 0.0)
        .count();
    println!("scans {}", m.scans());
    println!("symmetric {}", yes(m.is_symmetric(0.0)));
    println!("nonnegative {}", yes(nonneg));
    println!("zero_diagonal {}", yes(zero_diag));
    println!("nonzero_pairs {pairs}");
    Ok(())
}

fn train_cmd(config: Option<&Path>, seed: Option<u64>, out_dir: &Path) -> Outcome {
    let mut cfg = load_config(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = build_dataset(&cfg)?;
    let out = train(&cfg, &data)?;
    let (report, _) = evaluate(
        &out.params,
        &cfg,
        &data,
        SplitName::ValUnseen,
        cfg.xi,
        RolloutMode::Greedy,
    )?;

    create_dir(out_dir)?;
    let mut m = Manifest::new("train", cfg.seed, &cfg)?;
    if let Some(p) = config {
        m.input(p)?;
    }
    let mut losses = format!("{}\n", relnav::train::LossRow::CSV_HEADER);
    for r in &out.losses {
        losses.push_str(&r.csv_row());
        losses.push('\n');
    }
    m.write(out_dir, "config.json", &cfg.to_json()?)?;
    m.write(
        out_dir,
        "checkpoint.json",
        &Checkpoint::new(cfg.clone(), out.params).to_json()?,
    )?;
    m.write(out_dir, "losses.csv", &losses)?;
    m.write(out_dir, "metrics.json", &report_json(&report)?)?;
    m.write(out_dir, "metrics.csv", &metrics_csv(&report))?;
    m.finish(out_dir)?;
    print!("{}", metrics_csv(&report));
    Ok(())
}

fn eval_cmd(params: &Path, split: &str, xi: f64, mode: &str, seed: Option<u64>, out_dir: &Path) -> Outcome {
    let split: SplitName = split.parse()?;
    let mode = parse_mode(mode)?;
    let ckpt = load_checkpoint(params)?;
    let mut cfg = ckpt.config;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    rollout_options(&cfg, mode, xi)?;
    let data = build_dataset(&cfg)?;
    let (report, traces) = evaluate(&ckpt.params, &cfg, &data, split, xi, mode)?;

    create_dir(out_dir)?;
    let mut m = Manifest::new("eval", cfg.seed, &cfg)?;
    m.input(params)?;
    m.arg("split", &format!("{split:?}"));
    m.arg("xi", &xi.to_string());
    m.arg("mode", &format!("{mode:?}"));
    m.write(out_dir, "metrics.json", &report_json(&report)?)?;
    m.write(out_dir, "metrics.csv", &metrics_csv(&report))?;
    m.write(out_dir, "traces.jsonl", &write_jsonl(&traces)?)?;
    m.finish(out_dir)?;
    print!("{}", metrics_csv(&report));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_episode_cmd(
    params: &Path,
    env_path: &Path,
    episode: usize,
    mode: &str,
    xi: f64,
    seed: Option<u64>,
    matrix: Option<&Path>,
    out_dir: Option<&Path>,
) -> Outcome {
    let mode = parse_mode(mode)?;
    let ckpt = load_checkpoint(params)?;
    let mut cfg = ckpt.config;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let opts = rollout_options(&cfg, mode, xi)?;
    let env = EnvironmentGraph::from_json(&read(env_path)?)?;
    if env.vocab_size() != cfg.env.vocab_size {
        return Err(Failure::Domain(format!(
            "environment vocabulary {} does not match the checkpoint's {}",
            env.vocab_size(),
            cfg.env.vocab_size
        )));
    }
    let relations = match matrix {
        Some(p) => RelationMatrix::from_json(&read(p)?)?,
        None => build_dataset(&cfg)?.relations,
    };
    if relations.size() != env.vocab_size() {
        return Err(Failure::Domain(
            "relation matrix size does not match the environment".into(),
        ));
    }
    let vocab = Vocabulary::for_categories(env.vocab_size());
    let spec = sample_episode(
        &env,
        &vocab,
        &cfg.splits,
        episode,
        0,
        rng::derive(cfg.seed, &[episode as u64]),
    )?;
    let nouns = vocab.noun_db();
    let ctx = RolloutContext {
        env: &env,
        store: &ckpt.params,
        relations: &relations,
        nouns: &nouns,
        toggles: cfg.toggles.relations(),
    };
    let mut g = Graph::new();
    let mut r = rng::stream(cfg.seed, &[rng::label::ROLLOUT, episode as u64]);
    let (trace, _) = rollout(&mut g, &ctx, &spec, &opts, &mut r)?;
    let mut traces = vec![trace];
    let report = compute_metrics(&traces, |_| Some(&env), SUCCESS_RADIUS)?;
    annotate(&mut traces, &report);
    let trace = &traces[0];
    let (shortest, _) = env.shortest_path(spec.start, spec.target())?;

    println!("instruction {}", vocab.render(&spec.instruction.tokens));
    println!("path {}", join(&trace.nodes));
    println!("shortest {}", join(&shortest));
    println!("final {} target {}", trace.final_node, trace.target);
    print!("{}", metrics_csv(&report));

    if let Some(dir) = out_dir {
        create_dir(dir)?;
        let mut m = Manifest::new("run-episode", cfg.seed, &cfg)?;
        m.input(params)?;
        m.input(env_path)?;
        if let Some(p) = matrix {
            m.input(p)?;
        }
        m.arg("episode", &episode.to_string());
        m.arg("xi", &xi.to_string());
        m.arg("mode", &format!("{mode:?}"));
        m.write(dir, "trace.jsonl", &write_jsonl(&traces)?)?;
        m.finish(dir)?;
    }
    Ok(())
}

fn join(nodes: &[usize]) -> String {
    nodes.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(" ")
}

fn export_relations(matrix: &Path, out_csv: &Path, trace: Option<&Path>, attention_csv: Option<&Path>) -> Outcome {
    let m = RelationMatrix::from_json(&read(matrix)?)?;
    let traces: Option<Vec<EpisodeTrace>> = match trace {
        Some(p) => Some(read_jsonl(&read(p)?)?),
        None => None,
    };
    let n = m.size();
    let mut csv = String::from("category");
    for j in 0..n {
        csv.push_str(&format!(",{j}"));
    }
    csv.push('\n');
    for i in 0..n {
        csv.push_str(&i.to_string());
        for &x in m.values().row(i) {
            csv.push_str(&format!(",{x}"));
        }
        csv.push('\n');
    }
    write(out_csv, &csv)?;

    if let (Some(traces), Some(out)) = (traces, attention_csv) {
        let mut csv = String::from("episode,step,node,object,noun,weight\n");
        for t in &traces {
            for (s, step) in t.steps.iter().enumerate() {
                for (o, row) in step.attention.iter().flatten().enumerate() {
                    for (w, x) in row.iter().enumerate() {
                        csv.push_str(&format!("{},{s},{},{o},{w},{x}\n", t.episode, step.node));
                    }
                }
            }
        }
        write(out, &csv)?;
    }
    Ok(())
}

fn ablate_cmd(config: Option<&Path>, seeds: &[u64], out_dir: &Path) -> Outcome {
    if seeds.is_empty() {
        return Err(Failure::Usage("need at least one seed".into()));
    }
    let cfg = load_config(config)?;
    let data = build_dataset(&cfg)?;
    let table = ablate(&cfg, &data, seeds)?;

    create_dir(out_dir)?;
    let mut m = Manifest::new("ablate", cfg.seed, &cfg)?;
    if let Some(p) = config {
        m.input(p)?;
    }
    m.arg("seeds", &join(&seeds.iter().map(|&s| s as usize).collect::<Vec<_>>()));
    let csv = table.to_csv();
    m.write(out_dir, "ablation.csv", &csv)?;
    m.write(out_dir, "ablation.json", &serde_json::to_string_pretty(&table)?)?;
    m.finish(out_dir)?;
    print!("{csv}");
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::GenEnv {
            seed,
            nodes,
            degree,
            vocab,
            out,
        } => gen_env(seed, nodes, degree, vocab, &out),
        Command::BuildSor { envs, k1, k2, k3, out } => build_sor(&envs, SorConstants { k1, k2, k3 }, &out),
        Command::Train { config, seed, out_dir } => train_cmd(config.as_deref(), seed, &out_dir),
        Command::Eval {
            params,
            split,
            xi,
            mode,
            seed,
            out_dir,
        } => eval_cmd(&params, &split, xi, &mode, seed, &out_dir),
        Command::RunEpisode {
            params,
            env,
            episode,
            mode,
            xi,
            seed,
            matrix,
            out_dir,
        } => run_episode_cmd(
            &params,
            &env,
            episode,
            &mode,
            xi,
            seed,
            matrix.as_deref(),
            out_dir.as_deref(),
        ),
        Command::ExportRelations {
            matrix,
            out_csv,
            trace,
            attention_csv,
        } => export_relations(&matrix, &out_csv, trace.as_deref(), attention_csv.as_deref()),
        Command::Ablate { config, seeds, out_dir } => ablate_cmd(config.as_deref(), &seeds, &out_dir),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
    }
}
