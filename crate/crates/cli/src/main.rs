//! `cellgraph` command line: scenario generation, oracle simulation, graph
//! construction, training sweeps, evaluation, ledger reports and inference
//! benchmarks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use cellgraph::bench::{bench_backbone, BenchReport};
use cellgraph::error::{Error, Result};
use cellgraph::graph::{build_graph, CellGraph, Kpi};
use cellgraph::models::{BackboneKind, DEFAULT_GAT_HEADS, DEFAULT_HIDDEN, DEFAULT_LAYERS};
use cellgraph::radio::{coverage_map_csv, kpi_table_csv, simulate};
use cellgraph::scenario::{generate_scenario, load_scenario, scenario_from_csv, Bounds, GenerateParams, Scenario};
use cellgraph::training::{
    aggregate, append_ledger, gain, parallel_map, read_ledger, run_full_supervision, run_pf1, run_pf2, Mode, Pretext, RunReport, Split, TrainConfig,
    TrainedModel, DEFAULT_LR_FT, DEFAULT_LR_PT, DEFAULT_N_FT, DEFAULT_N_PT,
};
use cellgraph::{read_text, write_text};
use clap::{Args, Parser, Subcommand};

/// Site density of generated scenarios when no side length is given, in
/// metres of square side per square root of the site count.
const DEFAULT_SIDE_PER_SQRT_SITE_M: f64 = 1131.0;
const MIN_SIDE_M: f64 = 3000.0;

#[derive(Parser)]
#[command(name = "cellgraph", version, about = "Few-shot cellular coverage KPI estimation on cell graphs")]
struct Cli {
    /// Base directory for every relative input and output path.
    #[arg(long, global = true, env = "CELLGRAPH_OUT", default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a deployment (or import one from CSV) as scenario JSON.
    Generate(GenerateArgs),
    /// Run the propagation oracle and write per-cell KPI bins.
    Simulate(SimulateArgs),
    /// Build the cell graph consumed by training.
    BuildGraph(BuildGraphArgs),
    /// Train one configuration over one or more seeds.
    Train(TrainArgs),
    /// Score a checkpoint on a graph.
    Eval(EvalArgs),
    /// Summarize the results ledger over seeds.
    Report(ReportArgs),
    /// Time a single forward pass and account its memory.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 20)]
    sites: usize,
    #[arg(long, default_value_t = 3)]
    sectors: usize,
    /// Comma-separated carrier list in MHz.
    #[arg(long, value_delimiter = ',', default_value = "800,2100")]
    carriers: Vec<u32>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side of the square deployment area in metres.
    #[arg(long)]
    side_m: Option<f64>,
    /// Import cells from a CSV table instead of sampling them.
    #[arg(long)]
    from_csv: Option<PathBuf>,
    #[arg(long, default_value = "scenario.json")]
    output: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value = "scenario.json")]
    scenario: PathBuf,
    /// Also write the per-pixel coverage map.
    #[arg(long)]
    map: bool,
    #[arg(long, default_value = "kpi.csv")]
    output: PathBuf,
    #[arg(long, default_value = "map.csv")]
    map_output: PathBuf,
}

#[derive(Args)]
struct BuildGraphArgs {
    #[arg(long, default_value = "scenario.json")]
    scenario: PathBuf,
    /// Attach RSSI measurement bins as node features.
    #[arg(long, conflicts_with = "no_m")]
    with_m: bool,
    /// Leave measurement features out (default).
    #[arg(long)]
    no_m: bool,
    /// Seed of the train/test split.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "graph.json")]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "graph.json")]
    graph: PathBuf,
    /// Unseen graph for inductive full-label runs.
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long, default_value = "pf2")]
    mode: Mode,
    #[arg(long, default_value = "gine")]
    backbone: BackboneKind,
    #[arg(long, default_value = "cqi")]
    kpi: Kpi,
    #[arg(long, default_value_t = 2.5)]
    alpha: f64,
    #[arg(long, default_value = "ia")]
    pretext: Pretext,
    #[arg(long, default_value = "transductive")]
    split: Split,
    /// First seed; runs use consecutive seeds.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    #[arg(long, default_value_t = DEFAULT_N_PT)]
    n_pt: usize,
    #[arg(long, default_value_t = DEFAULT_N_FT)]
    n_ft: usize,
    #[arg(long, default_value_t = DEFAULT_LR_PT)]
    lr_pt: f64,
    #[arg(long, default_value_t = DEFAULT_LR_FT)]
    lr_ft: f64,
    #[arg(long)]
    weight_decay_ft: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = DEFAULT_LAYERS)]
    layers: usize,
    #[arg(long, default_value_t = DEFAULT_GAT_HEADS)]
    heads: usize,
    /// Append IA/ID to edge attributes.
    #[arg(long)]
    edge_geometry: bool,
    /// Also train the no-pretraining twin of each few-shot run and record the gain.
    #[arg(long)]
    with_gain: bool,
    /// Concurrent runs.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value = "ledger.csv")]
    ledger: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "graph.json")]
    graph: PathBuf,
    /// Node set: test, train or all.
    #[arg(long, default_value = "test")]
    nodes: String,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, default_value = "ledger.csv")]
    ledger: PathBuf,
    /// Also write the summary as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value = "graph.json")]
    graph: PathBuf,
    /// Backbone name or "all".
    #[arg(long, default_value = "all")]
    backbone: String,
    #[arg(long, default_value_t = 20)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Exit with an error when a backbone exceeds the time or memory budget.
    #[arg(long)]
    enforce: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            print_error("usage", first);
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let validation = e.is_validation();
            print_error(if validation { "validation" } else { "runtime" }, &e.to_string());
            ExitCode::from(if validation { 2 } else { 1 })
        }
    }
}

fn print_error(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.replace('\n', " ") });
    eprintln!("{line}");
}

fn run(cli: Cli) -> Result<()> {
    let out = Out(cli.out_dir);
    match cli.command {
        Command::Generate(a) => generate(&out, a),
        Command::Simulate(a) => simulate_cmd(&out, a),
        Command::BuildGraph(a) => build_graph_cmd(&out, a),
        Command::Train(a) => train(&out, a),
        Command::Eval(a) => eval(&out, a),
        Command::Report(a) => report(&out, a),
        Command::Bench(a) => bench(&out, a),
    }
}

struct Out(PathBuf);

impl Out {
    fn path(&self, p: &Path) -> PathBuf {
        self.0.join(p)
    }

    fn write(&self, p: &Path, text: &str) -> Result<PathBuf> {
        let path = self.path(p);
        write_text(&path, text)?;
        Ok(path)
    }
}

fn generate(out: &Out, a: GenerateArgs) -> Result<()> {
    let scenario = match &a.from_csv {
        Some(csv) => {
            let name = csv.file_stem().and_then(|s| s.to_str()).unwrap_or("imported");
            scenario_from_csv(name, &read_text(&out.path(csv))?)?
        }
        None => {
            let side = a
                .side_m
                .unwrap_or_else(|| (DEFAULT_SIDE_PER_SQRT_SITE_M * (a.sites as f64).sqrt()).max(MIN_SIDE_M));
            if !(side.is_finite() && side > 0.0) {
                return Err(Error::Config(format!("side {side} m must be positive")));
            }
            generate_scenario(&GenerateParams {
                n_sites: a.sites,
                sectors_per_site: a.sectors,
                carriers: a.carriers,
                bounds: Bounds::square(side),
                seed: a.seed,
            })?
        }
    };
    let path = out.write(&a.output, &scenario.to_json()?)?;
    println!("wrote {} ({} cells)", path.display(), scenario.len());
    Ok(())
}

fn simulate_cmd(out: &Out, a: SimulateArgs) -> Result<()> {
    let scenario = load_scenario(&out.path(&a.scenario))?;
    let sim = simulate(&scenario)?;
    let path = out.write(&a.output, &kpi_table_csv(&scenario, &sim))?;
    println!("wrote {}", path.display());
    if a.map {
        let path = out.write(&a.map_output, &coverage_map_csv(&scenario, &sim.map))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn build_graph_cmd(out: &Out, a: BuildGraphArgs) -> Result<()> {
    let scenario: Scenario = load_scenario(&out.path(&a.scenario))?;
    let sim = simulate(&scenario)?;
    let graph = build_graph(&scenario, &sim, a.with_m, a.seed)?;
    let path = out.write(&a.output, &graph.to_json()?)?;
    println!(
        "wrote {} ({} nodes, {} edges, measurement features {})",
        path.display(),
        graph.n_nodes(),
        graph.n_edges(),
        if a.with_m { "on" } else { "off" }
    );
    Ok(())
}

fn train_config(a: &TrainArgs, seed: u64) -> Result<TrainConfig> {
    let mut c = TrainConfig::new(a.backbone, a.kpi);
    c.n_pt = a.n_pt;
    c.n_ft = a.n_ft;
    c.alpha_pct = a.alpha;
    c.hp_pt.lr = a.lr_pt;
    c.hp_ft.lr = a.lr_ft;
    if let Some(wd) = a.weight_decay_ft {
        c.hp_ft.weight_decay = wd;
    }
    c.pretext = a.pretext;
    c.split = a.split;
    c.seed = seed;
    c.edge_geometry = a.edge_geometry;
    c.backbone.hidden = a.hidden;
    c.backbone.layers = a.layers;
    c.backbone.gat_heads = a.heads;
    c.validate()?;
    Ok(c)
}

fn train_one(mode: Mode, graph: &CellGraph, target: Option<&CellGraph>, cfg: &TrainConfig, with_gain: bool) -> Result<(RunReport, TrainedModel)> {
    let start = Instant::now();
    let (mut report, model) = match mode {
        Mode::Pf2 => run_pf2(graph, cfg)?,
        Mode::Pf1 => run_pf1(graph, target, cfg)?,
        Mode::Supervised => run_full_supervision(graph, cfg)?,
    };
    if with_gain && mode == Mode::Pf2 && cfg.pretext != Pretext::None {
        let mut twin = *cfg;
        twin.pretext = Pretext::None;
        let (baseline, _) = run_pf2(graph, &twin)?;
        report.gain = Some(gain(&report, &baseline)?);
    }
    report.wallclock_s = start.elapsed().as_secs_f64();
    Ok((report, model))
}

fn train(out: &Out, a: TrainArgs) -> Result<()> {
    if a.runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    if a.jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let graph = CellGraph::load(&out.path(&a.graph))?;
    let target = a.target.as_deref().map(|p| CellGraph::load(&out.path(p))).transpose()?;
    let configs = (a.seed..a.seed + a.runs).map(|s| train_config(&a, s)).collect::<Result<Vec<_>>>()?;
    let results = parallel_map(&configs, a.jobs, |cfg| train_one(a.mode, &graph, target.as_ref(), cfg, a.with_gain));

    let ledger = out.path(&a.ledger);
    for (cfg, result) in configs.iter().zip(results) {
        let (report, model) = result?;
        let dir = PathBuf::from("runs").join(&report.config_hash).join(format!("seed{}", cfg.seed));
        out.write(&dir.join("model.json"), &model.to_json()?)?;
        out.write(&dir.join("report.json"), &report.to_json()?)?;
        append_ledger(&ledger, &report)?;
        let gain = report.gain.map(|g| format!(" gain {g:+.3}")).unwrap_or_default();
        println!(
            "{} {} {} seed {}: mse {:.3}%{gain} ({:.1} s) -> {}",
            report.mode.as_str(),
            cfg.backbone.kind,
            cfg.kpi.as_str(),
            cfg.seed,
            report.mse(),
            report.wallclock_s,
            out.path(&dir).display()
        );
    }
    Ok(())
}

fn eval(out: &Out, a: EvalArgs) -> Result<()> {
    let model = TrainedModel::load(&out.path(&a.model))?;
    let graph = CellGraph::load(&out.path(&a.graph))?;
    let nodes: Vec<usize> = match a.nodes.as_str() {
        "test" => graph.masks.test.clone(),
        "train" => graph.masks.train.clone(),
        "all" => (0..graph.n_nodes()).collect(),
        other => return Err(Error::Config(format!("unknown node set {other:?} (test, train or all)"))),
    };
    let mse = model.evaluate(&graph, &nodes)?;
    let line = serde_json::json!({
        "kpi": model.config.kpi.as_str(),
        "nodes": a.nodes,
        "n_nodes": nodes.len(),
        "mse_pct": mse,
    });
    println!("{line}");
    Ok(())
}

fn report(out: &Out, a: ReportArgs) -> Result<()> {
    let rows = read_ledger(&out.path(&a.ledger))?;
    if rows.is_empty() {
        return Err(Error::Empty("results ledger"));
    }
    let summary = aggregate(&rows);
    println!(
        "{:<10} {:<6} {:<5} {:>5} {:<7} {:<12} {:>4}  {:<14} gain",
        "mode", "model", "kpi", "alpha", "pretext", "split", "runs", "mse"
    );
    for s in &summary {
        println!(
            "{:<10} {:<6} {:<5} {:>5} {:<7} {:<12} {:>4}  {:<14} {}",
            s.mode,
            s.backbone,
            s.kpi,
            s.alpha_pct,
            s.pretext,
            s.split,
            s.n_runs,
            s.mse_text(),
            s.gain_text()
        );
    }
    if let Some(csv) = &a.csv {
        let mut text = String::from("config_hash,mode,backbone,kpi,alpha_pct,pretext,split,n_runs,mse,gain\n");
        for s in &summary {
            text += &format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                s.config_hash,
                s.mode,
                s.backbone,
                s.kpi,
                s.alpha_pct,
                s.pretext,
                s.split,
                s.n_runs,
                s.mse_text(),
                s.gain_text()
            );
        }
        out.write(csv, &text)?;
    }
    Ok(())
}

fn bench(out: &Out, a: BenchArgs) -> Result<()> {
    let graph = CellGraph::load(&out.path(&a.graph))?;
    let kinds: Vec<BackboneKind> = if a.backbone == "all" {
        BackboneKind::ALL.to_vec()
    } else {
        vec![a.backbone.parse()?]
    };
    let reports: Vec<BenchReport> = kinds
        .iter()
        .map(|&k| bench_backbone(&graph, k, a.seed, a.reps))
        .collect::<Result<_>>()?;
    for r in &reports {
        println!("{}", serde_json::to_string(r)?);
    }
    if a.enforce {
        if let Some(r) = reports.iter().find(|r| !r.within_budget()) {
            return Err(Error::Budget(format!(
                "{} forward {:.4} s, {} bytes",
                r.backbone,
                r.forward_s,
                r.model_bytes()
            )));
        }
    }
    Ok(())
}
