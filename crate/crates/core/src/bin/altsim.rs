use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use altsim::catalog::{self, nearest_neighbors};
use altsim::harness::report::{write_comparison, write_run, write_sweep};
use altsim::harness::{
    compare, run_experiment, tolerance_sweep, AlternativesSource, CatalogSource, ExperimentConfig, RunReport, Setup,
    SimulatorMode, SyntheticCatalog, TargetSource,
};
use altsim::metrics::{cohens_kappa, format_improvement, load_judgments, Metric};
use altsim::pooling::{build_pool, ModelSources, PoolSpec, Predictor, SampleSpec};
use altsim::ranker::RankerSpec;
use altsim::simulator::SyntheticAlternatives;
use altsim::{Error, Result};

#[derive(Parser)]
#[command(name = "altsim", version, about = "Offline conversational recommendation evaluation with alternatives-aware simulated users")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single experiment.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out/run")]
        out: PathBuf,
    },
    /// Paired base/meta runs with the improvement table.
    Compare {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "out/compare")]
        out: PathBuf,
    },
    /// Tolerance sweep across one or more rankers.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated tolerances (defaults to the config's sweep_tolerances).
        #[arg(long, value_delimiter = ',')]
        tolerances: Option<Vec<u32>>,
        /// Comma-separated ranker names compared in the sweep.
        #[arg(long, value_delimiter = ',')]
        rankers: Option<Vec<String>>,
        #[arg(long, default_value = "out/sweep")]
        out: PathBuf,
    },
    /// Build judging pools for the experiment's targets.
    Pool {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Rankers whose neighbours and final rankings feed the pools.
        #[arg(long, value_delimiter = ',', default_value = "oracle_embedding,attribute_drift")]
        models: Vec<String>,
        #[arg(long, default_value_t = 4)]
        nn: usize,
        #[arg(long, default_value_t = 3)]
        retrieved: usize,
        #[arg(long, default_value_t = 10)]
        final_turn: u32,
        #[arg(long, default_value = "out/pools.tsv")]
        out: PathBuf,
    },
    /// Difficulty-stratified target sample, one id per line.
    Sample {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cohen's kappa between two judgment files.
    Kappa { first: PathBuf, second: PathBuf },
    /// Write a seeded synthetic catalog.
    GenCatalog {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        items: usize,
        #[arg(long, default_value_t = 32)]
        dimension: usize,
        /// Comma-separated attribute domain sizes.
        #[arg(long, value_delimiter = ',', default_value = "6,6,6")]
        domains: Vec<usize>,
        #[arg(long, default_value_t = catalog::DEFAULT_NOISE)]
        noise: f64,
        #[arg(long, default_value = "catalog.jsonl")]
        out: PathBuf,
    },
}

/// Flags mirroring `ExperimentConfig`; each one overrides the config file.
#[derive(Args, Default)]
struct ExperimentArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Catalog file (JSON lines with a header).
    #[arg(long, conflicts_with_all = ["items", "dimension", "domains"])]
    catalog: Option<PathBuf>,
    #[arg(long)]
    items: Option<usize>,
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    domains: Option<Vec<usize>>,
    #[arg(long)]
    catalog_seed: Option<u64>,
    #[arg(long)]
    ranker: Option<String>,
    #[arg(long)]
    ranker_seed: Option<u64>,
    /// oracle_embedding query blend toward the critique direction.
    #[arg(long)]
    step: Option<f64>,
    /// attribute_drift weight of the similarity tie-breaker.
    #[arg(long)]
    similarity_weight: Option<f64>,
    /// `base` or `meta`.
    #[arg(long)]
    mode: Option<SimulatorMode>,
    #[arg(long)]
    tolerance: Option<u32>,
    /// Alternatives file (`target<TAB>alternative`).
    #[arg(long, conflicts_with = "synthetic_alternatives")]
    alternatives: Option<PathBuf>,
    /// Generate alternatives from the catalog for the chosen targets.
    #[arg(long)]
    synthetic_alternatives: bool,
    #[arg(long)]
    alternatives_seed: Option<u64>,
    /// Target list, one id per line.
    #[arg(long, conflicts_with = "sample")]
    targets: Option<PathBuf>,
    /// Number of targets to sample.
    #[arg(long)]
    sample: Option<usize>,
    /// max_score, score_std_top_k or score_gap.
    #[arg(long)]
    predictor: Option<Predictor>,
    #[arg(long)]
    sample_seed: Option<u64>,
    #[arg(long)]
    max_turns: Option<u32>,
    #[arg(long, value_delimiter = ',')]
    report_turns: Option<Vec<u32>>,
    #[arg(long)]
    ndcg_cutoff: Option<usize>,
    #[arg(long)]
    mrr_cutoff: Option<usize>,
    #[arg(long)]
    depth: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(path) = &self.catalog {
            c.catalog = CatalogSource::File(path.clone());
        }
        if self.items.is_some() || self.dimension.is_some() || self.domains.is_some() || self.catalog_seed.is_some() {
            let mut spec = match &c.catalog {
                CatalogSource::Synthetic(spec) => spec.clone(),
                CatalogSource::File(_) => SyntheticCatalog::default(),
            };
            if let Some(n) = self.items {
                spec.n_items = n;
            }
            if let Some(d) = self.dimension {
                spec.dimension = d;
            }
            if let Some(domains) = &self.domains {
                spec.domain_sizes = domains.clone();
                spec.attributes.clear();
            }
            if let Some(seed) = self.catalog_seed {
                spec.seed = seed;
            }
            c.catalog = CatalogSource::Synthetic(spec);
        }
        if let Some(name) = &self.ranker {
            c.ranker = RankerSpec::from_name(name)?;
        }
        apply_ranker_params(&mut c.ranker, self.ranker_seed, self.step, self.similarity_weight)?;
        if let Some(mode) = self.mode {
            c.simulator = mode;
        }
        if let Some(t) = self.tolerance {
            c.tolerance = t;
        }
        if let Some(path) = &self.alternatives {
            c.alternatives = Some(AlternativesSource::File(path.clone()));
        }
        if self.synthetic_alternatives || self.alternatives_seed.is_some() {
            let mut spec = match &c.alternatives {
                Some(AlternativesSource::Synthetic(spec)) => spec.clone(),
                _ => SyntheticAlternatives::default(),
            };
            if let Some(seed) = self.alternatives_seed {
                spec.seed = seed;
            }
            c.alternatives = Some(AlternativesSource::Synthetic(spec));
        }
        if let Some(path) = &self.targets {
            c.targets = TargetSource::File(path.clone());
        }
        if self.sample.is_some() || self.predictor.is_some() || self.sample_seed.is_some() {
            let mut spec = match &c.targets {
                TargetSource::Sample(spec) => *spec,
                _ => SampleSpec::default(),
            };
            if let Some(n) = self.sample {
                spec.n = n;
            }
            if let Some(p) = self.predictor {
                spec.predictor = p;
            }
            if let Some(seed) = self.sample_seed {
                spec.seed = seed;
            }
            c.targets = TargetSource::Sample(spec);
        }
        if let Some(t) = self.max_turns {
            c.max_turns = t;
        }
        if let Some(turns) = &self.report_turns {
            c.report_turns = turns.clone();
        }
        if let Some(k) = self.ndcg_cutoff {
            c.cutoffs.ndcg = k;
        }
        if let Some(k) = self.mrr_cutoff {
            c.cutoffs.mrr = k;
        }
        if let Some(d) = self.depth {
            c.depth = d;
        }
        c.validate()?;
        Ok(c)
    }
}

fn apply_ranker_params(spec: &mut RankerSpec, seed: Option<u64>, step: Option<f64>, weight: Option<f64>) -> Result<()> {
    match spec {
        RankerSpec::Random { seed: s } => {
            if step.is_some() || weight.is_some() {
                return Err(Error::Config("random ranker takes no step or similarity weight".into()));
            }
            *s = seed.unwrap_or(*s);
        }
        RankerSpec::AttributeDrift {
            seed: s,
            similarity_weight,
        } => {
            if step.is_some() {
                return Err(Error::Config("--step applies to oracle_embedding only".into()));
            }
            *s = seed.unwrap_or(*s);
            *similarity_weight = weight.unwrap_or(*similarity_weight);
        }
        RankerSpec::OracleEmbedding { seed: s, step: st } => {
            if weight.is_some() {
                return Err(Error::Config("--similarity-weight applies to attribute_drift only".into()));
            }
            *s = seed.unwrap_or(*s);
            *st = step.unwrap_or(*st);
        }
    }
    Ok(())
}

fn print_run(report: &RunReport) {
    println!("{} over {} targets", report.label, report.targets.len());
    for row in &report.report.rows {
        println!(
            "  turn {:>2}  {} {:.3}  {} {:.3}  SR@1 {:.3}",
            row.turn,
            Metric::Ndcg.label(report.cutoffs),
            row.ndcg_at_10,
            Metric::Mrr.label(report.cutoffs),
            row.mrr_at_10,
            row.sr_at_1
        );
    }
    for notice in &report.notices {
        println!("  note: {notice}");
    }
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }),
        _ => Ok(()),
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Run { exp, out } => {
            let report = run_experiment(&exp.resolve()?)?;
            write_run(&out, &report)?;
            print_run(&report);
            println!("wrote {}", out.display());
        }
        Command::Compare { exp, out } => {
            let cmp = compare(&exp.resolve()?)?;
            write_comparison(&out, &cmp)?;
            print_run(&cmp.without);
            print_run(&cmp.with);
            let t = &cmp.table;
            for &(m, turn) in &t.columns {
                println!(
                    "  {} t{turn}: {} %",
                    m.label(t.cutoffs),
                    format_improvement(t.cell("% improv.", m, turn))
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Sweep {
            exp,
            tolerances,
            rankers,
            out,
        } => {
            let mut config = exp.resolve()?;
            config.simulator = SimulatorMode::Meta;
            if let Some(names) = rankers {
                config.sweep_rankers = names.iter().map(|n| RankerSpec::from_name(n)).collect::<Result<_>>()?;
            }
            let tolerances = tolerances.unwrap_or_else(|| config.sweep_tolerances.clone());
            let sweep = tolerance_sweep(&config, &tolerances)?;
            write_sweep(&out, &sweep)?;
            for row in &sweep.ranking {
                let systems: Vec<String> = row.systems.iter().map(|(s, v)| format!("{s} ({v:.3})")).collect();
                println!("{:<16} {}", row.condition, systems.join(" > "));
            }
            println!("wrote {}", out.display());
        }
        Command::Pool {
            exp,
            models,
            nn,
            retrieved,
            final_turn,
            out,
        } => {
            let mut config = exp.resolve()?;
            config.max_turns = final_turn;
            config.report_turns.retain(|t| *t <= final_turn);
            let setup = Setup::prepare(&config)?;
            let spec = PoolSpec {
                nn_per_model: nn,
                retrieved_per_model: retrieved,
                final_turn,
                models: models.clone(),
            };
            let mut finals = Vec::with_capacity(models.len());
            for name in &models {
                let report = setup.run(&RankerSpec::from_name(name)?, SimulatorMode::Base, 0)?;
                finals.push(report.traces);
            }
            // enough depth for every model to be displaced by all the others
            let depth = (spec.target_size() + 1).min(setup.catalog.len() - 1);
            create_parent(&out)?;
            let mut buf = Vec::new();
            for (i, target) in setup.targets.iter().enumerate() {
                let neighbors: Vec<_> = nearest_neighbors(&setup.catalog, target.as_str(), depth, true)?
                    .into_iter()
                    .map(|(id, _)| id)
                    .collect();
                let sources: Vec<ModelSources> = models
                    .iter()
                    .zip(&finals)
                    .map(|(name, traces)| {
                        let last = traces[i].records.last().expect("at least one turn");
                        ModelSources::new(name.clone(), neighbors.clone(), &last.ranking)
                    })
                    .collect();
                let pool = build_pool(target, &sources, &spec)?;
                for w in &pool.warnings {
                    eprintln!("altsim: warning: {target}: {w}");
                }
                pool.write_tsv(&mut buf).map_err(|e| Error::Io {
                    path: out.clone(),
                    source: e,
                })?;
            }
            fs::write(&out, buf).map_err(|e| Error::Io {
                path: out.clone(),
                source: e,
            })?;
            println!("wrote pools for {} targets to {}", setup.targets.len(), out.display());
        }
        Command::Sample { exp, out } => {
            let mut config = exp.resolve()?;
            if !matches!(config.targets, TargetSource::Sample(_)) {
                config.targets = TargetSource::Sample(SampleSpec::default());
            }
            config.alternatives = None;
            config.simulator = SimulatorMode::Base;
            let setup = Setup::prepare(&config)?;
            let text: String = setup.targets.iter().map(|t| format!("{t}\n")).collect();
            match out {
                Some(path) => {
                    create_parent(&path)?;
                    fs::write(&path, text).map_err(|e| Error::Io { path, source: e })?;
                }
                None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
                    path: "<stdout>".into(),
                    source: e,
                })?,
            }
        }
        Command::Kappa { first, second } => {
            let kappa = cohens_kappa(&load_judgments(&first)?, &load_judgments(&second)?)?;
            println!("{kappa:.4}");
        }
        Command::GenCatalog {
            seed,
            items,
            dimension,
            domains,
            noise,
            out,
        } => {
            let spec = SyntheticCatalog {
                seed,
                n_items: items,
                dimension,
                attributes: Vec::new(),
                domain_sizes: domains,
                noise,
            };
            let catalog = spec.generate()?;
            create_parent(&out)?;
            catalog.save(&out)?;
            println!("wrote {} items to {}", catalog.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("altsim: error: {}", e.to_string().replace('\n', " "));
            match e {
                Error::Config(_) | Error::Parameter(_) | Error::Parse { .. } | Error::NotFound(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
