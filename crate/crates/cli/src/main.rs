//! MiniRV differential fuzzer command line.
//!
//! Exit codes: 0 clean, 1 configuration error, 2 violated internal
//! invariant (panic with diagnostics).

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use minifuzz_cli::emit;
use minifuzz_cli::matrix;
use minifuzz_cli::{load_seed_dir, parse_budget, parse_seed};
use minifuzz_core::dut::{run_dut, BugCatalog, BugId, CoverageMap};
use minifuzz_core::fuzzer::{cross_check, run_campaign, CampaignConfig};
use minifuzz_core::golden::{run_golden, run_golden_with_trace};
use minifuzz_core::isa::InputSequence;

#[derive(Parser)]
#[command(name = "minifuzz", version, about = "Coverage-guided differential fuzzer for the MiniRV CPU pair")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one fuzzing campaign.
    Fuzz(FuzzArgs),
    /// Run the ablation matrix and emit a comparison table.
    Matrix(MatrixArgs),
    /// Execute one corpus file on the golden model and the DUT.
    Run(RunArgs),
    /// Print the deterministic witness input for a planted bug.
    Witness(WitnessArgs),
}

#[derive(Args, Clone)]
struct CampaignArgs {
    /// Virtual-time budget, e.g. 24h, 30m, 90s.
    #[arg(long, default_value = "10m")]
    budget: String,
    /// RNG seed (decimal or 0x-hex). The campaign is a pure function of
    /// config and seed.
    #[arg(long, default_value = "0")]
    rng_seed: String,
    /// Pheromone evaporation rate.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Basic-metric weight in seed scoring.
    #[arg(long, default_value_t = 2.0)]
    omega: f64,
    /// Mutation dispatch length threshold.
    #[arg(long, default_value_t = 400)]
    len_threshold: u64,
    /// Per-gap event insertion probability.
    #[arg(long, default_value_t = 0.5)]
    intr_prob: f64,
    /// Max interrupts per input.
    #[arg(long, default_value_t = 3)]
    max_intr: u8,
    /// Max exceptions per input.
    #[arg(long, default_value_t = 3)]
    max_exc: u8,
    /// Planted bugs: `B1,B3`, `B1..B12`, `all`, or `none`.
    #[arg(long, default_value = "none")]
    bugs: String,
    /// Disable distillation (relationship extraction still runs).
    #[arg(long)]
    no_vaco: bool,
    /// Disable relationship extraction (implies --no-vaco).
    #[arg(long)]
    no_relext: bool,
    /// Disable heuristic seed selection (newest-first instead).
    #[arg(long)]
    no_seedsel: bool,
    /// Disable mutation dispatch (baseline add-only mutator).
    #[arg(long)]
    no_mutsel: bool,
    /// Baseline length cap: discard mutants longer than this and disable
    /// the distillation/selection/mutation machinery.
    #[arg(long)]
    simple_cap: Option<u64>,
    /// Distillation iteration cap.
    #[arg(long, default_value_t = 64)]
    max_iter: usize,
    /// Trend window length (samples).
    #[arg(long, default_value_t = 5)]
    vaco_window: usize,
    /// Per-execution retirement budget.
    #[arg(long, default_value_t = 1536)]
    exec_budget: u64,
    /// Directory of initial corpus files (auto-seeded when absent).
    #[arg(long)]
    seed_dir: Option<PathBuf>,
}

impl CampaignArgs {
    fn to_config(&self) -> Result<CampaignConfig> {
        if !(0.0..=1.0).contains(&self.intr_prob) {
            return Err(anyhow!("--intr-prob must be within [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.rho) || self.rho <= 0.0 {
            return Err(anyhow!("--rho must be within (0, 1)"));
        }
        if self.len_threshold == 0 {
            return Err(anyhow!("--len-threshold must be positive"));
        }
        let mut cfg = CampaignConfig {
            budget_vsecs: parse_budget(&self.budget)?,
            rng_seed: parse_seed(&self.rng_seed)?,
            rho: self.rho,
            omega: self.omega,
            len_threshold: self.len_threshold,
            intr_prob: self.intr_prob,
            max_intr: self.max_intr,
            max_exc: self.max_exc,
            bugs: BugCatalog::parse(&self.bugs).map_err(|e| anyhow!(e))?,
            vaco: !self.no_vaco && !self.no_relext,
            relations: !self.no_relext,
            seed_selection: !self.no_seedsel,
            mutation_strategies: !self.no_mutsel,
            simple_cap: self.simple_cap,
            max_iter: self.max_iter,
            vaco_window: self.vaco_window,
            exec_budget: self.exec_budget,
            initial_seeds: Vec::new(),
        };
        if self.simple_cap.is_some() {
            cfg.vaco = false;
            cfg.relations = false;
            cfg.seed_selection = false;
            cfg.mutation_strategies = false;
        }
        if let Some(dir) = &self.seed_dir {
            cfg.initial_seeds = load_seed_dir(dir, &cfg)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct FuzzArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Output directory for stats.csv, summary.json, corpus/, mismatches/.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    campaign: CampaignArgs,
    /// Output directory.
    #[arg(long, default_value = "out-matrix")]
    out: PathBuf,
    /// Configurations to run: `all` or a list like `full,-V,-SM,simple`.
    #[arg(long, default_value = "all")]
    configs: String,
    /// Repetitions per configuration (rep r uses rng seed + r).
    #[arg(long, default_value_t = 1)]
    reps: u64,
    /// Length cap used by the `simple` configuration.
    #[arg(long, default_value_t = 1000)]
    cap: u64,
    /// Run configurations on parallel workers with isolated RNGs.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Corpus text file to execute.
    #[arg(long)]
    input: PathBuf,
    /// Planted bugs for the DUT side.
    #[arg(long, default_value = "none")]
    bugs: String,
    /// Per-execution retirement budget.
    #[arg(long, default_value_t = 1536)]
    exec_budget: u64,
    /// Print one line per retirement: pc opcode priv minstret.
    #[arg(long)]
    trace: bool,
    /// Dump the DUT coverage map as a sorted hex list.
    #[arg(long)]
    dump_coverage: bool,
}

#[derive(Args)]
struct WitnessArgs {
    /// Bug id, e.g. B7.
    #[arg(long)]
    bug: String,
    /// Write the witness to a file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_fuzz(args: FuzzArgs) -> Result<()> {
    let cfg = args.campaign.to_config()?;
    let result = run_campaign(cfg.clone());
    emit::write_report(&args.out, &cfg, &result)?;
    println!(
        "coverage={} execs={} corpus={} (mean len {:.2}) mismatches={} distinct={} ist={} est={} distills={}",
        result.coverage,
        result.execs,
        result.corpus.len(),
        result.corpus_mean_len,
        result.raw_mismatches,
        result.mismatches.len(),
        result.ist_distinct,
        result.est_distinct,
        result.distill_invocations,
    );
    println!("report written to {}", args.out.display());
    Ok(())
}

fn cmd_matrix(args: MatrixArgs) -> Result<()> {
    let base = args.campaign.to_config()?;
    let configs = matrix::parse_config_list(&args.configs).map_err(|e| anyhow!(e))?;
    let outcome = matrix::run_matrix(&base, &configs, args.reps.max(1), args.cap, args.parallel);
    matrix::write_matrix_report(&args.out, &outcome.rows)?;
    // Per-run artifacts for later inspection.
    for (ci, mc) in configs.iter().enumerate() {
        for (r, result) in outcome.runs[ci].iter().enumerate() {
            let mut cfg = mc.apply(&base, args.cap);
            cfg.rng_seed = base.rng_seed.wrapping_add(r as u64);
            let sub = args.out.join(format!("{}_{r}", mc.name().replace('-', "no")));
            std::fs::create_dir_all(&sub)?;
            std::fs::write(sub.join("stats.csv"), emit::render_stats_csv(result))?;
            std::fs::write(sub.join("summary.json"), emit::render_summary(&cfg, result))?;
        }
    }
    print!("{}", matrix::render_table(&outcome.rows));
    println!("matrix report written to {}", args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let seq = InputSequence::parse_text(&text).map_err(|e| anyhow!("{e}"))?;
    let bugs = BugCatalog::parse(&args.bugs).map_err(|e| anyhow!(e))?;

    let golden = if args.trace {
        let mut trace = Vec::new();
        let out = run_golden_with_trace(&seq, args.exec_budget, &mut trace);
        for line in &trace {
            println!(
                "{:6} {:8} {} {}",
                line.pc,
                line.opcode.mnemonic(),
                line.priv_level,
                line.minstret
            );
        }
        out
    } else {
        run_golden(&seq, args.exec_budget)
    };
    println!(
        "golden: retired={} pc={} priv={} halted={} minstret={}",
        golden.retired,
        golden.state.pc,
        golden.state.priv_level,
        golden.state.halted,
        golden.state.csrs[minifuzz_core::isa::Csr::Minstret.index() as usize],
    );

    let mut cov = CoverageMap::new();
    let (dut, delta) = run_dut(&seq, args.exec_budget, bugs, &mut cov);
    println!("dut: retired={} coverage={delta}", dut.retired);
    match cross_check(&golden, &dut) {
        None => println!("cross-check: match"),
        Some(fields) => {
            println!("cross-check: MISMATCH in {} field(s)", fields.len());
            for f in fields {
                println!("  {:10} golden={} dut={}", f.name, f.golden, f.dut);
            }
        }
    }
    if args.dump_coverage {
        for h in cov.sorted_hashes() {
            println!("{h:08x}");
        }
    }
    Ok(())
}

fn cmd_witness(args: WitnessArgs) -> Result<()> {
    let bug = BugId::from_name(args.bug.trim())
        .ok_or_else(|| anyhow!("unknown bug id `{}`", args.bug))?;
    let text = format!("# witness for {}: {}\n{}", bug, bug.description(), bug.witness().to_text());
    match args.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are clean exits; anything else is a config error.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let body = std::panic::catch_unwind(|| match cli.command {
        Command::Fuzz(args) => cmd_fuzz(args),
        Command::Matrix(args) => cmd_matrix(args),
        Command::Run(args) => cmd_run(args),
        Command::Witness(args) => cmd_witness(args),
    });
    match body {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(_) => {
            eprintln!("internal invariant violated; see panic diagnostics above");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn campaign_args_validate() {
        let mut args = CampaignArgs {
            budget: "1m".into(),
            rng_seed: "0x10".into(),
            rho: 0.5,
            omega: 2.0,
            len_threshold: 400,
            intr_prob: 0.5,
            max_intr: 3,
            max_exc: 3,
            bugs: "B1,B2".into(),
            no_vaco: false,
            no_relext: false,
            no_seedsel: false,
            no_mutsel: false,
            simple_cap: None,
            max_iter: 64,
            vaco_window: 5,
            exec_budget: 1536,
            seed_dir: None,
        };
        let cfg = args.to_config().unwrap();
        assert_eq!(cfg.budget_vsecs, 60);
        assert_eq!(cfg.rng_seed, 16);
        assert!(cfg.vaco && cfg.relations);

        args.intr_prob = 1.5;
        assert!(args.to_config().is_err());
        args.intr_prob = 0.5;
        args.simple_cap = Some(1000);
        let cfg = args.to_config().unwrap();
        assert!(!cfg.vaco && !cfg.seed_selection && !cfg.mutation_strategies);
    }
}
