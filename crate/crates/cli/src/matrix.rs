//! The ablation matrix: run the named configurations at a shared budget
//! and RNG seed and emit a comparison table against `full`.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Result};
use serde_json::json;

use minifuzz_core::fuzzer::{run_campaign, CampaignConfig, CampaignResult};

/// The named configurations of the comparison matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixConfig {
    Full,
    NoVaco,
    NoSeedSel,
    NoMutSel,
    NoSeedSelMutSel,
    NoRelationsVaco,
    SimpleCap,
}

impl MatrixConfig {
    pub const ALL: [MatrixConfig; 7] = [
        MatrixConfig::Full,
        MatrixConfig::NoVaco,
        MatrixConfig::NoSeedSel,
        MatrixConfig::NoMutSel,
        MatrixConfig::NoSeedSelMutSel,
        MatrixConfig::NoRelationsVaco,
        MatrixConfig::SimpleCap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MatrixConfig::Full => "full",
            MatrixConfig::NoVaco => "-V",
            MatrixConfig::NoSeedSel => "-S",
            MatrixConfig::NoMutSel => "-M",
            MatrixConfig::NoSeedSelMutSel => "-SM",
            MatrixConfig::NoRelationsVaco => "-RV",
            MatrixConfig::SimpleCap => "simple",
        }
    }

    pub fn from_name(s: &str) -> Option<MatrixConfig> {
        MatrixConfig::ALL.iter().copied().find(|c| c.name().eq_ignore_ascii_case(s))
    }

    /// Derive this configuration from the full one.
    pub fn apply(self, base: &CampaignConfig, simple_cap: u64) -> CampaignConfig {
        let mut cfg = base.clone();
        match self {
            MatrixConfig::Full => {}
            MatrixConfig::NoVaco => cfg.vaco = false,
            MatrixConfig::NoSeedSel => cfg.seed_selection = false,
            MatrixConfig::NoMutSel => cfg.mutation_strategies = false,
            MatrixConfig::NoSeedSelMutSel => {
                cfg.seed_selection = false;
                cfg.mutation_strategies = false;
            }
            MatrixConfig::NoRelationsVaco => {
                cfg.vaco = false;
                cfg.relations = false;
            }
            MatrixConfig::SimpleCap => {
                // The upper-bound baseline: no distillation machinery, the
                // baseline mutator and scheduler, plus the length cap.
                cfg.vaco = false;
                cfg.relations = false;
                cfg.seed_selection = false;
                cfg.mutation_strategies = false;
                cfg.simple_cap = Some(simple_cap);
            }
        }
        cfg
    }
}

/// Aggregated measurements of one configuration over its repetitions.
#[derive(Clone, Debug)]
pub struct MatrixRow {
    pub name: &'static str,
    pub coverage: f64,
    pub corpus_mean_len: f64,
    pub executed_mean_len: f64,
    pub distinct_mismatches: f64,
    pub speed: f64,
}

pub struct MatrixOutcome {
    pub rows: Vec<MatrixRow>,
    /// Per-config per-rep results, parallel to `rows`.
    pub runs: Vec<Vec<CampaignResult>>,
}

pub fn parse_config_list(spec: &str) -> Result<Vec<MatrixConfig>> {
    if spec.trim().eq_ignore_ascii_case("all") {
        return Ok(MatrixConfig::ALL.to_vec());
    }
    let mut out = Vec::new();
    for part in spec.split(',') {
        match MatrixConfig::from_name(part.trim()) {
            Some(c) => out.push(c),
            None => bail!("unknown matrix config `{part}`"),
        }
    }
    if out.is_empty() {
        bail!("empty matrix config list");
    }
    Ok(out)
}

/// Run the matrix: every config shares the budget and, within a repetition,
/// the RNG seed (rep r uses seed + r). Per-config failures cannot happen
/// structurally; campaign panics abort the process with exit code 2 like
/// any other violated invariant.
pub fn run_matrix(
    base: &CampaignConfig,
    configs: &[MatrixConfig],
    reps: u64,
    simple_cap: u64,
    parallel: bool,
) -> MatrixOutcome {
    let jobs: Vec<(MatrixConfig, CampaignConfig)> = configs
        .iter()
        .flat_map(|&mc| {
            (0..reps).map(move |r| {
                let mut cfg = mc.apply(base, simple_cap);
                cfg.rng_seed = base.rng_seed.wrapping_add(r);
                (mc, cfg)
            })
        })
        .collect();

    let results: Vec<CampaignResult> = if parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = jobs
                .iter()
                .map(|(_, cfg)| {
                    let cfg = cfg.clone();
                    scope.spawn(move || run_campaign(cfg))
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("campaign worker")).collect()
        })
    } else {
        jobs.iter().map(|(_, cfg)| run_campaign(cfg.clone())).collect()
    };

    let mut rows = Vec::new();
    let mut runs: Vec<Vec<CampaignResult>> = Vec::new();
    for (ci, &mc) in configs.iter().enumerate() {
        let chunk: Vec<CampaignResult> =
            results[ci * reps as usize..(ci + 1) * reps as usize].to_vec();
        let n = chunk.len() as f64;
        let mean = |f: &dyn Fn(&CampaignResult) -> f64| chunk.iter().map(|r| f(r)).sum::<f64>() / n;
        rows.push(MatrixRow {
            name: mc.name(),
            coverage: mean(&|r| r.coverage as f64),
            corpus_mean_len: mean(&|r| r.corpus_mean_len),
            executed_mean_len: mean(&|r| r.executed_mean_len),
            distinct_mismatches: mean(&|r| r.mismatches.len() as f64),
            speed: mean(&|r| {
                if r.elapsed_vsecs > 0 {
                    r.execs as f64 / r.elapsed_vsecs as f64
                } else {
                    0.0
                }
            }),
        });
        runs.push(chunk);
    }
    MatrixOutcome { rows, runs }
}

fn delta_pct(v: f64, base: f64) -> String {
    if base == 0.0 {
        "n/a".to_string()
    } else {
        format!("{:+.1}%", (v - base) / base * 100.0)
    }
}

/// Render the comparison table with percentage deltas versus `full`
/// (the first row when present, otherwise the first row given).
pub fn render_table(rows: &[MatrixRow]) -> String {
    let base = rows.iter().find(|r| r.name == "full").unwrap_or(&rows[0]);
    let (bc, bl, bm, bs) =
        (base.coverage, base.corpus_mean_len, base.distinct_mismatches, base.speed);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:>12} {:>10} {:>14} {:>10} {:>14} {:>10} {:>10} {:>10}",
        "config",
        "coverage",
        "Δcov",
        "corpus_len",
        "Δlen",
        "mismatches",
        "Δmm",
        "speed",
        "Δspeed"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>12.1} {:>10} {:>14.2} {:>10} {:>14.1} {:>10} {:>10.1} {:>10}",
            r.name,
            r.coverage,
            delta_pct(r.coverage, bc),
            r.corpus_mean_len,
            delta_pct(r.corpus_mean_len, bl),
            r.distinct_mismatches,
            delta_pct(r.distinct_mismatches, bm),
            r.speed,
            delta_pct(r.speed, bs),
        );
    }
    out
}

pub fn write_matrix_report(dir: &Path, rows: &[MatrixRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let docs: Vec<_> = rows
        .iter()
        .map(|r| {
            json!({
                "config": r.name,
                "coverage": r.coverage,
                "corpus_mean_len": r.corpus_mean_len,
                "executed_mean_len": r.executed_mean_len,
                "distinct_mismatches": r.distinct_mismatches,
                "speed_execs_per_vsec": r.speed,
            })
        })
        .collect();
    std::fs::write(
        dir.join("matrix.json"),
        serde_json::to_string_pretty(&json!({ "rows": docs }))?,
    )?;
    std::fs::write(dir.join("matrix.txt"), render_table(rows))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_config_matrix_equals_its_campaign() {
        let base = CampaignConfig { budget_vsecs: 2, rng_seed: 11, ..Default::default() };
        let m = run_matrix(&base, &[MatrixConfig::Full], 1, 1000, false);
        let direct = run_campaign(base);
        assert_eq!(m.runs[0][0].coverage, direct.coverage);
        assert_eq!(m.runs[0][0].execs, direct.execs);
        assert!((m.rows[0].coverage - direct.coverage as f64).abs() < 1e-9);
    }

    #[test]
    fn full_row_shows_zero_deltas() {
        let base = CampaignConfig { budget_vsecs: 2, rng_seed: 11, ..Default::default() };
        let m = run_matrix(&base, &[MatrixConfig::Full, MatrixConfig::NoVaco], 1, 1000, false);
        let table = render_table(&m.rows);
        let full_line = table.lines().nth(1).unwrap();
        assert!(full_line.contains("+0.0%"), "{table}");
    }

    #[test]
    fn parallel_matches_sequential() {
        let base = CampaignConfig { budget_vsecs: 1, rng_seed: 3, ..Default::default() };
        let cfgs = [MatrixConfig::Full, MatrixConfig::NoRelationsVaco];
        let seq = run_matrix(&base, &cfgs, 1, 1000, false);
        let par = run_matrix(&base, &cfgs, 1, 1000, true);
        for (a, b) in seq.runs.iter().flatten().zip(par.runs.iter().flatten()) {
            assert_eq!(a.coverage, b.coverage);
            assert_eq!(a.execs, b.execs);
        }
    }

    #[test]
    fn config_list_parsing() {
        let l = parse_config_list("full,-V,-SM").unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l[1], MatrixConfig::NoVaco);
        assert!(parse_config_list("bogus").is_err());
        assert_eq!(parse_config_list("all").unwrap().len(), 7);
    }
}
