//! Configuration, report emission, and the ablation matrix for the MiniRV
//! differential fuzzer. The binary in `main.rs` is a thin shell over this.

pub mod emit;
pub mod matrix;

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use minifuzz_core::dut::BugCatalog;
use minifuzz_core::fuzzer::CampaignConfig;
use minifuzz_core::isa::InputSequence;

/// Serializable mirror of [`CampaignConfig`]; embedded verbatim in
/// `summary.json` so a campaign can be reproduced from its own report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigDoc {
    pub budget_secs: u64,
    pub rng_seed: u64,
    pub rho: f64,
    pub omega: f64,
    pub len_threshold: u64,
    pub intr_prob: f64,
    pub max_intr: u8,
    pub max_exc: u8,
    pub bugs: String,
    pub vaco: bool,
    pub relations: bool,
    pub seed_selection: bool,
    pub mutation_strategies: bool,
    pub simple_cap: Option<u64>,
    pub max_iter: usize,
    pub vaco_window: usize,
    pub exec_budget: u64,
}

impl ConfigDoc {
    pub fn from_campaign(cfg: &CampaignConfig) -> Self {
        let bugs: Vec<String> = cfg.bugs.iter().map(|b| b.name().to_string()).collect();
        ConfigDoc {
            budget_secs: cfg.budget_vsecs,
            rng_seed: cfg.rng_seed,
            rho: cfg.rho,
            omega: cfg.omega,
            len_threshold: cfg.len_threshold,
            intr_prob: cfg.intr_prob,
            max_intr: cfg.max_intr,
            max_exc: cfg.max_exc,
            bugs: if bugs.is_empty() { "none".into() } else { bugs.join(",") },
            vaco: cfg.vaco,
            relations: cfg.relations,
            seed_selection: cfg.seed_selection,
            mutation_strategies: cfg.mutation_strategies,
            simple_cap: cfg.simple_cap,
            max_iter: cfg.max_iter,
            vaco_window: cfg.vaco_window,
            exec_budget: cfg.exec_budget,
        }
    }

    pub fn to_campaign(&self) -> Result<CampaignConfig> {
        Ok(CampaignConfig {
            budget_vsecs: self.budget_secs,
            rng_seed: self.rng_seed,
            rho: self.rho,
            omega: self.omega,
            len_threshold: self.len_threshold,
            intr_prob: self.intr_prob,
            max_intr: self.max_intr,
            max_exc: self.max_exc,
            bugs: BugCatalog::parse(&self.bugs).map_err(|e| anyhow!(e))?,
            vaco: self.vaco,
            relations: self.relations,
            seed_selection: self.seed_selection,
            mutation_strategies: self.mutation_strategies,
            simple_cap: self.simple_cap,
            max_iter: self.max_iter,
            vaco_window: self.vaco_window,
            exec_budget: self.exec_budget,
            initial_seeds: Vec::new(),
        })
    }
}

/// Parse a budget like `24h`, `30m`, `10min`, `90s`, or plain seconds,
/// into virtual seconds.
pub fn parse_budget(s: &str) -> Result<u64> {
    let s = s.trim();
    let (num, unit) = match s.find(|c: char| !c.is_ascii_digit()) {
        Some(i) => s.split_at(i),
        None => (s, "s"),
    };
    let n: u64 = num.parse().with_context(|| format!("bad budget `{s}`"))?;
    let mult = match unit.trim() {
        "s" | "sec" | "secs" => 1,
        "m" | "min" | "mins" => 60,
        "h" | "hr" | "hrs" => 3600,
        other => bail!("bad budget unit `{other}` in `{s}`"),
    };
    Ok(n * mult)
}

/// Parse an RNG seed, accepting decimal or 0x-prefixed hex.
pub fn parse_seed(s: &str) -> Result<u64> {
    let s = s.trim();
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u64::from_str_radix(hex, 16).with_context(|| format!("bad rng seed `{s}`"))
    } else {
        s.parse().with_context(|| format!("bad rng seed `{s}`"))
    }
}

/// Load every corpus file (`*.txt`) from a directory, sorted by name.
pub fn load_seed_dir(dir: &Path, cfg: &CampaignConfig) -> Result<Vec<InputSequence>> {
    let mut names: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("reading seed dir {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    names.sort();
    let mut seeds = Vec::new();
    for path in names {
        let text =
            std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let seq = InputSequence::parse_text_with_limits(&text, cfg.limits())
            .map_err(|e| anyhow!("{}: {e}", path.display()))?;
        seeds.push(seq);
    }
    Ok(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_forms() {
        assert_eq!(parse_budget("24h").unwrap(), 86_400);
        assert_eq!(parse_budget("30m").unwrap(), 1_800);
        assert_eq!(parse_budget("10min").unwrap(), 600);
        assert_eq!(parse_budget("90s").unwrap(), 90);
        assert_eq!(parse_budget("120").unwrap(), 120);
        assert!(parse_budget("5 fortnights").is_err());
    }

    #[test]
    fn seed_forms() {
        assert_eq!(parse_seed("0xC0FFEE").unwrap(), 0xC0FFEE);
        assert_eq!(parse_seed("42").unwrap(), 42);
        assert!(parse_seed("zzz").is_err());
    }

    #[test]
    fn config_doc_round_trip() {
        let mut cfg = CampaignConfig::default();
        cfg.bugs = BugCatalog::parse("B1,B5,B12").unwrap();
        cfg.simple_cap = Some(1000);
        let doc = ConfigDoc::from_campaign(&cfg);
        let json = serde_json::to_string(&doc).unwrap();
        let back: ConfigDoc = serde_json::from_str(&json).unwrap();
        let cfg2 = back.to_campaign().unwrap();
        assert_eq!(cfg.budget_vsecs, cfg2.budget_vsecs);
        assert_eq!(cfg.bugs, cfg2.bugs);
        assert_eq!(cfg.simple_cap, cfg2.simple_cap);
    }
}
