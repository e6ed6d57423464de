//! Report emission: stats.csv, summary.json, the corpus directory, and
//! per-mismatch JSON files. Every writer is byte-stable for a fixed
//! campaign result so rerun outputs diff clean.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::json;

use minifuzz_core::fuzzer::{CampaignConfig, CampaignResult};

use crate::ConfigDoc;

pub const STATS_HEADER: &str =
    "timestamp,coverage,mean_len,execs,mismatches,ist_distinct,est_distinct,vaco_trigger";

/// Render stats.csv with a fixed column order and header.
pub fn render_stats_csv(result: &CampaignResult) -> String {
    let mut out = String::with_capacity(64 + result.stats.rows.len() * 48);
    out.push_str(STATS_HEADER);
    out.push('\n');
    for r in &result.stats.rows {
        let _ = writeln!(
            out,
            "{},{},{:.3},{},{},{},{},{}",
            r.t_secs,
            r.coverage,
            r.mean_len,
            r.execs,
            r.mismatches,
            r.ist_distinct,
            r.est_distinct,
            r.vaco_trigger as u8
        );
    }
    out
}

/// Render summary.json: the verbatim config plus final scalars.
pub fn render_summary(cfg: &CampaignConfig, result: &CampaignResult) -> String {
    let speed = if result.elapsed_vsecs > 0 {
        result.execs as f64 / result.elapsed_vsecs as f64
    } else {
        0.0
    };
    let doc = json!({
        "config": ConfigDoc::from_campaign(cfg),
        "results": {
            "coverage": result.coverage,
            "execs": result.execs,
            "raw_mismatches": result.raw_mismatches,
            "distinct_mismatches": result.mismatches.len(),
            "corpus_size": result.corpus.len(),
            "corpus_mean_len": result.corpus_mean_len,
            "executed_mean_len": result.executed_mean_len,
            "ist_distinct": result.ist_distinct,
            "est_distinct": result.est_distinct,
            "distill_invocations": result.distill_invocations,
            "elapsed_vsecs": result.elapsed_vsecs,
            "speed_execs_per_vsec": speed,
        },
    });
    serde_json::to_string_pretty(&doc).expect("summary serializes")
}

/// Write the full report tree under `dir`.
pub fn write_report(dir: &Path, cfg: &CampaignConfig, result: &CampaignResult) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("stats.csv"), render_stats_csv(result))
        .with_context(|| format!("writing stats.csv in {}", dir.display()))?;
    fs::write(dir.join("summary.json"), render_summary(cfg, result))
        .with_context(|| format!("writing summary.json in {}", dir.display()))?;

    let corpus = dir.join("corpus");
    fs::create_dir_all(&corpus)?;
    for rec in &result.corpus {
        let name = format!("{:06}_{:016x}.txt", rec.id, rec.seq.content_hash());
        let mut text = format!("# id={} cov={} len={}\n", rec.id, rec.cov, rec.len);
        text.push_str(&rec.seq.to_text());
        fs::write(corpus.join(name), text)?;
    }

    let mm = dir.join("mismatches");
    fs::create_dir_all(&mm)?;
    for report in &result.mismatches {
        let fields: Vec<_> = report
            .fields
            .iter()
            .map(|f| json!({ "field": f.name, "golden": f.golden, "dut": f.dut }))
            .collect();
        let doc = json!({
            "dedup_key": format!("{:016x}", report.dedup_key),
            "first_divergence_pc": report.first_divergence_pc,
            "fields": fields,
            "input": report.input.to_text(),
        });
        fs::write(
            mm.join(format!("{:016x}.json", report.dedup_key)),
            serde_json::to_string_pretty(&doc).expect("report serializes"),
        )?;
    }
    Ok(())
}
