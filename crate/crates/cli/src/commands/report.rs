use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde_json::json;

use dialsum_core::eval::{
    aggregate_human, cr_buckets, decile_edges, evaluate as score, paired_ttest, EvalReport, HumanRecord, Significance,
    TTest,
};
use dialsum_core::rouge::{Prf, RougeOptions, RougeScore};

use super::{load_samples, pick, require_file, source_format, usage, write_output};
use crate::manifest::Invocation;
use crate::Ctx;

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Candidate summaries, one per line.
    #[arg(long)]
    pub candidates: PathBuf,
    /// Reference samples; defaults to the config test path.
    #[arg(long)]
    pub refs: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<String>,
    /// Second candidate file; adds paired t-test p-values.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Compression-ratio buckets: `deciles` or comma-separated edges.
    #[arg(long)]
    pub buckets: Option<String>,
    #[arg(long)]
    pub no_stem: bool,
    #[arg(long)]
    pub keep_case: bool,
    /// Write the full report (per-sample scores included) as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn read_lines(path: &Path) -> anyhow::Result<Vec<String>> {
    require_file(path)?;
    let raw = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(raw.lines().map(str::to_string).collect())
}

fn parse_edges(spec: &str, report: &EvalReport) -> anyhow::Result<Vec<f64>> {
    if spec == "deciles" {
        return Ok(decile_edges(&report.samples.iter().map(|s| s.cr).collect::<Vec<_>>()));
    }
    spec.split(',')
        .map(|e| {
            e.trim()
                .parse::<f64>()
                .map_err(|_| usage(format!("bad bucket edge `{e}`")))
        })
        .collect()
}

fn pct(p: Prf) -> f64 {
    100.0 * p.f1
}

fn column(report: &EvalReport, get: fn(&RougeScore) -> Prf) -> Vec<f64> {
    report.samples.iter().map(|s| get(&s.score).f1).collect()
}

pub fn evaluate(ctx: &Ctx, a: EvaluateArgs) -> anyhow::Result<()> {
    let refs = pick(a.refs, ctx.config.data.test.as_ref(), "refs")?;
    let format = source_format(ctx, a.format.as_deref())?;
    let opts = RougeOptions {
        stem: !(a.no_stem || ctx.config.eval.no_stem.unwrap_or(false)),
        keep_case: a.keep_case || ctx.config.eval.keep_case.unwrap_or(false),
    };
    let samples = load_samples(&refs, format)?;
    let candidates = read_lines(&a.candidates)?;
    let mut report = score(&candidates, &samples, opts).context("scoring candidates")?;
    let baseline = match &a.baseline {
        Some(b) => Some(score(&read_lines(b)?, &samples, opts).context("scoring baseline")?),
        None => None,
    };

    type Metric = (&'static str, fn(&RougeScore) -> Prf);
    let metrics: [Metric; 3] = [("R1", |s| s.r1), ("R2", |s| s.r2), ("RL", |s| s.rl)];
    let tests: Option<Vec<TTest>> = baseline
        .as_ref()
        .map(|b| {
            metrics
                .iter()
                .map(|(_, get)| paired_ttest(&column(&report, *get), &column(b, *get)))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    if let (Some(t), Some(b)) = (&tests, &a.baseline) {
        report.significance = Some(Significance {
            baseline: b.display().to_string(),
            t: t[1].t,
            df: t[1].df,
            p_value: t[1].p_value,
        });
    }
    let bucket_spec = a.buckets.or_else(|| ctx.config.eval.buckets.clone());
    if let Some(spec) = &bucket_spec {
        let edges = parse_edges(spec, &report)?;
        report.buckets = cr_buckets(&report, &edges).map_err(|e| usage(e.to_string()))?;
    }

    print!("{:<12} {:>7} {:>7} {:>7}", "system", "R1", "R2", "RL");
    if tests.is_some() {
        print!(" {:>9} {:>9} {:>9}", "p(R1)", "p(R2)", "p(RL)");
    }
    println!();
    let m = report.mean;
    print!(
        "{:<12} {:>7.2} {:>7.2} {:>7.2}",
        "candidates",
        pct(m.r1),
        pct(m.r2),
        pct(m.rl)
    );
    if let Some(t) = &tests {
        print!(" {:>9.4} {:>9.4} {:>9.4}", t[0].p_value, t[1].p_value, t[2].p_value);
    }
    println!();
    if let Some(b) = &baseline {
        let m = b.mean;
        println!(
            "{:<12} {:>7.2} {:>7.2} {:>7.2}",
            "baseline",
            pct(m.r1),
            pct(m.r2),
            pct(m.rl)
        );
    }
    if !report.buckets.is_empty() {
        println!("\n{:>10} {:>10} {:>7} {:>7}", "CR from", "CR to", "n", "R2");
        let edge = |e: Option<f64>| e.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        for b in &report.buckets {
            println!(
                "{:>10} {:>10} {:>7} {:>7.2}",
                edge(b.lo),
                edge(b.hi),
                b.count,
                100.0 * b.mean_rouge2
            );
        }
    }

    let mut inputs = vec![refs.clone(), a.candidates.clone()];
    inputs.extend(a.baseline.clone());
    let mut outputs = Vec::new();
    if let Some(out) = &a.json {
        let body = json!({
            "report": report,
            "baseline_mean": baseline.as_ref().map(|b| b.mean),
            "ttests": tests.as_ref().map(|t| metrics.iter().map(|(n, _)| *n).zip(t.iter()).collect::<Vec<_>>()),
        });
        let refs_in: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
        write_output(out, &serde_json::to_vec_pretty(&body)?, &refs_in)?;
        outputs.push(out.clone());
    }
    let mut inv = Invocation::new(
        "evaluate",
        json!({ "format": format!("{format:?}"), "rouge": opts, "buckets": bucket_spec }),
    );
    for p in &inputs {
        inv.input(p)?;
    }
    inv.write(
        &inv.dir(&ctx.run_dir),
        &outputs,
        json!({ "mean": report.mean, "significance": report.significance, "buckets": report.buckets }),
    )?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    /// Human judgements, one JSON record per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

pub fn kappa(ctx: &Ctx, a: KappaArgs) -> anyhow::Result<()> {
    require_file(&a.input)?;
    let raw = fs::read_to_string(&a.input)?;
    let records = raw
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str::<HumanRecord>(l).with_context(|| format!("line {}", i + 1)))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if records.is_empty() {
        anyhow::bail!("{} contains no records", a.input.display());
    }
    let r = aggregate_human(&records)?;
    println!(
        "samples {}  raters/sample {}  mean score {:.3}",
        r.n_samples, r.raters_per_sample, r.mean_score
    );
    println!("{:<10} {:>8}", "error", "rate");
    for (k, v) in &r.error_rates {
        println!("{:<10} {:>8.3}", k, v);
    }
    println!("{:<10} {:>8}", "kappa", "value");
    for (k, v) in [
        ("score", r.kappa_score),
        ("mis|red", r.kappa_misred),
        ("cor|rea", r.kappa_correa),
    ] {
        println!("{:<10} {:>8.3}", k, v);
    }
    let mut outputs = Vec::new();
    if let Some(out) = &a.json {
        write_output(out, &serde_json::to_vec_pretty(&r)?, &[&a.input])?;
        outputs.push(out.clone());
    }
    let mut inv = Invocation::new("kappa", json!({}));
    inv.input(&a.input)?;
    inv.write(&inv.dir(&ctx.run_dir), &outputs, serde_json::to_value(&r)?)?;
    Ok(())
}
