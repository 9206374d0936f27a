use std::fs;
use std::path::{Path, PathBuf};

use lora_squeeze::checkpoint::{
    expand_checkpoint, read_checkpoint, squeeze_checkpoint, write_checkpoint, AdapterCheckpoint,
};
use lora_squeeze::retention::{aggregate_report, retention_curves};
use lora_squeeze::schedule::{plan_min_steps, plan_standard, rank_ladder, AnnealingSchedule};
use lora_squeeze::squeeze::core_spectrum;
use lora_squeeze::{
    estimate_flops, format_sig, CoreSvd, FlopBackend, RsvdConfig, SqueezeMethod, SqueezeReport,
};
use serde_json::json;

use crate::{
    AnalyzeArgs, CliError, Command, ExpandArgs, FlopsArgs, InspectArgs, InspectFormat, Method,
    PlanArgs, PlanScheme, ReportFormat, SqueezeArgs,
};

pub fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Squeeze(args) => squeeze(args),
        Command::Expand(args) => expand(args),
        Command::Analyze(args) => analyze(args),
        Command::Plan(args) => plan(args),
        Command::Flops(args) => flops(args),
        Command::Experiment(args) => crate::experiment::run(args),
        Command::Inspect(args) => inspect(args),
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Writes through a temporary sibling so a failed run leaves nothing behind.
fn stage_file(path: &Path, contents: &str) -> Result<PathBuf, CliError> {
    let mut name = path
        .file_name()
        .ok_or_else(|| CliError::Validation(format!("{} is not a file path", path.display())))?
        .to_os_string();
    name.push(".partial");
    let tmp = path.with_file_name(name);
    fs::write(&tmp, contents).map_err(|e| io_error(&tmp, e))?;
    Ok(tmp)
}

fn commit_file(tmp: &Path, path: &Path) -> Result<(), CliError> {
    fs::rename(tmp, path).map_err(|e| io_error(path, e))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    let tmp = stage_file(path, contents)?;
    commit_file(&tmp, path)
}

/// Writes the checkpoint and, if asked, the report; neither appears unless
/// both could be written.
fn write_outputs(
    ckpt: &AdapterCheckpoint,
    output: &Path,
    reports: &[SqueezeReport],
    report_path: Option<&Path>,
) -> Result<(), CliError> {
    let staged = match report_path {
        Some(path) => {
            let text = serde_json::to_string_pretty(reports).expect("reports serialize");
            Some((stage_file(path, &(text + "\n"))?, path))
        }
        None => None,
    };
    if let Err(e) = write_checkpoint(ckpt, output) {
        if let Some((tmp, _)) = &staged {
            let _ = fs::remove_file(tmp);
        }
        return Err(e.into());
    }
    if let Some((tmp, path)) = staged {
        commit_file(&tmp, path)?;
    }
    Ok(())
}

fn check_rank_fits(ckpt: &AdapterCheckpoint, rank: usize) -> Result<(), CliError> {
    for t in &ckpt.tensors {
        let (m, n) = t.delta_shape();
        if rank > m.min(n) {
            return Err(CliError::Validation(format!(
                "--rank {rank} exceeds min({m}, {n}) for tensor `{}`",
                t.name
            )));
        }
    }
    Ok(())
}

fn source_rank_label(ckpt: &AdapterCheckpoint) -> String {
    match ckpt.rank() {
        Some(r) => r.to_string(),
        None if ckpt.tensors.is_empty() => "-".into(),
        None => "mixed".into(),
    }
}

fn squeeze(args: SqueezeArgs) -> Result<(), CliError> {
    let ckpt = read_checkpoint(&args.input)?;
    let rank = args.rank as usize;
    check_rank_fits(&ckpt, rank)?;
    let cfg = RsvdConfig {
        oversampling: args.oversampling,
        power_iterations: args.power_iters,
        seed: args.seed,
    };
    let method = match args.method {
        Method::Full => SqueezeMethod::FullSvd,
        Method::Rsvd => SqueezeMethod::Rsvd(cfg),
        Method::Efficient => SqueezeMethod::Efficient(CoreSvd::Full),
    };
    let (out, reports) = squeeze_checkpoint(&ckpt, rank, &method, args.seed)?;
    write_outputs(&out, &args.output, &reports, args.report.as_deref())?;

    println!(
        "squeezed {} tensors from rank {} to rank {rank} ({})",
        reports.len(),
        source_rank_label(&ckpt),
        method.label()
    );
    if let Some(worst) = reports
        .iter()
        .max_by(|a, b| a.discarded_energy.total_cmp(&b.discarded_energy))
    {
        let mean = reports.iter().map(|r| r.discarded_energy).sum::<f64>() / reports.len() as f64;
        println!(
            "discarded energy: mean {}, max {} ({})",
            format_sig(mean),
            format_sig(worst.discarded_energy),
            worst.tensor
        );
    }
    let lower = reports
        .iter()
        .filter(|r| r.discarded_energy_is_lower_bound)
        .count();
    if lower > 0 {
        println!("discarded energy is a lower bound for {lower} tensors (partial sketch)");
    }
    let clamped = reports.iter().filter(|r| r.rsvd_clamped).count();
    if clamped > 0 {
        eprintln!("warning: sketch width clamped to the matrix size for {clamped} tensors");
    }
    if reports.iter().any(|r| r.rsvd_degraded) {
        eprintln!("warning: randomized SVD ran without oversampling or power iterations");
    }
    Ok(())
}

fn expand(args: ExpandArgs) -> Result<(), CliError> {
    let ckpt = read_checkpoint(&args.input)?;
    let rank = args.rank as usize;
    check_rank_fits(&ckpt, rank)?;
    if let Some(t) = ckpt.tensors.iter().find(|t| t.rank() > rank) {
        return Err(CliError::Validation(format!(
            "--rank {rank} is below the rank {} of tensor `{}`; use `squeeze`",
            t.rank(),
            t.name
        )));
    }
    let (out, reports) = expand_checkpoint(&ckpt, rank)?;
    write_checkpoint(&out, &args.output)?;
    println!(
        "expanded {} tensors from rank {} to rank {rank}",
        reports.len(),
        source_rank_label(&ckpt)
    );
    Ok(())
}

fn parse_ranks(spec: &str, ckpt: &AdapterCheckpoint) -> Result<Vec<usize>, CliError> {
    if spec == "all-halvings" {
        // Mixed-rank checkpoints share the ladder of their smallest tensor.
        return match ckpt.tensors.iter().map(|t| t.rank()).min() {
            Some(r) => Ok(rank_ladder(r, 1)?),
            None => Ok(Vec::new()),
        };
    }
    spec.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .ok()
                .filter(|&r| r > 0)
                .ok_or_else(|| {
                    CliError::Validation(format!(
                        "--ranks: `{s}` is not a positive integer (expected a list such as 8,4,2 or `all-halvings`)"
                    ))
                })
        })
        .collect()
}

fn analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    if !args.threshold.is_finite() {
        return Err(CliError::Validation("--threshold must be finite".into()));
    }
    let ckpt = read_checkpoint(&args.input)?;
    let ranks = parse_ranks(&args.ranks, &ckpt)?;
    if let Some(t) = ckpt
        .tensors
        .iter()
        .find(|t| ranks.iter().any(|&r| r > t.rank()))
    {
        return Err(CliError::Validation(format!(
            "--ranks: requested rank {} exceeds the rank {} of tensor `{}`",
            ranks.iter().max().unwrap(),
            t.rank(),
            t.name
        )));
    }
    let report = aggregate_report(retention_curves(&ckpt.tensors, &ranks)?, args.threshold)?;
    match args.format {
        ReportFormat::Csv => print!("{}", report.to_csv()),
        ReportFormat::Structured => println!("{}", report.to_json()),
    }
    if !report.flagged_ranks.is_empty() {
        let list: Vec<String> = report.flagged_ranks.iter().map(|r| r.to_string()).collect();
        eprintln!(
            "note: mean retention below {} at ranks {}",
            format_sig(args.threshold),
            list.join(", ")
        );
    }
    Ok(())
}

fn plan(args: PlanArgs) -> Result<(), CliError> {
    let ladder = rank_ladder(args.start_rank as usize, args.end_rank as usize)
        .map_err(|e| CliError::Validation(format!("--end-rank: {e}")))?;
    let schedule = match args.scheme {
        PlanScheme::Standard => plan_standard(&ladder, args.total_steps),
        PlanScheme::MinSteps => plan_min_steps(&ladder, args.total_steps, args.min_steps),
    }
    .map_err(|e| CliError::Validation(format!("--total-steps: {e}")))?;
    if let Some(path) = &args.output {
        write_file(path, &(schedule.to_json() + "\n"))?;
    }
    print_schedule(&schedule);
    if schedule.warning {
        eprintln!(
            "warning: {} steps cannot give {} stages {} steps each; floor lowered to {}",
            schedule.total_steps,
            schedule.stages.len(),
            args.min_steps,
            schedule.applied_min_steps.unwrap_or(0)
        );
    }
    Ok(())
}

fn print_schedule(schedule: &AnnealingSchedule) {
    println!("stage  rank  steps");
    for (i, s) in schedule.stages.iter().enumerate() {
        println!("{:>5}  {:>4}  {:>5}", i + 1, s.rank, s.steps);
    }
    println!("total        {:>5}", schedule.total_steps);
}

/// Three significant figures with a K/M/B/T suffix.
fn human(x: f64) -> String {
    const SUFFIXES: [&str; 5] = ["", "K", "M", "B", "T"];
    let mut tier = 0;
    let mut v = x;
    while v >= 999.5 && tier < SUFFIXES.len() - 1 {
        v /= 1000.0;
        tier += 1;
    }
    if tier == 0 && v.fract() == 0.0 {
        return format!("{v}");
    }
    let digits = if v >= 99.95 {
        0
    } else if v >= 9.995 {
        1
    } else {
        2
    };
    format!("{v:.digits$}{}", SUFFIXES[tier])
}

fn flops(args: FlopsArgs) -> Result<(), CliError> {
    let min_dim = args.m.min(args.n);
    if args.target_rank > min_dim {
        return Err(CliError::Validation(format!(
            "--target-rank {} exceeds min(m, n) = {min_dim}",
            args.target_rank
        )));
    }
    let est = |backend| {
        estimate_flops(
            args.m as usize,
            args.n as usize,
            args.source_rank as usize,
            args.target_rank as usize,
            args.oversampling as usize,
            backend,
        )
    };
    let rows = [
        ("full-svd", est(FlopBackend::FullSvd)),
        ("rsvd", est(FlopBackend::Rsvd)),
        ("efficient", est(FlopBackend::Efficient)),
    ];
    println!(
        "{:<10} {:>22} {:>12} {:>8}",
        "backend", "flops", "sig6", "approx"
    );
    for (name, e) in rows {
        let d = e.decomposition;
        println!("{name:<10} {d:>22.0} {:>12} {:>8}", format_sig(d), human(d));
    }
    let s = rows[0].1.reconstruction;
    println!(
        "{:<10} {s:>22.0} {:>12} {:>8}",
        "surcharge",
        format_sig(s),
        human(s)
    );
    println!("surcharge: forming the m x n update first, paid by full-svd and rsvd");
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<(), CliError> {
    let ckpt = read_checkpoint(&args.input)?;
    let norms = ckpt
        .tensors
        .iter()
        .map(|t| Ok(core_spectrum(t)?.iter().map(|s| s * s).sum::<f64>().sqrt()))
        .collect::<Result<Vec<f64>, lora_squeeze::Error>>()?;
    match args.format {
        InspectFormat::Structured => {
            let tensors: Vec<_> = ckpt
                .tensors
                .iter()
                .zip(&norms)
                .map(|(t, norm)| {
                    let (m, n) = t.delta_shape();
                    json!({"name": t.name, "rows": m, "cols": n, "rank": t.rank(), "delta_norm": norm})
                })
                .collect();
            let doc = json!({
                "format_version": ckpt.format_version,
                "base_model": ckpt.base_model,
                "alpha": ckpt.alpha,
                "rank": ckpt.rank(),
                "heterogeneous": ckpt.heterogeneous,
                "tensors": tensors,
                "provenance": ckpt.provenance,
            });
            println!(
                "{}",
                serde_json::to_string_pretty(&doc).expect("serializes")
            );
        }
        InspectFormat::Text => {
            println!("format version  {}", ckpt.format_version);
            println!(
                "base model      {}",
                ckpt.base_model.as_deref().unwrap_or("-")
            );
            println!("alpha           {}", format_sig(ckpt.alpha));
            println!("rank            {}", source_rank_label(&ckpt));
            println!("heterogeneous   {}", ckpt.heterogeneous);
            println!("tensors         {}", ckpt.tensors.len());
            if !ckpt.tensors.is_empty() {
                let width = ckpt
                    .tensors
                    .iter()
                    .map(|t| t.name.len())
                    .max()
                    .unwrap()
                    .max(4);
                println!();
                println!(
                    "{:<width$}  {:>11}  {:>4}  {:>12}",
                    "name", "shape", "rank", "norm"
                );
                for (t, norm) in ckpt.tensors.iter().zip(&norms) {
                    let (m, n) = t.delta_shape();
                    println!(
                        "{:<width$}  {:>11}  {:>4}  {:>12}",
                        t.name,
                        format!("{m}x{n}"),
                        t.rank(),
                        format_sig(*norm)
                    );
                }
            }
            if !ckpt.provenance.is_empty() {
                println!();
                println!("provenance");
                for (i, p) in ckpt.provenance.iter().enumerate() {
                    let seed = p.seed.map_or("-".to_string(), |s| s.to_string());
                    println!(
                        "{:>3}. {} {} {} -> {} seed {seed}",
                        i + 1,
                        p.operation,
                        p.method,
                        p.source_rank,
                        p.target_rank
                    );
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::human;

    #[test]
    fn human_readable_counts() {
        assert_eq!(human(8_589_934_592.0), "8.59B");
        assert_eq!(human(75_497_472.0), "75.5M");
        assert_eq!(human(16_777_216.0), "16.8M");
        assert_eq!(human(268_435_456.0), "268M");
        assert_eq!(human(1.0), "1");
        assert_eq!(human(999_600.0), "1.00M");
        assert_eq!(human(0.5), "0.50");
    }
}
