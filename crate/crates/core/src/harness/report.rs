use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::arrivals::format_sig;
use crate::error::{Error, Result};

use super::experiment::ExperimentOutput;

/// Files that depend on wall-clock time and are excluded from
/// reproducibility comparisons.
pub const TIMING_FILE: &str = "timing.csv";

fn num(x: f64) -> String {
    format_sig(x, 12)
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn opt_count(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

type Writer<'a> = Box<dyn FnOnce(&mut dyn Write) -> std::io::Result<()> + 'a>;

fn summary(out: &ExperimentOutput, w: &mut dyn Write) -> std::io::Result<()> {
    let r = &out.report;
    writeln!(
        w,
        "mode,seed,config_hash,arrivals,benchmark_value,offline_objective,offline_iterations,\
offline_converged,offline_residual,online_dual_total,regret_total,regret_average,\
regret_average_realized,regret_bound,offline_revenue,revenue,greedy_revenue,ucb_rounds,segments,\
final_pref_error"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{:.3e},{},{},{},{},{},{},{},{},{},{},{}",
        r.mode.as_str(),
        r.seed,
        r.config_hash,
        r.arrivals,
        opt(r.benchmark_value),
        opt(r.offline_objective),
        r.offline_iterations,
        r.offline_converged,
        r.offline_residual,
        opt(r.online_dual_total),
        opt(r.regret_total),
        opt(r.regret_average),
        opt(r.regret_average_realized),
        opt(r.regret_bound),
        opt(r.offline_revenue),
        opt(r.revenue),
        opt(r.greedy_revenue),
        opt_count(r.ucb_rounds),
        opt_count(r.segments),
        opt(r.pref_error.last().map(|p| p.1)),
    )
}

fn selections(out: &ExperimentOutput, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "item,count")?;
    if out.trace.is_some() {
        for (i, c) in out.report.selections.iter().enumerate() {
            writeln!(w, "{},{c}", i + 1)?;
        }
    }
    Ok(())
}

fn budgets(out: &ExperimentOutput, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "item,initial,remaining,sold")?;
    let r = &out.report;
    for (i, b) in r.initial_budgets.iter().enumerate() {
        let initial = b.finite().map(num).unwrap_or_else(|| "inf".into());
        let remaining = if r.remaining[i].is_finite() { num(r.remaining[i]) } else { "inf".into() };
        writeln!(w, "{},{initial},{remaining},{}", i + 1, r.sales[i])?;
    }
    Ok(())
}

fn pref_error(out: &ExperimentOutput, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "checkpoint,frobenius_to_truth")?;
    for (t, e) in &out.report.pref_error {
        writeln!(w, "{t},{}", num(*e))?;
    }
    Ok(())
}

fn arrivals_hist(out: &ExperimentOutput, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "hour,type,count")?;
    let Some(arr) = &out.arrivals else { return Ok(()) };
    let Some(last) = arr.arrivals.last() else { return Ok(()) };
    let hours = last.time.floor() as usize + 1;
    let mut counts = vec![0u64; hours * out.m];
    for a in &arr.arrivals {
        counts[a.time.floor() as usize * out.m + a.kind] += 1;
    }
    for h in 0..hours {
        for j in 0..out.m {
            writeln!(w, "{h},{},{}", j + 1, counts[h * out.m + j])?;
        }
    }
    Ok(())
}

fn timing(out: &ExperimentOutput, w: &mut dyn Write) -> std::io::Result<()> {
    writeln!(w, "runtime_seconds")?;
    writeln!(w, "{:.6}", out.report.runtime_seconds)
}

/// Writes the report files into `out_dir` and returns their paths.
///
/// Files are first written into a staging directory and then moved into
/// place; on failure everything written so far is removed.
pub fn emit_report(out: &ExperimentOutput, out_dir: &Path, include_trace: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let staging = out_dir.join(".allocsim-staging");
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir(&staging).map_err(|e| Error::io(&staging, e))?;

    let mut files: Vec<(&str, Writer<'_>)> = Vec::new();
    if out.report.mode != super::Mode::SegmentPlan {
        files.push(("summary.csv", Box::new(|w| summary(out, w))));
        files.push(("selections.csv", Box::new(|w| selections(out, w))));
        files.push(("budgets.csv", Box::new(|w| budgets(out, w))));
        files.push(("pref_error.csv", Box::new(|w| pref_error(out, w))));
        files.push(("arrivals_hist.csv", Box::new(|w| arrivals_hist(out, w))));
    }
    files.push((TIMING_FILE, Box::new(|w| timing(out, w))));
    if let Some(trace) = &out.trace {
        if trace.final_estimate.is_some() {
            files.push(("lambda.csv", Box::new(move |w| trace.write_lambda_csv(w))));
        }
        if include_trace {
            files.push(("trace.csv", Box::new(move |w| trace.write_csv(w))));
        }
    }
    if let Some(plan) = &out.plan {
        let m = out.m;
        files.push(("plan.csv", Box::new(move |w| plan.write_csv(w, m))));
    }
    if let (super::Mode::Offline, Some(sol)) = (out.report.mode, &out.offline) {
        files.push(("offline_log.csv", Box::new(move |w| sol.write_log_csv(w))));
    }

    let result = write_staged(&staging, out_dir, files);
    let _ = fs::remove_dir_all(&staging);
    result
}

fn write_staged(staging: &Path, out_dir: &Path, files: Vec<(&str, Writer<'_>)>) -> Result<Vec<PathBuf>> {
    let mut staged = Vec::new();
    for (name, write) in files {
        let path = staging.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut buf = BufWriter::new(file);
        write(&mut buf).and_then(|_| buf.flush()).map_err(|e| Error::io(&path, e))?;
        staged.push(name);
    }
    let mut moved = Vec::new();
    for name in staged {
        let dest = out_dir.join(name);
        if let Err(e) = fs::rename(staging.join(name), &dest) {
            for p in &moved {
                let _ = fs::remove_file(p);
            }
            return Err(Error::io(&dest, e));
        }
        moved.push(dest);
    }
    Ok(moved)
}
