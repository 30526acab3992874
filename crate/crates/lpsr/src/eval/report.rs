//! Report serialization: evaluation tables as CSV and markdown, the ablation
//! table over the eight flag combinations, and per-sample dumps.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{EvalSuite, MetricsReport};
use crate::trainer::AblationFlags;

/// Frozen column contract for evaluation CSVs.
pub const EVAL_CSV_HEADER: [&str; 7] =
    ["row", "n", "rr_all", "rr_ge6", "rr_ge5", "mean_psnr", "mean_ssim"];

/// Frozen column contract for the ablation CSV.
pub const ABLATION_CSV_HEADER: [&str; 6] =
    ["arch_mod", "gan_style", "lcofl", "rr_all", "rr_ge6", "rr_ge5"];

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

pub fn eval_csv(rows: &[(&str, &MetricsReport)]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let go = || -> std::result::Result<Vec<u8>, csv::Error> {
        w.write_record(EVAL_CSV_HEADER)?;
        for (label, r) in rows {
            w.write_record([
                label.to_string(),
                r.n.to_string(),
                fmt4(r.rr_all),
                fmt4(r.rr_ge6),
                fmt4(r.rr_ge5),
                fmt4(r.mean_psnr),
                fmt4(r.mean_ssim),
            ])?;
        }
        Ok(w.into_inner().expect("vec writer"))
    };
    let bytes = go().map_err(|e| Error::Manifest(format!("eval csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn eval_markdown(suite: &EvalSuite) -> String {
    let mut out = String::new();
    out.push_str("| Input | n | RR (7) | RR (>=6) | RR (>=5) | PSNR (dB) | SSIM |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    for (label, r) in suite.rows() {
        out.push_str(&format!(
            "| {label} | {} | {} | {} | {} | {} | {} |\n",
            r.n,
            fmt4(r.rr_all),
            fmt4(r.rr_ge6),
            fmt4(r.rr_ge5),
            fmt4(r.mean_psnr),
            fmt4(r.mean_ssim)
        ));
    }
    out.push_str("\nPSNR is capped at 100 dB (identical images have infinite PSNR).\n");
    out
}

/// One finished ablation run: its flags and its final test report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRun {
    pub flags: AblationFlags,
    pub report: MetricsReport,
}

/// Order runs ascending by exact-match rate with the all-on configuration
/// forced last, mirroring how component tables are usually presented.
fn ordered(runs: &[AblationRun]) -> Vec<&AblationRun> {
    let mut rest: Vec<&AblationRun> = runs
        .iter()
        .filter(|r| r.flags != AblationFlags::default())
        .collect();
    rest.sort_by(|a, b| a.report.rr_all.total_cmp(&b.report.rr_all));
    rest.extend(runs.iter().filter(|r| r.flags == AblationFlags::default()));
    rest
}

pub fn ablation_csv(runs: &[AblationRun]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Manifest("ablation table needs at least one run".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let go = || -> std::result::Result<Vec<u8>, csv::Error> {
        w.write_record(ABLATION_CSV_HEADER)?;
        for run in ordered(runs) {
            w.write_record([
                run.flags.arch_mod.to_string(),
                run.flags.gan_style.to_string(),
                run.flags.lcofl.to_string(),
                fmt4(run.report.rr_all),
                fmt4(run.report.rr_ge6),
                fmt4(run.report.rr_ge5),
            ])?;
        }
        Ok(w.into_inner().expect("vec writer"))
    };
    let bytes = go().map_err(|e| Error::Manifest(format!("ablation csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

pub fn ablation_markdown(runs: &[AblationRun]) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Manifest("ablation table needs at least one run".into()));
    }
    let mark = |b: bool| if b { "x" } else { " " };
    let mut out = String::new();
    out.push_str("| Arch. mod. | GAN style | LCOFL | RR (7) | RR (>=6) | RR (>=5) |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for run in ordered(runs) {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} |\n",
            mark(run.flags.arch_mod),
            mark(run.flags.gan_style),
            mark(run.flags.lcofl),
            fmt4(run.report.rr_all),
            fmt4(run.report.rr_ge6),
            fmt4(run.report.rr_ge5)
        ));
    }
    Ok(out)
}

pub fn write_suite(dir: &Path, suite: &EvalSuite) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, eval_csv(&suite.rows().map(|(l, r)| (l, r)))?)
        .map_err(|e| Error::io(&csv_path, e))?;
    let md_path = dir.join("report.md");
    fs::write(&md_path, eval_markdown(suite)).map_err(|e| Error::io(&md_path, e))?;
    let json_path = dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(suite)?)
        .map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

/// Collect `ablation.json` files written by finished runs into one table.
pub fn collect_ablation_runs(run_dirs: &[impl AsRef<Path>]) -> Result<Vec<AblationRun>> {
    let mut runs = Vec::with_capacity(run_dirs.len());
    for dir in run_dirs {
        let path = dir.as_ref().join("ablation.json");
        let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        runs.push(serde_json::from_str(&raw)?);
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dummy_report(rr_all: f64) -> MetricsReport {
        MetricsReport {
            rr_all,
            rr_ge6: rr_all,
            rr_ge5: rr_all,
            mean_psnr: 20.0,
            mean_ssim: 0.8,
            n: 10,
            per_sample: Vec::new(),
        }
    }

    #[test]
    fn eval_csv_header_is_frozen() {
        let r = dummy_report(0.5);
        let text = eval_csv(&[("super_resolved", &r)]).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(header, "row,n,rr_all,rr_ge6,rr_ge5,mean_psnr,mean_ssim");
    }

    #[test]
    fn ablation_table_sorts_with_all_on_last() {
        let mut runs: Vec<AblationRun> = AblationFlags::all_combinations()
            .into_iter()
            .enumerate()
            .map(|(i, flags)| AblationRun {
                flags,
                // Give the all-on row a middling score on purpose.
                report: dummy_report(if flags == AblationFlags::default() {
                    0.5
                } else {
                    1.0 - i as f64 * 0.1
                }),
            })
            .collect();
        runs.reverse();
        let csv = ablation_csv(&runs).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 9, "header plus eight rows");
        assert_eq!(lines[0], "arch_mod,gan_style,lcofl,rr_all,rr_ge6,rr_ge5");
        assert!(lines[8].starts_with("true,true,true"), "all-on last: {}", lines[8]);
        // The seven other rows are ascending in rr_all.
        let scores: Vec<f64> = lines[1..8]
            .iter()
            .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
            .collect();
        assert!(scores.windows(2).all(|w| w[0] <= w[1]), "{scores:?}");
    }

    #[test]
    fn empty_ablation_input_is_an_error() {
        assert!(ablation_csv(&[]).is_err());
        assert!(ablation_markdown(&[]).is_err());
    }

    #[test]
    fn markdown_has_one_line_per_run() {
        let runs: Vec<AblationRun> = AblationFlags::all_combinations()
            .into_iter()
            .map(|flags| AblationRun {
                flags,
                report: dummy_report(0.3),
            })
            .collect();
        let md = ablation_markdown(&runs).unwrap();
        assert_eq!(md.lines().count(), 10, "two header lines plus eight rows");
    }
}
