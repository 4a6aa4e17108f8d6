use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{AggregateRecord, AggregateRow, BatchResult, Comparison, RunRecord};
use super::ExperimentEcho;
use crate::Result;

pub const AGGREGATE_HEADER: &str =
    "t,mean_loss,std_loss,mean_gradsq,std_gradsq,mean_eta,accept_rate,saturate_rate,mean_b";

/// Shortest decimal that round-trips; identical bytes for identical values.
pub fn format_csv_value(x: f64) -> String {
    format!("{x}")
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn push_row(s: &mut String, r: &AggregateRow) {
    let vals = [
        r.mean_loss,
        r.std_loss,
        r.mean_gradsq,
        r.std_gradsq,
        r.mean_eta,
        r.accept_rate,
        r.saturate_rate,
        r.mean_b,
    ];
    let _ = write!(s, "{}", r.t);
    for v in vals {
        s.push(',');
        s.push_str(&format_csv_value(v));
    }
    s.push('\n');
}

/// Writes rows with `t % stride == 0`, plus the final row.
pub fn write_aggregate_csv(path: &Path, agg: &AggregateRecord, stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let mut s = String::with_capacity(128 * (agg.rows.len() / stride + 2));
    s.push_str(AGGREGATE_HEADER);
    s.push('\n');
    let last = agg.rows.len().saturating_sub(1);
    for (i, r) in agg.rows.iter().enumerate() {
        if i % stride == 0 || i == last {
            push_row(&mut s, r);
        }
    }
    fs::write(path, s)?;
    Ok(())
}

/// One JSON object per run, in seed order.
pub fn write_runs_jsonl(path: &Path, runs: &[RunRecord]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in runs {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct BatchSummary<'a> {
    label: &'a str,
    config: &'a ExperimentEcho,
    seeds: &'a [u64],
    final_round: &'a AggregateRow,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_round_moving_average: Option<&'a AggregateRow>,
    mean_accept_rate: f64,
    runs_left_region: usize,
}

/// Writes `<label>.csv`, `<label>_ma<window>.csv` when a window is set,
/// `<label>_summary.json`, and `<label>_runs.jsonl` when `dump_runs`.
pub fn write_batch(dir: &Path, batch: &BatchResult, dump_runs: bool) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let stem = file_stem(&batch.echo.label);
    let stride = batch.echo.telemetry.record_stride;
    let mut written = Vec::new();

    let csv = dir.join(format!("{stem}.csv"));
    write_aggregate_csv(&csv, &batch.aggregate, stride)?;
    written.push(csv);
    if let Some(ma) = &batch.moving_average {
        let path = dir.join(format!("{stem}_ma{}.csv", ma.window.unwrap_or(1)));
        write_aggregate_csv(&path, ma, stride)?;
        written.push(path);
    }

    let n = batch.runs.len() as f64;
    let summary = BatchSummary {
        label: &batch.echo.label,
        config: &batch.echo,
        seeds: &batch.seeds,
        final_round: batch.aggregate.final_row(),
        final_round_moving_average: batch.moving_average.as_ref().map(|m| m.final_row()),
        mean_accept_rate: batch.runs.iter().map(|r| r.summary.accept_rate).sum::<f64>() / n,
        runs_left_region: batch.runs.iter().filter(|r| r.left_region_at.is_some()).count(),
    };
    let path = dir.join(format!("{stem}_summary.json"));
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(&path, json)?;
    written.push(path);

    if dump_runs {
        let path = dir.join(format!("{stem}_runs.jsonl"));
        write_runs_jsonl(&path, &batch.runs)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes `comparison.csv` (per-round mean loss and squared gradient norm of
/// every policy, side by side) and `comparison.json` (final-value ranking).
pub fn write_comparison(dir: &Path, cmp: &Comparison) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut s = String::from("t");
    for c in &cmp.columns {
        let _ = write!(s, ",{0}_mean_loss,{0}_std_loss,{0}_mean_gradsq,{0}_std_gradsq", c.label);
    }
    s.push('\n');
    for t in 0..cmp.horizon {
        let _ = write!(s, "{t}");
        for c in &cmp.columns {
            let r = &c.rows[t];
            for v in [r.mean_loss, r.std_loss, r.mean_gradsq, r.std_gradsq] {
                s.push(',');
                s.push_str(&format_csv_value(v));
            }
        }
        s.push('\n');
    }
    let csv = dir.join("comparison.csv");
    fs::write(&csv, s)?;

    let json_path = dir.join("comparison.json");
    let mut json = serde_json::to_string_pretty(&serde_json::json!({
        "horizon": cmp.horizon,
        "ranking": cmp.ranking,
    }))?;
    json.push('\n');
    fs::write(&json_path, json)?;
    Ok(vec![csv, json_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: usize) -> AggregateRow {
        AggregateRow {
            t,
            mean_loss: -1.5,
            std_loss: 0.0,
            mean_gradsq: 0.1,
            std_gradsq: 1e-20,
            mean_eta: 31.0,
            accept_rate: 1.0,
            saturate_rate: 0.0,
            mean_b: 0.1,
        }
    }

    #[test]
    fn csv_stride_keeps_last_row() {
        let dir = tempfile::tempdir().unwrap();
        let agg = AggregateRecord {
            label: "a".into(),
            runs: 1,
            window: None,
            rows: (0..10).map(row).collect(),
        };
        let path = dir.path().join("a.csv");
        write_aggregate_csv(&path, &agg, 4).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], AGGREGATE_HEADER);
        let ts: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(ts, vec!["0", "4", "8", "9"]);
        assert_eq!(lines[1], "0,-1.5,0,0.1,0.00000000000000000001,31,1,0,0.1");
    }

    #[test]
    fn labels_become_safe_file_names() {
        assert_eq!(file_stem("constant-20"), "constant-20");
        assert_eq!(file_stem("a/b c"), "a_b_c");
    }
}
