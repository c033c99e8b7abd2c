//! Report rows and the CSV/JSON writer.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{histogram_in, median};
use crate::attacks::AttackResult;
use crate::error::{Error, Result};

/// One (seed, method, source, target) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub method: String,
    pub source: String,
    pub target: String,
    pub asr: f64,
    pub mad: f64,
    pub rmsd: f64,
    pub epsilon: f64,
    pub steps: usize,
    /// Fixed γ for scaled steps; empty for sign and adaptive rules.
    pub gamma: Option<f64>,
    pub examples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRow {
    pub seed: u64,
    pub example_id: usize,
    pub method: String,
    pub source: String,
    pub target: String,
    pub success: bool,
    pub linf: f64,
    pub mad: f64,
    pub rmsd: f64,
    pub steps_used: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub seed: u64,
    pub method: String,
    pub source: String,
    pub target: String,
    pub epsilon: f64,
    pub asr: f64,
    pub mad: f64,
    pub rmsd: f64,
}

/// Sampled mean pairwise interaction of one perturbation on its source model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRow {
    pub seed: u64,
    pub method: String,
    pub source: String,
    pub example_id: usize,
    pub value: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub method: String,
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub seed: u64,
    pub name: String,
    pub kind: String,
    pub origin: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma: f64,
    pub asr: f64,
    pub mad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaSelection {
    pub seed: u64,
    pub attack: String,
    pub source: String,
    pub gamma: f64,
    /// Validation MAD of the `mad_below` method, if one was set.
    pub reference_mad: Option<f64>,
    pub grid: Vec<GridPoint>,
}

/// Spread of the γ_t an adaptive attack actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorStats {
    pub seed: u64,
    pub attack: String,
    pub source: String,
    pub mean: f64,
    /// Population standard deviation over every (example, step).
    pub std: f64,
    /// Standard deviation of γ_0 across examples.
    pub first_step_std: f64,
    pub min: f64,
    pub max: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt())
}

impl GeneratorStats {
    pub fn from_results(seed: u64, attack: &str, source: &str, results: &[AttackResult]) -> Self {
        let all: Vec<f64> = results.iter().flat_map(|r| r.step_sizes.iter().copied()).collect();
        let first: Vec<f64> = results.iter().filter_map(|r| r.step_sizes.first().copied()).collect();
        let (mean, std) = mean_std(&all);
        Self {
            seed,
            attack: attack.to_string(),
            source: source.to_string(),
            mean,
            std,
            first_step_std: mean_std(&first).1,
            min: all.iter().copied().fold(f64::INFINITY, f64::min),
            max: all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-(method, source, target) summary over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub source: String,
    pub target: String,
    pub seeds: usize,
    pub asr_mean: f64,
    pub asr_min: f64,
    pub asr_max: f64,
    pub mad_mean: f64,
    pub rmsd_mean: f64,
}

/// Groups in first-appearance order.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(&str, &str, &str)> = Vec::new();
    for r in rows {
        let k = (r.method.as_str(), r.source.as_str(), r.target.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(m, s, t)| {
            let group: Vec<&MetricsRow> =
                rows.iter().filter(|r| r.method == m && r.source == s && r.target == t).collect();
            let n = group.len() as f64;
            AggregateRow {
                method: m.to_string(),
                source: s.to_string(),
                target: t.to_string(),
                seeds: group.len(),
                asr_mean: group.iter().map(|r| r.asr).sum::<f64>() / n,
                asr_min: group.iter().map(|r| r.asr).fold(f64::INFINITY, f64::min),
                asr_max: group.iter().map(|r| r.asr).fold(f64::NEG_INFINITY, f64::max),
                mad_mean: group.iter().map(|r| r.mad).sum::<f64>() / n,
                rmsd_mean: group.iter().map(|r| r.rmsd).sum::<f64>() / n,
            }
        })
        .collect()
}

pub fn interaction_medians(rows: &[InteractionRow]) -> BTreeMap<String, f64> {
    let mut by_method: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_method.entry(r.method.clone()).or_default().push(r.value);
    }
    by_method
        .into_iter()
        .filter_map(|(m, v)| median(&v).map(|x| (m, x)))
        .collect()
}

/// Interaction histograms per method, pooled over seeds and sources, on bin
/// edges shared by every method.
pub fn histogram_rows(rows: &[InteractionRow], bins: usize) -> Result<Vec<HistogramRow>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let lo = rows.iter().map(|r| r.value).fold(f64::INFINITY, f64::min);
    let hi = rows.iter().map(|r| r.value).fold(f64::NEG_INFINITY, f64::max);
    let mut methods: Vec<&str> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let mut out = Vec::new();
    for m in methods {
        let values: Vec<f64> = rows.iter().filter(|r| r.method == m).map(|r| r.value).collect();
        for b in histogram_in(&values, bins, lo, hi)? {
            out.push(HistogramRow {
                method: m.to_string(),
                bin_left: b.left,
                bin_right: b.right,
                count: b.count,
            });
        }
    }
    Ok(out)
}

/// Everything an experiment produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<MetricsRow>,
    pub examples: Vec<ExampleRow>,
    pub sweep: Vec<SweepRow>,
    pub interaction: Vec<InteractionRow>,
    pub histograms: Vec<HistogramRow>,
    pub models: Vec<ModelRecord>,
    pub gammas: Vec<GammaSelection>,
    pub generators: Vec<GeneratorStats>,
    pub summary: serde_json::Value,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `metrics.csv`, `examples.csv`, `summary.json` and, when present,
/// `sweep.csv`, `interaction.csv` and `histogram.csv`. Returns the paths
/// written.
pub fn emit_report(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::arg("report has no metrics rows"));
    }
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&Path) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        f(&path)?;
        written.push(path);
        Ok(())
    };
    put("metrics.csv", &|p| write_csv(p, &report.rows))?;
    put("examples.csv", &|p| write_csv(p, &report.examples))?;
    if !report.sweep.is_empty() {
        put("sweep.csv", &|p| write_csv(p, &report.sweep))?;
    }
    if !report.interaction.is_empty() {
        put("interaction.csv", &|p| write_csv(p, &report.interaction))?;
        put("histogram.csv", &|p| write_csv(p, &report.histograms))?;
    }
    put("summary.json", &|p| {
        let mut text = serde_json::to_string_pretty(&report.summary)?;
        text.push('\n');
        std::fs::write(p, text)?;
        Ok(())
    })?;
    Ok(written)
}

/// Reads a `metrics.csv` written by [`emit_report`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    if !path.exists() {
        return Err(Error::Missing { path: path.to_path_buf() });
    }
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, asr: f64) -> MetricsRow {
        MetricsRow {
            seed,
            method: method.into(),
            source: "a".into(),
            target: "b".into(),
            asr,
            mad: 1.0,
            rmsd: 2.0,
            epsilon: 8.0,
            steps: 10,
            gamma: None,
            examples: 4,
        }
    }

    fn report(rows: Vec<MetricsRow>) -> ExperimentReport {
        ExperimentReport {
            rows,
            summary: serde_json::json!({"seeds": [0]}),
            ..Default::default()
        }
    }

    #[test]
    fn one_row_is_header_plus_one_line() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report(vec![row("bim", 0, 0.5)]), dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "seed,method,source,target,asr,mad,rmsd,epsilon,steps,gamma,examples");
        assert_eq!(lines[1], "0,bim,a,b,0.5,1.0,2.0,8.0,10,,4");
        assert_eq!(read_metrics(&dir.path().join("metrics.csv")).unwrap(), vec![row("bim", 0, 0.5)]);
        assert!(!dir.path().join("sweep.csv").exists());
    }

    #[test]
    fn empty_report_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&report(vec![]), dir.path()).is_err());
    }

    #[test]
    fn unwritable_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("occupied");
        std::fs::write(&file, b"x").unwrap();
        let err = emit_report(&report(vec![row("bim", 0, 0.5)]), &file.join("out")).unwrap_err();
        assert!(matches!(err, Error::Io(_)), "{err}");
    }

    #[test]
    fn aggregate_groups_over_seeds() {
        let agg = aggregate(&[row("bim", 0, 0.2), row("mifgsm", 0, 1.0), row("bim", 1, 0.4)]);
        assert_eq!(agg.len(), 2);
        assert_eq!(agg[0].method, "bim");
        assert_eq!(agg[0].seeds, 2);
        assert!((agg[0].asr_mean - 0.3).abs() < 1e-15);
        assert_eq!((agg[0].asr_min, agg[0].asr_max), (0.2, 0.4));
    }

    #[test]
    fn histograms_share_edges_and_keep_counts() {
        let mk = |method: &str, value| InteractionRow {
            seed: 0,
            method: method.into(),
            source: "a".into(),
            example_id: 0,
            value,
            std_error: 0.0,
        };
        let rows: Vec<InteractionRow> = (0..10)
            .map(|i| mk("x", i as f64))
            .chain((0..5).map(|i| mk("y", -(i as f64))))
            .collect();
        let h = histogram_rows(&rows, 7).unwrap();
        assert_eq!(h.len(), 14);
        for m in ["x", "y"] {
            let bins: Vec<&HistogramRow> = h.iter().filter(|r| r.method == m).collect();
            assert_eq!(bins.first().unwrap().bin_left, -4.0);
            assert_eq!(bins.last().unwrap().bin_right, 9.0);
            for w in bins.windows(2) {
                assert_eq!(w[0].bin_right, w[1].bin_left);
            }
        }
        assert_eq!(h.iter().filter(|r| r.method == "x").map(|r| r.count).sum::<usize>(), 10);
        assert_eq!(h.iter().filter(|r| r.method == "y").map(|r| r.count).sum::<usize>(), 5);
        assert_eq!(interaction_medians(&rows)["y"], -2.0);
    }

    #[test]
    fn generator_stats() {
        let mk = |steps: Vec<f64>| AttackResult {
            adversarial: vec![],
            step_sizes: steps,
            success: vec![],
            final_loss: 0.0,
            steps_used: 2,
            degenerate: false,
        };
        let s = GeneratorStats::from_results(0, "a", "s", &[mk(vec![1.0, 3.0]), mk(vec![3.0, 1.0])]);
        assert_eq!((s.mean, s.std, s.first_step_std, s.min, s.max), (2.0, 1.0, 1.0, 1.0, 3.0));
    }
}
