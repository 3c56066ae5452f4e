use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::cv::ClassificationReport;
use crate::attackgen::ScenarioMetadata;
use crate::classify::{ClassifierKind, TrainingMeta};
use crate::error::{Error, Result};
use crate::recommend::ImpactMetrics;

pub const REPORT_FORMAT: &str = "tagshield-report";
pub const REPORT_VERSION: u32 = 1;

/// Mean, population standard deviation, and range across runs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    /// `None` for an empty sample.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // Summation error can push the mean of equal values past them.
        let mean = (values.iter().sum::<f64>() / n).clamp(min, max);
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            min,
            max,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FScores {
    pub overall: Stat,
    pub legitimate: Stat,
    pub bogus: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationSummary {
    pub classifier: ClassifierKind,
    pub fscore: FScores,
    pub per_run: Vec<ClassificationReport>,
}

impl ClassificationSummary {
    pub fn new(classifier: ClassifierKind, per_run: Vec<ClassificationReport>) -> Self {
        let stat = |f: fn(&ClassificationReport) -> f64| {
            let v: Vec<f64> = per_run.iter().map(f).collect();
            Stat::of(&v).expect("at least one run")
        };
        ClassificationSummary {
            classifier,
            fscore: FScores {
                overall: stat(|r| r.overall),
                legitimate: stat(|r| r.legitimate.fscore),
                bogus: stat(|r| r.bogus.fscore),
            },
            per_run,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactSummary {
    pub affected_fraction: Stat,
    /// Over runs where the bogus resource reached some top-k list.
    pub avg_bogus_rank: Option<Stat>,
    pub coverage: Stat,
    pub per_run: Vec<ImpactMetrics>,
}

impl ImpactSummary {
    pub fn new(per_run: Vec<ImpactMetrics>) -> Self {
        let fractions: Vec<f64> = per_run.iter().map(|m| m.affected_fraction).collect();
        let ranks: Vec<f64> = per_run.iter().filter_map(|m| m.avg_bogus_rank).collect();
        let coverage: Vec<f64> = per_run.iter().map(|m| m.coverage).collect();
        ImpactSummary {
            affected_fraction: Stat::of(&fractions).expect("at least one run"),
            avg_bogus_rank: Stat::of(&ranks),
            coverage: Stat::of(&coverage).expect("at least one run"),
            per_run,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpactCell {
    pub classifier: ClassifierKind,
    pub attack_size: f64,
    pub before: ImpactSummary,
    pub after: ImpactSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub posts: usize,
    pub users: usize,
    pub resources: usize,
    pub vocabulary: usize,
    pub fingerprint: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub sampling: u64,
    pub attack_train: u64,
    pub attack_test: u64,
    pub cv: u64,
    pub model: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub classifier: ClassifierKind,
    pub seed: u64,
    pub meta: TrainingMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seeds: RunSeeds,
    pub users: usize,
    pub legitimate_posts: usize,
    pub training_posts: usize,
    pub training_bogus: usize,
    pub training: Vec<TrainingRecord>,
    pub scenarios: Vec<ScenarioMetadata>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub config: ExperimentConfig,
    pub corpus: CorpusSummary,
    pub classification: Vec<ClassificationSummary>,
    pub impact: Vec<ImpactCell>,
    pub runs: Vec<RunRecord>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ExperimentReport = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::invalid(format!("unsupported report {} v{}", r.format, r.version)));
        }
        Ok(r)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn classification(&self, kind: ClassifierKind) -> Option<&ClassificationSummary> {
        self.classification.iter().find(|c| c.classifier == kind)
    }

    pub fn impact(&self, kind: ClassifierKind, attack_size: f64) -> Option<&ImpactCell> {
        self.impact
            .iter()
            .find(|c| c.classifier == kind && c.attack_size == attack_size)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Tsv,
}

impl TableFormat {
    fn delimiter(self) -> u8 {
        match self {
            TableFormat::Csv => b',',
            TableFormat::Tsv => b'\t',
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            TableFormat::Csv => "csv",
            TableFormat::Tsv => "tsv",
        }
    }
}

impl std::str::FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "tsv" => Ok(TableFormat::Tsv),
            other => Err(Error::invalid(format!("unknown table format `{other}` (expected csv or tsv)"))),
        }
    }
}

fn num(x: f64) -> String {
    x.to_string()
}

/// One row per classifier with mean F-scores across runs.
pub fn write_classification_table<W: Write>(report: &ExperimentReport, format: TableFormat, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(out);
    w.write_record([
        "classifier",
        "overall_f",
        "legitimate_f",
        "bogus_f",
        "overall_f_std",
        "legitimate_f_std",
        "bogus_f_std",
        "runs",
    ])?;
    for c in &report.classification {
        let f = &c.fscore;
        w.write_record([
            c.classifier.as_str().to_string(),
            num(f.overall.mean),
            num(f.legitimate.mean),
            num(f.bogus.mean),
            num(f.overall.std),
            num(f.legitimate.std),
            num(f.bogus.std),
            c.per_run.len().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

/// One row per (classifier, attack size, before/after). An undefined
/// average rank is an empty cell.
pub fn write_impact_table<W: Write>(report: &ExperimentReport, format: TableFormat, out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(format.delimiter()).from_writer(out);
    w.write_record([
        "classifier",
        "attack_size",
        "phase",
        "affected_fraction",
        "affected_fraction_std",
        "avg_bogus_rank",
        "coverage",
    ])?;
    for cell in &report.impact {
        for (phase, s) in [("before", &cell.before), ("after", &cell.after)] {
            w.write_record([
                cell.classifier.as_str().to_string(),
                num(cell.attack_size),
                phase.to_string(),
                num(s.affected_fraction.mean),
                num(s.affected_fraction.std),
                s.avg_bogus_rank.map(|r| num(r.mean)).unwrap_or_default(),
                num(s.coverage.mean),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<table>", e))?;
    Ok(())
}

pub fn scenario_file_name(run: usize, attack_size: f64) -> String {
    format!("run{run:02}-size{attack_size}.json")
}

/// Write `report.json`, `classification.csv`, `impact.csv`, and one
/// metadata file per test scenario under `scenario-metadata/`.
pub fn emit_report(report: &ExperimentReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    let meta_dir = dir.join("scenario-metadata");
    fs::create_dir_all(&meta_dir).map_err(|e| Error::io(&meta_dir, e))?;

    let write = |name: &str, bytes: Vec<u8>| {
        let p = dir.join(name);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    write("report.json", report.to_json()?.into_bytes())?;
    let mut buf = Vec::new();
    write_classification_table(report, TableFormat::Csv, &mut buf)?;
    write("classification.csv", buf)?;
    let mut buf = Vec::new();
    write_impact_table(report, TableFormat::Csv, &mut buf)?;
    write("impact.csv", buf)?;

    for run in &report.runs {
        for s in &run.scenarios {
            let p = meta_dir.join(scenario_file_name(run.run, s.attack_size));
            let text = serde_json::to_string_pretty(s)? + "\n";
            fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_basics() {
        assert!(Stat::of(&[]).is_none());
        let s = Stat::of(&[0.1, 0.1, 0.1]).unwrap();
        assert_eq!(s.mean, 0.1);
        assert_eq!(s.std, 0.0);
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.min, s.max), (2.0, 1.0, 1.0, 3.0));
    }

    #[test]
    fn formats() {
        assert_eq!("tsv".parse::<TableFormat>().unwrap(), TableFormat::Tsv);
        assert!("xlsx".parse::<TableFormat>().is_err());
    }
}
