//! Experiment reports: a deterministic JSON document plus an aligned text
//! table with one row per model (regret ± SEM and gain over the baseline).

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{DataBias, ExperimentConfig};
use crate::losses::LossSpec;
use crate::stats::BetaParams;
use crate::trainer::TrainHistory;
use crate::{Error, Result};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const EFFECTIVE_CONFIG: &str = "effective_config.toml";
/// Wall-clock metadata, kept apart so `report.json` is reproducible.
pub const RUN_META: &str = "run_meta.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub loss: LossSpec,
    pub mean_regret: f64,
    /// `None` when only one seed was run.
    pub sem: Option<f64>,
    /// Percent improvement in regret over the baseline variant.
    pub gain_pct: f64,
    pub per_seed_regret: Vec<f64>,
    pub histories: Vec<TrainHistory>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub mean_regret: f64,
    pub sem: Option<f64>,
    pub per_seed_regret: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub rng_algorithm: String,
    pub seeds: Vec<u64>,
    pub data_bias: DataBias,
    pub baseline: String,
    pub configured_beta: BetaParams,
    pub configured_per_type_beta: Option<Vec<BetaParams>>,
    /// Beta MLE of the latent CTRs in each seed's training log.
    pub fitted_beta: Vec<BetaParams>,
    pub uniform_random: RandomBaseline,
    pub variants: Vec<VariantResult>,
    /// Histories of the pointwise scorers that produced biased logs.
    pub pretrain_histories: Vec<TrainHistory>,
    pub effective_config: ExperimentConfig,
}

impl EvalReport {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serialises to JSON");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text, path)
    }
}

fn fmt_regret(mean: f64, sem: Option<f64>) -> String {
    match sem {
        Some(s) => format!("{mean:.5} ± {s:.5}"),
        None => format!("{mean:.5} ± n/a"),
    }
}

/// Plain-text table with columns Model, regret ± SEM and gain.
pub fn render_table(report: &EvalReport) -> String {
    let regret_header = format!("regret ({})", report.data_bias.label());
    let mut rows: Vec<(String, String, String)> = report
        .variants
        .iter()
        .map(|v| (v.name.clone(), fmt_regret(v.mean_regret, v.sem), format!("{:.2}%", v.gain_pct)))
        .collect();
    rows.push((
        "uniform_random".into(),
        fmt_regret(report.uniform_random.mean_regret, report.uniform_random.sem),
        "-".into(),
    ));
    let w0 = rows.iter().map(|r| r.0.chars().count()).chain([5]).max().unwrap();
    let w1 = rows
        .iter()
        .map(|r| r.1.chars().count())
        .chain([regret_header.chars().count()])
        .max()
        .unwrap();
    let w2 = rows.iter().map(|r| r.2.chars().count()).chain([4]).max().unwrap();
    let mut out = String::new();
    let line = |out: &mut String, a: &str, b: &str, c: &str| {
        let pad = |s: &str, w: usize| w.saturating_sub(s.chars().count());
        let _ = writeln!(out, "{a}{}  {b}{}  {}{c}", " ".repeat(pad(a, w0)), " ".repeat(pad(b, w1)), " ".repeat(pad(c, w2)));
    };
    line(&mut out, "Model", &regret_header, "gain");
    let _ = writeln!(out, "{}", "-".repeat(w0 + w1 + w2 + 4));
    for (a, b, c) in &rows {
        line(&mut out, a, b, c);
    }
    let _ = writeln!(
        out,
        "\n{} seed(s), gain relative to '{}', config {}",
        report.seeds.len(),
        report.baseline,
        &report.config_hash[..12.min(report.config_hash.len())]
    );
    out
}

/// Writes `report.json`, `report.txt` and `effective_config.toml` into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let files = [
        (REPORT_JSON, report.to_json()),
        (REPORT_TABLE, render_table(report)),
        (EFFECTIVE_CONFIG, report.effective_config.to_toml_string()),
    ];
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        written.push(path);
    }
    Ok(written)
}
