use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::commands::{checkpoint_context, eval_network};
use super::{usage, ExperimentError, EXIT_NUMERICAL};
use crate::data::{DatasetManifest, Split};
use crate::metrics::{fmt_float, MetricsReport, MetricsRow, CSV_HEADER};
use crate::nn::load_checkpoint;
use crate::train::{resolve_dataset, train, DatasetRef, ExperimentConfig, TrainError, FINAL_GENERATOR};

/// Placeholder written into every metric field of a cell that failed.
pub const MISSING: &str = "MISSING";

fn default_extractor() -> String {
    "tinyconv".into()
}
fn default_n() -> usize {
    32
}

/// Train configs (matrix rows) and evaluation datasets (columns). Every
/// cell is scored with the same extractor and sample count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    pub runs: Vec<ExperimentConfig>,
    pub eval: Vec<DatasetRef>,
    #[serde(default = "default_extractor")]
    pub extractor: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl MatrixConfig {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        if !path.is_file() {
            return Err(usage(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        cfg.resolve(path.parent().unwrap_or(Path::new(".")))
    }

    /// Resolves relative paths against `base` and inlines every manifest.
    pub fn resolve(mut self, base: &Path) -> Result<Self, ExperimentError> {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        self.runs = self
            .runs
            .into_iter()
            .map(|r| r.resolve(base))
            .collect::<Result<_, _>>()?;
        self.eval = self
            .eval
            .into_iter()
            .map(|e| resolve_dataset(e, base).map(DatasetRef::Inline))
            .collect::<Result<_, _>>()?;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.runs.is_empty() || self.eval.is_empty() {
            return Err(usage("matrix needs at least one run and one eval dataset"));
        }
        if self.n < 2 {
            return Err(usage(format!("n must be at least 2, got {}", self.n)));
        }
        let mut names: Vec<&str> = self.runs.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(usage("run names must be unique"));
        }
        let mut evals = self.eval_manifests()?.into_iter().map(|m| m.name).collect::<Vec<_>>();
        evals.sort_unstable();
        if evals.windows(2).any(|w| w[0] == w[1]) {
            return Err(usage("eval dataset names must be unique"));
        }
        for r in &self.runs {
            r.validate()?;
        }
        crate::metrics::extractor_by_id(&self.extractor)?;
        Ok(())
    }

    fn eval_manifests(&self) -> Result<Vec<DatasetManifest>, ExperimentError> {
        self.eval
            .iter()
            .map(|e| match e {
                DatasetRef::Inline(m) => Ok(m.clone()),
                DatasetRef::File(p) => Ok(crate::data::read_manifest(p)?),
            })
            .collect()
    }

    /// Directory a run trains into: content-addressed so reruns reuse it.
    pub fn run_dir(&self, run: &ExperimentConfig) -> PathBuf {
        self.output_dir
            .join("runs")
            .join(format!("{}-{}", run.name, &config_hash(run)[..12]))
    }
}

/// SHA-256 of a run config with its output directory blanked, as hex.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.output_dir = PathBuf::new();
    let digest = Sha256::digest(c.to_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Diagonal-versus-column comparison for one eval dataset, on FID.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnCheck {
    pub eval_set: String,
    pub diagonal_fid: f64,
    pub best_off_diagonal_fid: f64,
    /// `(best_off − diagonal) / best_off`; positive when the matched
    /// generator wins.
    pub margin: f64,
    pub diagonal_is_min: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MatrixResult {
    pub train_sets: Vec<String>,
    pub eval_sets: Vec<String>,
    pub extractor: String,
    pub n: usize,
    pub seed: u64,
    /// `cells[i][j]`: generator trained on `train_sets[i]` scored on
    /// `eval_sets[j]`; `None` when the cell failed.
    pub cells: Vec<Vec<Option<MetricsRow>>>,
}

impl MatrixResult {
    pub fn missing(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if c.is_none() {
                    out.push(format!("{}/{}", self.train_sets[i], self.eval_sets[j]));
                }
            }
        }
        out
    }

    /// One check per eval column that has a matching training set and no
    /// missing cells.
    pub fn column_checks(&self) -> Vec<ColumnCheck> {
        let mut checks = Vec::new();
        for (j, eval) in self.eval_sets.iter().enumerate() {
            let Some(d) = self.train_sets.iter().position(|t| t == eval) else {
                continue;
            };
            let col: Option<Vec<f64>> = self.cells.iter().map(|r| r[j].as_ref().map(|c| c.fid)).collect();
            let Some(col) = col else { continue };
            let diag = col[d];
            let best_off = col
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != d)
                .map(|(_, &v)| v)
                .fold(f64::INFINITY, f64::min);
            checks.push(ColumnCheck {
                eval_set: eval.clone(),
                diagonal_fid: diag,
                best_off_diagonal_fid: best_off,
                margin: (best_off - diag) / best_off,
                diagonal_is_min: diag < best_off,
            });
        }
        checks
    }

    /// Report CSV; failed cells carry `MISSING` in every metric field.
    pub fn to_csv(&self) -> Result<String, ExperimentError> {
        let mut out = CSV_HEADER.join(",") + "\n";
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                match c {
                    Some(r) => {
                        let text = MetricsReport { rows: vec![r.clone()] }.to_csv()?;
                        out.push_str(text.split_once('\n').map_or("", |(_, b)| b));
                    }
                    None => out.push_str(&format!(
                        "{},{},{MISSING},{MISSING},{MISSING},{},{},{}\n",
                        self.train_sets[i], self.eval_sets[j], self.n, self.extractor, self.seed
                    )),
                }
            }
        }
        Ok(out)
    }

    /// Grouped-bar data: one grid per metric, rows are training sets.
    pub fn plot_json(&self) -> Value {
        let grid = |f: fn(&MetricsRow) -> f64| -> Value {
            Value::Array(
                self.cells
                    .iter()
                    .map(|row| {
                        Value::Array(
                            row.iter()
                                .map(|c| match c {
                                    None => Value::String(MISSING.into()),
                                    Some(r) => number(f(r)),
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            )
        };
        json!({
            "train_sets": self.train_sets,
            "eval_sets": self.eval_sets,
            "extractor": self.extractor,
            "n": self.n,
            "fid": grid(|r| r.fid),
            "psnr_db": grid(|r| r.psnr_db),
            "ssim": grid(|r| r.ssim),
            "column_checks": self.column_checks(),
        })
    }
}

fn number(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::String(fmt_float(v))
    }
}

/// Trains (or reuses) one generator per run, scores every run on every
/// eval dataset, and writes `matrix.csv` and `plot.json`. Missing cells
/// still produce both files, then an `Incomplete` error.
pub fn cmd_matrix(cfg: &MatrixConfig) -> Result<MatrixResult, ExperimentError> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(
        cfg.output_dir.join("matrix_config.json"),
        serde_json::to_string_pretty(cfg).expect("serializable") + "\n",
    )?;
    let evals = cfg.eval_manifests()?;
    let mut fail_code: Option<i32> = None;
    let mut note_fail = |e: &ExperimentError| {
        let code = e.exit_code();
        fail_code = Some(match fail_code {
            Some(c) if c == EXIT_NUMERICAL => c,
            _ => code,
        });
    };

    let mut result = MatrixResult {
        train_sets: Vec::new(),
        eval_sets: evals.iter().map(|m| m.name.clone()).collect(),
        extractor: cfg.extractor.clone(),
        n: cfg.n,
        seed: cfg.seed,
        cells: Vec::new(),
    };
    for run in &cfg.runs {
        let train_set = run.manifest().map(|m| m.name).unwrap_or_else(|_| run.name.clone());
        result.train_sets.push(train_set.clone());
        let generator = match trained_generator(cfg, run) {
            Ok(p) => Some(p),
            Err(e) => {
                log::error!("run {} failed: {e}", run.name);
                note_fail(&e);
                None
            }
        };
        let mut row = Vec::with_capacity(evals.len());
        for m in &evals {
            let cell = generator
                .as_ref()
                .map(|g| score_cell(g, m, &train_set, cfg))
                .transpose()
                .unwrap_or_else(|e| {
                    log::error!("cell {}/{} failed: {e}", train_set, m.name);
                    note_fail(&e);
                    None
                });
            row.push(cell);
        }
        result.cells.push(row);
    }

    // Hard invariant: cells are only comparable at equal n and extractor.
    for r in result.cells.iter().flatten().flatten() {
        assert!(
            r.n == cfg.n && r.extractor == cfg.extractor,
            "matrix cell scored with n={} extractor={}",
            r.n,
            r.extractor
        );
    }

    std::fs::write(cfg.output_dir.join("matrix.csv"), result.to_csv()?)?;
    std::fs::write(
        cfg.output_dir.join("plot.json"),
        serde_json::to_string_pretty(&result.plot_json()).expect("serializable") + "\n",
    )?;
    let missing = result.missing();
    if !missing.is_empty() {
        return Err(ExperimentError::Incomplete {
            missing,
            code: fail_code.unwrap_or(1),
        });
    }
    Ok(result)
}

fn trained_generator(cfg: &MatrixConfig, run: &ExperimentConfig) -> Result<PathBuf, ExperimentError> {
    let dir = cfg.run_dir(run);
    let g = dir.join(FINAL_GENERATOR);
    if g.is_file() && dir.join("run_manifest.json").is_file() {
        log::info!("reusing {}", g.display());
        return Ok(g);
    }
    let mut run = run.clone();
    run.output_dir = dir;
    let outcome = train(&run, None).map_err(|e: TrainError| ExperimentError::from(e))?;
    log::info!("run {}: {:?}", run.name, outcome.status);
    Ok(outcome.generator)
}

fn score_cell(
    generator: &Path,
    eval: &DatasetManifest,
    train_set: &str,
    cfg: &MatrixConfig,
) -> Result<MetricsRow, ExperimentError> {
    let ckpt = load_checkpoint(generator)?;
    let (pair, _) = checkpoint_context(&ckpt);
    let s = eval_network(&ckpt.network, &pair, eval, Split::Test, &cfg.extractor, cfg.n)?;
    Ok(MetricsRow {
        train_set: train_set.into(),
        eval_set: eval.name.clone(),
        psnr_db: s.psnr_db,
        ssim: s.ssim,
        fid: s.fid,
        n: s.n,
        extractor: cfg.extractor.clone(),
        seed: cfg.seed,
    })
}
