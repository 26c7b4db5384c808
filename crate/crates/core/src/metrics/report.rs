use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{extract_features, fid, fit_gaussian, psnr, ssim, FeatureExtractor, MetricsError};
use crate::data::{scan_directory, ImageBuffer};

pub const CSV_HEADER: [&str; 8] = ["train_set", "eval_set", "psnr_db", "ssim", "fid", "n", "extractor", "seed"];

/// One evaluated (train set, eval set) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub train_set: String,
    pub eval_set: String,
    #[serde(with = "float_or_token")]
    pub psnr_db: f64,
    #[serde(with = "float_or_token")]
    pub ssim: f64,
    #[serde(with = "float_or_token")]
    pub fid: f64,
    pub n: usize,
    pub extractor: String,
    pub seed: u64,
}

impl MetricsRow {
    /// Identity of a cell: two rows with the same key describe the same
    /// measurement.
    pub fn key(&self) -> (&str, &str, usize, &str, u64) {
        (&self.train_set, &self.eval_set, self.n, &self.extractor, self.seed)
    }
}

/// JSON has no infinity, so non-finite values travel as the strings
/// `"inf"`, `"-inf"` and `"nan"`; CSV uses the same tokens.
mod float_or_token {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(token(*v))
        }
    }

    pub fn token(v: f64) -> &'static str {
        if v.is_nan() {
            "nan"
        } else if v > 0.0 {
            "inf"
        } else {
            "-inf"
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Text(t) => t
                .trim()
                .parse::<f64>()
                .map_err(|_| serde::de::Error::custom(format!("`{t}` is not a number"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> Result<String, MetricsError> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.train_set.clone(),
                r.eval_set.clone(),
                fmt_float(r.psnr_db),
                fmt_float(r.ssim),
                fmt_float(r.fid),
                r.n.to_string(),
                r.extractor.clone(),
                r.seed.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| MetricsError::Report(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| MetricsError::Report(e.to_string()))
    }

    /// Parses CSV written by [`MetricsReport::to_csv`]. `source` names the
    /// file in error messages, which also carry the 1-based line number.
    pub fn from_csv(text: &str, source: &str) -> Result<Self, MetricsError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = rd.headers().map_err(|e| MetricsError::Report(format!("{source}: {e}")))?;
        if header.iter().ne(CSV_HEADER) {
            return Err(MetricsError::Report(format!(
                "{source}:1: header `{}` does not match `{}`",
                header.iter().collect::<Vec<_>>().join(","),
                CSV_HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                MetricsError::Report(format!("{source}:{line}: {e}"))
            })?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |field: &str| MetricsError::Report(format!("{source}:{line}: bad `{field}` value"));
            let num = |i: usize, field: &str| rec[i].trim().parse::<f64>().map_err(|_| bad(field));
            rows.push(MetricsRow {
                train_set: rec[0].to_string(),
                eval_set: rec[1].to_string(),
                psnr_db: num(2, "psnr_db")?,
                ssim: num(3, "ssim")?,
                fid: num(4, "fid")?,
                n: rec[5].trim().parse().map_err(|_| bad("n"))?,
                extractor: rec[6].to_string(),
                seed: rec[7].trim().parse().map_err(|_| bad("seed"))?,
            });
        }
        Ok(Self { rows })
    }

    pub fn to_json(&self) -> Result<String, MetricsError> {
        serde_json::to_string_pretty(self).map_err(|e| MetricsError::Report(e.to_string()))
    }
}

fn csv_err(e: csv::Error) -> MetricsError {
    MetricsError::Report(e.to_string())
}

/// Shortest round-tripping decimal, or a non-finite token.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else {
        float_or_token::token(v).into()
    }
}

/// Scores of one generated set against its aligned real set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairScores {
    pub psnr_db: f64,
    pub ssim: f64,
    pub fid: f64,
    pub n: usize,
}

/// PSNR and SSIM averaged over the first `n` aligned pairs, FID between the
/// two feature clouds.
pub fn score_pair_sets(
    real: &[ImageBuffer],
    generated: &[ImageBuffer],
    extractor: &dyn FeatureExtractor,
    n: usize,
) -> Result<PairScores, MetricsError> {
    if real.len() < n || generated.len() < n {
        return Err(MetricsError::TooFewSamples {
            needed: n,
            got: real.len().min(generated.len()),
        });
    }
    if n < 2 {
        return Err(MetricsError::TooFewSamples { needed: 2, got: n });
    }
    if n < extractor.dim() {
        log::warn!(
            "n = {n} is below the feature dimension {} of `{}`; covariances are rank deficient",
            extractor.dim(),
            extractor.id()
        );
    }
    let (real, generated) = (&real[..n], &generated[..n]);
    let mut p = 0.0;
    let mut s = 0.0;
    for (a, b) in real.iter().zip(generated) {
        p += psnr(a, b, 1.0)?;
        s += ssim(a, b, 1.0)?;
    }
    let fx = fit_gaussian(&extract_features(real, extractor)?)?;
    let fg = fit_gaussian(&extract_features(generated, extractor)?)?;
    Ok(PairScores {
        psnr_db: p / n as f64,
        ssim: s / n as f64,
        fid: fid(&fx, &fg)?,
        n,
    })
}

/// [`score_pair_sets`] over two directories of PNG files, paired by sorted
/// file name.
pub fn score_pair_dirs(
    real_dir: &Path,
    generated_dir: &Path,
    extractor: &dyn FeatureExtractor,
    n: usize,
) -> Result<PairScores, MetricsError> {
    let load = |dir: &Path| -> Result<Vec<ImageBuffer>, MetricsError> {
        scan_directory(dir)?
            .iter()
            .take(n)
            .map(|p| ImageBuffer::load_png(p).map_err(MetricsError::from))
            .collect()
    };
    score_pair_sets(&load(real_dir)?, &load(generated_dir)?, extractor, n)
}
