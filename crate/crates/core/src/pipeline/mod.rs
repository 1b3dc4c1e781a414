//! End-to-end runs over a dataset manifest: feature extraction, training,
//! prediction, evaluation and the pooling ablation.

mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use synth::{box_blur, synth_dataset, synth_image, synth_mos, Distortion, SynthConfig, SynthVariant, MAX_BLUR_RADIUS, MAX_NOISE_SIGMA, MOS_FLOOR};

use crate::error::{Error, ItemError, Result};
use crate::features::{feature_path, load_sequences, write_feature_file, FeatureBackend};
use crate::manifest::{DatasetManifest, Split};
use crate::metrics::{evaluate, Metrics};
use crate::multires::{build_sequence_with, MultiresConfig};
use crate::nn::{AvgHead, Checkpoint, CheckpointMeta, GruHead, HeadKind, Model, DEFAULT_DROPOUT};
use crate::par::Exec;
use crate::train::{train, TrainConfig, TrainHistory};
use crate::types::{derive_seed, rescale_mos, rng_from_seed, FeatureSequence, ImageBuffer, ScaleGroup};

/// Name of the provenance file written next to extracted features.
pub const EXTRACT_CONFIG_FILE: &str = "extract.json";
const INIT_STREAM: u64 = 3;

/// Provenance of a feature directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub backend: String,
    pub dim: usize,
    pub multires: MultiresConfig,
}

#[derive(Debug, Clone)]
pub struct ExtractReport {
    pub written: usize,
    pub failures: Vec<ItemError>,
}

/// Builds one feature file per manifest entry. Images are processed
/// concurrently; a failing image is recorded and the rest continue.
pub fn extract(
    manifest: &DatasetManifest,
    out_dir: &Path,
    backend: &FeatureBackend,
    cfg: &MultiresConfig,
    exec: Exec,
) -> Result<ExtractReport> {
    if let FeatureBackend::FileLoader { .. } = backend {
        return Err(Error::UnsupportedMode("file loader cannot extract features from images"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results = exec.map(&manifest.entries, |_, entry| -> std::result::Result<(), ItemError> {
        let path = manifest.resolve(entry);
        let fail = |reason: String| ItemError {
            id: entry.image_id.clone(),
            path: path.clone(),
            reason,
        };
        let image = ImageBuffer::load(&path).map_err(|e| fail(e.to_string()))?;
        let seq = build_sequence_with(&entry.image_id, &image, cfg, backend, Exec::Sequential).map_err(|e| fail(e.to_string()))?;
        write_feature_file(&seq, &feature_path(out_dir, &entry.image_id)).map_err(|e| fail(e.to_string()))
    });
    let failures: Vec<ItemError> = results.into_iter().filter_map(|r| r.err()).collect();
    let echo = ExtractConfig {
        backend: "stat".into(),
        dim: backend.dim(),
        multires: cfg.clone(),
    };
    let cfg_path = out_dir.join(EXTRACT_CONFIG_FILE);
    let mut json = serde_json::to_vec_pretty(&echo)?;
    json.push(b'\n');
    std::fs::write(&cfg_path, json).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(ExtractReport {
        written: manifest.entries.len() - failures.len(),
        failures,
    })
}

/// Sequences of one split with targets on the 0–1 scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub seqs: Vec<FeatureSequence>,
    pub targets: Vec<f64>,
}

impl Dataset {
    pub fn load(manifest: &DatasetManifest, split: Split, feature_dir: &Path) -> Result<Self> {
        let entries: Vec<_> = manifest.split(split).collect();
        if entries.is_empty() {
            return Err(Error::Validation(format!("manifest has no {} entries", split.as_str())));
        }
        let seqs = load_sequences(feature_dir, entries.iter().copied())?;
        for (s, e) in seqs.iter().zip(&entries) {
            if s.image_id != e.image_id {
                return Err(Error::Validation(format!("feature file for {} holds {}", e.image_id, s.image_id)));
            }
        }
        let targets = entries.iter().map(|e| rescale_mos(e.mos)).collect::<Result<Vec<_>>>()?;
        Ok(Self { seqs, targets })
    }

    /// Same data with only the original-resolution vectors.
    pub fn high_only(&self) -> Self {
        Self {
            seqs: self.seqs.iter().map(|s| s.only_group(ScaleGroup::High)).collect(),
            targets: self.targets.clone(),
        }
    }

    pub fn dim(&self) -> Result<usize> {
        self.seqs.first().map(|s| s.dim).ok_or(Error::EmptyTrainingSet)
    }
}

/// Freshly initialized head with the published layer sizes.
pub fn init_model(kind: HeadKind, dim: usize, seed: u64) -> Model {
    let mut rng = rng_from_seed(derive_seed(seed, &[INIT_STREAM]));
    match kind {
        HeadKind::Rnn => Model::Rnn(GruHead::paper(dim, &mut rng)),
        HeadKind::Avg => Model::Avg(AvgHead::paper(dim, &mut rng)),
    }
}

/// Initializes and trains a head; `validation` is only logged.
pub fn train_model(
    kind: HeadKind,
    data: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<(Model, TrainHistory)> {
    let dim = data.dim()?;
    let val = validation.map(|v| (v.seqs.as_slice(), v.targets.as_slice()));
    Ok(match init_model(kind, dim, cfg.seed) {
        Model::Rnn(h) => {
            let (h, hist) = train(h, &data.seqs, &data.targets, cfg, val, exec)?;
            (Model::Rnn(h), hist)
        }
        Model::Avg(h) => {
            let (h, hist) = train(h, &data.seqs, &data.targets, cfg, val, exec)?;
            (Model::Avg(h), hist)
        }
    })
}

/// Checkpoint with the run configuration echoed into its metadata.
pub fn make_checkpoint(model: Model, cfg: &TrainConfig, extract: Option<&ExtractConfig>) -> Result<Checkpoint> {
    let config = serde_json::json!({
        "head": model.kind(),
        "input_dim": model.input_dim(),
        "dropout": DEFAULT_DROPOUT,
        "train": cfg,
        "extract": extract,
    });
    Ok(Checkpoint {
        model,
        meta: CheckpointMeta { seed: cfg.seed, config },
    })
}

/// Reads the provenance file of a feature directory, if present.
pub fn read_extract_config(feature_dir: &Path) -> Result<Option<ExtractConfig>> {
    let path = feature_dir.join(EXTRACT_CONFIG_FILE);
    match std::fs::read(&path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(&path, e)),
    }
}

/// Writes `image_id,mos_hat_0_100`.
pub fn write_predictions(path: &Path, ids: &[&str], pred_unit: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["image_id", "mos_hat_0_100"])?;
    for (id, p) in ids.iter().zip(pred_unit) {
        w.write_record([id.to_string(), crate::types::unscale_mos(*p).to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// One arm of the pooling ablation.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub head: HeadKind,
    pub multires: bool,
    pub metrics: Metrics,
}

impl AblationRow {
    pub fn label(&self) -> String {
        let pool = match self.head {
            HeadKind::Avg => "avg",
            HeadKind::Rnn => "rnn",
        };
        if self.multires {
            format!("{pool}+mres")
        } else {
            pool.to_owned()
        }
    }
}

/// Trains and evaluates {avg, rnn} × {single scale, two scales} on the same
/// split. Single-scale arms use the HIGH group of the stored sequences.
pub fn ablate(train_set: &Dataset, test_set: &Dataset, cfg: &TrainConfig, exec: Exec) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(4);
    for multires in [false, true] {
        let (tr, te) = if multires {
            (train_set.clone(), test_set.clone())
        } else {
            (train_set.high_only(), test_set.high_only())
        };
        for head in [HeadKind::Avg, HeadKind::Rnn] {
            let (model, _) = train_model(head, &tr, None, cfg, exec)?;
            let (_, metrics) = evaluate(&model, &te.seqs, &te.targets, exec)?;
            rows.push(AblationRow { head, multires, metrics });
        }
    }
    Ok(rows)
}

/// Writes `arm,head,multires,scc,pcc,rmse`.
pub fn write_ablation(path: &Path, rows: &[AblationRow]) -> Result<()> {
    let cell = |v: std::result::Result<f64, crate::metrics::Degenerate>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["arm", "head", "multires", "scc", "pcc", "rmse"])?;
    for r in rows {
        w.write_record([
            r.label(),
            r.head.as_str().to_owned(),
            r.multires.to_string(),
            cell(r.metrics.scc),
            cell(r.metrics.pcc),
            r.metrics.rmse.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
