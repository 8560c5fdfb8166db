use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use bace_rul::data::{
    compute_rul_labels, label_with_final_rul, load_cmapss, load_generic_csv, load_rul_file, synth_records,
    write_generic_csv, CycleRecord, LabeledSample,
};
use bace_rul::metrics::evaluate;
use bace_rul::model::{load_checkpoint, save_checkpoint, BaceRulModel, RulPrediction};
use bace_rul::trainer::{summarize, train};
use bace_rul::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DatasetFormat, RunConfig};

pub const REPORT_FILE: &str = "train_report.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const EVALUATION_MANIFEST_FILE: &str = "evaluation_manifest.txt";
pub const SYNTH_TRAIN_FILE: &str = "train.csv";
pub const SYNTH_TEST_FILE: &str = "test.csv";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

pub fn load_records(path: &Path, format: DatasetFormat) -> Result<Vec<CycleRecord>> {
    let csv = match format {
        DatasetFormat::Csv => true,
        DatasetFormat::Cmapss => false,
        DatasetFormat::Auto => path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    if csv {
        Ok(load_generic_csv(path)?.records)
    } else {
        load_cmapss(path)
    }
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let path = cfg.dataset()?;
    let records = load_records(path, cfg.dataset_format)?;
    let samples = compute_rul_labels(&records, cfg.rul_cap)?;
    let mut tc = cfg.train.clone();
    tc.dims.m = samples[0].x.len();
    tc.dims.rul_cap = cfg.rul_cap;
    log::info!("{} training samples with {} features from {}", samples.len(), tc.dims.m, path.display());

    let (model, report) = train(&samples, &tc)?;
    ensure_dir(&cfg.out)?;
    let ckpt = cfg.checkpoint_path();
    save_checkpoint(&model, &ckpt)?;
    report.write_csv(cfg.out.join(REPORT_FILE))?;
    write_file(&cfg.out.join(MANIFEST_FILE), &cfg.manifest("train"))?;
    println!("{}", summarize(&report));
    println!(
        "stopped: {:?}, best iteration {:?}; checkpoint {}",
        report.stop_reason,
        report.best_iteration,
        ckpt.display()
    );
    Ok(())
}

fn checkpoint_required(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.checkpoint
        .clone()
        .ok_or_else(|| Error::Config("`checkpoint` is not set; pass --checkpoint <path>".into()))
}

fn check_width(model: &BaceRulModel, width: usize, source: &str) -> Result<()> {
    if width != model.dims.m {
        return Err(Error::Shape(format!(
            "{source} has {width} features but the checkpoint expects m = {}",
            model.dims.m
        )));
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<()> {
    let model = load_checkpoint(checkpoint_required(cfg)?)?;
    let path = cfg.dataset()?;
    let records = load_records(path, cfg.dataset_format)?;
    check_width(&model, records[0].features().len(), &path.display().to_string())?;
    // The checkpoint's cap applies unless one was given explicitly.
    let cap = if cfg.explicit.contains("rul_cap") {
        cfg.rul_cap
    } else {
        model.dims.rul_cap
    };
    let test: Vec<LabeledSample> = match &cfg.rul_file {
        Some(rul) => label_with_final_rul(&records, &load_rul_file(rul, &records)?, cap)?,
        None => compute_rul_labels(&records, cap)?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let result = evaluate(&model, &test, &mut rng, cfg.samples)?;
    ensure_dir(&cfg.out)?;
    result.write_csv(cfg.out.join(EVALUATION_FILE))?;
    let mut manifest = cfg.manifest("evaluate");
    manifest.push_str(&format!("# {}\n", result.summary()));
    write_file(&cfg.out.join(EVALUATION_MANIFEST_FILE), &manifest)?;
    println!("{}", result.summary());
    Ok(())
}

/// 64-bit FNV-1a over the bit patterns of `row`.
fn row_hash(row: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in row {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Each row draws its noise from a stream keyed by the seed and its own
/// values, so a row's prediction does not depend on the other rows.
fn predict_row(model: &BaceRulModel, row: &[f64], seed: u64, samples: usize) -> Result<RulPrediction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row_hash(row));
    model.predict(row, &mut rng, samples)
}

pub enum PredictInput {
    Row(String),
    File(PathBuf),
}

pub fn parse_row(text: &str) -> Result<Vec<f64>> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Usage(format!("`{f}` is not a finite number")))
        })
        .collect()
}

pub fn cmd_predict(cfg: &RunConfig, input: &PredictInput, out: Option<&Path>) -> Result<()> {
    let model = load_checkpoint(checkpoint_required(cfg)?)?;
    let seed = cfg.train.seed;
    let mut text = String::new();
    match input {
        PredictInput::Row(row) => {
            let x = parse_row(row)?;
            check_width(&model, x.len(), "input row")?;
            let p = predict_row(&model, &x, seed, cfg.samples)?;
            text.push_str("pred_mean,pred_std\n");
            text.push_str(&format!("{},{}\n", p.mean, p.std));
        }
        PredictInput::File(path) => {
            let records = load_records(path, cfg.dataset_format)?;
            text.push_str("unit,cycle,pred_mean,pred_std\n");
            for r in &records {
                let x = r.features();
                check_width(&model, x.len(), &path.display().to_string())?;
                let p = predict_row(&model, &x, seed, cfg.samples)?;
                text.push_str(&format!("{},{},{},{}\n", r.unit_id, r.cycle, p.mean, p.std));
            }
        }
    }
    match out {
        Some(path) => write_file(path, &text),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| io_err(Path::new("<stdout>"), e)),
    }
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    let (train_r, test_r) = synth_records(&cfg.synth)?;
    let names = cfg.synth.feature_names();
    ensure_dir(&cfg.out)?;
    write_generic_csv(cfg.out.join(SYNTH_TRAIN_FILE), &names, &train_r)?;
    write_generic_csv(cfg.out.join(SYNTH_TEST_FILE), &names, &test_r)?;
    write_file(&cfg.out.join(MANIFEST_FILE), &cfg.manifest("synth"))?;
    println!(
        "wrote {} train and {} test cycles to {}",
        train_r.len(),
        test_r.len(),
        cfg.out.display()
    );
    Ok(())
}
