//! Experiment drivers behind each CLI mode.

use std::fs;
use std::path::{Path, PathBuf};

use eon_core::costmodel::{frame_cost, sample_cost, CostReport};
use eon_core::data::synth::{synth_faces, synth_nonfaces};
use eon_core::data::{
    build_collage_with_fill, downscale_2x2, load_mnist_dir, read_pgm_dir, recall_on_manifest, resize_area,
    write_pgm, CollageFrame, GrayImage, LabeledImageSet, Recall, TILE_SIDE,
};
use eon_core::encoder::{encode, encode_frame, FilterBank};
use eon_core::learning::{eligible_range, learn_step, LearnConfig, Supervision};
use eon_core::network::{classify, Layer, ModelConfig, Prediction};
use eon_core::scan::{adapt_on_frame, AdaptOptions, AdaptStats, FrameScanner};
use eon_core::vector::{match_count, CompressedVector};
use eon_core::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig};
use crate::metrics::{append_rows, MetricsRow};
use crate::persist::{load_model, load_model_for, save_model, PersistError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Core(#[from] eon_core::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error("metrics: {0}")]
    Metrics(#[from] csv::Error),
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Protocol(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(io_err(&path))
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    write_text(dir, name, &serde_json::to_string_pretty(value).expect("serializable"))
}

fn prepare(out: Option<&Path>) -> Result<Option<&Path>> {
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    Ok(out)
}

/// Independent random streams derived from the experiment seed.
struct Streams {
    data: Rng,
    init: Rng,
    learn: Rng,
    collage: Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let mut root = Rng::new(seed);
        Self {
            data: root.fork(1),
            init: root.fork(2),
            learn: root.fork(3),
            collage: root.fork(4),
        }
    }
}

/// Brings an image to the `side x side` encoder input: as is, by 2x2
/// averaging, or by area resampling.
pub fn fit_to_patch(img: &GrayImage, side: usize) -> Result<GrayImage> {
    let (h, w) = (img.height(), img.width());
    Ok(if h == side && w == side {
        img.clone()
    } else if h == 2 * side && w == 2 * side {
        downscale_2x2(img)?
    } else {
        resize_area(img, side, side)?
    })
}

pub fn encode_images<'a>(
    images: impl IntoIterator<Item = &'a GrayImage>,
    bank: &FilterBank,
    model: &ModelConfig,
) -> Result<Vec<CompressedVector>> {
    images
        .into_iter()
        .map(|img| Ok(encode(&fit_to_patch(img, model.patch_side())?, bank)?))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Evaluation {
    pub total: usize,
    pub correct: usize,
    /// Samples on which nothing fired; scored as errors.
    pub no_prediction: usize,
    /// Percent.
    pub accuracy: f64,
}

/// Classification accuracy with learning disabled.
pub fn evaluate(layer: &Layer, samples: &[CompressedVector], labels: &[u8], parallelism: usize) -> Result<Evaluation> {
    let mut e = Evaluation {
        total: samples.len(),
        ..Evaluation::default()
    };
    for (s, &label) in samples.iter().zip(labels) {
        match classify(&layer.infer(s, parallelism)?) {
            Prediction::Class(c) if c == label as usize => e.correct += 1,
            Prediction::Class(_) => {}
            Prediction::NoPrediction => e.no_prediction += 1,
        }
    }
    e.accuracy = percent(e.correct, e.total);
    Ok(e)
}

fn percent(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn limited(set: LabeledImageSet, limit: Option<usize>) -> LabeledImageSet {
    match limit {
        Some(n) => set.take(n),
        None => set,
    }
}

struct EncodedSet {
    samples: Vec<CompressedVector>,
    labels: Vec<u8>,
}

fn encode_set(set: &LabeledImageSet, bank: &FilterBank, model: &ModelConfig) -> Result<EncodedSet> {
    Ok(EncodedSet {
        samples: encode_images(set.iter().map(|(img, _)| img), bank, model)?,
        labels: set.iter().map(|(_, l)| l).collect(),
    })
}

fn load_mnist(cfg: &ExperimentConfig, bank: &FilterBank, model: &ModelConfig) -> Result<(EncodedSet, EncodedSet)> {
    let (train, test) = load_mnist_dir(&cfg.mnist.dir)?;
    let train = limited(train, cfg.mnist.train_limit);
    let test = limited(test, cfg.mnist.test_limit);
    Ok((encode_set(&train, bank, model)?, encode_set(&test, bank, model)?))
}

/// Remaining capacity after each training sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CapacityPoint {
    pub samples: usize,
    /// Neuron updates so far.
    pub learn_events: usize,
    pub capacity: usize,
    /// Neurons in the eligible range with `V >= T_learn` before learning.
    pub eligible: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct MnistSummary {
    pub train_samples: usize,
    pub test: Evaluation,
    pub learn_events: usize,
    pub final_capacity: usize,
    pub fingerprint: String,
    pub config: ExperimentConfig,
}

pub struct MnistRun {
    pub layer: Layer,
    pub rows: Vec<MetricsRow>,
    pub trace: Vec<CapacityPoint>,
    pub summary: MnistSummary,
    pub cost: CostReport,
}

/// One pass over the training set, learning online, with periodic
/// evaluation on a fixed test subset.
pub fn run_mnist_train(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<MnistRun> {
    let out = prepare(out)?;
    let mut streams = Streams::new(cfg.seed);
    let mut layer = match &cfg.model_in {
        Some(p) => load_model_for(p, &cfg.model)?,
        None => Layer::random(cfg.model, &mut streams.init)?,
    };
    let bank = cfg.encoder.build(&cfg.model)?;
    let (train, test) = load_mnist(cfg, &bank, &cfg.model)?;
    let ck_len = cfg.mnist.checkpoint_test_limit.map_or(test.samples.len(), |n| n.min(test.samples.len()));
    let parallelism = cfg.cost.parallelism;

    let mut rows = Vec::new();
    let mut trace = Vec::with_capacity(train.samples.len());
    let mut learn_events = 0;
    let mut eligible_sum = 0usize;
    let mut since = 0usize;
    for (i, (s, &label)) in train.samples.iter().zip(&train.labels).enumerate() {
        let range = eligible_range(&layer, Some(label as usize), cfg.learn.mode)?;
        let eligible = range
            .filter(|&n| {
                let neuron = layer.neuron(n);
                match_count(s, &neuron.weights).is_ok_and(|v| v >= neuron.t_learn)
            })
            .count();
        let report = learn_step(&mut layer, s, Some(label as usize), &cfg.learn, &mut streams.learn)?;
        learn_events += report.learners.len();
        eligible_sum += eligible;
        since += 1;
        trace.push(CapacityPoint {
            samples: i + 1,
            learn_events,
            capacity: layer.capacity(),
            eligible,
        });
        let done = i + 1 == train.samples.len();
        if (i + 1) % cfg.mnist.checkpoint_every == 0 || done {
            let before = layer.fingerprint();
            let e = evaluate(&layer, &test.samples[..ck_len], &test.labels[..ck_len], parallelism)?;
            if layer.fingerprint() != before {
                return Err(ExperimentError::Protocol("evaluation modified the layer".into()));
            }
            rows.push(MetricsRow {
                sample_count: i + 1,
                accuracy: e.accuracy,
                capacity: layer.capacity(),
                eligible: eligible_sum as f64 / since as f64,
                no_prediction: e.no_prediction,
            });
            eligible_sum = 0;
            since = 0;
        }
    }
    if rows.is_empty() {
        let e = evaluate(&layer, &test.samples[..ck_len], &test.labels[..ck_len], parallelism)?;
        rows.push(MetricsRow {
            sample_count: 0,
            accuracy: e.accuracy,
            capacity: layer.capacity(),
            eligible: 0.0,
            no_prediction: e.no_prediction,
        });
    }
    let test_eval = evaluate(&layer, &test.samples, &test.labels, parallelism)?;
    let cost = sample_cost(&cfg.model, cfg.learn.k, 1, &cfg.cost);
    let summary = MnistSummary {
        train_samples: train.samples.len(),
        test: test_eval,
        learn_events,
        final_capacity: layer.capacity(),
        fingerprint: format!("{:016x}", layer.fingerprint()),
        config: cfg.clone(),
    };
    if let Some(dir) = out {
        append_rows(dir.join("metrics.csv"), &rows)?;
        write_text(dir, "cost.json", &cost.to_json())?;
        write_json(dir, "summary.json", &summary)?;
        write_text(dir, "config.toml", &cfg.to_toml())?;
        save_model(&layer, dir.join("model.eon"))?;
    }
    Ok(MnistRun {
        layer,
        rows,
        trace,
        summary,
        cost,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalSummary {
    pub model: PathBuf,
    pub test: Evaluation,
    pub fingerprint: String,
}

pub fn run_mnist_eval(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<EvalSummary> {
    let out = prepare(out)?;
    let path = cfg
        .model_in
        .clone()
        .ok_or_else(|| ExperimentError::Protocol("mnist-eval needs model_in".into()))?;
    let layer = load_model(&path)?;
    let model = *layer.config();
    let bank = cfg.encoder.build(&model)?;
    let (_, test) = load_mnist(cfg, &bank, &model)?;
    let summary = EvalSummary {
        model: path,
        test: evaluate(&layer, &test.samples, &test.labels, cfg.cost.parallelism)?,
        fingerprint: format!("{:016x}", layer.fingerprint()),
    };
    if let Some(dir) = out {
        write_json(dir, "summary.json", &summary)?;
    }
    Ok(summary)
}

/// Tiles for the face experiments: a pretraining set, a balanced test
/// set and separate pools the collage draws from.
pub struct FaceData {
    pub pretrain: Vec<GrayImage>,
    pub test_faces: Vec<GrayImage>,
    pub test_nonfaces: Vec<GrayImage>,
    pub pool_faces: Vec<GrayImage>,
    pub pool_nonfaces: Vec<GrayImage>,
}

fn split_off_front(items: &mut Vec<GrayImage>, n: usize, what: &str) -> Result<Vec<GrayImage>> {
    if items.len() < n {
        return Err(ExperimentError::Protocol(format!(
            "{what}: {n} tiles requested, {} available",
            items.len()
        )));
    }
    let rest = items.split_off(n);
    Ok(std::mem::replace(items, rest))
}

fn face_data(cfg: &ExperimentConfig, rng: &mut Rng) -> Result<FaceData> {
    let f = &cfg.faces;
    match (&f.faces_dir, &f.nonfaces_dir) {
        (Some(fd), Some(nd)) => {
            let mut faces = read_pgm_dir(fd, TILE_SIDE)?;
            let mut nonfaces = read_pgm_dir(nd, TILE_SIDE)?;
            rng.shuffle(&mut faces);
            rng.shuffle(&mut nonfaces);
            let pretrain = split_off_front(&mut faces, f.pretrain, "pretraining faces")?;
            let test_faces = split_off_front(&mut faces, f.test_per_class, "test faces")?;
            let test_nonfaces = split_off_front(&mut nonfaces, f.test_per_class, "test non-faces")?;
            if faces.is_empty() && f.frame_faces > 0 {
                return Err(ExperimentError::Protocol("no face tiles left for the collage".into()));
            }
            Ok(FaceData {
                pretrain,
                test_faces,
                test_nonfaces,
                pool_faces: faces,
                pool_nonfaces: nonfaces,
            })
        }
        _ => Ok(FaceData {
            pretrain: synth_faces(f.pretrain, rng),
            test_faces: synth_faces(f.test_per_class, rng),
            test_nonfaces: synth_nonfaces(f.test_per_class, rng),
            pool_faces: synth_faces(f.frame_faces.max(1) * 4, rng),
            pool_nonfaces: synth_nonfaces(800, rng),
        }),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FaceAccuracy {
    /// Percent correct on the balanced test set.
    pub accuracy: f64,
    pub tpr: f64,
    pub tnr: f64,
}

/// "Face" means at least one neuron fired.
fn face_accuracy(layer: &Layer, faces: &[CompressedVector], nonfaces: &[CompressedVector], p: usize) -> Result<FaceAccuracy> {
    let fires = |s: &CompressedVector| -> Result<bool> { Ok(!layer.infer(s, p)?.fired.is_empty()) };
    let mut tp = 0;
    for s in faces {
        tp += fires(s)? as usize;
    }
    let mut tn = 0;
    for s in nonfaces {
        tn += !fires(s)? as usize;
    }
    Ok(FaceAccuracy {
        accuracy: percent(tp + tn, faces.len() + nonfaces.len()),
        tpr: percent(tp, faces.len()),
        tnr: percent(tn, nonfaces.len()),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FaceEval {
    pub test: FaceAccuracy,
    pub recall: Recall,
    pub detections: usize,
    pub capacity: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FacesSummary {
    pub before: FaceEval,
    pub after: Option<FaceEval>,
    pub adaptation: Option<AdaptSummary>,
    pub frame_tiles: usize,
    pub frame_faces: usize,
    pub config: ExperimentConfig,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AdaptSummary {
    pub windows: usize,
    pub fired_windows: usize,
    pub learn_events: usize,
    pub neuron_updates: usize,
    pub stopped_at: Option<usize>,
}

impl From<AdaptStats> for AdaptSummary {
    fn from(s: AdaptStats) -> Self {
        Self {
            windows: s.windows,
            fired_windows: s.fired_windows,
            learn_events: s.learn_events,
            neuron_updates: s.neuron_updates,
            stopped_at: s.stopped_at,
        }
    }
}

pub struct FacesRun {
    pub layer: Layer,
    pub frame: CollageFrame,
    pub summary: FacesSummary,
    pub rows: Vec<MetricsRow>,
    /// Detected window origins, `(x, y)`, of the final layer.
    pub detections: Vec<(usize, usize)>,
}

/// What a faces run does after the baseline evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FacesStage {
    Pretrain,
    Adapt,
    Scan,
}

fn pretrained_layer(cfg: &ExperimentConfig, data: &FaceData, bank: &FilterBank, streams: &mut Streams) -> Result<Layer> {
    if let Some(p) = &cfg.model_in {
        return Ok(load_model_for(p, &cfg.model)?);
    }
    let mut layer = Layer::random(cfg.model, &mut streams.init)?;
    let learn = LearnConfig {
        mode: match cfg.learn.mode {
            Supervision::SelfSupervisedOnFire => Supervision::LabeledCluster,
            m => m,
        },
        ..cfg.learn
    };
    for s in encode_images(&data.pretrain, bank, &cfg.model)? {
        learn_step(&mut layer, &s, Some(0), &learn, &mut streams.learn)?;
    }
    Ok(layer)
}

/// Pretrains on face tiles (or loads `model_in`), evaluates on the test
/// set and a collage frame, then optionally adapts on the frame without
/// labels and evaluates again.
pub fn run_faces(cfg: &ExperimentConfig, stage: FacesStage, out: Option<&Path>) -> Result<FacesRun> {
    let out = prepare(out)?;
    let f = &cfg.faces;
    let mut streams = Streams::new(cfg.seed);
    let bank = cfg.encoder.build(&cfg.model)?;
    let data = face_data(cfg, &mut streams.data)?;
    let mut layer = pretrained_layer(cfg, &data, &bank, &mut streams)?;
    let test_f = encode_images(&data.test_faces, &bank, &cfg.model)?;
    let test_n = encode_images(&data.test_nonfaces, &bank, &cfg.model)?;
    let frame = build_collage_with_fill(
        &data.pool_faces,
        &data.pool_nonfaces,
        cfg.frame.height,
        cfg.frame.width,
        f.frame_faces,
        f.nonface_fill,
        &mut streams.collage,
    )?;
    let map = encode_frame(&frame.canvas, &bank)?;
    let side = cfg.model.side;
    let p = cfg.cost.parallelism;
    let scanner = FrameScanner::new(&map, side, f.scan_stride)?;
    let eval = |layer: &Layer| -> Result<(FaceEval, Vec<(usize, usize)>)> {
        let det = scanner.detections(layer)?;
        Ok((
            FaceEval {
                test: face_accuracy(layer, &test_f, &test_n, p)?,
                recall: recall_on_manifest(&det, &frame.manifest, frame.tile_side),
                detections: det.len(),
                capacity: layer.capacity(),
            },
            det,
        ))
    };
    let (before, mut detections) = eval(&layer)?;
    let mut rows = vec![MetricsRow {
        sample_count: 0,
        accuracy: before.test.accuracy,
        capacity: before.capacity,
        eligible: 0.0,
        no_prediction: no_fire_count(&before.test, test_f.len(), test_n.len()),
    }];
    let (mut after, mut adaptation) = (None, None);
    if stage == FacesStage::Adapt {
        let adapt_scanner = FrameScanner::new(&map, side, f.adapt_stride)?;
        let options = AdaptOptions {
            order: f.order,
            stop_when_full: f.stop_when_full,
        };
        let mut failure = None;
        let mut last_fired = 0;
        let every = f.checkpoint_every;
        let mut events = 0;
        let stats = adapt_on_frame(&mut layer, &adapt_scanner, &cfg.learn, options, &mut streams.learn, |l, e| {
            events += 1;
            if events % every != 0 || failure.is_some() {
                return;
            }
            match face_accuracy(l, &test_f, &test_n, p) {
                Ok(acc) => {
                    rows.push(MetricsRow {
                        sample_count: events,
                        accuracy: acc.accuracy,
                        capacity: e.capacity,
                        eligible: (e.fired_windows - last_fired) as f64,
                        no_prediction: no_fire_count(&acc, test_f.len(), test_n.len()),
                    });
                    last_fired = e.fired_windows;
                }
                Err(err) => failure = Some(err),
            }
        })?;
        if let Some(err) = failure {
            return Err(err);
        }
        let (ev, det) = eval(&layer)?;
        if events % every != 0 {
            rows.push(MetricsRow {
                sample_count: events,
                accuracy: ev.test.accuracy,
                capacity: ev.capacity,
                eligible: (stats.fired_windows - last_fired) as f64,
                no_prediction: no_fire_count(&ev.test, test_f.len(), test_n.len()),
            });
        }
        detections = det;
        after = Some(ev);
        adaptation = Some(AdaptSummary::from(stats));
    }
    let summary = FacesSummary {
        before,
        after,
        adaptation,
        frame_tiles: frame.manifest.len(),
        frame_faces: frame.face_count(),
        config: cfg.clone(),
    };
    if let Some(dir) = out {
        write_json(dir, "summary.json", &summary)?;
        write_text(dir, "config.toml", &cfg.to_toml())?;
        frame.write_manifest(dir.join("manifest.jsonl"))?;
        match stage {
            FacesStage::Pretrain => save_model(&layer, dir.join("model.eon"))?,
            FacesStage::Adapt => {
                save_model(&layer, dir.join("model.eon"))?;
                append_rows(dir.join("metrics.csv"), &rows)?;
            }
            FacesStage::Scan => {
                write_pgm(dir.join("frame.pgm"), &frame.canvas)?;
                let path = dir.join("detections.csv");
                let mut w = csv::Writer::from_path(&path)?;
                w.write_record(["x", "y"])?;
                for (x, y) in &detections {
                    w.write_record([x.to_string(), y.to_string()])?;
                }
                w.flush().map_err(io_err(&path))?;
            }
        }
    }
    Ok(FacesRun {
        layer,
        frame,
        summary,
        rows,
        detections,
    })
}

/// Test tiles on which no neuron fired.
fn no_fire_count(acc: &FaceAccuracy, faces: usize, nonfaces: usize) -> usize {
    let missed_faces = faces - (acc.tpr * faces as f64 / 100.0).round() as usize;
    let quiet_nonfaces = (acc.tnr * nonfaces as f64 / 100.0).round() as usize;
    missed_faces + quiet_nonfaces
}

#[derive(Clone, Debug, Serialize)]
pub struct CostSummary {
    pub sample: CostReport,
    pub frame: CostReport,
}

pub fn run_cost(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<CostSummary> {
    let out = prepare(out)?;
    let m = &cfg.model;
    let summary = CostSummary {
        sample: sample_cost(m, cfg.learn.k, 1, &cfg.cost),
        frame: frame_cost(cfg.frame.height, cfg.frame.width, m.patch_side(), cfg.frame.stride, m, &cfg.cost)?,
    };
    if let Some(dir) = out {
        write_json(dir, "cost.json", &summary)?;
    }
    Ok(summary)
}
