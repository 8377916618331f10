//! C ABI over `fairadj`.
//!
//! Datasets and models cross the boundary as opaque handles that the caller
//! frees with the matching `*_free` function. Every fallible call returns an
//! [`FaStatus`]; on failure `fa_last_error` describes the cause. Matrices are
//! dense, row-major `n x d` arrays of doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fairadj::data::{Dataset, Manifest, Task};
use fairadj::fairness::PenaltyKind;
use fairadj::learner::{BoostParams, ModelFile, Role};
use fairadj::metrics::evaluate_parts;
use fairadj::train::{fit_adjuster, fit_baseline, fit_joint, predict_adjusted, AdjustInput, LearnerKind, TrainConfig};
use fairadj::Error;
use nalgebra::DMatrix;

pub const FA_TASK_REGRESSION: u32 = 0;
pub const FA_TASK_CLASSIFICATION: u32 = 1;

pub const FA_LEARNER_LINEAR: u32 = 0;
pub const FA_LEARNER_BOOSTED: u32 = 1;

pub const FA_PENALTY_ADVERSARIAL: u32 = 0;
pub const FA_PENALTY_GAP: u32 = 1;
pub const FA_PENALTY_GAP_SQUARED: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    /// Malformed or inconsistent data: CSV, schema, labels, groups, lengths.
    Data = 4,
    /// Rank deficiency, divergence or non-finite values during training.
    Numerical = 5,
    ModelFormat = 6,
    /// The penalty needs true labels and none were available.
    LabelsRequired = 7,
    Panic = 8,
}

/// Training settings. Start from `fa_train_options_default`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaTrainOptions {
    /// `FA_TASK_*`
    pub task: u32,
    /// `FA_LEARNER_*`
    pub learner: u32,
    /// `FA_PENALTY_*`
    pub penalty: u32,
    pub lambda: f64,
    pub rounds: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub l2_reg: f64,
    pub min_child_weight: f64,
    pub adversary_step: f64,
    pub adversary_steps: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaEvaluation {
    pub accuracy: f64,
    /// NaN when the unprotected group has no favorable predictions.
    pub disparate_impact: f64,
    pub rate_protected: f64,
    pub rate_unprotected: f64,
}

/// Opaque dataset handle.
pub struct FaDataset(Dataset);

/// Opaque model handle: a trained model with its metadata.
pub struct FaModel(ModelFile);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(FaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => FaStatus::Io,
            Error::Csv { .. }
            | Error::Cell { .. }
            | Error::MissingValue { .. }
            | Error::Schema(_)
            | Error::EmptyProtectedGroup(_)
            | Error::InvalidLabel { .. }
            | Error::LengthMismatch { .. }
            | Error::DimensionMismatch { .. }
            | Error::UnknownDataset(_) => FaStatus::Data,
            Error::RankDeficient { .. } | Error::Diverged { .. } | Error::NonFinite(_) => FaStatus::Numerical,
            Error::ModelFormat(_) => FaStatus::ModelFormat,
            Error::LabelsRequired(_) => FaStatus::LabelsRequired,
            _ => FaStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(FaStatus::InvalidArgument, msg.into())
}

fn null(what: &str) -> Failure {
    Failure(FaStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            FaStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn reference<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn string(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn matrix(x: *const f64, n: usize, d: usize) -> Result<DMatrix<f64>, Failure> {
    let len = n.checked_mul(d).ok_or_else(|| invalid("n * d overflows"))?;
    Ok(DMatrix::from_row_slice(n, d, slice(x, len, "x")?))
}

fn task(code: u32) -> Result<Task, Failure> {
    match code {
        FA_TASK_REGRESSION => Ok(Task::Regression),
        FA_TASK_CLASSIFICATION => Ok(Task::Classification),
        _ => Err(invalid(format!("unknown task code {code}"))),
    }
}

fn task_code(t: Task) -> u32 {
    match t {
        Task::Regression => FA_TASK_REGRESSION,
        Task::Classification => FA_TASK_CLASSIFICATION,
    }
}

fn config(o: &FaTrainOptions) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::new(task(o.task)?).with_lambda(o.lambda);
    cfg.learner = match o.learner {
        FA_LEARNER_LINEAR => LearnerKind::Linear,
        FA_LEARNER_BOOSTED => LearnerKind::Boosted,
        c => return Err(invalid(format!("unknown learner code {c}"))),
    };
    cfg.penalty = match o.penalty {
        FA_PENALTY_ADVERSARIAL => PenaltyKind::Adversarial,
        FA_PENALTY_GAP => PenaltyKind::OverpredictionGap,
        FA_PENALTY_GAP_SQUARED => PenaltyKind::OverpredictionGapSquared,
        c => return Err(invalid(format!("unknown penalty code {c}"))),
    };
    cfg.boost = BoostParams {
        max_depth: o.max_depth,
        learning_rate: o.learning_rate,
        rounds: o.rounds,
        l2_reg: o.l2_reg,
        min_child_weight: o.min_child_weight,
    };
    cfg.adversary_step = o.adversary_step;
    cfg.adversary_steps = o.adversary_steps;
    cfg.validate()?;
    Ok(cfg)
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Fills `out` with the library defaults for `task`.
///
/// # Safety
/// `out` must be NULL or point to writable memory for one `FaTrainOptions`.
#[no_mangle]
pub unsafe extern "C" fn fa_train_options_default(task_code: u32, out: *mut FaTrainOptions) -> FaStatus {
    guard(|| {
        let cfg = TrainConfig::new(task(task_code)?);
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = FaTrainOptions {
            task: task_code,
            learner: FA_LEARNER_BOOSTED,
            penalty: FA_PENALTY_ADVERSARIAL,
            lambda: cfg.lambda,
            rounds: cfg.boost.rounds,
            max_depth: cfg.boost.max_depth,
            learning_rate: cfg.boost.learning_rate,
            l2_reg: cfg.boost.l2_reg,
            min_child_weight: cfg.boost.min_child_weight,
            adversary_step: cfg.adversary_step,
            adversary_steps: cfg.adversary_steps,
        };
        Ok(())
    })
}

/// Builds a dataset from row-major features `x` (`n x d`), labels and a 0/1
/// protected indicator. Features are named `x0`, `x1`, ...
///
/// # Safety
/// `x` must hold `n * d` doubles, `labels` `n` doubles and `protected` `n`
/// bytes; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_new(
    x: *const f64,
    n: usize,
    d: usize,
    labels: *const f64,
    protected: *const u8,
    favorable: u8,
    task_code: u32,
    out: *mut *mut FaDataset,
) -> FaStatus {
    guard(|| {
        let features = matrix(x, n, d)?;
        let names = (0..d).map(|j| format!("x{j}")).collect();
        let ds = Dataset::new(
            features,
            slice(labels, n, "labels")?.to_vec(),
            slice(protected, n, "protected")?.to_vec(),
            favorable,
            names,
            task(task_code)?,
        )?;
        emit(out, FaDataset(ds))
    })
}

/// Loads dataset `name` from the manifest in `data_dir` (NULL: the default
/// data directory).
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_load(
    data_dir: *const c_char,
    name: *const c_char,
    out: *mut *mut FaDataset,
) -> FaStatus {
    guard(|| {
        let manifest = if data_dir.is_null() {
            Manifest::load_default()?
        } else {
            Manifest::load(PathBuf::from(string(data_dir, "data_dir")?))?
        };
        let ds = manifest.load_dataset(&string(name, "name")?)?;
        emit(out, FaDataset(ds))
    })
}

/// Row count, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_rows(ds: *const FaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n())
}

/// Feature count, or 0 for NULL.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_cols(ds: *const FaDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.d())
}

/// Copies the row-major feature matrix into `out` (`rows * cols` doubles).
///
/// # Safety
/// `ds` must be a live handle and `out` must have room for the matrix.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_features(ds: *const FaDataset, out: *mut f64) -> FaStatus {
    guard(|| {
        let ds = &reference(ds, "dataset")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let x = ds.features();
        let d = ds.d();
        for i in 0..ds.n() {
            for j in 0..d {
                *out.add(i * d + j) = x[(i, j)];
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fa_dataset_free(ds: *mut FaDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

unsafe fn train(
    ds: *const FaDataset,
    opts: *const FaTrainOptions,
    role: Role,
    baseline: *const FaModel,
    out: *mut *mut FaModel,
) -> FaStatus {
    guard(|| {
        let ds = &reference(ds, "dataset")?.0;
        let cfg = config(reference(opts, "options")?)?;
        if cfg.task != ds.task() {
            return Err(invalid("options task does not match the dataset"));
        }
        let model = match role {
            Role::Baseline => fit_baseline(ds, &cfg)?,
            Role::Joint => fit_joint(ds, &cfg)?.model,
            Role::Adjuster => {
                let base = &reference(baseline, "baseline")?.0;
                if base.feature_names != ds.feature_names() {
                    return Err(invalid("baseline was trained on different features"));
                }
                let input = if cfg.penalty.needs_labels() {
                    AdjustInput::labeled(ds)
                } else {
                    AdjustInput::unlabeled(ds)
                };
                fit_adjuster(&base.model, input, &cfg)?.model
            }
        };
        let (lambda, penalty) = match role {
            Role::Baseline => (0.0, None),
            _ => (cfg.lambda, Some(cfg.penalty.to_string())),
        };
        emit(out, FaModel(ModelFile::new(role, lambda, penalty, ds.feature_names().to_vec(), model)))
    })
}

/// Trains the unconstrained baseline.
///
/// # Safety
/// Handles must be live; `opts` must point to an options struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_train_baseline(
    ds: *const FaDataset,
    opts: *const FaTrainOptions,
    out: *mut *mut FaModel,
) -> FaStatus {
    train(ds, opts, Role::Baseline, ptr::null(), out)
}

/// Trains a model with the fairness penalty in its objective.
///
/// # Safety
/// As for `fa_train_baseline`.
#[no_mangle]
pub unsafe extern "C" fn fa_train_joint(
    ds: *const FaDataset,
    opts: *const FaTrainOptions,
    out: *mut *mut FaModel,
) -> FaStatus {
    train(ds, opts, Role::Joint, ptr::null(), out)
}

/// Trains an offset model on top of `baseline`. Labels in `ds` are read only
/// by penalties that need them.
///
/// # Safety
/// As for `fa_train_baseline`; `baseline` must be a live model handle.
#[no_mangle]
pub unsafe extern "C" fn fa_train_adjuster(
    baseline: *const FaModel,
    ds: *const FaDataset,
    opts: *const FaTrainOptions,
    out: *mut *mut FaModel,
) -> FaStatus {
    train(ds, opts, Role::Adjuster, baseline, out)
}

/// Raw scores (logits for classification) of `n` rows into `out`.
///
/// # Safety
/// `x` must hold `n * d` doubles and `out` `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn fa_model_predict(
    model: *const FaModel,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let m = &reference(model, "model")?.0;
        let scores = m.model.predict(&matrix(x, n, d)?)?;
        write_scores(&scores.values, out)
    })
}

/// Baseline plus adjuster scores.
///
/// # Safety
/// As for `fa_model_predict`.
#[no_mangle]
pub unsafe extern "C" fn fa_model_predict_adjusted(
    baseline: *const FaModel,
    adjuster: *const FaModel,
    x: *const f64,
    n: usize,
    d: usize,
    out: *mut f64,
) -> FaStatus {
    guard(|| {
        let f = &reference(baseline, "baseline")?.0;
        let g = &reference(adjuster, "adjuster")?.0;
        let scores = predict_adjusted(&f.model, &g.model, &matrix(x, n, d)?)?;
        write_scores(&scores.values, out)
    })
}

unsafe fn write_scores(values: &[f64], out: *mut f64) -> Result<(), Failure> {
    if values.is_empty() {
        return Ok(());
    }
    if out.is_null() {
        return Err(null("out"));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Number of input features, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn fa_model_n_features(model: *const FaModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.model.n_features())
}

/// `FA_TASK_*` of the model, or `UINT32_MAX` for NULL.
///
/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn fa_model_task(model: *const FaModel) -> u32 {
    model.as_ref().map_or(u32::MAX, |m| task_code(m.0.model.task()))
}

/// Writes the model as a JSON model file.
///
/// # Safety
/// `model` must be live and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn fa_model_save(model: *const FaModel, path: *const c_char) -> FaStatus {
    guard(|| {
        let m = &reference(model, "model")?.0;
        m.save(PathBuf::from(string(path, "path")?))?;
        Ok(())
    })
}

/// Reads a JSON model file.
///
/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fa_model_load(path: *const c_char, out: *mut *mut FaModel) -> FaStatus {
    guard(|| {
        let file = ModelFile::load(PathBuf::from(string(path, "path")?))?;
        emit(out, FaModel(file))
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fa_model_free(model: *mut FaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Accuracy and disparate impact of logits against 0/1 labels.
///
/// # Safety
/// `logits` and `labels` must hold `n` doubles, `protected` `n` bytes;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fa_evaluate(
    logits: *const f64,
    labels: *const f64,
    protected: *const u8,
    n: usize,
    favorable: u8,
    out: *mut FaEvaluation,
) -> FaStatus {
    guard(|| {
        let e = evaluate_parts(
            slice(logits, n, "logits")?,
            slice(labels, n, "labels")?,
            slice(protected, n, "protected")?,
            favorable,
        )?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = FaEvaluation {
            accuracy: e.accuracy,
            disparate_impact: e.disparate_impact.unwrap_or(f64::NAN),
            rate_protected: e.favorable_rate_protected,
            rate_unprotected: e.favorable_rate_unprotected,
        };
        Ok(())
    })
}
