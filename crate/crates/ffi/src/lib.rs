//! C ABI over the forecasting engine: opaque handles, status codes, and a
//! thread-local last-error message. Every entry point catches panics and
//! never unwinds across the boundary.
//!
//! Ownership: constructors hand out heap pointers that the caller must
//! release with the matching `_free` function; strings returned by
//! [`ec_last_error`] stay owned by the library and are valid until the next
//! failing call on the same thread.

use epicast_core::dataio::{load_embeddings, load_stats_csv, load_stringency_csv, RegionDataset};
use epicast_core::eval::evaluate_model_on_test;
use epicast_core::model::MglModel;
use epicast_core::optim::TrainConfig;
use epicast_core::runconfig::RunConfig;
use epicast_core::synth::{synth_generate, SynthConfig};
use epicast_core::training::{
    apply_normalization, chronological_split_indices, fit_normalization, train, WindowSample,
};
use epicast_core::Error;
use libc::{c_char, size_t};
use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum EcStatus {
    Ok = 0,
    ConfigError = 2,
    IngestError = 3,
    NumericError = 4,
    IoError = 5,
    NullPointer = 6,
    Panic = 7,
}

/// Opaque date-aligned multi-modal dataset handle.
pub struct EcDataset {
    inner: RegionDataset,
}

/// Opaque trained-model handle; remembers the training protocol it was
/// produced with so evaluation reuses the same split and normalization.
pub struct EcModel {
    model: MglModel,
    train_cfg: TrainConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error message had NUL").unwrap());
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> EcStatus {
    match err.exit_code() {
        2 => EcStatus::ConfigError,
        3 => EcStatus::IngestError,
        4 => EcStatus::NumericError,
        _ => EcStatus::IoError,
    }
}

fn fail(err: Error) -> EcStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

/// Runs a closure at the FFI boundary, translating errors and panics.
fn guarded<F: FnOnce() -> Result<EcStatus, Error>>(f: F) -> EcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => fail(e),
        Err(_) => {
            set_error("panic inside epicast".into());
            EcStatus::Panic
        }
    }
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, Error> {
    if p.is_null() {
        return Err(Error::Config("unexpected NULL string".into()));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Config("string is not valid UTF-8".into()))
}

/// Last error message on this thread, or NULL if none was recorded.
/// The pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn ec_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map(|c| c.as_ptr()).unwrap_or(std::ptr::null()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ec_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Load and date-align the modalities. `embeddings_path` may be NULL for
/// statistics-plus-stringency datasets.
///
/// # Safety
/// Path arguments must be NUL-terminated strings; `out` must be non-NULL.
#[no_mangle]
pub unsafe extern "C" fn ec_dataset_load(
    stats_path: *const c_char,
    stringency_path: *const c_char,
    embeddings_path: *const c_char,
    roc_period: u32,
    out: *mut *mut EcDataset,
) -> EcStatus {
    if out.is_null() {
        set_error("out pointer is NULL".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        let stats = load_stats_csv(Path::new(cstr(stats_path)?))?;
        let stringency = load_stringency_csv(Path::new(cstr(stringency_path)?))?;
        let embeddings = if embeddings_path.is_null() {
            None
        } else {
            Some(load_embeddings(Path::new(cstr(embeddings_path)?))?)
        };
        let region = embeddings.as_ref().map(|e| e.region.clone()).unwrap_or_default();
        let ds = epicast_core::dataio::align(
            &stats,
            &stringency,
            embeddings.as_ref(),
            roc_period as usize,
            &region,
        )?;
        *out = Box::into_raw(Box::new(EcDataset { inner: ds }));
        Ok(EcStatus::Ok)
    })
}

/// Generate a synthetic dataset. `synth_toml` is the body of a `[synth]`
/// table (TOML key/value lines) or NULL for the defaults.
///
/// # Safety
/// `out` must be non-NULL; `synth_toml` NUL-terminated when given.
#[no_mangle]
pub unsafe extern "C" fn ec_dataset_synth(
    synth_toml: *const c_char,
    out: *mut *mut EcDataset,
) -> EcStatus {
    if out.is_null() {
        set_error("out pointer is NULL".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        let cfg: SynthConfig = if synth_toml.is_null() {
            SynthConfig::default()
        } else {
            toml::from_str(cstr(synth_toml)?)
                .map_err(|e| Error::Config(format!("synth config: {e}")))?
        };
        let ds = synth_generate(&cfg)?;
        *out = Box::into_raw(Box::new(EcDataset { inner: ds }));
        Ok(EcStatus::Ok)
    })
}

/// Number of aligned days, or 0 for a NULL handle.
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ec_dataset_days(ds: *const EcDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.len()
}

/// Number of graph nodes (0 when the dataset has no embedding modality).
///
/// # Safety
/// `ds` must be NULL or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn ec_dataset_nodes(ds: *const EcDataset) -> size_t {
    if ds.is_null() {
        return 0;
    }
    (*ds).inner.node_count()
}

/// # Safety
/// `ds` must come from a dataset constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ec_dataset_free(ds: *mut EcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Train a model on the dataset. `run_toml` holds `[model]` and optional
/// `[train]` tables (the same schema as the CLI config document); `seed`
/// and `horizon` override the corresponding fields.
///
/// # Safety
/// `ds`, `run_toml`, and `out` must be valid non-NULL pointers.
#[no_mangle]
pub unsafe extern "C" fn ec_train(
    ds: *const EcDataset,
    run_toml: *const c_char,
    seed: u64,
    horizon: u32,
    out: *mut *mut EcModel,
) -> EcStatus {
    if out.is_null() || ds.is_null() {
        set_error("NULL handle".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        let cfg: RunConfig = toml::from_str(cstr(run_toml)?)
            .map_err(|e| Error::Config(format!("run config: {e}")))?;
        let dataset = &(*ds).inner;
        let mut mc = epicast_core::commands::resolve_model_config(cfg.model_config()?, dataset);
        let mut tc = cfg.train_config();
        mc.horizon = horizon as usize;
        mc.window = tc.window;
        mc.validate()?;
        tc.seed = seed;
        let model = MglModel::init(&mc, seed)?;
        let outcome = train(model, dataset, &tc)?;
        *out = Box::into_raw(Box::new(EcModel { model: outcome.model, train_cfg: tc }));
        Ok(EcStatus::Ok)
    })
}

/// # Safety
/// `model` and `path` must be valid non-NULL pointers.
#[no_mangle]
pub unsafe extern "C" fn ec_model_save(model: *const EcModel, path: *const c_char) -> EcStatus {
    if model.is_null() {
        set_error("NULL model handle".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        (*model).model.save(Path::new(cstr(path)?))?;
        Ok(EcStatus::Ok)
    })
}

/// Load a checkpoint; evaluation will use the default training protocol
/// (last 20% of days as test, 10% of the rest as validation).
///
/// # Safety
/// `path` and `out` must be valid non-NULL pointers.
#[no_mangle]
pub unsafe extern "C" fn ec_model_load(path: *const c_char, out: *mut *mut EcModel) -> EcStatus {
    if out.is_null() {
        set_error("out pointer is NULL".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        let model = MglModel::load(Path::new(cstr(path)?))?;
        let mut train_cfg = TrainConfig::default();
        train_cfg.window = model.config.window;
        *out = Box::into_raw(Box::new(EcModel { model, train_cfg }));
        Ok(EcStatus::Ok)
    })
}

/// Forecast horizon of the model in days (0 for a NULL handle).
///
/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ec_model_horizon(model: *const EcModel) -> u32 {
    if model.is_null() {
        return 0;
    }
    (*model).model.config.horizon as u32
}

/// Targets predicted per day (0 for a NULL handle).
///
/// # Safety
/// `model` must be NULL or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn ec_model_output_dim(model: *const EcModel) -> size_t {
    if model.is_null() {
        return 0;
    }
    (*model).model.config.output_dim
}

/// Macro-averaged test metrics of the model on the dataset's chronological
/// test split. Any output pointer may be NULL to skip that metric; MAPE and
/// R² come back as NaN when undefined.
///
/// # Safety
/// `model` and `ds` must be valid handles.
#[no_mangle]
pub unsafe extern "C" fn ec_model_evaluate(
    model: *const EcModel,
    ds: *const EcDataset,
    mae: *mut f64,
    rmse: *mut f64,
    mape: *mut f64,
    r2: *mut f64,
) -> EcStatus {
    if model.is_null() || ds.is_null() {
        set_error("NULL handle".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        let m = &(*model).model;
        let eval = evaluate_model_on_test(m, &(*ds).inner, &(*model).train_cfg, "ffi")?;
        if !mae.is_null() {
            *mae = eval.macro_avg.mae;
        }
        if !rmse.is_null() {
            *rmse = eval.macro_avg.rmse;
        }
        if !mape.is_null() {
            *mape = eval.macro_avg.mape.unwrap_or(f64::NAN);
        }
        if !r2.is_null() {
            *r2 = eval.macro_avg.r2.unwrap_or(f64::NAN);
        }
        Ok(EcStatus::Ok)
    })
}

/// Forecast from the window ending on the dataset's last day. Writes one
/// de-normalized value per target; `out_len` must equal the model's output
/// dimension.
///
/// # Safety
/// `model`, `ds`, and `out` must be valid; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn ec_model_predict_latest(
    model: *const EcModel,
    ds: *const EcDataset,
    out: *mut f64,
    out_len: size_t,
) -> EcStatus {
    if model.is_null() || ds.is_null() || out.is_null() {
        set_error("NULL handle".into());
        return EcStatus::NullPointer;
    }
    guarded(|| {
        let m = &(*model).model;
        let tc = &(*model).train_cfg;
        let dataset = &(*ds).inner;
        if out_len != m.config.output_dim {
            return Err(Error::Config(format!(
                "out_len {} does not match output_dim {}",
                out_len, m.config.output_dim
            )));
        }
        let d = m.config.window;
        if dataset.len() < d {
            return Err(Error::Config(format!(
                "dataset has {} days, the model window needs {d}",
                dataset.len()
            )));
        }
        // normalize with statistics fitted on the training span, exactly as
        // during training
        let idx = chronological_split_indices(dataset.len(), tc.test_fraction, tc.val_fraction)?;
        let nz = fit_normalization(&dataset.slice_days(idx.train))?;
        let tail = dataset.slice_days(dataset.len() - d..dataset.len());
        let tail_norm = apply_normalization(&tail, &nz);
        let graph = match &tail_norm.embeddings {
            Some(_) => (0..d).map(|t| tail_norm.snapshot(t)).collect::<Result<Vec<_>, _>>()?,
            None => Vec::new(),
        };
        let window = WindowSample {
            stats: tail_norm.stats.clone(),
            regs: tail_norm.regulations.clone(),
            graph,
            target: epicast_core::Tensor::zeros(&[1, m.config.output_dim]),
            target_index: 0,
        };
        let pred_norm = m.forward(&window)?;
        for c in 0..out_len {
            *out.add(c) = nz.stats.invert_value(c, pred_norm.at2(0, c));
        }
        Ok(EcStatus::Ok)
    })
}

/// # Safety
/// `model` must come from a model constructor and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn ec_model_free(model: *mut EcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
