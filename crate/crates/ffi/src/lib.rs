//! C ABI for the recommendation toolkit: opaque handles, integer status
//! codes, and JSON strings at the boundary.
//!
//! Conventions:
//! - Every fallible function returns a [`TrStatus`]; results come back
//!   through out-pointers that are written only when the status is `TR_OK`.
//! - Strings returned by the library are NUL-terminated UTF-8, allocated by
//!   the library, and must be released with [`tr_string_free`].
//! - Opaque handles are released with their matching `tr_*_free`; passing
//!   NULL to a `free` is a no-op. Handles are not thread-safe to mutate
//!   concurrently but may be moved between threads.
//! - After any non-`TR_OK` return, [`tr_last_error_message`] yields a
//!   human-readable description of the failure on the calling thread.
//! - JSON shapes match the toolkit's file formats: worlds, datasets, and
//!   models travel inside their versioned envelopes (`format_version` plus
//!   the payload field), so strings and files are interchangeable.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use temptrec::error::Error;
use temptrec::estimation::{
    fit, Dataset, EstimatedModel, TrainConfig, DATASET_FORMAT_VERSION, MODEL_FORMAT_VERSION,
};
use temptrec::harness::{replicate, ExperimentConfig};
use temptrec::model::{World, WORLD_FORMAT_VERSION};
use temptrec::policy::{recommend, PerfectInfo, PolicyKind};
use temptrec::synth::{make_world, ScenarioConfig};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrStatus {
    /// Success; out-pointers were written.
    TrOk = 0,
    /// A required pointer argument was NULL.
    TrNullPointer = 1,
    /// A string argument was not valid UTF-8.
    TrInvalidUtf8 = 2,
    /// JSON failed to parse or serialize.
    TrJson = 3,
    /// A configuration violated its documented invariants.
    TrConfig = 4,
    /// Malformed input data or an out-of-range index.
    TrInput = 5,
    /// Model training left the finite domain.
    TrDiverged = 6,
    /// An instance exceeded the exhaustive-search size limits.
    TrTooLarge = 7,
    /// Too few observations for the requested operation.
    TrInsufficientData = 8,
    /// File-system failure.
    TrIo = 9,
    /// The library caught a panic; state may be stale but the process is intact.
    TrPanic = 10,
}

fn status_of(err: &Error) -> TrStatus {
    match err {
        Error::DimensionMismatch { .. } | Error::Config(_) => TrStatus::TrConfig,
        Error::Input(_) | Error::InvalidRound(_) | Error::Parse { .. } => TrStatus::TrInput,
        Error::Diverged { .. } => TrStatus::TrDiverged,
        Error::TooLarge(_) => TrStatus::TrTooLarge,
        Error::InsufficientData(_) => TrStatus::TrInsufficientData,
        Error::Io { .. } => TrStatus::TrIo,
        Error::Json(_) => TrStatus::TrJson,
    }
}

type CallResult = Result<(), (TrStatus, String)>;

fn fail(status: TrStatus, msg: impl Into<String>) -> (TrStatus, String) {
    (status, msg.into())
}

fn from_error(err: Error) -> (TrStatus, String) {
    (status_of(&err), err.to_string())
}

fn from_json_error(err: serde_json::Error) -> (TrStatus, String) {
    (TrStatus::TrJson, err.to_string())
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let sanitized = msg.replace('\0', "\u{fffd}");
    let stored = CString::new(sanitized).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(stored));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Runs a call body, converting failures and panics into status codes and
/// recording their message for [`tr_last_error_message`].
fn guard<F: FnOnce() -> CallResult>(body: F) -> TrStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_last_error();
            TrStatus::TrOk
        }
        Ok(Err((status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic inside the library".to_string());
            set_last_error(&msg);
            TrStatus::TrPanic
        }
    }
}

/// # Safety
/// `ptr` must be NULL or point to a NUL-terminated string.
unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, (TrStatus, String)> {
    if ptr.is_null() {
        return Err(fail(TrStatus::TrNullPointer, format!("{name} must not be NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|e| fail(TrStatus::TrInvalidUtf8, format!("{name}: {e}")))
}

fn non_null<T>(ptr: *const T, name: &str) -> CallResult {
    if ptr.is_null() {
        Err(fail(TrStatus::TrNullPointer, format!("{name} must not be NULL")))
    } else {
        Ok(())
    }
}

fn non_null_mut<T>(ptr: *mut T, name: &str) -> CallResult {
    non_null(ptr as *const T, name)
}

/// # Safety
/// `out` must be a valid, writable pointer.
unsafe fn write_string(text: String, out: *mut *mut c_char) -> CallResult {
    let owned = CString::new(text)
        .map_err(|e| fail(TrStatus::TrJson, format!("interior NUL in output: {e}")))?;
    *out = owned.into_raw();
    Ok(())
}

/// A simulated world behind an opaque pointer.
pub struct TrWorld(World);

/// A fitted behavioral model plus the configuration that produced it.
pub struct TrModel {
    model: EstimatedModel,
    config: TrainConfig,
}

/// Returns the library version as a string. Release with [`tr_string_free`].
#[no_mangle]
pub extern "C" fn tr_version() -> *mut c_char {
    CString::new(env!("CARGO_PKG_VERSION"))
        .expect("version string has no NUL")
        .into_raw()
}

/// Releases a string returned by this library. NULL is a no-op.
///
/// # Safety
/// `s` must be NULL or a pointer previously returned by this library and not
/// yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Returns a copy of the calling thread's last error message, or NULL when
/// the last call on this thread succeeded. Release with [`tr_string_free`].
#[no_mangle]
pub extern "C" fn tr_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => std::ptr::null_mut(),
    })
}

/// Generates a synthetic world from a scenario configuration JSON object
/// (users, items, outside_options, dim, scenario, item_draws, seed).
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_world` must be
/// writable. On `TR_OK` the caller owns `*out_world`.
#[no_mangle]
pub unsafe extern "C" fn tr_world_generate(
    config_json: *const c_char,
    out_world: *mut *mut TrWorld,
) -> TrStatus {
    guard(|| {
        non_null_mut(out_world, "out_world")?;
        let text = str_arg(config_json, "config_json")?;
        let config: ScenarioConfig = serde_json::from_str(text).map_err(from_json_error)?;
        let world = make_world(&config).map_err(from_error)?;
        *out_world = Box::into_raw(Box::new(TrWorld(world)));
        Ok(())
    })
}

/// Parses a world from its versioned JSON envelope
/// (`{"format_version": 1, "world": {...}}`) and validates it.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_world` must be writable. On
/// `TR_OK` the caller owns `*out_world`.
#[no_mangle]
pub unsafe extern "C" fn tr_world_from_json(
    json: *const c_char,
    out_world: *mut *mut TrWorld,
) -> TrStatus {
    guard(|| {
        non_null_mut(out_world, "out_world")?;
        let text = str_arg(json, "json")?;
        let value: serde_json::Value = serde_json::from_str(text).map_err(from_json_error)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(WORLD_FORMAT_VERSION)) {
            return Err(fail(
                TrStatus::TrInput,
                format!("world payload must carry format_version {WORLD_FORMAT_VERSION}"),
            ));
        }
        let body = value
            .get("world")
            .ok_or_else(|| fail(TrStatus::TrInput, "world payload is missing the 'world' field"))?;
        let world: World = serde_json::from_value(body.clone()).map_err(from_json_error)?;
        world.validate().map_err(from_error)?;
        *out_world = Box::into_raw(Box::new(TrWorld(world)));
        Ok(())
    })
}

/// Serializes a world into the same versioned JSON envelope the toolkit's
/// files use. Release the string with [`tr_string_free`].
///
/// # Safety
/// `world` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_world_to_json(
    world: *const TrWorld,
    out_json: *mut *mut c_char,
) -> TrStatus {
    guard(|| {
        non_null(world, "world")?;
        non_null_mut(out_json, "out_json")?;
        let world = &(*world).0;
        let envelope = serde_json::json!({
            "format_version": WORLD_FORMAT_VERSION,
            "world": world,
        });
        let text = serde_json::to_string(&envelope).map_err(from_json_error)?;
        write_string(text, out_json)
    })
}

/// Reports a world's user and item counts.
///
/// # Safety
/// `world` must be a live handle; the out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_world_counts(
    world: *const TrWorld,
    out_users: *mut usize,
    out_items: *mut usize,
) -> TrStatus {
    guard(|| {
        non_null(world, "world")?;
        non_null_mut(out_users, "out_users")?;
        non_null_mut(out_items, "out_items")?;
        *out_users = (*world).0.users.len();
        *out_items = (*world).0.items.len();
        Ok(())
    })
}

/// Releases a world handle. NULL is a no-op.
///
/// # Safety
/// `world` must be NULL or a handle this library returned, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_world_free(world: *mut TrWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Builds a recommendation slate for one user under perfect information
/// about this world. `policy` is a policy name (`greedy_perfect`,
/// `pure_enrichment`, `pure_temptation`, `ratings_based`, `click_based`);
/// the slate of item ids is returned as a JSON array. An empty array means
/// the policy declines to recommend this round.
///
/// # Safety
/// `world` must be a live handle, `policy` a NUL-terminated string, and
/// `out_slate_json` writable.
#[no_mangle]
pub unsafe extern "C" fn tr_recommend(
    world: *const TrWorld,
    policy: *const c_char,
    user_index: usize,
    slate_size: usize,
    out_slate_json: *mut *mut c_char,
) -> TrStatus {
    guard(|| {
        non_null(world, "world")?;
        non_null_mut(out_slate_json, "out_slate_json")?;
        let name = str_arg(policy, "policy")?;
        let kind = parse_policy(name)?;
        let world = &(*world).0;
        if user_index >= world.users.len() {
            return Err(fail(
                TrStatus::TrInput,
                format!("user_index {user_index} out of range ({} users)", world.users.len()),
            ));
        }
        if kind == PolicyKind::GreedyEstimated {
            return Err(fail(
                TrStatus::TrInput,
                "greedy_estimated needs a fitted model; run the experiment harness instead",
            ));
        }
        let info = PerfectInfo::new(world).map_err(from_error)?;
        let available = world.available_items(user_index);
        let slate = recommend(kind, &info, user_index, &available, slate_size);
        let ids: Vec<u64> = slate.iter().map(|id| id.0).collect();
        let text = serde_json::to_string(&ids).map_err(from_json_error)?;
        write_string(text, out_slate_json)
    })
}

fn parse_policy(name: &str) -> Result<PolicyKind, (TrStatus, String)> {
    const ALL: [PolicyKind; 6] = [
        PolicyKind::GreedyPerfect,
        PolicyKind::GreedyEstimated,
        PolicyKind::PureEnrichment,
        PolicyKind::PureTemptation,
        PolicyKind::RatingsBased,
        PolicyKind::ClickBased,
    ];
    ALL.into_iter()
        .find(|kind| kind.name() == name)
        .ok_or_else(|| fail(TrStatus::TrInput, format!("unknown policy '{name}'")))
}

/// Runs a full synthetic experiment from an experiment configuration JSON
/// object and returns the metrics report as JSON. This can take minutes at
/// paper scale; size the configuration accordingly.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_report_json` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn tr_experiment_run(
    config_json: *const c_char,
    out_report_json: *mut *mut c_char,
) -> TrStatus {
    guard(|| {
        non_null_mut(out_report_json, "out_report_json")?;
        let text = str_arg(config_json, "config_json")?;
        let config: ExperimentConfig = serde_json::from_str(text).map_err(from_json_error)?;
        let report = replicate(&config).map_err(from_error)?;
        let text = serde_json::to_string(&report).map_err(from_json_error)?;
        write_string(text, out_report_json)
    })
}

/// Fits the behavioral model to a dataset JSON envelope
/// (`{"format_version": 1, "dataset": {...}}`) under a training
/// configuration JSON object. Per-user outside expectations are inferred
/// from the dataset's outside consumptions.
///
/// # Safety
/// The strings must be NUL-terminated; `out_model` must be writable. On
/// `TR_OK` the caller owns `*out_model`.
#[no_mangle]
pub unsafe extern "C" fn tr_fit(
    dataset_json: *const c_char,
    train_json: *const c_char,
    out_model: *mut *mut TrModel,
) -> TrStatus {
    guard(|| {
        non_null_mut(out_model, "out_model")?;
        let dataset_text = str_arg(dataset_json, "dataset_json")?;
        let train_text = str_arg(train_json, "train_json")?;
        let value: serde_json::Value =
            serde_json::from_str(dataset_text).map_err(from_json_error)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(DATASET_FORMAT_VERSION)) {
            return Err(fail(
                TrStatus::TrInput,
                format!("dataset payload must carry format_version {DATASET_FORMAT_VERSION}"),
            ));
        }
        let body = value.get("dataset").ok_or_else(|| {
            fail(TrStatus::TrInput, "dataset payload is missing the 'dataset' field")
        })?;
        let dataset: Dataset = serde_json::from_value(body.clone()).map_err(from_json_error)?;
        dataset.validate().map_err(from_error)?;
        let config: TrainConfig = serde_json::from_str(train_text).map_err(from_json_error)?;
        let outside = dataset.outside_enrichment_means();
        let model = fit(&dataset, &config, &outside).map_err(from_error)?;
        *out_model = Box::into_raw(Box::new(TrModel { model, config }));
        Ok(())
    })
}

/// Serializes a fitted model into the checkpoint JSON envelope
/// (`{"format_version": 1, "config": {...}, "model": {...}}`). Release the
/// string with [`tr_string_free`].
///
/// # Safety
/// `model` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_model_to_json(
    model: *const TrModel,
    out_json: *mut *mut c_char,
) -> TrStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null_mut(out_json, "out_json")?;
        let handle = &*model;
        let envelope = serde_json::json!({
            "format_version": MODEL_FORMAT_VERSION,
            "config": handle.config,
            "model": handle.model,
        });
        let text = serde_json::to_string(&envelope).map_err(from_json_error)?;
        write_string(text, out_json)
    })
}

/// Parses a fitted model from its checkpoint JSON envelope and validates it.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_model` must be writable. On
/// `TR_OK` the caller owns `*out_model`.
#[no_mangle]
pub unsafe extern "C" fn tr_model_from_json(
    json: *const c_char,
    out_model: *mut *mut TrModel,
) -> TrStatus {
    guard(|| {
        non_null_mut(out_model, "out_model")?;
        let text = str_arg(json, "json")?;
        let value: serde_json::Value = serde_json::from_str(text).map_err(from_json_error)?;
        let version = value.get("format_version").and_then(|v| v.as_u64());
        if version != Some(u64::from(MODEL_FORMAT_VERSION)) {
            return Err(fail(
                TrStatus::TrInput,
                format!("model payload must carry format_version {MODEL_FORMAT_VERSION}"),
            ));
        }
        let model_body = value
            .get("model")
            .ok_or_else(|| fail(TrStatus::TrInput, "model payload is missing the 'model' field"))?;
        let config_body = value.get("config").ok_or_else(|| {
            fail(TrStatus::TrInput, "model payload is missing the 'config' field")
        })?;
        let model: EstimatedModel =
            serde_json::from_value(model_body.clone()).map_err(from_json_error)?;
        let config: TrainConfig =
            serde_json::from_value(config_body.clone()).map_err(from_json_error)?;
        model.validate().map_err(from_error)?;
        *out_model = Box::into_raw(Box::new(TrModel { model, config }));
        Ok(())
    })
}

/// Predicts the rating user `user_index` would leave after consuming item
/// `item_index`, under the model's own rating map.
///
/// # Safety
/// `model` must be a live handle; `out_rating` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tr_model_predicted_rating(
    model: *const TrModel,
    user_index: usize,
    item_index: usize,
    out_rating: *mut f64,
) -> TrStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null_mut(out_rating, "out_rating")?;
        let handle = &*model;
        if user_index >= handle.model.users.len() {
            return Err(fail(
                TrStatus::TrInput,
                format!(
                    "user_index {user_index} out of range ({} users)",
                    handle.model.users.len()
                ),
            ));
        }
        if item_index >= handle.model.items.len() {
            return Err(fail(
                TrStatus::TrInput,
                format!(
                    "item_index {item_index} out of range ({} items)",
                    handle.model.items.len()
                ),
            ));
        }
        *out_rating = handle.model.predicted_rating(user_index, item_index, &handle.config.rating_map);
        Ok(())
    })
}

/// Releases a model handle. NULL is a no-op.
///
/// # Safety
/// `model` must be NULL or a handle this library returned, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tr_model_free(model: *mut TrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
