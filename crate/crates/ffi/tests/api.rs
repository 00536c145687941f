//! Drives the C ABI exactly as a C caller would: raw pointers in, status
//! codes out, strings released through the library's own free.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use temptrec_ffi::*;

fn cstring(s: &str) -> CString {
    CString::new(s).unwrap()
}

/// Takes ownership of a library-returned string and frees it properly.
unsafe fn take_string(ptr: *mut c_char) -> String {
    assert!(!ptr.is_null());
    let text = CStr::from_ptr(ptr).to_str().unwrap().to_string();
    tr_string_free(ptr);
    text
}

unsafe fn last_error() -> String {
    take_string(tr_last_error_message())
}

fn scenario_json() -> CString {
    cstring(
        r#"{
            "users": 4,
            "items": 10,
            "outside_options": 5,
            "dim": 2,
            "scenario": "similar",
            "item_draws": "gaussian",
            "seed": 11
        }"#,
    )
}

#[test]
fn status_codes_are_stable() {
    assert_eq!(TrStatus::TrOk as i32, 0);
    assert_eq!(TrStatus::TrNullPointer as i32, 1);
    assert_eq!(TrStatus::TrInvalidUtf8 as i32, 2);
    assert_eq!(TrStatus::TrJson as i32, 3);
    assert_eq!(TrStatus::TrConfig as i32, 4);
    assert_eq!(TrStatus::TrInput as i32, 5);
    assert_eq!(TrStatus::TrDiverged as i32, 6);
    assert_eq!(TrStatus::TrTooLarge as i32, 7);
    assert_eq!(TrStatus::TrInsufficientData as i32, 8);
    assert_eq!(TrStatus::TrIo as i32, 9);
    assert_eq!(TrStatus::TrPanic as i32, 10);
}

#[test]
fn version_is_a_semver_string() {
    unsafe {
        let version = take_string(tr_version());
        assert!(version.split('.').count() >= 3, "version was {version}");
    }
}

#[test]
fn null_arguments_are_reported_not_crashed() {
    unsafe {
        let mut world: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_generate(ptr::null(), &mut world), TrStatus::TrNullPointer);
        assert!(last_error().contains("NULL"));
        let config = scenario_json();
        assert_eq!(tr_world_generate(config.as_ptr(), ptr::null_mut()), TrStatus::TrNullPointer);
        // Frees tolerate NULL.
        tr_world_free(ptr::null_mut());
        tr_model_free(ptr::null_mut());
        tr_string_free(ptr::null_mut());
    }
}

#[test]
fn malformed_json_is_a_json_error_with_a_message() {
    unsafe {
        let bad = cstring("{not json");
        let mut world: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_generate(bad.as_ptr(), &mut world), TrStatus::TrJson);
        assert!(world.is_null());
        assert!(!last_error().is_empty());
    }
}

#[test]
fn invalid_configuration_maps_to_config_status() {
    unsafe {
        let zero_users = cstring(
            r#"{"users": 0, "items": 5, "outside_options": 2, "dim": 2,
                "scenario": "similar", "item_draws": "gaussian", "seed": 1}"#,
        );
        let mut world: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_generate(zero_users.as_ptr(), &mut world), TrStatus::TrConfig);
        assert!(world.is_null());
    }
}

#[test]
fn world_round_trips_through_json() {
    unsafe {
        let config = scenario_json();
        let mut world: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_generate(config.as_ptr(), &mut world), TrStatus::TrOk);
        let (mut users, mut items) = (0usize, 0usize);
        assert_eq!(tr_world_counts(world, &mut users, &mut items), TrStatus::TrOk);
        assert_eq!((users, items), (4, 10));

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(tr_world_to_json(world, &mut json), TrStatus::TrOk);
        let text = take_string(json);
        assert!(text.contains("\"format_version\""));

        let round = cstring(&text);
        let mut reloaded: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_from_json(round.as_ptr(), &mut reloaded), TrStatus::TrOk);
        let (mut users2, mut items2) = (0usize, 0usize);
        assert_eq!(tr_world_counts(reloaded, &mut users2, &mut items2), TrStatus::TrOk);
        assert_eq!((users2, items2), (users, items));

        // A wrong version envelope is rejected as input, not JSON.
        let bad = cstring(&text.replace("\"format_version\":1", "\"format_version\":99"));
        let mut rejected: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_from_json(bad.as_ptr(), &mut rejected), TrStatus::TrInput);
        assert!(rejected.is_null());

        tr_world_free(world);
        tr_world_free(reloaded);
    }
}

#[test]
fn recommendation_returns_a_slate_of_known_items() {
    unsafe {
        let config = scenario_json();
        let mut world: *mut TrWorld = ptr::null_mut();
        assert_eq!(tr_world_generate(config.as_ptr(), &mut world), TrStatus::TrOk);

        let policy = cstring("greedy_perfect");
        let mut slate_json: *mut c_char = ptr::null_mut();
        assert_eq!(
            tr_recommend(world, policy.as_ptr(), 0, 3, &mut slate_json),
            TrStatus::TrOk
        );
        let slate: Vec<u64> = serde_json::from_str(&take_string(slate_json)).unwrap();
        assert!(slate.len() <= 3);
        assert!(slate.iter().all(|&id| id < 10));

        // Every perfect-information policy is servable.
        for name in ["pure_enrichment", "pure_temptation", "ratings_based", "click_based"] {
            let policy = cstring(name);
            let mut out: *mut c_char = ptr::null_mut();
            assert_eq!(tr_recommend(world, policy.as_ptr(), 1, 4, &mut out), TrStatus::TrOk);
            tr_string_free(out);
        }

        let unknown = cstring("oracle_of_delphi");
        let mut out: *mut c_char = ptr::null_mut();
        assert_eq!(tr_recommend(world, unknown.as_ptr(), 0, 3, &mut out), TrStatus::TrInput);
        assert!(last_error().contains("oracle_of_delphi"));

        let estimated = cstring("greedy_estimated");
        assert_eq!(tr_recommend(world, estimated.as_ptr(), 0, 3, &mut out), TrStatus::TrInput);

        let mut bad_user: *mut c_char = ptr::null_mut();
        let policy = cstring("greedy_perfect");
        assert_eq!(
            tr_recommend(world, policy.as_ptr(), 99, 3, &mut bad_user),
            TrStatus::TrInput
        );

        tr_world_free(world);
    }
}

#[test]
fn experiment_runs_end_to_end_from_json() {
    unsafe {
        let config = cstring(
            r#"{
                "world": {"users": 3, "items": 8, "outside_options": 4, "dim": 2,
                           "scenario": "similar", "item_draws": "gaussian", "seed": 3},
                "total_rounds": 5,
                "warmup_rounds": 2,
                "policy_rounds": 3,
                "slate_size": 3,
                "replications": 1,
                "policies": ["greedy_perfect", "click_based"],
                "info": "perfect",
                "seed": 21,
                "train": {"alpha": 0.5, "latent_dim": 2, "learning_rate": 0.05,
                           "epochs": 10, "minibatch_size": 8, "init_scale": 0.1,
                           "weight_decay": 0.0, "convergence_tol": 1e-8, "seed": 0,
                           "lambda_f": "learn", "smoothing": "exact",
                           "rating_map": "identity"},
                "rating_map": "identity",
                "histogram": {"enrichment_range": [-20.0, 40.0],
                               "temptation_range": [-20.0, 40.0], "bins": [10, 10]}
            }"#,
        );
        let mut report_json: *mut c_char = ptr::null_mut();
        assert_eq!(tr_experiment_run(config.as_ptr(), &mut report_json), TrStatus::TrOk);
        let report: serde_json::Value = serde_json::from_str(&take_string(report_json)).unwrap();
        let per_policy = report.get("per_policy").and_then(|p| p.as_array()).unwrap();
        assert_eq!(per_policy.len(), 2);
        assert!(per_policy[0].get("mean_enrichment").unwrap().as_f64().unwrap().is_finite());
    }
}

fn dataset_json() -> String {
    let mut interactions = Vec::new();
    for j in 0..3u64 {
        for i in 0..4u64 {
            interactions.push(serde_json::json!({
                "user_id": j,
                "round": i,
                "slate": [i],
                "chosen": {"item": i},
                "rating": 1.0 + ((i + j) % 4) as f64,
                "outside_score": null,
                "outside_enrichment": null
            }));
        }
        interactions.push(serde_json::json!({
            "user_id": j,
            "round": 4,
            "slate": [0],
            "chosen": "outside",
            "rating": null,
            "outside_score": null,
            "outside_enrichment": 2.5
        }));
    }
    serde_json::json!({
        "format_version": 1,
        "dataset": {"interactions": interactions, "ratings": []}
    })
    .to_string()
}

#[test]
fn fit_yields_a_model_that_round_trips_and_predicts() {
    unsafe {
        let dataset = cstring(&dataset_json());
        let train = cstring(
            r#"{"alpha": 0.5, "latent_dim": 2, "learning_rate": 0.05, "epochs": 30,
                "minibatch_size": 8, "init_scale": 0.1, "weight_decay": 0.0,
                "convergence_tol": 1e-8, "seed": 5, "lambda_f": "learn",
                "smoothing": "exact", "rating_map": "identity"}"#,
        );
        let mut model: *mut TrModel = ptr::null_mut();
        assert_eq!(tr_fit(dataset.as_ptr(), train.as_ptr(), &mut model), TrStatus::TrOk);

        let mut rating = f64::NAN;
        assert_eq!(tr_model_predicted_rating(model, 0, 1, &mut rating), TrStatus::TrOk);
        assert!(rating.is_finite());
        let mut sink = f64::NAN;
        assert_eq!(tr_model_predicted_rating(model, 7, 0, &mut sink), TrStatus::TrInput);

        let mut json: *mut c_char = ptr::null_mut();
        assert_eq!(tr_model_to_json(model, &mut json), TrStatus::TrOk);
        let text = take_string(json);
        assert!(text.contains("\"format_version\""));

        let reload = cstring(&text);
        let mut model2: *mut TrModel = ptr::null_mut();
        assert_eq!(tr_model_from_json(reload.as_ptr(), &mut model2), TrStatus::TrOk);
        let mut rating2 = f64::NAN;
        assert_eq!(tr_model_predicted_rating(model2, 0, 1, &mut rating2), TrStatus::TrOk);
        assert_eq!(rating, rating2);

        tr_model_free(model);
        tr_model_free(model2);
    }
}

#[test]
fn generated_header_exports_the_full_surface() {
    let header_path = concat!(env!("CARGO_MANIFEST_DIR"), "/include/temptrec.h");
    let header = std::fs::read_to_string(header_path).unwrap();
    for symbol in [
        "TR_OK",
        "TR_PANIC",
        "typedef struct TrWorld TrWorld;",
        "typedef struct TrModel TrModel;",
        "tr_version",
        "tr_string_free",
        "tr_last_error_message",
        "tr_world_generate",
        "tr_world_from_json",
        "tr_world_to_json",
        "tr_world_counts",
        "tr_world_free",
        "tr_recommend",
        "tr_experiment_run",
        "tr_fit",
        "tr_model_to_json",
        "tr_model_from_json",
        "tr_model_predicted_rating",
        "tr_model_free",
    ] {
        assert!(header.contains(symbol), "header lacks {symbol}");
    }
}
