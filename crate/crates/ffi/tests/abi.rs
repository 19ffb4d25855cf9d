use std::collections::BTreeSet;
use std::ffi::{c_char, CString};
use std::ptr;

use sustain_core::features::FEATURE_COUNT;
use sustain_core::model::{monthly_forecast_series, predict, save_checkpoint, ModelConfig};
use sustain_core::router::{save_bundle, train_bundle};
use sustain_core::synth::{four_cluster_corpus, planted_corpus};
use sustain_core::train::train;
use sustain_ffi::*;

fn flat(series: &sustain_core::features::FeatureSeries) -> Vec<f64> {
    series
        .months
        .iter()
        .flat_map(|m| m.values.iter().copied())
        .collect()
}

fn last_error() -> String {
    unsafe {
        let needed = sustain_last_error(ptr::null_mut(), 0);
        let mut buf = vec![0u8; needed + 1];
        sustain_last_error(buf.as_mut_ptr().cast::<c_char>(), buf.len());
        buf.truncate(needed);
        String::from_utf8(buf).unwrap()
    }
}

#[test]
fn model_handle_matches_library_predictions_exactly() {
    let corpus = planted_corpus(40, 10, 5);
    let cfg = ModelConfig {
        seed: 5,
        runs: 3,
        max_epochs: 60,
        ..ModelConfig::default()
    };
    let (model, _) = train(&corpus, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&model, &path).unwrap();

    unsafe {
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut SustainModel = ptr::null_mut();
        assert_eq!(sustain_model_load(cpath.as_ptr(), &mut handle), SustainStatus::Ok);
        assert!(!handle.is_null());

        for series in corpus.iter().take(8) {
            let buf = flat(series);
            let months = series.months.len();

            let mut p = f64::NAN;
            assert_eq!(
                sustain_model_predict(handle, buf.as_ptr(), months, &mut p),
                SustainStatus::Ok
            );
            assert_eq!(p, predict(&model, series).unwrap());

            let mut forecast = vec![f64::NAN; months];
            assert_eq!(
                sustain_model_forecast_series(handle, buf.as_ptr(), months, forecast.as_mut_ptr()),
                SustainStatus::Ok
            );
            assert_eq!(forecast, monthly_forecast_series(&model, series).unwrap());
        }

        sustain_model_free(handle);
    }
}

#[test]
fn bundle_handle_routes_like_the_library() {
    let corpus = four_cluster_corpus(8, 6, 13);
    let cfg = ModelConfig {
        seed: 13,
        runs: 3,
        max_epochs: 60,
        ..ModelConfig::default()
    };
    let (bundle, _) = train_bundle(&corpus, &BTreeSet::new(), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    save_bundle(&bundle, &path).unwrap();

    unsafe {
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut SustainBundle = ptr::null_mut();
        assert_eq!(sustain_bundle_load(cpath.as_ptr(), &mut handle), SustainStatus::Ok);

        for series in corpus.iter().step_by(5) {
            let (foundation, p_lib) = bundle.route_and_predict(series).unwrap();
            let buf = flat(series);
            let mut name = [0 as c_char; 8];
            let mut p = f64::NAN;
            assert_eq!(
                sustain_bundle_route(
                    handle,
                    buf.as_ptr(),
                    series.months.len(),
                    name.as_mut_ptr(),
                    name.len(),
                    &mut p,
                ),
                SustainStatus::Ok
            );
            let got = std::ffi::CStr::from_ptr(name.as_ptr()).to_str().unwrap();
            assert_eq!(got, foundation.to_string());
            assert_eq!(p, p_lib);
        }

        sustain_bundle_free(handle);
    }
}

#[test]
fn bad_arguments_and_bad_files_report_distinct_statuses() {
    let dir = tempfile::tempdir().unwrap();
    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{not json").unwrap();

    let corpus = planted_corpus(40, 6, 3);
    let cfg = ModelConfig {
        seed: 3,
        runs: 1,
        max_epochs: 40,
        ..ModelConfig::default()
    };
    let (model, _) = train(&corpus, &cfg).unwrap();
    let path = dir.path().join("model.json");
    save_checkpoint(&model, &path).unwrap();

    unsafe {
        let mut handle: *mut SustainModel = ptr::null_mut();
        assert_eq!(
            sustain_model_load(ptr::null(), &mut handle),
            SustainStatus::NullArgument
        );
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        assert_eq!(
            sustain_model_load(cpath.as_ptr(), ptr::null_mut()),
            SustainStatus::NullArgument
        );

        let missing = CString::new(dir.path().join("absent.json").to_str().unwrap()).unwrap();
        assert_eq!(sustain_model_load(missing.as_ptr(), &mut handle), SustainStatus::Io);
        assert!(last_error().contains("absent.json"), "got: {}", last_error());

        let cgarbled = CString::new(garbled.to_str().unwrap()).unwrap();
        assert_eq!(
            sustain_model_load(cgarbled.as_ptr(), &mut handle),
            SustainStatus::BadCheckpoint
        );

        assert_eq!(sustain_model_load(cpath.as_ptr(), &mut handle), SustainStatus::Ok);
        assert_eq!(last_error(), "");

        let good = vec![0.25; FEATURE_COUNT * 2];
        let mut p = 0.0;
        assert_eq!(
            sustain_model_predict(handle, good.as_ptr(), 0, &mut p),
            SustainStatus::BadInput
        );
        assert_eq!(
            sustain_model_predict(handle, ptr::null(), 2, &mut p),
            SustainStatus::NullArgument
        );
        let mut poisoned = good.clone();
        poisoned[FEATURE_COUNT + 3] = f64::NAN;
        assert_eq!(
            sustain_model_predict(handle, poisoned.as_ptr(), 2, &mut p),
            SustainStatus::BadInput
        );
        assert!(last_error().contains("finite"));
        assert_eq!(
            sustain_model_predict(handle, good.as_ptr(), 2, &mut p),
            SustainStatus::Ok
        );

        sustain_model_free(handle);
        sustain_model_free(ptr::null_mut());
    }
}

#[test]
fn undersized_foundation_buffer_is_rejected_before_writing() {
    let corpus = four_cluster_corpus(8, 6, 29);
    let cfg = ModelConfig {
        seed: 29,
        runs: 1,
        max_epochs: 40,
        ..ModelConfig::default()
    };
    let (bundle, _) = train_bundle(&corpus, &BTreeSet::new(), &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bundle.json");
    save_bundle(&bundle, &path).unwrap();

    unsafe {
        let cpath = CString::new(path.to_str().unwrap()).unwrap();
        let mut handle: *mut SustainBundle = ptr::null_mut();
        assert_eq!(sustain_bundle_load(cpath.as_ptr(), &mut handle), SustainStatus::Ok);

        let buf = flat(&corpus[0]);
        let mut name = [7 as c_char; 2];
        let mut p = f64::NAN;
        assert_eq!(
            sustain_bundle_route(
                handle,
                buf.as_ptr(),
                corpus[0].months.len(),
                name.as_mut_ptr(),
                name.len(),
                &mut p,
            ),
            SustainStatus::BadInput
        );
        assert_eq!(name, [7, 7], "buffer must be untouched on failure");
        assert!(p.is_nan());
        assert!(last_error().contains("bytes"));

        sustain_bundle_free(handle);
        sustain_bundle_free(ptr::null_mut());
    }
}

#[test]
fn feature_count_matches_the_library_layout() {
    assert_eq!(sustain_feature_count(), FEATURE_COUNT);
}
