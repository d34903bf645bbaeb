use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use factmix::schema::{DatasetStore, Split};
use factmix::verifier::{self, BackendName, BackendRegistry, Checkpoint, CheckpointConfig, TrainConfig, Verifier};
use factmix_ffi::*;

fn take(s: *mut c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_string();
    unsafe { fm_string_free(s) };
    out
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

#[test]
fn verifier_handle_matches_the_library() {
    let store = DatasetStore::load(&fixtures().join("separable")).unwrap();
    let spec = factmix::mixture::MixtureSpec::with_store(&["moc"], factmix::mixture::Sampling::Concat, 1, &store).unwrap();
    let train = TrainConfig { epochs: 1, batch_size: 32, micro_batch: 16, lr: 0.01, ..TrainConfig::default() };
    let backend = BackendRegistry::default().open(BackendName::Toy, 0).unwrap();
    let outcome = verifier::train(&spec, &store, &train, backend.as_ref()).unwrap();
    let ckpt = Checkpoint {
        config: CheckpointConfig {
            model: outcome.params.config,
            train,
            mixture: spec,
            backend: BackendName::Toy,
            backend_seed: 0,
            label_map_version: factmix::schema::LABEL_MAP_VERSION,
        },
        params: outcome.params,
        metrics: outcome.log,
    };
    let dir = tempfile::tempdir().unwrap();
    ckpt.save(dir.path()).unwrap();
    let reference = Verifier::from_checkpoint(&ckpt, &BackendRegistry::default()).unwrap();

    let path = CString::new(dir.path().to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { fm_verifier_open(path.as_ptr(), &mut handle) }, FmStatus::Ok);
    for ex in store.split("moc", Split::Test).unwrap().iter().take(5) {
        let line = CString::new(factmix::schema::serialize(ex)).unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(unsafe { fm_verifier_predict_json(handle, line.as_ptr(), &mut out) }, FmStatus::Ok);
        let got: serde_json::Value = serde_json::from_str(&take(out)).unwrap();
        let want = reference.predict(ex).unwrap();
        assert_eq!(got["label"], want.label.code());
        let probs: Vec<f64> = serde_json::from_value(got["probs"].clone()).unwrap();
        assert!(probs.iter().zip(&want.probs).all(|(a, b)| (a - b).abs() < 1e-12));
    }
    unsafe { fm_verifier_free(handle) };

    let missing = CString::new("/no/such/checkpoint").unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { fm_verifier_open(missing.as_ptr(), &mut handle) }, FmStatus::Backend);
    assert!(handle.is_null());
    assert!(!unsafe { CStr::from_ptr(fm_last_error()) }.to_bytes().is_empty());
}

#[test]
fn metrics_prompt_and_normalize() {
    let preds = [0u8, 1, 1, 2, 0];
    let golds = [0u8, 1, 0, 2, 2];
    let mut f = 0.0;
    assert_eq!(unsafe { fm_f1(preds.as_ptr(), golds.as_ptr(), 5, FmAveraging::Micro, &mut f) }, FmStatus::Ok);
    assert!((f - 60.0).abs() < 1e-9);
    assert_eq!(unsafe { fm_f1(preds.as_ptr(), golds.as_ptr(), 0, FmAveraging::Macro, &mut f) }, FmStatus::Data);

    let claim = CString::new("A").unwrap();
    let evidence = CString::new("B").unwrap();
    let (mut sys, mut user) = (ptr::null_mut(), ptr::null_mut());
    assert_eq!(unsafe { fm_build_prompt(claim.as_ptr(), evidence.as_ptr(), 0, &mut sys, &mut user) }, FmStatus::Ok);
    assert_eq!(take(sys), factmix::explain::SYSTEM_PROMPT);
    assert_eq!(take(user), std::fs::read_to_string(fixtures().join("prompt/user_case1.txt")).unwrap());

    let dataset = CString::new("ph").unwrap();
    let split = CString::new("test").unwrap();
    let raw = CString::new(r#"{"claim_id": "p1", "claim": "Tea cures colds", "main_text": "No trial shows this.", "label": "false"}"#).unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { fm_normalize_json(dataset.as_ptr(), split.as_ptr(), raw.as_ptr(), &mut out) }, FmStatus::Ok);
    let ex = factmix::schema::parse(&take(out)).unwrap();
    assert_eq!((ex.id.as_str(), ex.label.code(), ex.split), ("p1", 1, Split::Test));

    let bad = CString::new("{").unwrap();
    assert_eq!(unsafe { fm_normalize_json(dataset.as_ptr(), split.as_ptr(), bad.as_ptr(), &mut out) }, FmStatus::InvalidArgument);
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "factmix.h"

int main(void) {
    uint32_t counts[4] = {2, 2, 2, 2};
    double k = 0.0;
    if (fm_fleiss_kappa(counts, 2, 2, &k) != FM_STATUS_OK) return 1;
    if (k > -0.3333 || k < -0.3334) return 2;
    double probs[3] = {0.20, 0.35, 0.45};
    uint8_t mapped = 9;
    if (fm_map_prediction(2, probs, 3, 0x3, &mapped) != FM_STATUS_OK || mapped != 1) return 3;
    if (fm_map_prediction(7, NULL, 0, 0x3, &mapped) != FM_STATUS_INVALID_ARGUMENT) return 4;
    if (strstr(fm_last_error(), "out of range") == NULL) return 5;
    char *sys = NULL, *user = NULL;
    if (fm_build_prompt("A", "B", 0, &sys, &user) != FM_STATUS_OK) return 6;
    if (strstr(user, "Relationship: supported") == NULL) return 7;
    fm_string_free(sys);
    fm_string_free(user);
    printf("%s\n", fm_version());
    return 0;
}
"#;

#[test]
fn header_compiles_and_links_from_c() {
    let Some(cc) = ["cc", "gcc", "clang"].into_iter().find(|c| Command::new(c).arg("--version").output().is_ok()) else {
        eprintln!("no C compiler; skipping");
        return;
    };
    // target/<profile>/deps/abi-xxxx -> target/<profile>
    let profile_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    let mut build = Command::new(std::env::var("CARGO").unwrap_or_else(|_| "cargo".into()));
    build.args(["build", "--quiet", "-p", "factmix-ffi", "--lib"]);
    if profile_dir.ends_with("release") {
        build.arg("--release");
    }
    assert!(build.status().unwrap().success(), "building the static library failed");
    let lib = profile_dir.join("libfactmix_ffi.a");
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new(cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
