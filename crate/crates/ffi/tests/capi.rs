use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use altsim_ffi::*;

fn owned(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { altsim_string_free(s) };
    text
}

fn last_error() -> String {
    let p = altsim_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn generate(n: usize) -> *mut AltsimCatalog {
    let domains = [3usize, 3];
    let mut cat = ptr::null_mut();
    let status = unsafe { altsim_catalog_generate(7, n, 8, domains.as_ptr(), domains.len(), 0.1, &mut cat) };
    assert_eq!(status, AltsimStatus::Ok);
    cat
}

#[test]
fn catalog_lifecycle_and_neighbours() {
    let cat = generate(30);
    let mut len = 0;
    assert_eq!(unsafe { altsim_catalog_len(cat, &mut len) }, AltsimStatus::Ok);
    assert_eq!(len, 30);

    let query = CString::new("item-0003").unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { altsim_nearest_neighbors(cat, query.as_ptr(), 4, true, &mut json) }, AltsimStatus::Ok);
    let found: Vec<(String, f64)> = serde_json::from_str(&owned(json)).unwrap();
    assert_eq!(found.len(), 4);
    assert!(found.iter().all(|(id, _)| id != "item-0003"));
    assert!(found.windows(2).all(|w| w[0].1 >= w[1].1));

    let mut s = 0.0;
    assert_eq!(unsafe { altsim_item_similarity(cat, query.as_ptr(), query.as_ptr(), &mut s) }, AltsimStatus::Ok);
    assert!((s - 1.0).abs() < 1e-12);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("c.jsonl").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { altsim_catalog_save(cat, path.as_ptr()) }, AltsimStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { altsim_catalog_load(path.as_ptr(), &mut loaded) }, AltsimStatus::Ok);
    unsafe {
        altsim_catalog_free(loaded);
        altsim_catalog_free(cat);
        altsim_catalog_free(ptr::null_mut());
    }
}

#[test]
fn errors_map_to_status_codes() {
    let cat = generate(10);
    let missing = CString::new("nope").unwrap();
    let mut json = ptr::null_mut();
    let status = unsafe { altsim_nearest_neighbors(cat, missing.as_ptr(), 2, true, &mut json) };
    assert_eq!(status, AltsimStatus::NotFound);
    assert!(last_error().contains("nope"));
    assert!(json.is_null());

    let status = unsafe { altsim_catalog_len(ptr::null(), &mut 0) };
    assert_eq!(status, AltsimStatus::NullPointer);

    let (a, b) = ([1.0, 0.0], [0.0, 1.0, 0.0]);
    let mut s = 0.0;
    assert_eq!(unsafe { altsim_similarity(a.as_ptr(), b.as_ptr(), 2, &mut s) }, AltsimStatus::Ok);
    assert_eq!(s, 0.0);
    assert!(altsim_last_error_message().is_null());

    let bad = CString::new("max_turns = 0\n").unwrap();
    assert_eq!(unsafe { altsim_run_experiment(bad.as_ptr(), &mut json) }, AltsimStatus::Config);
    let unknown = CString::new("bogus = 1\n").unwrap();
    assert_ne!(unsafe { altsim_run_experiment(unknown.as_ptr(), &mut json) }, AltsimStatus::Ok);
    unsafe { altsim_catalog_free(cat) };
}

#[test]
fn metrics_and_kappa() {
    let ids: Vec<CString> = ["a", "b", "c", "d"].iter().map(|s| CString::new(*s).unwrap()).collect();
    let ranked: Vec<*const c_char> = ids.iter().map(|s| s.as_ptr()).collect();
    let mut v = 0.0;
    let rel = [ranked[2]];
    assert_eq!(
        unsafe { altsim_metric(AltsimMetric::Ndcg, ranked.as_ptr(), 4, rel.as_ptr(), 1, 10, &mut v) },
        AltsimStatus::Ok
    );
    assert!((v - 0.5).abs() < 1e-12);
    let rel = [ranked[3]];
    unsafe { altsim_metric(AltsimMetric::Mrr, ranked.as_ptr(), 4, rel.as_ptr(), 1, 10, &mut v) };
    assert_eq!(v, 0.25);
    unsafe { altsim_metric(AltsimMetric::SuccessAt1, ranked.as_ptr(), 4, rel.as_ptr(), 1, 10, &mut v) };
    assert_eq!(v, 0.0);

    let (a, b) = ([1u8, 1, 0, 0], [1u8, 0, 1, 0]);
    assert_eq!(unsafe { altsim_cohens_kappa(a.as_ptr(), b.as_ptr(), 4, &mut v) }, AltsimStatus::Ok);
    assert!(v.abs() < 1e-9);
    let bad = [2u8, 0, 0, 0];
    assert_eq!(
        unsafe { altsim_cohens_kappa(a.as_ptr(), bad.as_ptr(), 4, &mut v) },
        AltsimStatus::InvalidParameter
    );
}

#[test]
fn meta_simulator_switches_after_tolerance() {
    let cat = generate(30);
    let dir = tempfile::tempdir().unwrap();
    let alts_path = dir.path().join("alts.tsv");
    std::fs::write(&alts_path, "item-0001\titem-0002\n").unwrap();
    let path = CString::new(alts_path.to_str().unwrap()).unwrap();
    let mut alts = ptr::null_mut();
    assert_eq!(unsafe { altsim_alternatives_load(cat, path.as_ptr(), &mut alts) }, AltsimStatus::Ok);
    let mut sim = ptr::null_mut();
    assert_eq!(unsafe { altsim_meta_simulator_new(cat, alts, 1, &mut sim) }, AltsimStatus::Ok);
    // the handle keeps its inputs alive
    unsafe {
        altsim_alternatives_free(alts);
        altsim_catalog_free(cat);
    }

    let (shown, target) = (CString::new("item-0002").unwrap(), CString::new("item-0001").unwrap());
    let mut json = ptr::null_mut();
    let respond = |turn, json: &mut *mut c_char| unsafe {
        altsim_meta_respond(sim, turn, shown.as_ptr(), target.as_ptr(), json)
    };
    assert_eq!(respond(1, &mut json), AltsimStatus::Ok);
    let early: serde_json::Value = serde_json::from_str(&owned(json)).unwrap();
    assert_eq!(early["effective_target"], "item-0001");
    assert!(early["switch_event"].is_null());
    assert_eq!(respond(2, &mut json), AltsimStatus::Ok);
    let late: serde_json::Value = serde_json::from_str(&owned(json)).unwrap();
    assert_eq!(late["effective_target"], "item-0002");
    assert_eq!(late["switch_event"]["turn"], 2);
    unsafe { altsim_meta_simulator_free(sim) };
}

#[test]
fn experiment_round_trip() {
    let config = CString::new(
        "seed = 1\nsimulator = \"meta\"\nmax_turns = 5\nreport_turns = [3, 5]\n\
         [catalog.synthetic]\nn_items = 100\n[targets.sample]\nn = 8\n[alternatives.synthetic]\nseed = 1\n",
    )
    .unwrap();
    let mut json = ptr::null_mut();
    assert_eq!(unsafe { altsim_run_experiment(config.as_ptr(), &mut json) }, AltsimStatus::Ok, "{}", last_error());
    let report: serde_json::Value = serde_json::from_str(&owned(json)).unwrap();
    assert_eq!(report["targets"].as_array().unwrap().len(), 8);
    assert_eq!(unsafe { altsim_compare(config.as_ptr(), &mut json) }, AltsimStatus::Ok);
    let table: serde_json::Value = serde_json::from_str(&owned(json)).unwrap();
    assert_eq!(table["rows"][1]["label"], "w/");
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/altsim.h");
    assert!(header.is_file());
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&header)
            .output()
        else {
            eprintln!("{compiler} not available; skipping");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
