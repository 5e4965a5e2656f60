use std::path::Path;

use fullsum::config::load_config;
use fullsum::training::train;

#[test]
fn shipped_configs_build() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut names = Vec::new();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            for cfg in load_config(&path).unwrap() {
                let e = cfg.build().unwrap();
                assert_eq!(path.file_stem().unwrap().to_str().unwrap(), e.name);
                names.push(e.name);
            }
        }
    }
    names.sort();
    for required in ["bias_T5", "ffnn_ctc_n4", "ffnn_hybrid_n4"] {
        assert!(names.iter().any(|n| n == required), "{required}");
    }
}

#[test]
fn shipped_ffnn_hybrid_is_not_peaky() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ffnn_hybrid_n4.json");
    let e = load_config(&path).unwrap()[0].build().unwrap();
    let r = train(e.model, e.loss, &e.task, &e.config).unwrap();
    assert!(!r.peakiness.is_peaky_behavior);
    assert_eq!(r.sequence_error, 0);
}
