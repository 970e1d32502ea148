use degscope::config::{parse_threshold, ExperimentConfig, TextMap};
use degscope::dataset::DatasetFormat;
use degscope::Error;
use degscope_core::kge::Scorer;
use degscope_core::quality::{Distance, Threshold};
use std::path::Path;

#[test]
fn text_form_round_trips() {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset = Some("data/kg.tsv".into());
    cfg.format = DatasetFormat::OweDirectory;
    cfg.seed = 42;
    cfg.kge.scorer = Scorer::BilinearComplex;
    cfg.kge.learning_rate = 0.0123;
    cfg.quality.distance = Distance::Cosine;
    cfg.quality.thresholds.high = Threshold::Degree(12);
    cfg.mapper.hidden_dims = vec![];
    cfg.text.map = TextMap::Identity;
    cfg.correlation.permutation = false;
    let text = cfg.to_text();
    let mut back = ExperimentConfig::default();
    back.apply_text(Path::new("mem"), &text).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_text(), text);
}

#[test]
fn every_key_is_settable() {
    let cfg = ExperimentConfig::default();
    let mut other = ExperimentConfig::default();
    for (k, v) in cfg.entries() {
        other.set(k, &v).unwrap();
    }
    assert_eq!(other, cfg);
}

#[test]
fn comments_unknown_keys_and_bad_values() {
    let mut cfg = ExperimentConfig::default();
    cfg.apply_text(Path::new("c"), "# header\n\nkge.dim = 32  # trailing\n").unwrap();
    assert_eq!(cfg.kge.dim, 32);
    let e = cfg.apply_text(Path::new("c"), "kge.dim = 8\nkge.nope = 1\n").unwrap_err();
    assert!(matches!(e, Error::Parse { line: 2, .. }), "{e:?}");
    let e = cfg.apply_text(Path::new("c"), "kge.dim = many\n").unwrap_err();
    assert!(matches!(e, Error::Parse { line: 1, .. }));
    assert!(cfg.apply_text(Path::new("c"), "no equals sign\n").is_err());
    assert!(cfg.set("quality.distance", "manhattan").is_err());
}

#[test]
fn thresholds_parse_as_percentile_or_degree() {
    assert_eq!(parse_threshold("p25").unwrap(), Threshold::Percentile(25.0));
    assert_eq!(parse_threshold("7").unwrap(), Threshold::Degree(7));
    assert!(parse_threshold("p").is_err());
    assert!(parse_threshold("-3").is_err());
}

#[test]
fn global_seed_and_shared_thresholds_reach_stage_configs() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 77;
    cfg.quality.thresholds.low = Threshold::Degree(3);
    assert_eq!(cfg.sampler_config().seed, 77);
    assert_eq!(cfg.kge_config().seed, 77);
    assert_eq!(cfg.quality_config().seed, 77);
    let m = cfg.mapper_config();
    assert_eq!(m.seed, 77);
    assert_eq!(m.thresholds.low, Threshold::Degree(3));
}

#[test]
fn validation_rejects_bad_settings() {
    let mut cfg = ExperimentConfig::default();
    assert!(cfg.validate().is_ok());
    cfg.sobol.samples = 1000;
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.eval.holdout_fraction = 1.0;
    assert!(cfg.validate().is_err());
    let mut cfg = ExperimentConfig::default();
    cfg.quality.alpha = 1.5;
    assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
}
