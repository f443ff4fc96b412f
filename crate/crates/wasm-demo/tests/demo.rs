use dea_wasm_demo::{mini_dea, sampler_view, sbm_view, HISTOGRAM_BINS};

#[test]
fn embedding_separates_blocks() {
    let v = sbm_view(30, 0.3, 0.01, 4).unwrap();
    assert_eq!(v.points.len(), 60);
    assert_eq!(v.groups.iter().filter(|&&s| s == 1).count(), 30);
    assert!(v.homophily > 0.8);
    // the Fiedler coordinate splits the two blocks by sign
    let side = |s: usize| v.points.iter().zip(&v.groups).filter(|(_, &g)| g == s).map(|(p, _)| p[0].signum()).sum::<f64>();
    assert!(side(0) * side(1) < 0.0);
}

#[test]
fn sampler_view_matches_logistic_keep_probability() {
    let v = sampler_view(1.0, 2.0, 20_000, 7).unwrap();
    assert_eq!(v.histogram.len(), HISTOGRAM_BINS);
    assert_eq!(v.histogram.iter().sum::<usize>(), 20_000);
    assert!((v.keep_rate - v.keep_probability).abs() < 0.015);
    assert!(v.mean > 0.5);
}

#[test]
fn low_temperature_concentrates_at_the_ends() {
    let v = sampler_view(0.0, 0.05, 5_000, 1).unwrap();
    let ends = v.histogram[0] + v.histogram[HISTOGRAM_BINS - 1];
    assert!(ends as f64 > 0.9 * 5_000.0);
}

#[test]
fn mini_dea_reports_both_models() {
    let v = mini_dea(25, 0.2, 0.02, 1.0, 10, 0).unwrap();
    assert_eq!(v.pretrain_losses.len(), 10);
    assert_eq!(v.finetune_losses.len(), 10);
    assert!((0.0..=1.0).contains(&v.removed_fraction));
    assert!(v.before.accuracy > 0.0 && v.after.accuracy > 0.0);
    let json = serde_json::to_value(&v).unwrap();
    assert!(json["after"]["dp_mixed"].is_number());
}

#[test]
fn invalid_inputs_are_errors() {
    assert!(sampler_view(0.0, 0.0, 10, 0).is_err());
    assert!(mini_dea(10, 0.2, 0.02, -1.0, 5, 0).is_err());
}
