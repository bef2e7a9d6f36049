use gae_core::attack::{attack_with_trace, AttackConfig};
use gae_core::model::Model;

/// Margin of class 0 for a two-class logistic model with logit `w·x + b`:
/// `σ(z) − (1 − σ(z)) = tanh(z / 2)`.
fn logistic_margin(w: f64, b: f64, x: f64) -> f64 {
    ((w * x + b) / 2.0).tanh()
}

/// First step whose replayed margin is `≤ 0`, if the margin started positive.
fn brute_force_crossing(margins: &[f64]) -> Option<usize> {
    if margins[0] <= 0.0 {
        return None;
    }
    (1..margins.len()).find(|&t| margins[t] <= 0.0)
}

#[test]
fn crosses_at_second_step() {
    // boundary at x = 0.5, start 0.2 on the class-0 side, steps of 0.15
    let (w, b) = (4.0, -2.0);
    let model = Model::logistic(&[w], b).unwrap();
    let cfg = AttackConfig::new(3, 0.15, 0.3).unwrap();
    let trace = attack_with_trace(&model, &[0.7], 0, &cfg).unwrap();

    let replayed: Vec<f64> = trace
        .iterates
        .iter()
        .map(|x| logistic_margin(w, b, x[0]))
        .collect();
    for (r, m) in replayed.iter().zip(&trace.margins) {
        assert!((r - m).abs() < 1e-12, "replayed {r}, recorded {m}");
    }
    assert_eq!(brute_force_crossing(&replayed), Some(2));
    assert_eq!(trace.crossing_step, Some(2));
    assert_eq!(trace.final_class, 1);
    let xs: Vec<f64> = trace.iterates.iter().map(|x| x[0]).collect();
    assert!((xs[1] - 0.55).abs() < 1e-12 && (xs[2] - 0.4).abs() < 1e-12);
}

#[test]
fn robust_point_survives_all_steps() {
    let (w, b) = (4.0, -2.0);
    let model = Model::logistic(&[w], b).unwrap();
    let cfg = AttackConfig::new(3, 0.05, 0.1).unwrap();
    let trace = attack_with_trace(&model, &[0.9], 0, &cfg).unwrap();
    assert_eq!(trace.crossing_step, None);
    assert!(!trace.already_crossed);
    assert_eq!(trace.steps(), 3);
    let replayed: Vec<f64> = trace
        .iterates
        .iter()
        .map(|x| logistic_margin(w, b, x[0]))
        .collect();
    assert_eq!(brute_force_crossing(&replayed), None);
    // projection stops the walk at 0.9 - 0.1
    assert!((trace.iterates[3][0] - 0.8).abs() < 1e-12);
}
