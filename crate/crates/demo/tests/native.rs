use cate_rates_demo::{exponent_curve, lower_bound, simulate_and_estimate};

#[test]
fn estimate_returns_json() {
    let s = simulate_and_estimate(4000, 2.0, 1.0, 0.2, 8, false, 3).unwrap();
    let v: serde_json::Value = serde_json::from_str(&s).unwrap();
    assert_eq!(v["tau_true"].as_f64().unwrap(), 1.0);
    assert!((v["tau_hat"].as_f64().unwrap() - 1.0).abs() < 0.6);
    assert_eq!(v["k"].as_u64().unwrap(), 8);
}

#[test]
fn estimate_rejects_bad_n() {
    assert!(simulate_and_estimate(10, 2.0, 1.0, 0.2, 8, false, 3).is_err());
}

#[test]
fn lower_bound_is_consistent() {
    let v: serde_json::Value = serde_json::from_str(&lower_bound(1e6, 0.3, 0.3, 1.0).unwrap()).unwrap();
    assert!(v["hellinger"].as_f64().unwrap() <= 1.0);
    assert_eq!(v["delta3"].as_f64().unwrap(), 0.0);
    let h = v["h"].as_f64().unwrap();
    assert!((v["separation"].as_f64().unwrap() - h / 4.0).abs() < 1e-15);
}

#[test]
fn curve_is_monotone() {
    let pts: Vec<[f64; 2]> = serde_json::from_str(&exponent_curve(1.0, 1, 2.0, 50)).unwrap();
    assert_eq!(pts.len(), 50);
    assert!(pts.windows(2).all(|w| w[1][1] >= w[0][1]));
    assert!((pts[49][1] - 1.0 / 3.0).abs() < 1e-12);
}
