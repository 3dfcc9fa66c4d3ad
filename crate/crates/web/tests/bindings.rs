use serde_json::Value;
use ufrnn_web::{demonstration, foresight_preview};

#[test]
fn demonstration_json_opens_the_door() {
    let v: Value = serde_json::from_str(&demonstration("slide", 0.02, 3).unwrap()).unwrap();
    let d = v["door_open"].as_array().unwrap();
    assert_eq!(d.len(), v["hand"].as_array().unwrap().len());
    assert!(d.last().unwrap().as_f64().unwrap() >= 0.8);
    assert_eq!(v["axis"], serde_json::json!([0.0, 1.0]));
}

#[test]
fn preview_reports_one_curve_per_candidate() {
    let v: Value = serde_json::from_str(&foresight_preview("push", 30, 1, 4).unwrap()).unwrap();
    let scores: Vec<f64> = v["scores"].as_array().unwrap().iter().map(|s| s.as_f64().unwrap()).collect();
    let curves = v["variance_curves"].as_array().unwrap();
    assert_eq!((scores.len(), curves.len()), (4, 4));
    let sel = v["selected"].as_u64().unwrap() as usize;
    assert!(scores.iter().all(|&s| s <= scores[sel]));
    // score is the drop in summed variance from the first to the last point
    for (c, s) in curves.iter().zip(&scores) {
        let c: Vec<f64> = c.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(c.len(), 11);
        assert!((c[0] - c[10] - s).abs() < 1e-9);
    }
}
