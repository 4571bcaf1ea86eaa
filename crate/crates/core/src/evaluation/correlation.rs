use serde::{Deserialize, Serialize};

use crate::ingest::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: String,
    /// `None` when either column has zero variance.
    pub r: Option<f64>,
}

/// Pearson correlation coefficient of two equally long series.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Correlation of every feature with the target MCS, in feature order.
pub fn pearson_correlation(dataset: &Dataset) -> Vec<FeatureCorrelation> {
    let y: Vec<f64> = dataset.samples.iter().map(|s| f64::from(s.target_mcs)).collect();
    dataset
        .feature_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let x: Vec<f64> = dataset.samples.iter().map(|s| s.features[j]).collect();
            FeatureCorrelation {
                feature: name.clone(),
                r: pearson(&x, &y),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::ingest::{Area, Sample};

    #[test]
    fn perfect_and_anti_correlation() {
        let y: Vec<f64> = (0..50).map(|i| f64::from(i % 20)).collect();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert!((pearson(&y, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&neg, &y).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(pearson(&[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]), None);
    }

    #[test]
    fn independent_noise_is_uncorrelated() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        assert!(pearson(&x, &y).unwrap().abs() < 0.05);
    }

    #[test]
    fn dataset_columns_and_undefined_marker() {
        let samples = (0..10)
            .map(|i| Sample {
                sweep_start_ms: i,
                target_mcs: i as i8,
                features: vec![i as f64, 4.0],
                round_id: 0,
                area: Area::Unlabeled,
            })
            .collect();
        let ds = Dataset::new(vec!["same".into(), "flat".into()], samples).unwrap();
        let c = pearson_correlation(&ds);
        assert_eq!(c[0].feature, "same");
        assert!((c[0].r.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(c[1].r, None);
        assert_eq!(serde_json::to_string(&c[1]).unwrap(), r#"{"feature":"flat","r":null}"#);
    }
}
