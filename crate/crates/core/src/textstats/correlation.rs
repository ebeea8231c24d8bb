use serde::{Deserialize, Serialize};

use super::features::{FeatureName, LinguisticFeatureVector};
use super::TextStatsError;

/// Sample Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, TextStatsError> {
    if x.len() != y.len() {
        return Err(TextStatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 2 {
        return Err(TextStatsError::TooFewSamples(x.len()));
    }
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mean_x;
        let dy = b - mean_y;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(TextStatsError::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureCorrelation {
    pub feature: FeatureName,
    /// `None` when the correlation is undefined (zero variance).
    pub r: Option<f64>,
}

/// Correlates every feature with the gold scores; sorted by |r| descending,
/// undefined correlations last, ties in canonical feature order.
pub fn rank_features(
    gold: &[f64],
    features: &[LinguisticFeatureVector],
) -> Result<Vec<FeatureCorrelation>, TextStatsError> {
    if gold.len() != features.len() {
        return Err(TextStatsError::LengthMismatch(gold.len(), features.len()));
    }
    if gold.len() < 2 {
        return Err(TextStatsError::TooFewSamples(gold.len()));
    }
    if gold.iter().all(|&g| g == gold[0]) {
        return Err(TextStatsError::UndefinedCorrelation);
    }
    let mut ranked: Vec<FeatureCorrelation> = FeatureName::ALL
        .iter()
        .map(|&feature| {
            let values: Vec<f64> = features.iter().map(|f| f.get(feature) as f64).collect();
            FeatureCorrelation {
                feature,
                r: pearson(&values, gold).ok(),
            }
        })
        .collect();
    ranked.sort_by(|a, b| match (a.r, b.r) {
        (Some(x), Some(y)) => y.abs().total_cmp(&x.abs()),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    Ok(ranked)
}
