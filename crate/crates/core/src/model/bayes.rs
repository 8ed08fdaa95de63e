use serde::{Deserialize, Serialize};

use crate::ingest::ZoneCategory;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NbParams {
    pub laplace_alpha: f64,
    pub variance_floor: f64,
}

impl Default for NbParams {
    fn default() -> Self {
        NbParams {
            laplace_alpha: 1.0,
            variance_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ClassStats {
    log_prior: f64,
    means: Vec<f64>,
    vars: Vec<f64>,
    /// log P(zone | class), Laplace-smoothed; empty when zone is not a feature.
    zone_log_prob: Vec<f64>,
}

/// Gaussian likelihoods for numeric columns, a categorical likelihood for the
/// zone, scored in log space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    classes: Vec<ClassStats>,
}

impl NaiveBayes {
    /// `x` holds standardised numeric columns, `zones` the zone index per row
    /// when zone is part of the schema.
    pub fn fit(x: &[Vec<f64>], zones: Option<&[usize]>, y: &[usize], n_classes: usize, params: &NbParams) -> Self {
        let n = y.len() as f64;
        let width = x.first().map_or(0, Vec::len);
        let classes = (0..n_classes)
            .map(|c| {
                let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
                let nc = rows.len() as f64;
                let means: Vec<f64> = (0..width)
                    .map(|j| rows.iter().map(|&i| x[i][j]).sum::<f64>() / nc)
                    .collect();
                let vars = (0..width)
                    .map(|j| {
                        let v = rows.iter().map(|&i| (x[i][j] - means[j]).powi(2)).sum::<f64>() / nc;
                        v.max(params.variance_floor)
                    })
                    .collect();
                let zone_log_prob = match zones {
                    Some(z) => {
                        let k = ZoneCategory::ALL.len() as f64;
                        let mut counts = [0usize; 4];
                        for &i in &rows {
                            counts[z[i]] += 1;
                        }
                        counts
                            .iter()
                            .map(|&cnt| ((cnt as f64 + params.laplace_alpha) / (nc + k * params.laplace_alpha)).ln())
                            .collect()
                    }
                    None => Vec::new(),
                };
                ClassStats {
                    log_prior: (nc / n).ln(),
                    means,
                    vars,
                    zone_log_prob,
                }
            })
            .collect();
        NaiveBayes { classes }
    }

    pub fn log_joint(&self, x: &[f64], zone: Option<usize>) -> Vec<f64> {
        const LN_2PI: f64 = 1.837_877_066_409_345_5;
        self.classes
            .iter()
            .map(|s| {
                let mut score = s.log_prior;
                for ((&v, &m), &var) in x.iter().zip(&s.means).zip(&s.vars) {
                    score -= 0.5 * (LN_2PI + var.ln() + (v - m).powi(2) / var);
                }
                if let (Some(z), false) = (zone, s.zone_log_prob.is_empty()) {
                    score += s.zone_log_prob[z];
                }
                score
            })
            .collect()
    }

    /// Class posteriors, normalised with log-sum-exp.
    pub fn posterior(&self, x: &[f64], zone: Option<usize>) -> Vec<f64> {
        let lj = self.log_joint(x, zone);
        let max = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lj.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / z).collect()
    }

    pub fn predict(&self, x: &[f64], zone: Option<usize>) -> usize {
        let lj = self.log_joint(x, zone);
        let mut best = 0;
        for (c, &v) in lj.iter().enumerate() {
            if v > lj[best] {
                best = c;
            }
        }
        best
    }
}
