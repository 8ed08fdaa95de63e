use serde::{Deserialize, Serialize};

use crate::features::{Feature, FeatureSet, FeatureVector};
use crate::ingest::ZoneCategory;

/// Per-column standardisation fitted on training rows, plus a fixed 4-column
/// one-hot encoding of the zone (Residential, Industrial, Business,
/// SpecialPurpose). Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    schema: FeatureSet,
    numeric: Vec<Feature>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

pub(crate) fn is_constant(mean: f64, std: f64) -> bool {
    std == 0.0 || std <= 1e-12 * mean.abs()
}

impl Preprocessor {
    pub fn fit(schema: &FeatureSet, rows: &[FeatureVector]) -> Self {
        let numeric: Vec<Feature> = schema.numeric().collect();
        let n = rows.len().max(1) as f64;
        let mut means = Vec::with_capacity(numeric.len());
        let mut stds = Vec::with_capacity(numeric.len());
        for &f in &numeric {
            let mean = rows.iter().map(|r| r.numeric(f)).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r.numeric(f) - mean).powi(2)).sum::<f64>() / n;
            means.push(mean);
            stds.push(var.sqrt());
        }
        Preprocessor {
            schema: schema.clone(),
            numeric,
            means,
            stds,
        }
    }

    pub fn schema(&self) -> &FeatureSet {
        &self.schema
    }

    pub fn numeric_width(&self) -> usize {
        self.numeric.len()
    }

    /// Columns of [`Preprocessor::design`].
    pub fn width(&self) -> usize {
        self.numeric.len() + if self.schema.has_zone() { ZoneCategory::ALL.len() } else { 0 }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn standardize(&self, row: &FeatureVector) -> Vec<f64> {
        self.numeric
            .iter()
            .zip(self.means.iter().zip(&self.stds))
            .map(|(&f, (&m, &s))| {
                if is_constant(m, s) {
                    0.0
                } else {
                    (row.numeric(f) - m) / s
                }
            })
            .collect()
    }

    pub fn zone(&self, row: &FeatureVector) -> Option<usize> {
        self.schema.has_zone().then(|| row.zone.index())
    }

    /// Standardised numerics followed by the zone one-hot block.
    pub fn design(&self, row: &FeatureVector) -> Vec<f64> {
        let mut x = self.standardize(row);
        if let Some(z) = self.zone(row) {
            let mut onehot = [0.0; 4];
            onehot[z] = 1.0;
            x.extend_from_slice(&onehot);
        }
        x
    }

    pub fn design_matrix(&self, rows: &[FeatureVector]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.design(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fv(vals: [f64; 7], zone: ZoneCategory) -> FeatureVector {
        FeatureVector {
            lib_dist: vals[0],
            park_dist: vals[1],
            school_dist: vals[2],
            transit_dist: vals[3],
            price_diff: vals[4],
            vacant_density: vals[5] as u32,
            crime_density: vals[6] as u32,
            zone,
        }
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let rows = vec![
            fv([1.0, 0.1, 3.0, 4.0, 5.0, 6.0, 7.0], ZoneCategory::Business),
            fv([2.0, 0.1, 3.0, 4.0, 5.0, 6.0, 7.0], ZoneCategory::Residential),
            fv([3.0, 0.1, 3.0, 4.0, 5.0, 6.0, 7.0], ZoneCategory::Business),
        ];
        let p = Preprocessor::fit(&FeatureSet::all(), &rows);
        let x = p.design(&rows[0]);
        assert_eq!(x.len(), 11);
        assert_eq!(&x[1..7], &[0.0; 6]);
        assert_eq!(&x[7..], &[0.0, 0.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn standardised_columns_have_zero_mean_unit_std(
            data in prop::collection::vec(
                (0.0..5000.0f64, 0.0..5000.0f64, -1e5..1e5f64, 0u32..60, 0usize..4), 2..80)
        ) {
            let rows: Vec<FeatureVector> = data
                .iter()
                .map(|&(a, b, c, d, z)| FeatureVector {
                    lib_dist: a,
                    park_dist: b,
                    school_dist: a + b,
                    transit_dist: 10.0,
                    price_diff: c,
                    vacant_density: d,
                    crime_density: d * 2,
                    zone: ZoneCategory::ALL[z],
                })
                .collect();
            let p = Preprocessor::fit(&FeatureSet::all(), &rows);
            let x: Vec<Vec<f64>> = rows.iter().map(|r| p.standardize(r)).collect();
            let n = x.len() as f64;
            for j in 0..7 {
                let mean = x.iter().map(|r| r[j]).sum::<f64>() / n;
                let sd = (x.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n).sqrt();
                prop_assert!(mean.abs() < 1e-9);
                if is_constant(p.means()[j], p.stds()[j]) {
                    prop_assert!(x.iter().all(|r| r[j] == 0.0));
                } else {
                    prop_assert!((sd - 1.0).abs() < 1e-9, "col {} sd {}", j, sd);
                }
            }
        }
    }
}
