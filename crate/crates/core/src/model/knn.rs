use serde::{Deserialize, Serialize};

/// Brute-force k-nearest-neighbour vote over the stored design matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    k: usize,
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    n_classes: usize,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl Knn {
    pub fn fit(x: Vec<Vec<f64>>, y: Vec<usize>, n_classes: usize, k: usize) -> Knn {
        Knn { k, x, y, n_classes }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Row indices of the `k` nearest training rows, nearest first; equal
    /// distances order by row index.
    pub fn neighbours(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self.x.iter().enumerate().map(|(i, r)| (dist2(q, r), i)).collect();
        let k = self.k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() {
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Majority label among the neighbours; ties go to the smaller class
    /// index.
    pub fn predict(&self, q: &[f64]) -> usize {
        let mut votes = vec![0usize; self.n_classes];
        for i in self.neighbours(q) {
            votes[self.y[i]] += 1;
        }
        let mut best = 0;
        for (c, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = c;
            }
        }
        best
    }
}
