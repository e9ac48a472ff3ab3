//! Exact Euclidean nearest-neighbour search by linear scan.
//!
//! Ties in distance are broken by the lower row index, so results are a pure
//! function of the input rows.

use crate::dataset::FeatureMatrix;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Bounded best-k list ordered by `(distance, index)`.
struct TopK {
    k: usize,
    items: Vec<(f64, usize)>,
}

impl TopK {
    fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    #[inline]
    fn offer(&mut self, d: f64, idx: usize) {
        if self.items.len() == self.k {
            let (wd, wi) = self.items[self.k - 1];
            if d > wd || (d == wd && idx > wi) {
                return;
            }
        }
        let pos = self
            .items
            .partition_point(|&(od, oi)| od < d || (od == d && oi < idx));
        self.items.insert(pos, (d, idx));
        self.items.truncate(self.k);
    }

    fn indices(self) -> Vec<usize> {
        self.items.into_iter().map(|(_, i)| i).collect()
    }
}

/// The `k` rows among `candidates` closest to row `query`, excluding `query`
/// itself. Returned nearest first.
pub fn nearest(points: &FeatureMatrix, candidates: &[usize], query: usize, k: usize) -> Vec<usize> {
    if k == 0 {
        return Vec::new();
    }
    let q = points.row(query);
    let mut top = TopK::new(k);
    for &c in candidates {
        if c != query {
            top.offer(sq_dist(q, points.row(c)), c);
        }
    }
    top.indices()
}

/// `k` nearest neighbours of every row among all other rows.
pub fn all_nearest(points: &FeatureMatrix, k: usize) -> Vec<Vec<usize>> {
    let all: Vec<usize> = (0..points.n_rows()).collect();
    (0..points.n_rows())
        .map(|i| nearest(points, &all, i, k))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_distance_then_index() {
        let m = FeatureMatrix::from_rows(&[[0.0], [1.0], [-1.0], [2.0], [1.0]]).unwrap();
        let all: Vec<usize> = (0..5).collect();
        assert_eq!(nearest(&m, &all, 0, 3), vec![1, 2, 4]);
        assert_eq!(nearest(&m, &all, 1, 2), vec![4, 0]);
        assert_eq!(nearest(&m, &all, 0, 10), vec![1, 2, 4, 3]);
    }

    #[test]
    fn matches_sorted_scan() {
        let rows: Vec<[f64; 2]> = (0..40)
            .map(|i| {
                let t = i as f64;
                [(t * 1.7).sin() * 3.0, (t * 0.3).cos()]
            })
            .collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let nn = all_nearest(&m, 5);
        for q in 0..40 {
            let mut d: Vec<(f64, usize)> = (0..40)
                .filter(|&j| j != q)
                .map(|j| (sq_dist(m.row(q), m.row(j)), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expect: Vec<usize> = d.iter().take(5).map(|x| x.1).collect();
            assert_eq!(nn[q], expect);
        }
    }
}
