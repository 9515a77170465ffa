//! Linear bottleneck assignment by threshold search over bipartite matchings.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Square matrix of partition→fog costs in milliseconds; row = partition, column = fog.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::ShapeMismatch { expected: n * n, actual: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            if r.len() != n {
                return Err(Error::ShapeMismatch { expected: n, actual: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(n, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, partition: usize, fog: usize) -> f64 {
        self.data[partition * self.n + fog]
    }

    pub fn row(&self, partition: usize) -> &[f64] {
        &self.data[partition * self.n..(partition + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Largest entry selected by `fog_of_partition`.
    pub fn bottleneck_of(&self, fog_of_partition: &[usize]) -> f64 {
        fog_of_partition.iter().enumerate().map(|(k, &j)| self.get(k, j)).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Maximum bipartite matching between rows and columns of a boolean mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    /// Column matched to each row.
    pub row_to_col: Vec<Option<usize>>,
    pub size: usize,
}

impl Matching {
    pub fn is_perfect(&self) -> bool {
        self.size == self.row_to_col.len()
    }
}

/// Augmenting-path (Kuhn) maximum matching. Rows are processed in order and
/// columns tried ascending, so the result is deterministic.
pub fn maximum_matching(adjacency: &[Vec<bool>]) -> Matching {
    let rows = adjacency.len();
    let cols = adjacency.iter().map(Vec::len).max().unwrap_or(0);
    let mut col_to_row = vec![usize::MAX; cols];
    let mut row_to_col = vec![None; rows];
    let mut size = 0;
    let mut visited = vec![false; cols];
    for r in 0..rows {
        visited.iter_mut().for_each(|v| *v = false);
        if augment(r, adjacency, &mut visited, &mut col_to_row, &mut row_to_col) {
            size += 1;
        }
    }
    Matching { row_to_col, size }
}

fn augment(
    r: usize,
    adjacency: &[Vec<bool>],
    visited: &mut [bool],
    col_to_row: &mut [usize],
    row_to_col: &mut [Option<usize>],
) -> bool {
    for (c, &edge) in adjacency[r].iter().enumerate() {
        if !edge || visited[c] {
            continue;
        }
        visited[c] = true;
        if col_to_row[c] == usize::MAX || augment(col_to_row[c], adjacency, visited, col_to_row, row_to_col) {
            col_to_row[c] = r;
            row_to_col[r] = Some(c);
            return true;
        }
    }
    false
}

/// A perfect matching of the mask as `row -> column`, if one exists.
pub fn perfect_matching(adjacency: &[Vec<bool>]) -> Option<Vec<usize>> {
    let m = maximum_matching(adjacency);
    if m.is_perfect() {
        m.row_to_col.into_iter().collect()
    } else {
        None
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BottleneckAssignment {
    /// Fog assigned to each partition (a bijection).
    pub fog_of_partition: Vec<usize>,
    pub bottleneck: f64,
    /// Perfect-matching feasibility checks performed by the threshold search.
    pub feasibility_tests: usize,
}

/// Bijection minimizing the largest selected cost.
///
/// Binary-searches the sorted distinct entries for the smallest threshold
/// whose `cost ≤ threshold` mask still admits a perfect matching, so it needs
/// at most `⌈log2(distinct)⌉ + 1` matching runs.
pub fn lbap_assign(costs: &CostMatrix) -> BottleneckAssignment {
    let n = costs.n();
    if n == 0 {
        return BottleneckAssignment { fog_of_partition: Vec::new(), bottleneck: 0.0, feasibility_tests: 0 };
    }
    let mut thresholds = costs.values().to_vec();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let mut tests = 0;
    let mut feasible = |tau: f64| {
        tests += 1;
        let mask: Vec<Vec<bool>> = (0..n).map(|k| costs.row(k).iter().map(|&c| c <= tau).collect()).collect();
        perfect_matching(&mask)
    };

    // The largest entry always admits a perfect matching.
    let (mut lo, mut hi) = (0, thresholds.len() - 1);
    let mut found: Option<(usize, Vec<usize>)> = None;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match feasible(thresholds[mid]) {
            Some(m) => {
                hi = mid;
                found = Some((mid, m));
            }
            None => lo = mid + 1,
        }
    }
    let fog_of_partition = match found {
        Some((idx, m)) if idx == lo => m,
        _ => feasible(thresholds[lo]).expect("complete bipartite graph has a perfect matching"),
    };
    BottleneckAssignment { fog_of_partition, bottleneck: thresholds[lo], feasibility_tests: tests }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry() {
        let a = lbap_assign(&CostMatrix::from_rows(&[vec![7.0]]).unwrap());
        assert_eq!(a.fog_of_partition, vec![0]);
        assert_eq!(a.bottleneck, 7.0);
    }

    #[test]
    fn two_by_two() {
        let a = lbap_assign(&CostMatrix::from_rows(&[vec![1.0, 4.0], vec![2.0, 3.0]]).unwrap());
        assert_eq!(a.fog_of_partition, vec![0, 1]);
        assert_eq!(a.bottleneck, 3.0);
    }

    #[test]
    fn matching_examples() {
        let n = 4;
        let identity: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| i == j).collect()).collect();
        assert_eq!(perfect_matching(&identity), Some(vec![0, 1, 2, 3]));
        let first_only: Vec<Vec<bool>> = (0..3).map(|_| vec![true, false, false]).collect();
        let m = maximum_matching(&first_only);
        assert_eq!(m.size, 1);
        assert!(!m.is_perfect());
        assert_eq!(perfect_matching(&first_only), None);
    }

    #[test]
    fn test_count_is_logarithmic() {
        let n = 7;
        let data: Vec<f64> = (0..n * n).map(|i| ((i * 37) % 101) as f64).collect();
        let costs = CostMatrix::new(n, data).unwrap();
        let a = lbap_assign(&costs);
        let distinct = {
            let mut v = costs.values().to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len()
        };
        let bound = (usize::BITS - (distinct - 1).leading_zeros()) as usize + 1;
        assert!(a.feasibility_tests <= bound, "{} > {bound}", a.feasibility_tests);
        assert_eq!(costs.bottleneck_of(&a.fog_of_partition), a.bottleneck);
    }

    #[test]
    fn rejects_bad_matrices() {
        assert!(CostMatrix::new(2, vec![1.0; 3]).is_err());
        assert_eq!(CostMatrix::new(1, vec![f64::NAN]), Err(Error::NonFinite));
        assert!(CostMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0]]).is_err());
    }
}
