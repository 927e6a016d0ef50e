//! Minimum-cost linear assignment over a track x detection cost matrix with
//! infeasible entries.
//!
//! Semantics: entries above the acceptance threshold count as infeasible; the
//! solver returns a maximum-cardinality matching over the remaining pairs
//! and, among those, one of minimum total cost. Implemented as a shortest
//! augmenting path Hungarian solve on a square matrix padded with dummy
//! rows/columns, where infeasible pairs carry a cost larger than any full
//! feasible matching. Rows are processed in ascending index with strict
//! improvement scans, so results are deterministic and ties lean toward low
//! (row, col) indices.

/// Rectangular cost table; `None` marks an infeasible pair.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Option<f64>>,
}

impl CostMatrix {
    /// New matrix with every pair infeasible.
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![None; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Sets a finite nonnegative cost.
    pub fn set(&mut self, row: usize, col: usize, cost: f64) {
        assert!(
            cost.is_finite() && cost >= 0.0,
            "assignment costs must be finite and nonnegative, got {cost}"
        );
        self.entries[row * self.cols + col] = Some(cost);
    }

    pub fn set_infeasible(&mut self, row: usize, col: usize) {
        self.entries[row * self.cols + col] = None;
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.entries[row * self.cols + col]
    }
}

/// Result of an assignment solve: matched pairs sorted by row, plus the total
/// cost over those pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

impl Matching {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Row indices that received no match.
    pub fn unmatched_rows(&self, rows: usize) -> Vec<usize> {
        let matched: Vec<usize> = self.pairs.iter().map(|p| p.0).collect();
        (0..rows).filter(|r| !matched.contains(r)).collect()
    }

    /// Column indices that received no match.
    pub fn unmatched_cols(&self, cols: usize) -> Vec<usize> {
        let matched: Vec<usize> = self.pairs.iter().map(|p| p.1).collect();
        (0..cols).filter(|c| !matched.contains(c)).collect()
    }
}

/// Solves the assignment problem. Pairs that are infeasible or cost more than
/// `threshold` never appear in the result.
pub fn solve_assignment(matrix: &CostMatrix, threshold: f64) -> Matching {
    let (nr, nc) = (matrix.rows, matrix.cols);
    if nr == 0 || nc == 0 {
        return Matching {
            pairs: Vec::new(),
            total_cost: 0.0,
        };
    }

    let feasible = |r: usize, c: usize| -> Option<f64> {
        matrix.get(r, c).filter(|v| *v <= threshold)
    };

    // One forbidden edge must outweigh any matching built purely from
    // feasible edges, which makes minimizing total cost equivalent to
    // maximizing feasible cardinality first.
    let mut finite_sum = 0.0;
    for r in 0..nr {
        for c in 0..nc {
            finite_sum += feasible(r, c).unwrap_or(0.0);
        }
    }
    let big = finite_sum + 1.0;

    let n = nr.max(nc);
    let mut cost = vec![vec![0.0f64; n]; n];
    for (r, row) in cost.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            *cell = if r < nr && c < nc {
                feasible(r, c).unwrap_or(big)
            } else {
                0.0 // dummy padding
            };
        }
    }

    let row_to_col = hungarian_square(&cost);

    let mut pairs = Vec::new();
    let mut total = 0.0;
    for (r, c) in row_to_col.into_iter().enumerate() {
        if r < nr && c < nc {
            if let Some(v) = feasible(r, c) {
                pairs.push((r, c));
                total += v;
            }
        }
    }
    Matching {
        pairs,
        total_cost: total,
    }
}

/// Shortest augmenting path Hungarian solve on a square matrix of finite
/// costs. Returns the column assigned to each row.
fn hungarian_square(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with a virtual column 0 rooting each augmenting path.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut col_to_row = vec![0usize; n + 1]; // 0 = unmatched
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        col_to_row[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = col_to_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[col_to_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if col_to_row[j0] == 0 {
                break;
            }
        }
        // Walk the alternating path back, flipping matches.
        while j0 != 0 {
            let j1 = way[j0];
            col_to_row[j0] = col_to_row[j1];
            j0 = j1;
        }
    }

    let mut row_to_col = vec![usize::MAX; n];
    for j in 1..=n {
        if col_to_row[j] != 0 {
            row_to_col[col_to_row[j] - 1] = j - 1;
        }
    }
    row_to_col
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_entry_under_threshold_matches() {
        let mut m = CostMatrix::new(1, 1);
        m.set(0, 0, 0.1);
        let r = solve_assignment(&m, 0.5);
        assert_eq!(r.pairs, vec![(0, 0)]);
    }

    #[test]
    fn single_entry_over_threshold_excluded() {
        let mut m = CostMatrix::new(1, 1);
        m.set(0, 0, 0.6);
        assert!(solve_assignment(&m, 0.5).is_empty());
    }

    #[test]
    fn two_by_two_diagonal() {
        let mut m = CostMatrix::new(2, 2);
        m.set(0, 0, 0.1);
        m.set(0, 1, 0.9);
        m.set(1, 0, 0.9);
        m.set(1, 1, 0.1);
        let r = solve_assignment(&m, 1.0);
        assert_eq!(r.pairs, vec![(0, 0), (1, 1)]);
        assert!((r.total_cost - 0.2).abs() < 1e-12);
    }

    #[test]
    fn all_infeasible_yields_empty() {
        let m = CostMatrix::new(2, 2);
        assert!(solve_assignment(&m, 1.0).is_empty());
    }

    #[test]
    fn empty_matrix() {
        let m = CostMatrix::new(0, 3);
        assert!(solve_assignment(&m, 1.0).is_empty());
        let m = CostMatrix::new(3, 0);
        assert!(solve_assignment(&m, 1.0).is_empty());
    }

    #[test]
    fn rectangular_prefers_cardinality_over_cost() {
        // Row 0 could grab the cheap column, but that would leave row 1
        // unmatchable; the solver must match both.
        let mut m = CostMatrix::new(2, 2);
        m.set(0, 0, 0.01);
        m.set(0, 1, 0.9);
        m.set(1, 0, 0.02);
        let r = solve_assignment(&m, 1.0);
        assert_eq!(r.pairs, vec![(0, 1), (1, 0)]);
    }

    #[test]
    fn unmatched_row_and_col_reporting() {
        let mut m = CostMatrix::new(3, 2);
        m.set(0, 0, 0.1);
        m.set(2, 1, 0.2);
        let r = solve_assignment(&m, 1.0);
        assert_eq!(r.pairs, vec![(0, 0), (2, 1)]);
        assert_eq!(r.unmatched_rows(3), vec![1]);
        assert!(r.unmatched_cols(2).is_empty());
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let nr = rng.random_range(1..8usize);
            let nc = rng.random_range(1..8usize);
            let mut m = CostMatrix::new(nr, nc);
            for r in 0..nr {
                for c in 0..nc {
                    if rng.random_bool(0.8) {
                        m.set(r, c, rng.random_range(0.0..1.0));
                    }
                }
            }
            let a = solve_assignment(&m, 0.9);
            let b = solve_assignment(&m, 0.9);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn matches_enumeration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..2000 {
            let nr = rng.random_range(1..=7usize);
            let nc = rng.random_range(1..=7usize);
            let mut m = CostMatrix::new(nr, nc);
            for r in 0..nr {
                for c in 0..nc {
                    if rng.random_bool(0.85) {
                        m.set(r, c, rng.random_range(0.0..1.0));
                    }
                }
            }
            let threshold = rng.random_range(0.2..1.0);
            let got = solve_assignment(&m, threshold);
            let (card, cost) = oracle::best_matching(&m, threshold);
            assert_eq!(got.pairs.len(), card);
            assert!(
                (got.total_cost - cost).abs() < 1e-9,
                "cost {} vs oracle {}",
                got.total_cost,
                cost
            );
        }
    }
}
