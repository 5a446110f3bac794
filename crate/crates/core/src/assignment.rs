//! Minimum-cost linear assignment via augmenting paths with potentials
//! (Jonker-Volgenant style, O(n^3)). Shared by the PIT loss fast path and
//! the scorer's singer mapping.

/// Solves min-cost perfect assignment on a square `n x n` cost matrix
/// stored row-major. Returns `assign[row] = col`. Costs may be negative;
/// they must be finite.
pub fn min_cost_square(costs: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(costs.len(), n * n, "cost matrix must be n x n");
    if n == 0 {
        return Vec::new();
    }
    let cost = |i: usize, j: usize| costs[(i - 1) * n + (j - 1)];

    // 1-based with col 0 as the sentinel root of each augmenting search.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // matched_row[col] = row
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        matched_row[0] = i;
        let mut j0 = 0usize;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0, j) - u[i0] - v[j];
                if reduced < min_to[j] {
                    min_to[j] = reduced;
                    way[j] = j0;
                }
                if min_to[j] < delta {
                    delta = min_to[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[matched_row[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_to[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Walk the alternating path back to the root, flipping matches.
        while j0 != 0 {
            let j1 = way[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] != 0 {
            assign[matched_row[j] - 1] = j - 1;
        }
    }
    assign
}

/// Maximum-weight one-to-one matching on a rectangular `rows x cols`
/// weight matrix. Unmatched rows (when `rows > cols`) come back as `None`.
/// Matching a zero-weight pair is equivalent to leaving both unmatched.
pub fn max_weight_matching(weights: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = weights.len();
    let cols = weights.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    let n = rows.max(cols);
    // Pad to square; dummy cells cost 0 while real cells cost -weight, so
    // the minimum assignment maximizes total matched weight.
    let mut costs = vec![0.0f64; n * n];
    for (i, row) in weights.iter().enumerate() {
        assert_eq!(row.len(), cols, "ragged weight matrix");
        for (j, &w) in row.iter().enumerate() {
            costs[i * n + j] = -w;
        }
    }
    let assign = min_cost_square(&costs, n);
    (0..rows)
        .map(|i| {
            let j = assign[i];
            if j < cols {
                Some(j)
            } else {
                None
            }
        })
        .collect()
}
