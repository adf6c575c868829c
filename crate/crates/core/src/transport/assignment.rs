//! Dense assignment solvers on square cost matrices.

/// Minimum-cost perfect matching (Hungarian method with potentials, O(n³)).
///
/// Returns `assignment[row] = col`. Among equal reduced costs the lowest
/// column index wins, so the output is deterministic.
pub(crate) fn min_cost_assignment(costs: &[Vec<f64>]) -> Vec<usize> {
    let n = costs.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(costs.iter().all(|row| row.len() == n));

    let inf = f64::INFINITY;
    // 1-based with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = costs[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Whether the bipartite graph `allowed[row][col]` has a perfect matching
/// (augmenting paths, Kuhn's algorithm).
pub(crate) fn has_perfect_matching(allowed: &[Vec<bool>]) -> bool {
    let n = allowed.len();
    let mut match_col: Vec<Option<usize>> = vec![None; n];

    fn augment(
        row: usize,
        allowed: &[Vec<bool>],
        seen: &mut [bool],
        match_col: &mut [Option<usize>],
    ) -> bool {
        for col in 0..allowed.len() {
            if allowed[row][col] && !seen[col] {
                seen[col] = true;
                let free = match match_col[col] {
                    None => true,
                    Some(r) => augment(r, allowed, seen, match_col),
                };
                if free {
                    match_col[col] = Some(row);
                    return true;
                }
            }
        }
        false
    }

    for row in 0..n {
        let mut seen = vec![false; n];
        if !augment(row, allowed, &mut seen, &mut match_col) {
            return false;
        }
    }
    true
}

/// Smallest threshold `θ` among the entries of `costs` such that a perfect
/// matching using only entries `≤ θ` exists.
pub(crate) fn bottleneck_value(costs: &[Vec<f64>]) -> f64 {
    let n = costs.len();
    if n == 0 {
        return 0.0;
    }
    let mut values: Vec<f64> = costs.iter().flatten().copied().collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let feasible = |theta: f64| {
        let allowed: Vec<Vec<bool>> = costs
            .iter()
            .map(|row| row.iter().map(|&c| c <= theta).collect())
            .collect();
        has_perfect_matching(&allowed)
    };
    let (mut lo, mut hi) = (0usize, values.len() - 1);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if feasible(values[mid]) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    values[lo]
}
