//! Minimum-cost bipartite assignment (Hungarian method with potentials).
//!
//! Generic over any ordered numeric type, so integer and rational costs are
//! solved exactly.

use num_traits::Num;

/// Solves the rectangular assignment problem and returns `(row, col)` pairs
/// sorted by row. Every row is matched when `rows <= cols`, every column
/// otherwise. Ties resolve toward the lowest column, then the lowest row.
pub fn min_cost_matching<C>(cost: &[Vec<C>]) -> Vec<(usize, usize)>
where
    C: Num + Copy + PartialOrd,
{
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Vec::new();
    }
    debug_assert!(cost.iter().all(|r| r.len() == cols), "ragged cost matrix");
    if rows <= cols {
        hungarian(rows, cols, |i, j| cost[i][j])
    } else {
        let mut pairs: Vec<_> = hungarian(cols, rows, |i, j| cost[j][i])
            .into_iter()
            .map(|(c, r)| (r, c))
            .collect();
        pairs.sort_unstable();
        pairs
    }
}

/// Optimal matching followed by gating: pairs whose cost exceeds `gate` are
/// dropped.
pub fn assign<C>(cost: &[Vec<C>], gate: C) -> Vec<(usize, usize)>
where
    C: Num + Copy + PartialOrd,
{
    min_cost_matching(cost)
        .into_iter()
        .filter(|&(r, c)| !(cost[r][c] > gate))
        .collect()
}

pub fn total_cost<C: Num + Copy>(cost: &[Vec<C>], pairs: &[(usize, usize)]) -> C {
    pairs.iter().fold(C::zero(), |acc, &(r, c)| acc + cost[r][c])
}

fn lt<C: PartialOrd>(a: C, b: Option<C>) -> bool {
    b.is_none_or(|b| a < b)
}

// n <= m; 1-based internally with a virtual column 0.
fn hungarian<C>(n: usize, m: usize, a: impl Fn(usize, usize) -> C) -> Vec<(usize, usize)>
where
    C: Num + Copy + PartialOrd,
{
    let mut u = vec![C::zero(); n + 1];
    let mut v = vec![C::zero(); m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv: Vec<Option<C>> = vec![None; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta: Option<C> = None;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
                if lt(cur, minv[j]) {
                    minv[j] = Some(cur);
                    way[j] = j0;
                }
                if let Some(mj) = minv[j] {
                    if lt(mj, delta) {
                        delta = Some(mj);
                        j1 = j;
                    }
                }
            }
            let delta = delta.expect("an unused column always exists when n <= m");
            for j in 0..=m {
                if used[j] {
                    u[p[j]] = u[p[j]] + delta;
                    v[j] = v[j] - delta;
                } else if let Some(mj) = minv[j].as_mut() {
                    *mj = *mj - delta;
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

    let mut pairs: Vec<(usize, usize)> =
        (1..=m).filter(|&j| p[j] != 0).map(|j| (p[j] - 1, j - 1)).collect();
    pairs.sort_unstable();
    pairs
}
