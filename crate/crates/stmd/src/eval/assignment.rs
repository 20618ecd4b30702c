//! Exact solver for the dense square assignment problem, used to evaluate
//! the 2-Wasserstein distance between equal-size empirical measures.
//!
//! Jonker-Volgenant: column reduction, reduction transfer, two augmenting
//! row-reduction sweeps, then shortest augmenting paths for the remaining
//! free rows. Exact for real-valued costs; the float-equality branch inside
//! the path search is a fast path, never a correctness requirement.

/// Solve the assignment problem on an `n x n` cost matrix (row-major).
/// Returns the column assigned to each row and the total cost, summed in
/// row order.
pub fn solve_dense(n: usize, cost: &[f64]) -> (Vec<usize>, f64) {
    assert_eq!(cost.len(), n * n, "cost matrix must be n*n");
    assert!(n > 0, "empty assignment problem");
    const NONE: usize = usize::MAX;
    let c = |i: usize, j: usize| cost[i * n + j];

    let mut rowsol = vec![NONE; n];
    let mut colsol = vec![NONE; n];
    let mut v = vec![0.0f64; n];
    let mut matches = vec![0usize; n];

    // Column reduction.
    for j in (0..n).rev() {
        let mut min = c(0, j);
        let mut imin = 0;
        for i in 1..n {
            if c(i, j) < min {
                min = c(i, j);
                imin = i;
            }
        }
        v[j] = min;
        matches[imin] += 1;
        if matches[imin] == 1 {
            rowsol[imin] = j;
            colsol[j] = imin;
        }
    }

    // Reduction transfer.
    let mut free: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        if matches[i] == 0 {
            free.push(i);
        } else if matches[i] == 1 {
            let j1 = rowsol[i];
            let mut min = f64::INFINITY;
            for j in 0..n {
                if j != j1 && c(i, j) - v[j] < min {
                    min = c(i, j) - v[j];
                }
            }
            v[j1] -= min;
        }
    }

    // Augmenting row reduction, two sweeps. The in-place retry terminates
    // because the potential of the contested column strictly decreases; a
    // step cap guards the float-rounding edge case where it cannot.
    for _ in 0..2 {
        let mut work = std::mem::take(&mut free);
        let mut k = 0;
        let mut steps = 0usize;
        let cap = 20 * n + 1000;
        while k < work.len() {
            steps += 1;
            if steps > cap {
                // Leave the rest to the exact augmentation phase.
                free.extend_from_slice(&work[k..]);
                break;
            }
            let i = work[k];
            k += 1;
            let mut umin = c(i, 0) - v[0];
            let mut j1 = 0usize;
            let mut usubmin = f64::INFINITY;
            let mut j2 = NONE;
            for j in 1..n {
                let h = c(i, j) - v[j];
                if h < usubmin {
                    if h >= umin {
                        usubmin = h;
                        j2 = j;
                    } else {
                        usubmin = umin;
                        j2 = j1;
                        umin = h;
                        j1 = j;
                    }
                }
            }
            let mut i0 = colsol[j1];
            if umin < usubmin {
                v[j1] -= usubmin - umin;
            } else if i0 != NONE && j2 != NONE {
                j1 = j2;
                i0 = colsol[j2];
            }
            rowsol[i] = j1;
            colsol[j1] = i;
            if i0 != NONE {
                if umin < usubmin {
                    k -= 1;
                    work[k] = i0;
                } else {
                    free.push(i0);
                }
            }
        }
    }

    // Shortest augmenting path for each remaining free row.
    let mut d = vec![0.0f64; n];
    let mut pred = vec![0usize; n];
    let mut collist: Vec<usize> = (0..n).collect();
    for f in 0..free.len() {
        let freerow = free[f];
        for j in 0..n {
            d[j] = c(freerow, j) - v[j];
            pred[j] = freerow;
            collist[j] = j;
        }
        let mut low = 0usize;
        let mut up = 0usize;
        let mut unassigned_found = false;
        let mut endofpath = 0usize;
        let mut last = 0usize;
        let mut min = 0.0f64;
        while !unassigned_found {
            if up == low {
                last = low;
                min = d[collist[up]];
                up += 1;
                for k in up..n {
                    let j = collist[k];
                    let h = d[j];
                    if h <= min {
                        if h < min {
                            up = low;
                            min = h;
                        }
                        collist[k] = collist[up];
                        collist[up] = j;
                        up += 1;
                    }
                }
                for k in low..up {
                    if colsol[collist[k]] == NONE {
                        endofpath = collist[k];
                        unassigned_found = true;
                        break;
                    }
                }
            }
            if !unassigned_found {
                let j1 = collist[low];
                low += 1;
                let i = colsol[j1];
                let u1 = c(i, j1) - v[j1] - min;
                for k in up..n {
                    let j = collist[k];
                    let h = c(i, j) - v[j] - u1;
                    if h < d[j] {
                        d[j] = h;
                        pred[j] = i;
                        if h == min {
                            if colsol[j] == NONE {
                                endofpath = j;
                                unassigned_found = true;
                                break;
                            }
                            collist[k] = collist[up];
                            collist[up] = j;
                            up += 1;
                        }
                    }
                }
            }
        }
        // Columns scanned before the current minimum was found are final;
        // update their potentials.
        for &j1 in &collist[..last] {
            v[j1] += d[j1] - min;
        }
        // Augment along the alternating path back to the free row.
        loop {
            let i = pred[endofpath];
            colsol[endofpath] = i;
            let j1 = endofpath;
            endofpath = rowsol[i];
            rowsol[i] = j1;
            if i == freerow {
                break;
            }
        }
    }

    let total: f64 = (0..n).map(|i| c(i, rowsol[i])).sum();
    (rowsol, total)
}
