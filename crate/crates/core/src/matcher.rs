//! Bipartite matching of predicted moments to ground-truth spans.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::{giou_1d, BaseLossConfig};
use crate::span::NormSpan;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("cost matrix is empty")]
    EmptyMatrix,
    #[error("cost matrix is ragged or has non-finite entries")]
    BadMatrix,
    #[error("degenerate span (width {0})")]
    DegenerateSpan(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub span: NormSpan,
    /// (foreground, background)
    pub class_probs: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    /// (prediction index, ground-truth index), sorted by prediction index.
    pub pairs: Vec<(usize, usize)>,
    pub total_cost: f64,
}

/// `cls * (-p_fg) + l1 * L1 + giou * (1 - GIoU)` for every (prediction, gt) pair.
pub fn match_cost(
    preds: &[MomentPrediction],
    gts: &[NormSpan],
    cfg: &BaseLossConfig,
) -> Result<Vec<Vec<f64>>, MatchError> {
    if preds.is_empty() || gts.is_empty() {
        return Err(MatchError::EmptyMatrix);
    }
    for s in preds.iter().map(|p| &p.span).chain(gts) {
        if !(s.width > 0.0) {
            return Err(MatchError::DegenerateSpan(s.width));
        }
    }
    Ok(preds
        .iter()
        .map(|p| {
            gts.iter()
                .map(|g| {
                    let l1 = (p.span.center - g.center).abs() + (p.span.width - g.width).abs();
                    let giou = giou_1d((p.span.start(), p.span.end()), (g.start(), g.end()));
                    -cfg.cls * p.class_probs[0] + cfg.l1 * l1 + cfg.giou * (1.0 - giou)
                })
                .collect()
        })
        .collect())
}

/// Minimum-cost assignment for a square-or-wide matrix (`rows <= cols`),
/// O(rows^2 * cols) shortest augmenting paths with potentials.
/// Returns the column assigned to each row.
fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    let m = cost[0].len();
    debug_assert!(n <= m);
    // 1-based arrays; index 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
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
            for j in 0..=m {
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
    let mut row_to_col = vec![0; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Optimal cost of matching the given rows to the given columns.
fn optimal_cost(cost: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let sub: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| cost[r][c]).collect())
        .collect();
    // the solver wants rows <= cols; the optimal total is transpose-invariant
    let sub = if rows.len() <= cols.len() {
        sub
    } else {
        (0..cols.len()).map(|j| sub.iter().map(|row| row[j]).collect()).collect()
    };
    let assign = hungarian(&sub);
    assign.iter().enumerate().map(|(i, &j)| sub[i][j]).sum()
}

/// Minimum-total-cost one-to-one assignment of `min(rows, cols)` pairs.
///
/// Among optimal assignments the lexicographically smallest pair list wins:
/// rows are decided in order, each taking the smallest column (or staying
/// unmatched, when rows outnumber columns) that keeps the total optimal.
pub fn solve(cost: &[Vec<f64>]) -> Result<Assignment, MatchError> {
    let n = cost.len();
    if n == 0 || cost[0].is_empty() {
        return Err(MatchError::EmptyMatrix);
    }
    let m = cost[0].len();
    if cost.iter().any(|r| r.len() != m || r.iter().any(|x| !x.is_finite())) {
        return Err(MatchError::BadMatrix);
    }
    let all_rows: Vec<usize> = (0..n).collect();
    let all_cols: Vec<usize> = (0..m).collect();
    let best = optimal_cost(cost, &all_rows, &all_cols);
    let scale = cost.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs()));
    let tol = 1e-9 * scale * (n.max(m) as f64);

    let mut pairs = Vec::new();
    let mut fixed = 0.0;
    let mut free_cols: Vec<usize> = all_cols;
    let mut needed = n.min(m);
    for i in 0..n {
        if needed == 0 {
            break;
        }
        let rest: Vec<usize> = (i + 1..n).collect();
        let mut chosen = None;
        for (pos, &j) in free_cols.iter().enumerate() {
            let mut cols = free_cols.clone();
            cols.remove(pos);
            let sub = optimal_cost(cost, &rest, &cols);
            // remaining rows must still be able to fill the remaining pairs
            let fill = rest.len().min(cols.len());
            if fill + 1 < needed {
                continue;
            }
            if (fixed + cost[i][j] + sub - best).abs() <= tol {
                chosen = Some((pos, j));
                break;
            }
        }
        match chosen {
            Some((pos, j)) => {
                fixed += cost[i][j];
                free_cols.remove(pos);
                pairs.push((i, j));
                needed -= 1;
            }
            None => {
                // row i stays unmatched; only possible when rows outnumber columns
                debug_assert!(n - i - 1 >= needed);
            }
        }
    }
    let total_cost = pairs.iter().map(|&(i, j)| cost[i][j]).sum();
    Ok(Assignment { pairs, total_cost })
}
