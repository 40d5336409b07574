/// 1-based rank of `target`: items scoring strictly higher, plus equal-scored
/// items with a smaller ordinal, come first.
pub fn rank_of_target(scores: &[f64], target: usize) -> usize {
    let s = scores[target];
    let mut rank = 1;
    for (i, &x) in scores.iter().enumerate() {
        if x > s || (x == s && i < target) {
            rank += 1;
        }
    }
    rank
}

pub fn recall_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// Single-relevant-item NDCG: `1 / log2(rank + 1)` inside the cutoff.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Neumaier-compensated mean.
pub fn compensated_mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut n = 0usize;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        (sum + comp) / n as f64
    }
}

/// Indices of the `k` highest scores, best first, ties by ascending ordinal.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
