//! Independent reference implementations used as test oracles. They are
//! written for clarity rather than speed and share no code with the crate.
#![allow(dead_code)]

/// Majority vote by direct counting; ties go to the lowest class, `None`
/// when every source abstains.
pub fn count_majority(row: &[i32], classes: usize) -> Option<usize> {
    let mut counts = vec![0u32; classes];
    for &v in row {
        if v >= 0 {
            counts[v as usize] += 1;
        }
    }
    let top = *counts.iter().max()?;
    if top == 0 {
        return None;
    }
    counts.iter().position(|&c| c == top)
}

/// Dawid-Skene EM in probability space: initialize from vote fractions, then
/// `iters` rounds of (smoothed M-step, E-step). Rows without votes keep a
/// zero posterior. With `abstain_outcome` an abstain is an extra observed
/// symbol; sources that never vote are left out entirely.
pub fn reference_em(
    votes: &[Vec<i32>],
    classes: usize,
    iters: usize,
    smoothing: f64,
    abstain_outcome: bool,
) -> Vec<Vec<f64>> {
    let n = votes.len();
    let k = votes.first().map_or(0, Vec::len);
    let width = classes + usize::from(abstain_outcome);
    let symbol = |v: i32| -> Option<usize> {
        if v >= 0 {
            Some(v as usize)
        } else if abstain_outcome {
            Some(classes)
        } else {
            None
        }
    };
    let used: Vec<bool> = (0..k).map(|j| votes.iter().any(|r| r[j] >= 0)).collect();
    let mut post = vec![vec![0.0; classes]; n];
    let mut covered = vec![false; n];
    for i in 0..n {
        let total = votes[i].iter().filter(|&&v| v >= 0).count();
        if total == 0 {
            continue;
        }
        covered[i] = true;
        for &v in &votes[i] {
            if v >= 0 {
                post[i][v as usize] += 1.0 / total as f64;
            }
        }
    }
    for _ in 0..iters {
        let mut prior = vec![smoothing; classes];
        for i in (0..n).filter(|&i| covered[i]) {
            for c in 0..classes {
                prior[c] += post[i][c];
            }
        }
        let z: f64 = prior.iter().sum();
        for p in prior.iter_mut() {
            *p /= z;
        }
        let mut conf = vec![vec![vec![smoothing; width]; classes]; k];
        for i in (0..n).filter(|&i| covered[i]) {
            for j in 0..k {
                if let Some(sym) = symbol(votes[i][j]) {
                    for c in 0..classes {
                        conf[j][c][sym] += post[i][c];
                    }
                }
            }
        }
        for source in conf.iter_mut() {
            for row in source.iter_mut() {
                let z: f64 = row.iter().sum();
                for x in row.iter_mut() {
                    *x = if z > 0.0 { *x / z } else { 1.0 / width as f64 };
                }
            }
        }
        for i in (0..n).filter(|&i| covered[i]) {
            let mut p: Vec<f64> = (0..classes)
                .map(|c| {
                    let mut q = prior[c];
                    for j in (0..k).filter(|&j| used[j]) {
                        if let Some(sym) = symbol(votes[i][j]) {
                            q *= conf[j][c][sym];
                        }
                    }
                    q
                })
                .collect();
            let z: f64 = p.iter().sum();
            for x in p.iter_mut() {
                *x /= z;
            }
            post[i] = p;
        }
    }
    post
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues in descending order and matching unit eigenvectors.
pub fn jacobi_eigen(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| a[y][y].total_cmp(&a[x][x]));
    let values = idx.iter().map(|&i| a[i][i]).collect();
    let vectors = idx.iter().map(|&i| (0..n).map(|r| v[r][i]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (n - 1 denominator) of row-major data.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; d]; d];
    for r in rows {
        for i in 0..d {
            for j in 0..d {
                cov[i][j] += (r[i] - mean[i]) * (r[j] - mean[j]);
            }
        }
    }
    for row in cov.iter_mut() {
        for x in row.iter_mut() {
            *x /= (n - 1) as f64;
        }
    }
    cov
}

/// Best training accuracy of any axis stump: tries every threshold between
/// consecutive distinct values of every feature and every leaf labeling.
pub fn best_stump_correct(x: &[Vec<f64>], features: &[usize], y: &[usize], classes: usize) -> usize {
    let mut best = (0..classes).map(|c| y.iter().filter(|&&v| v == c).count()).max().unwrap_or(0);
    for &f in features {
        let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            for l in 0..classes {
                for r in 0..classes {
                    let correct = x
                        .iter()
                        .zip(y)
                        .filter(|(row, &c)| c == if row[f] <= t { l } else { r })
                        .count();
                    best = best.max(correct);
                }
            }
        }
    }
    best
}

/// Fraction of problems where the method's ratio to the per-problem best is at most `tau`,
/// computed straight from the definition; the best objective is floored at
/// `eps` before dividing. `None` entries never count.
pub fn profile_rho(table: &[Vec<Option<f64>>], method: usize, tau: f64, eps: f64) -> f64 {
    let problems = table[0].len();
    let mut hits = 0;
    for p in 0..problems {
        let best = table.iter().filter_map(|row| row[p]).fold(f64::INFINITY, f64::min);
        if let Some(v) = table[method][p] {
            let ratio = if v == best { 1.0 } else { v / best.max(eps) };
            if ratio <= tau {
                hits += 1;
            }
        }
    }
    hits as f64 / problems as f64
}
