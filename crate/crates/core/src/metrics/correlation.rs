use std::cmp::Ordering;

use crate::error::{Error, Result};

fn check_inputs(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "correlation of lists with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two observations"));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Contract("correlation inputs must be finite".into()));
    }
    Ok(())
}

#[inline]
fn cmp(x: f64, y: f64) -> Ordering {
    x.partial_cmp(&y).expect("finite")
}

/// Pairs tied within runs of equal values of an already sorted key.
fn tied_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` ascending and returns the number of inversions (pairs with
/// `i < j` and `v[i] > v[j]`).
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Kendall's tau-b with tie correction, O(n log n) (Knight's algorithm).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    let n = a.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| cmp(a[i], a[j]).then(cmp(b[i], b[j])));

    let a_sorted: Vec<f64> = idx.iter().map(|&i| a[i]).collect();
    let ties_a = tied_pairs(&a_sorted);
    let mut joint = 0u64;
    let mut run = 1u64;
    for w in idx.windows(2) {
        if a[w[0]] == a[w[1]] && b[w[0]] == b[w[1]] {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut b_sorted: Vec<f64> = idx.iter().map(|&i| b[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut b_sorted, &mut buf);
    let ties_b = tied_pairs(&b_sorted);

    let total = (n as u64) * (n as u64 - 1) / 2;
    if ties_a == total || ties_b == total {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    // concordant - discordant
    let diff = total as i64 - ties_a as i64 - ties_b as i64 + joint as i64 - 2 * swaps as i64;
    let denom = (((total - ties_a) as f64) * ((total - ties_b) as f64)).sqrt();
    Ok((diff as f64 / denom).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| cmp(values[i], values[j]));
    let mut ranks = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[idx[end]] == values[idx[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let r = (start + 1 + end) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = r;
        }
        start = end;
    }
    ranks
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation("constant input"));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(a: &[f64], b: &[f64]) -> Result<f64> {
    check_inputs(a, b)?;
    pearson(&average_ranks(a), &average_ranks(b))
}
