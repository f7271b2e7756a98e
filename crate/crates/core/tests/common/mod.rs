//! Oracles shared by the integration and acceptance tests. They are written
//! independently of the library's own code paths.
#![allow(dead_code)]

use phasecp::Matrix;

/// Direct evaluation of `sum_r w_r a(p,r) u(i,r) u(j,r)` into a flat vector
/// in `(i, j, p)` storage order `i + N*(j + N*p)`.
pub fn naive_reconstruct(w: &[f64], a: &Matrix, u: &Matrix) -> Vec<f64> {
    let n = u.nrows();
    let p = a.nrows();
    let mut out = vec![0.0; n * n * p];
    for k in 0..p {
        for j in 0..n {
            for i in 0..n {
                let mut s = 0.0;
                for r in 0..w.len() {
                    s += w[r] * a[(k, r)] * u[(i, r)] * u[(j, r)];
                }
                out[i + n * (j + n * k)] = s;
            }
        }
    }
    out
}

fn abs_cosine(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|a| a * a).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nx == 0.0 || ny == 0.0 {
        return 0.0;
    }
    (dot / (nx * ny)).abs()
}

fn column(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, c)]).collect()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Brute-force search over all column permutations; returns the best
/// achievable worst-case |cosine| over both factor matrices jointly.
pub fn aligned_min_cosine(true_a: &Matrix, true_u: &Matrix, est_a: &Matrix, est_u: &Matrix) -> f64 {
    let r = true_u.ncols();
    assert_eq!(est_u.ncols(), r);
    let mut best = 0.0f64;
    for perm in permutations(r) {
        let mut worst = f64::INFINITY;
        for (t, &e) in perm.iter().enumerate() {
            let cu = abs_cosine(&column(true_u, t), &column(est_u, e));
            let ca = abs_cosine(&column(true_a, t), &column(est_a, e));
            worst = worst.min(cu).min(ca);
        }
        best = best.max(worst);
    }
    best
}

/// Mean silhouette coefficient of 2D points under the given labels.
pub fn silhouette(points: &Matrix, labels: &[usize]) -> f64 {
    let n = points.nrows();
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let dist = |i: usize, j: usize| {
        let mut s = 0.0;
        for c in 0..points.ncols() {
            let d = points[(i, c)] - points[(j, c)];
            s += d * d;
        }
        s.sqrt()
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += dist(i, j);
                counts[labels[j]] += 1;
            }
        }
        let own = labels[i];
        if counts[own] == 0 {
            continue;
        }
        let a = sums[own] / counts[own] as f64;
        let b = (0..k)
            .filter(|&c| c != own && counts[c] > 0)
            .map(|c| sums[c] / counts[c] as f64)
            .fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / n as f64
}

/// Three tight Gaussian clusters (10 points each, sigma 0.01) in R^4 centred
/// on the first three unit vectors, so centres are sqrt(2) apart.
pub fn three_clusters(seed: u64) -> (Matrix, Vec<usize>) {
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 0.01).unwrap();
    let mut labels = Vec::new();
    let mut pts = Matrix::zeros(30, 4);
    for c in 0..3 {
        for m in 0..10 {
            let row = c * 10 + m;
            labels.push(c);
            for d in 0..4 {
                let centre = if d == c { 1.0 } else { 0.0 };
                pts[(row, d)] = centre + normal.sample(&mut rng);
            }
        }
    }
    (pts, labels)
}

#[test]
fn oracle_self_checks() {
    let m = Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]);
    let swapped = Matrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
    assert!((aligned_min_cosine(&m, &m, &swapped, &swapped) - 1.0).abs() < 1e-15);
    assert_eq!(permutations(3).len(), 6);

    let pts = Matrix::from_row_slice(4, 1, &[0.0, 0.1, 10.0, 10.1]);
    assert!(silhouette(&pts, &[0, 0, 1, 1]) > 0.98);
    assert!(silhouette(&pts, &[0, 1, 0, 1]) < 0.0);
}
