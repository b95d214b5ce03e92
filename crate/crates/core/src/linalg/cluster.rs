use super::matrix::{sq_dist, Matrix};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    pub sizes: Vec<usize>,
    /// Inertia after each Lloyd iteration (sum of squared distances to the
    /// assigned centroid).
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

/// Lloyd's algorithm with k-means++ seeding, Euclidean distance.
pub fn kmeans(points: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult> {
    let n = points.rows();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("kmeans needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if max_iter == 0 {
        return Err(Error::invalid("kmeans max_iter must be >= 1"));
    }
    let mut rng = Rng::new(seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut inertia_history = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let mut changed = false;
        for i in 0..n {
            let best = nearest(points.row(i), &centroids).0;
            if assignments[i] != best {
                assignments[i] = best;
                changed = true;
            }
        }
        update_centroids(points, &assignments, &mut centroids);
        reseed_empty(points, &mut assignments, &mut centroids);
        inertia_history.push(inertia(points, &assignments, &centroids));
        if !changed {
            break;
        }
    }

    let mut sizes = vec![0; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        sizes,
        inertia_history,
        iterations,
    })
}

fn plus_plus_init(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.below(n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave target just past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).expect("positive total"))
        } else {
            // all remaining points coincide with a centroid
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    points.select_rows(&chosen)
}

fn nearest(p: &[f64], centroids: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.row_iter().enumerate() {
        let d = sq_dist(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn update_centroids(points: &Matrix, assignments: &[usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    let d = points.cols();
    let mut sums = Matrix::zeros(k, d);
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &x) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            let inv = counts[c] as f64;
            for (dst, &s) in centroids.row_mut(c).iter_mut().zip(sums.row(c)) {
                *dst = s / inv;
            }
        }
    }
}

/// Moves each empty cluster onto the point farthest from its own centroid.
fn reseed_empty(points: &Matrix, assignments: &mut [usize], centroids: &mut Matrix) {
    let k = centroids.rows();
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = (usize::MAX, -1.0);
        for (i, &a) in assignments.iter().enumerate() {
            if counts[a] < 2 {
                continue;
            }
            let d = sq_dist(points.row(i), centroids.row(a));
            if d > far.1 {
                far = (i, d);
            }
        }
        if far.0 == usize::MAX {
            return;
        }
        let (i, old) = (far.0, assignments[far.0]);
        assignments[i] = empty;
        centroids.row_mut(empty).copy_from_slice(points.row(i));
        // refresh the donor centroid without the moved point
        let d = points.cols();
        let mut sum = vec![0.0; d];
        let mut cnt = 0usize;
        for (j, &a) in assignments.iter().enumerate() {
            if a == old {
                cnt += 1;
                for (s, &x) in sum.iter_mut().zip(points.row(j)) {
                    *s += x;
                }
            }
        }
        for (dst, s) in centroids.row_mut(old).iter_mut().zip(sum) {
            *dst = s / cnt as f64;
        }
    }
}

fn inertia(points: &Matrix, assignments: &[usize], centroids: &Matrix) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| sq_dist(points.row(i), centroids.row(a)))
        .sum()
}

/// Greedy farthest-point traversal over cluster centroids.
///
/// The first pick is the candidate with the largest size; each later pick
/// maximizes the minimum Euclidean distance to the already-picked
/// centroids. Ties go to the lowest cluster id.
pub fn farthest_cluster_selection(
    centroids: &Matrix,
    sizes: &[usize],
    candidate_ids: &[usize],
    m: usize,
) -> Result<Vec<usize>> {
    if m > candidate_ids.len() {
        return Err(Error::invalid(format!(
            "cannot select {m} clusters from {} candidates",
            candidate_ids.len()
        )));
    }
    if let Some(&bad) = candidate_ids.iter().find(|&&c| c >= centroids.rows() || c >= sizes.len()) {
        return Err(Error::invalid(format!("candidate cluster {bad} out of range")));
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut remaining: Vec<usize> = candidate_ids.to_vec();
    remaining.sort_unstable();
    remaining.dedup();

    let first = *remaining
        .iter()
        .max_by(|&&a, &&b| sizes[a].cmp(&sizes[b]).then(b.cmp(&a)))
        .expect("non-empty");
    let mut picked = vec![first];
    remaining.retain(|&c| c != first);
    let mut min_d: Vec<f64> = remaining
        .iter()
        .map(|&c| sq_dist(centroids.row(c), centroids.row(first)))
        .collect();

    while picked.len() < m {
        // strict > keeps the lowest id on ties since `remaining` is sorted
        let mut best = 0;
        for (i, &d) in min_d.iter().enumerate() {
            if d > min_d[best] {
                best = i;
            }
        }
        let c = remaining.remove(best);
        min_d.remove(best);
        picked.push(c);
        for (r, d) in remaining.iter().zip(min_d.iter_mut()) {
            *d = d.min(sq_dist(centroids.row(*r), centroids.row(c)));
        }
    }
    Ok(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(rng: &mut Rng, per: usize) -> Matrix {
        let mut rows = Vec::new();
        for center in [0.0, 100.0] {
            for _ in 0..per {
                rows.push(vec![center + 0.1 * rng.normal(), 0.1 * rng.normal()]);
            }
        }
        Matrix::from_rows(&rows).unwrap()
    }

    /// Exhaustive search over all 2-labelings for the minimum inertia.
    fn brute_force_two_means(points: &Matrix) -> Vec<usize> {
        let n = points.rows();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1u32..(1 << n) - 1 {
            let labels: Vec<usize> = (0..n).map(|i| ((mask >> i) & 1) as usize).collect();
            let mut cents = Matrix::zeros(2, points.cols());
            update_centroids(points, &labels, &mut cents);
            let w = inertia(points, &labels, &cents);
            if w < best.0 {
                best = (w, labels);
            }
        }
        best.1
    }

    fn same_partition(a: &[usize], b: &[usize]) -> bool {
        (0..a.len()).all(|i| (0..a.len()).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
    }

    #[test]
    fn two_blobs_match_exhaustive_oracle() {
        let mut rng = Rng::new(4);
        let pts = blobs(&mut rng, 5);
        let r = kmeans(&pts, 2, 1, 50).unwrap();
        assert!(same_partition(&r.assignments, &brute_force_two_means(&pts)));
        assert!(same_partition(&r.assignments, &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1]));
    }

    #[test]
    fn k_equals_n_has_zero_inertia() {
        let mut rng = Rng::new(3);
        let pts = Matrix::random_normal(7, 3, &mut rng);
        let r = kmeans(&pts, 7, 0, 10).unwrap();
        assert_eq!(r.inertia(), 0.0);
        assert!(r.sizes.iter().all(|&s| s == 1));
    }

    #[test]
    fn k_above_n_is_error() {
        let pts = Matrix::zeros(2, 2);
        assert!(kmeans(&pts, 3, 0, 10).is_err());
    }

    #[test]
    fn inertia_non_increasing() {
        let mut rng = Rng::new(10);
        let pts = Matrix::random_normal(300, 4, &mut rng);
        let r = kmeans(&pts, 12, 5, 100).unwrap();
        for w in r.inertia_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9 * w[0].abs(), "{:?}", w);
        }
    }

    #[test]
    fn duplicate_points_do_not_leave_empty_clusters() {
        let pts = Matrix::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let r = kmeans(&pts, 3, 2, 10).unwrap();
        assert_eq!(r.sizes.iter().sum::<usize>(), 5);
        assert!(r.sizes.iter().all(|&s| s > 0));
    }

    fn line(xs: &[f64]) -> Matrix {
        Matrix::from_rows(&xs.iter().map(|&x| vec![x, 0.0]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn single_pick_is_largest() {
        let c = line(&[0.0, 1.0, 2.0]);
        assert_eq!(farthest_cluster_selection(&c, &[3, 9, 9], &[0, 1, 2], 1).unwrap(), vec![1]);
    }

    #[test]
    fn all_candidates_in_deterministic_order() {
        let c = line(&[0.0, 1.0, 2.0, 3.0]);
        let a = farthest_cluster_selection(&c, &[1, 1, 1, 1], &[3, 2, 1, 0], 4).unwrap();
        let b = farthest_cluster_selection(&c, &[1, 1, 1, 1], &[0, 1, 2, 3], 4).unwrap();
        assert_eq!(a, b);
        let mut s = a.clone();
        s.sort_unstable();
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    /// Exhaustive min-distance oracle: the next greedy pick maximizes the
    /// minimum distance to the current picks.
    fn greedy_oracle(c: &Matrix, picked: &[usize], pool: &[usize]) -> usize {
        let mut best = (f64::NEG_INFINITY, usize::MAX);
        for &p in pool.iter().filter(|p| !picked.contains(p)) {
            let d = picked
                .iter()
                .map(|&q| sq_dist(c.row(p), c.row(q)).sqrt())
                .fold(f64::INFINITY, f64::min);
            if d > best.0 || (d == best.0 && p < best.1) {
                best = (d, p);
            }
        }
        best.1
    }

    #[test]
    fn collinear_extremes_then_midpoint() {
        let c = line(&[0.0, 1.0, 2.0, 3.0, 4.0]);
        let sizes = [10, 1, 1, 1, 1];
        let pool = [0, 1, 2, 3, 4];
        let got = farthest_cluster_selection(&c, &sizes, &pool, 3).unwrap();
        assert_eq!(got, vec![0, 4, 2]);
        let second = greedy_oracle(&c, &[0], &pool);
        let third = greedy_oracle(&c, &[0, second], &pool);
        assert_eq!(got, vec![0, second, third]);
    }

    #[test]
    fn too_many_requested() {
        let c = line(&[0.0, 1.0]);
        assert!(farthest_cluster_selection(&c, &[1, 1], &[0, 1], 3).is_err());
    }
}
