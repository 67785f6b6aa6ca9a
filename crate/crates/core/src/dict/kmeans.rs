use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KmEncoding {
    /// `s_j = max(0, mean_k d_k - d_j)`
    #[default]
    Triangle,
    /// One-hot at the nearest center.
    Hard,
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    /// `N x D` cluster centers.
    pub centers: Array2<f64>,
    /// Within-cluster sum of squares after each assignment step.
    pub wcss: Vec<f64>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn plus_plus(patches: &[Vec<f64>], n: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![patches[rng.random_range(0..patches.len())].clone()];
    let mut d2: Vec<f64> = patches.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = d2.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                if *d > 0.0 && u < *d {
                    idx = i;
                    break;
                }
                u -= d;
            }
            idx
        } else {
            rng.random_range(0..patches.len())
        };
        let c = patches[pick].clone();
        for (d, p) in d2.iter_mut().zip(patches) {
            *d = d.min(sq_dist(p, &c));
        }
        centers.push(c);
    }
    centers
}

/// Lloyd's algorithm from k-means++ seeding. Stops early once assignments
/// stop changing.
pub fn kmeans_learn(patches: &[Vec<f64>], n: usize, iters: usize, seed: u64) -> Result<KMeansFit> {
    if n == 0 || iters == 0 {
        return Err(Error::config("k-means needs at least one center and one iteration"));
    }
    if patches.len() < n {
        return Err(Error::config(format!(
            "k-means needs at least {n} patches, got {}",
            patches.len()
        )));
    }
    let d = patches[0].len();
    let mut rng = seeded(seed);
    let mut centers = plus_plus(patches, n, &mut rng);
    let mut assign = vec![usize::MAX; patches.len()];
    let mut wcss = Vec::new();
    for _ in 0..iters {
        let mut dists = vec![0.0; patches.len()];
        let mut changed = false;
        for (i, p) in patches.iter().enumerate() {
            let (best, bd) = centers
                .iter()
                .enumerate()
                .map(|(j, c)| (j, sq_dist(p, c)))
                .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
            changed |= assign[i] != best;
            assign[i] = best;
            dists[i] = bd;
        }
        // reseed empty clusters at the point farthest from its center
        let mut counts = vec![0usize; n];
        for &a in &assign {
            counts[a] += 1;
        }
        for j in 0..n {
            if counts[j] == 0 {
                let far = (0..patches.len())
                    .filter(|&i| counts[assign[i]] > 1)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]));
                if let Some(i) = far {
                    counts[assign[i]] -= 1;
                    counts[j] = 1;
                    assign[i] = j;
                    dists[i] = 0.0;
                    centers[j] = patches[i].clone();
                    changed = true;
                }
            }
        }
        wcss.push(dists.iter().sum());
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; d]; n];
        for (p, &a) in patches.iter().zip(&assign) {
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..n {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
    }
    let centers = Array2::from_shape_fn((n, d), |(j, k)| centers[j][k]);
    Ok(KMeansFit { centers, wcss })
}

pub fn kmeans_encode(centers: &Array2<f64>, v: &[f64], mode: KmEncoding) -> Vec<f64> {
    let dists: Vec<f64> = centers
        .rows()
        .into_iter()
        .map(|c| c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect();
    match mode {
        KmEncoding::Hard => {
            let best = dists
                .iter()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (j, &d)| if d < acc.1 { (j, d) } else { acc })
                .0;
            let mut s = vec![0.0; dists.len()];
            s[best] = 1.0;
            s
        }
        KmEncoding::Triangle => {
            let mean = dists.iter().sum::<f64>() / dists.len() as f64;
            dists.iter().map(|d| (mean - d).max(0.0)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn distinct_points_are_recovered_exactly() {
        let pts = vec![vec![0.0, 0.0], vec![5.0, 1.0], vec![-3.0, 4.0]];
        let mut data = Vec::new();
        for _ in 0..4 {
            data.extend(pts.iter().cloned());
        }
        let fit = kmeans_learn(&data, 3, 10, 1).unwrap();
        assert_eq!(*fit.wcss.last().unwrap(), 0.0);
        for p in &pts {
            assert!(fit.centers.rows().into_iter().any(|c| c.to_vec() == *p));
        }
    }

    #[test]
    fn two_blobs() {
        let mut rng = seeded(5);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let mut data = Vec::new();
        for i in 0..400 {
            let base = if i % 2 == 0 { [2.0, 2.0] } else { [-2.0, -1.0] };
            data.push(vec![base[0] + noise.sample(&mut rng), base[1] + noise.sample(&mut rng)]);
        }
        let mean = |parity: usize| {
            let pts: Vec<_> = data.iter().skip(parity).step_by(2).collect();
            let n = pts.len() as f64;
            [pts.iter().map(|p| p[0]).sum::<f64>() / n, pts.iter().map(|p| p[1]).sum::<f64>() / n]
        };
        let fit = kmeans_learn(&data, 2, 50, 3).unwrap();
        for m in [mean(0), mean(1)] {
            let close = fit.centers.rows().into_iter().any(|c| {
                (c[0] - m[0]).abs() < 0.05 && (c[1] - m[1]).abs() < 0.05
            });
            assert!(close, "no center near {m:?}: {:?}", fit.centers);
        }
    }

    #[test]
    fn wcss_monotone_and_centers_in_hull() {
        let mut rng = seeded(11);
        let data: Vec<Vec<f64>> = (0..300)
            .map(|_| (0..5).map(|_| rng.random::<f64>()).collect())
            .collect();
        let fit = kmeans_learn(&data, 12, 40, 2).unwrap();
        for w in fit.wcss.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", fit.wcss);
        }
        // unit cube data: centers stay inside the bounding box of the data
        for c in fit.centers.iter() {
            assert!((0.0..=1.0).contains(c));
        }
    }

    #[test]
    fn too_few_patches() {
        let err = kmeans_learn(&[vec![0.0]], 2, 5, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn encodings() {
        let centers = Array2::from_shape_vec((3, 2), vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(kmeans_encode(&centers, &[1.0, 0.0], KmEncoding::Hard), vec![0.0, 1.0, 0.0]);
        // equidistant from all three centers
        let eq = Array2::from_shape_vec((3, 2), vec![1.0, 0.0, -1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(kmeans_encode(&eq, &[0.0, 0.0], KmEncoding::Triangle).iter().all(|s| *s == 0.0));
        let mut rng = seeded(1);
        for _ in 0..100 {
            let v = [rng.random::<f64>() * 3.0 - 1.0, rng.random::<f64>() * 3.0 - 1.0];
            let s = kmeans_encode(&centers, &v, KmEncoding::Triangle);
            assert!(s.iter().all(|x| *x >= 0.0));
            assert!(s.iter().any(|x| *x > 0.0) || s.iter().all(|x| *x == 0.0));
        }
    }
}
