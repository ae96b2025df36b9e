//! Semi-discrete transport when the source itself is atomic with equal
//! masses and as many atoms as the target: the Laguerre assignment becomes a
//! permutation, found by the ε-scaled auction algorithm. The final prices are
//! the Kantorovich weights.

use crate::geometry::{dist_sq, Point};
use crate::heat_poisson::PointCloud;
use crate::{Error, Result};

#[derive(Clone, Debug)]
pub struct AtomicPlan {
    /// Target atom of every source atom.
    pub assignment: Vec<u32>,
    /// Weights `w_j` (mean 0) with every source ε-optimal:
    /// `d²(s_i, X_σ(i)) − w_σ(i) ≤ min_j d²(s_i, X_j) − w_j + ε`.
    pub weights: Vec<f64>,
    pub w2sq: f64,
    pub epsilon: f64,
}

/// Equal-mass atomic source `sources` to `cloud` (same size).
pub fn solve_atomic_uniform(sources: &[Point], cloud: &PointCloud) -> Result<AtomicPlan> {
    let n = sources.len();
    if n != cloud.len() {
        return Err(Error::InvalidArgument(format!(
            "atomic source of {n} points needs a cloud of the same size, got {}",
            cloud.len()
        )));
    }
    let dom = cloud.domain;
    let cost: Vec<f64> = sources
        .iter()
        .flat_map(|&s| cloud.points.iter().map(move |&x| dist_sq(dom, s, x)))
        .collect();
    let cmax = cost.iter().cloned().fold(0.0, f64::max).max(1e-300);
    let eps_final = 1e-13 * cmax / n as f64;
    let mut eps = cmax / 4.0;
    let mut prices = vec![0.0; n];
    let mut owner = vec![usize::MAX; n];
    let mut assigned = vec![usize::MAX; n];
    loop {
        owner.iter_mut().for_each(|o| *o = usize::MAX);
        assigned.iter_mut().for_each(|a| *a = usize::MAX);
        let mut queue: Vec<usize> = (0..n).rev().collect();
        let mut rounds = 0usize;
        while let Some(i) = queue.pop() {
            rounds += 1;
            if rounds > 1_000_000 * n.max(1) {
                return Err(Error::NotConverged {
                    iterations: rounds,
                    residual: eps,
                });
            }
            let row = &cost[i * n..(i + 1) * n];
            let (mut b, mut v1, mut v2) = (0, f64::NEG_INFINITY, f64::NEG_INFINITY);
            for (j, c) in row.iter().enumerate() {
                let v = -c - prices[j];
                if v > v1 {
                    v2 = v1;
                    v1 = v;
                    b = j;
                } else if v > v2 {
                    v2 = v;
                }
            }
            let incr = if v2.is_finite() { v1 - v2 + eps } else { eps };
            prices[b] += incr;
            if owner[b] != usize::MAX {
                assigned[owner[b]] = usize::MAX;
                queue.push(owner[b]);
            }
            owner[b] = i;
            assigned[i] = b;
        }
        if eps <= eps_final {
            break;
        }
        eps = (eps / 8.0).max(eps_final);
    }
    let mean = prices.iter().sum::<f64>() / n as f64;
    let weights = prices.iter().map(|p| -(p - mean)).collect();
    let w2sq = assigned.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>() / n as f64;
    Ok(AtomicPlan {
        assignment: assigned.iter().map(|&j| j as u32).collect(),
        weights,
        w2sq,
        epsilon: eps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::heat_poisson::sample_cloud;
    use crate::transport::discrete_ot_exact;

    #[test]
    fn auction_matches_exact_solver() {
        for seed in 0..4 {
            let src = sample_cloud(Domain::Torus, 50, 100 + seed).unwrap();
            let cloud = sample_cloud(Domain::Torus, 50, 200 + seed).unwrap();
            let plan = solve_atomic_uniform(&src.points, &cloud).unwrap();
            let a: Vec<(Point, f64)> = src.points.iter().map(|&p| (p, 0.02)).collect();
            let b: Vec<(Point, f64)> = cloud.points.iter().map(|&p| (p, 0.02)).collect();
            let exact = discrete_ot_exact(Domain::Torus, &a, &b).unwrap();
            assert!((plan.w2sq - exact.cost).abs() < 1e-9);
            // ε-complementary slackness of the weights
            for (i, &s) in src.points.iter().enumerate() {
                let j = plan.assignment[i] as usize;
                let vj = dist_sq(Domain::Torus, s, cloud.points[j]) - plan.weights[j];
                for (k, &x) in cloud.points.iter().enumerate() {
                    assert!(vj <= dist_sq(Domain::Torus, s, x) - plan.weights[k] + plan.epsilon + 1e-15);
                }
            }
        }
    }
}
