//! Exact discrete optimal transport between weighted atom sets by successive
//! shortest augmenting paths. Node potentials keep reduced costs
//! nonnegative, so each path search is a Dijkstra run; at termination the
//! potentials certify optimality through complementary slackness.

use crate::geometry::{dist_sq, Domain, Point};
use crate::{Error, Result};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Largest number of atoms on either side accepted by [`discrete_ot_exact`].
pub const MAX_EXACT_ATOMS: usize = 5000;

#[derive(Clone, Debug)]
pub struct DiscretePlan {
    pub cost: f64,
    /// Nonzero entries `(source, target, mass)`.
    pub flows: Vec<(usize, usize, f64)>,
    /// Dual potentials: `u_i + v_j ≤ c_ij` with equality on the support.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// Largest violation of the complementary-slackness conditions.
    pub certificate_error: f64,
}

impl DiscretePlan {
    /// `Σ u_i a_i + Σ v_j b_j`.
    pub fn dual_value(&self, a: &[f64], b: &[f64]) -> f64 {
        self.u.iter().zip(a).map(|(u, a)| u * a).sum::<f64>() + self.v.iter().zip(b).map(|(v, b)| v * b).sum::<f64>()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, usize);

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    // reversed for a min-heap; ties by node index for determinism
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

/// Optimal transport between `sources` and `targets` (points with masses)
/// for the cost `d²` on `domain`.
pub fn discrete_ot_exact(domain: Domain, sources: &[(Point, f64)], targets: &[(Point, f64)]) -> Result<DiscretePlan> {
    let (ns, nt) = (sources.len(), targets.len());
    if ns == 0 || nt == 0 {
        return Err(Error::InvalidArgument("empty atom set".into()));
    }
    if ns > MAX_EXACT_ATOMS || nt > MAX_EXACT_ATOMS {
        return Err(Error::TooLarge(format!(
            "{ns} × {nt} atoms exceeds the exact-solver limit of {MAX_EXACT_ATOMS}"
        )));
    }
    if sources.iter().chain(targets).any(|(_, m)| !(*m >= 0.0)) {
        return Err(Error::InvalidArgument("atom masses must be nonnegative".into()));
    }
    let ma: f64 = sources.iter().map(|s| s.1).sum();
    let mb: f64 = targets.iter().map(|s| s.1).sum();
    if (ma - mb).abs() > 1e-12 * ma.max(mb).max(1.0) {
        return Err(Error::MassMismatch(ma, mb));
    }
    let cost = |i: usize, j: usize| dist_sq(domain, sources[i].0, targets[j].0);
    let eps_mass = 1e-14 * ma;

    let mut supply: Vec<f64> = sources.iter().map(|s| s.1).collect();
    let mut demand: Vec<f64> = targets.iter().map(|s| s.1).collect();
    // nodes 0..ns are sources, ns..ns+nt targets
    let nn = ns + nt;
    let mut pot = vec![0.0; nn];
    // flow[j] holds (source, mass) pairs with positive flow into target j
    let mut flow: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nt];
    let mut dist = vec![f64::INFINITY; nn];
    let mut parent = vec![usize::MAX; nn];
    let mut done = vec![false; nn];

    loop {
        let active: Vec<usize> = (0..ns).filter(|&i| supply[i] > eps_mass).collect();
        if active.is_empty() {
            break;
        }
        dist.iter_mut().for_each(|d| *d = f64::INFINITY);
        parent.iter_mut().for_each(|p| *p = usize::MAX);
        done.iter_mut().for_each(|d| *d = false);
        let mut heap = BinaryHeap::new();
        for &i in &active {
            dist[i] = 0.0;
            heap.push(Entry(0.0, i));
        }
        let mut sink = usize::MAX;
        while let Some(Entry(d, u)) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            if u >= ns && demand[u - ns] > eps_mass {
                sink = u;
                break;
            }
            if u < ns {
                for j in 0..nt {
                    let v = ns + j;
                    if done[v] {
                        continue;
                    }
                    let rc = (cost(u, j) + pot[u] - pot[v]).max(0.0);
                    if d + rc < dist[v] {
                        dist[v] = d + rc;
                        parent[v] = u;
                        heap.push(Entry(dist[v], v));
                    }
                }
            } else {
                let j = u - ns;
                for &(i, f) in &flow[j] {
                    if f <= eps_mass || done[i] {
                        continue;
                    }
                    let rc = (-cost(i, j) + pot[u] - pot[i]).max(0.0);
                    if d + rc < dist[i] {
                        dist[i] = d + rc;
                        parent[i] = u;
                        heap.push(Entry(dist[i], i));
                    }
                }
            }
        }
        if sink == usize::MAX {
            return Err(Error::NotConverged {
                iterations: 0,
                residual: supply.iter().sum(),
            });
        }
        let ds = dist[sink];
        for (p, d) in pot.iter_mut().zip(&dist) {
            *p += d.min(ds);
        }
        // bottleneck along the path
        let mut amount = demand[sink - ns];
        let mut v = sink;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u >= ns {
                // backward arc target u → source v
                let f = flow[u - ns].iter().find(|e| e.0 == v).map_or(0.0, |e| e.1);
                amount = amount.min(f);
            }
            v = u;
        }
        amount = amount.min(supply[v]);
        let root = v;
        let mut v = sink;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if u < ns {
                let j = v - ns;
                match flow[j].iter_mut().find(|e| e.0 == u) {
                    Some(e) => e.1 += amount,
                    None => flow[j].push((u, amount)),
                }
            } else {
                let j = u - ns;
                if let Some(e) = flow[j].iter_mut().find(|e| e.0 == v) {
                    e.1 -= amount;
                }
                flow[j].retain(|e| e.1 > eps_mass);
            }
            v = u;
        }
        supply[root] -= amount;
        demand[sink - ns] -= amount;
    }

    // dual potentials: u_i = -π_i, v_j = -π_j satisfy c_ij + π_i - π_j ≥ 0
    let u: Vec<f64> = pot[..ns].iter().map(|p| -p).collect();
    let v: Vec<f64> = pot[ns..].iter().map(|p| -p).collect();
    let mut flows = Vec::new();
    let mut total = 0.0;
    let mut cert: f64 = 0.0;
    for (j, list) in flow.iter().enumerate() {
        for &(i, f) in list {
            flows.push((i, j, f));
            total += f * cost(i, j);
            cert = cert.max((cost(i, j) - u[i] + v[j]).abs());
        }
    }
    flows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    for i in 0..ns {
        for j in 0..nt {
            cert = cert.max(-(cost(i, j) - u[i] + v[j]));
        }
    }
    // report potentials in the u_i + v_j ≤ c_ij convention
    let v: Vec<f64> = v.iter().map(|x| -x).collect();
    Ok(DiscretePlan {
        cost: total,
        flows,
        u,
        v,
        certificate_error: cert,
    })
}
