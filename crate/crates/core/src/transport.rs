//! Monge-Kantorovich distance `W_1` between weighted point clouds.
//!
//! Three routes, kept deliberately independent so they can cross-check each
//! other: an exact 1D method through the quantile coupling, an exact
//! assignment method for equal-size equal-weight clouds, and a sampled dual
//! lower bound over certified 1-Lipschitz probe functions.

use nalgebra::DVector;
use rand::Rng;

use crate::cloud::WeightedPointCloud;
use crate::error::{CoreError, Result};
use crate::rng::stream;

/// Default cap on the assignment problem size.
pub const DEFAULT_ASSIGNMENT_CAP: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum W1Method {
    Sort1d,
    Assignment,
    DualLowerBound,
}

/// A `W_1` evaluation with its certificate.
#[derive(Debug, Clone)]
pub struct W1Result {
    pub value: f64,
    pub method: W1Method,
    /// Optimal permutation for the assignment method: `matching[k]` is the
    /// index in `b` paired with point `k` of `a`.
    pub matching: Option<Vec<usize>>,
    /// For the dual bound: name of the achieving probe and its values on the
    /// joint support (`a` points first, then `b` points).
    pub probe_certificate: Option<(String, Vec<f64>)>,
}

impl W1Result {
    fn plain(value: f64, method: W1Method) -> Self {
        Self {
            value,
            method,
            matching: None,
            probe_certificate: None,
        }
    }
}

/// Exact 1D `W_1` as the area between cumulative distribution functions,
/// equal to the integral of quantile differences. Ties are broken by
/// position, then input index.
pub fn w1_sorted_1d(a: &WeightedPointCloud, b: &WeightedPointCloud) -> Result<W1Result> {
    for (name, cloud) in [("first", a), ("second", b)] {
        if cloud.dim() != 1 {
            return Err(CoreError::DimensionMismatch {
                context: format!("w1_sorted_1d {name} cloud"),
                expected: 1,
                got: cloud.dim(),
            });
        }
    }

    // Sorted index order per cloud: by position, then by input index.
    let order = |cloud: &WeightedPointCloud| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..cloud.len()).collect();
        idx.sort_by(|&i, &j| {
            cloud.points()[i][0]
                .total_cmp(&cloud.points()[j][0])
                .then(i.cmp(&j))
        });
        idx
    };
    let oa = order(a);
    let ob = order(b);

    // Sweep the merged support, integrating |F_a - F_b| over each gap.
    let mut ia = 0;
    let mut ib = 0;
    let mut cum_a = 0.0f64;
    let mut cum_b = 0.0f64;
    let mut last_pos: Option<f64> = None;
    let mut total = 0.0;
    while ia < oa.len() || ib < ob.len() {
        let xa = oa.get(ia).map(|&i| a.points()[i][0]);
        let xb = ob.get(ib).map(|&i| b.points()[i][0]);
        let x = match (xa, xb) {
            (Some(pa), Some(pb)) => pa.min(pb),
            (Some(pa), None) => pa,
            (None, Some(pb)) => pb,
            (None, None) => unreachable!(),
        };
        if let Some(prev) = last_pos {
            total += (cum_a - cum_b).abs() * (x - prev);
        }
        while ia < oa.len() && a.points()[oa[ia]][0] == x {
            cum_a += a.weights()[oa[ia]];
            ia += 1;
        }
        while ib < ob.len() && b.points()[ob[ib]][0] == x {
            cum_b += b.weights()[ob[ib]];
            ib += 1;
        }
        last_pos = Some(x);
    }
    Ok(W1Result::plain(total, W1Method::Sort1d))
}

/// Exact minimum-cost assignment by the shortest-augmenting-path algorithm
/// with dual potentials, O(n^3). Ties on equal reduced costs resolve to the
/// lowest index, so the matching is deterministic.
fn solve_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // job[w] = row assigned to column w; column n is the virtual start.
    let mut job: Vec<Option<usize>> = vec![None; n + 1];
    let mut ys = vec![0.0f64; n];
    let mut yt = vec![0.0f64; n + 1];
    for row in 0..n {
        let mut w_cur = n;
        job[n] = Some(row);
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut prv = vec![n; n + 1];
        let mut in_tree = vec![false; n + 1];
        while let Some(j) = job[w_cur] {
            in_tree[w_cur] = true;
            let mut delta = f64::INFINITY;
            let mut w_next = w_cur;
            for w in 0..n {
                if !in_tree[w] {
                    let reduced = cost[j][w] - ys[j] - yt[w];
                    if reduced < min_to[w] {
                        min_to[w] = reduced;
                        prv[w] = w_cur;
                    }
                    if min_to[w] < delta {
                        delta = min_to[w];
                        w_next = w;
                    }
                }
            }
            for w in 0..=n {
                if in_tree[w] {
                    if let Some(r) = job[w] {
                        ys[r] += delta;
                    }
                    yt[w] -= delta;
                } else {
                    min_to[w] -= delta;
                }
            }
            w_cur = w_next;
        }
        while w_cur != n {
            let w_prev = prv[w_cur];
            job[w_cur] = job[w_prev];
            w_cur = w_prev;
        }
    }
    let mut matching = vec![0usize; n];
    for w in 0..n {
        if let Some(r) = job[w] {
            matching[r] = w;
        }
    }
    matching
}

/// Exact `W_1` between equal-size clouds with uniform weights:
/// `(1/M) min_sigma sum_k ||a_k - b_{sigma(k)}||` with the optimal
/// permutation returned as certificate.
pub fn w1_assignment(a: &WeightedPointCloud, b: &WeightedPointCloud) -> Result<W1Result> {
    w1_assignment_capped(a, b, DEFAULT_ASSIGNMENT_CAP)
}

pub fn w1_assignment_capped(
    a: &WeightedPointCloud,
    b: &WeightedPointCloud,
    cap: usize,
) -> Result<W1Result> {
    if a.len() != b.len() {
        return Err(CoreError::UnsupportedWeights {
            reason: format!("cloud sizes differ ({} vs {})", a.len(), b.len()),
        });
    }
    if !a.has_uniform_weights() || !b.has_uniform_weights() {
        return Err(CoreError::UnsupportedWeights {
            reason: "weights are not uniform".into(),
        });
    }
    if a.dim() != b.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "w1_assignment clouds".into(),
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let m = a.len();
    if m > cap {
        return Err(CoreError::SizeCapExceeded { size: m, cap });
    }

    let cost: Vec<Vec<f64>> = a
        .points()
        .iter()
        .map(|pa| b.points().iter().map(|pb| (pa - pb).norm()).collect())
        .collect();
    let matching = solve_assignment(&cost);
    let value = matching
        .iter()
        .enumerate()
        .map(|(k, &j)| cost[k][j])
        .sum::<f64>()
        / m as f64;
    Ok(W1Result {
        value,
        method: W1Method::Assignment,
        matching: Some(matching),
        probe_certificate: None,
    })
}

/// A candidate dual test function, claimed 1-Lipschitz.
pub struct Probe {
    pub name: String,
    f: Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
}

impl Probe {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }

    /// Coordinate projection `x -> x_i`.
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("coord[{i}]"), move |x| x[i])
    }

    /// `x -> ||x - anchor||`, 1-Lipschitz by the triangle inequality.
    pub fn distance_to(anchor: DVector<f64>) -> Self {
        let label = format!(
            "dist[{}]",
            anchor.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>().join(",")
        );
        Self::new(label, move |x| (x - &anchor).norm())
    }

    /// Coordinates plus `k` seeded distance probes anchored in the given box.
    pub fn default_family(dim: usize, lo: f64, hi: f64, k: usize, seed: u64) -> Vec<Probe> {
        let mut probes: Vec<Probe> = (0..dim).map(Probe::coordinate).collect();
        let mut rng = stream(seed, "transport/probes");
        for _ in 0..k {
            let anchor = DVector::from_fn(dim, |_, _| rng.random_range(lo..hi));
            probes.push(Probe::distance_to(anchor));
        }
        probes
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.f)(x)
    }
}

/// Duality lower bound: `max_phi |int phi da - int phi db|` over the probe
/// family, after certifying each probe 1-Lipschitz on every pair of support
/// points. Always at most the exact distance.
pub fn w1_dual_lower_bound(
    a: &WeightedPointCloud,
    b: &WeightedPointCloud,
    probes: &[Probe],
) -> Result<W1Result> {
    if a.dim() != b.dim() {
        return Err(CoreError::DimensionMismatch {
            context: "w1_dual_lower_bound clouds".into(),
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let support: Vec<&DVector<f64>> = a.points().iter().chain(b.points().iter()).collect();
    let mut best = f64::NEG_INFINITY;
    let mut best_certificate = None;
    for probe in probes {
        let values: Vec<f64> = support.iter().map(|x| probe.eval(x)).collect();
        for i in 0..support.len() {
            for j in (i + 1)..support.len() {
                let dist = (support[i] - support[j]).norm();
                if dist == 0.0 {
                    continue;
                }
                let ratio = (values[i] - values[j]).abs() / dist;
                if ratio > 1.0 + 1e-9 {
                    return Err(CoreError::ProbeNotLipschitz { ratio, i, j });
                }
            }
        }
        let mean_a: f64 = a
            .points()
            .iter()
            .zip(a.weights())
            .map(|(x, w)| w * probe.eval(x))
            .sum();
        let mean_b: f64 = b
            .points()
            .iter()
            .zip(b.weights())
            .map(|(x, w)| w * probe.eval(x))
            .sum();
        let gap = (mean_a - mean_b).abs();
        if gap > best {
            best = gap;
            best_certificate = Some((probe.name.clone(), values));
        }
    }
    Ok(W1Result {
        value: best.max(0.0),
        method: W1Method::DualLowerBound,
        matching: None,
        probe_certificate: best_certificate,
    })
}

/// `W_1` dispatch used by experiments: exact 1D sweep when the dimension is
/// one (handles weights and unequal sizes), exact assignment otherwise.
pub fn w1_auto(a: &WeightedPointCloud, b: &WeightedPointCloud) -> Result<W1Result> {
    if a.dim() == 1 && b.dim() == 1 {
        w1_sorted_1d(a, b)
    } else {
        w1_assignment(a, b)
    }
}
