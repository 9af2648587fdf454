//! Monte Carlo drops of Poisson SBS and user layouts on a square torus.
//!
//! Each drop draws from its own ChaCha8 stream, selected by the drop index on
//! top of the 64-bit seed, so results do not depend on how drops are spread
//! over threads. Per-drop results are reduced in drop order.

use std::io::Write;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::model::{
    group_load, hit_ratio, optimal_bandwidth, spectral_profile, BandwidthAllocation,
    CachePlacement, FileLibrary, GroupLoad, NetworkParams, EULER_GAMMA,
};
use crate::par::{self, Execution};
use crate::units;

/// Name of the generator behind every simulation stream.
pub const GENERATOR: &str = "ChaCha8 (stream = drop index)";

pub type Point = [f64; 2];

/// Simulation window and sample sizes.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    /// Side of the square window in meters; opposite edges are identified.
    pub region_side_m: f64,
    pub drops: usize,
    /// Tagged users (or probe points) measured per drop.
    pub users_per_drop: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            region_side_m: 2000.0,
            drops: 100,
            users_per_drop: 100,
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.region_side_m > 0.0 && self.region_side_m.is_finite()) {
            return Err(Error::invalid("region_side", "must be positive"));
        }
        if self.drops == 0 {
            return Err(Error::invalid("drops", "must be at least 1"));
        }
        if self.users_per_drop == 0 {
            return Err(Error::invalid("users_per_drop", "must be at least 1"));
        }
        Ok(())
    }

    pub fn area_m2(&self) -> f64 {
        self.region_side_m * self.region_side_m
    }

    /// Non-fatal problems with the window size.
    pub fn warnings(&self, net: &NetworkParams) -> Vec<String> {
        let expected = net.sbs_density * self.area_m2();
        let wanted = 50.0 * net.cluster_size as f64;
        if expected < wanted {
            vec![format!(
                "window holds {expected:.1} SBSs on average, fewer than {wanted} (50 per cluster member)"
            )]
        } else {
            Vec::new()
        }
    }

    pub fn drop_rng(&self, drop: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(drop as u64);
        rng
    }
}

fn torus_delta(side: f64, a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(side - d)
}

pub fn torus_distance(side: f64, a: Point, b: Point) -> f64 {
    torus_delta(side, a[0], b[0]).hypot(torus_delta(side, a[1], b[1]))
}

/// One realization of the SBS and user processes.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub side_m: f64,
    pub sbs: Vec<Point>,
    pub users: Vec<Point>,
}

impl Topology {
    pub fn distance(&self, a: Point, b: Point) -> f64 {
        torus_distance(self.side_m, a, b)
    }
}

fn sample_points(rng: &mut ChaCha8Rng, density: f64, side: f64) -> Result<Vec<Point>> {
    let mean = density * side * side;
    let count: f64 = Poisson::new(mean)
        .map_err(|e| Error::invalid("density", format!("{mean} points expected: {e}")))?
        .sample(rng);
    Ok((0..count as usize)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect())
}

fn sample_with(rng: &mut ChaCha8Rng, net: &NetworkParams, sim: &SimConfig) -> Result<Topology> {
    let sbs = sample_points(rng, net.sbs_density, sim.region_side_m)?;
    let users = sample_points(rng, net.user_density, sim.region_side_m)?;
    Ok(Topology {
        side_m: sim.region_side_m,
        sbs,
        users,
    })
}

/// Draws the topology of drop `drop`.
pub fn sample_topology(net: &NetworkParams, sim: &SimConfig, drop: usize) -> Result<Topology> {
    sim.validate()?;
    sample_with(&mut sim.drop_rng(drop), net, sim)
}

/// Uniform-grid index for k-nearest-neighbor queries on the torus.
pub struct NeighborIndex<'a> {
    points: &'a [Point],
    side: f64,
    cells: usize,
    cell: f64,
    start: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> NeighborIndex<'a> {
    pub fn new(points: &'a [Point], side: f64) -> Self {
        let cells = ((points.len() as f64 / 2.0).sqrt() as usize).clamp(1, 1024);
        let cell = side / cells as f64;
        let mut index = Self {
            points,
            side,
            cells,
            cell,
            start: vec![0; cells * cells + 1],
            order: vec![0; points.len()],
        };
        let ids: Vec<usize> = points.iter().map(|&p| index.cell_id(p)).collect();
        for &id in &ids {
            index.start[id + 1] += 1;
        }
        for i in 0..cells * cells {
            index.start[i + 1] += index.start[i];
        }
        let mut fill = index.start.clone();
        for (i, &id) in ids.iter().enumerate() {
            index.order[fill[id]] = i;
            fill[id] += 1;
        }
        index
    }

    fn cell_coord(&self, v: f64) -> usize {
        ((v / self.cell) as usize).min(self.cells - 1)
    }

    fn cell_id(&self, p: Point) -> usize {
        self.cell_coord(p[1]) * self.cells + self.cell_coord(p[0])
    }

    /// Fills `out` with the `k` nearest points to `p` as `(distance, index)`,
    /// nearest first. Returns fewer when the set is smaller than `k`.
    pub fn nearest(&self, p: Point, k: usize, out: &mut Vec<(f64, usize)>) {
        out.clear();
        let k = k.min(self.points.len());
        if k == 0 {
            return;
        }
        let by_distance =
            |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let n = self.cells as isize;
        let (cx, cy) = (
            self.cell_coord(p[0]) as isize,
            self.cell_coord(p[1]) as isize,
        );
        let mut r: isize = 0;
        loop {
            if 2 * r + 1 >= n {
                out.clear();
                out.extend(
                    self.points
                        .iter()
                        .enumerate()
                        .map(|(i, &q)| (torus_distance(self.side, p, q), i)),
                );
                out.sort_by(by_distance);
                out.truncate(k);
                return;
            }
            for dy in -r..=r {
                let step = if dy.abs() == r { 1 } else { 2 * r };
                let mut dx = -r;
                while dx <= r {
                    let id = ((cy + dy).rem_euclid(n) * n + (cx + dx).rem_euclid(n)) as usize;
                    for &i in &self.order[self.start[id]..self.start[id + 1]] {
                        out.push((torus_distance(self.side, p, self.points[i]), i));
                    }
                    dx += step.max(1);
                }
            }
            if out.len() >= k {
                out.sort_by(by_distance);
                if out[k - 1].0 <= r as f64 * self.cell {
                    out.truncate(k);
                    return;
                }
            }
            r += 1;
        }
    }
}

/// Closed-form mean of `ln d_k` for the distance to the k-th nearest point
/// of a planar Poisson process of density `rho`.
pub fn expected_ln_distance(rho: f64, k: usize) -> f64 {
    let harmonic: f64 = (1..k).map(|m| 0.5 / m as f64).sum();
    -EULER_GAMMA / 2.0 - (std::f64::consts::PI * rho).ln() / 2.0 + harmonic
}

/// Mean and batch-means standard error of per-drop accumulators
/// `(sum, count)`. Drops without samples are skipped.
fn pooled_stats(drops: &[(f64, usize)]) -> (f64, f64, usize) {
    let total: usize = drops.iter().map(|d| d.1).sum();
    if total == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let mean = drops.iter().map(|d| d.0).sum::<f64>() / total as f64;
    let means: Vec<f64> = drops
        .iter()
        .filter(|d| d.1 > 0)
        .map(|d| d.0 / d.1 as f64)
        .collect();
    let m = means.len();
    let stderr = if m < 2 {
        f64::NAN
    } else {
        let mu = means.iter().sum::<f64>() / m as f64;
        let var = means.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (m - 1) as f64;
        (var / m as f64).sqrt()
    };
    (mean, stderr, total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistanceStats {
    pub rank: usize,
    pub mean_ln: f64,
    pub stderr: f64,
    pub analytic: f64,
    pub samples: usize,
}

impl DistanceStats {
    /// Deviation from the closed form in standard errors.
    pub fn z_score(&self) -> f64 {
        (self.mean_ln - self.analytic) / self.stderr
    }
}

fn check_window(net: &NetworkParams, sim: &SimConfig, k: usize) -> Result<()> {
    let expected = net.sbs_density * sim.area_m2();
    if k == 0 || k as f64 > expected / 10.0 {
        return Err(Error::RegionTooSmall(format!(
            "rank {k} needs at least {} SBSs on average, window holds {expected:.1}",
            10 * k
        )));
    }
    Ok(())
}

/// Per-drop distances from uniform probe points to their `k` nearest SBSs.
fn probe_distances(
    net: &NetworkParams,
    sim: &SimConfig,
    drop: usize,
    k: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = sim.drop_rng(drop);
    let sbs = sample_points(&mut rng, net.sbs_density, sim.region_side_m)?;
    if sbs.len() < k {
        return Err(Error::RegionTooSmall(format!(
            "drop {drop} realized {} SBSs, rank {k} requested",
            sbs.len()
        )));
    }
    let grid = NeighborIndex::new(&sbs, sim.region_side_m);
    let mut buf = Vec::with_capacity(k);
    Ok((0..sim.users_per_drop)
        .map(|_| {
            let p = [
                rng.random::<f64>() * sim.region_side_m,
                rng.random::<f64>() * sim.region_side_m,
            ];
            grid.nearest(p, k, &mut buf);
            buf.iter().map(|d| d.0).collect()
        })
        .collect())
}

/// Empirical mean of `ln d_k` over `drops * users_per_drop` probe points.
pub fn kth_distance_stats(
    net: &NetworkParams,
    sim: &SimConfig,
    k: usize,
    exec: Execution,
) -> Result<DistanceStats> {
    sim.validate()?;
    check_window(net, sim, k)?;
    let drops = par::map_range(exec, sim.drops, |d| -> Result<(f64, usize)> {
        let probes = probe_distances(net, sim, d, k)?;
        Ok((probes.iter().map(|ds| ds[k - 1].ln()).sum(), probes.len()))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let (mean_ln, stderr, samples) = pooled_stats(&drops);
    Ok(DistanceStats {
        rank: k,
        mean_ln,
        stderr,
        analytic: expected_ln_distance(net.sbs_density, k),
        samples,
    })
}

/// Kolmogorov-Smirnov distance between the empirical nearest-SBS distance
/// and `1 - exp(-pi rho D^2)`.
pub fn nearest_distance_ks(net: &NetworkParams, sim: &SimConfig, exec: Execution) -> Result<f64> {
    sim.validate()?;
    check_window(net, sim, 1)?;
    let per_drop = par::map_range(exec, sim.drops, |d| probe_distances(net, sim, d, 1))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut d: Vec<f64> = per_drop.into_iter().flatten().map(|v| v[0]).collect();
    d.sort_by(f64::total_cmp);
    let n = d.len() as f64;
    let rho_pi = std::f64::consts::PI * net.sbs_density;
    Ok(d.iter().enumerate().fold(0.0, |worst: f64, (i, &x)| {
        let f = 1.0 - (-rho_pi * x * x).exp();
        worst
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs())
    }))
}

/// Observed user-SBS pairs within `radius` divided by the count expected
/// if the two processes were independent. Close to 1 under independence.
pub fn cross_pair_ratio(topo: &Topology, radius: f64) -> f64 {
    let pairs = topo
        .users
        .iter()
        .map(|&u| {
            topo.sbs
                .iter()
                .filter(|&&s| topo.distance(u, s) <= radius)
                .count()
        })
        .sum::<usize>();
    let area = topo.side_m * topo.side_m;
    let expected =
        topo.users.len() as f64 * topo.sbs.len() as f64 * std::f64::consts::PI * radius * radius
            / area;
    pairs as f64 / expected
}

/// Rate seen by one tagged user at one rank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSample {
    pub rank: usize,
    pub distance_m: f64,
    pub sinr: f64,
    /// Users of the same rank sharing the serving SBS, tagged user included.
    pub cell_load: usize,
    pub rate_bps: f64,
}

fn sinr(net: &NetworkParams, rank: usize, distance: f64) -> f64 {
    net.tx_psd * distance.powf(-net.path_loss_exp) / (net.noise_psd + net.interference[rank - 1])
}

/// Nearest `k` SBS indices and distances for every user, row-major.
fn user_neighbors(topo: &Topology, k: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    if topo.sbs.len() < k {
        return Err(Error::RegionTooSmall(format!(
            "{} SBSs realized, cluster of {k} requested",
            topo.sbs.len()
        )));
    }
    let grid = NeighborIndex::new(&topo.sbs, topo.side_m);
    let mut ids = Vec::with_capacity(topo.users.len() * k);
    let mut dist = Vec::with_capacity(topo.users.len() * k);
    let mut buf = Vec::with_capacity(k);
    for &u in &topo.users {
        grid.nearest(u, k, &mut buf);
        ids.extend(buf.iter().map(|d| d.1));
        dist.extend(buf.iter().map(|d| d.0));
    }
    Ok((ids, dist))
}

/// How each simulated user picks its serving group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GroupSampling {
    /// Draw the group directly from the group load.
    #[default]
    Aggregate,
    /// Draw a file by popularity, then a rank by that file's hit ratios.
    PerFile,
}

enum Sampler {
    Aggregate(Vec<f64>),
    PerFile {
        files: Vec<f64>,
        ranks: Vec<Vec<f64>>,
    },
}

fn cumulative(p: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cum: Vec<f64> = p
        .into_iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect();
    if let Some(last) = cum.last_mut() {
        *last = 1.0;
    }
    cum
}

fn pick(cum: &[f64], u: f64) -> usize {
    cum.partition_point(|&c| c <= u).min(cum.len() - 1)
}

impl Sampler {
    fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        match self {
            Sampler::Aggregate(cum) => pick(cum, rng.random()),
            Sampler::PerFile { files, ranks } => {
                let f = pick(files, rng.random());
                pick(&ranks[f], rng.random())
            }
        }
    }
}

/// Per-rank simulation summary.
#[derive(Clone, Debug, PartialEq)]
pub struct RankRate {
    pub rank: usize,
    pub omega: f64,
    pub phi: f64,
    pub samples: usize,
    pub mean_bps: f64,
    pub stderr_bps: f64,
    /// Analytical lower bound `W phi_k tau_k / omega_k`.
    pub bound_bps: f64,
    /// Rank-k users per SBS, averaged over drops.
    pub mean_sbs_load: f64,
    /// `lambda omega_k / rho`.
    pub expected_sbs_load: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RateReport {
    /// Ranks with non-zero group load, ascending. Backhaul service is not
    /// reported.
    pub ranks: Vec<RankRate>,
}

impl RateReport {
    pub fn rank(&self, k: usize) -> Option<&RankRate> {
        self.ranks.iter().find(|r| r.rank == k)
    }
}

struct DropRates {
    /// Per rank `1..=K+1`: (sum of rates, tagged count).
    rates: Vec<(f64, usize)>,
    /// Per rank: users in the group divided by SBS count.
    load: Vec<f64>,
    samples: Vec<RateSample>,
}

fn simulate_drop(
    net: &NetworkParams,
    phi: &[f64],
    sampler: &Sampler,
    sim: &SimConfig,
    drop: usize,
    keep_samples: bool,
) -> Result<DropRates> {
    let k = net.cluster_size;
    let mut rng = sim.drop_rng(drop);
    let topo = sample_with(&mut rng, net, sim)?;
    let (ids, dist) = user_neighbors(&topo, k)?;
    let groups: Vec<usize> = (0..topo.users.len())
        .map(|_| sampler.draw(&mut rng))
        .collect();
    // backhaul-served users sit on their nearest SBS
    let serving = |u: usize, g: usize| {
        if g == k {
            (ids[u * k], dist[u * k], 1)
        } else {
            (ids[u * k + g], dist[u * k + g], g + 1)
        }
    };
    let mut counts = vec![vec![0usize; topo.sbs.len()]; k + 1];
    for (u, &g) in groups.iter().enumerate() {
        counts[g][serving(u, g).0] += 1;
    }
    let load = counts
        .iter()
        .map(|c| c.iter().sum::<usize>() as f64 / topo.sbs.len() as f64)
        .collect();
    let mut rates = vec![(0.0, 0usize); k + 1];
    let mut samples = Vec::new();
    let tagged = sim.users_per_drop.min(topo.users.len());
    for u in index::sample(&mut rng, topo.users.len(), tagged) {
        let g = groups[u];
        let (s, d, link_rank) = serving(u, g);
        let zeta = sinr(net, link_rank, d);
        let n = counts[g][s];
        let rate = phi[g] * net.bandwidth_hz / n as f64 * (1.0 + zeta).log2();
        rates[g].0 += rate;
        rates[g].1 += 1;
        if keep_samples && g < k {
            samples.push(RateSample {
                rank: g + 1,
                distance_m: d,
                sinr: zeta,
                cell_load: n,
                rate_bps: rate,
            });
        }
    }
    Ok(DropRates {
        rates,
        load,
        samples,
    })
}

fn run_groups(
    net: &NetworkParams,
    omega: &GroupLoad,
    phi: &BandwidthAllocation,
    sampler: Sampler,
    sim: &SimConfig,
    exec: Execution,
) -> Result<RateReport> {
    sim.validate()?;
    let tau = spectral_profile(net)?;
    let k = net.cluster_size;
    if omega.cluster_size() != k || phi.values().len() != k + 1 {
        return Err(Error::DimensionMismatch(format!(
            "cluster size {k} does not match the group load or allocation"
        )));
    }
    let drops = par::map_range(exec, sim.drops, |d| {
        simulate_drop(net, phi.values(), &sampler, sim, d, false)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut ranks = Vec::new();
    for g in 0..k {
        let w = omega.values()[g];
        if w <= 0.0 {
            continue;
        }
        let per_drop: Vec<(f64, usize)> = drops.iter().map(|d| d.rates[g]).collect();
        let (mean_bps, stderr_bps, samples) = pooled_stats(&per_drop);
        if samples == 0 {
            continue;
        }
        ranks.push(RankRate {
            rank: g + 1,
            omega: w,
            phi: phi.values()[g],
            samples,
            mean_bps,
            stderr_bps,
            bound_bps: net.bandwidth_hz * phi.values()[g] * tau.values()[g] / w,
            mean_sbs_load: drops.iter().map(|d| d.load[g]).sum::<f64>() / drops.len() as f64,
            expected_sbs_load: net.user_density * w / net.sbs_density,
        });
    }
    Ok(RateReport { ranks })
}

/// Per-rank rates when users join groups with probabilities `omega` and
/// share the band according to `phi`.
pub fn simulate_group_rates(
    net: &NetworkParams,
    omega: &GroupLoad,
    phi: &BandwidthAllocation,
    sim: &SimConfig,
    exec: Execution,
) -> Result<RateReport> {
    let sampler = Sampler::Aggregate(cumulative(omega.values().iter().copied()));
    run_groups(net, omega, phi, sampler, sim, exec)
}

/// Per-rank rates under a placement with its optimal bandwidth split.
pub fn simulate_rate(
    net: &NetworkParams,
    lib: &FileLibrary,
    placement: &CachePlacement,
    sim: &SimConfig,
    sampling: GroupSampling,
    exec: Execution,
) -> Result<RateReport> {
    let k = net.cluster_size;
    let omega = group_load(placement, lib, k)?;
    let phi = optimal_bandwidth(&omega, &spectral_profile(net)?)?;
    let sampler = match sampling {
        GroupSampling::Aggregate => Sampler::Aggregate(cumulative(omega.values().iter().copied())),
        GroupSampling::PerFile => Sampler::PerFile {
            files: cumulative(lib.popularity().probs().iter().copied()),
            ranks: placement
                .counts()
                .iter()
                .zip(lib.segments())
                .map(|(&c, &s)| {
                    (1..=k + 1)
                        .map(|r| hit_ratio(c, s, r, k))
                        .collect::<Result<Vec<_>>>()
                        .map(cumulative)
                })
                .collect::<Result<Vec<_>>>()?,
        },
    };
    run_groups(net, &omega, &phi, sampler, sim, exec)
}

/// Raw tagged-user samples of one drop, for inspection.
pub fn drop_rate_samples(
    net: &NetworkParams,
    omega: &GroupLoad,
    phi: &BandwidthAllocation,
    sim: &SimConfig,
    drop: usize,
) -> Result<Vec<RateSample>> {
    let sampler = Sampler::Aggregate(cumulative(omega.values().iter().copied()));
    Ok(simulate_drop(net, phi.values(), &sampler, sim, drop, true)?.samples)
}

/// One point of the rate-bound validation table.
#[derive(Clone, Debug, PartialEq)]
pub struct ValidationRow {
    pub user_density: f64,
    pub rank: usize,
    pub simulated_bps: f64,
    pub stderr_bps: f64,
    pub bound_bps: f64,
    pub samples: usize,
}

impl ValidationRow {
    /// Bound below the simulated mean up to two standard errors.
    pub fn bound_holds(&self) -> bool {
        self.bound_bps <= self.simulated_bps + 2.0 * self.stderr_bps
    }

    pub fn relative_gap(&self) -> f64 {
        (self.simulated_bps - self.bound_bps) / self.simulated_bps
    }
}

/// Checks the per-rank rate lower bound `W tau_k` for every user density in
/// `user_densities` (per m^2).
///
/// For each rank the whole user population is associated with that rank and
/// given the full band, so every SBS carries its share of rank-k traffic.
/// All ranks of one drop share the same topology.
pub fn validate_lemma1(
    net: &NetworkParams,
    sim: &SimConfig,
    user_densities: &[f64],
    exec: Execution,
) -> Result<Vec<ValidationRow>> {
    sim.validate()?;
    let k = net.cluster_size;
    let mut rows = Vec::with_capacity(user_densities.len() * k);
    for &lambda in user_densities {
        if lambda.is_nan() || lambda <= 0.0 {
            return Err(Error::invalid("lambda", "user densities must be positive"));
        }
        let net = NetworkParams {
            user_density: lambda,
            ..net.clone()
        };
        let tau = spectral_profile(&net)?;
        let drops = par::map_range(exec, sim.drops, |d| -> Result<Vec<(f64, usize)>> {
            let mut rng = sim.drop_rng(d);
            let topo = sample_with(&mut rng, &net, sim)?;
            let (ids, dist) = user_neighbors(&topo, k)?;
            let mut out = vec![(0.0, 0usize); k];
            let mut counts = vec![0usize; topo.sbs.len()];
            let tagged: Vec<usize> = index::sample(
                &mut rng,
                topo.users.len(),
                sim.users_per_drop.min(topo.users.len()),
            )
            .into_iter()
            .collect();
            for (g, acc) in out.iter_mut().enumerate() {
                counts.iter_mut().for_each(|c| *c = 0);
                for u in 0..topo.users.len() {
                    counts[ids[u * k + g]] += 1;
                }
                for &u in &tagged {
                    let zeta = sinr(&net, g + 1, dist[u * k + g]);
                    acc.0 += net.bandwidth_hz / counts[ids[u * k + g]] as f64 * (1.0 + zeta).log2();
                    acc.1 += 1;
                }
            }
            Ok(out)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for g in 0..k {
            let per_drop: Vec<(f64, usize)> = drops.iter().map(|d| d[g]).collect();
            let (simulated_bps, stderr_bps, samples) = pooled_stats(&per_drop);
            rows.push(ValidationRow {
                user_density: lambda,
                rank: g + 1,
                simulated_bps,
                stderr_bps,
                bound_bps: net.bandwidth_hz * tau.values()[g],
                samples,
            });
        }
    }
    Ok(rows)
}

/// Writes `lambda_per_km2,rank,simulated_rate_bps,stderr_bps,bound_rate_bps`.
pub fn write_validation_rows(rows: &[ValidationRow], mut out: impl Write) -> Result<()> {
    writeln!(
        out,
        "lambda_per_km2,rank,simulated_rate_bps,stderr_bps,bound_rate_bps"
    )?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            units::per_m2_to_per_km2(r.user_density),
            r.rank,
            r.simulated_bps,
            r.stderr_bps,
            r.bound_bps
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InterferenceSchedule;
    use crate::popularity::{zipf_popularity, ZipfParams};
    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn brute_nearest(points: &[Point], side: f64, p: Point, k: usize) -> Vec<usize> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, &q)| (torus_distance(side, p, q), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.into_iter().take(k).map(|x| x.1).collect()
    }

    proptest! {
        #[test]
        fn grid_matches_brute_force(n in 0usize..400, k in 1usize..6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let side = 1000.0;
            let pts: Vec<Point> = (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect();
            let grid = NeighborIndex::new(&pts, side);
            let mut out = Vec::new();
            for _ in 0..20 {
                let p = [rng.random::<f64>() * side, rng.random::<f64>() * side];
                grid.nearest(p, k, &mut out);
                let got: Vec<usize> = out.iter().map(|d| d.1).collect();
                prop_assert_eq!(got, brute_nearest(&pts, side, p, k));
                prop_assert!(out.windows(2).all(|w| w[0].0 <= w[1].0));
            }
        }
    }

    #[test]
    fn torus_wraps() {
        assert!((torus_distance(100.0, [1.0, 1.0], [99.0, 99.0]) - 8f64.sqrt()).abs() < 1e-12);
        assert_eq!(torus_distance(100.0, [0.0, 0.0], [50.0, 0.0]), 50.0);
    }

    #[test]
    fn poisson_count_mean() {
        // rho * area = 100
        let net = NetworkParams {
            sbs_density: 1e-4,
            user_density: 1e-6,
            ..NetworkParams::default()
        };
        let sim = SimConfig {
            region_side_m: 1000.0,
            drops: 1000,
            ..SimConfig::default()
        };
        let total: usize = (0..sim.drops)
            .map(|d| sample_topology(&net, &sim, d).unwrap().sbs.len())
            .sum();
        let mean = total as f64 / sim.drops as f64;
        assert!((97.0..=103.0).contains(&mean), "{mean}");
    }

    #[test]
    fn same_seed_same_points() {
        let net = NetworkParams::default();
        let sim = SimConfig::default();
        assert_eq!(
            sample_topology(&net, &sim, 7).unwrap(),
            sample_topology(&net, &sim, 7).unwrap()
        );
        assert_ne!(
            sample_topology(&net, &sim, 7).unwrap(),
            sample_topology(&net, &sim, 8).unwrap()
        );
        let other = SimConfig {
            seed: 2,
            ..sim.clone()
        };
        assert_ne!(
            sample_topology(&net, &sim, 7).unwrap(),
            sample_topology(&net, &other, 7).unwrap()
        );
    }

    #[test]
    fn users_and_sbs_are_independent() {
        let net = NetworkParams::default();
        let sim = SimConfig::default();
        let ratios: Vec<f64> = (0..20)
            .map(|d| cross_pair_ratio(&sample_topology(&net, &sim, d).unwrap(), 100.0))
            .collect();
        let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn analytic_distance_law() {
        let rho = 5e-5;
        let d1 = expected_ln_distance(rho, 1);
        assert!(
            (d1 - (-0.5 * EULER_GAMMA - 0.5 * (std::f64::consts::PI * rho).ln())).abs() < 1e-15
        );
        assert!((d1 - 4.090_771_000_892_597).abs() < 1e-12);
        assert!((expected_ln_distance(rho, 2) - d1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn distance_window_checks() {
        let net = NetworkParams::default();
        let small = SimConfig {
            region_side_m: 300.0,
            ..SimConfig::default()
        };
        assert!(matches!(
            kth_distance_stats(&net, &small, 2, Execution::Sequential),
            Err(Error::RegionTooSmall(_))
        ));
        assert!(matches!(
            kth_distance_stats(&net, &SimConfig::default(), 0, Execution::Sequential),
            Err(Error::RegionTooSmall(_))
        ));
        assert_eq!(small.warnings(&net).len(), 1);
        assert!(SimConfig::default().warnings(&net).is_empty());
    }

    #[test]
    fn drop_samples_are_consistent() {
        let net = NetworkParams::default();
        let omega = GroupLoad::new(vec![0.4, 0.2, 0.1, 0.3]).unwrap();
        let phi = optimal_bandwidth(&omega, &spectral_profile(&net).unwrap()).unwrap();
        let samples = drop_rate_samples(&net, &omega, &phi, &SimConfig::default(), 3).unwrap();
        assert!(!samples.is_empty());
        for s in samples {
            assert!(s.cell_load >= 1);
            assert!((s.sinr - sinr(&net, s.rank, s.distance_m)).abs() <= 1e-12 * s.sinr);
            assert!(s.rate_bps > 0.0);
        }
    }

    #[test]
    fn neighbor_distances_are_ordered() {
        let net = NetworkParams::default();
        let topo = sample_topology(&net, &SimConfig::default(), 0).unwrap();
        let (_, dist) = user_neighbors(&topo, 3).unwrap();
        assert!(dist.chunks(3).all(|d| d[0] <= d[1] && d[1] <= d[2]));
    }

    #[test]
    fn fully_cached_single_rank_reports_rank_one_only() {
        let net = NetworkParams::default()
            .with_cluster_size(1, &InterferenceSchedule::default())
            .unwrap();
        let q = zipf_popularity(ZipfParams {
            files: 5,
            skew: 1.0,
        })
        .unwrap();
        let lib = FileLibrary::uniform(q, 10, 1000.0).unwrap();
        let placement = CachePlacement::new(vec![10; 5], 50).unwrap();
        let sim = SimConfig {
            drops: 10,
            ..SimConfig::default()
        };
        let r = simulate_rate(
            &net,
            &lib,
            &placement,
            &sim,
            GroupSampling::Aggregate,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!(r.ranks.len(), 1);
        assert_eq!(r.ranks[0].rank, 1);
    }

    #[test]
    fn empty_groups_are_absent() {
        let net = NetworkParams::default();
        let omega = GroupLoad::new(vec![0.5, 0.0, 0.2, 0.3]).unwrap();
        let phi = optimal_bandwidth(&omega, &spectral_profile(&net).unwrap()).unwrap();
        let sim = SimConfig {
            drops: 10,
            ..SimConfig::default()
        };
        let r = simulate_group_rates(&net, &omega, &phi, &sim, Execution::Parallel).unwrap();
        assert_eq!(
            r.ranks.iter().map(|x| x.rank).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert!(r.rank(2).is_none());
    }

    #[test]
    fn execution_modes_are_bit_identical() {
        let net = NetworkParams::default();
        let sim = SimConfig {
            drops: 12,
            ..SimConfig::default()
        };
        let lambdas = [units::per_km2_to_per_m2(500.0)];
        let a = validate_lemma1(&net, &sim, &lambdas, Execution::Sequential).unwrap();
        let b = validate_lemma1(&net, &sim, &lambdas, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let mut buf = Vec::new();
        write_validation_rows(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("500,1,"));
    }
}
