//! Content placement: per-segment marginal gains, the greedy placement, the
//! two baseline schemes and an exhaustive oracle for small instances.
//!
//! The greedy loop keeps the group load up to date incrementally. For a fixed
//! file state the gain of caching one more segment is affine in the current
//! value of `A = sum_k omega_k / sqrt(tau_k)`, so each file carries a pair of
//! coefficients that only changes when that file is picked.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{
    self, average_delay, group_load_values, no_cache_delay, optimal_bandwidth, segments_at_rank,
    spectral_profile, BandwidthAllocation, CachePlacement, DelayBreakdown, FileLibrary, GroupLoad,
    NetworkParams, SpectralProfile,
};
use crate::par::{self, Execution};

/// Which regime a single-segment addition falls into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DeltaCase {
    /// The cluster cannot yet deliver the whole file: one more segment moves
    /// load from the backhaul to every rank equally.
    MissReduction,
    /// The cluster already delivers the whole file: one more segment shifts
    /// load from far ranks to near ones.
    Proximity,
}

/// Change of the group load when one segment of a file is added.
#[derive(Clone, Debug, PartialEq)]
pub struct DeltaDistribution {
    /// Signed probability change per rank, backhaul last.
    pub delta: Vec<f64>,
    /// The same change in whole segments (`delta = q / s * shift`).
    pub segment_shift: Vec<i64>,
    pub case: DeltaCase,
    /// Last rank that gains a full segment, `floor(s / (c + 1))` capped at K.
    pub k_check: usize,
    /// Last rank whose load changes, `ceil(s / c)` capped at K + 1.
    /// Only meaningful for [`DeltaCase::Proximity`].
    pub k_hat: Option<usize>,
}

/// Load change from caching segment `cached + 1` of a file with `segments`
/// segments and popularity `q`, under cluster size `cluster`.
pub fn delta_distribution(
    cached: u64,
    segments: u64,
    q: f64,
    cluster: usize,
) -> Result<DeltaDistribution> {
    if cluster == 0 {
        return Err(Error::invalid("cluster_size", "must be at least 1"));
    }
    if cached >= segments {
        return Err(Error::invalid(
            "cached",
            format!("{cached} of {segments} segments: file already fully cached"),
        ));
    }
    let k = cluster as u64;
    let unit = q / segments as f64;
    if k * (cached + 1) <= segments {
        let mut shift = vec![1i64; cluster + 1];
        shift[cluster] = -(cluster as i64);
        return Ok(DeltaDistribution {
            delta: shift.iter().map(|&d| d as f64 * unit).collect(),
            segment_shift: shift,
            case: DeltaCase::MissReduction,
            k_check: cluster,
            k_hat: None,
        });
    }
    let k_check = ((segments / (cached + 1)) as usize).min(cluster);
    let k_hat = if cached == 0 {
        cluster + 1
    } else {
        (segments.div_ceil(cached) as usize).min(cluster + 1)
    };
    let shift: Vec<i64> = (1..=cluster + 1)
        .map(|rank| {
            if rank <= k_check {
                1
            } else if rank > k_hat {
                0
            } else {
                segments_at_rank(cached + 1, segments, rank, cluster) as i64
                    - segments_at_rank(cached, segments, rank, cluster) as i64
            }
        })
        .collect();
    Ok(DeltaDistribution {
        delta: shift.iter().map(|&d| d as f64 * unit).collect(),
        segment_shift: shift,
        case: DeltaCase::Proximity,
        k_check,
        k_hat: Some(k_hat),
    })
}

/// Whether the proximity-regime step `cached -> cached + 1` satisfies
/// `s/c - s/(c+1) <= 1`, which the diminishing-returns argument relies on.
/// Always true in the miss-reduction regime.
pub fn within_proximity_assumption(cached: u64, segments: u64, cluster: usize) -> bool {
    if cluster as u64 * (cached + 1) <= segments {
        return true;
    }
    cached > 0 && segments <= cached * (cached + 1)
}

/// Delay reduction for a load change `delta` given the current load:
/// `-D_BH delta_{K+1} - (S L / W)(2A + B) B` with `A = sum omega/sqrt(tau)`
/// and `B = sum delta/sqrt(tau)`.
fn gain_from_delta(
    omega: &[f64],
    delta: &[f64],
    inv_sqrt_tau: &[f64],
    sl_over_w: f64,
    backhaul_delay: f64,
) -> f64 {
    let a: f64 = omega.iter().zip(inv_sqrt_tau).map(|(o, t)| o * t).sum();
    let b: f64 = delta.iter().zip(inv_sqrt_tau).map(|(d, t)| d * t).sum();
    -backhaul_delay * delta[delta.len() - 1] - sl_over_w * (2.0 * a + b) * b
}

/// Delay reduction from caching one more segment of `file` (0-based).
pub fn marginal_gain(
    placement: &CachePlacement,
    file: usize,
    omega: &GroupLoad,
    tau: &SpectralProfile,
    lib: &FileLibrary,
    net: &NetworkParams,
) -> Result<f64> {
    placement.check(lib)?;
    if file >= lib.len() {
        return Err(Error::invalid("file", format!("index {file} out of range")));
    }
    if omega.values().len() != tau.values().len() {
        return Err(Error::DimensionMismatch(
            "group load and spectral profile differ in length".into(),
        ));
    }
    let (c, s) = (placement.counts()[file], lib.segments()[file]);
    if c >= s {
        return Err(Error::FullyCached { file });
    }
    let d = delta_distribution(c, s, lib.q(file), omega.cluster_size())?;
    Ok(gain_from_delta(
        omega.values(),
        &d.delta,
        &tau.inv_sqrt(),
        lib.mean_file_bits() / net.bandwidth_hz,
        net.backhaul_delay_s,
    ))
}

/// Outcome of a placement scheme with its optimal bandwidth split.
#[derive(Clone, Debug, PartialEq)]
pub struct PlacementResult {
    pub placement: CachePlacement,
    pub omega: GroupLoad,
    pub tau: SpectralProfile,
    pub allocation: BandwidthAllocation,
    pub delay: DelayBreakdown,
    /// Delay with an empty cache.
    pub baseline_delay_s: f64,
    /// `baseline_delay_s - delay.total_s`.
    pub objective_gain: f64,
}

impl PlacementResult {
    pub fn hit_mass(&self) -> f64 {
        self.omega.hit_mass()
    }

    /// Effective aggregate spectral efficiency `(sum omega/sqrt(tau))^-2`.
    pub fn effective_spectral_efficiency(&self) -> f64 {
        model::weighted_inv_sqrt(&self.omega, &self.tau).powi(-2)
    }

    /// Writes `file_id,c_f,s_f,q_f` rows, 1-based file ids.
    pub fn write_rows(&self, lib: &FileLibrary, mut out: impl Write) -> Result<()> {
        writeln!(out, "file_id,c_f,s_f,q_f")?;
        for (f, (&c, &s)) in self
            .placement
            .counts()
            .iter()
            .zip(lib.segments())
            .enumerate()
        {
            writeln!(out, "{},{c},{s},{}", f + 1, lib.q(f))?;
        }
        Ok(())
    }
}

fn finish(
    counts: Vec<u64>,
    budget: u64,
    tau: SpectralProfile,
    lib: &FileLibrary,
    net: &NetworkParams,
) -> Result<PlacementResult> {
    let placement = CachePlacement::new(counts, budget)?;
    let omega = model::group_load(&placement, lib, net.cluster_size)?;
    let allocation = optimal_bandwidth(&omega, &tau)?;
    let delay = average_delay(&omega, &tau, lib, net)?;
    let baseline_delay_s = no_cache_delay(&tau, lib, net);
    Ok(PlacementResult {
        objective_gain: baseline_delay_s - delay.total_s,
        placement,
        omega,
        tau,
        allocation,
        delay,
        baseline_delay_s,
    })
}

/// Evaluates an explicit placement.
pub fn evaluate(
    placement: &CachePlacement,
    lib: &FileLibrary,
    net: &NetworkParams,
) -> Result<PlacementResult> {
    let tau = spectral_profile(net)?;
    placement.check(lib)?;
    finish(
        placement.counts().to_vec(),
        placement.budget(),
        tau,
        lib,
        net,
    )
}

/// Greedy placement: repeatedly caches the segment with the largest marginal
/// gain until the budget (clamped to the library size) is used up. Ties go to
/// the lowest file index.
pub fn greedy_place(
    lib: &FileLibrary,
    net: &NetworkParams,
    budget: u64,
) -> Result<PlacementResult> {
    let tau = spectral_profile(net)?;
    let cluster = net.cluster_size;
    let inv = tau.inv_sqrt();
    let sl_over_w = lib.mean_file_bits() / net.bandwidth_hz;
    let dbh = net.backhaul_delay_s;
    let target = budget.min(lib.total_segments());

    // gain_f(A) = offset_f - slope_f * A for the current state of file f
    let coefficients = |c: u64, f: usize| -> (f64, f64, Vec<f64>) {
        let d = delta_distribution(c, lib.segments()[f], lib.q(f), cluster)
            .expect("file below its segment count");
        let b: f64 = d.delta.iter().zip(&inv).map(|(d, t)| d * t).sum();
        let offset = -dbh * d.delta[cluster] - sl_over_w * b * b;
        (offset, 2.0 * sl_over_w * b, d.delta)
    };

    let mut counts = vec![0u64; lib.len()];
    let mut omega = vec![0.0; cluster + 1];
    omega[cluster] = 1.0;
    let mut offset = Vec::with_capacity(lib.len());
    let mut slope = Vec::with_capacity(lib.len());
    let mut deltas = Vec::with_capacity(lib.len());
    for f in 0..lib.len() {
        let (o, s, d) = coefficients(0, f);
        offset.push(o);
        slope.push(s);
        deltas.push(d);
    }

    for _ in 0..target {
        let a: f64 = omega.iter().zip(&inv).map(|(o, t)| o * t).sum();
        let mut best = usize::MAX;
        let mut best_gain = f64::NEG_INFINITY;
        for f in 0..lib.len() {
            if counts[f] >= lib.segments()[f] {
                continue;
            }
            let g = offset[f] - slope[f] * a;
            if best == usize::MAX || g > best_gain {
                best = f;
                best_gain = g;
            }
        }
        for (o, d) in omega.iter_mut().zip(&deltas[best]) {
            *o += d;
        }
        counts[best] += 1;
        if counts[best] < lib.segments()[best] {
            let (o, s, d) = coefficients(counts[best], best);
            offset[best] = o;
            slope[best] = s;
            deltas[best] = d;
        }
    }
    finish(counts, budget, tau, lib, net)
}

/// Caches whole files in descending popularity; the last file may be partial.
pub fn place_non_cooperative(
    lib: &FileLibrary,
    net: &NetworkParams,
    budget: u64,
) -> Result<PlacementResult> {
    let tau = spectral_profile(net)?;
    let counts = fill_by_popularity(lib, budget, |s| s);
    finish(counts, budget, tau, lib, net)
}

/// Caches `ceil(s_f / K)` segments per file in descending popularity, so that
/// the cluster jointly holds each chosen file exactly once.
pub fn place_hit_ratio_maximal(
    lib: &FileLibrary,
    net: &NetworkParams,
    budget: u64,
) -> Result<PlacementResult> {
    let tau = spectral_profile(net)?;
    let k = net.cluster_size as u64;
    let counts = fill_by_popularity(lib, budget, |s| s.div_ceil(k));
    finish(counts, budget, tau, lib, net)
}

fn fill_by_popularity(lib: &FileLibrary, budget: u64, per_file: impl Fn(u64) -> u64) -> Vec<u64> {
    let mut counts = vec![0u64; lib.len()];
    let mut left = budget;
    for f in lib.popularity().descending_order() {
        if left == 0 {
            break;
        }
        let take = per_file(lib.segments()[f]).min(left);
        counts[f] = take;
        left -= take;
    }
    counts
}

/// Largest number of candidate placements [`brute_force_place`] will visit.
pub const ENUMERATION_LIMIT: u64 = 10_000_000;

/// Exhaustive search over every placement within the budget. Returns the
/// delay-minimal one; equal delays resolve to the lexicographically smallest
/// count vector.
pub fn brute_force_place(
    lib: &FileLibrary,
    net: &NetworkParams,
    budget: u64,
    exec: Execution,
) -> Result<PlacementResult> {
    let tau = spectral_profile(net)?;
    let bounds: Vec<u64> = lib.segments().iter().map(|&s| s.min(budget)).collect();
    let estimate: f64 = bounds.iter().map(|&b| (b + 1) as f64).product();
    if estimate > ENUMERATION_LIMIT as f64 {
        return Err(Error::InstanceTooLarge {
            estimate,
            limit: ENUMERATION_LIMIT,
        });
    }
    let cluster = net.cluster_size;
    let inv = tau.inv_sqrt();
    let sl_over_w = lib.mean_file_bits() / net.bandwidth_hz;
    let delay_of = |counts: &[u64]| -> f64 {
        let omega = group_load_values(counts, lib, cluster);
        let a: f64 = omega.iter().zip(&inv).map(|(o, t)| o * t).sum();
        a * a * sl_over_w + net.backhaul_delay_s * omega[cluster]
    };

    // one subtree per value of the first file's count
    let first: Vec<u64> = (0..=bounds[0]).collect();
    let subtrees = par::map_slice(exec, &first, |&c0| {
        let mut counts = vec![0u64; lib.len()];
        counts[0] = c0;
        let mut best = (f64::INFINITY, counts.clone());
        enumerate(&mut counts, 1, budget - c0, &bounds, &mut |c| {
            let d = delay_of(c);
            if d < best.0 {
                best = (d, c.to_vec());
            }
        });
        best
    });
    let mut best = (f64::INFINITY, Vec::new());
    for candidate in subtrees {
        if candidate.0 < best.0 {
            best = candidate;
        }
    }
    finish(best.1, budget, tau, lib, net)
}

fn enumerate(
    counts: &mut [u64],
    index: usize,
    left: u64,
    bounds: &[u64],
    visit: &mut impl FnMut(&[u64]),
) {
    if index == counts.len() {
        visit(counts);
        return;
    }
    for c in 0..=bounds[index].min(left) {
        counts[index] = c;
        enumerate(counts, index + 1, left - c, bounds, visit);
    }
    counts[index] = 0;
}

/// Placement strategies offered by [`place`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scheme {
    Greedy,
    HitRatioMaximal,
    NonCooperative,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [
        Scheme::Greedy,
        Scheme::HitRatioMaximal,
        Scheme::NonCooperative,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Greedy => "greedy",
            Scheme::HitRatioMaximal => "hitmax",
            Scheme::NonCooperative => "noncoop",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

pub fn place(
    scheme: Scheme,
    lib: &FileLibrary,
    net: &NetworkParams,
    budget: u64,
) -> Result<PlacementResult> {
    match scheme {
        Scheme::Greedy => greedy_place(lib, net, budget),
        Scheme::HitRatioMaximal => place_hit_ratio_maximal(lib, net, budget),
        Scheme::NonCooperative => place_non_cooperative(lib, net, budget),
    }
}
