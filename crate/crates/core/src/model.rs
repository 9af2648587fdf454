//! Closed-form delay model: per-rank hit ratios, group loads, the average
//! spectral-efficiency profile, the optimal bandwidth split and the average
//! file transmission delay.
//!
//! Ranks are 1-based in the public API. A vector indexed by rank has `K + 1`
//! entries: entry `k - 1` belongs to the `k`-th nearest SBS and the last entry
//! to the backhaul-served remainder, which is delivered by the nearest SBS.

use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::popularity::Popularity;
use crate::units;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Group-load vectors must sum to one within this tolerance.
pub const LOAD_TOLERANCE: f64 = 1e-9;

/// Radio and topology parameters.
///
/// Densities are per square meter, powers are spectral densities in W/MHz,
/// bandwidth is in Hz and delays in seconds.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    pub sbs_density: f64,
    pub user_density: f64,
    pub tx_psd: f64,
    pub path_loss_exp: f64,
    pub noise_psd: f64,
    /// One interference level per serving rank `1..=K`.
    pub interference: Vec<f64>,
    pub bandwidth_hz: f64,
    pub backhaul_delay_s: f64,
    pub cluster_size: usize,
}

impl Default for NetworkParams {
    /// The standard dense small-cell scenario with a three-SBS cluster.
    fn default() -> Self {
        Self {
            sbs_density: units::per_km2_to_per_m2(50.0),
            user_density: units::per_km2_to_per_m2(500.0),
            tx_psd: 1.0,
            path_loss_exp: 4.0,
            noise_psd: units::dbm_to_watts(-105.0),
            interference: InterferenceSchedule::default().levels.clone(),
            bandwidth_hz: units::mhz_to_hz(10.0),
            backhaul_delay_s: 0.2,
            cluster_size: 3,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &'static str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be finite and > 0")))
            }
        }
        fn non_negative(name: &'static str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{v} must be finite and >= 0")))
            }
        }
        positive("sbs_density", self.sbs_density)?;
        positive("user_density", self.user_density)?;
        positive("tx_psd", self.tx_psd)?;
        positive("bandwidth_hz", self.bandwidth_hz)?;
        non_negative("noise_psd", self.noise_psd)?;
        non_negative("backhaul_delay_s", self.backhaul_delay_s)?;
        if !(self.path_loss_exp > 2.0 && self.path_loss_exp.is_finite()) {
            return Err(Error::invalid(
                "path_loss_exp",
                format!("{} must be > 2", self.path_loss_exp),
            ));
        }
        if self.cluster_size == 0 {
            return Err(Error::invalid("cluster_size", "must be at least 1"));
        }
        if self.interference.len() < self.cluster_size {
            return Err(Error::InterferenceTooShort {
                available: self.interference.len(),
                needed: self.cluster_size,
            });
        }
        if self.interference.len() > self.cluster_size {
            return Err(Error::DimensionMismatch(format!(
                "{} interference levels for cluster size {}",
                self.interference.len(),
                self.cluster_size
            )));
        }
        for &i in &self.interference {
            non_negative("interference", i)?;
        }
        if self.interference.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(
                "interference",
                "levels must be non-decreasing in rank",
            ));
        }
        Ok(())
    }

    /// Returns a copy with cluster size `k` and interference taken from
    /// `schedule`.
    pub fn with_cluster_size(&self, k: usize, schedule: &InterferenceSchedule) -> Result<Self> {
        Ok(Self {
            cluster_size: k,
            interference: schedule.levels_for(k)?,
            ..self.clone()
        })
    }

    /// Expected number of active users per SBS, `lambda / rho`.
    pub fn load_ratio(&self) -> f64 {
        self.user_density / self.sbs_density
    }
}

/// How interference levels are provided for ranks beyond the listed ones.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extension {
    /// Ranks beyond the list are rejected.
    Reject,
    /// Ranks beyond the list reuse the last listed level.
    HoldLast,
}

impl Extension {
    pub fn name(self) -> &'static str {
        match self {
            Extension::Reject => "reject",
            Extension::HoldLast => "hold_last",
        }
    }
}

/// Interference level per serving rank, with an extension policy for ranks
/// past the end of the list.
#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceSchedule {
    pub levels: Vec<f64>,
    pub extension: Extension,
}

impl Default for InterferenceSchedule {
    /// -75, -70 and -68 dBm/MHz for ranks 1..3, held at the last level beyond.
    fn default() -> Self {
        Self {
            levels: [-75.0, -70.0, -68.0].map(units::dbm_to_watts).to_vec(),
            extension: Extension::HoldLast,
        }
    }
}

impl InterferenceSchedule {
    pub fn levels_for(&self, k: usize) -> Result<Vec<f64>> {
        if self.levels.is_empty() || (k > self.levels.len() && self.extension == Extension::Reject)
        {
            return Err(Error::InterferenceTooShort {
                available: self.levels.len(),
                needed: k,
            });
        }
        let last = *self.levels.last().unwrap();
        Ok((0..k)
            .map(|i| self.levels.get(i).copied().unwrap_or(last))
            .collect())
    }
}

/// File library: popularity, coded-segment count per file and segment size.
#[derive(Clone, Debug, PartialEq)]
pub struct FileLibrary {
    popularity: Popularity,
    segments: Vec<u64>,
    segment_bits: f64,
}

impl FileLibrary {
    pub fn new(popularity: Popularity, segments: Vec<u64>, segment_bits: f64) -> Result<Self> {
        if segments.len() != popularity.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} segment counts for {} files",
                segments.len(),
                popularity.len()
            )));
        }
        if let Some(f) = segments.iter().position(|&s| s == 0) {
            return Err(Error::invalid(
                "segments",
                format!("file {} has no segments", f + 1),
            ));
        }
        if !(segment_bits >= 1.0 && segment_bits.is_finite()) {
            return Err(Error::invalid(
                "segment_bits",
                format!("{segment_bits} must be >= 1"),
            ));
        }
        Ok(Self {
            popularity,
            segments,
            segment_bits,
        })
    }

    /// Every file split into the same number of segments.
    pub fn uniform(popularity: Popularity, segments: u64, segment_bits: f64) -> Result<Self> {
        let n = popularity.len();
        Self::new(popularity, vec![segments; n], segment_bits)
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn popularity(&self) -> &Popularity {
        &self.popularity
    }

    pub fn q(&self, file: usize) -> f64 {
        self.popularity.get(file)
    }

    pub fn segments(&self) -> &[u64] {
        &self.segments
    }

    pub fn segment_bits(&self) -> f64 {
        self.segment_bits
    }

    pub fn total_segments(&self) -> u64 {
        self.segments.iter().sum()
    }

    /// Popularity-weighted mean file length, in segments.
    pub fn mean_segments(&self) -> f64 {
        self.popularity
            .probs()
            .iter()
            .zip(&self.segments)
            .map(|(q, &s)| q * s as f64)
            .sum()
    }

    /// Mean requested file size in bits.
    pub fn mean_file_bits(&self) -> f64 {
        self.mean_segments() * self.segment_bits
    }
}

/// Segments of each file stored at every SBS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CachePlacement {
    counts: Vec<u64>,
    budget: u64,
}

impl CachePlacement {
    pub fn new(counts: Vec<u64>, budget: u64) -> Result<Self> {
        let used: u64 = counts.iter().sum();
        if used > budget {
            return Err(Error::invalid(
                "placement",
                format!("{used} cached segments exceed budget {budget}"),
            ));
        }
        Ok(Self { counts, budget })
    }

    pub fn empty(files: usize, budget: u64) -> Self {
        Self {
            counts: vec![0; files],
            budget,
        }
    }

    /// Checks the placement against a library.
    pub fn check(&self, lib: &FileLibrary) -> Result<()> {
        if self.counts.len() != lib.len() {
            return Err(Error::DimensionMismatch(format!(
                "placement covers {} files, library has {}",
                self.counts.len(),
                lib.len()
            )));
        }
        for (f, (&c, &s)) in self.counts.iter().zip(lib.segments()).enumerate() {
            if c > s {
                return Err(Error::invalid(
                    "placement",
                    format!("file {} caches {c} of {s} segments", f + 1),
                ));
            }
        }
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn used(&self) -> u64 {
        self.counts.iter().sum()
    }

    #[cfg(test)]
    pub(crate) fn counts_mut(&mut self) -> &mut [u64] {
        &mut self.counts
    }
}

/// Probability that a request is being served at each rank; the last entry is
/// the backhaul share.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupLoad {
    omega: Vec<f64>,
}

impl GroupLoad {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.len() < 2 {
            return Err(Error::DimensionMismatch(format!(
                "group load needs at least 2 entries, got {}",
                omega.len()
            )));
        }
        if let Some(v) = omega.iter().find(|v| !(-1e-12..=1.0 + 1e-12).contains(*v)) {
            return Err(Error::invalid("omega", format!("entry {v} outside [0, 1]")));
        }
        let total: f64 = omega.iter().sum();
        if (total - 1.0).abs() > LOAD_TOLERANCE {
            return Err(Error::invalid("omega", format!("entries sum to {total}")));
        }
        Ok(Self {
            omega: omega.into_iter().map(|v| v.clamp(0.0, 1.0)).collect(),
        })
    }

    /// Cluster size `K` (the vector has `K + 1` entries).
    pub fn cluster_size(&self) -> usize {
        self.omega.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.omega
    }

    pub fn rank(&self, k: usize) -> f64 {
        self.omega[k - 1]
    }

    pub fn backhaul(&self) -> f64 {
        *self.omega.last().unwrap()
    }

    /// Share of requests served from cluster caches.
    pub fn hit_mass(&self) -> f64 {
        self.omega[..self.omega.len() - 1].iter().sum()
    }
}

/// Average spectral-efficiency coefficient per rank; the last entry repeats
/// rank 1 because backhaul-served segments are delivered by the nearest SBS.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralProfile {
    tau: Vec<f64>,
}

impl SpectralProfile {
    /// Builds a profile from explicit values for ranks `1..=K`; the backhaul
    /// entry is appended.
    pub fn from_ranks(tau: &[f64]) -> Result<Self> {
        if tau.is_empty() {
            return Err(Error::DimensionMismatch("empty spectral profile".into()));
        }
        if let Some((i, &v)) = tau
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
        {
            return Err(Error::NonPositiveSpectralEfficiency {
                rank: i + 1,
                value: v,
            });
        }
        let mut tau = tau.to_vec();
        tau.push(tau[0]);
        Ok(Self { tau })
    }

    pub fn cluster_size(&self) -> usize {
        self.tau.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    pub fn rank(&self, k: usize) -> f64 {
        self.tau[k - 1]
    }

    /// `1 / sqrt(tau_k)` for every entry.
    pub fn inv_sqrt(&self) -> Vec<f64> {
        self.tau.iter().map(|t| 1.0 / t.sqrt()).collect()
    }
}

/// Fraction of the system bandwidth given to each group.
#[derive(Clone, Debug, PartialEq)]
pub struct BandwidthAllocation {
    phi: Vec<f64>,
}

impl BandwidthAllocation {
    pub fn new(phi: Vec<f64>) -> Result<Self> {
        if phi.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
            return Err(Error::invalid("phi", "bandwidth fractions must be >= 0"));
        }
        let total: f64 = phi.iter().sum();
        if total > 1.0 + 1e-9 {
            return Err(Error::invalid(
                "phi",
                format!("fractions sum to {total} > 1"),
            ));
        }
        Ok(Self { phi })
    }

    pub fn values(&self) -> &[f64] {
        &self.phi
    }

    pub fn rank(&self, k: usize) -> f64 {
        self.phi[k - 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DelayBreakdown {
    pub wireless_s: f64,
    pub backhaul_s: f64,
    pub total_s: f64,
}

impl DelayBreakdown {
    fn new(wireless_s: f64, backhaul_s: f64) -> Self {
        Self {
            wireless_s,
            backhaul_s,
            total_s: wireless_s + backhaul_s,
        }
    }
}

fn check_rank(k: usize, cluster: usize) -> Result<()> {
    if k == 0 || k > cluster + 1 {
        return Err(Error::RankOutOfRange {
            rank: k,
            max: cluster + 1,
        });
    }
    Ok(())
}

/// Segments of a file (cached `cached` of `segments`) collected from the
/// rank-`k` SBS, as an integer count. Rank `cluster + 1` is the backhaul.
pub(crate) fn segments_at_rank(cached: u64, segments: u64, k: usize, cluster: usize) -> u64 {
    if k <= cluster {
        let k = k as u64;
        (k * cached).min(segments) - ((k - 1) * cached).min(segments)
    } else {
        segments - (cluster as u64 * cached).min(segments)
    }
}

/// Fraction of a file's segments obtained at rank `k`.
pub fn hit_ratio(cached: u64, segments: u64, k: usize, cluster: usize) -> Result<f64> {
    check_rank(k, cluster)?;
    if segments == 0 || cached > segments {
        return Err(Error::invalid(
            "placement",
            format!("{cached} cached of {segments} segments"),
        ));
    }
    Ok(segments_at_rank(cached, segments, k, cluster) as f64 / segments as f64)
}

/// Group load for raw per-file counts; no validation.
pub(crate) fn group_load_values(counts: &[u64], lib: &FileLibrary, cluster: usize) -> Vec<f64> {
    let mut omega = vec![0.0; cluster + 1];
    for (f, (&c, &s)) in counts.iter().zip(lib.segments()).enumerate() {
        if c == 0 {
            continue;
        }
        let w = lib.q(f) / s as f64;
        for (k, slot) in omega.iter_mut().enumerate().take(cluster) {
            let got = segments_at_rank(c, s, k + 1, cluster);
            if got == 0 {
                break;
            }
            *slot += w * got as f64;
        }
    }
    let hit: f64 = omega[..cluster].iter().sum();
    omega[cluster] = (1.0 - hit).max(0.0);
    omega
}

/// Popularity-weighted hit ratio at every rank.
pub fn group_load(
    placement: &CachePlacement,
    lib: &FileLibrary,
    cluster: usize,
) -> Result<GroupLoad> {
    if cluster == 0 {
        return Err(Error::invalid("cluster_size", "must be at least 1"));
    }
    placement.check(lib)?;
    GroupLoad::new(group_load_values(placement.counts(), lib, cluster))
}

/// Average spectral-efficiency coefficient of rank-`k` service:
///
/// `tau_k = (rho/lambda) [ log2(P (pi rho)^(alpha/2) / (sigma2 + I_k))
///          + alpha/(2 ln 2) (gamma - H_{k-1}) ]`
///
/// where `H_{k-1}` is the harmonic number. Rejects the parameter set if any
/// rank comes out non-positive.
pub fn spectral_profile(net: &NetworkParams) -> Result<SpectralProfile> {
    net.validate()?;
    let rho = net.sbs_density;
    let alpha = net.path_loss_exp;
    let mean_gain = net.tx_psd * (PI * rho).powf(alpha / 2.0);
    let distance_scale = alpha / (2.0 * LN_2);
    let mut harmonic = 0.0;
    let mut tau = Vec::with_capacity(net.cluster_size);
    for (i, &interference) in net.interference.iter().enumerate() {
        if i > 0 {
            harmonic += 1.0 / i as f64;
        }
        let snr_term = (mean_gain / (net.noise_psd + interference)).log2();
        let value =
            (rho / net.user_density) * (snr_term + distance_scale * (EULER_GAMMA - harmonic));
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::NonPositiveSpectralEfficiency { rank: i + 1, value });
        }
        tau.push(value);
    }
    SpectralProfile::from_ranks(&tau)
}

fn check_dims(omega: &GroupLoad, tau: &SpectralProfile) -> Result<()> {
    if omega.values().len() != tau.values().len() {
        return Err(Error::DimensionMismatch(format!(
            "group load has {} entries, spectral profile {}",
            omega.values().len(),
            tau.values().len()
        )));
    }
    Ok(())
}

/// Delay-optimal bandwidth split, `phi_k ∝ omega_k / sqrt(tau_k)`.
pub fn optimal_bandwidth(omega: &GroupLoad, tau: &SpectralProfile) -> Result<BandwidthAllocation> {
    check_dims(omega, tau)?;
    let weights: Vec<f64> = omega
        .values()
        .iter()
        .zip(tau.values())
        .map(|(o, t)| o / t.sqrt())
        .collect();
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::invalid("omega", "all groups are empty"));
    }
    BandwidthAllocation::new(weights.into_iter().map(|w| w / total).collect())
}

/// `sum_k omega_k / sqrt(tau_k)`; its inverse square is the effective
/// aggregate spectral efficiency of a load pattern.
pub fn weighted_inv_sqrt(omega: &GroupLoad, tau: &SpectralProfile) -> f64 {
    omega
        .values()
        .iter()
        .zip(tau.values())
        .map(|(o, t)| o / t.sqrt())
        .sum()
}

/// Average delay under the optimal bandwidth split:
/// wireless `(sum_k omega_k / sqrt(tau_k))^2 * S L / W` plus backhaul
/// `D_BH * omega_{K+1}`.
pub fn average_delay(
    omega: &GroupLoad,
    tau: &SpectralProfile,
    lib: &FileLibrary,
    net: &NetworkParams,
) -> Result<DelayBreakdown> {
    check_dims(omega, tau)?;
    let a = weighted_inv_sqrt(omega, tau);
    Ok(DelayBreakdown::new(
        a * a * lib.mean_file_bits() / net.bandwidth_hz,
        net.backhaul_delay_s * omega.backhaul(),
    ))
}

/// Delay without any cache: every request goes through the backhaul and is
/// delivered by the nearest SBS with the whole band.
pub fn no_cache_delay(tau: &SpectralProfile, lib: &FileLibrary, net: &NetworkParams) -> f64 {
    lib.mean_file_bits() / (net.bandwidth_hz * tau.rank(1)) + net.backhaul_delay_s
}

/// Average delay for an arbitrary bandwidth split:
/// `S L * sum_k omega_k^2 / (W tau_k phi_k) + D_BH * omega_{K+1}`.
///
/// Groups without load contribute nothing; a loaded group with no bandwidth
/// is reported as [`Error::UnboundedDelay`].
pub fn delay_with_allocation(
    omega: &GroupLoad,
    tau: &SpectralProfile,
    phi: &BandwidthAllocation,
    lib: &FileLibrary,
    net: &NetworkParams,
) -> Result<f64> {
    check_dims(omega, tau)?;
    if phi.values().len() != omega.values().len() {
        return Err(Error::DimensionMismatch(format!(
            "allocation has {} entries, group load {}",
            phi.values().len(),
            omega.values().len()
        )));
    }
    let mut sum = 0.0;
    for (k, ((&o, &t), &p)) in omega
        .values()
        .iter()
        .zip(tau.values())
        .zip(phi.values())
        .enumerate()
    {
        if o == 0.0 {
            continue;
        }
        if p == 0.0 {
            return Err(Error::UnboundedDelay { rank: k + 1 });
        }
        sum += o * o / (net.bandwidth_hz * t * p);
    }
    Ok(sum * lib.mean_file_bits() + net.backhaul_delay_s * omega.backhaul())
}

/// Sensitivity of the optimal-allocation delay to the load at rank
/// `k ∈ 2..=K`, with the complementary mass absorbed by the backhaul group.
pub fn delay_gradient_wrt_omega(
    omega: &GroupLoad,
    tau: &SpectralProfile,
    lib: &FileLibrary,
    net: &NetworkParams,
    k: usize,
) -> Result<f64> {
    check_dims(omega, tau)?;
    let cluster = omega.cluster_size();
    if !(2..=cluster).contains(&k) {
        return Err(Error::RankOutOfRange {
            rank: k,
            max: cluster,
        });
    }
    let inv = tau.inv_sqrt();
    let base = inv[0];
    let level: f64 = (2..=cluster)
        .map(|j| (inv[j - 1] - base) * omega.rank(j))
        .sum::<f64>()
        + base;
    Ok(
        2.0 * lib.mean_file_bits() / net.bandwidth_hz * level * (inv[k - 1] - base)
            - net.backhaul_delay_s,
    )
}
