//! Cluster-size admissibility and the search for the delay-optimal cluster.

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{
    spectral_profile, DelayBreakdown, FileLibrary, InterferenceSchedule, NetworkParams,
};
use crate::par::{self, Execution};
use crate::placement::greedy_place;

/// Left-hand side of the admissibility condition,
/// `(2 S L / (W sqrt(tau_K))) (1/sqrt(tau_K) - 1/sqrt(tau_1))`, in seconds.
pub fn prop2_lhs(net: &NetworkParams, lib: &FileLibrary) -> Result<f64> {
    let tau = spectral_profile(net)?;
    let inv = tau.inv_sqrt();
    let k = net.cluster_size;
    let scale = 2.0 * lib.mean_file_bits() / net.bandwidth_hz;
    Ok(scale * inv[k - 1] * (inv[k - 1] - inv[0]))
}

/// True when widening service to the farthest rank never costs more
/// wireless delay than the backhaul fetch it saves.
pub fn prop2_condition(net: &NetworkParams, lib: &FileLibrary) -> Result<bool> {
    Ok(prop2_lhs(net, lib)? <= net.backhaul_delay_s)
}

/// Largest admissible cluster size up to `k_limit`, never below 1.
///
/// A cluster size whose spectral profile is not constructible counts as
/// inadmissible, as do all larger ones.
pub fn max_cluster_size(
    template: &NetworkParams,
    lib: &FileLibrary,
    schedule: &InterferenceSchedule,
    k_limit: usize,
) -> Result<usize> {
    if k_limit == 0 {
        return Err(Error::invalid("k_limit", "must be at least 1"));
    }
    let mut best = 1;
    for k in 2..=k_limit {
        let net = template.with_cluster_size(k, schedule)?;
        match prop2_condition(&net, lib) {
            Ok(true) => best = k,
            Ok(false) | Err(Error::NonPositiveSpectralEfficiency { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterRow {
    pub cluster_size: usize,
    pub admissible: bool,
    pub delay: DelayBreakdown,
    pub hit_mass: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterAnalysis {
    /// One row per examined cluster size, ascending.
    pub rows: Vec<ClusterRow>,
    pub k_opt: usize,
}

impl ClusterAnalysis {
    pub fn row(&self, k: usize) -> Option<&ClusterRow> {
        self.rows.iter().find(|r| r.cluster_size == k)
    }

    pub fn optimal(&self) -> &ClusterRow {
        self.row(self.k_opt).expect("k_opt is one of the rows")
    }

    /// Writes `K,admissible,delay_s` rows.
    pub fn write_rows(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "K,admissible,delay_s")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{}",
                r.cluster_size, r.admissible, r.delay.total_s
            )?;
        }
        Ok(())
    }
}

/// Runs the greedy placement for every cluster size in `ks` and picks the
/// delay-minimal one; ties go to the smaller cluster.
pub fn optimal_cluster_size(
    template: &NetworkParams,
    lib: &FileLibrary,
    budget: u64,
    ks: &[usize],
    schedule: &InterferenceSchedule,
    exec: Execution,
) -> Result<ClusterAnalysis> {
    if ks.is_empty() {
        return Err(Error::invalid("cluster_sizes", "no cluster size given"));
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let rows = par::map_slice(exec, &ks, |&k| -> Result<ClusterRow> {
        let net = template.with_cluster_size(k, schedule)?;
        let result = greedy_place(lib, &net, budget)?;
        Ok(ClusterRow {
            cluster_size: k,
            admissible: prop2_condition(&net, lib)?,
            delay: result.delay,
            hit_mass: result.hit_mass(),
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut k_opt = rows[0].cluster_size;
    let mut best = rows[0].delay.total_s;
    for r in &rows[1..] {
        if r.delay.total_s < best {
            best = r.delay.total_s;
            k_opt = r.cluster_size;
        }
    }
    Ok(ClusterAnalysis { rows, k_opt })
}
