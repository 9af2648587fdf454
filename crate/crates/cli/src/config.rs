//! Flat `key = value` experiment configuration in human units.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use edgecache::model::{Extension, FileLibrary, InterferenceSchedule};
use edgecache::montecarlo::SimConfig;
use edgecache::placement::Scheme;
use edgecache::popularity::{load_trace, zipf_popularity, ZipfParams};
use edgecache::{units, Execution, NetworkParams};

use crate::CliError;

/// Every recognized key with its default value.
pub const DEFAULTS: &[(&str, &str)] = &[
    ("alpha", "4"),
    ("backhaul_ms", "200"),
    ("backhaul_sweep_ms", ""),
    ("bandwidth_mhz", "10"),
    ("budget", "10000"),
    ("cluster_size", "3"),
    ("cluster_sizes", "1,2,3,4,5,6,7,8"),
    ("drops", "100"),
    ("execution", "parallel"),
    ("files", "1000"),
    ("interference_dbm_per_mhz", "-75,-70,-68"),
    ("interference_extension", "hold_last"),
    ("lambda_per_km2", "500"),
    ("lambda_sweep_per_km2", "250,500,1000"),
    ("noise_dbm_per_mhz", "-105"),
    ("nu", "1"),
    ("popularity", "zipf"),
    ("region_side_m", "2000"),
    ("rho_per_km2", "50"),
    ("scheme", "greedy"),
    ("schemes", "greedy,hitmax,noncoop"),
    ("seed", "1"),
    ("segment_bits", "1000"),
    ("segments", "1000"),
    ("sweep", "C"),
    ("sweep_values", "1000,5000,10000,20000,50000,100000,200000"),
    ("trace", ""),
    ("tx_power_convention", "per_mhz"),
    ("tx_power_w", "1"),
    ("users_per_drop", "100"),
];

/// Sweepable variables and the key each one overrides.
pub const SWEEP_VARIABLES: &[(&str, &str)] = &[
    ("C", "budget"),
    ("rho", "rho_per_km2"),
    ("lambda", "lambda_per_km2"),
    ("nu", "nu"),
    ("D_BH", "backhaul_ms"),
    ("K", "cluster_size"),
];

/// Resolved configuration: defaults, then the file, then `--set` overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    values: BTreeMap<String, String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn bad(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("key '{key}': {reason}"))
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!("line {}: expected 'key = value'", n + 1))
            })?;
            config.set(key.trim(), value.trim())?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(bad(key, "unknown key")),
        }
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            CliError::Config(format!("override '{assignment}': expected key=value"))
        })?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn f64(&self, key: &str) -> Result<f64, CliError> {
        let raw = self.get(key);
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| bad(key, format!("expected a number, got '{raw}'")))
    }

    pub fn u64(&self, key: &str) -> Result<u64, CliError> {
        let raw = self.get(key);
        raw.parse::<u64>()
            .map_err(|_| bad(key, format!("expected a non-negative integer, got '{raw}'")))
    }

    pub fn usize(&self, key: &str) -> Result<usize, CliError> {
        Ok(self.u64(key)? as usize)
    }

    fn list<T>(&self, key: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, CliError> {
        let raw = self.get(key);
        if raw.is_empty() {
            return Ok(Vec::new());
        }
        raw.split(',')
            .map(|item| {
                parse(item.trim())
                    .ok_or_else(|| bad(key, format!("bad list entry '{}'", item.trim())))
            })
            .collect()
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.list(key, |s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.list(key, |s| s.parse::<usize>().ok())
    }

    pub fn execution(&self) -> Result<Execution, CliError> {
        match self.get("execution") {
            "parallel" => Ok(Execution::Parallel),
            "sequential" => Ok(Execution::Sequential),
            other => Err(bad(
                "execution",
                format!("expected parallel or sequential, got '{other}'"),
            )),
        }
    }

    pub fn schedule(&self) -> Result<InterferenceSchedule, CliError> {
        let levels = self.f64_list("interference_dbm_per_mhz")?;
        if levels.is_empty() {
            return Err(bad(
                "interference_dbm_per_mhz",
                "at least one level is required",
            ));
        }
        let extension = match self.get("interference_extension") {
            "hold_last" => Extension::HoldLast,
            "reject" => Extension::Reject,
            other => {
                return Err(bad(
                    "interference_extension",
                    format!("expected hold_last or reject, got '{other}'"),
                ))
            }
        };
        Ok(InterferenceSchedule {
            levels: levels.into_iter().map(units::dbm_to_watts).collect(),
            extension,
        })
    }

    /// Transmit power spectral density in W/MHz under the configured
    /// convention.
    pub fn tx_psd(&self) -> Result<f64, CliError> {
        let power = self.f64("tx_power_w")?;
        match self.get("tx_power_convention") {
            "per_mhz" => Ok(power),
            "total" => Ok(power / self.f64("bandwidth_mhz")?),
            other => Err(bad(
                "tx_power_convention",
                format!("expected per_mhz or total, got '{other}'"),
            )),
        }
    }

    /// Network parameters without validation; model checks happen where
    /// they are used.
    pub fn network(&self) -> Result<NetworkParams, CliError> {
        let k = self.usize("cluster_size")?;
        if k == 0 {
            return Err(bad("cluster_size", "must be at least 1"));
        }
        let template = NetworkParams {
            sbs_density: units::per_km2_to_per_m2(self.f64("rho_per_km2")?),
            user_density: units::per_km2_to_per_m2(self.f64("lambda_per_km2")?),
            tx_psd: self.tx_psd()?,
            path_loss_exp: self.f64("alpha")?,
            noise_psd: units::dbm_to_watts(self.f64("noise_dbm_per_mhz")?),
            interference: Vec::new(),
            bandwidth_hz: units::mhz_to_hz(self.f64("bandwidth_mhz")?),
            backhaul_delay_s: units::ms_to_s(self.f64("backhaul_ms")?),
            cluster_size: k,
        };
        let net = template.with_cluster_size(k, &self.schedule()?)?;
        net.validate()?;
        Ok(net)
    }

    pub fn library(&self) -> Result<FileLibrary, CliError> {
        let popularity = match self.get("popularity") {
            "zipf" => zipf_popularity(ZipfParams::new(self.usize("files")?, self.f64("nu")?)?)?,
            "trace" => {
                let path = self.get("trace");
                if path.is_empty() {
                    return Err(bad("trace", "popularity = trace needs a trace path"));
                }
                load_trace(PathBuf::from(path))?
            }
            other => {
                return Err(bad(
                    "popularity",
                    format!("expected zipf or trace, got '{other}'"),
                ))
            }
        };
        let segments = self.u64("segments")?;
        let bits = self.f64("segment_bits")?;
        Ok(FileLibrary::uniform(popularity, segments, bits)?)
    }

    pub fn budget(&self) -> Result<u64, CliError> {
        self.u64("budget")
    }

    pub fn scheme(&self) -> Result<Scheme, CliError> {
        let raw = self.get("scheme");
        Scheme::from_name(raw).ok_or_else(|| bad("scheme", format!("unknown scheme '{raw}'")))
    }

    /// Requested schemes, sorted by name.
    pub fn schemes(&self) -> Result<Vec<Scheme>, CliError> {
        let mut schemes = self.list("schemes", Scheme::from_name)?;
        if schemes.is_empty() {
            return Err(bad("schemes", "at least one scheme is required"));
        }
        schemes.sort_by_key(|s| s.name());
        schemes.dedup();
        Ok(schemes)
    }

    pub fn sim(&self) -> Result<SimConfig, CliError> {
        let sim = SimConfig {
            region_side_m: self.f64("region_side_m")?,
            drops: self.usize("drops")?,
            users_per_drop: self.usize("users_per_drop")?,
            seed: self.u64("seed")?,
        };
        sim.validate()?;
        Ok(sim)
    }

    /// The key a sweep variable overrides.
    pub fn sweep_key(&self) -> Result<(&'static str, &'static str), CliError> {
        let var = self.get("sweep");
        SWEEP_VARIABLES
            .iter()
            .find(|(name, _)| *name == var)
            .copied()
            .ok_or_else(|| {
                bad(
                    "sweep",
                    format!("'{var}' is not one of C, rho, lambda, nu, D_BH, K"),
                )
            })
    }

    /// `# key = value` lines for every key, in key order.
    pub fn header(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "# {k} = {v}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgecache::model::spectral_profile;

    #[test]
    fn defaults_match_library_defaults() {
        let c = ExperimentConfig::default();
        let net = c.network().unwrap();
        let reference = NetworkParams::default();
        assert_eq!(net.cluster_size, reference.cluster_size);
        for (a, b) in [
            (net.sbs_density, reference.sbs_density),
            (net.user_density, reference.user_density),
            (net.noise_psd, reference.noise_psd),
            (net.bandwidth_hz, reference.bandwidth_hz),
            (net.backhaul_delay_s, reference.backhaul_delay_s),
        ] {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        assert_eq!(spectral_profile(&net).unwrap().values().len(), 4);
        assert_eq!(c.library().unwrap().len(), 1000);
    }

    #[test]
    fn human_units_round_trip() {
        let c = ExperimentConfig::default();
        let net = c.network().unwrap();
        let back = [
            (units::per_m2_to_per_km2(net.sbs_density), 50.0),
            (units::per_m2_to_per_km2(net.user_density), 500.0),
            (units::watts_to_dbm(net.noise_psd), -105.0),
            (units::watts_to_dbm(net.interference[2]), -68.0),
            (units::hz_to_mhz(net.bandwidth_hz), 10.0),
            (units::s_to_ms(net.backhaul_delay_s), 200.0),
        ];
        for (a, b) in back {
            assert!(((a - b) / b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn parse_and_override() {
        let mut c = ExperimentConfig::parse("# comment\n\nrho_per_km2 = 80\n  nu=0.5  \n").unwrap();
        assert_eq!(c.f64("rho_per_km2").unwrap(), 80.0);
        assert_eq!(c.f64("nu").unwrap(), 0.5);
        c.apply_override("rho_per_km2=90").unwrap();
        assert_eq!(c.f64("rho_per_km2").unwrap(), 90.0);
    }

    #[test]
    fn errors_name_the_key() {
        let err = ExperimentConfig::parse("rho_per_km2 = lots")
            .unwrap()
            .network()
            .unwrap_err();
        assert!(err.to_string().contains("rho_per_km2"));
        let err = ExperimentConfig::parse("colour = red").unwrap_err();
        assert!(err.to_string().contains("colour"));
        let err = ExperimentConfig::parse("just words").unwrap_err();
        assert!(err.to_string().contains("line 1"));
        let mut c = ExperimentConfig::default();
        c.set("sweep", "W").unwrap();
        assert!(c.sweep_key().unwrap_err().to_string().contains("sweep"));
    }

    #[test]
    fn power_conventions() {
        let mut c = ExperimentConfig::default();
        assert_eq!(c.tx_psd().unwrap(), 1.0);
        c.set("tx_power_convention", "total").unwrap();
        assert!((c.tx_psd().unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn scheme_lists_are_sorted() {
        let mut c = ExperimentConfig::default();
        c.set("schemes", "noncoop,greedy").unwrap();
        assert_eq!(
            c.schemes().unwrap(),
            vec![Scheme::Greedy, Scheme::NonCooperative]
        );
        c.set("schemes", "greedy,lru").unwrap();
        assert!(c.schemes().is_err());
    }
}
