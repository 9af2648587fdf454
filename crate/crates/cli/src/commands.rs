//! The four experiment commands. Each returns its CSV text; nothing is
//! written to disk here.

use std::fmt::Write as _;

use edgecache::clustering::{max_cluster_size, optimal_cluster_size, ClusterAnalysis};
use edgecache::montecarlo::{validate_lemma1, write_validation_rows, GENERATOR};
use edgecache::par;
use edgecache::placement::{place, PlacementResult, Scheme};
use edgecache::units;

use crate::config::ExperimentConfig;
use crate::CliError;

/// Result of one command.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub csv: String,
    /// Human-readable lines for stderr.
    pub notes: Vec<String>,
    /// Set when the run completed but a checked property failed.
    pub failure: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Place,
    Sweep,
    Cluster,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Place => "place",
            Command::Sweep => "sweep",
            Command::Cluster => "cluster",
            Command::Validate => "validate",
        }
    }
}

pub fn run(command: Command, config: &ExperimentConfig) -> Result<Report, CliError> {
    match command {
        Command::Place => cmd_place(config),
        Command::Sweep => cmd_sweep(config),
        Command::Cluster => cmd_cluster(config),
        Command::Validate => cmd_validate(config),
    }
}

fn header(command: Command, config: &ExperimentConfig) -> String {
    format!("# edgecache {}\n{}", command.name(), config.header())
}

fn joined(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn write_buffer(f: impl FnOnce(&mut Vec<u8>) -> edgecache::Result<()>) -> Result<String, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

pub fn cmd_place(config: &ExperimentConfig) -> Result<Report, CliError> {
    let net = config.network()?;
    let lib = config.library()?;
    let scheme = config.scheme()?;
    let r = place(scheme, &lib, &net, config.budget()?)?;
    let mut csv = header(Command::Place, config);
    let _ = writeln!(csv, "# hit_mass = {}", r.hit_mass());
    let _ = writeln!(csv, "# omega = {}", joined(r.omega.values()));
    let _ = writeln!(csv, "# phi = {}", joined(r.allocation.values()));
    let _ = writeln!(csv, "# tau = {}", joined(r.tau.values()));
    let _ = writeln!(csv, "# delay_s = {}", r.delay.total_s);
    let _ = writeln!(csv, "# wireless_s = {}", r.delay.wireless_s);
    let _ = writeln!(csv, "# backhaul_s = {}", r.delay.backhaul_s);
    let _ = writeln!(csv, "# baseline_delay_s = {}", r.baseline_delay_s);
    let _ = writeln!(csv, "# objective_gain_s = {}", r.objective_gain);
    csv.push_str(&write_buffer(|out| r.write_rows(&lib, out))?);
    Ok(Report {
        csv,
        notes: vec![format!(
            "{}: delay {:.6} s (no cache {:.6} s), hit mass {:.4}, {} of {} segments used",
            scheme.name(),
            r.delay.total_s,
            r.baseline_delay_s,
            r.hit_mass(),
            r.placement.used(),
            r.placement.budget()
        )],
        failure: None,
    })
}

struct SweepRow {
    scheme: Scheme,
    result: PlacementResult,
    proxy: f64,
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Report, CliError> {
    let (var, key) = config.sweep_key()?;
    let schemes = config.schemes()?;
    let exec = config.execution()?;
    let mut points: Vec<(f64, String)> = config
        .f64_list("sweep_values")?
        .into_iter()
        .zip(
            config
                .get("sweep_values")
                .split(',')
                .map(|s| s.trim().to_string()),
        )
        .collect();
    if points.is_empty() {
        return Err(CliError::Config(
            "key 'sweep_values': at least one value is required".into(),
        ));
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));

    let results = par::map_slice(
        exec,
        &points,
        |(_, token)| -> Result<Vec<SweepRow>, CliError> {
            let mut c = config.clone();
            c.set(key, token)?;
            let net = c.network()?;
            let lib = c.library()?;
            let budget = c.budget()?;
            let reference =
                place(Scheme::NonCooperative, &lib, &net, budget)?.effective_spectral_efficiency();
            schemes
                .iter()
                .map(|&scheme| {
                    let result = place(scheme, &lib, &net, budget)?;
                    let proxy = result.effective_spectral_efficiency() / reference;
                    Ok(SweepRow {
                        scheme,
                        result,
                        proxy,
                    })
                })
                .collect()
        },
    );

    let mut csv = header(Command::Sweep, config);
    csv.push_str("# spectral_proxy = (sum_k omega_k / sqrt(tau_k))^-2 divided by the noncoop value at the same point\n");
    csv.push_str("# omega and tau list ranks 1..K then the backhaul entry, separated by ';'\n");
    let _ = writeln!(
        csv,
        "{var},scheme,hit_ratio,spectral_proxy,delay_s,wireless_s,backhaul_s,omega,tau"
    );
    for ((_, token), rows) in points.iter().zip(results) {
        for row in rows? {
            let r = &row.result;
            let _ = writeln!(
                csv,
                "{token},{},{},{},{},{},{},{},{}",
                row.scheme.name(),
                r.hit_mass(),
                row.proxy,
                r.delay.total_s,
                r.delay.wireless_s,
                r.delay.backhaul_s,
                joined(r.omega.values()),
                joined(r.tau.values())
            );
        }
    }
    Ok(Report {
        csv,
        notes: vec![format!(
            "{} points x {} schemes",
            points.len(),
            schemes.len()
        )],
        failure: None,
    })
}

pub fn cmd_cluster(config: &ExperimentConfig) -> Result<Report, CliError> {
    let net = config.network()?;
    let lib = config.library()?;
    let schedule = config.schedule()?;
    let budget = config.budget()?;
    let exec = config.execution()?;
    let mut ks = config.usize_list("cluster_sizes")?;
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() || ks[0] == 0 {
        return Err(CliError::Config(
            "key 'cluster_sizes': need positive cluster sizes".into(),
        ));
    }
    let mut backhaul = config.f64_list("backhaul_sweep_ms")?;
    backhaul.sort_by(f64::total_cmp);
    let mut csv = header(Command::Cluster, config);
    let _ = writeln!(csv, "# interference_policy = {}", schedule.extension.name());

    if backhaul.is_empty() {
        let analysis = optimal_cluster_size(&net, &lib, budget, &ks, &schedule, exec)?;
        let k_max = max_cluster_size(&net, &lib, &schedule, *ks.last().unwrap())?;
        let _ = writeln!(csv, "# k_opt = {}", analysis.k_opt);
        let _ = writeln!(csv, "# k_max_admissible = {k_max}");
        csv.push_str(&write_buffer(|out| analysis.write_rows(out))?);
        return Ok(Report {
            csv,
            notes: vec![format!(
                "optimal cluster size {} with delay {:.6} s; largest admissible {k_max}",
                analysis.k_opt,
                analysis.optimal().delay.total_s
            )],
            failure: None,
        });
    }

    if ks[0] != 1 {
        return Err(CliError::Config(
            "key 'cluster_sizes': a backhaul sweep needs cluster size 1 as the reference".into(),
        ));
    }
    let mut columns = String::from("backhaul_ms,K_opt,delay_opt_s,reduction_vs_k1");
    for k in &ks {
        let _ = write!(columns, ",delay_K{k}_s");
    }
    let _ = writeln!(csv, "{columns}");
    let mut notes = Vec::new();
    for ms in backhaul {
        let net = edgecache::NetworkParams {
            backhaul_delay_s: units::ms_to_s(ms),
            ..net.clone()
        };
        let a: ClusterAnalysis = optimal_cluster_size(&net, &lib, budget, &ks, &schedule, exec)?;
        let reference = a.row(1).expect("size 1 examined").delay.total_s;
        let best = a.optimal().delay.total_s;
        let reduction = (reference - best) / reference;
        let _ = write!(csv, "{ms},{},{best},{reduction}", a.k_opt);
        for r in &a.rows {
            let _ = write!(csv, ",{}", r.delay.total_s);
        }
        csv.push('\n');
        notes.push(format!(
            "backhaul {ms} ms: K_opt {} ({:.1}% below K=1)",
            a.k_opt,
            100.0 * reduction
        ));
    }
    Ok(Report {
        csv,
        notes,
        failure: None,
    })
}

pub fn cmd_validate(config: &ExperimentConfig) -> Result<Report, CliError> {
    let net = config.network()?;
    let sim = config.sim()?;
    let exec = config.execution()?;
    let lambdas: Vec<f64> = config
        .f64_list("lambda_sweep_per_km2")?
        .into_iter()
        .map(units::per_km2_to_per_m2)
        .collect();
    if lambdas.is_empty() {
        return Err(CliError::Config(
            "key 'lambda_sweep_per_km2': at least one density is required".into(),
        ));
    }
    let rows = validate_lemma1(&net, &sim, &lambdas, exec)?;
    let mut csv = header(Command::Validate, config);
    let _ = writeln!(csv, "# rng = {GENERATOR}");
    let _ = writeln!(
        csv,
        "# association = every user served at the listed rank with the full band"
    );
    csv.push_str(&write_buffer(|out| write_validation_rows(&rows, out))?);

    let mut notes = sim.warnings(&net);
    let worst = rows
        .iter()
        .map(|r| r.relative_gap())
        .fold(f64::NEG_INFINITY, f64::max);
    notes.push(format!(
        "{} points, largest relative gap {:.2}%",
        rows.len(),
        100.0 * worst
    ));
    let violations: Vec<String> = rows
        .iter()
        .filter(|r| !r.bound_holds())
        .map(|r| {
            format!(
                "lambda {} /km2 rank {}",
                units::per_m2_to_per_km2(r.user_density),
                r.rank
            )
        })
        .collect();
    let failure = (!violations.is_empty())
        .then(|| format!("rate bound violated at {}", violations.join(", ")));
    Ok(Report {
        csv,
        notes,
        failure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use edgecache::model::{average_delay, spectral_profile, GroupLoad, SpectralProfile};

    fn config(pairs: &[(&str, &str)]) -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.set("files", "50").unwrap();
        c.set("segments", "20").unwrap();
        for (k, v) in pairs {
            c.set(k, v).unwrap();
        }
        c
    }

    fn body(csv: &str) -> Vec<&str> {
        csv.lines()
            .filter(|l| !l.starts_with("# scheme =") && !l.starts_with("# edgecache"))
            .collect()
    }

    fn summary(csv: &str, key: &str) -> f64 {
        let prefix = format!("# {key} = ");
        csv.lines()
            .find_map(|l| l.strip_prefix(&prefix))
            .unwrap()
            .parse()
            .unwrap()
    }

    #[test]
    fn placement_beats_empty_cache() {
        let r = cmd_place(&config(&[("budget", "300")])).unwrap();
        assert!(summary(&r.csv, "delay_s") < summary(&r.csv, "baseline_delay_s"));
        assert_eq!(r.csv.lines().filter(|l| !l.starts_with('#')).count(), 51);
    }

    #[test]
    fn empty_budget_reports_the_baseline() {
        let r = cmd_place(&config(&[("budget", "0")])).unwrap();
        assert_eq!(
            summary(&r.csv, "delay_s"),
            summary(&r.csv, "baseline_delay_s")
        );
        assert_eq!(summary(&r.csv, "objective_gain_s"), 0.0);
    }

    #[test]
    fn single_rank_hitmax_equals_noncoop() {
        let a = cmd_place(&config(&[
            ("cluster_size", "1"),
            ("scheme", "hitmax"),
            ("budget", "130"),
        ]))
        .unwrap();
        let b = cmd_place(&config(&[
            ("cluster_size", "1"),
            ("scheme", "noncoop"),
            ("budget", "130"),
        ]))
        .unwrap();
        assert_eq!(body(&a.csv), body(&b.csv));
    }

    #[test]
    fn sweep_delays_are_reproducible_from_emitted_vectors() {
        let c = config(&[
            ("sweep", "D_BH"),
            ("sweep_values", "400,0,200"),
            ("budget", "200"),
        ]);
        let csv = cmd_sweep(&c).unwrap().csv;
        let lib = c.library().unwrap();
        let rows: Vec<Vec<&str>> = csv
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .map(|l| l.split(',').collect())
            .collect();
        assert_eq!(rows.len(), 9);
        let order: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
        assert_eq!(order[0], ("0", "greedy"));
        assert_eq!(order[2], ("0", "noncoop"));
        assert_eq!(order[8], ("400", "noncoop"));
        for r in rows {
            let mut point = c.clone();
            point.set("backhaul_ms", r[0]).unwrap();
            let net = point.network().unwrap();
            let parse = |s: &str| {
                s.split(';')
                    .map(|x| x.parse::<f64>().unwrap())
                    .collect::<Vec<_>>()
            };
            let omega = GroupLoad::new(parse(r[7])).unwrap();
            let tau_all = parse(r[8]);
            let tau = SpectralProfile::from_ranks(&tau_all[..tau_all.len() - 1]).unwrap();
            assert_eq!(tau.values(), spectral_profile(&net).unwrap().values());
            let d = average_delay(&omega, &tau, &lib, &net).unwrap();
            assert_eq!(d.total_s.to_string(), r[4]);
        }
    }

    #[test]
    fn cluster_rows_and_metadata() {
        let c = config(&[("budget", "200"), ("cluster_sizes", "3,1,2")]);
        let csv = cmd_cluster(&c).unwrap().csv;
        assert!(csv.contains("# interference_policy = hold_last\n"));
        assert!(csv.contains("# k_opt = "));
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows[0], "K,admissible,delay_s");
        assert!(rows[1].starts_with("1,true,"));
        assert_eq!(rows.len(), 4);
    }

    #[test]
    fn backhaul_sweep_needs_reference_size() {
        let c = config(&[("cluster_sizes", "2,3"), ("backhaul_sweep_ms", "100")]);
        assert!(matches!(cmd_cluster(&c), Err(CliError::Config(_))));
    }

    #[test]
    fn validation_rank_count_matches_cluster() {
        let c = config(&[
            ("drops", "4"),
            ("cluster_size", "2"),
            ("lambda_sweep_per_km2", "500"),
        ]);
        let r = cmd_validate(&c).unwrap();
        assert!(r.csv.contains("# rng = ChaCha8"));
        let rows: Vec<&str> = r
            .csv
            .lines()
            .filter(|l| !l.starts_with('#'))
            .skip(1)
            .collect();
        assert_eq!(rows.len(), 2);
    }

    #[test]
    fn model_validity_errors_map_to_code_two() {
        let err = cmd_place(&config(&[("cluster_size", "20")])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = cmd_place(&config(&[("alpha", "2")])).unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }
}
