use std::path::PathBuf;

use clap::builder::TypedValueParser;
use clap::{Arg, ArgAction, ArgMatches, Command};

use super::CliError;
use crate::filterdsl::{parse_experiment_spec, parse_filter_query, uses_singular_metric_key, FilterGroup};
use crate::render::{PlotConfig, ShadeKind};
use crate::rlstats::{AggregateMethod, DEFAULT_SEED};

pub const DEFAULT_OUTPUT: &str = "compare";
pub const DEFAULT_JOBS: usize = 4;
pub const DEFAULT_REPS: usize = 2_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizationChoice {
    Atari,
    MinMax,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RliableOptions {
    pub normalization: NormalizationChoice,
    pub normalization_table: Option<PathBuf>,
    /// Normalized scores above this are set to it before aggregation.
    pub threshold: Option<f64>,
    pub sample_efficiency_plots: bool,
    pub performance_profile_plots: bool,
    pub aggregate_metrics_plots: bool,
    pub efficiency_method: AggregateMethod,
    pub sample_efficiency_reps: usize,
    pub performance_profile_reps: usize,
    pub interval_estimates_reps: usize,
    pub sample_efficiency_figsize: Option<(f64, f64)>,
}

impl Default for RliableOptions {
    fn default() -> Self {
        Self {
            normalization: NormalizationChoice::MinMax,
            normalization_table: None,
            threshold: None,
            sample_efficiency_plots: false,
            performance_profile_plots: false,
            aggregate_metrics_plots: false,
            efficiency_method: AggregateMethod::Iqm,
            sample_efficiency_reps: DEFAULT_REPS,
            performance_profile_reps: DEFAULT_REPS,
            interval_estimates_reps: DEFAULT_REPS,
            sample_efficiency_figsize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlopsArgs {
    pub filter_groups: Vec<FilterGroup>,
    pub check_empty_runs: bool,
    pub plot: PlotConfig,
    pub smoothing_window: usize,
    pub shade: ShadeKind,
    pub rliable: bool,
    pub rc: RliableOptions,
    pub output_filename: PathBuf,
    pub scan_history: bool,
    pub jobs: usize,
    pub seed: u64,
    pub api_url: Option<String>,
}

fn flag(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).action(ArgAction::SetTrue).help(help)
}

fn value(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name).long(name).num_args(1).help(help)
}

fn pair(name: &'static str, help: &'static str) -> Arg {
    Arg::new(name)
        .long(name)
        .num_args(2)
        .value_names(["WIDTH", "HEIGHT"])
        .value_parser(clap::value_parser!(f64))
        .help(help)
}

/// Argument definitions; `multi` builds the multi-metric variant, which has
/// no `--rliable` options.
pub fn command(multi: bool) -> Command {
    let name = if multi { "rlops-multi-metrics" } else { "rlops" };
    let mut cmd = Command::new(name)
        .version(env!("CARGO_PKG_VERSION"))
        .about(if multi {
            "Plot several metrics per environment for tracked RL runs"
        } else {
            "Compare tracked RL runs: learning curves and aggregate statistics"
        })
        .arg(
            Arg::new("filters")
                .long("filters")
                .num_args(1..)
                .action(ArgAction::Append)
                .required(true)
                .value_names(["QUERY", "SPEC"])
                .help("A filter query ('?we=..&wpn=..') followed by one or more experiment specs ('name?cl=Label')"),
        )
        .arg(
            Arg::new("env-ids")
                .long("env-ids")
                .num_args(1..)
                .action(ArgAction::Append)
                .required(true)
                .help("Environment ids; give once for all groups or once per --filters group"),
        )
        .arg(
            Arg::new("no-check-empty-runs")
                .long("no-check-empty-runs")
                .action(ArgAction::SetTrue)
                .overrides_with("check-empty-runs")
                .help("Warn instead of failing when a spec has no runs on an environment"),
        )
        .arg(
            Arg::new("check-empty-runs")
                .long("check-empty-runs")
                .action(ArgAction::SetTrue)
                .overrides_with("no-check-empty-runs")
                .hide(true),
        )
        .arg(value("pc.ncols", "Panel columns").value_parser(clap::value_parser!(usize)))
        .arg(value("pc.ncols-legend", "Legend columns").value_parser(clap::value_parser!(usize)))
        .arg(value("pc.xlabel", "X axis label").allow_hyphen_values(true))
        .arg(value("pc.ylabel", "Y axis label").allow_hyphen_values(true))
        .arg(value("pc.max_steps", "Truncate curves at this many steps").value_parser(clap::value_parser!(f64)))
        .arg(
            value("pc.smoothing_window", "Trailing rolling-mean window applied after alignment")
                .value_parser(clap::value_parser!(usize)),
        )
        .arg(value("pc.shade", "What the shaded band shows").value_parser(["std", "ci"]))
        .arg(pair("pc.figsize", "Learning-curve figure size in inches"))
        .arg(value("output-filename", "Output path without extension"))
        .arg(flag("scan-history", "Fetch every logged point instead of a sampled history"))
        .arg(
            value("jobs", "Concurrent history fetches")
                .value_parser(clap::value_parser!(u64).range(1..).map(|v| v as usize)),
        )
        .arg(value("seed", "Bootstrap seed").value_parser(clap::value_parser!(u64)))
        .arg(value("api-url", "Tracking server base URL (default: $RLOPS_API_URL)"));
    if !multi {
        cmd = cmd
            .arg(flag("rliable", "Also compute normalized-score statistics and plots"))
            .arg(
                value("rc.score_normalization_method", "Score normalization")
                    .value_parser(["atari", "minmax", "none"]),
            )
            .arg(value(
                "rc.normalization_table",
                "CSV with env_id,random_score,human_score (default: $RLOPS_NORMALIZATION_TABLE)",
            ))
            .arg(
                value("rc.normalized_score_threshold", "Clamp normalized scores at this value")
                    .value_parser(clap::value_parser!(f64)),
            )
            .arg(flag("rc.sample_efficiency_plots", "Plot sample- and walltime-efficiency curves"))
            .arg(flag("rc.performance_profile_plots", "Plot performance profiles"))
            .arg(flag("rc.aggregate_metrics_plots", "Plot aggregate interval estimates"))
            .arg(value(
                "rc.sample_efficiency_and_walltime_efficiency_method",
                "Aggregate for efficiency curves: Median, Mean, IQM or Optimality Gap",
            ))
            .arg(
                value("rc.sample_efficiency_num_bootstrap_reps", "Bootstrap replicates for efficiency curves")
                    .value_parser(clap::value_parser!(usize)),
            )
            .arg(
                value("rc.performance_profile_num_bootstrap_reps", "Bootstrap replicates for performance profiles")
                    .value_parser(clap::value_parser!(usize)),
            )
            .arg(
                value("rc.interval_estimates_num_bootstrap_reps", "Bootstrap replicates for interval estimates")
                    .value_parser(clap::value_parser!(usize)),
            )
            .arg(pair("rc.sample_efficiency_figsize", "Efficiency figure size in inches"));
    }
    cmd
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn figsize(m: &ArgMatches, name: &str) -> Result<Option<(f64, f64)>, CliError> {
    match m.get_many::<f64>(name) {
        Some(v) => {
            let v: Vec<f64> = v.copied().collect();
            if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
                Ok(Some((v[0], v[1])))
            } else {
                Err(usage(format!("--{name} needs two positive numbers")))
            }
        }
        None => Ok(None),
    }
}

fn filter_groups(m: &ArgMatches, multi: bool) -> Result<Vec<FilterGroup>, CliError> {
    let env_lists: Vec<Vec<String>> = m
        .get_occurrences::<String>("env-ids")
        .map(|occ| occ.map(|o| o.cloned().collect()).collect())
        .unwrap_or_default();
    let mut groups = Vec::new();
    for occ in m.get_occurrences::<String>("filters").into_iter().flatten() {
        let tokens: Vec<&String> = occ.collect();
        let raw = tokens[0];
        if multi && uses_singular_metric_key(raw) {
            return Err(usage(format!(
                "`{raw}` uses `metric=`; rlops-multi-metrics takes `metrics=` (repeat it once per metric)"
            )));
        }
        let query = parse_filter_query(raw).map_err(|e| usage(e.to_string()))?;
        if tokens.len() < 2 {
            return Err(usage(format!(
                "`--filters {raw}` needs at least one experiment spec after the query"
            )));
        }
        let specs = tokens[1..]
            .iter()
            .map(|t| parse_experiment_spec(t).map_err(|e| usage(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        groups.push(FilterGroup {
            query,
            specs,
            env_ids: Vec::new(),
        });
    }
    match env_lists.len() {
        1 => groups.iter_mut().for_each(|g| g.env_ids = env_lists[0].clone()),
        n if n == groups.len() => {
            for (g, envs) in groups.iter_mut().zip(env_lists) {
                g.env_ids = envs;
            }
        }
        n => {
            return Err(usage(format!(
                "got {n} --env-ids lists for {} --filters groups; give one list, or one per group",
                groups.len()
            )))
        }
    }
    if groups.windows(2).any(|w| w[0].env_ids.len() != w[1].env_ids.len()) {
        return Err(usage("every --env-ids list must name the same number of environments"));
    }
    if multi && groups.windows(2).any(|w| w[0].query.metrics.len() != w[1].query.metrics.len()) {
        return Err(usage("every --filters query must list the same number of metrics"));
    }
    Ok(groups)
}

/// Parses arguments (without the program name).
pub fn parse_args(args: &[String], multi: bool) -> Result<RlopsArgs, CliError> {
    let bin = if multi { "rlops-multi-metrics" } else { "rlops" };
    let m = command(multi)
        .try_get_matches_from(std::iter::once(bin.to_string()).chain(args.iter().cloned()))
        .map_err(CliError::Clap)?;

    let defaults = PlotConfig::default();
    let plot = PlotConfig {
        ncols: m.get_one::<usize>("pc.ncols").copied().unwrap_or(defaults.ncols),
        ncols_legend: m.get_one::<usize>("pc.ncols-legend").copied().unwrap_or(defaults.ncols_legend),
        xlabel: m.get_one::<String>("pc.xlabel").cloned().unwrap_or(defaults.xlabel),
        ylabel: m.get_one::<String>("pc.ylabel").cloned().unwrap_or(defaults.ylabel),
        max_steps: m.get_one::<f64>("pc.max_steps").copied(),
        figsize: figsize(&m, "pc.figsize")?,
        colors: Default::default(),
    };
    plot.validate().map_err(|e| usage(e.to_string()))?;
    if plot.max_steps.is_some_and(|s| !(s > 0.0)) {
        return Err(usage("--pc.max_steps must be positive"));
    }
    let smoothing_window = m.get_one::<usize>("pc.smoothing_window").copied().unwrap_or(1);
    if smoothing_window == 0 {
        return Err(usage("--pc.smoothing_window must be at least 1"));
    }
    let shade = match m.get_one::<String>("pc.shade").map(String::as_str) {
        Some("ci") => ShadeKind::Ci,
        _ => ShadeKind::Std,
    };

    let mut rc = RliableOptions::default();
    let rliable = !multi && m.get_flag("rliable");
    if !multi {
        rc.normalization = match m.get_one::<String>("rc.score_normalization_method").map(String::as_str) {
            Some("atari") => NormalizationChoice::Atari,
            Some("none") => NormalizationChoice::None,
            _ => NormalizationChoice::MinMax,
        };
        rc.normalization_table = m.get_one::<String>("rc.normalization_table").map(PathBuf::from);
        rc.threshold = m.get_one::<f64>("rc.normalized_score_threshold").copied();
        if rc.threshold.is_some_and(|t| !t.is_finite()) {
            return Err(usage("--rc.normalized_score_threshold must be finite"));
        }
        rc.sample_efficiency_plots = m.get_flag("rc.sample_efficiency_plots");
        rc.performance_profile_plots = m.get_flag("rc.performance_profile_plots");
        rc.aggregate_metrics_plots = m.get_flag("rc.aggregate_metrics_plots");
        if let Some(name) = m.get_one::<String>("rc.sample_efficiency_and_walltime_efficiency_method") {
            rc.efficiency_method = name.parse().map_err(|e: crate::rlstats::StatsError| usage(e.to_string()))?;
        }
        for (name, slot) in [
            ("rc.sample_efficiency_num_bootstrap_reps", &mut rc.sample_efficiency_reps),
            ("rc.performance_profile_num_bootstrap_reps", &mut rc.performance_profile_reps),
            ("rc.interval_estimates_num_bootstrap_reps", &mut rc.interval_estimates_reps),
        ] {
            if let Some(&reps) = m.get_one::<usize>(name) {
                if reps == 0 {
                    return Err(usage(format!("--{name} must be at least 1")));
                }
                *slot = reps;
            }
        }
        rc.sample_efficiency_figsize = figsize(&m, "rc.sample_efficiency_figsize")?;
    }

    Ok(RlopsArgs {
        filter_groups: filter_groups(&m, multi)?,
        check_empty_runs: !m.get_flag("no-check-empty-runs"),
        plot,
        smoothing_window,
        shade,
        rliable,
        rc,
        output_filename: PathBuf::from(
            m.get_one::<String>("output-filename")
                .cloned()
                .unwrap_or_else(|| DEFAULT_OUTPUT.to_string()),
        ),
        scan_history: m.get_flag("scan-history"),
        jobs: m.get_one::<usize>("jobs").copied().unwrap_or(DEFAULT_JOBS),
        seed: m.get_one::<u64>("seed").copied().unwrap_or(DEFAULT_SEED),
        api_url: m.get_one::<String>("api-url").cloned(),
    })
}
