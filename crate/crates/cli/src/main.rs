use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use elicit_core::config::{parse_f64, parse_f64_list, split_top_level, KvConfig};
use elicit_core::consistency::{
    check_consistency, figure1_grid, reproduce_counterexample, ConsistencyVerdict, SearchConfig,
};
use elicit_core::domains::{certify_domain, construct_path, verify_path, w_sweep, Domain, PathOutcome, SamplerConfig, Verdict};
use elicit_core::format::{fmt12, round_json};
use elicit_core::osband::{path_integral_diff, pointwise_path_diff, psd_scan, recover_h, HSource, PathPolyline};
use elicit_core::{Distribution, Error, FunctionalSpec, ScoreFn, ScoreSpec};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(name = "elicit", version, about = "Quantile / expected-shortfall scores: evaluation, domains and consistency checks")]
struct Cli {
    /// Key/value config file; command-line flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "ELICIT_THREADS")]
    threads: Option<usize>,
    /// Write output here instead of stdout (a directory for `figure1`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Write the effective configuration (file plus flags) to this path.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct FunctionalArgs {
    /// Level for the two-component (VaR, ES) functional.
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    /// Quantile levels q_1 < ... < q_{k-1} (comma separated).
    #[arg(long, allow_hyphen_values = true)]
    levels: Option<String>,
    /// Spectral weights p_1..p_{k-1} (comma separated).
    #[arg(long, allow_hyphen_values = true)]
    weights: Option<String>,
}

#[derive(Args, Debug, Default)]
struct ScoreArgs {
    /// `cone`, `fz0` or `custom`.
    #[arg(long)]
    score: Option<String>,
    /// Quantile terms G_1..G_{k-1} for a custom score, e.g. `exp(20,-1)`.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<String>,
    /// Convex last term for a custom score, e.g. `exp` or `neg_log_neg`.
    #[arg(long, allow_hyphen_values = true)]
    gk: Option<String>,
    /// Offset a(y) for a custom score.
    #[arg(long, allow_hyphen_values = true)]
    offset: Option<String>,
}

#[derive(Args, Debug, Default)]
struct SamplerArgs {
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// Sampling box lower edge.
    #[arg(long, allow_hyphen_values = true)]
    lower: Option<String>,
    /// Sampling box upper edge.
    #[arg(long, allow_hyphen_values = true)]
    upper: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate T(F) = (quantiles, spectral ES).
    Functional {
        #[command(flatten)]
        f: FunctionalArgs,
        #[arg(long, allow_hyphen_values = true)]
        dist: Option<String>,
    },
    /// Pointwise score S(x, y) and/or expected score under a distribution.
    Score {
        #[command(flatten)]
        f: FunctionalArgs,
        #[command(flatten)]
        s: ScoreArgs,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        dist: Option<String>,
    },
    /// The five numbers of the cone counterexample.
    Counterexample {
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
    },
    /// Build and verify a certificate path from x toward t.
    Path {
        #[command(flatten)]
        f: FunctionalArgs,
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        t: Option<String>,
    },
    /// Sample pairs from a domain and look for blocked certificate paths.
    Certify {
        #[command(flatten)]
        f: FunctionalArgs,
        #[command(flatten)]
        sampler: SamplerArgs,
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        /// Extra pairs checked first: `x1,x2@t1,t2;...`.
        #[arg(long, allow_hyphen_values = true)]
        probes: Option<String>,
    },
    /// Certify the cones {x2 > W x1} for a list of W.
    Wsweep {
        #[arg(long, allow_hyphen_values = true)]
        alpha: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        ws: Option<String>,
        #[command(flatten)]
        sampler: SamplerArgs,
    },
    /// Search for points beating T(F) in expected score.
    Consistency {
        #[command(flatten)]
        f: FunctionalArgs,
        #[command(flatten)]
        s: ScoreArgs,
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        dists: Option<String>,
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        half_width: Option<String>,
        #[arg(long)]
        gap_tol: Option<String>,
        #[arg(long)]
        loc_tol: Option<String>,
        /// Points evaluated before the grid: `x1,x2;...`.
        #[arg(long, allow_hyphen_values = true)]
        probes: Option<String>,
        /// `consistent` or `inconsistent`; exit 1 when the verdict differs.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Curves -C, -B and the expected-score grid for k = 2.
    Figure1 {
        #[command(flatten)]
        f: FunctionalArgs,
        #[command(flatten)]
        s: ScoreArgs,
        #[arg(long, allow_hyphen_values = true)]
        dist: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        z1_range: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        z2_range: Option<String>,
        #[arg(long)]
        resolution: Option<String>,
    },
    /// Recover h, reconstruct score differences along paths, scan for PSD.
    Osband {
        #[command(flatten)]
        f: FunctionalArgs,
        #[command(flatten)]
        s: ScoreArgs,
        /// `recover`, `path`, `pointwise` or `psd`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        /// k distributions used to recover h.
        #[arg(long, allow_hyphen_values = true)]
        dists: Option<String>,
        #[arg(long)]
        fd_step: Option<String>,
        /// Polyline vertices `x1,x2;x1,x2;...`.
        #[arg(long, allow_hyphen_values = true)]
        path: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        dist: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        /// `analytic` or `recovered`.
        #[arg(long)]
        h_source: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        domain: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        z1_range: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        z2_range: Option<String>,
        #[arg(long)]
        resolution: Option<String>,
        #[arg(long)]
        tol: Option<String>,
    },
}

/// Bad or missing configuration; exits with status 2.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn set_opt(cfg: &mut KvConfig, key: &str, v: &Option<String>) {
    if let Some(v) = v {
        cfg.set(key, v.trim());
    }
}

impl FunctionalArgs {
    fn overlay(&self, cfg: &mut KvConfig) {
        set_opt(cfg, "alpha", &self.alpha);
        set_opt(cfg, "levels", &self.levels);
        set_opt(cfg, "weights", &self.weights);
    }
}

impl ScoreArgs {
    fn overlay(&self, cfg: &mut KvConfig) {
        set_opt(cfg, "score", &self.score);
        set_opt(cfg, "g", &self.g);
        set_opt(cfg, "gk", &self.gk);
        set_opt(cfg, "offset", &self.offset);
    }
}

impl SamplerArgs {
    fn overlay(&self, cfg: &mut KvConfig) {
        set_opt(cfg, "seed", &self.seed);
        set_opt(cfg, "samples", &self.samples);
        set_opt(cfg, "lower", &self.lower);
        set_opt(cfg, "upper", &self.upper);
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Functional { .. } => "functional",
            Command::Score { .. } => "score",
            Command::Counterexample { .. } => "counterexample",
            Command::Path { .. } => "path",
            Command::Certify { .. } => "certify",
            Command::Wsweep { .. } => "wsweep",
            Command::Consistency { .. } => "consistency",
            Command::Figure1 { .. } => "figure1",
            Command::Osband { .. } => "osband",
        }
    }

    fn overlay(&self, cfg: &mut KvConfig) {
        match self {
            Command::Functional { f, dist } => {
                f.overlay(cfg);
                set_opt(cfg, "dist", dist);
            }
            Command::Score { f, s, x, y, dist } => {
                f.overlay(cfg);
                s.overlay(cfg);
                set_opt(cfg, "x", x);
                set_opt(cfg, "y", y);
                set_opt(cfg, "dist", dist);
            }
            Command::Counterexample { alpha } => set_opt(cfg, "alpha", alpha),
            Command::Path { f, domain, x, t } => {
                f.overlay(cfg);
                set_opt(cfg, "domain", domain);
                set_opt(cfg, "x", x);
                set_opt(cfg, "t", t);
            }
            Command::Certify { f, sampler, domain, probes } => {
                f.overlay(cfg);
                sampler.overlay(cfg);
                set_opt(cfg, "domain", domain);
                set_opt(cfg, "probes", probes);
            }
            Command::Wsweep { alpha, ws, sampler } => {
                set_opt(cfg, "alpha", alpha);
                set_opt(cfg, "ws", ws);
                sampler.overlay(cfg);
            }
            Command::Consistency {
                f,
                s,
                domain,
                dists,
                resolution,
                half_width,
                gap_tol,
                loc_tol,
                probes,
                expect,
            } => {
                f.overlay(cfg);
                s.overlay(cfg);
                set_opt(cfg, "domain", domain);
                set_opt(cfg, "dists", dists);
                set_opt(cfg, "resolution", resolution);
                set_opt(cfg, "half_width", half_width);
                set_opt(cfg, "gap_tol", gap_tol);
                set_opt(cfg, "loc_tol", loc_tol);
                set_opt(cfg, "probes", probes);
                set_opt(cfg, "expect", expect);
            }
            Command::Figure1 {
                f,
                s,
                dist,
                z1_range,
                z2_range,
                resolution,
            } => {
                f.overlay(cfg);
                s.overlay(cfg);
                set_opt(cfg, "dist", dist);
                set_opt(cfg, "z1_range", z1_range);
                set_opt(cfg, "z2_range", z2_range);
                set_opt(cfg, "resolution", resolution);
            }
            Command::Osband {
                f,
                s,
                mode,
                x,
                dists,
                fd_step,
                path,
                dist,
                y,
                h_source,
                domain,
                z1_range,
                z2_range,
                resolution,
                tol,
            } => {
                f.overlay(cfg);
                s.overlay(cfg);
                set_opt(cfg, "mode", mode);
                set_opt(cfg, "x", x);
                set_opt(cfg, "dists", dists);
                set_opt(cfg, "fd_step", fd_step);
                set_opt(cfg, "path", path);
                set_opt(cfg, "dist", dist);
                set_opt(cfg, "y", y);
                set_opt(cfg, "h_source", h_source);
                set_opt(cfg, "domain", domain);
                set_opt(cfg, "z1_range", z1_range);
                set_opt(cfg, "z2_range", z2_range);
                set_opt(cfg, "resolution", resolution);
                set_opt(cfg, "tol", tol);
            }
        }
    }
}

/// Typed access to the merged configuration.
struct Settings {
    cfg: KvConfig,
}

impl Settings {
    fn raw(&self, key: &str) -> Option<&str> {
        self.cfg.get(key)
    }

    fn require(&self, key: &str) -> anyhow::Result<&str> {
        self.raw(key).ok_or_else(|| config_error(format!("missing `{key}` (flag --{} or config key)", key.replace('_', "-"))))
    }

    fn f64_or(&self, key: &str, default: f64) -> anyhow::Result<f64> {
        match self.raw(key) {
            Some(v) => parse_f64(v).map_err(|e| config_error(format!("`{key}`: {e}"))),
            None => Ok(default),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> anyhow::Result<usize> {
        match self.raw(key) {
            Some(v) => v.trim().parse().map_err(|_| config_error(format!("`{key}` must be a non-negative integer, got `{v}`"))),
            None => Ok(default),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> anyhow::Result<u64> {
        match self.raw(key) {
            Some(v) => v.trim().parse().map_err(|_| config_error(format!("`{key}` must be a non-negative integer, got `{v}`"))),
            None => Ok(default),
        }
    }

    fn vector(&self, key: &str) -> anyhow::Result<Vec<f64>> {
        parse_f64_list(self.require(key)?).map_err(|e| config_error(format!("`{key}`: {e}")))
    }

    fn range_or(&self, key: &str, default: (f64, f64)) -> anyhow::Result<(f64, f64)> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match parse_f64_list(v).map_err(|e| config_error(format!("`{key}`: {e}")))?.as_slice() {
                [a, b] => Ok((*a, *b)),
                _ => Err(config_error(format!("`{key}` needs two numbers `lo,hi`"))),
            },
        }
    }

    fn points(&self, key: &str) -> anyhow::Result<Vec<Vec<f64>>> {
        match self.raw(key) {
            None => Ok(Vec::new()),
            Some(v) => v
                .split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|p| parse_f64_list(p).map_err(|e| config_error(format!("`{key}`: {e}"))))
                .collect(),
        }
    }

    fn distribution_or(&self, key: &str, default: Option<Distribution>) -> anyhow::Result<Distribution> {
        match self.cfg.distribution(key).map_err(|e| config_error(format!("`{key}`: {e}")))? {
            Some(d) => Ok(d),
            None => default.ok_or_else(|| config_error(format!("missing `{key}`"))),
        }
    }

    fn distributions_or(&self, key: &str, default: Vec<Distribution>) -> anyhow::Result<Vec<Distribution>> {
        Ok(self
            .cfg
            .distributions(key)
            .map_err(|e| config_error(format!("`{key}`: {e}")))?
            .unwrap_or(default))
    }

    fn functional(&self) -> anyhow::Result<FunctionalSpec> {
        let spec = match self.raw("levels") {
            Some(levels) => {
                let levels = parse_f64_list(levels).map_err(|e| config_error(format!("`levels`: {e}")))?;
                let weights = match self.raw("weights") {
                    Some(w) => parse_f64_list(w).map_err(|e| config_error(format!("`weights`: {e}")))?,
                    None => return Err(config_error("`levels` needs matching `weights`")),
                };
                FunctionalSpec::new(levels, weights)
            }
            None => FunctionalSpec::var_es(self.f64_or("alpha", 0.05)?),
        };
        spec.map_err(|e| config_error(e.to_string()))
    }

    fn score(&self, default: &str) -> anyhow::Result<ScoreSpec> {
        let kind = self.raw("score").unwrap_or(default).to_ascii_lowercase();
        let functional = self.functional()?;
        let two = |name: &str| -> anyhow::Result<f64> {
            if functional.k() != 2 {
                return Err(config_error(format!("the `{name}` score needs k = 2 (use `alpha`)")));
            }
            Ok(functional.levels()[0])
        };
        let fn_list = |key: &str| -> anyhow::Result<Vec<ScoreFn>> {
            split_top_level(self.require(key)?, ',')
                .iter()
                .map(|s| s.parse::<ScoreFn>().map_err(|e| config_error(format!("`{key}`: {e}"))))
                .collect()
        };
        let spec = match kind.as_str() {
            "cone" | "counterexample_cone" => ScoreSpec::counterexample_cone(two("cone")?),
            "fz0" => ScoreSpec::fz0(two("fz0")?),
            "custom" => {
                let g = fn_list("g")?;
                let gk = self.require("gk")?.parse::<ScoreFn>().map_err(|e| config_error(format!("`gk`: {e}")))?;
                let offset = match self.raw("offset") {
                    Some(o) => o.parse::<ScoreFn>().map_err(|e| config_error(format!("`offset`: {e}")))?,
                    None => ScoreFn::Zero,
                };
                ScoreSpec::new(functional, g, gk, offset)
            }
            other => return Err(config_error(format!("unknown score `{other}` (cone, fz0, custom)"))),
        };
        spec.map_err(|e| config_error(e.to_string()))
    }

    fn domain(&self, spec: &FunctionalSpec, default: Option<&str>) -> anyhow::Result<Domain> {
        let text = match (self.raw("domain"), default) {
            (Some(d), _) => d,
            (None, Some(d)) => d,
            (None, None) => return Err(config_error("missing `domain`")),
        };
        Domain::parse(text, spec).map_err(|e| config_error(format!("`domain`: {e}")))
    }

    fn sampler(&self) -> anyhow::Result<SamplerConfig> {
        let base = SamplerConfig::default();
        let mut extra = Vec::new();
        if let Some(p) = self.raw("probes") {
            for pair in p.split(';').filter(|s| !s.trim().is_empty()) {
                let (x, t) = pair
                    .split_once('@')
                    .ok_or_else(|| config_error(format!("probe `{pair}` must look like `x1,x2@t1,t2`")))?;
                extra.push((
                    parse_f64_list(x).map_err(|e| config_error(e.to_string()))?,
                    parse_f64_list(t).map_err(|e| config_error(e.to_string()))?,
                ));
            }
        }
        Ok(SamplerConfig {
            lower: self.f64_or("lower", base.lower)?,
            upper: self.f64_or("upper", base.upper)?,
            seed: self.u64_or("seed", base.seed)?,
            max_proposals: base.max_proposals,
            extra_pairs: extra,
        })
    }
}

/// What a command produced.
struct Output {
    text: String,
    json: Value,
    /// Verification outcome: `false` maps to exit status 1.
    ok: bool,
}

fn to_json<T: Serialize>(v: &T) -> Value {
    round_json(serde_json::to_value(v).unwrap_or(Value::Null))
}

fn vec12(v: &[f64]) -> String {
    format!("({})", v.iter().map(|x| fmt12(*x)).collect::<Vec<_>>().join(", "))
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn cmd_functional(s: &Settings) -> anyhow::Result<Output> {
    let spec = s.functional()?;
    let d = s.distribution_or("dist", Some(Distribution::standard_normal()))?;
    let t = spec.evaluate(&d)?;
    let mut text = format!("distribution: {d}\n");
    for (m, q) in spec.levels().iter().enumerate() {
        text += &format!("quantile({}) = {}\n", fmt12(*q), fmt12(t[m]));
    }
    text += &format!("spectral ES = {}\n", fmt12(t[spec.k() - 1]));
    Ok(Output {
        text,
        json: json!({ "distribution": d.to_string(), "levels": to_json(&spec.levels()), "weights": to_json(&spec.weights()), "t": to_json(&t) }),
        ok: true,
    })
}

fn cmd_score(s: &Settings) -> anyhow::Result<Output> {
    let score = s.score("cone")?;
    let x = s.vector("x")?;
    if x.len() != score.k() {
        return Err(config_error(format!("`x` needs {} entries", score.k())));
    }
    if s.raw("y").is_none() && s.raw("dist").is_none() && !s.cfg.contains("dist.kind") {
        return Err(config_error("`score` needs `y`, `dist` or both"));
    }
    let mut text = String::new();
    let mut out = serde_json::Map::new();
    out.insert("x".into(), to_json(&x));
    if s.raw("y").is_some() {
        let y = s.f64_or("y", 0.0)?;
        let v = score.eval(&x, y)?;
        text += &format!("S({}, {}) = {}\n", vec12(&x), fmt12(y), fmt12(v));
        out.insert("y".into(), to_json(&y));
        out.insert("score".into(), to_json(&v));
    }
    if s.raw("dist").is_some() || s.cfg.contains("dist.kind") {
        let d = s.distribution_or("dist", None)?;
        let v = score.expected(&x, &d, 1e-12)?;
        text += &format!("E S({}, Y), Y ~ {d} = {}\n", vec12(&x), fmt12(v));
        out.insert("distribution".into(), Value::String(d.to_string()));
        out.insert("expected_score".into(), to_json(&v));
    }
    Ok(Output {
        text,
        json: Value::Object(out),
        ok: true,
    })
}

fn cmd_counterexample(s: &Settings) -> anyhow::Result<Output> {
    let alpha = s.f64_or("alpha", 0.05)?;
    let tab = reproduce_counterexample(alpha).map_err(|e| match e {
        Error::Invalid { .. } => config_error(e.to_string()),
        other => other.into(),
    })?;
    let rows = [
        ("S((0,0), 0)".to_string(), fmt12(tab.score_origin_point_mass)),
        ("S((2,-1.8), 0)".to_string(), fmt12(tab.score_probe_point_mass)),
        ("T(normal(0.2,0.1))".to_string(), vec12(&tab.t_normal)),
        ("E S(T(F), F)".to_string(), fmt12(tab.score_t_normal)),
        ("E S((2,-1.8), F)".to_string(), fmt12(tab.score_probe_normal)),
        ("point mass: S(2,-1.8) < S(0,0)".to_string(), yes_no(tab.point_mass_inconsistent()).to_string()),
        ("normal: E S(2,-1.8) < E S(T(F))".to_string(), yes_no(tab.normal_inconsistent()).to_string()),
    ];
    let mut text = format!("alpha = {}\n{:<34} value\n", fmt12(alpha), "quantity");
    for (k, v) in rows {
        text += &format!("{k:<34} {v}\n");
    }
    let mut json = to_json(&tab);
    json["point_mass_inconsistent"] = Value::Bool(tab.point_mass_inconsistent());
    json["normal_inconsistent"] = Value::Bool(tab.normal_inconsistent());
    Ok(Output { text, json, ok: true })
}

fn cmd_path(s: &Settings) -> anyhow::Result<Output> {
    let spec = s.functional()?;
    let domain = s.domain(&spec, None)?;
    let x = s.vector("x")?;
    let t = s.vector("t")?;
    let outcome = construct_path(&domain, &spec, &x, &t)?;
    let mut text = format!("domain: {}\nx = {}\nt = {}\n", domain.name(), vec12(&x), vec12(&t));
    let mut json = json!({ "domain": domain.name(), "x": to_json(&x), "t": to_json(&t), "result": to_json(&outcome) });
    let ok = match &outcome {
        PathOutcome::Found { path } => {
            let check = verify_path(&domain, &spec, path, &x, &t)?;
            text += &format!("path found, N = {}\n", path.steps());
            for (n, p) in path.points().iter().enumerate() {
                text += &format!("  z{n} = {}\n", vec12(p));
            }
            text += &format!("verification: {}\n", if check.passed() { "pass" } else { "FAIL" });
            json["verification"] = to_json(&check);
            check.passed()
        }
        PathOutcome::Blocked { trace } => {
            text += &format!(
                "no path: {:?} at {} after {} steps; blocking coordinate {}; -B cap active: {}\n",
                trace.reason,
                vec12(trace.partial.last()),
                trace.partial.steps(),
                trace.blocking_coordinate,
                yes_no(trace.b_cap_active)
            );
            for c in &trace.active_constraints {
                text += &format!("  active: {c}\n");
            }
            false
        }
    };
    Ok(Output { text, json, ok })
}

fn cmd_certify(s: &Settings) -> anyhow::Result<Output> {
    let spec = s.functional()?;
    let domain = s.domain(&spec, None)?;
    let n = s.usize_or("samples", 500)?;
    let rep = certify_domain(&domain, &spec, n, &s.sampler()?)?;
    let mut text = format!(
        "domain: {}\nt sampled from: {}\nverdict: {}\npairs checked: {} ({} x by {} t samples, seed {})\nblocked: {} (at sweep limit: {})\npairs needing steps: {}, max N = {}\n",
        rep.domain,
        rep.t_source,
        rep.verdict,
        rep.pairs_checked,
        rep.x_samples,
        rep.t_samples,
        rep.seed,
        rep.pairs_blocked,
        rep.blocked_at_sweep_limit,
        rep.pairs_with_steps,
        rep.max_steps
    );
    for w in &rep.warnings {
        text += &format!("warning: {w}\n");
    }
    for w in &rep.witnesses {
        text += &format!("witness: x = {}, t = {}, {:?}\n", vec12(&w.x), vec12(&w.t), w.outcome);
    }
    Ok(Output {
        text,
        json: to_json(&rep),
        ok: rep.verdict != Verdict::Fails,
    })
}

const DEFAULT_WS: [f64; 8] = [-25.0, -19.0, -10.0, -1.0, 0.0, 0.5, 1.0, 2.0];

fn cmd_wsweep(s: &Settings) -> anyhow::Result<Output> {
    let alpha = s.f64_or("alpha", 0.05)?;
    let ws = match s.raw("ws") {
        Some(v) => parse_f64_list(v).map_err(|e| config_error(format!("`ws`: {e}")))?,
        None => DEFAULT_WS.to_vec(),
    };
    let n = s.usize_or("samples", 200)?;
    let rows = w_sweep(alpha, &ws, n, &s.sampler()?)?;
    let mut text = format!(
        "alpha = {}\n{:>8}  {:<8} {:<8} {:<5} {:>8} {:>8} {:>6}\n",
        fmt12(alpha),
        "W",
        "verdict",
        "expected",
        "match",
        "pairs",
        "blocked",
        "max N"
    );
    for r in &rows {
        text += &format!(
            "{:>8}  {:<8} {:<8} {:<5} {:>8} {:>8} {:>6}\n",
            fmt12(r.w),
            r.verdict.to_string(),
            r.expected.to_string(),
            yes_no(r.matches),
            r.pairs_checked,
            r.pairs_blocked,
            r.max_steps
        );
    }
    Ok(Output {
        text,
        json: json!({ "alpha": to_json(&alpha), "rows": to_json(&rows) }),
        ok: true,
    })
}

fn cmd_consistency(s: &Settings) -> anyhow::Result<Output> {
    let score = s.score("fz0")?;
    let domain = s.domain(score.functional(), None)?;
    let dists = s.distributions_or("dists", vec![Distribution::standard_normal()])?;
    let base = SearchConfig::default();
    let cfg = SearchConfig {
        resolution: s.usize_or("resolution", base.resolution)?,
        half_width: s.f64_or("half_width", base.half_width)?,
        gap_tol: s.f64_or("gap_tol", base.gap_tol)?,
        loc_tol: s.f64_or("loc_tol", base.loc_tol)?,
        probes: s.points("probes")?,
        ..base
    };
    let expect = match s.raw("expect") {
        None => None,
        Some("consistent") => Some(ConsistencyVerdict::Consistent),
        Some("inconsistent") => Some(ConsistencyVerdict::Inconsistent),
        Some(other) => return Err(config_error(format!("`expect` must be consistent or inconsistent, got `{other}`"))),
    };
    let rep = check_consistency(&score, &domain, &dists, &cfg)?;
    let mut text = format!("domain: {}\nverdict: {:?}\n", rep.domain, rep.verdict);
    for r in &rep.records {
        text += &format!(
            "{}: t = {}, argmin = {}, gap = {}, |argmin - t| = {}, {:?}\n",
            r.distribution,
            vec12(&r.t),
            vec12(&r.argmin),
            fmt12(r.gap),
            fmt12(r.location_error),
            r.verdict
        );
        if let Some(w) = &r.witness {
            text += &format!(
                "  witness: x = {} with E S = {} < {}\n",
                vec12(&w.x),
                fmt12(w.score),
                fmt12(w.score_at_t)
            );
        }
    }
    if let Some(st) = &rep.strictness {
        text += &format!("strict: {}\n", yes_no(st.strict));
    }
    for w in &rep.warnings {
        text += &format!("warning: {w}\n");
    }
    Ok(Output {
        text,
        json: to_json(&rep),
        ok: expect.is_none_or(|e| e == rep.verdict),
    })
}

fn cmd_figure1(s: &Settings, out: Option<&Path>) -> anyhow::Result<Output> {
    let score = s.score("fz0")?;
    let d = s.distribution_or("dist", Some(Distribution::standard_normal()))?;
    let fig = figure1_grid(
        &score,
        &d,
        s.range_or("z1_range", (-4.0, 1.0))?,
        s.range_or("z2_range", (-5.0, -0.5))?,
        s.usize_or("resolution", 101)?,
    )?;
    let (curves, grid) = (fig.curves_csv(), fig.grid_csv());
    let mut summary = format!(
        "t = {}\ncurves meet at z1 = {} with value {}\nslopes of -B: {} (left), {} (right)\n",
        vec12(&fig.t),
        fmt12(fig.t[0]),
        fmt12(fig.meeting_value),
        fmt12(fig.slope_left),
        fmt12(fig.slope_right)
    );
    let json = json!({
        "t": to_json(&fig.t),
        "meeting_value": to_json(&fig.meeting_value),
        "slope_left": to_json(&fig.slope_left),
        "slope_right": to_json(&fig.slope_right),
    });
    let text = match out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            fs::write(dir.join("curves.csv"), &curves)?;
            fs::write(dir.join("grid.csv"), &grid)?;
            summary += &format!("wrote {} and {}\n", dir.join("curves.csv").display(), dir.join("grid.csv").display());
            summary
        }
        None => format!("{curves}\n{grid}"),
    };
    Ok(Output { text, json, ok: true })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64).collect()
}

fn cmd_osband(s: &Settings) -> anyhow::Result<Output> {
    let score = s.score("fz0")?;
    let k = score.k();
    let default_dists = vec![Distribution::normal(0.0, 1.0)?, Distribution::normal(1.0, 0.5)?];
    let dists = s.distributions_or("dists", default_dists)?;
    let fd_step = s.f64_or("fd_step", 1e-5)?;
    let source = || -> anyhow::Result<HSource> {
        match s.raw("h_source").unwrap_or("analytic") {
            "analytic" => Ok(HSource::Analytic),
            "recovered" => Ok(HSource::Recovered {
                dists: dists.clone(),
                fd_step,
            }),
            other => Err(config_error(format!("`h_source` must be analytic or recovered, got `{other}`"))),
        }
    };
    let mode = s.raw("mode").unwrap_or("recover");
    match mode {
        "recover" => {
            let x = s.vector("x")?;
            let h = recover_h(&score, &x, &dists, fd_step)?;
            let mut text = format!("h at {} (cond {}):\n", vec12(&x), h.cond.map(fmt12).unwrap_or_default());
            for row in &h.rows {
                text += &format!("  {}\n", row.iter().map(|v| fmt12(*v)).collect::<Vec<_>>().join("  "));
            }
            text += &format!("min eigenvalue of symmetric part: {}\n", fmt12(h.min_symmetric_eigenvalue()));
            Ok(Output {
                text,
                json: to_json(&h),
                ok: true,
            })
        }
        "path" | "pointwise" => {
            let verts = s.points("path")?;
            let path = PathPolyline::new(verts).map_err(|e| config_error(format!("`path`: {e}")))?;
            let src = source()?;
            let (reconstructed, direct, label) = if mode == "path" {
                let d = s.distribution_or("dist", Some(Distribution::standard_normal()))?;
                let r = path_integral_diff(&score, &path, &d, &src)?;
                let direct = score.expected(path.end(), &d, 1e-13)? - score.expected(path.start(), &d, 1e-13)?;
                (r, direct, format!("E S(., Y), Y ~ {d}"))
            } else {
                let y = s.f64_or("y", 0.0)?;
                let r = pointwise_path_diff(&score, &path, y, &src)?;
                let direct = score.eval(path.end(), y)? - score.eval(path.start(), y)?;
                (r, direct, format!("S(., {})", fmt12(y)))
            };
            let rel = (reconstructed - direct).abs() / direct.abs().max(1.0);
            let text = format!(
                "{label} difference from {} to {}\n  path integral: {}\n  direct:        {}\n  relative gap:  {}\n",
                vec12(path.start()),
                vec12(path.end()),
                fmt12(reconstructed),
                fmt12(direct),
                fmt12(rel)
            );
            Ok(Output {
                text,
                json: json!({ "path": to_json(&path), "reconstructed": to_json(&reconstructed), "direct": to_json(&direct), "relative_gap": to_json(&rel) }),
                ok: true,
            })
        }
        "psd" => {
            if k != 2 {
                return Err(config_error("`psd` grids are two-dimensional; use k = 2"));
            }
            let domain = s.domain(score.functional(), None)?;
            let (a, b) = (s.range_or("z1_range", (-4.0, 1.0))?, s.range_or("z2_range", (-5.0, -0.5))?);
            let n = s.usize_or("resolution", 21)?;
            let grid: Vec<Vec<f64>> = linspace(a.0, a.1, n)
                .into_iter()
                .flat_map(|u| linspace(b.0, b.1, n).into_iter().map(move |v| vec![u, v]))
                .collect();
            let rep = psd_scan(&score, &domain, &grid, &dists, fd_step, s.f64_or("tol", 1e-8)?)?;
            let text = format!(
                "points evaluated: {} (skipped or failed: {})\nmin eigenvalue: {}\nmedian eigenvalue: {}\nfraction above {}: {}\n",
                rep.evaluated,
                rep.failures,
                fmt12(rep.min_eigenvalue),
                fmt12(rep.median_eigenvalue),
                fmt12(rep.tol),
                fmt12(rep.positive_fraction)
            );
            Ok(Output {
                text,
                json: to_json(&rep),
                ok: true,
            })
        }
        other => Err(config_error(format!("unknown osband mode `{other}` (recover, path, pointwise, psd)"))),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match e.downcast_ref::<Error>() {
        Some(Error::Parse(_) | Error::Invalid { .. } | Error::Dimension { .. } | Error::Precondition(_)) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| config_error(format!("reading {}: {e}", p.display())))?;
            KvConfig::parse(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
        }
        None => KvConfig::new(),
    };
    if let Some(c) = cfg.get("command") {
        if c != cli.command.name() {
            return Err(config_error(format!("config is for `{c}`, not `{}`", cli.command.name())));
        }
    }
    cli.command.overlay(&mut cfg);
    cfg.set("command", cli.command.name());
    if let Some(p) = &cli.save_config {
        fs::write(p, cfg.to_text()).with_context(|| format!("writing {}", p.display()))?;
    }
    let settings = Settings { cfg };

    let out = match &cli.command {
        Command::Functional { .. } => cmd_functional(&settings)?,
        Command::Score { .. } => cmd_score(&settings)?,
        Command::Counterexample { .. } => cmd_counterexample(&settings)?,
        Command::Path { .. } => cmd_path(&settings)?,
        Command::Certify { .. } => cmd_certify(&settings)?,
        Command::Wsweep { .. } => cmd_wsweep(&settings)?,
        Command::Consistency { .. } => cmd_consistency(&settings)?,
        Command::Figure1 { .. } => cmd_figure1(&settings, if cli.json { None } else { cli.out.as_deref() })?,
        Command::Osband { .. } => cmd_osband(&settings)?,
    };
    let body = if cli.json {
        let mut s = serde_json::to_string_pretty(&out.json)?;
        s.push('\n');
        s
    } else {
        out.text
    };
    match (&cli.out, &cli.command) {
        (Some(_), Command::Figure1 { .. }) if !cli.json => write_stdout(&body)?,
        (Some(p), _) => fs::write(p, body).with_context(|| format!("writing {}", p.display()))?,
        (None, _) => write_stdout(&body)?,
    }
    Ok(out.ok)
}

fn write_stdout(body: &str) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(body.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
