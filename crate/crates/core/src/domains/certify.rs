//! Sampling-based certification that every admissible pair `(x, t)` has a
//! certificate path. A single stalled pair refutes; success is evidence only.
//! Pairs that hit the sweep cap while still moving are counted separately.
//!
//! `n` points `x` and `n` points `t` are drawn and every combination is
//! checked, so the thin corners where paths get blocked are reached far
//! more often than with `n` independent pairs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::path::{construct_path, PathOutcome, StallReason};
use super::{Domain, Membership};
use crate::error::{check_dim, Error, Result};
use crate::functionals::FunctionalSpec;

/// Maximum number of failing witnesses kept in a report.
const MAX_FAILURE_WITNESSES: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplerConfig {
    /// Samples are drawn uniformly from `[lower, upper]^k`.
    pub lower: f64,
    pub upper: f64,
    pub seed: u64,
    /// Proposal budget for each of the `x` and `t` samples.
    pub max_proposals: usize,
    /// Pairs checked before the sampled ones.
    pub extra_pairs: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            lower: -10.0,
            upper: 10.0,
            seed: 42,
            max_proposals: 1_000_000,
            extra_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every checked pair has a certificate.
    Holds,
    /// Some pair stalls: no admissible move is left.
    Fails,
    /// No target point exists, so the statement holds trivially.
    Vacuous,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Vacuous => "vacuous",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WitnessOutcome {
    Found,
    Blocked,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
    pub outcome: WitnessOutcome,
    pub detail: PathOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertReport {
    pub domain: String,
    pub verdict: Verdict,
    /// Where `t` is drawn from.
    pub t_source: String,
    pub x_samples: usize,
    pub t_samples: usize,
    pub pairs_checked: usize,
    pub pairs_blocked: usize,
    /// Blocked pairs whose search was still progressing at the sweep cap.
    /// They are inconclusive and do not make the verdict `fails`.
    pub blocked_at_sweep_limit: usize,
    /// Pairs whose certificate needed at least one step.
    pub pairs_with_steps: usize,
    pub max_steps: usize,
    pub x_acceptance: f64,
    pub t_acceptance: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub witnesses: Vec<Witness>,
}

fn sample_points(domain: &Domain, n: usize, cfg: &SamplerConfig, rng: &mut ChaCha8Rng) -> Result<(Vec<Vec<f64>>, f64)> {
    let k = domain.k();
    let mut out = Vec::with_capacity(n);
    let mut proposals = 0usize;
    while out.len() < n && proposals < cfg.max_proposals {
        let p: Vec<f64> = (0..k).map(|_| rng.random_range(cfg.lower..=cfg.upper)).collect();
        proposals += 1;
        if domain.contains(&p, Membership::Declared)? {
            out.push(p);
        }
    }
    let rate = if proposals == 0 { 0.0 } else { out.len() as f64 / proposals as f64 };
    Ok((out, rate))
}

/// Checks `n` sampled pairs, with `x` drawn from the domain and `t` from its
/// intersection with the set of possible functional values.
pub fn certify_domain(domain: &Domain, spec: &FunctionalSpec, n: usize, cfg: &SamplerConfig) -> Result<CertReport> {
    check_dim(domain.k(), spec.k())?;
    if n == 0 {
        return Err(Error::invalid("sample count", "must be positive"));
    }
    if !(cfg.lower < cfg.upper) || !cfg.lower.is_finite() || !cfg.upper.is_finite() {
        return Err(Error::invalid("sampling box", format!("[{}, {}]", cfg.lower, cfg.upper)));
    }
    let target = domain.intersect(&Domain::a0(spec))?;
    let mut report = CertReport {
        domain: domain.name(),
        verdict: Verdict::Vacuous,
        t_source: format!("{} & A0", domain.name()),
        x_samples: 0,
        t_samples: 0,
        pairs_checked: 0,
        pairs_blocked: 0,
        blocked_at_sweep_limit: 0,
        pairs_with_steps: 0,
        max_steps: 0,
        x_acceptance: 0.0,
        t_acceptance: 0.0,
        seed: cfg.seed,
        warnings: Vec::new(),
        witnesses: Vec::new(),
    };
    if target.is_empty()? {
        report.warnings.push("the domain has no point of the form T(F); the statement is vacuous".into());
        return Ok(report);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (xs, x_rate) = sample_points(domain, n, cfg, &mut rng)?;
    let (ts, t_rate) = sample_points(&target, n, cfg, &mut rng)?;
    report.x_samples = xs.len();
    report.t_samples = ts.len();
    report.x_acceptance = x_rate;
    report.t_acceptance = t_rate;
    for (what, rate) in [("x", x_rate), ("t", t_rate)] {
        if rate < 0.1 {
            report
                .warnings
                .push(format!("acceptance rate for {what} is {rate:.4}; the sampling box covers the domain poorly"));
        }
    }

    let mut pairs: Vec<(Vec<f64>, Vec<f64>)> = cfg.extra_pairs.clone();
    if ts.is_empty() {
        report
            .warnings
            .push("no admissible t was sampled; the target set may be too thin for the box".into());
        return Ok(report);
    }
    for x in &xs {
        for t in &ts {
            pairs.push((x.clone(), t.clone()));
        }
    }
    if pairs.is_empty() {
        report
            .warnings
            .push("no admissible pair was sampled; the target set may be too thin for the box".into());
        return Ok(report);
    }

    let outcomes = pairs
        .par_iter()
        .map(|(x, t)| construct_path(domain, spec, x, t))
        .collect::<Result<Vec<_>>>()?;

    let mut best: Option<usize> = None;
    let mut blocked = Vec::new();
    for (i, out) in outcomes.iter().enumerate() {
        match out.path() {
            Some(p) => {
                let steps = p.steps();
                if steps >= 1 {
                    report.pairs_with_steps += 1;
                }
                if steps > report.max_steps || best.is_none() {
                    report.max_steps = report.max_steps.max(steps);
                    best = Some(i);
                }
            }
            None => {
                report.pairs_blocked += 1;
                if let PathOutcome::Blocked { trace } = out {
                    if trace.reason == StallReason::SweepLimit {
                        report.blocked_at_sweep_limit += 1;
                    }
                }
                blocked.push(i);
            }
        }
    }
    // probes first, then sampled failures in canonical (x, t) order
    let n_extra = cfg.extra_pairs.len();
    let (probes, mut sampled): (Vec<usize>, Vec<usize>) = blocked.into_iter().partition(|&i| i < n_extra);
    sampled.sort_by(|&a, &b| canonical(&pairs[a], &pairs[b]));
    for i in probes.into_iter().chain(sampled).take(MAX_FAILURE_WITNESSES) {
        report.witnesses.push(witness(&pairs[i], &outcomes[i]));
    }
    if let Some(i) = best {
        report.witnesses.push(witness(&pairs[i], &outcomes[i]));
    }
    report.pairs_checked = pairs.len();
    if report.blocked_at_sweep_limit > 0 {
        report.warnings.push(format!(
            "{} pairs were still progressing when the sweep cap was reached; they are inconclusive",
            report.blocked_at_sweep_limit
        ));
    }
    report.verdict = if report.pairs_blocked > report.blocked_at_sweep_limit {
        Verdict::Fails
    } else {
        Verdict::Holds
    };
    Ok(report)
}

fn canonical(a: &(Vec<f64>, Vec<f64>), b: &(Vec<f64>, Vec<f64>)) -> std::cmp::Ordering {
    a.0.iter()
        .chain(&a.1)
        .zip(b.0.iter().chain(&b.1))
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn witness(pair: &(Vec<f64>, Vec<f64>), out: &PathOutcome) -> Witness {
    Witness {
        x: pair.0.clone(),
        t: pair.1.clone(),
        outcome: if out.is_found() {
            WitnessOutcome::Found
        } else {
            WitnessOutcome::Blocked
        },
        detail: out.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WSweepRow {
    pub w: f64,
    pub verdict: Verdict,
    pub expected: Verdict,
    pub matches: bool,
    pub pairs_checked: usize,
    pub pairs_blocked: usize,
    pub blocked_at_sweep_limit: usize,
    pub max_steps: usize,
}

/// Verdict predicted for `{x_2 > W x_1}` with the two-component
/// VaR/ES functional at level `alpha`.
pub fn expected_w_verdict(alpha: f64, w: f64) -> Verdict {
    let lower = (alpha - 1.0) / alpha;
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1.0);
    if near(w, 1.0) {
        Verdict::Vacuous
    } else if w > 1.0 || w == 0.0 || (w < lower && !near(w, lower)) {
        Verdict::Holds
    } else {
        Verdict::Fails
    }
}

/// Certifies `{x_2 > W x_1}` for each `W`.
pub fn w_sweep(alpha: f64, ws: &[f64], n: usize, cfg: &SamplerConfig) -> Result<Vec<WSweepRow>> {
    let spec = FunctionalSpec::var_es(alpha)?;
    ws.iter()
        .map(|&w| {
            let domain = Domain::w_cone(w)?;
            let rep = certify_domain(&domain, &spec, n, cfg)?;
            let expected = expected_w_verdict(alpha, w);
            Ok(WSweepRow {
                w,
                verdict: rep.verdict,
                expected,
                matches: rep.verdict == expected,
                pairs_checked: rep.pairs_checked,
                pairs_blocked: rep.pairs_blocked,
                blocked_at_sweep_limit: rep.blocked_at_sweep_limit,
                max_steps: rep.max_steps,
            })
        })
        .collect()
}
