//! Monte Carlo risk lab: KL-ball sampling, the hypercube lower-bound family,
//! risk estimation (sampled and exhaustive) and the bound-check suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::accum;
use crate::error::{Error, Result};
use crate::estimators::{variable_add_constant, BetaTable};
use crate::prob::{kl_divergence, l1_distance, ProbDist};
use crate::semantic::{interpolation_estimate, plugin_estimate};
use crate::synthetic::sub_seed;

/// Largest number of sample outcomes (`d^n`) the exhaustive oracle accepts.
pub const MAX_OUTCOMES: u64 = 4096;

/// Fewest trials accepted by [`mc_risk`].
pub const MIN_TRIALS: usize = 100;

/// `pi_i ∝ (i + 1)^(-s)`.
pub fn zipf(d: usize, s: f64) -> ProbDist {
    let w: Vec<f64> = (0..d).map(|i| ((i + 1) as f64).powf(-s)).collect();
    ProbDist::from_weights(&w).expect("positive weights")
}

/// Mass `1 - eps` on symbol 0, the rest spread evenly.
pub fn near_point_mass(d: usize, eps: f64) -> ProbDist {
    let mut w = vec![eps / (d - 1) as f64; d];
    w[0] = 1.0 - eps;
    ProbDist::from_weights(&w).expect("positive weights")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BallMode {
    /// Anywhere in the ball.
    Interior,
    /// Divergence in `[0.9 delta, delta]`.
    Boundary,
}

fn dirichlet<R: Rng>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    if !(total > 0.0) {
        // All shapes tiny enough to underflow: fall back to the largest.
        let k = alpha
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let mut v = vec![0.0; alpha.len()];
        v[k] = 1.0;
        return v;
    }
    draws.iter().map(|x| x / total).collect()
}

fn mixture(p0: &[f64], q: &[f64], t: f64) -> Vec<f64> {
    p0.iter().zip(q).map(|(a, b)| (1.0 - t) * a + t * b).collect()
}

fn kl_to(p: &[f64], p0: &ProbDist) -> f64 {
    kl_divergence(&ProbDist::from_weights(p).expect("mixture"), p0)
}

/// Draws `pi` with `d(pi || center) <= delta`, verified by direct evaluation.
///
/// Interior mode proposes from a Dirichlet centred on `center` and doubles
/// the concentration after each rejection. Boundary mode picks a random
/// direction and bisects along the mixture path to land in `[0.9 delta, delta]`;
/// it fails only if `delta` exceeds `max_i ln(1 / center_i)`, the largest
/// divergence reachable inside the simplex.
pub fn kl_ball_sample(center: &ProbDist, delta: f64, mode: BallMode, seed: u64) -> Result<ProbDist> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::InvalidParameter(format!("delta = {delta} must be >= 0")));
    }
    if delta == 0.0 {
        return Ok(center.clone());
    }
    let d = center.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        BallMode::Interior => {
            let mut kappa = d as f64;
            loop {
                let alpha: Vec<f64> = center.masses().iter().map(|p| (kappa * p).max(1e-300)).collect();
                let proposal = ProbDist::from_weights(&dirichlet(&alpha, &mut rng))?;
                if kl_divergence(&proposal, center) <= delta {
                    return Ok(proposal);
                }
                kappa *= 2.0;
            }
        }
        BallMode::Boundary => {
            let p0 = center.masses();
            let mut q = dirichlet(&vec![0.5; d], &mut rng);
            if kl_to(&q, center) < 0.9 * delta {
                // Push toward the vertex the direction already favours, then
                // toward the rarest symbol of the centre.
                let favoured = (0..d).max_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap_or(0);
                q = ProbDist::point_mass(d, favoured).into_inner();
                if kl_to(&q, center) < 0.9 * delta {
                    let rarest = (0..d)
                        .filter(|&i| p0[i] > 0.0)
                        .min_by(|&a, &b| p0[a].total_cmp(&p0[b]))
                        .unwrap_or(0);
                    q = ProbDist::point_mass(d, rarest).into_inner();
                }
            }
            let reach = kl_to(&q, center);
            if reach < 0.9 * delta {
                return Err(Error::InvalidParameter(format!(
                    "delta = {delta} exceeds the largest reachable divergence {reach}"
                )));
            }
            if reach <= delta {
                return ProbDist::from_weights(&q);
            }
            // The divergence is continuous and increasing along the path.
            let (mut lo, mut hi) = (0.0, 1.0);
            for _ in 0..200 {
                let t = 0.5 * (lo + hi);
                let v = kl_to(&mixture(p0, &q, t), center);
                if v > delta {
                    hi = t;
                } else if v < 0.9 * delta {
                    lo = t;
                } else {
                    return ProbDist::from_weights(&mixture(p0, &q, t));
                }
            }
            ProbDist::from_weights(&mixture(p0, &q, lo))
        }
    }
}

/// Perturbed-uniform distributions indexed by the hypercube `{-1, +1}^(d/2)`:
/// coordinates `2k, 2k+1` are `1/d + tau v_k` and `1/d - tau v_k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssouadFamily {
    d: usize,
    tau: f64,
}

/// Largest admissible perturbation for alphabet `d` and ball radius `delta`.
pub fn max_tau(d: usize, delta: f64) -> f64 {
    (1.0 / (2.0 * d as f64)).min(delta.sqrt() / d as f64)
}

pub fn build_assouad(d: usize, tau: f64) -> Result<AssouadFamily> {
    if d == 0 || d % 2 != 0 {
        return Err(Error::InvalidParameter(format!("d = {d} must be even and positive")));
    }
    if d > 126 {
        return Err(Error::InvalidParameter(format!("d = {d} too large to index members")));
    }
    let max = 1.0 / (2.0 * d as f64);
    if !(tau >= 0.0) || tau > max {
        return Err(Error::TauTooLarge { tau, max });
    }
    Ok(AssouadFamily { d, tau })
}

impl AssouadFamily {
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of members, `2^(d/2)`.
    pub fn size(&self) -> u128 {
        1u128 << (self.d / 2)
    }

    /// Sign vector of member `index`: bit `k` set means `v_k = +1`.
    pub fn signs(&self, index: u128) -> Vec<i8> {
        (0..self.d / 2)
            .map(|k| if index >> k & 1 == 1 { 1 } else { -1 })
            .collect()
    }

    pub fn member_of(&self, v: &[i8]) -> Result<ProbDist> {
        if v.len() != self.d / 2 || v.iter().any(|s| s.abs() != 1) {
            return Err(Error::InvalidParameter(format!(
                "sign vector must have {} entries in {{-1, +1}}",
                self.d / 2
            )));
        }
        let base = 1.0 / self.d as f64;
        let mass = v
            .iter()
            .flat_map(|&s| {
                let shift = self.tau * s as f64;
                [base + shift, base - shift]
            })
            .collect();
        ProbDist::new(mass)
    }

    pub fn member(&self, index: u128) -> ProbDist {
        self.member_of(&self.signs(index)).expect("valid signs")
    }
}

fn hamming(a: &[i8], b: &[i8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count() + a.len().abs_diff(b.len())
}

/// Exact `d(theta_v || theta_v')` for sign vectors at Hamming distance one.
pub fn assouad_neighbor_kl(family: &AssouadFamily, v: &[i8], v2: &[i8]) -> Result<f64> {
    let h = hamming(v, v2);
    if h != 1 {
        return Err(Error::HammingViolation(h));
    }
    Ok(kl_divergence(&family.member_of(v)?, &family.member_of(v2)?))
}

/// Mean and standard error of `d(pi || estimate)` over independent trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    /// Trials whose estimate missed part of the support of `pi`.
    pub infinite: usize,
    /// Trials where `d < l1^2 / 2` (must be zero).
    pub pinsker_violations: usize,
}

/// Multinomial counts of `n` draws from `pi`.
pub fn sample_counts<R: Rng>(cumulative: &[f64], n: u64, rng: &mut R) -> Vec<u64> {
    let d = cumulative.len();
    let top = cumulative[d - 1];
    let mut counts = vec![0u64; d];
    for _ in 0..n {
        let u = rng.random::<f64>() * top;
        let k = cumulative.partition_point(|&x| x <= u).min(d - 1);
        counts[k] += 1;
    }
    counts
}

pub fn cumulative(pi: &ProbDist) -> Vec<f64> {
    pi.masses()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

/// Monte Carlo risk. Trial `t` draws from its own stream seeded by
/// `sub_seed(seed, t)`, so results are identical for any thread count. The
/// estimator receives the target counts and the trial's generator (for any
/// auxiliary samples it needs).
pub fn mc_risk<F>(estimator: F, pi: &ProbDist, n: u64, trials: usize, seed: u64) -> Result<RiskEstimate>
where
    F: Fn(&[u64], &mut ChaCha8Rng) -> Result<ProbDist> + Sync,
{
    if trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!(
            "{trials} trials; at least {MIN_TRIALS} required"
        )));
    }
    let cum = cumulative(pi);
    let losses = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, t as u64));
            let counts = sample_counts(&cum, n, &mut rng);
            let est = estimator(&counts, &mut rng)?;
            let kl = kl_divergence(pi, &est);
            let l1 = l1_distance(pi, &est);
            Ok((kl, kl < 0.5 * l1 * l1 - 1e-12))
        })
        .collect::<Result<Vec<(f64, bool)>>>()?;
    let infinite = losses.iter().filter(|(k, _)| k.is_infinite()).count();
    let pinsker_violations = losses.iter().filter(|(_, v)| *v).count();
    let (mean, stderr) = if infinite > 0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let m = accum::sum(losses.iter().map(|(k, _)| *k)) / trials as f64;
        let var = accum::sum(losses.iter().map(|(k, _)| (k - m) * (k - m))) / (trials - 1) as f64;
        (m, (var / trials as f64).sqrt())
    };
    Ok(RiskEstimate {
        mean,
        stderr,
        trials,
        infinite,
        pinsker_violations,
    })
}

fn for_each_composition(n: u64, d: usize, f: &mut impl FnMut(&[u64])) {
    fn rec(rest: u64, slot: usize, counts: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if slot + 1 == counts.len() {
            counts[slot] = rest;
            f(counts);
            return;
        }
        for k in 0..=rest {
            counts[slot] = k;
            rec(rest - k, slot + 1, counts, f);
        }
    }
    let mut counts = vec![0; d];
    rec(n, 0, &mut counts, f);
}

/// Exact risk by enumerating every count vector with its multinomial
/// probability. Only for `d^n <= MAX_OUTCOMES`.
pub fn exact_risk<F>(estimator: F, pi: &ProbDist, n: u64) -> Result<f64>
where
    F: Fn(&[u64]) -> Result<ProbDist>,
{
    let d = pi.len();
    let outcomes = (d as f64).powf(n as f64);
    if outcomes > MAX_OUTCOMES as f64 {
        return Err(Error::InvalidParameter(format!(
            "{d}^{n} outcomes exceed the enumeration limit {MAX_OUTCOMES}"
        )));
    }
    let ln_fact: Vec<f64> = (0..=n)
        .scan(0.0, |acc, k| {
            if k > 0 {
                *acc += (k as f64).ln();
            }
            Some(*acc)
        })
        .collect();
    let mut total = accum::NeumaierSum::new();
    let mut failure = None;
    for_each_composition(n, d, &mut |counts| {
        if failure.is_some() {
            return;
        }
        let mut ln_p = ln_fact[n as usize];
        for (i, &k) in counts.iter().enumerate() {
            if k > 0 {
                let p = pi.get(i);
                if p == 0.0 {
                    return;
                }
                ln_p += k as f64 * p.ln() - ln_fact[k as usize];
            }
        }
        match estimator(counts) {
            Ok(est) => total.add(ln_p.exp() * kl_divergence(pi, &est)),
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(total.value()),
    }
}

/// One CSV row: `d,n,n0,delta,estimator,mean_risk,stderr,bound,violated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskRow {
    pub d: usize,
    pub n: u64,
    pub n0: u64,
    pub delta: f64,
    pub estimator: String,
    pub mean_risk: f64,
    pub stderr: f64,
    pub bound: f64,
    pub violated: bool,
}

impl RiskRow {
    pub const CSV_HEADER: &'static str = "d,n,n0,delta,estimator,mean_risk,stderr,bound,violated";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.6e},{},{:.9e},{:.9e},{:.9e},{}",
            self.d,
            self.n,
            self.n0,
            self.delta,
            self.estimator,
            self.mean_risk,
            self.stderr,
            self.bound,
            self.violated
        )
    }
}

pub fn rows_to_csv(rows: &[RiskRow]) -> String {
    let mut out = String::from(RiskRow::CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Suite {
    /// Add-1/2 risk slack (`thm3`).
    AddHalf,
    /// Interpolation with known side information (`thm4`).
    KnownSide,
    /// Plug-in with estimated side information (`thm6`).
    EstimatedSide,
    Assouad,
}

impl std::str::FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm3" => Ok(Suite::AddHalf),
            "thm4" => Ok(Suite::KnownSide),
            "thm6" => Ok(Suite::EstimatedSide),
            "assouad" => Ok(Suite::Assouad),
            other => Err(Error::InvalidParameter(format!("unknown suite {other:?}"))),
        }
    }
}

/// Settings shared by the suites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub trials: usize,
    /// Ball samples per (centre, delta, n) cell.
    pub draws: usize,
    /// Sign vectors sampled per alphabet in the hypercube suite.
    pub members: usize,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            trials: 2_000,
            draws: 3,
            members: 1_000,
            seed: 0,
        }
    }
}

pub fn run_suite(suite: Suite, cfg: &SuiteConfig) -> Result<Vec<RiskRow>> {
    match suite {
        Suite::AddHalf => add_half_suite(cfg),
        Suite::KnownSide => known_side_suite(cfg),
        Suite::EstimatedSide => estimated_side_suite(cfg),
        Suite::Assouad => assouad_suite(cfg),
    }
}

fn own_bound(d: usize, n: u64) -> f64 {
    (d as f64 - 1.0) / (2.0 * n as f64)
}

fn check(row_bound: f64, est: &RiskEstimate) -> bool {
    !(est.mean <= row_bound + 3.0 * est.stderr) || est.pinsker_violations > 0
}

/// Shapes for the worst case over `pi`.
pub fn pi_grid(d: usize) -> Vec<(&'static str, ProbDist)> {
    vec![
        ("uniform", ProbDist::uniform(d)),
        ("near_point_0.1", near_point_mass(d, 0.1)),
        ("near_point_0.01", near_point_mass(d, 0.01)),
        ("zipf_1", zipf(d, 1.0)),
        ("zipf_2", zipf(d, 2.0)),
    ]
}

/// Add-1/2 risk against `1.5 (d - 1) / (2n)` over a grid of shapes.
pub fn add_half_suite(cfg: &SuiteConfig) -> Result<Vec<RiskRow>> {
    let table = BetaTable::krichevsky_trofimov();
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for (d, n) in [(5usize, 100u64), (5, 1000), (20, 100), (20, 1000)] {
        let bound = 1.5 * own_bound(d, n);
        for (name, pi) in pi_grid(d) {
            cell += 1;
            let est = mc_risk(
                |c, _| variable_add_constant(c, &table),
                &pi,
                n,
                cfg.trials,
                sub_seed(cfg.seed, cell),
            )?;
            rows.push(RiskRow {
                d,
                n,
                n0: 0,
                delta: 0.0,
                estimator: format!("add_half/{name}"),
                mean_risk: est.mean,
                stderr: est.stderr,
                bound,
                violated: check(bound, &est),
            });
        }
    }
    Ok(rows)
}

/// Centres of the KL balls for the side-information suites.
pub fn centre_grid(d: usize) -> Vec<(&'static str, ProbDist)> {
    vec![("uniform", ProbDist::uniform(d)), ("zipf_1", zipf(d, 1.0))]
}

struct BallCell {
    centre_name: &'static str,
    centre: ProbDist,
    pi: ProbDist,
    delta: f64,
    draw: usize,
}

fn ball_cells(d: usize, cfg: &SuiteConfig, salt: u64) -> Result<Vec<BallCell>> {
    let mut cells = Vec::new();
    for (ci, (centre_name, centre)) in centre_grid(d).into_iter().enumerate() {
        for (di, nominal) in [0.01, 0.1, 1.0].into_iter().enumerate() {
            for draw in 0..cfg.draws {
                let seed = sub_seed(cfg.seed ^ salt, (ci * 1000 + di * 100 + draw) as u64);
                let pi = kl_ball_sample(&centre, nominal, BallMode::Boundary, seed)?;
                let delta = kl_divergence(&pi, &centre);
                cells.push(BallCell {
                    centre_name,
                    centre: centre.clone(),
                    pi,
                    delta,
                    draw,
                });
            }
        }
    }
    Ok(cells)
}

/// Known side distribution at exact divergence `delta`: the better of the
/// two pure sources against `min(delta, 1.5 (d - 1) / (2n))`, plus the
/// proxy-selected choice against the same bound.
pub fn known_side_suite(cfg: &SuiteConfig) -> Result<Vec<RiskRow>> {
    let d = 20;
    let table = BetaTable::krichevsky_trofimov();
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for bc in ball_cells(d, cfg, 0x7434)? {
        for n in [50u64, 200] {
            cell += 1;
            let seed = sub_seed(cfg.seed, 10_000 + cell);
            let bound = bc.delta.min(1.5 * own_bound(d, n));
            let own = mc_risk(|c, _| variable_add_constant(c, &table), &bc.pi, n, cfg.trials, seed)?;
            let side = mc_risk(|_, _| Ok(bc.centre.clone()), &bc.pi, n, cfg.trials, seed)?;
            let rule = mc_risk(
                |c, _| Ok(interpolation_estimate(c, &bc.centre, bc.delta, &table)?.estimate),
                &bc.pi,
                n,
                cfg.trials,
                seed,
            )?;
            let best = if own.mean <= side.mean { own } else { side };
            let tag = format!("{}#{}", bc.centre_name, bc.draw);
            for (name, est, checked) in [
                ("alpha1", own, false),
                ("alpha0", side, false),
                ("best_alpha", best, true),
                ("proxy_alpha", rule, true),
            ] {
                rows.push(RiskRow {
                    d,
                    n,
                    n0: 0,
                    delta: bc.delta,
                    estimator: format!("{name}/{tag}"),
                    mean_risk: est.mean,
                    stderr: est.stderr,
                    bound,
                    violated: checked && check(bound, &est),
                });
            }
        }
    }
    Ok(rows)
}

/// Side distribution estimated from `n0` samples of the centre.
pub fn estimated_side_suite(cfg: &SuiteConfig) -> Result<Vec<RiskRow>> {
    let d = 20;
    let table = BetaTable::krichevsky_trofimov();
    let mut rows = Vec::new();
    let mut cell = 0u64;
    for bc in ball_cells(d, cfg, 0x7436)? {
        let centre_cum = cumulative(&bc.centre);
        for n in [50u64, 200] {
            for n0 in [20u64, 500] {
                cell += 1;
                let seed = sub_seed(cfg.seed, 20_000 + cell);
                let side_bound = bc.delta + (1.0 + d as f64 / n0 as f64).ln() + std::f64::consts::LN_2;
                let bound = (1.5 * own_bound(d, n)).min(side_bound);
                let est = mc_risk(
                    |c, rng| {
                        let y = sample_counts(&centre_cum, n0, rng);
                        Ok(plugin_estimate(c, &y, bc.delta, &table)?.estimate)
                    },
                    &bc.pi,
                    n,
                    cfg.trials,
                    seed,
                )?;
                rows.push(RiskRow {
                    d,
                    n,
                    n0,
                    delta: bc.delta,
                    estimator: format!("plugin/{}#{}", bc.centre_name, bc.draw),
                    mean_risk: est.mean,
                    stderr: est.stderr,
                    bound,
                    violated: check(bound, &est),
                });
            }
        }
    }
    Ok(rows)
}

/// Worst observed values of the hypercube family's three inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssouadCheck {
    pub d: usize,
    pub tau: f64,
    pub members: usize,
    pub invalid: usize,
    pub max_ball_kl: f64,
    pub max_neighbor_kl: f64,
    /// Neighbours whose l1 distance is not exactly `4 tau`.
    pub l1_mismatches: usize,
    pub violations: usize,
}

/// Samples `members` sign vectors at the largest admissible `tau` and checks
/// validity, `d(theta || uniform) <= d^2 tau^2`, neighbour divergence
/// `<= 8 tau^2 d` and neighbour l1 distance `== 4 tau` for one random flip.
pub fn check_assouad(d: usize, members: usize, seed: u64) -> Result<AssouadCheck> {
    let tau = 1.0 / (2.0 * d as f64);
    let family = build_assouad(d, tau)?;
    let uniform = ProbDist::uniform(d);
    let ball = (d * d) as f64 * tau * tau;
    let neighbor = 8.0 * tau * tau * d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = AssouadCheck {
        d,
        tau,
        members,
        invalid: 0,
        max_ball_kl: 0.0,
        max_neighbor_kl: 0.0,
        l1_mismatches: 0,
        violations: 0,
    };
    for _ in 0..members {
        let index = rng.random_range(0..family.size());
        let v = family.signs(index);
        let theta = match family.member_of(&v) {
            Ok(t) => t,
            Err(_) => {
                out.invalid += 1;
                continue;
            }
        };
        let kl = kl_divergence(&theta, &uniform);
        out.max_ball_kl = out.max_ball_kl.max(kl);
        let mut w = v.clone();
        let k = rng.random_range(0..w.len());
        w[k] = -w[k];
        let nkl = assouad_neighbor_kl(&family, &v, &w)?;
        out.max_neighbor_kl = out.max_neighbor_kl.max(nkl);
        if l1_distance(&theta, &family.member_of(&w)?) != 4.0 * tau {
            out.l1_mismatches += 1;
        }
        if kl > ball || nkl > neighbor {
            out.violations += 1;
        }
    }
    out.violations += out.invalid + out.l1_mismatches;
    Ok(out)
}

pub fn assouad_suite(cfg: &SuiteConfig) -> Result<Vec<RiskRow>> {
    let mut rows = Vec::new();
    for (i, d) in [4usize, 8, 16].into_iter().enumerate() {
        let c = check_assouad(d, cfg.members, sub_seed(cfg.seed, 30_000 + i as u64))?;
        let tau = c.tau;
        let l1_error = if c.l1_mismatches > 0 { 1.0 } else { 0.0 };
        for (name, value, bound) in [
            ("assouad_ball_kl", c.max_ball_kl, (d * d) as f64 * tau * tau),
            ("assouad_neighbor_kl", c.max_neighbor_kl, 8.0 * tau * tau * d as f64),
            ("assouad_l1_mismatch", l1_error, 0.0),
            ("assouad_invalid", c.invalid as f64, 0.0),
        ] {
            rows.push(RiskRow {
                d,
                n: 0,
                n0: 0,
                delta: (d * d) as f64 * tau * tau,
                estimator: name.into(),
                mean_risk: value,
                stderr: 0.0,
                bound,
                violated: !(value <= bound),
            });
        }
    }
    Ok(rows)
}
