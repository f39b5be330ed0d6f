//! SINR and spectral-efficiency evaluation, and the scheme pipelines that
//! turn one channel realisation into a [`ScenarioResult`].
//!
//! An [`Evaluator`] holds one seed's channels and caches the beamforming
//! outcome of every subset it has solved, so BEAMWAVE, RANDOM and XHAUS
//! share work and XHAUS dominates the other schemes exactly.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::ChannelMatrix;
use crate::combiner::{design_combiners, Combiner, PhaseCodebook};
use crate::error::{Error, Result};
use crate::harness::config::SystemConfig;
use crate::linalg::{dominant_eigvec, norm_sqr, CMatrix, CVector};
use crate::metrics::{discordance_matrix, DiscordanceMatrix, MetricKind, MetricTag};
use crate::precoder::{
    effective_channels, solve_precoders, BeamformingSolution, EffectiveChannel, Layering,
};
use crate::scheduler::{binomial, random_schedule, solve_schedule, Combinations, ScheduleDecision};

/// Relative tolerance when re-verifying the multicast target and the power budget.
pub const FEASIBILITY_TOL: f64 = 1e-6;

/// Schedule-and-beamform scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SchemeKind {
    /// Branch-and-bound schedule on the given discordance metric.
    Beamwave(MetricTag),
    /// Uniformly random schedule.
    Random,
    /// Best schedule over all subsets.
    Xhaus,
    /// Separate multicast and unicast windows; `t_u` is the unicast share.
    Tdm { t_u: f64 },
}

impl SchemeKind {
    /// Metric driving the schedule, if any.
    pub fn metric(&self) -> Option<MetricTag> {
        match self {
            SchemeKind::Beamwave(t) => Some(*t),
            SchemeKind::Tdm { .. } => Some(TDM_METRIC),
            SchemeKind::Random | SchemeKind::Xhaus => None,
        }
    }
}

/// The TDM baseline schedules its unicast window with BEAMWAVE-KING.
pub const TDM_METRIC: MetricTag = MetricTag::King;

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SchemeKind::Beamwave(t) => write!(f, "BEAMWAVE-{t}"),
            SchemeKind::Random => f.write_str("RANDOM"),
            SchemeKind::Xhaus => f.write_str("XHAUS"),
            SchemeKind::Tdm { t_u } => write!(f, "TDM-{}%", t_u * 100.0),
        }
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    /// Accepts `BEAMWAVE-<METRIC>`, `RANDOM`, `XHAUS`, and `TDM-75%` or
    /// `TDM-0.75` (case-insensitive).
    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase();
        let bad = || Error::validation("schemes", format!("unknown scheme {s:?}"));
        if let Some(m) = up.strip_prefix("BEAMWAVE-") {
            return Ok(SchemeKind::Beamwave(m.parse().map_err(|_| bad())?));
        }
        if let Some(share) = up.strip_prefix("TDM-") {
            let t_u = match share.strip_suffix('%') {
                Some(p) => p.parse::<f64>().map_err(|_| bad())? / 100.0,
                None => share.parse::<f64>().map_err(|_| bad())?,
            };
            if !(t_u > 0.0 && t_u < 1.0) {
                return Err(Error::validation(
                    "schemes",
                    format!("TDM unicast share must lie in (0, 1), got {t_u}"),
                ));
            }
            return Ok(SchemeKind::Tdm { t_u });
        }
        match up.as_str() {
            "RANDOM" => Ok(SchemeKind::Random),
            "XHAUS" => Ok(SchemeKind::Xhaus),
            _ => Err(bad()),
        }
    }
}

/// Outcome of one scheme on one channel realisation.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scheme: SchemeKind,
    /// Scheduled devices, ascending.
    pub selected: Vec<usize>,
    pub min_unicast_sinr: f64,
    /// Per scheduled device, in `selected` order.
    pub unicast_sinrs: Vec<f64>,
    /// Per device.
    pub multicast_sinrs: Vec<f64>,
    pub unicast_se: f64,
    pub feasible: bool,
    pub iterations: usize,
    pub converged: bool,
    pub runtime_ms: f64,
}

impl ScenarioResult {
    pub fn min_multicast_sinr(&self) -> f64 {
        self.multicast_sinrs
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

/// `share * sum log2(1 + sinr)`.
pub fn spectral_efficiency(unicast_sinrs: &[f64], time_share: f64) -> f64 {
    debug_assert!(unicast_sinrs.iter().all(|&s| s >= 0.0));
    time_share * unicast_sinrs.iter().map(|s| (1.0 + s).log2()).sum::<f64>()
}

/// Multicast SINR of every device and unicast SINR of every scheduled
/// device, recomputed from the raw channels and beamformers.
///
/// Unicast streams interfere with the multicast layer of every device; a
/// scheduled device sees the other scheduled streams after cancelling the
/// multicast layer.
pub fn evaluate_sinrs(
    channels: &[ChannelMatrix],
    solution: &BeamformingSolution,
    schedule: &ScheduleDecision,
    sigma2_mw: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if solution.w.len() != channels.len() || schedule.k() != channels.len() {
        return Err(Error::invalid(format!(
            "{} channels, {} combiners, schedule over {} devices",
            channels.len(),
            solution.w.len(),
            schedule.k()
        )));
    }
    if solution.b.len() != schedule.k_prime() {
        return Err(Error::invalid(format!(
            "{} unicast precoders for {} scheduled devices",
            solution.b.len(),
            schedule.k_prime()
        )));
    }
    raw_sinrs(
        channels,
        &solution.w,
        &solution.b,
        &schedule.selected,
        &solution.m,
        sigma2_mw,
    )
}

fn raw_sinrs(
    channels: &[ChannelMatrix],
    w: &[CVector],
    b: &[CVector],
    selected: &[usize],
    m: &CVector,
    sigma2_mw: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n_tx = m.len();
    for (h, wk) in channels.iter().zip(w) {
        if h.n_rx() != wk.len() || h.n_tx() != n_tx || b.iter().any(|bj| bj.len() != n_tx) {
            return Err(Error::invalid(
                "beamformer dimensions do not match the channels",
            ));
        }
    }
    if selected.iter().any(|&k| k >= channels.len()) {
        return Err(Error::invalid("scheduled index out of range"));
    }
    // |w_k^H H_k x|^2
    let gain = |k: usize, x: &CVector| -> f64 {
        let y: CVector = &channels[k].entries * x;
        let v: Complex64 = w[k].dotc(&y);
        v.norm_sqr()
    };
    let noise: Vec<f64> = w.iter().map(|wk| sigma2_mw * norm_sqr(wk)).collect();
    let uni_gain: Vec<Vec<f64>> = (0..channels.len())
        .map(|k| b.iter().map(|bj| gain(k, bj)).collect())
        .collect();
    let multicast = (0..channels.len())
        .map(|k| gain(k, m) / (uni_gain[k].iter().sum::<f64>() + noise[k]))
        .collect();
    let unicast = selected
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let others: f64 = uni_gain[k]
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, v)| v)
                .sum();
            uni_gain[k][i] / (others + noise[k])
        })
        .collect();
    Ok((multicast, unicast))
}

/// Scenario failure kept in the subset cache.
#[derive(Debug, Clone)]
enum CachedFailure {
    Infeasible { constraint: String, slack: f64 },
    Singular(String),
}

impl From<&CachedFailure> for Error {
    fn from(f: &CachedFailure) -> Error {
        match f {
            CachedFailure::Infeasible { constraint, slack } => Error::ScenarioInfeasible {
                constraint: constraint.clone(),
                slack: *slack,
            },
            CachedFailure::Singular(m) => Error::SingularConfiguration(m.clone()),
        }
    }
}

/// Beamforming outcome of one subset, with SINRs recomputed from raw channels.
#[derive(Debug)]
struct SubsetRun {
    schedule: ScheduleDecision,
    solution: BeamformingSolution,
    multicast: Vec<f64>,
    unicast: Vec<f64>,
    runtime_ms: f64,
}

impl SubsetRun {
    fn min_unicast(&self) -> f64 {
        self.unicast.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

type Outcome = std::result::Result<Arc<SubsetRun>, CachedFailure>;

/// Runs schemes on one channel realisation, sharing per-subset results.
pub struct Evaluator<'a> {
    cfg: &'a SystemConfig,
    channels: &'a [ChannelMatrix],
    links: Vec<EffectiveChannel>,
    thetas: HashMap<MetricTag, DiscordanceMatrix>,
    cache: HashMap<(Vec<usize>, bool), Outcome>,
}

impl<'a> Evaluator<'a> {
    pub fn new(channels: &'a [ChannelMatrix], cfg: &'a SystemConfig) -> Result<Self> {
        cfg.validate()?;
        if channels.len() != cfg.k {
            return Err(Error::invalid(format!(
                "{} channels for k = {}",
                channels.len(),
                cfg.k
            )));
        }
        if channels
            .iter()
            .any(|h| h.n_tx() != cfg.n_tx || h.n_rx() != cfg.n_rx)
        {
            return Err(Error::invalid(
                "channel dimensions do not match the configuration",
            ));
        }
        let codebook = PhaseCodebook::new(cfg.l_rx, cfg.p_rx_mw(), cfg.n_rx)?;
        let combiners: Vec<Combiner> = design_combiners(channels, &codebook)?;
        let links = effective_channels(channels, &combiners, cfg.sigma2_mw())?;
        Ok(Evaluator {
            cfg,
            channels,
            links,
            thetas: HashMap::new(),
            cache: HashMap::new(),
        })
    }

    pub fn links(&self) -> &[EffectiveChannel] {
        &self.links
    }

    /// Discordance matrix for `tag`, computed once.
    pub fn theta(&mut self, tag: MetricTag) -> Result<&DiscordanceMatrix> {
        if !self.thetas.contains_key(&tag) {
            let kind = MetricKind::new(tag, self.cfg.omega)?;
            let theta = discordance_matrix(self.channels, kind)?;
            self.thetas.insert(tag, theta);
        }
        Ok(&self.thetas[&tag])
    }

    fn subset(&mut self, selected: &[usize], layering: Layering) -> Result<Arc<SubsetRun>> {
        let key = (selected.to_vec(), layering == Layering::Superposed);
        if let Some(hit) = self.cache.get(&key) {
            return hit.clone().map_err(|f| Error::from(&f));
        }
        let start = Instant::now();
        let params = self.cfg.precoder_params(layering);
        let outcome = match solve_precoders(&self.links, selected, &params) {
            Ok(solution) => {
                let schedule =
                    ScheduleDecision::from_selection(self.cfg.k, selected.to_vec(), None)?;
                let (multicast, unicast) =
                    evaluate_sinrs(self.channels, &solution, &schedule, self.cfg.sigma2_mw())?;
                Ok(Arc::new(SubsetRun {
                    schedule,
                    solution,
                    multicast,
                    unicast,
                    runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                }))
            }
            Err(Error::ScenarioInfeasible { constraint, slack }) => {
                Err(CachedFailure::Infeasible { constraint, slack })
            }
            Err(Error::SingularConfiguration(m)) => Err(CachedFailure::Singular(m)),
            Err(e) => return Err(e),
        };
        self.cache.insert(key, outcome.clone());
        outcome.map_err(|f| Error::from(&f))
    }

    fn ldm_result(&self, scheme: SchemeKind, run: &SubsetRun, extra_ms: f64) -> ScenarioResult {
        let power = crate::precoder::transmit_power(&run.solution.b, &run.solution.m);
        let multicast_ok = run
            .multicast
            .iter()
            .all(|&s| s >= self.cfg.gamma_min * (1.0 - FEASIBILITY_TOL));
        let power_ok = power <= self.cfg.p_tx_mw() * (1.0 + FEASIBILITY_TOL);
        ScenarioResult {
            scheme,
            selected: run.schedule.selected.clone(),
            min_unicast_sinr: run.min_unicast(),
            unicast_sinrs: run.unicast.clone(),
            multicast_sinrs: run.multicast.clone(),
            unicast_se: spectral_efficiency(&run.unicast, 1.0),
            feasible: multicast_ok && power_ok,
            iterations: run.solution.iterations,
            converged: run.solution.converged,
            runtime_ms: run.runtime_ms + extra_ms,
        }
    }

    fn beamwave_selection(&mut self, tag: MetricTag) -> Result<Vec<usize>> {
        let kp = self.cfg.k_prime;
        let theta = self.theta(tag)?;
        Ok(solve_schedule(theta, kp)?.selected)
    }

    /// Runs `scheme`. `rng` is used only by RANDOM.
    pub fn run<R: Rng + ?Sized>(
        &mut self,
        scheme: SchemeKind,
        rng: &mut R,
    ) -> Result<ScenarioResult> {
        let start = Instant::now();
        match scheme {
            SchemeKind::Beamwave(tag) => {
                let sel = self.beamwave_selection(tag)?;
                let sched_ms = start.elapsed().as_secs_f64() * 1e3;
                let run = self.subset(&sel, Layering::Superposed)?;
                Ok(self.ldm_result(scheme, &run, sched_ms))
            }
            SchemeKind::Random => {
                let sel = random_schedule(rng, self.cfg.k, self.cfg.k_prime, None)?.selected;
                let run = self.subset(&sel, Layering::Superposed)?;
                Ok(self.ldm_result(scheme, &run, 0.0))
            }
            SchemeKind::Xhaus => self.xhaus(),
            SchemeKind::Tdm { t_u } => self.tdm(t_u),
        }
    }

    fn xhaus(&mut self) -> Result<ScenarioResult> {
        let (k, kp) = (self.cfg.k, self.cfg.k_prime);
        let count = binomial(k, kp);
        if count > self.cfg.xhaus_cap {
            return Err(Error::validation(
                "xhaus_cap",
                format!(
                    "C({k},{kp}) = {count} subsets exceed the cap of {}",
                    self.cfg.xhaus_cap
                ),
            ));
        }
        let mut best: Option<Arc<SubsetRun>> = None;
        let mut first_failure = None;
        let mut total_ms = 0.0;
        for subset in Combinations::new(k, kp) {
            match self.subset(&subset, Layering::Superposed) {
                Ok(run) => {
                    total_ms += run.runtime_ms;
                    // ties keep the first subset in lexicographic order
                    if best
                        .as_ref()
                        .is_none_or(|b| run.min_unicast() > b.min_unicast())
                    {
                        best = Some(run);
                    }
                }
                Err(e) if e.is_scenario_failure() => {
                    first_failure.get_or_insert(e);
                }
                Err(e) => return Err(e),
            }
        }
        match best {
            Some(run) => {
                let mut r = self.ldm_result(SchemeKind::Xhaus, &run, 0.0);
                r.runtime_ms = total_ms;
                Ok(r)
            }
            None => Err(first_failure.unwrap_or_else(|| Error::invalid("no subsets to enumerate"))),
        }
    }

    /// Multicast window: full power on the dominant direction of the
    /// aggregate channel, no unicast interference. Unicast window: the
    /// BEAMWAVE schedule with unicast-only max-min precoders.
    fn tdm(&mut self, t_u: f64) -> Result<ScenarioResult> {
        let start = Instant::now();
        let n_tx = self.cfg.n_tx;
        let mut agg = CMatrix::zeros(n_tx, n_tx);
        for l in &self.links {
            agg += &l.g * l.g.adjoint();
        }
        let m_dir = dominant_eigvec(&agg).ok_or_else(|| {
            Error::SingularConfiguration("aggregate channel matrix is zero".into())
        })?;
        let m = m_dir * Complex64::new(self.cfg.p_tx_mw().sqrt(), 0.0);
        let w: Vec<CVector> = self.links.iter().map(|l| l.w.clone()).collect();
        let (multicast, _) = raw_sinrs(self.channels, &w, &[], &[], &m, self.cfg.sigma2_mw())?;

        let sel = self.beamwave_selection(TDM_METRIC)?;
        let pre_ms = start.elapsed().as_secs_f64() * 1e3;
        let run = self.subset(&sel, Layering::UnicastOnly)?;
        let feasible = multicast
            .iter()
            .all(|&s| s >= self.cfg.gamma_min * (1.0 - FEASIBILITY_TOL))
            && crate::precoder::transmit_power(&run.solution.b, &run.solution.m)
                <= self.cfg.p_tx_mw() * (1.0 + FEASIBILITY_TOL);
        Ok(ScenarioResult {
            scheme: SchemeKind::Tdm { t_u },
            selected: sel,
            min_unicast_sinr: run.min_unicast(),
            unicast_sinrs: run.unicast.clone(),
            multicast_sinrs: multicast,
            unicast_se: spectral_efficiency(&run.unicast, t_u),
            feasible,
            iterations: run.solution.iterations,
            converged: run.solution.converged,
            runtime_ms: run.runtime_ms + pre_ms,
        })
    }

    /// Min unicast SINR of every subset solved so far, keyed by subset.
    pub fn solved_subsets(&self) -> Vec<(Vec<usize>, Option<f64>)> {
        let mut v: Vec<_> = self
            .cache
            .iter()
            .filter(|((_, superposed), _)| *superposed)
            .map(|((s, _), o)| (s.clone(), o.as_ref().ok().map(|r| r.min_unicast())))
            .collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

/// Runs one scheme on one channel realisation without sharing work.
pub fn run_scheme<R: Rng + ?Sized>(
    channels: &[ChannelMatrix],
    cfg: &SystemConfig,
    scheme: SchemeKind,
    rng: &mut R,
) -> Result<ScenarioResult> {
    Evaluator::new(channels, cfg)?.run(scheme, rng)
}
