//! Detection metrics: EER, Cllr with its PAV decomposition, and the
//! concurrent tandem EER.
//!
//! Every operating point accepts a trial iff its score is strictly above the
//! threshold. Thresholds run over minus infinity followed by the distinct
//! observed scores, so all metrics depend on the scores only through their
//! ranks (Cllr excepted).

use serde::Serialize;

use crate::calibration::softplus;
use crate::error::{Error, Result};
use crate::format::serialize_f64;
use crate::system::FittedSystem;
use crate::types::{ClassLabel, TrialScore};

fn check_binary(len: usize, is_target: &[bool]) -> Result<(usize, usize)> {
    if len != is_target.len() {
        return Err(Error::domain(format!("{len} scores but {} labels", is_target.len())));
    }
    let n_tar = is_target.iter().filter(|&&t| t).count();
    let n_non = len - n_tar;
    if n_tar == 0 || n_non == 0 {
        return Err(Error::metric(format!(
            "metric needs targets and non-targets, got {n_tar} and {n_non}"
        )));
    }
    Ok((n_tar, n_non))
}

/// Miss and false-accept rates at `-inf` and at every distinct score.
pub(crate) struct Roc {
    pub thresholds: Vec<f64>,
    pub miss: Vec<f64>,
    pub fa: Vec<f64>,
}

pub(crate) fn roc(scores: &[f64], is_target: &[bool], n_tar: usize, n_non: usize) -> Roc {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut thresholds = vec![f64::NEG_INFINITY];
    let mut miss = vec![0.0];
    let mut fa = vec![1.0];
    let (mut tar_below, mut non_below) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let value = scores[order[i]];
        while i < order.len() && scores[order[i]] == value {
            if is_target[order[i]] {
                tar_below += 1;
            } else {
                non_below += 1;
            }
            i += 1;
        }
        thresholds.push(value);
        miss.push(tar_below as f64 / n_tar as f64);
        fa.push((n_non - non_below) as f64 / n_non as f64);
    }
    Roc { thresholds, miss, fa }
}

/// Linear-interpolation crossing of two rate sequences whose difference
/// `rising - falling` starts negative and ends non-negative. Returns the
/// index `k` of the first non-negative difference and the fraction `t` of
/// the way from `k - 1` to `k`.
pub(crate) fn crossing(rising: &[f64], falling: &[f64]) -> Option<(usize, f64)> {
    let d = |k: usize| rising[k] - falling[k];
    let k = (0..rising.len()).find(|&k| d(k) >= 0.0)?;
    if k == 0 {
        return Some((0, 1.0));
    }
    if d(k) == 0.0 {
        return Some((k, 1.0));
    }
    let (d0, d1) = (d(k - 1), d(k));
    Some((k, -d0 / (d1 - d0)))
}

pub(crate) fn lerp(values: &[f64], k: usize, t: f64) -> f64 {
    if t == 1.0 {
        values[k]
    } else {
        values[k - 1] + t * (values[k] - values[k - 1])
    }
}

/// Equal error rate and its threshold.
///
/// The miss and false-accept rates are linearly interpolated between the
/// two adjacent operating points that bracket their crossing. When the
/// lower operating point is the `-inf` threshold, the threshold of the upper
/// point is reported.
pub fn compute_eer(scores: &[f64], is_target: &[bool]) -> Result<(f64, f64)> {
    let (n_tar, n_non) = check_binary(scores.len(), is_target)?;
    for &s in scores {
        crate::error::ensure_finite(s, "score")?;
    }
    let roc = roc(scores, is_target, n_tar, n_non);
    let (k, t) = crossing(&roc.miss, &roc.fa).expect("the last operating point rejects every trial");
    let eer = lerp(&roc.miss, k, t);
    let threshold = if t == 1.0 || roc.thresholds[k - 1] == f64::NEG_INFINITY {
        roc.thresholds[k]
    } else {
        lerp(&roc.thresholds, k, t)
    };
    Ok((eer, threshold))
}

/// Cllr in bits:
/// `(mean_tar log2(1 + e^-llr) + mean_non log2(1 + e^llr)) / 2`.
///
/// Infinite LLRs are accepted; NaN is not.
pub fn compute_cllr(llrs: &[f64], is_target: &[bool]) -> Result<f64> {
    let (n_tar, n_non) = check_binary(llrs.len(), is_target)?;
    let (mut tar, mut non) = (0.0, 0.0);
    for (&l, &t) in llrs.iter().zip(is_target) {
        if l.is_nan() {
            return Err(Error::domain("LLR is NaN"));
        }
        // Per-trial costs are converted to bits before summing so that
        // LLRs of exactly zero cost exactly one bit.
        if t {
            tar += softplus(-l) / std::f64::consts::LN_2;
        } else {
            non += softplus(l) / std::f64::consts::LN_2;
        }
    }
    Ok(0.5 * (tar / n_tar as f64 + non / n_non as f64))
}

/// Optimal monotone recalibration of `scores` by pool-adjacent-violators,
/// returned as LLRs in input order.
///
/// Tied scores share one block. Each block's target proportion `p` becomes
/// `logit(p) - ln(N_tar / N_non)`, so blocks with a single class map to
/// infinite LLRs.
pub fn pav_llrs(scores: &[f64], is_target: &[bool]) -> Result<Vec<f64>> {
    let (n_tar, n_non) = check_binary(scores.len(), is_target)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("score is NaN"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // (targets, trials, first position in `order`)
    let mut blocks: Vec<(usize, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < order.len() {
        let start = i;
        let value = scores[order[i]];
        let mut tar = 0;
        while i < order.len() && scores[order[i]] == value {
            tar += is_target[order[i]] as usize;
            i += 1;
        }
        let mut block = (tar, i - start, start);
        // Merge while the previous block's target proportion is higher.
        while let Some(&(pt, pn, ps)) = blocks.last() {
            if pt * block.1 > block.0 * pn {
                blocks.pop();
                block = (pt + block.0, pn + block.1, ps);
            } else {
                break;
            }
        }
        blocks.push(block);
    }

    let prior_log_odds = (n_tar as f64 / n_non as f64).ln();
    let mut out = vec![0.0; scores.len()];
    for (b, &(tar, n, start)) in blocks.iter().enumerate() {
        let end = blocks.get(b + 1).map_or(order.len(), |next| next.2);
        let llr = if tar == 0 {
            f64::NEG_INFINITY
        } else if tar == n {
            f64::INFINITY
        } else {
            (tar as f64 / (n - tar) as f64).ln() - prior_log_odds
        };
        for &idx in &order[start..end] {
            out[idx] = llr;
        }
    }
    Ok(out)
}

/// Cllr after optimal monotone recalibration.
pub fn compute_cllr_min(llrs: &[f64], is_target: &[bool]) -> Result<f64> {
    compute_cllr(&pav_llrs(llrs, is_target)?, is_target)
}

/// Binary indexed tree over ranks.
struct Fenwick(Vec<usize>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Self(vec![0; n + 1])
    }

    fn add(&mut self, index: usize, delta: isize) {
        let mut i = index + 1;
        while i < self.0.len() {
            self.0[i] = self.0[i].wrapping_add_signed(delta);
            i += i & i.wrapping_neg();
        }
    }

    /// Sum over ranks `< end`.
    fn prefix(&self, end: usize) -> usize {
        let mut i = end;
        let mut sum = 0;
        while i > 0 {
            sum += self.0[i];
            i -= i & i.wrapping_neg();
        }
        sum
    }
}

fn distinct_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn rank_of(sorted: &[f64], value: f64) -> usize {
    sorted.partition_point(|&x| x < value)
}

/// Concurrent tandem EER of the pair of score streams.
///
/// The tandem accepts iff `s_asv > tau_asv` and `s_cm > tau_cm`. For every
/// CM threshold the ASV threshold is placed at the equal error point of
/// `P_miss` and `P_fa,non` (linear interpolation between adjacent ASV
/// operating points) and the spoof false-accept rate is read off at the same
/// point. The t-EER is the common rate where that spoof false-accept rate
/// meets the ASV equal error rate, again interpolated linearly between
/// adjacent CM thresholds.
///
/// Fails with [`Error::Metric`] when a class is missing or when the two
/// curves do not meet, for instance when spoofs are already less often
/// accepted than non-targets with the CM disabled.
pub fn compute_t_eer(trials: &[TrialScore]) -> Result<f64> {
    let labels = trials.iter().map(|t| t.require_label()).collect::<Result<Vec<_>>>()?;
    let mut totals = [0usize; 3];
    for l in &labels {
        totals[l.index()] += 1;
    }
    if let Some(missing) = ClassLabel::ALL.into_iter().find(|l| totals[l.index()] == 0) {
        return Err(Error::metric(format!("t-EER needs {missing} trials")));
    }

    let asv_values = distinct_sorted(trials.iter().map(|t| t.scores.asv));
    let asv_rank: Vec<usize> = trials.iter().map(|t| rank_of(&asv_values, t.scores.asv)).collect();
    let mut by_cm: Vec<usize> = (0..trials.len()).collect();
    by_cm.sort_by(|&a, &b| trials[a].scores.cm.total_cmp(&trials[b].scores.cm));

    let mut trees: [Fenwick; 3] = std::array::from_fn(|_| Fenwick::new(asv_values.len()));
    for (i, l) in labels.iter().enumerate() {
        trees[l.index()].add(asv_rank[i], 1);
    }
    let mut active = totals;

    let n_tar = totals[ClassLabel::TarBf.index()] as f64;
    let n_non = totals[ClassLabel::NonBf.index()] as f64;
    let n_spf = totals[ClassLabel::Spf.index()] as f64;

    // Rates at ASV operating point `k` (k = 0 is -inf, k >= 1 is the k-th
    // distinct value) given the currently active trials.
    let rates = |trees: &[Fenwick; 3], active: &[usize; 3], k: usize| {
        let above = |label: ClassLabel| (active[label.index()] - trees[label.index()].prefix(k)) as f64;
        (
            1.0 - above(ClassLabel::TarBf) / n_tar,
            above(ClassLabel::NonBf) / n_non,
            above(ClassLabel::Spf) / n_spf,
        )
    };

    let mut previous: Option<(f64, f64)> = None;
    let mut pos = 0;
    loop {
        let (m0, f0, _) = rates(&trees, &active, 0);
        if m0 - f0 >= 0.0 {
            break;
        }
        // First ASV point with P_miss >= P_fa,non; the difference is
        // nondecreasing in k, and the last point has P_miss = 1, P_fa = 0.
        let (mut lo, mut hi) = (1, asv_values.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            let (m, f, _) = rates(&trees, &active, mid);
            if m - f >= 0.0 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        let k = lo;
        let (m1, f1, s1) = rates(&trees, &active, k);
        let (mp, fp, sp) = rates(&trees, &active, k - 1);
        let (e, s) = interpolate_point((mp, fp, sp), (m1, f1, s1));

        let h = s - e;
        if h <= 0.0 {
            return Ok(match previous {
                None if h == 0.0 => e,
                None => {
                    return Err(Error::metric(
                        "spoof and non-target false-accept rates do not meet: spoofs are rejected more often than non-targets without any CM threshold",
                    ))
                }
                Some(_) if h == 0.0 => e,
                Some((pe, ph)) => pe + ph / (ph - h) * (e - pe),
            });
        }
        previous = Some((e, h));

        // Raise the CM threshold to the next distinct value.
        if pos == by_cm.len() {
            break;
        }
        let value = trials[by_cm[pos]].scores.cm;
        while pos < by_cm.len() && trials[by_cm[pos]].scores.cm == value {
            let i = by_cm[pos];
            let l = labels[i].index();
            trees[l].add(asv_rank[i], -1);
            active[l] -= 1;
            pos += 1;
        }
    }
    Err(Error::metric(
        "t-EER curves do not meet before the CM threshold removes the ASV equal error point",
    ))
}

/// Equal error point between two adjacent ASV operating points given as
/// `(P_miss, P_fa,non, P_fa,spf)`; returns the interpolated error rate and
/// spoof false-accept rate.
pub(crate) fn interpolate_point(prev: (f64, f64, f64), next: (f64, f64, f64)) -> (f64, f64) {
    let d1 = next.0 - next.1;
    if d1 == 0.0 {
        return (next.0, next.2);
    }
    let d0 = prev.0 - prev.1;
    let t = -d0 / (d1 - d0);
    (prev.0 + t * (next.0 - prev.0), prev.2 + t * (next.2 - prev.2))
}

/// Evaluation summary of one system on one trial list. Rates are fractions
/// in `[0, 1]`, Cllr values are in bits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(serialize_with = "serialize_f64")]
    pub sasv_eer: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub eer_threshold: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub cllr: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub cllr_min: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub cllr_calib: f64,
    #[serde(serialize_with = "serialize_f64")]
    pub t_eer: f64,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report values are finite")
    }
}

/// Fuses every trial with `system` and evaluates the fused scores.
///
/// SASV-EER pools `non.bf` and `spf` as non-targets. Cllr treats the fused
/// score as an LLR as is. The t-EER is computed on the two per-trial inputs
/// the fusion rule consumed: raw scores for the score rules, LLRs for the
/// LLR rules.
pub fn evaluate_system(trials: &[TrialScore], system: &FittedSystem) -> Result<MetricsReport> {
    if trials.is_empty() {
        return Err(Error::metric("no trials to evaluate"));
    }
    let labels = trials.iter().map(|t| t.require_label()).collect::<Result<Vec<_>>>()?;
    let is_target: Vec<bool> = labels.iter().map(|&l| l == ClassLabel::TarBf).collect();
    let mut fused = Vec::with_capacity(trials.len());
    let mut t_eer_inputs = Vec::with_capacity(trials.len());
    for trial in trials {
        let [asv, cm] = system.fusion_inputs(&trial.scores)?;
        let score = system.rule().fuse(asv, cm);
        if !score.is_finite() {
            return Err(Error::metric(format!(
                "fused score of trial {} is not finite",
                trial.trial_id
            )));
        }
        fused.push(score);
        let [ta, tc] = system.t_eer_inputs(&trial.scores)?;
        t_eer_inputs.push(TrialScore {
            trial_id: String::new(),
            scores: crate::types::ScoreVector { asv: ta, cm: tc },
            label: trial.label,
        });
    }
    let (sasv_eer, eer_threshold) = compute_eer(&fused, &is_target)?;
    let cllr = compute_cllr(&fused, &is_target)?;
    let cllr_min = compute_cllr_min(&fused, &is_target)?;
    let t_eer = compute_t_eer(&t_eer_inputs)?;
    Ok(MetricsReport {
        sasv_eer,
        eer_threshold,
        cllr,
        cllr_min,
        cllr_calib: cllr - cllr_min,
        t_eer,
    })
}
