//! Human ground-truth error model.
//!
//! A user's validation mistakes are a Poisson count `NE`; each mistake
//! relabels one whole trip segment. Under [`FlipAssumption::OneFlip`] the
//! segment takes its neighbour's label (a missed boarding or alighting);
//! under [`FlipAssumption::FullFlip`] its labels are inverted.
//!
//! The module also simulates the person-to-device validation round, in
//! which users confirm or amend a count shown to them.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TripSegment;
use crate::label::Label;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("poisson mean must be finite and >= 0, got {0}")]
    Lambda(f64),
    #[error("segments do not tile {len} labels: {message}")]
    Tiling { len: usize, message: String },
    #[error("unknown flip assumption `{0}`")]
    Assumption(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlipAssumption {
    OneFlip,
    FullFlip,
}

impl fmt::Display for FlipAssumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlipAssumption::OneFlip => "ONE_FLIP",
            FlipAssumption::FullFlip => "FULL_FLIP",
        })
    }
}

impl FromStr for FlipAssumption {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "ONE_FLIP" => Ok(FlipAssumption::OneFlip),
            "FULL_FLIP" => Ok(FlipAssumption::FullFlip),
            _ => Err(NoiseError::Assumption(s.into())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub assumption: FlipAssumption,
    /// Mean number of errors per user.
    pub lambda: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<(), NoiseError> {
        check_lambda(self.lambda)
    }
}

fn check_lambda(lambda: f64) -> Result<(), NoiseError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(NoiseError::Lambda(lambda))
    }
}

pub fn draw_poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> Result<u64, NoiseError> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(lambda).map_err(|_| NoiseError::Lambda(lambda))?;
    Ok(p.sample(rng) as u64)
}

/// Outcome of flipping one user's labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserFlip {
    pub user: u32,
    pub drawn_errors: u64,
    /// Segment ids of the relabelled segments, ascending.
    pub affected_segments: Vec<u32>,
    pub flipped_rows: usize,
    pub total_rows: usize,
    pub flipped_fraction: f64,
    pub warning: Option<String>,
}

/// Audit record of one noise draw over a set of users.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub spec: NoiseSpec,
    pub users: Vec<UserFlip>,
}

impl FlipReport {
    /// Share of all rows whose label changed.
    pub fn flipped_fraction(&self) -> f64 {
        let total: usize = self.users.iter().map(|u| u.total_rows).sum();
        if total == 0 {
            0.0
        } else {
            self.users.iter().map(|u| u.flipped_rows).sum::<usize>() as f64 / total as f64
        }
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }
}

fn check_tiling(segments: &[TripSegment], len: usize) -> Result<(), NoiseError> {
    let mut next = 0;
    for s in segments {
        if s.span.start != next || s.span.end <= s.span.start {
            return Err(NoiseError::Tiling { len, message: format!("segment {} spans {:?}", s.segment_id, s.span) });
        }
        next = s.span.end;
    }
    if next != len {
        return Err(NoiseError::Tiling { len, message: format!("segments end at {next}") });
    }
    Ok(())
}

/// `min(errors, n_segments)` distinct segment positions, ascending.
pub fn select_segments<R: Rng + ?Sized>(n_segments: usize, errors: u64, rng: &mut R) -> Vec<usize> {
    let k = usize::try_from(errors).unwrap_or(usize::MAX).min(n_segments);
    let mut picked = index::sample(rng, n_segments, k).into_vec();
    picked.sort_unstable();
    picked
}

/// Relabels the segments at positions `selected`.
///
/// One-flip rewrites selected segments in order, each taking its
/// predecessor's current label; the first segment takes its successor's
/// original label. Full-flip inverts each selected segment.
pub fn apply_flips(
    segments: &[TripSegment],
    labels: &[Label],
    selected: &[usize],
    assumption: FlipAssumption,
) -> Result<Vec<Label>, NoiseError> {
    check_tiling(segments, labels.len())?;
    let mut out = labels.to_vec();
    let mut order = selected.to_vec();
    order.sort_unstable();
    order.dedup();
    for &k in &order {
        let span = segments
            .get(k)
            .ok_or_else(|| NoiseError::Tiling { len: labels.len(), message: format!("no segment at position {k}") })?
            .span
            .clone();
        match assumption {
            FlipAssumption::FullFlip => {
                for l in &mut out[span] {
                    *l = l.flipped();
                }
            }
            FlipAssumption::OneFlip => {
                let source = if k > 0 {
                    Some(out[segments[k - 1].span.end - 1])
                } else {
                    segments.get(1).map(|s| labels[s.span.start])
                };
                // a lone segment has no neighbour to copy
                if let Some(l) = source {
                    out[span].fill(l);
                }
            }
        }
    }
    Ok(out)
}

/// Draws a Poisson error count and relabels that many random segments of
/// one user. Inputs are left untouched.
pub fn flip_labels<R: Rng + ?Sized>(
    segments: &[TripSegment],
    labels: &[Label],
    spec: &NoiseSpec,
    rng: &mut R,
) -> Result<(Vec<Label>, UserFlip), NoiseError> {
    spec.validate()?;
    check_tiling(segments, labels.len())?;
    let drawn_errors = draw_poisson(spec.lambda, rng)?;
    let user = segments.first().map_or(0, |s| s.user);
    let mut report = UserFlip { user, drawn_errors, total_rows: labels.len(), ..UserFlip::default() };
    if segments.is_empty() {
        if drawn_errors > 0 {
            report.warning = Some(format!("{drawn_errors} errors drawn but the user has no segments"));
        }
        return Ok((labels.to_vec(), report));
    }
    let selected = select_segments(segments.len(), drawn_errors, rng);
    let flipped = apply_flips(segments, labels, &selected, spec.assumption)?;
    report.affected_segments = selected.iter().map(|&k| segments[k].segment_id).collect();
    report.flipped_rows = flipped.iter().zip(labels).filter(|(a, b)| a != b).count();
    report.flipped_fraction = report.flipped_rows as f64 / labels.len() as f64;
    Ok((flipped, report))
}

/// Validation response of one simulated user.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    Modified,
    Confirmed,
}

/// How users react to a presented count. Defaults follow the observed
/// validation round: 6 of 7 perturbed counts and 2 of 7 correct ones were
/// amended, and half of the amendments to perturbed counts were right.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct P2dBehavior {
    pub lambda: f64,
    pub modify_if_perturbed: f64,
    pub modify_if_correct: f64,
    /// Chance that amending a wrong count restores the true one.
    pub fix_probability: f64,
}

impl Default for P2dBehavior {
    fn default() -> Self {
        Self { lambda: 0.7, modify_if_perturbed: 6.0 / 7.0, modify_if_correct: 2.0 / 7.0, fix_probability: 0.5 }
    }
}

impl P2dBehavior {
    /// A user who confirms correct counts and always fixes wrong ones.
    pub fn compliant() -> Self {
        Self { modify_if_perturbed: 1.0, modify_if_correct: 0.0, fix_probability: 1.0, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct P2dOutcome {
    pub presented: u64,
    pub reported: u64,
    pub response: Response,
}

impl P2dOutcome {
    pub fn error(&self, true_count: u64) -> u64 {
        self.reported.abs_diff(true_count)
    }
}

/// Non-zero Poisson error with a random sign, kept non-negative overall.
fn count_error<R: Rng + ?Sized>(count: u64, lambda: f64, rng: &mut R) -> u64 {
    let e = loop {
        let e = draw_poisson(lambda, rng).expect("lambda validated");
        if e > 0 || lambda == 0.0 {
            break e.max(1);
        }
    };
    if rng.random_bool(0.5) && e <= count {
        count - e
    } else {
        count + e
    }
}

/// Presents `true_count`, perturbed if asked, and simulates the user's
/// confirm-or-amend response.
pub fn simulate_p2d_validation<R: Rng + ?Sized>(
    true_count: u64,
    perturb: bool,
    behavior: &P2dBehavior,
    rng: &mut R,
) -> Result<P2dOutcome, NoiseError> {
    check_lambda(behavior.lambda)?;
    let presented = if perturb { count_error(true_count, behavior.lambda, rng) } else { true_count };
    let p_modify = if presented == true_count { behavior.modify_if_correct } else { behavior.modify_if_perturbed };
    if !rng.random_bool(p_modify.clamp(0.0, 1.0)) {
        return Ok(P2dOutcome { presented, reported: presented, response: Response::Confirmed });
    }
    let reported = if presented != true_count && rng.random_bool(behavior.fix_probability.clamp(0.0, 1.0)) {
        true_count
    } else {
        let mut r = count_error(true_count, behavior.lambda, rng);
        // amending means changing the shown value
        while r == presented {
            r = count_error(true_count, behavior.lambda, rng);
        }
        r
    };
    Ok(P2dOutcome { presented, reported, response: Response::Modified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::segment_labels;
    use crate::seed;
    use Label::{Bi, Bo};

    fn segments_of(labels: &[Label]) -> Vec<TripSegment> {
        segment_labels(labels)
            .into_iter()
            .enumerate()
            .map(|(k, (label, span))| TripSegment {
                user: 1,
                segment_id: k as u32,
                label,
                start_s: span.start as f64,
                end_s: (span.end - 1) as f64,
                span,
            })
            .collect()
    }

    #[test]
    fn zero_mean_never_errs() {
        let mut rng = seed::rng_from(1);
        assert!((0..1000).all(|_| draw_poisson(0.0, &mut rng).unwrap() == 0));
        assert!(draw_poisson(-1.0, &mut rng).is_err());
        assert!(draw_poisson(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn poisson_moments() {
        let mut rng = seed::rng_from(2);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| draw_poisson(0.7, &mut rng).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        assert!((mean - 0.7).abs() < 0.02, "{mean}");
        let draws: Vec<f64> = (0..n).map(|_| draw_poisson(3.0, &mut rng).unwrap() as f64).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n as f64;
        assert!((var - 3.0).abs() < 0.1, "{var}");
    }

    #[test]
    fn one_flip_copies_predecessor() {
        let labels = [Bo, Bo, Bi, Bi, Bi, Bo];
        let segs = segments_of(&labels);
        let out = apply_flips(&segs, &labels, &[1], FlipAssumption::OneFlip).unwrap();
        assert_eq!(out, vec![Bo; 6]);
        let out = apply_flips(&segs, &labels, &[0], FlipAssumption::OneFlip).unwrap();
        assert_eq!(out, [Bi, Bi, Bi, Bi, Bi, Bo]);
    }

    #[test]
    fn full_flip_inverts() {
        let labels = [Bo, Bi];
        let segs = segments_of(&labels);
        assert_eq!(apply_flips(&segs, &labels, &[0], FlipAssumption::FullFlip).unwrap(), [Bi, Bi]);
    }

    #[test]
    fn no_errors_no_change() {
        let labels = [Bo, Bi, Bi, Bo];
        let segs = segments_of(&labels);
        let spec = NoiseSpec { assumption: FlipAssumption::FullFlip, lambda: 0.0, seed: 0 };
        let (out, rep) = flip_labels(&segs, &labels, &spec, &mut seed::rng_from(0)).unwrap();
        assert_eq!(out, labels);
        assert_eq!(rep.flipped_rows, 0);
    }

    #[test]
    fn empty_user_warns() {
        let spec = NoiseSpec { assumption: FlipAssumption::OneFlip, lambda: 50.0, seed: 0 };
        let (out, rep) = flip_labels(&[], &[], &spec, &mut seed::rng_from(0)).unwrap();
        assert!(out.is_empty());
        assert!(rep.warning.is_some());
    }

    #[test]
    fn errors_capped_at_segment_count() {
        let labels = [Bo, Bi, Bo];
        let segs = segments_of(&labels);
        let spec = NoiseSpec { assumption: FlipAssumption::FullFlip, lambda: 100.0, seed: 0 };
        let (out, rep) = flip_labels(&segs, &labels, &spec, &mut seed::rng_from(3)).unwrap();
        assert!(rep.drawn_errors > 3);
        assert_eq!(rep.affected_segments, vec![0, 1, 2]);
        assert_eq!(out, [Bi, Bo, Bi]);
        assert_eq!(rep.flipped_fraction, 1.0);
    }

    #[test]
    fn bad_tiling_rejected() {
        let labels = [Bo, Bi, Bo];
        let mut segs = segments_of(&labels);
        segs[1].span = 1..3;
        assert!(apply_flips(&segs, &labels, &[], FlipAssumption::FullFlip).is_err());
    }

    #[test]
    fn compliant_user_confirms_correct_count() {
        let mut rng = seed::rng_from(4);
        for c in 0..20 {
            let o = simulate_p2d_validation(c, false, &P2dBehavior::compliant(), &mut rng).unwrap();
            assert_eq!(o, P2dOutcome { presented: c, reported: c, response: Response::Confirmed });
        }
    }

    #[test]
    fn default_behavior_matches_validation_table() {
        let mut rng = seed::rng_from(5);
        let b = P2dBehavior::default();
        let n = 70_000;
        let (mut mod_pert, mut mod_clean, mut wrong) = (0, 0, 0);
        for i in 0..n {
            let perturb = i % 2 == 0;
            let o = simulate_p2d_validation(6, perturb, &b, &mut rng).unwrap();
            assert!(!perturb || o.presented != 6);
            let modified = o.response == Response::Modified;
            if perturb {
                mod_pert += usize::from(modified);
            } else {
                mod_clean += usize::from(modified);
            }
            wrong += usize::from(o.error(6) > 0);
        }
        let half = f64::from(n / 2);
        // 6 of 7 perturbed counts amended, 2 of 7 correct ones
        assert!((mod_pert as f64 / half * 7.0 - 6.0).abs() < 0.1);
        assert!((mod_clean as f64 / half * 7.0 - 2.0).abs() < 0.1);
        // 6 of 14 end up wrong
        let rate = wrong as f64 / f64::from(n);
        assert!(rate > 0.4 && (rate - 6.0 / 14.0).abs() < 0.01, "{rate}");
    }
}
