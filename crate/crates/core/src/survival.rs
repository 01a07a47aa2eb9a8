//! Kaplan-Meier estimation, restricted mean survival time, churn-ratio
//! comparison, and the log-rank test.
//!
//! Ties follow the product-limit convention: at an event time, events are
//! processed before censorings, so a subject censored at `t` is still at
//! risk for the events at `t`.

use crate::error::{Error, Result};
use crate::profile::SurvivalObservation;
use crate::stats::chi_square_sf;

/// Product-limit survival curve. `survival[i]` is the estimate just after
/// `event_times[i]`; before the first event time it is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalCurve {
    /// Strictly increasing day values where at least one event happened.
    pub event_times: Vec<u32>,
    /// Subjects at risk just before each event time.
    pub at_risk: Vec<u64>,
    /// Events at each event time.
    pub events: Vec<u64>,
    /// Survival probability just after each event time.
    pub survival: Vec<f64>,
    /// Largest observed duration, event or censored.
    pub max_follow_up: u32,
    /// Total subjects entering the curve.
    pub n_subjects: u64,
}

impl SurvivalCurve {
    /// Survival probability at day `t` (step function, right-continuous).
    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for (i, &time) in self.event_times.iter().enumerate() {
            if (time as f64) <= t {
                s = self.survival[i];
            } else {
                break;
            }
        }
        s
    }

    /// Rows for the export format: `(time, at_risk, events, survival)`,
    /// led by the initial `(0, n, 0, 1.0)` row.
    pub fn export_rows(&self) -> Vec<(u32, u64, u64, f64)> {
        let mut rows = vec![(0, self.n_subjects, 0, 1.0)];
        for i in 0..self.event_times.len() {
            rows.push((
                self.event_times[i],
                self.at_risk[i],
                self.events[i],
                self.survival[i],
            ));
        }
        rows
    }
}

/// Kaplan-Meier estimate over a non-empty observation set.
pub fn km_estimate(observations: &[SurvivalObservation]) -> Result<SurvivalCurve> {
    if observations.is_empty() {
        return Err(Error::invalid("km_estimate needs at least one observation"));
    }
    let mut sorted: Vec<(u32, bool)> = observations
        .iter()
        .map(|o| (o.duration_days, o.event))
        .collect();
    sorted.sort_unstable_by_key(|(t, event)| (*t, !event)); // events first at ties

    let n = sorted.len() as u64;
    let max_follow_up = sorted.last().map(|(t, _)| *t).unwrap_or(0);

    let mut event_times = Vec::new();
    let mut at_risk = Vec::new();
    let mut events = Vec::new();
    let mut survival = Vec::new();

    let mut s = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let risk = (sorted.len() - i) as u64;
        let mut d = 0u64;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == t {
            if sorted[j].1 {
                d += 1;
            }
            j += 1;
        }
        if d > 0 {
            s *= (risk - d) as f64 / risk as f64;
            event_times.push(t);
            at_risk.push(risk);
            events.push(d);
            survival.push(s);
        }
        i = j;
    }

    Ok(SurvivalCurve {
        event_times,
        at_risk,
        events,
        survival,
        max_follow_up,
        n_subjects: n,
    })
}

/// Restricted mean survival time: the exact area under the step curve on
/// `[0, tau]`. Refuses to extrapolate past the observed follow-up.
pub fn rmst(curve: &SurvivalCurve, tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::invalid("rmst: tau must be positive"));
    }
    if tau > curve.max_follow_up as f64 {
        return Err(Error::invalid(format!(
            "rmst: tau {tau} beyond max follow-up {}",
            curve.max_follow_up
        )));
    }
    let mut area = 0.0;
    let mut prev_time = 0.0;
    let mut prev_surv = 1.0;
    for (i, &t) in curve.event_times.iter().enumerate() {
        let t = t as f64;
        if t >= tau {
            break;
        }
        area += prev_surv * (t - prev_time);
        prev_time = t;
        prev_surv = curve.survival[i];
    }
    area += prev_surv * (tau - prev_time);
    Ok(area)
}

/// RMST ratio of `reference` over `group` at horizon `tau`; above 1 means
/// the group churns faster than the reference.
pub fn churn_ratio(
    reference: &[SurvivalObservation],
    group: &[SurvivalObservation],
    tau: f64,
) -> Result<f64> {
    let ref_curve = km_estimate(reference)?;
    let group_curve = km_estimate(group)?;
    let ref_rmst = rmst(&ref_curve, tau)?;
    let group_rmst = rmst(&group_curve, tau)?;
    if group_rmst == 0.0 {
        return Err(Error::degenerate("churn_ratio: group RMST is zero"));
    }
    Ok(ref_rmst / group_rmst)
}

/// Largest horizon on which two cohorts can be compared: the smaller of
/// their max follow-ups.
pub fn common_tau(a: &[SurvivalObservation], b: &[SurvivalObservation]) -> f64 {
    let max_a = a.iter().map(|o| o.duration_days).max().unwrap_or(0);
    let max_b = b.iter().map(|o| o.duration_days).max().unwrap_or(0);
    max_a.min(max_b) as f64
}

/// Log-rank comparison of two groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRankResult {
    pub chi_square: f64,
    pub p_value: f64,
    /// Observed events in group A.
    pub observed_a: f64,
    /// Expected events in group A under the shared-hazard hypothesis.
    pub expected_a: f64,
}

/// Two-sample log-rank test. At each distinct event time the observed and
/// expected events in group A accumulate; the statistic is chi-square with
/// one degree of freedom.
///
/// The test loses power when the curves cross, so report RMST ratios
/// alongside it.
pub fn log_rank(
    group_a: &[SurvivalObservation],
    group_b: &[SurvivalObservation],
) -> Result<LogRankResult> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::invalid("log_rank needs two non-empty groups"));
    }
    // (duration, event, is_a)
    let mut all: Vec<(u32, bool, bool)> = Vec::with_capacity(group_a.len() + group_b.len());
    all.extend(group_a.iter().map(|o| (o.duration_days, o.event, true)));
    all.extend(group_b.iter().map(|o| (o.duration_days, o.event, false)));
    if !all.iter().any(|(_, event, _)| *event) {
        return Err(Error::invalid("log_rank needs at least one event"));
    }
    all.sort_unstable_by_key(|(t, event, _)| (*t, !event));

    let mut observed_a = 0.0;
    let mut expected_a = 0.0;
    let mut variance = 0.0;

    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        let n_total = (all.len() - i) as f64;
        let n_a = all[i..].iter().filter(|(_, _, is_a)| *is_a).count() as f64;
        let mut d_total = 0.0;
        let mut d_a = 0.0;
        let mut j = i;
        while j < all.len() && all[j].0 == t {
            if all[j].1 {
                d_total += 1.0;
                if all[j].2 {
                    d_a += 1.0;
                }
            }
            j += 1;
        }
        if d_total > 0.0 {
            let share = n_a / n_total;
            observed_a += d_a;
            expected_a += d_total * share;
            if n_total > 1.0 {
                variance += d_total * share * (1.0 - share) * (n_total - d_total) / (n_total - 1.0);
            }
        }
        i = j;
    }

    if variance <= 0.0 {
        return Err(Error::degenerate("log_rank: zero variance"));
    }
    let diff = observed_a - expected_a;
    let chi_square = diff * diff / variance;
    Ok(LogRankResult {
        chi_square,
        p_value: chi_square_sf(chi_square, 1),
        observed_a,
        expected_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(duration: u32, event: bool) -> SurvivalObservation {
        SurvivalObservation {
            char_id: 0,
            duration_days: duration,
            event,
        }
    }

    fn worked_curve() -> Vec<SurvivalObservation> {
        vec![
            obs(5, true),
            obs(8, false),
            obs(12, true),
            obs(12, true),
            obs(15, false),
        ]
    }

    #[test]
    fn km_worked_example() {
        let curve = km_estimate(&worked_curve()).unwrap();
        assert_eq!(curve.event_times, vec![5, 12]);
        assert_eq!(curve.at_risk, vec![5, 3]);
        assert_eq!(curve.events, vec![1, 2]);
        assert!((curve.survival[0] - 0.8).abs() < 1e-12);
        assert!((curve.survival[1] - 0.8 / 3.0).abs() < 1e-12);
        assert_eq!(curve.max_follow_up, 15);
    }

    #[test]
    fn km_all_censored_is_flat() {
        let data = vec![obs(3, false), obs(7, false), obs(11, false)];
        let curve = km_estimate(&data).unwrap();
        assert!(curve.event_times.is_empty());
        assert_eq!(curve.survival_at(11.0), 1.0);
    }

    #[test]
    fn km_single_event_drops_to_zero() {
        let curve = km_estimate(&[obs(3, true)]).unwrap();
        assert_eq!(curve.survival, vec![0.0]);
        assert_eq!(curve.event_times, vec![3]);
    }

    #[test]
    fn km_empty_is_error() {
        assert!(km_estimate(&[]).is_err());
    }

    #[test]
    fn km_censor_at_event_time_stays_at_risk() {
        // Censored at 5 counts in the risk set of the event at 5.
        let data = vec![obs(5, true), obs(5, false)];
        let curve = km_estimate(&data).unwrap();
        assert_eq!(curve.at_risk, vec![2]);
        assert!((curve.survival[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rmst_worked_example() {
        let curve = km_estimate(&worked_curve()).unwrap();
        let area = rmst(&curve, 15.0).unwrap();
        let expected = 5.0 * 1.0 + 7.0 * 0.8 + 3.0 * (0.8 / 3.0);
        assert!((area - expected).abs() < 1e-12, "area {area}");
        assert!((area - 11.4).abs() < 1e-9);
    }

    #[test]
    fn rmst_unit_survival_is_tau() {
        let data = vec![obs(10, false), obs(10, false)];
        let curve = km_estimate(&data).unwrap();
        assert!((rmst(&curve, 10.0).unwrap() - 10.0).abs() < 1e-12);
        assert!((rmst(&curve, 5.0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn rmst_refuses_extrapolation() {
        let curve = km_estimate(&worked_curve()).unwrap();
        assert!(rmst(&curve, 15.5).is_err());
        assert!(rmst(&curve, 0.0).is_err());
    }

    #[test]
    fn churn_ratio_identity_and_inverse() {
        let g = worked_curve();
        let r = churn_ratio(&g, &g, 15.0).unwrap();
        assert!((r - 1.0).abs() < 1e-12);

        let other = vec![obs(2, true), obs(15, false), obs(9, true), obs(15, false)];
        let ab = churn_ratio(&g, &other, 15.0).unwrap();
        let ba = churn_ratio(&other, &g, 15.0).unwrap();
        assert!((ab * ba - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_rank_two_row_example() {
        let a = vec![obs(1, true)];
        let b = vec![obs(2, true)];
        let result = log_rank(&a, &b).unwrap();
        assert!((result.observed_a - 1.0).abs() < 1e-12);
        assert!((result.expected_a - 0.5).abs() < 1e-12);
        assert!((result.chi_square - 1.0).abs() < 1e-12);
        // chi-square 1.0 with 1 dof
        assert!((result.p_value - 0.317_310_507_862_914).abs() < 1e-9);
    }

    #[test]
    fn log_rank_identical_groups_zero() {
        let g = worked_curve();
        let result = log_rank(&g, &g).unwrap();
        assert!(result.chi_square.abs() < 1e-12);
    }

    #[test]
    fn log_rank_symmetric() {
        let a = worked_curve();
        let b = vec![obs(2, true), obs(4, false), obs(9, true), obs(15, false)];
        let ab = log_rank(&a, &b).unwrap();
        let ba = log_rank(&b, &a).unwrap();
        assert!((ab.chi_square - ba.chi_square).abs() < 1e-12);
    }

    #[test]
    fn log_rank_degenerate_errors() {
        assert!(log_rank(&[obs(1, false)], &[obs(2, false)]).is_err());
        assert!(log_rank(&[], &[obs(2, true)]).is_err());
    }
}
