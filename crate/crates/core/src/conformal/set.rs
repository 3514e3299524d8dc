use serde::{Deserialize, Serialize};

use crate::homotopy::PathDiagnostics;

/// Where an interval endpoint comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// The appended residual's rank crosses the threshold.
    RankCrossing,
    /// Membership changes exactly at a support change of the path.
    Breakpoint,
    /// The end of the search range.
    RangeClip,
    /// Rounded to half a grid step (grid baseline) or a quantile (split).
    Calibrated,
}

/// Half-open interval `[lo, hi)` on the response axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_kind: BoundaryKind,
    pub hi_kind: BoundaryKind,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, lo_kind: BoundaryKind, hi_kind: BoundaryKind) -> Self {
        Self {
            lo,
            hi,
            lo_kind,
            hi_kind,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y < self.hi
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }
}

/// A conformal prediction set: sorted, disjoint, nonempty intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub intervals: Vec<Interval>,
    pub alpha: f64,
    pub range: (f64, f64),
    pub is_single_interval: bool,
    /// Every traversed segment satisfied the cross-leverage bound.
    pub interval_condition_held: bool,
    /// The requested interval was unbounded and has been clipped to `range`.
    pub clipped_infinite: bool,
    pub diagnostics: PathDiagnostics,
    pub runtime_ms: f64,
}

impl PredictionSet {
    pub(crate) fn from_intervals(intervals: Vec<Interval>, alpha: f64, range: (f64, f64)) -> Self {
        let is_single_interval = intervals.len() == 1;
        Self {
            intervals,
            alpha,
            range,
            is_single_interval,
            interval_condition_held: false,
            clipped_infinite: false,
            diagnostics: PathDiagnostics::default(),
            runtime_ms: 0.0,
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(y))
    }

    /// Total length (Lebesgue measure).
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(Interval::length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// All interval endpoints, in order.
    pub fn boundaries(&self) -> Vec<f64> {
        self.intervals.iter().flat_map(|iv| [iv.lo, iv.hi]).collect()
    }

    /// Whether `self ⊆ other`, allowing endpoints to differ by `tol`.
    pub fn is_subset_of(&self, other: &PredictionSet, tol: f64) -> bool {
        self.intervals.iter().all(|a| {
            other
                .intervals
                .iter()
                .any(|b| b.lo <= a.lo + tol && a.hi <= b.hi + tol)
        })
    }

    pub fn to_record(&self) -> PredictionSetRecord {
        PredictionSetRecord {
            alpha: self.alpha,
            intervals: self.intervals.iter().map(|iv| [iv.lo, iv.hi]).collect(),
            single_interval: self.is_single_interval,
            n_segments: self.diagnostics.segments,
            n_fallbacks: self.diagnostics.fallback_refits,
            runtime_ms: self.runtime_ms,
        }
    }
}

/// Serialized form of a [`PredictionSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSetRecord {
    pub alpha: f64,
    pub intervals: Vec<[f64; 2]>,
    pub single_interval: bool,
    pub n_segments: usize,
    pub n_fallbacks: usize,
    pub runtime_ms: f64,
}

/// Sorts, merges touching pieces, and clips to `range`.
pub(crate) fn assemble(mut pieces: Vec<Interval>, range: (f64, f64)) -> Vec<Interval> {
    pieces.retain(|iv| iv.hi > iv.lo);
    pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
    let mut merged: Vec<Interval> = Vec::with_capacity(pieces.len());
    for iv in pieces {
        match merged.last_mut() {
            Some(last) if iv.lo <= last.hi + 1e-12 * last.hi.abs().max(1.0) => {
                if iv.hi > last.hi {
                    last.hi = iv.hi;
                    last.hi_kind = iv.hi_kind;
                }
            }
            _ => merged.push(iv),
        }
    }
    let (lo, hi) = range;
    // endpoints reached by walking to the range end may miss it by rounding
    let near = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0);
    merged
        .into_iter()
        .filter_map(|mut iv| {
            if iv.lo <= lo || near(iv.lo, lo) {
                iv.lo = lo;
                iv.lo_kind = BoundaryKind::RangeClip;
            }
            if iv.hi >= hi || near(iv.hi, hi) {
                iv.hi = hi;
                iv.hi_kind = BoundaryKind::RangeClip;
            }
            (iv.hi > iv.lo).then_some(iv)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi, BoundaryKind::RankCrossing, BoundaryKind::RankCrossing)
    }

    #[test]
    fn assemble_merges_and_clips() {
        let out = assemble(vec![iv(2.0, 3.0), iv(-5.0, 0.0), iv(0.0, 1.0), iv(4.0, 4.0)], (-1.0, 2.5));
        assert_eq!(out.len(), 2);
        assert_eq!((out[0].lo, out[0].hi), (-1.0, 1.0));
        assert_eq!(out[0].lo_kind, BoundaryKind::RangeClip);
        assert_eq!((out[1].lo, out[1].hi), (2.0, 2.5));
        assert_eq!(out[1].hi_kind, BoundaryKind::RangeClip);
    }

    #[test]
    fn half_open_membership_and_subsets() {
        let a = PredictionSet::from_intervals(vec![iv(0.0, 1.0), iv(2.0, 3.0)], 0.1, (0.0, 3.0));
        assert!(a.contains(0.0) && !a.contains(1.0) && a.contains(2.5));
        assert_eq!(a.measure(), 2.0);
        assert!(!a.is_single_interval);
        let b = PredictionSet::from_intervals(vec![iv(-1.0, 3.0)], 0.05, (0.0, 3.0));
        assert!(a.is_subset_of(&b, 0.0));
        assert!(!b.is_subset_of(&a, 0.0));
        let rec = serde_json::to_value(a.to_record()).unwrap();
        assert_eq!(rec["intervals"][1][0], 2.0);
        assert_eq!(rec["single_interval"], false);
    }
}
