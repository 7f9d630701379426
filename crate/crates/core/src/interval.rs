//! Sets of admissible delays.
//!
//! A [`DelaySet`] is a finite union of disjoint intervals over `[0, +inf)`,
//! used to describe for which delays `t` a predicate over the time-affine
//! valuation `v + rate * t` holds.

use smallvec::SmallVec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }

    pub fn contains(&self, t: f64) -> bool {
        let above = if self.lo_closed { t >= self.lo } else { t > self.lo };
        let below = if self.hi_closed { t <= self.hi } else { t < self.hi };
        above && below
    }
}

/// Sorted, pairwise disjoint, non-adjacent intervals within `[0, +inf)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DelaySet {
    parts: SmallVec<[Interval; 2]>,
}

impl DelaySet {
    pub fn empty() -> Self {
        DelaySet { parts: SmallVec::new() }
    }

    pub fn all() -> Self {
        Self::from_interval(Interval {
            lo: 0.0,
            lo_closed: true,
            hi: f64::INFINITY,
            hi_closed: false,
        })
    }

    pub fn from_bool(b: bool) -> Self {
        if b {
            Self::all()
        } else {
            Self::empty()
        }
    }

    /// Builds a set from a single interval, clipped to `[0, +inf)`.
    pub fn from_interval(iv: Interval) -> Self {
        let mut iv = iv;
        if iv.lo < 0.0 {
            iv.lo = 0.0;
            iv.lo_closed = true;
        }
        if iv.hi.is_infinite() {
            iv.hi_closed = false;
        }
        let mut parts = SmallVec::new();
        if !iv.is_empty() {
            parts.push(iv);
        }
        DelaySet { parts }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.parts.iter().any(|iv| iv.contains(t))
    }

    /// Infimum of the set together with whether it is attained.
    pub fn earliest(&self) -> Option<(f64, bool)> {
        self.parts.first().map(|iv| (iv.lo, iv.lo_closed))
    }

    /// Supremum of the connected component containing 0, if 0 is in the set.
    pub fn reach_from_zero(&self) -> Option<f64> {
        match self.parts.first() {
            Some(iv) if iv.contains(0.0) => Some(iv.hi),
            _ => None,
        }
    }

    pub fn complement(&self) -> Self {
        let mut out = SmallVec::new();
        let mut cursor = 0.0;
        let mut cursor_closed = true;
        for iv in &self.parts {
            let gap = Interval {
                lo: cursor,
                lo_closed: cursor_closed,
                hi: iv.lo,
                hi_closed: !iv.lo_closed,
            };
            if !gap.is_empty() {
                out.push(gap);
            }
            cursor = iv.hi;
            cursor_closed = !iv.hi_closed;
        }
        if cursor.is_finite() {
            out.push(Interval {
                lo: cursor,
                lo_closed: cursor_closed,
                hi: f64::INFINITY,
                hi_closed: false,
            });
        }
        DelaySet { parts: out }
    }

    pub fn intersect(&self, other: &Self) -> Self {
        let mut out: SmallVec<[Interval; 2]> = SmallVec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.parts.len() && j < other.parts.len() {
            let a = self.parts[i];
            let b = other.parts[j];
            let (lo, lo_closed) = if a.lo > b.lo {
                (a.lo, a.lo_closed)
            } else if b.lo > a.lo {
                (b.lo, b.lo_closed)
            } else {
                (a.lo, a.lo_closed && b.lo_closed)
            };
            let (hi, hi_closed) = if a.hi < b.hi {
                (a.hi, a.hi_closed)
            } else if b.hi < a.hi {
                (b.hi, b.hi_closed)
            } else {
                (a.hi, a.hi_closed && b.hi_closed)
            };
            let iv = Interval { lo, lo_closed, hi, hi_closed };
            if !iv.is_empty() {
                out.push(iv);
            }
            // advance whichever ends first
            let a_first = a.hi < b.hi || (a.hi == b.hi && !a.hi_closed);
            if a_first {
                i += 1;
            } else {
                j += 1;
            }
        }
        DelaySet { parts: out }
    }

    pub fn union(&self, other: &Self) -> Self {
        if self.is_empty() {
            return other.clone();
        }
        if other.is_empty() {
            return self.clone();
        }
        self.complement().intersect(&other.complement()).complement()
    }

    /// Restricts the set to `[0, bound]`.
    pub fn clip(&self, bound: f64) -> Self {
        self.intersect(&DelaySet::from_interval(Interval {
            lo: 0.0,
            lo_closed: true,
            hi: bound,
            hi_closed: true,
        }))
    }
}
