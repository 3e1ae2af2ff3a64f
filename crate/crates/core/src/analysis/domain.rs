use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::ir::{format_number, Literal};

/// Non-empty numeric interval; infinite ends are always open.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub const FULL: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
        lo_closed: false,
        hi_closed: false,
    };

    /// `None` when the bounds describe an empty set.
    pub fn new(lo: f64, hi: f64, lo_closed: bool, hi_closed: bool) -> Option<Interval> {
        if lo.is_nan() || hi.is_nan() {
            return None;
        }
        let lo_closed = lo_closed && lo.is_finite();
        let hi_closed = hi_closed && hi.is_finite();
        if lo < hi || (lo == hi && lo_closed && hi_closed) {
            Some(Interval {
                lo,
                hi,
                lo_closed,
                hi_closed,
            })
        } else {
            None
        }
    }

    pub fn closed(lo: f64, hi: f64) -> Option<Interval> {
        Interval::new(lo, hi, true, true)
    }

    pub fn point(v: f64) -> Interval {
        Interval {
            lo: v,
            hi: v,
            lo_closed: true,
            hi_closed: true,
        }
    }

    /// `(-inf, t]`
    pub fn at_most(t: f64) -> Interval {
        Interval::new(f64::NEG_INFINITY, t, false, true).unwrap_or(Interval::FULL)
    }

    /// `(t, +inf)`
    pub fn greater_than(t: f64) -> Interval {
        Interval::new(t, f64::INFINITY, false, false).unwrap_or(Interval::FULL)
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let below = if self.hi_closed { v <= self.hi } else { v < self.hi };
        above && below
    }

    pub fn is_full(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn meet(&self, other: &Interval) -> Option<Interval> {
        let (lo, lo_closed) = if self.lo > other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo > self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed && other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi < other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi < self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed && other.hi_closed)
        };
        Interval::new(lo, hi, lo_closed, hi_closed)
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        let (lo, lo_closed) = if self.lo < other.lo {
            (self.lo, self.lo_closed)
        } else if other.lo < self.lo {
            (other.lo, other.lo_closed)
        } else {
            (self.lo, self.lo_closed || other.lo_closed)
        };
        let (hi, hi_closed) = if self.hi > other.hi {
            (self.hi, self.hi_closed)
        } else if other.hi > self.hi {
            (other.hi, other.hi_closed)
        } else {
            (self.hi, self.hi_closed || other.hi_closed)
        };
        Interval {
            lo,
            hi,
            lo_closed,
            hi_closed,
        }
    }

    /// True when every value of `self` is `<= t`.
    pub fn all_at_most(&self, t: f64) -> bool {
        self.hi <= t
    }

    /// True when every value of `self` is `> t`.
    pub fn all_greater(&self, t: f64) -> bool {
        self.lo > t || (self.lo == t && !self.lo_closed)
    }

    /// Image under `x -> (x - mean) / std` for positive `std`. Rounding is
    /// monotone but can map an open end onto its bound, so finite ends
    /// come back closed.
    pub fn affine(&self, mean: f64, std: f64) -> Interval {
        let lo = (self.lo - mean) / std;
        let hi = (self.hi - mean) / std;
        Interval::new(lo, hi, true, true).unwrap_or(Interval::FULL)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let num = |v: f64| {
            if v.is_infinite() {
                if v < 0.0 { "-inf".to_string() } else { "+inf".to_string() }
            } else {
                format_number(v)
            }
        };
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            num(self.lo),
            num(self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

/// Abstract value set of one column. Literal sets are never empty and a
/// single value is always a `Constant`.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureDomain {
    Interval(Interval),
    ValueSet(BTreeSet<Literal>),
    Constant(Literal),
    Top,
}

impl FeatureDomain {
    pub fn interval(i: Interval) -> FeatureDomain {
        if i.is_full() {
            FeatureDomain::Top
        } else if i.is_point() {
            FeatureDomain::Constant(Literal::num(i.lo))
        } else {
            FeatureDomain::Interval(i)
        }
    }

    /// `None` for an empty set.
    pub fn values(set: BTreeSet<Literal>) -> Option<FeatureDomain> {
        match set.len() {
            0 => None,
            1 => set.into_iter().next().map(FeatureDomain::Constant),
            _ => Some(FeatureDomain::ValueSet(set)),
        }
    }

    pub fn is_top(&self) -> bool {
        matches!(self, FeatureDomain::Top)
    }

    pub fn contains(&self, value: &Literal) -> bool {
        match self {
            FeatureDomain::Top => true,
            FeatureDomain::Constant(c) => c == value,
            FeatureDomain::ValueSet(s) => s.contains(value),
            FeatureDomain::Interval(i) => value.as_num().is_some_and(|v| i.contains(v)),
        }
    }

    fn literals(&self) -> Option<BTreeSet<Literal>> {
        match self {
            FeatureDomain::Constant(c) => Some([c.clone()].into_iter().collect()),
            FeatureDomain::ValueSet(s) => Some(s.clone()),
            _ => None,
        }
    }

    /// Values in both; `None` when none remain.
    pub fn meet(&self, other: &FeatureDomain) -> Option<FeatureDomain> {
        match (self, other) {
            (FeatureDomain::Top, d) | (d, FeatureDomain::Top) => Some(d.clone()),
            (FeatureDomain::Interval(a), FeatureDomain::Interval(b)) => {
                a.meet(b).map(FeatureDomain::interval)
            }
            (FeatureDomain::Interval(i), d) | (d, FeatureDomain::Interval(i)) => {
                let set = d.literals().expect("literal domain");
                FeatureDomain::values(
                    set.into_iter()
                        .filter(|l| l.as_num().is_some_and(|v| i.contains(v)))
                        .collect(),
                )
            }
            (a, b) => {
                let (a, b) = (a.literals().expect("literal domain"), b.literals().expect("literal domain"));
                FeatureDomain::values(a.intersection(&b).cloned().collect())
            }
        }
    }

    /// Sound over-approximation of the union.
    pub fn join(&self, other: &FeatureDomain) -> FeatureDomain {
        match (self, other) {
            (FeatureDomain::Top, _) | (_, FeatureDomain::Top) => FeatureDomain::Top,
            _ => {
                if let (Some(a), Some(b)) = (self.literals(), other.literals()) {
                    return FeatureDomain::values(a.union(&b).cloned().collect())
                        .unwrap_or(FeatureDomain::Top);
                }
                match (self.numeric_hull(), other.numeric_hull()) {
                    (Some(a), Some(b)) => FeatureDomain::interval(a.hull(&b)),
                    _ => FeatureDomain::Top,
                }
            }
        }
    }

    /// Smallest interval covering a purely numeric domain.
    fn numeric_hull(&self) -> Option<Interval> {
        match self {
            FeatureDomain::Interval(i) => Some(*i),
            FeatureDomain::Constant(Literal::Num(v)) => Some(Interval::point(*v)),
            FeatureDomain::ValueSet(s) => {
                let nums: Option<Vec<f64>> = s.iter().map(Literal::as_num).collect();
                let nums = nums?;
                let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Interval::closed(lo, hi)
            }
            _ => None,
        }
    }

    /// Bounds on the value a model reads for this column (booleans as
    /// 0/1). `None` means unconstrained.
    pub fn feature_bounds(&self) -> Option<Interval> {
        match self {
            FeatureDomain::Top => None,
            FeatureDomain::Interval(i) => Some(*i),
            FeatureDomain::Constant(l) => l.as_feature_value().map(Interval::point),
            FeatureDomain::ValueSet(s) => {
                let nums: Option<Vec<f64>> = s.iter().map(Literal::as_feature_value).collect();
                let nums = nums?;
                let lo = nums.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = nums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                Interval::closed(lo, hi)
            }
        }
    }

    pub fn constant(&self) -> Option<&Literal> {
        match self {
            FeatureDomain::Constant(c) => Some(c),
            _ => None,
        }
    }
}

impl fmt::Display for FeatureDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureDomain::Top => f.write_str("TOP"),
            FeatureDomain::Constant(c) => write!(f, "{{{c}}}"),
            FeatureDomain::Interval(i) => write!(f, "{i}"),
            FeatureDomain::ValueSet(s) => {
                f.write_str("{")?;
                for (i, l) in s.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{l}")?;
                }
                f.write_str("}")
            }
        }
    }
}

/// Domains of the columns of a relation. Absent columns are Top;
/// `Unreachable` means the relation is statically empty.
#[derive(Clone, Debug, PartialEq)]
pub enum DomainEnv {
    Unreachable,
    Reachable(BTreeMap<String, FeatureDomain>),
}

impl Default for DomainEnv {
    fn default() -> Self {
        DomainEnv::top()
    }
}

impl DomainEnv {
    pub fn top() -> DomainEnv {
        DomainEnv::Reachable(BTreeMap::new())
    }

    pub fn is_unreachable(&self) -> bool {
        matches!(self, DomainEnv::Unreachable)
    }

    pub fn get(&self, column: &str) -> FeatureDomain {
        match self {
            DomainEnv::Unreachable => FeatureDomain::Top,
            DomainEnv::Reachable(m) => m.get(column).cloned().unwrap_or(FeatureDomain::Top),
        }
    }

    pub fn columns(&self) -> Vec<(&str, &FeatureDomain)> {
        match self {
            DomainEnv::Unreachable => Vec::new(),
            DomainEnv::Reachable(m) => m.iter().map(|(k, v)| (k.as_str(), v)).collect(),
        }
    }

    /// Restricts one column; the env becomes unreachable if nothing is left.
    pub fn restrict(&mut self, column: &str, domain: &FeatureDomain) {
        let DomainEnv::Reachable(m) = self else {
            return;
        };
        let current = m.get(column).cloned().unwrap_or(FeatureDomain::Top);
        match current.meet(domain) {
            Some(FeatureDomain::Top) => {
                m.remove(column);
            }
            Some(d) => {
                m.insert(column.to_string(), d);
            }
            None => *self = DomainEnv::Unreachable,
        }
    }

    pub fn meet(&self, other: &DomainEnv) -> DomainEnv {
        match (self, other) {
            (DomainEnv::Unreachable, _) | (_, DomainEnv::Unreachable) => DomainEnv::Unreachable,
            (DomainEnv::Reachable(_), DomainEnv::Reachable(b)) => {
                let mut out = self.clone();
                for (c, d) in b {
                    out.restrict(c, d);
                }
                out
            }
        }
    }

    pub fn join(&self, other: &DomainEnv) -> DomainEnv {
        match (self, other) {
            (DomainEnv::Unreachable, x) | (x, DomainEnv::Unreachable) => x.clone(),
            (DomainEnv::Reachable(a), DomainEnv::Reachable(b)) => DomainEnv::Reachable(
                a.iter()
                    .filter_map(|(c, d)| {
                        let j = d.join(b.get(c)?);
                        (!j.is_top()).then(|| (c.clone(), j))
                    })
                    .collect(),
            ),
        }
    }
}

impl fmt::Display for DomainEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainEnv::Unreachable => f.write_str("EMPTY"),
            DomainEnv::Reachable(m) => {
                f.write_str("{")?;
                for (i, (c, d)) in m.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{c}: {d}")?;
                }
                f.write_str("}")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_meet_and_emptiness() {
        let a = Interval::at_most(3.0);
        let b = Interval::at_most(5.0);
        assert_eq!(a.meet(&b), Some(a));
        assert!(Interval::at_most(1.0).meet(&Interval::greater_than(2.0)).is_none());
        assert!(Interval::at_most(1.0).meet(&Interval::greater_than(1.0)).is_none());
        assert_eq!(
            FeatureDomain::interval(Interval::at_most(1.0).meet(&Interval::closed(1.0, 4.0).unwrap()).unwrap()),
            FeatureDomain::Constant(Literal::num(1.0))
        );
    }

    #[test]
    fn complementary_intervals_join_to_top() {
        let a = FeatureDomain::interval(Interval::at_most(3.0));
        let b = FeatureDomain::interval(Interval::greater_than(3.0));
        assert_eq!(a.join(&b), FeatureDomain::Top);
    }

    #[test]
    fn value_set_meets_interval() {
        let s = FeatureDomain::values([1.0, 2.0, 7.0].iter().map(|v| Literal::num(*v)).collect()).unwrap();
        let i = FeatureDomain::interval(Interval::at_most(2.0));
        assert_eq!(
            s.meet(&i),
            FeatureDomain::values([1.0, 2.0].iter().map(|v| Literal::num(*v)).collect())
        );
        let k = FeatureDomain::Constant(Literal::str("JFK"));
        let t = FeatureDomain::values([Literal::str("SEA"), Literal::str("BOS")].into_iter().collect()).unwrap();
        assert_eq!(k.meet(&t), None);
    }

    #[test]
    fn env_restrict_to_empty() {
        let mut env = DomainEnv::top();
        env.restrict("x", &FeatureDomain::interval(Interval::at_most(1.0)));
        env.restrict("x", &FeatureDomain::interval(Interval::greater_than(2.0)));
        assert!(env.is_unreachable());
    }
}
