use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use super::schema::DataType;

/// A typed constant. Numeric literals compare by IEEE total order with
/// `-0.0` normalized to `0.0`, so literals can live in ordered sets.
#[derive(Clone, Debug)]
pub enum Literal {
    Num(f64),
    Str(String),
    Bool(bool),
}

impl Literal {
    pub fn num(value: f64) -> Self {
        Literal::Num(if value == 0.0 { 0.0 } else { value })
    }

    pub fn str(value: impl Into<String>) -> Self {
        Literal::Str(value.into())
    }

    pub fn data_type(&self) -> DataType {
        match self {
            Literal::Num(_) => DataType::Numeric,
            Literal::Str(_) => DataType::Categorical,
            Literal::Bool(_) => DataType::Boolean,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Literal::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// Numeric view used by models: booleans read as 0/1.
    pub fn as_feature_value(&self) -> Option<f64> {
        match self {
            Literal::Num(v) => Some(*v),
            Literal::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Literal::Str(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Literal::Num(_) => 0,
            Literal::Str(_) => 1,
            Literal::Bool(_) => 2,
        }
    }

    fn normalized(v: f64) -> f64 {
        if v == 0.0 {
            0.0
        } else {
            v
        }
    }
}

impl PartialEq for Literal {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Literal {}

impl PartialOrd for Literal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Literal {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Literal::Num(a), Literal::Num(b)) => {
                Literal::normalized(*a).total_cmp(&Literal::normalized(*b))
            }
            (Literal::Str(a), Literal::Str(b)) => a.cmp(b),
            (Literal::Bool(a), Literal::Bool(b)) => a.cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl Hash for Literal {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Literal::Num(v) => Literal::normalized(*v).to_bits().hash(state),
            Literal::Str(s) => s.hash(state),
            Literal::Bool(b) => b.hash(state),
        }
    }
}

/// Formats a float so that parsing the text yields the identical value.
pub fn format_number(value: f64) -> String {
    format!("{value:?}")
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Num(v) => f.write_str(&format_number(*v)),
            Literal::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
            Literal::Bool(true) => f.write_str("TRUE"),
            Literal::Bool(false) => f.write_str("FALSE"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn negative_zero_is_zero() {
        assert_eq!(Literal::Num(-0.0), Literal::Num(0.0));
        let set: BTreeSet<_> = [Literal::Num(-0.0), Literal::Num(0.0)].into_iter().collect();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn display_round_trips_numbers() {
        for v in [140.0, 2.5, -1.25e-7, 1e300, 0.1 + 0.2] {
            let text = format_number(v);
            assert_eq!(text.parse::<f64>().unwrap(), v);
        }
        assert_eq!(Literal::str("O'Hare").to_string(), "'O''Hare'");
    }
}
