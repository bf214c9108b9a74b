//! Trip and trip-history distances.
//!
//! All sums run in ascending index order (`i`, then `j`) so every value is
//! reproducible bit-for-bit regardless of caller or thread count.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::Trip;
use crate::error::{Error, Result};

/// How two trip histories are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricVariant {
    /// Positional comparison; histories must have equal length.
    Ordered,
    /// Every trip against every trip; lengths may differ.
    All2All,
}

impl MetricVariant {
    pub const ALL: [MetricVariant; 2] = [MetricVariant::Ordered, MetricVariant::All2All];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricVariant::Ordered => "ordered",
            MetricVariant::All2All => "all2all",
        }
    }

    pub fn distance(self, p: &[Trip], q: &[Trip]) -> Result<f64> {
        match self {
            MetricVariant::Ordered => dist_ordered(p, q),
            MetricVariant::All2All => dist_all2all(p, q),
        }
    }

    /// Whether `distance(p, q)` is defined for histories of these lengths.
    pub fn accepts(self, p_len: usize, q_len: usize) -> bool {
        p_len >= 1
            && q_len >= 1
            && match self {
                MetricVariant::Ordered => p_len == q_len,
                MetricVariant::All2All => true,
            }
    }
}

impl fmt::Display for MetricVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ordered" => Ok(MetricVariant::Ordered),
            "all2all" => Ok(MetricVariant::All2All),
            other => Err(format!(
                "unknown metric variant `{other}` (expected ordered|all2all)"
            )),
        }
    }
}

#[inline]
fn seuc_unchecked(a: &Trip, b: &Trip) -> f64 {
    let d0 = a.origin.lon - b.origin.lon;
    let d1 = a.origin.lat - b.origin.lat;
    let d2 = a.destination.lon - b.destination.lon;
    let d3 = a.destination.lat - b.destination.lat;
    d0 * d0 + d1 * d1 + d2 * d2 + d3 * d3
}

fn check_single_leg(t: &Trip) -> Result<()> {
    if t.via.is_empty() {
        Ok(())
    } else {
        Err(Error::UnsupportedTrip {
            yday: t.yday,
            len: t.via.len(),
        })
    }
}

/// Squared Euclidean distance between two single-leg trips over
/// `(o_lon, o_lat, d_lon, d_lat)`.
pub fn seuc(a: &Trip, b: &Trip) -> Result<f64> {
    check_single_leg(a)?;
    check_single_leg(b)?;
    Ok(seuc_unchecked(a, b))
}

/// Mean positional `seuc` of two equal-length histories.
pub fn dist_ordered(p: &[Trip], q: &[Trip]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::UnalignedHistories {
            left: p.len(),
            right: q.len(),
        });
    }
    if p.is_empty() {
        return Err(Error::EmptyHistory);
    }
    let mut sum = 0.0;
    for (a, b) in p.iter().zip(q) {
        sum += seuc(a, b)?;
    }
    Ok(sum / p.len() as f64)
}

/// Mean `seuc` over the full cross product of two histories.
pub fn dist_all2all(p: &[Trip], q: &[Trip]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyHistory);
    }
    for t in p.iter().chain(q) {
        check_single_leg(t)?;
    }
    let mut sum = 0.0;
    for a in p {
        for b in q {
            sum += seuc_unchecked(a, b);
        }
    }
    Ok(sum / (p.len() * q.len()) as f64)
}

/// `constant - seuc(x, y)`; the offset must not drive the similarity negative.
pub fn sim(x: &Trip, y: &Trip, constant: f64) -> Result<f64> {
    let distance = seuc(x, y)?;
    if constant < distance {
        return Err(Error::NegativeSimilarity { constant, distance });
    }
    Ok(constant - distance)
}
