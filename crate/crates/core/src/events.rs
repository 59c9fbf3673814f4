//! Velocity change events on external sources.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::percent_change_units;
use crate::scalar::Scalar;
use crate::workflow::StreamWorkflow;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Increase,
    Decrease,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Range {
    Low,
    Medium,
    High,
}

impl Direction {
    pub const ALL: [Direction; 2] = [Direction::Increase, Direction::Decrease];

    /// Initial source rate (in units) used for experiments in this direction.
    pub fn default_source_units(self) -> u64 {
        match self {
            Direction::Increase => 5,
            Direction::Decrease => 10,
        }
    }
}

impl Range {
    pub const ALL: [Range; 3] = [Range::Low, Range::Medium, Range::High];

    /// Fraction of the current rate by which a source changes.
    pub fn fraction_span(self, direction: Direction) -> (f64, f64) {
        match (direction, self) {
            (Direction::Increase, Range::Low) => (0.10, 0.30),
            (Direction::Increase, Range::Medium) => (0.50, 0.70),
            (Direction::Increase, Range::High) => (0.90, 1.00),
            (Direction::Decrease, Range::Low) => (0.05, 0.15),
            (Direction::Decrease, Range::Medium) => (0.25, 0.35),
            (Direction::Decrease, Range::High) => (0.45, 0.50),
        }
    }
}

macro_rules! text_enum {
    ($t:ty, $($v:ident => $s:literal),+) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(Self::$v => $s),+ })
            }
        }

        impl FromStr for $t {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, String> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok(Self::$v),)+
                    _ => Err(format!("unknown {}: `{s}`", stringify!($t).to_ascii_lowercase())),
                }
            }
        }
    };
}

text_enum!(Direction, Increase => "increase", Decrease => "decrease");
text_enum!(Range, Low => "low", Medium => "medium", High => "high");

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VelocityChangeEvent {
    pub at_second: u64,
    pub source: String,
    pub direction: Direction,
    pub range: Range,
    pub delta_units: u64,
}

impl VelocityChangeEvent {
    pub fn signed_delta(&self) -> i64 {
        let d = self.delta_units as i64;
        match self.direction {
            Direction::Increase => d,
            Direction::Decrease => -d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventSpec {
    pub count: usize,
    pub spacing: u64,
    pub offset: u64,
    pub direction: Direction,
    pub range: Range,
}

impl Default for EventSpec {
    fn default() -> Self {
        Self {
            count: 2,
            spacing: 10,
            offset: 5,
            direction: Direction::Increase,
            range: Range::Medium,
        }
    }
}

/// Draws `spec.count` events. Sources are picked uniformly; the change is a
/// uniform fraction of the source's rate at that time (earlier events
/// included), rounded to whole units. Decreases always leave at least one
/// unit.
pub fn generate_events<T: Scalar>(
    w: &StreamWorkflow<T>,
    source_units: &[u64],
    spec: &EventSpec,
    seed: u64,
) -> Vec<VelocityChangeEvent> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units = source_units.to_vec();
    let (lo, hi) = spec.range.fraction_span(spec.direction);
    let mut out = Vec::with_capacity(spec.count);
    if w.sources().is_empty() {
        return out;
    }
    for k in 0..spec.count {
        let src = rng.gen_range(0..w.sources().len());
        let frac = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let current = units[src];
        let mut delta = percent_change_units(current, T::lit(frac));
        if spec.direction == Direction::Decrease {
            delta = delta.min(current.saturating_sub(1));
            units[src] = current - delta;
        } else {
            units[src] = current + delta;
        }
        out.push(VelocityChangeEvent {
            at_second: spec.offset + spec.spacing * k as u64,
            source: w.source(crate::workflow::SourceIdx(src)).id.clone(),
            direction: spec.direction,
            range: spec.range,
            delta_units: delta,
        });
    }
    out
}
