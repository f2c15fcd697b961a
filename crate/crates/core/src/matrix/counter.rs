use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign};

/// Arithmetic operation tally. Multiplications, additions and comparisons
/// all weigh one unit in [`OpCounter::total`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpCounter {
    pub multiplies: u64,
    pub additions: u64,
    pub comparisons: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn total(&self) -> u64 {
        self.multiplies + self.additions + self.comparisons
    }

    /// One multiply-accumulate: a multiplication followed by an addition.
    #[inline]
    pub fn mac(&mut self) {
        self.multiplies += 1;
        self.additions += 1;
    }

    #[inline]
    pub fn addition(&mut self) {
        self.additions += 1;
    }

    #[inline]
    pub fn compare(&mut self) {
        self.comparisons += 1;
    }
}

impl AddAssign for OpCounter {
    fn add_assign(&mut self, rhs: Self) {
        self.multiplies += rhs.multiplies;
        self.additions += rhs.additions;
        self.comparisons += rhs.comparisons;
    }
}

impl Add for OpCounter {
    type Output = Self;

    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl std::iter::Sum for OpCounter {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}
