use std::fmt;

/// Largest ground set any enumeration routine accepts.
pub const MAX_GROUND_SET: usize = 20;

/// A subset of the ground set `{0, .., n-1}` stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Subset(u32);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub const fn from_bits(bits: u32) -> Self {
        Subset(bits)
    }

    pub const fn bits(self) -> u32 {
        self.0
    }

    /// The whole ground set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        assert!(n <= 31, "ground set too large for a bitmask");
        Subset(((1u64 << n) - 1) as u32)
    }

    pub fn singleton(i: usize) -> Self {
        Subset(1 << i)
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn with(self, i: usize) -> Self {
        Subset(self.0 | 1 << i)
    }

    pub fn without(self, i: usize) -> Self {
        Subset(self.0 & !(1 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: Subset) -> Self {
        Subset(self.0 | other.0)
    }

    pub fn intersection(self, other: Subset) -> Self {
        Subset(self.0 & other.0)
    }

    pub fn difference(self, other: Subset) -> Self {
        Subset(self.0 & !other.0)
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }

    /// Every subset of `self`, in ascending bitmask order, starting with the
    /// empty set and ending with `self`.
    pub fn subsets(self) -> Subsets {
        Subsets { mask: self.0, next: Some(0) }
    }

    /// Sum of `values[i]` over members.
    pub fn sum(self, values: &[i64]) -> i64 {
        self.iter().map(|i| values[i]).sum()
    }

    /// Member ids shifted to 1-based numbering, as used in documents and reports.
    pub fn to_ids(self) -> Vec<usize> {
        self.iter().map(|i| i + 1).collect()
    }
}

impl FromIterator<usize> for Subset {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        iter.into_iter().fold(Subset::EMPTY, Subset::with)
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|i| i + 1)).finish()
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", i + 1)?;
        }
        write!(f, "}}")
    }
}

/// Serialized as the sorted list of 1-based member ids.
impl serde::Serialize for Subset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter().map(|i| i + 1))
    }
}

/// Iterator over the subsets of a mask (submask enumeration).
pub struct Subsets {
    mask: u32,
    next: Option<u32>,
}

impl Iterator for Subsets {
    type Item = Subset;

    fn next(&mut self) -> Option<Subset> {
        let current = self.next?;
        self.next = if current == self.mask {
            None
        } else {
            // next submask in ascending order
            Some(current.wrapping_sub(self.mask) & self.mask)
        };
        Some(Subset(current))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn submask_enumeration_is_ascending_and_complete() {
        let mask = Subset::from_bits(0b1011);
        let subs: Vec<u32> = mask.subsets().map(Subset::bits).collect();
        assert_eq!(subs, vec![0b0000, 0b0001, 0b0010, 0b0011, 0b1000, 0b1001, 0b1010, 0b1011]);
        assert_eq!(Subset::EMPTY.subsets().count(), 1);
        assert_eq!(Subset::full(5).subsets().count(), 32);
    }

    #[test]
    fn set_operations() {
        let s: Subset = [0, 2].into_iter().collect();
        assert!(s.contains(2) && !s.contains(1));
        assert_eq!(s.len(), 2);
        assert_eq!(s.with(1), Subset::full(3));
        assert_eq!(s.without(0), Subset::singleton(2));
        assert!(s.is_subset_of(Subset::full(3)));
        assert_eq!(s.to_string(), "{1,3}");
        assert_eq!(s.sum(&[5, 7, 11]), 16);
        assert_eq!(Subset::full(0), Subset::EMPTY);
    }
}
