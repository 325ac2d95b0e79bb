//! Concrete constraint families.

use super::{Subset, SubmodularOracle};

/// Full value table, indexed by subset bitmask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableOracle {
    n: usize,
    values: Vec<i64>,
}

impl TableOracle {
    /// `values[mask]` is `f` of the subset encoded by `mask`; the table must
    /// have exactly `2^n` entries. Axioms are not checked here.
    pub fn new(n: usize, values: Vec<i64>) -> Self {
        assert_eq!(values.len(), 1 << n, "table must have 2^n entries");
        TableOracle { n, values }
    }

    /// Tabulates any oracle.
    pub fn from_oracle(oracle: &dyn SubmodularOracle) -> Self {
        let n = oracle.ground_set_size();
        let values = Subset::full(n).subsets().map(|s| oracle.eval(s)).collect();
        TableOracle { n, values }
    }

    pub fn values(&self) -> &[i64] {
        &self.values
    }
}

impl SubmodularOracle for TableOracle {
    fn ground_set_size(&self) -> usize {
        self.n
    }

    fn eval(&self, set: Subset) -> i64 {
        self.values[set.bits() as usize]
    }
}

/// `m` identical units: `f(S) = m` for every nonempty `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiUnitOracle {
    n: usize,
    supply: i64,
}

impl MultiUnitOracle {
    pub fn new(n: usize, supply: i64) -> Self {
        assert!(supply >= 0, "supply must be nonnegative");
        MultiUnitOracle { n, supply }
    }

    pub fn supply(&self) -> i64 {
        self.supply
    }
}

impl SubmodularOracle for MultiUnitOracle {
    fn ground_set_size(&self) -> usize {
        self.n
    }

    fn eval(&self, set: Subset) -> i64 {
        if set.is_empty() {
            0
        } else {
            self.supply
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Good {
    pub id: u32,
    pub units: i64,
}

/// Matching market: buyers may only receive goods they are adjacent to, so a
/// buyer set `S` can absorb at most the units of the goods adjacent to `S`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteOracle {
    n: usize,
    goods: Vec<Good>,
    /// For each good, the buyers adjacent to it.
    neighbours: Vec<Subset>,
}

impl BipartiteOracle {
    /// `edges` are `(buyer index, good position)` pairs, both zero-based.
    pub fn new(n: usize, goods: Vec<Good>, edges: &[(usize, usize)]) -> Self {
        let mut neighbours = vec![Subset::EMPTY; goods.len()];
        for &(buyer, good) in edges {
            assert!(buyer < n && good < goods.len(), "edge out of range");
            neighbours[good] = neighbours[good].with(buyer);
        }
        assert!(goods.iter().all(|g| g.units >= 0), "unit counts must be nonnegative");
        BipartiteOracle { n, goods, neighbours }
    }

    pub fn goods(&self) -> &[Good] {
        &self.goods
    }

    pub fn neighbours(&self) -> &[Subset] {
        &self.neighbours
    }

    /// Edges as `(buyer index, good position)`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut edges: Vec<_> = self
            .neighbours
            .iter()
            .enumerate()
            .flat_map(|(g, s)| s.iter().map(move |b| (b, g)))
            .collect();
        edges.sort_unstable();
        edges
    }
}

impl SubmodularOracle for BipartiteOracle {
    fn ground_set_size(&self) -> usize {
        self.n
    }

    fn eval(&self, set: Subset) -> i64 {
        self.goods
            .iter()
            .zip(&self.neighbours)
            .filter(|(_, adj)| !adj.intersection(set).is_empty())
            .map(|(g, _)| g.units)
            .sum()
    }
}

/// The market constraint of an auction instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Constraint {
    MultiUnit(MultiUnitOracle),
    Bipartite(BipartiteOracle),
    Explicit(TableOracle),
}

impl Constraint {
    pub fn as_oracle(&self) -> &dyn SubmodularOracle {
        match self {
            Constraint::MultiUnit(o) => o,
            Constraint::Bipartite(o) => o,
            Constraint::Explicit(o) => o,
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Constraint::MultiUnit(_) => "multi_unit",
            Constraint::Bipartite(_) => "bipartite",
            Constraint::Explicit(_) => "explicit",
        }
    }
}

impl SubmodularOracle for Constraint {
    fn ground_set_size(&self) -> usize {
        self.as_oracle().ground_set_size()
    }

    fn eval(&self, set: Subset) -> i64 {
        self.as_oracle().eval(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bipartite_counts_adjacent_units() {
        // goods: A (2 units) adjacent to buyers 0,1; B (3 units) adjacent to 1,2
        let o = BipartiteOracle::new(
            3,
            vec![Good { id: 1, units: 2 }, Good { id: 2, units: 3 }],
            &[(0, 0), (1, 0), (1, 1), (2, 1)],
        );
        assert_eq!(o.eval(Subset::EMPTY), 0);
        assert_eq!(o.eval(Subset::singleton(0)), 2);
        assert_eq!(o.eval(Subset::singleton(1)), 5);
        assert_eq!(o.eval(Subset::singleton(2)), 3);
        assert_eq!(o.eval(Subset::full(3)), 5);
        assert_eq!(o.edges(), vec![(0, 0), (1, 0), (1, 1), (2, 1)]);
    }

    #[test]
    fn table_round_trips_through_from_oracle() {
        let m = MultiUnitOracle::new(3, 4);
        let t = TableOracle::from_oracle(&m);
        assert_eq!(t.values(), &[0, 4, 4, 4, 4, 4, 4, 4]);
        for s in Subset::full(3).subsets() {
            assert_eq!(t.eval(s), m.eval(s));
        }
    }
}
