//! Instance documents, named fixtures and seeded random generators.
//!
//! Documents are JSON:
//!
//! ```json
//! {
//!   "buyers": [{"id": 1, "valuation": "1", "budget": "3"},
//!              {"id": 2, "valuation": "3", "bid": "5/2", "budget": "3"}],
//!   "constraint": {"type": "multi_unit", "supply": 3}
//! }
//! ```
//!
//! Other constraint types are `{"type": "bipartite", "goods": [{"id", "units"}],
//! "edges": [[buyer_id, good_id], ..]}` and `{"type": "explicit", "values":
//! {"": 0, "1": 2, "1,2": 3, ..}}`. Ids are 1-based. Rationals are strings
//! (`"p/q"` or an integer); bare JSON integers are accepted, floats never.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::auction::{AuctionInstance, Buyer};
use crate::error::{Error, Result};
use crate::guards::Guards;
use crate::polymatroid::{self, BipartiteOracle, Constraint, Good, MultiUnitOracle, Subset, TableOracle};
use crate::rational::{self, Rational};
use crate::SubmodularOracle;

/// A rational field in a document.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Exact(Rational);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&rational::format(&self.0))
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct ExactVisitor;

        impl Visitor<'_> for ExactVisitor {
            type Value = Exact;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an exact rational string such as \"7/2\" or an integer")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Exact, E> {
                rational::parse(v).map(Exact).map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Exact, E> {
                Ok(Exact(rational::int(v)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Exact, E> {
                i64::try_from(v).map(|v| Exact(rational::int(v))).map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Exact, E> {
                Err(E::custom(format!("floating-point number {v} is not allowed; write it as \"p/q\"")))
            }
        }

        d.deserialize_any(ExactVisitor)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BuyerDoc {
    id: usize,
    valuation: Exact,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bid: Option<Exact>,
    budget: Exact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GoodDoc {
    id: u32,
    units: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum ConstraintDoc {
    MultiUnit { supply: i64 },
    Bipartite { goods: Vec<GoodDoc>, edges: Vec<(usize, u32)> },
    Explicit { values: BTreeMap<String, i64> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    buyers: Vec<BuyerDoc>,
    constraint: ConstraintDoc,
}

/// Parses and validates a document. Bids default to valuations.
pub fn load(text: &str) -> Result<AuctionInstance> {
    load_with(text, &Guards::default())
}

pub fn load_with(text: &str, guards: &Guards) -> Result<AuctionInstance> {
    let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    from_document(doc, guards)
}

pub fn load_path(path: &Path, guards: &Guards) -> Result<AuctionInstance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    load_with(&text, guards)
}

fn from_document(doc: InstanceDoc, guards: &Guards) -> Result<AuctionInstance> {
    let n = doc.buyers.len();
    guards.check_buyers(n)?;
    let mut buyers = doc.buyers;
    buyers.sort_by_key(|b| b.id);
    if buyers.iter().enumerate().any(|(k, b)| b.id != k + 1) {
        return Err(Error::Parse(format!("buyer ids must be exactly 1..{n}")));
    }
    let buyers: Vec<Buyer> = buyers
        .into_iter()
        .map(|b| Buyer {
            bid: b.bid.map_or_else(|| b.valuation.0.clone(), |e| e.0),
            valuation: b.valuation.0,
            budget: b.budget.0,
        })
        .collect();

    let constraint = match doc.constraint {
        ConstraintDoc::MultiUnit { supply } => {
            if supply < 0 {
                return Err(Error::Parse("supply must be nonnegative".into()));
            }
            Constraint::MultiUnit(MultiUnitOracle::new(n, supply))
        }
        ConstraintDoc::Bipartite { goods, edges } => {
            let mut position = BTreeMap::new();
            for (k, g) in goods.iter().enumerate() {
                if g.units < 0 {
                    return Err(Error::Parse(format!("good {}: units must be nonnegative", g.id)));
                }
                if position.insert(g.id, k).is_some() {
                    return Err(Error::Parse(format!("duplicate good id {}", g.id)));
                }
            }
            let mut pairs = Vec::with_capacity(edges.len());
            for (buyer, good) in edges {
                if buyer == 0 || buyer > n {
                    return Err(Error::Parse(format!("edge references unknown buyer {buyer}")));
                }
                let g = *position.get(&good).ok_or_else(|| Error::Parse(format!("edge references unknown good {good}")))?;
                pairs.push((buyer - 1, g));
            }
            let goods = goods.into_iter().map(|g| Good { id: g.id, units: g.units }).collect();
            Constraint::Bipartite(BipartiteOracle::new(n, goods, &pairs))
        }
        ConstraintDoc::Explicit { values } => Constraint::Explicit(parse_table(n, &values)?),
    };
    AuctionInstance::with_guards(buyers, constraint, guards)
}

fn parse_key(n: usize, key: &str) -> Result<Subset> {
    if key.trim().is_empty() {
        return Ok(Subset::EMPTY);
    }
    let mut set = Subset::EMPTY;
    for part in key.split(',') {
        let id: usize = part.trim().parse().map_err(|_| Error::Parse(format!("bad subset key `{key}`")))?;
        if id == 0 || id > n || set.contains(id - 1) {
            return Err(Error::Parse(format!("bad subset key `{key}`")));
        }
        set = set.with(id - 1);
    }
    Ok(set)
}

fn subset_key(set: Subset) -> String {
    set.to_ids().iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

fn parse_table(n: usize, values: &BTreeMap<String, i64>) -> Result<TableOracle> {
    if n > polymatroid::MAX_GROUND_SET {
        return Err(Error::SubsetLimit { size: n, limit: polymatroid::MAX_GROUND_SET });
    }
    let mut table: Vec<Option<i64>> = vec![None; 1 << n];
    for (key, &value) in values {
        let set = parse_key(n, key)?;
        if table[set.bits() as usize].replace(value).is_some() {
            return Err(Error::Parse(format!("subset {set} listed twice")));
        }
    }
    let table: Option<Vec<i64>> = table.into_iter().collect();
    let table = table.ok_or_else(|| Error::Parse(format!("explicit table must list all {} subsets", 1 << n)))?;
    Ok(TableOracle::new(n, table))
}

fn to_document(instance: &AuctionInstance) -> InstanceDoc {
    let buyers = instance
        .buyers()
        .iter()
        .enumerate()
        .map(|(i, b)| BuyerDoc {
            id: i + 1,
            valuation: Exact(b.valuation.clone()),
            bid: (b.bid != b.valuation).then(|| Exact(b.bid.clone())),
            budget: Exact(b.budget.clone()),
        })
        .collect();
    let constraint = match instance.constraint() {
        Constraint::MultiUnit(o) => ConstraintDoc::MultiUnit { supply: o.supply() },
        Constraint::Bipartite(o) => ConstraintDoc::Bipartite {
            goods: o.goods().iter().map(|g| GoodDoc { id: g.id, units: g.units }).collect(),
            edges: o.edges().into_iter().map(|(b, g)| (b + 1, o.goods()[g].id)).collect(),
        },
        Constraint::Explicit(o) => ConstraintDoc::Explicit {
            values: Subset::full(instance.n()).subsets().map(|s| (subset_key(s), o.values()[s.bits() as usize])).collect(),
        },
    };
    InstanceDoc { buyers, constraint }
}

/// Canonical document text: pretty-printed, bids omitted when truthful,
/// edges sorted, trailing newline.
pub fn save(instance: &AuctionInstance) -> String {
    let mut text = serde_json::to_string_pretty(&to_document(instance)).expect("documents always serialize");
    text.push('\n');
    text
}

/// Named instances with one integer parameter `k`.
///
/// * `prop54`: two buyers, `k` identical units, `v = (1, k)`, `B = (k, k)`.
///   The auction reaches liquid welfare `k` against an optimum of `2k − 1`.
/// * `example62`: one unit, `v = (k, 2)`, `B = (1, 1)`. The outcome is not
///   envy-free.
pub fn fixture(name: &str, k: i64) -> Result<AuctionInstance> {
    let (min_k, valuations, budgets, supply) = match name {
        "prop54" => (2, [1, k], [k, k], k),
        "example62" => (3, [k, 2], [1, 1], 1),
        _ => return Err(Error::UnknownFixture(format!("`{name}` (known: prop54, example62)"))),
    };
    if k < min_k {
        return Err(Error::UnknownFixture(format!("{name} requires k >= {min_k}, got {k}")));
    }
    let buyers = valuations
        .iter()
        .zip(budgets)
        .map(|(&v, b)| Buyer::truthful(rational::int(v), rational::int(b)))
        .collect();
    AuctionInstance::new(buyers, Constraint::MultiUnit(MultiUnitOracle::new(2, supply)))
}

pub const FIXTURE_NAMES: [&str; 2] = ["prop54", "example62"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    MultiUnit,
    Bipartite,
    Explicit,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::MultiUnit, Family::Bipartite, Family::Explicit];

    pub fn name(self) -> &'static str {
        match self {
            Family::MultiUnit => "multi_unit",
            Family::Bipartite => "bipartite",
            Family::Explicit => "explicit",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidInstance(format!("unknown family `{s}`")))
    }
}

/// Size knobs for [`generate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub n: usize,
    /// Upper bound on `f(N)`. For `multi_unit` this is the exact supply when
    /// `exact_supply` is set.
    pub max_supply: i64,
    /// Number of goods for `bipartite` (upper bound).
    pub goods: usize,
    pub exact_supply: bool,
}

impl GenParams {
    pub fn new(n: usize, max_supply: i64) -> Self {
        GenParams { n, max_supply, goods: 3, exact_supply: false }
    }
}

const GENERATION_ATTEMPTS: usize = 64;

/// Deterministic random instance of the given family.
pub fn generate(family: Family, params: GenParams, seed: u64) -> Result<AuctionInstance> {
    if params.n < 2 {
        return Err(Error::InvalidInstance("generated markets need at least two buyers".into()));
    }
    if params.max_supply < 1 {
        return Err(Error::InvalidInstance("max_supply must be positive".into()));
    }
    Guards::default().check_buyers(params.n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_error = String::new();
    for _ in 0..GENERATION_ATTEMPTS {
        let constraint = match family {
            Family::MultiUnit => {
                let m = if params.exact_supply { params.max_supply } else { rng.gen_range(1..=params.max_supply) };
                Constraint::MultiUnit(MultiUnitOracle::new(params.n, m))
            }
            Family::Bipartite => random_bipartite(&mut rng, params),
            Family::Explicit => match random_coverage(&mut rng, params) {
                Some(c) => c,
                None => {
                    last_error = "coverage table exceeded the size limits".into();
                    continue;
                }
            },
        };
        let supply = constraint.eval(constraint.ground_set());
        if supply < 1 || supply > params.max_supply {
            last_error = format!("total supply {supply} outside 1..={}", params.max_supply);
            continue;
        }
        let buyers = random_buyers(&mut rng, params.n, supply);
        match AuctionInstance::new(buyers, constraint) {
            Ok(instance) => return Ok(instance),
            Err(e) => last_error = e.to_string(),
        }
    }
    Err(Error::GenerationFailed { attempts: GENERATION_ATTEMPTS, reason: last_error })
}

/// A reproducible batch of instances cycling through the three families,
/// with buyer counts cycling through `2..=max_buyers`.
pub fn corpus(count: usize, max_buyers: usize, max_supply: i64, seed: u64) -> Result<Vec<AuctionInstance>> {
    let max_buyers = max_buyers.max(2);
    (0..count)
        .map(|k| {
            let family = Family::ALL[k % 3];
            let n = 2 + (k / 3) % (max_buyers - 1);
            generate(family, GenParams::new(n, max_supply), seed.wrapping_mul(1_000_003).wrapping_add(k as u64))
        })
        .collect()
}

/// Small rationals, with deliberate ties and integer budget/valuation ratios
/// so that the auction's exact-equality branches get exercised.
fn random_buyers(rng: &mut ChaCha8Rng, n: usize, supply: i64) -> Vec<Buyer> {
    const DENOMS: [i64; 4] = [1, 2, 3, 4];
    let mut valuations: Vec<Rational> = Vec::with_capacity(n);
    for _ in 0..n {
        let v = if !valuations.is_empty() && rng.gen_bool(0.2) {
            valuations.choose(rng).expect("nonempty").clone()
        } else {
            let den = *DENOMS.choose(rng).expect("nonempty");
            rational::ratio(rng.gen_range(1..=8 * den), den)
        };
        valuations.push(v);
    }
    valuations
        .into_iter()
        .map(|v| {
            let budget = if rng.gen_bool(0.35) {
                &v * rational::int(rng.gen_range(1..=supply.max(1)))
            } else {
                let den = *DENOMS.choose(rng).expect("nonempty");
                let top = rational::floor_i64(&(&v * rational::int(supply + 1) * rational::int(den))).max(1);
                rational::ratio(rng.gen_range(1..=top), den)
            };
            Buyer::truthful(v, budget)
        })
        .collect()
}

/// Random buyer–good graph. Any good with fewer than two neighbours gets a
/// competing edge so that no buyer is indispensable.
fn random_bipartite(rng: &mut ChaCha8Rng, params: GenParams) -> Constraint {
    let n = params.n;
    let goods_count = rng.gen_range(1..=params.goods.max(1));
    let mut budget_left = params.max_supply;
    let mut goods = Vec::with_capacity(goods_count);
    for k in 0..goods_count {
        if budget_left == 0 {
            break;
        }
        let remaining_goods = (goods_count - k) as i64;
        let most = (budget_left - (remaining_goods - 1)).clamp(1, 3);
        let units = rng.gen_range(1..=most);
        budget_left -= units;
        goods.push(Good { id: k as u32 + 1, units });
    }
    let mut edges = BTreeSet::new();
    for g in 0..goods.len() {
        for b in 0..n {
            if rng.gen_bool(0.4) {
                edges.insert((b, g));
            }
        }
        // competition repair
        while edges.iter().filter(|&&(_, gg)| gg == g).count() < 2 {
            edges.insert((rng.gen_range(0..n), g));
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    Constraint::Bipartite(BipartiteOracle::new(n, goods, &edges))
}

/// Truncated weighted coverage where every element is covered by at least two
/// buyers, tabulated into an explicit table.
fn random_coverage(rng: &mut ChaCha8Rng, params: GenParams) -> Option<Constraint> {
    let n = params.n;
    if n > polymatroid::EXHAUSTIVE_VALIDATION_LIMIT {
        return None;
    }
    let elements = rng.gen_range(1..=4usize);
    let weights: Vec<i64> = (0..elements).map(|_| rng.gen_range(1..=3)).collect();
    let mut covers = vec![Subset::EMPTY; elements];
    for cover in covers.iter_mut() {
        for b in 0..n {
            if rng.gen_bool(0.45) {
                *cover = cover.with(b);
            }
        }
        while cover.len() < 2 {
            *cover = cover.with(rng.gen_range(0..n));
        }
    }
    let total: i64 = weights.iter().sum();
    let cap = rng.gen_range(1..=total.min(params.max_supply).max(1));
    let values = Subset::full(n)
        .subsets()
        .map(|s| {
            let covered: i64 = covers
                .iter()
                .zip(&weights)
                .filter(|(c, _)| !c.intersection(s).is_empty())
                .map(|(_, w)| w)
                .sum();
            covered.min(cap)
        })
        .collect();
    let table = TableOracle::new(n, values);
    polymatroid::validate_oracle(&table).ok()?.passes_all().then_some(Constraint::Explicit(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    #[test]
    fn fixtures() {
        let p = fixture("prop54", 5).unwrap();
        assert_eq!(p.valuations(), vec![int(1), int(5)]);
        assert_eq!(p.budgets(), vec![int(5), int(5)]);
        assert_eq!(p.supply(), 5);
        let e = fixture("example62", 10).unwrap();
        assert_eq!(e.valuations(), vec![int(10), int(2)]);
        assert_eq!(e.budgets(), vec![int(1), int(1)]);
        assert_eq!(e.supply(), 1);
        assert!(matches!(fixture("prop54", 1), Err(Error::UnknownFixture(_))));
        assert!(matches!(fixture("example62", 2), Err(Error::UnknownFixture(_))));
        assert!(matches!(fixture("nope", 3), Err(Error::UnknownFixture(_))));
    }

    #[test]
    fn load_multi_unit_with_defaults_and_bids() {
        let text = r#"{"buyers": [{"id": 2, "valuation": "3", "bid": "5/2", "budget": 3},
                                   {"id": 1, "valuation": "1", "budget": "3"}],
                       "constraint": {"type": "multi_unit", "supply": 3}}"#;
        let inst = load(text).unwrap();
        assert_eq!(inst.buyers()[0].bid, int(1));
        assert_eq!(inst.buyers()[1].bid, ratio(5, 2));
        assert_eq!(inst.oracle().eval(Subset::singleton(1)), 3);
    }

    #[test]
    fn load_rejections() {
        let float = r#"{"buyers": [{"id": 1, "valuation": 1.5, "budget": "1"}, {"id": 2, "valuation": "1", "budget": "1"}],
                        "constraint": {"type": "multi_unit", "supply": 1}}"#;
        assert!(matches!(load(float), Err(Error::Parse(_))));
        let unknown = r#"{"buyers": [], "constraint": {"type": "multi_unit", "supply": 1}, "extra": 1}"#;
        assert!(matches!(load(unknown), Err(Error::Parse(_))));
        let nonzero_empty = r#"{"buyers": [{"id": 1, "valuation": "1", "budget": "1"}, {"id": 2, "valuation": "1", "budget": "1"}],
            "constraint": {"type": "explicit", "values": {"": 1, "1": 1, "2": 1, "1,2": 1}}}"#;
        assert!(matches!(load(nonzero_empty), Err(Error::Validation { axiom: "zero-at-empty", .. })));
        let missing = r#"{"buyers": [{"id": 1, "valuation": "1", "budget": "1"}, {"id": 2, "valuation": "1", "budget": "1"}],
            "constraint": {"type": "explicit", "values": {"": 0, "1": 1, "1,2": 1}}}"#;
        assert!(matches!(load(missing), Err(Error::Parse(_))));
        let bad_ids = r#"{"buyers": [{"id": 1, "valuation": "1", "budget": "1"}, {"id": 3, "valuation": "1", "budget": "1"}],
            "constraint": {"type": "multi_unit", "supply": 1}}"#;
        assert!(matches!(load(bad_ids), Err(Error::Parse(_))));
    }

    #[test]
    fn round_trip_each_family() {
        for family in Family::ALL {
            for seed in 0..5 {
                let inst = generate(family, GenParams::new(4, 6), seed).unwrap();
                let text = save(&inst);
                let back = load(&text).unwrap();
                assert_eq!(back, inst);
                assert_eq!(save(&back), text);
            }
        }
        let with_bid = fixture("prop54", 3).unwrap().with_bid(0, ratio(7, 3)).unwrap();
        assert_eq!(load(&save(&with_bid)).unwrap(), with_bid);
    }

    #[test]
    fn generation_is_deterministic_and_valid() {
        let params = GenParams { exact_supply: true, ..GenParams::new(3, 4) };
        let a = generate(Family::MultiUnit, params, 7).unwrap();
        assert_eq!(a, generate(Family::MultiUnit, params, 7).unwrap());
        assert_eq!(a.supply(), 4);
        for family in Family::ALL {
            for seed in 0..30 {
                let inst = generate(family, GenParams::new(5, 8), seed).unwrap();
                let report = polymatroid::validate_oracle(inst.oracle()).unwrap();
                assert!(report.passes_all(), "{family:?} seed {seed}: {report:?}");
                assert!(inst.supply() <= 8);
            }
        }
        let explicit = generate(Family::Explicit, GenParams::new(5, 8), 3).unwrap();
        match explicit.constraint() {
            Constraint::Explicit(t) => assert_eq!(t.values().len(), 32),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bipartite_matches_its_table() {
        for seed in 0..20 {
            let inst = generate(Family::Bipartite, GenParams::new(6, 8), seed).unwrap();
            let Constraint::Bipartite(graph) = inst.constraint() else { panic!("family mismatch") };
            // tabulate straight from the edge list
            let values = Subset::full(6)
                .subsets()
                .map(|s| {
                    let reached: BTreeSet<usize> =
                        graph.edges().into_iter().filter(|&(b, _)| s.contains(b)).map(|(_, g)| g).collect();
                    reached.iter().map(|&g| graph.goods()[g].units).sum()
                })
                .collect();
            let table = TableOracle::new(6, values);
            for s in Subset::full(6).subsets() {
                assert_eq!(table.eval(s), graph.eval(s));
            }
        }
    }
}
