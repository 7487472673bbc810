//! Vendors with bundle discount schedules and buyers with sparse valuations
//! over vendor tuples. Most of the file derives per-buyer prices and surpluses
//! from an allocation, which the transfer solver groups by vendor.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::money::Money;

/// Largest magnitude accepted for any single price or valuation.
pub const MONEY_LIMIT: i64 = 1_000_000_000_000;

/// Reserved name of the null vendor ("do not buy this item type").
pub const NULL_VENDOR_NAME: &str = "null";

/// Index of a vendor within its market. Index 0 is always the null vendor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VendorId(pub u32);

impl VendorId {
    pub const NULL: VendorId = VendorId(0);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn is_null(self) -> bool {
        self == Self::NULL
    }
}

impl fmt::Display for VendorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

/// Index of a buyer within its market.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BuyerId(pub u32);

impl BuyerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for BuyerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "b{}", self.0)
    }
}

/// Item type index in `0..c`.
pub type ItemType = usize;

/// One vendor per item type, in item-type order. Ordering is lexicographic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VendorTuple(pub Vec<VendorId>);

impl VendorTuple {
    pub fn all_null(item_types: usize) -> Self {
        VendorTuple(vec![VendorId::NULL; item_types])
    }

    pub fn uniform(vendor: VendorId, item_types: usize) -> Self {
        VendorTuple(vec![vendor; item_types])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, item: ItemType) -> VendorId {
        self.0[item]
    }

    pub fn vendors(&self) -> &[VendorId] {
        &self.0
    }

    /// The single vendor supplying every item type, if there is one.
    pub fn single_vendor(&self) -> Option<VendorId> {
        let first = *self.0.first()?;
        self.0.iter().all(|&v| v == first).then_some(first)
    }

    pub fn contains(&self, vendor: VendorId) -> bool {
        self.0.contains(&vendor)
    }

    /// The set of vendors this tuple buys from.
    pub fn vendor_set(&self) -> VendorSet {
        VendorSet::new(self.0.iter().copied())
    }
}

/// Sorted, duplicate-free set of vendors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VendorSet(Vec<VendorId>);

impl VendorSet {
    pub fn new(vendors: impl IntoIterator<Item = VendorId>) -> Self {
        let set: BTreeSet<VendorId> = vendors.into_iter().collect();
        VendorSet(set.into_iter().collect())
    }

    pub fn contains(&self, vendor: VendorId) -> bool {
        self.0.binary_search(&vendor).is_ok()
    }

    pub fn members(&self) -> &[VendorId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for VendorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str("}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscountTier {
    pub thresholds: Vec<u32>,
    pub bundle_price: Money,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vendor {
    pub id: VendorId,
    pub name: String,
    pub base_prices: Vec<Money>,
    /// Ordered by increasing threshold; empty means the bundle is never discounted.
    pub tiers: Vec<DiscountTier>,
}

impl Vendor {
    pub fn base_sum(&self) -> Money {
        self.base_prices.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Buyer {
    pub id: BuyerId,
    pub name: String,
    /// Sparse valuations; tuples not listed are worth zero.
    pub valuations: Vec<(VendorTuple, Money)>,
}

impl Buyer {
    pub fn valuation(&self, choice: &VendorTuple) -> Money {
        self.valuations
            .iter()
            .find(|(t, _)| t == choice)
            .map(|(_, v)| *v)
            .unwrap_or(Money::ZERO)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Market {
    item_types: usize,
    vendors: Vec<Vendor>,
    buyers: Vec<Buyer>,
}

impl Market {
    /// An empty market over `item_types` item types, holding only the null vendor.
    pub fn new(item_types: usize) -> Self {
        let null = Vendor {
            id: VendorId::NULL,
            name: NULL_VENDOR_NAME.to_string(),
            base_prices: vec![Money::ZERO; item_types],
            tiers: Vec::new(),
        };
        Market {
            item_types,
            vendors: vec![null],
            buyers: Vec::new(),
        }
    }

    pub fn add_vendor(
        &mut self,
        name: impl Into<String>,
        base_prices: Vec<Money>,
        tiers: Vec<DiscountTier>,
    ) -> VendorId {
        let id = VendorId(self.vendors.len() as u32);
        self.vendors.push(Vendor {
            id,
            name: name.into(),
            base_prices,
            tiers,
        });
        id
    }

    pub fn add_buyer(
        &mut self,
        name: impl Into<String>,
        valuations: Vec<(VendorTuple, Money)>,
    ) -> BuyerId {
        let id = BuyerId(self.buyers.len() as u32);
        self.buyers.push(Buyer {
            id,
            name: name.into(),
            valuations,
        });
        id
    }

    pub fn item_types(&self) -> usize {
        self.item_types
    }

    /// All vendors, null vendor first.
    pub fn vendors(&self) -> &[Vendor] {
        &self.vendors
    }

    pub fn vendor(&self, id: VendorId) -> &Vendor {
        &self.vendors[id.index()]
    }

    pub fn vendor_ids(&self) -> impl Iterator<Item = VendorId> + '_ {
        self.vendors.iter().map(|v| v.id)
    }

    pub fn vendor_by_name(&self, name: &str) -> Option<VendorId> {
        self.vendors.iter().find(|v| v.name == name).map(|v| v.id)
    }

    pub fn buyers(&self) -> &[Buyer] {
        &self.buyers
    }

    pub fn buyer(&self, id: BuyerId) -> &Buyer {
        &self.buyers[id.index()]
    }

    pub fn buyer_by_name(&self, name: &str) -> Option<BuyerId> {
        self.buyers.iter().find(|b| b.name == name).map(|b| b.id)
    }

    pub fn buyer_ids(&self) -> impl Iterator<Item = BuyerId> + '_ {
        self.buyers.iter().map(|b| b.id)
    }

    /// Number of non-null vendors (M).
    pub fn vendor_count(&self) -> usize {
        self.vendors.len() - 1
    }

    pub fn buyer_count(&self) -> usize {
        self.buyers.len()
    }

    /// Number of vendor tuples, `(M + 1)^c`. `None` on overflow.
    pub fn cell_count(&self) -> Option<usize> {
        (0..self.item_types).try_fold(1usize, |acc, _| acc.checked_mul(self.vendors.len()))
    }

    /// The vendor tuple at position `cell` in lexicographic order.
    pub fn tuple_of_cell(&self, mut cell: usize) -> VendorTuple {
        let radix = self.vendors.len();
        let mut out = vec![VendorId::NULL; self.item_types];
        for slot in out.iter_mut().rev() {
            *slot = VendorId((cell % radix) as u32);
            cell /= radix;
        }
        VendorTuple(out)
    }

    pub fn cell_of_tuple(&self, tuple: &VendorTuple) -> usize {
        let radix = self.vendors.len();
        tuple.0.iter().fold(0, |acc, v| acc * radix + v.index())
    }

    /// Sum of base prices of the items in `choice`.
    pub fn base_price(&self, choice: &VendorTuple) -> Money {
        choice
            .0
            .iter()
            .enumerate()
            .map(|(k, v)| self.vendor(*v).base_prices[k])
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("market must have at least one item type")]
    NoItemTypes,
    #[error("duplicate vendor id {0:?}")]
    DuplicateVendor(String),
    #[error("duplicate buyer id {0:?}")]
    DuplicateBuyer(String),
    #[error("vendor id {0:?} is reserved for the null vendor")]
    ReservedVendorName(String),
    #[error("null vendor must have zero base prices and no discount tiers")]
    NullVendorPriced,
    #[error("vendor {vendor:?}: expected {expected} base prices, found {found}")]
    BasePriceArity { vendor: String, expected: usize, found: usize },
    #[error("vendor {vendor:?}: base price for item {item} is negative")]
    NegativeBasePrice { vendor: String, item: usize },
    #[error("vendor {vendor:?} tier {tier}: expected {expected} thresholds, found {found}")]
    ThresholdArity { vendor: String, tier: usize, expected: usize, found: usize },
    #[error("vendor {vendor:?} tier {tier}: thresholds decrease componentwise from the previous tier")]
    ThresholdsDecrease { vendor: String, tier: usize },
    #[error("vendor {vendor:?} tier {tier}: threshold sum does not strictly increase")]
    ThresholdSumNotIncreasing { vendor: String, tier: usize },
    #[error("vendor {vendor:?} tier {tier}: bundle prices not strictly decreasing")]
    BundlePriceNotDecreasing { vendor: String, tier: usize },
    #[error("vendor {vendor:?} tier {tier}: bundle price {price} not below base sum {base}")]
    BundlePriceNotBelowBase { vendor: String, tier: usize, price: Money, base: Money },
    #[error("vendor {vendor:?} tier {tier}: bundle price is negative")]
    NegativeBundlePrice { vendor: String, tier: usize },
    #[error("buyer {buyer:?}: valuation tuple has {found} components, expected {expected}")]
    TupleArity { buyer: String, expected: usize, found: usize },
    #[error("buyer {buyer:?}: valuation tuple references unknown vendor index {index}")]
    UnknownVendor { buyer: String, index: u32 },
    #[error("buyer {buyer:?}: negative valuation")]
    NegativeValuation { buyer: String },
    #[error("buyer {buyer:?}: the all-null tuple must be valued at 0")]
    NullTupleValued { buyer: String },
    #[error("buyer {buyer:?}: duplicate valuation for the same tuple")]
    DuplicateValuation { buyer: String },
    #[error("{what}: magnitude exceeds {MONEY_LIMIT}")]
    TooLarge { what: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_market(market: &Market) -> ValidationReport {
    let c = market.item_types;
    let mut out = Vec::new();
    if c == 0 {
        out.push(Violation::NoItemTypes);
    }

    let mut seen = BTreeSet::new();
    for vendor in &market.vendors {
        let name = &vendor.name;
        if !seen.insert(name.as_str()) {
            out.push(Violation::DuplicateVendor(name.clone()));
        }
        if vendor.id.is_null() {
            if vendor.base_prices.iter().any(|p| *p != Money::ZERO) || !vendor.tiers.is_empty() {
                out.push(Violation::NullVendorPriced);
            }
            continue;
        }
        if name == NULL_VENDOR_NAME {
            out.push(Violation::ReservedVendorName(name.clone()));
        }
        if vendor.base_prices.len() != c {
            out.push(Violation::BasePriceArity {
                vendor: name.clone(),
                expected: c,
                found: vendor.base_prices.len(),
            });
            continue;
        }
        let mut too_large = false;
        for (item, p) in vendor.base_prices.iter().enumerate() {
            if p.is_negative() {
                out.push(Violation::NegativeBasePrice { vendor: name.clone(), item });
            }
            if p.0.abs() > MONEY_LIMIT {
                out.push(Violation::TooLarge { what: format!("vendor {name:?} base price") });
                too_large = true;
            }
        }
        if too_large {
            continue;
        }
        let base = vendor.base_sum();
        let mut prev_thresholds = vec![0u32; c];
        let mut prev_price = base;
        for (i, tier) in vendor.tiers.iter().enumerate() {
            let tier_no = i + 1;
            if tier.thresholds.len() != c {
                out.push(Violation::ThresholdArity {
                    vendor: name.clone(),
                    tier: tier_no,
                    expected: c,
                    found: tier.thresholds.len(),
                });
                continue;
            }
            if tier.thresholds.iter().zip(&prev_thresholds).any(|(a, b)| a < b) {
                out.push(Violation::ThresholdsDecrease { vendor: name.clone(), tier: tier_no });
            }
            let sum: u64 = tier.thresholds.iter().map(|&t| t as u64).sum();
            let prev_sum: u64 = prev_thresholds.iter().map(|&t| t as u64).sum();
            if sum <= prev_sum {
                out.push(Violation::ThresholdSumNotIncreasing { vendor: name.clone(), tier: tier_no });
            }
            if tier.bundle_price.is_negative() {
                out.push(Violation::NegativeBundlePrice { vendor: name.clone(), tier: tier_no });
            }
            if tier.bundle_price >= base {
                out.push(Violation::BundlePriceNotBelowBase {
                    vendor: name.clone(),
                    tier: tier_no,
                    price: tier.bundle_price,
                    base,
                });
            } else if i > 0 && tier.bundle_price >= prev_price {
                out.push(Violation::BundlePriceNotDecreasing { vendor: name.clone(), tier: tier_no });
            }
            prev_thresholds = tier.thresholds.clone();
            prev_price = tier.bundle_price;
        }
    }

    let mut seen = BTreeSet::new();
    let null_tuple = VendorTuple::all_null(c);
    for buyer in &market.buyers {
        let name = &buyer.name;
        if !seen.insert(name.as_str()) {
            out.push(Violation::DuplicateBuyer(name.clone()));
        }
        let mut tuples = BTreeSet::new();
        for (tuple, value) in &buyer.valuations {
            if tuple.len() != c {
                out.push(Violation::TupleArity { buyer: name.clone(), expected: c, found: tuple.len() });
                continue;
            }
            if let Some(bad) = tuple.0.iter().find(|v| v.index() >= market.vendors.len()) {
                out.push(Violation::UnknownVendor { buyer: name.clone(), index: bad.0 });
                continue;
            }
            if !tuples.insert(tuple) {
                out.push(Violation::DuplicateValuation { buyer: name.clone() });
            }
            if value.is_negative() {
                out.push(Violation::NegativeValuation { buyer: name.clone() });
            }
            if value.0.abs() > MONEY_LIMIT {
                out.push(Violation::TooLarge { what: format!("buyer {name:?} valuation") });
            }
            if *tuple == null_tuple && *value != Money::ZERO {
                out.push(Violation::NullTupleValued { buyer: name.clone() });
            }
        }
    }

    ValidationReport { violations: out }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("allocation covers {found} buyers, market has {expected}")]
    BuyerCount { expected: usize, found: usize },
    #[error("buyer {buyer}: choice has {found} components, expected {expected}")]
    ChoiceArity { buyer: BuyerId, expected: usize, found: usize },
    #[error("buyer {buyer}: unknown vendor {vendor}")]
    UnknownVendor { buyer: BuyerId, vendor: VendorId },
}

/// Every buyer's vendor tuple, indexed by buyer.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Allocation {
    pub choice: Vec<VendorTuple>,
}

impl Allocation {
    pub fn new(choice: Vec<VendorTuple>) -> Self {
        Allocation { choice }
    }

    pub fn all_null(market: &Market) -> Self {
        Allocation {
            choice: vec![VendorTuple::all_null(market.item_types()); market.buyer_count()],
        }
    }

    pub fn of(&self, buyer: BuyerId) -> &VendorTuple {
        &self.choice[buyer.index()]
    }

    pub fn check(&self, market: &Market) -> Result<(), ModelError> {
        if self.choice.len() != market.buyer_count() {
            return Err(ModelError::BuyerCount {
                expected: market.buyer_count(),
                found: self.choice.len(),
            });
        }
        for (i, tuple) in self.choice.iter().enumerate() {
            let buyer = BuyerId(i as u32);
            if tuple.len() != market.item_types() {
                return Err(ModelError::ChoiceArity {
                    buyer,
                    expected: market.item_types(),
                    found: tuple.len(),
                });
            }
            if let Some(&vendor) = tuple.0.iter().find(|v| v.index() >= market.vendors.len()) {
                return Err(ModelError::UnknownVendor { buyer, vendor });
            }
        }
        Ok(())
    }
}

/// Per-item-type purchase counts for one vendor.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DemandVector(pub Vec<u32>);

impl DemandVector {
    pub fn meets(&self, thresholds: &[u32]) -> bool {
        self.0.iter().zip(thresholds).all(|(n, t)| n >= t)
    }
}

pub fn demand_vectors(market: &Market, alloc: &Allocation) -> Result<Vec<DemandVector>, ModelError> {
    alloc.check(market)?;
    Ok(demand_unchecked(market, alloc.choice.iter()))
}

pub(crate) fn demand_unchecked<'a>(
    market: &Market,
    choices: impl Iterator<Item = &'a VendorTuple>,
) -> Vec<DemandVector> {
    let mut demand = vec![DemandVector(vec![0; market.item_types()]); market.vendors.len()];
    for tuple in choices {
        for (k, v) in tuple.0.iter().enumerate() {
            demand[v.index()].0[k] += 1;
        }
    }
    demand
}

/// Highest tier whose thresholds are all met; 0 means no discount.
pub fn triggered_tier(vendor: &Vendor, demand: &DemandVector) -> usize {
    vendor
        .tiers
        .iter()
        .rposition(|tier| demand.meets(&tier.thresholds))
        .map_or(0, |i| i + 1)
}

pub fn triggered(market: &Market, alloc: &Allocation) -> Result<Vec<usize>, ModelError> {
    let demand = demand_vectors(market, alloc)?;
    Ok(market
        .vendors
        .iter()
        .map(|v| triggered_tier(v, &demand[v.id.index()]))
        .collect())
}

/// Price a buyer with `choice` pays given the per-vendor triggered tiers.
pub fn price_for_choice(market: &Market, tiers: &[usize], choice: &VendorTuple) -> Money {
    if let Some(s) = choice.single_vendor() {
        let tier = tiers[s.index()];
        if tier > 0 {
            return market.vendor(s).tiers[tier - 1].bundle_price;
        }
    }
    market.base_price(choice)
}

/// Best unilateral deviation at base prices: `(tuple, utility)`.
///
/// Unlisted tuples are worth zero, so none of them beats the all-null tuple,
/// which is also the lexicographically smallest candidate.
pub fn best_alternative(market: &Market, buyer: BuyerId) -> (VendorTuple, Money) {
    let mut best = (VendorTuple::all_null(market.item_types()), Money::ZERO);
    for (tuple, value) in &market.buyer(buyer).valuations {
        let u = *value - market.base_price(tuple);
        if u > best.1 || (u == best.1 && *tuple < best.0) {
            best = (tuple.clone(), u);
        }
    }
    best
}

/// Everything derived from one allocation, computed in a single pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub demand: Vec<DemandVector>,
    pub tiers: Vec<usize>,
    pub market_price: Vec<Money>,
    pub utility: Vec<Money>,
    pub alternative: Vec<Money>,
    pub surplus: Vec<Money>,
}

impl Outcome {
    pub fn evaluate(market: &Market, alloc: &Allocation) -> Result<Self, ModelError> {
        let demand = demand_vectors(market, alloc)?;
        let tiers: Vec<usize> = market
            .vendors
            .iter()
            .map(|v| triggered_tier(v, &demand[v.id.index()]))
            .collect();
        let mut market_price = Vec::with_capacity(market.buyer_count());
        let mut utility = Vec::with_capacity(market.buyer_count());
        let mut alternative = Vec::with_capacity(market.buyer_count());
        let mut surplus = Vec::with_capacity(market.buyer_count());
        for buyer in &market.buyers {
            let choice = alloc.of(buyer.id);
            let price = price_for_choice(market, &tiers, choice);
            let u = buyer.valuation(choice) - price;
            let alt = best_alternative(market, buyer.id).1;
            market_price.push(price);
            utility.push(u);
            alternative.push(alt);
            surplus.push(u - alt);
        }
        Ok(Outcome {
            demand,
            tiers,
            market_price,
            utility,
            alternative,
            surplus,
        })
    }

    pub fn is_triggered(&self, vendor: VendorId) -> bool {
        self.tiers[vendor.index()] > 0
    }

    pub fn social_welfare(&self) -> Money {
        self.utility.iter().sum()
    }
}

pub fn buyer_market_price(market: &Market, alloc: &Allocation, buyer: BuyerId) -> Result<Money, ModelError> {
    let tiers = triggered(market, alloc)?;
    Ok(price_for_choice(market, &tiers, alloc.of(buyer)))
}

pub fn utility(market: &Market, alloc: &Allocation, buyer: BuyerId) -> Result<Money, ModelError> {
    let price = buyer_market_price(market, alloc, buyer)?;
    Ok(market.buyer(buyer).valuation(alloc.of(buyer)) - price)
}

pub fn social_welfare(market: &Market, alloc: &Allocation) -> Result<Money, ModelError> {
    Ok(Outcome::evaluate(market, alloc)?.social_welfare())
}

pub fn surplus(market: &Market, alloc: &Allocation, buyer: BuyerId) -> Result<Money, ModelError> {
    Ok(utility(market, alloc, buyer)? - best_alternative(market, buyer).1)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BuyerGroup {
    /// Members in buyer id order.
    pub members: Vec<BuyerId>,
    /// Positive groups: total surplus. Negative groups: total subsidy needed.
    pub total: Money,
}

/// Positive-surplus discounted bundle buyers per vendor, and negative-surplus
/// buyers per purchased vendor set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupPartition {
    pub positive: BTreeMap<VendorId, BuyerGroup>,
    pub negative: BTreeMap<VendorSet, BuyerGroup>,
    pub surplus: Vec<Money>,
}

impl GroupPartition {
    pub fn from_outcome(alloc: &Allocation, outcome: &Outcome) -> Self {
        let mut gp = GroupPartition {
            surplus: outcome.surplus.clone(),
            ..Default::default()
        };
        for (i, (choice, &sigma)) in alloc.choice.iter().zip(&outcome.surplus).enumerate() {
            let buyer = BuyerId(i as u32);
            if sigma.is_positive() {
                if let Some(s) = choice.single_vendor().filter(|s| outcome.is_triggered(*s)) {
                    let group = gp.positive.entry(s).or_default();
                    group.members.push(buyer);
                    group.total += sigma;
                }
            } else if sigma.is_negative() {
                let group = gp.negative.entry(choice.vendor_set()).or_default();
                group.members.push(buyer);
                group.total -= sigma;
            }
        }
        gp
    }

    /// Total surplus of the positive group of `vendor` (zero if absent).
    pub fn positive_total(&self, vendor: VendorId) -> Money {
        self.positive.get(&vendor).map_or(Money::ZERO, |g| g.total)
    }

    pub fn negative_total(&self, set: &VendorSet) -> Money {
        self.negative.get(set).map_or(Money::ZERO, |g| g.total)
    }

    /// Total subsidy needed across all negative groups.
    pub fn total_needed(&self) -> Money {
        self.negative.values().map(|g| g.total).sum()
    }
}

pub fn group_partition(market: &Market, alloc: &Allocation) -> Result<GroupPartition, ModelError> {
    let outcome = Outcome::evaluate(market, alloc)?;
    Ok(GroupPartition::from_outcome(alloc, &outcome))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn m(v: i64) -> Money {
        Money(v)
    }

    #[test]
    fn fixture_e1_validates() {
        assert!(validate_market(&fixtures::fix_e1()).is_pass());
        assert!(validate_market(&fixtures::fix_e2()).is_pass());
    }

    #[test]
    fn rejects_non_decreasing_bundle_prices() {
        let mut market = Market::new(2);
        market.add_vendor(
            "s",
            vec![m(4), m(4)],
            vec![
                DiscountTier { thresholds: vec![2, 2], bundle_price: m(5) },
                DiscountTier { thresholds: vec![3, 3], bundle_price: m(6) },
            ],
        );
        let report = validate_market(&market);
        assert_eq!(
            report.violations,
            vec![Violation::BundlePriceNotDecreasing { vendor: "s".into(), tier: 2 }]
        );
    }

    #[test]
    fn rejects_bundle_above_base() {
        let mut market = Market::new(2);
        market.add_vendor(
            "s",
            vec![m(4), m(4)],
            vec![DiscountTier { thresholds: vec![1, 1], bundle_price: m(9) }],
        );
        let report = validate_market(&market);
        assert!(matches!(
            report.violations.as_slice(),
            [Violation::BundlePriceNotBelowBase { .. }]
        ));
    }

    #[test]
    fn rejects_structural_problems() {
        let mut market = Market::new(2);
        let s = market.add_vendor("s", vec![m(1), m(-1)], vec![]);
        market.add_vendor("s", vec![m(1), m(1)], vec![]);
        market.add_vendor(
            "t",
            vec![m(3), m(3)],
            vec![
                DiscountTier { thresholds: vec![2, 2], bundle_price: m(5) },
                DiscountTier { thresholds: vec![3, 1], bundle_price: m(4) },
            ],
        );
        market.add_buyer("b", vec![(VendorTuple(vec![s]), m(3))]);
        market.add_buyer("b", vec![(VendorTuple::all_null(2), m(1))]);
        let v = validate_market(&market).violations;
        assert!(v.contains(&Violation::NegativeBasePrice { vendor: "s".into(), item: 1 }));
        assert!(v.contains(&Violation::DuplicateVendor("s".into())));
        assert!(v.contains(&Violation::ThresholdsDecrease { vendor: "t".into(), tier: 2 }));
        assert!(v.contains(&Violation::DuplicateBuyer("b".into())));
        assert!(v.contains(&Violation::TupleArity { buyer: "b".into(), expected: 2, found: 1 }));
        assert!(v.contains(&Violation::NullTupleValued { buyer: "b".into() }));
    }

    #[test]
    fn demand_on_fixtures() {
        let market = fixtures::fix_e1();
        let demand = demand_vectors(&market, &fixtures::mu_a()).unwrap();
        assert_eq!(demand[1], DemandVector(vec![2, 2]));
        assert_eq!(demand[2], DemandVector(vec![0, 0]));

        let market = fixtures::fix_e2();
        let demand = demand_vectors(&market, &fixtures::mu_star()).unwrap();
        assert_eq!(demand[1], DemandVector(vec![3, 2]));
        assert_eq!(demand[2], DemandVector(vec![0, 1]));

        let empty = Market::new(2);
        let demand = demand_vectors(&empty, &Allocation::new(vec![])).unwrap();
        assert!(demand.iter().all(|d| d.0 == vec![0, 0]));
    }

    #[test]
    fn demand_rejects_unknown_vendor() {
        let market = fixtures::fix_e1();
        let alloc = Allocation::new(vec![
            VendorTuple(vec![VendorId(9), VendorId(1)]),
            VendorTuple::all_null(2),
        ]);
        assert!(matches!(
            demand_vectors(&market, &alloc),
            Err(ModelError::UnknownVendor { .. })
        ));
    }

    #[test]
    fn triggered_tiers() {
        let market = fixtures::fix_e1();
        assert_eq!(triggered(&market, &fixtures::mu_a()).unwrap(), vec![0, 1, 0]);
        let market = fixtures::fix_e2();
        assert_eq!(triggered(&market, &fixtures::mu_star()).unwrap(), vec![0, 1, 0]);

        let vendor = &fixtures::fix_e1().vendors()[1].clone();
        assert_eq!(triggered_tier(vendor, &DemandVector(vec![2, 1])), 0);
    }

    #[test]
    fn market_prices() {
        let market = fixtures::fix_e1();
        assert_eq!(buyer_market_price(&market, &fixtures::mu_a(), BuyerId(0)).unwrap(), m(5));
        let market = fixtures::fix_e2();
        assert_eq!(buyer_market_price(&market, &fixtures::mu_star(), BuyerId(2)).unwrap(), m(7));
        let alloc = Allocation::all_null(&market);
        assert_eq!(buyer_market_price(&market, &alloc, BuyerId(1)).unwrap(), m(0));
    }

    #[test]
    fn utilities_and_welfare() {
        let market = fixtures::fix_e1();
        let mu = fixtures::mu_a();
        assert_eq!(utility(&market, &mu, BuyerId(0)).unwrap(), m(5));
        assert_eq!(utility(&market, &mu, BuyerId(1)).unwrap(), m(1));
        assert_eq!(social_welfare(&market, &mu).unwrap(), m(6));
        assert_eq!(social_welfare(&fixtures::fix_e2(), &fixtures::mu_star()).unwrap(), m(9));
        assert_eq!(social_welfare(&market, &Allocation::all_null(&market)).unwrap(), m(0));
    }

    #[test]
    fn best_alternatives() {
        let market = fixtures::fix_e1();
        let s1 = VendorId(1);
        let s2 = VendorId(2);
        assert_eq!(best_alternative(&market, BuyerId(0)), (VendorTuple(vec![s1, s1]), m(2)));
        assert_eq!(best_alternative(&market, BuyerId(1)), (VendorTuple(vec![s2, s2]), m(2)));

        let mut cheap = Market::new(2);
        let s = cheap.add_vendor("s", vec![m(5), m(5)], vec![]);
        let b = cheap.add_buyer("b", vec![(VendorTuple::uniform(s, 2), m(7))]);
        assert_eq!(best_alternative(&cheap, b), (VendorTuple::all_null(2), m(0)));
    }

    #[test]
    fn best_alternative_tie_prefers_smallest_tuple() {
        let mut market = Market::new(1);
        let s = market.add_vendor("s", vec![m(2)], vec![]);
        let t = market.add_vendor("t", vec![m(1)], vec![]);
        let b = market.add_buyer(
            "b",
            vec![(VendorTuple(vec![t]), m(4)), (VendorTuple(vec![s]), m(5))],
        );
        assert_eq!(best_alternative(&market, b), (VendorTuple(vec![s]), m(3)));
    }

    #[test]
    fn surpluses() {
        let market = fixtures::fix_e1();
        let mu = fixtures::mu_a();
        assert_eq!(surplus(&market, &mu, BuyerId(0)).unwrap(), m(3));
        assert_eq!(surplus(&market, &mu, BuyerId(1)).unwrap(), m(-1));

        let market = fixtures::fix_e2();
        let outcome = Outcome::evaluate(&market, &fixtures::mu_star()).unwrap();
        assert_eq!(outcome.surplus, vec![m(4), m(4), m(-2)]);

        // b2 of fix_e1 alone on its best choice, nothing triggered
        let market = fixtures::fix_e1();
        let s2 = VendorTuple::uniform(VendorId(2), 2);
        let mu = Allocation::new(vec![VendorTuple::all_null(2), s2]);
        assert_eq!(surplus(&market, &mu, BuyerId(1)).unwrap(), m(0));
    }

    #[test]
    fn group_partitions() {
        let market = fixtures::fix_e1();
        let gp = group_partition(&market, &fixtures::mu_a()).unwrap();
        let s1 = VendorId(1);
        let s2 = VendorId(2);
        assert_eq!(gp.positive[&s1], BuyerGroup { members: vec![BuyerId(0)], total: m(3) });
        assert_eq!(
            gp.negative[&VendorSet::new([s1])],
            BuyerGroup { members: vec![BuyerId(1)], total: m(1) }
        );
        assert_eq!(gp.positive.len(), 1);
        assert_eq!(gp.negative.len(), 1);

        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        assert_eq!(
            gp.positive[&s1],
            BuyerGroup { members: vec![BuyerId(0), BuyerId(1)], total: m(8) }
        );
        assert_eq!(
            gp.negative[&VendorSet::new([s1, s2])],
            BuyerGroup { members: vec![BuyerId(2)], total: m(2) }
        );
    }

    #[test]
    fn zero_surplus_buyers_join_no_group() {
        let market = fixtures::fix_e1();
        let mu = Allocation::new(vec![VendorTuple::uniform(VendorId(1), 2), VendorTuple::uniform(VendorId(2), 2)]);
        let gp = group_partition(&market, &mu).unwrap();
        assert!(gp.positive.is_empty());
        assert!(gp.negative.is_empty());
    }

    #[test]
    fn cells_roundtrip_in_lexicographic_order() {
        let market = fixtures::fix_e2();
        assert_eq!(market.cell_count(), Some(9));
        let tuples: Vec<_> = (0..9).map(|i| market.tuple_of_cell(i)).collect();
        assert!(tuples.windows(2).all(|w| w[0] < w[1]));
        for (i, t) in tuples.iter().enumerate() {
            assert_eq!(market.cell_of_tuple(t), i);
        }
        assert_eq!(tuples[0], VendorTuple::all_null(2));
    }
}
