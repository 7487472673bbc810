//! Seeded random markets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{DiscountTier, Market, VendorId, VendorTuple};
use crate::money::Money;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GenParams {
    pub buyers: u32,
    pub vendors: u32,
    pub items: usize,
    /// Base prices are drawn from `1..=max_value`, valuations from `1..=items * max_value`.
    pub max_value: i64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("{0} must be positive")]
    NotPositive(&'static str),
}

/// Probability that a buyer values a given vendor's full bundle.
const BUNDLE_RATE: f64 = 0.7;
/// Probability of one extra mixed-vendor valuation per buyer.
const MIXED_RATE: f64 = 0.3;

/// Thresholds are capped at `max(buyers, 1)` so every tier is reachable.
pub fn generate(params: &GenParams) -> Result<Market, GenError> {
    if params.vendors == 0 {
        return Err(GenError::NotPositive("vendors"));
    }
    if params.items == 0 {
        return Err(GenError::NotPositive("items"));
    }
    if params.max_value <= 0 {
        return Err(GenError::NotPositive("max value"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let c = params.items;
    let cap = params.buyers.max(1);
    let mut market = Market::new(c);

    for i in 1..=params.vendors {
        let base: Vec<Money> = (0..c).map(|_| Money(rng.gen_range(1..=params.max_value))).collect();
        let base_sum: i64 = base.iter().map(|m| m.amount()).sum();
        let mut tiers = Vec::new();
        let first: Vec<u32> = (0..c).map(|_| rng.gen_range(1..=cap)).collect();
        let p1 = rng.gen_range(base_sum / 2..base_sum);
        tiers.push(DiscountTier { thresholds: first.clone(), bundle_price: Money(p1) });
        let open: Vec<usize> = (0..c).filter(|&k| first[k] < cap).collect();
        if p1 > 0 && !open.is_empty() && rng.gen_bool(0.5) {
            let mut second = first;
            let k = *open.choose(&mut rng).expect("nonempty");
            second[k] += 1;
            for t in second.iter_mut() {
                *t = rng.gen_range(*t..=cap);
            }
            let p2 = rng.gen_range(p1 / 2..p1);
            tiers.push(DiscountTier { thresholds: second, bundle_price: Money(p2) });
        }
        market.add_vendor(format!("s{i}"), base, tiers);
    }

    let vendor_ids: Vec<VendorId> = market.vendor_ids().collect();
    let value_cap = params.max_value * c as i64;
    for j in 1..=params.buyers {
        let mut valuations: Vec<(VendorTuple, Money)> = Vec::new();
        for &s in &vendor_ids[1..] {
            if rng.gen_bool(BUNDLE_RATE) {
                valuations.push((VendorTuple::uniform(s, c), Money(rng.gen_range(1..=value_cap))));
            }
        }
        if rng.gen_bool(MIXED_RATE) {
            let tuple = VendorTuple((0..c).map(|_| *vendor_ids.choose(&mut rng).expect("nonempty")).collect());
            let value = Money(rng.gen_range(1..=value_cap));
            if !tuple.vendors().iter().all(|s| s.is_null()) && !valuations.iter().any(|(t, _)| *t == tuple) {
                valuations.push((tuple, value));
            }
        }
        market.add_buyer(format!("b{j}"), valuations);
    }
    Ok(market)
}
