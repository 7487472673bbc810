//! The two bundled reference markets.

use crate::model::{Allocation, DiscountTier, Market, VendorId, VendorTuple};
use crate::money::Money;

const S1: VendorId = VendorId(1);
const S2: VendorId = VendorId(2);

fn pair(a: VendorId, b: VendorId) -> VendorTuple {
    VendorTuple(vec![a, b])
}

/// Two buyers who both prefer s1's bundle once its (2,2) tier is met.
pub fn fix_e1() -> Market {
    let mut market = Market::new(2);
    market.add_vendor(
        "s1",
        vec![Money(4), Money(4)],
        vec![DiscountTier { thresholds: vec![2, 2], bundle_price: Money(5) }],
    );
    market.add_vendor("s2", vec![Money(3), Money(3)], vec![]);
    market.add_buyer("b1", vec![(pair(S1, S1), Money(10)), (pair(S2, S2), Money(6))]);
    market.add_buyer("b2", vec![(pair(S1, S1), Money(6)), (pair(S2, S2), Money(8))]);
    market
}

/// Welfare-maximizing allocation of [`fix_e1`]: both buyers on (s1, s1).
pub fn mu_a() -> Allocation {
    Allocation::new(vec![pair(S1, S1), pair(S1, S1)])
}

/// Three buyers; the third buys item 1 from s1 to push its demand to (3,2).
pub fn fix_e2() -> Market {
    let mut market = Market::new(2);
    market.add_vendor(
        "s1",
        vec![Money(4), Money(4)],
        vec![DiscountTier { thresholds: vec![3, 2], bundle_price: Money(4) }],
    );
    market.add_vendor("s2", vec![Money(3), Money(3)], vec![]);
    market.add_buyer("b1", vec![(pair(S1, S1), Money(9))]);
    market.add_buyer("b2", vec![(pair(S1, S1), Money(9))]);
    market.add_buyer("b3", vec![(pair(S1, S2), Money(6)), (pair(S2, S2), Money(7))]);
    market
}

/// Welfare-maximizing allocation of [`fix_e2`].
pub fn mu_star() -> Allocation {
    Allocation::new(vec![pair(S1, S1), pair(S1, S1), pair(S1, S2)])
}
