//! Independent certificates for an allocation, its transfers and its prices.
//!
//! Nothing here trusts solver intermediates. [`Audit`] recounts prices and
//! surpluses from the raw market.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{
    Allocation, BuyerGroup, BuyerId, GroupPartition, Market, ModelError, VendorId, VendorTuple,
};
use crate::money::{Money, MoneyQ};
use crate::transfers::{GroupTransfers, PriceVector, TransferMatrix};

/// A concrete violation: the relation that should hold and both sides of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub subject: String,
    pub expected: String,
    pub lhs: String,
    pub rhs: String,
}

impl Witness {
    fn new(subject: impl ToString, expected: &str, lhs: impl ToString, rhs: impl ToString) -> Self {
        Witness {
            subject: subject.to_string(),
            expected: expected.to_string(),
            lhs: lhs.to_string(),
            rhs: rhs.to_string(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub passed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub witnesses: Vec<Witness>,
}

impl Verdict {
    fn from_witnesses(witnesses: Vec<Witness>) -> Self {
        Verdict { passed: witnesses.is_empty(), witnesses }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Totals on both sides of the surplus cover inequality.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurplusTotals {
    /// Sum of all positive surpluses.
    pub positive: Money,
    /// Sum of all negative surpluses, negated.
    pub needed: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    pub totals: SurplusTotals,
    pub notes: Vec<String>,
}

impl CertificateReport {
    pub fn check(&self, name: &str) -> Option<&Verdict> {
        self.checks.iter().find(|c| c.check == name).map(|c| &c.verdict)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.verdict.passed)
    }
}

pub const STABILITY_NOTE: &str = "stability is certified as delta <= surplus for every buyer: a \
     deviating buyer pays base prices, and withholding any payment is assumed to collapse the \
     discount it subsidizes";

/// Market quantities recounted from scratch for one allocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Audit {
    pub triggered: Vec<bool>,
    pub market_price: Vec<Money>,
    pub surplus: Vec<Money>,
}

impl Audit {
    pub fn new(market: &Market, alloc: &Allocation) -> Result<Self, ModelError> {
        alloc.check(market)?;
        let c = market.item_types();
        let mut counts = vec![vec![0u32; c]; market.vendor_count() + 1];
        for tuple in &alloc.choice {
            for (k, s) in tuple.vendors().iter().enumerate() {
                counts[s.index()][k] += 1;
            }
        }
        // the bundle price of the last tier whose thresholds are all met
        let discount: Vec<Option<Money>> = market
            .vendors()
            .iter()
            .map(|v| {
                v.tiers
                    .iter()
                    .rfind(|t| t.thresholds.iter().zip(&counts[v.id.index()]).all(|(need, got)| got >= need))
                    .map(|t| t.bundle_price)
            })
            .collect();
        let base = |tuple: &VendorTuple| -> Money {
            tuple
                .vendors()
                .iter()
                .enumerate()
                .map(|(k, s)| market.vendor(*s).base_prices[k])
                .sum()
        };

        let mut market_price = Vec::with_capacity(market.buyer_count());
        let mut surplus = Vec::with_capacity(market.buyer_count());
        for buyer in market.buyers() {
            let choice = alloc.of(buyer.id);
            let first = choice.vendors().first().copied().unwrap_or(VendorId::NULL);
            let bundle = choice.vendors().iter().all(|s| *s == first) && !first.is_null();
            let price = match discount[first.index()] {
                Some(p) if bundle => p,
                _ => base(choice),
            };
            let value = buyer
                .valuations
                .iter()
                .find(|(t, _)| t == choice)
                .map_or(Money::ZERO, |(_, v)| *v);
            let best = buyer
                .valuations
                .iter()
                .map(|(t, v)| *v - base(t))
                .fold(Money::ZERO, Money::max);
            market_price.push(price);
            surplus.push(value - price - best);
        }
        Ok(Audit {
            triggered: discount.iter().map(Option::is_some).collect(),
            market_price,
            surplus,
        })
    }

    pub fn totals(&self) -> SurplusTotals {
        SurplusTotals {
            positive: self.surplus.iter().filter(|s| s.is_positive()).sum(),
            needed: -self.surplus.iter().filter(|s| s.is_negative()).sum::<Money>(),
        }
    }

    /// Group partition rebuilt from the recounted surpluses.
    pub fn groups(&self, alloc: &Allocation) -> GroupPartition {
        let mut positive: BTreeMap<VendorId, BuyerGroup> = BTreeMap::new();
        let mut negative = BTreeMap::new();
        for (i, (tuple, &sigma)) in alloc.choice.iter().zip(&self.surplus).enumerate() {
            let b = BuyerId(i as u32);
            if sigma.is_positive() {
                if let Some(s) = self.discounted_vendor(tuple) {
                    let g = positive.entry(s).or_default();
                    g.members.push(b);
                    g.total += sigma;
                }
            } else if sigma.is_negative() {
                let g: &mut BuyerGroup = negative.entry(tuple.vendor_set()).or_default();
                g.members.push(b);
                g.total -= sigma;
            }
        }
        GroupPartition { positive, negative, surplus: self.surplus.clone() }
    }

    fn discounted_vendor(&self, tuple: &VendorTuple) -> Option<VendorId> {
        tuple.single_vendor().filter(|s| self.triggered[s.index()])
    }
}

fn buyer_name(market: &Market, b: BuyerId) -> String {
    market.buyer(b).name.clone()
}

/// Every buyer weakly prefers its price to deviating: `delta <= surplus`.
pub fn check_stable(market: &Market, alloc: &Allocation, prices: &PriceVector) -> Result<Verdict, ModelError> {
    let audit = Audit::new(market, alloc)?;
    let witnesses = market
        .buyer_ids()
        .filter_map(|b| {
            let delta = &prices.of(b).delta;
            let sigma = audit.surplus[b.index()].to_q();
            (*delta > sigma).then(|| Witness::new(buyer_name(market, b), "delta <= surplus", delta, sigma))
        })
        .collect();
    Ok(Verdict::from_witnesses(witnesses))
}

/// Only positive-surplus discounted bundle buyers pay, and only if some
/// negative-surplus buyer also buys from that vendor.
pub fn check_rational_prices(
    market: &Market,
    alloc: &Allocation,
    prices: &PriceVector,
) -> Result<Verdict, ModelError> {
    let audit = Audit::new(market, alloc)?;
    let mut witnesses = Vec::new();
    for b in market.buyer_ids() {
        let delta = &prices.of(b).delta;
        if !delta.is_positive() {
            continue;
        }
        let name = buyer_name(market, b);
        let sigma = audit.surplus[b.index()];
        if !sigma.is_positive() {
            witnesses.push(Witness::new(&name, "surplus > 0 for a paying buyer", sigma, 0));
            continue;
        }
        let tuple = alloc.of(b);
        let Some(s) = audit.discounted_vendor(tuple) else {
            witnesses.push(Witness::new(&name, "paying buyer holds a discounted bundle", tuple_label(market, tuple), "single triggered vendor"));
            continue;
        };
        let helped = market
            .buyer_ids()
            .any(|o| audit.surplus[o.index()].is_negative() && alloc.of(o).contains(s));
        if !helped {
            witnesses.push(Witness::new(
                &name,
                "some negative-surplus buyer buys from the paying vendor",
                &market.vendor(s).name,
                "none",
            ));
        }
    }
    Ok(Verdict::from_witnesses(witnesses))
}

/// Positive-surplus buyers with the same tuple pay in proportion to their surplus.
/// Checked by cross-multiplication against the first such buyer of each tuple.
pub fn check_fair(market: &Market, alloc: &Allocation, prices: &PriceVector) -> Result<Verdict, ModelError> {
    let audit = Audit::new(market, alloc)?;
    let mut first: BTreeMap<&VendorTuple, BuyerId> = BTreeMap::new();
    let mut witnesses = Vec::new();
    for b in market.buyer_ids() {
        if !audit.surplus[b.index()].is_positive() {
            continue;
        }
        let r = *first.entry(alloc.of(b)).or_insert(b);
        if r == b {
            continue;
        }
        let lhs = &prices.of(b).delta * &audit.surplus[r.index()].to_q();
        let rhs = &prices.of(r).delta * &audit.surplus[b.index()].to_q();
        if lhs != rhs {
            witnesses.push(Witness::new(
                format!("{},{}", buyer_name(market, b), buyer_name(market, r)),
                "delta_b * surplus_r == delta_r * surplus_b",
                lhs,
                rhs,
            ));
        }
    }
    Ok(Verdict::from_witnesses(witnesses))
}

/// Vendors stay within budget and every group is covered exactly, without cross-transfers.
pub fn check_group_condition(gp: &GroupPartition, gt: &GroupTransfers) -> Verdict {
    let mut witnesses = Vec::new();
    let outgoing = gt.outgoing_totals();
    for (s, paid) in &outgoing {
        let budget = gp.positive_total(*s);
        if *paid > budget {
            witnesses.push(Witness::new(s, "paid <= positive group surplus", paid, budget));
        }
    }
    let incoming = gt.incoming_totals();
    let sets = gp.negative.keys().chain(incoming.keys()).collect::<std::collections::BTreeSet<_>>();
    for x in sets {
        let got = incoming.get(x).copied().unwrap_or(Money::ZERO);
        let need = gp.negative_total(x);
        if got != need {
            witnesses.push(Witness::new(x, "received == needed", got, need));
        }
    }
    for (s, x, m) in gt.iter() {
        if !x.contains(s) {
            witnesses.push(Witness::new(format!("{s}->{x}"), "cross-transfer == 0", m, 0));
        }
    }
    Verdict::from_witnesses(witnesses)
}

/// Each buyer's delta equals what it pays minus what it receives.
pub fn check_p_consistent(prices: &PriceVector, t: &TransferMatrix) -> Verdict {
    let net = t.net_outflow(prices.prices.len());
    let witnesses = prices
        .prices
        .iter()
        .zip(net)
        .enumerate()
        .filter(|(_, (p, n))| p.delta != *n)
        .map(|(i, (p, n))| Witness::new(BuyerId(i as u32), "delta == paid - received", &p.delta, n))
        .collect();
    Verdict::from_witnesses(witnesses)
}

pub fn check_budget_balance(prices: &PriceVector) -> Verdict {
    let sum = prices.delta_sum();
    if sum.is_zero() {
        Verdict::from_witnesses(vec![])
    } else {
        Verdict::from_witnesses(vec![Witness::new("all buyers", "sum of deltas == 0", sum, 0)])
    }
}

/// Same total paid per vendor and received per vendor set.
pub fn check_equivalent(a: &GroupTransfers, b: &GroupTransfers) -> Verdict {
    let mut witnesses = Vec::new();
    let (oa, ob) = (a.outgoing_totals(), b.outgoing_totals());
    for s in oa.keys().chain(ob.keys()).collect::<std::collections::BTreeSet<_>>() {
        let (x, y) = (oa.get(s).copied().unwrap_or_default(), ob.get(s).copied().unwrap_or_default());
        if x != y {
            witnesses.push(Witness::new(s, "outgoing totals equal", x, y));
        }
    }
    let (ia, ib) = (a.incoming_totals(), b.incoming_totals());
    for x in ia.keys().chain(ib.keys()).collect::<std::collections::BTreeSet<_>>() {
        let (p, q) = (ia.get(x).copied().unwrap_or_default(), ib.get(x).copied().unwrap_or_default());
        if p != q {
            witnesses.push(Witness::new(x, "incoming totals equal", p, q));
        }
    }
    Verdict::from_witnesses(witnesses)
}

/// Stored market prices match a fresh recount and final = market + delta.
pub fn check_price_arithmetic(
    market: &Market,
    alloc: &Allocation,
    prices: &PriceVector,
) -> Result<Verdict, ModelError> {
    let audit = Audit::new(market, alloc)?;
    let mut witnesses = Vec::new();
    for b in market.buyer_ids() {
        let p = prices.of(b);
        let name = buyer_name(market, b);
        let expected = audit.market_price[b.index()];
        if p.market_price != expected {
            witnesses.push(Witness::new(&name, "market price == recomputed", p.market_price, expected));
        }
        let sum = p.market_price.to_q() + &p.delta;
        if p.final_price != sum {
            witnesses.push(Witness::new(&name, "final price == market price + delta", &p.final_price, sum));
        }
    }
    Ok(Verdict::from_witnesses(witnesses))
}

/// Positive surplus covers all negative surplus.
pub fn check_surplus_cover(totals: &SurplusTotals) -> Verdict {
    if totals.positive >= totals.needed {
        Verdict::from_witnesses(vec![])
    } else {
        Verdict::from_witnesses(vec![Witness::new(
            "all buyers",
            "positive surplus >= needed subsidy",
            totals.positive,
            totals.needed,
        )])
    }
}

/// Each paying member of a positive group pays its surplus share of the
/// group's outgoing transfers.
pub fn check_transfer_shares(gp: &GroupPartition, gt: &GroupTransfers, t: &TransferMatrix) -> Verdict {
    let mut paid: BTreeMap<BuyerId, MoneyQ> = BTreeMap::new();
    for (a, _, q) in t.iter() {
        *paid.entry(a).or_default() += q;
    }
    let mut witnesses = Vec::new();
    for group in gp.positive.iter().map(|(s, g)| (gt.outgoing(*s), g)) {
        let (out, g) = group;
        for b in &g.members {
            let expected = gp.surplus[b.index()].to_q() * out.to_q() / g.total.to_q();
            let got = paid.remove(b).unwrap_or_default();
            if got != expected {
                witnesses.push(Witness::new(b, "paid == surplus * group outgoing / group surplus", got, expected));
            }
        }
    }
    for (b, q) in paid {
        witnesses.push(Witness::new(b, "only positive group members pay", q, 0));
    }
    Verdict::from_witnesses(witnesses)
}

/// Runs every check on a full solution. Group partitions and surpluses are
/// rebuilt from the market, not taken from the solver.
pub fn certify(
    market: &Market,
    alloc: &Allocation,
    gt: &GroupTransfers,
    t: &TransferMatrix,
    prices: &PriceVector,
) -> Result<CertificateReport, ModelError> {
    let audit = Audit::new(market, alloc)?;
    if prices.prices.len() != market.buyer_count() {
        return Err(ModelError::BuyerCount {
            expected: market.buyer_count(),
            found: prices.prices.len(),
        });
    }
    let gp = audit.groups(alloc);
    let totals = audit.totals();
    let checks = vec![
        ("stable", check_stable(market, alloc, prices)?),
        ("rational_prices", check_rational_prices(market, alloc, prices)?),
        ("fair", check_fair(market, alloc, prices)?),
        ("p_consistent", check_p_consistent(prices, t)),
        ("group_condition", check_group_condition(&gp, gt)),
        ("budget_balance", check_budget_balance(prices)),
        ("price_arithmetic", check_price_arithmetic(market, alloc, prices)?),
        ("transfer_shares", check_transfer_shares(&gp, gt, t)),
        ("surplus_cover", check_surplus_cover(&totals)),
    ];
    let checks: Vec<CheckResult> = checks
        .into_iter()
        .map(|(check, verdict)| CheckResult { check: check.to_string(), verdict })
        .collect();
    Ok(CertificateReport {
        passed: checks.iter().all(|c| c.verdict.passed),
        checks,
        totals,
        notes: vec![STABILITY_NOTE.to_string()],
    })
}

fn tuple_label(market: &Market, tuple: &VendorTuple) -> String {
    let names: Vec<&str> = tuple.vendors().iter().map(|s| market.vendor(*s).name.as_str()).collect();
    format!("({})", names.join(","))
}
