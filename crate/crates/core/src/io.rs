//! JSON instance and solution documents.
//!
//! Vendors and buyers are referenced by their string ids; `"null"` is the
//! reserved id of the null vendor. Unknown fields are rejected.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    validate_market, Allocation, BuyerId, DiscountTier, Market, VendorId, VendorSet, VendorTuple, Violation,
    NULL_VENDOR_NAME,
};
use crate::money::{Money, MoneyQ};
use crate::pipeline::{Method, Solution};
use crate::transfers::{BuyerPrice, GroupTransfers, PriceVector, TransferMatrix};
use crate::verify::CertificateReport;

pub const INSTANCE_SCHEMA: &str = "gbb-market/1";
pub const SOLUTION_SCHEMA: &str = "gbb-solution/1";

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {expected:?}")]
    Schema { found: String, expected: &'static str },
    #[error("{context}: unknown vendor {name:?}")]
    UnknownVendor { context: String, name: String },
    #[error("invalid market:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Violation>),
    #[error("solution does not match the instance: {0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierDoc {
    pub thresholds: Vec<u32>,
    pub price: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VendorDoc {
    pub id: String,
    pub base_prices: Vec<Money>,
    #[serde(default)]
    pub discounts: Vec<TierDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationDoc {
    pub choice: Vec<String>,
    pub value: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerDoc {
    pub id: String,
    pub valuations: Vec<ValuationDoc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDocument {
    pub schema: String,
    pub item_types: usize,
    pub vendors: Vec<VendorDoc>,
    pub buyers: Vec<BuyerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

fn check_schema(found: &str, expected: &'static str) -> Result<(), DocumentError> {
    if found == expected {
        Ok(())
    } else {
        Err(DocumentError::Schema { found: found.to_string(), expected })
    }
}

fn tuple_names(market: &Market, tuple: &VendorTuple) -> Vec<String> {
    tuple.vendors().iter().map(|s| market.vendor(*s).name.clone()).collect()
}

fn lookup_tuple(market: &Market, names: &[String], context: &str) -> Result<VendorTuple, DocumentError> {
    names
        .iter()
        .map(|n| {
            market.vendor_by_name(n).ok_or_else(|| DocumentError::UnknownVendor {
                context: context.to_string(),
                name: n.clone(),
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map(VendorTuple)
}

impl InstanceDocument {
    pub fn from_market(market: &Market, seed: Option<u64>) -> Self {
        InstanceDocument {
            schema: INSTANCE_SCHEMA.to_string(),
            item_types: market.item_types(),
            vendors: market
                .vendors()
                .iter()
                .filter(|v| !v.id.is_null())
                .map(|v| VendorDoc {
                    id: v.name.clone(),
                    base_prices: v.base_prices.clone(),
                    discounts: v
                        .tiers
                        .iter()
                        .map(|t| TierDoc { thresholds: t.thresholds.clone(), price: t.bundle_price })
                        .collect(),
                })
                .collect(),
            buyers: market
                .buyers()
                .iter()
                .map(|b| BuyerDoc {
                    id: b.name.clone(),
                    valuations: b
                        .valuations
                        .iter()
                        .map(|(t, v)| ValuationDoc { choice: tuple_names(market, t), value: *v })
                        .collect(),
                })
                .collect(),
            seed,
        }
    }

    /// Builds and validates the market.
    pub fn to_market(&self) -> Result<Market, DocumentError> {
        check_schema(&self.schema, INSTANCE_SCHEMA)?;
        let mut market = Market::new(self.item_types);
        // a vendor named "null" would shadow the null vendor in lookups
        let reserved: Vec<Violation> = self
            .vendors
            .iter()
            .filter(|v| v.id == NULL_VENDOR_NAME)
            .map(|v| Violation::ReservedVendorName(v.id.clone()))
            .collect();
        if !reserved.is_empty() {
            return Err(DocumentError::Invalid(reserved));
        }
        for v in &self.vendors {
            let tiers = v
                .discounts
                .iter()
                .map(|t| DiscountTier { thresholds: t.thresholds.clone(), bundle_price: t.price })
                .collect();
            market.add_vendor(v.id.clone(), v.base_prices.clone(), tiers);
        }
        for b in &self.buyers {
            let valuations = b
                .valuations
                .iter()
                .map(|val| Ok((lookup_tuple(&market, &val.choice, &format!("buyer {:?}", b.id))?, val.value)))
                .collect::<Result<Vec<_>, DocumentError>>()?;
            market.add_buyer(b.id.clone(), valuations);
        }
        let report = validate_market(&market);
        if report.is_pass() {
            Ok(market)
        } else {
            Err(DocumentError::Invalid(report.violations))
        }
    }
}

pub fn parse_instance(text: &str) -> Result<(Market, Option<u64>), DocumentError> {
    let doc: InstanceDocument = serde_json::from_str(text)?;
    let market = doc.to_market()?;
    Ok((market, doc.seed))
}

/// Pretty-printed JSON with a trailing newline.
pub fn to_pretty_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents always serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssignmentDoc {
    pub buyer: String,
    pub choice: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyerRowDoc {
    pub id: String,
    pub market_price: Money,
    pub delta: MoneyQ,
    pub final_price: MoneyQ,
    /// Value minus final price.
    pub utility: MoneyQ,
    pub surplus: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupTransferDoc {
    pub vendor: String,
    pub set: Vec<String>,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferDoc {
    pub from: String,
    pub to: String,
    pub amount: MoneyQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDoc {
    /// `"partitions"`, `"brute_force"` or `"given"`.
    pub method: String,
    /// Partitions (or allocations, for brute force) in the search space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_space: Option<u128>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluated: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Wall-clock milliseconds per stage; only written on request.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timings_ms: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionDocument {
    pub schema: String,
    pub allocation: Vec<AssignmentDoc>,
    pub social_welfare: Money,
    pub buyers: Vec<BuyerRowDoc>,
    pub group_transfers: Vec<GroupTransferDoc>,
    pub transfers: Vec<TransferDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
    pub solver: SolverDoc,
}

/// A solution read back against its instance.
#[derive(Debug, Clone)]
pub struct LoadedSolution {
    pub allocation: Allocation,
    pub group_transfers: GroupTransfers,
    pub transfers: TransferMatrix,
    pub prices: PriceVector,
    pub social_welfare: Money,
}

impl SolutionDocument {
    pub fn from_solution(market: &Market, sol: &Solution, seed: Option<u64>, timings: bool) -> Self {
        let st = &sol.stabilized;
        let buyer_name = |b: BuyerId| market.buyer(b).name.clone();
        let vendor_name = |s: VendorId| market.vendor(s).name.clone();
        let allocation = market
            .buyer_ids()
            .map(|b| AssignmentDoc { buyer: buyer_name(b), choice: tuple_names(market, st.allocation.of(b)) })
            .collect();
        let buyers = market
            .buyers()
            .iter()
            .map(|buyer| {
                let p = st.prices.of(buyer.id);
                let value = buyer.valuation(st.allocation.of(buyer.id)).to_q();
                BuyerRowDoc {
                    id: buyer.name.clone(),
                    market_price: p.market_price,
                    delta: p.delta.clone(),
                    final_price: p.final_price.clone(),
                    utility: value - &p.final_price,
                    surplus: st.outcome.surplus[buyer.id.index()],
                }
            })
            .collect();
        let group_transfers = st
            .group_transfers
            .iter()
            .map(|(s, x, m)| GroupTransferDoc {
                vendor: vendor_name(s),
                set: x.members().iter().map(|v| vendor_name(*v)).collect(),
                amount: m,
            })
            .collect();
        let transfers = st
            .transfers
            .iter()
            .map(|(a, b, q)| TransferDoc { from: buyer_name(a), to: buyer_name(b), amount: q.clone() })
            .collect();
        let method = match sol.method {
            Method::Partitions => "partitions",
            Method::BruteForce => "brute_force",
            Method::Given => "given",
        };
        let timings_ms = timings.then(|| {
            sol.timings
                .iter()
                .map(|(k, d)| (k.to_string(), d.as_secs_f64() * 1000.0))
                .collect()
        });
        SolutionDocument {
            schema: SOLUTION_SCHEMA.to_string(),
            allocation,
            social_welfare: sol.welfare(),
            buyers,
            group_transfers,
            transfers,
            certificate: st.certificate.clone(),
            solver: SolverDoc {
                method: method.to_string(),
                search_space: sol.search_space,
                evaluated: sol.evaluated,
                seed,
                timings_ms,
            },
        }
    }

    /// Resolves names against `market`. Buyer lists must match the instance
    /// exactly, in order.
    pub fn load(&self, market: &Market) -> Result<LoadedSolution, DocumentError> {
        check_schema(&self.schema, SOLUTION_SCHEMA)?;
        let names: Vec<&str> = market.buyers().iter().map(|b| b.name.as_str()).collect();
        let in_alloc: Vec<&str> = self.allocation.iter().map(|a| a.buyer.as_str()).collect();
        let in_rows: Vec<&str> = self.buyers.iter().map(|r| r.id.as_str()).collect();
        if in_alloc != names || in_rows != names {
            return Err(DocumentError::Mismatch(format!(
                "instance buyers {names:?}, solution buyers {in_alloc:?}"
            )));
        }
        let index: HashMap<&str, BuyerId> = market.buyers().iter().map(|b| (b.name.as_str(), b.id)).collect();
        let buyer = |name: &str| {
            index
                .get(name)
                .copied()
                .ok_or_else(|| DocumentError::Mismatch(format!("unknown buyer {name:?}")))
        };

        let choice = self
            .allocation
            .iter()
            .map(|a| {
                let t = lookup_tuple(market, &a.choice, &format!("allocation of {:?}", a.buyer))?;
                if t.len() != market.item_types() {
                    return Err(DocumentError::Mismatch(format!("choice of {:?} has wrong arity", a.buyer)));
                }
                Ok(t)
            })
            .collect::<Result<Vec<_>, _>>()?;

        let mut group_transfers = GroupTransfers::new();
        for g in &self.group_transfers {
            let ctx = "group transfers";
            let vendor = market.vendor_by_name(&g.vendor).ok_or_else(|| DocumentError::UnknownVendor {
                context: ctx.to_string(),
                name: g.vendor.clone(),
            })?;
            let set = VendorSet::new(lookup_tuple(market, &g.set, ctx)?.0);
            if g.amount.is_negative() {
                return Err(DocumentError::Mismatch("negative group transfer".to_string()));
            }
            group_transfers.add(vendor, set, g.amount);
        }

        let mut transfers = TransferMatrix::new();
        for t in &self.transfers {
            let (a, b) = (buyer(&t.from)?, buyer(&t.to)?);
            if a == b || t.amount.is_negative() {
                return Err(DocumentError::Mismatch(format!("bad transfer {:?} -> {:?}", t.from, t.to)));
            }
            transfers.add(a, b, t.amount.clone());
        }

        let prices = PriceVector {
            prices: self
                .buyers
                .iter()
                .map(|r| BuyerPrice {
                    market_price: r.market_price,
                    delta: r.delta.clone(),
                    final_price: r.final_price.clone(),
                })
                .collect(),
        };
        Ok(LoadedSolution {
            allocation: Allocation::new(choice),
            group_transfers,
            transfers,
            prices,
            social_welfare: self.social_welfare,
        })
    }
}

pub fn parse_solution(text: &str) -> Result<SolutionDocument, DocumentError> {
    Ok(serde_json::from_str(text)?)
}
