//! Transfers that stabilize an allocation.
//!
//! Group transfers move surplus from discounted bundle buyers of a vendor to
//! the negative-surplus buyers who help trigger that discount. They are found
//! as a max flow, then split into fair per-buyer transfers and prices.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use thiserror::Error;

use crate::flow::{max_flow, Flow, FlowError, FlowNetwork};
use crate::model::{
    Allocation, BuyerId, GroupPartition, Market, ModelError, Outcome, VendorId, VendorSet,
};
use crate::money::{Money, MoneyQ};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransferError {
    #[error("group {set} cannot be stabilized: short by {deficit}")]
    Unstabilizable { set: VendorSet, deficit: Money },
    #[error("offers total {offered}, requests total {requested}")]
    SumMismatch { offered: Box<MoneyQ>, requested: Box<MoneyQ> },
    #[error("negative amount {0} in a transfer schedule")]
    NegativeAmount(MoneyQ),
    #[error("transfer from {vendor} to group {set} is a cross-transfer")]
    CrossTransfer { vendor: VendorId, set: VendorSet },
    #[error("group transfers from {vendor} exceed its available surplus")]
    Overdrawn { vendor: VendorId },
    #[error("group {set} receives transfers but has nothing to cover")]
    UnneededTransfer { set: VendorSet },
    #[error("price deltas sum to {0}, expected 0")]
    NonZeroSum(MoneyQ),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Total transfer from each positive group to each negative group,
/// keyed by `(paying vendor, receiving vendor set)`. Zero entries are not stored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct GroupTransfers {
    entries: BTreeMap<(VendorId, VendorSet), Money>,
}

impl GroupTransfers {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, vendor: VendorId, set: &VendorSet) -> Money {
        self.entries
            .get(&(vendor, set.clone()))
            .copied()
            .unwrap_or(Money::ZERO)
    }

    pub fn set(&mut self, vendor: VendorId, set: VendorSet, amount: Money) {
        assert!(!amount.is_negative(), "group transfers are nonnegative");
        if amount == Money::ZERO {
            self.entries.remove(&(vendor, set));
        } else {
            self.entries.insert((vendor, set), amount);
        }
    }

    pub fn add(&mut self, vendor: VendorId, set: VendorSet, amount: Money) {
        let current = self.get(vendor, &set);
        self.set(vendor, set, current + amount);
    }

    /// Nonzero entries in `(vendor, set)` order.
    pub fn iter(&self) -> impl Iterator<Item = (VendorId, &VendorSet, Money)> + '_ {
        self.entries.iter().map(|((s, x), m)| (*s, x, *m))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total paid by the positive group of `vendor`.
    pub fn outgoing(&self, vendor: VendorId) -> Money {
        self.iter().filter(|(s, _, _)| *s == vendor).map(|(_, _, m)| m).sum()
    }

    /// Total received by the negative group of `set`.
    pub fn incoming(&self, set: &VendorSet) -> Money {
        self.iter().filter(|(_, x, _)| *x == set).map(|(_, _, m)| m).sum()
    }

    pub fn outgoing_totals(&self) -> BTreeMap<VendorId, Money> {
        let mut out = BTreeMap::new();
        for (s, _, m) in self.iter() {
            *out.entry(s).or_insert(Money::ZERO) += m;
        }
        out
    }

    pub fn incoming_totals(&self) -> BTreeMap<VendorSet, Money> {
        let mut out = BTreeMap::new();
        for (_, x, m) in self.iter() {
            *out.entry(x.clone()).or_insert(Money::ZERO) += m;
        }
        out
    }

    /// Sum of all cross-transfers (payer not in the receiving set).
    pub fn cross_mass(&self) -> Money {
        self.iter().filter(|(s, x, _)| !x.contains(*s)).map(|(_, _, m)| m).sum()
    }

    pub fn is_rational(&self) -> bool {
        self.cross_mass() == Money::ZERO
    }
}

impl FromIterator<(VendorId, VendorSet, Money)> for GroupTransfers {
    fn from_iter<I: IntoIterator<Item = (VendorId, VendorSet, Money)>>(iter: I) -> Self {
        let mut gt = GroupTransfers::new();
        for (s, x, m) in iter {
            gt.add(s, x, m);
        }
        gt
    }
}

/// Buyer-to-buyer transfers. Only positive amounts are stored, one direction per pair.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransferMatrix {
    entries: BTreeMap<(BuyerId, BuyerId), MoneyQ>,
}

impl TransferMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `amount` from `payer` to `payee`. Zero amounts are ignored.
    pub fn add(&mut self, payer: BuyerId, payee: BuyerId, amount: MoneyQ) {
        assert!(payer != payee, "self-transfer");
        assert!(!amount.is_negative(), "negative transfer");
        if amount.is_zero() {
            return;
        }
        *self.entries.entry((payer, payee)).or_default() += amount;
    }

    pub fn get(&self, payer: BuyerId, payee: BuyerId) -> MoneyQ {
        self.entries.get(&(payer, payee)).cloned().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BuyerId, BuyerId, &MoneyQ)> + '_ {
        self.entries.iter().map(|((a, b), q)| (*a, *b, q))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn merge(&mut self, other: TransferMatrix) {
        for ((a, b), q) in other.entries {
            self.add(a, b, q);
        }
    }

    /// Paid minus received, per buyer, for `buyers` buyers.
    pub fn net_outflow(&self, buyers: usize) -> Vec<MoneyQ> {
        let mut net = vec![MoneyQ::zero(); buyers];
        for ((a, b), q) in &self.entries {
            net[a.index()] += q;
            net[b.index()] -= q;
        }
        net
    }

    pub fn paid_by(&self, buyer: BuyerId) -> MoneyQ {
        self.iter().filter(|(a, _, _)| *a == buyer).map(|(_, _, q)| q).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuyerPrice {
    pub market_price: Money,
    pub delta: MoneyQ,
    pub final_price: MoneyQ,
}

/// Final prices, indexed by buyer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceVector {
    pub prices: Vec<BuyerPrice>,
}

impl PriceVector {
    pub fn from_deltas(market_prices: &[Money], deltas: Vec<MoneyQ>) -> Self {
        let prices = market_prices
            .iter()
            .zip(deltas)
            .map(|(&market_price, delta)| BuyerPrice {
                final_price: market_price.to_q() + &delta,
                market_price,
                delta,
            })
            .collect();
        PriceVector { prices }
    }

    pub fn of(&self, buyer: BuyerId) -> &BuyerPrice {
        &self.prices[buyer.index()]
    }

    pub fn delta_sum(&self) -> MoneyQ {
        self.prices.iter().map(|p| &p.delta).sum()
    }
}

/// Provenance of an edge in the group-transfer network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransferTag {
    /// Source to the node of a negative group.
    Need(VendorSet),
    /// Negative group `set` to the positive group of `vendor` (`vendor` in `set`).
    Share { vendor: VendorId, set: VendorSet },
    /// Positive group of `vendor` to the sink.
    Budget(VendorId),
}

impl fmt::Display for TransferTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TransferTag::Need(x) => write!(f, "need:{x}"),
            TransferTag::Share { vendor, set } => write!(f, "share:{vendor}:{set}"),
            TransferTag::Budget(s) => write!(f, "budget:{s}"),
        }
    }
}

/// Network whose feasible flows are exactly the rational group transfers:
/// source → group-x node (cap: subsidy needed by x), x → vendor s for each
/// s in x (same cap), vendor s → sink (cap: surplus of s's positive group).
pub fn group_transfer_network(market: &Market, gp: &GroupPartition) -> FlowNetwork<TransferTag> {
    let source = 0;
    let sink = 1;
    let mut net = FlowNetwork::new(2, source, sink);
    let vendor_nodes: Vec<usize> = market.vendor_ids().map(|_| net.add_node()).collect();
    for (set, group) in &gp.negative {
        let node = net.add_node();
        net.add_edge(source, node, group.total.amount(), 0, TransferTag::Need(set.clone()));
        for &s in set.members() {
            net.add_edge(
                node,
                vendor_nodes[s.index()],
                group.total.amount(),
                0,
                TransferTag::Share { vendor: s, set: set.clone() },
            );
        }
    }
    for s in market.vendor_ids() {
        net.add_edge(
            vendor_nodes[s.index()],
            sink,
            gp.positive_total(s).amount(),
            0,
            TransferTag::Budget(s),
        );
    }
    net
}

/// Reads group transfers off a flow on [`group_transfer_network`].
pub fn transfers_from_flow(net: &FlowNetwork<TransferTag>, edge_flow: &[i64]) -> GroupTransfers {
    net.edges()
        .iter()
        .zip(edge_flow)
        .filter_map(|(e, &f)| match &e.tag {
            TransferTag::Share { vendor, set } => Some((*vendor, set.clone(), Money(f))),
            _ => None,
        })
        .collect()
}

/// Inverse of [`transfers_from_flow`]: the edge flows that encode `gt`.
pub fn flow_from_transfers(net: &FlowNetwork<TransferTag>, gt: &GroupTransfers) -> Vec<i64> {
    net.edges()
        .iter()
        .map(|e| match &e.tag {
            TransferTag::Need(x) => gt.incoming(x).amount(),
            TransferTag::Share { vendor, set } => gt.get(*vendor, set).amount(),
            TransferTag::Budget(s) => gt.outgoing(*s).amount(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTransferSolution {
    pub transfers: GroupTransfers,
    pub flow: Flow,
    /// Total subsidy needed by all negative groups.
    pub required: Money,
}

/// Max-flow group transfers for an allocation's group partition. Fails with
/// [`TransferError::Unstabilizable`] when some negative group cannot be covered.
pub fn solve_group_transfers(
    market: &Market,
    gp: &GroupPartition,
) -> Result<GroupTransferSolution, TransferError> {
    let net = group_transfer_network(market, gp);
    let flow = max_flow(&net)?;
    for (i, edge) in net.edges().iter().enumerate() {
        if let TransferTag::Need(set) = &edge.tag {
            let deficit = edge.capacity - flow.on(i);
            if deficit > 0 {
                return Err(TransferError::Unstabilizable {
                    set: set.clone(),
                    deficit: Money(deficit),
                });
            }
        }
    }
    Ok(GroupTransferSolution {
        transfers: transfers_from_flow(&net, &flow.edge_flow),
        required: gp.total_needed(),
        flow,
    })
}

/// Two-pointer schedule: offers are spent in order, each request is fully met
/// before moving to the next. Totals must match exactly.
pub fn greedy_match(
    offers: &[(BuyerId, MoneyQ)],
    requests: &[(BuyerId, MoneyQ)],
) -> Result<TransferMatrix, TransferError> {
    for (_, q) in offers.iter().chain(requests) {
        if q.is_negative() {
            return Err(TransferError::NegativeAmount(q.clone()));
        }
    }
    let offered: MoneyQ = offers.iter().map(|(_, q)| q).sum();
    let requested: MoneyQ = requests.iter().map(|(_, q)| q).sum();
    if offered != requested {
        return Err(TransferError::SumMismatch { offered: Box::new(offered), requested: Box::new(requested) });
    }

    let mut left: Vec<MoneyQ> = offers.iter().map(|(_, q)| q.clone()).collect();
    let mut out = TransferMatrix::new();
    let mut i = 0;
    for (payee, request) in requests {
        let mut need = request.clone();
        while need.is_positive() {
            let (payer, _) = offers[i];
            if left[i] >= need {
                out.add(payer, *payee, need.clone());
                left[i] -= &need;
                need = MoneyQ::zero();
            } else {
                out.add(payer, *payee, left[i].clone());
                need -= &left[i];
                left[i] = MoneyQ::zero();
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Splits group transfers into buyer transfers so that each member of a
/// positive group pays in proportion to its surplus.
///
/// For each paying vendor the receiving groups are processed in set order;
/// every phase takes the same fraction of each payer's residual surplus, and
/// every member of the receiving group gets the paying vendor's share of its
/// own deficit.
pub fn fair_buyer_transfers(
    gp: &GroupPartition,
    gt: &GroupTransfers,
) -> Result<TransferMatrix, TransferError> {
    let mut by_vendor: BTreeMap<VendorId, Vec<(&VendorSet, Money)>> = BTreeMap::new();
    for (s, x, amount) in gt.iter() {
        if !x.contains(s) {
            return Err(TransferError::CrossTransfer { vendor: s, set: x.clone() });
        }
        by_vendor.entry(s).or_default().push((x, amount));
    }

    let mut out = TransferMatrix::new();
    for (vendor, phases) in by_vendor {
        let group = gp
            .positive
            .get(&vendor)
            .ok_or(TransferError::Overdrawn { vendor })?;
        let paying: Money = phases.iter().map(|(_, m)| *m).sum();
        if paying > group.total {
            return Err(TransferError::Overdrawn { vendor });
        }
        let mut residual: Vec<MoneyQ> = group
            .members
            .iter()
            .map(|b| gp.surplus[b.index()].to_q())
            .collect();
        for (set, amount) in phases {
            let receiving = gp
                .negative
                .get(set)
                .filter(|g| g.total.is_positive())
                .ok_or_else(|| TransferError::UnneededTransfer { set: set.clone() })?;
            let amount = amount.to_q();
            let alpha = &amount / &residual.iter().sum::<MoneyQ>();
            let beta = &amount / &receiving.total.to_q();
            let offers: Vec<(BuyerId, MoneyQ)> = group
                .members
                .iter()
                .zip(&residual)
                .map(|(b, r)| (*b, &alpha * r))
                .collect();
            let requests: Vec<(BuyerId, MoneyQ)> = receiving
                .members
                .iter()
                .map(|b| (*b, -(&beta * &gp.surplus[b.index()].to_q())))
                .collect();
            out.merge(greedy_match(&offers, &requests)?);
            let keep = MoneyQ::one() - alpha;
            for r in residual.iter_mut() {
                *r = &keep * r;
            }
        }
    }
    Ok(out)
}

/// Prices implied by buyer transfers: each buyer's delta is what it pays
/// minus what it receives.
pub fn prices_from_transfers(
    market: &Market,
    alloc: &Allocation,
    t: &TransferMatrix,
) -> Result<PriceVector, TransferError> {
    let outcome = Outcome::evaluate(market, alloc)?;
    let prices = PriceVector::from_deltas(&outcome.market_price, t.net_outflow(market.buyer_count()));
    debug_assert!(prices.delta_sum().is_zero());
    Ok(prices)
}

/// Builds transfers realizing the given price deltas. Each receiver, last
/// first, is paid from the tail of the payer list; the payer at the boundary
/// is split and keeps its remainder for the next receiver.
pub fn transfers_from_price_deltas(deltas: &[(BuyerId, MoneyQ)]) -> Result<TransferMatrix, TransferError> {
    let sum: MoneyQ = deltas.iter().map(|(_, q)| q).sum();
    if !sum.is_zero() {
        return Err(TransferError::NonZeroSum(sum));
    }
    let mut payers: Vec<(BuyerId, MoneyQ)> = deltas
        .iter()
        .filter(|(_, q)| q.is_positive())
        .cloned()
        .collect();
    let receivers: Vec<(BuyerId, MoneyQ)> = deltas
        .iter()
        .filter(|(_, q)| q.is_negative())
        .cloned()
        .collect();

    let mut out = TransferMatrix::new();
    for (payee, delta) in receivers.iter().rev() {
        let mut need = -delta;
        while need.is_positive() {
            let (payer, left) = payers.last_mut().expect("zero-sum deltas cover every receiver");
            if *left > need {
                out.add(*payer, *payee, need.clone());
                *left -= &need;
                need = MoneyQ::zero();
            } else {
                out.add(*payer, *payee, left.clone());
                need -= &*left;
                payers.pop();
            }
        }
    }
    Ok(out)
}

/// Vendor digraph with an edge `s → s'` whenever `s` pays a cross-transfer to a
/// group whose set contains `s'`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CrossTransferGraph {
    pub nodes: BTreeSet<VendorId>,
    pub edges: BTreeSet<(VendorId, VendorId)>,
}

pub fn cross_transfer_graph(gt: &GroupTransfers) -> CrossTransferGraph {
    let mut graph = CrossTransferGraph::default();
    for (s, x, _) in gt.iter() {
        graph.nodes.insert(s);
        graph.nodes.extend(x.members().iter().copied());
        if !x.contains(s) {
            for &target in x.members() {
                graph.edges.insert((s, target));
            }
        }
    }
    graph
}

impl CrossTransferGraph {
    fn successors(&self, node: VendorId) -> impl Iterator<Item = VendorId> + '_ {
        self.edges
            .range((node, VendorId(0))..=(node, VendorId(u32::MAX)))
            .map(|(_, t)| *t)
    }

    /// A shortest directed cycle, rotated to start at its smallest node; among
    /// equally short cycles, the lexicographically smallest.
    pub fn shortest_cycle(&self) -> Option<Vec<VendorId>> {
        let mut best_len = usize::MAX;
        for &start in &self.nodes {
            // BFS distances from start; a cycle closes on an edge back into start
            let mut dist: BTreeMap<VendorId, usize> = BTreeMap::new();
            let mut queue = VecDeque::from([(start, 0usize)]);
            dist.insert(start, 0);
            while let Some((u, d)) = queue.pop_front() {
                for v in self.successors(u) {
                    if v == start {
                        best_len = best_len.min(d + 1);
                    } else if let std::collections::btree_map::Entry::Vacant(slot) = dist.entry(v) {
                        slot.insert(d + 1);
                        queue.push_back((v, d + 1));
                    }
                }
            }
        }
        if best_len == usize::MAX {
            return None;
        }
        self.nodes.iter().find_map(|&start| {
            let mut path = vec![start];
            self.cycle_of_length(start, best_len, &mut path).then_some(path)
        })
    }

    fn cycle_of_length(&self, start: VendorId, len: usize, path: &mut Vec<VendorId>) -> bool {
        let last = *path.last().expect("path starts at start");
        if path.len() == len {
            return self.edges.contains(&(last, start));
        }
        for v in self.successors(last) {
            if v > start && !path.contains(&v) {
                path.push(v);
                if self.cycle_of_length(start, len, path) {
                    return true;
                }
                path.pop();
            }
        }
        false
    }

    pub fn is_acyclic(&self) -> bool {
        self.shortest_cycle().is_none()
    }
}

/// Rewrites group transfers into an equivalent set (same totals per paying
/// vendor and per receiving group) whose cross-transfer graph is acyclic.
///
/// Each step takes a shortest cycle and the node `s1` on it with the smallest
/// cross-transfer `t1` along the cycle. `s1` stops paying the groups behind its
/// cycle edge; its predecessor on the cycle pays them instead and hands over
/// `t1` of its own cross-transfers to groups containing `s1`. Total
/// cross-transfer mass drops by `t1` every step, so the loop terminates.
pub fn eliminate_cycles(gt: &GroupTransfers) -> GroupTransfers {
    let mut gt = gt.clone();
    while let Some(cycle) = cross_transfer_graph(&gt).shortest_cycle() {
        let k = cycle.len();
        let along = |gt: &GroupTransfers, from: VendorId, to: VendorId| -> Vec<(VendorSet, Money)> {
            gt.iter()
                .filter(|(s, x, _)| *s == from && !x.contains(from) && x.contains(to))
                .map(|(_, x, m)| (x.clone(), m))
                .collect()
        };
        let weight = |i: usize| -> Money {
            along(&gt, cycle[i], cycle[(i + 1) % k]).iter().map(|(_, m)| *m).sum()
        };
        let first = (0..k).min_by_key(|&i| (weight(i), i)).expect("cycle is nonempty");
        let s1 = cycle[first];
        let s2 = cycle[(first + 1) % k];
        let prev = cycle[(first + k - 1) % k];

        let moved = along(&gt, s1, s2);
        let t1: Money = moved.iter().map(|(_, m)| *m).sum();
        for (x, m) in moved {
            gt.set(s1, x.clone(), Money::ZERO);
            gt.add(prev, x, m);
        }
        let mut remaining = t1;
        for (x, m) in along(&gt, prev, s1) {
            if remaining == Money::ZERO {
                break;
            }
            let d = remaining.min(m);
            gt.set(prev, x.clone(), m - d);
            gt.add(s1, x, d);
            remaining -= d;
        }
        debug_assert_eq!(remaining, Money::ZERO);
    }
    gt
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::group_partition;

    const S1: VendorId = VendorId(1);
    const S2: VendorId = VendorId(2);
    const S3: VendorId = VendorId(3);
    const S4: VendorId = VendorId(4);

    fn b(i: u32) -> BuyerId {
        BuyerId(i)
    }

    fn q(n: i64) -> MoneyQ {
        MoneyQ::from_integer(n)
    }

    fn set(v: &[VendorId]) -> VendorSet {
        VendorSet::new(v.iter().copied())
    }

    fn edge_caps(net: &FlowNetwork<TransferTag>) -> Vec<(TransferTag, i64)> {
        net.edges().iter().map(|e| (e.tag.clone(), e.capacity)).collect()
    }

    #[test]
    fn network_fix_e1() {
        let market = fixtures::fix_e1();
        let gp = group_partition(&market, &fixtures::mu_a()).unwrap();
        let caps = edge_caps(&group_transfer_network(&market, &gp));
        assert!(caps.contains(&(TransferTag::Need(set(&[S1])), 1)));
        assert!(caps.contains(&(TransferTag::Share { vendor: S1, set: set(&[S1]) }, 1)));
        assert!(caps.contains(&(TransferTag::Budget(S1), 3)));
        assert_eq!(caps.iter().filter(|(t, _)| matches!(t, TransferTag::Need(_))).count(), 1);
    }

    #[test]
    fn network_fix_e2() {
        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        let caps = edge_caps(&group_transfer_network(&market, &gp));
        let x = set(&[S1, S2]);
        assert!(caps.contains(&(TransferTag::Need(x.clone()), 2)));
        assert!(caps.contains(&(TransferTag::Share { vendor: S1, set: x.clone() }, 2)));
        assert!(caps.contains(&(TransferTag::Share { vendor: S2, set: x }, 2)));
        assert!(caps.contains(&(TransferTag::Budget(S1), 8)));
        assert!(caps.contains(&(TransferTag::Budget(S2), 0)));
    }

    #[test]
    fn max_flow_on_fix_e1_network() {
        let market = fixtures::fix_e1();
        let gp = group_partition(&market, &fixtures::mu_a()).unwrap();
        assert_eq!(max_flow(&group_transfer_network(&market, &gp)).unwrap().value, 1);
    }

    #[test]
    fn nothing_to_subsidize() {
        let market = fixtures::fix_e1();
        let alloc = Allocation::new(vec![
            crate::model::VendorTuple::uniform(S1, 2),
            crate::model::VendorTuple::uniform(S2, 2),
        ]);
        let gp = group_partition(&market, &alloc).unwrap();
        let net = group_transfer_network(&market, &gp);
        assert!(!net.edges().iter().any(|e| matches!(e.tag, TransferTag::Need(_))));
        let sol = solve_group_transfers(&market, &gp).unwrap();
        assert_eq!(sol.flow.value, 0);
        assert!(sol.transfers.is_empty());
    }

    #[test]
    fn group_transfers_on_fixtures() {
        let market = fixtures::fix_e1();
        let gp = group_partition(&market, &fixtures::mu_a()).unwrap();
        let sol = solve_group_transfers(&market, &gp).unwrap();
        assert_eq!(sol.transfers.get(S1, &set(&[S1])), Money(1));
        assert_eq!(sol.required, Money(1));

        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        let sol = solve_group_transfers(&market, &gp).unwrap();
        assert_eq!(sol.transfers.get(S1, &set(&[S1, S2])), Money(2));
        assert_eq!(sol.transfers.get(S2, &set(&[S1, S2])), Money(0));
    }

    #[test]
    fn unstabilizable_reports_deficit() {
        // fix_e1 with b2's bundle worth only 3: subsidy 4 needed, b1 has 3 to give
        let mut market = Market::new(2);
        let s1 = market.add_vendor(
            "s1",
            vec![Money(4), Money(4)],
            vec![crate::model::DiscountTier { thresholds: vec![2, 2], bundle_price: Money(5) }],
        );
        let s2 = market.add_vendor("s2", vec![Money(3), Money(3)], vec![]);
        let bundle = |s| crate::model::VendorTuple::uniform(s, 2);
        market.add_buyer("b1", vec![(bundle(s1), Money(10)), (bundle(s2), Money(6))]);
        market.add_buyer("b2", vec![(bundle(s1), Money(3)), (bundle(s2), Money(8))]);
        let gp = group_partition(&market, &fixtures::mu_a()).unwrap();
        assert_eq!(gp.positive_total(s1), Money(3));
        assert_eq!(gp.negative_total(&set(&[s1])), Money(4));
        assert_eq!(
            solve_group_transfers(&market, &gp),
            Err(TransferError::Unstabilizable { set: set(&[s1]), deficit: Money(1) })
        );
    }

    #[test]
    fn all_null_is_unstabilizable() {
        // both buyers lose 2 against their best alternative and nobody can pay
        let market = fixtures::fix_e1();
        let gp = group_partition(&market, &Allocation::all_null(&market)).unwrap();
        let null = set(&[VendorId::NULL]);
        assert_eq!(
            solve_group_transfers(&market, &gp),
            Err(TransferError::Unstabilizable { set: null, deficit: Money(4) })
        );
    }

    #[test]
    fn omega_roundtrip_on_fixture() {
        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        let net = group_transfer_network(&market, &gp);
        let flow = max_flow(&net).unwrap();
        let gt = transfers_from_flow(&net, &flow.edge_flow);
        assert_eq!(flow_from_transfers(&net, &gt), flow.edge_flow);
    }

    #[test]
    fn greedy_match_trace() {
        let t = greedy_match(&[(b(0), q(3)), (b(1), q(2))], &[(b(10), q(4)), (b(11), q(1))]).unwrap();
        let entries: Vec<_> = t.iter().map(|(a, c, v)| (a, c, v.clone())).collect();
        assert_eq!(entries, vec![(b(0), b(10), q(3)), (b(1), b(10), q(1)), (b(1), b(11), q(1))]);

        let t = greedy_match(&[(b(0), q(5))], &[(b(10), q(5))]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(b(0), b(10)), q(5));

        let t = greedy_match(&[(b(0), q(1)), (b(1), q(1))], &[(b(10), q(2))]).unwrap();
        assert_eq!(t.get(b(0), b(10)), q(1));
        assert_eq!(t.get(b(1), b(10)), q(1));
    }

    #[test]
    fn greedy_match_rejects_mismatch() {
        let err = greedy_match(&[(b(0), q(3))], &[(b(1), q(4))]).unwrap_err();
        assert_eq!(err, TransferError::SumMismatch { offered: Box::new(q(3)), requested: Box::new(q(4)) });
        let err = greedy_match(&[(b(0), q(-1))], &[(b(1), q(-1))]).unwrap_err();
        assert_eq!(err, TransferError::NegativeAmount(q(-1)));
    }

    #[test]
    fn fair_transfers_on_fixtures() {
        let market = fixtures::fix_e1();
        let gp = group_partition(&market, &fixtures::mu_a()).unwrap();
        let gt = solve_group_transfers(&market, &gp).unwrap().transfers;
        let t = fair_buyer_transfers(&gp, &gt).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(b(0), b(1)), q(1));

        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        let gt = solve_group_transfers(&market, &gp).unwrap().transfers;
        let t = fair_buyer_transfers(&gp, &gt).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get(b(0), b(2)), q(1));
        assert_eq!(t.get(b(1), b(2)), q(1));

        assert!(fair_buyer_transfers(&gp, &GroupTransfers::new()).unwrap().is_empty());
    }

    #[test]
    fn fair_transfers_split_across_phases_and_vendors() {
        // P+(s1) = {b0: 2, b1: 6}, P+(s2) = {b2: 5}
        // N-({s1}) = {b3: -2}, N-({s1,s2}) = {b4: -3, b5: -1}
        let mut gp = GroupPartition {
            surplus: [2, 6, 5, -2, -3, -1].map(Money).to_vec(),
            ..Default::default()
        };
        gp.positive.insert(S1, crate::model::BuyerGroup { members: vec![b(0), b(1)], total: Money(8) });
        gp.positive.insert(S2, crate::model::BuyerGroup { members: vec![b(2)], total: Money(5) });
        gp.negative.insert(set(&[S1]), crate::model::BuyerGroup { members: vec![b(3)], total: Money(2) });
        gp.negative.insert(set(&[S1, S2]), crate::model::BuyerGroup { members: vec![b(4), b(5)], total: Money(4) });
        let gt: GroupTransfers = [
            (S1, set(&[S1]), Money(2)),
            (S1, set(&[S1, S2]), Money(1)),
            (S2, set(&[S1, S2]), Money(3)),
        ]
        .into_iter()
        .collect();
        let t = fair_buyer_transfers(&gp, &gt).unwrap();
        // s1 pays 3 of 8: b0 pays 2*3/8, b1 pays 6*3/8
        assert_eq!(t.paid_by(b(0)), MoneyQ::new(3, 4));
        assert_eq!(t.paid_by(b(1)), MoneyQ::new(9, 4));
        assert_eq!(t.paid_by(b(2)), q(3));
        let net = t.net_outflow(6);
        assert_eq!(net[3], q(-2));
        assert_eq!(net[4], q(-3));
        assert_eq!(net[5], q(-1));
    }

    #[test]
    fn fair_transfers_reject_cross_and_overdraft() {
        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        let cross: GroupTransfers = [(S2, set(&[S1]), Money(1))].into_iter().collect();
        assert!(matches!(fair_buyer_transfers(&gp, &cross), Err(TransferError::CrossTransfer { .. })));
        let over: GroupTransfers = [(S1, set(&[S1, S2]), Money(9))].into_iter().collect();
        assert_eq!(fair_buyer_transfers(&gp, &over), Err(TransferError::Overdrawn { vendor: S1 }));
    }

    #[test]
    fn prices_on_fixtures() {
        let market = fixtures::fix_e1();
        let mut t = TransferMatrix::new();
        t.add(b(0), b(1), q(1));
        let p = prices_from_transfers(&market, &fixtures::mu_a(), &t).unwrap();
        assert_eq!(p.of(b(0)).final_price, q(6));
        assert_eq!(p.of(b(1)).final_price, q(4));

        let market = fixtures::fix_e2();
        let mut t = TransferMatrix::new();
        t.add(b(0), b(2), q(1));
        t.add(b(1), b(2), q(1));
        let p = prices_from_transfers(&market, &fixtures::mu_star(), &t).unwrap();
        assert!(p.prices.iter().all(|bp| bp.final_price == q(5)));
        assert!(p.delta_sum().is_zero());

        let p = prices_from_transfers(&market, &fixtures::mu_star(), &TransferMatrix::new()).unwrap();
        assert!(p.prices.iter().all(|bp| bp.final_price == bp.market_price.to_q()));
    }

    #[test]
    fn deltas_to_transfers() {
        let t = transfers_from_price_deltas(&[(b(0), q(3)), (b(1), q(-3))]).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.get(b(0), b(1)), q(3));

        let deltas = [(b(0), q(2)), (b(1), q(2)), (b(2), q(-3)), (b(3), q(-1))];
        let t = transfers_from_price_deltas(&deltas).unwrap();
        assert_eq!(t.get(b(1), b(3)), q(1));
        assert_eq!(t.get(b(1), b(2)), q(1));
        assert_eq!(t.get(b(0), b(2)), q(2));
        assert_eq!(t.net_outflow(4), deltas.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>());

        assert!(transfers_from_price_deltas(&[(b(0), q(0)), (b(1), q(0))]).unwrap().is_empty());
        assert_eq!(
            transfers_from_price_deltas(&[(b(0), q(1))]),
            Err(TransferError::NonZeroSum(q(1)))
        );
    }

    #[test]
    fn cross_edges_point_into_receiving_sets() {
        let gt: GroupTransfers = [(S1, set(&[S3, S4]), Money(2)), (S2, set(&[S4]), Money(1))]
            .into_iter()
            .collect();
        let g = cross_transfer_graph(&gt);
        assert_eq!(g.edges, BTreeSet::from([(S1, S3), (S1, S4), (S2, S4)]));
        assert!(g.is_acyclic());
        assert!(cross_transfer_graph(&GroupTransfers::new()).edges.is_empty());
    }

    #[test]
    fn solver_output_has_no_cross_edges() {
        let market = fixtures::fix_e2();
        let gp = group_partition(&market, &fixtures::mu_star()).unwrap();
        let gt = solve_group_transfers(&market, &gp).unwrap().transfers;
        assert!(cross_transfer_graph(&gt).edges.is_empty());
        assert_eq!(eliminate_cycles(&gt), gt);
    }

    #[test]
    fn two_cycle_reduction() {
        let gt: GroupTransfers = [(S1, set(&[S2]), Money(3)), (S2, set(&[S1]), Money(5))]
            .into_iter()
            .collect();
        let out = eliminate_cycles(&gt);
        let expected: GroupTransfers = [
            (S1, set(&[S1]), Money(3)),
            (S2, set(&[S1]), Money(2)),
            (S2, set(&[S2]), Money(3)),
        ]
        .into_iter()
        .collect();
        assert_eq!(out, expected);
        assert_eq!(out.outgoing_totals(), gt.outgoing_totals());
        assert_eq!(out.incoming_totals(), gt.incoming_totals());
        assert!(cross_transfer_graph(&out).is_acyclic());
    }

    #[test]
    fn three_cycle_reduction() {
        // s1 -> s2 -> s3 -> s1 with weights 4, 2, 6
        let gt: GroupTransfers = [
            (S1, set(&[S2]), Money(4)),
            (S2, set(&[S3]), Money(2)),
            (S3, set(&[S1]), Money(6)),
        ]
        .into_iter()
        .collect();
        assert_eq!(cross_transfer_graph(&gt).shortest_cycle(), Some(vec![S1, S2, S3]));
        let out = eliminate_cycles(&gt);
        assert!(cross_transfer_graph(&out).is_acyclic());
        assert_eq!(out.outgoing_totals(), gt.outgoing_totals());
        assert_eq!(out.incoming_totals(), gt.incoming_totals());
        assert!(out.cross_mass() < gt.cross_mass());
    }

    #[test]
    fn acyclic_input_unchanged() {
        let gt: GroupTransfers = [(S1, set(&[S2]), Money(3)), (S2, set(&[S3]), Money(1))]
            .into_iter()
            .collect();
        assert_eq!(eliminate_cycles(&gt), gt);
    }

    #[test]
    fn shortest_cycle_prefers_short_then_lexicographic() {
        let g = CrossTransferGraph {
            nodes: BTreeSet::from([S1, S2, S3, S4]),
            edges: BTreeSet::from([(S1, S2), (S2, S3), (S3, S1), (S3, S4), (S4, S3)]),
        };
        assert_eq!(g.shortest_cycle(), Some(vec![S3, S4]));
    }
}
