//! Social-welfare-maximizing allocations.
//!
//! For every partition of the buyers over vendor tuples ("cells"), the prices
//! are fixed by the partition alone, so the best allocation conditional on it
//! is a min-cost assignment. The overall optimum is the best partition.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use thiserror::Error;

use crate::flow::{min_cost_max_flow, FlowError, FlowNetwork};
use crate::model::{
    demand_unchecked, price_for_choice, triggered_tier, Allocation, BuyerId, Market, VendorTuple,
};
use crate::money::Money;

pub const DEFAULT_MAX_PARTITIONS: u128 = 5_000_000;
pub const DEFAULT_ORACLE_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwmError {
    #[error("{what}: {} exceeds the cap of {cap}", count.map_or("more than 2^128".to_string(), |c| c.to_string()))]
    BudgetExceeded {
        what: &'static str,
        /// `None` when the count does not fit in 128 bits.
        count: Option<u128>,
        cap: u128,
    },
    #[error("market has too many vendor tuples to enumerate")]
    TooManyCells,
    #[error("partition places {found} buyers, market has {expected}")]
    PartitionSize { expected: usize, found: u64 },
    #[error("assignment flow routed {routed} of {expected} buyers")]
    Unsaturated { expected: usize, routed: i64 },
    #[error(transparent)]
    Flow(#[from] FlowError),
}

/// Buyer counts per vendor tuple, indexed by cell (lexicographic tuple order).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Partition {
    pub counts: Vec<u32>,
}

impl Partition {
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Partition induced by an allocation.
    pub fn of_allocation(market: &Market, alloc: &Allocation) -> Self {
        let mut counts = vec![0; market.cell_count().unwrap_or(0)];
        for tuple in &alloc.choice {
            counts[market.cell_of_tuple(tuple)] += 1;
        }
        Partition { counts }
    }
}

/// Number of compositions of `n` into `cells` nonnegative parts,
/// `C(n + cells - 1, cells - 1)`. `None` on overflow.
pub fn partition_count(n: u64, cells: u64) -> Option<u128> {
    if cells == 0 {
        return Some(u128::from(n == 0));
    }
    let top = n as u128 + cells as u128 - 1;
    let k = (cells as u128 - 1).min(n as u128);
    let mut acc: u128 = 1;
    for i in 1..=k {
        // acc * (top - k + i) / i stays integral at every step
        acc = acc.checked_mul(top - k + i)? / i;
    }
    Some(acc)
}

/// Iterator over every composition of `n` into `cells` parts, starting at
/// `(n, 0, .., 0)` and ending at `(0, .., 0, n)`.
#[derive(Debug, Clone)]
pub struct Partitions {
    next: Option<Vec<u32>>,
}

pub fn enumerate_partitions(n: u32, cells: usize) -> Partitions {
    assert!(cells >= 1, "at least one cell required");
    let mut first = vec![0; cells];
    first[0] = n;
    Partitions { next: Some(first) }
}

impl Iterator for Partitions {
    type Item = Partition;

    fn next(&mut self) -> Option<Partition> {
        let current = self.next.take()?;
        let k = current.len();
        if let Some(i) = (0..k - 1).rev().find(|&i| current[i] > 0) {
            let mut next = current.clone();
            let tail: u32 = next[i + 1..].iter().sum();
            next[i] -= 1;
            next[i + 1..].fill(0);
            next[i + 1] = tail + 1;
            self.next = Some(next);
        }
        Some(Partition { counts: current })
    }
}

/// Provenance of an assignment-network edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignTag {
    Buyer(BuyerId),
    Choice { buyer: BuyerId, cell: usize },
    Cell(usize),
}

impl fmt::Display for AssignTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignTag::Buyer(b) => write!(f, "src:{b}"),
            AssignTag::Choice { buyer, cell } => write!(f, "choice:{buyer}:{cell}"),
            AssignTag::Cell(c) => write!(f, "cell:{c}"),
        }
    }
}

/// Per-market tables shared by every partition evaluation.
struct Tables {
    tuples: Vec<VendorTuple>,
    /// `values[b * cells + cell]`
    values: Vec<Money>,
    cells: usize,
}

impl Tables {
    fn new(market: &Market) -> Result<Self, SwmError> {
        let cells = market.cell_count().ok_or(SwmError::TooManyCells)?;
        let tuples: Vec<VendorTuple> = (0..cells).map(|c| market.tuple_of_cell(c)).collect();
        let mut values = vec![Money::ZERO; market.buyer_count() * cells];
        for buyer in market.buyers() {
            for (tuple, v) in &buyer.valuations {
                values[buyer.id.index() * cells + market.cell_of_tuple(tuple)] = *v;
            }
        }
        Ok(Tables { tuples, values, cells })
    }

    fn value(&self, buyer: usize, cell: usize) -> Money {
        self.values[buyer * self.cells + cell]
    }

    fn network(&self, buyers: usize, partition: &Partition) -> FlowNetwork<AssignTag> {
        let source = 0;
        let sink = buyers + self.cells + 1;
        let mut net = FlowNetwork::new(sink + 1, source, sink);
        for b in 0..buyers {
            net.add_edge(source, 1 + b, 1, 0, AssignTag::Buyer(BuyerId(b as u32)));
        }
        for b in 0..buyers {
            for cell in 0..self.cells {
                net.add_edge(
                    1 + b,
                    1 + buyers + cell,
                    1,
                    -self.value(b, cell).amount(),
                    AssignTag::Choice { buyer: BuyerId(b as u32), cell },
                );
            }
        }
        for (cell, &n) in partition.counts.iter().enumerate() {
            net.add_edge(1 + buyers + cell, sink, n as i64, 0, AssignTag::Cell(cell));
        }
        net
    }

    fn total_price(&self, market: &Market, partition: &Partition) -> Money {
        let occupied = || {
            partition
                .counts
                .iter()
                .enumerate()
                .filter(|(_, &n)| n > 0)
                .map(|(cell, &n)| (&self.tuples[cell], n))
        };
        let mut demand = demand_unchecked(market, std::iter::empty());
        for (tuple, n) in occupied() {
            for (k, v) in tuple.vendors().iter().enumerate() {
                demand[v.index()].0[k] += n;
            }
        }
        let tiers: Vec<usize> = market
            .vendors()
            .iter()
            .map(|v| triggered_tier(v, &demand[v.id.index()]))
            .collect();
        occupied()
            .map(|(tuple, n)| price_for_choice(market, &tiers, tuple) * n as i64)
            .sum()
    }

    fn best_for_partition(
        &self,
        market: &Market,
        partition: &Partition,
    ) -> Result<(Allocation, Money), SwmError> {
        let buyers = market.buyer_count();
        if partition.total() != buyers as u64 || partition.counts.len() != self.cells {
            return Err(SwmError::PartitionSize {
                expected: buyers,
                found: partition.total(),
            });
        }
        let net = self.network(buyers, partition);
        let flow = min_cost_max_flow(&net)?;
        if flow.value != buyers as i64 {
            return Err(SwmError::Unsaturated {
                expected: buyers,
                routed: flow.value,
            });
        }
        let mut choice = vec![VendorTuple::all_null(market.item_types()); buyers];
        for (i, edge) in net.edges().iter().enumerate() {
            if let AssignTag::Choice { buyer, cell } = edge.tag {
                if flow.on(i) > 0 {
                    choice[buyer.index()] = self.tuples[cell].clone();
                }
            }
        }
        let welfare = Money(-flow.cost) - self.total_price(market, partition);
        Ok((Allocation::new(choice), welfare))
    }
}

/// Flow network whose min-cost max flows are the best allocations for `partition`.
pub fn assignment_network(market: &Market, partition: &Partition) -> Result<FlowNetwork<AssignTag>, SwmError> {
    let tables = Tables::new(market)?;
    Ok(tables.network(market.buyer_count(), partition))
}

/// Total market price paid under any allocation with this partition.
pub fn total_price(market: &Market, partition: &Partition) -> Result<Money, SwmError> {
    Ok(Tables::new(market)?.total_price(market, partition))
}

pub fn best_allocation_for_partition(
    market: &Market,
    partition: &Partition,
) -> Result<(Allocation, Money), SwmError> {
    Tables::new(market)?.best_for_partition(market, partition)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwmSolution {
    pub allocation: Allocation,
    pub welfare: Money,
    /// Partition of the returned allocation (absent for the exhaustive oracle).
    pub partition: Option<Partition>,
    /// Size of the search space: partitions, or allocations for the oracle.
    pub search_space: u128,
    pub evaluated: u64,
}

pub struct SwmOptions<'a> {
    pub max_partitions: u128,
    /// Worker threads; 0 or 1 runs on the calling thread.
    pub jobs: usize,
    /// Called with `(evaluated, total)` after each partition.
    pub progress: Option<&'a (dyn Fn(u64, u128) + Sync)>,
}

impl Default for SwmOptions<'_> {
    fn default() -> Self {
        SwmOptions {
            max_partitions: DEFAULT_MAX_PARTITIONS,
            jobs: 1,
            progress: None,
        }
    }
}

impl fmt::Debug for SwmOptions<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SwmOptions")
            .field("max_partitions", &self.max_partitions)
            .field("jobs", &self.jobs)
            .field("progress", &self.progress.is_some())
            .finish()
    }
}

pub fn solve_swm(market: &Market, opts: &SwmOptions<'_>) -> Result<SwmSolution, SwmError> {
    let tables = Tables::new(market)?;
    let n = market.buyer_count();
    let total = partition_count(n as u64, tables.cells as u64);
    match total {
        Some(t) if t <= opts.max_partitions => {}
        count => {
            return Err(SwmError::BudgetExceeded {
                what: "partition count",
                count,
                cap: opts.max_partitions,
            })
        }
    }
    let total = total.unwrap_or_default();
    let evaluated = AtomicU64::new(0);

    let eval = |(index, partition): (usize, Partition)| {
        let (allocation, welfare) = tables.best_for_partition(market, &partition)?;
        let done = evaluated.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(progress) = opts.progress {
            progress(done, total);
        }
        Ok::<_, SwmError>(Candidate { index, partition, allocation, welfare })
    };

    let partitions = enumerate_partitions(n as u32, tables.cells).enumerate();
    let best = if opts.jobs <= 1 {
        let mut best: Option<Candidate> = None;
        for item in partitions {
            best = Some(Candidate::better(best, eval(item)?));
        }
        best
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .expect("thread pool");
        pool.install(|| {
            partitions
                .par_bridge()
                .map(eval)
                .try_fold(|| None, |acc, c| c.map(|c| Some(Candidate::better(acc, c))))
                .try_reduce(
                    || None,
                    |a, b| {
                        Ok(match (a, b) {
                            (Some(a), b) => Some(Candidate::better(b, a)),
                            (None, b) => b,
                        })
                    },
                )
        })?
    };
    let best = best.expect("at least one partition");
    Ok(SwmSolution {
        allocation: best.allocation,
        welfare: best.welfare,
        partition: Some(best.partition),
        search_space: total,
        evaluated: evaluated.into_inner(),
    })
}

struct Candidate {
    index: usize,
    partition: Partition,
    allocation: Allocation,
    welfare: Money,
}

impl Candidate {
    /// Higher welfare wins; ties go to the earlier partition.
    fn better(current: Option<Candidate>, other: Candidate) -> Candidate {
        match current {
            None => other,
            Some(c) => {
                if other.welfare > c.welfare || (other.welfare == c.welfare && other.index < c.index) {
                    other
                } else {
                    c
                }
            }
        }
    }
}

/// Exhaustive search over all `cells^N` allocations. Test oracle.
pub fn brute_force_swm(market: &Market, cap: u128) -> Result<SwmSolution, SwmError> {
    let tables = Tables::new(market)?;
    let n = market.buyer_count();
    let space = (0..n).try_fold(1u128, |acc, _| acc.checked_mul(tables.cells as u128));
    match space {
        Some(s) if s <= cap => {}
        count => {
            return Err(SwmError::BudgetExceeded {
                what: "allocation count",
                count,
                cap,
            })
        }
    }
    let base: Vec<Money> = tables.tuples.iter().map(|t| market.base_price(t)).collect();
    let c = market.item_types();
    let vendors = market.vendors().len();

    let mut cells = vec![0usize; n];
    let mut demand = vec![super::model::DemandVector(vec![0; c]); vendors];
    let mut tiers = vec![0usize; vendors];
    let mut best: Option<(Vec<usize>, Money)> = None;
    let mut evaluated = 0u64;
    loop {
        for d in demand.iter_mut() {
            d.0.fill(0);
        }
        for &cell in &cells {
            for (k, v) in tables.tuples[cell].vendors().iter().enumerate() {
                demand[v.index()].0[k] += 1;
            }
        }
        for v in market.vendors() {
            tiers[v.id.index()] = triggered_tier(v, &demand[v.id.index()]);
        }
        let welfare: Money = cells
            .iter()
            .enumerate()
            .map(|(b, &cell)| {
                let tuple = &tables.tuples[cell];
                let price = match tuple.single_vendor() {
                    Some(s) if tiers[s.index()] > 0 => {
                        market.vendor(s).tiers[tiers[s.index()] - 1].bundle_price
                    }
                    _ => base[cell],
                };
                tables.value(b, cell) - price
            })
            .sum();
        evaluated += 1;
        if best.as_ref().is_none_or(|(_, w)| welfare > *w) {
            best = Some((cells.clone(), welfare));
        }
        // odometer, last buyer fastest
        let mut i = n;
        loop {
            if i == 0 {
                let (cells, welfare) = best.expect("at least one allocation");
                let choice = cells.iter().map(|&c| tables.tuples[c].clone()).collect();
                return Ok(SwmSolution {
                    allocation: Allocation::new(choice),
                    welfare,
                    partition: None,
                    search_space: space.unwrap_or_default(),
                    evaluated,
                });
            }
            i -= 1;
            cells[i] += 1;
            if cells[i] < tables.cells {
                break;
            }
            cells[i] = 0;
        }
    }
}
