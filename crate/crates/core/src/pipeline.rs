//! Runs the solver stages in order and optionally certifies the output.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::model::{group_partition, Allocation, GroupPartition, Market, ModelError, Outcome};
use crate::swm::{brute_force_swm, solve_swm, SwmError, SwmOptions, SwmSolution};
use crate::transfers::{
    fair_buyer_transfers, prices_from_transfers, solve_group_transfers, GroupTransfers, PriceVector,
    TransferError, TransferMatrix,
};
use crate::verify::{certify, CertificateReport};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Swm(#[from] SwmError),
    #[error(transparent)]
    Transfer(#[from] TransferError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Partitions,
    BruteForce,
    Given,
}

/// Prices and transfers that stabilize one allocation.
#[derive(Debug, Clone)]
pub struct Stabilized {
    pub allocation: Allocation,
    pub outcome: Outcome,
    pub groups: GroupPartition,
    pub group_transfers: GroupTransfers,
    /// Max-flow value of the group-transfer network.
    pub flow_value: i64,
    pub transfers: TransferMatrix,
    pub prices: PriceVector,
    pub certificate: Option<CertificateReport>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub method: Method,
    pub stabilized: Stabilized,
    pub search_space: Option<u128>,
    pub evaluated: Option<u64>,
    pub timings: Vec<(&'static str, Duration)>,
}

impl Solution {
    pub fn welfare(&self) -> crate::money::Money {
        self.stabilized.outcome.social_welfare()
    }
}

/// Group transfers, fair buyer transfers and prices for `alloc`, optionally certified.
pub fn stabilize(market: &Market, alloc: &Allocation, with_certificate: bool) -> Result<Stabilized, PipelineError> {
    let outcome = Outcome::evaluate(market, alloc)?;
    let groups = group_partition(market, alloc)?;
    let solved = solve_group_transfers(market, &groups)?;
    let transfers = fair_buyer_transfers(&groups, &solved.transfers)?;
    let prices = prices_from_transfers(market, alloc, &transfers)?;
    let certificate = if with_certificate {
        Some(certify(market, alloc, &solved.transfers, &transfers, &prices)?)
    } else {
        None
    };
    Ok(Stabilized {
        allocation: alloc.clone(),
        outcome,
        groups,
        group_transfers: solved.transfers,
        flow_value: solved.flow.value,
        transfers,
        prices,
        certificate,
    })
}

fn finish(
    market: &Market,
    method: Method,
    swm: Option<SwmSolution>,
    alloc: &Allocation,
    with_certificate: bool,
    mut timings: Vec<(&'static str, Duration)>,
) -> Result<Solution, PipelineError> {
    let start = Instant::now();
    let stabilized = stabilize(market, alloc, with_certificate)?;
    timings.push(("stabilize", start.elapsed()));
    Ok(Solution {
        method,
        stabilized,
        search_space: swm.as_ref().map(|s| s.search_space),
        evaluated: swm.as_ref().map(|s| s.evaluated),
        timings,
    })
}

/// Partition-enumeration solve followed by [`stabilize`].
pub fn solve(market: &Market, opts: &SwmOptions<'_>, with_certificate: bool) -> Result<Solution, PipelineError> {
    let start = Instant::now();
    let swm = solve_swm(market, opts)?;
    let timings = vec![("swm", start.elapsed())];
    let alloc = swm.allocation.clone();
    finish(market, Method::Partitions, Some(swm), &alloc, with_certificate, timings)
}

/// Exhaustive solve followed by [`stabilize`].
pub fn solve_brute_force(market: &Market, cap: u128, with_certificate: bool) -> Result<Solution, PipelineError> {
    let start = Instant::now();
    let swm = brute_force_swm(market, cap)?;
    let timings = vec![("swm", start.elapsed())];
    let alloc = swm.allocation.clone();
    finish(market, Method::BruteForce, Some(swm), &alloc, with_certificate, timings)
}

/// [`stabilize`] for a caller-supplied allocation.
pub fn solve_given(market: &Market, alloc: &Allocation, with_certificate: bool) -> Result<Solution, PipelineError> {
    finish(market, Method::Given, None, alloc, with_certificate, Vec::new())
}
