//! Group-buying markets with per-vendor bundle discounts.
//!
//! Finds a welfare-maximizing allocation and prices that keep every buyer
//! from deviating. Results can be re-checked with [`verify`].

pub mod fixtures;
pub mod io;
pub mod flow;
pub mod generate;
pub mod model;
pub mod money;
pub mod pipeline;
pub mod swm;
pub mod transfers;
pub mod verify;

pub use model::{Allocation, BuyerId, Market, VendorId, VendorSet, VendorTuple};
pub use money::{Money, MoneyQ};
