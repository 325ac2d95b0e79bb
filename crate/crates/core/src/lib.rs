//! Polyhedral clinching auction for indivisible goods under polymatroid
//! constraints, the liquid-welfare optimal benchmark, and automated audits of
//! the mechanism's guarantees.

pub mod audit;
pub mod auction;
pub mod error;
pub mod guards;
pub mod instances;
pub mod polymatroid;
pub mod rational;
pub mod welfare;

pub use auction::{AuctionInstance, AuctionOutcome, AuctionState, Buyer, DropCause, Event};
pub use error::{Error, Result};
pub use guards::Guards;
pub use polymatroid::{Constraint, Subset, SubmodularOracle};
pub use rational::Rational;
