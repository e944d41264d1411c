pub mod crypto;
pub mod harness;
pub mod ledger;
pub mod montecarlo;
pub mod params;
pub mod propagate;
pub mod protocol;
pub mod selection;
pub mod simnet;
