pub mod bounds;
pub mod env;
pub mod error;
pub mod harness;
pub mod numeric;
pub mod policies;
pub mod posterior;
pub mod regret;
pub mod rng;
pub mod selfcheck;
