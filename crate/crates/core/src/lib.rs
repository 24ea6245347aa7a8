pub mod agent;
pub mod alloc;
pub mod binding;
pub mod checker;
pub mod ltl;
pub mod omega;
pub mod product;
pub mod runtime;
pub mod scenario;
pub mod schema;
pub mod sim;
pub mod spec_lang;
pub mod synth;
