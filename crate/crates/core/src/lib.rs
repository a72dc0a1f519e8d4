pub mod bandit;
pub mod estimators;
pub mod features;
pub mod meta_model;
pub mod pasif;
pub mod reward_models;
pub mod rng;
pub mod selection;
pub mod tree;
