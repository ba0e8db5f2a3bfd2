//! Two-axis gimbal control laboratory.
//!
//! The crate models a desk-scale yaw/pitch gimbal as a two-body rigid chain on
//! a moving base, and builds three tracking controllers on top of it:
//!
//! * `adrc` — per-axis active disturbance rejection (transient profile
//!   generator, extended state observer, weighted state-error feedback),
//! * `nn-adrc` — ADRC plus a trained neural acceleration compensator,
//! * `ctm-adrc` — ADRC plus a model-based delta-torque compensator.
//!
//! A computed-torque block converts per-axis acceleration commands into joint
//! torques through the full inverse dynamics, a polynomial disturbance
//! generator injects state-dependent torques on both axes, and the simulation
//! harness runs the closed loop at a fixed control rate with an RK4 plant
//! integrator, producing CSV logs and tracking-error metrics.

pub mod adrc;
pub mod cli;
pub mod config;
pub mod controllers;
pub mod ctm;
pub mod disturbance;
pub mod dynamics;
pub mod error;
pub mod harness;
pub mod nn;
pub mod parallel;

pub use error::GimbalError;
