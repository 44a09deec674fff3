//! Compiles finite-trace temporal-logic driving specifications over relational
//! scene-graph propositions into concrete simulation scenarios, executes them in
//! a built-in kinematic road world, and measures how thoroughly the resulting
//! traces cover the specification's behavior space.
//!
//! The pipeline runs in stages:
//!
//! 1. [`spec_lang`] parses and normalizes the specification, splits its
//!    precondition into conjunction-only cases, and enumerates the disjunctive
//!    configuration space.
//! 2. [`rg`] enumerates the structurally unique relational graphs, each a
//!    distinct way of satisfying the precondition under a node budget.
//! 3. [`scene`] translates a relational graph into initial-scene constraints and
//!    samples a concrete placement on the road world.
//! 4. [`paths`] binds trajectory endpoints, enumerates k-shortest simple paths
//!    on the dense waypoint graph, and selects a diverse subset.
//! 5. [`sim`] executes the scenario with a pluggable ego agent and
//!    speed-adaptive NPCs, recording a per-frame scene-graph trace.
//! 6. [`eval`] evaluates the logic over the traces and computes the coverage
//!    metrics and coverage-vs-simulation-count curves.
//!
//! [`cli`] orchestrates all stages with reproducible seeding.

pub mod cli;
pub mod eval;
pub mod paths;
pub mod rg;
pub mod scene;
pub mod sim;
pub mod spec_lang;
pub mod world;
