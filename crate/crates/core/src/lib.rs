//! Evolutionary architecture search for seq2seq cells.
//!
//! The crate covers the whole pipeline: the gene encoding of the search space
//! ([`search_space`]), turning genomes into scaled computation graphs
//! ([`arch`]), the fitness-evaluation contract with a simulated learning-curve
//! oracle ([`fitness`]), progressive dynamic hurdles ([`pdh`]), tournament
//! selection evolution over a worker pool ([`evolution`]) and the experiment
//! layer used by the command-line tool ([`experiment`]).

pub mod arch;
pub mod evolution;
pub mod experiment;
pub mod fitness;
pub mod pdh;
pub mod search_space;
