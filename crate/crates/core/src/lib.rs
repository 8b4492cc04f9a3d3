//! Transient simulation of switched-mode power converters: netlist parsing,
//! device companion models, an MNA engine, buck-converter scenarios and
//! waveform analysis.

pub mod devices;
pub mod engine;
pub mod netlist;
pub mod scenarios;
pub mod analysis;
pub mod io;
