//! Ultrametric indexing of multi-topology graphs and p-adic diffusion on the
//! resulting trees.

pub mod heat;
pub mod linalg;
pub mod multitopo;
pub mod operators;
pub mod padic;
pub mod spectra;
pub mod toposort;
pub mod ultraindex;

#[cfg(test)]
mod test_support;
