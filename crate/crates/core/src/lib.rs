pub mod abelianp;
pub mod lattice;
pub mod momentcalc;
pub mod sampler;
pub mod setcat;
pub mod oracle;
