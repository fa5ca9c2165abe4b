pub mod autoencoders;
pub mod decoygen;
pub mod evalbench;
pub mod latentgan;
mod mlp;
pub mod molecules;
pub mod search;
pub mod spectra;
pub mod synth;
