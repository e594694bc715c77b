//! Regenerates `assets/tiny_conv_reference.bin` from its fixed seed.

use std::path::Path;

use eqpnp::denoisers::{TinyConvDenoiser, REFERENCE_CHANNELS, REFERENCE_SEED};

fn main() -> eqpnp::Result<()> {
    let d = TinyConvDenoiser::random(REFERENCE_CHANNELS, 3, REFERENCE_SEED)?;
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/tiny_conv_reference.bin");
    d.save(&path)?;
    println!("wrote {}", path.display());
    Ok(())
}
