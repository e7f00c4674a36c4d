//! Writes seeded smooth test images and structured-perturbation counterparts.
//!
//! `cargo run --example make_corpus -- <dir> [count] [size] [channels]`

use std::path::PathBuf;

use tnp_core::io::write_png;
use tnp_core::metrics::{gen_noise, perturb, NoiseKind, NoiseSpec};
use tnp_core::synth::smooth_image;

fn main() -> tnp_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let dir = PathBuf::from(args.first().map_or("corpus", String::as_str));
    let arg = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (count, size, channels) = (arg(1, 4), arg(2, 64), arg(3, 1));
    std::fs::create_dir_all(&dir)?;
    for seed in 0..count as u64 {
        let clean = smooth_image(size, channels, seed)?;
        let spec = NoiseSpec {
            match_snr: false,
            ..NoiseSpec::new(NoiseKind::Structured, seed)
        };
        let adv = perturb(&clean, &gen_noise(&spec, size, size, channels)?)?;
        write_png(&dir.join(format!("clean_{seed}.png")), &clean)?;
        write_png(&dir.join(format!("adv_{seed}.png")), &adv)?;
    }
    Ok(())
}
