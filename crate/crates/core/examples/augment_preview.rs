//! Writes one sample and a grid of its augmented variants.
//!
//! cargo run --example augment_preview -- [class] [out_dir]

use std::path::PathBuf;

use weedpilot::data::{render_generated, ClassTaxonomy, GenParams, VariationRanges};
use weedpilot::imageops::{augment, AugmentationPolicy, ImageTensor};

fn main() -> weedpilot::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let class = args.get(1).cloned().unwrap_or_else(|| "VM.".into());
    let out = PathBuf::from(args.get(2).cloned().unwrap_or_else(|| "target/augment_preview".into()));
    std::fs::create_dir_all(&out).map_err(|e| weedpilot::Error::io(&out, e))?;

    let id = ClassTaxonomy::aiweeds().resolve(&class)?;
    let gen = GenParams {
        seed: 42,
        width: 384,
        height: 224,
        variation: VariationRanges::default(),
    };
    let img = render_generated(id, &gen)?.image;
    let policy = AugmentationPolicy::default();

    let (w, h) = (img.width(), img.height());
    let mut grid = ImageTensor::filled(w * 3, h * 3, [0, 0, 0]);
    for i in 0..9 {
        let tile = if i == 0 { img.clone() } else { augment(&img, &policy, i as u64)? };
        let (ox, oy) = ((i % 3) * w, (i / 3) * h);
        for y in 0..h {
            for x in 0..w {
                grid.set_pixel(ox + x, oy + y, tile.pixel(x, y));
            }
        }
    }
    let path = out.join(format!("{}.png", class.trim_end_matches('.').to_lowercase()));
    grid.save_png(&path)?;
    println!("original + 8 variants -> {}", path.display());
    Ok(())
}
