//! Normalize, tile, augment and reassemble a volume.

use airway::preprocess::{extract_patches, plan_patches, reassemble, zscore_normalize, AugmentSampler, DEFAULT_PATCH};
use airway::volume::{Role, Volume};

fn main() -> airway::Result<()> {
    let shape = [150, 100, 160];
    let data = (0..shape.iter().product::<usize>()).map(|i| ((i * 7919) % 1000) as f32 - 500.0).collect();
    let ct = Volume::new(shape, [0.8, 0.6, 0.6], data, Role::Intensity)?;
    let norm = zscore_normalize(&ct)?;

    let tiled = plan_patches(shape, DEFAULT_PATCH, DEFAULT_PATCH)?;
    println!("stride = patch: {} patches, padded to {:?}", tiled.origins.len(), tiled.padded_shape);
    let back = reassemble(&extract_patches(&norm, &tiled)?, &tiled)?;
    println!("  exact roundtrip: {}", back == norm);

    let overlap = plan_patches(shape, [64, 64, 64], [48, 48, 48])?;
    let back = reassemble(&extract_patches(&norm, &overlap)?, &overlap)?;
    let err = back.data().iter().zip(norm.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
    println!("overlapping 64^3 / stride 48: {} patches, max error {err:e}", overlap.origins.len());

    let cube = Volume::new([32, 32, 32], [1.0; 3], norm.data()[..32 * 32 * 32].to_vec(), Role::Intensity)?;
    let mut sampler = AugmentSampler::new(3);
    for _ in 0..3 {
        let (_, ops) = sampler.augment(&cube)?;
        println!("augment: {ops:?}");
    }
    Ok(())
}
