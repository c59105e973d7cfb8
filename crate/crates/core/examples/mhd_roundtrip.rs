//! Write volumes of every role to MetaImage files and read them back.

use airway::volume::{load_volume, read_header, save_volume, Role, Volume};

fn main() -> airway::Result<()> {
    let dir = std::env::temp_dir().join("airway_mhd_roundtrip");
    std::fs::create_dir_all(&dir).map_err(|e| airway::Error::InvalidArgument(e.to_string()))?;
    let shape = [3, 4, 5];
    let n = 60;
    let volumes = [
        Volume::new(shape, [2.5, 0.7, 0.7], (0..n).map(|i| i as f32 * 10.0 - 300.0).collect(), Role::Intensity)?,
        Volume::new(shape, [1.0; 3], (0..n).map(|i| i as f32 / n as f32).collect(), Role::Probability)?,
        Volume::new(shape, [1.0; 3], (0..n).map(|i| (i % 3 == 0) as u8 as f32).collect(), Role::Binary)?,
        Volume::new(shape, [1.0; 3], (0..n).map(|i| (i % 7) as f32).collect(), Role::Label)?,
    ];
    for v in &volumes {
        let path = dir.join(format!("{}.mhd", v.role()));
        save_volume(v, &path)?;
        let header = read_header(&path)?;
        let back = load_volume(&path, None)?;
        println!(
            "{:<11} ElementType {:<9} DimSize {:<7} identical: {}",
            v.role().to_string(),
            header.get("ElementType").unwrap_or("?"),
            header.get("DimSize").unwrap_or("?"),
            &back == v
        );
    }
    Ok(())
}
