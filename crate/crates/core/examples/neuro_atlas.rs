//! Coordinate names, centimetre blocks and a region library built from a
//! synthetic atlas.

use raclib::neuro::{block_of, decode_coord, encode_coord, synthetic_atlas, NeuroLibrary, Voxel};

fn main() -> raclib::Result<()> {
    let v = Voxel::new(-41, 12, -35)?;
    let name = encode_coord(v)?;
    println!("{v:?} -> {name} -> block {}", block_of(v)?);
    assert_eq!(decode_coord(&name)?, v);

    let atlas = synthetic_atlas(12, 3);
    let dir = tempfile::tempdir()?;
    let lib = NeuroLibrary::build(dir.path(), &atlas)?;
    println!(
        "{} regions, {} (region, block) groups, {} voxels",
        atlas.len(),
        lib.index().entry_count()?.entries,
        lib.store().record_count()
    );

    let region = atlas.keys().next().expect("non-empty atlas");
    let entries = lib.region_entries(region)?;
    for e in entries.iter().take(5) {
        println!("    {e}");
    }
    let first = &entries[0];
    let voxels = lib.block_voxels(region, &first.block)?;
    println!(
        "{region} block {} holds {} voxels, e.g. {}",
        first.block,
        voxels.len(),
        encode_coord(voxels[0])?
    );

    let mut rebuilt = lib.region_voxels(region)?;
    let mut expected = atlas[region].clone();
    rebuilt.sort();
    expected.sort();
    assert_eq!(rebuilt, expected);
    println!("{region}: all {} voxels recovered", rebuilt.len());
    Ok(())
}
