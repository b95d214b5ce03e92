//! Write an embedding set to EMB1, inspect the header bytes and read it
//! back.
//!
//!     cargo run --example emb1_roundtrip

use embalign::data::{read_emb1, write_emb1, EmbeddingSet};

fn main() -> embalign::Result<()> {
    let set = EmbeddingSet::new(
        3,
        4,
        (0..12).map(|i| i as f32 * 0.5).collect(),
        vec!["s0".into(), "s1".into(), "s2".into()],
        "fr",
        Some(vec!["un chien".into(), "deux chats".into(), "un vélo".into()]),
    )?;
    let path = std::env::temp_dir().join("embalign-example.emb1");
    write_emb1(&set, &path)?;

    let bytes = std::fs::read(&path).expect("just written");
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    println!("magic   {:?}", std::str::from_utf8(&bytes[..4]).unwrap());
    println!("version {} dtype {} n {} d {}", u32_at(4), u32_at(8), u64_at(12), u64_at(20));
    let meta_at = 28 + 4 * 12;
    let meta_len = u64_at(meta_at) as usize;
    println!("meta    {}", std::str::from_utf8(&bytes[meta_at + 8..meta_at + 8 + meta_len]).unwrap());

    let back = read_emb1(&path)?;
    assert_eq!(back, set);
    println!("{} bytes, roundtrip exact", bytes.len());
    Ok(())
}
