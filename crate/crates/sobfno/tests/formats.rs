use std::fs;

use proptest::prelude::*;
use sobfno::container::{self, FormatError};
use sobfno::{checkpoint, dataset};
use sobfno_core::burgers::SolverConfig;
use sobfno_core::datagen::{build_dataset, Dataset, SamplerConfig};
use sobfno_core::fno::{init_params, FnoConfig};

fn small_dataset() -> Dataset {
    let solver = SolverConfig { n: 32, dt: 1e-2, ..Default::default() };
    build_dataset(&SamplerConfig { seed: 8, ..Default::default() }, &solver, 3, 2).unwrap()
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.sfd");
    let d = small_dataset();
    dataset::save(&p, &d).unwrap();
    assert_eq!(dataset::load(&p).unwrap(), d);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.ckpt");
    let params = init_params(&FnoConfig::new(3, 5), 4).unwrap();
    checkpoint::save(&p, &params, 17, "best").unwrap();
    let (back, meta) = checkpoint::load(&p).unwrap();
    assert_eq!(back, params);
    assert_eq!(meta.epoch, 17);
    assert_eq!(meta.tag, "best");
}

#[test]
fn failures_are_distinguished() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.sfd");
    dataset::save(&p, &small_dataset()).unwrap();
    let good = fs::read(&p).unwrap();

    let mut bad = good.clone();
    let last = bad.len() - 1;
    bad[last] ^= 0x40;
    fs::write(&p, &bad).unwrap();
    assert!(matches!(dataset::load(&p), Err(FormatError::Checksum { .. })));

    fs::write(&p, &good[..good.len() - 8]).unwrap();
    assert!(matches!(dataset::load(&p), Err(FormatError::Malformed(_))));

    let hlen = u64::from_le_bytes(good[8..16].try_into().unwrap()) as usize;
    let header = String::from_utf8(good[16..16 + hlen].to_vec()).unwrap();
    let bumped = header.replace("\"format_version\":1", "\"format_version\":2");
    let mut v2 = container::MAGIC.to_vec();
    v2.extend((bumped.len() as u64).to_le_bytes());
    v2.extend(bumped.as_bytes());
    v2.extend(&good[16 + hlen..]);
    fs::write(&p, &v2).unwrap();
    assert!(matches!(dataset::load(&p), Err(FormatError::Version { found: 2, .. })));

    fs::write(&p, b"not a sobfno file at all").unwrap();
    assert!(matches!(dataset::load(&p), Err(FormatError::BadMagic)));

    let c = dir.path().join("c.ckpt");
    checkpoint::save(&c, &init_params(&FnoConfig::new(1, 1), 0).unwrap(), 0, "init").unwrap();
    assert!(matches!(dataset::load(&c), Err(FormatError::WrongKind { .. })));
    assert!(matches!(dataset::load(&dir.path().join("missing")), Err(FormatError::Io(_))));
}

#[test]
fn checkpoint_with_mismatched_layout_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.ckpt");
    let meta = checkpoint::CheckpointMeta {
        config: FnoConfig::new(2, 2),
        epoch: 0,
        tag: "init".into(),
    };
    container::write_file(&p, checkpoint::KIND, &meta, &[1.0, 2.0]).unwrap();
    assert!(matches!(checkpoint::load(&p), Err(FormatError::Core(_))));
}

proptest! {
    #[test]
    fn container_preserves_every_bit(bits in proptest::collection::vec(any::<u64>(), 0..64), tag in "[a-z]{1,8}") {
        let payload: Vec<f64> = bits.iter().map(|b| f64::from_bits(*b)).collect();
        let mut buf = Vec::new();
        container::write_to(&mut buf, &tag, &serde_json::json!({"n": payload.len()}), &payload).unwrap();
        let (header, back) = container::read_from(buf.as_slice()).unwrap();
        prop_assert_eq!(header.kind, tag);
        prop_assert_eq!(back.len(), payload.len());
        for (a, b) in payload.iter().zip(&back) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn any_single_payload_flip_is_caught(len in 1usize..32, pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let payload: Vec<f64> = (0..len).map(|i| i as f64 * 0.5).collect();
        let mut buf = Vec::new();
        container::write_to(&mut buf, "t", &serde_json::json!(null), &payload).unwrap();
        let start = buf.len() - 8 * len;
        let at = start + pos.index(8 * len);
        buf[at] ^= 1 << bit;
        let caught = matches!(container::read_from(buf.as_slice()), Err(FormatError::Checksum { .. }));
        prop_assert!(caught);
    }
}
