mod common;

use common::criteria;
use pemvc::harness::{self, Checkpoint};
use pemvc::model::{Arm, ModelConfig};
use pemvc::synth::{self, Dataset, GenConfig, VOLUME_FILE, VOLUME_HEADER_BYTES};
use pemvc::Error;

#[test]
fn volume_file_size_is_header_plus_floats() {
    let ds = criteria::tiny_dataset(1);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let len = std::fs::metadata(dir.path().join(VOLUME_FILE)).unwrap().len();
    let numel = (ds.records.len() * ds.voxels()) as u64;
    assert_eq!(len, VOLUME_HEADER_BYTES + 4 * numel);
    assert_eq!(VOLUME_HEADER_BYTES, 28);
}

#[test]
fn default_dataset_is_pinned() {
    let ds = synth::generate_split(&GenConfig::default()).unwrap();
    let positives = ds.records.iter().filter(|r| r.label == 1).count();
    assert_eq!(positives, 259);
    let counts = synth::Split::ALL.map(|s| ds.indices(s).len());
    assert_eq!(counts, [410, 51, 51]);
}

#[test]
fn blob_voxels_are_brighter_on_average() {
    let cfg = GenConfig {
        n_patients: 200,
        dims: [1, 8, 12, 12],
        ..GenConfig::default()
    };
    let (ds, truth) = synth::generate_with_truth(&cfg).unwrap();
    let [_, d, h, w] = cfg.dims;
    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for (rec, sig) in ds.records.iter().zip(&truth) {
        if !sig.image {
            assert!(sig.blob.is_none());
            continue;
        }
        for z in 0..d {
            for y in 0..h {
                for x in 0..w {
                    let v = f64::from(rec.volume[(z * h + y) * w + x]);
                    let slot = if sig.in_blob(z, y, x) { &mut inside } else { &mut outside };
                    slot.0 += v;
                    slot.1 += 1;
                }
            }
        }
    }
    let mean_in = inside.0 / inside.1 as f64;
    let mean_out = outside.0 / outside.1 as f64;
    assert!(mean_out.abs() < 0.02, "background mean {mean_out}");
    assert!((mean_in - cfg.blob_intensity).abs() < 0.1 * cfg.blob_intensity, "blob mean {mean_in}");
}

#[test]
fn negatives_carry_no_signal() {
    let (ds, truth) = synth::generate_with_truth(&GenConfig {
        n_patients: 100,
        dims: [1, 4, 4, 4],
        ..GenConfig::default()
    })
    .unwrap();
    for (rec, sig) in ds.records.iter().zip(&truth) {
        if rec.label == 0 {
            assert!(!sig.image && !sig.emr);
        } else {
            assert!(sig.image || sig.emr);
        }
    }
}

#[test]
fn flipped_magic_and_truncation_are_format_errors() {
    let ds = criteria::tiny_dataset(2);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let path = dir.path().join(VOLUME_FILE);
    let good = std::fs::read(&path).unwrap();

    let mut bad = good.clone();
    bad[..4].copy_from_slice(b"VMEP");
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::Format { offset: 0, .. })));

    std::fs::write(&path, &good[..good.len() - 1]).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::Format { .. })));

    std::fs::write(&path, &good[..10]).unwrap();
    assert!(matches!(Dataset::load(dir.path()), Err(Error::Format { .. })));
}

#[test]
fn dataset_and_checkpoint_round_trips() {
    criteria::determinism_and_formats().unwrap();
}

#[test]
fn checkpoint_from_other_arm_is_refused() {
    let ds = criteria::tiny_dataset(4);
    let ckpt = harness::train(&ds, &criteria::tiny_run(Arm::Emr), &ModelConfig::default())
        .unwrap()
        .checkpoint;
    let r = harness::evaluate_as(&ckpt, &ds, synth::Split::Test, Arm::Full);
    assert!(matches!(r, Err(Error::Consistency(_))));
    let bytes = ckpt.to_bytes();
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(matches!(Checkpoint::from_bytes(&longer), Err(Error::Format { .. })));
}
