use std::fs;

use fado::io::{read_stream, write_stream};
use fado::scene::{
    decode_pgm, encode_pgm, gen_synthetic_clips, load_pgm_sequence, read_packed,
    run_scene_detection, run_scene_detection_from, scene_detector, snapshot_pixels,
    timeline_to_csv, write_memory_snapshot, write_packed, FrameSequence, SceneError,
};
use fado::streamgen::{gen_realizable_stream, StreamSpec};
use fado::{bounds::GroundTruth, Vector};

#[test]
fn vector_stream_files_round_trip_in_both_formats() {
    let dir = tempfile::tempdir().unwrap();
    let truth = GroundTruth::new(Vector::filled(3, 2.0).unwrap(), 1.0, 0.1).unwrap();
    let (stream, _) = gen_realizable_stream(&StreamSpec::ball(truth, 200, 8)).unwrap();
    for name in ["s.bin", "s.csv"] {
        let path = dir.path().join(name);
        write_stream(&path, 3, &stream).unwrap();
        assert_eq!(read_stream(&path).unwrap(), stream, "{name}");
    }
}

#[test]
fn pgm_sequence_loading() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.pgm");
    let b = dir.path().join("b.pgm");
    let c = dir.path().join("c.pgm");
    fs::write(&a, encode_pgm(2, 2, &[0, 255, 128, 64])).unwrap();
    fs::write(&b, encode_pgm(2, 2, &[1, 2, 3, 4])).unwrap();
    fs::write(&c, encode_pgm(3, 1, &[1, 2, 3])).unwrap();

    let seq = load_pgm_sequence(&[&a, &b]).unwrap();
    assert_eq!((seq.width, seq.height, seq.len()), (2, 2, 2));
    assert_eq!(seq.frames[0], vec![0, 255, 128, 64]);

    match load_pgm_sequence(&[&a, &c]) {
        Err(SceneError::DimensionMismatch { index, .. }) => assert_eq!(index, 1),
        other => panic!("unexpected {other:?}"),
    }
    fs::write(&c, b"P6\n1 1\n255\n\0\0\0").unwrap();
    assert!(matches!(
        load_pgm_sequence(&[&a, &c]),
        Err(SceneError::Format { index: 1, .. })
    ));
}

#[test]
fn snapshot_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, _) = gen_synthetic_clips(6, 5, 2, 10, 4, 3);
    let (_, det) = run_scene_detection(&seq, 1.0, 1.0).unwrap();
    let path = dir.path().join("w.pgm");
    write_memory_snapshot(&det, 6, 5, &path).unwrap();
    let img = decode_pgm(&fs::read(&path).unwrap()).unwrap();
    assert_eq!((img.width, img.height), (6, 5));
    assert_eq!(img.pixels, snapshot_pixels(det.center()));
    assert!(matches!(
        write_memory_snapshot(&det, 5, 5, &path),
        Err(SceneError::StateDimension { .. })
    ));

    let zero = scene_detector(4, 1.0, 1.0).unwrap();
    write_memory_snapshot(&zero, 2, 2, &path).unwrap();
    assert_eq!(
        decode_pgm(&fs::read(&path).unwrap()).unwrap().pixels,
        vec![0; 4]
    );
}

#[test]
fn packed_frames_and_timeline_files() {
    let dir = tempfile::tempdir().unwrap();
    let (seq, cuts) = gen_synthetic_clips(8, 8, 4, 12, 6, 21);
    let packed = dir.path().join("frames.bin");
    write_packed(&seq, &packed).unwrap();
    let back = read_packed(&packed).unwrap();
    assert_eq!(back.frames, seq.frames);

    let (tl, _) = run_scene_detection(&back, 2.0, 1.0).unwrap();
    let p1 = dir.path().join("t1.csv");
    let p2 = dir.path().join("t2.csv");
    timeline_to_csv(&tl, Some(&cuts), &p1).unwrap();
    let (tl2, _) = run_scene_detection(&seq, 2.0, 1.0).unwrap();
    timeline_to_csv(&tl2, Some(&cuts), &p2).unwrap();
    assert_eq!(fs::read(&p1).unwrap(), fs::read(&p2).unwrap());
    let text = fs::read_to_string(&p1).unwrap();
    assert_eq!(
        text.lines().filter(|l| !l.starts_with('#')).count(),
        1 + seq.len()
    );
    assert_eq!(
        text.lines().filter(|l| l.starts_with("# latency")).count(),
        cuts.len()
    );
}

#[test]
fn resuming_a_scene_run_matches_one_pass() {
    let (seq, _) = gen_synthetic_clips(5, 5, 3, 20, 5, 4);
    let (whole, det) = run_scene_detection(&seq, 1.5, 1.0).unwrap();
    let head = FrameSequence::new(5, 5, seq.frames[..25].to_vec(), "head").unwrap();
    let tail = FrameSequence::new(5, 5, seq.frames[25..].to_vec(), "tail").unwrap();
    let (first, d1) = run_scene_detection(&head, 1.5, 1.0).unwrap();
    let mut resumed = fado::Detector::from_checkpoint(&d1.to_checkpoint()).unwrap();
    let second = run_scene_detection_from(&mut resumed, &tail, 25).unwrap();
    let joined: Vec<_> = first
        .records
        .iter()
        .chain(&second.records)
        .copied()
        .collect();
    assert_eq!(joined, whole.records);
    assert_eq!(resumed.to_checkpoint(), det.to_checkpoint());
}
