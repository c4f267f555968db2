import cv2
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from s2vs.errors import EmptyVideoError, FormatError, IngestError
from s2vs.video import (CorpusSpec, FrameSequence, generate_synthetic_corpus, load_video, read_corpus, read_features,
                        sample_training_clip, write_corpus, write_features)


def _write_video(path, n_frames, fps, size=(64, 48)):
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, size)
    assert writer.isOpened()
    for i in range(n_frames):
        writer.write(np.full((size[1], size[0], 3), (i * 8) % 256, np.uint8))
    writer.release()


def test_empty_sequence_rejected():
    with pytest.raises(EmptyVideoError):
        FrameSequence(np.zeros((0, 4, 4, 3)))


def test_frame_directory_short_side_resize(tmp_path):
    for i in range(2):
        cv2.imwrite(str(tmp_path / f"{i:03d}.png"), np.full((480, 640, 3), 100 + i, np.uint8))
    seq = load_video(tmp_path, short_side=256)
    assert seq.frames.shape == (2, 256, 341, 3)
    assert seq.frames.dtype == np.float32
    assert 0.0 <= seq.frames.min() and seq.frames.max() <= 1.0


def test_video_file_sampled_at_one_fps(tmp_path):
    path = tmp_path / "clip.avi"
    _write_video(path, n_frames=30, fps=10)
    seq = load_video(path, short_side=None)
    assert len(seq) == 3
    # frames 0, 10, 20 were written with grey levels 0, 80, 160
    np.testing.assert_allclose(seq.frames[:, 0, 0, 0] * 255, [0, 80, 160], atol=4)
    assert seq.source_id == "clip"


def test_missing_and_corrupt_inputs(tmp_path):
    with pytest.raises(IngestError):
        load_video(tmp_path / "nope.mp4")
    bad = tmp_path / "bad.mp4"
    bad.write_bytes(b"not a video" * 50)
    with pytest.raises(IngestError):
        load_video(bad)
    empty_dir = tmp_path / "empty"
    empty_dir.mkdir()
    with pytest.raises(EmptyVideoError):
        load_video(empty_dir)


def test_training_clip_from_long_video(rng):
    seq = FrameSequence(np.arange(100, dtype=np.float32)[:, None, None, None] * np.ones((1, 2, 2, 3)) / 100)
    starts = set()
    for _ in range(200):
        clip = sample_training_clip(seq, 64, rng)
        idx = np.round(clip.frames[:, 0, 0, 0] * 100).astype(int)
        assert len(idx) == 64
        assert np.all(np.diff(idx) == 1)
        starts.add(idx[0])
    assert min(starts) >= 0 and max(starts) <= 36


@given(st.integers(1, 20), st.integers(1, 50))
def test_training_clip_tiles_short_video(n, target):
    seq = FrameSequence(np.arange(n, dtype=np.float32)[:, None, None, None] * np.ones((1, 1, 1, 3)))
    clip = sample_training_clip(seq, target, np.random.default_rng(0))
    assert len(clip) == target
    if n < target:
        np.testing.assert_array_equal(clip.frames[:, 0, 0, 0], np.arange(target) % n)


def test_synthetic_corpus_deterministic_and_round_trips(tmp_path):
    spec = CorpusSpec(num_videos=3, duration_range=(4, 6), motif_count=1, seed=5, frame_size=(32, 40))
    a = generate_synthetic_corpus(spec)
    b = generate_synthetic_corpus(spec)
    assert [v.source_id for v in a] == ["vid0000", "vid0001", "vid0002"]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.frames, y.frames)
        assert 4 <= len(x) <= 6
        assert x.frames.shape[1:] == (32, 40, 3)
    root = write_corpus(a, tmp_path / "corpus", spec)
    back = read_corpus(root)
    for x, y in zip(a, back):
        assert x.source_id == y.source_id
        np.testing.assert_array_equal(x.frames, y.frames)


def test_corpus_spec_validation():
    with pytest.raises(ValueError):
        CorpusSpec(num_videos=1)
    with pytest.raises(ValueError):
        CorpusSpec(duration_range=(10, 5))


def test_feature_file_round_trip(tmp_path, rng):
    feats = rng.normal(size=(5, 9, 16)).astype(np.float32)
    path = tmp_path / "f.s2vf"
    write_features(feats, path)
    np.testing.assert_array_equal(read_features(path), feats)


def test_feature_file_errors(tmp_path, rng):
    path = tmp_path / "f.s2vf"
    write_features(rng.normal(size=(2, 3, 4)), path)
    data = path.read_bytes()
    (tmp_path / "magic.s2vf").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(FormatError):
        read_features(tmp_path / "magic.s2vf")
    (tmp_path / "version.s2vf").write_bytes(data[:4] + (7).to_bytes(4, "little") + data[8:])
    with pytest.raises(FormatError, match="version 7"):
        read_features(tmp_path / "version.s2vf")
    (tmp_path / "short.s2vf").write_bytes(data[:-4])
    with pytest.raises(FormatError):
        read_features(tmp_path / "short.s2vf")
    with pytest.raises(ValueError):
        write_features(np.full((1, 1, 1), np.nan), tmp_path / "nan.s2vf")
