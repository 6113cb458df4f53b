"""Tracking, scene-cut rejection, and crop emission."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jagan.curation import (Track, dhash, emit_track_crops, filter_sequences,
                            hamming, has_scene_cut, iou, track_sequence,
                            track_step, write_dataset)
from jagan.preprocess import BoundingBox, resize_bilinear

from .conftest import gradient_frame
from . import oracles


def bb(*t):
    return BoundingBox(*t)


boxes_strategy = st.lists(
    st.tuples(st.integers(0, 40), st.integers(0, 40),
              st.integers(1, 20), st.integers(1, 20)).map(
        lambda t: bb(t[0], t[1], t[0] + t[2], t[1] + t[3])),
    max_size=5)


class TestIou:
    def test_identical(self):
        assert iou(bb(3, 4, 10, 12), bb(3, 4, 10, 12)) == 1.0

    def test_disjoint_exactly_zero(self):
        assert iou(bb(0, 0, 10, 10), bb(10, 0, 20, 10)) == 0.0
        assert iou(bb(0, 0, 10, 10), bb(50, 50, 60, 60)) == 0.0

    def test_half_overlap_is_one_third(self):
        assert iou(bb(0, 0, 10, 10), bb(5, 0, 15, 10)) == 1 / 3

    @given(boxes_strategy, boxes_strategy)
    @settings(max_examples=50, deadline=None)
    def test_bounds_and_symmetry(self, xs, ys):
        for a in xs:
            for b in ys:
                v = iou(a, b)
                assert 0.0 <= v <= 1.0
                assert v == iou(b, a)

    def test_matches_oracle(self, rng):
        for _ in range(100):
            a = rng.integers(0, 30, 2)
            b = rng.integers(1, 20, 2)
            c = rng.integers(0, 30, 2)
            d = rng.integers(1, 20, 2)
            b1 = bb(a[0], a[1], a[0] + b[0], a[1] + b[1])
            b2 = bb(c[0], c[1], c[0] + d[0], c[1] + d[1])
            assert iou(b1, b2) == oracles.box_iou(b1.as_tuple(), b2.as_tuple())


class TestTrackStep:
    def test_good_overlap_extends(self):
        tracks = [Track(0, 0, [bb(0, 0, 10, 10)])]
        out = track_step(tracks, [bb(0, 0, 10, 9)], sigma_iou=0.5, frame=1)
        assert len(out) == 1
        assert len(out[0]) == 2
        assert out[0].state == "active"

    def test_poor_overlap_finishes_and_opens(self):
        tracks = [Track(0, 0, [bb(0, 0, 10, 10)])]
        out = track_step(tracks, [bb(8, 8, 18, 18)], sigma_iou=0.5, frame=1)
        assert len(out) == 2
        assert out[0].state == "finished" and len(out[0]) == 1
        assert out[1].state == "active" and out[1].start_frame == 1
        assert out[1].track_id == 1

    def test_greedy_prefers_best_global_pair(self):
        # iou matrix ~ [[0.90, 0.55], [0.61, 0.80]]: greedy takes the 0.90
        # pair, then the 0.80 pair
        t0, t1 = Track(0, 0, [bb(0, 0, 10, 10)]), Track(1, 0, [bb(2, 0, 12, 10)])
        d0, d1 = bb(0, 0, 10, 9), bb(2, 0, 12, 8)
        assert iou(t0.last_box, d0) == pytest.approx(0.9)
        assert iou(t1.last_box, d1) == pytest.approx(0.8)
        out = track_step([t0, t1], [d0, d1], sigma_iou=0.5, frame=1)
        assert out[0].boxes[-1] == d0
        assert out[1].boxes[-1] == d1
        assert all(t.state == "active" for t in out)

    def test_each_detection_used_once(self):
        t0, t1 = Track(0, 0, [bb(0, 0, 10, 10)]), Track(1, 0, [bb(1, 0, 11, 10)])
        out = track_step([t0, t1], [bb(0, 0, 10, 10)], sigma_iou=0.5, frame=1)
        extended = [t for t in out if len(t) == 2]
        assert len(extended) == 1
        assert extended[0].track_id == 0  # exact hit beats the 0.82 overlap

    def test_finished_tracks_ignored(self):
        done = Track(0, 0, [bb(0, 0, 10, 10)], finished=True)
        out = track_step([done], [bb(0, 0, 10, 10)], sigma_iou=0.5, frame=5)
        assert len(out) == 2
        assert len(done) == 1

    @given(st.lists(boxes_strategy, min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_detections_partition_into_tracks(self, per_frame):
        tracks = track_sequence(per_frame)
        total = sum(len(dets) for dets in per_frame)
        assert sum(len(t) for t in tracks) == total
        assert all(t.finished for t in tracks)
        # per frame, the tracks covering it hold exactly that frame's boxes
        for f, dets in enumerate(per_frame):
            covering = sorted(t.boxes[f - t.start_frame].as_tuple() for t in tracks
                              if t.start_frame <= f < t.start_frame + len(t))
            assert covering == sorted(d.as_tuple() for d in dets)

    def test_matches_matrix_oracle(self, rng):
        for trial in range(50):
            tracks = [Track(i, 0, [bb(*sorted_box(rng))]) for i in range(rng.integers(0, 4))]
            dets = [bb(*sorted_box(rng)) for _ in range(rng.integers(0, 4))]
            matrix = [[oracles.box_iou(t.last_box.as_tuple(), d.as_tuple())
                       for d in dets] for t in tracks]
            want = sorted((r, dets[c].as_tuple())
                          for r, c in oracles.greedy_matrix_matching(matrix, 0.3))
            before = [len(t) for t in tracks]
            out = track_step([Track(t.track_id, 0, list(t.boxes)) for t in tracks],
                             dets, sigma_iou=0.3, frame=1)
            got = sorted((ti, out[ti].boxes[-1].as_tuple())
                         for ti in range(len(tracks)) if len(out[ti]) > before[ti])
            assert got == want


def sorted_box(rng):
    x0, y0 = rng.integers(0, 20, 2)
    w, h = rng.integers(4, 15, 2)
    return int(x0), int(y0), int(x0 + w), int(y0 + h)


class TestDhash:
    def test_constant_frame_hashes_zero(self):
        assert dhash(np.zeros((16, 16, 3), dtype=np.float32)) == 0

    def test_increasing_columns_set_all_bits(self):
        xx = np.linspace(-1, 1, 18, dtype=np.float32)
        frame = np.repeat(np.tile(xx, (16, 1))[:, :, None], 3, axis=2)
        assert dhash(frame) == 2 ** 64 - 1

    def test_brightness_offset_invariant(self):
        yy, xx = np.mgrid[0:32, 0:32]
        px = (10 + xx * 5 + yy * 2).astype(np.float32)
        frame = np.repeat((px / 127.5 - 1.0)[:, :, None], 3, axis=2)
        shifted = frame + np.float32(4 / 127.5)
        # the offset is +4 luma on the 0-255 scale, a pure shift
        assert dhash(frame) == dhash(shifted)

    def test_downscale_is_near_duplicate(self):
        frame = gradient_frame(64, 64, seed=12)
        half = resize_bilinear(frame, 32, 32)
        assert hamming(dhash(frame), dhash(half)) <= 2

    def test_hamming_values(self):
        assert hamming(0, 0) == 0
        assert hamming(0, 2 ** 64 - 1) == 64
        assert hamming(0b1000, 0b0000) == 1


class TestSceneCut:
    def test_static_clip_has_no_cut(self):
        frames = [gradient_frame(24, 24, seed=1)] * 10
        assert not has_scene_cut(frames, 0, 10)

    def test_inverted_content_is_a_cut(self):
        a = gradient_frame(24, 24, seed=1)
        frames = [a] * 5 + [-a] * 5
        assert has_scene_cut(frames, 0, 10)
        assert not has_scene_cut(frames, 0, 5)
        assert not has_scene_cut(frames, 5, 5)


class TestEmitCrops:
    def test_crop_geometry(self):
        frames = [gradient_frame(96, 96, seed=3)] * 4
        track = Track(2, 0, [bb(40, 40, 56, 56)] * 4, finished=True)
        seq = emit_track_crops(frames, track, resolution=256)
        assert len(seq) == 4
        assert seq.frames[0].shape == (256, 256, 3)
        # squared box remapped into crop coords: (16, 16, 32, 32) * 256/48
        assert seq.boxes[0] == [[85, 85, 171, 171]]

    def test_respects_start_frame(self):
        frames = [np.full((64, 64, 3), v, dtype=np.float32)
                  for v in np.linspace(-1, 1, 6)]
        track = Track(0, 3, [bb(20, 20, 36, 36)] * 2, finished=True)
        seq = emit_track_crops(frames, track, resolution=32)
        assert np.allclose(seq.frames[0], frames[3][0, 0, 0])
        assert np.allclose(seq.frames[1], frames[4][0, 0, 0])


class TestFilterSequences:
    @staticmethod
    def _pan(n, h=80, w=80):
        frame = gradient_frame(h, w, seed=5)
        frames = [frame] * n
        dets = [[(10 + i, 20, 26 + i, 36)] for i in range(n)]
        return frames, dets

    def test_29_frames_rejected(self):
        frames, dets = self._pan(29)
        assert filter_sequences(frames, dets, resolution=32) == []

    def test_30_frames_accepted(self):
        frames, dets = self._pan(30)
        out = filter_sequences(frames, dets, resolution=32)
        assert len(out) == 1
        assert len(out[0]) == 30
        assert out[0].sequence_id == "seq00000"
        assert out[0].frames[0].shape == (32, 32, 3)
        assert all(len(b) == 1 for b in out[0].boxes)

    def test_scene_cut_rejects_whole_track(self):
        frames, dets = self._pan(40)
        frames = list(frames)
        inverted = -frames[0]
        for i in range(15, 40):
            frames[i] = inverted
        assert filter_sequences(frames, dets, resolution=32) == []

    def test_cut_outside_track_span_is_harmless(self):
        frames, dets = self._pan(36)
        frames = list(frames)
        frames[34] = -frames[0]
        frames[35] = -frames[0]
        dets = dets[:33] + [[], [], []]  # track ends before the cut
        out = filter_sequences(frames, dets, resolution=32)
        assert len(out) == 1
        assert len(out[0]) == 33

    def test_matches_reference_counts(self, rng):
        for trial in range(5):
            n = int(rng.integers(40, 80))
            frames, dets = self._pan(n)
            # drop random frames' detections to split tracks
            dets = [d if rng.random() > 0.05 else [] for d in dets]
            out = filter_sequences(frames, dets, min_len=10, resolution=16)
            hashes = [dhash(f) for f in frames]
            want = oracles.filter_reference(dets, hashes, 0.5, 10, 10)
            assert sorted(len(s) for s in out) == sorted(n for _, n in want)


class TestWriteDataset:
    def test_manifest(self, tmp_path):
        frames, dets = TestFilterSequences._pan(30)
        seqs = filter_sequences(frames, dets, resolution=32)
        split_dir = write_dataset(seqs, tmp_path, split="train")
        manifest = json.loads((split_dir / "manifest.json").read_text())
        assert manifest["split"] == "train"
        assert manifest["sequences"] == 1
        assert manifest["initial_frames"] == 1
        assert manifest["total_frames"] == 30
        assert manifest["total_faces"] == 30
        assert manifest["crop_resolution"] == 32
        assert (split_dir / "seq00000" / "frame_00000.png").exists()
        assert (split_dir / "seq00000" / "boxes.json").exists()
