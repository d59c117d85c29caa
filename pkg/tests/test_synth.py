import json

import numpy as np
import pytest

from laps.detector import DetectorConfig, detect
from laps.encoder import EncoderConfig, encode_stream
from laps.errors import DataError
from laps.stream_io import read_ground_truth, read_keypoint_clip, write_keypoint_clip
from laps.synth import SynthSpec, action_intervals, generate, generate_corpus


def test_zero_action_phases_no_boundaries():
    spec = SynthSpec(seed=1, n_action_phases=0, idle_range_s=(3.0, 3.0))
    clip, gt, labels = generate(spec)
    assert len(gt.boundaries_s) == 0
    assert labels == []
    stream = encode_stream(clip, EncoderConfig(seed=0))
    assert detect(stream, DetectorConfig(theta_on=1.0)) == []


def test_schedule_arithmetic():
    spec = SynthSpec(seed=2, n_action_phases=1,
                     idle_range_s=(1.0, 1.0), action_range_s=(2.0, 2.0))
    clip, gt, labels = generate(spec)
    assert len(gt.boundaries_s) == 2
    start, end = gt.boundaries_s
    assert round((end - start) * spec.fps) == 60
    assert len(labels) == 1
    # idle(30) + action(60) + idle(30)
    assert clip.frames == 120


def test_same_seed_identical_bytes(tmp_path):
    spec = SynthSpec(seed=77, n_action_phases=3)
    clip_a, _, _ = generate(spec)
    clip_b, _, _ = generate(spec)
    a, b = tmp_path / "a.kpc", tmp_path / "b.kpc"
    write_keypoint_clip(clip_a, a)
    write_keypoint_clip(clip_b, b)
    assert a.read_bytes() == b.read_bytes()


def test_boundary_count_is_twice_action_phases():
    for phases in (1, 3, 6):
        _, gt, labels = generate(SynthSpec(seed=5, n_action_phases=phases))
        assert len(gt.boundaries_s) == 2 * phases
        assert len(labels) == phases
        assert len(action_intervals(gt)) == phases


def test_labels_within_template_range():
    _, _, labels = generate(SynthSpec(seed=9, n_actions=3, n_action_phases=12))
    assert set(labels) <= {0, 1, 2}


def test_spec_validation():
    with pytest.raises(DataError):
        SynthSpec(n_points=2)
    with pytest.raises(DataError):
        SynthSpec(idle_range_s=(2.0, 1.0))
    with pytest.raises(DataError, match="separability"):
        SynthSpec(action_amplitude=0.5, idle_jitter_sigma=0.15)
    # amplitude floor not enforced when nothing moves
    SynthSpec(action_amplitude=0.5, idle_jitter_sigma=0.15, n_action_phases=0)


def test_empty_corpus(tmp_path):
    manifest = generate_corpus(SynthSpec(seed=0), 0, tmp_path / "corpus")
    assert manifest["streams"] == []
    assert (tmp_path / "corpus" / "manifest.json").is_file()


def test_corpus_files_and_distinct_seeds(tmp_path):
    spec = SynthSpec(seed=4, n_action_phases=2)
    manifest = generate_corpus(spec, 5, tmp_path / "corpus")
    assert len(manifest["streams"]) == 5
    clips = []
    for item in manifest["streams"]:
        clip = read_keypoint_clip(tmp_path / "corpus" / item["clip"])
        gt = read_ground_truth(tmp_path / "corpus" / item["ground_truth"])
        labels = json.loads((tmp_path / "corpus" / item["labels"]).read_text())
        assert len(labels["templates"]) == len(gt.boundaries_s) // 2
        clips.append(clip)
    # distinct derived seeds give distinct streams
    assert not np.array_equal(clips[0].tracks[:50], clips[1].tracks[:50])


def test_template_proportions_binomial(tmp_path):
    # 100 short streams; per-phase template draws are uniform over 3 templates
    spec = SynthSpec(seed=123, n_action_phases=4, idle_range_s=(0.5, 1.0),
                     action_range_s=(0.5, 1.0))
    counts = np.zeros(3, dtype=int)
    children = np.random.SeedSequence(spec.seed).spawn(100)
    for child in children:
        sub = SynthSpec(seed=int(child.generate_state(1)[0]), n_action_phases=4,
                        idle_range_s=(0.5, 1.0), action_range_s=(0.5, 1.0))
        _, _, labels = generate(sub)
        for lab in labels:
            counts[lab] += 1
    total = counts.sum()
    expected = total / 3
    sigma = np.sqrt(total * (1 / 3) * (2 / 3))
    assert np.all(np.abs(counts - expected) <= 3 * sigma)


def test_action_intervals_requires_even_boundaries():
    from laps.stream_io import GroundTruth
    with pytest.raises(DataError):
        action_intervals(GroundTruth(boundaries_s=np.asarray([1.0, 2.0, 3.0])))
