import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_clip(tracks, fps=30.0, source_id="test"):
    from laps.stream_io import KeypointClip
    return KeypointClip(tracks=np.asarray(tracks, dtype=np.float32), fps=fps,
                        source_id=source_id).validate()


def make_stream(vectors, codes=None, fps=30.0, codebook_size=None, frames=None):
    from laps.stream_io import LatentStream
    vectors = np.asarray(vectors, dtype=np.float32)
    if codes is None:
        codes = np.arange(len(vectors))
    codes = np.asarray(codes, dtype=np.int64)
    if codebook_size is None:
        codebook_size = int(codes.max()) + 1 if len(codes) else 1
    if frames is None:
        frames = np.arange(len(vectors))
    return LatentStream(vectors=vectors, codes=codes, codebook_size=codebook_size,
                        frame_of_step=np.asarray(frames, dtype=np.int64),
                        fps=fps, source_id="test").validate()
