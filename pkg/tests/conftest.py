import pytest
from hypothesis import settings

from kframe.model import Instance

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make(k, n, arrivals, name="t"):
    """Instance from {(frame, j): phase}."""
    return Instance.from_arrivals(k, n, [(t, p) for p, t in sorted(arrivals.items(), key=lambda x: (x[1], x[0]))],
                                  name=name)


@pytest.fixture
def tiny():
    # two frames, k=2: frame 1 at phases 0/1, frame 2 at phases 0/2
    return make(2, 2, {(1, 1): 0, (2, 1): 0, (1, 2): 1, (2, 2): 2})
