import pytest

from circtz.evaluation import featurize_corpus
from circtz.synth import SynthSpec, generate_corpus

TINY_OFFSETS = [-300, -60, 0, 120, 330, 600]


@pytest.fixture(scope="session")
def tiny_corpus():
    """Six offset classes (one half-hour zone), two members each."""
    template = SynthSpec(n_days=60, mean_daily_events=150.0, seed=0)
    return generate_corpus(
        TINY_OFFSETS, 2, template=template, rotate_families=False, seed=11
    )


@pytest.fixture(scope="session")
def tiny_features(tiny_corpus):
    return featurize_corpus(tiny_corpus.series)
