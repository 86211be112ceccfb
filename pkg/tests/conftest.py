"""Shared fixtures: the hand-checkable running example and a small corpus."""

import numpy as np
import pytest

from streamasr.corpus import CorpusConfig, TokenAlignment, Utterance, gen_synthetic_corpus
from streamasr.layout import ChunkingConfig, SpecialTokens


@pytest.fixture
def sp():
    return SpecialTokens()


@pytest.fixture
def chunk4():
    return ChunkingConfig(chunk_frames=4, speech_text_ratio=2)


@pytest.fixture
def running_example():
    """Three tokens over 8 frames: A=10 ends 2, B=11 ends 5, C=12 ends 7.

    With 4-frame chunks and a 2:1 ratio this exercises due-assignment,
    slot fill, and the carry transform without needing a flush segment.
    """
    return Utterance(
        id="ex",
        tokens=[10, 11, 12],
        alignments=[
            TokenAlignment(10, 0, 2),
            TokenAlignment(11, 3, 5),
            TokenAlignment(12, 6, 7),
        ],
        frames=np.zeros((8, 8)),
    )


@pytest.fixture
def edge_example():
    """One token ending exactly on a chunk edge (frame N-1 for N=4).

    Decoded at the chunk boundary the leading token has zero right
    context, which is the case the boundary oracle confuses. Trailing
    silence (frames 6..7) lets later audio resolve it.
    """
    return Utterance(
        id="edge",
        tokens=[13, 20],
        alignments=[
            TokenAlignment(13, 0, 3),
            TokenAlignment(20, 4, 5),
        ],
        frames=np.zeros((8, 8)),
    )


@pytest.fixture(scope="session")
def tiny_corpus():
    return gen_synthetic_corpus(CorpusConfig(num_utterances=12, seed=0))
