"""Spectral (Hankel trace-norm) regularization for sequence models."""

from .hankel import (
    HankelBlock,
    TauSampler,
    build_block,
    length_slice,
    masked_trace_norm,
    naive_block,
    numerical_rank,
    roulette_block,
    sample_tau,
    singular_spectrum,
    trace_norm,
    trace_norm_subgradient,
    word_gradient_weights,
)
from .strings import BINARY, Alphabet, Word
from .tomita import GrammarId, generate_dataset, is_member
from .wfa import Wfa, evaluate, random_wfa, wfa_from_dfa

__version__ = "0.1.0"
