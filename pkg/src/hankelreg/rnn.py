"""Next-symbol tanh RNN language model and the string function it defines.

The model reads BOS followed by the word and, after every step, predicts the
next symbol or EOS. The function on words is

    f(w) = P(w_1) P(w_2 | w_1) ... P(w_k | w_<k) P(EOS | w),

a subprobability over all words. Words that share prefixes share hidden
states: every evaluation and gradient here runs over a prefix trie, one
recurrent step per trie node, vectorized across each trie level.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .strings import Alphabet, PrefixTrie, Word, build_trie, enumerate_words


@dataclass
class RnnParams:
    embedding: np.ndarray  # (K + 2) x (K + 2); rows: symbols, BOS, EOS
    input_weights: np.ndarray  # h x (K + 2)
    recurrent_weights: np.ndarray  # h x h
    hidden_bias: np.ndarray  # h
    output_weights: np.ndarray  # (K + 1) x h; rows: symbols, EOS
    output_bias: np.ndarray  # K + 1

    @property
    def alphabet_size(self) -> int:
        return self.output_bias.shape[0] - 1

    @property
    def hidden_size(self) -> int:
        return self.hidden_bias.shape[0]

    def arrays(self) -> dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def map(self, fn: Callable[..., np.ndarray], *others: "RnnParams") -> "RnnParams":
        return RnnParams(**{
            name: fn(arr, *(getattr(o, name) for o in others)) for name, arr in self.arrays().items()
        })

    def copy(self) -> "RnnParams":
        return self.map(np.copy)

    def zeros_like(self) -> "RnnParams":
        return self.map(np.zeros_like)

    def ravel(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays().values()])

    def unravel(self, flat: np.ndarray) -> "RnnParams":
        out, pos = {}, 0
        for name, a in self.arrays().items():
            out[name] = np.asarray(flat[pos : pos + a.size], dtype=float).reshape(a.shape).copy()
            pos += a.size
        if pos != flat.size:
            raise ValueError(f"flat vector has {flat.size} entries, expected {pos}")
        return RnnParams(**out)


def init_params(seed: int, hidden: int = 50, alphabet_size: int = 2) -> RnnParams:
    rng = np.random.default_rng(seed)
    s = 1.0 / np.sqrt(hidden)
    vocab = alphabet_size + 2
    shapes = {
        "embedding": (vocab, vocab),
        "input_weights": (hidden, vocab),
        "recurrent_weights": (hidden, hidden),
        "hidden_bias": (hidden,),
        "output_weights": (alphabet_size + 1, hidden),
        "output_bias": (alphabet_size + 1,),
    }
    return RnnParams(**{name: rng.uniform(-s, s, shape) for name, shape in shapes.items()})


def zero_params(hidden: int = 50, alphabet_size: int = 2) -> RnnParams:
    return init_params(0, hidden, alphabet_size).zeros_like()


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


# ---------------------------------------------------------------------------
# single-word reference path


@dataclass(frozen=True)
class ForwardTrace:
    hidden: np.ndarray  # (|w| + 1) x h
    probs: np.ndarray  # (|w| + 1) x (K + 1); row t predicts token t + 1


def forward(p: RnnParams, w: Sequence[int]) -> ForwardTrace:
    k = p.alphabet_size
    for s in w:
        if not 0 <= s < k:
            raise ValueError(f"symbol {s} outside alphabet of size {k}")
    tokens = [k, *w]  # BOS then the word
    hs, ps = [], []
    h = np.zeros(p.hidden_size)
    for tok in tokens:
        h = np.tanh(p.input_weights @ p.embedding[tok] + p.recurrent_weights @ h + p.hidden_bias)
        hs.append(h)
        ps.append(_softmax(p.output_weights @ h + p.output_bias))
    return ForwardTrace(np.array(hs), np.array(ps))


def sequence_log_prob(p: RnnParams, w: Sequence[int]) -> float:
    """log f(w), including the EOS factor."""
    trace = forward(p, w)
    logp = np.log(trace.probs)
    eos = p.alphabet_size
    return float(sum(logp[t, s] for t, s in enumerate(w)) + logp[len(w), eos])


# ---------------------------------------------------------------------------
# trie path


@dataclass(frozen=True)
class TrieState:
    hidden: np.ndarray  # n_nodes x h
    log_probs: np.ndarray  # n_nodes x (K + 1)
    log_f: np.ndarray  # n_nodes; log f(word of the node)


def trie_forward(p: RnnParams, trie: PrefixTrie) -> TrieState:
    k = p.alphabet_size
    n = trie.n_nodes
    h = np.empty((n, p.hidden_size))
    # input contribution of every token, bias folded in
    token_in = p.embedding @ p.input_weights.T + p.hidden_bias
    h[0] = np.tanh(token_in[k])
    for d in range(1, trie.depth + 1):
        sl = trie.level(d)
        h[sl] = np.tanh(token_in[trie.symbol[sl]] + h[trie.parent[sl]] @ p.recurrent_weights.T)
    log_probs = _log_softmax(h @ p.output_weights.T + p.output_bias)
    prefix = np.zeros(n)
    for d in range(1, trie.depth + 1):
        sl = trie.level(d)
        par = trie.parent[sl]
        prefix[sl] = prefix[par] + log_probs[par, trie.symbol[sl]]
    return TrieState(h, log_probs, prefix + log_probs[:, k])


def trie_backward(p: RnnParams, trie: PrefixTrie, state: TrieState, coef: np.ndarray) -> RnnParams:
    """Gradient of sum_x coef[x] * log f(x) over trie nodes x."""
    k = p.alphabet_size
    n = trie.n_nodes
    par, sym = trie.parent, trie.symbol
    # mass of coefficients in each subtree: the weight on each next-symbol outcome
    subtree = np.array(coef, dtype=float)
    for d in range(trie.depth, 0, -1):
        sl = trie.level(d)
        np.add.at(subtree, par[sl], subtree[sl])
    beta = np.zeros((n, k + 1))
    beta[:, k] = coef
    beta[par[1:], sym[1:]] = subtree[1:]
    probs = np.exp(state.log_probs)
    d_logits = beta - beta.sum(axis=1, keepdims=True) * probs

    h = state.hidden
    d_h = d_logits @ p.output_weights
    d_pre = np.empty_like(h)
    for d in range(trie.depth, 0, -1):
        sl = trie.level(d)
        d_pre[sl] = d_h[sl] * (1.0 - h[sl] ** 2)
        np.add.at(d_h, par[sl], d_pre[sl] @ p.recurrent_weights)
    d_pre[0] = d_h[0] * (1.0 - h[0] ** 2)

    tokens = sym.copy()
    tokens[0] = k  # BOS feeds the root
    d_embedding = np.zeros_like(p.embedding)
    np.add.at(d_embedding, tokens, d_pre @ p.input_weights)
    return RnnParams(
        embedding=d_embedding,
        input_weights=d_pre.T @ p.embedding[tokens],
        recurrent_weights=d_pre[1:].T @ h[par[1:]],
        hidden_bias=d_pre.sum(axis=0),
        output_weights=d_logits.T @ h,
        output_bias=d_logits.sum(axis=0),
    )


def _batch_coef(trie: PrefixTrie, batch: Sequence[Word], scale: float) -> np.ndarray:
    coef = np.zeros(trie.n_nodes)
    for w in batch:
        coef[trie.node(w)] += scale
    return coef


def mean_nll(p: RnnParams, words: Sequence[Word], trie: PrefixTrie | None = None) -> float:
    if len(words) == 0:
        raise ValueError("empty word list")
    trie = trie or PrefixTrie.from_words(words, p.alphabet_size)
    state = trie_forward(p, trie)
    nodes = np.fromiter((trie.node(w) for w in words), dtype=np.int64, count=len(words))
    return float(-state.log_f[nodes].mean())


def nll_gradient(p: RnnParams, batch: Sequence[Word]) -> tuple[float, RnnParams]:
    """Mean sequence NLL over the batch and its exact gradient."""
    if len(batch) == 0:
        raise ValueError("empty batch")
    trie = PrefixTrie.from_words(batch, p.alphabet_size)
    state = trie_forward(p, trie)
    coef = _batch_coef(trie, batch, -1.0 / len(batch))
    loss = float(coef @ state.log_f)
    return loss, trie_backward(p, trie, state, coef)


def word_values(p: RnnParams, max_len: int, cap: int | None = None) -> np.ndarray:
    """f over all words of length <= max_len, in graded order."""
    trie = build_trie(_alphabet(p), max_len, cap)
    return np.exp(trie_forward(p, trie).log_f)


def _alphabet(p: RnnParams) -> Alphabet:
    return Alphabet(tuple(str(i) for i in range(p.alphabet_size)))


def eval_all_words(p: RnnParams, max_len: int, cap: int | None = None) -> dict[Word, float]:
    alphabet = _alphabet(p)
    return dict(zip(enumerate_words(alphabet, max_len, cap), word_values(p, max_len, cap)))


def weighted_value_gradient(p: RnnParams, weights: Mapping[Word, float]) -> RnnParams:
    """Gradient of sum_w weights[w] * f(w)."""
    if not weights:
        return p.zeros_like()
    trie = PrefixTrie.from_words(weights.keys(), p.alphabet_size)
    state = trie_forward(p, trie)
    coef = np.zeros(trie.n_nodes)
    for w, c in weights.items():
        coef[trie.node(w)] += c
    return trie_backward(p, trie, state, coef * np.exp(state.log_f))


# ---------------------------------------------------------------------------
# checkpoints


def dumps(p: RnnParams) -> str:
    lines = ["# rnn checkpoint: name rows cols, then one row per line"]
    for name, a in p.arrays().items():
        m = a.reshape(a.shape[0], -1) if a.ndim == 2 else a.reshape(1, -1)
        lines.append(f"{name} {a.ndim} {' '.join(str(x) for x in a.shape)}")
        lines.extend(" ".join(repr(float(x)) for x in row) for row in m)
    return "\n".join(lines) + "\n"


def loads(text: str) -> RnnParams:
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out: dict[str, np.ndarray] = {}
    i = 0
    names = [f.name for f in fields(RnnParams)]
    while i < len(lines):
        head = lines[i].split()
        name, ndim = head[0], int(head[1])
        shape = tuple(int(x) for x in head[2 : 2 + ndim])
        if name not in names:
            raise ValueError(f"unknown parameter {name!r} in checkpoint")
        n_rows = shape[0] if ndim == 2 else 1
        rows = [[float(x) for x in ln.split()] for ln in lines[i + 1 : i + 1 + n_rows]]
        out[name] = np.array(rows, dtype=float).reshape(shape)
        i += 1 + n_rows
    missing = set(names) - set(out)
    if missing:
        raise ValueError(f"checkpoint lacks {sorted(missing)}")
    return RnnParams(**out)


def save(p: RnnParams, path: str | Path) -> None:
    Path(path).write_text(dumps(p))


def load(path: str | Path) -> RnnParams:
    return loads(Path(path).read_text())
