"""Finite Hankel blocks, length slices, Russian Roulette estimates, trace norms.

A block is a finite window ``(u, v) -> w_{|uv|} * f(uv)`` of the bi-infinite
Hankel matrix of ``f``, with row and column bases in graded-lex order and a
mask that zeroes entries outside the construction rule. ``f`` is either a
callable on words or an array of values over all words in graded order; in
both cases every distinct word is evaluated once.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .strings import (
    BINARY,
    DEFAULT_WORD_CAP,
    Alphabet,
    ResourceLimitError,
    Word,
    check_cap,
    concat_index,
    count_words,
    enumerate_words,
    graded_index,
    length_offset,
    word_at,
)

Oracle = Union[Callable[[Word], float], np.ndarray]

RANK_EPS = 1e-8
SUBGRADIENT_TOL = 1e-8


class HankelDataError(ValueError):
    """The oracle produced a non-finite value."""


class SvdError(RuntimeError):
    pass


@dataclass(frozen=True)
class HankelBlock:
    alphabet: Alphabet
    row_len: int
    col_len: int
    entries: np.ndarray
    word_ids: np.ndarray  # graded index of uv for every entry
    mask: np.ndarray  # True where the entry is part of the construction
    length_weights: dict[int, float]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @property
    def row_basis(self) -> list[Word]:
        return enumerate_words(self.alphabet, self.row_len)

    @property
    def col_basis(self) -> list[Word]:
        return enumerate_words(self.alphabet, self.col_len)

    def entry(self, u: Sequence[int], v: Sequence[int]) -> float:
        return float(self.entries[graded_index(u, self.alphabet), graded_index(v, self.alphabet)])


# ---------------------------------------------------------------------------
# oracle evaluation


def word_values(f: Oracle, alphabet: Alphabet, max_len: int, cap: int | None = None) -> np.ndarray:
    """f over every word of length <= max_len, in graded order."""
    n = count_words(alphabet.size, max_len)
    check_cap(n, cap)
    if isinstance(f, np.ndarray):
        if f.shape[0] < n:
            raise ValueError(f"value array has {f.shape[0]} entries, need {n} for max_len={max_len}")
        vals = np.asarray(f[:n], dtype=float)
    else:
        vals = np.fromiter((f(w) for w in enumerate_words(alphabet, max_len, cap)), dtype=float, count=n)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        w = alphabet.format(word_at(int(bad[0]), alphabet), eps="<eps>")
        raise HankelDataError(f"oracle returned non-finite value {vals[bad[0]]} for word {w!r}")
    return vals


def _pair_ids(k: int, lr: int, lc: int, rows: np.ndarray | None = None, cols: np.ndarray | None = None):
    """Concatenation ids and total lengths for a rows x cols grid of graded indices."""
    top = max(lr, lc)
    lengths, values = concat_index(k, top)
    offsets = np.array([length_offset(k, n) for n in range(lr + lc + 2)])
    if rows is None:
        rows = np.arange(count_words(k, lr))
    if cols is None:
        cols = np.arange(count_words(k, lc))
    lu, vu = lengths[rows][:, None], values[rows][:, None]
    lv, vv = lengths[cols][None, :], values[cols][None, :]
    total = lu + lv
    ids = offsets[total] + vu * (k**lv) + vv
    return ids, total


def _block(
    vals: np.ndarray,
    alphabet: Alphabet,
    lr: int,
    lc: int,
    max_total: int | None,
    weights: dict[int, float],
) -> HankelBlock:
    ids, total = _pair_ids(alphabet.size, lr, lc)
    if max_total is None:
        mask = np.ones(ids.shape, dtype=bool)
    else:
        mask = total <= max_total
    scale = np.array([weights.get(n, 0.0) for n in range(lr + lc + 1)])
    safe = np.where(mask, ids, 0)
    entries = np.where(mask, vals[safe] * scale[total], 0.0)
    return HankelBlock(alphabet, lr, lc, entries, ids, mask, dict(weights))


def build_block(
    f: Oracle,
    row_len: int,
    col_len: int,
    max_total_len: int | None = None,
    alphabet: Alphabet = BINARY,
    cap: int | None = None,
) -> HankelBlock:
    check_cap(count_words(alphabet.size, max(row_len, col_len)), cap)
    need = row_len + col_len if max_total_len is None else min(max_total_len, row_len + col_len)
    vals = word_values(f, alphabet, need, cap)
    weights = {n: 1.0 for n in range(need + 1)}
    return _block(vals, alphabet, row_len, col_len, max_total_len, weights)


def length_slice(f: Oracle, i: int, alphabet: Alphabet = BINARY, cap: int | None = None) -> HankelBlock:
    """The slice H^(i): f(uv) where |u| + |v| == i, zero elsewhere."""
    vals = word_values(f, alphabet, i, cap)
    block = _block(vals, alphabet, i, i, i, {i: 1.0})
    return block


def naive_block(f: Oracle, length: int = 10, alphabet: Alphabet = BINARY, cap: int | None = None) -> HankelBlock:
    """Fixed-size biased estimate: the sum of slices 0..length."""
    return build_block(f, length, length, max_total_len=length, alphabet=alphabet, cap=cap)


# ---------------------------------------------------------------------------
# truncation-level sampling


@dataclass(frozen=True)
class TauSampler:
    mode: str = "truncated_geometric"
    p: float = 0.2
    t_max: int = 8

    def __post_init__(self):
        if self.mode not in ("pure_geometric", "truncated_geometric"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")
        if not 0.0 < self.p < 1.0:
            raise ValueError("stopping probability must lie in (0, 1)")
        if self.mode == "truncated_geometric" and self.t_max < 0:
            raise ValueError("t_max must be >= 0")

    @property
    def truncated(self) -> bool:
        return self.mode == "truncated_geometric"

    def pmf(self, k: int) -> float:
        q = 1.0 - self.p
        if k < 0:
            return 0.0
        if self.truncated:
            if k > self.t_max:
                return 0.0
            return self.p * q**k / (1.0 - q ** (self.t_max + 1))
        return self.p * q**k

    def survival(self, i: int) -> float:
        """P(tau >= i)."""
        q = 1.0 - self.p
        if i <= 0:
            return 1.0
        if self.truncated:
            if i > self.t_max:
                return 0.0
            return (q**i - q ** (self.t_max + 1)) / (1.0 - q ** (self.t_max + 1))
        return q**i

    def mean(self) -> float:
        if self.truncated:
            return sum(k * self.pmf(k) for k in range(self.t_max + 1))
        return (1.0 - self.p) / self.p


def max_tau_for_cap(alphabet_size: int, cap: int | None = None) -> int:
    cap = DEFAULT_WORD_CAP if cap is None else cap
    t = 0
    while count_words(alphabet_size, t + 1) <= cap:
        t += 1
    return t


def sample_tau(
    sampler: TauSampler,
    rng: np.random.Generator,
    alphabet_size: int = 2,
    cap: int | None = None,
    guard: bool = True,
) -> int:
    """Draw tau from the sampler's law.

    In pure mode a draw whose block would exceed the word cap raises
    :class:`ResourceLimitError` unless ``guard`` is off (callers that only
    read a fixed window of the estimate never materialize the full block).
    """
    if sampler.truncated:
        q = 1.0 - sampler.p
        # inverse CDF of the truncated law
        z = 1.0 - q ** (sampler.t_max + 1)
        x = rng.random()
        tau = int(math.floor(math.log1p(-x * z) / math.log(q)))
        return min(max(tau, 0), sampler.t_max)
    tau = int(rng.geometric(sampler.p)) - 1
    if guard:
        limit = max_tau_for_cap(alphabet_size, cap)
        if tau > limit:
            raise ResourceLimitError(
                f"sampled tau={tau} needs a block beyond the word cap (max tau {limit}); "
                "use the truncated_geometric sampler"
            )
    return tau


def roulette_block(
    f: Oracle,
    tau: int,
    sampler: TauSampler,
    alphabet: Alphabet = BINARY,
    window: int | None = None,
    cap: int | None = None,
) -> HankelBlock:
    """Russian Roulette estimate H_tau of the Hankel matrix.

    Entry (u, v) with k = |uv| is f(uv) / P(tau >= k) when k <= tau and zero
    otherwise. Bases are all words of length <= tau; with ``window`` set they
    are the words of length <= window instead, giving a fixed-shape view of
    the same estimate.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    if sampler.truncated and tau > sampler.t_max:
        raise ValueError(f"tau={tau} exceeds t_max={sampler.t_max}: survival would be zero")
    basis = tau if window is None else window
    check_cap(count_words(alphabet.size, basis), cap)
    top = min(tau, 2 * basis)
    vals = word_values(f, alphabet, top, cap)
    weights = {}
    for n in range(top + 1):
        s = sampler.survival(n)
        if s <= 0.0:
            raise ValueError(f"survival P(tau >= {n}) is zero")
        weights[n] = 1.0 / s
    return _block(vals, alphabet, basis, basis, tau, weights)


# ---------------------------------------------------------------------------
# spectral quantities


def svd(m: np.ndarray, full_matrices: bool = False) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (U, s, V) with m = U diag(s) V^T and s descending."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise SvdError("matrix has non-finite entries")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=full_matrices)
    except np.linalg.LinAlgError as exc:
        raise SvdError(str(exc)) from exc
    return u, s, vt.T


def _singular_values(m: np.ndarray) -> np.ndarray:
    if m.size == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(m)):
        raise SvdError("matrix has non-finite entries")
    try:
        return np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise SvdError(str(exc)) from exc


def _matrix(b) -> np.ndarray:
    return b.entries if isinstance(b, HankelBlock) else np.asarray(b, dtype=float)


def singular_spectrum(b) -> np.ndarray:
    return _singular_values(_matrix(b))


def trace_norm(b) -> float:
    return float(_singular_values(_matrix(b)).sum())


def numerical_rank(b, eps: float = RANK_EPS) -> int:
    s = _singular_values(_matrix(b))
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > eps * s[0]))


def trace_norm_subgradient(b, tol: float = SUBGRADIENT_TOL) -> np.ndarray:
    """U_r V_r^T over singular triples with sigma > tol * sigma_max."""
    m = _matrix(b)
    if m.size == 0:
        return np.zeros_like(m)
    u, s, v = svd(m)
    if s[0] == 0.0:
        return np.zeros_like(m)
    r = int(np.count_nonzero(s > tol * s[0]))
    return u[:, :r] @ v[:, :r].T


def word_gradient_array(b: HankelBlock, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-word chain-rule weights as (weights, present) arrays in graded order."""
    if g.shape != b.entries.shape:
        raise ValueError(f"gradient shape {g.shape} does not match block shape {b.entries.shape}")
    n = int(b.word_ids.max()) + 1
    ids = b.word_ids[b.mask]
    sums = np.bincount(ids, weights=g[b.mask], minlength=n)
    present = np.bincount(ids, minlength=n) > 0
    lengths, _ = concat_index(b.alphabet.size, b.row_len + b.col_len)
    scale = np.array([b.length_weights.get(int(k), 0.0) for k in lengths[:n]])
    return sums * scale, present


def word_gradient_weights(b: HankelBlock, g: np.ndarray) -> dict[Word, float]:
    """d<g, entries>/d f(w) for every word with an unmasked entry in the block."""
    sums, present = word_gradient_array(b, g)
    return {word_at(int(i), b.alphabet): float(sums[i]) for i in np.flatnonzero(present)}


def _split_point(k: int, total: int) -> int:
    """Row length m minimizing the reduced problem size of a total-length mask."""
    return min(range(total + 1), key=lambda m: count_words(k, m) + count_words(k, total - m - 1))


def masked_trace_norm(
    values: np.ndarray,
    total: int,
    length_scale: Sequence[float],
    alphabet_size: int = 2,
    tol: float = SUBGRADIENT_TOL,
) -> tuple[float, np.ndarray]:
    """Trace norm and per-word gradient weights of a total-length-masked block.

    The block has bases of all words of length <= ``total`` and entries
    ``length_scale[|uv|] * values[uv]`` for ``|uv| <= total``; both roulette
    and naive blocks have this form. Rows longer than m only touch columns
    shorter than ``total - m``, so a thin QR of that lower-left panel reduces
    the SVD to (rows <= m) + (columns < total - m) rows without changing any
    singular value. Returns the same quantities as
    ``trace_norm`` and ``word_gradient_array(trace_norm_subgradient)``.
    """
    k = alphabet_size
    n = count_words(k, total)
    scale = np.asarray(length_scale, dtype=float)[: total + 1]
    m = _split_point(k, total)
    n_top = count_words(k, m)
    n_low = count_words(k, total - m - 1)

    def panel(rows, cols):
        ids, tot = _pair_ids(k, total, total, rows, cols)
        mask = tot <= total
        safe = np.where(mask, ids, 0)
        return np.where(mask, values[safe] * scale[np.minimum(tot, total)], 0.0), safe, mask

    top, top_ids, top_mask = panel(np.arange(n_top), np.arange(n))
    if n_top < n and n_low > 0:
        low, low_ids, low_mask = panel(np.arange(n_top, n), np.arange(n_low))
        q, r = np.linalg.qr(low)
        reduced = np.vstack([top, np.hstack([r, np.zeros((r.shape[0], n - n_low))])])
    else:
        q = None
        reduced = top
    u, s, v = svd(reduced)
    value = float(s.sum())
    weights = np.zeros(n)
    if s.size == 0 or s[0] == 0.0:
        return value, weights
    rank = int(np.count_nonzero(s > tol * s[0]))
    ur, vr = u[:, :rank], v[:, :rank]
    g_top = ur[:n_top] @ vr.T
    weights += np.bincount(top_ids[top_mask], weights=g_top[top_mask], minlength=n)
    if q is not None:
        g_low = q @ (ur[n_top:] @ vr[:n_low].T)
        weights += np.bincount(low_ids[low_mask], weights=g_low[low_mask], minlength=n)
    lengths, _ = concat_index(k, total)
    return value, weights * scale[lengths]


# ---------------------------------------------------------------------------
# export


def block_to_csv(b: HankelBlock) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fmt = lambda x: b.alphabet.format(x, eps="<eps>")  # noqa: E731
    w.writerow(["", *(fmt(v) for v in b.col_basis)])
    for u, row in zip(b.row_basis, b.entries):
        w.writerow([fmt(u), *(repr(float(x)) for x in row)])
    return buf.getvalue()


def spectrum_to_text(s: Sequence[float]) -> str:
    return "".join(f"{float(x)!r}\n" for x in s)
