"""Words over a finite alphabet, graded-lex indexing, splits and prefix tries.

Words are tuples of symbol indices. The graded lexicographic order (shorter
words first, then lexicographic by symbol index) is the canonical basis
order for every Hankel block in the package, and a word's position in that
order is its *graded index*.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Word = tuple[int, ...]

EPSILON: Word = ()
EPS_TOKEN = "<eps>"

DEFAULT_WORD_CAP = 2**21


class ResourceLimitError(RuntimeError):
    """An exponential enumeration would exceed the configured word cap."""


@dataclass(frozen=True)
class Alphabet:
    symbols: tuple[str, ...]

    def __post_init__(self):
        if len(self.symbols) < 1:
            raise ValueError("alphabet needs at least one symbol")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError(f"duplicate symbols in alphabet {self.symbols!r}")
        for s in self.symbols:
            if len(s) != 1:
                raise ValueError(f"symbol labels must be single characters, got {s!r}")

    @property
    def size(self) -> int:
        return len(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)

    def parse(self, text: str) -> Word:
        """Parse a label string such as ``"0110"``; ``"<eps>"`` and ``""`` give ε."""
        if text == EPS_TOKEN:
            return EPSILON
        lookup = {s: i for i, s in enumerate(self.symbols)}
        try:
            return tuple(lookup[c] for c in text)
        except KeyError as exc:
            raise ValueError(f"symbol {exc.args[0]!r} not in alphabet {self.symbols!r}") from None

    def format(self, w: Sequence[int], eps: str = "") -> str:
        if len(w) == 0:
            return eps
        return "".join(self.symbols[i] for i in w)

    def validate(self, w: Sequence[int]) -> None:
        for i in w:
            if not 0 <= i < self.size:
                raise ValueError(f"symbol index {i} out of range for alphabet of size {self.size}")


BINARY = Alphabet(("0", "1"))


def count_words(k: int, max_len: int) -> int:
    """Number of words of length <= max_len over an alphabet of size k."""
    if max_len < 0:
        return 0
    if k == 1:
        return max_len + 1
    return (k ** (max_len + 1) - 1) // (k - 1)


def length_offset(k: int, n: int) -> int:
    """Graded index of the first word of length n."""
    return count_words(k, n - 1)


def check_cap(n_words: int, cap: int | None) -> None:
    cap = DEFAULT_WORD_CAP if cap is None else cap
    if n_words > cap:
        raise ResourceLimitError(
            f"enumeration of {n_words} words exceeds the resource cap of {cap}"
        )


def graded_index(w: Sequence[int], alphabet: Alphabet) -> int:
    k = alphabet.size
    value = 0
    for s in w:
        if not 0 <= s < k:
            raise ValueError(f"symbol index {s} out of range")
        value = value * k + s
    return length_offset(k, len(w)) + value


def word_at(n: int, alphabet: Alphabet) -> Word:
    """Inverse of :func:`graded_index`."""
    if n < 0:
        raise ValueError("graded index must be nonnegative")
    k = alphabet.size
    length = 0
    while count_words(k, length) <= n:
        length += 1
    value = n - length_offset(k, length)
    out = [0] * length
    for pos in range(length - 1, -1, -1):
        value, out[pos] = divmod(value, k)
    return tuple(out)


def enumerate_words(alphabet: Alphabet, max_len: int, cap: int | None = None) -> list[Word]:
    if max_len < 0:
        raise ValueError("max_len must be >= 0")
    check_cap(count_words(alphabet.size, max_len), cap)
    words: list[Word] = [EPSILON]
    level: list[Word] = [EPSILON]
    for _ in range(max_len):
        level = [w + (s,) for w in level for s in range(alphabet.size)]
        words.extend(level)
    return words


def word_lengths(k: int, max_len: int) -> np.ndarray:
    """Length of every word of length <= max_len, in graded order."""
    return np.repeat(np.arange(max_len + 1), [k**n for n in range(max_len + 1)])


def concat_index(k: int, max_len: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-word (length, base-k value) arrays, used to index concatenations."""
    lengths = word_lengths(k, max_len)
    offsets = np.array([length_offset(k, n) for n in range(max_len + 1)])
    values = np.arange(lengths.size) - offsets[lengths]
    return lengths, values


def splits(w: Sequence[int]) -> list[tuple[Word, Word]]:
    w = tuple(w)
    return [(w[:i], w[i:]) for i in range(len(w) + 1)]


@dataclass(frozen=True)
class PrefixTrie:
    """Rooted trie stored breadth-first.

    Nodes within a level are in lexicographic order, so breadth-first order is
    graded-lex order. ``level_starts[l]`` is the first node of depth ``l``; the
    last entry is the node count.
    """

    parent: np.ndarray
    symbol: np.ndarray
    length: np.ndarray
    level_starts: tuple[int, ...]
    alphabet_size: int
    index: dict[Word, int] = field(repr=False, default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return int(self.parent.size)

    @property
    def depth(self) -> int:
        return len(self.level_starts) - 2

    def level(self, depth: int) -> slice:
        return slice(self.level_starts[depth], self.level_starts[depth + 1])

    def words(self) -> list[Word]:
        out: list[Word] = [EPSILON] * self.n_nodes
        for i in range(1, self.n_nodes):
            out[i] = out[self.parent[i]] + (int(self.symbol[i]),)
        return out

    def node(self, w: Sequence[int]) -> int:
        if self.index:
            return self.index[tuple(w)]
        # complete trie: node id is the graded index
        k = self.alphabet_size
        value = 0
        for s in w:
            value = value * k + s
        n = length_offset(k, len(w)) + value
        if len(w) > self.depth:
            raise KeyError(tuple(w))
        return n

    @classmethod
    def from_words(cls, words: Iterable[Sequence[int]], alphabet_size: int) -> "PrefixTrie":
        """Trie holding every prefix of the given words."""
        prefixes: set[Word] = {EPSILON}
        for w in words:
            w = tuple(w)
            for i in range(1, len(w) + 1):
                prefixes.add(w[:i])
        ordered = sorted(prefixes, key=lambda w: (len(w), w))
        index = {w: i for i, w in enumerate(ordered)}
        parent = np.fromiter((index[w[:-1]] if w else -1 for w in ordered), dtype=np.int64, count=len(ordered))
        symbol = np.fromiter((w[-1] if w else -1 for w in ordered), dtype=np.int64, count=len(ordered))
        length = np.fromiter((len(w) for w in ordered), dtype=np.int64, count=len(ordered))
        depth = int(length[-1])
        starts = tuple(int(x) for x in np.searchsorted(length, np.arange(depth + 2)))
        return cls(parent, symbol, length, starts, alphabet_size, index)


def build_trie(alphabet: Alphabet, depth: int, cap: int | None = None) -> PrefixTrie:
    """Complete trie of all words of length <= depth; node id == graded index."""
    k = alphabet.size
    n = count_words(k, depth)
    check_cap(n, cap)
    length = word_lengths(k, depth)
    parent = np.full(n, -1, dtype=np.int64)
    symbol = np.full(n, -1, dtype=np.int64)
    for d in range(1, depth + 1):
        lo, hi = length_offset(k, d), length_offset(k, d + 1)
        local = np.arange(hi - lo)
        parent[lo:hi] = length_offset(k, d - 1) + local // k
        symbol[lo:hi] = local % k
    starts = tuple(length_offset(k, d) for d in range(depth + 2))
    return PrefixTrie(parent, symbol, length, starts, k)
