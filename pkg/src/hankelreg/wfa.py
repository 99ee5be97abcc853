"""Weighted finite automata."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class Wfa:
    """``f(w) = alpha^T A[w_1] ... A[w_k] omega``."""

    alpha: np.ndarray
    transitions: tuple[np.ndarray, ...]
    omega: np.ndarray

    def __post_init__(self):
        n = self.alpha.shape[0]
        if self.alpha.shape != (n,) or self.omega.shape != (n,):
            raise ValueError("alpha and omega must be vectors of equal length")
        for a in self.transitions:
            if a.shape != (n, n):
                raise ValueError(f"transition matrix has shape {a.shape}, expected {(n, n)}")
        arrays = (self.alpha, self.omega, *self.transitions)
        if not all(np.all(np.isfinite(a)) for a in arrays):
            raise ValueError("WFA entries must be finite")

    @property
    def n_states(self) -> int:
        return self.alpha.shape[0]

    @property
    def alphabet_size(self) -> int:
        return len(self.transitions)

    def __call__(self, w: Sequence[int]) -> float:
        return evaluate(self, w)

    def forward_vector(self, u: Sequence[int]) -> np.ndarray:
        """alpha^T A^u."""
        x = self.alpha
        for s in u:
            x = x @ self.transitions[s]
        return x

    def backward_vector(self, v: Sequence[int]) -> np.ndarray:
        """A^v omega."""
        y = self.omega
        for s in reversed(v):
            y = self.transitions[s] @ y
        return y


def evaluate(a: Wfa, w: Sequence[int]) -> float:
    return float(a.forward_vector(w) @ a.omega)


def random_wfa(n: int, alphabet_size: int, seed: int, scale: float = 0.5) -> Wfa:
    if n < 1:
        raise ValueError("a WFA needs at least one state")
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(-scale, scale, n)
    transitions = tuple(rng.uniform(-scale, scale, (n, n)) for _ in range(alphabet_size))
    omega = rng.uniform(-scale, scale, n)
    return Wfa(alpha, transitions, omega)


def wfa_from_dfa(delta: Sequence[Sequence[int]], accepting: Sequence[int], start: int = 0) -> Wfa:
    """Embed a total DFA as a 0/1-valued WFA.

    ``delta[q][s]`` is the successor of state ``q`` on symbol ``s``.
    """
    n = len(delta)
    if n == 0:
        raise ValueError("DFA has no states")
    k = len(delta[0])
    if k == 0 or any(len(row) != k for row in delta):
        raise ValueError("DFA table must have one successor per state and symbol")
    if not 0 <= start < n:
        raise ValueError(f"start state {start} out of range")
    transitions = []
    for s in range(k):
        a = np.zeros((n, n))
        for q in range(n):
            r = delta[q][s]
            if not 0 <= r < n:
                raise ValueError(f"successor {r} of state {q} on symbol {s} out of range")
            a[q, r] = 1.0
        transitions.append(a)
    alpha = np.zeros(n)
    alpha[start] = 1.0
    omega = np.zeros(n)
    for q in accepting:
        if not 0 <= q < n:
            raise ValueError(f"accepting state {q} out of range")
        omega[q] = 1.0
    return Wfa(alpha, tuple(transitions), omega)


def counting_wfa() -> Wfa:
    """Two-state WFA over {a, b} counting occurrences of ``a`` (symbol 0)."""
    return Wfa(
        alpha=np.array([1.0, 0.0]),
        transitions=(np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2)),
        omega=np.array([0.0, 1.0]),
    )


def _fmt(xs) -> str:
    return " ".join(repr(float(x)) for x in xs)


def dumps(a: Wfa) -> str:
    lines = [f"{a.n_states} {a.alphabet_size}", _fmt(a.alpha)]
    for m in a.transitions:
        lines.extend(_fmt(row) for row in m)
    lines.append(_fmt(a.omega))
    return "\n".join(lines) + "\n"


def loads(text: str) -> Wfa:
    tokens = text.split()
    try:
        n, k = int(tokens[0]), int(tokens[1])
        vals = np.array([float(t) for t in tokens[2:]])
    except (IndexError, ValueError) as exc:
        raise ValueError(f"malformed WFA text: {exc}") from None
    if vals.size != 2 * n + k * n * n:
        raise ValueError(f"expected {2 * n + k * n * n} reals for n={n}, |alphabet|={k}, got {vals.size}")
    alpha = vals[:n]
    mats = tuple(vals[n + i * n * n : n + (i + 1) * n * n].reshape(n, n) for i in range(k))
    omega = vals[n + k * n * n :]
    return Wfa(alpha.copy(), tuple(m.copy() for m in mats), omega.copy())


def save(a: Wfa, path: str | Path) -> None:
    Path(path).write_text(dumps(a))


def load(path: str | Path) -> Wfa:
    return loads(Path(path).read_text())
