"""Tomita grammars #3-#6 over {0, 1} and the dataset protocol built on them."""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .strings import BINARY, EPS_TOKEN, Word, enumerate_words
from .wfa import Wfa, wfa_from_dfa


class GrammarId(str, enum.Enum):
    T3 = "T3"
    T4 = "T4"
    T5 = "T5"
    T6 = "T6"

    @classmethod
    def parse(cls, name: str | "GrammarId") -> "GrammarId":
        if isinstance(name, GrammarId):
            return name
        key = str(name).upper().lstrip("#")
        if not key.startswith("T"):
            key = "T" + key
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown grammar {name!r}; expected one of T3, T4, T5, T6") from None


def _runs(w: Sequence[int]) -> list[tuple[int, int]]:
    return [(s, len(list(g))) for s, g in itertools.groupby(w)]


def _check_binary(w: Sequence[int]) -> None:
    for s in w:
        if s not in (0, 1):
            raise ValueError(f"Tomita grammars are over {{0, 1}}; got symbol {s!r}")


def is_member(g: GrammarId | str, w: Sequence[int]) -> bool:
    g = GrammarId.parse(g)
    _check_binary(w)
    if g is GrammarId.T3:
        # no odd maximal run of 1s directly followed by an odd maximal run of 0s
        runs = _runs(w)
        return not any(
            a == 1 and la % 2 == 1 and b == 0 and lb % 2 == 1
            for (a, la), (b, lb) in zip(runs, runs[1:])
        )
    if g is GrammarId.T4:
        return all(n < 3 for s, n in _runs(w) if s == 0)
    if g is GrammarId.T5:
        # even combined count of "01" and "10" occurrences
        changes = sum(1 for a, b in zip(w, w[1:]) if a != b)
        return changes % 2 == 0
    zeros = sum(1 for s in w if s == 0)
    return (zeros - (len(w) - zeros)) % 3 == 0


# Minimal DFAs: (transition table delta[state][symbol], accepting states).
# State 0 is the start state in each.
DFAS: dict[GrammarId, tuple[list[list[int]], list[int]]] = {
    # 0: clear, 1: odd 1-run, 2: even 1-run, 3: odd 0-run after odd 1-run,
    # 4: even 0-run after odd 1-run; 5: sink
    GrammarId.T3: ([[0, 1], [3, 2], [0, 1], [4, 5], [3, 1], [5, 5]], [0, 1, 2, 4]),
    # trailing zeros 0/1/2, 3: sink
    GrammarId.T4: ([[1, 0], [2, 0], [3, 0], [3, 3]], [0, 1, 2]),
    # an even number of symbol changes means first and last symbols agree;
    # 0: empty, 1: starts 0 ends 0, 2: starts 0 ends 1, 3: starts 1 ends 1, 4: starts 1 ends 0
    GrammarId.T5: ([[1, 3], [1, 2], [1, 2], [4, 3], [4, 3]], [0, 1, 3]),
    # (#0 - #1) mod 3
    GrammarId.T6: ([[1, 2], [2, 0], [0, 1]], [0]),
}


def grammar_wfa(g: GrammarId | str) -> Wfa:
    delta, accepting = DFAS[GrammarId.parse(g)]
    return wfa_from_dfa(delta, accepting)


def indicator(g: GrammarId | str):
    """Membership as a 0/1-valued oracle on words."""
    g = GrammarId.parse(g)
    return lambda w: 1.0 if is_member(g, w) else 0.0


@dataclass(frozen=True)
class Dataset:
    grammar: GrammarId
    train: tuple[Word, ...]
    validation: tuple[Word, ...]
    test: tuple[Word, ...]
    seed: int
    max_len: int = 12


def generate_dataset(
    g: GrammarId | str,
    seed: int,
    max_len: int = 12,
    train_pool_fraction: float = 0.5,
) -> Dataset:
    """Members up to ``max_len``; a share of the longest members is held out as test.

    Every member shorter than ``max_len`` goes to the training pool together
    with a seeded ``train_pool_fraction`` of the length-``max_len`` members;
    the rest form the test set. The pool is shuffled and its first 20%
    (rounded down) becomes the validation split.
    """
    g = GrammarId.parse(g)
    if not 0.0 <= train_pool_fraction <= 1.0:
        raise ValueError("train_pool_fraction must lie in [0, 1]")
    members = [w for w in enumerate_words(BINARY, max_len) if is_member(g, w)]
    shorter = [w for w in members if len(w) < max_len]
    longest = [w for w in members if len(w) == max_len]
    if len(longest) < 10:
        raise ValueError(f"{g.value} has only {len(longest)} members of length {max_len}; cannot form a test set")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(longest))
    n_pool = int(len(longest) * train_pool_fraction)
    pool = shorter + [longest[i] for i in order[:n_pool]]
    test = sorted((longest[i] for i in order[n_pool:]), key=lambda w: (len(w), w))
    pool = [pool[i] for i in rng.permutation(len(pool))]
    n_val = len(pool) // 5
    return Dataset(g, tuple(pool[n_val:]), tuple(pool[:n_val]), tuple(test), seed, max_len)


def subsample_train(d: Dataset, size: int, seed: int) -> Dataset:
    if not 0 <= size <= len(d.train):
        raise ValueError(f"cannot draw {size} training words from {len(d.train)}")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(d.train), size=size, replace=False)
    return replace(d, train=tuple(d.train[i] for i in idx))


# ---------------------------------------------------------------------------
# files


SPLITS = ("train", "validation", "test")


def write_words(words: Sequence[Word], path: Path) -> None:
    path.write_text("".join(BINARY.format(w, eps=EPS_TOKEN) + "\n" for w in words))


def read_words(path: Path) -> tuple[Word, ...]:
    return tuple(BINARY.parse(line) for line in path.read_text().splitlines())


def save_dataset(d: Dataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        write_words(getattr(d, name), out / f"{name}.txt")
    (out / "manifest.txt").write_text(
        f"grammar={d.grammar.value} seed={d.seed} max_len={d.max_len} "
        f"train={len(d.train)} validation={len(d.validation)} test={len(d.test)}\n"
    )


def load_dataset(data_dir: str | Path) -> Dataset:
    src = Path(data_dir)
    fields = dict(kv.split("=", 1) for kv in (src / "manifest.txt").read_text().split())
    d = Dataset(
        GrammarId.parse(fields["grammar"]),
        *(read_words(src / f"{name}.txt") for name in SPLITS),
        seed=int(fields["seed"]),
        max_len=int(fields.get("max_len", 12)),
    )
    for name in SPLITS:
        if len(getattr(d, name)) != int(fields[name]):
            raise ValueError(f"{name}.txt has {len(getattr(d, name))} words, manifest says {fields[name]}")
    return d
