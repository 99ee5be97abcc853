"""Spectrally regularized training of the RNN language model and experiment sweeps.

The per-minibatch objective is ``NLL(batch) + lam * ||H||_*`` where ``H`` is a
Russian Roulette estimate of the model's Hankel matrix (fresh truncation level
per minibatch) or the fixed naive block. The penalty gradient holds the
trace-norm subgradient fixed and pushes it through the Hankel construction
into per-word weights, then through the RNN.
"""
from __future__ import annotations

import concurrent.futures
import functools
import math
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .hankel import TauSampler, masked_trace_norm, sample_tau
from .optim import AdamState, SchedulerState, adam_step, scheduler_step
from .rnn import RnnParams, init_params, mean_nll, nll_gradient, trie_backward, trie_forward
from .strings import Alphabet, PrefixTrie, build_trie
from .tomita import Dataset, GrammarId, generate_dataset, subsample_train

MODES = ("none", "roulette", "naive")
DEFAULT_LAMBDA_GRID = (0.001, 0.01, 0.1, 1.0)


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    grammar: str = "T5"
    seed: int = 0
    hidden_size: int = 50
    batch_size: int = 32
    initial_lr: float = 0.01
    regularizer: str = "none"
    lam: float = 0.0
    sampler: TauSampler = field(default_factory=TauSampler)
    naive_len: int = 10
    max_epochs: int = 500
    patience: int = 5
    reduction_factor: float = 0.5
    min_lr: float = 1e-5
    early_stop_patience: int = 20
    improvement_threshold: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    record_wall_clock: bool = False

    def __post_init__(self):
        if self.regularizer not in MODES:
            raise ValueError(f"unknown regularizer {self.regularizer!r}; expected one of {MODES}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.batch_size < 1 or self.hidden_size < 1:
            raise ValueError("batch_size and hidden_size must be positive")


@dataclass
class ExperimentResult:
    config: TrainConfig
    train_size: int
    train_nll: list[float]
    val_nll: list[float]
    learning_rates: list[float]
    best_val_nll: float
    best_epoch: int
    test_nll: float
    wall_clock_s: float
    # per minibatch: (epoch, batch, nll, penalty or None, loss, tau or None)
    batches: list[tuple] = field(default_factory=list)
    params: RnnParams | None = field(default=None, repr=False)

    @property
    def epochs_run(self) -> int:
        return len(self.val_nll)

    @property
    def taus(self) -> list[int]:
        return [b[5] for b in self.batches if b[5] is not None]


@functools.lru_cache(maxsize=32)
def _complete_trie(alphabet_size: int, depth: int) -> PrefixTrie:
    return build_trie(Alphabet(tuple(str(i) for i in range(alphabet_size))), depth)


def spectral_penalty(
    p: RnnParams,
    cfg: TrainConfig,
    rng: np.random.Generator | None = None,
    tau: int | None = None,
) -> tuple[float, RnnParams, int]:
    """Trace norm of the Hankel estimate of f_theta and its surrogate gradient."""
    k = p.alphabet_size
    if cfg.regularizer == "roulette":
        if tau is None:
            tau = sample_tau(cfg.sampler, rng, alphabet_size=k)
        total = tau
        scale = [1.0 / cfg.sampler.survival(i) for i in range(total + 1)]
    elif cfg.regularizer == "naive":
        total = cfg.naive_len
        scale = [1.0] * (total + 1)
    else:
        raise ValueError("spectral_penalty needs a regularizer other than 'none'")
    trie = _complete_trie(k, total)
    state = trie_forward(p, trie)
    values = np.exp(state.log_f)
    value, word_weights = masked_trace_norm(values, total, scale, alphabet_size=k)
    # d f / d theta = f * d log f / d theta
    grad = trie_backward(p, trie, state, word_weights * values)
    return value, grad, total


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    shuffle, tau = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(shuffle), np.random.default_rng(tau)


def train_model(cfg: TrainConfig, d: Dataset) -> ExperimentResult:
    if not d.train or not d.validation or not d.test:
        raise ValueError("dataset needs nonempty train, validation and test splits")
    start = time.perf_counter()
    k = 2
    p = init_params(cfg.seed, cfg.hidden_size, k)
    adam = AdamState.init(p, cfg.initial_lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.adam_eps)
    sched = SchedulerState(
        patience=cfg.patience,
        reduction_factor=cfg.reduction_factor,
        min_lr=cfg.min_lr,
        early_stop_patience=cfg.early_stop_patience,
        threshold=cfg.improvement_threshold,
    )
    shuffle_rng, tau_rng = _streams(cfg.seed)
    train_trie = PrefixTrie.from_words(d.train, k)
    val_trie = PrefixTrie.from_words(d.validation, k)
    regularized = cfg.regularizer != "none"

    train_hist, val_hist, lr_hist, batches = [], [], [], []
    best_val, best_epoch, best_params = math.inf, -1, p.copy()
    for epoch in range(cfg.max_epochs):
        order = shuffle_rng.permutation(len(d.train))
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [d.train[i] for i in order[lo : lo + cfg.batch_size]]
            nll, grad = nll_gradient(p, batch)
            if not math.isfinite(nll):
                raise TrainingDivergedError(f"non-finite training NLL at epoch {epoch}, batch {b}")
            penalty = tau = None
            loss = nll
            if regularized:
                if cfg.lam > 0.0:
                    penalty, pgrad, tau = spectral_penalty(p, cfg, tau_rng)
                    loss = nll + cfg.lam * penalty
                    grad = grad.map(lambda g, q: g + cfg.lam * q, pgrad)
                elif cfg.regularizer == "roulette":
                    tau = sample_tau(cfg.sampler, tau_rng, alphabet_size=k)
            batches.append((epoch, b, nll, penalty, loss, tau))
            adam, p = adam_step(adam, p, grad)

        train_nll = mean_nll(p, d.train, train_trie)
        val_nll = mean_nll(p, d.validation, val_trie)
        if not (math.isfinite(train_nll) and math.isfinite(val_nll)):
            raise TrainingDivergedError(f"non-finite NLL after epoch {epoch}")
        train_hist.append(train_nll)
        val_hist.append(val_nll)
        lr_hist.append(adam.learning_rate)
        if val_nll < best_val:
            best_val, best_epoch, best_params = val_nll, epoch, p.copy()
        sched, lr, stop = scheduler_step(sched, val_nll, adam.learning_rate)
        adam = replace(adam, learning_rate=lr)
        if stop:
            break

    test_nll = mean_nll(best_params, d.test)
    return ExperimentResult(
        config=cfg,
        train_size=len(d.train),
        train_nll=train_hist,
        val_nll=val_hist,
        learning_rates=lr_hist,
        best_val_nll=best_val,
        best_epoch=best_epoch,
        test_nll=test_nll,
        wall_clock_s=time.perf_counter() - start,
        batches=batches,
        params=best_params,
    )


def _run(args: tuple[TrainConfig, Dataset]) -> ExperimentResult:
    return train_model(*args)


def _map(tasks: list[tuple[TrainConfig, Dataset]], jobs: int) -> list[ExperimentResult]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run(t) for t in tasks]
    with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run, tasks))


def _pick(results: Sequence[ExperimentResult]) -> ExperimentResult:
    return min(results, key=lambda r: (r.best_val_nll, r.config.lam))


def select_lambda(
    cfg_base: TrainConfig, d: Dataset, grid: Iterable[float], jobs: int = 1
) -> tuple[float, list[ExperimentResult]]:
    """Train one model per distinct lambda; keep the lowest validation NLL (ties: smaller lambda)."""
    lams = sorted(set(float(x) for x in grid))
    if not lams:
        raise ValueError("empty lambda grid")
    results = _map([(replace(cfg_base, lam=lam), d) for lam in lams], jobs)
    return _pick(results).config.lam, results


@dataclass(frozen=True)
class SweepRow:
    grammar: str
    mode: str
    train_size: int
    seed: int
    lam: float
    best_val_nll: float
    test_nll: float
    epochs_run: int
    wall_clock_s: float


SWEEP_COLUMNS = ("grammar", "mode", "train_size", "seed", "lambda", "best_val_nll", "test_nll", "epochs_run", "wall_clock_s")


def sweep(
    base: TrainConfig,
    training_sizes: Sequence[int],
    seeds: Sequence[int],
    modes: Sequence[str],
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    dataset: Dataset | None = None,
    data_seed: int = 0,
    jobs: int = 1,
) -> tuple[list[SweepRow], list[ExperimentResult]]:
    """Cross product of size x seed x mode; lambda chosen per run for regularized modes.

    Returns the table rows and the selected run behind each row, in row order.
    """
    for mode in modes:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
    d = dataset or generate_dataset(base.grammar, data_seed)
    grid = sorted(set(float(x) for x in lambda_grid))
    if not grid:
        raise ValueError("empty lambda grid")
    keys, tasks = [], []
    for size in training_sizes:
        for seed in seeds:
            sub = subsample_train(d, size, seed)
            for mode in modes:
                lams = [0.0] if mode == "none" else grid
                for lam in lams:
                    keys.append((size, seed, mode))
                    tasks.append((replace(base, seed=seed, regularizer=mode, lam=lam), sub))
    results = _map(tasks, jobs)
    grouped: dict[tuple, list[ExperimentResult]] = {}
    for key, res in zip(keys, results):
        grouped.setdefault(key, []).append(res)
    rows, chosen = [], []
    for (size, seed, mode), runs in grouped.items():
        best = _pick(runs)
        rows.append(SweepRow(
            grammar=GrammarId.parse(base.grammar).value,
            mode=mode,
            train_size=size,
            seed=seed,
            lam=best.config.lam,
            best_val_nll=best.best_val_nll,
            test_nll=best.test_nll,
            epochs_run=best.epochs_run,
            wall_clock_s=sum(r.wall_clock_s for r in runs),
        ))
        chosen.append(best)
    return rows, chosen


def summarize(rows: Sequence[SweepRow]) -> list[dict]:
    """Mean and standard error of test NLL over seeds, per (mode, train_size)."""
    groups: dict[tuple[str, int], list[float]] = {}
    for r in rows:
        groups.setdefault((r.mode, r.train_size), []).append(r.test_nll)
    out = []
    for (mode, size), vals in groups.items():
        arr = np.array(vals)
        se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
        out.append({"mode": mode, "train_size": size, "n_seeds": arr.size, "mean_test_nll": float(arr.mean()), "se_test_nll": se})
    return out
