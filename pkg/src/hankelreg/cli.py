"""Command-line interface: gen-data, train, sweep, analyze-hankel, estimator-diag.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime or
numerical error. Every command writes ``config.txt`` (the resolved
configuration) into its output directory.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import config as config_mod
from . import hankel, rnn, tomita
from .config import ConfigError, RunConfig
from .strings import BINARY, ResourceLimitError, enumerate_words
from .train import SWEEP_COLUMNS, TrainingDivergedError, summarize, sweep, train_model

log = logging.getLogger("hankelreg")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _num(x: float) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve(args) -> RunConfig:
    cfg = config_mod.load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _write_config(cfg: RunConfig, out: Path) -> None:
    (out / "config.txt").write_text(config_mod.dumps(cfg))


def _load_data(cfg: RunConfig, data_dir: str | None) -> tomita.Dataset:
    if data_dir:
        d = tomita.load_dataset(data_dir)
    else:
        d = tomita.generate_dataset(cfg.grammar, cfg.data_seed, cfg.max_len, cfg.train_pool_fraction)
    if cfg.train_size >= 0:
        d = tomita.subsample_train(d, cfg.train_size, cfg.seed)
    return d


# ---------------------------------------------------------------------------
# commands


def cmd_gen_data(args) -> None:
    cfg = _resolve(args)
    if args.grammar:
        cfg = replace(cfg, grammar=tomita.GrammarId.parse(args.grammar).value)
    if args.seed is not None:
        cfg = replace(cfg, data_seed=args.seed)
    out = _out_dir(args)
    d = tomita.generate_dataset(cfg.grammar, cfg.data_seed, cfg.max_len, cfg.train_pool_fraction)
    tomita.save_dataset(d, out)
    _write_config(cfg, out)
    log.info("wrote %d/%d/%d words to %s", len(d.train), len(d.validation), len(d.test), out)


def _write_result(res, out: Path, wall_clock: bool) -> None:
    cfg = res.config
    _write_csv(out / "result.csv", SWEEP_COLUMNS + ("best_epoch",), [[
        tomita.GrammarId.parse(cfg.grammar).value, cfg.regularizer, res.train_size, cfg.seed, _num(cfg.lam),
        _num(res.best_val_nll), _num(res.test_nll), res.epochs_run,
        _num(res.wall_clock_s) if wall_clock else "", res.best_epoch,
    ]])
    _write_csv(out / "history.csv", ("epoch", "train_nll", "val_nll", "lr"), [
        [i, _num(t), _num(v), _num(lr)]
        for i, (t, v, lr) in enumerate(zip(res.train_nll, res.val_nll, res.learning_rates))
    ])
    _write_csv(out / "batches.csv", ("epoch", "batch", "nll", "penalty", "loss", "tau"), [
        [e, b, _num(nll), "" if pen is None else _num(pen), _num(loss), "" if tau is None else tau]
        for e, b, nll, pen, loss, tau in res.batches
    ])


def cmd_train(args) -> None:
    cfg = _resolve(args)
    out = _out_dir(args)
    d = _load_data(cfg, args.data)
    cfg = replace(cfg, grammar=d.grammar.value)
    res = train_model(cfg.train_config(), d)
    _write_result(res, out, cfg.record_wall_clock)
    rnn.save(res.params, out / "checkpoint.txt")
    _write_config(cfg, out)
    log.info("test NLL %.6f after %d epochs", res.test_nll, res.epochs_run)


def cmd_sweep(args) -> None:
    cfg = _resolve(args)
    out = _out_dir(args)
    d = tomita.generate_dataset(cfg.grammar, cfg.data_seed, cfg.max_len, cfg.train_pool_fraction)
    rows, chosen = sweep(
        cfg.train_config(),
        cfg.training_sizes,
        cfg.seeds,
        cfg.modes,
        cfg.lambda_grid,
        dataset=d,
        jobs=args.jobs or 1,
    )
    wall = cfg.record_wall_clock
    _write_csv(out / "sweep.csv", SWEEP_COLUMNS, [
        [r.grammar, r.mode, r.train_size, r.seed, _num(r.lam), _num(r.best_val_nll), _num(r.test_nll),
         r.epochs_run, _num(r.wall_clock_s) if wall else ""]
        for r in rows
    ])
    summary = summarize(rows)
    _write_csv(out / "summary.csv", ("mode", "train_size", "n_seeds", "mean_test_nll", "se_test_nll"), [
        [s["mode"], s["train_size"], s["n_seeds"], _num(s["mean_test_nll"]), _num(s["se_test_nll"])] for s in summary
    ])
    for row, res in zip(rows, chosen):
        run_dir = out / "runs" / f"{row.mode}_n{row.train_size}_s{row.seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
        _write_result(res, run_dir, wall)
    _write_config(cfg, out)
    for s in summary:
        log.info("%-8s n=%-4d mean test NLL %.4f (se %.4f)", s["mode"], s["train_size"], s["mean_test_nll"], s["se_test_nll"])


def _oracle(args):
    """(values over words up to max_len) factory for a grammar or a checkpoint."""
    if bool(args.grammar) == bool(args.checkpoint):
        raise UsageError("give exactly one of --grammar or --checkpoint")
    if args.grammar:
        g = tomita.GrammarId.parse(args.grammar)
        f = tomita.indicator(g)
        return f"grammar {g.value}", lambda n: hankel.word_values(f, BINARY, n)
    try:
        params = rnn.load(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
    if params.alphabet_size != 2:
        raise UsageError(f"checkpoint alphabet size {params.alphabet_size} does not match the binary alphabet")
    return f"checkpoint {args.checkpoint}", lambda n: rnn.word_values(params, n)


def cmd_analyze_hankel(args) -> None:
    cfg = _resolve(args)
    out = _out_dir(args)
    source, values = _oracle(args)
    L = args.max_len
    if args.masked:
        block = hankel.naive_block(values(L), L)
    else:
        block = hankel.build_block(values(2 * L), L, L)
    spectrum = hankel.singular_spectrum(block)
    rank = hankel.numerical_rank(block)
    (out / "spectrum.txt").write_text(hankel.spectrum_to_text(spectrum))
    (out / "rank.txt").write_text(
        f"source = {source}\nblock = {'naive (|uv| <= L)' if args.masked else 'full'}\n"
        f"max_len = {L}\nshape = {block.shape[0]}x{block.shape[1]}\n"
        f"numerical_rank = {rank}\nrank_eps = {hankel.RANK_EPS!r}\n"
        f"trace_norm = {float(spectrum.sum())!r}\n"
    )
    _write_config(cfg, out)
    log.info("%s: rank %d, trace norm %.6g", source, rank, spectrum.sum())


def cmd_estimator_diag(args) -> None:
    cfg = _resolve(args)
    out = _out_dir(args)
    source, values = _oracle(args)
    sampler = cfg.sampler_config()
    n = args.n_samples
    if n < 1:
        raise UsageError("--n-samples must be >= 1")
    L = args.entry_len
    rng = np.random.default_rng(cfg.seed)
    truth_block = hankel.build_block(values(L), L, L, max_total_len=L)
    window_vals = values(L)
    total = np.zeros(truth_block.shape)
    total_sq = np.zeros(truth_block.shape)
    samples = []
    norm_vals = values(sampler.t_max) if sampler.truncated else None
    for i in range(n):
        tau = hankel.sample_tau(sampler, rng, guard=False)
        view = hankel.roulette_block(window_vals, min(tau, L), sampler, window=L)
        total += view.entries
        total_sq += view.entries**2
        if sampler.truncated:
            scale = [1.0 / sampler.survival(k) for k in range(tau + 1)]
            norm, _ = hankel.masked_trace_norm(norm_vals, tau, scale)
            samples.append([i, tau, _num(norm)])
        else:
            samples.append([i, tau, ""])
    mean = total / n
    var = np.maximum(total_sq / n - mean**2, 0.0) * (n / (n - 1) if n > 1 else 0.0)
    se = np.sqrt(var / n)
    words = enumerate_words(BINARY, L)
    rows = []
    for r, c in zip(*np.nonzero(truth_block.mask)):
        t = truth_block.entries[r, c]
        ok = abs(mean[r, c] - t) <= 3 * se[r, c]
        rows.append([BINARY.format(words[r], "<eps>"), BINARY.format(words[c], "<eps>"),
                     _num(t), _num(mean[r, c]), _num(se[r, c]), int(ok)])
    _write_csv(out / "entries.csv", ("u", "v", "truth", "mean", "se", "within_3se"), rows)
    _write_csv(out / "samples.csv", ("sample", "tau", "trace_norm"), samples)
    lines = [f"source = {source}", f"sampler = {sampler.mode}", f"p = {sampler.p!r}",
             f"n_samples = {n}", f"entries_within_3se = {sum(r[-1] for r in rows)}/{len(rows)}"]
    if sampler.truncated:
        norms = np.array([float(s[2]) for s in samples])
        ref = hankel.trace_norm(hankel.naive_block(norm_vals, sampler.t_max))
        norm_se = float(norms.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        lines += [f"t_max = {sampler.t_max}", f"mean_trace_norm = {float(norms.mean())!r}",
                  f"se_trace_norm = {norm_se!r}", f"truncated_block_trace_norm = {ref!r}",
                  f"jensen_holds_3se = {str(norms.mean() >= ref - 3 * norm_se).lower()}"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_config(cfg, out)
    log.info("%s", "; ".join(lines[4:]))


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="flat 'key = value' run configuration")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, help="overrides the configured seed")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="hankelreg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", parents=[common], help="write Tomita train/validation/test files")
    p.add_argument("--grammar", help="T3, T4, T5 or T6 (overrides config)")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--data", help="dataset directory from gen-data (default: generate from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", parents=[common], help="size x seed x mode experiment sweep")
    p.add_argument("--jobs", type=int, default=1, help="parallel training runs")
    p.set_defaults(func=cmd_sweep)

    for name, func, helptext in (
        ("analyze-hankel", cmd_analyze_hankel, "singular spectrum and numerical rank of a Hankel block"),
        ("estimator-diag", cmd_estimator_diag, "Monte Carlo check of the Russian Roulette estimator"),
    ):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--grammar")
        p.add_argument("--checkpoint")
        p.set_defaults(func=func)
        if name == "analyze-hankel":
            p.add_argument("--max-len", type=int, default=6)
            p.add_argument("--masked", action="store_true", help="use the naive block (|uv| <= max-len)")
        else:
            p.add_argument("--n-samples", type=int, default=10_000)
            p.add_argument("--entry-len", type=int, default=4, help="check entries with |uv| <= this")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if not hasattr(args, "jobs"):
        args.jobs = None
    try:
        args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"hankelreg: {exc}", file=sys.stderr)
        return 1
    except (TrainingDivergedError, ResourceLimitError, hankel.SvdError, hankel.HankelDataError) as exc:
        print(f"hankelreg: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"hankelreg: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"hankelreg: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
