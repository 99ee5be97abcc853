import csv
import io

import numpy as np
import pytest

from conftest import explicit_hankel
from hankelreg.hankel import (
    HankelDataError,
    TauSampler,
    block_to_csv,
    build_block,
    length_slice,
    masked_trace_norm,
    naive_block,
    numerical_rank,
    roulette_block,
    sample_tau,
    singular_spectrum,
    spectrum_to_text,
    svd,
    trace_norm,
    trace_norm_subgradient,
    word_gradient_array,
    word_gradient_weights,
    word_values,
)
from hankelreg.strings import BINARY, ResourceLimitError, enumerate_words, graded_index
from hankelreg.tomita import indicator
from hankelreg.wfa import counting_wfa, random_wfa

ONE = lambda w: 1.0  # noqa: E731
PURE = TauSampler("pure_geometric", 0.2)


def embed(block, n):
    """Zero-pad a block's entries to n x n (bases are graded prefixes of each other)."""
    out = np.zeros((n, n))
    r, c = block.entries.shape
    out[:r, :c] = block.entries
    return out


class TestBuildBlock:
    def test_all_ones(self):
        assert np.array_equal(build_block(ONE, 1, 1).entries, np.ones((3, 3)))

    def test_counting_wfa(self, ab):
        b = build_block(counting_wfa(), 2, 2, alphabet=ab)
        assert b.entry(ab.parse("a"), ab.parse("a")) == 2.0

    def test_tomita4(self):
        b = build_block(indicator("T4"), 2, 2)
        assert b.entry((0, 0), (0,)) == 0.0
        assert b.entry((0,), (1, 0)) == 1.0

    @pytest.mark.parametrize("lr,lc,mt", [(3, 2, None), (2, 3, None), (3, 3, 4), (4, 1, 2)])
    def test_matches_explicit(self, lr, lc, mt):
        f = random_wfa(3, 2, seed=5)
        b = build_block(f, lr, lc, max_total_len=mt)
        ref = explicit_hankel(f, enumerate_words(BINARY, lr), enumerate_words(BINARY, lc), mt)
        np.testing.assert_allclose(b.entries, ref, rtol=1e-14, atol=0)
        assert b.row_basis == enumerate_words(BINARY, lr)
        assert set(b.length_weights.values()) == {1.0}

    def test_nonfinite_names_word(self):
        f = lambda w: np.inf if w == (1, 0) else 0.0  # noqa: E731
        with pytest.raises(HankelDataError, match="'10'"):
            build_block(f, 2, 2)

    def test_array_oracle_equals_callable(self):
        f = random_wfa(2, 2, seed=9)
        vals = word_values(f, BINARY, 6)
        assert np.array_equal(build_block(vals, 3, 3).entries, build_block(f, 3, 3).entries)

    def test_cap(self):
        with pytest.raises(ResourceLimitError):
            build_block(ONE, 4, 4, cap=100)

    @pytest.mark.parametrize("L", range(6))
    def test_hankel_consistency(self, L):
        f = random_wfa(3, 2, seed=L)
        for b in (build_block(f, L, L), naive_block(f, L), roulette_block(f, L, PURE)):
            ids, vals = b.word_ids[b.mask], b.entries[b.mask]
            for w in np.unique(ids):
                group = vals[ids == w]
                assert np.all(group == group[0])


class TestLengthSlice:
    def test_zero(self):
        f = random_wfa(2, 2, seed=0)
        b = length_slice(f, 0)
        assert b.entries.shape == (1, 1) and b.entries[0, 0] == f(())

    def test_length_one(self):
        b = length_slice(ONE, 1)
        nz = {(BINARY.format(b.row_basis[i]), BINARY.format(b.col_basis[j])) for i, j in zip(*np.nonzero(b.entries))}
        assert nz == {("", "0"), ("", "1"), ("0", ""), ("1", "")}

    def test_length_two(self):
        assert np.count_nonzero(length_slice(ONE, 2).entries) == 12

    @pytest.mark.parametrize("L", range(7))
    @pytest.mark.parametrize("f", [indicator("T4"), indicator("T5"), random_wfa(3, 2, seed=2)])
    def test_decomposition(self, L, f):
        n = len(enumerate_words(BINARY, L))
        total = sum(embed(length_slice(f, i), n) for i in range(L + 1))
        assert np.array_equal(total, build_block(f, L, L, max_total_len=L).entries)


class TestSampler:
    def test_truncated_zero(self, rng):
        s = TauSampler("truncated_geometric", 0.2, t_max=0)
        assert {sample_tau(s, rng) for _ in range(200)} == {0}

    def test_survival(self):
        assert PURE.survival(2) == pytest.approx(0.64, abs=1e-15)
        assert PURE.survival(0) == 1.0
        t = TauSampler("truncated_geometric", 0.2, t_max=3)
        assert t.survival(4) == 0.0
        for i in range(5):
            assert t.survival(i) == pytest.approx(sum(t.pmf(k) for k in range(i, 4)))

    def test_pure_mean(self, rng):
        draws = np.array([sample_tau(PURE, rng, guard=False) for _ in range(100_000)])
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - 4.0) < 3 * se

    @pytest.mark.parametrize("sampler", [PURE, TauSampler("truncated_geometric", 0.2, 8), TauSampler("truncated_geometric", 0.5, 3)])
    def test_law_chi_square(self, sampler, rng):
        stats = pytest.importorskip("scipy.stats")
        n = 20_000
        draws = np.array([sample_tau(sampler, rng, guard=False) for _ in range(n)])
        top = 12 if not sampler.truncated else sampler.t_max
        observed = [np.sum(draws == k) for k in range(top)] + [np.sum(draws >= top)]
        expected = [n * sampler.pmf(k) for k in range(top)] + [n * sampler.survival(top)]
        assert stats.chisquare(observed, expected).pvalue > 0.01

    def test_pure_guard(self, rng):
        with pytest.raises(ResourceLimitError, match="truncated_geometric"):
            for _ in range(1000):
                sample_tau(PURE, rng, cap=15)

    def test_deterministic(self):
        a = [sample_tau(PURE, np.random.default_rng(3), guard=False) for _ in range(5)]
        b = [sample_tau(PURE, np.random.default_rng(3), guard=False) for _ in range(5)]
        assert a == b

    def test_invalid(self):
        with pytest.raises(ValueError):
            TauSampler("poisson")
        with pytest.raises(ValueError):
            TauSampler(p=1.0)


class TestRouletteBlock:
    def test_tau_zero(self):
        f = random_wfa(2, 2, seed=4)
        b = roulette_block(f, 0, PURE)
        assert b.entries.shape == (1, 1) and b.entries[0, 0] == f(())

    def test_survival_weights(self):
        b = roulette_block(ONE, 2, PURE)
        lengths = np.array([[len(u) + len(v) for v in b.col_basis] for u in b.row_basis])
        assert np.allclose(b.entries[lengths == 2], 1.5625, rtol=1e-15)
        assert np.all(b.entries[lengths > 2] == 0.0)
        assert b.length_weights[2] == pytest.approx(1.5625)

    def test_window_is_view(self):
        f = random_wfa(2, 2, seed=1)
        full = roulette_block(f, 3, PURE)
        view = roulette_block(f, 3, PURE, window=5)
        assert np.array_equal(embed(full, view.shape[0]), view.entries)

    def test_truncated_beyond_tmax(self):
        with pytest.raises(ValueError):
            roulette_block(ONE, 5, TauSampler("truncated_geometric", 0.2, 4))

    def test_monte_carlo_entries(self, rng):
        vals = word_values(indicator("T4"), BINARY, 4)
        n = 10_000
        i_eps, i000, i0010 = (graded_index(BINARY.parse(s), BINARY) for s in ("", "000", "0010"))
        draws = []
        for _ in range(n):
            b = roulette_block(vals, min(sample_tau(PURE, rng, guard=False), 4), PURE, window=4)
            draws.append((b.entries[i_eps, i000], b.entries[i_eps, i0010]))
        draws = np.array(draws)
        mean, se = draws.mean(axis=0), draws.std(axis=0, ddof=1) / np.sqrt(n)
        assert mean[0] == 0.0
        assert abs(mean[1] - 1.0) < 3 * se[1]


class TestNaiveBlock:
    def test_zero(self):
        assert naive_block(ONE, 0).entries.tolist() == [[1.0]]

    def test_nonzeros(self):
        assert np.count_nonzero(naive_block(ONE, 2).entries) == 17

    def test_trace_norm_l1(self):
        ref = np.linalg.svd(np.array([[1, 1, 1], [1, 0, 0], [1, 0, 0]], float), compute_uv=False).sum()
        assert trace_norm(naive_block(ONE, 1)) == pytest.approx(ref, rel=1e-14)


class TestSvd:
    def test_diag(self):
        _, s, _ = svd(np.diag([3.0, 1.0]))
        assert np.allclose(s, [3, 1])

    def test_ones(self):
        _, s, _ = svd(np.ones((3, 3)))
        assert np.allclose(s, [3, 0, 0], atol=1e-14)

    def test_against_eigen(self, rng):
        m = rng.normal(size=(6, 4))
        u, s, v = svd(m)
        eig = np.sqrt(np.clip(np.sort(np.linalg.eigvalsh(m.T @ m))[::-1], 0, None))
        np.testing.assert_allclose(s, eig, rtol=1e-10)
        assert np.linalg.norm(u @ np.diag(s) @ v.T - m) <= 1e-10 * np.linalg.norm(m)
        np.testing.assert_allclose(u.T @ u, np.eye(4), atol=1e-10)
        np.testing.assert_allclose(v.T @ v, np.eye(4), atol=1e-10)
        assert np.all(np.diff(s) <= 0) and np.all(s >= 0)

    def test_nonfinite(self):
        from hankelreg.hankel import SvdError

        with pytest.raises(SvdError):
            svd(np.array([[np.nan]]))


class TestTraceNorm:
    def test_examples(self):
        assert trace_norm(np.eye(2)) == pytest.approx(2.0)
        assert trace_norm(np.ones((3, 3))) == pytest.approx(3.0)

    def test_tomita5_naive_block(self):
        f = indicator("T5")
        words = enumerate_words(BINARY, 6)
        ref = np.linalg.svd(explicit_hankel(f, words, words, 6), compute_uv=False).sum()
        assert trace_norm(naive_block(f, 6)) == pytest.approx(ref, rel=1e-12)

    def test_zero_padding(self, rng):
        b = build_block(random_wfa(3, 2, seed=8), 4, 4)
        padded = np.pad(b.entries, ((0, 5), (0, 5)))
        assert abs(trace_norm(padded) - trace_norm(b)) < 1e-10
        assert numerical_rank(padded) == numerical_rank(b)

    def test_spectrum(self):
        assert np.allclose(singular_spectrum(np.eye(3)), [1, 1, 1])
        assert np.allclose(singular_spectrum(np.ones((4, 4))), [4, 0, 0, 0], atol=1e-12)
        b = naive_block(indicator("T3"), 5)
        assert abs(singular_spectrum(b).sum() - trace_norm(b)) < 1e-10


class TestSubgradient:
    def test_identity(self):
        np.testing.assert_allclose(trace_norm_subgradient(np.eye(2)), np.eye(2), atol=1e-15)

    def test_zero(self):
        assert np.array_equal(trace_norm_subgradient(np.zeros((3, 2))), np.zeros((3, 2)))

    def test_finite_difference(self, rng):
        m = rng.normal(size=(8, 8))
        g = trace_norm_subgradient(m)
        h = 1e-5
        for _ in range(5):
            d = rng.normal(size=m.shape)
            fd = (trace_norm(m + h * d) - trace_norm(m - h * d)) / (2 * h)
            assert abs(fd - np.sum(g * d)) < 1e-4 * abs(fd)

    def test_rank_deficient_drops_null_space(self):
        g = trace_norm_subgradient(np.ones((4, 4)))
        np.testing.assert_allclose(g, np.ones((4, 4)) / 4, atol=1e-14)


class TestWordGradientWeights:
    def test_single_entry(self):
        b = naive_block(ONE, 0)
        assert word_gradient_weights(b, np.ones((1, 1))) == {(): 1.0}
        r = roulette_block(ONE, 0, PURE)
        assert word_gradient_weights(r, np.array([[2.0]])) == {(): 2.0 * r.length_weights[0]}

    def test_basis_bounded_positions(self, rng):
        b = build_block(ONE, 1, 1)
        g = rng.normal(size=b.shape)
        c = word_gradient_weights(b, g)
        i0, i1 = graded_index((0,), BINARY), graded_index((1,), BINARY)
        assert c[(0, 1)] == g[i0, i1]

    @pytest.mark.parametrize("maker", [
        lambda f: build_block(f, 3, 2),
        lambda f: naive_block(f, 4),
        lambda f: roulette_block(f, 4, PURE),
    ])
    def test_chain_rule_identity(self, maker, rng):
        f = random_wfa(3, 2, seed=11)
        b = maker(f)
        g = rng.normal(size=b.shape)
        c = word_gradient_weights(b, g)
        assert abs(sum(cw * f(w) for w, cw in c.items()) - np.sum(g * b.entries)) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            word_gradient_weights(naive_block(ONE, 1), np.ones((2, 2)))


class TestRank:
    def test_examples(self, ab):
        assert numerical_rank(np.ones((7, 7))) == 1
        assert numerical_rank(np.zeros((3, 3))) == 0
        assert numerical_rank(build_block(counting_wfa(), 5, 5, alphabet=ab)) == 2

    def test_tomita6_stable(self):
        r6 = numerical_rank(build_block(indicator("T6"), 6, 6))
        assert r6 == numerical_rank(build_block(indicator("T6"), 8, 8)) == 3


class TestMaskedFastPath:
    @pytest.mark.parametrize("total", range(9))
    def test_roulette_matches_dense(self, total):
        f = random_wfa(4, 2, seed=total)
        vals = word_values(f, BINARY, total)
        b = roulette_block(vals, total, PURE)
        scale = [1 / PURE.survival(i) for i in range(total + 1)]
        value, weights = masked_trace_norm(vals, total, scale)
        assert value == pytest.approx(trace_norm(b), rel=1e-10, abs=1e-14)
        dense, present = word_gradient_array(b, trace_norm_subgradient(b))
        n = weights.size
        assert present[:n].all() and not present[n:].any()
        np.testing.assert_allclose(weights, dense[:n], rtol=1e-7, atol=1e-9)

    @pytest.mark.parametrize("g", ["T4", "T5"])
    def test_naive_matches_dense(self, g):
        vals = word_values(indicator(g), BINARY, 8)
        value, weights = masked_trace_norm(vals, 8, [1.0] * 9)
        b = naive_block(vals, 8)
        assert value == pytest.approx(trace_norm(b), rel=1e-10)
        dense, _ = word_gradient_array(b, trace_norm_subgradient(b))
        np.testing.assert_allclose(weights, dense[: weights.size], atol=1e-8)

    def test_ternary(self):
        from hankelreg.strings import Alphabet

        abc = Alphabet(("a", "b", "c"))
        f = random_wfa(3, 3, seed=2)
        vals = word_values(f, abc, 4)
        value, _ = masked_trace_norm(vals, 4, [1.0] * 5, alphabet_size=3)
        assert value == pytest.approx(trace_norm(naive_block(vals, 4, alphabet=abc)), rel=1e-10)


class TestExport:
    def test_csv(self):
        b = naive_block(ONE, 1)
        rows = list(csv.reader(io.StringIO(block_to_csv(b))))
        assert rows[0] == ["", "<eps>", "0", "1"]
        assert rows[2] == ["0", "1.0", "0.0", "0.0"]

    def test_spectrum_text(self):
        assert spectrum_to_text([2.0, 0.5]) == "2.0\n0.5\n"
