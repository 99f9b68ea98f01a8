"""Significance tests: two-tailed permutation test on score vectors and
t-based p-values for correlation coefficients."""

from __future__ import annotations

import hashlib
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

import numpy as np
from scipy import stats as sps

from .model import PermutationTestResult

DEFAULT_PERMUTATIONS = 100_000
DEFAULT_ALPHA = 0.05
# cap on floats materialized per permutation chunk
_CHUNK_ELEMS = 2_000_000


def pair_generator(seed: int, pair_id: str = "") -> np.random.Generator:
    """Philox stream keyed by (seed, pair_id); independent per pair."""
    digest = hashlib.sha256(f"{int(seed)}\x1f{pair_id}".encode()).digest()
    return np.random.Generator(np.random.Philox(key=int.from_bytes(digest[:16], "little")))


def permutation_test(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    n_permutations: int = DEFAULT_PERMUTATIONS,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    pair_id: str = "",
    small_sample_correction: bool = False,
) -> PermutationTestResult:
    """Two-tailed Monte-Carlo permutation test on the difference of means.

    ``p = #{|D_perm| >= |D_obs|} / N``, floored at ``1/N``; with
    ``small_sample_correction`` it is ``(count + 1) / (N + 1)`` instead.

    Relabelings act on the sorted pooled sample and always split off the
    smaller group first, so the permutation stream depends only on the
    pooled multiset. This makes p exactly symmetric in (a, b) and monotone
    in |D_obs| for a fixed pooled sample.
    """
    if n_permutations < 1:
        raise ValueError("n_permutations must be >= 1")
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise ValueError("both score vectors must be non-empty")
    if not (np.isfinite(a).all() and np.isfinite(b).all()):
        raise ValueError("scores must be finite")

    d_obs = float(a.mean() - b.mean())
    pooled = np.sort(np.concatenate([a, b]))
    n = pooled.size
    k = min(a.size, b.size)
    target = abs(d_obs) * (1.0 - 1e-12) - 1e-15
    rng = pair_generator(seed, pair_id)
    total = float(pooled.sum())

    count = 0
    chunk = max(1, _CHUNK_ELEMS // n)
    done = 0
    while done < n_permutations:
        m = min(chunk, n_permutations - done)
        perm = rng.permuted(np.broadcast_to(pooled, (m, n)), axis=1)
        s = perm[:, :k].sum(axis=1)
        d = s / k - (total - s) / (n - k)
        count += int(np.count_nonzero(np.abs(d) >= target))
        done += m

    if small_sample_correction:
        p = (count + 1) / (n_permutations + 1)
    else:
        p = max(count, 1) / n_permutations
    p = min(1.0, p)
    return PermutationTestResult(d_obs, p, n_permutations, alpha, p < alpha, count)


def all_pairs_tests(
    vectors: Mapping[str, Sequence[float]],
    n_permutations: int = DEFAULT_PERMUTATIONS,
    alpha: float = DEFAULT_ALPHA,
    seed: int = 0,
    workers: int = 4,
) -> dict[tuple[str, str], PermutationTestResult]:
    """Permutation test for every unordered pair of named score vectors."""
    names = sorted(vectors)
    pairs = list(itertools.combinations(names, 2))

    def run(pair):
        x, y = pair
        return permutation_test(vectors[x], vectors[y], n_permutations, alpha, seed, pair_id=f"{x}|{y}")

    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        results = list(ex.map(run, pairs))
    return dict(zip(pairs, results))


def correlation_pvalue(r: float, n: int, method: str = "pearson") -> float:
    """Two-tailed p for a correlation coefficient via t with n-2 dof.

    Spearman uses the same large-sample t approximation.
    """
    if method not in ("pearson", "spearman"):
        raise ValueError(f"unknown method {method!r}")
    if n < 3:
        raise ValueError("need n >= 3")
    if abs(r) > 1 + 1e-12:
        raise ValueError("|r| must be <= 1")
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), df=n - 2)))
