"""Ranking and agreement statistics over pairwise annotation data.

Pure functions throughout: a win matrix in, fitted strengths out; two
choice lists in, an agreement coefficient out. Nothing here touches disk
except the small (de)serialization helpers used by the CLI.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .records import UsageError


class DegenerateStatError(ValueError):
    """The statistic is undefined for this input (e.g. zero variance)."""


# ---------------------------------------------------------------------------
# Win matrices


@dataclass
class WinMatrix:
    """Pairwise win counts: wins[i][j] = times models[i] beat models[j]."""

    models: list[str]
    wins: list[list[int]]

    def __post_init__(self):
        k = len(self.models)
        if len(self.wins) != k or any(len(row) != k for row in self.wins):
            raise UsageError("wins must be a square matrix over models")
        for i in range(k):
            if self.wins[i][i] != 0:
                raise UsageError("diagonal of a win matrix must be zero")
            for j in range(k):
                if self.wins[i][j] < 0:
                    raise UsageError("win counts must be non-negative")

    @classmethod
    def zeros(cls, models: Sequence[str]) -> "WinMatrix":
        k = len(models)
        return cls(models=list(models), wins=[[0] * k for _ in range(k)])

    def add_win(self, winner: str, loser: str, count: int = 1) -> None:
        i = self.models.index(winner)
        j = self.models.index(loser)
        if i == j:
            raise UsageError("a model cannot beat itself")
        self.wins[i][j] += count

    def total(self) -> int:
        return sum(sum(row) for row in self.wins)

    def games(self, i: int, j: int) -> int:
        return self.wins[i][j] + self.wins[j][i]

    def to_obj(self) -> dict:
        return {"models": self.models, "wins": self.wins}

    @classmethod
    def from_obj(cls, obj: dict) -> "WinMatrix":
        return cls(models=list(obj["models"]), wins=[list(r) for r in obj["wins"]])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_obj(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "WinMatrix":
        return cls.from_obj(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Bradley-Terry


@dataclass
class BTResult:
    models: list[str]
    strengths: dict[str, float]
    ranking: list[str]
    iterations: int
    converged: bool
    alpha: float
    log_likelihood: float
    ll_trace: list[float] = field(default_factory=list)


def _strongly_connected_components(adjacency: list[list[bool]]) -> list[list[int]]:
    # Kosaraju: order by forward DFS finish time, then sweep the transpose.
    k = len(adjacency)
    visited = [False] * k
    order: list[int] = []

    def dfs(start: int, adj, mark: list[bool], sink: list[int]):
        stack = [(start, 0)]
        mark[start] = True
        while stack:
            node, edge = stack.pop()
            nxt = None
            for j in range(edge, k):
                if adj[node][j] and not mark[j]:
                    nxt = (node, j)
                    break
                edge = j + 1
            if nxt is None:
                sink.append(node)
            else:
                node, j = nxt
                stack.append((node, j + 1))
                mark[j] = True
                stack.append((j, 0))

    for v in range(k):
        if not visited[v]:
            dfs(v, adjacency, visited, order)
    transpose = [[adjacency[j][i] for j in range(k)] for i in range(k)]
    seen = [False] * k
    components = []
    for v in reversed(order):
        if not seen[v]:
            comp: list[int] = []
            dfs(v, transpose, seen, comp)
            components.append(sorted(comp))
    return components


def bt_log_likelihood(matrix: WinMatrix, strengths: Sequence[float], alpha: float = 0.0) -> float:
    """Log-likelihood of the (optionally alpha-smoothed) win counts."""
    ll = 0.0
    k = len(matrix.models)
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            w = matrix.wins[i][j] + alpha
            if w > 0:
                ll += w * math.log(strengths[i] / (strengths[i] + strengths[j]))
    return ll


def bt_fit(
    matrix: WinMatrix,
    alpha: float = 0.01,
    tol: float = 1e-10,
    max_iter: int = 10_000,
) -> BTResult:
    """Fit Bradley-Terry strengths by minorization-maximization.

    Each sweep applies pi_i <- W_i / sum_j n_ij / (pi_i + pi_j) and
    renormalizes to geometric mean 1. ``alpha`` pseudo-wins are added to
    every ordered pair so sparse desk-scale matrices stay fittable; with
    alpha = 0 the comparison graph must be strongly connected or the MLE
    does not exist, and the offending components are reported.
    """
    k = len(matrix.models)
    if k < 2:
        raise UsageError("Bradley-Terry needs at least two models")
    if alpha < 0:
        raise UsageError("smoothing alpha must be >= 0")

    w = [[matrix.wins[i][j] + (alpha if i != j else 0.0) for j in range(k)] for i in range(k)]
    if alpha == 0:
        adjacency = [[w[i][j] > 0 for j in range(k)] for i in range(k)]
        components = _strongly_connected_components(adjacency)
        if len(components) > 1:
            named = [
                "{" + ", ".join(matrix.models[i] for i in comp) + "}" for comp in components
            ]
            raise DegenerateStatError(
                "comparison graph is not strongly connected with alpha=0; "
                "components: " + ", ".join(named)
            )

    total_wins = [sum(w[i][j] for j in range(k) if j != i) for i in range(k)]
    n = [[w[i][j] + w[j][i] for j in range(k)] for i in range(k)]
    pi = [1.0] * k
    prev_ll = bt_log_likelihood(matrix, pi, alpha)
    ll_trace = [prev_ll]
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        new_pi = []
        for i in range(k):
            denom = sum(n[i][j] / (pi[i] + pi[j]) for j in range(k) if j != i and n[i][j] > 0)
            new_pi.append(total_wins[i] / denom if denom > 0 else pi[i])
        gmean = math.exp(sum(math.log(p) for p in new_pi) / k)
        new_pi = [p / gmean for p in new_pi]
        ll = bt_log_likelihood(matrix, new_pi, alpha)
        if ll < prev_ll - 1e-9 * (1.0 + abs(prev_ll)):
            raise RuntimeError(
                f"MM sweep decreased the log-likelihood ({prev_ll} -> {ll}); "
                "this indicates a bug, not bad data"
            )
        ll_trace.append(ll)
        delta = max(abs(new_pi[i] - pi[i]) / pi[i] for i in range(k))
        pi = new_pi
        prev_ll = ll
        if delta < tol:
            converged = True
            break

    strengths = dict(zip(matrix.models, pi))
    ranking = rank_strengths(strengths)
    return BTResult(
        models=list(matrix.models),
        strengths=strengths,
        ranking=ranking,
        iterations=iterations,
        converged=converged,
        alpha=alpha,
        log_likelihood=prev_ll,
        ll_trace=ll_trace,
    )


def rank_strengths(strengths: dict[str, float]) -> list[str]:
    """Models by descending strength; exact ties break by canonical name."""
    return [m for m, _ in sorted(strengths.items(), key=lambda kv: (-kv[1], kv[0]))]


def rank(result: BTResult) -> list[str]:
    return rank_strengths(result.strengths)


# ---------------------------------------------------------------------------
# Judge aggregation and agreement


def mode_aggregate(choices_by_judge: Sequence[Sequence[str]]) -> list[str]:
    """Per-item majority choice across an odd number of judges."""
    if len(choices_by_judge) % 2 == 0:
        raise UsageError("mode aggregation needs an odd number of judges")
    lengths = {len(c) for c in choices_by_judge}
    if len(lengths) != 1:
        raise UsageError("judges must cover the same items")
    aggregate = []
    for votes in zip(*choices_by_judge):
        counts: dict[str, int] = {}
        for vote in votes:
            counts[vote] = counts.get(vote, 0) + 1
        aggregate.append(max(counts.items(), key=lambda kv: kv[1])[0])
    return aggregate


@dataclass
class KappaResult:
    n_items: int
    p_observed: float
    p_expected: float
    kappa: float


def kappa(a: Sequence[str], b: Sequence[str]) -> KappaResult:
    """Cohen's kappa between two raters over the same items.

    p_o is the matched fraction, p_e the chance agreement from the product
    of the raters' marginals, kappa = (p_o - p_e) / (1 - p_e). The kappa
    value itself is computed from the integer counts in one division
    (kappa = (agree*n - M) / (n^2 - M) with M the marginal product sum), so
    hand-computable cases come out exact.
    """
    if len(a) != len(b):
        raise UsageError("raters must cover the same items")
    n = len(a)
    if n == 0:
        raise UsageError("kappa needs at least one item")
    agree = sum(1 for x, y in zip(a, b) if x == y)
    categories = set(a) | set(b)
    marginal_product_sum = 0
    for cat in categories:
        marginal_product_sum += sum(1 for x in a if x == cat) * sum(
            1 for y in b if y == cat
        )
    if marginal_product_sum == n * n:
        raise DegenerateStatError(
            "degenerate marginals: both raters constant on the same category"
        )
    return KappaResult(
        n_items=n,
        p_observed=agree / n,
        p_expected=marginal_product_sum / (n * n),
        kappa=(agree * n - marginal_product_sum) / (n * n - marginal_product_sum),
    )


# ---------------------------------------------------------------------------
# Mann-Whitney U


@dataclass
class MWUResult:
    n1: int
    n2: int
    u1: float
    u2: float
    mu_u: float
    sigma_u: float
    z: float
    p_one_sided: float
    method: str  # "exact" or "normal"
    tie_groups: list[int] = field(default_factory=list)


EXACT_ENUMERATION_LIMIT = 16


def _midranks(pooled: Sequence[float]) -> list[float]:
    order = sorted(range(len(pooled)), key=lambda i: pooled[i])
    ranks = [0.0] * len(pooled)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and pooled[order[j + 1]] == pooled[order[i]]:
            j += 1
        mid = (i + j) / 2 + 1
        for idx in order[i : j + 1]:
            ranks[idx] = mid
        i = j + 1
    return ranks


def _u_statistic(x: Sequence[float], y: Sequence[float]) -> float:
    ranks = _midranks(list(x) + list(y))
    r1 = sum(ranks[: len(x)])
    return r1 - len(x) * (len(x) + 1) / 2


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _exact_p_greater(x: Sequence[float], y: Sequence[float], u_observed: float) -> float:
    """P(U >= u_observed) by enumerating every label assignment of the pool."""
    pooled = list(x) + list(y)
    n1 = len(x)
    at_least = 0
    total = 0
    for x_idx in combinations(range(len(pooled)), n1):
        chosen = set(x_idx)
        xs = [pooled[i] for i in x_idx]
        ys = [pooled[i] for i in range(len(pooled)) if i not in chosen]
        u = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in xs for b in ys)
        total += 1
        if u >= u_observed:
            at_least += 1
    return at_least / total


def mann_whitney_u(
    x: Sequence[float], y: Sequence[float], alternative: str = "greater"
) -> MWUResult:
    """One-sided Mann-Whitney U test that x is stochastically greater than y.

    U1 counts pairs where x beats y, ties counting one half. Small pooled
    samples (n1+n2 <= 16) are evaluated by exact enumeration of all label
    assignments; larger ones by the normal approximation with the standard
    tie-corrected variance and a 0.5 continuity correction.
    """
    if alternative != "greater":
        raise UsageError("only alternative='greater' is supported")
    n1, n2 = len(x), len(y)
    if n1 < 1 or n2 < 1:
        raise UsageError("both samples must be non-empty")
    pooled = list(x) + list(y)
    if len(set(pooled)) == 1:
        raise DegenerateStatError(
            "all values identical across both samples: sigma_U = 0"
        )

    u1 = _u_statistic(x, y)
    u2 = n1 * n2 - u1
    mu_u = n1 * n2 / 2.0

    n = n1 + n2
    tie_groups = []
    seen: dict[float, int] = {}
    for v in pooled:
        seen[v] = seen.get(v, 0) + 1
    tie_groups = sorted(t for t in seen.values() if t > 1)
    tie_term = sum(t**3 - t for t in tie_groups) / (n * (n - 1))
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term)
    sigma_u = math.sqrt(variance)
    if sigma_u == 0.0:
        raise DegenerateStatError("null variance of U is zero")

    z = (u1 - mu_u - 0.5) / sigma_u
    p_normal = _normal_sf(z)

    if n <= EXACT_ENUMERATION_LIMIT:
        p = _exact_p_greater(x, y, u1)
        method = "exact"
    else:
        p = p_normal
        method = "normal"

    return MWUResult(
        n1=n1, n2=n2, u1=u1, u2=u2, mu_u=mu_u, sigma_u=sigma_u, z=z,
        p_one_sided=p, method=method, tie_groups=tie_groups,
    )


def format_p(p: float) -> str:
    """Human-facing p; sub-normal values print as a bound, never as 0."""
    if p < 1e-308:
        return "< 1e-308"
    return f"{p:.6g}"


# ---------------------------------------------------------------------------
# Judge-file plumbing for the CLI


def load_choices(path: str | Path) -> list[str]:
    """One choice per line ("A" or "B"), or a JSON list."""
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        data = json.loads(text)
        return [str(v) for v in data]
    return [line.strip() for line in text.splitlines() if line.strip()]


def load_numbers(path: str | Path) -> list[float]:
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        return [float(v) for v in json.loads(text)]
    return [float(line) for line in text.splitlines() if line.strip()]
