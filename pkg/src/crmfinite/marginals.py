"""Exact marginal (predictive) processes and their finite-approximation twins.

For the three exponential-family CRM-likelihood pairs without power law
(beta-Bernoulli, gamma-Poisson, beta-negative-binomial), the predictive
distribution of an instantiated atom's count depends on its history only
through the round index n and the count total S:

    beta-Bernoulli      h(1 | hist) = S / (alpha - 1 + n)
    gamma-Poisson       h(x | hist) = NB(x | S, 1/(lambda + n))
    beta-neg-binomial   h(x | hist) = Gamma(x+r)/(x! Gamma(r))
                                      * B(S + x, rn + alpha) / B(S, r(n-1) + alpha)

The level-K approximation shifts S by c/K (c = gamma*alpha resp. gamma*lambda),
which also gives the dormant-atom law at an all-zero history.  Fresh atoms in
the target process arrive as independent Poissons with means M_{n,x}; their
per-round totals have closed forms (the beta-negative-binomial one is a
digamma difference, cross-checked against brute-force summation in the tests).

Infinite sums over x are truncated with certified remainders: totals are known
in closed form, and because the predictive families are likelihood-ratio
ordered in the count total, past the single sign change of the term
difference the neglected remainder is exactly |tail_a - tail_b|.

The module also houses feature-allocation simulation, the Dirichlet-process
and finite-symmetric-Dirichlet urns, and the numeric four-inequality
growth/approximation condition checker with per-family presets.
"""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .measures import Family, RateMeasureSpec

__all__ = [
    "ModelKind",
    "ExpFamilyModel",
    "beta_bernoulli",
    "gamma_poisson",
    "beta_negative_binomial",
    "target_predictive_pmf",
    "approx_predictive_pmf",
    "target_new_atom_rate",
    "total_new_atom_rate",
    "approx_fresh_mass",
    "sample_predictive_count",
    "FeatureAllocation",
    "simulate_allocation",
    "allocation_log_probability",
    "FRESH",
    "dp_urn_probs",
    "fsd_urn_probs",
    "dp_urn_step",
    "fsd_urn_step",
    "Condition1Bounds",
    "generic_condition_bounds",
    "condition_preset",
    "check_condition_1",
]

_TAIL_TOL = 1e-12


class ModelKind(enum.Enum):
    BETA_BERNOULLI = "beta_bernoulli"
    GAMMA_POISSON = "gamma_poisson"
    BETA_NEG_BINOMIAL = "beta_neg_binomial"


@dataclass(frozen=True)
class ExpFamilyModel:
    """A d = 0 exponential-family CRM paired with its count likelihood."""

    kind: ModelKind
    spec: RateMeasureSpec
    r: float = 0.0  # negative-binomial stopping parameter, BETA_NEG_BINOMIAL only

    def __post_init__(self):
        if self.spec.discount != 0.0:
            raise ValueError("marginal processes require discount d = 0")
        if self.kind in (ModelKind.BETA_BERNOULLI, ModelKind.BETA_NEG_BINOMIAL):
            if self.spec.family is not Family.BETA:
                raise ValueError(f"{self.kind.value} needs a beta-family rate measure")
        else:
            if self.spec.family is not Family.GAMMA:
                raise ValueError("gamma_poisson needs a gamma-family rate measure")
        if self.kind is ModelKind.BETA_NEG_BINOMIAL:
            if not self.r > 0:
                raise ValueError(f"negative-binomial r must be positive, got {self.r}")
            if not self.alpha > 1:
                raise ValueError(f"beta-neg-binomial requires alpha > 1, got {self.alpha}")

    @property
    def gamma(self):
        return self.spec.gamma

    @property
    def alpha(self):
        return self.spec.extra("eta")  # d = 0, so eta is the concentration

    @property
    def lam(self):
        return self.spec.extra("rate")

    @property
    def mass_shift(self):
        """c = gamma*alpha (beta families) or gamma*lambda; the approximate
        model adds c/K to every count total."""
        if self.kind is ModelKind.GAMMA_POISSON:
            return self.gamma * self.lam
        return self.gamma * self.alpha


def beta_bernoulli(gamma, alpha) -> ExpFamilyModel:
    return ExpFamilyModel(ModelKind.BETA_BERNOULLI,
                          RateMeasureSpec(Family.BETA, gamma, 0.0, eta=alpha))


def gamma_poisson(gamma, lam) -> ExpFamilyModel:
    return ExpFamilyModel(ModelKind.GAMMA_POISSON,
                          RateMeasureSpec(Family.GAMMA, gamma, 0.0, rate=lam))


def beta_negative_binomial(gamma, alpha, r) -> ExpFamilyModel:
    return ExpFamilyModel(ModelKind.BETA_NEG_BINOMIAL,
                          RateMeasureSpec(Family.BETA, gamma, 0.0, eta=alpha), r=float(r))


# ---------------------------------------------------------------------------
# predictive pmfs
# ---------------------------------------------------------------------------

def _predictive_logpmf(model, n, S, shift, x):
    """log pmf of the next count at an atom whose history of n-1 observations
    sums to S; ``shift`` is the approximation's pseudo-count c/K (0 for the
    target).  Fully broadcastable.  The shift augments the count total but not
    the number of trials, which for Bernoulli counts moves the denominator to
    alpha - 1 + n + c/K."""
    x = np.asarray(x, dtype=float)
    n = np.asarray(n, dtype=float)
    total = np.asarray(S, dtype=float) + shift
    if model.kind is ModelKind.BETA_BERNOULLI:
        p1 = total / (model.alpha - 1.0 + n + shift)
        with np.errstate(divide="ignore"):
            return np.where(x == 1, np.log(p1), np.where(x == 0, np.log1p(-p1), -np.inf))
    if model.kind is ModelKind.GAMMA_POISSON:
        p = 1.0 / (model.lam + n)
        return (special.gammaln(total + x) - special.gammaln(total) - special.gammaln(x + 1)
                + x * np.log(p) + total * np.log1p(-p))
    r, al = model.r, model.alpha
    return (special.gammaln(x + r) - special.gammaln(x + 1) - special.gammaln(r)
            + special.betaln(total + x, r * n + al) - special.betaln(total, r * (n - 1) + al))


def _check_history(model, history):
    history = np.asarray(history, dtype=float)
    if history.size and (np.any(history < 0) or np.any(history != np.floor(history))):
        raise ValueError("history entries must be nonnegative integer counts")
    if model.kind is ModelKind.BETA_BERNOULLI and np.any(history > 1):
        raise ValueError("beta-Bernoulli counts are binary")
    return history


def target_predictive_pmf(model: ExpFamilyModel, history, x) -> float:
    """P(next count = x) at an atom already instantiated with the given history."""
    history = _check_history(model, history)
    total = history.sum()
    if total == 0:
        raise ValueError("atom not yet instantiated in the target process (all-zero history)")
    n = history.size + 1
    return float(np.exp(_predictive_logpmf(model, n, total, 0.0, x)))


def approx_predictive_pmf(model: ExpFamilyModel, K, history, x) -> float:
    """Same predictive under the level-K approximation; all-zero histories are
    allowed and govern the dormant atoms."""
    if K < 1:
        raise ValueError(f"approximation level K must be >= 1, got {K}")
    history = _check_history(model, history)
    n = history.size + 1
    return float(np.exp(_predictive_logpmf(model, n, history.sum(), model.mass_shift / K, x)))


def target_new_atom_rate(model: ExpFamilyModel, n, x):
    """Poisson mean M_{n,x} of brand-new atoms of size x in round n."""
    if np.any(np.asarray(n) < 1):
        raise ValueError("round index n must be >= 1")
    x_arr = np.asarray(x, dtype=float)
    if np.any(x_arr < 1) or np.any(x_arr != np.floor(x_arr)):
        raise ValueError("new-atom sizes x must be integers >= 1")
    n = np.asarray(n, dtype=float)
    if model.kind is ModelKind.BETA_BERNOULLI:
        out = np.where(x_arr == 1, model.gamma * model.alpha / (model.alpha - 1.0 + n), 0.0)
    elif model.kind is ModelKind.GAMMA_POISSON:
        with np.errstate(under="ignore"):
            out = model.gamma * model.lam * np.exp(-np.log(x_arr) - x_arr * np.log(model.lam + n))
    else:
        r, al = model.r, model.alpha
        out = model.gamma * al * np.exp(special.gammaln(x_arr + r) - special.gammaln(x_arr + 1)
                                        - special.gammaln(r) + special.betaln(x_arr, r * n + al))
    return out if np.asarray(out).shape else float(out)


def total_new_atom_rate(model: ExpFamilyModel, n):
    """sum_x M_{n,x}, in closed form per family."""
    n = np.asarray(n, dtype=float)
    if model.kind is ModelKind.BETA_BERNOULLI:
        out = model.gamma * model.alpha / (model.alpha - 1.0 + n)
    elif model.kind is ModelKind.GAMMA_POISSON:
        out = -model.gamma * model.lam * np.log1p(-1.0 / (model.lam + n))
    else:
        r, al = model.r, model.alpha
        out = model.gamma * al * (special.digamma(r * n + al) - special.digamma(r * (n - 1) + al))
    return out if out.shape else float(out)


def approx_fresh_mass(model: ExpFamilyModel, K, n):
    """sum_{x>=1} h~(x | all-zero history) = P(a dormant atom activates in round n)."""
    n = np.asarray(n, dtype=float)
    c_over_k = model.mass_shift / K
    if model.kind is ModelKind.BETA_BERNOULLI:
        out = c_over_k / (model.alpha - 1.0 + n + c_over_k)
    elif model.kind is ModelKind.GAMMA_POISSON:
        out = -np.expm1(c_over_k * np.log1p(-1.0 / (model.lam + n)))
    else:
        r, al = model.r, model.alpha
        out = -np.expm1(special.betaln(c_over_k, r * n + al)
                        - special.betaln(c_over_k, r * (n - 1) + al))
    return out if out.shape else float(out)


def sample_predictive_count(model, history, rng, K=None):
    """One draw of the next count: target process when K is None, level-K
    approximation otherwise (which also allows all-zero histories)."""
    history = _check_history(model, history)
    total = history.sum()
    if K is None:
        if total == 0:
            raise ValueError("atom not yet instantiated in the target process")
        shift = 0.0
    else:
        shift = model.mass_shift / K
    return _sample_count(model, history.size + 1, total, shift, rng)


def _sample_count(model, n, S, shift, rng):
    """Inverse-CDF walk over the predictive pmf (proper, so it terminates)."""
    u = rng.random()
    x, cum = 0, 0.0
    while True:
        cum += math.exp(float(_predictive_logpmf(model, n, S, shift, x)))
        if u <= cum or cum >= 1.0 - 1e-15:
            return x
        x += 1
        if x > 10_000_000:
            raise RuntimeError("predictive sampling walk failed to terminate")


# ---------------------------------------------------------------------------
# feature allocations
# ---------------------------------------------------------------------------

@dataclass
class FeatureAllocation:
    """Trait counts by observation x instantiated atom, columns in appearance
    order (first-appearance row, then descending count, then draw order)."""

    counts: np.ndarray  # (N, J) nonnegative integers

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2:
            raise ValueError("counts must be a 2-d array")
        if self.counts.shape[1] and np.any(self.counts.sum(axis=0) == 0):
            raise ValueError("every column must contain at least one nonzero count")
        if np.any(np.diff(self.first_rows()) < 0):
            raise ValueError("columns must appear in order of first appearance")

    def first_rows(self):
        if self.counts.shape[1] == 0:
            return np.empty(0, dtype=int)
        return (self.counts != 0).argmax(axis=0)

    @property
    def n_rows(self):
        return self.counts.shape[0]

    @property
    def n_columns(self):
        return self.counts.shape[1]

    def to_csv(self) -> str:
        """Sparse row,col,count triplets."""
        buf = io.StringIO()
        buf.write("row,col,count\n")
        for r, c in zip(*np.nonzero(self.counts)):
            buf.write(f"{r},{c},{self.counts[r, c]}\n")
        return buf.getvalue()

    def to_json(self) -> dict:
        return {"rows": self.n_rows, "columns": self.n_columns,
                "counts": self.counts.tolist()}

    @classmethod
    def from_csv(cls, text: str, n_rows=None) -> "FeatureAllocation":
        rows, cols, vals = [], [], []
        for line in text.strip().splitlines()[1:]:
            r, c, v = (int(tok) for tok in line.split(","))
            rows.append(r), cols.append(c), vals.append(v)
        n = (max(rows) + 1) if rows else 0
        if n_rows is not None:
            n = max(n, n_rows)
        j = (max(cols) + 1) if cols else 0
        counts = np.zeros((n, j), dtype=np.int64)
        counts[rows, cols] = vals
        return cls(counts)


def simulate_allocation(model: ExpFamilyModel, N, rng, source="target", K=None) -> FeatureAllocation:
    """Simulate N rounds of the marginal process.

    source="target": existing atoms draw from the target predictive and fresh
    atoms arrive as Poisson counts per size, sizes truncated once the
    remaining total rate is below 1e-12.  source="aifa": existing atoms draw
    from the level-K predictive and each of the K - J dormant atoms draws
    from the all-zero-history law.
    """
    if N < 1:
        raise ValueError(f"N must be >= 1, got {N}")
    if source not in ("target", "aifa"):
        raise ValueError(f"unknown source {source!r}")
    if source == "aifa" and (K is None or K < 1):
        raise ValueError("aifa source needs an approximation level K >= 1")
    if model.kind is ModelKind.BETA_BERNOULLI:
        return _simulate_allocation_bernoulli(model, N, rng, source, K)
    shift = model.mass_shift / K if source == "aifa" else 0.0
    columns: list[list[int]] = []  # per column, counts from its birth row on
    births: list[int] = []
    totals: list[int] = []
    for n in range(1, N + 1):
        for j, col in enumerate(columns):
            x = _sample_count(model, n, totals[j], shift, rng)
            col.append(x)
            totals[j] += x
        if source == "target":
            new_sizes = []
            budget = float(total_new_atom_rate(model, n))
            x = 1
            while budget > _TAIL_TOL:
                rate = float(target_new_atom_rate(model, n, x))
                budget -= rate
                count = int(rng.poisson(rate)) if rate > 0 else 0
                new_sizes.extend([x] * count)
                x += 1
        else:
            dormant = K - len(columns)
            draws = [_sample_count(model, n, 0, shift, rng) for _ in range(dormant)]
            new_sizes = [x for x in draws if x > 0]
        # appearance order within the round: descending count, then draw order
        for i in sorted(range(len(new_sizes)), key=lambda i: (-new_sizes[i], i)):
            columns.append([new_sizes[i]])
            births.append(n - 1)
            totals.append(new_sizes[i])
    mat = np.zeros((N, len(columns)), dtype=np.int64)
    for j, col in enumerate(columns):
        mat[births[j]:births[j] + len(col), j] = col
    return FeatureAllocation(mat)


def _simulate_allocation_bernoulli(model, N, rng, source, K):
    """Binary fast path: whole rounds are vectorized across columns."""
    al = model.alpha
    shift = model.mass_shift / K if source == "aifa" else 0.0
    rows = []
    totals = np.empty(0, dtype=np.int64)
    births = np.empty(0, dtype=np.int64)
    for n in range(1, N + 1):
        p = (totals + shift) / (al - 1.0 + n + shift)
        draws = (rng.random(totals.size) < p).astype(np.int64)
        if source == "target":
            fresh = int(rng.poisson(model.gamma * al / (al - 1.0 + n)))
        else:
            p0 = shift / (al - 1.0 + n + shift)
            fresh = int(rng.binomial(K - totals.size, p0))
        rows.append((draws, fresh))
        totals = np.concatenate([totals + draws, np.ones(fresh, dtype=np.int64)])
        births = np.concatenate([births, np.full(fresh, n - 1, dtype=np.int64)])
    mat = np.zeros((N, totals.size), dtype=np.int64)
    for i, (draws, fresh) in enumerate(rows):
        mat[i, : draws.size] = draws
        mat[i, draws.size: draws.size + fresh] = 1
    return FeatureAllocation(mat)


def allocation_log_probability(model: ExpFamilyModel, alloc: FeatureAllocation) -> float:
    """log P of a canonical feature-allocation matrix under the target process.

    Existing-atom counts chain the predictive pmf; fresh-atom counts per round
    and size are Poisson; atoms born in the same (round, size) group are
    exchangeable across their futures, so the canonical matrix carries a
    multiset-permutation factor d! / prod(multiplicities of identical columns).
    """
    counts = alloc.counts
    n_rows, n_cols = counts.shape
    first = alloc.first_rows()
    logp = 0.0
    for n in range(1, n_rows + 1):
        for j in range(n_cols):
            if first[j] < n - 1:
                total = float(counts[: n - 1, j].sum())
                logp += float(_predictive_logpmf(model, n, total, 0.0, counts[n - 1, j]))
        born = [j for j in range(n_cols) if first[j] == n - 1]
        born_sizes = {int(counts[n - 1, j]) for j in born}
        for x in born_sizes:
            group = [j for j in born if counts[n - 1, j] == x]
            rate = float(target_new_atom_rate(model, n, x))
            d = len(group)
            logp += -rate + d * math.log(rate)  # Poisson pmf minus log d!,
            seen: dict = {}                     # which cancels against the
            for j in group:                     # d! arrangement factor
                key = tuple(counts[:, j])
                seen[key] = seen.get(key, 0) + 1
            for m in seen.values():
                logp -= special.gammaln(m + 1)
        budget = float(total_new_atom_rate(model, n))
        x = 1
        while budget > _TAIL_TOL:  # Poisson zero terms of unborn sizes
            rate = float(target_new_atom_rate(model, n, x))
            budget -= rate
            if x not in born_sizes:
                logp += -rate
            x += 1
    return logp


# ---------------------------------------------------------------------------
# urn schemes
# ---------------------------------------------------------------------------

FRESH = "fresh"


def dp_urn_probs(counts, alpha):
    """(existing-label probabilities, fresh probability) of the DP urn."""
    counts = np.asarray(counts, dtype=float)
    denom = counts.sum() + alpha
    return counts / denom, alpha / denom


def fsd_urn_probs(counts, alpha, K):
    """Finite-symmetric-Dirichlet urn; the fresh mass carries (K - J) slots."""
    counts = np.asarray(counts, dtype=float)
    j = counts.size
    if j > K:
        raise ValueError(f"FSD urn cannot hold more than K={K} distinct labels, got {j}")
    denom = counts.sum() + alpha
    return (counts + alpha / K) / denom, (K - j) * (alpha / K) / denom


def _urn_step(history, probs_fn, rng):
    labels, counts = [], []
    for lab in history:
        if lab in labels:
            counts[labels.index(lab)] += 1
        else:
            labels.append(lab)
            counts.append(1)
    existing, _fresh = probs_fn(np.asarray(counts, dtype=float))
    u = rng.random()
    cum = 0.0
    for lab, p in zip(labels, existing):
        cum += p
        if u <= cum:
            return lab
    return FRESH


def dp_urn_step(history, alpha, rng):
    """One Blackwell-MacQueen draw; returns an existing label or FRESH."""
    return _urn_step(history, lambda c: dp_urn_probs(c, alpha), rng)


def fsd_urn_step(history, alpha, K, rng):
    """One FSD urn draw; the fresh probability vanishes once K labels exist."""
    return _urn_step(history, lambda c: fsd_urn_probs(c, alpha, K), rng)


# ---------------------------------------------------------------------------
# the four-inequality condition checker
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Condition1Bounds:
    """Right-hand sides of the four growth/approximation inequalities.

    rhs1(n)     bounds sum_x M_{n,x}
    rhs2(n, K)  bounds sum_{x>=1} h~(x | all-zero)
    rhs3(n, K)  bounds sum_x |h - h~| over any instantiated history
    rhs4(n, K)  bounds sum_{x>=1} |M_{n,x} - K h~(x | all-zero)|, evaluated
                only where K >= k_floor(n)
    """

    name: str
    rhs1: callable
    rhs2: callable
    rhs3: callable
    rhs4: callable
    k_floor: callable = field(default=lambda n: np.zeros_like(np.asarray(n, dtype=float)))


def generic_condition_bounds(C1, C2=0.0, C3=0.0, C4=0.0, C5=0.0) -> Condition1Bounds:
    """The literal five-constant parametrization of the condition."""
    return Condition1Bounds(
        name=f"generic(C1={C1},C2={C2},C3={C3},C4={C4},C5={C5})",
        rhs1=lambda n: C1 / (n - 1 + C1),
        rhs2=lambda n, K: C1 / (K * (n - 1 + C1)),
        rhs3=lambda n, K: C1 / (K * (n - 1 + C1)),
        rhs4=lambda n, K: (C4 * np.log(n) + C5) / (K * (n - 1 + C1)),
        k_floor=lambda n: C2 * (np.log(n) + C3),
    )


def condition_preset(model: ExpFamilyModel) -> Condition1Bounds:
    """The per-family verified bounds, shipped as named presets."""
    g = model.gamma
    if model.kind is ModelKind.BETA_BERNOULLI:
        al = model.alpha
        return Condition1Bounds(
            name="beta_bernoulli",
            rhs1=lambda n: g * al / (n - 1 + al),
            rhs2=lambda n, K: g * al / (K * (n - 1 + al)),
            rhs3=lambda n, K: 2 * g * al / (K * (n - 1 + al)),
            rhs4=lambda n, K: g * g * al / (K * (n - 1 + al)),
        )
    if model.kind is ModelKind.GAMMA_POISSON:
        lam = model.lam
        return Condition1Bounds(
            name="gamma_poisson",
            rhs1=lambda n: g * lam / (n - 1 + lam),
            rhs2=lambda n, K: g * lam / (K * (n - 1 + lam)),
            rhs3=lambda n, K: 2 * g * lam / (K * (n - 1 + lam)),
            rhs4=lambda n, K: (g * g * lam + math.e * g * g * lam * lam) / (K * (n - 1 + lam)),
            k_floor=lambda n: g * lam * np.ones_like(np.asarray(n, dtype=float)),
        )
    al, r = model.alpha, model.r
    return Condition1Bounds(
        name="beta_neg_binomial",
        rhs1=lambda n: g * al / (n - 1 + (al - 0.5) / r),
        rhs2=lambda n, K: 4 * g * al / (K * (n - 1 + (al - 0.5) / r)),
        rhs3=lambda n, K: 2 * g * al / (K * (n - 1 + al / r)),
        rhs4=lambda n, K: (g * al / K)
        * ((4 * g * al + 3) * np.log(r * n + al + 1) + (10 + 2 * r) * g * al + 24)
        / (n - 1 + (al - 0.5) / r),
        k_floor=lambda n: g * al * (3 * np.log(r * (np.asarray(n, dtype=float) - 1) + al) + 8),
    )


_HISTORY_SCAN = (1, 2, 3, 4, 5, 6, 8, 10, 13, 16, 20, 32, 50)
_SIGN_EPS = 1e-280
_GUARD = 16


def _certified_abs_sum(terms_a, terms_b, tail_a, tail_b):
    """sum |a - b| over all x, where the columns cover x = 0..X and the exact
    tails past X are supplied.  Requires the last _GUARD term differences to
    be single-signed (the likelihood-ratio order guarantees a single crossing,
    so past it |sum of tail differences| = |tail_a - tail_b| exactly).
    Returns None when the guard fails and a larger X is needed."""
    diff = terms_a - terms_b
    guard = diff[:, -_GUARD:]
    ok = (guard.min(axis=1) >= -_SIGN_EPS) | (guard.max(axis=1) <= _SIGN_EPS)
    if not np.all(ok):
        return None
    return np.abs(diff).sum(axis=1) + np.abs(tail_a - tail_b)


def _l1_history(model, K, n_arr, S):
    """Certified sum_x |h - h~| at history total S, vectorized over n."""
    shift = model.mass_shift / K
    if model.kind is ModelKind.BETA_BERNOULLI:
        al = model.alpha
        h1 = S / (al - 1.0 + n_arr)
        g1 = (S + shift) / (al - 1.0 + n_arr + shift)
        return 2.0 * np.abs(h1 - g1)
    x_max = 64
    while True:
        x = np.arange(x_max + 1, dtype=float)
        a = np.exp(_predictive_logpmf(model, n_arr[:, None], float(S), 0.0, x[None, :]))
        b = np.exp(_predictive_logpmf(model, n_arr[:, None], float(S), shift, x[None, :]))
        out = _certified_abs_sum(a, b, np.clip(1 - a.sum(axis=1), 0, None),
                                 np.clip(1 - b.sum(axis=1), 0, None))
        if out is not None:
            return out
        x_max *= 2
        if x_max > 1 << 16:
            raise RuntimeError("history L1 sum: no certified truncation point found")


def _l4_mismatch(model, K, n_arr):
    """Certified sum_{x>=1} |M_{n,x} - K h~(x|0)|, vectorized over n."""
    shift = model.mass_shift / K
    if model.kind is ModelKind.BETA_BERNOULLI:
        al = model.alpha
        m1 = model.gamma * al / (al - 1.0 + n_arr)
        kh = K * shift / (al - 1.0 + n_arr + shift)
        return np.abs(m1 - kh)
    totals = np.asarray(total_new_atom_rate(model, n_arr), dtype=float)
    fresh = np.asarray(approx_fresh_mass(model, K, n_arr), dtype=float)
    x_max = 64
    while True:
        x = np.arange(1, x_max + 1, dtype=float)
        m = target_new_atom_rate(model, n_arr[:, None], x[None, :])
        h = K * np.exp(_predictive_logpmf(model, n_arr[:, None], 0.0, shift, x[None, :]))
        out = _certified_abs_sum(m, h, np.clip(totals - m.sum(axis=1), 0, None),
                                 np.clip(K * fresh - h.sum(axis=1), 0, None))
        if out is not None:
            return out
        x_max *= 2
        if x_max > 1 << 16:
            raise RuntimeError("new-atom mismatch sum: no certified truncation point found")


def check_condition_1(model: ExpFamilyModel, bounds: Condition1Bounds, n_max, K_set,
                      history_scan=_HISTORY_SCAN) -> dict:
    """Evaluate the four inequalities numerically for all n <= n_max, K in K_set.

    Left-hand sides are exact up to certified remainders below 1e-12 (folded
    in conservatively).  Inequality 3 is maximized over instantiated histories
    with count totals in ``history_scan``; inequality 4 is evaluated only at
    (n, K) with K >= k_floor(n), as its statement requires.  Violations
    produce failure entries in the report, never exceptions.
    """
    n_arr = np.arange(1, int(n_max) + 1, dtype=float)
    grace = 1e-12
    report = {"model": model.kind.value, "bounds": bounds.name, "n_max": int(n_max),
              "K_set": sorted(int(k) for k in K_set),
              "history_scan": list(history_scan), "inequalities": []}

    def record(idx, slack_arr, n_of, K=None, extra=None):
        worst = int(np.argmin(slack_arr))
        entry = {"inequality": idx,
                 "n_worst": int(n_of[worst]),
                 "K": None if K is None else int(K),
                 "slack": float(slack_arr[worst]),
                 "pass": bool(slack_arr[worst] >= -grace)}
        if extra:
            entry.update(extra)
        report["inequalities"].append(entry)

    lhs1 = np.asarray(total_new_atom_rate(model, n_arr), dtype=float)
    record(1, bounds.rhs1(n_arr) - lhs1, n_arr)

    for K in sorted(K_set):
        lhs2 = np.asarray(approx_fresh_mass(model, K, n_arr), dtype=float)
        record(2, bounds.rhs2(n_arr, K) - lhs2, n_arr, K)

        n3 = n_arr[1:]  # instantiated histories need n >= 2
        slack3 = np.full(n3.size, np.inf)
        worst_s = np.zeros(n3.size, dtype=int)
        for S in history_scan:
            mask = ((n3 - 1) >= S) if model.kind is ModelKind.BETA_BERNOULLI \
                else np.ones(n3.size, dtype=bool)
            if not mask.any():
                continue
            idx = np.where(mask)[0]
            cand = bounds.rhs3(n3[idx], K) - _l1_history(model, K, n3[idx], S)
            tighter = cand < slack3[idx]
            slack3[idx[tighter]] = cand[tighter]
            worst_s[idx[tighter]] = S
        record(3, slack3, n3, K,
               {"history_total_worst": int(worst_s[int(np.argmin(slack3))])})

        floor = np.asarray(bounds.k_floor(n_arr), dtype=float)
        dom = K >= floor
        if dom.any():
            lhs4 = _l4_mismatch(model, K, n_arr[dom])
            record(4, bounds.rhs4(n_arr[dom], K) - lhs4, n_arr[dom], K,
                   {"n_evaluated": int(dom.sum())})
        else:
            report["inequalities"].append({"inequality": 4, "n_worst": None, "K": int(K),
                                           "slack": None, "pass": True, "n_evaluated": 0})

    report["pass"] = all(e["pass"] for e in report["inequalities"])
    return report
