"""Measurement of the assumption constants and empirical quantities the
convergence analysis depends on: pairwise gradient geometry, the
cross-prompt interaction bound, scale-regularity ratios, the realized
average reward-std factor, the diagonal Fisher proxy, the curvature-variance
correlation, and per-prompt slack against the smoothness bounds.

Violations are data here, not exceptions: the auditor's job is to report
how far an instance is from the assumptions, including "not at all".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .policy import FeatureSet, hessian_matrix, policy_gradient, prompt_stats, spectral_norm
from .trainers import TrajectoryLog

__all__ = [
    "CosineReport",
    "MBoundReport",
    "ScaleReport",
    "FisherReport",
    "LemmaBoundRow",
    "AssumptionReport",
    "pairwise_grad_cosines",
    "m_bound",
    "scale_regularity",
    "c_constant",
    "phase_classify",
    "fisher_diag_proxy",
    "exact_fisher_diag",
    "curvature_variance_correlation",
    "lagged_curvature_variance",
    "lemma_bound_report",
    "assumption_report",
]

PHASE_THRESHOLDS = (0.055, 0.10)
M_VACUOUS_TOL = 1e-12


@dataclass
class CosineReport:
    """Statistics of cos(grad_i, grad_j) over prompt pairs i < j."""

    mean: float
    std: float
    frac_positive: float
    frac_abs_below_0p1: float
    n_pairs: int
    n_excluded: int
    pair_i: np.ndarray
    pair_j: np.ndarray
    cosines: np.ndarray
    empty: bool = False


def pairwise_grad_cosines(fs: FeatureSet, theta: np.ndarray) -> CosineReport:
    """Cosine similarity between the gradients of every prompt pair.

    Pairs where either gradient has zero norm are excluded from the
    statistics and counted.  When no pair survives, the report is flagged
    empty and the statistics are NaN.
    """
    if fs.n < 2:
        raise ValueError("need at least two prompts for pairwise cosines")
    grads = [policy_gradient(fs, theta, i) for i in range(fs.n)]
    norms = np.array([np.linalg.norm(g) for g in grads])
    pair_i, pair_j, cos = [], [], []
    excluded = 0
    for i in range(fs.n):
        for j in range(i + 1, fs.n):
            denom = norms[i] * norms[j]
            if denom == 0.0:
                excluded += 1
                continue
            pair_i.append(i)
            pair_j.append(j)
            cos.append(float(grads[i] @ grads[j]) / denom)
    cos = np.array(cos)
    if cos.size == 0:
        return CosineReport(
            mean=math.nan, std=math.nan, frac_positive=math.nan,
            frac_abs_below_0p1=math.nan, n_pairs=0, n_excluded=excluded,
            pair_i=np.array(pair_i, dtype=int), pair_j=np.array(pair_j, dtype=int),
            cosines=cos, empty=True,
        )
    return CosineReport(
        mean=float(cos.mean()),
        std=float(cos.std()),
        frac_positive=float((cos > 0).mean()),
        frac_abs_below_0p1=float((np.abs(cos) < 0.1).mean()),
        n_pairs=cos.size,
        n_excluded=excluded,
        pair_i=np.array(pair_i, dtype=int),
        pair_j=np.array(pair_j, dtype=int),
        cosines=cos,
    )


@dataclass
class MBoundReport:
    """Tightest feasible cross-prompt interaction constant.

    For each ordered pair (i, j) the requirement is
    m * <grad_i, grad_j> >= |X_i grad_j|^2 / |X_i|^2.  Pairs whose right-hand
    side is below tolerance are vacuous; pairs with a non-positive inner
    product and a non-vacuous right-hand side violate the assumption outright.
    status is "vacuous" (m_hat = 0), "ok" (m_hat = max ratio) or "violated"
    (m_hat undefined).
    """

    status: str
    m_hat: float
    worst_pair: Optional[tuple[int, int]]
    violations: list[tuple[int, int]] = field(default_factory=list)
    n_candidates: int = 0
    n_vacuous: int = 0


def m_bound(fs: FeatureSet, theta: np.ndarray, tol: float = M_VACUOUS_TOL) -> MBoundReport:
    if fs.n < 2:
        raise ValueError("need at least two prompts")
    grads = [policy_gradient(fs, theta, i) for i in range(fs.n)]
    best = 0.0
    worst_pair = None
    violations = []
    n_candidates = 0
    n_vacuous = 0
    for i in range(fs.n):
        for j in range(fs.n):
            if i == j:
                continue
            proj = fs.features[i] @ grads[j]
            rhs = float(proj @ proj) / fs.x_norms[i] ** 2
            if rhs <= tol:
                n_vacuous += 1
                continue
            inner = float(grads[i] @ grads[j])
            if inner <= 0.0:
                violations.append((i, j))
                continue
            n_candidates += 1
            candidate = rhs / inner
            if candidate > best:
                best = candidate
                worst_pair = (i, j)
    if violations:
        return MBoundReport(
            status="violated", m_hat=math.nan, worst_pair=worst_pair,
            violations=violations, n_candidates=n_candidates, n_vacuous=n_vacuous,
        )
    if n_candidates == 0:
        return MBoundReport(
            status="vacuous", m_hat=0.0, worst_pair=None,
            n_candidates=0, n_vacuous=n_vacuous,
        )
    return MBoundReport(
        status="ok", m_hat=best, worst_pair=worst_pair,
        n_candidates=n_candidates, n_vacuous=n_vacuous,
    )


@dataclass
class ScaleReport:
    r1_hat: float
    r2_hat: float
    zero_grad_prompts: list[int] = field(default_factory=list)
    zero_var_prompts: list[int] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return bool(self.zero_grad_prompts or self.zero_var_prompts)


def scale_regularity(fs: FeatureSet, theta: np.ndarray) -> ScaleReport:
    """Heterogeneity ratios: max/min gradient norm and max/min reward std.

    Prompts with a zero denominator are flagged and make the affected ratio
    infinite instead of raising.
    """
    grad_norms = np.array([np.linalg.norm(policy_gradient(fs, theta, i)) for i in range(fs.n)])
    sds = np.array([math.sqrt(prompt_stats(fs, theta, i).variance) for i in range(fs.n)])
    zero_grad = [int(i) for i in np.flatnonzero(grad_norms == 0.0)]
    zero_var = [int(i) for i in np.flatnonzero(sds == 0.0)]
    r1 = math.inf if zero_grad else float(grad_norms.max() / grad_norms.min())
    r2 = math.inf if zero_var else float(sds.max() / sds.min())
    return ScaleReport(r1_hat=r1, r2_hat=r2, zero_grad_prompts=zero_grad, zero_var_prompts=zero_var)


def c_constant(log: TrajectoryLog) -> tuple[np.ndarray, float]:
    """Realized per-prompt C(i, T) and the aggregate C(T).

    C(i, T) = (8 / 3T) * sum over pre-step states of sqrt(V_i); the aggregate
    averages over prompts.  Bounded by 4/3 since sqrt(p(1-p)) <= 1/2.
    """
    if not log.records:
        raise ValueError("empty trajectory log")
    T = len(log.records)
    per_prompt = (8.0 / (3.0 * T)) * log.sqrt_v_sums
    return per_prompt, float(per_prompt.mean())


def phase_classify(cos_std: float, thresholds: tuple[float, float] = PHASE_THRESHOLDS) -> str:
    """Training-regime label from the std of pairwise gradient cosines.

    Below the first threshold the geometry is near-orthogonal (phase I),
    below the second it is a low-variance transition (phase II), above it a
    high-variance regime (phase III).
    """
    if cos_std < 0:
        raise ValueError("cos_std must be nonnegative")
    t1, t2 = thresholds
    if not t1 < t2:
        raise ValueError("thresholds must be increasing")
    if cos_std < t1:
        return "I"
    if cos_std < t2:
        return "II"
    return "III"


def _scores(fs: FeatureSet, probs: np.ndarray, i: int) -> np.ndarray:
    """Score vectors grad log pi(o_j | q_i) for all K outputs, as a K x d matrix."""
    X = fs.features[i]
    return X - probs @ X


def fisher_diag_proxy(fs: FeatureSet, theta: np.ndarray, B: int, rng: np.random.Generator) -> np.ndarray:
    """One draw of the diagonal Fisher estimator B * mean-score (.) mean-score.

    Samples B prompts uniformly with replacement, one output per prompt from
    the current policy, and squares the averaged score vector componentwise.
    Entrywise nonnegative by construction.
    """
    if B < 1:
        raise ValueError("B must be >= 1")
    total = np.zeros(fs.d)
    for i in rng.integers(0, fs.n, size=B):
        stats = prompt_stats(fs, theta, int(i))
        j = int(rng.choice(fs.K, p=stats.probs))
        total += _scores(fs, stats.probs, int(i))[j]
    mean_score = total / B
    return B * mean_score * mean_score


def exact_fisher_diag(fs: FeatureSet, theta: np.ndarray) -> np.ndarray:
    """Enumeration-exact expectation of the diagonal Fisher proxy.

    Averages sum_j pi_j * score_j^2 over prompts; this is what the sampled
    proxy estimates without bias.
    """
    acc = np.zeros(fs.d)
    for i in range(fs.n):
        stats = prompt_stats(fs, theta, i)
        s = _scores(fs, stats.probs, i)
        acc += stats.probs @ (s * s)
    return acc / fs.n


@dataclass
class FisherReport:
    h: np.ndarray
    batch_size: int
    pearson_r: float
    p_value: float
    curvature: np.ndarray
    variances: np.ndarray
    constant_variance: bool = False


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / denom


def curvature_variance_correlation(
    fs: FeatureSet,
    theta: np.ndarray,
    B: int,
    rng: np.random.Generator,
    n_permutations: int = 10_000,
) -> FisherReport:
    """Pearson correlation between per-prompt curvature and reward variance.

    The curvature summary is the exact Hessian spectral norm (available at
    desk scale, unlike in large-model training where the Fisher proxy stands
    in for it); a single Fisher-proxy draw is attached to the report for
    reference.  Significance comes from a one-sided permutation test over
    label shuffles.  A constant variance vector makes the correlation
    undefined and is flagged.
    """
    if fs.n < 3:
        raise ValueError("need at least three prompts with non-identical variances")
    curvature = np.array([spectral_norm(hessian_matrix(fs, theta, i)) for i in range(fs.n)])
    variances = np.array([prompt_stats(fs, theta, i).variance for i in range(fs.n)])
    h = fisher_diag_proxy(fs, theta, B, rng)
    if np.ptp(variances) == 0.0 or np.ptp(curvature) == 0.0:
        return FisherReport(
            h=h, batch_size=B, pearson_r=math.nan, p_value=math.nan,
            curvature=curvature, variances=variances, constant_variance=True,
        )
    r_obs = _pearson(curvature, variances)
    hits = 0
    for _ in range(n_permutations):
        r_perm = _pearson(curvature, rng.permutation(variances))
        if r_perm >= r_obs:
            hits += 1
    p = (1 + hits) / (n_permutations + 1)
    return FisherReport(
        h=h, batch_size=B, pearson_r=r_obs, p_value=p,
        curvature=curvature, variances=variances,
    )


def lagged_curvature_variance(
    fs: FeatureSet,
    thetas,
    lag: int = 1,
    rng: Optional[np.random.Generator] = None,
    n_permutations: int = 10_000,
) -> tuple[float, float, int]:
    """Correlation between curvature at one checkpoint and reward variance
    `lag` checkpoints later, pooled over prompts.

    The same-iteration correlation uses lag 0.  Returns (pearson_r, p_value,
    n_pairs).  Note that with exact quantities and nearby checkpoints the
    lagged pairs stay correlated; decorrelation needs checkpoints far enough
    apart for the policy to have moved.
    """
    thetas = list(thetas)
    if lag < 0 or len(thetas) <= lag:
        raise ValueError("need more checkpoints than the lag")
    rng = rng or np.random.default_rng(0)
    curv, var = [], []
    for k in range(len(thetas) - lag):
        for i in range(fs.n):
            curv.append(spectral_norm(hessian_matrix(fs, thetas[k], i)))
            var.append(prompt_stats(fs, thetas[k + lag], i).variance)
    curv = np.array(curv)
    var = np.array(var)
    if np.ptp(curv) == 0.0 or np.ptp(var) == 0.0:
        return math.nan, math.nan, curv.size
    r_obs = _pearson(curv, var)
    hits = sum(_pearson(curv, rng.permutation(var)) >= r_obs for _ in range(n_permutations))
    return r_obs, (1 + hits) / (n_permutations + 1), curv.size


@dataclass
class LemmaBoundRow:
    prompt: int
    grad_norm: float
    hess_norm: float
    bound_hess_4v: float
    bound_hess_sharp: float
    bound_grad_local: float
    bound_grad_global: float
    ball_hess_max: float
    bound_ball: float

    @property
    def min_slack(self) -> float:
        return min(
            self.bound_hess_4v - self.hess_norm,
            self.bound_hess_sharp - self.hess_norm,
            self.bound_grad_local - self.grad_norm,
            self.bound_grad_global - self.grad_norm,
            self.bound_ball - self.ball_hess_max,
        )


def lemma_bound_report(
    fs: FeatureSet,
    theta: np.ndarray,
    rng: Optional[np.random.Generator] = None,
    ball_samples: int = 16,
) -> list[LemmaBoundRow]:
    """Measured gradient/Hessian norms against the smoothness bounds.

    Per prompt: |Hess| against 4 x_max^2 V and the sharper
    (2 sqrt(2) + 1) x_max^2 V, |grad| against 2 |X_i| V and x_max / 2, and the
    max |Hess| over parameters sampled uniformly in the ball of radius
    sqrt(V)/x_max against (5/2) x_max^2 sqrt(V).
    """
    rng = rng or np.random.default_rng(0)
    xsq = fs.x_max**2
    rows = []
    for i in range(fs.n):
        stats = prompt_stats(fs, theta, i)
        v = stats.variance
        grad_norm = float(np.linalg.norm(policy_gradient(fs, theta, i)))
        hess_norm = spectral_norm(hessian_matrix(fs, theta, i))
        radius = math.sqrt(v) / fs.x_max
        ball_max = hess_norm
        for _ in range(ball_samples):
            u = rng.standard_normal(fs.d)
            u *= radius * rng.uniform() ** (1.0 / fs.d) / np.linalg.norm(u)
            ball_max = max(ball_max, spectral_norm(hessian_matrix(fs, theta + u, i)))
        rows.append(
            LemmaBoundRow(
                prompt=i,
                grad_norm=grad_norm,
                hess_norm=hess_norm,
                bound_hess_4v=4.0 * xsq * v,
                bound_hess_sharp=(2.0 * math.sqrt(2.0) + 1.0) * xsq * v,
                bound_grad_local=2.0 * float(fs.x_norms[i]) * v,
                bound_grad_global=0.5 * fs.x_max,
                ball_hess_max=ball_max,
                bound_ball=2.5 * xsq * math.sqrt(v),
            )
        )
    return rows


@dataclass
class AssumptionReport:
    """Everything the relaxed analysis asks of an instance, measured."""

    cos_mean: float
    cos_std: float
    frac_abs_below_0p1: float
    frac_positive: float
    m_status: str
    m_hat: float
    r1_hat: float
    r2_hat: float
    phase: str
    c_of_t: Optional[float] = None
    n_pairs: int = 0
    n_excluded: int = 0
    m_violations: list[tuple[int, int]] = field(default_factory=list)
    m_worst_pair: Optional[tuple[int, int]] = None
    scale_degenerate: bool = False


def assumption_report(
    fs: FeatureSet,
    theta: np.ndarray,
    log: Optional[TrajectoryLog] = None,
    phase_thresholds: tuple[float, float] = PHASE_THRESHOLDS,
) -> AssumptionReport:
    """Assemble the full assumption audit at a parameter vector.

    The realized C(T) needs a finished trajectory and stays None without one.
    """
    cosines = pairwise_grad_cosines(fs, theta)
    mb = m_bound(fs, theta)
    scales = scale_regularity(fs, theta)
    c_of_t = None
    if log is not None:
        _, c_of_t = c_constant(log)
    phase = phase_classify(cosines.std, phase_thresholds) if not cosines.empty else "I"
    return AssumptionReport(
        cos_mean=cosines.mean,
        cos_std=cosines.std,
        frac_abs_below_0p1=cosines.frac_abs_below_0p1,
        frac_positive=cosines.frac_positive,
        m_status=mb.status,
        m_hat=mb.m_hat,
        r1_hat=scales.r1_hat,
        r2_hat=scales.r2_hat,
        phase=phase,
        c_of_t=c_of_t,
        n_pairs=cosines.n_pairs,
        n_excluded=cosines.n_excluded,
        m_violations=mb.violations,
        m_worst_pair=mb.worst_pair,
        scale_degenerate=scales.degenerate,
    )
