"""Exact probabilities, objectives, gradients and Hessians for log-linear
softmax policies with a one-hot reward per prompt.

Every quantity here is closed-form: the per-prompt objective is the success
probability of the unique correct output, so gradients and Hessians are
small exact expressions in the softmax vector and the feature matrix.
All functions are pure; a FeatureSet is frozen after construction and safe
to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "FeatureSet",
    "PromptStats",
    "GrpoGradient",
    "prompt_stats",
    "policy_gradient",
    "grpo_gradient",
    "hessian_quadratic_form",
    "hessian_matrix",
    "spectral_norm",
]

DEFAULT_EPS_FLOOR = 1e-8

# Dense symmetric eigensolve below this size, shifted power iteration above.
_EIG_DIRECT_MAX_DIM = 64
_POWER_TOL = 1e-10
_POWER_MAX_ITER = 10_000


def _frozen(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FeatureSet:
    """A problem instance: per-prompt feature matrices and correct-answer indices.

    features[i] is the K x d matrix whose rows are the feature vectors of the
    K candidate outputs for prompt i; correct[i] is the index of the unique
    correct output.  x_max is the largest spectral norm among the feature
    matrices, computed once at construction.
    """

    features: tuple[np.ndarray, ...]
    correct: np.ndarray
    n: int = field(init=False)
    K: int = field(init=False)
    d: int = field(init=False)
    x_max: float = field(init=False)
    x_norms: np.ndarray = field(init=False)

    def __post_init__(self):
        feats = tuple(_frozen(X) for X in self.features)
        if not feats:
            raise ValueError("FeatureSet needs at least one prompt")
        K, d = feats[0].shape
        if K < 2:
            raise ValueError(f"need at least 2 outputs per prompt, got K={K}")
        for i, X in enumerate(feats):
            if X.ndim != 2 or X.shape != (K, d):
                raise ValueError(f"features[{i}] has shape {X.shape}, expected {(K, d)}")
            if not np.all(np.isfinite(X)):
                raise ValueError(f"features[{i}] contains non-finite entries")
        correct = np.array(self.correct, dtype=np.intp, copy=True)
        if correct.shape != (len(feats),):
            raise ValueError("correct must hold one index per prompt")
        if np.any(correct < 0) or np.any(correct >= K):
            raise ValueError(f"correct indices must lie in [0, {K})")
        correct.flags.writeable = False
        x_norms = _frozen([np.linalg.norm(X, 2) for X in feats])
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "correct", correct)
        object.__setattr__(self, "n", len(feats))
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x_norms", x_norms)
        object.__setattr__(self, "x_max", float(x_norms.max()))


@dataclass(frozen=True)
class PromptStats:
    """Derived per-prompt quantities at a parameter vector.

    probs is the softmax output distribution, success the probability of the
    correct output, variance the Bernoulli reward variance success*(1-success),
    and objective the expected reward (equal to success under a one-hot reward).
    """

    probs: np.ndarray
    success: float
    variance: float
    objective: float


class GrpoGradient(tuple):
    """(vector, clamped) pair; clamped marks that the variance floor fired."""

    __slots__ = ()

    def __new__(cls, vector, clamped):
        return super().__new__(cls, (vector, bool(clamped)))

    @property
    def vector(self) -> np.ndarray:
        return self[0]

    @property
    def clamped(self) -> bool:
        return self[1]


def _check_theta(theta: np.ndarray, d: int) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (d,):
        raise ValueError(f"theta has shape {theta.shape}, expected ({d},)")
    if not np.all(np.isfinite(theta)):
        raise ValueError("theta contains non-finite entries")
    return theta


def softmax_probs(logits: np.ndarray) -> np.ndarray:
    """Stabilized softmax: the max logit is subtracted before exponentiation."""
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    z = np.exp(logits - logits.max())
    return z / z.sum()


def prompt_stats(fs: FeatureSet, theta: np.ndarray, i: int) -> PromptStats:
    """Probability vector, success probability, reward variance and objective
    for prompt i at theta."""
    if not 0 <= i < fs.n:
        raise IndexError(f"prompt index {i} out of range [0, {fs.n})")
    theta = _check_theta(theta, fs.d)
    probs = softmax_probs(fs.features[i] @ theta)
    success = float(probs[fs.correct[i]])
    return PromptStats(
        probs=probs,
        success=success,
        variance=success * (1.0 - success),
        objective=success,
    )


def _covariance_times_reward(probs: np.ndarray, a: int) -> np.ndarray:
    """H(pi) r for the one-hot reward at index a, where H(pi) = diag(pi) - pi pi^T.

    Componentwise: success*(1-success) at a, -success*pi_j elsewhere.
    """
    success = probs[a]
    hr = -success * probs
    hr[a] = success * (1.0 - success)
    return hr


def policy_gradient(fs: FeatureSet, theta: np.ndarray, i: int) -> np.ndarray:
    """Exact gradient of the expected reward of prompt i at theta.

    Equals X_i^T (diag(pi) - pi pi^T) r_i, i.e. the success-weighted feature
    of the correct output minus the probability-weighted features of the
    wrong ones.
    """
    stats = prompt_stats(fs, theta, i)
    hr = _covariance_times_reward(stats.probs, fs.correct[i])
    return fs.features[i].T @ hr


def grpo_gradient(
    fs: FeatureSet, theta: np.ndarray, i: int, eps_floor: float = DEFAULT_EPS_FLOOR
) -> GrpoGradient:
    """Variance-normalized gradient: policy_gradient / sqrt(reward variance).

    The divisor is clamped at eps_floor (and the result flagged) when the
    reward variance degenerates; since the raw gradient norm is bounded by
    2*X_max*variance the clamped update still vanishes as variance -> 0.
    """
    if eps_floor <= 0:
        raise ValueError("eps_floor must be positive")
    stats = prompt_stats(fs, theta, i)
    hr = _covariance_times_reward(stats.probs, fs.correct[i])
    grad = fs.features[i].T @ hr
    sd = np.sqrt(stats.variance)
    clamped = sd < eps_floor
    return GrpoGradient(grad / max(sd, eps_floor), clamped)


def hessian_quadratic_form(fs: FeatureSet, theta: np.ndarray, i: int, y: np.ndarray) -> float:
    """y^T Hess(J_i)(theta) y via the closed form

        (H r)^T (X y . X y) - 2 (H r)^T (X y) (pi^T X y)

    where . is the componentwise product and H r is the reward-covariance
    vector of prompt i.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (fs.d,):
        raise ValueError(f"y has shape {y.shape}, expected ({fs.d},)")
    stats = prompt_stats(fs, theta, i)
    hr = _covariance_times_reward(stats.probs, fs.correct[i])
    u = fs.features[i] @ y
    return float(hr @ (u * u) - 2.0 * (hr @ u) * (stats.probs @ u))


def hessian_matrix(fs: FeatureSet, theta: np.ndarray, i: int) -> np.ndarray:
    """Dense symmetric Hessian of J_i at theta.

    Polarizing the quadratic form gives
    X^T [diag(Hr) - (Hr) pi^T - pi (Hr)^T] X, which is symmetric by
    construction.
    """
    stats = prompt_stats(fs, theta, i)
    hr = _covariance_times_reward(stats.probs, fs.correct[i])
    X = fs.features[i]
    inner = np.diag(hr) - np.outer(hr, stats.probs) - np.outer(stats.probs, hr)
    return X.T @ inner @ X


def _power_spectral_norm(m: np.ndarray) -> float:
    """Largest |eigenvalue| of symmetric m via two shifted power iterations.

    Power iteration on m + cI targets the top of the spectrum, on cI - m the
    bottom; the shift c dominates the spectrum so both iterations converge to
    a simple dominant eigenvalue.
    """
    d = m.shape[0]
    c = float(np.linalg.norm(m, "fro")) or 1.0
    rng = np.random.default_rng(0)

    def dominant(mat):
        v = rng.standard_normal(d)
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(_POWER_MAX_ITER):
            w = mat @ v
            nw = np.linalg.norm(w)
            if nw == 0.0:
                return 0.0
            v = w / nw
            lam = float(v @ (mat @ v))
            if np.linalg.norm(mat @ v - lam * v) <= _POWER_TOL * max(1.0, abs(lam)):
                break
        return lam

    hi = dominant(m + c * np.eye(d)) - c    # ~ lambda_max(m)
    lo = c - dominant(c * np.eye(d) - m)    # ~ lambda_min(m)
    return max(abs(hi), abs(lo))


def spectral_norm(m: np.ndarray, sym_tol: float = 1e-12) -> float:
    """Largest absolute eigenvalue of a symmetric matrix.

    Uses a dense symmetric eigensolve up to 64 x 64 and shifted power
    iteration above.  Raises on asymmetric input.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max()) if m.size else 0.0)
    if float(np.abs(m - m.T).max()) > sym_tol * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    if m.shape[0] <= _EIG_DIRECT_MAX_DIM:
        return float(np.abs(np.linalg.eigvalsh(m)).max())
    return _power_spectral_norm(m)
