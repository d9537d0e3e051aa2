"""Per-feature affine alignment of a source sample onto a reference sample.

Gaussian features are aligned by moment matching. Non-Gaussian features are
aligned by gradient descent on the KL divergence between Gaussian-kernel
density estimates, ``KL(f_X || f_{CY+D})``, warm-started from moment matching.

The divergence is evaluated on the reference points themselves::

    KL(C, D) = mean_i [ log f_X(x_i) - log max(f_Y(x_i; C, D), eps) ]

so only the second term depends on ``(C, D)``.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DegenerateSample, NonFiniteLoss
from .features import DistributionClass

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_CHUNK = 1 << 21  # matrix elements per block


@dataclass(frozen=True)
class AffineParams:
    C: float
    D: float

    def __post_init__(self):
        if not (math.isfinite(self.C) and math.isfinite(self.D)) or self.C == 0:
            raise ValueError(f"invalid affine parameters C={self.C}, D={self.D}")

    def inverse(self):
        return AffineParams(1.0 / self.C, -self.D / self.C)

    def as_tuple(self):
        return (self.C, self.D)


@dataclass(frozen=True)
class MomentSummary:
    mean: float
    var: float


@dataclass(frozen=True)
class KdeModel:
    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).ravel()
        if pts.size == 0 or not np.all(np.isfinite(pts)):
            raise ValueError("KDE points must be non-empty and finite")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError("bandwidth must be positive")
        object.__setattr__(self, "points", pts)

    @classmethod
    def fit(cls, samples, bandwidth=None):
        samples = np.asarray(samples, dtype=float)
        bw = bandwidth_silverman(samples) if bandwidth is None else float(bandwidth)
        return cls(samples, bw)


class Branch(enum.Enum):
    GAUSSIAN_CLOSED_FORM = "gaussian_closed_form"
    KL_DESCENT = "kl_descent"


@dataclass(frozen=True)
class FusionConfig:
    learning_rate: float = 0.05
    max_iters: int = 1000
    grad_tol: float = 1e-6
    kl_tol: float = 1e-8
    density_floor: float = 1e-12
    bandwidth: float | None = None  # None selects Silverman's rule
    line_search: bool = True
    max_halvings: int = 30
    step_growth: float = 2.0  # next trial step = growth * last accepted step
    max_step: float = 64.0  # cap on the trial step, in units of learning_rate

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.grad_tol > 0 and self.kl_tol > 0 and self.density_floor > 0):
            raise ValueError("tolerances and density floor must be positive")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("fixed bandwidth must be positive")
        if self.step_growth < 1 or self.max_step < 1:
            raise ValueError("step_growth and max_step must be >= 1")


@dataclass
class FusionReport:
    branch: Branch
    iterations: int = 0
    kl_trace: list = field(default_factory=list)
    initial_kl: float = float("nan")
    final_kl: float = float("nan")
    converged: bool = True
    bandwidth_x: float = float("nan")
    bandwidth_y: float = float("nan")

    def to_dict(self):
        return {
            "branch": self.branch.value,
            "iterations": self.iterations,
            "initial_kl": _num(self.initial_kl),
            "final_kl": _num(self.final_kl),
            "converged": self.converged,
            "bandwidth_x": _num(self.bandwidth_x),
            "bandwidth_y": _num(self.bandwidth_y),
            "kl_trace": [float(v) for v in self.kl_trace],
        }


def _num(v):
    return None if v is None or not math.isfinite(v) else float(v)


# moments and closed form

def moment_summary(samples):
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise DegenerateSample("need at least 2 samples")
    var = float(np.var(s, ddof=1))
    if not var > 0:
        raise DegenerateSample("zero variance")
    return MomentSummary(float(np.mean(s)), var)


def gaussian_closed_form(x, y):
    """Moment-matching map sending ``y`` onto ``x``: C = sd_X / sd_Y, D = mu_X - C mu_Y."""
    mx, my = moment_summary(x), moment_summary(y)
    c = math.sqrt(mx.var / my.var)
    return AffineParams(c, mx.mean - c * my.mean)


def apply_affine(y, params):
    return params.C * np.asarray(y, dtype=float) + params.D


def zscore_normalize(values):
    v = np.asarray(values, dtype=float)
    sd = float(np.std(v))
    if v.size < 2 or not sd > 0:
        raise DegenerateSample("cannot standardize a constant sample")
    return (v - v.mean()) / sd


# density estimation

def bandwidth_silverman(samples):
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 2:
        raise DegenerateSample("need at least 2 samples")
    sd = float(np.std(s, ddof=1))
    q75, q25 = np.percentile(s, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(sd, iqr) if iqr > 0 else sd
    if not spread > 0:
        raise DegenerateSample("zero spread")
    return 0.9 * spread * s.size ** (-0.2)


def _log_kde(x, centers, sigma):
    """log of the Gaussian KDE with ``centers`` evaluated at each ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty(x.size)
    step = max(1, _CHUNK // max(1, centers.size))
    for lo in range(0, x.size, step):
        u = x[lo : lo + step, None] - centers[None, :]
        e = -0.5 * (u / sigma) ** 2
        m = e.max(axis=1)
        out[lo : lo + step] = m + np.log(np.exp(e - m[:, None]).sum(axis=1))
    return out - math.log(centers.size) - _LOG_SQRT_2PI - math.log(sigma)


def kde_eval(model, x):
    """Density of ``model`` at ``x`` (scalar in, scalar out)."""
    vals = np.exp(_log_kde(x, model.points, model.bandwidth))
    return float(vals[0]) if np.ndim(x) == 0 else vals


_CUTOFF = 40.0  # exp(-40) ~ 4e-18: kernels this far below the row maximum are dropped


@njit(cache=True)
def _kernel_sums(x, yt, y, inv2s2, log_fy, ratio_c, ratio_d):
    """Per reference point: log sum_j w_ij and the two gradient ratios.

    ``yt`` must be sorted ascending, ``y`` aligned with it. Weights are
    shifted by the row maximum, so tails that underflow are skipped exactly.
    """
    m = yt.size
    for i in range(x.size):
        xi = x[i]
        k = np.searchsorted(yt, xi)
        best = np.inf
        if k < m:
            best = (yt[k] - xi) ** 2
        if k > 0:
            best = min(best, (xi - yt[k - 1]) ** 2)
        e0 = best * inv2s2
        sw = 0.0
        swu = 0.0
        swuy = 0.0
        j = k
        while j < m:
            u = xi - yt[j]
            e = u * u * inv2s2 - e0
            if e > _CUTOFF:
                break
            w = np.exp(-e)
            sw += w
            swu += w * u
            swuy += w * u * y[j]
            j += 1
        j = k - 1
        while j >= 0:
            u = xi - yt[j]
            e = u * u * inv2s2 - e0
            if e > _CUTOFF:
                break
            w = np.exp(-e)
            sw += w
            swu += w * u
            swuy += w * u * y[j]
            j -= 1
        log_fy[i] = np.log(sw) - e0
        ratio_c[i] = swuy / sw
        ratio_d[i] = swu / sw


class _Objective:
    """Loss and analytic gradient for one (reference, source) pair.

    Everything that does not depend on (C, D) is precomputed.
    """

    def __init__(self, fx, y, sigma_y, eps):
        self.x = fx.points
        y = np.asarray(y, dtype=float).ravel()
        self.y = np.sort(y)
        self.sigma = float(sigma_y)
        self.log_eps = math.log(eps)
        self.log_fx_mean = float(np.mean(_log_kde(self.x, fx.points, fx.bandwidth)))
        self.const = math.log(y.size) + _LOG_SQRT_2PI + math.log(self.sigma)

    def __call__(self, c, d, grad=True):
        y = self.y if c > 0 else self.y[::-1].copy()
        yt = c * y + d
        n = self.x.size
        log_fy = np.empty(n)
        ratio_c = np.empty(n)
        ratio_d = np.empty(n)
        s2 = self.sigma * self.sigma
        _kernel_sums(self.x, yt, y, 0.5 / s2, log_fy, ratio_c, ratio_d)
        log_fy -= self.const
        floored = log_fy < self.log_eps
        loss = self.log_fx_mean - float(np.mean(np.where(floored, self.log_eps, log_fy)))
        if not grad:
            return loss
        live = ~floored
        # d f_Y / dC = mean_j phi(u) u y_j / s^2, d f_Y / dD = mean_j phi(u) u / s^2
        dc = -float(np.sum(ratio_c[live])) / (n * s2)
        dd = -float(np.sum(ratio_d[live])) / (n * s2)
        return loss, dc, dd


def kl_divergence(fx, y, params, sigma_y, eps=1e-12):
    """Empirical KL(f_X || f_{CY+D}) over the reference points of ``fx``."""
    return _Objective(fx, y, sigma_y, eps)(params.C, params.D, grad=False)


def kl_gradient(fx, y, params, sigma_y, eps=1e-12):
    """Analytic ``(dKL/dC, dKL/dD)`` of `kl_divergence`."""
    _, dc, dd = _Objective(fx, y, sigma_y, eps)(params.C, params.D)
    return dc, dd


# fusion driver

def _bandwidth(samples, config):
    return config.bandwidth if config.bandwidth is not None else bandwidth_silverman(samples)


def fuse(x, y, dist, config=FusionConfig()):
    """Learn the map taking source ``y`` onto reference ``x``.

    Returns ``(AffineParams, FusionReport)``.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    warm = gaussian_closed_form(x, y)
    if DistributionClass(dist) is DistributionClass.GAUSSIAN:
        return warm, FusionReport(Branch.GAUSSIAN_CLOSED_FORM)

    fx = KdeModel(x, _bandwidth(x, config))
    sigma_y = _bandwidth(apply_affine(y, warm), config)
    objective = _Objective(fx, y, sigma_y, config.density_floor)

    c, d = warm.C, warm.D
    loss, gc, gd = objective(c, d)
    if not math.isfinite(loss):
        raise NonFiniteLoss("initial loss is not finite")
    report = FusionReport(
        Branch.KL_DESCENT,
        kl_trace=[loss],
        initial_kl=loss,
        converged=False,
        bandwidth_x=fx.bandwidth,
        bandwidth_y=sigma_y,
    )

    tau = config.learning_rate
    step = tau
    for _ in range(config.max_iters):
        if math.hypot(gc, gd) < config.grad_tol:
            report.converged = True
            break
        for _ in range(config.max_halvings + 1):
            nc, nd = c - step * gc, d - step * gd
            if nc != 0 and math.isfinite(nc) and math.isfinite(nd):
                new_loss, ngc, ngd = objective(nc, nd)
            else:
                new_loss = float("nan")
            if not config.line_search:
                if not math.isfinite(new_loss):
                    raise NonFiniteLoss(f"loss diverged at C={nc}, D={nd}")
                break
            if math.isfinite(new_loss) and new_loss <= loss:
                break
            step *= 0.5
        else:
            # no descent along the gradient within float resolution
            report.converged = True
            break

        change = abs(loss - new_loss)
        if config.line_search:
            step = min(step * config.step_growth, config.max_step * tau)
        c, d, loss, gc, gd = nc, nd, new_loss, ngc, ngd
        report.iterations += 1
        report.kl_trace.append(loss)
        if change <= config.kl_tol * max(abs(loss), 1e-12):
            report.converged = True
            break

    report.final_kl = loss
    return AffineParams(c, d), report
