"""Velocity-noise filtering by the alignment term, computed three ways.

With all velocity commands at zero, each robot's true velocity obeys::

    dv_i/dt = -k_v (v_i + n_i)                              (plain tracking)
    dv_i/dt = -k_v (v_i + n_i) - k_v k5 sum_j (v_i - v_j)   (with alignment)

where n_i is white with per-axis spectral density sigma_v. The stationary
per-axis variance of v_i is obtained in closed form, by integrating the
squared magnitude of the noise-to-velocity transfer functions, and by Monte
Carlo simulation of the discretised loop.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import ContractError, MonteCarloInstability


class Method(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    SPECTRAL_INTEGRAL = "spectral_integral"
    MONTE_CARLO = "monte_carlo"


class UnreliableIntegralWarning(RuntimeWarning):
    """Quadrature error estimate exceeded the requested tolerance."""


@dataclass(frozen=True)
class NoiseVarianceResult:
    """Per-axis stationary velocity variances.

    ``sigma_prime`` is for plain tracking and ``sigma_double_prime`` for the
    alignment loop. A Monte Carlo run of a single loop leaves the other
    field as NaN.
    """

    sigma_prime: float
    sigma_double_prime: float
    ratio: float
    method: Method


def complete_laplacian(n: int) -> np.ndarray:
    """Laplacian of the complete graph on ``n`` nodes."""
    if n < 1:
        raise ContractError("need at least one robot")
    return n * np.eye(n) - np.ones((n, n))


def laplacian_from_adjacency(adjacency) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=float)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise ContractError("adjacency must be square")
    if not np.allclose(adj, adj.T):
        raise ContractError("adjacency must be symmetric")
    adj = adj - np.diag(np.diag(adj))
    return np.diag(adj.sum(axis=1)) - adj


@dataclass(frozen=True)
class AlignmentLoopModel:
    """Linear state-space model of N robots' velocities under alignment.

    State and output are the stacked velocities (2N), input the stacked
    velocity measurement errors.
    """

    N: int
    k_v: float
    k5: float
    laplacian: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.N < 1 or self.k_v <= 0 or self.k5 <= 0:
            raise ContractError("need N >= 1, k_v > 0, k5 > 0")
        if self.laplacian is None:
            object.__setattr__(self, "laplacian", complete_laplacian(self.N))
        elif np.shape(self.laplacian) != (self.N, self.N):
            raise ContractError("laplacian must be N x N")

    @property
    def A(self):
        n2 = 2 * self.N
        return -self.k_v * self.k5 * (np.kron(self.laplacian, np.eye(2)) + np.eye(n2) / self.k5)

    @property
    def B(self):
        return self.k_v * np.eye(2 * self.N)

    @property
    def C(self):
        return np.eye(2 * self.N)

    def G(self, s):
        """Single-robot transfer function from measurement error to velocity."""
        return self.k_v / (s + self.k_v)

    def H1(self, s):
        """Own-noise transfer function under alignment (complete graph)."""
        kv, k5, N = self.k_v, self.k5, self.N
        return kv * (s + kv + kv * k5) / ((s + kv) * (s + kv + N * kv * k5))

    def H2(self, s):
        """Transfer function from one neighbour's noise (complete graph)."""
        kv, k5, N = self.k_v, self.k5, self.N
        return kv * kv * k5 / ((s + kv) * (s + kv + N * kv * k5))

    def transfer_matrix(self, s):
        """(sI - A)^-1 B evaluated numerically at complex frequency ``s``."""
        n2 = 2 * self.N
        return np.linalg.solve(s * np.eye(n2) - self.A, self.B)


def _check_params(N, k_v, k5, sigma_v):
    if N < 1 or k_v <= 0 or k5 <= 0 or sigma_v < 0:
        raise ContractError("need N >= 1, k_v > 0, k5 > 0, sigma_v >= 0")


def closed_form_variances(N: int, k_v: float, k5: float, sigma_v: float) -> NoiseVarianceResult:
    _check_params(N, k_v, k5, sigma_v)
    ratio = (k5 + 1.0) / (k5 * N + 1.0)
    sp = 0.5 * k_v * sigma_v
    return NoiseVarianceResult(sp, sp * ratio, ratio, Method.CLOSED_FORM)


def _half_line_integral(f, omega_max, tail_coeff, breaks, limit, tol):
    # int_0^inf f, with f ~ tail_coeff / w^2 beyond omega_max
    val, err = integrate.quad(f, 0.0, omega_max, points=breaks, limit=limit, epsabs=0.0, epsrel=1e-13)
    tail = tail_coeff / omega_max
    return val + tail, err


def _integrate_spectrum(terms, sigma_v, omega_max, n_points, tol):
    total = 0.0
    err_total = 0.0
    for weight, f, tail, breaks in terms:
        val, err = _half_line_integral(f, omega_max, tail, breaks, n_points, tol)
        total += weight * val
        err_total += weight * err
    # even integrand: (1/2pi) * 2 * int_0^inf
    value = sigma_v * total / np.pi
    err_est = sigma_v * err_total / np.pi
    if err_est > tol * max(abs(value), 1e-300):
        warnings.warn(
            f"spectral integral error estimate {err_est:.3g} exceeds tolerance",
            UnreliableIntegralWarning,
            stacklevel=3,
        )
    return value


def spectral_variance_single(k_v: float, sigma_v: float, omega_max: Optional[float] = None,
                             n_points: int = 200, tol: float = 1e-8) -> float:
    """Variance of the plain tracking loop from its squared gain |G(jw)|^2.

    ``n_points`` caps the number of adaptive subintervals.
    """
    if k_v <= 0 or sigma_v < 0:
        raise ContractError("need k_v > 0 and sigma_v >= 0")
    if sigma_v == 0:
        return 0.0
    if omega_max is None:
        omega_max = 1e3 * k_v
    kv2 = k_v * k_v
    terms = [(1.0, lambda w: kv2 / (w * w + kv2), kv2, [k_v])]
    return _integrate_spectrum(terms, sigma_v, omega_max, n_points, tol)


def spectral_variance_aligned(N: int, k_v: float, k5: float, sigma_v: float,
                              omega_max: Optional[float] = None, n_points: int = 200,
                              tol: float = 1e-8) -> float:
    """Variance of the alignment loop from |H1|^2 plus (N-1)|H2|^2."""
    _check_params(N, k_v, k5, sigma_v)
    if sigma_v == 0:
        return 0.0
    model = AlignmentLoopModel(N, k_v, k5)
    fast = k_v * (1.0 + N * k5)
    if omega_max is None:
        omega_max = 1e3 * fast
    breaks = [k_v, fast]

    def h1_sq(w):
        return abs(model.H1(1j * w)) ** 2

    def h2_sq(w):
        return abs(model.H2(1j * w)) ** 2

    terms = [(1.0, h1_sq, k_v * k_v, breaks)]
    if N > 1:
        # |H2|^2 decays like 1/w^4; its 1/w^2 tail coefficient is zero
        terms.append((N - 1.0, h2_sq, 0.0, breaks))
    return _integrate_spectrum(terms, sigma_v, omega_max, n_points, tol)


class LoopVariant(str, enum.Enum):
    PLAIN = "plain"
    ALIGNED = "aligned"


def monte_carlo_variance(
    N: int,
    k_v: float,
    k5: float,
    sigma_v: float,
    variant=None,
    dt: float = 1e-3,
    duration: float = 20.0,
    trials: int = 100,
    seed: int = 0,
    burn_in: float = 5.0,
    laplacian=None,
    chunk: int = 500,
) -> NoiseVarianceResult:
    """Estimate stationary velocity variances by simulating the discrete loop.

    Euler steps ``v += dt * (-k_v (v + n) - k_v k5 L v)`` with per-tick noise of
    variance ``sigma_v / dt`` (the sampled version of white noise with spectral
    density ``sigma_v``). The first ``burn_in`` seconds are discarded; the
    variance is pooled over robots, axes and trials.

    ``variant`` is ``"plain"``, ``"aligned"`` or ``None`` for both, in which
    case both loops see the identical noise sequence.

    Raises:
        ContractError: ``dt * k_v > 1e-3``.
        MonteCarloInstability: the variance keeps growing across windows.
    """
    _check_params(N, k_v, k5, sigma_v)
    if trials < 1 or duration <= burn_in or burn_in < 0:
        raise ContractError("need trials >= 1 and duration > burn_in >= 0")
    if dt <= 0 or dt * k_v > 1e-3 * (1 + 1e-12):
        raise ContractError(f"step-size bound dt*k_v <= 1e-3 violated (dt={dt}, k_v={k_v})")
    run_plain = variant in (None, LoopVariant.PLAIN, "plain")
    run_aligned = variant in (None, LoopVariant.ALIGNED, "aligned")
    if not (run_plain or run_aligned):
        raise ContractError(f"unknown loop variant {variant!r}")

    L = complete_laplacian(N) if laplacian is None else np.asarray(laplacian, dtype=float)
    n_steps = int(round(duration / dt))
    n_burn = int(round(burn_in / dt))
    rng = np.random.default_rng(seed)
    noise_std = np.sqrt(sigma_v / dt)

    n_windows = 4
    win_edges = np.linspace(n_burn, n_steps, n_windows + 1).astype(int)
    loops = {}
    if run_plain:
        loops["plain"] = (np.zeros((trials, N, 2)), None)
    if run_aligned:
        loops["aligned"] = (np.zeros((trials, N, 2)), L)
    sums = {k: np.zeros(n_windows) for k in loops}
    sq = {k: np.zeros(n_windows) for k in loops}

    step = 0
    while step < n_steps:
        m = min(chunk, n_steps - step)
        noise = noise_std * rng.standard_normal((m, trials, N, 2))
        for j in range(m):
            k = step + j
            w = np.searchsorted(win_edges, k, side="right") - 1 if k >= n_burn else -1
            for name, (v, lap) in loops.items():
                dv = -k_v * (v + noise[j])
                if lap is not None:
                    dv -= k_v * k5 * (lap @ v)
                v += dt * dv
                if w >= 0:
                    sums[name][w] += v.sum()
                    sq[name][w] += np.einsum("ijk,ijk->", v, v)
        step += m

    per_window = (win_edges[1:] - win_edges[:-1]) * trials * N * 2
    est = {}
    for name in loops:
        with np.errstate(over="ignore", invalid="ignore"):
            mean_w = sums[name] / per_window
            var_w = sq[name] / per_window - mean_w**2
        if not np.all(np.isfinite(var_w)) or (
            np.all(np.diff(var_w) > 0) and var_w[-1] > 4.0 * var_w[0] > 0
        ):
            raise MonteCarloInstability(
                f"variance grows across windows for N={N}, k_v={k_v}, k5={k5}, dt={dt}; "
                f"stability needs dt*k_v*(1 + k5*lambda_max(L)) < 2"
            )
        total_n = per_window.sum()
        mean = sums[name].sum() / total_n
        est[name] = float(sq[name].sum() / total_n - mean * mean)

    sp = est.get("plain", np.nan)
    sdp = est.get("aligned", np.nan)
    ratio = sdp / sp if run_plain and run_aligned and sp > 0 else np.nan
    return NoiseVarianceResult(sp, sdp, ratio, Method.MONTE_CARLO)
