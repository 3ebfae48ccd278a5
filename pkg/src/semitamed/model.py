"""Problem definition ``A(t) dX = (B(t) X + f(t, X)) dt + g(t, X) dW`` and
numerical probes of its structural hypotheses.

Callbacks ``f`` and ``g`` receive the time and a state array of shape
``(..., d)`` and must return ``(..., d)`` and ``(..., d, m)`` respectively,
broadcasting over the leading axes. Problems whose callbacks only accept a
single state can set ``vectorized=False``. Callbacks must be pure functions.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import linalg
from .linalg import SingularSystem
from .wiener import standard_normals, uniforms

__all__ = [
    "SdaeProblem",
    "ProjectorBundle",
    "ValidationReport",
    "UnknownModel",
    "projector_bundle_at",
    "p_prime_at",
    "validate_index1",
    "probe_one_sided_lipschitz",
    "probe_monotone_condition",
    "one_sided_ratio",
    "monotone_ratio",
    "sample_states",
    "builtin_paper_example",
    "broken_noise_example",
    "REGISTRY",
    "get_problem",
]

MatrixFn = Callable[[float], np.ndarray]

# radii cycled by the probe sampler, to reach the superlinear regime of f
SAMPLER_RADII = (1.0, 10.0, 100.0)
INDEX1_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class SdaeProblem:
    name: str
    d: int
    m: int
    T: float
    A: MatrixFn
    B: MatrixFn
    f: Callable
    g: Callable
    X0: np.ndarray
    A_prime: Optional[MatrixFn] = None
    P_prime: Optional[MatrixFn] = None
    rank_tol: float = linalg.DEFAULT_RANK_TOL
    constant_coefficients: bool = False
    vectorized: bool = True

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("d and m must be at least 1")
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError("T must be positive and finite")
        X0 = linalg.as_vector(self.X0, "X0")
        if X0.shape != (self.d,):
            raise ValueError(f"X0 must have shape ({self.d},), got {X0.shape}")
        X0 = X0.copy()
        X0.setflags(write=False)
        object.__setattr__(self, "X0", X0)

    def A_at(self, t) -> np.ndarray:
        return self._square(self.A(t), "A")

    def B_at(self, t) -> np.ndarray:
        return self._square(self.B(t), "B")

    def _square(self, M, what):
        M = np.asarray(M, dtype=np.float64)
        if M.shape != (self.d, self.d):
            raise ValueError(f"{what}(t) must have shape ({self.d}, {self.d}), got {M.shape}")
        return M

    def drift(self, t, X) -> np.ndarray:
        """``f(t, X)`` for a batch ``X`` of shape ``(n, d)``."""
        if self.vectorized:
            out = self.f(t, X)
        else:
            out = np.array([self.f(t, x) for x in X])
        return np.ascontiguousarray(np.broadcast_to(out, X.shape), dtype=np.float64)

    def diffusion(self, t, X) -> np.ndarray:
        """``g(t, X)`` for a batch ``X`` of shape ``(n, d)``; shape ``(n, d, m)``."""
        if self.vectorized:
            out = self.g(t, X)
        else:
            out = np.array([self.g(t, x) for x in X])
        shape = (X.shape[0], self.d, self.m)
        return np.ascontiguousarray(np.broadcast_to(out, shape), dtype=np.float64)


@dataclass(frozen=True)
class ProjectorBundle:
    t: float
    A_pinv: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray


@functools.lru_cache(maxsize=4096)
def _bundle(p: SdaeProblem, t: float) -> ProjectorBundle:
    A = p.A_at(t)
    A_pinv = linalg.pseudo_inverse(A, p.rank_tol)
    proj = linalg.projectors(A, A_pinv)
    for M in (A_pinv, *proj):
        M.setflags(write=False)
    return ProjectorBundle(t=t, A_pinv=A_pinv, P=proj.P, Q=proj.Q, R=proj.R)


def projector_bundle_at(p: SdaeProblem, t: float) -> ProjectorBundle:
    """Pseudo-inverse of ``A(t)`` and the projectors built from it (cached)."""
    if not 0.0 <= t <= p.T:
        raise ValueError(f"t = {t} outside [0, {p.T}]")
    if p.constant_coefficients:
        t = 0.0
    return _bundle(p, float(t))


def p_prime_at(p: SdaeProblem, t: float) -> np.ndarray:
    """Time derivative of ``P(t) = A^+(t) A(t)``.

    Uses ``p.P_prime`` when given, zero for constant coefficients, and
    otherwise a central difference with step ``1e-6 * max(1, T)`` (one-sided
    within ``1e-6 * max(1, T)`` of the ends of ``[0, T]``).
    """
    if p.P_prime is not None:
        return p._square(p.P_prime(t), "P_prime")
    if p.constant_coefficients:
        return np.zeros((p.d, p.d))
    step = 1e-6 * max(1.0, p.T)
    lo, hi = max(0.0, t - step), min(p.T, t + step)
    return (_bundle(p, hi).P - _bundle(p, lo).P) / (hi - lo)


def sample_states(seed: int, stream: int, count: int, d: int) -> np.ndarray:
    """Standard normal states scaled by radii cycling through 1, 10, 100."""
    z = standard_normals(seed, stream, count * d).reshape(count, d)
    radii = np.resize(np.array(SAMPLER_RADII), count)
    return z * radii[:, None]


def _sample_times(p, seed, stream, count):
    return uniforms(seed, stream, count) * p.T


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of the sampled index-1 checks.

    The probes falsify, never certify: a pass means no violation was found
    at ``samples_used`` points.
    """

    index1_noise_ok: bool
    constraint_solvable_ok: bool
    probed_one_sided_constant: float
    probed_monotone_constant: float
    samples_used: int
    worst_violation: float
    worst_location: tuple

    @property
    def ok(self) -> bool:
        return self.index1_noise_ok and self.constraint_solvable_ok

    def lines(self):
        t, x = self.worst_location
        verdict = "no violation found" if self.ok else "VIOLATION"
        return [
            f"index-1 noise condition |R g|_F small: {'pass' if self.index1_noise_ok else 'fail'}",
            f"A + R B nonsingular at sampled t: {'pass' if self.constraint_solvable_ok else 'fail'}",
            f"worst relative violation: {self.worst_violation:.3e} at t={t:.6g}, x={np.array2string(np.asarray(x), precision=4)}",
            f"probed one-sided Lipschitz constant: {self.probed_one_sided_constant:.6g}",
            f"probed monotone-condition constant: {self.probed_monotone_constant:.6g}",
            f"{verdict} at {self.samples_used} samples",
        ]


def validate_index1(p: SdaeProblem, sample_count: int, seed: int) -> ValidationReport:
    """Sample ``(t, x)`` and check ``R(t) g(t, x) = 0`` and that
    ``A(t) + R(t) B(t)`` is nonsingular.

    The noise check is relative: ``|R g|_F <= 1e-10 (1 + |g|_F)``. Failures are
    reported, never raised.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    ts = _sample_times(p, seed, 0, sample_count)
    xs = sample_states(seed, 1, sample_count, p.d)
    noise_ok = solvable_ok = True
    worst, where = 0.0, (float(ts[0]), xs[0])
    for t, x in zip(ts, xs):
        bundle = projector_bundle_at(p, t)
        G = p.diffusion(t, x[None, :])[0]
        ratio = linalg.frobenius_norm(bundle.R @ G) / (1.0 + linalg.frobenius_norm(G))
        if ratio > worst:
            worst, where = ratio, (float(t), x)
        if ratio > INDEX1_TOL:
            noise_ok = False
        try:
            linalg.lu_factor(p.A_at(t) + bundle.R @ p.B_at(t), "A + R B")
        except SingularSystem:
            solvable_ok = False
            worst, where = np.inf, (float(t), x)
    return ValidationReport(
        index1_noise_ok=noise_ok,
        constraint_solvable_ok=solvable_ok,
        probed_one_sided_constant=probe_one_sided_lipschitz(p, max(sample_count, 2), seed),
        probed_monotone_constant=probe_monotone_condition(p, sample_count, seed),
        samples_used=sample_count,
        worst_violation=float(worst),
        worst_location=where,
    )


def one_sided_ratio(p: SdaeProblem, t, x, y) -> float:
    """``<x - y, f(t,x) - f(t,y)> / |x - y|^2``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    F = p.drift(t, np.stack([x, y]))
    diff = x - y
    return float(diff @ (F[0] - F[1])) / float(diff @ diff)


def monotone_ratio(p: SdaeProblem, t, x) -> float:
    """``(<A^+A x, A^+(B x + f(t,x))> + |A^+ g(t,x)|_1^2 / 2) / (1 + |x|^2)``."""
    x = np.asarray(x, dtype=np.float64)
    b = projector_bundle_at(p, t)
    F = p.drift(t, x[None, :])[0]
    G = p.diffusion(t, x[None, :])[0]
    lhs = float((b.P @ x) @ (b.A_pinv @ (p.B_at(t) @ x + F)))
    lhs += 0.5 * linalg.mat_norm_1(b.A_pinv @ G) ** 2
    return lhs / (1.0 + float(x @ x))


def probe_one_sided_lipschitz(p: SdaeProblem, sample_count: int, seed: int,
                              extra_pairs=()) -> float:
    """Largest observed ``<X - Y, f(t,X) - f(t,Y)> / |X - Y|^2``.

    Pairs with ``|X - Y| <= 1e-8 (1 + |X| + |Y|)`` are skipped. ``extra_pairs``
    is an optional iterable of ``(t, X, Y)`` evaluated in addition to the
    sampled ones. Returns ``-inf`` if every pair was degenerate.
    """
    if sample_count < 2:
        raise ValueError("sample_count must be at least 2")
    ts = list(_sample_times(p, seed, 2, sample_count))
    X = list(sample_states(seed, 3, sample_count, p.d))
    Y = list(sample_states(seed, 4, sample_count, p.d))
    for t, x, y in extra_pairs:
        ts.append(float(t))
        X.append(np.asarray(x, dtype=np.float64))
        Y.append(np.asarray(y, dtype=np.float64))
    best = -np.inf
    for t, x, y in zip(ts, X, Y):
        dist = linalg.vec_norm(x - y)
        if dist <= 1e-8 * (1.0 + linalg.vec_norm(x) + linalg.vec_norm(y)):
            continue
        best = max(best, one_sided_ratio(p, t, x, y))
    return best


def probe_monotone_condition(p: SdaeProblem, sample_count: int, seed: int,
                             extra_states=()) -> float:
    """Largest observed :func:`monotone_ratio` over sampled ``(t, X)`` and
    ``extra_states``."""
    if sample_count < 1:
        raise ValueError("sample_count must be at least 1")
    ts = list(_sample_times(p, seed, 5, sample_count))
    X = list(sample_states(seed, 6, sample_count, p.d))
    for t, x in extra_states:
        ts.append(float(t))
        X.append(np.asarray(x, dtype=np.float64))
    best = -np.inf
    for t, x in zip(ts, X):
        best = max(best, monotone_ratio(p, t, x))
    return best


class UnknownModel(KeyError):
    pass


_EXAMPLE_A = np.array([[1.0, 0.0, 1.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
_EXAMPLE_B = np.diag([0.0, -1.0, 1.0])


def _example_drift(t, x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack([x1, x2 - x2**5, x3 - x3**3], axis=-1)


def _example_diffusion(t, x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    zero = np.zeros_like(x1)
    return np.stack([
        np.stack([x1 - x3, x2, x3], axis=-1),
        np.stack([zero, zero, zero], axis=-1),
        np.stack([x2 - x3, x1, x2 - x1], axis=-1),
    ], axis=-2)


def _broken_diffusion(t, x):
    G = _example_diffusion(t, x)
    G[..., 1, :] = np.array([1.0, 0.0, 0.0])
    return G


def _constant(M):
    M = np.array(M, dtype=np.float64)
    M.setflags(write=False)
    return lambda t: M


def builtin_paper_example() -> SdaeProblem:
    """Three-dimensional index-1 test problem with a quintic and a cubic drift
    component and multiplicative noise, on ``[0, 1]``."""
    zero = np.zeros((3, 3))
    return SdaeProblem(
        name="paper-example", d=3, m=3, T=1.0,
        A=_constant(_EXAMPLE_A), B=_constant(_EXAMPLE_B),
        f=_example_drift, g=_example_diffusion,
        X0=np.array([1e-2, 0.0, 1e-2]),
        A_prime=_constant(zero), P_prime=_constant(zero),
        constant_coefficients=True,
    )


def broken_noise_example() -> SdaeProblem:
    """The built-in example with noise entering the constraint row."""
    zero = np.zeros((3, 3))
    return SdaeProblem(
        name="paper-example-broken-g", d=3, m=3, T=1.0,
        A=_constant(_EXAMPLE_A), B=_constant(_EXAMPLE_B),
        f=_example_drift, g=_broken_diffusion,
        X0=np.array([1e-2, 0.0, 1e-2]),
        A_prime=_constant(zero), P_prime=_constant(zero),
        constant_coefficients=True,
    )


REGISTRY = {
    "paper-example": builtin_paper_example,
    "paper-example-broken-g": broken_noise_example,
}


def get_problem(name: str) -> SdaeProblem:
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise UnknownModel(f"unknown model {name!r}; known: {', '.join(sorted(REGISTRY))}") from None
    return factory()
