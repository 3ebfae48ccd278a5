"""Time steppers for index-1 SDAEs.

``DirectTamed`` solves ``(A - hB) X' = A X + f h / (1 + h|f|) + g dW`` at every
step, with ``A``, ``B``, ``f`` and ``g`` evaluated at the left end ``t_n``.
``DualTamed`` advances the differential part ``u = P X`` through
``(I + h M1) u' = u + h M2 f / (1 + h|f|) + A^+ g dW`` and recovers the
algebraic part ``v = Q X`` from the discrete constraint; for constant
coefficients both produce the same iterates up to rounding. ``DirectUntamed``
drops the taming factor and is only meant for comparisons.

The batched engine :func:`integrate` advances many independent paths at once
through the kernels in :mod:`semitamed.kernels`.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels, linalg
from .linalg import SingularSystem
from .model import SdaeProblem, p_prime_at, projector_bundle_at
from .wiener import WienerGrid, coarsen_increments

__all__ = [
    "SchemeKind",
    "Trajectory",
    "StabilityReport",
    "BatchResult",
    "StepError",
    "tame",
    "step_direct",
    "step_untamed",
    "step_dual",
    "dual_initial_split",
    "assemble_M1",
    "assemble_M2",
    "check_stability",
    "integrate",
    "simulate",
    "interpolate",
    "write_trajectory_csv",
]


class SchemeKind(str, enum.Enum):
    DIRECT_TAMED = "direct-tamed"
    DUAL_TAMED = "dual-tamed"
    DIRECT_UNTAMED = "direct-untamed"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ValueError(f"unknown scheme {value!r}; expected one of {names}") from None


class StepError(SingularSystem):
    """A stepper failure, tagged with the step index where it happened."""

    def __init__(self, message, step, t):
        super().__init__(f"step {step} (t = {t:.6g}): {message}")
        self.step = step
        self.t = t


def tame(f_val, h: float) -> np.ndarray:
    """``f_val h / (1 + h |f_val|)``; its norm never exceeds ``min(1, h |f_val|)``."""
    if h < 0:
        raise ValueError("h must be non-negative")
    f_val = np.asarray(f_val, dtype=np.float64)
    return kernels.tame(np.ascontiguousarray(f_val.reshape(1, -1)), float(h))[0]


# -- per-step matrices -------------------------------------------------------

def _coupling_factor(p, t):
    b = projector_bundle_at(p, t)
    A, B = p.A_at(t), p.B_at(t)
    RB = b.R @ B
    return b, A, B, RB, linalg.lu_factor(A + RB, "A + R B")


def _m_matrices(p, t):
    b, A, B, RB, arb = _coupling_factor(p, t)
    Pp = p_prime_at(p, t)
    Z = linalg.lu_solve(arb, RB)      # (A + RB)^{-1} R B
    Y = linalg.lu_solve(arb, b.R)     # (A + RB)^{-1} R
    ApB = b.A_pinv @ B
    M1 = -Pp + Pp @ Z - ApB + ApB @ Z
    M2 = b.A_pinv - Pp @ Y - ApB @ Y
    return M1, M2, b, RB, arb


def assemble_M1(p: SdaeProblem, t: float) -> np.ndarray:
    """``-P' + P'(A+RB)^{-1}RB - A^+B + A^+B(A+RB)^{-1}RB`` at time ``t``.

    Raises :class:`SingularSystem` if ``A + R B`` is singular.
    """
    return _m_matrices(p, t)[0]


def assemble_M2(p: SdaeProblem, t: float) -> np.ndarray:
    """``A^+ - P'(A+RB)^{-1}R - A^+B(A+RB)^{-1}R`` at time ``t``."""
    return _m_matrices(p, t)[1]


@dataclass(frozen=True)
class _DirectOps:
    A: np.ndarray
    lu: linalg.LUFactor


@dataclass(frozen=True)
class _DualOps:
    ihm: linalg.LUFactor
    arb: linalg.LUFactor
    M2: np.ndarray
    A_pinv: np.ndarray
    RB: np.ndarray
    R: np.ndarray
    M1: np.ndarray


def _direct_ops(p, t, h):
    A = np.ascontiguousarray(p.A_at(t))
    return _DirectOps(A=A, lu=linalg.lu_factor(A - h * p.B_at(t), "S_h = A - h B"))


def _dual_ops(p, t, h):
    M1, M2, b, RB, arb = _m_matrices(p, t)
    ihm = linalg.lu_factor(np.eye(p.d) + h * M1, "I + h M1")
    c = np.ascontiguousarray
    return _DualOps(ihm=ihm, arb=arb, M2=c(M2), A_pinv=c(b.A_pinv), RB=c(RB), R=c(b.R), M1=M1)


# -- single steps ------------------------------------------------------------

def _one_row(x, d, what):
    x = linalg.as_vector(x, what)
    if x.shape != (d,):
        raise ValueError(f"{what} must have shape ({d},), got {x.shape}")
    return x.reshape(1, d)


def _step_direct(p, t_n, X_n, h, dW, tamed):
    if not h > 0:
        raise ValueError("h must be positive")
    X = _one_row(X_n, p.d, "X_n")
    dW = _one_row(dW, p.m, "dW")
    ops = _direct_ops(p, t_n, h)
    F, G = p.drift(t_n, X), p.diffusion(t_n, X)
    return kernels.direct_step(ops.A, ops.lu.lu, ops.lu.piv, X, F, G, dW, float(h), tamed)[0]


def step_direct(p: SdaeProblem, t_n: float, X_n, h: float, dW) -> np.ndarray:
    """One semi-implicit tamed step from ``X_n`` at ``t_n``.

    Raises :class:`SingularSystem` when ``A(t_n) - h B(t_n)`` is singular.
    """
    return _step_direct(p, t_n, X_n, h, dW, True)


def step_untamed(p: SdaeProblem, t_n: float, X_n, h: float, dW) -> np.ndarray:
    """Like :func:`step_direct` with the raw drift increment ``f h``."""
    return _step_direct(p, t_n, X_n, h, dW, False)


def dual_initial_split(p: SdaeProblem):
    """``(P(0) X0, Q(0) X0)``."""
    b = projector_bundle_at(p, 0.0)
    return b.P @ p.X0, b.Q @ p.X0


def step_dual(p: SdaeProblem, t_n: float, u_n, v_n, h: float, dW):
    """One dual tamed step; returns ``(u_next, v_next, X_next)``.

    The drift and diffusion are evaluated at ``X_n = u_n + v_n``. Raises
    :class:`SingularSystem` when ``A + R B`` or ``I + h M1`` is singular.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    U = _one_row(u_n, p.d, "u_n")
    X = U + _one_row(v_n, p.d, "v_n")
    dW = _one_row(dW, p.m, "dW")
    ops = _dual_ops(p, t_n, h)
    F, G = p.drift(t_n, X), p.diffusion(t_n, X)
    U1, V1 = kernels.dual_step(ops.ihm.lu, ops.ihm.piv, ops.arb.lu, ops.arb.piv, ops.M2,
                               ops.A_pinv, ops.RB, ops.R, np.ascontiguousarray(U), F, G, dW,
                               float(h))
    return U1[0], V1[0], U1[0] + V1[0]


# -- stability ---------------------------------------------------------------

@dataclass(frozen=True)
class StabilityReport:
    """Per-node nonsingularity checks and ``|(I + h M1)^{-1}|_1``.

    ``inverse_norm`` is NaN where ``I + h M1`` could not be formed or
    inverted. ``K_observed`` is the smallest ``K >= 0`` with
    ``|(I + h M1)^{-1}|_1 <= exp(K h)`` at every node.
    """

    h: float
    times: np.ndarray
    S_h_nonsingular: np.ndarray
    coupling_nonsingular: np.ndarray
    I_hM1_nonsingular: np.ndarray
    inverse_norm: np.ndarray
    K_observed: float

    @property
    def ok(self) -> bool:
        return bool(self.S_h_nonsingular.all() and self.coupling_nonsingular.all()
                    and self.I_hM1_nonsingular.all())


def _nonsingular(M):
    try:
        linalg.lu_factor(M)
    except SingularSystem:
        return False
    return True


def check_stability(p: SdaeProblem, h: float, grid) -> StabilityReport:
    if h < 0:
        raise ValueError("h must be non-negative")
    times = np.asarray(grid, dtype=np.float64).reshape(-1)
    if np.any(times < 0) or np.any(times > p.T):
        raise ValueError(f"grid must lie in [0, {p.T}]")
    n = times.size
    s_ok = np.zeros(n, bool)
    c_ok = np.zeros(n, bool)
    i_ok = np.zeros(n, bool)
    norms = np.full(n, np.nan)
    for k, t in enumerate(times):
        s_ok[k] = _nonsingular(p.A_at(t) - h * p.B_at(t))
        try:
            M1 = assemble_M1(p, t)
        except SingularSystem:
            continue
        c_ok[k] = True
        ihm = np.eye(p.d) + h * M1
        i_ok[k] = _nonsingular(ihm)
        if i_ok[k]:
            norms[k] = linalg.mat_norm_1(np.linalg.inv(ihm))
    finite = norms[np.isfinite(norms)]
    K = 0.0
    if h > 0 and finite.size:
        K = max(0.0, float(np.max(np.log(finite))) / h)
    return StabilityReport(h=float(h), times=times, S_h_nonsingular=s_ok,
                           coupling_nonsingular=c_ok, I_hM1_nonsingular=i_ok,
                           inverse_norm=norms, K_observed=K)


# -- batched integration -----------------------------------------------------

@dataclass
class BatchResult:
    """States of a batch of paths recorded every ``record_every`` steps.

    ``states`` has shape ``(paths, N // record_every + 1, d)``; rows of a path
    are NaN from its first non-finite step on. ``diverged_at[b]`` is that step
    index, or -1.
    """

    states: np.ndarray
    diverged_at: np.ndarray
    record_every: int
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    @property
    def diverged(self) -> np.ndarray:
        return self.diverged_at >= 0


def integrate(p: SdaeProblem, kind, increments, record_every: int = 1,
              keep_dual_parts: bool = False, X0=None) -> BatchResult:
    """Run ``kind`` over a batch of Brownian paths.

    Parameters
    ----------
    p : SdaeProblem
    kind : SchemeKind or str
    increments : ndarray, shape (paths, N, m)
        Brownian increments over ``N`` equal steps of ``[0, p.T]``.
    record_every : int
        Stride, in steps, between recorded states; must divide ``N``.
    keep_dual_parts : bool
        Also record ``u`` and ``v`` (dual scheme only).
    """
    kind = SchemeKind.parse(kind)
    inc = np.asarray(increments, dtype=np.float64)
    if inc.ndim != 3 or inc.shape[2] != p.m:
        raise ValueError(f"increments must have shape (paths, N, {p.m}), got {inc.shape}")
    paths, N, _ = inc.shape
    if N < 1 or N % record_every:
        raise ValueError(f"record_every={record_every} must divide N={N}")
    h = p.T / N
    dW_steps = np.ascontiguousarray(np.moveaxis(inc, 1, 0))  # (N, paths, m)

    X0 = p.X0 if X0 is None else linalg.as_vector(X0, "X0")
    X = np.ascontiguousarray(np.broadcast_to(X0, (paths, p.d)), dtype=np.float64)
    n_rec = N // record_every + 1
    states = np.empty((paths, n_rec, p.d))
    states[:, 0] = X
    diverged_at = np.full(paths, -1, dtype=np.int64)
    dual = kind is SchemeKind.DUAL_TAMED
    tamed = kind is not SchemeKind.DIRECT_UNTAMED
    U = V = u_rec = v_rec = None
    if dual:
        b0 = projector_bundle_at(p, 0.0)
        U = kernels.matvec(np.ascontiguousarray(b0.P), X)
        V = kernels.matvec(np.ascontiguousarray(b0.Q), X)
        if keep_dual_parts:
            u_rec = np.empty_like(states)
            v_rec = np.empty_like(states)
            u_rec[:, 0], v_rec[:, 0] = U, V

    make_ops = _dual_ops if dual else _direct_ops
    ops = None
    with np.errstate(all="ignore"):
        for n in range(N):
            t = n * h
            if ops is None or not p.constant_coefficients:
                try:
                    ops = make_ops(p, t, h)
                except SingularSystem as exc:
                    raise StepError(str(exc), n, t) from exc
            F = p.drift(t, X)
            G = p.diffusion(t, X)
            dW = dW_steps[n]
            if dual:
                U, V = kernels.dual_step(ops.ihm.lu, ops.ihm.piv, ops.arb.lu, ops.arb.piv,
                                         ops.M2, ops.A_pinv, ops.RB, ops.R, U, F, G, dW, h)
                X = U + V
            else:
                X = kernels.direct_step(ops.A, ops.lu.lu, ops.lu.piv, X, F, G, dW, h, tamed)
            bad = ~np.isfinite(X).all(axis=1)
            if bad.any():
                fresh = bad & (diverged_at < 0)
                diverged_at[fresh] = n + 1
                X[bad] = np.nan
                if dual:
                    U[bad] = np.nan
                    V[bad] = np.nan
            if (n + 1) % record_every == 0:
                k = (n + 1) // record_every
                states[:, k] = X
                if u_rec is not None:
                    u_rec[:, k], v_rec[:, k] = U, V
    return BatchResult(states=states, diverged_at=diverged_at, record_every=record_every,
                       u=u_rec, v=v_rec)


# -- single-path trajectories ------------------------------------------------

@dataclass
class Trajectory:
    """Iterates ``X_0, ..., X_N`` of one path with per-step diagnostics.

    ``solve_residuals[n]`` and ``constraint_residuals[n]`` belong to the step
    that produced ``states[n + 1]``. The constraint residual is
    ``|R B X_{n+1} + R f/(1 + h|f|) + R g dW / h|`` (untamed: raw ``f``).
    """

    problem: str
    scheme: SchemeKind
    N: int
    h: float
    states: np.ndarray
    solve_residuals: np.ndarray
    constraint_residuals: np.ndarray
    u: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    diverged_at: Optional[int] = None
    times: np.ndarray = field(init=False)

    def __post_init__(self):
        self.times = np.arange(self.N + 1) * self.h

    @property
    def diverged(self) -> bool:
        return self.diverged_at is not None


def _diagnostics(p, kind, t, h, X, X1, dW, U1=None, V1=None, U=None):
    """Solve and constraint residuals of one step for a single path."""
    b = projector_bundle_at(p, t)
    A, B = p.A_at(t), p.B_at(t)
    F = p.drift(t, X[None])[0]
    G = p.diffusion(t, X[None])[0]
    if kind is SchemeKind.DIRECT_UNTAMED:
        phi = F
    else:
        phi = F / (1.0 + h * linalg.vec_norm(F))
    noise = G @ dW
    constraint = linalg.vec_norm(b.R @ B @ X1 + b.R @ phi + b.R @ noise / h)
    if kind is SchemeKind.DUAL_TAMED:
        M1, M2, _, RB, _ = _m_matrices(p, t)
        r_u = (np.eye(p.d) + h * M1) @ U1 - (U + h * (M2 @ phi) + b.A_pinv @ noise)
        r_v = (A + RB) @ V1 + RB @ U1 + b.R @ phi
        solve = max(linalg.vec_norm(r_u), linalg.vec_norm(r_v))
    else:
        solve = linalg.vec_norm((A - h * B) @ X1 - (A @ X + h * phi + noise))
    return solve, constraint


def simulate(p: SdaeProblem, kind, w: WienerGrid, diagnostics: bool = True) -> Trajectory:
    """Fold the chosen stepper over all ``w.N`` steps of one Brownian path."""
    kind = SchemeKind.parse(kind)
    if w.m != p.m:
        raise ValueError(f"Wiener grid has m={w.m}, problem needs m={p.m}")
    if not math.isclose(w.T, p.T, rel_tol=1e-12):
        raise ValueError(f"Wiener grid horizon {w.T} differs from problem horizon {p.T}")
    res = integrate(p, kind, w.increments[None], keep_dual_parts=True)
    states = res.states[0]
    N, h = w.N, p.T / w.N
    div = int(res.diverged_at[0])
    solve_r = np.full(N, np.nan)
    cons_r = np.full(N, np.nan)
    u = v = None
    if kind is SchemeKind.DUAL_TAMED:
        u, v = res.u[0], res.v[0]
    if diagnostics:
        last = N if div < 0 else div - 1
        for n in range(last):
            extra = {}
            if u is not None:
                extra = dict(U1=u[n + 1], V1=v[n + 1], U=u[n])
            solve_r[n], cons_r[n] = _diagnostics(p, kind, n * h, h, states[n], states[n + 1],
                                                 w.increments[n], **extra)
    return Trajectory(problem=p.name, scheme=kind, N=N, h=h, states=states,
                      solve_residuals=solve_r, constraint_residuals=cons_r, u=u, v=v,
                      diverged_at=None if div < 0 else div)


def interpolate(traj: Trajectory, p: SdaeProblem, w_fine: WienerGrid, t: float) -> np.ndarray:
    """Continuous extension of the direct scheme on ``[t_n, t_{n+1})``:

    ``(A - hB)^{-1} [A X_n + f (t - t_n) / (1 + h|f|) + g (W(t) - W(t_n))]``

    with all coefficients at ``t_n``. At ``t = t_n`` this is
    ``(A - hB)^{-1} A X_n``, which differs from ``X_n`` whenever ``hB X_n`` is
    not zero; at ``t = T`` the last interval is used with its full increment,
    which reproduces ``X_N``. ``t`` must lie on the grid of ``w_fine``, whose
    step count must be a multiple of ``traj.N``.
    """
    if not 0.0 <= t <= p.T:
        raise ValueError(f"t = {t} outside [0, {p.T}]")
    if w_fine.N % traj.N:
        raise ValueError("w_fine must refine the trajectory grid")
    ratio = w_fine.N // traj.N
    k_float = t / w_fine.h
    k = int(round(k_float))
    if abs(k_float - k) > 1e-9 * max(1.0, k_float):
        raise ValueError(f"t = {t} is not a node of the fine Wiener grid")
    n = min(k // ratio, traj.N - 1)
    h = traj.h
    t_n = n * h
    X_n = traj.states[n]
    A = p.A_at(t_n)
    F = p.drift(t_n, X_n[None])[0]
    G = p.diffusion(t_n, X_n[None])[0]
    if traj.scheme is SchemeKind.DIRECT_UNTAMED:
        scale = 1.0
    else:
        scale = 1.0 / (1.0 + h * linalg.vec_norm(F))
    block = w_fine.increments[n * ratio:k]
    if k == (n + 1) * ratio:
        dW = coarsen_increments(block, ratio)[0]
    else:
        dW = block.sum(axis=0)
    rhs = A @ X_n + F * scale * (t - t_n) + G @ dW
    return linalg.lu_solve(linalg.lu_factor(A - h * p.B_at(t_n), "S_h = A - h B"), rhs)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Columns ``n, t, X_1..X_d[, u_1..u_d, v_1..v_d], solve_residual,
    constraint_residual``; residual cells are empty on row 0 and after
    divergence."""
    d = traj.states.shape[1]
    header = ["n", "t"] + [f"X_{i + 1}" for i in range(d)]
    if traj.u is not None:
        header += [f"u_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
    header += ["solve_residual", "constraint_residual"]

    def cell(x):
        return "" if not np.isfinite(x) else repr(float(x))

    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(header)
        for n in range(traj.N + 1):
            row = [n, repr(float(traj.times[n]))]
            row += [repr(float(x)) for x in traj.states[n]]
            if traj.u is not None:
                row += [repr(float(x)) for x in traj.u[n]]
                row += [repr(float(x)) for x in traj.v[n]]
            if n == 0:
                row += ["", ""]
            else:
                row += [cell(traj.solve_residuals[n - 1]), cell(traj.constraint_residuals[n - 1])]
            out.writerow(row)
