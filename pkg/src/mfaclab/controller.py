"""MFAC control laws built on the incremental linearization.

All variants minimize, one way or another, the one-step cost

    J(du) = ||y_ref - y_hat(k+1)||^2 + du^T L du

with L a nonnegative diagonal weighting and y_hat predicted through the
pseudo-Jacobian blocks.  The window convention is the controller's
information set at step k: y_history[0] = y(k), u_history[0] = u(k-1).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .edlm import (
    DifferentiableModel,
    PseudoJacobian,
    RegressorWindow,
    pjm_first_order,
    pjm_second_order,
)
from .errors import InfeasibleBoxError, RankDeficiencyError, ShapeError

QUARTIC_TOL = 1.0e-9
QUARTIC_MAX_PASSES = 50
SWEEP_TOL = 1.0e-10
SWEEP_MAX = 500
ITERATIVE_TOL = 1.0e-10


@dataclass(frozen=True)
class Weighting:
    """Diagonal control-increment penalty (the lambda of the one-step cost)."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.atleast_1d(np.asarray(self.entries, dtype=float))
        if e.ndim != 1:
            raise ShapeError(f"weighting entries must be a vector, got shape {e.shape}")
        if np.any(e < 0.0) or not np.all(np.isfinite(e)):
            raise ValueError("weighting entries must be finite and >= 0")
        e = e.copy()
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @classmethod
    def uniform(cls, value: float, size: int) -> "Weighting":
        return cls(np.full(size, float(value)))

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.entries)


@dataclass(frozen=True)
class BoxConstraints:
    """Componentwise input bounds lower <= u <= upper."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError(f"bound shapes disagree: {lo.shape} vs {hi.shape}")
        if np.any(lo > hi):
            raise InfeasibleBoxError(f"empty box: lower {lo} exceeds upper {hi}")
        lo = lo.copy()
        hi = hi.copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, u: np.ndarray) -> bool:
        return bool(np.all(u >= self.lower) and np.all(u <= self.upper))

    def clip(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, self.lower, self.upper)


@dataclass(frozen=True)
class ControlDecision:
    """One controller step: increment, absolute input, and diagnostics."""

    delta_u: np.ndarray
    u: np.ndarray
    cost: float
    iterations: int
    condition_number: float
    converged: bool = True
    pjm: PseudoJacobian | None = None


def lambda_schedule(cond: float, size: int = 1) -> Weighting:
    """Damping stepped up with the conditioning of the lead block.

    cond < 5000 -> 0; 5000 <= cond < 20000 -> 0.05; cond >= 20000 or
    non-finite -> 0.1.  Boundary values take the larger damping.
    """
    if not np.isfinite(cond):
        value = 0.1
    elif cond >= 20000.0:
        value = 0.1
    elif cond >= 5000.0:
        value = 0.05
    else:
        value = 0.0
    return Weighting.uniform(value, size)


def _condition_number(m: np.ndarray) -> float:
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[-1] < 1.0e-300:
        return float("inf")
    return float(s[0] / s[-1])


def _check_controller_args(
    pjm: PseudoJacobian, window: RegressorWindow, y_now: np.ndarray, y_ref: np.ndarray, w: Weighting
) -> tuple[np.ndarray, np.ndarray]:
    dims = window.dims
    if (pjm.My, pjm.Mu, pjm.Ly, pjm.Lu) != (dims.My, dims.Mu, dims.Ly, dims.Lu):
        raise ShapeError(
            f"pseudo-Jacobian layout ({pjm.My},{pjm.Mu},{pjm.Ly},{pjm.Lu}) does not match "
            f"window dimensions ({dims.My},{dims.Mu},{dims.Ly},{dims.Lu})"
        )
    y_now = np.atleast_1d(np.asarray(y_now, dtype=float))
    y_ref = np.atleast_1d(np.asarray(y_ref, dtype=float))
    if y_now.shape != (dims.My,) or y_ref.shape != (dims.My,):
        raise ShapeError(f"output vectors must have shape ({dims.My},)")
    if w.size != dims.Mu:
        raise ShapeError(f"weighting has {w.size} entries, expected {dims.Mu}")
    if len(window.y_history) < dims.Ly + 1:
        raise ShapeError(f"window needs {dims.Ly + 1} output samples, has {len(window.y_history)}")
    if len(window.u_history) < dims.Lu:
        raise ShapeError(f"window needs {dims.Lu} input samples, has {len(window.u_history)}")
    return y_now, y_ref


def _history_residual(pjm: PseudoJacobian, window: RegressorWindow, y_now: np.ndarray, y_ref: np.ndarray) -> np.ndarray:
    """Tracking error minus the already-committed increment terms."""
    dims = window.dims
    r = y_ref - y_now
    for i in range(1, dims.Ly + 1):
        dy = window.y_history[i - 1] - window.y_history[i]
        r = r - pjm.output_blocks[i - 1] @ dy
    for j in range(2, dims.Lu + 1):
        du = window.u_history[j - 2] - window.u_history[j - 1]
        r = r - pjm.input_blocks[j - 1] @ du
    return r


def _cost(phi_u: np.ndarray, w: Weighting, residual: np.ndarray, delta_u: np.ndarray) -> float:
    miss = residual - phi_u @ delta_u
    return float(miss @ miss + delta_u @ (w.entries * delta_u))


def mfac_step(
    pjm: PseudoJacobian,
    window: RegressorWindow,
    y_now: np.ndarray,
    y_ref: np.ndarray,
    w: Weighting,
) -> ControlDecision:
    """Unconstrained one-step law: solve (Phi^T Phi + L) du = Phi^T residual.

    Falls back to the minimum-norm least-squares increment when the weighting
    is zero and the lead block is rank deficient in its columns but still
    spans the outputs; fewer independent rows than outputs is an error.
    """
    y_now, y_ref = _check_controller_args(pjm, window, y_now, y_ref, w)
    dims = window.dims
    phi_u = pjm.lead_input_block
    residual = _history_residual(pjm, window, y_now, y_ref)
    A = phi_u.T @ phi_u + w.matrix
    b = phi_u.T @ residual
    try:
        np.linalg.cholesky(A)
        delta_u = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        if np.all(w.entries == 0.0):
            rank = int(np.linalg.matrix_rank(phi_u))
            if rank < dims.My:
                raise RankDeficiencyError(
                    f"lead block rank {rank} cannot reach all {dims.My} outputs with zero weighting",
                    rank=rank,
                )
            delta_u = np.linalg.lstsq(phi_u, residual, rcond=None)[0]
        else:
            delta_u = np.linalg.lstsq(A, b, rcond=None)[0]
    u_prev = window.u_history[0]
    return ControlDecision(
        delta_u=delta_u,
        u=u_prev + delta_u,
        cost=_cost(phi_u, w, residual, delta_u),
        iterations=0,
        condition_number=_condition_number(phi_u),
        pjm=pjm,
    )


def mfac_constrained_step(
    pjm: PseudoJacobian,
    window: RegressorWindow,
    y_now: np.ndarray,
    y_ref: np.ndarray,
    w: Weighting,
    box: BoxConstraints,
) -> ControlDecision:
    """Box-constrained one-step law via projected coordinate descent.

    Minimizes the same quadratic as mfac_step subject to
    lower <= u_prev + du <= upper.  Sweeps coordinates until the largest
    update falls below SWEEP_TOL or SWEEP_MAX sweeps elapse.
    """
    y_now, y_ref = _check_controller_args(pjm, window, y_now, y_ref, w)
    if box.lower.shape != (window.dims.Mu,):
        raise ShapeError(f"box bounds must have shape ({window.dims.Mu},)")
    u_prev = window.u_history[0]
    lo = box.lower - u_prev
    hi = box.upper - u_prev
    phi_u = pjm.lead_input_block
    residual = _history_residual(pjm, window, y_now, y_ref)
    G = phi_u.T @ phi_u + w.matrix
    c = phi_u.T @ residual

    x = np.clip(np.zeros(window.dims.Mu), lo, hi)
    sweeps = 0
    for sweeps in range(1, SWEEP_MAX + 1):
        biggest = 0.0
        for j in range(x.shape[0]):
            coupled = G[j] @ x - G[j, j] * x[j]
            if G[j, j] > 0.0:
                new = (c[j] - coupled) / G[j, j]
            else:
                new = 0.0  # coordinate has no effect on the cost
            new = min(max(new, lo[j]), hi[j])
            biggest = max(biggest, abs(new - x[j]))
            x[j] = new
        if biggest < SWEEP_TOL:
            break
    u = box.clip(u_prev + x)
    return ControlDecision(
        delta_u=u - u_prev,
        u=u,
        cost=_cost(phi_u, w, residual, x),
        iterations=sweeps,
        condition_number=_condition_number(phi_u),
        pjm=pjm,
    )


def _control_window_parts(window: RegressorWindow) -> tuple[RegressorWindow, list[np.ndarray], list[np.ndarray]]:
    """Linearization point at step k-1 plus the committed increment lists."""
    dims = window.dims
    if len(window.y_history) < dims.Ly + 1:
        raise ShapeError(f"window needs {dims.Ly + 1} output samples, has {len(window.y_history)}")
    point = RegressorWindow(
        dims=dims, k=window.k - 1, y_history=window.y_history[1:], u_history=window.u_history
    )
    delta_ys = [window.y_history[i] - window.y_history[i + 1] for i in range(dims.Ly)]
    delta_u_hist = [window.u_history[j] - window.u_history[j + 1] for j in range(min(dims.Lu - 1, len(window.u_history) - 1))]
    while len(delta_u_hist) < dims.Lu - 1:
        delta_u_hist.append(np.zeros(dims.Mu))
    return point, delta_ys, delta_u_hist


def mfac_quartic_step(
    model: DifferentiableModel,
    window: RegressorWindow,
    y_now: np.ndarray,
    y_ref: np.ndarray,
    w: Weighting,
) -> ControlDecision:
    """One-step law under the curvature-corrected linearization.

    The cost is quartic in du because the predicted increment carries the
    half-Hessian terms.  Solved by fixed-point re-linearization: start from
    the first-order increment, rebuild the corrected blocks at the current
    iterate, re-solve the quadratic, and repeat until the iterate settles
    (QUARTIC_TOL in the max norm) or QUARTIC_MAX_PASSES elapse.  On a cap-out
    the best-cost iterate is returned flagged non-converged.
    """
    point, delta_ys, delta_u_hist = _control_window_parts(window)
    base = pjm_first_order(model, point)
    first = mfac_step(base, window, y_now, y_ref, w)
    delta_u = first.delta_u

    best: ControlDecision | None = None
    converged = False
    passes = 0
    for passes in range(1, QUARTIC_MAX_PASSES + 1):
        corrected = pjm_second_order(model, point, delta_ys, [delta_u] + delta_u_hist)
        step = mfac_step(corrected, window, y_now, y_ref, w)
        if best is None or step.cost < best.cost:
            best = step
        if np.max(np.abs(step.delta_u - delta_u)) < QUARTIC_TOL:
            delta_u = step.delta_u
            best = step if step.cost <= best.cost else best
            converged = True
            break
        delta_u = step.delta_u
    chosen = step if converged else best
    return ControlDecision(
        delta_u=chosen.delta_u,
        u=chosen.u,
        cost=chosen.cost,
        iterations=passes,
        condition_number=chosen.condition_number,
        converged=converged,
        pjm=chosen.pjm,
    )


def iterative_mfac_step(
    model: DifferentiableModel,
    window: RegressorWindow,
    y_now: np.ndarray,
    y_ref: np.ndarray,
    schedule: Callable[[float, int], Weighting] = lambda_schedule,
    max_iter: int = 30,
) -> ControlDecision:
    """Inner-loop refinement toward a fixed target using the true model.

    Each pass linearizes at the current virtual history, applies the damped
    one-step law with conditioning-scheduled weighting, and advances a virtual
    copy of the plant.  Stops when the virtual output matches y_ref to
    ITERATIVE_TOL in the max norm; hitting max_iter flags non-convergence.
    """
    dims = model.dims
    if dims.ny is None or dims.nu is None:
        raise ValueError("model orders ny, nu must be declared for the iterative law")
    y_now = np.atleast_1d(np.asarray(y_now, dtype=float))
    y_ref = np.atleast_1d(np.asarray(y_ref, dtype=float))
    ys = [y_now] + [v for v in window.y_history[1:]]
    us = [v for v in window.u_history]
    u_start = us[0]
    depth_y = max(dims.Ly + 1, dims.ny + 2, 2)
    depth_u = max(dims.Lu + 1, dims.nu + 2, 2)
    while len(ys) < depth_y:
        ys.append(np.zeros(dims.My))
    while len(us) < depth_u:
        us.append(np.zeros(dims.Mu))

    worst_cond = 0.0
    iterations = 0
    converged = False
    k = window.k
    for i in range(max_iter + 1):
        if np.max(np.abs(y_ref - ys[0])) < ITERATIVE_TOL:
            converged = True
            break
        if i == max_iter:
            break
        point = RegressorWindow(dims=dims, k=k - 1, y_history=ys[1:], u_history=us)
        pjm = pjm_first_order(model, point)
        cond = _condition_number(pjm.lead_input_block)
        worst_cond = max(worst_cond, cond) if np.isfinite(cond) else float("inf")
        virt = RegressorWindow(dims=dims, k=k, y_history=ys, u_history=us)
        step = mfac_step(pjm, virt, ys[0], y_ref, schedule(cond, dims.Mu))
        u_new = step.u
        args = [ys[s] for s in range(dims.ny + 1)] + [u_new] + [us[s] for s in range(dims.nu)]
        y_new = model._checked_eval(args)
        us = [u_new] + us[: depth_u - 1]
        ys = [y_new] + ys[: depth_y - 1]
        iterations = i + 1
        k += 1

    err = y_ref - ys[0]
    delta_u = us[0] - u_start
    return ControlDecision(
        delta_u=delta_u,
        u=us[0],
        cost=float(err @ err),
        iterations=iterations,
        condition_number=worst_cond,
        converged=converged,
    )
