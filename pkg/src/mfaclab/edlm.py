"""Incremental (equivalent dynamic) linearization of multivariable discrete plants.

The plant family is y(k+1) = f(y(k), ..., y(k-ny), u(k), ..., u(k-nu)).  Over a
window of Ly output increments and Lu input increments the one-step output
increment satisfies

    dy(k+1) = Phi_L(k)^T dH(k)

where dH(k) stacks [dy(k) ... dy(k-Ly+1), du(k) ... du(k-Lu+1)] and Phi_L
collects Ly blocks of shape (My, My) followed by Lu blocks of shape (My, Mu).
This module builds the regressor vectors and the first- and second-order
pseudo-Jacobian approximations from a differentiable model.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NonFiniteModelError, ShapeError

# Relative step for first-derivative central differences; the absolute floor
# keeps the step sane around zero operating points.
FD_STEP = 1.0e-6
# Fixed step for the nested second-derivative differences.  Smaller values
# lose too many digits in the double subtraction.
HESSIAN_STEP = 1.0e-4


@dataclass(frozen=True)
class Dimensions:
    """Signal sizes and window lengths of the incremental model.

    My/Mu are the output/input vector sizes, Ly/Lu the pseudo-order window
    lengths.  ny and nu are the true plant memory orders when known (ny = -1
    declares a static map with no output feedback; nu = 0 means only u(k)
    enters).
    """

    My: int
    Mu: int
    Ly: int
    Lu: int
    ny: int | None = None
    nu: int | None = None

    def __post_init__(self):
        if self.My < 1 or self.Mu < 1:
            raise ValueError(f"signal sizes must be positive, got My={self.My}, Mu={self.Mu}")
        if self.Ly < 0:
            raise ValueError(f"output window length must be >= 0, got Ly={self.Ly}")
        if self.Lu < 1:
            raise ValueError(f"input window length must be >= 1, got Lu={self.Lu}")
        if self.ny is not None and self.ny < -1:
            raise ValueError(f"output order ny must be >= -1, got {self.ny}")
        if self.nu is not None and self.nu < 0:
            raise ValueError(f"input order nu must be >= 0, got {self.nu}")

    @classmethod
    def preferred(cls, My: int, Mu: int, ny: int, nu: int) -> "Dimensions":
        """Window lengths matched to the true orders: Ly = ny+1, Lu = nu+1."""
        return cls(My=My, Mu=Mu, Ly=ny + 1, Lu=nu + 1, ny=ny, nu=nu)

    @property
    def width(self) -> int:
        """Length of the stacked increment vector dH(k)."""
        return self.Ly * self.My + self.Lu * self.Mu


def _as_vectors(history, size: int, label: str) -> tuple[np.ndarray, ...]:
    out = []
    for i, v in enumerate(history):
        a = np.atleast_1d(np.asarray(v, dtype=float))
        if a.shape != (size,):
            raise ShapeError(f"{label}[{i}] has shape {a.shape}, expected ({size},)")
        a.setflags(write=False)
        out.append(a)
    return tuple(out)


@dataclass(frozen=True)
class RegressorWindow:
    """Recent signal history, newest first.

    y_history[0] is y(k) for step index k; u_history[0] is the newest input
    held by the window.  A window used to build a full increment vector dH(k)
    carries at least Ly+1 outputs and Lu+1 inputs; a window passed as a
    linearization point carries at least ny+1 outputs and nu+1 inputs.  The
    operations validate the depth they actually need.
    """

    dims: Dimensions
    k: int
    y_history: tuple[np.ndarray, ...]
    u_history: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(self, "y_history", _as_vectors(self.y_history, self.dims.My, "y_history"))
        object.__setattr__(self, "u_history", _as_vectors(self.u_history, self.dims.Mu, "u_history"))
        if len(self.u_history) < 1:
            raise ShapeError("u_history must hold at least one input sample")


@dataclass(frozen=True)
class PseudoJacobian:
    """Blocked gain estimate Phi_L(k): Ly output blocks then Lu input blocks."""

    output_blocks: tuple[np.ndarray, ...]
    input_blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.input_blocks) < 1:
            raise ShapeError("at least one input block (Lu >= 1) is required")
        My = np.asarray(self.input_blocks[0]).shape[0]
        ob = []
        for i, b in enumerate(self.output_blocks):
            a = np.asarray(b, dtype=float)
            if a.shape != (My, My):
                raise ShapeError(f"output block {i + 1} has shape {a.shape}, expected ({My}, {My})")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"output block {i + 1} contains non-finite entries")
            a = a.copy()
            a.setflags(write=False)
            ob.append(a)
        Mu = np.asarray(self.input_blocks[0]).shape[1]
        ib = []
        for j, b in enumerate(self.input_blocks):
            a = np.asarray(b, dtype=float)
            if a.shape != (My, Mu):
                raise ShapeError(f"input block {j + 1} has shape {a.shape}, expected ({My}, {Mu})")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"input block {j + 1} contains non-finite entries")
            a = a.copy()
            a.setflags(write=False)
            ib.append(a)
        object.__setattr__(self, "output_blocks", tuple(ob))
        object.__setattr__(self, "input_blocks", tuple(ib))

    @classmethod
    def constant(cls, value: float, dims: Dimensions) -> "PseudoJacobian":
        """Every entry of every block set to the same value (warm-up seed)."""
        return cls(
            output_blocks=tuple(np.full((dims.My, dims.My), value) for _ in range(dims.Ly)),
            input_blocks=tuple(np.full((dims.My, dims.Mu), value) for _ in range(dims.Lu)),
        )

    @property
    def My(self) -> int:
        return self.input_blocks[0].shape[0]

    @property
    def Mu(self) -> int:
        return self.input_blocks[0].shape[1]

    @property
    def Ly(self) -> int:
        return len(self.output_blocks)

    @property
    def Lu(self) -> int:
        return len(self.input_blocks)

    @property
    def lead_input_block(self) -> np.ndarray:
        """The block multiplying du(k); it carries the control authority."""
        return self.input_blocks[0]

    def flattened(self) -> np.ndarray:
        """All blocks side by side: shape (My, Ly*My + Lu*Mu)."""
        return np.hstack(self.output_blocks + self.input_blocks)


def pjm_csv_header(dims: Dimensions) -> list[str]:
    """Column names for the row-major flattened pseudo-Jacobian."""
    widths = [dims.My] * dims.Ly + [dims.Mu] * dims.Lu
    names = []
    for r in range(dims.My):
        for b, w in enumerate(widths, start=1):
            for c in range(w):
                names.append(f"Phi{b}[{r},{c}]")
    return names


def pjm_csv_values(pjm: PseudoJacobian) -> list[float]:
    """Row-major flattened entries, matching pjm_csv_header order."""
    return [float(v) for v in pjm.flattened().ravel()]


class DifferentiableModel(ABC):
    """A plant map y(k+1) = f(y(k),...,y(k-ny), u(k),...,u(k-nu)).

    evaluate takes the argument slots in that order (ny = -1 drops the output
    slots entirely) and returns the next output vector.
    """

    @property
    @abstractmethod
    def dims(self) -> Dimensions:
        ...

    @abstractmethod
    def evaluate(self, args: Sequence[np.ndarray]) -> np.ndarray:
        ...

    def _checked_eval(self, args: Sequence[np.ndarray]) -> np.ndarray:
        y = np.asarray(self.evaluate(args), dtype=float)
        if y.shape != (self.dims.My,):
            raise ShapeError(f"model returned shape {y.shape}, expected ({self.dims.My},)")
        if not np.all(np.isfinite(y)):
            bad = int(np.flatnonzero(~np.isfinite(y))[0])
            raise NonFiniteModelError(f"model output component {bad} is non-finite", arg_index=bad)
        return y


def build_delta_regressor(window_now: RegressorWindow, window_prev: RegressorWindow) -> np.ndarray:
    """Stacked increment vector dH(k) between two aligned history windows."""
    dims = window_now.dims
    if window_prev.dims != dims:
        raise ShapeError(f"window dimensions disagree: {dims} vs {window_prev.dims}")
    if len(window_now.y_history) < dims.Ly or len(window_prev.y_history) < dims.Ly:
        raise ShapeError(f"need {dims.Ly} output samples per window for dH")
    if len(window_now.u_history) < dims.Lu or len(window_prev.u_history) < dims.Lu:
        raise ShapeError(f"need {dims.Lu} input samples per window for dH")
    parts = [window_now.y_history[i] - window_prev.y_history[i] for i in range(dims.Ly)]
    parts += [window_now.u_history[j] - window_prev.u_history[j] for j in range(dims.Lu)]
    if not parts:
        return np.zeros(0)
    return np.concatenate(parts)


def predict_delta_output(pjm: PseudoJacobian, delta_regressor: np.ndarray) -> np.ndarray:
    """One-step output increment predicted by the linearized model."""
    dh = np.asarray(delta_regressor, dtype=float)
    flat = pjm.flattened()
    if dh.shape != (flat.shape[1],):
        raise ShapeError(f"delta regressor has shape {dh.shape}, expected ({flat.shape[1]},)")
    return flat @ dh


def _operating_args(model: DifferentiableModel, point: RegressorWindow) -> list[np.ndarray]:
    dims = model.dims
    if dims.ny is None or dims.nu is None:
        raise ValueError("model orders ny, nu must be declared for pseudo-Jacobian computation")
    if dims.Ly < dims.ny + 1 or dims.Lu < dims.nu + 1:
        raise ValueError(
            f"window lengths Ly={dims.Ly}, Lu={dims.Lu} must cover the true orders "
            f"ny={dims.ny}, nu={dims.nu} (residual terms are not modelled)"
        )
    if point.dims.My != dims.My or point.dims.Mu != dims.Mu:
        raise ShapeError("operating point signal sizes do not match the model")
    n_y = dims.ny + 1
    n_u = dims.nu + 1
    if len(point.y_history) < n_y:
        raise ShapeError(f"operating point needs {n_y} output samples, has {len(point.y_history)}")
    if len(point.u_history) < n_u:
        raise ShapeError(f"operating point needs {n_u} input samples, has {len(point.u_history)}")
    args = [point.y_history[i].copy() for i in range(n_y)]
    args += [point.u_history[j].copy() for j in range(n_u)]
    return args


def _jacobian_block(model: DifferentiableModel, args: list[np.ndarray], slot: int) -> np.ndarray:
    """Central-difference derivative of f with respect to one argument slot."""
    width = args[slot].shape[0]
    block = np.empty((model.dims.My, width))
    for j in range(width):
        x = args[slot][j]
        h = max(FD_STEP, FD_STEP * abs(x))
        hi = [a.copy() for a in args]
        lo = [a.copy() for a in args]
        hi[slot][j] = x + h
        lo[slot][j] = x - h
        block[:, j] = (model._checked_eval(hi) - model._checked_eval(lo)) / (2.0 * h)
    return block


def _slot_hessians(model: DifferentiableModel, args: list[np.ndarray], slot: int) -> np.ndarray:
    """Hessians of every output component with respect to one argument slot.

    Returns shape (My, w, w) where w is the slot width.  Nested central
    differences with a fixed step; the result is symmetrized by construction.
    """
    w = args[slot].shape[0]
    h = HESSIAN_STEP
    H = np.empty((model.dims.My, w, w))
    f0 = model._checked_eval(args)

    def shifted(di: int, hi: float, dj: int, hj: float) -> np.ndarray:
        pt = [a.copy() for a in args]
        pt[slot][di] += hi
        pt[slot][dj] += hj
        return model._checked_eval(pt)

    for i in range(w):
        H[:, i, i] = (shifted(i, h, i, 0.0) - 2.0 * f0 + shifted(i, -h, i, 0.0)) / (h * h)
        for j in range(i + 1, w):
            mixed = (
                shifted(i, h, j, h)
                - shifted(i, h, j, -h)
                - shifted(i, -h, j, h)
                + shifted(i, -h, j, -h)
            ) / (4.0 * h * h)
            H[:, i, j] = mixed
            H[:, j, i] = mixed
    return H


def pjm_first_order(model: DifferentiableModel, operating_point: RegressorWindow) -> PseudoJacobian:
    """Derivative-block pseudo-Jacobian at the given linearization point.

    Block i (i = 1..ny+1) is df/dy(k-i)^T and block Ly+j (j = 1..nu+1) is
    df/du(k-j)^T, both evaluated at the newest entries of the window (the
    caller supplies the step-(k-1) history).  Blocks beyond the true orders
    are zero.
    """
    dims = model.dims
    args = _operating_args(model, operating_point)
    n_y = dims.ny + 1
    out_blocks = [_jacobian_block(model, args, s) for s in range(n_y)]
    out_blocks += [np.zeros((dims.My, dims.My)) for _ in range(dims.Ly - n_y)]
    in_blocks = [_jacobian_block(model, args, n_y + s) for s in range(dims.nu + 1)]
    in_blocks += [np.zeros((dims.My, dims.Mu)) for _ in range(dims.Lu - (dims.nu + 1))]
    return PseudoJacobian(output_blocks=tuple(out_blocks), input_blocks=tuple(in_blocks))


def pjm_second_order(
    model: DifferentiableModel,
    operating_point: RegressorWindow,
    delta_ys: Sequence[np.ndarray],
    delta_us: Sequence[np.ndarray],
) -> PseudoJacobian:
    """First-order blocks plus half-Hessian corrections along the increments.

    Row r of the correction to block i is 0.5 * delta_i^T * Hess(f_r) for the
    matching argument slot, so the predicted increment reproduces the true one
    to third order when the plant has no cross-slot curvature.  delta_ys[0] is
    dy(k), delta_us[0] is du(k), older increments follow.
    """
    dims = model.dims
    base = pjm_first_order(model, operating_point)
    args = _operating_args(model, operating_point)
    n_y = dims.ny + 1
    n_u = dims.nu + 1
    if len(delta_ys) < n_y:
        raise ShapeError(f"need {n_y} output increments, got {len(delta_ys)}")
    if len(delta_us) < n_u:
        raise ShapeError(f"need {n_u} input increments, got {len(delta_us)}")
    delta_ys = _as_vectors(delta_ys, dims.My, "delta_ys")
    delta_us = _as_vectors(delta_us, dims.Mu, "delta_us")

    out_blocks = [b.copy() for b in base.output_blocks]
    for s in range(n_y):
        H = _slot_hessians(model, args, s)
        out_blocks[s] += 0.5 * np.einsum("j,rjc->rc", delta_ys[s], H)
    in_blocks = [b.copy() for b in base.input_blocks]
    for s in range(n_u):
        H = _slot_hessians(model, args, n_y + s)
        in_blocks[s] += 0.5 * np.einsum("j,rjc->rc", delta_us[s], H)
    return PseudoJacobian(output_blocks=tuple(out_blocks), input_blocks=tuple(in_blocks))
