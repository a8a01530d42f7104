"""Frozen-gain closed-loop analysis: characteristic matrix, roots, static errors.

With the pseudo-Jacobian held constant the loop formed by the one-step law is
linear time-invariant.  Collect the output blocks into phi_y(q) = Phi_1 +
Phi_2 q + ... + Phi_Ly q^(Ly-1) and the input blocks into phi_u(q) = Phi_{Ly+1}
+ ... + Phi_{Ly+Lu} q^(Lu-1), where q denotes the backward shift z^-1.  The
characteristic matrix is

    T(q) = (1 - q) L (I - q phi_y(q)) + phi_u(q) Phi_{Ly+1}^T

and the loop is stable exactly when every root z of det T (rewritten as a
polynomial in z) lies strictly inside the unit circle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import Weighting
from .edlm import PseudoJacobian
from .errors import DegenerateLoopError, ShapeError, SingularMatrixError, UnstableLoopError

STABILITY_MARGIN = 1.0e-9


class Poly:
    """Real polynomial in the backward shift; coeffs[i] multiplies z^-i."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs=()):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1:
            raise ShapeError(f"coefficients must be a vector, got shape {c.shape}")
        n = c.shape[0]
        while n > 0 and c[n - 1] == 0.0:
            n -= 1
        c = c[:n].copy()
        c.setflags(write=False)
        self.coeffs = c

    @classmethod
    def constant(cls, value: float) -> "Poly":
        return cls((float(value),))

    @property
    def degree(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def is_zero(self) -> bool:
        return self.coeffs.shape[0] == 0

    def __add__(self, other: "Poly") -> "Poly":
        n = max(self.coeffs.shape[0], other.coeffs.shape[0])
        c = np.zeros(n)
        c[: self.coeffs.shape[0]] += self.coeffs
        c[: other.coeffs.shape[0]] += other.coeffs
        return Poly(c)

    def __sub__(self, other: "Poly") -> "Poly":
        return self + (-other)

    def __neg__(self) -> "Poly":
        return Poly(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Poly):
            if self.is_zero or other.is_zero:
                return Poly(())
            return Poly(np.convolve(self.coeffs, other.coeffs))
        return Poly(self.coeffs * float(other))

    __rmul__ = __mul__

    def shifted(self, powers: int = 1) -> "Poly":
        """Multiply by z^-powers."""
        if self.is_zero:
            return self
        return Poly(np.concatenate([np.zeros(powers), self.coeffs]))

    def __call__(self, w):
        """Evaluate at a value of the backward shift w = z^-1."""
        acc = 0.0 if not np.iscomplexobj(np.asarray(w)) else 0.0 + 0.0j
        for c in self.coeffs[::-1]:
            acc = acc * w + c
        return acc

    def __repr__(self):
        return f"Poly({list(self.coeffs)})"


@dataclass(frozen=True)
class PolyMatrix:
    """Rectangular matrix with Poly entries."""

    entries: tuple[tuple[Poly, ...], ...]

    def __post_init__(self):
        rows = []
        width = None
        for row in self.entries:
            r = tuple(e if isinstance(e, Poly) else Poly.constant(e) for e in row)
            if width is None:
                width = len(r)
            elif len(r) != width:
                raise ShapeError("ragged rows in PolyMatrix")
            rows.append(r)
        if not rows or width == 0:
            raise ShapeError("PolyMatrix must be non-empty")
        object.__setattr__(self, "entries", tuple(rows))

    @classmethod
    def from_constant(cls, m: np.ndarray) -> "PolyMatrix":
        m = np.atleast_2d(np.asarray(m, dtype=float))
        return cls(tuple(tuple(Poly.constant(v) for v in row) for row in m))

    @classmethod
    def identity(cls, n: int) -> "PolyMatrix":
        return cls.from_constant(np.eye(n))

    @property
    def rows(self) -> int:
        return len(self.entries)

    @property
    def cols(self) -> int:
        return len(self.entries[0])

    def __add__(self, other: "PolyMatrix") -> "PolyMatrix":
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise ShapeError(f"cannot add {self.rows}x{self.cols} and {other.rows}x{other.cols}")
        return PolyMatrix(
            tuple(
                tuple(a + b for a, b in zip(r1, r2))
                for r1, r2 in zip(self.entries, other.entries)
            )
        )

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        if self.cols != other.rows:
            raise ShapeError(f"cannot multiply {self.rows}x{self.cols} by {other.rows}x{other.cols}")
        out = []
        for r in range(self.rows):
            row = []
            for c in range(other.cols):
                acc = Poly(())
                for m in range(self.cols):
                    acc = acc + self.entries[r][m] * other.entries[m][c]
                row.append(acc)
            out.append(tuple(row))
        return PolyMatrix(tuple(out))

    def scaled(self, p: Poly) -> "PolyMatrix":
        return PolyMatrix(tuple(tuple(p * e for e in row) for row in self.entries))

    def eval_at(self, w) -> np.ndarray:
        return np.array([[e(w) for e in row] for row in self.entries])

    def max_row_degrees(self) -> list[int]:
        return [max((max(e.degree, 0) for e in row), default=0) for row in self.entries]


@dataclass(frozen=True)
class StabilityReport:
    """Characteristic roots of the frozen loop and the verdict they imply."""

    characteristic_roots: tuple[complex, ...]
    stable: bool
    margin: float


def closed_loop_matrix(pjm: PseudoJacobian, w: Weighting) -> PolyMatrix:
    """Characteristic matrix T of the frozen one-step loop.

    Only square loops (Mu == My) are supported; the two terms of T cannot be
    added otherwise.
    """
    if pjm.Mu != pjm.My:
        raise ShapeError(
            f"closed-loop analysis needs a square loop, got My={pjm.My}, Mu={pjm.Mu}"
        )
    if w.size != pjm.Mu:
        raise ShapeError(f"weighting has {w.size} entries, expected {pjm.Mu}")
    n = pjm.My
    delta = Poly((1.0, -1.0))

    # I - z^-1 phi_y(z^-1): entry polynomials start with the Kronecker delta.
    inner = []
    for r in range(n):
        row = []
        for c in range(n):
            coeffs = [1.0 if r == c else 0.0]
            coeffs += [-pjm.output_blocks[i][r, c] for i in range(pjm.Ly)]
            row.append(Poly(coeffs))
        inner.append(tuple(row))
    damped = PolyMatrix(tuple(inner))
    # Row r scales with the r-th weighting entry, then by (1 - z^-1).
    damped = PolyMatrix(
        tuple(
            tuple((delta * w.entries[r]) * e for e in row)
            for r, row in enumerate(damped.entries)
        )
    )

    phi_u = PolyMatrix(
        tuple(
            tuple(Poly([pjm.input_blocks[j][r, c] for j in range(pjm.Lu)]) for c in range(pjm.Mu))
            for r in range(n)
        )
    )
    gain = phi_u @ PolyMatrix.from_constant(pjm.lead_input_block.T)
    return damped + gain


def _cofactor_det(entries: tuple[tuple[Poly, ...], ...]) -> Poly:
    n = len(entries)
    if n == 1:
        return entries[0][0]
    acc = Poly(())
    for c in range(n):
        pivot = entries[0][c]
        if pivot.is_zero:
            continue
        minor = tuple(row[:c] + row[c + 1 :] for row in entries[1:])
        term = pivot * _cofactor_det(minor)
        acc = acc + (term if c % 2 == 0 else -term)
    return acc


def _interpolated_det(pm: PolyMatrix) -> Poly:
    bound = sum(pm.max_row_degrees())
    n = bound + 1
    points = np.exp(2j * np.pi * np.arange(n) / n)
    values = np.array([np.linalg.det(pm.eval_at(p)) for p in points])
    coeffs = np.fft.fft(values) / n
    scale = max(np.max(np.abs(coeffs)), 1.0)
    real = np.where(np.abs(coeffs.real) > 1.0e-12 * scale, coeffs.real, 0.0)
    return Poly(real)


def determinant(pm: PolyMatrix) -> Poly:
    """Determinant of a square PolyMatrix.

    Exact cofactor expansion up to 8x8; larger matrices go through numeric
    evaluation at roots of unity and interpolation.
    """
    if pm.rows != pm.cols:
        raise ShapeError(f"determinant needs a square matrix, got {pm.rows}x{pm.cols}")
    if pm.rows <= 8:
        return _cofactor_det(pm.entries)
    return _interpolated_det(pm)


def stability_check(pm: PolyMatrix) -> StabilityReport:
    """Roots of det T rewritten in z, and whether all lie inside the circle.

    det T is a polynomial c_0 + c_1 z^-1 + ... + c_d z^-d; multiplying by z^d
    gives the characteristic polynomial whose roots are the loop poles.  A
    root is accepted as stable only below 1 - STABILITY_MARGIN, so marginal
    loops classify unstable.
    """
    det = determinant(pm)
    if det.is_zero:
        raise DegenerateLoopError("closed-loop determinant vanishes identically")
    roots = np.roots(det.coeffs) if det.degree >= 1 else np.zeros(0, dtype=complex)
    if roots.size == 0:
        return StabilityReport(characteristic_roots=(), stable=True, margin=1.0)
    largest = float(np.max(np.abs(roots)))
    return StabilityReport(
        characteristic_roots=tuple(complex(r) for r in roots),
        stable=largest < 1.0 - STABILITY_MARGIN,
        margin=1.0 - largest,
    )


def _static_matrices(pjm: PseudoJacobian, w: Weighting) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    T = closed_loop_matrix(pjm, w)
    report = stability_check(T)
    if not report.stable:
        raise UnstableLoopError(
            f"static error is undefined for an unstable loop (margin {report.margin:.3e})"
        )
    T1 = T.eval_at(1.0).real
    cond = np.linalg.cond(T1)
    if not np.isfinite(cond) or cond > 1.0e12:
        raise SingularMatrixError("characteristic matrix is singular at z = 1")
    phi_y1 = sum(pjm.output_blocks, start=np.zeros((pjm.My, pjm.My)))
    phi_u1 = sum(pjm.input_blocks, start=np.zeros((pjm.My, pjm.Mu)))
    return T1, phi_y1, phi_u1


def ramp_static_error(pjm: PseudoJacobian, w: Weighting, Ts: float) -> np.ndarray:
    """Steady tracking error under a unit-slope ramp on every output.

    Evaluates T(1)^-1 L (I - phi_y(1)) 1 * Ts.  The error scales linearly
    with the weighting; a zero weighting tracks the ramp exactly.
    """
    if Ts <= 0.0:
        raise ValueError(f"sample time must be positive, got {Ts}")
    T1, phi_y1, _ = _static_matrices(pjm, w)
    ones = np.ones(pjm.My)
    rhs = w.matrix @ ((np.eye(pjm.My) - phi_y1) @ ones)
    return np.linalg.solve(T1, rhs) * Ts


def step_static_error(pjm: PseudoJacobian, w: Weighting) -> np.ndarray:
    """Steady tracking error under a unit step on every output.

    Evaluates (I - T(1)^-1 phi_u(1) Phi_{Ly+1}^T) 1, which cancels exactly:
    the incremental law integrates, so any stable loop has zero step error.
    """
    T1, _, phi_u1 = _static_matrices(pjm, w)
    ones = np.ones(pjm.My)
    return ones - np.linalg.solve(T1, phi_u1 @ (pjm.lead_input_block.T @ ones))
