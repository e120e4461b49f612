"""Ghost-cell boundary conditions."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

KINDS = ("dirichlet", "periodic", "extrapolate")


@dataclass(frozen=True)
class BoundaryCondition:
    """Boundary treatment through one ghost cell on each side.

    ``dirichlet`` ghosts take ``left_value``/``right_value`` (arrays of
    length n_vars, or callables of time returning one); ``periodic`` ghosts
    copy the opposite interior cell; ``extrapolate`` ghosts copy the adjacent
    interior cell (zero gradient).
    """

    kind: str
    left_value: object = None
    right_value: object = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")
        if self.kind == "periodic" and (self.left_value is not None or self.right_value is not None):
            raise ValueError("periodic boundaries take no values")
        if self.kind == "dirichlet" and (self.left_value is None or self.right_value is None):
            raise ValueError("dirichlet boundaries need left and right values")

    @property
    def periodic(self) -> bool:
        return self.kind == "periodic"


def _value(v, t: float, n_vars: int) -> np.ndarray:
    if callable(v):
        v = v(t)
    out = np.broadcast_to(np.asarray(v, dtype=float), (n_vars,))
    return out.copy()


def apply_bc(values: np.ndarray, bc: BoundaryCondition, t: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Return the ``(left_ghost, right_ghost)`` vectors for ``values[var, cell]``."""
    values = np.atleast_2d(values)
    if bc.kind == "periodic":
        return values[:, -1].copy(), values[:, 0].copy()
    if bc.kind == "extrapolate":
        return values[:, 0].copy(), values[:, -1].copy()
    d = values.shape[0]
    return _value(bc.left_value, t, d), _value(bc.right_value, t, d)


def dirichlet(left, right) -> BoundaryCondition:
    return BoundaryCondition("dirichlet", left, right)


def periodic() -> BoundaryCondition:
    return BoundaryCondition("periodic")


def extrapolate() -> BoundaryCondition:
    return BoundaryCondition("extrapolate")


GhostFn = Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]]
