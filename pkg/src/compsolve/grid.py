"""Uniform Dirichlet grids on the unit interval/square and their difference operators."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid:
    """Interior nodes of a uniform grid on [0, 1]^dim with zero boundary values.

    Unknowns are ordered with the x index running fastest. Forward differences
    live on edges: axis 0 has (n+1)*n^(dim-1) x-edges, axis 1 the same count
    of y-edges.
    """

    dim: int
    n: int
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {self.dim}")
        if self.n < 3:
            raise ValueError(f"need at least 3 interior points per axis, got {self.n}")

    @property
    def h(self) -> float:
        return 1.0 / (self.n + 1)

    @property
    def size(self) -> int:
        return self.n**self.dim

    @property
    def cell_weight(self) -> float:
        return self.h**self.dim

    @cached_property
    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (size, dim)."""
        t = self.h * np.arange(1, self.n + 1)
        if self.dim == 1:
            return t[:, None]
        X, Y = np.meshgrid(t, t, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def _d1(self) -> sp.csr_matrix:
        n = self.n
        main = np.ones(n + 1)
        d = sp.diags([main[:n], -main[:n]], [0, -1], shape=(n + 1, n))
        return (d / self.h).tocsr()

    @cached_property
    def differences(self) -> tuple[sp.csr_matrix, ...]:
        """Forward-difference matrices, one per axis, mapping nodes to edges."""
        if self.dim == 1:
            return (self._d1,)
        eye = sp.identity(self.n, format="csr")
        return (sp.kron(eye, self._d1, format="csr"), sp.kron(self._d1, eye, format="csr"))

    @cached_property
    def edge_midpoints(self) -> tuple[np.ndarray, ...]:
        """Midpoint coordinates of the edges of each axis, shape (n_edges, dim)."""
        h = self.h
        half = h * (np.arange(self.n + 1) + 0.5)
        if self.dim == 1:
            return (half[:, None],)
        t = h * np.arange(1, self.n + 1)
        xe, ye = np.meshgrid(half, t, indexing="xy")
        xs, ys = np.meshgrid(t, half, indexing="xy")
        return (
            np.column_stack([xe.ravel(), ye.ravel()]),
            np.column_stack([xs.ravel(), ys.ravel()]),
        )

    @cached_property
    def averages(self) -> tuple[sp.csr_matrix, ...]:
        """Node-to-edge averaging matrices (zero boundary values included)."""
        n = self.n
        a1 = sp.diags([np.full(n, 0.5), np.full(n, 0.5)], [0, -1], shape=(n + 1, n)).tocsr()
        if self.dim == 1:
            return (a1,)
        eye = sp.identity(n, format="csr")
        return (sp.kron(eye, a1, format="csr"), sp.kron(a1, eye, format="csr"))

    @cached_property
    def gradient(self) -> sp.csr_matrix:
        """All forward differences stacked into one edge vector."""
        return sp.vstack(self.differences, format="csr")

    @cached_property
    def laplacian(self) -> sp.csc_matrix:
        """Dirichlet Laplacian D^T D (positive definite, scaled by 1/h^2)."""
        g = self.gradient
        return (g.T @ g).tocsc()

    def laplacian_solve(self, f: np.ndarray) -> np.ndarray:
        lu = self._cache.get("laplacian_lu")
        if lu is None:
            from scipy.sparse.linalg import splu

            lu = self._cache.setdefault("laplacian_lu", splu(self.laplacian))
        return lu.solve(np.asarray(f, dtype=float))

    def sample(self, fn) -> np.ndarray:
        """Evaluate fn(*coords) at the interior nodes."""
        return np.asarray(fn(*self.nodes.T), dtype=float)
