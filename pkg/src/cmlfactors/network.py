"""Coupling networks: block Laplacian, random rotation and coupling matrix.

``L`` holds ``M`` fully connected clusters of ``N`` nodes each. A Haar-random
orthogonal ``Q`` hides the block structure, ``C = Q L Q^T``, while keeping the
spectrum: eigenvalue 0 with multiplicity ``M`` and ``-N`` with multiplicity
``K - M``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericalError, ParameterError

ZERO_TOL = 1e-9


@dataclass(frozen=True)
class NetworkParams:
    M: int
    N: int
    seed: int = 0

    def __post_init__(self):
        if int(self.M) != self.M or self.M < 1:
            raise ParameterError(f"M must be a positive integer, got {self.M!r}")
        if int(self.N) != self.N or self.N < 2:
            raise ParameterError(f"N must be an integer >= 2, got {self.N!r}")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")

    @property
    def K(self) -> int:
        return self.M * self.N


@dataclass(frozen=True, eq=False)
class CouplingNetwork:
    params: NetworkParams
    L: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    C: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return self.params.K

    def update_matrix(self, epsilon: float) -> np.ndarray:
        """``(1 - eps) I + (eps / N) C``."""
        return (1.0 - epsilon) * np.eye(self.K) + (epsilon / self.params.N) * self.C


def build_laplacian(params: NetworkParams) -> np.ndarray:
    """Block-diagonal Laplacian of ``M`` complete graphs on ``N`` nodes."""
    N = params.N
    block = np.ones((N, N)) - N * np.eye(N)
    return np.kron(np.eye(params.M), block)


def random_orthogonal(K: int, seed: int) -> np.ndarray:
    """Haar-distributed ``K x K`` orthogonal matrix from a seeded QR.

    Columns of ``Q`` are multiplied by the sign of ``diag(R)`` so the
    factorisation is unique and the result uniformly distributed.
    """
    if K < 1:
        raise ParameterError("K must be positive")
    A = np.random.default_rng(seed).standard_normal((K, K))
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs


def build_coupling(params: NetworkParams) -> CouplingNetwork:
    L = build_laplacian(params)
    Q = random_orthogonal(params.K, params.seed)
    C = Q @ L @ Q.T
    # symmetrise away the O(eps_mach) asymmetry of the triple product
    C = 0.5 * (C + C.T)
    return CouplingNetwork(params, L, Q, C)


def nullspace_basis(net: CouplingNetwork, tol: float = ZERO_TOL) -> np.ndarray:
    lam, V = np.linalg.eigh(net.C)
    mask = np.abs(lam) < tol
    if mask.sum() != net.params.M:
        raise NumericalError(
            f"expected {net.params.M} null eigenvalues, found {int(mask.sum())}")
    return V[:, mask]


def nullspace_projector(net: CouplingNetwork, tol: float = ZERO_TOL) -> np.ndarray:
    """Orthogonal projector onto the null space of ``C``."""
    V0 = nullspace_basis(net, tol)
    return V0 @ V0.T


def write_matrix_csv(path, A: np.ndarray) -> None:
    """One row per line, comma separated, shortest round-trip decimals."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for row in np.asarray(A, dtype=float):
            w.writerow([repr(float(x)) for x in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(x) for x in row] for row in csv.reader(fh) if row])


def export_network(net: CouplingNetwork, outdir) -> list[Path]:
    outdir = Path(outdir)
    paths = []
    for name in ("L", "Q", "C"):
        p = outdir / f"{name}.csv"
        write_matrix_csv(p, getattr(net, name))
        paths.append(p)
    return paths
