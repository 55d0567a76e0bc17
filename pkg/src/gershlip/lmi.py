"""Block LMI assembly, Gershgorin discs, and negative-semidefiniteness checks.

The certificate matrix is pseudo-tri-diagonal over the coordinate blocks
[x, w_1, ..., w_n]: block tri-diagonal plus a corner pair coupling x and
w_n through A^T B.  If every Gershgorin disc of the assembled matrix lies
in the closed left half-plane, the matrix is negative semidefinite and the
block is certified L-Lipschitz.  Eigenvalues are computed with a cyclic
Jacobi sweep as ground truth behind the disc test.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .param import BlockShape, MaterializedBlock, compute_G

__all__ = [
    "ConstraintCheck",
    "GershgorinDisc",
    "JacobiConvergenceError",
    "LmiMatrix",
    "LmiReport",
    "assemble_lmi",
    "check_constraints",
    "discs_to_csv",
    "eigenvalues_symmetric",
    "eigenvalues_to_csv",
    "gershgorin_discs",
    "selection_matrix",
    "verify_block",
]


@dataclass
class LmiMatrix:
    M: np.ndarray
    block_offsets: list[int]  # start index of the x block and each w_l block

    @property
    def size(self) -> int:
        return self.M.shape[0]


@dataclass
class GershgorinDisc:
    row: int
    center: float
    radius: float

    @property
    def upper(self) -> float:
        return self.center + self.radius

    @property
    def lower(self) -> float:
        return self.center - self.radius


@dataclass
class ConstraintCheck:
    name: str
    passed: bool
    margin: float  # smallest slack across the checked entries; >= 0 means pass


@dataclass
class LmiReport:
    size: int
    max_disc_upper: float
    min_eig: float
    max_eig: float
    disc_pass: bool
    eig_pass: bool
    constraints: list[ConstraintCheck]
    nested_fraction: float
    empirical_lipschitz: float | None = None

    @property
    def constraints_pass(self) -> bool:
        return all(c.passed for c in self.constraints)

    @property
    def all_pass(self) -> bool:
        return self.disc_pass and self.eig_pass and self.constraints_pass

    def to_dict(self) -> dict:
        d = {
            "size": self.size,
            "max_disc_upper": self.max_disc_upper,
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "disc_pass": self.disc_pass,
            "eig_pass": self.eig_pass,
            "constraints_pass": self.constraints_pass,
            "all_pass": self.all_pass,
            "nested_fraction": self.nested_fraction,
            "constraints": [
                {"name": c.name, "pass": c.passed, "margin": c.margin}
                for c in self.constraints
            ],
        }
        if self.empirical_lipschitz is not None:
            d["empirical_lipschitz"] = self.empirical_lipschitz
        return d


class JacobiConvergenceError(RuntimeError):
    """Jacobi sweeps failed to reduce the off-diagonal norm below tolerance."""


def selection_matrix(l: int, shape: BlockShape) -> np.ndarray:
    """0/1 matrix picking layer l's stacked (input, output) coordinates.

    Size (d_{l-1} + d_l) x D where D = d_x + sum(dims); the input of layer 1
    is x itself.  l is 1-based.
    """
    if not 1 <= l <= shape.n:
        raise ValueError(f"layer index {l} out of range 1..{shape.n}")
    sizes = [shape.d_x, *shape.dims]
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    D = int(offsets[-1])
    d_in, d_out = sizes[l - 1], sizes[l]
    E = np.zeros((d_in + d_out, D))
    for i in range(d_in):
        E[i, offsets[l - 1] + i] = 1.0
    for i in range(d_out):
        E[d_in + i, offsets[l] + i] = 1.0
    return E


def _mirror_lower(M: np.ndarray) -> np.ndarray:
    """Copy the upper triangle onto the lower one (exact symmetry)."""
    i, j = np.tril_indices(M.shape[0], -1)
    M[i, j] = M[j, i]
    return M


def _weighted_gram(C: np.ndarray, lam: np.ndarray) -> np.ndarray:
    """C^T diag(lam) C, constructed exactly symmetric."""
    return _mirror_lower(C.T @ (lam[:, None] * C))


def assemble_lmi(block: MaterializedBlock) -> LmiMatrix:
    """Assemble the pseudo-tri-diagonal certificate matrix for one block.

    Diagonal blocks: A^T A - L^2 I - 2 P_1 C_1^T Lambda_1 C_1, then
    -2 P_{l+1} C_{l+1}^T Lambda_{l+1} C_{l+1} - 2 Lambda_l for l < n, and
    B^T B - 2 Lambda_n.  Off-diagonals carry S_l Lambda_l C_l; the corner
    pair carries A^T B.  Constructed exactly symmetric.
    """
    blk = block.to_numpy()
    shape = blk.shape
    n = shape.n
    sizes = [shape.d_x, *shape.dims]
    offsets = np.concatenate(([0], np.cumsum(sizes))).astype(int)
    D = int(offsets[-1])
    M = np.zeros((D, D))

    def sl(k):  # coordinate slice of block k (0 = x, k = w_k)
        return slice(offsets[k], offsets[k + 1])

    a, b = blk.A, blk.B
    lip = blk.lipschitz
    S = [spec.S for spec in blk.activations]
    P = [spec.P for spec in blk.activations]

    # x diagonal block
    x_diag = np.diag(a * a) - (lip * lip) * np.eye(shape.d_x)
    x_diag -= 2.0 * P[0] * _weighted_gram(blk.C[0], blk.Lambda[0])
    M[sl(0), sl(0)] += x_diag

    # w_l diagonal blocks
    for l in range(1, n):
        d = -2.0 * P[l] * _weighted_gram(blk.C[l], blk.Lambda[l])
        d -= 2.0 * np.diag(blk.Lambda[l - 1])
        M[sl(l), sl(l)] += d
    M[sl(n), sl(n)] += np.diag(b * b) - 2.0 * np.diag(blk.Lambda[n - 1])

    # adjacent off-diagonal blocks: (w_{l-1}, w_l) carries S_l C_l^T Lambda_l
    for l in range(1, n + 1):
        K = S[l - 1] * (blk.C[l - 1].T * blk.Lambda[l - 1][None, :])
        M[sl(l - 1), sl(l)] += K
        M[sl(l), sl(l - 1)] += K.T

    # corner pair (x, w_n): A^T B with both diagonal
    corner = np.diag(a * b)
    M[sl(0), sl(n)] += corner
    M[sl(n), sl(0)] += corner

    return LmiMatrix(M=M, block_offsets=list(offsets[:-1]))


def gershgorin_discs(lmi: LmiMatrix | np.ndarray) -> list[GershgorinDisc]:
    """One disc per row: center = diagonal entry, radius = off-diagonal abs row sum."""
    M = lmi.M if isinstance(lmi, LmiMatrix) else np.asarray(lmi, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix must be square")
    centers = np.diag(M)
    radii = np.abs(M).sum(axis=1) - np.abs(centers)
    return [
        GershgorinDisc(row=i, center=float(c), radius=float(r))
        for i, (c, r) in enumerate(zip(centers, radii))
    ]


def eigenvalues_symmetric(M, rel_tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """All eigenvalues of a symmetric matrix via cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm drops below
    rel_tol * ||M||_F; raises JacobiConvergenceError after `max_sweeps`.
    Returns eigenvalues sorted ascending.
    """
    if isinstance(M, LmiMatrix):
        M = M.M
    A = np.array(M, dtype=float, copy=True)
    n = A.shape[0]
    if A.ndim != 2 or A.shape[1] != n:
        raise ValueError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise ValueError("matrix must be symmetric")
    if n == 1:
        return A.ravel().copy()

    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n)
    skip = rel_tol * scale / (2.0 * n)

    for _ in range(max_sweeps):
        off = A.copy()
        np.fill_diagonal(off, 0.0)
        off2 = (off * off).sum()
        if off2 <= (rel_tol * scale) ** 2:
            return np.sort(np.diag(A))
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= skip:
                    continue
                theta = 0.5 * (A[q, q] - A[p, p]) / apq
                if abs(theta) > 1e8:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) \
                        if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # similarity A <- G^T A G on rows/cols p, q
                colp, colq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp, rowq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = A[q, p] = 0.0
                A[:, p] = A[p, :]  # remove roundoff asymmetry
                A[:, q] = A[q, :]
    raise JacobiConvergenceError(
        f"off-diagonal norm still {np.sqrt(max(off2, 0.0)):.3e} after {max_sweeps} sweeps"
    )


def _rows_l1(C: np.ndarray) -> np.ndarray:
    return np.abs(C).sum(axis=1)


def check_constraints(block: MaterializedBlock, rel_slack: float = 1e-9) -> list[ConstraintCheck]:
    """Evaluate every closed-form parameter inequality on a materialized block.

    `rel_slack` absorbs order-of-operations roundoff when re-deriving the
    lambda lower bounds; upper bounds are checked exactly since the
    materialization builds in explicit margins.
    """
    blk = block.to_numpy()
    n = blk.shape.n
    lip = blk.lipschitz
    a, b = blk.A, blk.B
    checks: list[ConstraintCheck] = []

    def record(name, slack, passed=None):
        slack = np.asarray(slack, dtype=float)
        ok = bool(np.all(slack >= 0)) if passed is None else bool(passed)
        checks.append(ConstraintCheck(name, ok, float(slack.min())))

    abs_a = np.abs(a)
    record("a_interval", np.minimum(abs_a, lip - abs_a),
           passed=np.all((abs_a > 0) & (abs_a < lip)))
    with np.errstate(divide="ignore"):
        b_bound = np.divide(lip * lip - a * a, abs_a,
                            out=np.full_like(abs_a, np.inf), where=abs_a > 0)
    record("b_interval", b_bound - np.abs(b), passed=np.all(np.abs(b) < b_bound))

    for l in range(n):
        spec = blk.activations[l]
        rows = _rows_l1(blk.C[l])
        if spec.S != 0.0:
            budget = 2.0 / abs(spec.S)
            record(f"c{l + 1}_row_norm", budget - rows, passed=np.all(rows < budget))
        else:
            record(f"c{l + 1}_row_norm", np.zeros(1))
        if l >= 1 and spec.P > 0.0 and spec.S != 0.0:
            elem_cap = (spec.S ** 2 + 4.0 * abs(spec.P)) / (2.0 * (abs(spec.P) + spec.P) * abs(spec.S))
            record(f"c{l + 1}_element", elem_cap - np.abs(blk.C[l]))

    spec1 = blk.activations[0]
    record("c1_row_scaled", 1.0 - abs(spec1.S) * _rows_l1(blk.C[0]))
    d1 = blk.shape.dims[0]
    slack = lip * lip - a * a - abs_a * np.abs(b)
    elem = (slack[None, :] * abs(spec1.S)
            / (d1 * blk.Lambda[0][:, None] * (spec1.S ** 2 + 4.0 * abs(spec1.P))))
    record("c1_element", elem - np.abs(blk.C[0]))

    for l in range(n):
        record(f"lambda{l + 1}_positive", blk.Lambda[l],
               passed=np.all(blk.Lambda[l] > 0))

    spec_n = blk.activations[n - 1]
    den_n = 2.0 - abs(spec_n.S) * _rows_l1(blk.C[n - 1])
    bound_n = (b * b + abs_a * np.abs(b)) / den_n
    record(f"lambda{n}_lower", blk.Lambda[n - 1] - bound_n * (1.0 - rel_slack))

    for l in range(n - 1):
        spec_next = blk.activations[l + 1]
        G = np.asarray(compute_G(blk.Lambda[l + 1], blk.C[l + 1], spec_next.S, spec_next.P))
        den = 2.0 - abs(blk.activations[l].S) * _rows_l1(blk.C[l])
        bound = G / den
        record(f"lambda{l + 1}_lower", blk.Lambda[l] - bound * (1.0 - rel_slack))

    return checks


def _nested_fraction(discs: list[GershgorinDisc]) -> float:
    """Fraction of disc pairs where one interval contains the other."""
    k = len(discs)
    if k < 2:
        return 1.0
    lo = np.array([d.lower for d in discs])
    hi = np.array([d.upper for d in discs])
    inside = (lo[:, None] >= lo[None, :]) & (hi[:, None] <= hi[None, :])
    np.fill_diagonal(inside, False)
    pairs = (inside | inside.T)[np.triu_indices(k, 1)]
    return float(np.count_nonzero(pairs)) / pairs.size


def verify_block(block: MaterializedBlock, disc_tol: float = 1e-9,
                 eig_tol: float = 1e-8) -> LmiReport:
    """Assemble, take discs, eigensolve, and check every parameter inequality."""
    lmi = assemble_lmi(block)
    discs = gershgorin_discs(lmi)
    uppers = np.array([d.upper for d in discs])
    eigs = eigenvalues_symmetric(lmi.M)
    return LmiReport(
        size=lmi.size,
        max_disc_upper=float(uppers.max()),
        min_eig=float(eigs[0]),
        max_eig=float(eigs[-1]),
        disc_pass=bool(uppers.max() <= disc_tol),
        eig_pass=bool(eigs[-1] <= eig_tol),
        constraints=check_constraints(block),
        nested_fraction=_nested_fraction(discs),
    )


def discs_to_csv(discs: list[GershgorinDisc], path, block_index: int | None = None) -> None:
    """Write discs as CSV (row, center, radius), with a leading block column
    when `block_index` is given."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if block_index is None:
            writer.writerow(["row", "center", "radius"])
            for d in discs:
                writer.writerow([d.row, repr(d.center), repr(d.radius)])
        else:
            writer.writerow(["block", "row", "center", "radius"])
            for d in discs:
                writer.writerow([block_index, d.row, repr(d.center), repr(d.radius)])


def eigenvalues_to_csv(eigs: np.ndarray, path, block_index: int | None = None) -> None:
    """Write eigenvalues as CSV (index, eigenvalue)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if block_index is None:
            writer.writerow(["index", "eigenvalue"])
            for i, e in enumerate(eigs):
                writer.writerow([i, repr(float(e))])
        else:
            writer.writerow(["block", "index", "eigenvalue"])
            for i, e in enumerate(eigs):
                writer.writerow([block_index, i, repr(float(e))])
