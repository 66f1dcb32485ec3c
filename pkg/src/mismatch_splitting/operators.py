"""Linear-operator abstraction, block composition, and spectral estimation.

Operators are finite-dimensional and act on flat numpy vectors.  A forward
discretization and a surrogate backward discretization are carried as two
separate maps; each map is adjoint-consistent on its own, the mismatch lives
in the pair.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

POWER_SEED = 0x5EED
DENSE_DIM_LIMIT = 2000


class PowerIterationError(RuntimeError):
    """Power iteration did not reach the requested tolerance."""

    def __init__(self, message, best_estimate, residual):
        super().__init__(message)
        self.best_estimate = best_estimate
        self.residual = residual


class SingularInnerSystemError(RuntimeError):
    """The 2x2 block system is singular or numerically unusable."""


class LinearMap:
    """A bounded linear operator with a true adjoint.

    Subclasses implement ``apply`` and ``apply_adjoint``; the adjoint must be
    the exact transpose of ``apply`` (mismatch is modeled by carrying two
    distinct maps, never by a sloppy adjoint).
    """

    domain_dim: int
    codomain_dim: int

    def apply(self, x):
        raise NotImplementedError

    def apply_adjoint(self, y):
        raise NotImplementedError

    @property
    def matrix(self):
        """Dense or sparse matrix backing this map, or None if matrix-free."""
        return None

    def as_array(self):
        """Materialize as a dense ndarray (column-by-column if matrix-free)."""
        m = self.matrix
        if m is not None:
            return m.toarray() if scipy.sparse.issparse(m) else np.asarray(m, dtype=float)
        cols = [self.apply(e) for e in np.eye(self.domain_dim)]
        return np.column_stack(cols)

    def __sub__(self, other):
        return DifferenceMap(self, other)


class MatrixOperator(LinearMap):
    """LinearMap backed by a dense ndarray or scipy sparse matrix."""

    def __init__(self, matrix):
        if not scipy.sparse.issparse(matrix):
            matrix = np.asarray(matrix, dtype=float)
            if matrix.ndim != 2:
                raise ValueError("matrix must be 2-dimensional")
        self._matrix = matrix
        self.codomain_dim, self.domain_dim = matrix.shape

    @property
    def matrix(self):
        return self._matrix

    def apply(self, x):
        return self._matrix @ np.asarray(x, dtype=float)

    def apply_adjoint(self, y):
        return self._matrix.T @ np.asarray(y, dtype=float)


class FunctionOperator(LinearMap):
    """Matrix-free LinearMap from a forward/adjoint callable pair."""

    def __init__(self, domain_dim, codomain_dim, forward, adjoint):
        self.domain_dim = domain_dim
        self.codomain_dim = codomain_dim
        self._forward = forward
        self._adjoint = adjoint

    def apply(self, x):
        return self._forward(np.asarray(x, dtype=float))

    def apply_adjoint(self, y):
        return self._adjoint(np.asarray(y, dtype=float))


class ZeroOperator(LinearMap):
    def __init__(self, domain_dim, codomain_dim):
        self.domain_dim = domain_dim
        self.codomain_dim = codomain_dim

    @property
    def matrix(self):
        return np.zeros((self.codomain_dim, self.domain_dim))

    def apply(self, x):
        return np.zeros(self.codomain_dim)

    def apply_adjoint(self, y):
        return np.zeros(self.domain_dim)


class ScaledIdentity(LinearMap):
    def __init__(self, dim, scale=1.0):
        self.domain_dim = dim
        self.codomain_dim = dim
        self.scale = float(scale)

    @property
    def matrix(self):
        return self.scale * scipy.sparse.eye(self.domain_dim, format="csr")

    def apply(self, x):
        return self.scale * np.asarray(x, dtype=float)

    def apply_adjoint(self, y):
        return self.scale * np.asarray(y, dtype=float)


class DifferenceMap(LinearMap):
    """Lazy A - B of two maps with matching dimensions."""

    def __init__(self, a, b):
        if (a.domain_dim, a.codomain_dim) != (b.domain_dim, b.codomain_dim):
            raise ValueError("operator dimensions do not match")
        self.a = a
        self.b = b
        self.domain_dim = a.domain_dim
        self.codomain_dim = a.codomain_dim

    @property
    def matrix(self):
        ma, mb = self.a.matrix, self.b.matrix
        if ma is None or mb is None:
            return None
        return ma - mb

    def apply(self, x):
        return self.a.apply(x) - self.b.apply(x)

    def apply_adjoint(self, y):
        return self.a.apply_adjoint(y) - self.b.apply_adjoint(y)


class VStackMap(LinearMap):
    """Vertical stack (A1; A2; ...) sharing one domain."""

    def __init__(self, blocks):
        dims = {b.domain_dim for b in blocks}
        if len(dims) != 1:
            raise ValueError("stacked blocks must share the domain dimension")
        self.blocks = list(blocks)
        self.domain_dim = blocks[0].domain_dim
        self.codomain_dim = sum(b.codomain_dim for b in blocks)
        self._offsets = np.cumsum([0] + [b.codomain_dim for b in blocks])

    @property
    def matrix(self):
        mats = [b.matrix for b in self.blocks]
        if any(m is None for m in mats):
            return None
        if any(scipy.sparse.issparse(m) for m in mats):
            return scipy.sparse.vstack([scipy.sparse.csr_matrix(m) for m in mats], format="csr")
        return np.vstack(mats)

    def apply(self, x):
        return np.concatenate([b.apply(x) for b in self.blocks])

    def apply_adjoint(self, y):
        out = np.zeros(self.domain_dim)
        for b, lo, hi in zip(self.blocks, self._offsets[:-1], self._offsets[1:]):
            out += b.apply_adjoint(y[lo:hi])
        return out


def adjoint_defect(op, rng, n_trials=100):
    """Max relative defect of <Ax, y> - <x, A^T y> over random probe pairs."""
    worst = 0.0
    for _ in range(n_trials):
        x = rng.standard_normal(op.domain_dim)
        y = rng.standard_normal(op.codomain_dim)
        lhs = float(op.apply(x) @ y)
        rhs = float(x @ op.apply_adjoint(y))
        scale = max(abs(lhs), abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


def estimate_operator_norm(op, tol=1e-9, max_iters=5000):
    """Spectral norm of ``op`` by power iteration on M^T M.

    Deterministic seeded start; returns exactly 0.0 for the zero operator.
    Raises PowerIterationError (carrying the best estimate and residual)
    if the relative-change criterion is not met within ``max_iters``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    rng = np.random.default_rng(POWER_SEED)
    x = rng.standard_normal(op.domain_dim)
    x /= np.linalg.norm(x)
    # two independent probes distinguish the zero operator from an unlucky start
    if np.linalg.norm(op.apply(x)) == 0.0:
        probe = rng.standard_normal(op.domain_dim)
        if np.linalg.norm(op.apply(probe)) == 0.0:
            return 0.0
        x = probe / np.linalg.norm(probe)

    sigma = 0.0
    for _ in range(max_iters):
        y = op.apply(x)
        sigma_new = float(np.linalg.norm(y))
        z = op.apply_adjoint(y)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return sigma_new
        x = z / nz
        if abs(sigma_new - sigma) <= tol * max(sigma_new, 1e-300):
            return sigma_new
        sigma = sigma_new
    residual = float(np.linalg.norm(op.apply_adjoint(op.apply(x)) - sigma**2 * x))
    raise PowerIterationError(
        f"operator norm estimate did not converge within {max_iters} iterations",
        best_estimate=sigma,
        residual=residual,
    )


@dataclass
class MismatchPair:
    """Forward map A together with the surrogate V whose adjoint plays V*."""

    forward: LinearMap
    surrogate: LinearMap
    _mismatch_norm: float | None = field(default=None, repr=False, compare=False)
    _solver_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        f, s = self.forward, self.surrogate
        if (f.domain_dim, f.codomain_dim) != (s.domain_dim, s.codomain_dim):
            raise ValueError("forward and surrogate must share identical dimensions")

    @property
    def domain_dim(self):
        return self.forward.domain_dim

    @property
    def codomain_dim(self):
        return self.forward.codomain_dim

    @property
    def mismatch_norm(self):
        """||A - V||, estimated once by power iteration and cached."""
        if self._mismatch_norm is None:
            self._mismatch_norm = estimate_operator_norm(self.forward - self.surrogate)
        return self._mismatch_norm

    def apply_surrogate_adjoint(self, y):
        return self.surrogate.apply_adjoint(y)

    def clear_cache(self):
        with self._lock:
            self._solver_cache.clear()
        self._mismatch_norm = None

    def matched(self):
        """The adjoint-consistent pair using the true adjoint of ``forward``."""
        return MismatchPair(self.forward, self.forward)

    def inner_solver(self, tau, mu_g=0.0, mu_f=0.0):
        key = (float(tau), float(mu_g), float(mu_f))
        with self._lock:
            solver = self._solver_cache.get(key)
            if solver is None:
                solver = InnerSystemSolver(self, tau, mu_g, mu_f)
                self._solver_cache[key] = solver
        return solver


@dataclass
class BlockSkewOperator(LinearMap):
    """The shifted skew block [[shift_g I, V*], [-A, shift_f I]].

    With both shifts zero this is the skew coupling block of the splitting;
    with the tilde-mu shifts it is the operator whose smallest singular value
    enters the linear-rate certificate.
    """

    pair: MismatchPair
    shift_g: float = 0.0
    shift_f: float = 0.0

    def __post_init__(self):
        self.domain_dim = self.pair.domain_dim + self.pair.codomain_dim
        self.codomain_dim = self.domain_dim

    def apply(self, u):
        n = self.pair.domain_dim
        x, y = u[:n], u[n:]
        top = self.shift_g * x + self.pair.apply_surrogate_adjoint(y)
        bot = -self.pair.forward.apply(x) + self.shift_f * y
        return np.concatenate([top, bot])

    def apply_adjoint(self, u):
        n = self.pair.domain_dim
        x, y = u[:n], u[n:]
        top = self.shift_g * x - self.pair.forward.apply_adjoint(y)
        bot = self.pair.surrogate.apply(x) + self.shift_f * y
        return np.concatenate([top, bot])

    def as_sparse(self):
        ma = self.pair.forward.matrix
        mv = self.pair.surrogate.matrix
        if ma is None or mv is None:
            return None
        n, m = self.pair.domain_dim, self.pair.codomain_dim
        eye_n = scipy.sparse.eye(n)
        eye_m = scipy.sparse.eye(m)
        return scipy.sparse.bmat(
            [
                [self.shift_g * eye_n, scipy.sparse.csr_matrix(mv).T],
                [-scipy.sparse.csr_matrix(ma), self.shift_f * eye_m],
            ],
            format="csc",
        )


class _ShiftedSkewSolver:
    """Solves B u = f and B^T u = f for B = [[g I, V*], [-A, f I]], g, f > 0.

    One LU of the domain-sized Schur complement g*f I + V* A serves both:
    eliminating the dual block of B and the primal block of B^T lead to the
    Schur matrix and its transpose respectively.
    """

    def __init__(self, block):
        if block.shift_g <= 0 or block.shift_f <= 0:
            raise ValueError("Schur elimination of the skew block needs positive shifts")
        ma = block.pair.forward.matrix
        mv = block.pair.surrogate.matrix
        if ma is None or mv is None:
            raise ValueError(
                "sigma_min above the dense threshold needs matrix-backed operators"
            )
        self.block = block
        self.n = block.pair.domain_dim
        gf = block.shift_g * block.shift_f
        schur = gf * scipy.sparse.eye(self.n) + scipy.sparse.csr_matrix(mv).T @ scipy.sparse.csr_matrix(ma)
        self._lu = scipy.sparse.linalg.splu(schur.tocsc())

    def solve(self, rhs):
        b = self.block
        fx, fy = rhs[: self.n], rhs[self.n:]
        v = self._lu.solve(b.shift_f * fx - b.pair.apply_surrogate_adjoint(fy))
        w = (fy + b.pair.forward.apply(v)) / b.shift_f
        return np.concatenate([v, w])

    def solve_transpose(self, rhs):
        b = self.block
        f1, f2 = rhs[: self.n], rhs[self.n:]
        u1 = self._lu.solve(
            b.shift_f * f1 + b.pair.forward.apply_adjoint(f2), trans="T"
        )
        u2 = (f2 - b.pair.surrogate.apply(u1)) / b.shift_f
        return np.concatenate([u1, u2])


def estimate_sigma_min(block, tol=1e-8, max_iters=5000):
    """Smallest singular value of a BlockSkewOperator.

    Dense SVD for total dimension <= DENSE_DIM_LIMIT; otherwise inverse
    power iteration on B^{-1} B^{-T} with Schur-complement solves (requires
    matrix-backed maps and positive shifts).
    """
    total = block.domain_dim
    if total <= DENSE_DIM_LIMIT:
        dense = block.as_array()
        return float(np.linalg.svd(dense, compute_uv=False)[-1])

    try:
        solver = _ShiftedSkewSolver(block)
    except RuntimeError:
        return 0.0
    rng = np.random.default_rng(POWER_SEED)
    v0 = rng.standard_normal(total)
    # B^{-1} B^{-T} is symmetric positive definite; its largest eigenvalue
    # is 1/sigma_min^2 and Lanczos is robust to small spectral gaps
    op = scipy.sparse.linalg.LinearOperator(
        (total, total), matvec=lambda z: solver.solve(solver.solve_transpose(z))
    )
    try:
        lam = scipy.sparse.linalg.eigsh(
            op, k=1, which="LM", v0=v0, tol=tol, maxiter=max_iters,
            return_eigenvectors=False,
        )[0]
    except scipy.sparse.linalg.ArpackNoConvergence as exc:
        if exc.eigenvalues.size == 0:
            raise
        lam = exc.eigenvalues[-1]
    return 1.0 / math.sqrt(float(lam))


class InnerSystemSolver:
    """Cached solver for the 2x2 block system of one iteration.

    Solves ``(1+tau*mu_g) v + tau V* w = rhs_x`` and
    ``-tau A v + (1+tau*mu_f) w = rhs_y`` by Schur-complement elimination on
    the smaller of the two spaces.  The factorization (dense LU, sparse LU,
    or a matrix-free closure) is built once on construction.
    """

    def __init__(self, pair, tau, mu_g=0.0, mu_f=0.0):
        if tau <= 0:
            raise ValueError("tau must be positive")
        self.pair = pair
        self.tau = float(tau)
        self.a = 1.0 + tau * mu_g  # primal diagonal
        self.b = 1.0 + tau * mu_f  # dual diagonal
        n, m = pair.domain_dim, pair.codomain_dim
        self.eliminate_primal = m <= n  # factor on the smaller side
        self._build()

    def _schur_matrix(self):
        """Materialize the Schur complement if both maps carry matrices."""
        ma = self.pair.forward.matrix
        mv = self.pair.surrogate.matrix
        if ma is None or mv is None:
            return None
        t2 = self.tau**2
        ab = self.a * self.b
        if not scipy.sparse.issparse(mv) and np.shares_memory(ma, mv):
            # break the aliasing so the product below uses the generic gemm
            # kernel; the symmetric-product shortcut rounds differently and
            # would make an adjoint-consistent pair disagree bit for bit with
            # a surrogate that merely equals the forward map
            mv = mv.copy()
        if self.eliminate_primal:
            # codomain-sized system: ab I + tau^2 A V*
            prod = ma @ mv.T
            dim = self.pair.codomain_dim
        else:
            prod = mv.T @ ma
            dim = self.pair.domain_dim
        if scipy.sparse.issparse(prod):
            return (ab * scipy.sparse.eye(dim) + t2 * prod).tocsc()
        return ab * np.eye(dim) + t2 * np.asarray(prod)

    def _build(self):
        schur = self._schur_matrix()
        dim = self.pair.codomain_dim if self.eliminate_primal else self.pair.domain_dim
        if schur is None:
            self._mode = "iterative"
            self._op = self._matfree_schur(dim)
        elif scipy.sparse.issparse(schur) and dim > DENSE_DIM_LIMIT:
            self._mode = "sparse"
            try:
                self._lu = scipy.sparse.linalg.splu(schur)
            except RuntimeError as exc:
                raise SingularInnerSystemError(
                    "inner block system is singular; tau violates the bound "
                    "tau < 1/||A - V||"
                ) from exc
        else:
            dense = schur.toarray() if scipy.sparse.issparse(schur) else schur
            cond = np.linalg.cond(dense) if dim <= DENSE_DIM_LIMIT else None
            if cond is not None and cond > 1e14:
                raise SingularInnerSystemError(
                    f"inner block system has condition estimate {cond:.3e} > 1e14; "
                    "tau violates the bound tau < 1/||A - V||"
                )
            self._mode = "dense"
            self._lu = scipy.linalg.lu_factor(dense)

    def _matfree_schur(self, dim):
        t2, ab = self.tau**2, self.a * self.b
        pair = self.pair
        if self.eliminate_primal:
            def mv(w):
                return ab * w + t2 * pair.forward.apply(pair.apply_surrogate_adjoint(w))
        else:
            def mv(v):
                return ab * v + t2 * pair.apply_surrogate_adjoint(pair.forward.apply(v))
        return scipy.sparse.linalg.LinearOperator((dim, dim), matvec=mv)

    def _schur_solve(self, rhs):
        if self._mode == "dense":
            return scipy.linalg.lu_solve(self._lu, rhs)
        if self._mode == "sparse":
            return self._lu.solve(rhs)
        sol, info = scipy.sparse.linalg.lgmres(self._op, rhs, rtol=1e-13, atol=0.0, maxiter=2000)
        if info != 0:
            raise SingularInnerSystemError(
                "iterative inner solve failed to converge; tau may violate "
                "the bound tau < 1/||A - V||"
            )
        return sol

    def solve(self, rhs_x, rhs_y):
        tau, a, b = self.tau, self.a, self.b
        pair = self.pair
        if self.eliminate_primal:
            rhs = a * rhs_y + tau * pair.forward.apply(rhs_x)
            w = self._schur_solve(rhs)
            v = (rhs_x - tau * pair.apply_surrogate_adjoint(w)) / a
        else:
            rhs = b * rhs_x - tau * pair.apply_surrogate_adjoint(rhs_y)
            v = self._schur_solve(rhs)
            w = (rhs_y + tau * pair.forward.apply(v)) / b
        return v, w


def solve_inner_system(pair, tau, mu_g, mu_f, rhs_x, rhs_y):
    """One-shot inner solve; the factorization is cached on the pair."""
    return pair.inner_solver(tau, mu_g, mu_f).solve(
        np.asarray(rhs_x, dtype=float), np.asarray(rhs_y, dtype=float)
    )


def load_operator_csv(path):
    """Load a dense operator from CSV with a `rows,cols` header line."""
    with open(path) as fh:
        header = fh.readline().strip()
        rows, cols = (int(tok) for tok in header.split(","))
        data = np.loadtxt(fh, delimiter=",")
    mat = np.asarray(data, dtype=float).reshape(rows, cols)
    return MatrixOperator(mat)


def save_operator_csv(op, path):
    mat = op.as_array()
    rows, cols = mat.shape
    with open(path, "w") as fh:
        fh.write(f"{rows},{cols}\n")
        np.savetxt(fh, mat, delimiter=",")
