"""Davidson iteration for the lowest eigenpairs of a symmetric operator.

Single-vector subspace expansion: apply H to the newest basis vector only
(previous images are cached), solve the projected problem with an in-repo
cyclic Jacobi scheme, form Ritz pairs and residuals from the stored images
(no extra applications), precondition with damped diagonal denominators,
and thick-restart by rotating both V and W with the Ritz coefficients when
the subspace hits its cap -- again without re-applying H.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numba import njit

__all__ = [
    "DavidsonOptions",
    "DavidsonStats",
    "DavidsonResult",
    "davidson_solve",
    "orthogonalize",
    "precondition",
    "projected_eigensolve",
    "jacobi_eigh",
]


@dataclass
class DavidsonOptions:
    n_roots: int = 1
    tol_residual: float = 1e-8
    max_iters: int = 200
    max_subspace: int = 32
    restart_keep: int = 4
    precond_delta: float = 1e-6
    reorthogonalize: bool = True

    def __post_init__(self):
        if not 1 <= self.n_roots <= self.restart_keep <= self.max_subspace:
            raise ValueError(
                "need 1 <= n_roots <= restart_keep <= max_subspace, got "
                f"{self.n_roots}/{self.restart_keep}/{self.max_subspace}"
            )
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.precond_delta <= 0:
            raise ValueError("precond_delta must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class DavidsonStats:
    iterations: int = 0
    converged: bool = False
    n_applies: int = 0
    restarts: int = 0
    breakdowns: int = 0
    theta_history: list = field(default_factory=list)  # lowest n_roots per iter
    residual_history: list = field(default_factory=list)
    theta_deltas: list = field(default_factory=list)  # |theta_0 change| per iter
    ortho_history: list = field(default_factory=list)  # ||V V^T - I||_F per iter
    apply_seconds: list = field(default_factory=list)
    restart_iters: list = field(default_factory=list)


@dataclass
class DavidsonResult:
    energies: np.ndarray
    vectors: np.ndarray  # (n_roots, N) rows of unit norm
    residual_norms: np.ndarray
    stats: DavidsonStats

    @property
    def converged(self) -> bool:
        return self.stats.converged


# -- small dense symmetric eigensolver (cyclic Jacobi) -------------------------


@njit(cache=True, nogil=True)
def _jacobi_kernel(a, v, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off += 2.0 * a[p, q] * a[p, q]
        if np.sqrt(off) <= tol:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                a[p, p] -= t * apq
                a[q, q] += t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[p, k] = a[k, p]
                        a[k, q] = s * akp + c * akq
                        a[q, k] = a[k, q]
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
    return max_sweeps


def jacobi_eigh(mat: np.ndarray, max_sweeps: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Full spectrum of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps until the off-diagonal Frobenius norm falls below 1e-14 times the
    Frobenius norm of the input.  Returns eigenvalues ascending and the
    matching orthonormal eigenvector columns.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {mat.shape}")
    if not np.isfinite(mat).all():
        raise ValueError("matrix contains non-finite entries")
    n = mat.shape[0]
    a = np.array((mat + mat.T) / 2.0, dtype=np.float64)
    v = np.eye(n)
    tol = 1e-14 * np.linalg.norm(a)
    sweeps = _jacobi_kernel(a, v, tol, max_sweeps)
    if sweeps >= max_sweeps:
        raise RuntimeError(f"Jacobi sweep limit {max_sweeps} reached without convergence")
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def projected_eigensolve(t_mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spectral decomposition of the projected matrix T_k (symmetrized)."""
    return jacobi_eigh(t_mat)


# -- building blocks ------------------------------------------------------------


def precondition(r: np.ndarray, diag: np.ndarray, theta: float, delta: float) -> np.ndarray:
    """t_i = r_i / (sign(d_i - theta) * max(|d_i - theta|, delta)); sign(0) = +1."""
    d = diag - theta
    sign = np.where(d >= 0.0, 1.0, -1.0)
    return r / (sign * np.maximum(np.abs(d), delta))


def orthogonalize(
    t: np.ndarray, vset: Sequence[np.ndarray], reorthogonalize: bool = True
) -> Optional[np.ndarray]:
    """Modified Gram-Schmidt of t against an orthonormal set.

    Returns the normalized remainder, or None (rejection) when the input is
    zero or the remainder norm falls below 1e-12 times the input norm.
    """
    v = np.array(t, dtype=np.float64)
    norm0 = np.linalg.norm(v)
    if norm0 == 0.0:
        return None
    passes = 2 if reorthogonalize else 1
    for _ in range(passes):
        for basis_vec in vset:
            v -= (basis_vec @ v) * basis_vec
    norm = np.linalg.norm(v)
    if norm < 1e-12 * norm0:
        return None
    return v / norm


# -- the driver ------------------------------------------------------------------


def davidson_solve(
    apply_h: Callable[[np.ndarray], np.ndarray],
    diag: np.ndarray,
    x0: Optional[np.ndarray] = None,
    opts: Optional[DavidsonOptions] = None,
) -> DavidsonResult:
    """Lowest ``opts.n_roots`` eigenpairs of the operator behind ``apply_h``.

    ``diag`` is the operator diagonal (preconditioner input and default
    start-vector heuristic).  Residuals are formed from the cached images
    W = H V, never by extra applications.  Non-convergence within
    ``max_iters`` returns the best available pairs with
    ``stats.converged = False``.
    """
    opts = DavidsonOptions() if opts is None else opts
    diag = np.asarray(diag, dtype=np.float64)
    n = diag.shape[0]
    if n < 1:
        raise ValueError("empty problem")
    if n < opts.n_roots:
        raise ValueError(f"cannot extract {opts.n_roots} roots from dimension {n}")

    m = opts.n_roots
    k_max = min(opts.max_subspace, n)
    keep = min(opts.restart_keep, k_max)
    stats = DavidsonStats()
    rng = np.random.default_rng(0x5BD1A6)

    if x0 is None:
        v0 = np.zeros(n)
        v0[int(np.argmin(diag))] = 1.0
    else:
        v0 = np.asarray(x0, dtype=np.float64).copy()
        norm = np.linalg.norm(v0)
        if norm == 0.0:
            raise ValueError("x0 must be nonzero")
        v0 /= norm

    vlist = [v0]
    wlist: list[np.ndarray] = []
    t_mat = np.zeros((k_max, k_max))
    theta = np.zeros(m)
    ritz_u = np.tile(v0, (m, 1))
    res_norms = np.full(m, np.inf)
    prev_theta0 = None

    for iteration in range(1, opts.max_iters + 1):
        stats.iterations = iteration

        # image of the newest direction; all older images are cached
        tic = time.perf_counter()
        w_new = apply_h(vlist[-1])
        stats.apply_seconds.append(time.perf_counter() - tic)
        stats.n_applies += 1
        wlist.append(w_new)

        k = len(vlist)
        for i in range(k):
            t_mat[i, k - 1] = t_mat[k - 1, i] = vlist[i] @ w_new

        evals, evecs = projected_eigensolve(t_mat[:k, :k])
        varr = np.vstack(vlist)
        warr = np.vstack(wlist)
        theta = evals[:m]
        y_m = evecs[:, :m]
        ritz_u = y_m.T @ varr
        resid = y_m.T @ warr - theta[:, None] * ritz_u
        res_norms = np.linalg.norm(resid, axis=1)

        gram = varr @ varr.T
        stats.ortho_history.append(
            float(np.linalg.norm(gram - np.eye(k)))
        )
        stats.theta_history.append(theta.copy())
        stats.residual_history.append(res_norms.copy())
        stats.theta_deltas.append(
            abs(theta[0] - prev_theta0) if prev_theta0 is not None else np.inf
        )
        prev_theta0 = theta[0]

        if bool(np.all(res_norms <= opts.tol_residual)):
            stats.converged = True
            break
        if iteration == opts.max_iters:
            break

        target = int(np.argmax(res_norms > opts.tol_residual))
        t_vec = precondition(resid[target], diag, theta[target], opts.precond_delta)

        if k == k_max:
            # thick restart: rotate V and W into the leading Ritz directions
            y_keep = evecs[:, :keep]
            vlist = list(y_keep.T @ varr)
            wlist = list(y_keep.T @ warr)
            t_mat[:, :] = 0.0
            t_mat[:keep, :keep] = np.diag(evals[:keep])
            stats.restarts += 1
            stats.restart_iters.append(iteration)
            k = keep

        v_next = orthogonalize(t_vec, vlist, opts.reorthogonalize)
        attempts = 0
        while v_next is None and attempts < 3:
            stats.breakdowns += 1
            v_next = orthogonalize(rng.standard_normal(n), vlist, opts.reorthogonalize)
            attempts += 1
        if v_next is None:
            break  # subspace cannot grow (spans the full space numerically)
        vlist.append(v_next)

    return DavidsonResult(
        energies=theta.copy(),
        vectors=ritz_u.copy(),
        residual_norms=res_norms.copy(),
        stats=stats,
    )
