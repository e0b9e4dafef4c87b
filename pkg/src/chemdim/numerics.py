"""Shared numerical kernels: rank reduction, NNLS and semi-NMF."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .core import NumericalError, ValidationError

log = logging.getLogger(__name__)

_EPS = np.finfo(np.float64).eps
# semi-NMF stops once the residual norm is below 1e-10 of the data norm
EXACT_FIT_RTOL2 = 1e-20


# ---------------------------------------------------------------- SVD

def thin_svd(z):
    """Thin SVD ``z = U diag(s) Vt`` of the uncentered matrix."""
    z = np.asarray(z, dtype=np.float64)
    try:
        return np.linalg.svd(z, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from None


def svd_reduce(z, d: int, svd=None) -> np.ndarray:
    """Scores ``U[:, :d] * s[:d]`` of the uncentered matrix ``z``.

    No mean-centering is applied; the simplex volume computations add their
    own constant row. ``svd`` may carry a precomputed ``thin_svd(z)`` so a
    caller reducing the same matrix to several sizes decomposes it once.
    """
    z = np.asarray(z, dtype=np.float64)
    n, p = z.shape
    if not 1 <= d <= min(n, p):
        raise ValidationError(f"d must lie in [1, {min(n, p)}], got {d}")
    u, s, _ = thin_svd(z) if svd is None else svd
    return u[:, :d] * s[:d]


# ---------------------------------------------------------------- NNLS

def _check_ls_inputs(e, y):
    e = np.asarray(e, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if e.ndim != 2 or e.shape[1] < 1:
        raise ValidationError("E must be a (p, k) matrix with k >= 1")
    if y.shape[0] != e.shape[0]:
        raise ValidationError(f"E has {e.shape[0]} rows, right-hand side has {y.shape[0]}")
    if not (np.all(np.isfinite(e)) and np.all(np.isfinite(y))):
        raise ValidationError("non-finite input to NNLS")
    return e, y


def _grad_tol(e_norm, y_max, x, p, k):
    return 10 * _EPS * max(p, k) * e_norm * (y_max + e_norm * np.abs(x).max(initial=0.0))


def nnls(e, y, max_iter: int | None = None) -> np.ndarray:
    """Lawson-Hanson active set solution of ``min ||E x - y||`` s.t. ``x >= 0``."""
    e, y = _check_ls_inputs(e, y)
    if y.ndim != 1:
        raise ValidationError("y must be a vector")
    p, k = e.shape
    max_iter = 3 * k + 10 if max_iter is None else max_iter
    x = np.zeros(k)
    passive = np.zeros(k, dtype=bool)
    w = e.T @ y
    e_norm = np.linalg.norm(e, 1)
    y_max = np.abs(y).max(initial=0.0)
    it = 0
    while (~passive).any() and w[~passive].max() > _grad_tol(e_norm, y_max, x, p, k):
        j = np.flatnonzero(~passive)[np.argmax(w[~passive])]
        passive[j] = True
        s = np.zeros(k)
        s[passive] = np.linalg.lstsq(e[:, passive], y, rcond=None)[0]
        while s[passive].min() <= 0:
            it += 1
            if it > max_iter:
                log.warning("nnls inner loop hit max_iter=%d", max_iter)
                break
            neg = np.flatnonzero(passive & (s <= 0))
            ratios = x[neg] / (x[neg] - s[neg])
            alpha = ratios.min()
            x = x + alpha * (s - x)
            x[neg[np.argmin(ratios)]] = 0.0
            passive &= x > 0
            x[~passive] = 0.0
            s = np.zeros(k)
            if passive.any():
                s[passive] = np.linalg.lstsq(e[:, passive], y, rcond=None)[0]
        x = s
        w = e.T @ (y - e @ x)
        it += 1
        if it > 10 * max_iter:
            raise NumericalError("nnls failed to converge")
    return x


def _solve_passive(ctc, cta, passive):
    """Solve the unconstrained normal equations on each column's passive set.

    Every column gets the full ``k x k`` system with its active rows and
    columns replaced by the identity, so all columns go through a single
    batched solve and active entries come out exactly zero.
    """
    k, n = cta.shape
    if n == 0:
        return np.zeros((k, n))
    pt = passive.T
    both = pt[:, :, None] & pt[:, None, :]
    a = np.where(both, ctc, 0.0)
    idx = np.arange(k)
    a[:, idx, idx] += ~pt
    rhs = np.where(pt, cta.T, 0.0)
    try:
        np.linalg.cholesky(a)
        sol = np.linalg.solve(a, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        # per column, so a column's result never depends on its batch mates
        sol = np.empty((n, k))
        for j in range(n):
            try:
                np.linalg.cholesky(a[j])
                sol[j] = np.linalg.solve(a[j], rhs[j])
            except np.linalg.LinAlgError:
                sol[j] = np.linalg.lstsq(a[j], rhs[j], rcond=None)[0]
    sol[~pt] = 0.0
    return sol.T


def nnls_batch(e, y, max_iter: int | None = None, init=None) -> np.ndarray:
    """Fast combinatorial NNLS for every column of ``Y``.

    Solves ``min ||E x_j - y_j||`` s.t. ``x_j >= 0`` for all columns at once
    (Van Benthem & Keenan), working on the normal equations. Returns the
    ``(k, n)`` solution matrix.

    ``init`` is an optional nonnegative ``(k, n)`` starting point, e.g. the
    previous iterate of an alternating scheme; its support seeds the passive
    sets. The optimum reached is the same, only the path is shorter.
    """
    e, y = _check_ls_inputs(e, y)
    if y.ndim == 1:
        init = None if init is None else np.asarray(init, dtype=np.float64)[:, None]
        return nnls_batch(e, y[:, None], max_iter, init)[:, 0]
    ctc = e.T @ e
    cta = e.T @ y
    if init is not None:
        init = np.asarray(init, dtype=np.float64)
        if init.shape != cta.shape:
            raise ValidationError(f"init has shape {init.shape}, expected {cta.shape}")
        if np.any(init < 0) or not np.all(np.isfinite(init)):
            raise ValidationError("init must be finite and nonnegative")
    return _fcnnls(ctc, cta, max_iter, init)


def _fcnnls(ctc, cta, max_iter=None, init=None):
    k, n = cta.shape
    max_iter = 3 * k + 10 if max_iter is None else max_iter
    ctc_norm = np.linalg.norm(ctc, 1)
    cta_scale = np.abs(cta).max(axis=0) if n else np.zeros(0)

    if init is not None:
        x = init.copy()
        passive = x > 0
    elif np.linalg.matrix_rank(ctc) == k:
        # unconstrained start, clipped
        x = _solve_passive(ctc, cta, np.ones((k, n), dtype=bool))
        passive = x > 0
        x[~passive] = 0.0
    else:
        x = np.zeros((k, n))
        passive = np.zeros((k, n), dtype=bool)
    d = x.copy()
    free = np.arange(n) if init is not None else np.flatnonzero(~passive.all(axis=0))
    entering = np.full(n, -1)
    blocked = np.zeros((k, n), dtype=bool)
    outer = 0
    while free.size:
        outer += 1
        if outer > 10 * max_iter + 10:
            raise NumericalError("nnls_batch failed to converge")
        x[:, free] = _solve_passive(ctc, cta[:, free], passive[:, free])
        # an entering variable that does not come out positive means its column
        # is numerically dependent on the passive ones: undo the move and block it
        cols = free[entering[free] >= 0]
        ent = entering[cols]
        bad = x[ent, cols] <= 0
        bc, be = cols[bad], ent[bad]
        passive[be, bc] = False
        blocked[be, bc] = True
        x[:, bc] = d[:, bc]
        blocked[:, cols[~bad]] = False
        entering[free] = -1
        infeasible = free[(x[:, free] < 0).any(axis=0)]
        inner = 0
        while infeasible.size:
            inner += 1
            if inner > max_iter:
                log.warning("nnls_batch inner loop hit max_iter=%d", max_iter)
                x[:, infeasible] = np.maximum(x[:, infeasible], 0.0)
                break
            xs, ds = x[:, infeasible], d[:, infeasible]
            neg = passive[:, infeasible] & (xs < 0)
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = np.where(neg, ds / (ds - xs), np.inf)
            rows = np.argmin(alpha, axis=0)
            amin = alpha[rows, np.arange(infeasible.size)]
            d[:, infeasible] = ds - amin * (ds - xs)
            d[rows, infeasible] = 0.0
            passive[rows, infeasible] = False
            x[:, infeasible] = _solve_passive(ctc, cta[:, infeasible], passive[:, infeasible])
            infeasible = infeasible[(x[:, infeasible] < 0).any(axis=0)]
        # optimality: gradient must be non-positive on the active set
        grad = cta[:, free] - ctc @ x[:, free]
        masked = np.where(passive[:, free] | blocked[:, free], -np.inf, grad)
        # roundoff in the gradient scales with the solution magnitude
        tol = 10 * _EPS * k * (ctc_norm * np.abs(x[:, free]).max(axis=0) + cta_scale[free])
        not_done = (masked > tol).any(axis=0)
        free = free[not_done]
        if free.size:
            masked = masked[:, not_done]
            rows = np.argmax(masked, axis=0)
            passive[rows, free] = True
            entering[free] = rows
            d[:, free] = x[:, free]
    x[x < 0] = 0.0
    return x


# ---------------------------------------------------------------- semi-NMF

@dataclass
class SemiNmfModel:
    """Factorization ``X ~ W H`` with unconstrained ``W`` and ``H >= 0``."""

    u: int
    W: np.ndarray
    H: np.ndarray
    objective: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)
    error: str | None = None

    @property
    def reconstruction(self) -> np.ndarray:
        return self.W @ self.H


def _w_update(x, h):
    # W = X H^T (H H^T)^+ ; pinv covers rank-deficient H
    return x @ h.T @ np.linalg.pinv(h @ h.T)


def semi_nmf(x, u: int, seed=0, tol: float = 1e-6, max_iter: int = 200) -> SemiNmfModel:
    """Alternating least squares semi-NMF of a ``(p, m)`` matrix.

    ``H`` starts as ``|N(0, 1)|`` draws from ``seed``. Each iteration solves
    ``W`` by unconstrained least squares and ``H`` column-wise by NNLS, so the
    objective ``0.5 ||X - WH||_F^2`` never increases. A component whose ``H``
    row vanishes is re-seated on the worst-fitted column (see
    ``_revive_dead``). Iteration stops when the relative objective change
    falls below ``tol``, the fit is exact to roundoff, or an update fails to
    lower the objective (then the previous iterate is kept).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("X must be 2-D")
    p, m = x.shape
    if u < 1:
        raise ValidationError("u must be >= 1")
    if u > m:
        raise ValidationError(f"u={u} exceeds the number of columns m={m}")
    rng = np.random.default_rng(seed)
    h = np.abs(rng.standard_normal((u, m)))
    if p > m:
        # W always lies in the column space of X, so iterate on the small
        # triangular factor of X = QR and map W back at the end
        q, rmat = np.linalg.qr(x)
        model = _semi_nmf_loop(rmat, h, u, tol, max_iter)
        model.W = q @ model.W
        return model
    return _semi_nmf_loop(x, h, u, tol, max_iter)


def _revive_dead(x, w, h):
    """Re-seat components whose ``H`` row is all zero, in place.

    A zero row stays zero under the least-squares ``W`` update. Each such
    component instead takes the worst-fitted column of ``X`` as its ``W``
    column with weight one on that column, which zeroes that residual column
    and so strictly lowers the objective.
    """
    dead = np.flatnonzero(~h.any(axis=1))
    if dead.size == 0:
        return
    r = x - w @ h
    rn = np.einsum("ij,ij->j", r, r)
    for d in dead:
        j = int(np.argmax(rn))
        if rn[j] <= 0:
            break
        w[:, d] = r[:, j]
        h[d, j] = 1.0
        rn[j] = 0.0


def _semi_nmf_loop(x, h, u, tol, max_iter):
    w = None
    history = []
    converged = False
    scale = max(float(np.sum(x * x)), np.finfo(float).tiny)
    for it in range(1, max_iter + 1):
        try:
            w_new = _w_update(x, h)
            h_new = nnls_batch(w_new, x, init=h)
            _revive_dead(x, w_new, h_new)
        except (np.linalg.LinAlgError, NumericalError) as exc:
            if w is None:
                raise NumericalError(f"semi-NMF broke down at the first iteration: {exc}") from None
            log.warning("semi-NMF u=%d stopped at iteration %d: %s", u, it, exc)
            return SemiNmfModel(u, w, h, history[-1], it - 1, False, history, str(exc))
        r = x - w_new @ h_new
        obj = 0.5 * float(np.sum(r * r))
        if not np.isfinite(obj):
            if w is None:
                raise NumericalError("semi-NMF produced a non-finite objective")
            return SemiNmfModel(u, w, h, history[-1], it - 1, False, history, "non-finite objective")
        if history and obj > history[-1]:
            # exact steps never ascend, so this is roundoff: keep the better iterate
            converged = True
            break
        w, h = w_new, h_new
        history.append(obj)
        if len(history) > 1:
            prev = history[-2]
            if abs(prev - obj) <= tol * prev or obj <= EXACT_FIT_RTOL2 * scale:
                converged = True
                break
        elif obj <= EXACT_FIT_RTOL2 * scale:
            converged = True
            break
    return SemiNmfModel(u, w, h, history[-1], len(history), converged, history)
