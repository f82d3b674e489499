"""Log-Nash-welfare allocation.

Maximizes ``sum_b log(U_b + eps) + sum_s log(U_s + eps)`` over pairwise
quantities ``x >= 0`` with buyer row caps and seller column caps. With
midpoint prices each side of a pair keeps half the surplus, so
``U_b = sum_j (g_ij / 2) x_ij`` and ``U_s = sum_i (g_ij / 2) x_ij``.

``solve_allocation`` runs a primal-dual Newton (sequential quadratic) ascent
that keeps iterates strictly inside the capacity polytope. ``project`` is the
exact Euclidean projection onto that polytope (Dykstra's alternating scheme
between the row-capped and column-capped sets, each projected by a sorting
threshold); it backs the projected-gradient optimality check.
``oracle_allocation`` is a brute-force lattice search used only for testing.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

# pair counts up to this use the exact dense Newton solve; larger ones go low-rank
DENSE_LIMIT = 300
log = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-6


class NoFeasiblePairs(ValueError):
    pass


class ProblemTooLarge(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, solution: "AllocationSolution"):
        super().__init__(
            f"allocation did not converge in {solution.iterations} iterations "
            f"(KKT residual {solution.residual:.3e})"
        )
        self.solution = solution


@dataclass(frozen=True)
class AllocationProblem:
    surplus: np.ndarray  # (n_buyers, n_sellers), bid - ask
    buyer_caps: np.ndarray
    seller_caps: np.ndarray
    epsilon: float = DEFAULT_EPSILON
    feasible: np.ndarray = field(default=None)

    def __post_init__(self):
        g = np.atleast_2d(np.asarray(self.surplus, dtype=float))
        r = np.asarray(self.buyer_caps, dtype=float).reshape(-1)
        c = np.asarray(self.seller_caps, dtype=float).reshape(-1)
        if g.shape != (r.size, c.size):
            raise ValueError(f"surplus shape {g.shape} does not match caps ({r.size}, {c.size})")
        if np.any(r < 0) or np.any(c < 0):
            raise ValueError("capacities must be nonnegative")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        mask = g >= 0 if self.feasible is None else np.asarray(self.feasible, dtype=bool)
        if np.any(g[mask] < 0):
            raise ValueError("feasible pairs must have nonnegative surplus")
        object.__setattr__(self, "surplus", np.where(mask, g, 0.0))
        object.__setattr__(self, "buyer_caps", r)
        object.__setattr__(self, "seller_caps", c)
        object.__setattr__(self, "feasible", mask)

    @property
    def shape(self) -> tuple[int, int]:
        return self.surplus.shape

    @property
    def half_surplus(self) -> np.ndarray:
        return 0.5 * self.surplus


@dataclass
class AllocationSolution:
    x: np.ndarray
    objective: float
    residual: float
    iterations: int
    converged: bool


def utilities(prob: AllocationProblem, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    hx = prob.half_surplus * x
    return hx.sum(axis=1), hx.sum(axis=0)


def objective(prob: AllocationProblem, x: np.ndarray) -> float:
    """Log Nash welfare, including the constant log(eps) of agents without feasible pairs."""
    ub, us = utilities(prob, x)
    return float(np.log(ub + prob.epsilon).sum() + np.log(us + prob.epsilon).sum())


def gradient(prob: AllocationProblem, x: np.ndarray) -> np.ndarray:
    ub, us = utilities(prob, x)
    w = 1.0 / (ub + prob.epsilon)[:, None] + 1.0 / (us + prob.epsilon)[None, :]
    return prob.half_surplus * w * prob.feasible


def constraint_residual(prob: AllocationProblem, x: np.ndarray) -> float:
    """Largest violation of nonnegativity, masking or a capacity."""
    viol = [
        -x.min(initial=0.0),
        np.abs(x[~prob.feasible]).max(initial=0.0),
        (x.sum(axis=1) - prob.buyer_caps).max(initial=0.0),
        (x.sum(axis=0) - prob.seller_caps).max(initial=0.0),
    ]
    return float(max(0.0, *viol))


def _project_rows(y: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """Project each row of ``y`` onto {z >= 0, sum(z) <= cap}."""
    z = np.maximum(y, 0.0)
    over = z.sum(axis=1) > caps
    if not over.any():
        return z
    yo = y[over]
    co = caps[over]
    u = -np.sort(-yo, axis=1)
    css = np.cumsum(u, axis=1) - co[:, None]
    k = np.arange(1, u.shape[1] + 1)
    support = u - css / k > 0
    # support is a prefix; count gives its length (>= 1 whenever cap > 0)
    n_sup = support.sum(axis=1)
    theta = np.where(n_sup > 0, css[np.arange(len(co)), np.maximum(n_sup, 1) - 1] / np.maximum(n_sup, 1), np.inf)
    z[over] = np.maximum(yo - theta[:, None], 0.0)
    return z


def project(
    y: np.ndarray,
    feasible: np.ndarray,
    row_caps: np.ndarray,
    col_caps: np.ndarray,
    tol: float = 1e-13,
    max_iter: int = 2000,
) -> np.ndarray:
    """Euclidean projection onto {x >= 0, x = 0 off ``feasible``, row/col sums <= caps}."""
    y = np.where(feasible, y, 0.0)
    x = y
    p = np.zeros_like(y)
    q = np.zeros_like(y)
    for _ in range(max_iter):
        a = _project_rows(x + p, row_caps)
        p = x + p - a
        b = _project_rows((a + q).T, col_caps).T
        q = a + q - b
        done = np.abs(b - x).max() <= tol and np.abs(a - b).max() <= tol
        x = b
        if done:
            break
    return _polish(np.where(feasible, x, 0.0), row_caps, col_caps)


def _polish(x: np.ndarray, row_caps: np.ndarray, col_caps: np.ndarray) -> np.ndarray:
    # shrink residual overshoot from the inexact projection; never increases any sum
    x = np.maximum(x, 0.0)
    rs = x.sum(axis=1)
    x = x * np.where(rs > row_caps, row_caps / np.where(rs > 0, rs, 1.0), 1.0)[:, None]
    cs = x.sum(axis=0)
    x = x * np.where(cs > col_caps, col_caps / np.where(cs > 0, cs, 1.0), 1.0)[None, :]
    return x


def warm_start(prob: AllocationProblem) -> np.ndarray:
    """Each buyer spreads its cap over sellers in proportion to pair surplus."""
    w = prob.surplus * prob.feasible
    rs = w.sum(axis=1, keepdims=True)
    x = np.where(rs > 0, w / np.where(rs > 0, rs, 1.0), 0.0) * prob.buyer_caps[:, None]
    return _polish(x, prob.buyer_caps, prob.seller_caps)


def projected_gradient_residual(prob: AllocationProblem, x: np.ndarray) -> float:
    """Norm of P(x + grad) - x, zero exactly at a constrained maximizer."""
    live = prob.feasible & (prob.buyer_caps[:, None] > 0) & (prob.seller_caps[None, :] > 0)
    g = gradient(prob, x)
    return float(np.linalg.norm(project(x + g, live, prob.buyer_caps, prob.seller_caps, max_iter=20000) - x))


def solve_allocation(
    prob: AllocationProblem,
    tol: float = 1e-6,
    max_iter: int = 500,
    raise_on_failure: bool = False,
) -> AllocationSolution:
    """Primal-dual Newton ascent on the log Nash welfare.

    Each iteration maximizes the local quadratic model of the barrier-augmented
    objective (x > 0, caps - sums > 0) and takes a fraction-to-boundary step.
    Iterates stay strictly feasible; ``residual`` is the largest of the dual
    residual and the complementarity gap.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if prob.surplus.size == 0 or not prob.feasible.any():
        raise NoFeasiblePairs("allocation problem has no feasible pairs")

    r, c = prob.buyer_caps, prob.seller_caps
    nb, ns = prob.shape
    # pairs with zero surplus or zero capacity cannot change the objective
    live = prob.feasible & (prob.surplus > 0) & (r[:, None] > 0) & (c[None, :] > 0)
    x_full = np.zeros(prob.shape)
    if not live.any():
        return AllocationSolution(x_full, objective(prob, x_full), 0.0, 0, True)

    bi, sj = np.nonzero(live)
    rows = np.unique(bi)
    cols = np.unique(sj)
    n = bi.size
    hk = prob.half_surplus[bi, sj]
    eps = prob.epsilon

    # agent incidence: utility of buyer/seller k is (hk * x) summed over its pairs
    agents_b = np.searchsorted(rows, bi)
    agents_s = len(rows) + np.searchsorted(cols, sj)
    n_agents = len(rows) + len(cols)
    # capacity constraints A x <= caps, one per participating buyer and seller
    A = np.zeros((n_agents, n))
    A[agents_b, np.arange(n)] = 1.0
    A[agents_s, np.arange(n)] = 1.0
    # utilities are u = (A * hk) x, so both curvature terms have rank n_agents
    G = np.vstack([A * hk, A])
    caps = np.concatenate([r[rows], c[cols]])

    x = 0.5 * warm_start(AllocationProblem(prob.surplus, r, c, eps, live))[bi, sj]
    s = caps - A @ x
    mu = 1.0 / max(n, 1)
    w = mu / x
    z = mu / s
    m_tot = n + n_agents

    def gradient_at(x):
        u = (A * hk) @ x + eps
        return hk * (A.T @ (1.0 / u)), u

    def newton_solver(u, s, z, x, w):
        """Solve (D + G' E G) d = b with D = w/x and E = diag(1/u^2, z/s).

        Woodbury reduces the work to an n_agents-sized factorization; a few
        refinement sweeps against the exact product recover the accuracy the
        reduction loses once D spans many orders of magnitude.
        """
        d = w / x
        e = np.concatenate([1.0 / u**2, z / s])
        K_mul = lambda v: d * v + G.T @ (e * (G @ v))  # noqa: E731
        if n <= max(DENSE_LIMIT, 2 * n_agents):
            K = np.diag(d) + (G.T * e) @ G
            try:
                fac = cho_factor(K)
                return lambda b: cho_solve(fac, b)
            except np.linalg.LinAlgError:
                return lambda b: np.linalg.lstsq(K, b, rcond=None)[0]
        dinv = 1.0 / d
        GD = G * dinv
        S = np.diag(1.0 / e) + GD @ G.T
        # symmetric diagonal scaling; the raw diagonal spans ~20 decades near the optimum
        lam = 1.0 / np.sqrt(np.diag(S))
        Sc = S * lam[:, None] * lam[None, :]
        try:
            fac = cho_factor(Sc, check_finite=False)
            inner = lambda v: lam * cho_solve(fac, lam * v, check_finite=False)  # noqa: E731
        except np.linalg.LinAlgError:
            inner = lambda v: lam * np.linalg.lstsq(Sc, lam * v, rcond=None)[0]  # noqa: E731
        precond = lambda v: dinv * v - GD.T @ inner(GD @ v)  # noqa: E731

        def solve(b):
            # conjugate gradients on K, preconditioned by the Woodbury inverse
            sol = precond(b)
            res = b - K_mul(sol)
            stop = 1e-14 * (1.0 + np.abs(b).max())
            zr = precond(res)
            p = zr
            rz = res @ zr
            for _ in range(25):
                if not np.isfinite(rz) or np.abs(res).max() <= stop or rz <= 0:
                    break
                Kp = K_mul(p)
                alpha = rz / (p @ Kp)
                sol = sol + alpha * p
                res = res - alpha * Kp
                zr = precond(res)
                rz_new = res @ zr
                p = zr + (rz_new / rz) * p
                rz = rz_new
            return sol

        return solve

    residual = np.inf
    best_res, best_x = np.inf, x
    last_gain = 0
    it = 0
    converged = False
    while it < max_iter:
        g, u = gradient_at(x)
        rd = g - A.T @ z + w
        gap = (x @ w + s @ z) / m_tot
        # dual residual is relative: gradients scale like 1/utility
        dual = np.abs(rd).max() / (1.0 + np.abs(g).max())
        residual = max(dual, gap)
        if residual < best_res:
            best_res, best_x, last_gain = residual, x, it
        if dual <= 1e-3 * tol and gap <= 1e-6 * tol:
            converged = True
            break
        # past this point iterates only trade rounding error back and forth
        if gap < 1e-18 or it - last_gain > 20:
            break
        it += 1
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            solve = newton_solver(u, s, z, x, w)

            # Mehrotra predictor-corrector: affine step sets the centering weight
            dx = solve(g)
            ds = -A @ dx
            dw = -w - (w / x) * dx
            dz = -z - (z / s) * ds
            a_p = _max_step(x, dx, s, ds, frac=1.0)
            a_d = _max_step(w, dw, z, dz, frac=1.0)
            mu_aff = ((x + a_p * dx) @ (w + a_d * dw) + (s + a_p * ds) @ (z + a_d * dz)) / m_tot
            # hold the barrier back while the dual residual lags the gap
            sig_mu = gap * max((mu_aff / gap) ** 3, min(0.9, np.abs(rd).max() / gap))
            tx = sig_mu - dx * dw
            ts = sig_mu - ds * dz
            dx = solve(g + tx / x - A.T @ (ts / s))
            ds = -A @ dx
            dw = tx / x - w - (w / x) * dx
            dz = ts / s - z - (z / s) * ds
        if not all(np.all(np.isfinite(v)) for v in (dx, ds, dw, dz)):
            break
        # one step length for both sides: the dual residual depends on x through the gradient
        a = min(_max_step(x, dx, s, ds), _max_step(w, dw, z, dz))
        x = x + a * dx
        s = s + a * ds
        w = w + a * dw
        z = z + a * dz

    if not converged:
        x, residual = best_x, best_res
        converged = bool(best_res <= tol)
    x_full[bi, sj] = x
    x_full = _polish(x_full, r, c)
    sol = AllocationSolution(x_full, objective(prob, x_full), float(residual), it, converged)
    if not converged:
        if raise_on_failure:
            raise NonConvergence(sol)
        log.debug("allocation stopped at residual %.3e after %d iterations", residual, it)
    return sol


def _max_step(a: np.ndarray, da: np.ndarray, b: np.ndarray, db: np.ndarray, frac: float = 0.995) -> float:
    """Largest step in (0, 1] keeping both vectors strictly positive."""
    step = 1.0
    for v, dv in ((a, da), (b, db)):
        neg = dv < 0
        if neg.any():
            step = min(step, frac * float(np.min(-v[neg] / dv[neg])))
    return step


def _row_lattice(cap: float, col_caps: np.ndarray, mask_row: np.ndarray, grid_step: float) -> np.ndarray:
    """All lattice rows with entries <= column cap, summing to <= cap."""
    n = len(col_caps)
    ranges = []
    for j in range(n):
        top = min(cap, col_caps[j]) if mask_row[j] else 0.0
        ranges.append(np.arange(int(np.floor(top / grid_step + 1e-9)) + 1) * grid_step)
    pts = np.array(list(itertools.product(*ranges)), dtype=float).reshape(-1, n)
    return pts[pts.sum(axis=1) <= cap + 1e-9]


def oracle_allocation(prob: AllocationProblem, grid_step: float) -> np.ndarray:
    """Exhaustive search over the feasible lattice of pitch ``grid_step``."""
    nb, ns = prob.shape
    if nb > 3 or ns > 3:
        raise ProblemTooLarge(f"oracle handles at most 3x3, got {nb}x{ns}")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    if nb == 0 or ns == 0 or not prob.feasible.any():
        raise NoFeasiblePairs("allocation problem has no feasible pairs")

    h = prob.half_surplus
    eps = prob.epsilon
    rows = [_row_lattice(prob.buyer_caps[i], prob.seller_caps, prob.feasible[i], grid_step) for i in range(nb)]
    first, rest = rows[0], rows[1:]

    # combine every row but the first into one table of candidate blocks
    if rest:
        tail = rest[0][:, None, :]
        for extra in rest[1:]:
            tail = np.concatenate(
                [np.repeat(tail, len(extra), axis=0), np.tile(extra[:, None, :], (len(tail), 1, 1))], axis=1
            )
        tail_colsum = tail.sum(axis=1)
        tail_ub = np.log((tail * h[1:][None]).sum(axis=2) + eps).sum(axis=1)
        tail_us = (tail * h[1:][None]).sum(axis=1)
    else:
        tail = np.zeros((1, 0, ns))
        tail_colsum = np.zeros((1, ns))
        tail_ub = np.zeros(1)
        tail_us = np.zeros((1, ns))

    best_val = -np.inf
    best_x = None
    for row in first:
        colsum = tail_colsum + row
        ok = np.all(colsum <= prob.seller_caps + 1e-9, axis=1)
        if not ok.any():
            continue
        ub0 = np.log(float(h[0] @ row) + eps)
        us = tail_us[ok] + h[0] * row
        vals = ub0 + tail_ub[ok] + np.log(us + eps).sum(axis=1)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = vals[k]
            best_x = np.vstack([row[None, :], tail[ok][k]])
    return best_x
