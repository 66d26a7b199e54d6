"""Finite-difference oracle for the obstacle problem max{(L - r)V, g - V} = 0.

The profit and the belief are driven by the same Brownian motion, so the
diffusion matrix of the generator has rank one. In the coordinates
``y = log x`` and ``w = logit(pi) - k y`` with ``k = (mu1 - mu0)/sigma^2`` the
process becomes a one-dimensional diffusion in ``y`` plus a deterministic
drift ``c_w`` in ``w``:

    L = 1/2 sigma^2 d_yy + (mu(pi) - sigma^2/2) d_y + c_w d_w,
    c_w = (mu1 - mu0)(sigma^2 - mu1 - mu0) / (2 sigma^2).

Each line ``w = const`` is then a 1-D obstacle problem (a monotone
tridiagonal scheme, solved by policy iteration), coupled to its neighbour by
an upwind transport term when ``c_w != 0``. The solution is finally read off
on a lattice that is log-spaced in x and uniform in pi.

The plain (x, pi) stencil of the generator is also provided; it is used to
check discrete identities and the complementarity residual on the lattice.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import binary_dilation
from scipy.linalg import solve_banded
from scipy.special import expit, logit

from .boundary import BoundaryCurve, project
from .closed_form import ClosedFormPack, lower_bound_b
from .model import ModelParams, payoff_g, payoff_slope

log = logging.getLogger(__name__)

BELIEF_EPS = 1e-7


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleGrid:
    n_x: int = 1001
    n_pi: int = 101
    left_width: float = 4.0
    right_width: float = 1.0
    line_spacing: float | None = None

    def refined(self) -> "OracleGrid":
        """Halve every spacing."""
        ls = None if self.line_spacing is None else self.line_spacing / 2
        return OracleGrid(2 * self.n_x - 1, 2 * self.n_pi - 1, self.left_width, self.right_width, ls)


@dataclass
class GridSolution:
    x_nodes: np.ndarray
    pi_nodes: np.ndarray
    v: np.ndarray  # shape (n_pi, n_x)
    g: np.ndarray
    stop_mask: np.ndarray
    extracted_boundary: np.ndarray
    eps_contact: float
    params: ModelParams
    diagnostics: dict = field(default_factory=dict)


def _log_grid(pack: ClosedFormPack, grid: OracleGrid) -> np.ndarray:
    c = np.log(pack.xstar0)
    return np.linspace(c - grid.left_width, c + grid.right_width, grid.n_x)


def build_generator_stencil(params: ModelParams, x_nodes: np.ndarray, pi_nodes: np.ndarray) -> sp.csr_matrix:
    """Sparse (L - r) on the (x, pi) lattice, unknowns ordered pi-major.

    Central second differences, upwind first difference in x, central cross
    term. Rows on the x boundary are left empty. At pi = 0 and pi = 1 the
    belief diffusion and the cross coefficient vanish, leaving the GBM
    generator.
    """
    nx, npi = len(x_nodes), len(pi_nodes)
    if nx < 3:
        raise ValueError("need at least 3 x nodes")
    if npi < 11:
        raise ValueError("need at least 11 pi nodes to resolve the cross term")
    x = np.asarray(x_nodes, dtype=float)
    p = np.asarray(pi_nodes, dtype=float)
    dmu = params.mu1 - params.mu0
    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(r)
        cols.append(c)
        vals.append(v)

    idx = lambda j, i: j * nx + i  # noqa: E731
    for j in range(npi):
        pi = p[j]
        edge = j == 0 or j == npi - 1
        for i in range(1, nx - 1):
            row = idx(j, i)
            hm, hp = x[i] - x[i - 1], x[i + 1] - x[i]
            a = 0.5 * params.sigma**2 * x[i] ** 2
            b = (params.mu0 + pi * dmu) * x[i]
            # non-uniform three-point second derivative
            put(row, idx(j, i - 1), 2 * a / (hm * (hm + hp)))
            put(row, idx(j, i + 1), 2 * a / (hp * (hm + hp)))
            diag = -2 * a / (hm * hp) - params.r
            if b >= 0:
                put(row, idx(j, i + 1), b / hp)
                diag -= b / hp
            else:
                put(row, idx(j, i - 1), -b / hm)
                diag += b / hm
            if not edge:
                cross = x[i] * dmu * pi * (1 - pi)
                dp = p[j + 1] - p[j - 1]
                dx = x[i + 1] - x[i - 1]
                cc = cross / (dx * dp)
                put(row, idx(j + 1, i + 1), cc)
                put(row, idx(j - 1, i - 1), cc)
                put(row, idx(j + 1, i - 1), -cc)
                put(row, idx(j - 1, i + 1), -cc)
                q = 0.5 * (dmu / params.sigma) ** 2 * pi**2 * (1 - pi) ** 2
                pm, pp = p[j] - p[j - 1], p[j + 1] - p[j]
                put(row, idx(j - 1, i), 2 * q / (pm * (pm + pp)))
                put(row, idx(j + 1, i), 2 * q / (pp * (pm + pp)))
                diag -= 2 * q / (pm * pp)
            put(row, row, diag)
    n = nx * npi
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _line_coefficients(params: ModelParams, y: np.ndarray, pi: np.ndarray, transport: float):
    """Tridiagonal (lower, diag, upper) of the line operator at interior nodes."""
    h = y[1] - y[0]
    a = 0.5 * params.sigma**2
    m = params.mu0 + pi * (params.mu1 - params.mu0) - a
    lower = a / h**2 - m / (2 * h)
    upper = a / h**2 + m / (2 * h)
    bad = (lower < 0) | (upper < 0)
    if np.any(bad):
        lower = np.where(bad, a / h**2 + np.maximum(-m, 0) / h, lower)
        upper = np.where(bad, a / h**2 + np.maximum(m, 0) / h, upper)
    diag = -(lower + upper) - params.r - transport
    return lower[1:-1], diag[1:-1], upper[1:-1]


@dataclass
class LineResult:
    v: np.ndarray
    stop: np.ndarray
    iterations: int
    residual: float


def solve_line(
    params: ModelParams,
    y: np.ndarray,
    pi: np.ndarray,
    left: float,
    right: float,
    transport: float = 0.0,
    inflow: np.ndarray | None = None,
    stop0: np.ndarray | None = None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> LineResult:
    """Policy iteration for one line of the discrete obstacle problem.

    Interior equation: lower*V[i-1] + diag*V[i] + upper*V[i+1] + transport*inflow[i] = 0
    wherever continuing, V = g wherever stopping. Dirichlet values at both ends.
    """
    g = payoff_g(params, np.exp(y), pi)
    lo, di, up = _line_coefficients(params, y, pi, transport)
    n = len(y) - 2
    src = np.zeros(n) if inflow is None else transport * inflow[1:-1]
    gi = g[1:-1]
    if stop0 is None:
        # Policy iteration shrinks an oversized stopping set by one node per
        # sweep, so start just above the boundary from below: at the lower bound.
        stop = np.exp(y[1:-1]) >= lower_bound_b(ClosedFormPack.build(params), pi[1:-1])
    else:
        stop = np.asarray(stop0[1:-1], dtype=bool).copy()
    ab = np.zeros((3, n))
    for it in range(1, max_iter + 1):
        ab[0, 1:] = np.where(stop[:-1], 0.0, up[:-1])
        ab[1] = np.where(stop, 1.0, di)
        ab[2, :-1] = np.where(stop[1:], 0.0, lo[1:])
        rhs = np.where(stop, gi, -src)
        if not stop[0]:
            rhs[0] -= lo[0] * left
        if not stop[-1]:
            rhs[-1] -= up[-1] * right
        v = solve_banded((1, 1), ab, rhs)
        full = np.concatenate([[left], v, [right]])
        gen = lo * full[:-2] + di * v + up * full[2:] + src
        new_stop = gi - v > gen
        if np.array_equal(new_stop, stop):
            break
        stop = new_stop
    else:
        raise OracleError(f"policy iteration did not settle in {max_iter} iterations")
    cont = ~stop
    res = max(
        float(np.max(np.abs(gen[cont]), initial=0.0)),
        float(np.max(np.abs(v[stop] - gi[stop]), initial=0.0)),
        float(np.max(np.maximum(gi - v, 0.0), initial=0.0)),
        float(np.max(np.maximum(gen, 0.0), initial=0.0)),
    )
    if res > tol * max(1.0, float(np.max(np.abs(g)))):
        raise OracleError(f"complementarity residual {res:.3g} above tolerance")
    return LineResult(full, np.concatenate([[False], stop, [True]]), it, res)


def _line_boundary(y: np.ndarray, v: np.ndarray, g: np.ndarray, stop: np.ndarray) -> float:
    """Free boundary on one line, refined with the square root of V - g.

    V - g touches zero quadratically, so its square root is close to linear
    on the continuation side and can be extrapolated to its root.
    """
    k = int(np.argmax(stop))
    if not stop[k]:
        return np.nan
    if k < 3:
        return float(y[k])
    # the node next to the contact carries the scheme's O(h) contact error,
    # so extrapolate from the two nodes behind it
    d1 = np.sqrt(max(v[k - 2] - g[k - 2], 0.0))
    d2 = np.sqrt(max(v[k - 3] - g[k - 3], 0.0))
    h = y[k] - y[k - 1]
    if d2 <= d1:
        return float(y[k])
    return float(min(y[k - 2] + h * d1 / (d2 - d1), y[k]))


def solve_obstacle(
    params: ModelParams,
    grid: OracleGrid = OracleGrid(),
    tol: float = 1e-9,
    max_sweeps: int = 200,
) -> GridSolution:
    """Solve the variational inequality and sample it on the (x, pi) lattice."""
    pack = ClosedFormPack.build(params)
    y = _log_grid(pack, grid)
    x = np.exp(y)
    h = y[1] - y[0]
    hw = grid.line_spacing or h
    pis = np.linspace(0.0, 1.0, grid.n_pi)
    k = (params.mu1 - params.mu0) / params.sigma**2
    cw = (params.mu1 - params.mu0) * (params.sigma**2 - params.mu1 - params.mu0) / (2 * params.sigma**2)
    if abs(cw) < 1e-14:
        cw = 0.0

    # edge rows: beliefs 0 and 1 are absorbing, so these are 1-D problems
    edges = {}
    for which in (0, 1):
        pi_line = np.full_like(y, float(which))
        right = payoff_g(params, x[-1], float(which))
        edges[which] = solve_line(params, y, pi_line, 0.0, right, tol=tol, max_iter=max_sweeps)

    inner = pis[1:-1]
    w_lo = logit(inner[0]) - k * y[-1] - 2 * hw
    w_hi = logit(inner[-1]) - k * y[0] + 2 * hw
    if cw > 0:
        w_hi = max(w_hi, logit(1 - BELIEF_EPS) - k * y[0])
    elif cw < 0:
        w_lo = min(w_lo, logit(BELIEF_EPS) - k * y[-1])
    n_lines = int(np.ceil((w_hi - w_lo) / hw)) + 1
    ws = w_lo + hw * np.arange(n_lines)

    lines = np.empty((n_lines, len(y)))
    stops = np.empty((n_lines, len(y)), dtype=bool)
    line_b = np.empty(n_lines)
    transport = abs(cw) / hw
    order = range(n_lines - 1, -1, -1) if cw > 0 else range(n_lines)
    prev = None
    sweeps = 0
    worst = 0.0
    for n in order:
        pi_line = expit(ws[n] + k * y)
        g_line = payoff_g(params, x, pi_line)
        if cw == 0:
            inflow = None
        elif prev is None:
            inflow = edges[1 if cw > 0 else 0].v
        else:
            inflow = lines[prev]
        res = solve_line(
            params, y, pi_line, 0.0, float(g_line[-1]), transport if cw else 0.0, inflow,
            stops[prev] if prev is not None else None, tol, max_sweeps,
        )
        lines[n], stops[n] = res.v, res.stop
        line_b[n] = _line_boundary(y, res.v, g_line, res.stop)
        sweeps = max(sweeps, res.iterations)
        worst = max(worst, res.residual)
        prev = n

    # sample the line solutions on the lattice: four-point cubic in w, so that
    # second differences across rows see O(h^4) rather than O(h^2) errors
    v = np.empty((grid.n_pi, len(y)))
    stop_mask = np.empty_like(v, dtype=bool)
    g = payoff_g(params, x[None, :], pis[:, None])
    v[0], v[-1] = edges[0].v, edges[1].v
    stop_mask[0], stop_mask[-1] = edges[0].stop, edges[1].stop
    cols = np.arange(len(y))
    for j in range(1, grid.n_pi - 1):
        pos = (logit(pis[j]) - k * y - w_lo) / hw
        lo = np.clip(np.floor(pos).astype(int), 1, n_lines - 3)
        t = pos - lo
        wts = ((-t * (t - 1) * (t - 2)) / 6, (t + 1) * (t - 1) * (t - 2) / 2,
               -(t + 1) * t * (t - 2) / 2, (t + 1) * t * (t - 1) / 6)
        vj = sum(wk * lines[lo + d, cols] for wk, d in zip(wts, (-1, 0, 1, 2)))
        both = stops[lo, cols] & stops[lo + 1, cols]
        v[j] = np.where(both, g[j], np.maximum(vj, g[j]))
        stop_mask[j] = both
    eps = 1e-6 * pack.xstar0
    stop_mask |= (v - g) < eps
    stop_mask[:, 0] = False

    sol = GridSolution(
        x_nodes=x, pi_nodes=pis, v=v, g=g, stop_mask=stop_mask,
        extracted_boundary=np.full(grid.n_pi, np.nan), eps_contact=eps, params=params,
    )
    sol.diagnostics.update(
        n_lines=n_lines, line_spacing=hw, transport_speed=cw, max_policy_iterations=sweeps,
        complementarity=worst, line_w=ws, line_boundary_logx=line_b,
        line_boundary_pi=expit(ws + k * line_b),
    )
    sol.extracted_boundary = _line_boundaries(sol, edges, y)
    sol.diagnostics["smooth_fit"] = smooth_fit_diagnostic(sol)
    return sol


def _row_boundaries(sol: GridSolution) -> np.ndarray:
    y = np.log(sol.x_nodes)
    out = np.empty(len(sol.pi_nodes))
    for j in range(len(sol.pi_nodes)):
        row = sol.stop_mask[j]
        if not row.any():
            raise OracleError(f"no stopping node at pi={sol.pi_nodes[j]:.3g}; widen the x domain")
        k = int(np.argmax(row))
        if not row[k:].all():
            log.warning("stopping set not up-monotone at pi=%.3g", sol.pi_nodes[j])
        out[j] = np.exp(_line_boundary(y, sol.v[j], sol.g[j], row))
    return out


def _line_boundaries(sol: GridSolution, edges: dict, y: np.ndarray) -> np.ndarray:
    """Boundary at the lattice beliefs from the contact points of the lines.

    Every characteristic line crosses the free boundary once, at a belief
    determined by its own w; interpolating those points in pi avoids the
    staircase that reading the boundary off lattice rows produces.
    """
    d = sol.diagnostics
    pi_b, x_b = d["line_boundary_pi"], np.exp(d["line_boundary_logx"])
    ok = np.isfinite(pi_b) & (pi_b > 0.0) & (pi_b < 1.0)
    ends = []
    for which in (0, 1):
        e = edges[which]
        ends.append(np.exp(_line_boundary(y, e.v, payoff_g(sol.params, sol.x_nodes, float(which)), e.stop)))
    pts_pi = np.concatenate([[0.0], pi_b[ok], [1.0]])
    pts_x = np.concatenate([[ends[0]], x_b[ok], [ends[1]]])
    order = np.argsort(pts_pi, kind="stable")
    return np.interp(sol.pi_nodes, pts_pi[order], pts_x[order])


def row_boundaries(sol: GridSolution) -> np.ndarray:
    """First stopping x per lattice row, refined; coarser than the line-based curve."""
    return _row_boundaries(sol)


def extract_boundary(sol: GridSolution) -> BoundaryCurve:
    """Free boundary at the lattice beliefs, projected into the admissible class."""
    pack = ClosedFormPack.build(sol.params)
    raw = BoundaryCurve(sol.pi_nodes, sol.extracted_boundary)
    return project(raw, pack)


def smooth_fit_diagnostic(sol: GridSolution, pi_range: tuple[float, float] = (0.1, 0.9)) -> dict:
    """One-sided difference quotients of V at the extracted boundary vs those of g.

    The x quotient steps one lattice spacing (in log x) into the continuation
    region; the pi quotient steps one row towards pi = 0. Both mismatches are
    first order in the spacing when V is C^1 across the boundary.
    """
    p = sol.params
    y = np.log(sol.x_nodes)
    h = y[1] - y[0]
    b = sol.extracted_boundary
    dgdpi_coef = 1.0 / (p.r - p.mu1) - 1.0 / (p.r - p.mu0)
    jx, jp = [], []
    for j in range(1, len(sol.pi_nodes) - 1):
        pi = sol.pi_nodes[j]
        if not pi_range[0] <= pi <= pi_range[1]:
            continue
        yb = np.log(b[j])
        xl = np.exp(yb - h)
        v_left = np.interp(yb - h, y, sol.v[j])
        qx = (payoff_g(p, b[j], pi) - v_left) / (b[j] - xl)
        jx.append(abs(qx - float(payoff_slope(p, pi))))
        dpi = pi - sol.pi_nodes[j - 1]
        v_prev = np.interp(yb, y, sol.v[j - 1])
        qp = (payoff_g(p, b[j], pi) - v_prev) / dpi
        jp.append(abs(qp - b[j] * dgdpi_coef))
    jx, jp = np.array(jx), np.array(jp)
    return {
        "x_mismatch": jx,
        "pi_mismatch": jp,
        "max_x": float(jx.max(initial=0.0)),
        "max_pi": float(jp.max(initial=0.0)),
    }


def lattice_complementarity(sol: GridSolution, band: int = 4) -> float:
    """max over interior lattice nodes of |(L-r)V| off D and |V-g| on D.

    Uses the plain (x, pi) stencil as an independent check. V is only C^1
    across the free boundary and the lattice values are interpolated across
    lines with a four-point stencil, so nodes within ``band`` nodes of a
    switch in either direction are skipped.
    """
    A = build_generator_stencil(sol.params, sol.x_nodes, sol.pi_nodes)
    lv = (A @ sol.v.ravel()).reshape(sol.v.shape)
    mask = sol.stop_mask
    switch = np.zeros_like(mask)
    switch[:, 1:] |= mask[:, 1:] != mask[:, :-1]
    switch[1:, :] |= mask[1:, :] != mask[:-1, :]
    near = binary_dilation(switch, structure=np.ones((2 * band + 1, 2 * band + 1), dtype=bool))
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = True
    cont = interior & ~mask & ~near
    stop = interior & mask
    return max(
        float(np.max(np.abs(lv[cont]), initial=0.0)),
        float(np.max(np.abs(sol.v[stop] - sol.g[stop]), initial=0.0)),
    )
