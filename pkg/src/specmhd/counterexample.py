"""Failure of the commutator estimate at s = n/2 = 1 in two dimensions.

The fields u = grad^perp phi, B = grad^perp psi have Fourier profiles supported
in two narrow sectors (around pi/4 for phi, 3 pi/4 for psi) with radial decay
g(r) = 1 / (r (log r)^alpha), r > e.  For 1/2 < alpha < 3/4 the norms
||grad u||_H1 and ||B||_H1 are finite while the transform of
((d_k u).grad) B_1 is not square integrable.

Everything here lives in continuum Fourier space.  Integrals are evaluated on
log-polar meshes: Gauss-Legendre in the angle and composite Gauss-Legendre in
log r, with the radial integration interval cut exactly at every support edge
so the integrand is smooth on each panel.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError

PI = math.pi
E = math.e
SQRT_HALF = math.sqrt(0.5)
CENTER_PHI = PI / 4
CENTER_PSI = 3 * PI / 4
DEFAULT_P_LIST = tuple(math.exp(w) for w in (3, 5, 10, 20, 40))


# ---------------------------------------------------------------- parameters and meshes

@dataclass(frozen=True)
class Quadrature:
    """Mesh resolution.

    nodes_per_decade: radial nodes per factor 10 in r (Gauss panels of ``order`` nodes)
    n_theta:          angular Gauss nodes across the 2 delta sector of phi-hat
    xi_panel:         width in log|xi| of the outer (xi-domain) radial panels
    xi_order:         Gauss nodes per outer radial panel
    n_theta_xi:       angular Gauss nodes across the delta-wide xi sector X
    """

    nodes_per_decade: int = 24
    order: int = 6
    n_theta: int = 64
    xi_panel: float = 0.5
    xi_order: int = 4
    n_theta_xi: int = 8

    def refined(self, factor: int = 2) -> "Quadrature":
        return Quadrature(self.nodes_per_decade * factor, self.order, self.n_theta * factor,
                          self.xi_panel / factor, self.xi_order, self.n_theta_xi * factor)

    @property
    def panel_width(self) -> float:
        """Panel width in log r."""
        return self.order * math.log(10.0) / self.nodes_per_decade


@dataclass(frozen=True)
class CounterexampleParams:
    alpha: float = 0.6
    delta: float = 0.1
    P_max: float = math.exp(41.0)
    k_index: int = 1
    quadrature: Quadrature = field(default_factory=Quadrature)

    def __post_init__(self):
        if not self.alpha > 0.5:
            raise PreconditionError("alpha must exceed 1/2 for finite H^1 norms")
        if not 0 < self.delta < SQRT_HALF:
            raise PreconditionError("delta must lie in (0, 1/sqrt(2))")
        if not self.P_max > E:
            raise PreconditionError("P_max must exceed e")
        if self.k_index not in (1, 2):
            raise PreconditionError("k_index must be 1 or 2")

    @property
    def K(self) -> float:
        return math.sin(self.delta / 2)

    @property
    def failing(self) -> bool:
        """True in the divergent regime 1/2 < alpha < 3/4."""
        return self.alpha < 0.75


def _gauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _composite(a, b, width, order):
    """Composite Gauss-Legendre nodes/weights on [a, b] with panels no wider than ``width``."""
    if b <= a:
        return np.empty(0), np.empty(0)
    n = max(1, math.ceil((b - a) / width - 1e-12))
    edges = np.linspace(a, b, n + 1)
    x, w = _gauss(order)
    h = np.diff(edges)[:, None]
    return (edges[:-1, None] + h * x).ravel(), (h * w).ravel()


@dataclass
class LogPolarGrid:
    """Tensor mesh over the sector-annulus r0 < r < r1, theta0 < theta < theta1.

    Weights carry the area element r dr dtheta = r^2 d(log r) dtheta.
    """

    r: np.ndarray
    theta: np.ndarray
    weights: np.ndarray

    @classmethod
    def sector_annulus(cls, r0, r1, theta0, theta1, nodes_per_decade=24, n_theta=64,
                       rule="gauss", order=6):
        if not (0 < r0 < r1 and theta0 < theta1):
            raise PreconditionError("need 0 < r0 < r1 and theta0 < theta1")
        a, b = math.log(r0), math.log(r1)
        if rule == "gauss":
            width = order * math.log(10.0) / nodes_per_decade
            s, ws = _composite(a, b, width, order)
            xt, wt = _gauss(n_theta)
        elif rule == "trapezoid":
            n = max(2, math.ceil((b - a) / math.log(10.0) * nodes_per_decade) + 1)
            s = np.linspace(a, b, n)
            ws = np.full(n, (b - a) / (n - 1))
            ws[[0, -1]] *= 0.5
            # midpoint nodes in the angle keep both sector edges resolved
            xt = (np.arange(n_theta) + 0.5) / n_theta
            wt = np.full(n_theta, 1.0 / n_theta)
        else:
            raise PreconditionError(f"unknown rule {rule!r}")
        r = np.exp(s)
        theta = theta0 + (theta1 - theta0) * xt
        weights = np.outer(ws * r**2, wt * (theta1 - theta0))
        return cls(r, theta, weights)

    @property
    def points(self) -> np.ndarray:
        """Cartesian nodes, shape (n_r, n_theta, 2)."""
        R, T = np.meshgrid(self.r, self.theta, indexing="ij")
        return np.stack([R * np.cos(T), R * np.sin(T)], axis=-1)

    def integrate(self, values) -> float:
        return float(np.sum(self.weights * values))

    @property
    def area(self) -> float:
        return float(self.weights.sum())


# ---------------------------------------------------------------- lemmas

def m_delta(delta) -> float:
    """(sqrt(2)/2 - delta)^2 (1 - 4 delta / pi), positive on (0, 1/sqrt(2))."""
    d = np.asarray(delta, dtype=float)
    if np.any(d <= 0) or np.any(d >= SQRT_HALF):
        raise PreconditionError("delta must lie in (0, 1/sqrt(2))")
    val = (SQRT_HALF - d) ** 2 * (1.0 - 4.0 * d / PI)
    return float(val) if val.ndim == 0 else val


def _arg(v):
    v = np.asarray(v, dtype=float)
    return np.arctan2(v[..., 1], v[..., 0])


def _perp(v):
    """zeta^perp = (-zeta_2, zeta_1)."""
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def _angle_gap(v, center):
    return np.abs(np.angle(np.exp(1j * (_arg(v) - center))))


def sector_product(zeta, eta, k_index=1):
    """(zeta_k/|zeta|)(eta_2/|eta|)(zeta^perp.eta)/(|zeta||eta|); 1/2 at the sector centres."""
    zeta = np.asarray(zeta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    nz = np.linalg.norm(zeta, axis=-1)
    ne = np.linalg.norm(eta, axis=-1)
    zk = zeta[..., k_index - 1]
    return (zk / nz) * (eta[..., 1] / ne) * np.sum(_perp(zeta) * eta, axis=-1) / (nz * ne)


def lemma_a1_check(zeta, eta, delta, k_index=1):
    """Evaluate the sector product and whether it dominates m_delta(delta).

    Vectorised over leading axes.  Inputs outside the open sectors
    |arg zeta - pi/4| < delta, |arg eta - 3 pi/4| < delta raise.
    """
    zeta = np.asarray(zeta, dtype=float)
    eta = np.asarray(eta, dtype=float)
    M = m_delta(delta)
    if np.any(_angle_gap(zeta, CENTER_PHI) >= delta) or np.any(_angle_gap(eta, CENTER_PSI) >= delta):
        raise PreconditionError("zeta or eta lies outside its sector")
    if k_index not in (1, 2):
        raise PreconditionError("k_index must be 1 or 2")
    lhs = sector_product(zeta, eta, k_index)
    holds = lhs >= M
    if np.ndim(lhs) == 0:
        return float(lhs), bool(holds)
    return lhs, holds


def lemma_a2_check(xi, zeta, delta):
    """arg(xi - zeta) lies in [3 pi/4 - delta, 3 pi/4 + delta] for xi in Xi, zeta in Upsilon_xi.

    Vectorised; returns a bool or a boolean array.
    """
    xi = np.asarray(xi, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    tol = 1e-12
    if np.any(_angle_gap(xi, CENTER_PSI) > delta / 2 + tol):
        raise PreconditionError("xi lies outside the sector Xi")
    nz = np.linalg.norm(zeta, axis=-1)
    if np.any(nz >= np.linalg.norm(xi, axis=-1) * math.sin(delta / 2)):
        raise PreconditionError("|zeta| must be below |xi| sin(delta/2)")
    nonzero = nz > 0
    if np.any(nonzero & (_angle_gap(zeta, CENTER_PHI) > delta + tol)):
        raise PreconditionError("zeta lies outside the sector around pi/4")
    ok = _angle_gap(xi - zeta, CENTER_PSI) <= delta + tol
    return bool(ok) if np.ndim(ok) == 0 else ok


def comparability_check(xi) -> bool:
    """|xi| / (1 + |xi|^2)^(1/2) >= 1/sqrt(2) at every node with |xi| >= 1."""
    r = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
    r = r[r >= 1]
    return bool(np.all(r / np.sqrt(1 + r**2) >= SQRT_HALF * (1 - 1e-15)))


# ---------------------------------------------------------------- profiles and norms

def radial_g(r, alpha, P_max=math.inf):
    """1 / (r (log r)^alpha) on e < r < P_max, zero elsewhere."""
    r = np.asarray(r, dtype=float)
    inside = (r > E) & (r < P_max)
    safe = np.where(inside, r, 2 * E)
    out = np.where(inside, 1.0 / (safe * np.log(safe) ** alpha), 0.0)
    return float(out) if out.ndim == 0 else out


def _sector_indicator(v, center, delta):
    return _angle_gap(v, center) <= delta


@dataclass(frozen=True)
class Profiles:
    params: CounterexampleParams

    def phi_hat(self, zeta):
        p = self.params
        zeta = np.asarray(zeta, dtype=float)
        r = np.linalg.norm(zeta, axis=-1)
        g = radial_g(r, p.alpha, p.P_max)
        h = _sector_indicator(zeta, CENTER_PHI, p.delta)
        rs = np.where(r > 0, r, 1.0)
        return np.where(h, g / (rs**2 * np.sqrt(1 + rs**2)), 0.0)

    def psi_hat(self, eta):
        p = self.params
        eta = np.asarray(eta, dtype=float)
        r = np.linalg.norm(eta, axis=-1)
        g = radial_g(r, p.alpha, p.P_max)
        h = _sector_indicator(eta, CENTER_PSI, p.delta)
        rs = np.where(r > 0, r, 1.0)
        return np.where(h, g / (rs * np.sqrt(1 + rs**2)), 0.0)


def build_profiles(params: CounterexampleParams):
    """(phi_hat, psi_hat) as pointwise evaluators on R^2 (last axis = components)."""
    prof = Profiles(params)
    return prof.phi_hat, prof.psi_hat


def norms_H1_analytic(params: CounterexampleParams) -> float:
    """2 delta [1 - (log P)^(1 - 2 alpha)] / (2 alpha - 1); the P -> inf limit is 2 delta/(2 alpha - 1)."""
    a, d = params.alpha, params.delta
    tail = 0.0 if math.isinf(params.P_max) else math.log(params.P_max) ** (1 - 2 * a)
    return 2 * d * (1 - tail) / (2 * a - 1)


def norms_H1(params: CounterexampleParams):
    """(||grad u||_H1^2, ||B||_H1^2) by quadrature of the built profiles.

    The integrands are (1 + |z|^2)|z|^4 phi_hat^2 and (1 + |z|^2)|z|^2 psi_hat^2
    on the log-polar mesh over e < |z| < P_max.  Compare with
    ``norms_H1_analytic``; the P_max -> inf value is ``norms_H1_limit``.
    """
    if math.isinf(params.P_max):
        raise PreconditionError("quadrature needs a finite P_max; use norms_H1_limit")
    phi, psi = build_profiles(params)
    q = params.quadrature
    d = params.delta
    out = []
    for prof, center, power in ((phi, CENTER_PHI, 4), (psi, CENTER_PSI, 2)):
        grid = LogPolarGrid.sector_annulus(E, params.P_max, center - d, center + d,
                                           q.nodes_per_decade, q.n_theta, order=q.order)
        z = grid.points
        r = np.sqrt(np.sum(z**2, axis=-1))
        # scale before squaring: phi_hat ~ r^-4 underflows long before r^8 overflows
        scaled = prof(z) * r ** (power // 2) * np.sqrt(1 + r**2)
        out.append(grid.integrate(scaled**2))
    return tuple(out)


def norms_H1_limit(params: CounterexampleParams) -> float:
    """P -> inf value 2 delta / (2 alpha - 1), finite iff alpha > 1/2."""
    return 2 * params.delta / (2 * params.alpha - 1)


# ---------------------------------------------------------------- the transform

def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def _ray_intervals(xi, omega, P, delta):
    """Exact r-intervals on the rays zeta = r omega where e < r < P and eta = xi - zeta
    lies in the psi sector with e < |eta| < P.  Returns (lo1, hi1, lo2, hi2)."""
    x = xi[:, None, :]
    w = omega[None, :, :]
    lo = np.full(x.shape[0:1] + w.shape[1:2], E)
    hi = np.full_like(lo, P)
    for edge, sign in ((CENTER_PSI - delta, 1.0), (CENTER_PSI + delta, -1.0)):
        d = np.array([math.cos(edge), math.sin(edge)])
        # sign * cross(d, eta) >= 0 with eta = xi - r omega
        cx = sign * _cross(np.broadcast_to(d, x.shape), x)
        cw = sign * _cross(np.broadcast_to(d, w.shape), w)
        with np.errstate(divide="ignore", invalid="ignore"):
            bound = cx / cw
        upper = cw > 0
        lower = cw < 0
        hi = np.where(upper, np.minimum(hi, bound), hi)
        lo = np.where(lower, np.maximum(lo, bound), lo)
        hi = np.where((cw == 0) & (cx < 0), -np.inf, hi)
    beta = np.sum(x * w, axis=-1)
    xi2 = np.sum(x * x, axis=-1)
    if math.isfinite(P):
        disc = beta**2 - xi2 + P * P
        root = np.sqrt(np.maximum(disc, 0.0))
        lo = np.where(disc > 0, np.maximum(lo, beta - root), lo)
        hi = np.where(disc > 0, np.minimum(hi, beta + root), -np.inf)
    disc_e = beta**2 - xi2 + E * E
    root_e = np.sqrt(np.maximum(disc_e, 0.0))
    cut = disc_e > 0
    hi1 = np.where(cut, np.minimum(hi, beta - root_e), hi)
    lo2 = np.where(cut, np.maximum(lo, beta + root_e), np.inf)
    return lo, hi1, lo2, hi


def _transform_batch(params, xi, track_min=False):
    p = params
    q = p.quadrature
    d = p.delta
    xt, wt = _gauss(q.n_theta)
    theta = CENTER_PHI - d + 2 * d * xt
    wtheta = 2 * d * wt
    omega = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    lo1, hi1, lo2, hi2 = _ray_intervals(xi, omega, p.P_max, d)
    rmax = max(np.max(np.where(hi1 > lo1, hi1, 0.0)), np.max(np.where(hi2 > lo2, hi2, 0.0)))
    m = xi.shape[0]
    total = np.zeros(m)
    min_node = math.inf
    if rmax <= E:
        return total, min_node
    h = q.panel_width
    edges = np.arange(1.0, math.log(rmax) + h, h)
    edges = np.append(edges[edges < math.log(rmax)], math.log(rmax))
    xg, wg = _gauss(q.order)
    alpha, k = p.alpha, p.k_index
    phi_hat, psi_hat = build_profiles(p)
    for lo, hi in ((lo1, hi1), (lo2, hi2)):
        valid = hi > lo
        if not np.any(valid):
            continue
        la = np.log(np.where(valid, np.maximum(lo, E), 1.0))
        lb = np.log(np.where(valid, hi, 1.0))
        # clip every panel to [la, lb]; empty panels get zero length
        a = np.maximum(edges[:-1], la[..., None])
        b = np.minimum(edges[1:], lb[..., None])
        length = np.where(valid[..., None], np.clip(b - a, 0.0, None), 0.0)
        s = a[..., None] + length[..., None] * xg
        wr = length[..., None] * wg
        r = np.exp(s)
        zeta = r[..., None] * omega[None, :, None, None, :]
        eta = xi[:, None, None, None, :] - zeta
        active = wr > 0
        prod = (zeta[..., k - 1] * eta[..., 1] * np.sum(_perp(zeta) * eta, axis=-1))
        f = 16 * PI**4 * prod * phi_hat(zeta) * psi_hat(eta)
        f = np.where(active, f, 0.0)
        contrib = f * wr * r**2 * wtheta[None, :, None, None]
        total += contrib.sum(axis=(1, 2, 3))
        if track_min and np.any(active):
            min_node = min(min_node, float(np.min(np.where(active, f, math.inf))))
    return total, min_node


def commutator_transform(params: CounterexampleParams, xi, batch: int = 8, return_min_node=False):
    """16 pi^4 int zeta_k eta_2 [zeta^perp . eta] phi_hat(zeta) psi_hat(eta) dzeta, eta = xi - zeta.

    ``xi`` has shape (2,) or (m, 2).  The profiles are real, so the value is
    real.  With ``return_min_node`` the smallest integrand value over all
    active quadrature nodes is also returned (it is >= 0 by the sector lemma).
    """
    xi = np.asarray(xi, dtype=float)
    single = xi.ndim == 1
    pts = np.atleast_2d(xi)
    if np.any(np.linalg.norm(pts, axis=-1) == 0):
        raise PreconditionError("xi must be nonzero")
    out = np.empty(len(pts))
    min_node = math.inf
    for i in range(0, len(pts), batch):
        vals, mn = _transform_batch(params, pts[i:i + batch], return_min_node)
        out[i:i + batch] = vals
        min_node = min(min_node, mn)
    value = float(out[0]) if single else out
    return (value, min_node) if return_min_node else value


def lower_bound(params: CounterexampleParams, xi):
    """2 delta c g((1+K)|xi|) [(log K|xi|)^(1-alpha) - 1] with c = 8 pi^4 M_delta.

    Valid on X = {|xi| > e/K, xi in Xi} while (1 + K)|xi| stays below P_max.
    """
    p = params
    K = p.K
    r = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
    c = 8 * PI**4 * m_delta(p.delta)
    with np.errstate(invalid="ignore", divide="ignore"):
        growth = np.where(K * r > E, np.log(np.maximum(K * r, E)) ** (1 - p.alpha) - 1.0, 0.0)
    val = 2 * p.delta * c * radial_g((1 + K) * r, p.alpha) * growth
    return float(val) if np.ndim(val) == 0 else val


def in_X(params: CounterexampleParams, xi):
    xi = np.asarray(xi, dtype=float)
    r = np.linalg.norm(xi, axis=-1)
    return (r > E / params.K) & (_angle_gap(xi, CENTER_PSI) <= params.delta / 2)


# ---------------------------------------------------------------- divergence scan

@dataclass
class ScanResult:
    alpha: float
    delta: float
    P: list
    norm_sq: list
    fitted_beta: float
    onset_radius: float
    grad_u_H1_sq: float
    B_H1_sq: float
    min_node: float = math.inf
    comparable: bool = True

    @property
    def growth_ratio(self) -> float:
        """norm^2 at the last radius over the first positive entry."""
        pos = [v for v in self.norm_sq if v > 0]
        return pos[-1] / pos[0] if len(pos) >= 2 else math.nan

    @property
    def classification(self) -> str:
        return "plateau" if self.growth_ratio < 1.2 else "growing"

    @property
    def monotone(self) -> bool:
        return all(b >= a for a, b in zip(self.norm_sq, self.norm_sq[1:]))

    def rows(self):
        for P, v in zip(self.P, self.norm_sq):
            yield {"alpha": self.alpha, "delta": self.delta, "P": P,
                   "grad_u_H1_sq": self.grad_u_H1_sq, "B_H1_sq": self.B_H1_sq,
                   "norm_sq_truncated": v, "fitted_beta": self.fitted_beta}

    def to_csv(self, path):
        cols = ["alpha", "delta", "P", "grad_u_H1_sq", "B_H1_sq", "norm_sq_truncated", "fitted_beta"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, cols, lineterminator="\n")
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(float(v)) for k, v in row.items()})


def fit_exponent(P_list, values) -> float:
    """Least-squares slope of log(values) against log(log P), positive entries only."""
    P = np.asarray(P_list, dtype=float)
    v = np.asarray(values, dtype=float)
    keep = v > 0
    if keep.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(np.log(P[keep])), np.log(v[keep]), 1)[0])


def divergence_scan(params: CounterexampleParams, P_list=DEFAULT_P_LIST) -> ScanResult:
    """||F[((d_k u).grad) B_1]||^2 over X intersected with |xi| < P, for each P.

    The xi-domain is meshed once with radial panel edges at every log P, so all
    truncated norms come from one set of transform evaluations.
    """
    P_list = [float(P) for P in P_list]
    if len(P_list) < 3:
        raise PreconditionError("divergence_scan needs at least three radii")
    if any(b <= a for a, b in zip(P_list, P_list[1:])):
        raise PreconditionError("radii must be increasing")
    if P_list[-1] > params.P_max:
        raise PreconditionError("radii must not exceed the support truncation P_max")
    q = params.quadrature
    d = params.delta
    w0 = math.log(E / params.K)
    breaks = [w0] + [math.log(P) for P in P_list if math.log(P) > w0]
    s_parts, w_parts, seg = [], [], []
    for j, (a, b) in enumerate(zip(breaks, breaks[1:])):
        s, w = _composite(a, b, q.xi_panel, q.xi_order)
        s_parts.append(s)
        w_parts.append(w)
        seg.append(np.full(len(s), j))
    s = np.concatenate(s_parts)
    ws = np.concatenate(w_parts)
    seg = np.concatenate(seg)
    xt, wt = _gauss(q.n_theta_xi)
    ang = CENTER_PSI - d / 2 + d * xt
    wa = d * wt
    rho = np.exp(s)
    pts = (rho[:, None, None] * np.stack([np.cos(ang), np.sin(ang)], axis=-1)[None]).reshape(-1, 2)
    vals, min_node = commutator_transform(params, pts, return_min_node=True)
    vals = vals.reshape(len(rho), len(ang))
    density = (vals**2 * wa[None, :]).sum(axis=1) * ws * rho**2
    per_seg = np.bincount(seg, weights=density, minlength=len(breaks) - 1)
    cum = np.concatenate([[0.0], np.cumsum(per_seg)])
    norm_sq = []
    for P in P_list:
        lp = math.log(P)
        norm_sq.append(float(cum[breaks.index(lp)]) if lp > w0 else 0.0)
    # onset: first node where w^(1-alpha) - 1 >= w^(1-alpha)/2 with w = log K|xi|
    wK = np.log(params.K * rho)
    ok = (wK > 0) & (wK ** (1 - params.alpha) >= 2.0)
    onset = float(rho[np.argmax(ok)]) if np.any(ok) else math.inf
    gu, gb = norms_H1(params)
    return ScanResult(params.alpha, d, P_list, norm_sq, fit_exponent(P_list, norm_sq), onset,
                      gu, gb, min_node, comparability_check(pts))
