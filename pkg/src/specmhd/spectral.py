"""Band-limited fields on the periodic box [0, L)^n.

A scalar field is held through its Fourier coefficients,

    f(x) = sum_k fhat_k exp(2 pi i k.x / L),

with integer wavevectors k stored in FFT order.  The continuum frequency is
xi = k / L, so a derivative d/dx_j multiplies by 2 pi i xi_j while the
fractional operators Lambda^s and J^s multiply by |xi|^s and
(1 + |xi|^2)^(s/2).  Norms carry the L^n Parseval factor so that spectral and
physical-space L^2 norms coincide.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, PreconditionError, SingularMultiplierError

TWO_PI = 2.0 * np.pi


def fft_workers() -> int:
    """Worker count for FFTs, capped by the SPECMHD_THREADS environment variable."""
    try:
        return max(1, int(os.environ.get("SPECMHD_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class SpectralGrid:
    """Periodic box of side ``L`` resolved by ``N`` modes per axis.

    ``K_R`` is the Galerkin cutoff in integer wavenumbers; the band-limited
    space V_R holds fields whose coefficients vanish for |k| > K_R.
    """

    n_dim: int
    L: float
    N: int
    K_R: int

    def __post_init__(self):
        if self.n_dim not in (2, 3):
            raise PreconditionError(f"n_dim must be 2 or 3, got {self.n_dim}")
        if not self.L > 0:
            raise PreconditionError(f"period L must be positive, got {self.L}")
        if self.N <= 0 or self.N % 2:
            raise PreconditionError(f"N must be a positive even integer, got {self.N}")
        if self.K_R < 0:
            raise PreconditionError(f"K_R must be non-negative, got {self.K_R}")
        if self.K_R > self.N // 2 - 1:
            raise PreconditionError(f"K_R={self.K_R} exceeds N/2 - 1 = {self.N // 2 - 1}")
        if self.N < 3 * self.K_R + 1:
            raise PreconditionError(
                f"N={self.N} violates the dealiasing bound N >= 3*K_R + 1 = {3 * self.K_R + 1}"
            )

    @classmethod
    def for_cutoff(cls, n_dim: int, K_R: int, L: float = 1.0) -> "SpectralGrid":
        """Smallest dealiased grid for the cutoff ``K_R``."""
        N = 3 * K_R + 1
        N += N % 2
        return cls(n_dim, L, max(N, 2 * K_R + 2), K_R)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n_dim

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wavenumbers along one axis in FFT order."""
        return np.rint(np.fft.fftfreq(self.N) * self.N).astype(np.int64)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer wavevectors, shape (n_dim, N, ..., N)."""
        return np.stack(np.meshgrid(*([self.modes] * self.n_dim), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Continuum frequencies k / L."""
        return self.k / self.L

    @cached_property
    def k2(self) -> np.ndarray:
        """Squared integer wavenumber magnitude |k|^2 (exact integers)."""
        return np.sum(self.k**2, axis=0)

    @cached_property
    def xi2(self) -> np.ndarray:
        return self.k2 / self.L**2

    def ball(self, K: float | None = None) -> np.ndarray:
        """Boolean mask of |k| <= K (default: the Galerkin cutoff)."""
        K = self.K_R if K is None else K
        return self.k2 <= K * K

    @cached_property
    def cutoff_mask(self) -> np.ndarray:
        return self.ball(self.K_R)

    @cached_property
    def neg_index(self) -> tuple[np.ndarray, ...]:
        """Index arrays mapping each mode k to the position of -k."""
        idx = (-np.arange(self.N)) % self.N
        return np.ix_(*([idx] * self.n_dim))

    def coordinates(self) -> np.ndarray:
        """Physical grid points, shape (n_dim, N, ..., N)."""
        x = np.arange(self.N) * (self.L / self.N)
        return np.stack(np.meshgrid(*([x] * self.n_dim), indexing="ij"))

    @property
    def volume(self) -> float:
        return self.L**self.n_dim

    def with_resolution(self, N: int, K_R: int | None = None) -> "SpectralGrid":
        return SpectralGrid(self.n_dim, self.L, N, self.K_R if K_R is None else K_R)

    def product_grid(self) -> "SpectralGrid":
        """Grid wide enough to hold every mode of a product of two V_R fields."""
        N = max(self.N, 4 * self.K_R + 2)
        return self.with_resolution(N)


class _Field:
    _rank = 0

    def __init__(self, grid: SpectralGrid, coeffs, hermitian: bool = False):
        coeffs = np.asarray(coeffs, dtype=complex)
        expected = (grid.n_dim,) * self._rank + grid.shape
        if coeffs.shape != expected:
            raise PreconditionError(f"coefficient shape {coeffs.shape} != {expected}")
        self.grid = grid
        self.coeffs = coeffs
        self.hermitian = bool(hermitian)

    def _like(self, coeffs, hermitian=None):
        return type(self)(self.grid, coeffs, self.hermitian if hermitian is None else hermitian)

    def _check(self, other):
        if not isinstance(other, _Field) or other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        if other._rank != self._rank:
            raise PreconditionError("cannot combine scalar and vector fields")

    def __add__(self, other):
        self._check(other)
        return self._like(self.coeffs + other.coeffs, self.hermitian and other.hermitian)

    def __sub__(self, other):
        self._check(other)
        return self._like(self.coeffs - other.coeffs, self.hermitian and other.hermitian)

    def __neg__(self):
        return self._like(-self.coeffs)

    def __mul__(self, scalar):
        if isinstance(scalar, _Field):
            return NotImplemented
        hermitian = self.hermitian and np.isrealobj(scalar)
        return self._like(self.coeffs * scalar, hermitian)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / scalar)

    def max_outside(self, K: float | None = None) -> float:
        """Largest coefficient magnitude outside the ball |k| <= K."""
        outside = ~self.grid.ball(K)
        c = np.abs(self.coeffs)[..., outside]
        return float(c.max()) if c.size else 0.0

    def in_band(self, K: float | None = None) -> bool:
        """True if every coefficient outside |k| <= K is exactly zero."""
        return self.max_outside(K) == 0.0

    def hermitian_defect(self) -> float:
        c = self.coeffs
        mirrored = np.conj(c[(...,) + self.grid.neg_index])
        return float(np.max(np.abs(c - mirrored))) if c.size else 0.0


class SpectralField(_Field):
    """Scalar field given by its Fourier coefficients on a ``SpectralGrid``."""

    _rank = 0

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, complex), hermitian=True)

    @classmethod
    def single_mode(cls, grid, k, amplitude=1.0) -> "SpectralField":
        c = np.zeros(grid.shape, complex)
        c[tuple(int(ki) % grid.N for ki in k)] = amplitude
        return cls(grid, c, hermitian=False)


class VectorField(_Field):
    """``n_dim`` scalar components sharing one grid, stored as one array."""

    _rank = 1

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "VectorField":
        return cls(grid, np.zeros((grid.n_dim,) + grid.shape, complex), hermitian=True)

    @classmethod
    def from_components(cls, components) -> "VectorField":
        components = list(components)
        grid = components[0].grid
        for c in components:
            if c.grid != grid:
                raise GridMismatchError("vector components live on different grids")
        if len(components) != grid.n_dim:
            raise PreconditionError(f"expected {grid.n_dim} components, got {len(components)}")
        return cls(grid, np.stack([c.coeffs for c in components]),
                   all(c.hermitian for c in components))

    @property
    def components(self) -> tuple[SpectralField, ...]:
        return tuple(SpectralField(self.grid, c, self.hermitian) for c in self.coeffs)

    def __getitem__(self, i) -> SpectralField:
        return SpectralField(self.grid, self.coeffs[i], self.hermitian)


# ---------------------------------------------------------------- transforms

def synthesize(coeffs: np.ndarray, grid: SpectralGrid, M: int | None = None) -> np.ndarray:
    """Physical values of trailing-axis coefficients on an M-point grid (M >= N).

    Modes are placed by integer wavevector, so ``M > N`` zero-pads the spectrum.
    """
    M = grid.N if M is None else M
    n = grid.n_dim
    axes = tuple(range(-n, 0))
    if M != grid.N:
        padded = np.zeros(coeffs.shape[:-n] + (M,) * n, complex)
        idx = grid.modes % M
        padded[(...,) + np.ix_(*([idx] * n))] = coeffs
        coeffs = padded
    return sfft.ifftn(coeffs, axes=axes, norm="forward", workers=fft_workers())


def analyze(values: np.ndarray, grid: SpectralGrid, M: int | None = None) -> np.ndarray:
    """Coefficients on ``grid`` of M-point physical samples (inverse of ``synthesize``)."""
    M = grid.N if M is None else M
    n = grid.n_dim
    axes = tuple(range(-n, 0))
    c = sfft.fftn(values, axes=axes, norm="forward", workers=fft_workers())
    if M != grid.N:
        idx = grid.modes % M
        c = c[(...,) + np.ix_(*([idx] * n))]
    return c


def synthesize_real(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Real samples of Hermitian trailing-axis coefficients via a half-spectrum FFT."""
    n = grid.n_dim
    half = coeffs[..., : grid.N // 2 + 1]
    return sfft.irfftn(half, s=grid.shape, axes=tuple(range(-n, 0)), norm="forward",
                       workers=fft_workers())


def analyze_real(values: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Full Hermitian coefficient array of real samples on the N-point mesh."""
    n = grid.n_dim
    N = grid.N
    h = N // 2 + 1
    half = sfft.rfftn(values, axes=tuple(range(-n, 0)), norm="forward", workers=fft_workers())
    out = np.empty(values.shape[:-1] + (N,), complex)
    out[..., :h] = half
    neg = (-np.arange(N)) % N
    cols = N - np.arange(h, N)
    out[..., h:] = np.conj(half[(...,) + np.ix_(*([neg] * (n - 1) + [cols]))])
    return out


def to_physical(f: _Field, M: int | None = None) -> np.ndarray:
    """Physical-space samples; real-valued for Hermitian fields."""
    values = synthesize(f.coeffs, f.grid, M)
    return values.real.copy() if f.hermitian else values


def from_physical(grid: SpectralGrid, values) -> _Field:
    """Scalar or vector field from samples on the grid's N-point mesh."""
    values = np.asarray(values)
    hermitian = np.isrealobj(values)
    coeffs = analyze(values.astype(complex), grid)
    if hermitian:
        coeffs = hermitian_symmetrize(coeffs, grid)
    if values.ndim == grid.n_dim:
        return SpectralField(grid, coeffs, hermitian)
    return VectorField(grid, coeffs, hermitian)


def hermitian_symmetrize(coeffs: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    """Project trailing-axis coefficients onto fhat(-k) = conj(fhat(k))."""
    mirrored = np.conj(coeffs[(...,) + grid.neg_index])
    return 0.5 * (coeffs + mirrored)


def embed(f: _Field, grid: SpectralGrid) -> _Field:
    """Move a field onto another grid of the same box, matching modes by wavevector.

    Modes absent from the target grid must be zero; truncate first otherwise.
    """
    if grid.n_dim != f.grid.n_dim or grid.L != f.grid.L:
        raise GridMismatchError("grids are not nested: dimension or period differ")
    src = f.grid
    n = src.n_dim
    lead = f.coeffs.shape[:-n]
    out = np.zeros(lead + grid.shape, complex)
    half = grid.N // 2
    keep = (src.modes >= -half) & (src.modes < half)
    kept_idx = np.nonzero(keep)[0]
    dropped = np.ones(src.shape, bool)
    dropped[np.ix_(*([keep] * n))] = False
    if np.any(f.coeffs[..., dropped] != 0):
        raise PreconditionError("field has modes that the target grid cannot represent")
    sub = f.coeffs[(...,) + np.ix_(*([kept_idx] * n))]
    tgt_idx = src.modes[kept_idx] % grid.N
    out[(...,) + np.ix_(*([tgt_idx] * n))] = sub
    return type(f)(grid, out, f.hermitian)


# ---------------------------------------------------------------- differential operators

def partial(f: SpectralField, axis: int) -> SpectralField:
    """d/dx_axis, multiplier 2 pi i k_axis / L."""
    return f._like(TWO_PI * 1j * f.grid.xi[axis] * f.coeffs)


def gradient(f: SpectralField) -> VectorField:
    if not isinstance(f, SpectralField):
        raise PreconditionError("gradient expects a scalar field")
    return VectorField(f.grid, TWO_PI * 1j * f.grid.xi * f.coeffs, f.hermitian)


def divergence(v: VectorField) -> SpectralField:
    if not isinstance(v, VectorField):
        raise PreconditionError("divergence expects a vector field")
    return SpectralField(v.grid, np.sum(TWO_PI * 1j * v.grid.xi * v.coeffs, axis=0), v.hermitian)


def laplacian(f: _Field) -> _Field:
    """Multiplier -4 pi^2 |k/L|^2, applied componentwise to vector fields."""
    return f._like(-(TWO_PI**2) * f.grid.xi2 * f.coeffs)


def perp_gradient(f: SpectralField) -> VectorField:
    """(d2 f, -d1 f) in two dimensions; always divergence-free."""
    if f.grid.n_dim != 2:
        raise PreconditionError("perp_gradient is defined for n_dim = 2 only")
    xi = f.grid.xi
    c = TWO_PI * 1j * np.stack([xi[1] * f.coeffs, -xi[0] * f.coeffs])
    return VectorField(f.grid, c, f.hermitian)


def differential_op(f, kind: str, axis: int | None = None):
    """Dispatch by name: partial, gradient, divergence, laplacian, perp_gradient."""
    if kind == "partial":
        if axis is None:
            raise PreconditionError("partial requires an axis")
        return partial(f, axis)
    ops = {"gradient": gradient, "divergence": divergence,
           "laplacian": laplacian, "perp_gradient": perp_gradient}
    if kind not in ops:
        raise PreconditionError(f"unknown differential operator {kind!r}")
    return ops[kind](f)


# ---------------------------------------------------------------- fractional operators

def _mean_is_zero(f: _Field) -> bool:
    return not np.any(f.coeffs[(...,) + (0,) * f.grid.n_dim])


def lambda_symbol(grid: SpectralGrid, s: float, xi2=None) -> np.ndarray:
    """|xi|^s, with the zero mode mapped to 1 for s = 0 and 0 for s > 0."""
    xi2 = grid.xi2 if xi2 is None else xi2
    if s == 0:
        return np.ones_like(xi2, dtype=float)
    with np.errstate(divide="ignore"):
        sym = np.power(xi2, 0.5 * s, where=xi2 > 0, out=np.zeros_like(xi2, dtype=float))
    return sym


def bessel_symbol(grid: SpectralGrid, s: float, xi2=None) -> np.ndarray:
    xi2 = grid.xi2 if xi2 is None else xi2
    return np.power(1.0 + xi2, 0.5 * s)


def fractional_op(f: _Field, kind: str, s: float) -> _Field:
    """Apply Lambda^s (kind='lambda') or J^s (kind='bessel') coefficientwise."""
    if kind in ("lambda", "homogeneous"):
        if s < 0 and not _mean_is_zero(f):
            raise SingularMultiplierError("Lambda^s with s < 0 is singular on a nonzero mean")
        return f._like(lambda_symbol(f.grid, s) * f.coeffs)
    if kind in ("bessel", "J"):
        return f._like(bessel_symbol(f.grid, s) * f.coeffs)
    raise PreconditionError(f"unknown fractional operator {kind!r}")


# ---------------------------------------------------------------- projections

def fourier_truncate(f: _Field, K: float) -> _Field:
    """Zero every mode with |k| > K (Euclidean ball).

    K >= N/2 reaches the grid's own band limit and is the identity.
    """
    if K < 0:
        raise PreconditionError("truncation radius must be non-negative")
    if K >= f.grid.N // 2:
        return f._like(f.coeffs.copy())
    return f._like(np.where(f.grid.ball(K), f.coeffs, 0.0))


def cutoff_bound(f: _Field, K: float, s: float, m: float) -> tuple[float, float]:
    """(||S_K f - f||_Hs, (K/L)^-m ||f||_H(s+m)); the first never exceeds the second."""
    if K < 1 or s < 0 or m < 0:
        raise PreconditionError("cutoff bound needs K >= 1, s >= 0, m >= 0")
    lhs = sobolev_norm(fourier_truncate(f, K) - f, s)
    rhs = (K / f.grid.L) ** (-m) * sobolev_norm(f, s + m)
    return lhs, rhs


def leray_project(v: VectorField) -> VectorField:
    """Remove the gradient part: vhat - k (k.vhat) / |k|^2; the mean is untouched."""
    if not isinstance(v, VectorField):
        raise PreconditionError("leray_project expects a vector field")
    return v._like(leray_coeffs(v.coeffs, v.grid))


def leray_coeffs(c: np.ndarray, grid: SpectralGrid) -> np.ndarray:
    k = grid.k
    k2 = grid.k2
    kdotc = np.sum(k * c, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(k2 > 0, kdotc / np.where(k2 > 0, k2, 1), 0.0)
    return c - k * factor


def divergence_residual(v: VectorField) -> float:
    """max_k |k.vhat_k| normalised by max_k |k||vhat_k| (0 for a constant field)."""
    k = v.grid.k
    num = np.abs(np.sum(k * v.coeffs, axis=0)).max()
    den = (np.sqrt(v.grid.k2) * np.sqrt(np.sum(np.abs(v.coeffs) ** 2, axis=0))).max()
    if den == 0:
        return 0.0
    return float(num / den)


# ---------------------------------------------------------------- norms

def _weight(grid: SpectralGrid, s: float, homogeneous: bool) -> np.ndarray:
    if homogeneous:
        return lambda_symbol(grid, 2.0 * s)
    return np.power(1.0 + grid.xi2, s)


def _energy_density(f: _Field) -> np.ndarray:
    c = np.abs(f.coeffs) ** 2
    return c if f._rank == 0 else np.sum(c, axis=0)


def sobolev_norm(f: _Field, s: float = 0.0, homogeneous: bool = False) -> float:
    """(L^n sum_k w(k)^s |fhat_k|^2)^(1/2), w = 1 + |xi|^2 or |xi|^2.

    For vector fields the component norms are combined in quadrature.
    """
    if homogeneous and s < 0 and not _mean_is_zero(f):
        raise SingularMultiplierError("homogeneous norm with s < 0 needs zero mean")
    total = np.sum(_weight(f.grid, s, homogeneous) * _energy_density(f))
    return float(np.sqrt(f.grid.volume * total))


def grad_sobolev_norm(f: _Field, s: float = 0.0, homogeneous: bool = False) -> float:
    """Sobolev norm of the full gradient (tensor for vector fields)."""
    w = _weight(f.grid, s, homogeneous) * (TWO_PI**2) * f.grid.xi2
    total = np.sum(w * _energy_density(f))
    return float(np.sqrt(f.grid.volume * total))


def inner_product(f: _Field, g: _Field):
    """L^2 pairing L^n sum_k fhat_k conj(ghat_k); real when both fields are real."""
    f._check(g)
    val = f.grid.volume * np.sum(f.coeffs * np.conj(g.coeffs))
    if f.hermitian and g.hermitian:
        return float(val.real)
    return complex(val)


# ---------------------------------------------------------------- random data

def random_scalar(grid: SpectralGrid, rng: np.random.Generator, gamma: float = 2.0,
                  K: float | None = None, hermitian: bool = True) -> SpectralField:
    """Complex Gaussian coefficients with amplitude |k|^-gamma inside |k| <= K, zero mean."""
    K = grid.K_R if K is None else K
    shape = grid.shape
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    mask = grid.ball(K) & (grid.k2 > 0)
    amp = np.zeros(shape)
    amp[mask] = np.power(grid.k2[mask].astype(float), -0.5 * gamma)
    c = z * amp
    if hermitian:
        c = hermitian_symmetrize(c, grid)
    return SpectralField(grid, c, hermitian)


def random_solenoidal(grid: SpectralGrid, rng: np.random.Generator, gamma: float = 2.0,
                      K: float | None = None, rms: float | None = None,
                      hermitian: bool = True) -> VectorField:
    """Leray-projected random vector field; optionally rescaled to a target RMS value."""
    comps = [random_scalar(grid, rng, gamma, K, hermitian).coeffs for _ in range(grid.n_dim)]
    v = leray_project(VectorField(grid, np.stack(comps), hermitian))
    if rms is not None:
        norm = sobolev_norm(v) / np.sqrt(grid.volume)
        if norm > 0:
            v = v * (rms / norm)
    return v
