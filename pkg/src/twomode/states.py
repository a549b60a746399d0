"""Truncated Fock-space engine for few-mode quantum light.

Quadrature convention: the field-strength operator of each mode is
E = (a + a^dag)/2, so the vacuum has variance 1/4 and the n-th field
eigenfunction is the Hermite-Gaussian `hermite_psi` with measure dx.
The conjugate (momentum) representation uses i^n * psi_n, i.e. the
Fourier kernel exp(+2ipx)/sqrt(pi); only relative phases matter and this
choice is fixed package-wide.

States are immutable; every operation returns a new `FockState`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridTooNarrow, NormalizationError, TruncationOverflow

__all__ = [
    "FockState",
    "QuadratureField",
    "hermite_psi",
    "hermite_basis",
    "default_grid",
    "coherent_state",
    "product_state",
    "vacuum_state",
    "noon2",
    "apply_rotation",
    "apply_beam_splitter",
    "apply_lo_phase",
    "attach_vacuum_mode",
    "reduced_density",
    "quadrature_density",
    "quadrature_bands",
    "density_from_bands",
    "density_from_rho",
    "joint_wavefunction",
    "momentum_window_projector",
    "field_moments",
]

FIELD = "E"
MOMENTUM = "P"


class FockState:
    """Pure state of one or more bosonic modes on a photon-number truncation.

    `amplitudes` has one axis per mode; axis length = per-mode cutoff + 1.
    The constructor renormalizes exactly and rejects vectors further than
    `atol` from unit norm.
    """

    __slots__ = ("amplitudes",)

    def __init__(self, amplitudes: np.ndarray, atol: float = 1e-6):
        amps = np.ascontiguousarray(amplitudes, dtype=complex)
        norm = math.sqrt(float(np.sum(np.abs(amps) ** 2)))
        if abs(norm - 1.0) > atol:
            raise NormalizationError(
                f"state norm {norm!r} deviates from 1 by more than {atol}"
            )
        amps = amps / norm
        amps.flags.writeable = False
        self.amplitudes = amps

    @property
    def num_modes(self) -> int:
        return self.amplitudes.ndim

    @property
    def cutoffs(self) -> tuple[int, ...]:
        return tuple(d - 1 for d in self.amplitudes.shape)

    @property
    def cutoff(self) -> int:
        """Uniform per-mode cutoff (raises if modes differ)."""
        cuts = set(self.cutoffs)
        if len(cuts) != 1:
            raise ValueError(f"modes carry different cutoffs {self.cutoffs}")
        return cuts.pop()

    def norm(self) -> float:
        return math.sqrt(float(np.sum(np.abs(self.amplitudes) ** 2)))

    def overlap(self, other: "FockState") -> complex:
        if self.amplitudes.shape != other.amplitudes.shape:
            raise ValueError("states live on different truncations")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "FockState") -> float:
        return abs(self.overlap(other)) ** 2

    def __repr__(self) -> str:
        return f"FockState(modes={self.num_modes}, cutoffs={self.cutoffs})"


# ---------------------------------------------------------------------------
# quadrature eigenfunctions
# ---------------------------------------------------------------------------

def hermite_basis(nmax: int, x: np.ndarray) -> np.ndarray:
    """Rows 0..nmax of the orthonormal field eigenfunctions on grid `x`.

    psi_0(x) = (2/pi)^(1/4) exp(-x^2); upward recurrence on the normalized
    functions, stable over the physically populated range well past n = 60:
    psi_{n+1} = (2x psi_n - sqrt(n) psi_{n-1}) / sqrt(n+1).
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1, x.size), dtype=float)
    out[0] = (2.0 / math.pi) ** 0.25 * np.exp(-x * x)
    if nmax >= 1:
        out[1] = 2.0 * x * out[0] / math.sqrt(1.0)
    for n in range(1, nmax):
        out[n + 1] = (2.0 * x * out[n] - math.sqrt(n) * out[n - 1]) / math.sqrt(n + 1)
    return out


def hermite_psi(n: int, x) -> np.ndarray | float:
    """n-th orthonormal field eigenfunction evaluated at `x`."""
    if n < 0:
        raise ValueError("photon number must be non-negative")
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    val = hermite_basis(n, arr)[n]
    return float(val[0]) if np.isscalar(x) or np.ndim(x) == 0 else val


def default_grid(cutoff: int, points: int = 2048, pad: float = 4.0) -> np.ndarray:
    """Uniform grid generously covering the support of states at `cutoff`."""
    half = math.sqrt(2.0 * cutoff + 1.0) / math.sqrt(2.0) + pad
    return np.linspace(-half, half, points)


def _momentum_phases(dim: int) -> np.ndarray:
    return 1j ** np.arange(dim)


# ---------------------------------------------------------------------------
# state constructors
# ---------------------------------------------------------------------------

def coherent_state(alpha: complex, cutoff: int) -> np.ndarray:
    """Single-mode coherent amplitude vector c_n = e^{-|a|^2/2} a^n / sqrt(n!).

    Raises TruncationOverflow when the Poisson tail above the cutoff holds
    more than 1e-9 of the probability; otherwise the vector is renormalized.
    """
    n = np.arange(cutoff + 1)
    log_fact = np.concatenate(([0.0], np.cumsum(np.log(np.arange(1, cutoff + 1)))))
    mag = abs(alpha)
    if mag == 0.0:
        c = np.zeros(cutoff + 1, dtype=complex)
        c[0] = 1.0
        return c
    log_mag = -0.5 * mag * mag + n * math.log(mag) - 0.5 * log_fact
    phases = np.exp(1j * n * np.angle(alpha))
    c = np.exp(log_mag) * phases
    tail = 1.0 - float(np.sum(np.abs(c) ** 2))
    if tail > 1e-9:
        raise TruncationOverflow(
            f"coherent |alpha|={mag:.3f} loses {tail:.2e} beyond cutoff {cutoff}"
        )
    return c / math.sqrt(float(np.sum(np.abs(c) ** 2)))


def adequate_cutoff(alphas) -> int:
    """Cutoff rule for coherent experiments: |a|^2 + 10|a| + 4, at least 12."""
    mag = max((abs(a) for a in np.atleast_1d(alphas)), default=0.0)
    return max(12, math.ceil(mag * mag + 10.0 * mag + 4.0))


def product_state(*vectors: np.ndarray) -> FockState:
    """Tensor product of single-mode amplitude vectors."""
    amps = np.asarray(vectors[0], dtype=complex)
    for v in vectors[1:]:
        amps = np.multiply.outer(amps, np.asarray(v, dtype=complex))
    return FockState(amps)


def vacuum_state(num_modes: int = 2, cutoff: int = 12) -> FockState:
    amps = np.zeros((cutoff + 1,) * num_modes, dtype=complex)
    amps[(0,) * num_modes] = 1.0
    return FockState(amps)


def noon2(cutoff: int = 12) -> FockState:
    """Two-mode path-entangled state (|2,0> + i|0,2>)/sqrt(2)."""
    if cutoff < 2:
        raise ValueError("cutoff must be at least 2")
    amps = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
    amps[2, 0] = 1.0 / math.sqrt(2.0)
    amps[0, 2] = 1j / math.sqrt(2.0)
    return FockState(amps)


# ---------------------------------------------------------------------------
# two-mode number-conserving unitaries, applied block by block
# ---------------------------------------------------------------------------

_PAIR_CACHE: dict[tuple[int, int, str], list] = {}


def _pair_blocks(d1: int, d2: int, kind: str) -> list:
    """Eigendecompositions of the pair generator on each total-photon block.

    kind "rotation": G = a^dag b - a b^dag (exponentiated as exp(angle*G));
    kind "bs":       H = a^dag b + a b^dag (exponentiated as exp(i*angle*H)).
    Both conserve n1+n2, so each block stays exactly unitary under truncation.
    """
    key = (d1, d2, kind)
    cached = _PAIR_CACHE.get(key)
    if cached is not None:
        return cached
    blocks = []
    for n in range(d1 + d2 - 1):
        kmin, kmax = max(0, n - (d2 - 1)), min(n, d1 - 1)
        ks = np.arange(kmin, kmax + 1)
        size = ks.size
        off = np.sqrt((ks[:-1] + 1.0) * (n - ks[:-1]))  # <k+1,n-k-1| . |k,n-k>
        herm = np.zeros((size, size), dtype=complex)
        if kind == "rotation":
            # i*G is Hermitian with elements i*off below the diagonal
            herm[np.arange(size - 1) + 1, np.arange(size - 1)] = 1j * off
            herm[np.arange(size - 1), np.arange(size - 1) + 1] = -1j * off
        elif kind == "bs":
            herm[np.arange(size - 1) + 1, np.arange(size - 1)] = off
            herm[np.arange(size - 1), np.arange(size - 1) + 1] = off
        else:
            raise ValueError(f"unknown generator kind {kind!r}")
        lam, vec = np.linalg.eigh(herm)
        blocks.append((ks, n - ks, lam, vec))
    _PAIR_CACHE[key] = blocks
    return blocks


def _apply_pair_unitary(state: FockState, modes: tuple[int, int], kind: str, angle: float) -> FockState:
    i, j = modes
    amps = np.moveaxis(state.amplitudes, (i, j), (0, 1))
    d1, d2 = amps.shape[:2]
    flat = amps.reshape(d1, d2, -1)
    out = np.zeros_like(flat)
    for ks, ls, lam, vec in _pair_blocks(d1, d2, kind):
        sub = flat[ks, ls, :]
        if kind == "rotation":
            phases = np.exp(-1j * angle * lam)  # exp(angle*G) = V e^{-i angle lam} V^dag
        else:
            phases = np.exp(1j * angle * lam)
        out[ks, ls, :] = vec @ (phases[:, None] * (vec.conj().T @ sub))
    out = np.moveaxis(out.reshape(amps.shape), (0, 1), (i, j))
    new = FockState(out, atol=1e-6)
    if abs(new.norm() - 1.0) > 1e-9 or abs(float(np.sum(np.abs(out) ** 2)) - 1.0) > 1e-9:
        raise TruncationOverflow("pair unitary changed the norm beyond 1e-9")
    return new


def apply_rotation(state: FockState, chi: float, sign: int = 1, modes: tuple[int, int] = (0, 1)) -> FockState:
    """Rotate the quadrature planes of a mode pair by `chi`.

    With sign=+1 the pair quadratures transform as
    (E_i', E_j') = ((cos chi, sin chi), (-sin chi, cos chi)) (E_i, E_j),
    and identically for the conjugate quadratures; sign=-1 flips the
    off-diagonal signs.  Exactly norm-preserving on the truncation.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    return _apply_pair_unitary(state, modes, "rotation", sign * chi)


def apply_beam_splitter(state: FockState, theta: float, modes: tuple[int, int] = (0, 1)) -> FockState:
    """Apply exp(i*theta*(a^dag b + a b^dag)) to a mode pair."""
    return _apply_pair_unitary(state, modes, "bs", theta)


def apply_lo_phase(state: FockState, psi: float, mode: int = 0) -> FockState:
    """Advance the local-oscillator phase of one mode: c_n -> c_n e^{-i psi n}."""
    dim = state.amplitudes.shape[mode]
    phases = np.exp(-1j * psi * np.arange(dim))
    shape = [1] * state.num_modes
    shape[mode] = dim
    return FockState(state.amplitudes * phases.reshape(shape), atol=1e-6)


def attach_vacuum_mode(state: FockState, cutoff: int) -> FockState:
    """Append a fresh vacuum mode as the last axis."""
    amps = np.zeros(state.amplitudes.shape + (cutoff + 1,), dtype=complex)
    amps[..., 0] = state.amplitudes
    return FockState(amps)


# ---------------------------------------------------------------------------
# densities and wavefunctions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureField:
    """Sampled quadrature-domain object: a probability density or a complex
    wavefunction on a uniform 1-D grid or a 2-D grid pair."""

    axis: str  # FIELD or MOMENTUM
    kind: str  # "density" or "wavefunction"
    grid: tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.axis not in (FIELD, MOMENTUM):
            raise ValueError(f"axis must be {FIELD!r} or {MOMENTUM!r}")
        if self.kind not in ("density", "wavefunction"):
            raise ValueError("kind must be 'density' or 'wavefunction'")
        grids = tuple(np.asarray(g, dtype=float) for g in self.grid)
        object.__setattr__(self, "grid", grids)
        object.__setattr__(self, "values", np.asarray(self.values))

    def mass(self) -> float:
        """Integral of the density (or of |psi|^2) over the grid."""
        dens = self.values if self.kind == "density" else np.abs(self.values) ** 2
        if len(self.grid) == 1:
            return float(np.trapezoid(dens, self.grid[0]))
        inner = np.trapezoid(dens, self.grid[1], axis=1)
        return float(np.trapezoid(inner, self.grid[0]))

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.values)

    @property
    def phase(self) -> np.ndarray:
        if self.kind != "wavefunction":
            raise ValueError("phase is only defined for wavefunctions")
        return np.angle(self.values)


def reduced_density(state: FockState, mode: int) -> np.ndarray:
    """Reduced density matrix of one mode (partial trace over the others)."""
    amps = np.moveaxis(state.amplitudes, mode, 0)
    flat = amps.reshape(amps.shape[0], -1)
    return flat @ flat.conj().T


def quadrature_bands(rho: np.ndarray, grid: np.ndarray, axis: str = FIELD) -> np.ndarray:
    """Band decomposition of a single-mode quadrature density.

    Returns rows F_d(x) (row 0 plain, rows d >= 1 doubled) such that the
    density at local-oscillator phase psi is Re sum_d e^{-i psi d} F_d(x);
    precomputing the bands makes whole batches of phases one matrix product.
    """
    d = rho.shape[0]
    if axis == MOMENTUM:
        ph = _momentum_phases(d)
        rho = (ph[:, None] * rho) * ph.conj()[None, :]
    elif axis != FIELD:
        raise ValueError(f"axis must be {FIELD!r} or {MOMENTUM!r}")
    basis = hermite_basis(d - 1, grid)
    bands = np.empty((d, grid.size), dtype=complex)
    for off in range(d):
        band = (np.diagonal(rho, -off)[:, None] * basis[off:] * basis[: d - off]).sum(axis=0)
        bands[off] = band if off == 0 else 2.0 * band
    return bands


def density_from_bands(bands: np.ndarray, lo_phases: np.ndarray | None = None) -> np.ndarray:
    """Densities from precomputed bands; shape (m, npts) with `lo_phases`."""
    if lo_phases is None:
        return np.maximum(bands.real.sum(axis=0), 0.0)
    coeffs = np.exp(-1j * np.outer(np.asarray(lo_phases, dtype=float), np.arange(bands.shape[0])))
    return np.maximum((coeffs @ bands).real, 0.0)


def density_from_rho(
    rho: np.ndarray,
    grid: np.ndarray,
    axis: str = FIELD,
    lo_phases: np.ndarray | None = None,
) -> np.ndarray:
    """Quadrature density of a single-mode density matrix on `grid`."""
    return density_from_bands(quadrature_bands(rho, grid, axis), lo_phases)


def quadrature_density(
    state: FockState,
    mode: int,
    axis: str,
    grid: np.ndarray,
    lo_phase: float = 0.0,
) -> QuadratureField:
    """Marginal quadrature distribution of one mode, normalized on `grid`.

    Raises GridTooNarrow when more than 1e-6 of the probability falls
    outside the grid.
    """
    grid = np.asarray(grid, dtype=float)
    rho = reduced_density(state, mode)
    phases = [lo_phase] if lo_phase != 0.0 else None
    dens = density_from_rho(rho, grid, axis=axis, lo_phases=phases)
    dens = dens[0] if phases is not None else dens
    raw_mass = float(np.trapezoid(dens, grid))
    if raw_mass < 1.0 - 1e-6:
        raise GridTooNarrow(
            f"grid [{grid[0]:.3g}, {grid[-1]:.3g}] holds only {raw_mass:.9f} of the state"
        )
    return QuadratureField(axis=axis, kind="density", grid=(grid,), values=dens / raw_mass)


def joint_wavefunction(
    state: FockState,
    grids: tuple[np.ndarray, np.ndarray],
    axis: str = FIELD,
) -> QuadratureField:
    """Joint two-mode wavefunction Psi(x1, x2) on a 2-D grid.

    The global phase is fixed to zero at the grid point nearest the origin
    (skipped when the amplitude vanishes there).  Raises GridTooNarrow when
    the squared modulus keeps less than 1 - 1e-6 of the norm on the grid.
    """
    if state.num_modes != 2:
        raise ValueError("joint_wavefunction expects a two-mode state")
    g1, g2 = (np.asarray(g, dtype=float) for g in grids)
    d1, d2 = state.amplitudes.shape
    b1 = hermite_basis(d1 - 1, g1).astype(complex)
    b2 = hermite_basis(d2 - 1, g2).astype(complex)
    if axis == MOMENTUM:
        b1 *= _momentum_phases(d1)[:, None]
        b2 *= _momentum_phases(d2)[:, None]
    elif axis != FIELD:
        raise ValueError(f"axis must be {FIELD!r} or {MOMENTUM!r}")
    psi = b1.T @ state.amplitudes @ b2
    dens = np.abs(psi) ** 2
    raw_mass = float(np.trapezoid(np.trapezoid(dens, g2, axis=1), g1))
    if raw_mass < 1.0 - 1e-6:
        raise GridTooNarrow(
            f"2-D grid holds only {raw_mass:.9f} of the state's squared modulus"
        )
    i0, j0 = int(np.argmin(np.abs(g1))), int(np.argmin(np.abs(g2)))
    anchor = psi[i0, j0]
    if abs(anchor) > 1e-30:
        psi = psi * (anchor.conjugate() / abs(anchor))
    return QuadratureField(axis=axis, kind="wavefunction", grid=(g1, g2), values=psi)


def momentum_window_projector(dim: int, half_width: float, points: int = 801) -> np.ndarray:
    """Fock-basis matrix of the projector onto |momentum| < half_width.

    W_{nn'} = int_{|q|<w} f_n(q) f_n'(q)* dq with f_n = i^n psi_n, evaluated
    by Simpson quadrature on `points` nodes (made odd if necessary).
    """
    from scipy.integrate import simpson

    if points % 2 == 0:
        points += 1
    q = np.linspace(-half_width, half_width, points)
    basis = hermite_basis(dim - 1, q)
    overlap = simpson(basis[:, None, :] * basis[None, :, :], x=q, axis=2)
    ph = _momentum_phases(dim)
    return (ph[:, None] * overlap) * ph.conj()[None, :]


def field_moments(state: FockState, mode: int) -> tuple[float, float]:
    """Mean and variance of the field-strength quadrature E = (a+a^dag)/2."""
    rho = reduced_density(state, mode)
    d = rho.shape[0]
    lower = np.sqrt(np.arange(1, d))  # a|n> = sqrt(n)|n-1>
    tr_a = complex(np.sum(lower * np.diagonal(rho, -1)))  # tr(rho a)
    n_mean = float(np.real(np.sum(np.arange(d) * np.diagonal(rho).real)))
    if d >= 3:
        fac2 = np.sqrt(np.arange(1, d - 1) * np.arange(2, d))
        tr_a2 = complex(np.sum(fac2 * np.diagonal(rho, -2)))
    else:
        tr_a2 = 0.0
    mean = tr_a.real
    second = (2.0 * np.real(tr_a2) + 2.0 * n_mean + 1.0) / 4.0
    return mean, second - mean * mean
