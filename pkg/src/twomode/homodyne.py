"""Monte Carlo balanced-homodyne campaigns over rotation angle and LO phase.

A campaign rotates the two-mode input in the field-strength plane by chi,
advances the measured mode's local-oscillator phase by psi, and samples the
exact marginal of the measured quadrature by inverse-CDF on a fine grid.
Three sampling strategies are supported:

  standard      enumerate the (chi, psi) grid cyclically
  phase-random  cycle a fixed chi grid, draw psi uniform on [0, 2pi)
  full-random   draw both chi and psi uniform on [0, 2pi)

Randomness is chunked: chunk c draws from SeedSequence(seed, spawn_key=(c,)),
so the record stream is reproducible and independent of any worker layout.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import FitDiverged, InsufficientAngles
from .states import (
    FIELD,
    FockState,
    QuadratureField,
    apply_lo_phase,
    apply_rotation,
    default_grid,
    density_from_bands,
    density_from_rho,
    field_moments,
    quadrature_bands,
    quadrature_density,
    reduced_density,
)

__all__ = [
    "HomodyneConfig",
    "HomodyneRecord",
    "Histogram2D",
    "StageSettings",
    "FitReport",
    "bhd_moments",
    "run_campaign",
    "records_to_array",
    "phase_averaged_density",
    "reconstruct_joint",
    "fit_moments",
    "chain_stages",
]

STRATEGIES = ("standard", "phase-random", "full-random")


@dataclass(frozen=True)
class HomodyneConfig:
    """Campaign parameters: strategy, sample count, angle grids and seed."""

    lo_amplitude: float = 1.0
    strategy: str = "phase-random"
    n_samples: int = 100_000
    chi_list: tuple[float, ...] = ()
    psi_list: tuple[float, ...] = ()
    seed: int = 0
    grid_points: int = 2048
    chunk_size: int = 4096
    workers: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.n_samples <= 0:
            raise ValueError("n_samples must be positive")
        if self.strategy in ("standard", "phase-random") and not self.chi_list:
            raise ValueError(f"{self.strategy} sampling needs a non-empty chi_list")
        if self.strategy == "standard" and not self.psi_list:
            raise ValueError("standard sampling needs a non-empty psi_list")


@dataclass(frozen=True)
class HomodyneRecord:
    """One sampled measurement event."""

    chi: float
    psi: float
    value: float


def records_to_array(records: list[HomodyneRecord]) -> np.ndarray:
    """(n, 3) float array of (chi, psi, value)."""
    return np.array([(r.chi, r.psi, r.value) for r in records], dtype=float)


def bhd_moments(
    state: FockState, chi: float, psi: float, lo_amplitude: float = 1.0
) -> tuple[float, float]:
    """Mean and variance of the balanced-detector difference current.

    Returns (2|a| <E3>, 4|a|^2 <(dE3)^2>) for the rotated, phase-advanced
    output mode; the proportionality constant is fixed to 1.
    """
    shifted = apply_lo_phase(apply_rotation(state, chi), psi, mode=0)
    mean, var = field_moments(shifted, 0)
    return 2.0 * lo_amplitude * mean, 4.0 * lo_amplitude**2 * var


# ---------------------------------------------------------------------------
# campaign sampling
# ---------------------------------------------------------------------------

def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(chunk,)))


def _inverse_cdf_rows(dens: np.ndarray, grid: np.ndarray, u: np.ndarray) -> np.ndarray:
    """One inverse-CDF draw per row of `dens` using trapezoidal CDFs."""
    h = grid[1] - grid[0]
    inner = 0.5 * (dens[:, 1:] + dens[:, :-1]) * h
    cdf = np.concatenate([np.zeros((dens.shape[0], 1)), np.cumsum(inner, axis=1)], axis=1)
    cdf /= cdf[:, -1:]
    out = np.empty(dens.shape[0])
    for i in range(dens.shape[0]):
        out[i] = np.interp(u[i], cdf[i], grid)
    return out


def _inverse_cdf_shared(dens: np.ndarray, grid: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized inverse-CDF draws against one shared density."""
    h = grid[1] - grid[0]
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * h)])
    cdf /= cdf[-1]
    return np.interp(u, cdf, grid)


class _CampaignSampler:
    """Shared immutable context for one campaign, sampled chunk by chunk."""

    def __init__(self, state: FockState, config: HomodyneConfig):
        self.config = config
        self.state = state
        self.grid = default_grid(max(state.cutoffs), points=config.grid_points)
        self._band_cache: dict[float, np.ndarray] = {}

    def bands_after_rotation(self, chi: float) -> np.ndarray:
        bands = self._band_cache.get(chi)
        if bands is None:
            rho = reduced_density(apply_rotation(self.state, chi), 0)
            bands = quadrature_bands(rho, self.grid, FIELD)
            if len(self._band_cache) < 512:
                self._band_cache[chi] = bands
        return bands

    def _draw(self, rng: np.random.Generator, count: int, start: int):
        cfg = self.config
        idx = np.arange(start, start + count)
        if cfg.strategy == "standard":
            chi_arr = np.asarray(cfg.chi_list)[(idx // len(cfg.psi_list)) % len(cfg.chi_list)]
            psi_arr = np.asarray(cfg.psi_list)[idx % len(cfg.psi_list)]
            u = rng.random(count)
        elif cfg.strategy == "phase-random":
            chi_arr = np.asarray(cfg.chi_list)[idx % len(cfg.chi_list)]
            draws = rng.random((count, 2))
            psi_arr = 2.0 * math.pi * draws[:, 0]
            u = draws[:, 1]
        else:  # full-random
            draws = rng.random((count, 3))
            chi_arr = 2.0 * math.pi * draws[:, 0]
            psi_arr = 2.0 * math.pi * draws[:, 1]
            u = draws[:, 2]
        return chi_arr, psi_arr, u

    def sample_chunk(self, chunk: int) -> np.ndarray:
        cfg = self.config
        start = chunk * cfg.chunk_size
        count = min(cfg.chunk_size, cfg.n_samples - start)
        rng = _chunk_rng(cfg.seed, chunk)
        chi_arr, psi_arr, u = self._draw(rng, count, start)
        values = np.empty(count)
        if cfg.strategy == "standard":
            # the grid enumeration repeats exact (chi, psi) pairs: share CDFs
            pairs = np.column_stack([chi_arr, psi_arr])
            for chi, psi in np.unique(pairs, axis=0):
                sel = np.nonzero((chi_arr == chi) & (psi_arr == psi))[0]
                dens = density_from_bands(self.bands_after_rotation(float(chi)), [psi])[0]
                values[sel] = _inverse_cdf_shared(dens, self.grid, u[sel])
        else:
            for chi in np.unique(chi_arr):
                sel = np.nonzero(chi_arr == chi)[0]
                dens = density_from_bands(self.bands_after_rotation(float(chi)), psi_arr[sel])
                values[sel] = _inverse_cdf_rows(dens, self.grid, u[sel])
        return np.column_stack([chi_arr, psi_arr, values])


def run_campaign(state: FockState, config: HomodyneConfig) -> list[HomodyneRecord]:
    """Run a sampling campaign; deterministic for a given (state, config)."""
    sampler = _CampaignSampler(state, config)
    n_chunks = -(-config.n_samples // config.chunk_size)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            parts = list(pool.map(sampler.sample_chunk, range(n_chunks)))
    else:
        parts = [sampler.sample_chunk(c) for c in range(n_chunks)]
    rows = np.concatenate(parts, axis=0)
    return [HomodyneRecord(float(c), float(p), float(v)) for c, p, v in rows]


def phase_averaged_density(
    state: FockState, chi: float, psi_grid: np.ndarray, grid: np.ndarray | None = None
) -> QuadratureField:
    """LO-phase average (1/2pi) int P(E(chi, psi)) dpsi by trapezoidal rule.

    `psi_grid` must cover [0, 2pi) uniformly; the periodic closure point is
    appended internally.  Returns a normalized density on `grid`.
    """
    psi_grid = np.sort(np.asarray(psi_grid, dtype=float))
    if psi_grid[0] < 0 or psi_grid[-1] >= 2.0 * math.pi:
        raise ValueError("psi_grid must lie inside [0, 2pi)")
    if grid is None:
        grid = default_grid(max(state.cutoffs))
    rho = reduced_density(apply_rotation(state, chi), 0)
    dens = density_from_rho(rho, grid, FIELD, lo_phases=psi_grid)
    psi_closed = np.concatenate([psi_grid, [psi_grid[0] + 2.0 * math.pi]])
    dens_closed = np.concatenate([dens, dens[:1]], axis=0)
    avg = np.trapezoid(dens_closed, psi_closed, axis=0) / (2.0 * math.pi)
    mass = float(np.trapezoid(avg, grid))
    return QuadratureField(axis=FIELD, kind="density", grid=(np.asarray(grid),), values=avg / mass)


# ---------------------------------------------------------------------------
# joint reconstruction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Histogram2D:
    """Normalized 2-D histogram over the field-strength plane."""

    edges1: np.ndarray
    edges2: np.ndarray
    counts: np.ndarray
    density: np.ndarray

    @property
    def centers1(self) -> np.ndarray:
        return 0.5 * (self.edges1[:-1] + self.edges1[1:])

    @property
    def centers2(self) -> np.ndarray:
        return 0.5 * (self.edges2[:-1] + self.edges2[1:])


def _normalize_hist(edges1, edges2, counts) -> Histogram2D:
    area = np.outer(np.diff(edges1), np.diff(edges2))
    total = counts.sum()
    density = counts / (total * area) if total > 0 else counts
    return Histogram2D(edges1=edges1, edges2=edges2, counts=counts, density=density)


def reconstruct_joint(
    records: list[HomodyneRecord] | np.ndarray,
    method: str = "scatter",
    bins: int = 101,
    extent: float | None = None,
    signed: bool = True,
) -> Histogram2D:
    """Assemble records into a 2-D field-strength distribution.

    "scatter" deposits each record at (value cos chi, value sin chi) - the
    figure-style emulation; with signed=False the magnitude is deposited
    instead and the sign is ignored.  "back-projection" treats the per-chi
    value histograms as parallel projections and inverts them with a
    ramp-filtered back projection (needs >= 8 distinct chi).
    """
    rows = records if isinstance(records, np.ndarray) else records_to_array(records)
    if rows.size == 0:
        raise ValueError("no records to reconstruct from")
    chi, values = rows[:, 0], rows[:, 2]
    if extent is None:
        extent = float(np.max(np.abs(values)) * 1.05 + 1e-9)
    if method == "scatter":
        v = values if signed else np.abs(values)
        e1, e2 = v * np.cos(chi), v * np.sin(chi)
        counts, ex, ey = np.histogram2d(
            e1, e2, bins=bins, range=[[-extent, extent], [-extent, extent]]
        )
        return _normalize_hist(ex, ey, counts)
    if method != "back-projection":
        raise ValueError("method must be 'scatter' or 'back-projection'")

    from skimage.transform import iradon

    # fold angles into [0, pi): a projection at chi+pi is the chi one mirrored
    folded = np.mod(chi, math.pi)
    flip = np.abs(np.mod(chi, 2.0 * math.pi) - folded) > 1e-12
    t_vals = np.where(flip, -values, values)
    angles = np.unique(np.round(folded, 12))
    if angles.size < 8:
        raise InsufficientAngles(
            f"back-projection needs at least 8 distinct angles, got {angles.size}"
        )
    edges = np.linspace(-extent, extent, bins + 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    sino = np.zeros((bins, angles.size))
    for k, ang in enumerate(angles):
        sel = np.abs(folded - ang) <= 1e-12
        hist, _ = np.histogram(t_vals[sel], bins=edges)
        sino[:, k] = hist / max(hist.sum(), 1)
    rec = iradon(
        sino, theta=np.degrees(angles), filter_name="ramp", circle=False, output_size=bins
    )
    dens = np.maximum(np.flipud(rec).T, 0.0)  # image rows run along -e2
    counts = dens * 0.0
    area = np.outer(np.diff(edges), np.diff(edges))
    dens = dens / max((dens * area).sum(), 1e-300)
    return Histogram2D(edges1=edges, edges2=edges, counts=counts, density=dens)


# ---------------------------------------------------------------------------
# model fits
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitReport:
    mean1: float
    mean2: float
    width1: float
    width2: float
    residual: float
    model: str
    impl: str


_PHASE_NODES = np.cos(np.linspace(0.0, math.pi, 128, endpoint=False))


def _ring_profile(q: np.ndarray, s: float) -> np.ndarray:
    """Radial profile of a phase-averaged circular state at unit radius:
    the density of cos(t) + N(0, s) with t uniform."""
    s = max(abs(s), 1e-6)
    z = (q[..., None] - _PHASE_NODES) / s
    return np.exp(-0.5 * z * z).mean(axis=-1) / (s * math.sqrt(2.0 * math.pi))


def _ring_residual(params, x, y, dens):
    c, r1, r2, s = params
    q = np.sqrt((x / r1) ** 2 + (y / r2) ** 2)
    model = c * _ring_profile(q, s) / np.maximum(q, 1e-6)
    return model - dens


def _gauss_residual(params, x, y, dens):
    c, m1, m2, w1, w2 = params
    model = c * np.exp(-((x - m1) ** 2) / (2 * w1**2) - ((y - m2) ** 2) / (2 * w2**2))
    return (model - dens).ravel()


def _nelder_mead(fun, x0, *, scale=0.1, iters=2500, tol=1e-13):
    """Minimal Nelder-Mead simplex on sum-of-squares objectives.

    Hand-rolled so the fit can be cross-checked against an optimizer that
    shares no code with scipy's least-squares path.
    """
    n = len(x0)
    pts = [np.asarray(x0, dtype=float)]
    for i in range(n):
        p = pts[0].copy()
        p[i] += scale * (abs(p[i]) if p[i] != 0 else 1.0)
        pts.append(p)
    vals = [fun(p) for p in pts]
    for _ in range(iters):
        order = np.argsort(vals)
        pts = [pts[i] for i in order]
        vals = [vals[i] for i in order]
        if abs(vals[-1] - vals[0]) < tol * (abs(vals[0]) + tol):
            break
        centroid = np.mean(pts[:-1], axis=0)
        xr = centroid + (centroid - pts[-1])
        fr = fun(xr)
        if fr < vals[0]:
            xe = centroid + 2.0 * (centroid - pts[-1])
            fe = fun(xe)
            pts[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < vals[-2]:
            pts[-1], vals[-1] = xr, fr
        else:
            xc = centroid + 0.5 * (pts[-1] - centroid)
            fc = fun(xc)
            if fc < vals[-1]:
                pts[-1], vals[-1] = xc, fc
            else:
                pts = [pts[0]] + [pts[0] + 0.5 * (p - pts[0]) for p in pts[1:]]
                vals = [vals[0]] + [fun(p) for p in pts[1:]]
    best = int(np.argmin(vals))
    return pts[best]


def fit_moments(
    hist: Histogram2D,
    model: str = "ring",
    impl: str = "lsq",
    residual_threshold: float = 0.5,
) -> FitReport:
    """Least-squares fit of the declared model to a 2-D histogram.

    model "ring": phase-averaged circular-state profile with the polar
    deposition measure; means are the per-axis ring radii and widths the
    radial noise scaled per axis.  model "gaussian": product Gaussian with
    per-axis means and widths.  `impl` selects the optimizer implementation
    ("lsq" = scipy least squares, "simplex" = hand-rolled Nelder-Mead); both
    minimize the same objective.
    """
    x, y = np.meshgrid(hist.centers1, hist.centers2, indexing="ij")
    dens = hist.density
    if model == "ring":
        radial = np.sqrt(x**2 + y**2)
        profile = np.where(radial > 0.3, dens, 0.0)
        r_guess = float(radial.ravel()[np.argmax(profile.ravel())])
        r_guess = max(r_guess, 0.5)
        sel = radial > 0.35 * r_guess
        xs, ys, ds = x[sel], y[sel], dens[sel]
        x0 = np.array([float(dens.max() * r_guess), r_guess, r_guess, 0.15])
        if impl == "lsq":
            from scipy.optimize import least_squares

            sol = least_squares(_ring_residual, x0, args=(xs, ys, ds), method="lm").x
        elif impl == "simplex":
            sol = _nelder_mead(
                lambda p: float(np.sum(_ring_residual(p, xs, ys, ds) ** 2)), x0
            )
        else:
            raise ValueError("impl must be 'lsq' or 'simplex'")
        c, r1, r2, s = np.abs(sol)
        resid = _ring_residual((c, r1, r2, s), xs, ys, ds)
        rel = float(np.sqrt(np.mean(resid**2)) / max(ds.max(), 1e-300))
        report = FitReport(r1, r2, s * r1, s * r2, rel, model, impl)
    elif model == "gaussian":
        m1 = float((dens * x).sum() / dens.sum())
        m2 = float((dens * y).sum() / dens.sum())
        w1 = math.sqrt(float((dens * (x - m1) ** 2).sum() / dens.sum()))
        w2 = math.sqrt(float((dens * (y - m2) ** 2).sum() / dens.sum()))
        x0 = np.array([float(dens.max()), m1, m2, w1, w2])
        if impl == "lsq":
            from scipy.optimize import least_squares

            sol = least_squares(_gauss_residual, x0, args=(x, y, dens), method="lm").x
        elif impl == "simplex":
            sol = _nelder_mead(
                lambda p: float(np.sum(_gauss_residual(p, x, y, dens) ** 2)), x0
            )
        else:
            raise ValueError("impl must be 'lsq' or 'simplex'")
        c, m1, m2, w1, w2 = sol
        resid = _gauss_residual((c, m1, m2, w1, w2), x, y, dens)
        rel = float(np.sqrt(np.mean(resid**2)) / max(dens.max(), 1e-300))
        report = FitReport(m1, m2, abs(w1), abs(w2), rel, model, impl)
    else:
        raise ValueError("model must be 'ring' or 'gaussian'")
    if report.residual > residual_threshold:
        raise FitDiverged(
            f"{model} fit residual {report.residual:.3f} above {residual_threshold}"
        )
    return report


# ---------------------------------------------------------------------------
# multi-stage chains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StageSettings:
    """One measurement unit: the pair rotation and its detector's LO phase."""

    chi: float
    psi: float = 0.0
    sign: int = 1


def chain_stages(
    state: FockState, stage_settings: list[StageSettings], grid: np.ndarray | None = None
) -> list[QuadratureField]:
    """Cascade of measurement units over an N-mode state.

    Stage k rotates modes (k, k+1); the upper output (mode k) goes to a
    detector whose marginal density is returned, the lower output carries on
    to the next stage.  N modes need N-1 stage settings.
    """
    n = state.num_modes
    if n < 2:
        raise ValueError("chain needs at least two modes")
    if len(stage_settings) != n - 1:
        raise ValueError(f"{n}-mode chain needs {n - 1} stage settings")
    if grid is None:
        grid = default_grid(max(state.cutoffs))
    densities = []
    current = state
    for k, stage in enumerate(stage_settings):
        current = apply_rotation(current, stage.chi, sign=stage.sign, modes=(k, k + 1))
        measured = apply_lo_phase(current, stage.psi, mode=k) if stage.psi else current
        densities.append(quadrature_density(measured, k, FIELD, grid))
    return densities
