"""Weak-measurement reconstruction of the two-mode momentum wavefunction.

Per rotation angle chi the input is rotated in the momentum plane, the upper
output mode is weakly mixed with a vacuum meter mode (mixing angle gamma_w),
the lower output is postselected on |momentum| < window, and two readouts are
taken from the exact joint state: the strong probability density of the upper
mode's momentum and the postselected meter conjugate-quadrature expectation.
To first order in gamma_w the meter readout equals -gamma_w * dphi/dp, so the
phase follows by cumulative integration from the origin; the amplitude comes
from the strong channel.  Radial scans are finally assembled into a joint
phase surface over the momentum plane.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyPostselection,
    NotReconstructible,
    OrthogonalPostselection,
    TooFewAngles,
)
from .states import (
    MOMENTUM,
    FockState,
    apply_beam_splitter,
    apply_rotation,
    attach_vacuum_mode,
    hermite_basis,
    joint_wavefunction,
    momentum_window_projector,
    quadrature_bands,
    density_from_bands,
)

__all__ = [
    "WeakConfig",
    "WeakScanRecord",
    "JointPhaseSurface",
    "weak_value",
    "weak_couple",
    "weak_scan",
    "weak_scan_sampled",
    "reconstruct_phase_1d",
    "assemble_joint_phase",
    "check_radial_sensitivity",
]


@dataclass(frozen=True)
class WeakConfig:
    """Scan parameters: coupling strength, angle and momentum grids,
    postselection window half-width and masking threshold."""

    gamma_w: float = 0.05
    chi_grid: tuple[float, ...] = (0.0,)
    p_grid: tuple[float, ...] = ()
    postselect_window: float = 0.2
    mask_threshold: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.gamma_w):
            raise ValueError("gamma_w must be positive")
        if self.gamma_w > 0.2:
            warnings.warn(
                "gamma_w above 0.2 is outside the weak regime; first-order "
                "readout relations degrade",
                stacklevel=2,
            )
        if not (self.postselect_window > 0):
            raise ValueError("postselect_window must be positive")
        if not self.chi_grid:
            raise ValueError("chi_grid must be non-empty")
        if len(self.p_grid) < 3:
            raise ValueError("p_grid needs at least 3 points")


@dataclass(frozen=True)
class WeakScanRecord:
    """One postselected readout row at rotation angle chi and momentum bin p."""

    chi: float
    p: float
    probability: float
    meter_expectation: float
    phase: float
    masked: bool


def weak_value(op_matrix: np.ndarray, pre_state: np.ndarray, post_state: np.ndarray) -> complex:
    """Complex weak value <post|A|pre> / <post|pre>.

    Raises OrthogonalPostselection when |<post|pre>| <= 1e-12.
    """
    pre = np.asarray(pre_state, dtype=complex).ravel()
    post = np.asarray(post_state, dtype=complex).ravel()
    op = np.asarray(op_matrix, dtype=complex)
    overlap = np.vdot(post, pre)
    if abs(overlap) <= 1e-12:
        raise OrthogonalPostselection(
            f"postselection overlap {abs(overlap):.2e} below 1e-12"
        )
    return complex(np.vdot(post, op @ pre) / overlap)


def weak_couple(signal_state: FockState, gamma_w: float, meter_cutoff: int | None = None) -> FockState:
    """Append a vacuum meter mode and mix it weakly with the first mode.

    The coupling is the beam-splitter unitary exp(i*gamma_w*(a^dag m + a m^dag))
    between mode 0 and the new last mode; norm is preserved exactly on the
    truncation.
    """
    if meter_cutoff is None:
        meter_cutoff = signal_state.cutoffs[0]
    joint = attach_vacuum_mode(signal_state, meter_cutoff)
    return apply_beam_splitter(joint, gamma_w, modes=(0, joint.num_modes - 1))


_METER_READOUT_CACHE: dict[int, np.ndarray] = {}


def _meter_readout(dim: int) -> np.ndarray:
    """Conjugate-quadrature readout of the meter detector, i(m - m^dag):
    the balanced-detector difference current at unit LO amplitude."""
    mat = _METER_READOUT_CACHE.get(dim)
    if mat is None:
        low = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1)  # m
        mat = 1j * (low - low.conj().T)
        _METER_READOUT_CACHE[dim] = mat
    return mat


def _scan_one_angle(state: FockState, chi: float, config: WeakConfig):
    """Exact strong/weak readouts for one rotation angle.

    Returns (probability density with window, meter expectation, window mass).
    """
    p_grid = np.asarray(config.p_grid, dtype=float)
    rotated = apply_rotation(state, chi)
    joint = weak_couple(rotated, config.gamma_w)
    d3, d4, dm = joint.amplitudes.shape
    window = momentum_window_projector(d4, config.postselect_window)
    mass = float(np.real(np.einsum(
        "abm,bc,acm->", joint.amplitudes.conj(), window, joint.amplitudes, optimize=True
    )))
    if mass < 1e-9:
        raise EmptyPostselection(
            f"window |p| < {config.postselect_window} holds {mass:.2e} probability"
        )
    basis = hermite_basis(d3 - 1, p_grid).astype(complex)
    basis *= (1j ** np.arange(d3))[:, None]
    proj = np.tensordot(basis.T, joint.amplitudes, axes=([1], [0]))  # (p, n4, m)
    prob = np.real(np.einsum("pbm,bc,pcm->p", proj.conj(), window, proj, optimize=True))
    prob = np.maximum(prob, 0.0)
    readout = _meter_readout(dm)
    e_num = np.real(np.einsum(
        "pbm,bc,mk,pck->p", proj.conj(), window, readout, proj, optimize=True
    ))
    meter = e_num / np.maximum(prob, 1e-300)
    return prob, meter, mass


def reconstruct_phase_1d(
    p_grid: np.ndarray,
    meter_expectation: np.ndarray,
    gamma_w: float,
    masked: np.ndarray | None = None,
) -> np.ndarray:
    """Phase along one radial momentum scan.

    phi(p) = -(1/gamma_w) * integral_0^p E(p') dp' by cumulative trapezoid,
    anchored to phi = 0 at the grid point nearest the origin and run outward
    in both directions.  Masked bins only flag the output; their readout
    still enters the integral (the failure shows up as a flagged gap).
    """
    from scipy.integrate import cumulative_trapezoid

    p = np.asarray(p_grid, dtype=float)
    e = np.asarray(meter_expectation, dtype=float)
    cum = np.concatenate([[0.0], cumulative_trapezoid(e, p)])
    i0 = int(np.argmin(np.abs(p)))
    phi = -(cum - cum[i0]) / gamma_w
    # shift so the anchor sits exactly at p = 0 when 0 lies between grid points
    if p[i0] != 0.0 and p[0] < 0.0 < p[-1]:
        phi0 = float(np.interp(0.0, p, phi))
        phi = phi - phi0
    return phi


def weak_scan(state: FockState, config: WeakConfig) -> list[WeakScanRecord]:
    """Exact postselected scan over all angles in the config.

    Per (chi, p): the strong probability density of the upper mode momentum
    joint with the window condition, the postselected meter expectation, the
    integrated phase and the low-probability mask.
    """
    if state.num_modes != 2:
        raise ValueError("weak_scan expects a two-mode input state")
    p_grid = np.asarray(config.p_grid, dtype=float)
    records: list[WeakScanRecord] = []
    for chi in config.chi_grid:
        prob, meter, _ = _scan_one_angle(state, float(chi), config)
        masked = prob < config.mask_threshold * prob.max()
        phase = reconstruct_phase_1d(p_grid, meter, config.gamma_w, masked)
        for j in range(p_grid.size):
            records.append(
                WeakScanRecord(
                    chi=float(chi),
                    p=float(p_grid[j]),
                    probability=float(prob[j]),
                    meter_expectation=float(meter[j]),
                    phase=float(phase[j]),
                    masked=bool(masked[j]),
                )
            )
    return records


def weak_scan_sampled(
    state: FockState,
    config: WeakConfig,
    n_samples: int,
    seed: int = 0,
) -> tuple[list[WeakScanRecord], np.ndarray]:
    """Monte Carlo realism variant of `weak_scan`.

    Strong-channel samples are drawn per angle from the exact windowed
    density; the meter readout of each sample is drawn from the meter's exact
    conjugate-quadrature distribution conditioned on the sample's momentum
    bin.  Returns the noisy records plus the raw (chi, p) sample array.
    """
    if state.num_modes != 2:
        raise ValueError("weak_scan_sampled expects a two-mode input state")
    p_grid = np.asarray(config.p_grid, dtype=float)
    rng = np.random.default_rng(seed)
    per_angle = n_samples // len(config.chi_grid)
    records: list[WeakScanRecord] = []
    samples = []
    readout_grid = np.linspace(-8.0, 8.0, 513)
    for chi in config.chi_grid:
        prob, meter, mass = _scan_one_angle(state, float(chi), config)
        rotated = apply_rotation(state, float(chi))
        joint = weak_couple(rotated, config.gamma_w)
        d3, d4, dm = joint.amplitudes.shape
        window = momentum_window_projector(d4, config.postselect_window)
        basis = hermite_basis(d3 - 1, p_grid).astype(complex)
        basis *= (1j ** np.arange(d3))[:, None]
        proj = np.tensordot(basis.T, joint.amplitudes, axes=([1], [0]))

        # inverse-CDF draw of momentum values on the scan grid
        h = p_grid[1] - p_grid[0]
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (prob[1:] + prob[:-1]) * h)])
        cdf /= cdf[-1]
        draws = np.interp(rng.random(per_angle), cdf, p_grid)
        samples.append(np.column_stack([np.full(per_angle, chi), draws]))

        # bin samples, then sample meter readouts per occupied bin
        edges = np.concatenate([[p_grid[0] - h / 2], p_grid + h / 2])
        bin_idx = np.clip(np.digitize(draws, edges) - 1, 0, p_grid.size - 1)
        est_prob = np.bincount(bin_idx, minlength=p_grid.size) / (per_angle * h) * mass
        meter_mean = np.zeros(p_grid.size)
        for b in np.unique(bin_idx):
            sub = proj[b]  # (n4, m)
            rho_m = np.einsum("bm,bc,ck->mk", sub.conj(), window, sub, optimize=True).conj()
            tr = float(np.real(np.trace(rho_m)))
            if tr <= 0.0:
                continue
            rho_m = rho_m / tr
            # readout i(m - m^dag) = twice the package momentum quadrature
            bands = quadrature_bands(rho_m, readout_grid / 2.0, MOMENTUM)
            dens = density_from_bands(bands)
            c_r = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * (readout_grid[1] - readout_grid[0]) / 2.0)])
            c_r /= c_r[-1]
            count = int(np.sum(bin_idx == b))
            meter_mean[b] = float(np.mean(np.interp(rng.random(count), c_r, readout_grid)))
        masked = est_prob < config.mask_threshold * max(est_prob.max(), 1e-300)
        phase = reconstruct_phase_1d(p_grid, meter_mean, config.gamma_w, masked)
        for j in range(p_grid.size):
            records.append(
                WeakScanRecord(
                    chi=float(chi),
                    p=float(p_grid[j]),
                    probability=float(est_prob[j]),
                    meter_expectation=float(meter_mean[j]),
                    phase=float(phase[j]),
                    masked=bool(masked[j]),
                )
            )
    return records, np.concatenate(samples, axis=0)


# ---------------------------------------------------------------------------
# joint phase assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JointPhaseSurface:
    """Assembled joint phase over the momentum plane.

    `interpolated` marks cells whose nearest scan angle failed (interior
    masked gap) and whose value was bridged linearly between the neighbouring
    usable angles; `masked` marks cells with no trustworthy value at all.
    """

    p1: np.ndarray
    p2: np.ndarray
    phase: np.ndarray
    amplitude: np.ndarray
    masked: np.ndarray
    interpolated: np.ndarray
    usable_angles: tuple[float, ...]
    failed_angles: tuple[float, ...]


def _has_interior_gap(masked: np.ndarray, p_grid: np.ndarray) -> bool:
    """True when a masked stretch sits between unmasked bins on either side
    of the origin (phase integration cannot cross it)."""
    i0 = int(np.argmin(np.abs(p_grid)))
    if masked[i0]:
        return True
    for sl in (slice(i0, None), slice(i0, None, -1)):
        m = masked[sl]
        seen_mask = False
        for flag in m:
            if flag:
                seen_mask = True
            elif seen_mask:
                return True
    return False


def _ray_values(state: FockState, chi: float, radii: np.ndarray) -> np.ndarray:
    """Exact momentum wavefunction along the radial line at angle chi."""
    d1, d2 = state.amplitudes.shape
    b1 = hermite_basis(d1 - 1, radii * math.cos(chi)).astype(complex)
    b2 = hermite_basis(d2 - 1, radii * math.sin(chi)).astype(complex)
    b1 *= (1j ** np.arange(d1))[:, None]
    b2 *= (1j ** np.arange(d2))[:, None]
    return np.einsum("np,nm,mp->p", b1, state.amplitudes, b2, optimize=True)


def check_radial_sensitivity(
    state: FockState,
    chi_grid: tuple[float, ...],
    p_grid: np.ndarray,
    rel_tol: float = 1e-3,
) -> None:
    """Reject states whose momentum phase varies only with angle.

    The radial weak readout is blind to purely angular phase dependence:
    along every scan line the phase is flat, so the postselected meter
    expectation vanishes for every chi while the phase still differs between
    lines.  Detected from the exact wavefunction and reported as
    NotReconstructible.
    """
    radii = np.asarray(p_grid, dtype=float)
    rays = [_ray_values(state, float(c), radii) for c in chi_grid]
    amp_max = max(float(np.max(np.abs(r))) for r in rays)
    radial = 0.0
    across: list[tuple[int, float]] = []
    for ray in rays:
        good = np.abs(ray) > 1e-3 * amp_max
        ph = np.angle(ray)
        dr = np.angle(np.exp(1j * np.diff(ph)))
        both = good[1:] & good[:-1]
        if both.any():
            radial = max(radial, float(np.max(np.abs(dr[both]))))
        for k in np.nonzero(good)[0]:
            across.append((int(k), float(ph[k])))
    spread = 0.0
    by_radius: dict[int, list[float]] = {}
    for k, ph in across:
        by_radius.setdefault(k, []).append(ph)
    for values in by_radius.values():
        if len(values) > 1:
            z = np.exp(1j * np.asarray(values))
            spread = max(spread, float(np.max(np.abs(np.angle(z / z[0])))))
    if radial < rel_tol and spread > 0.1:
        raise NotReconstructible(
            "momentum phase varies only with angle; radial weak readouts are "
            "zero at every rotation and the scan carries no phase information"
        )


def assemble_joint_phase(
    records: list[WeakScanRecord],
    chi_grid: tuple[float, ...],
    p_grid: np.ndarray,
    r_max: float = 3.0,
) -> JointPhaseSurface:
    """Place the per-angle radial curves into the momentum plane.

    Angles whose scan shows an interior masked gap (phase jump) are treated
    as failed; cells nearest to them are bridged linearly in angle between
    the neighbouring usable scans and flagged `interpolated`.  Cells beyond
    `r_max`, or masked on both bracketing scans, are flagged `masked`.
    Requires at least 4 usable angles.
    """
    p = np.asarray(p_grid, dtype=float)
    chi_vals = [float(c) for c in chi_grid]
    by_chi = {c: {"prob": [], "phase": [], "masked": []} for c in chi_vals}
    for rec in records:
        row = by_chi.get(float(rec.chi))
        if row is None:
            continue
        row["prob"].append(rec.probability)
        row["phase"].append(rec.phase)
        row["masked"].append(rec.masked)
    curves = {}
    for c, row in by_chi.items():
        if len(row["prob"]) != p.size:
            raise ValueError(f"records for chi={c} do not cover the momentum grid")
        curves[c] = {
            "amp": np.sqrt(np.maximum(np.asarray(row["prob"]), 0.0)),
            "phase": np.asarray(row["phase"]),
            "masked": np.asarray(row["masked"], dtype=bool),
        }

    usable_set = {c for c in chi_vals if not _has_interior_gap(curves[c]["masked"], p)}
    failed = tuple(c for c in chi_vals if c not in usable_set)
    if len(usable_set) < 4:
        raise TooFewAngles(f"only {len(usable_set)} usable angle scans, need at least 4")

    # each scan line covers two plane directions: chi with p = +r, chi+pi with
    # p = -r; evaluation at radius r just interpolates the curve at sign*r
    ext = []  # (angle, usable, sign, curve)
    for c in chi_vals:
        for sign, shift in ((1.0, 0.0), (-1.0, math.pi)):
            ext.append(((c + shift) % (2.0 * math.pi), c in usable_set, sign, curves[c]))
    ext.sort(key=lambda t: t[0])
    ext_angles = np.array([t[0] for t in ext])
    usable_idx = np.array([k for k, t in enumerate(ext) if t[1]], dtype=int)
    u_angles = ext_angles[usable_idx]

    def curve_at(k: int, r: float) -> tuple[float, float, bool]:
        _, _, sign, cur = ext[k]
        pr = sign * r
        val = float(np.interp(pr, p, cur["phase"]))
        amp = float(np.interp(pr, p, cur["amp"]))
        bin_idx = int(np.clip(np.round((pr - p[0]) / (p[1] - p[0])), 0, p.size - 1))
        return val, amp, bool(cur["masked"][bin_idx])

    n = p.size
    phase = np.zeros((n, n))
    amp = np.zeros((n, n))
    masked = np.zeros((n, n), dtype=bool)
    interp_flag = np.zeros((n, n), dtype=bool)
    two_pi = 2.0 * math.pi
    for i in range(n):
        for j in range(n):
            x, y = p[i], p[j]
            r = math.hypot(x, y)
            if r > r_max:
                masked[i, j] = True
                continue
            ang = math.atan2(y, x) % two_pi
            gaps = np.abs(ext_angles - ang)
            nearest = int(np.argmin(np.minimum(gaps, two_pi - gaps)))
            interp_flag[i, j] = not ext[nearest][1]
            pos = int(np.searchsorted(u_angles, ang))
            lo_k = int(usable_idx[(pos - 1) % usable_idx.size])
            hi_k = int(usable_idx[pos % usable_idx.size])
            a_lo, a_hi = ext_angles[lo_k], ext_angles[hi_k]
            span = (a_hi - a_lo) % two_pi
            w_hi = ((ang - a_lo) % two_pi) / span if span > 0.0 else 0.0
            v_lo, m_lo_amp, m_lo = curve_at(lo_k, r)
            v_hi, m_hi_amp, m_hi = curve_at(hi_k, r)
            if m_lo and m_hi:
                masked[i, j] = True
            elif m_lo:
                phase[i, j], amp[i, j] = v_hi, m_hi_amp
            elif m_hi:
                phase[i, j], amp[i, j] = v_lo, m_lo_amp
            else:
                phase[i, j] = (1.0 - w_hi) * v_lo + w_hi * v_hi
                amp[i, j] = (1.0 - w_hi) * m_lo_amp + w_hi * m_hi_amp
    interp_flag &= ~masked
    return JointPhaseSurface(
        p1=p,
        p2=p.copy(),
        phase=phase,
        amplitude=amp,
        masked=masked,
        interpolated=interp_flag,
        usable_angles=tuple(sorted(usable_set)),
        failed_angles=failed,
    )
