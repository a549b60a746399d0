"""Reversed-mismatch electro-optic directional coupler: closed forms and calibration.

The cell is a two-guide coupler of section length ``L`` carrying two electrode
sections with opposite-sign propagation mismatch (+delta then -delta along the
light path), framed by phase shifters phi1/phi2 on the lower guide.  The closed
forms below give its 2x2 mode transfer matrix; an independently integrated
coupled-mode ODE serves as the validation oracle.  Calibration inverts the
closed forms: pick delta for the wanted effective rotation, then the phase
shifters for the wanted off-diagonal phase.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonMonotoneWindow, StepTooCoarse, TargetUnreachable

__all__ = [
    "CouplerSettings",
    "CellResponse",
    "TransferMatrix2",
    "CoupledModeSystem",
    "DefectMzi",
    "cell_response",
    "transfer_matrix",
    "su2_matrix",
    "solve_settings",
    "ode_oracle",
    "transfer_matrix_from_ode",
    "defective_3db",
    "defective_mzi",
    "mzi_residuals",
    "aligned_distance",
    "sweep_response",
]


@dataclass(frozen=True)
class CouplerSettings:
    """Physical and electrical parameters of one coupler cell.

    kappa      coupling coefficient, rad/m (> 0)
    length     electrode section length L, m; the closed forms use beta_r * L
    wavelength vacuum wavelength, m
    delta      half propagation-constant mismatch, rad/m (sign = electrode bias)
    phi1, phi2 input/output phase shifts on the lower guide, rad
    """

    kappa: float
    length: float
    wavelength: float = 650e-9
    delta: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0

    def __post_init__(self):
        if not (self.kappa > 0):
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not (self.length > 0):
            raise ValueError(f"length must be positive, got {self.length}")
        if not (self.wavelength > 0):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        if not math.isfinite(self.delta):
            raise ValueError(f"delta must be finite, got {self.delta}")

    @property
    def k0(self) -> float:
        """Vacuum propagation constant 2*pi/wavelength, rad/m."""
        return 2.0 * math.pi / self.wavelength

    def replace(self, **kwargs) -> "CouplerSettings":
        from dataclasses import replace

        return replace(self, **kwargs)


@dataclass(frozen=True)
class CellResponse:
    """Closed-form response functions of the cell at one delta.

    u, v are the single-section amplitudes, a_coef = u^2 - v^2 and
    b_coef = 2uv the composite-cell coefficients, theta the section phase,
    big_theta = 4*atan2(v, u) the rotation parameter and chi = big_theta/2
    the effective rotation angle in the field-strength plane.
    """

    u: float
    v: float
    theta: float
    a_coef: float
    b_coef: float
    beta_r: float
    big_theta: float
    chi: float


@dataclass(frozen=True)
class TransferMatrix2:
    """2x2 complex mode transformation, row-major; `unitary` marks ideal devices."""

    matrix: np.ndarray
    unitary: bool = True

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def unitarity_defect(self) -> float:
        """Max-entry deviation of M^dag M from the identity."""
        return float(np.max(np.abs(self.matrix.conj().T @ self.matrix - np.eye(2))))


def cell_response(settings: CouplerSettings) -> CellResponse:
    """Evaluate the closed-form cell functions at the given settings.

    u = [cos^2(beta_r L) + (delta/beta_r)^2 sin^2(beta_r L)]^(1/2),
    v = (kappa/beta_r) sin(beta_r L), with beta_r = sqrt(kappa^2 + delta^2);
    theta is taken as atan2((delta/beta_r) sin, cos) so that
    u*exp(i*theta) = cos(beta_r L) + i (delta/beta_r) sin(beta_r L) holds on
    every branch (u >= 0 by construction, v carries the sign of the sine).
    """
    kappa, delta, length = settings.kappa, settings.delta, settings.length
    beta_r = math.hypot(kappa, delta)
    arg = beta_r * length
    c, s = math.cos(arg), math.sin(arg)
    u = math.hypot(c, (delta / beta_r) * s)
    v = (abs(kappa) / beta_r) * s
    theta = math.atan2((delta / beta_r) * s, c)
    a_coef = u * u - v * v
    b_coef = 2.0 * u * v
    big_theta = 4.0 * math.atan2(v, u)
    chi = math.atan2(b_coef, a_coef)
    return CellResponse(u=u, v=v, theta=theta, a_coef=a_coef, b_coef=b_coef,
                        beta_r=beta_r, big_theta=big_theta, chi=chi)


def transfer_matrix(settings: CouplerSettings) -> TransferMatrix2:
    """Mode transfer matrix of the full cell including both phase shifters.

    Rows/columns follow guide order (upper, lower):

        [[A,                       i B e^{i(theta+phi2)}   ],
         [i B e^{-i(theta-phi1)},  A e^{i(phi1+phi2)}      ]]
    """
    r = cell_response(settings)
    a, b, theta = r.a_coef, r.b_coef, r.theta
    phi1, phi2 = settings.phi1, settings.phi2
    m = np.array(
        [
            [a, 1j * b * np.exp(1j * (theta + phi2))],
            [1j * b * np.exp(-1j * (theta - phi1)), a * np.exp(1j * (phi1 + phi2))],
        ],
        dtype=complex,
    )
    return TransferMatrix2(m)


def su2_phases(settings: CouplerSettings, big_phi: float) -> tuple[float, float]:
    """Phase-shifter values phi1 = big_phi + theta + pi/2 = -phi2."""
    theta = cell_response(settings).theta
    phi1 = big_phi + theta + math.pi / 2.0
    return phi1, -phi1


def su2_matrix(settings: CouplerSettings, big_phi: float) -> TransferMatrix2:
    """SU(2) form of the cell: [[A, B e^{-i Phi}], [-B e^{i Phi}, A]].

    Equivalent to `transfer_matrix` with the shifters set by `su2_phases`;
    built directly from A, B here so the two routes stay independent.
    For big_phi = n*pi the matrix is real orthogonal with determinant +1.
    """
    r = cell_response(settings)
    a, b = r.a_coef, r.b_coef
    m = np.array(
        [[a, b * np.exp(-1j * big_phi)], [-b * np.exp(1j * big_phi), a]],
        dtype=complex,
    )
    return TransferMatrix2(m)


def aligned_distance(m1: np.ndarray | TransferMatrix2, m2: np.ndarray | TransferMatrix2) -> float:
    """Spectral-norm distance min over a global phase, ||M1 - e^{i phi} M2||_2.

    The phase is the Frobenius-optimal alignment arg tr(M2^dag M1).
    """
    a = m1.matrix if isinstance(m1, TransferMatrix2) else np.asarray(m1, dtype=complex)
    b = m2.matrix if isinstance(m2, TransferMatrix2) else np.asarray(m2, dtype=complex)
    t = np.trace(b.conj().T @ a)
    phase = t / abs(t) if abs(t) > 0 else 1.0
    return float(np.linalg.norm(a - phase * b, ord=2))


@dataclass(frozen=True)
class CoupledModeSystem:
    """Two coupled guides integrated segment by segment.

    betas     base propagation constants (beta1, beta2), rad/m; their half
              difference is the mismatch modulated by the electrode sign
    coupling  cross-coupling matrix, rad/m (Hermitian; diagonal already
              absorbed into betas)
    segments  (length_m, sign) pairs; sign flips the mismatch contribution
    """

    betas: tuple[float, float]
    coupling: np.ndarray
    segments: tuple[tuple[float, int], ...]

    def __post_init__(self):
        k = np.asarray(self.coupling, dtype=complex)
        if k.shape != (2, 2) or not np.allclose(k, k.conj().T, atol=1e-12):
            raise ValueError("coupling must be a Hermitian 2x2 matrix")
        k = k.copy()
        k.flags.writeable = False
        object.__setattr__(self, "coupling", k)
        object.__setattr__(self, "segments", tuple((float(l), int(s)) for l, s in self.segments))
        if any(l <= 0 for l, _ in self.segments):
            raise ValueError("segment lengths must be positive")

    @classmethod
    def from_settings(cls, settings: CouplerSettings) -> "CoupledModeSystem":
        """Electrode layout matching the closed forms: -delta section first,
        +delta section second, each of length `settings.length` (frozen by the
        delta = 0 agreement with the closed-form cell)."""
        coupling = np.array([[0.0, settings.kappa], [settings.kappa, 0.0]], dtype=complex)
        return cls(
            betas=(settings.delta, -settings.delta),
            coupling=coupling,
            segments=((settings.length, -1), (settings.length, +1)),
        )


def ode_oracle(
    system: CoupledModeSystem,
    amplitudes: tuple[complex, complex],
    steps_per_segment: int = 1024,
    check: bool = False,
) -> tuple[complex, complex]:
    """Propagate two mode amplitudes through all segments with fixed-step RK4.

    da_1/dz = i (mean + s*dlt) a_1 + i k12 a_2
    da_2/dz = i (mean - s*dlt) a_2 + i k21 a_1

    With `check=True` the integration is repeated at half the step and
    `StepTooCoarse` is raised if any output moves by more than 1e-8.
    """

    def run(nsteps: int) -> tuple[complex, complex]:
        a1, a2 = complex(amplitudes[0]), complex(amplitudes[1])
        mean = 0.5 * (system.betas[0] + system.betas[1])
        dlt = 0.5 * (system.betas[0] - system.betas[1])
        k12 = complex(system.coupling[0, 1])
        k21 = complex(system.coupling[1, 0])
        for seg_len, sign in system.segments:
            b1 = 1j * (mean + sign * dlt)
            b2 = 1j * (mean - sign * dlt)
            c12 = 1j * k12
            c21 = 1j * k21
            h = seg_len / nsteps
            for _ in range(nsteps):
                k1a = b1 * a1 + c12 * a2
                k1b = b2 * a2 + c21 * a1
                x1, x2 = a1 + 0.5 * h * k1a, a2 + 0.5 * h * k1b
                k2a = b1 * x1 + c12 * x2
                k2b = b2 * x2 + c21 * x1
                x1, x2 = a1 + 0.5 * h * k2a, a2 + 0.5 * h * k2b
                k3a = b1 * x1 + c12 * x2
                k3b = b2 * x2 + c21 * x1
                x1, x2 = a1 + h * k3a, a2 + h * k3b
                k4a = b1 * x1 + c12 * x2
                k4b = b2 * x2 + c21 * x1
                a1 = a1 + (h / 6.0) * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
                a2 = a2 + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        return a1, a2

    out = run(steps_per_segment)
    if check:
        fine = run(2 * steps_per_segment)
        err = max(abs(out[0] - fine[0]), abs(out[1] - fine[1]))
        if err > 1e-8:
            raise StepTooCoarse(
                f"halving the step moved the output by {err:.3e} (> 1e-8); "
                f"increase steps_per_segment from {steps_per_segment}"
            )
    return out


def transfer_matrix_from_ode(settings: CouplerSettings, steps_per_segment: int = 1024) -> TransferMatrix2:
    """Transfer matrix assembled column by column from the ODE oracle,
    with the phase shifters applied as diagonal factors around the coupled
    section (phi2 on the lower guide at the input, phi1 at the output)."""
    system = CoupledModeSystem.from_settings(settings)
    cols = []
    for basis in ((1.0 + 0.0j, 0.0j), (0.0j, 1.0 + 0.0j)):
        cols.append(ode_oracle(system, basis, steps_per_segment))
    core = np.array(cols, dtype=complex).T
    pre = np.diag([1.0, np.exp(1j * settings.phi2)])
    post = np.diag([1.0, np.exp(1j * settings.phi1)])
    return TransferMatrix2(post @ core @ pre)


def _prescan_chi(base: CouplerSettings, lo: float, hi: float, n: int = 10_000):
    deltas = np.linspace(lo, hi, n)
    chis = np.empty_like(deltas)
    for i, d in enumerate(deltas):
        chis[i] = cell_response(base.replace(delta=float(d))).chi
    return deltas, chis


def default_delta_window(base: CouplerSettings, n: int = 10_000) -> tuple[float, float]:
    """First monotone branch of chi(delta) at and above delta = 0.

    A dense scan walks upward until the sign of the first difference flips;
    the window ends one scan point before the reversal.
    """
    hi = 4.0 * math.pi / base.length
    deltas, chis = _prescan_chi(base, 0.0, hi, n)
    diffs = np.diff(chis)
    direction = np.sign(diffs[np.nonzero(diffs)[0][0]]) if np.any(diffs) else 0.0
    if direction == 0.0:
        return 0.0, hi
    reversal = np.nonzero(np.sign(diffs) == -direction)[0]
    # stop two scan points short of the reversal so the window stays strictly
    # monotone under any finer re-scan of the flat extremum
    end = deltas[max(reversal[0] - 1, 1)] if reversal.size else hi
    return 0.0, float(end)


def solve_settings(
    target_theta: float,
    target_phi: float,
    base: CouplerSettings,
    delta_window: tuple[float, float] | None = None,
    scan_points: int = 10_000,
) -> CouplerSettings:
    """Find electrode settings realizing the rotation parameter `target_theta`
    (in [0, pi]) and off-diagonal phase `target_phi`.

    delta is bisected on the monotone branch chi(delta) until
    |chi - target_theta/2| converges (relative delta tolerance 1e-12), then
    phi1/phi2 are set from the branch-consistent theta at the solution.

    Raises TargetUnreachable if the pre-scan never brackets the target inside
    the window and NonMonotoneWindow if chi reverses direction inside it.
    """
    if not (0.0 <= target_theta <= math.pi):
        raise ValueError(f"target_theta must lie in [0, pi], got {target_theta}")
    target_chi = 0.5 * target_theta
    if delta_window is None:
        delta_window = default_delta_window(base, scan_points)
    lo, hi = float(delta_window[0]), float(delta_window[1])
    if not hi > lo:
        raise ValueError("delta_window must satisfy lo < hi")

    deltas, chis = _prescan_chi(base, lo, hi, scan_points)
    diffs = np.diff(chis)
    # reversals at rounding scale are flat-spot noise, not direction changes
    tol = 1e-9 * max(np.max(np.abs(diffs)), 1e-300)
    nz = np.nonzero(np.abs(diffs) > tol)[0]
    if nz.size:
        direction = np.sign(diffs[nz[0]])
        if np.any(np.sign(diffs[nz]) == -direction):
            raise NonMonotoneWindow(
                "chi(delta) reverses direction inside the window; narrow the window"
            )

    resid = chis - target_chi
    hit = np.nonzero(np.abs(resid) < 1e-15)[0]
    if hit.size:
        delta_star = float(deltas[hit[0]])
    else:
        crossings = np.nonzero(np.diff(np.sign(resid)) != 0)[0]
        if not crossings.size:
            raise TargetUnreachable(
                f"chi never crosses {target_chi:.6f} rad for delta in "
                f"[{lo:.6g}, {hi:.6g}] rad/m"
            )
        i = crossings[0]
        from scipy.optimize import brentq

        delta_star = brentq(
            lambda d: cell_response(base.replace(delta=float(d))).chi - target_chi,
            deltas[i],
            deltas[i + 1],
            xtol=1e-300,
            rtol=1e-12,
            maxiter=200,
        )

    solved = base.replace(delta=float(delta_star))
    phi1, phi2 = su2_phases(solved, target_phi)
    return solved.replace(phi1=phi1, phi2=phi2)


def defective_3db(eps: float) -> TransferMatrix2:
    """3 dB coupler with a first-order fabrication defect eps (|eps| < 1).

    (1/sqrt 2) [[1-eps, i(1+eps)], [i(1+eps), 1-eps]]; flagged non-unitary.
    """
    if not abs(eps) < 1.0:
        raise ValueError(f"|eps| must be < 1, got {eps}")
    a, b = 1.0 - eps, 1.0 + eps
    m = np.array([[a, 1j * b], [1j * b, a]], dtype=complex) / math.sqrt(2.0)
    return TransferMatrix2(m, unitary=(eps == 0.0))


@dataclass(frozen=True)
class DefectMzi:
    """Mach-Zehnder built from two defective 3 dB couplers and a phase eta.

    eps1/eps2 are the couplers' first-order defect parameters; the model is
    only first order, so values above 0.1 trigger a warning.
    """

    eps1: float
    eps2: float
    eta: float

    def __post_init__(self):
        if max(abs(self.eps1), abs(self.eps2)) > 0.1:
            warnings.warn(
                "defect parameters above 0.1: the first-order MZI model is unreliable",
                stacklevel=2,
            )


def defective_mzi(defect: DefectMzi) -> TransferMatrix2:
    """Transfer matrix of the defective MZI (global phase dismissed):

        [[cos(eta)+i(e1+e2)sin(eta),  sin(eta)+i(e2-e1)cos(eta)],
         [sin(eta)-i(e2-e1)cos(eta), -cos(eta)+i(e1+e2)sin(eta)]]
    """
    e1, e2, eta = defect.eps1, defect.eps2, defect.eta
    c, s = math.cos(eta), math.sin(eta)
    sum_term = (e1 + e2) * s
    diff_term = (e2 - e1) * c
    m = np.array(
        [
            [c + 1j * sum_term, s + 1j * diff_term],
            [s - 1j * diff_term, -c + 1j * sum_term],
        ],
        dtype=complex,
    )
    return TransferMatrix2(m, unitary=(e1 == 0.0 and e2 == 0.0))


def mzi_residuals(defect: DefectMzi) -> tuple[float, float]:
    """Irreducible imaginary residuals of the defective MZI: the off-diagonal
    magnitude |eps2-eps1|*|cos eta| and diagonal magnitude (eps1+eps2)*|sin eta|.
    Neither can be removed by output phase shifters."""
    off = abs(defect.eps2 - defect.eps1) * abs(math.cos(defect.eta))
    diag = abs(defect.eps1 + defect.eps2) * abs(math.sin(defect.eta))
    return off, diag


def sweep_response(base: CouplerSettings, delta_over_k0: np.ndarray) -> dict[str, np.ndarray]:
    """Evaluate A, B, theta over a delta/k0 grid; theta is unwrapped along the
    sweep so the shifter recipe varies continuously with delta."""
    k0 = base.k0
    grid = np.asarray(delta_over_k0, dtype=float)
    a = np.empty_like(grid)
    b = np.empty_like(grid)
    theta = np.empty_like(grid)
    for i, x in enumerate(grid):
        r = cell_response(base.replace(delta=float(x * k0)))
        a[i], b[i], theta[i] = r.a_coef, r.b_coef, r.theta
    return {"delta_over_k0": grid, "A": a, "B": b, "theta": np.unwrap(theta)}
