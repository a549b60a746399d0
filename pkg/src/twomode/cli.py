"""Command-line front end: device sweeps, calibration, defect comparison,
homodyne campaigns, reconstruction and weak-value scans.

One executable with subcommands; every run writes its outputs plus a
manifest JSON recording the resolved configuration, seed and version.
Key=value config files supply defaults that explicit flags override, and
TWOMODE_OUT_DIR sets the directory for relative output paths.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, NormalizationError, ParseError
from . import coupler as cp
from . import homodyne as hd
from . import weak as wk
from .io import ManifestTimer, fmt, read_csv, state_from_json, state_to_json, write_csv
from .states import FockState, adequate_cutoff, coherent_state, noon2, product_state

RECORD_HEADER = ["chi", "psi", "value"]
HIST_HEADER = ["e1", "e2", "density"]
WEAK_HEADER = ["chi", "p", "probability", "meter_expectation", "phase", "masked"]
SURFACE_HEADER = ["p1", "p2", "phase", "amplitude", "masked"]
SWEEP_HEADER = ["delta_over_k0", "A", "B", "theta"]


def parse_state_spec(text: str, cutoff: int | None = None) -> FockState:
    """Build a normalized state from a compact textual spec.

    Formats: `coherent:a1_re,a1_im,a2_re,a2_im`, `noon:2`, and
    `fock-list: n1,n2=re,im; ...` (amplitudes within 1e-6 of unit norm).
    """
    spec = text.strip()
    colon = spec.find(":")
    if colon < 0:
        raise ParseError(f"missing ':' in state spec {spec!r}", position=len(spec))
    head, body = spec[:colon].strip(), spec[colon + 1 :]
    if head == "coherent":
        parts = body.split(",")
        if len(parts) != 4:
            raise ParseError("coherent spec needs 4 comma-separated numbers", position=colon + 1)
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            bad = next(p for p in parts if not _is_float(p))
            raise ParseError(f"bad number {bad.strip()!r}", position=spec.find(bad, colon)) from exc
        a1, a2 = complex(vals[0], vals[1]), complex(vals[2], vals[3])
        cut = cutoff if cutoff is not None else adequate_cutoff([a1, a2])
        return product_state(coherent_state(a1, cut), coherent_state(a2, cut))
    if head == "noon":
        if body.strip() != "2":
            raise ParseError("only noon:2 is supported", position=colon + 1)
        return noon2(cutoff if cutoff is not None else 12)
    if head == "fock-list":
        entries = [e for e in body.split(";") if e.strip()]
        if not entries:
            raise ParseError("fock-list needs at least one entry", position=colon + 1)
        terms = []
        for entry in entries:
            m = re.fullmatch(
                r"\s*(\d+)\s*,\s*(\d+)\s*=\s*([^,]+)\s*,\s*([^,]+)\s*", entry
            )
            if m is None:
                raise ParseError(
                    f"bad fock-list entry {entry.strip()!r}", position=spec.find(entry, colon)
                )
            try:
                n1, n2 = int(m.group(1)), int(m.group(2))
                amp = complex(float(m.group(3)), float(m.group(4)))
            except ValueError as exc:
                raise ParseError(
                    f"bad number in entry {entry.strip()!r}", position=spec.find(entry, colon)
                ) from exc
            terms.append((n1, n2, amp))
        n_max = max(max(n1, n2) for n1, n2, _ in terms)
        cut = cutoff if cutoff is not None else max(n_max, 2)
        if cut < n_max:
            raise ParseError(f"cutoff {cut} below the largest photon number {n_max}")
        amps = np.zeros((cut + 1, cut + 1), dtype=complex)
        for n1, n2, amp in terms:
            amps[n1, n2] += amp
        norm = float(np.sum(np.abs(amps) ** 2))
        if abs(norm - 1.0) > 1e-6:
            raise NormalizationError(
                f"fock-list squared norm {norm!r} deviates from 1 by more than 1e-6"
            )
        return FockState(amps)
    raise ParseError(f"unknown state family {head!r}", position=0)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def _out_path(name: str) -> Path:
    base = os.environ.get("TWOMODE_OUT_DIR", "")
    p = Path(name)
    return p if p.is_absolute() or not base else Path(base) / p


def _load_config_file(argv: list[str]) -> dict:
    """Pull key=value defaults from a --config file before parsing."""
    if "--config" not in argv:
        return {}
    path = argv[argv.index("--config") + 1]
    defaults = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


def _coupler_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kappa", type=float, default=None, help="coupling coefficient, rad/m")
    p.add_argument("--kappa-over-k0", type=float, default=None, help="kappa as a fraction of k0")
    p.add_argument("--length-mm", type=float, default=2.0, help="electrode section length, mm")
    p.add_argument("--wavelength-nm", type=float, default=650.0, help="vacuum wavelength, nm")


def _base_settings(args, default_quarter: bool = False) -> cp.CouplerSettings:
    length = args.length_mm * 1e-3
    wavelength = args.wavelength_nm * 1e-9
    if args.kappa is not None:
        kappa = args.kappa
    elif args.kappa_over_k0 is not None:
        kappa = args.kappa_over_k0 * 2.0 * math.pi / wavelength
    elif default_quarter:
        kappa = (math.pi / 4.0) / length  # full rotation range on the first branch
    else:
        raise ParseError("one of --kappa or --kappa-over-k0 is required")
    return cp.CouplerSettings(kappa=kappa, length=length, wavelength=wavelength)


def _load_state(args) -> FockState:
    if getattr(args, "state", None):
        with open(args.state) as fh:
            return state_from_json(json.load(fh))
    if getattr(args, "spec", None):
        return parse_state_spec(args.spec, cutoff=getattr(args, "cutoff", None))
    raise ParseError("a state is required: pass --spec or --state")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_sweep(args) -> int:
    base = _base_settings(args)
    grid = np.linspace(args.dk_min, args.dk_max, args.points)
    out = _out_path(args.out)
    with ManifestTimer("sweep", _public(args)) as man:
        data = cp.sweep_response(base, grid)
        write_csv(out, SWEEP_HEADER, zip(data["delta_over_k0"], data["A"], data["B"], data["theta"]))
        man.outputs.append(str(out))
    print(f"wrote {out}")
    return 0


def _cmd_solve(args) -> int:
    base = _base_settings(args, default_quarter=True)
    window = tuple(args.window) if args.window else None
    out = _out_path(args.out)
    with ManifestTimer("solve", _public(args)) as man:
        solved = cp.solve_settings(args.theta, args.phi, base, delta_window=window)
        response = cp.cell_response(solved)
        matrix = cp.su2_matrix(solved, args.phi)
        target = np.array(
            [
                [math.cos(args.theta / 2), math.sin(args.theta / 2) * np.exp(-1j * args.phi)],
                [-math.sin(args.theta / 2) * np.exp(1j * args.phi), math.cos(args.theta / 2)],
            ]
        )
        doc = {
            "kappa": solved.kappa,
            "length": solved.length,
            "wavelength": solved.wavelength,
            "delta": solved.delta,
            "phi1": solved.phi1,
            "phi2": solved.phi2,
            "chi": response.chi,
            "big_theta": response.big_theta,
            "chi_error": abs(response.chi - args.theta / 2),
            "matrix": [[c.real, c.imag] for c in matrix.matrix.ravel()],
            "matrix_residual": cp.aligned_distance(matrix, target),
        }
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        man.outputs.append(str(out))
    print(f"wrote {out}")
    return 0


def _cmd_defects(args) -> int:
    base = _base_settings(args, default_quarter=True)
    target = np.array(
        [
            [math.cos(args.theta / 2), math.sin(args.theta / 2) * np.exp(-1j * args.phi)],
            [-math.sin(args.theta / 2) * np.exp(1j * args.phi), math.cos(args.theta / 2)],
        ]
    )
    out = _out_path(args.out)
    with ManifestTimer("defects", _public(args)) as man:
        recal = {}
        for label, fac_k, fac_l in (
            ("kappa+", 1.0 + args.perturb, 1.0),
            ("kappa-", 1.0 - args.perturb, 1.0),
            ("length+", 1.0, 1.0 + args.perturb),
            ("length-", 1.0, 1.0 - args.perturb),
        ):
            pert = base.replace(kappa=base.kappa * fac_k, length=base.length * fac_l)
            solved = cp.solve_settings(args.theta, args.phi, pert)
            recal[label] = cp.aligned_distance(cp.su2_matrix(solved, args.phi), target)
        mzi = cp.DefectMzi(eps1=args.eps1, eps2=args.eps2, eta=args.eta)
        off_imag, diag_imag = cp.mzi_residuals(mzi)
        doc = {
            "recalibrated_residuals": recal,
            "mzi": {
                "eps1": args.eps1,
                "eps2": args.eps2,
                "eta": args.eta,
                "off_diagonal_imag": off_imag,
                "diagonal_imag": diag_imag,
                "unitarity_defect": cp.defective_mzi(mzi).unitarity_defect(),
            },
        }
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        man.outputs.append(str(out))
    print(f"wrote {out}")
    return 0


def _cmd_state(args) -> int:
    state = parse_state_spec(args.spec, cutoff=args.cutoff)
    out = _out_path(args.out)
    with ManifestTimer("state", _public(args)) as man:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w") as fh:
            json.dump(state_to_json(state), fh)
            fh.write("\n")
        man.outputs.append(str(out))
    print(f"wrote {out}")
    return 0


def _cmd_homodyne(args) -> int:
    state = _load_state(args)
    chi_list = tuple(np.linspace(0.0, math.pi, args.chi_count, endpoint=False))
    psi_list = tuple(np.linspace(0.0, 2.0 * math.pi, args.psi_count, endpoint=False))
    config = hd.HomodyneConfig(
        lo_amplitude=args.lo,
        strategy=args.strategy,
        n_samples=args.samples,
        chi_list=chi_list,
        psi_list=psi_list,
        seed=args.seed,
        workers=args.workers,
    )
    out = _out_path(args.out)
    with ManifestTimer("homodyne", _public(args), seed=args.seed) as man:
        records = hd.run_campaign(state, config)
        write_csv(out, RECORD_HEADER, ((r.chi, r.psi, r.value) for r in records))
        man.outputs.append(str(out))
        if args.state:
            man.inputs.append(args.state)
    print(f"wrote {out} ({len(records)} records)")
    return 0


def _cmd_reconstruct(args) -> int:
    rows = read_csv(args.records, RECORD_HEADER)
    out = _out_path(args.out)
    with ManifestTimer("reconstruct", _public(args)) as man:
        man.inputs.append(args.records)
        hist = hd.reconstruct_joint(
            rows, method=args.method, bins=args.bins, extent=args.extent, signed=not args.unsigned
        )
        c1, c2 = hist.centers1, hist.centers2
        out_rows = []
        for i, e1 in enumerate(c1):
            for j, e2 in enumerate(c2):
                out_rows.append((e1, e2, hist.density[i, j]))
        write_csv(out, HIST_HEADER, out_rows)
        man.outputs.append(str(out))
        if args.fit != "none":
            reports = {
                impl: hd.fit_moments(hist, model=args.fit, impl=impl)
                for impl in ("lsq", "simplex")
            }
            doc = {
                impl: {
                    "mean1": r.mean1,
                    "mean2": r.mean2,
                    "width1": r.width1,
                    "width2": r.width2,
                    "residual": r.residual,
                    "model": r.model,
                }
                for impl, r in reports.items()
            }
            report_path = _out_path(args.report)
            with open(report_path, "w") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
            man.outputs.append(str(report_path))
    print(f"wrote {out}")
    return 0


def _cmd_weak(args) -> int:
    state = _load_state(args)
    chi_grid = tuple(np.linspace(0.0, math.pi, args.chi_count, endpoint=False))
    p_grid = tuple(np.linspace(args.p_min, args.p_max, args.p_bins))
    config = wk.WeakConfig(
        gamma_w=args.gamma_w,
        chi_grid=chi_grid,
        p_grid=p_grid,
        postselect_window=args.window,
        mask_threshold=args.mask,
    )
    out = _out_path(args.out)
    with ManifestTimer("weak", _public(args), seed=args.seed) as man:
        wk.check_radial_sensitivity(state, chi_grid, np.asarray(p_grid))
        if args.samples > 0:
            records, samples = wk.weak_scan_sampled(state, config, args.samples, seed=args.seed)
            if args.samples_out:
                samples_path = _out_path(args.samples_out)
                write_csv(samples_path, ["chi", "p"], samples)
                man.outputs.append(str(samples_path))
        else:
            records = wk.weak_scan(state, config)
        write_csv(
            out,
            WEAK_HEADER,
            ((r.chi, r.p, r.probability, r.meter_expectation, r.phase, r.masked) for r in records),
        )
        man.outputs.append(str(out))
        if args.surface:
            surf = wk.assemble_joint_phase(records, chi_grid, np.asarray(p_grid), r_max=args.r_max)
            surf_rows = []
            for i, p1 in enumerate(surf.p1):
                for j, p2 in enumerate(surf.p2):
                    phase = math.nan if surf.masked[i, j] else surf.phase[i, j]
                    amp = math.nan if surf.masked[i, j] else surf.amplitude[i, j]
                    surf_rows.append((p1, p2, phase, amp, surf.masked[i, j]))
            surface_path = _out_path(args.surface)
            write_csv(surface_path, SURFACE_HEADER, surf_rows)
            man.outputs.append(str(surface_path))
    print(f"wrote {out} ({len(records)} records)")
    return 0


def _public(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func" and v is not None}


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="twomode",
        description="Two-mode quantum light detection on a reconfigurable coupler",
    )
    parser.add_argument("--version", action="version", version=f"twomode {__version__}")
    parser.add_argument("--config", default=None, help="key=value defaults file")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("sweep", help="device response curves vs delta/k0")
    _coupler_args(p)
    p.add_argument("--dk-min", type=float, default=0.0)
    p.add_argument("--dk-max", type=float, default=0.01)
    p.add_argument("--points", type=int, default=2001)
    p.add_argument("--out", default="sweep.csv")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("solve", help="electrode settings for a target rotation")
    _coupler_args(p)
    p.add_argument("--theta", type=float, required=True, help="target rotation parameter, rad")
    p.add_argument("--phi", type=float, default=0.0, help="target off-diagonal phase, rad")
    p.add_argument("--window", type=float, nargs=2, default=None, metavar=("LO", "HI"))
    p.add_argument("--out", default="settings.json")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("defects", help="recalibrated cell vs defective MZI")
    _coupler_args(p)
    p.add_argument("--theta", type=float, default=1.9)
    p.add_argument("--phi", type=float, default=0.7)
    p.add_argument("--perturb", type=float, default=0.05, help="fractional kappa/L error")
    p.add_argument("--eps1", type=float, default=0.01)
    p.add_argument("--eps2", type=float, default=0.02)
    p.add_argument("--eta", type=float, default=0.1)
    p.add_argument("--out", default="defects.json")
    p.set_defaults(func=_cmd_defects)

    p = sub.add_parser("state", help="parse a state spec into JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--out", default="state.json")
    p.set_defaults(func=_cmd_state)

    p = sub.add_parser("homodyne", help="Monte Carlo homodyne campaign")
    p.add_argument("--spec", default=None, help="state spec text")
    p.add_argument("--state", default=None, help="state JSON file")
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--strategy", choices=hd.STRATEGIES, default="phase-random")
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chi-count", type=int, default=16)
    p.add_argument("--psi-count", type=int, default=8)
    p.add_argument("--lo", type=float, default=1.0, help="local oscillator amplitude")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="records.csv")
    p.set_defaults(func=_cmd_homodyne)

    p = sub.add_parser("reconstruct", help="records to 2-D distribution + fit")
    p.add_argument("--records", required=True)
    p.add_argument("--method", choices=["scatter", "back-projection"], default="scatter")
    p.add_argument("--bins", type=int, default=101)
    p.add_argument("--extent", type=float, default=None)
    p.add_argument("--unsigned", action="store_true", help="deposit |value| instead")
    p.add_argument("--fit", choices=["ring", "gaussian", "none"], default="none")
    p.add_argument("--report", default="fit.json")
    p.add_argument("--out", default="hist.csv")
    p.set_defaults(func=_cmd_reconstruct)

    p = sub.add_parser("weak", help="weak-value scan and joint phase surface")
    p.add_argument("--spec", default=None)
    p.add_argument("--state", default=None)
    p.add_argument("--cutoff", type=int, default=None)
    p.add_argument("--gamma-w", type=float, default=0.05)
    p.add_argument("--chi-count", type=int, default=8)
    p.add_argument("--p-min", type=float, default=-3.2)
    p.add_argument("--p-max", type=float, default=3.2)
    p.add_argument("--p-bins", type=int, default=129)
    p.add_argument("--window", type=float, default=0.2, help="postselection half-width")
    p.add_argument("--mask", type=float, default=1e-3, help="probability mask threshold")
    p.add_argument("--r-max", type=float, default=3.0)
    p.add_argument("--samples", type=int, default=0, help="Monte Carlo samples (0 = exact)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="weak_records.csv")
    p.add_argument("--surface", default="weak_surface.csv")
    p.add_argument("--samples-out", default=None)
    p.set_defaults(func=_cmd_weak)

    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        defaults = _load_config_file(argv)
    except (OSError, ParseError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if defaults:
        coerced = {}
        for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
            for act in action._actions:  # noqa: SLF001
                key = act.dest
                if key in defaults and key not in coerced:
                    raw = defaults[key]
                    coerced[key] = act.type(raw) if act.type else raw
            action.set_defaults(**{k: v for k, v in coerced.items()})
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DomainError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        # bad parameter values are usage errors, like unknown flags
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
