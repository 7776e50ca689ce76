"""``simulate`` command line: scenario runs and parameter sweeps.

Exit codes: 0 success (including fits that did not converge), 2 usage or
scenario errors, 3 simulation failures.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .ensemble import PropagationError
from .fitkit import FitInputError, ModelSelectionError, fit, select_model
from .retrieval import decay_curve
from .scenario import Scenario, ScenarioError, get_field, load_scenario, scenario_hash, set_field
from .stimulation import delay_vs_power, delays_to_csv

log = logging.getLogger("spinwave")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def resolve_scenario_path(name: str) -> Path:
    """A filesystem path, or the name of a scenario bundled with the package."""
    path = Path(name)
    if path.exists():
        return path
    bundled = resources.files("spinwave") / "scenarios" / path.name
    if bundled.is_file():
        return Path(str(bundled))
    return path


def _load(path: str, seed: int | None, atoms: int | None) -> Scenario:
    try:
        sc = load_scenario(resolve_scenario_path(path))
        if seed is not None:
            sc = set_field(sc, "sim.seed", seed)
        if atoms is not None:
            sc = set_field(sc, "sim.n_atoms", atoms)
    except ScenarioError as err:
        raise CliError(EXIT_USAGE, f"{path}: invalid scenario at {err}") from None
    except OSError as err:
        raise CliError(EXIT_USAGE, f"cannot read scenario: {err}") from None
    return sc


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def execute(sc: Scenario, out: Path, threads: int | None = None) -> dict:
    """Run one scenario into ``out``; returns a small summary dict."""
    out.mkdir(parents=True, exist_ok=True)
    try:
        curve = decay_curve(sc, threads=threads)
    except PropagationError as err:
        raise CliError(EXIT_RUNTIME, f"simulation failed: {err}") from None
    except ValueError as err:
        raise CliError(EXIT_RUNTIME, f"simulation failed: {err}") from None
    curve.write_csv(out / "curve.csv")
    files = ["curve.csv"]

    try:
        fits = [fit(curve, m) for m in sc.analysis.fit_models]
    except FitInputError as err:
        raise CliError(EXIT_USAGE, f"cannot fit: {err}") from None
    try:
        chosen, selected = select_model(curve, sc.analysis.fit_models)
        dominant = chosen.dominant_tau
    except ModelSelectionError:
        selected, dominant = None, None
        log.warning("no fit converged; recording converged=false")
    (out / "fit.json").write_text(json.dumps(
        {"selected": selected, "fits": [f.to_dict() for f in fits]}, indent=2) + "\n")
    files.append("fit.json")

    longest = None
    if sc.stimulation is not None:
        st = sc.stimulation
        rows = delay_vs_power(st.gain_per_watt, st.decay_rate_hz, st.threshold, st.powers_w)
        (out / "stimulation.csv").write_text(delays_to_csv(rows))
        files.append("stimulation.csv")
        defined = [d for _, d in rows if d is not None]
        longest = max(defined) if defined else None

    manifest = {
        "spinwave_version": __version__,
        "scenario": sc.model_dump(mode="json"),
        "scenario_hash": scenario_hash(sc),
        "seed": sc.sim.seed,
        "n_atoms": sc.sim.n_atoms,
        "files": {name: _sha256(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return {"selected": selected, "dominant_tau_s": dominant, "longest_delay_s": longest}


def _parse_value(text: str):
    text = text.strip()
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def cmd_run(args) -> int:
    sc = _load(args.scenario, args.seed, args.atoms)
    summary = execute(sc, Path(args.out), args.threads)
    log.info("run finished: selected model %s", summary["selected"])
    return EXIT_OK


def cmd_sweep(args) -> int:
    raw = [v for v in (args.values or "").split(",") if v.strip()]
    if not raw:
        raise CliError(EXIT_USAGE, "--values must list at least one value")
    base = _load(args.scenario, args.seed, args.atoms)
    try:
        current = get_field(base, args.param)
    except ScenarioError as err:
        raise CliError(EXIT_USAGE, f"bad --param: {err}") from None
    if isinstance(current, (dict, list)):
        raise CliError(EXIT_USAGE, f"bad --param: {args.param} is not a scalar field")
    root = Path(args.out) / f"sweep_{args.param}"
    rows = []
    for text in raw:
        try:
            sc = set_field(base, args.param, _parse_value(text))
        except ScenarioError as err:
            raise CliError(EXIT_USAGE, f"bad sweep value {text!r}: {err}") from None
        summary = execute(sc, root / text.strip(), args.threads)
        rows.append((text.strip(), summary))
    with open(root / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["value", "selected_model", "dominant_tau_s", "longest_delay_s"])
        for text, s in rows:
            writer.writerow([
                text,
                s["selected"] or "",
                "" if s["dominant_tau_s"] is None else f"{s['dominant_tau_s']:.17e}",
                "" if s["longest_delay_s"] is None else f"{s['longest_delay_s']:.17e}",
            ])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulate", description="Spin-wave coherence in thermal vapor cells.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("scenario", help="scenario JSON file (or bundled scenario name)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override sim.seed")
        p.add_argument("--atoms", type=int, default=None, help="override sim.n_atoms")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: $SPINWAVE_THREADS or CPU count)")

    run = sub.add_parser("run", help="simulate one scenario")
    common(run)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", help="repeat a scenario over values of one field")
    common(sweep)
    sweep.add_argument("--param", required=True, help="dotted scalar field, e.g. optics.detection_angle_rad")
    sweep.add_argument("--values", required=True, help="comma-separated values")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as err:
        print(f"simulate: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
