"""Command-line entry point: ``specmhd {simulate,verify,counterexample,convergence}``.

Exit codes: 0 success, 1 invalid input (config, parameters), 2 the run
completed but was flagged (blow-up termination or a failed check).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .config import SolverConfig
from .errors import ConfigError, PreconditionError, SpecMHDError

EXIT_OK, EXIT_INPUT, EXIT_FLAGGED = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int | None
    version: str = __version__
    outputs: list = field(default_factory=list)
    wall_seconds: float = 0.0
    status: str = "completed"
    exit_code: int = EXIT_OK
    summary: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "manifest.json"
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")
        return path


def _jsonable(obj):
    if hasattr(obj, "item"):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    return str(obj)


def _load_json(path) -> dict:
    if path is None:
        raise ConfigError("--config is required")
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc


def _solver_config(data: dict, seed) -> SolverConfig:
    data = dict(data)
    data.pop("K_list", None)
    if seed is not None:
        ic = dict(data.get("ic", {"kind": "random_band"}))
        ic["seed"] = seed
        data["ic"] = ic
    return SolverConfig.from_dict(data)


# ---------------------------------------------------------------- commands

def cmd_simulate(args, out: Path, manifest: RunManifest) -> int:
    cfg = _solver_config(_load_json(args.config), args.seed)
    manifest.config = cfg.to_dict()
    manifest.seed = cfg.ic.get("seed")
    if cfg.model == "mhd":
        from .mhd import run

        res = run(cfg, snapshot_dir=out)
        path = out / "diagnostics.csv"
        res.write_csv(path)
        manifest.outputs += [str(path)] + res.snapshots
        manifest.summary = {"energy_residual": res.energy_residual(), **res.monitors(),
                            "implied_gronwall_C": res.implied_gronwall_constant()}
    else:
        from .stokes import run_relaxation

        res = run_relaxation(cfg)
        path = out / "relaxation.csv"
        res.write_csv(path)
        manifest.outputs.append(str(path))
        manifest.summary = res.summary()
    manifest.status = res.status
    if res.message:
        manifest.summary["message"] = res.message
    return EXIT_OK if res.completed else EXIT_FLAGGED


def cmd_verify(args, out: Path, manifest: RunManifest) -> int:
    from .suites import DEFAULT_SEED, SUITES

    if args.suite not in SUITES:
        raise ConfigError(f"unknown suite {args.suite!r}; choose from {sorted(SUITES)}")
    seed = DEFAULT_SEED if args.seed is None else args.seed
    manifest.config = {"suite": args.suite}
    manifest.seed = seed
    rep = SUITES[args.suite](seed=seed)
    path = out / f"verify_{args.suite}.csv"
    rep.write_csv(path)
    manifest.outputs.append(str(path))
    manifest.summary = {"passed": rep.passed, "samples": rep.samples,
                        **{str(k): v for k, v in rep.summary.items()}}
    manifest.status = "passed" if rep.passed else "failed"
    return EXIT_OK if rep.passed else EXIT_FLAGGED


def _counterexample_params(data: dict):
    from .counterexample import CounterexampleParams, Quadrature

    alpha = float(data.get("alpha", 0.6))
    if alpha == 0.75:
        raise PreconditionError("alpha = 3/4 is the borderline case; choose alpha != 3/4")
    quad = Quadrature(**data.get("quadrature", {}))
    kwargs = {"alpha": alpha, "delta": float(data.get("delta", 0.1)),
              "k_index": int(data.get("k_index", 1)), "quadrature": quad}
    if "P_max" in data:
        kwargs["P_max"] = float(data["P_max"])
    elif "log_P_max" in data:
        kwargs["P_max"] = math.exp(float(data["log_P_max"]))
    return CounterexampleParams(**kwargs)


def cmd_counterexample(args, out: Path, manifest: RunManifest) -> int:
    from .counterexample import DEFAULT_P_LIST, divergence_scan

    data = _load_json(args.config) if args.config else {}
    params = _counterexample_params(data)
    if "log_P_list" in data:
        P_list = [math.exp(float(w)) for w in data["log_P_list"]]
    else:
        P_list = [float(P) for P in data.get("P_list", DEFAULT_P_LIST)]
    manifest.config = {"alpha": params.alpha, "delta": params.delta, "P_max": params.P_max,
                       "k_index": params.k_index, "quadrature": asdict(params.quadrature),
                       "P_list": P_list}
    scan = divergence_scan(params, P_list)
    path = out / "counterexample_scan.csv"
    scan.to_csv(path)
    manifest.outputs.append(str(path))
    expected = "growing" if params.failing else "plateau"
    manifest.summary = {"classification": scan.classification, "expected": expected,
                        "fitted_beta": scan.fitted_beta, "growth_ratio": scan.growth_ratio,
                        "onset_radius": scan.onset_radius, "grad_u_H1_sq": scan.grad_u_H1_sq,
                        "B_H1_sq": scan.B_H1_sq, "monotone": scan.monotone}
    ok = scan.classification == expected
    manifest.status = "matched" if ok else "mismatched"
    return EXIT_OK if ok else EXIT_FLAGGED


def cmd_convergence(args, out: Path, manifest: RunManifest) -> int:
    from .mhd import cauchy_experiment, write_rows

    data = _load_json(args.config)
    K_list = data.get("K_list")
    if not isinstance(K_list, list) or len(K_list) < 3:
        raise ConfigError("K_list must list at least three cutoffs")
    if any(int(b) <= int(a) for a, b in zip(K_list, K_list[1:])):
        raise ConfigError("K_list must be strictly increasing")
    cfg = _solver_config(data, args.seed)
    manifest.config = {**cfg.to_dict(), "K_list": K_list}
    manifest.seed = cfg.ic.get("seed")
    res = cauchy_experiment(cfg, K_list)
    path = out / "cauchy.csv"
    write_rows(path, ("K", "K_next", "sup_L2_difference"), res.rows())
    manifest.outputs.append(str(path))
    manifest.summary = {"differences": res.differences, "time_error": res.time_error,
                        "strictly_decreasing": res.strictly_decreasing}
    manifest.status = "decreasing" if res.strictly_decreasing else "not_decreasing"
    return EXIT_OK if res.strictly_decreasing else EXIT_FLAGGED


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "counterexample": cmd_counterexample,
    "convergence": cmd_convergence,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="specmhd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        p.add_argument("--seed", type=int, help="override the random seed (default 7)")
        p.add_argument("--quiet", action="store_true", help="suppress the summary on stdout")
        if name == "verify":
            p.add_argument("--suite", required=True,
                           help="commutator | kato_ponce | gradient_estimate | lemmas | mollifier")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(args.command, {}, args.seed)
    start = time.perf_counter()
    try:
        code = COMMANDS[args.command](args, out, manifest)
    except (ConfigError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SpecMHDError as exc:
        manifest.status = "flagged"
        manifest.summary["message"] = str(exc)
        code = EXIT_FLAGGED
    manifest.exit_code = code
    manifest.wall_seconds = time.perf_counter() - start
    path = manifest.write(out)
    if not args.quiet:
        print(json.dumps({"status": manifest.status, "exit_code": code, "manifest": str(path),
                          **manifest.summary}, default=_jsonable, indent=2))
    return code


if __name__ == "__main__":
    sys.exit(main())
