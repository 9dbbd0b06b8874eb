"""Command-line runner for the data-generating experiments.

    qbattery scatter --experiment scatter-purity --dim 3 --samples 100000 --seed 7 --out purity.csv
    qbattery dynamics --model Dicke --nb 2 --nc 4 --charger fock --kappa 0.5 --tmax 50 --out dicke.csv
    qbattery verify purity.csv
    qbattery manifest purity.csv.manifest.json --rerun

Precedence: built-in defaults < ``--config`` JSON < command-line flags.
Exit codes: 0 success, 2 configuration error, 3 invariant violation.
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from .dynamics import InvariantViolation
from .experiments import (
    SCATTER_KINDS,
    ExperimentConfig,
    execute,
    file_digest,
    load_manifest,
    manifest_path,
    verify_file,
)
from .validation import ValidationError

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3
FIXED_EXPERIMENT = {"surface": "surface", "bounds": "bounds-band", "dynamics": "dynamics"}
# flag name -> config field
FLAGS = {
    "experiment": str,
    "dim": int,
    "samples": int,
    "seed": int,
    "sampler": str,
    "hamiltonian": str,
    "weights": str,
    "fers_ratio": str,
    "workers": int,
    "grid": int,
    "model": str,
    "nb": int,
    "nc": float,
    "n_max": int,
    "charger": str,
    "g": float,
    "omega": float,
    "kappa": float,
    "tmax": float,
    "points": int,
    "dt": float,
    "out": str,
}


def _parse_weights(text):
    parts = text.replace(":", ",").split(",")
    try:
        w = tuple(float(x) for x in parts)
    except ValueError as exc:
        raise ValidationError(f"weights: cannot parse {text!r}") from exc
    if len(w) != 3:
        raise ValidationError("weights: need three values low,medium,high")
    return w


def build_parser():
    parser = argparse.ArgumentParser(prog="qbattery", description="Quantum-battery ergotropy experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    job = argparse.ArgumentParser(add_help=False)
    job.add_argument("--config", help="JSON file with config values")
    for name, typ in FLAGS.items():
        job.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)

    sub.add_parser("surface", parents=[job], help="ergotropy surfaces over the population simplex")
    sub.add_parser("scatter", parents=[job], help=f"sampled ensembles ({', '.join(SCATTER_KINDS)})")
    sub.add_parser("bounds", parents=[job], help="coherent-ergotropy band versus coherence")
    sub.add_parser("dynamics", parents=[job], help="cavity charging time series")

    v = sub.add_parser("verify", help="re-check every row of a data file")
    v.add_argument("path")
    m = sub.add_parser("manifest", help="check a manifest's digest, optionally by rerunning its config")
    m.add_argument("path", help="manifest JSON or the CSV it describes")
    m.add_argument("--rerun", action="store_true", help="re-execute the recorded config and compare bytes")
    m.add_argument("--workers", type=int, default=None, help="worker count for the rerun")
    return parser


def config_from_args(args):
    values = {}
    if args.config:
        try:
            values.update(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"config: cannot read {args.config}: {exc}") from exc
    for name in FLAGS:
        val = getattr(args, name)
        if val is not None:
            values[name] = val
    if isinstance(values.get("weights"), str):
        values["weights"] = _parse_weights(values["weights"])
    fixed = FIXED_EXPERIMENT.get(args.command)
    if fixed:
        if values.get("experiment", fixed) != fixed:
            raise ValidationError(f"experiment: '{args.command}' runs '{fixed}', got {values['experiment']!r}")
        values["experiment"] = fixed
    else:
        values.setdefault("experiment", "scatter-coherent")
        if values["experiment"] not in SCATTER_KINDS:
            raise ValidationError(f"experiment: scatter takes one of {SCATTER_KINDS}")
    return ExperimentConfig.from_dict(values)


def _resolve_manifest(path):
    p = Path(path)
    return p if p.name.endswith(".manifest.json") else manifest_path(p)


def cmd_manifest(args):
    mpath = _resolve_manifest(args.path)
    man = load_manifest(mpath)
    entry = man["files"][0]
    data = mpath.parent / entry["path"]
    result = {"manifest": str(mpath), "recorded_sha256": entry["sha256"]}
    if data.exists():
        result["file_sha256"] = file_digest(data)
    ok = result.get("file_sha256") == entry["sha256"]
    if args.rerun:
        cfg = dict(man["config"])
        if args.workers is not None:
            cfg["workers"] = args.workers
        with tempfile.TemporaryDirectory() as tmp:
            out = Path(tmp) / entry["path"]
            execute(ExperimentConfig.from_dict(cfg), out)
            result["rerun_sha256"] = file_digest(out)
        ok = result["rerun_sha256"] == entry["sha256"]
    result["match"] = ok
    print(json.dumps(result, indent=2))
    return EXIT_OK if ok else EXIT_INVARIANT


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            fails = verify_file(args.path)
            for f in fails:
                print("FAIL", f)
            print("OK" if not fails else f"{len(fails)} invariant(s) violated")
            return EXIT_OK if not fails else EXIT_INVARIANT
        if args.command == "manifest":
            return cmd_manifest(args)
        cfg = config_from_args(args)
        man = execute(cfg)
        f = man["files"][0]
        print(f"wrote {cfg.out or cfg.experiment + '.csv'}: {f['rows']} rows, sha256 {f['sha256'][:16]}")
        return EXIT_OK
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
