import sys
sys.stdout.reconfigure(encoding='utf-8')

import argparse
import importlib
import json
import logging
import os
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from datetime import datetime

import numpy as np

from checks.fixtures import workbench
from common import settings
from common.errors import ConfigError
from extension.extend import counterterm_shift, extend
from extension.profiles import PolynomialGaussian
from extension.radial import RadialKernel, scaling_degree
from parametrix.green import defect
from parametrix.parametrix_io import write_parametrix
from report.ledger import records_to_df, write_csv_table, write_json_report
from report.report_generator import build_verification_report
from run_config.schema import RunConfig, load_config

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

CHECKS_DIR = os.path.join(os.path.dirname(__file__), "checks")

# verify targets beyond single modules
VERIFY_GROUPS = {
    "all": None,
    "algebra": ["check_algebra"],
    "wick": ["check_wick", "check_continuum"],
    "moller": ["check_moller", "check_ppa"],
}

WICK_ACTIONS = {
    "axioms": ["check_wick"],
    "scaling-sweep": ["check_continuum"],
    "leibniz": ["check_wick", "check_continuum"],
}


# ------------------------------------------------------------
# Check discovery and execution
# ------------------------------------------------------------

def discover_checks():
    return sorted([
        f[:-3] for f in os.listdir(CHECKS_DIR)
        if f.startswith("check_") and f.endswith(".py")
    ])


def run_check_module(module_name, config, output_dir):
    print(f"\n▶ Running: {module_name}")
    print("-" * 60)

    try:
        module = importlib.import_module(f"checks.{module_name}")

        if not hasattr(module, "run"):
            raise AttributeError(f"{module_name} has no run() function")

        result = module.run(config, output_dir)
        checks = result.get("checks", [])
        failed = [c["check"] for c in checks if not c["passed"]]

        for name in failed:
            print(f"⚠ {module_name}: {name} outside tolerance")
        print(f"✓ Completed | Checks run: {len(checks)} | Failed: {len(failed)}")

        return {
            "module": module_name,
            "name": result.get("name", module_name),
            "records_found": result.get("records_found", len(checks)),
            "checks": checks,
            "status": "success" if not failed else "failed",
        }

    except Exception as e:
        print(f"✗ Error: {e}")
        traceback.print_exc()
        return {
            "module": module_name,
            "name": module_name,
            "records_found": 0,
            "checks": [],
            "status": "error",
            "error": str(e),
        }


def run_checks(module_names, config: RunConfig, output_dir, threads=1):
    """Run check modules, write the JSON/CSV/PDF ledgers and return the exit code."""
    if not module_names:
        print("No checks requested; nothing to do.")
        return EXIT_PASS

    os.makedirs(output_dir, exist_ok=True)
    print(f"Output directory: {output_dir}")
    print(f"Config hash:      {config.config_hash[:16]}")
    print(f"Running {len(module_names)} check module(s):")
    print(", ".join(module_names))
    print("=" * 60)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda name: run_check_module(name, config, output_dir), module_names))
    else:
        results = [run_check_module(name, config, output_dir) for name in module_names]

    # ------------------------------------------------------------
    # Execution Summary
    # ------------------------------------------------------------
    passed = [r for r in results if r["status"] == "success"]
    failed = [r for r in results if r["status"] == "failed"]
    errors = [r for r in results if r["status"] == "error"]
    ledger_df = records_to_df(results)

    print("\n" + "=" * 60)
    print("EXECUTION SUMMARY")
    print("=" * 60)
    print(f"Modules run:   {len(results)}")
    print(f"Passed:        {len(passed)}")
    print(f"Failed:        {len(failed)}")
    print(f"Errors:        {len(errors)}")
    print(f"Checks passed: {int(ledger_df['passed'].sum())} / {len(ledger_df)}")

    json_path = write_json_report(results, config, output_dir)
    write_csv_table(ledger_df.to_dict("records"), output_dir, "ledger.csv")
    if not ledger_df.empty:
        summary = {
            "checks_passed": int(ledger_df["passed"].sum()),
            "checks_run": len(ledger_df),
            "modules_run": len(results),
            "errors": [r["module"] for r in errors],
        }
        build_verification_report(
            os.path.join(output_dir, "verification_ledger.pdf"), ledger_df, summary, config.config_hash,
        )

    print("\n" + "=" * 60)
    print(f"Ledger: {json_path}")
    print(f"All output saved under: {output_dir}")
    print("=" * 60)

    if errors:
        return EXIT_ERROR
    return EXIT_FAIL if failed else EXIT_PASS


# ------------------------------------------------------------
# Subcommands
# ------------------------------------------------------------

def cmd_verify(args, config, output_dir):
    available = discover_checks()
    target = args.target
    if target in VERIFY_GROUPS:
        modules = available if VERIFY_GROUPS[target] is None else VERIFY_GROUPS[target]
    elif f"check_{target}" in available:
        modules = [f"check_{target}"]
    else:
        raise ConfigError(f"unknown verify target {target!r}; choose from {sorted(VERIFY_GROUPS)} or "
                          f"{[m[len('check_'):] for m in available]}")
    return run_checks(modules, config, output_dir, args.threads)


def cmd_run(args, config, output_dir):
    available = discover_checks()
    modules = []
    for name in config.task.checks:
        module = name if name.startswith("check_") else f"check_{name}"
        if module not in available:
            raise ConfigError(f"task.checks names an unknown check {name!r}")
        modules.append(module)
    return run_checks(modules, config, output_dir, args.threads)


def cmd_parametrix(args, config, output_dir):
    bench = workbench(config)
    os.makedirs(output_dir, exist_ok=True)

    if args.action == "build":
        path = write_parametrix(bench.P, os.path.join(output_dir, "parametrix.bin"), config.parametrix.order)
        print(f"✓ Parametrix written: {path}")
    elif args.action == "defect":
        value = float(np.abs(defect(bench.E, bench.P)).max())
        print(f"max |E P - Id| = {value:.3e}")
        if not bench.P.is_exact_green:
            return EXIT_PASS
        passed = value <= config.tolerance("operator")
        print("✓ Exact inverse" if passed else "✗ Defect above tolerance")
        return EXIT_PASS if passed else EXIT_FAIL
    else:
        coords = bench.lattice.coordinates
        rows = [
            {**{f"x{axis}": float(coords[site, axis]) for axis in range(bench.lattice.dim)},
             "W": float(bench.W_P.coincidence[site])}
            for site in range(bench.lattice.site_count)
        ]
        path = write_csv_table(rows, output_dir, "coincidence.csv")
        print(f"✓ Coincidence limits written: {path}")
    return EXIT_PASS


def cmd_extend(args, config, output_dir):
    kernel = RadialKernel(exponent=args.alpha, log_power=args.log_power, ambient_dim=args.dim)
    f = PolynomialGaussian(args.dim, width=args.width)
    result = extend(kernel, f, args.spacing, args.half_extent, weight_radius=args.radius)
    shift = counterterm_shift(kernel, args.spacing, args.half_extent, args.radius, 2.0 * args.radius)

    payload = {
        "kernel": {"exponent": args.alpha, "log_power": args.log_power, "dim": args.dim},
        "scaling_degree": scaling_degree(kernel),
        "subtraction_order": result.subtraction_order,
        "spacing": args.spacing,
        "weight_radius": result.weight_radius,
        "value": result.value,
        "counterterms_radius_doubling": [
            {"multi_index": list(beta), "coefficient": float(c)} for beta, c in sorted(shift.items())
        ],
        "config_hash": config.config_hash,
    }
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, "extension.json")
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
    print(f"✓ Extension value {result.value:.10e} written: {path}")
    return EXIT_PASS


def _with_task(config, **overrides):
    overrides = {key: value for key, value in overrides.items() if value is not None}
    return replace(config, task=replace(config.task, **overrides)) if overrides else config


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lcqft",
        description="Locally covariant scalar field on lattice backgrounds: construction and verification ledgers.",
    )
    parser.add_argument("--config", help="JSON or TOML run configuration")
    parser.add_argument("--output", help="output directory (default: config output_dir/<timestamp>)")
    parser.add_argument("--threads", type=int, default=settings.THREADS, help="check modules run in parallel")
    parser.add_argument("--verbose", action="store_true", help="DEBUG logging")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parametrix", help="build a parametrix, report its defect or its coincidence limit")
    p.add_argument("action", choices=["build", "defect", "coincidence"])

    sub.add_parser("algebra", help="star product property suite")

    p = sub.add_parser("wick", help="Wick power axioms, ambiguities, scaling and Leibniz checks")
    p.add_argument("action", nargs="?", default="axioms", choices=sorted(WICK_ACTIONS))
    p.add_argument("--k", type=int)

    p = sub.add_parser("extend", help="extend a radial kernel across the diagonal")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--log-power", type=int, default=0)
    p.add_argument("--spacing", type=float, default=0.1)
    p.add_argument("--half-extent", type=float, default=6.0)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--width", type=float, default=0.8)

    p = sub.add_parser("moller", help="Moller map and perturbative agreement checks")
    p.add_argument("--order", type=int)

    p = sub.add_parser("verify", help="run a group of check modules and write the ledger")
    p.add_argument("target", nargs="?", default="all")

    sub.add_parser("sweep", help="refinement and scaling sweeps")
    sub.add_parser("run", help="run the checks named in the config task block")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        config = load_config(args.config) if args.config else RunConfig()
        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        output_dir = args.output or os.path.join(config.output_dir, timestamp)

        if args.command == "parametrix":
            return cmd_parametrix(args, config, output_dir)
        if args.command == "extend":
            return cmd_extend(args, config, output_dir)
        if args.command == "verify":
            return cmd_verify(args, config, output_dir)
        if args.command == "run":
            return cmd_run(args, config, output_dir)
        if args.command == "algebra":
            return run_checks(["check_algebra"], config, output_dir, args.threads)
        if args.command == "wick":
            return run_checks(WICK_ACTIONS[args.action], _with_task(config, k=args.k), output_dir, args.threads)
        if args.command == "moller":
            return run_checks(["check_moller"], _with_task(config, lambda_order=args.order), output_dir,
                              args.threads)
        return run_checks(["check_continuum", "check_extension"], config, output_dir, args.threads)

    except ConfigError as e:
        print(f"✗ Configuration error: {e}")
        return EXIT_ERROR
    except Exception as e:
        print(f"✗ Failed: {e}")
        traceback.print_exc()
        return EXIT_ERROR


# =============================================================
if __name__ == "__main__":
    sys.exit(main())
