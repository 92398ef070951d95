import json
import os
from datetime import datetime, timezone

import numpy as np
import pandas as pd

LEDGER_COLUMNS = ["module", "check", "reference", "value", "tolerance", "passed"]
REPORT_VERSION = "1"


def check_entry(check, reference, value, tolerance, passed=None, **details):
    """One ledger row; passes when |value| <= tolerance unless `passed` is given."""
    value = float(np.real(value)) if value is not None else None
    if passed is None:
        passed = value is not None and np.isfinite(value) and abs(value) <= tolerance
    entry = {
        "check": check,
        "reference": reference,
        "value": value,
        "tolerance": tolerance,
        "passed": bool(passed),
    }
    if details:
        entry["details"] = details
    return entry


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


def records_to_df(results):
    """Flatten per-module results into one row per check."""
    rows = []
    for result in results:
        for entry in result.get("checks", []):
            rows.append({
                "module": result.get("module", ""),
                **{key: entry.get(key) for key in LEDGER_COLUMNS if key != "module"},
            })
    df = pd.DataFrame(rows, columns=LEDGER_COLUMNS)
    return df


def write_json_report(results, config, output_dir, name="ledger.json", timestamp=None):
    """Versioned JSON ledger; the timestamp is the only field that varies between identical runs."""
    os.makedirs(output_dir, exist_ok=True)
    payload = {
        "version": REPORT_VERSION,
        "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "config_hash": config.config_hash,
        "seed": config.seed,
        "config": config.to_dict(),
        "results": results,
    }
    path = os.path.join(output_dir, name)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True)
    return path


def write_csv_table(records, output_dir, name):
    """Plot-ready CSV from a list of row dicts (sweeps, per-order summaries)."""
    os.makedirs(output_dir, exist_ok=True)
    path = os.path.join(output_dir, name)
    pd.DataFrame(_jsonable(records)).to_csv(path, index=False, float_format="%.17g")
    return path
