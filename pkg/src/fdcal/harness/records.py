"""CSV emission and companion plotting scripts for experiment records."""

from __future__ import annotations

import math
from pathlib import Path

from ..errors import FdcalError, UsageError

SCHEMAS = {
    "ratio": ("experiment", "mode", "snr_db", "n_c", "n", "ratio", "predicted_ratio", "sinr_db",
              "trials", "seed", "flags"),
    "rates": ("experiment", "n", "t_coh_s", "c_cal", "c_nocal", "sinr_c_db", "sinr_nc_db", "snr_db",
              "trials", "seed", "flags"),
    "crlb": ("experiment", "mode", "n", "m", "sigma_n2", "sigma_r2", "variance", "bound", "ratio",
             "trials", "seed", "flags"),
    "trial": ("experiment", "mode", "n", "with_soi", "sinr_db", "estimate_error_norm", "trials", "seed", "flags"),
}


class OutputError(FdcalError, OSError):
    """Writing an output artifact failed."""


def record_kind(record) -> str:
    """Schema name for a record, inferred from the fields it carries."""
    keys = set(record.values)
    for kind in ("ratio", "rates", "crlb", "trial"):
        needed = set(SCHEMAS[kind]) - {"experiment", "trials", "seed", "flags"}
        if needed <= keys:
            return kind
    raise UsageError(f"record of experiment {record.experiment!r} matches no CSV schema")


def format_value(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".12g")
    return str(v)


def _row(record, columns):
    out = []
    for col in columns:
        if col == "experiment":
            v = record.experiment
        elif col == "trials":
            v = record.trials
        elif col == "seed":
            v = record.seed
        elif col == "flags":
            v = ";".join(record.flags)
        else:
            v = record.values[col]
        out.append(format_value(v))
    return ",".join(out)


def csv_text(records) -> str:
    records = list(records)
    if not records:
        raise UsageError("no records to write")
    kinds = {record_kind(r) for r in records}
    if len(kinds) != 1:
        raise UsageError(f"records mix CSV schemas: {sorted(kinds)}")
    columns = SCHEMAS[kinds.pop()]
    lines = [",".join(columns)] + [_row(r, columns) for r in records]
    return "\n".join(lines) + "\n"


def _write(path, text):
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def emit_csv(records, path) -> Path:
    """Write ``records`` as CSV with the fixed column order for their experiment kind."""
    return _write(path, csv_text(records))


_PLOT_HEAD = '''#!/usr/bin/env python3
"""Plot {csv_name} (generated by fdcal)."""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_name!r}
with open(path, newline="", encoding="utf-8") as fh:
    rows = list(csv.DictReader(fh))
'''

_PLOT_BODY = {
    "ratio": '''
groups = defaultdict(list)
for r in rows:
    groups[(r["mode"], round(float(r["snr_db"]), 1))].append(r)
fig, ax = plt.subplots()
for (mode, snr), rs in sorted(groups.items()):
    nc = [float(r["n_c"]) for r in rs]
    ax.plot(nc, [float(r["ratio"]) for r in rs], "o-", label=f"{mode}, simulated, SNR {snr} dB")
    ax.plot(nc, [float(r["predicted_ratio"]) for r in rs], "k--", label=f"{mode}, predicted, SNR {snr} dB")
ax.set_xlabel("calibration samples $N_c$")
ax.set_ylabel("$N / N_c$")
''',
    "rates": '''
groups = defaultdict(list)
for r in rows:
    groups[int(r["n"])].append(r)
fig, ax = plt.subplots()
for n, rs in sorted(groups.items()):
    t = [float(r["t_coh_s"]) for r in rs]
    line, = ax.plot(t, [float(r["c_cal"]) for r in rs], "-", label=f"with calibration, N={n}")
    ax.plot(t, [float(r["c_nocal"]) for r in rs], "--", color=line.get_color(), label=f"no calibration, N={n}")
ax.set_xscale("log")
ax.set_xlabel("coherence time (s)")
ax.set_ylabel("rate (bits/s/Hz)")
''',
    "crlb": '''
groups = defaultdict(list)
for r in rows:
    groups[float(r["sigma_r2"])].append(r)
fig, ax = plt.subplots()
for s, rs in sorted(groups.items()):
    n = [float(r["n"]) for r in rs]
    line, = ax.plot(n, [float(r["variance"]) for r in rs], "o", label=f"LS variance, sigma_r2={s:g}")
    ax.plot(n, [float(r["bound"]) for r in rs], "-", color=line.get_color(), label=f"bound, sigma_r2={s:g}")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("estimation samples N")
ax.set_ylabel("per-tap variance")
''',
    "trial": '''
fig, ax = plt.subplots()
for soi in ("0", "1"):
    rs = [r for r in rows if r["with_soi"] == soi]
    ax.plot([float(r["n"]) for r in rs], [float(r["sinr_db"]) for r in rs], "o-",
            label="no calibration" if soi == "1" else "calibration")
ax.set_xlabel("estimation samples N")
ax.set_ylabel("SINR (dB)")
''',
}

_PLOT_TAIL = '''ax.grid(True, which="both", alpha=0.3)
ax.legend()
fig.tight_layout()
out = path.rsplit(".", 1)[0] + ".png"
fig.savefig(out, dpi=150)
print(out)
'''


def plot_script_text(records, csv_name) -> str:
    records = list(records)
    if not records:
        raise UsageError("no records to plot")
    kind = record_kind(records[0])
    return _PLOT_HEAD.format(csv_name=str(csv_name)) + _PLOT_BODY[kind] + _PLOT_TAIL


def emit_plot_script(records, path, csv_name=None) -> Path:
    """Write a standalone matplotlib script that plots the CSV written for ``records``.

    ``csv_name`` defaults to ``path`` with a ``.csv`` suffix.
    """
    path = Path(path)
    csv_name = csv_name or path.with_suffix(".csv").name
    return _write(path, plot_script_text(records, csv_name))
