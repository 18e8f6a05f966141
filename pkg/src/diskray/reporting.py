"""Artifact emission: delimited tables, JSON reports, check summaries.

Every number leaves through ``fmt`` so artifacts round-trip bit for bit
and rerunning with the same seed reproduces them byte for byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field

import numpy as np


def fmt(x) -> str:
    """Shortest decimal string that parses back to the same float."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _cell(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (float, int, bool, np.floating, np.integer, np.bool_)):
        return fmt(x)
    return str(x)


def write_csv(path: str, header, rows) -> None:
    """Comma-separated table with a header row and \\n line endings."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([_cell(c) for c in row])
    _write_text(path, buf.getvalue())


def write_fan_csv(path: str, data) -> None:
    """Fan-grid samples as (beta, alpha, value, weight) rows."""
    b, a, v, mu = data.rows()
    if np.iscomplexobj(v):
        header = ["beta", "alpha", "value_re", "value_im", "weight"]
        rows = zip(b, a, v.real, v.imag, mu)
    else:
        header = ["beta", "alpha", "value", "weight"]
        rows = zip(b, a, v, mu)
    write_csv(path, header, rows)


def write_tensor_csv(path: str, u, grid) -> None:
    """Grid samples of a symmetric tensor, one node per row, disk only."""
    names = _component_names(u.rank)
    header = ["x1", "x2"] + names
    ii, jj = np.nonzero(grid.mask)
    cols = [grid.x[ii], grid.x[jj]]
    for k in range(u.comps.shape[-1]):
        cols.append(u.comps[ii, jj, k])
    write_csv(path, header, zip(*cols))


def _component_names(rank: int):
    if rank == 0:
        return ["value"]
    if rank == 1:
        return ["c1", "c2"]
    return ["c11", "c12", "c22"]


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x)
    if isinstance(x, complex):
        return {"re": x.real, "im": x.imag}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


def write_json(path: str, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
    _write_text(path, text + "\n")


def _write_text(path: str, text: str) -> None:
    d = os.path.dirname(path)
    if d:
        os.makedirs(d, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# pass/fail bookkeeping shared by the command-line checks


@dataclass
class CheckResult:
    """One named figure of merit against its budget."""

    name: str
    value: float
    tol: float
    passed: bool
    detail: dict = field(default_factory=dict)

    @classmethod
    def leq(cls, name: str, value, tol, **detail) -> "CheckResult":
        value = float(value)
        return cls(name, value, float(tol), value <= float(tol), dict(detail))

    @classmethod
    def flag(cls, name: str, ok: bool, **detail) -> "CheckResult":
        return cls(name, 0.0 if ok else 1.0, 0.5, bool(ok), dict(detail))

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.name}: value={fmt(self.value)} tol={fmt(self.tol)}"


def write_check_report(out_dir: str, name: str, checks, config=None, extra=None) -> bool:
    """Emit <name>.json and <name>.csv summarizing a check battery.

    Returns True when every check passed.
    """
    payload = {
        "command": name,
        "passed": all(c.passed for c in checks),
        "checks": [
            {
                "name": c.name,
                "value": c.value,
                "tol": c.tol,
                "passed": c.passed,
                "detail": c.detail,
            }
            for c in checks
        ],
    }
    if config is not None:
        payload["config"] = config.to_dict()
    if extra:
        payload["extra"] = extra
    write_json(os.path.join(out_dir, f"{name}.json"), payload)
    write_csv(
        os.path.join(out_dir, f"{name}.csv"),
        ["check", "value", "tol", "passed"],
        [(c.name, c.value, c.tol, c.passed) for c in checks],
    )
    return payload["passed"]
