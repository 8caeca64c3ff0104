"""Results CSV and cactus-plot series."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path

COLUMNS = ["property_coordinate", "kind", "status", "wall_time_s", "subdomains",
           "bound_calls", "counterexample_json"]
CACTUS_COLUMNS = ["series", "kind", "rank", "time_s", "cumulative_time_s"]


class ResultsParseError(ValueError):
    pass


def outcome_rows(outcomes, witness=None) -> list[dict]:
    rows = []
    for o in outcomes:
        cex = ""
        if o.counterexample is not None:
            cex = json.dumps(witness(o.counterexample) if witness else {"x": o.counterexample.tolist()})
        rows.append({
            "property_coordinate": o.prop.coordinate,
            "kind": o.prop.kind,
            "status": o.status,
            "wall_time_s": f"{o.stats['wall_time']:.6f}",
            "subdomains": o.stats["subdomains"],
            "bound_calls": o.stats["bound_calls"],
            "counterexample_json": cex,
        })
    return rows


def write_results_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def read_results_csv(path) -> list[dict]:
    text = Path(path).read_text()
    if not text.strip():
        return []
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or set(COLUMNS) - set(reader.fieldnames):
        raise ResultsParseError(f"{path}: line 1: expected columns {COLUMNS}")
    rows = []
    for row in reader:
        line = reader.line_num
        try:
            rows.append({
                "property_coordinate": int(row["property_coordinate"]),
                "kind": _choice(row["kind"], ("on", "off")),
                "status": _choice(row["status"], ("proved", "counterexample", "timeout")),
                "wall_time_s": float(row["wall_time_s"]),
                "subdomains": int(row["subdomains"]),
                "bound_calls": int(row["bound_calls"]),
                "counterexample_json": row["counterexample_json"] or "",
            })
        except (TypeError, ValueError) as exc:
            raise ResultsParseError(f"{path}: line {line}: {exc}") from None
    return rows


def _choice(value, allowed):
    if value not in allowed:
        raise ValueError(f"{value!r} not one of {allowed}")
    return value


def cactus_series(rows, series: str) -> list[dict]:
    """Sorted solve times of proved properties, overall and per kind."""
    out = []
    for kind in ("all", "on", "off"):
        times = sorted(r["wall_time_s"] for r in rows
                       if r["status"] == "proved" and kind in ("all", r["kind"]))
        cum = 0.0
        for rank, t in enumerate(times, 1):
            cum += t
            out.append({"series": series, "kind": kind, "rank": rank,
                        "time_s": f"{t:.6f}", "cumulative_time_s": f"{cum:.6f}"})
    return out


def write_cactus_csv(fh, rows) -> None:
    writer = csv.DictWriter(fh, fieldnames=CACTUS_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
