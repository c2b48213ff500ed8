"""Deterministic CSV/JSON emission for experiment, sweep, and leakage results.

Output bytes are a pure function of the result objects (floats via repr, keys
sorted, no timestamps), so identical runs produce identical files.
"""

from __future__ import annotations

import json
from pathlib import Path

from .privacy import (DEFENDED_MSE_THRESHOLD, PUBLISHED_MSE, PUBLISHED_NOISE_LEVELS,
                      PUBLISHED_PRUNE_RATES, PUBLISHED_SOTERIA_MSE)
from .simulator import DLGCell, ExperimentResult

ROUNDS_CSV_COLUMNS = ("round", "accuracy", "client_id", "contribution",
                      "eliminated", "comm_scalars")


def rounds_csv_text(result: ExperimentResult) -> str:
    """One row per (round, client): the documented fixed-column long format."""
    lines = [",".join(ROUNDS_CSV_COLUMNS)]
    eliminated_so_far: set[int] = set()
    for log in result.rounds:
        eliminated_so_far |= set(log.newly_eliminated)
        for cid in sorted(log.contributions):
            lines.append(",".join((
                str(log.round),
                repr(log.global_accuracy),
                str(cid),
                repr(log.contributions[cid]),
                "1" if cid in eliminated_so_far else "0",
                str(log.comm_scalars),
            )))
    return "\n".join(lines) + "\n"


def summary_dict(result: ExperimentResult) -> dict:
    return {
        "rounds_completed": len(result.rounds),
        "dsr": result.dsr,
        "fpr": result.fpr,
        "final_accuracy": result.final_accuracy,
        "accuracy_curve": result.accuracy_curve,
        "total_comm_scalars": result.total_comm_scalars,
        "eliminated": list(result.eliminated),
        "fair_ids": list(result.fair_ids),
        "fr_ids": list(result.fr_ids),
        "fr_ratio_percent": result.fr_ratio_percent,
        "halted_early": result.halted_early,
        "seed": result.config.seed,
    }


def result_json_text(result: ExperimentResult, include_rounds: bool = True) -> str:
    payload = summary_dict(result)
    if include_rounds:
        payload["round_logs"] = [
            {
                "round": log.round,
                "accuracy": log.global_accuracy,
                "contributions": {str(k): v for k, v in sorted(log.contributions.items())},
                "newly_eliminated": list(log.newly_eliminated),
                "n_active": log.n_active,
                "comm_scalars": log.comm_scalars,
            }
            for log in result.rounds
        ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def sweep_csv_text(rows: list[dict]) -> str:
    if not rows:
        return "\n"
    columns = list(rows[0].keys())
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_cell(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def sweep_json_text(rows: list[dict]) -> str:
    return json.dumps(rows, indent=2, sort_keys=True) + "\n"


DLG_CSV_COLUMNS = ("source", "noise_variance", "prune_rate", "median_mse",
                   "defended", "instances", "diverged")


def dlg_reference_cells() -> list[DLGCell]:
    """The original CNN-scale evaluation grid, reported for comparison only."""
    cells = [
        DLGCell(nv, pr, mse, mse > DEFENDED_MSE_THRESHOLD, 0, 0,
                source="published_reference")
        for pr, nv, mse in zip(PUBLISHED_PRUNE_RATES, PUBLISHED_NOISE_LEVELS,
                               PUBLISHED_MSE)
    ]
    cells += [
        DLGCell(float("nan"), pr, mse, mse > DEFENDED_MSE_THRESHOLD, 0, 0,
                source="published_soteria_reference")
        for pr, mse in zip(PUBLISHED_PRUNE_RATES, PUBLISHED_SOTERIA_MSE)
    ]
    return cells


def dlg_csv_text(cells: list[DLGCell], include_reference: bool = True) -> str:
    """Leakage grid as CSV; published reference rows are labeled by source and
    are not reproduced at this scale."""
    rows = list(cells) + (dlg_reference_cells() if include_reference else [])
    lines = [",".join(DLG_CSV_COLUMNS)]
    for cell in rows:
        lines.append(",".join((
            cell.source,
            repr(cell.noise_variance),
            repr(cell.prune_rate),
            repr(cell.median_mse),
            "1" if cell.defended else "0",
            str(cell.instances),
            str(cell.diverged),
        )))
    return "\n".join(lines) + "\n"


def dlg_json_text(cells: list[DLGCell], include_reference: bool = True) -> str:
    rows = list(cells) + (dlg_reference_cells() if include_reference else [])
    payload = [
        {
            "source": c.source,
            "noise_variance": c.noise_variance,
            "prune_rate": c.prune_rate,
            "median_mse": c.median_mse,
            "defended": c.defended,
            "instances": c.instances,
            "diverged": c.diverged,
        }
        for c in rows
    ]
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _cell(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
