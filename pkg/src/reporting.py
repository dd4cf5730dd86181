"""CSV and JSON result writers."""
import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

from src.config import settings

logger = logging.getLogger(__name__)


def format_value(value: Any, digits: int | None = None) -> str:
    """Lossless text form: floats with ``digits`` significant digits."""
    digits = digits or settings.csv_digits
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.{digits}g}"
    return str(value)


def write_csv(path: str | Path, rows: List[Dict[str, Any]], columns: Sequence[str]) -> Path:
    """Write ``rows`` with a fixed column order.

    Args:
        path: Output file
        rows: Records keyed by column name
        columns: Column order of the header and every row

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row[c]) for c in columns])
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def build_report(command: str, results: Dict[str, Any], **metadata: Any) -> Dict[str, Any]:
    """Report dictionary with a metadata block followed by the results."""
    return {
        "metadata": {
            "command": command,
            "processed_at": datetime.now().isoformat(),
            **metadata,
        },
        "results": _jsonable(results),
    }


def save_report(report: Dict[str, Any], path: str | Path) -> Path:
    """Save a report as JSON (pretty printed unless disabled in settings)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    logger.info(f"Saving report to {path}")
    with open(path, "w", encoding="utf-8") as f:
        if settings.pretty_print_json:
            json.dump(_jsonable(report), f, indent=2, ensure_ascii=False)
        else:
            json.dump(_jsonable(report), f, ensure_ascii=False)
    return path
