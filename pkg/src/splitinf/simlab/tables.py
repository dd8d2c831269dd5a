"""Result tables written as CSV with a JSON metadata sidecar."""

from __future__ import annotations

import csv
import json
import math
import subprocess
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Dict, List, Sequence

__all__ = ["ResultTable", "version_string", "format_value"]


def version_string() -> str:
    try:
        base = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        base = "0+unknown"
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, timeout=5, cwd=Path(__file__).parent)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{base}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return base


def format_value(v) -> str:
    """Shortest round-trip text; empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float) or hasattr(v, "dtype"):
        v = v.item() if hasattr(v, "item") else v
        if isinstance(v, float):
            return "" if math.isnan(v) else repr(v)
    return str(v)


@dataclass
class ResultTable:
    name: str
    schema: Sequence[str]
    rows: List[Dict] = field(default_factory=list)
    meta: Dict = field(default_factory=dict)

    def add(self, **row):
        missing = set(self.schema) - set(row)
        extra = set(row) - set(self.schema)
        if missing or extra:
            raise ValueError(f"row does not match schema: missing {sorted(missing)}, "
                             f"unexpected {sorted(extra)}")
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def where(self, **match) -> List[Dict]:
        return [r for r in self.rows if all(r[k] == v for k, v in match.items())]

    def to_csv(self) -> str:
        lines = [",".join(self.schema)]
        for r in self.rows:
            lines.append(",".join(_quote(format_value(r[c])) for c in self.schema))
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{self.name}.csv"
        path.write_text(self.to_csv(), encoding="utf-8", newline="")
        meta = dict(self.meta)
        meta.setdefault("version", version_string())
        (out / f"{self.name}.meta.json").write_text(
            json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read_csv(cls, path) -> "ResultTable":
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            rows = [dict(r) for r in reader]
            return cls(Path(path).stem, list(reader.fieldnames or []), rows)


def _quote(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text
