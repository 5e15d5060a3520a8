"""Per-epoch training records with optional CSV streaming."""
from __future__ import annotations

import csv
from pathlib import Path

from ..physics import ALL_TERMS

COLUMNS = ("epoch", "phase") + ALL_TERMS + ("L_M", "L_T", "L_total", "seconds")


class TrainLog:
    """Append-only list of epoch records.

    Args:
        csv_path: when given, every record is also written to this CSV file
            as soon as it is appended.
    """

    def __init__(self, csv_path=None):
        self.records: list[dict] = []
        self.status = "ok"
        self.message = ""
        self._fh = None
        self._writer = None
        if csv_path is not None:
            self._fh = open(Path(csv_path), "w", newline="")
            self._writer = csv.writer(self._fh)
            self._writer.writerow(COLUMNS)
            self._fh.flush()

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def next_epoch(self) -> int:
        return self.records[-1]["epoch"] + 1 if self.records else 0

    def append(self, phase: str, breakdown, seconds: float) -> dict:
        rec = {"epoch": self.next_epoch, "phase": phase}
        rec.update(breakdown.as_dict())
        rec["seconds"] = seconds
        self.records.append(rec)
        if self._writer is not None:
            self._writer.writerow([_fmt(rec.get(c, "")) for c in COLUMNS])
            self._fh.flush()
        return rec

    def column(self, name: str, phase: str | None = None) -> list:
        return [r[name] for r in self.records if phase is None or r["phase"] == phase]

    def phases(self) -> list[str]:
        """Phase tags with consecutive repeats collapsed."""
        out = []
        for r in self.records:
            if not out or out[-1] != r["phase"]:
                out.append(r["phase"])
        return out

    def mean_seconds(self, phase: str | None = None, skip: int = 0) -> float:
        vals = self.column("seconds", phase)[skip:]
        return sum(vals) / len(vals) if vals else float("nan")

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            self._writer = None

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for rec in self.records:
                w.writerow([_fmt(rec.get(c, "")) for c in COLUMNS])


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else v
