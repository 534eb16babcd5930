"""Symmetric distance matrices over subject-days, with CSV and raw binary IO.

The CSV layout is row-major with a header of item ids and a leading comment
line recording the matrix kind.  The binary form is raw little-endian
float64 values plus a sidecar id list, for matrices too large for text.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

KINDS = ("Mismatch", "RRDM", "Raw")


@dataclass
class DayId:
    """Identity of one subject-day within a matrix."""

    subject_id: str
    day_index: int
    class_label: str = "Unlabeled"

    def key(self) -> tuple[str, int]:
        return (self.subject_id, self.day_index)

    def __str__(self) -> str:
        return f"{self.subject_id}:{self.day_index}:{self.class_label}"

    @classmethod
    def parse(cls, text: str) -> "DayId":
        subject, day, label = text.rsplit(":", 2)
        return cls(subject_id=subject, day_index=int(day), class_label=label)


@dataclass
class DistanceMatrix:
    ids: list[DayId]
    values: np.ndarray
    kind: str = "Raw"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise ValueError(f"matrix shape {self.values.shape} does not match {n} ids")
        if self.kind not in KINDS:
            raise ValueError(f"unknown matrix kind {self.kind!r}")

    def __len__(self) -> int:
        return len(self.ids)

    def labels(self) -> list[str]:
        return [i.class_label for i in self.ids]

    def validate(self, atol: float = 1e-9) -> None:
        v = self.values
        if not np.allclose(v, v.T, rtol=0.0, atol=atol):
            raise ValueError("distance matrix is not symmetric")
        if np.any(v < 0):
            raise ValueError("distance matrix has negative entries")
        if self.kind == "Mismatch" and np.any(np.abs(np.diag(v)) > atol):
            raise ValueError("mismatch matrix must have a zero diagonal")

    def subset(self, keep: list[int]) -> "DistanceMatrix":
        ids = [self.ids[i] for i in keep]
        vals = self.values[np.ix_(keep, keep)]
        return DistanceMatrix(ids=ids, values=vals, kind=self.kind, metadata=dict(self.metadata))

    # -- serialization ----------------------------------------------------

    def save_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="\n") as fh:
            fh.write(f"# kind={self.kind}\n")
            fh.write(",".join(str(i) for i in self.ids) + "\n")
            for row in self.values:
                fh.write(",".join(repr(float(x)) for x in row) + "\n")

    @classmethod
    def load_csv(cls, path: str | Path) -> "DistanceMatrix":
        path = Path(path)
        lines = path.read_text().splitlines()
        kind = "Raw"
        if lines and lines[0].startswith("#"):
            comment = lines.pop(0)
            if "kind=" in comment:
                kind = comment.split("kind=", 1)[1].strip()
        if not lines:
            raise ValueError(f"{path}: empty distance matrix file")
        ids = [DayId.parse(tok) for tok in lines[0].split(",")]
        rows = [
            np.array([float(tok) for tok in ln.split(",")], dtype=np.float64)
            for ln in lines[1:]
            if ln.strip()
        ]
        values = np.vstack(rows) if rows else np.zeros((0, 0))
        return cls(ids=ids, values=values, kind=kind)

    def save_binary(self, path: str | Path) -> None:
        """Raw little-endian float64 dump plus a ``<path>.ids.json`` sidecar."""
        path = Path(path)
        self.values.astype("<f8").tofile(path)
        sidecar = {
            "kind": self.kind,
            "ids": [str(i) for i in self.ids],
            "metadata": self.metadata,
        }
        Path(str(path) + ".ids.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load_binary(cls, path: str | Path) -> "DistanceMatrix":
        path = Path(path)
        sidecar = json.loads(Path(str(path) + ".ids.json").read_text())
        ids = [DayId.parse(tok) for tok in sidecar["ids"]]
        n = len(ids)
        values = np.fromfile(path, dtype="<f8").reshape(n, n)
        return cls(ids=ids, values=values, kind=sidecar["kind"], metadata=sidecar.get("metadata", {}))
