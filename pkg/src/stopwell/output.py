"""CSV and manifest writers. Numbers are written with 17 significant digits."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .model import ModelParams


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return format(v, ".17g")


def write_csv(path: Path, header: list[str], rows, seed: int | None, note: str = "") -> Path:
    """Write rows after a '#' comment line carrying the code version and seed."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        comment = f"# stopwell {__version__} seed={seed}"
        if note:
            comment += f" {note}"
        fh.write(comment + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array([[float(v) if v else np.nan for v in r] for r in rows[1:]])


@dataclass
class RunManifest:
    params: dict
    seed: int
    subcommand: str
    flags: dict
    numerics: dict
    code_version: str = __version__
    wall_time: float = 0.0
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    solver: list = field(default_factory=list)

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def model(self) -> ModelParams:
        return ModelParams(**self.params)


GNUPLOT_STUB = """\
# gnuplot stub; run from the output directory: gnuplot -p plot.gp
set datafile separator ','
set key autotitle columnhead
{body}
"""


def write_gnuplot_stub(out: Path, names: list[str]) -> Path:
    parts = []
    for n in names:
        parts.append(
            f"set title 'boundary {n}'; set xlabel 'pi'; set ylabel 'x'\n"
            f"plot 'boundary_{n}.csv' using 1:2 with lines title 'b', "
            f"'' using 1:3 with lines dashtype 2 title 'lower bound'\n"
            f"set title 'value of information {n}'; set xlabel 'x'; set ylabel 'delta'\n"
            f"plot for [p in system(\"awk -F, 'NR>2{{print $2}}' voi_{n}.csv | sort -u\")] "
            f"'voi_{n}.csv' using 1:($2==p+0 ? $3 : 1/0) with lines title 'pi='.p"
        )
    path = Path(out) / "plot.gp"
    path.write_text(GNUPLOT_STUB.format(body="\n".join(parts)))
    return path
