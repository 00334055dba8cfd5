"""UCR-style text datasets, z-normalisation and the synthetic bump benchmark."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class DataError(ValueError):
    """Malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class Series:
    values: np.ndarray
    label: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if values.size < 1:
            raise DataError("a series needs at least one value")
        if not np.all(np.isfinite(values)):
            raise DataError("series values must be finite")
        if int(self.label) < 0:
            raise DataError(f"labels must be >= 0, got {self.label}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "label", int(self.label))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Dataset:
    train: list[Series]
    test: list[Series]
    num_classes: int
    length: int
    label_names: tuple = field(default=(), compare=False)

    def __post_init__(self):
        for s in list(self.train) + list(self.test):
            if len(s) != self.length:
                raise DataError(f"series of length {len(s)} in a dataset of length {self.length}")
            if s.label >= self.num_classes:
                raise DataError(f"label {s.label} outside [0, {self.num_classes})")

    @staticmethod
    def _arrays(items: Sequence[Series]) -> tuple[np.ndarray, np.ndarray]:
        if not items:
            return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
        return np.stack([s.values for s in items]), np.array([s.label for s in items], dtype=np.int64)

    @property
    def train_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._arrays(self.train)

    @property
    def test_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return self._arrays(self.test)


# ---------------------------------------------------------------------------
# text format


def _split_row(line: str, delimiter: str | None) -> list[str]:
    if delimiter is None:
        return line.split()
    return [c.strip() for c in line.split(delimiter)]


def _sniff(first_line: str) -> str | None:
    if "\t" in first_line:
        return "\t"
    if "," in first_line:
        return ","
    return None


def read_rows(path: str | Path) -> tuple[list[float], list[np.ndarray]]:
    """Parse raw ``label value...`` rows without remapping labels."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    lines = [ln for ln in path.read_text().splitlines() if ln.strip()]
    if not lines:
        raise DataError(f"{path}: empty file")
    delim = _sniff(lines[0])
    labels: list[float] = []
    rows: list[np.ndarray] = []
    width = None
    for r, line in enumerate(lines, start=1):
        cells = _split_row(line, delim)
        if width is None:
            width = len(cells)
            if width < 2:
                raise DataError(f"{path}: row {r} has no value columns")
        elif len(cells) != width:
            raise DataError(f"{path}: ragged row {r}: {len(cells)} columns, expected {width}")
        parsed = []
        for c, cell in enumerate(cells, start=1):
            try:
                parsed.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: non-numeric cell {cell!r} at row {r}, column {c}") from None
        if not all(math.isfinite(v) for v in parsed):
            raise DataError(f"{path}: non-finite value at row {r}")
        labels.append(parsed[0])
        rows.append(np.array(parsed[1:], dtype=np.float64))
    return labels, rows


def _label_map(labels: Iterable[float]) -> dict[float, int]:
    return {lab: i for i, lab in enumerate(sorted(set(labels)))}


def load_tsv(path: str | Path, label_map: dict[float, int] | None = None) -> list[Series]:
    """Load one UCR-style file; labels are remapped to 0..k-1 in sorted order."""
    labels, rows = read_rows(path)
    mapping = label_map if label_map is not None else _label_map(labels)
    try:
        return [Series(v, mapping[lab]) for lab, v in zip(labels, rows)]
    except KeyError as exc:
        raise DataError(f"{path}: label {exc.args[0]} missing from the label map") from None


def load_split(train_path: str | Path, test_path: str | Path, znorm: bool = False) -> Dataset:
    """Load a train/test pair with one label map shared by both files."""
    train_labels, train_rows = read_rows(train_path)
    test_labels, test_rows = read_rows(test_path)
    mapping = _label_map(train_labels + test_labels)
    lengths = {r.size for r in train_rows + test_rows}
    if len(lengths) != 1:
        raise DataError(f"train and test series lengths differ: {sorted(lengths)}")

    def build(labels, rows):
        out = [Series(v, mapping[lab]) for lab, v in zip(labels, rows)]
        return [z_normalize(s) for s in out] if znorm else out

    return Dataset(
        train=build(train_labels, train_rows),
        test=build(test_labels, test_rows),
        num_classes=len(mapping),
        length=lengths.pop(),
        label_names=tuple(sorted(mapping)),
    )


def find_split(directory: str | Path) -> tuple[Path, Path]:
    """Locate ``*TRAIN.{tsv,csv,txt}`` and ``*TEST.*`` files inside a UCR dataset folder."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"{directory}: not a directory")
    found = {}
    for part in ("TRAIN", "TEST"):
        hits = sorted(p for p in directory.iterdir()
                      if p.stem.upper().endswith(part) and p.suffix.lower() in (".tsv", ".csv", ".txt"))
        if len(hits) != 1:
            raise DataError(f"{directory}: expected exactly one {part} file, found {len(hits)}")
        found[part] = hits[0]
    return found["TRAIN"], found["TEST"]


def save_tsv(series: Sequence[Series], path: str | Path, label_names: Sequence | None = None) -> None:
    """Write rows as ``label<TAB>v1<TAB>...`` with 17 significant digits."""
    lines = []
    for s in series:
        label = label_names[s.label] if label_names else s.label
        lab = repr(label) if isinstance(label, float) and not float(label).is_integer() else str(int(label))
        lines.append("\t".join([lab] + ["%.17g" % v for v in s.values]))
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# preprocessing


def z_normalize(series: Series | np.ndarray):
    """Zero mean, unit population standard deviation; constant input maps to zeros."""
    values = series.values if isinstance(series, Series) else np.asarray(series, dtype=np.float64)
    std = values.std()
    out = np.zeros_like(values) if std < 1e-12 else (values - values.mean()) / std
    return Series(out, series.label) if isinstance(series, Series) else out


# ---------------------------------------------------------------------------
# synthetic benchmark


def bump_window(length: int, bump_width: int) -> slice:
    start = (length - bump_width) // 2
    return slice(start, start + bump_width)


def gen_synthetic(n_per_class: int = 200, length: int = 64, bump_width: int = 8,
                  noise_std: float = 0.1, seed: int = 0, amplitude: float = 1.5) -> Dataset:
    """Two-class benchmark whose only discriminative region is a centred bump.

    Class 0 is ``sin(2 pi t / d)`` plus Gaussian noise; class 1 adds a
    half-cosine hump of height ``amplitude`` over ``bump_width`` samples in the
    middle of the series. Each class is split 80/20 into train/test.
    """
    if n_per_class < 1:
        raise DataError("n_per_class must be >= 1")
    if not 1 <= bump_width < length:
        raise DataError(f"bump width must lie in [1, {length}), got {bump_width}")
    if noise_std < 0 or not math.isfinite(noise_std):
        raise DataError(f"noise_std must be >= 0, got {noise_std}")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    base = np.sin(2.0 * np.pi * t / length)
    hump = np.zeros(length)
    hump[bump_window(length, bump_width)] = amplitude * np.sin(np.pi * (np.arange(bump_width) + 0.5) / bump_width)

    train: list[Series] = []
    test: list[Series] = []
    n_train = int(round(0.8 * n_per_class))
    for label, template in enumerate((base, base + hump)):
        noise = rng.normal(0.0, 1.0, size=(n_per_class, length)) * noise_std
        rows = template + noise
        order = rng.permutation(n_per_class)
        train += [Series(rows[i], label) for i in order[:n_train]]
        test += [Series(rows[i], label) for i in order[n_train:]]
    train = [train[i] for i in rng.permutation(len(train))]
    test = [test[i] for i in rng.permutation(len(test))]
    return Dataset(train=train, test=test, num_classes=2, length=length)
