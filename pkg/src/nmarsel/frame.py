"""Survey frame: per-unit records and their CSV representation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DataError

BASE_COLUMNS = ("id", "y", "r", "weight")


@dataclass(eq=False)
class SurveyFrame:
    """Columns of a survey sample. ``y`` is NaN exactly where ``r`` is 0."""

    id: np.ndarray
    y: np.ndarray
    r: np.ndarray
    weight: np.ndarray
    z: np.ndarray
    x: np.ndarray
    latent: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.r)
        self.id = np.asarray(self.id, dtype=np.int64)
        self.y = np.asarray(self.y, dtype=float)
        self.r = np.asarray(self.r, dtype=int)
        self.weight = np.asarray(self.weight, dtype=float)
        self.z = np.asarray(self.z, dtype=float).reshape(n, -1)
        self.x = np.asarray(self.x, dtype=float).reshape(n, -1)
        for name in ("id", "y", "weight"):
            if getattr(self, name).shape != (n,):
                raise DataError(f"column {name} has the wrong length")
        if np.any((self.r != 0) & (self.r != 1)):
            raise DataError("r must be 0 or 1")
        if np.any(np.isnan(self.y) != (self.r == 0)):
            raise DataError("y must be present exactly for respondents")
        if np.any(~(self.weight > 0)):
            raise DataError("weights must be positive")

    @property
    def n(self):
        return self.r.shape[0]

    def __len__(self):
        return self.n

    def subset(self, idx):
        idx = np.asarray(idx)
        return SurveyFrame(
            self.id[idx], self.y[idx], self.r[idx], self.weight[idx], self.z[idx], self.x[idx],
            {k: v[idx] for k, v in self.latent.items()},
        )

    @classmethod
    def from_dataset(cls, data, weight=None, ids=None, keep_latents=False):
        n = len(data.r)
        w = getattr(data, "weight", None) if weight is None else weight
        return cls(
            np.arange(1, n + 1) if ids is None else ids,
            data.y,
            data.r,
            np.ones(n) if w is None else w,
            data.z,
            data.x,
            dict(data.latent) if keep_latents else {},
        )

    # -- CSV ---------------------------------------------------------------

    def _latent_columns(self):
        cols = []
        for name in sorted(self.latent):
            arr = np.asarray(self.latent[name], dtype=float)
            if arr.ndim == 1:
                cols.append((f"latent_{name}", arr))
            else:
                for j in range(arr.shape[1]):
                    cols.append((f"latent_{name}_{j + 1}", arr[:, j]))
        return cols

    def to_csv(self, path_or_buffer):
        latent = self._latent_columns()
        header = list(BASE_COLUMNS)
        header += [f"z_{j + 1}" for j in range(self.z.shape[1])]
        header += [f"x_{j + 1}" for j in range(self.x.shape[1])]
        header += [name for name, _ in latent]
        own = isinstance(path_or_buffer, (str, bytes)) or hasattr(path_or_buffer, "__fspath__")
        fh = open(path_or_buffer, "w", newline="") if own else path_or_buffer
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for i in range(self.n):
                row = [str(int(self.id[i])), "" if self.r[i] == 0 else repr(float(self.y[i])), str(int(self.r[i]))]
                row.append(repr(float(self.weight[i])))
                row += [repr(float(v)) for v in self.z[i]]
                row += [repr(float(v)) for v in self.x[i]]
                row += [repr(float(col[i])) for _, col in latent]
                writer.writerow(row)
        finally:
            if own:
                fh.close()

    def to_csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()

    @classmethod
    def read_csv(cls, path):
        with open(path, newline="") as fh:
            return cls._parse(csv.reader(fh), str(path))

    @classmethod
    def from_csv_string(cls, text):
        return cls._parse(csv.reader(io.StringIO(text)), "<string>")

    @classmethod
    def _parse(cls, reader, source):
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{source}: empty file") from None
        if tuple(header[:4]) != BASE_COLUMNS:
            raise DataError(f"{source}, line 1: header must start with {','.join(BASE_COLUMNS)}")
        z_cols = [c for c in header[4:] if c.startswith("z_")]
        x_cols = [c for c in header[4:] if c.startswith("x_")]
        l_cols = [c for c in header[4:] if c.startswith("latent_")]
        if len(z_cols) + len(x_cols) + len(l_cols) != len(header) - 4:
            bad = [c for c in header[4:] if c not in z_cols + x_cols + l_cols]
            raise DataError(f"{source}, line 1: unexpected columns {bad}")
        expected = [f"z_{j + 1}" for j in range(len(z_cols))] + [f"x_{j + 1}" for j in range(len(x_cols))]
        if header[4 : 4 + len(expected)] != expected:
            raise DataError(f"{source}, line 1: expected columns {expected} after the base columns")
        ids, ys, rs, ws, rows = [], [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"{source}, line {lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ids.append(int(row[0]))
            except ValueError:
                raise DataError(f"{source}, line {lineno}: id is not an integer") from None
            if row[2] not in ("0", "1"):
                raise DataError(f"{source}, line {lineno}: r must be 0 or 1, got {row[2]!r}")
            r = int(row[2])
            if (row[1] == "") != (r == 0):
                raise DataError(f"{source}, line {lineno}: y must be empty exactly when r = 0")
            try:
                ys.append(float(row[1]) if r else np.nan)
                w = float(row[3])
                rest = [float(v) for v in row[4:]]
            except ValueError as exc:
                raise DataError(f"{source}, line {lineno}: {exc}") from None
            if not w > 0:
                raise DataError(f"{source}, line {lineno}: weight must be positive")
            rs.append(r)
            ws.append(w)
            rows.append(rest)
        n = len(rs)
        if n == 0:
            raise DataError(f"{source}: no records")
        body = np.asarray(rows, dtype=float).reshape(n, len(header) - 4)
        kz, kx = len(z_cols), len(x_cols)
        latent = {c[len("latent_"):]: body[:, kz + kx + j] for j, c in enumerate(l_cols)}
        return cls(np.array(ids), np.array(ys), np.array(rs), np.array(ws), body[:, :kz], body[:, kz : kz + kx], latent)
