"""Profile CSV and report JSON I/O with round-trip float formatting.

Floats are written with ``repr``, the shortest string that reads back to the
same double, so a profile written and read again is bit-identical.  Files
are written to a temporary sibling and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass

import numpy as np

from .kinematics import RadialProfile, det_at_origin, extrapolate_to_origin, z_values
from .penalty import PenaltySpec

__all__ = ["PROFILE_COLUMNS", "DIAGNOSTIC_COLUMNS", "CsvFormatError", "ProfileTable",
           "format_float", "profile_rows", "write_profile_csv", "read_profile_csv",
           "write_rows_csv", "write_json", "atomic_write"]

PROFILE_COLUMNS = ("R", "r", "rdot", "d", "z")
DIAGNOSTIC_COLUMNS = ("residual", "zdot", "subsol")


class CsvFormatError(ValueError):
    pass


def format_float(x) -> str:
    if x is None:
        return ""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def atomic_write(path, text: str):
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _origin_values(profile, d, z):
    # values at R = 0 are limits; fill them by extrapolation from the first nodes
    if profile.mesh[0] == 0.0 and np.count_nonzero(profile.positive) >= 3:
        pos = profile.positive
        d = d.copy()
        z = z.copy()
        d[0] = det_at_origin(profile)
        z[0] = extrapolate_to_origin(profile.mesh[pos], z[pos])
    return d, z


def profile_rows(spec: PenaltySpec, profile: RadialProfile, diagnostics: dict | None = None):
    d, z = _origin_values(profile, profile.det(), z_values(spec, profile))
    cols = [profile.mesh, profile.r, profile.rdot, d, z]
    header = list(PROFILE_COLUMNS)
    for name in DIAGNOSTIC_COLUMNS:
        if diagnostics and name in diagnostics:
            header.append(name)
            cols.append(np.asarray(diagnostics[name], dtype=float))
    return header, [[format_float(c[i]) for c in cols] for i in range(profile.mesh.size)]


def write_rows_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    if path is None or path == "-":
        return buf.getvalue()
    atomic_write(path, buf.getvalue())
    return None


def write_profile_csv(path, spec: PenaltySpec, profile: RadialProfile, diagnostics: dict | None = None):
    header, rows = profile_rows(spec, profile, diagnostics)
    return write_rows_csv(path, header, rows)


@dataclass
class ProfileTable:
    columns: dict

    def __getitem__(self, key):
        return self.columns[key]

    def to_profile(self, M: int) -> RadialProfile:
        return RadialProfile(M, self["R"], self["r"], self["rdot"])


def read_profile_csv(path) -> ProfileTable:
    """Read a profile CSV; errors name the offending line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        missing = [c for c in PROFILE_COLUMNS if c not in header]
        if missing:
            raise CsvFormatError(f"{path}:1: missing column(s) {', '.join(missing)}")
        data = {h: [] for h in header}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, found {len(row)}")
            for h, cell in zip(header, row):
                try:
                    data[h].append(float(cell))
                except ValueError:
                    raise CsvFormatError(f"{path}:{lineno}: column {h!r} is not a number: {cell!r}") from None
    if len(data["R"]) < 2:
        raise CsvFormatError(f"{path}: need at least two rows")
    return ProfileTable({h: np.array(v) for h, v in data.items()})


def _clean(value):
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def write_json(path, document: dict):
    text = json.dumps(_clean(document), indent=2) + "\n"
    if path is None or path == "-":
        return text
    atomic_write(path, text)
    return None
