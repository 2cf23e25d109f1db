"""File formats: binary volume files and CSV tables.

Volume file layout::

    MXC1\\n
    dims nx ny nz | spacing hx hy hz | kind contrast\\n
    <little-endian float64 (re, im) pairs, x index fastest>

Spacings are written with 17 significant digits so the header round-trips.
For ``kind impedance`` the dims are ``rows cols 1``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import MaxtomoError

MAGIC = b"MXC1"
KINDS = ("contrast", "field", "impedance")


class FormatError(MaxtomoError, ValueError):
    code = "FORMAT"


def fmt17(x: float) -> str:
    """Shortest-safe decimal with 17 significant digits (exact float round trip)."""
    return f"{float(x):.17g}"


@dataclass
class VolumeFile:
    data: np.ndarray  # complex, shape (nx, ny, nz)
    spacing: tuple[float, float, float]
    kind: str = "contrast"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FormatError(f"unknown volume kind {self.kind!r}")
        arr = np.asarray(self.data, dtype=complex)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise FormatError("volume data must be 3-D (or 2-D for impedance)")
        self.data = arr
        self.spacing = tuple(float(h) for h in self.spacing)

    def header(self) -> str:
        nx, ny, nz = self.data.shape
        hs = " ".join(fmt17(h) for h in self.spacing)
        return f"dims {nx} {ny} {nz} | spacing {hs} | kind {self.kind}"

    def to_bytes(self) -> bytes:
        # x fastest: Fortran order over (x, y, z)
        flat = np.asfortranarray(self.data).ravel(order="F")
        pairs = np.empty(2 * flat.size, dtype="<f8")
        pairs[0::2] = flat.real
        pairs[1::2] = flat.imag
        return MAGIC + b"\n" + self.header().encode("ascii") + b"\n" + pairs.tobytes()

    def write(self, path) -> Path:
        path = Path(path)
        try:
            path.write_bytes(self.to_bytes())
        except OSError as exc:
            raise FormatError(f"cannot write {path}: {exc}") from exc
        return path

    @classmethod
    def from_bytes(cls, raw: bytes) -> "VolumeFile":
        if not raw.startswith(MAGIC + b"\n"):
            raise FormatError("bad magic: not an MXC1 volume file")
        rest = raw[len(MAGIC) + 1 :]
        nl = rest.find(b"\n")
        if nl < 0:
            raise FormatError("missing header line")
        header = rest[:nl].decode("ascii")
        payload = rest[nl + 1 :]
        try:
            parts = [p.split() for p in header.split("|")]
            assert parts[0][0] == "dims" and parts[1][0] == "spacing" and parts[2][0] == "kind"
            dims = tuple(int(v) for v in parts[0][1:4])
            spacing = tuple(float(v) for v in parts[1][1:4])
            kind = parts[2][1]
        except (AssertionError, IndexError, ValueError) as exc:
            raise FormatError(f"malformed header {header!r}") from exc
        n = int(np.prod(dims))
        if len(payload) != 16 * n:
            raise FormatError(f"payload has {len(payload)} bytes, expected {16 * n}")
        # view, not arithmetic, so signed zeros and NaN payloads survive
        flat = np.frombuffer(payload, dtype="<c16").astype(complex)
        return cls(flat.reshape(dims, order="F"), spacing, kind)

    @classmethod
    def read(cls, path) -> "VolumeFile":
        path = Path(path)
        try:
            raw = path.read_bytes()
        except OSError as exc:
            raise FormatError(f"cannot read {path}: {exc}") from exc
        return cls.from_bytes(raw)


# ---------------------------------------------------------------------------
# CSV

FOURIER_HEADER = ("lx", "ly", "lz", "re", "im", "s", "route")
CENTERS_HEADER = ("j", "x", "y", "z", "q_re", "q_im")


def _write_rows(path, header, rows) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)
    except OSError as exc:
        raise FormatError(f"cannot write {path}: {exc}") from exc
    return path


def _read_rows(path, header):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != tuple(header):
        raise FormatError(f"{path}: expected header {','.join(header)}")
    return rows[1:]


def write_fourier_csv(table, path) -> Path:
    """Columns ``lx, ly, lz, re, im, s, route``; failed samples are written as nan."""
    rows = [
        [fmt17(l[0]), fmt17(l[1]), fmt17(l[2]), fmt17(v.real), fmt17(v.imag), fmt17(s), table.route]
        for l, v, s in zip(table.l, table.values, table.s)
    ]
    return _write_rows(path, FOURIER_HEADER, rows)


def read_fourier_csv(path):
    from .recon import FourierTable

    rows = _read_rows(path, FOURIER_HEADER)
    if not rows:
        return FourierTable.empty()
    l = np.array([[float(r[0]), float(r[1]), float(r[2])] for r in rows])
    vals = np.array([complex(float(r[3]), float(r[4])) for r in rows])
    s = np.array([float(r[5]) for r in rows])
    ok = np.isfinite(vals)
    return FourierTable(l, vals, s, rows[0][6], ok, np.full(len(rows), np.nan))


def write_centers_csv(centers, moments, path) -> Path:
    """Columns ``j, x, y, z, q_re, q_im``."""
    rows = []
    for j, (z, q) in enumerate(zip(np.asarray(centers).reshape(-1, 3), moments)):
        q = complex(getattr(q, "q", q))
        rows.append([str(j), fmt17(z[0]), fmt17(z[1]), fmt17(z[2]), fmt17(q.real), fmt17(q.imag)])
    return _write_rows(path, CENTERS_HEADER, rows)


def read_centers_csv(path):
    rows = _read_rows(path, CENTERS_HEADER)
    centers = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in rows]).reshape(-1, 3)
    q = np.array([complex(float(r[4]), float(r[5])) for r in rows])
    return centers, q


def write_report(values: dict, path) -> Path:
    """``key,value`` CSV with floats at 17 significant digits."""
    rows = []
    for key, val in values.items():
        if isinstance(val, (bool, np.bool_)):
            rows.append([key, str(bool(val))])
        elif isinstance(val, complex):
            rows.append([key, f"{fmt17(val.real)}{'+' if val.imag >= 0 else '-'}{fmt17(abs(val.imag))}j"])
        elif isinstance(val, (float, np.floating)):
            rows.append([key, fmt17(val)])
        else:
            rows.append([key, str(val)])
    return _write_rows(path, ("key", "value"), rows)


def write_scenario(scenario, path) -> Path:
    """Inclusion scenario as CSV: one row per inclusion plus a parameters row."""
    rows = [["alpha", fmt17(scenario.alpha), "c0", fmt17(scenario.c0), "c", fmt17(scenario.c)]]
    rows += [
        [str(j), fmt17(z[0]), fmt17(z[1]), fmt17(z[2]), fmt17(n.real), fmt17(n.imag)]
        for j, (z, n) in enumerate(zip(scenario.centers, scenario.indices))
    ]
    return _write_rows(path, ("j", "x", "y", "z", "n_re", "n_im"), rows)


def read_scenario(path, extent=(1.0, 1.0, 1.0)):
    from .locate import InclusionScenario

    rows = _read_rows(path, ("j", "x", "y", "z", "n_re", "n_im"))
    p = rows[0]
    alpha, c0, c = float(p[1]), float(p[3]), float(p[5])
    centers = np.array([[float(r[1]), float(r[2]), float(r[3])] for r in rows[1:]]).reshape(-1, 3)
    idx = np.array([complex(float(r[4]), float(r[5])) for r in rows[1:]])
    return InclusionScenario(centers, alpha, idx, c0, c, tuple(extent))
