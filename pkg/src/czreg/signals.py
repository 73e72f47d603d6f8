"""Sampled test functions on uniform grids and their on-disk formats.

Binary ``.szf`` layout (all integers little-endian)::

    bytes 0..3    magic b"SZF1"
    bytes 4..11   uint64 header length H
    bytes 12..    H bytes of UTF-8 JSON: dim, origin, spacing, shape, meta
    then          prod(shape) float64 values, little-endian, row-major

The CSV variant starts with a ``# szf {json}`` comment line carrying the same
header, followed by one value per row (d=1) or one grid row per line (d=2).
"""

from __future__ import annotations

import io
import json
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, FormatError

__all__ = [
    "GridSpec",
    "SampledFunction",
    "gen_brownian",
    "gen_weierstrass",
    "gen_cusp",
    "gen_poly",
    "gen_callable",
    "generate",
    "KINDS",
    "save",
    "load",
    "save_csv",
    "load_csv",
    "weierstrass_default_terms",
]

MAGIC = b"SZF1"


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid: ``origin`` and ``shape`` per axis, common ``spacing``."""

    origin: tuple
    spacing: float
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in np.atleast_1d(self.origin)))
        object.__setattr__(self, "shape", tuple(int(s) for s in np.atleast_1d(self.shape)))
        if len(self.origin) != len(self.shape) or len(self.shape) not in (1, 2):
            raise DomainError("grid must be 1- or 2-dimensional with matching origin/shape")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise DomainError(f"spacing must be positive, got {self.spacing}")
        if min(self.shape) < 1:
            raise DomainError("every axis needs at least one sample")

    @classmethod
    def linspace(cls, lo, hi, n, dim=1):
        """``n`` points per axis covering ``[lo, hi]`` inclusive."""
        if n < 2 or not hi > lo:
            raise DomainError("need n >= 2 and hi > lo")
        return cls((lo,) * dim, (hi - lo) / (n - 1), (n,) * dim)

    @property
    def dim(self):
        return len(self.shape)

    def axis(self, i):
        return self.origin[i] + self.spacing * np.arange(self.shape[i])

    def mesh(self):
        """Coordinates with shape ``shape + (dim,)``."""
        axes = [self.axis(i) for i in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass
class SampledFunction:
    """Values of a function on a uniform grid.

    ``values`` is stored with its grid shape; :attr:`flat_values` gives the
    row-major sequence.
    """

    values: np.ndarray
    origin: tuple
    spacing: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.origin = tuple(float(o) for o in np.atleast_1d(self.origin))
        self.spacing = float(self.spacing)
        if self.values.ndim not in (1, 2):
            raise DomainError(f"only d in {{1, 2}} is supported, got d={self.values.ndim}")
        if len(self.origin) != self.values.ndim:
            raise DomainError("origin length must match the number of axes")
        if not (self.spacing > 0 and math.isfinite(self.spacing)):
            raise DomainError(f"spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("sample values must be finite")

    @classmethod
    def from_grid(cls, grid, values, meta=None):
        values = np.asarray(values, dtype=np.float64).reshape(grid.shape)
        return cls(values, grid.origin, grid.spacing, dict(meta or {}))

    @property
    def dim(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def grid(self):
        return GridSpec(self.origin, self.spacing, self.shape)

    @property
    def flat_values(self):
        return self.values.reshape(-1)

    @property
    def cell_volume(self):
        return self.spacing ** self.dim

    @property
    def lower(self):
        return np.asarray(self.origin)

    @property
    def upper(self):
        return np.asarray(self.origin) + self.spacing * (np.asarray(self.shape) - 1)

    @property
    def extent(self):
        """Smallest side length of the sampled window."""
        return float(np.min(self.upper - self.lower))

    def axis(self, i):
        return self.grid.axis(i)

    def header(self):
        return {
            "dim": self.dim,
            "origin": list(self.origin),
            "spacing": self.spacing,
            "shape": list(self.shape),
            "meta": self.meta,
        }

    def __eq__(self, other):
        if not isinstance(other, SampledFunction):
            return NotImplemented
        return (
            self.origin == other.origin
            and self.spacing == other.spacing
            and self.shape == other.shape
            and self.meta == other.meta
            and self.values.tobytes() == other.values.tobytes()
        )


def _grid_or_default(grid, n=4097, lo=0.0, hi=1.0):
    return grid if grid is not None else GridSpec.linspace(lo, hi, n)


# ---------------------------------------------------------------- generators

def gen_brownian(n, horizon=1.0, seed=0):
    """Brownian path sampled exactly at ``n`` equispaced times on ``[0, horizon]``.

    Increments are independent centred Gaussians with variance equal to the
    spacing, so there is no discretisation bias at the grid points.
    """
    n = int(n)
    if n < 2:
        raise DomainError(f"need at least 2 samples, got {n}")
    if not horizon > 0:
        raise DomainError(f"horizon must be positive, got {horizon}")
    dt = horizon / (n - 1)
    rng = np.random.default_rng(seed)
    steps = rng.standard_normal(n - 1) * math.sqrt(dt)
    values = np.concatenate([[0.0], np.cumsum(steps)])
    meta = {"generator": "brownian", "params": {"n": n, "horizon": float(horizon)}, "seed": int(seed)}
    return SampledFunction(values, (0.0,), dt, meta)


def weierstrass_default_terms(b, spacing):
    """Number of terms whose frequency stays below the grid's Nyquist limit.

    Term ``k`` is ``cos(b^k pi x)``; it is resolved when ``b^k < 1/spacing``.
    """
    count = 0
    while b ** count < 1.0 / spacing:
        count += 1
    return max(count, 1)


def _weierstrass_1d(x, a, b, terms):
    out = np.zeros_like(x)
    # b^k x mod 2 by repeated multiplication keeps the cosine argument small
    phase = np.mod(x, 2.0)
    amp = 1.0
    for _ in range(terms):
        out += amp * np.cos(np.pi * phase)
        phase = np.mod(b * phase, 2.0)
        amp *= a
    return out


def gen_weierstrass(a, b, terms=None, grid=None):
    """Weierstrass function ``sum_{k<terms} a^k cos(b^k pi x)``.

    In two dimensions the one-dimensional series is summed over both axes.
    ``terms`` defaults to :func:`weierstrass_default_terms` so that no
    component aliases on the grid. The truncation bound ``a^terms / (1-a)``
    is stored in ``meta``.
    """
    a = float(a)
    if not 0 < a < 1:
        raise DomainError(f"a must lie in (0, 1), got {a}")
    if int(b) != b or b < 2:
        raise DomainError(f"b must be an integer >= 2, got {b}")
    b = int(b)
    if a * b < 1:
        raise DomainError(f"need a*b >= 1, got {a * b}")
    grid = _grid_or_default(grid)
    if terms is None:
        terms = weierstrass_default_terms(b, grid.spacing)
    terms = int(terms)
    if terms < 1:
        raise DomainError("terms must be >= 1")
    mesh = grid.mesh()
    values = sum(_weierstrass_1d(mesh[..., i], a, b, terms) for i in range(grid.dim))
    meta = {
        "generator": "weierstrass",
        "params": {"a": a, "b": b, "terms": terms},
        "truncation_bound": a ** terms / (1 - a),
        "holder_exponent": -math.log(a) / math.log(b),
    }
    return SampledFunction.from_grid(grid, values, meta)


def gen_cusp(x0, u, grid=None):
    """Cusp ``|x - x0|^u`` (Euclidean norm in two dimensions)."""
    if not u > 0:
        raise DomainError(f"u must be positive, got {u}")
    grid = _grid_or_default(grid, lo=-1.0, hi=1.0)
    x0 = np.broadcast_to(np.asarray(x0, dtype=float), (grid.dim,))
    dist = np.linalg.norm(grid.mesh() - x0, axis=-1)
    meta = {"generator": "cusp", "params": {"x0": x0.tolist(), "u": float(u)}}
    return SampledFunction.from_grid(grid, dist ** u, meta)


def gen_poly(jet, grid=None):
    """Exact evaluation of a :class:`~czreg.lp_approx.PolyJet` on a grid."""
    from .lp_approx import eval_jet

    grid = _grid_or_default(grid)
    if jet.dim != grid.dim:
        raise DomainError("jet and grid dimensions differ")
    values = eval_jet(jet, grid.mesh())
    meta = {"generator": "poly", "params": jet.to_dict()}
    return SampledFunction.from_grid(grid, values, meta)


def gen_callable(func, grid=None, name="callable", params=None):
    """Sample a vectorised callable ``func(x)`` (``x`` has shape ``(..., dim)``)."""
    grid = _grid_or_default(grid)
    mesh = grid.mesh()
    values = func(mesh[..., 0] if grid.dim == 1 else mesh)
    meta = {"generator": name, "params": dict(params or {})}
    return SampledFunction.from_grid(grid, values, meta)


KINDS = ("brownian", "weierstrass", "cusp", "poly", "sin", "exp")


def generate(kind, n=None, seed=0, a=0.5, b=3, u=0.6, x0=0.0, coeffs=(0.0,), lo=None, hi=None,
             horizon=1.0, terms=None):
    """Build a one-dimensional test function by name.

    Parameters not used by ``kind`` are ignored. Default windows are
    ``[0, horizon]`` for Brownian paths, ``[-1, 1]`` for cusps and
    ``[0, 1]`` otherwise; ``n`` defaults to ``2^14 + 1`` samples.

    Examples
    --------
    >>> generate("poly", coeffs=(1.0, 2.0), n=5).values.tolist()
    [1.0, 1.5, 2.0, 2.5, 3.0]
    """
    if kind not in KINDS:
        raise DomainError(f"unknown kind {kind!r}; expected one of {', '.join(KINDS)}")
    n = 2 ** 14 + 1 if n is None else int(n)
    if kind == "brownian":
        return gen_brownian(n, horizon, seed)
    if lo is None:
        lo = -1.0 if kind == "cusp" else 0.0
    hi = 1.0 if hi is None else hi
    grid = GridSpec.linspace(lo, hi, n)
    if kind == "weierstrass":
        return gen_weierstrass(a, b, terms, grid)
    if kind == "cusp":
        return gen_cusp(x0, u, grid)
    if kind == "poly":
        from .lp_approx import PolyJet

        coeffs = [float(c) for c in np.atleast_1d(coeffs)]
        return gen_poly(PolyJet((float(x0),), len(coeffs) - 1, coeffs), grid)
    func = np.sin if kind == "sin" else np.exp
    return gen_callable(func, grid, kind)


# ---------------------------------------------------------------- persistence

def _atomic_write(path, data):
    path = os.fspath(path)
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def to_bytes(f):
    header = json.dumps(f.header(), sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(f.flat_values, dtype="<f8").tobytes()
    return MAGIC + struct.pack("<Q", len(header)) + header + body


def from_bytes(data):
    if len(data) < 12:
        raise FormatError("file shorter than the fixed preamble", len(data))
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}", 0)
    (hlen,) = struct.unpack("<Q", data[4:12])
    if 12 + hlen > len(data):
        raise FormatError(f"header length {hlen} runs past end of file", 4)
    try:
        header = json.loads(data[12:12 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        pos = getattr(exc, "pos", getattr(exc, "start", 0))
        raise FormatError(f"header is not valid JSON: {exc}", 12 + pos) from None
    header = _check_header(header, 12)
    count = int(np.prod(header["shape"]))
    body = data[12 + hlen:]
    if len(body) != 8 * count:
        raise FormatError(
            f"expected {8 * count} value bytes for shape {header['shape']}, found {len(body)}",
            12 + hlen,
        )
    values = np.frombuffer(body, dtype="<f8").astype(np.float64).reshape(header["shape"])
    bad = np.flatnonzero(~np.isfinite(values.reshape(-1)))
    if bad.size:
        raise FormatError("non-finite sample value", 12 + hlen + 8 * int(bad[0]))
    return SampledFunction(values, tuple(header["origin"]), header["spacing"], header["meta"])


def _check_header(header, offset):
    if not isinstance(header, dict):
        raise FormatError("header must be a JSON object", offset)
    for key in ("dim", "origin", "spacing", "shape"):
        if key not in header:
            raise FormatError(f"header lacks {key!r}", offset)
    dim = header["dim"]
    if dim not in (1, 2) or len(header["shape"]) != dim or len(header["origin"]) != dim:
        raise FormatError("inconsistent dim/shape/origin in header", offset)
    if not (isinstance(header["spacing"], (int, float)) and header["spacing"] > 0):
        raise FormatError("spacing must be a positive number", offset)
    if any((not isinstance(s, int)) or s < 1 for s in header["shape"]):
        raise FormatError("shape entries must be positive integers", offset)
    header.setdefault("meta", {})
    return header


def save(f, path):
    """Write ``f`` to ``path`` in ``.szf`` format (atomically)."""
    _atomic_write(path, to_bytes(f))


def load(path):
    """Read an ``.szf`` file; raises :class:`FormatError` with a byte offset."""
    with open(path, "rb") as fh:
        return from_bytes(fh.read())


def save_csv(f, path):
    buf = io.StringIO()
    buf.write("# szf " + json.dumps(f.header(), sort_keys=True) + "\n")
    np.savetxt(buf, f.values if f.dim == 2 else f.values[:, None], fmt="%.17g", delimiter=",")
    _atomic_write(path, buf.getvalue().encode("utf-8"))


def load_csv(path, origin=None, spacing=1.0):
    """Read CSV samples.

    Without a ``# szf`` header line the grid is taken from ``origin`` (zeros
    by default) and ``spacing``, and the dimension from the column count.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    header = None
    body = text
    if text.startswith("# szf "):
        first, _, body = text.partition("\n")
        try:
            header = _check_header(json.loads(first[len("# szf "):]), 0)
        except json.JSONDecodeError as exc:
            raise FormatError(f"CSV header is not valid JSON: {exc}", len("# szf ") + exc.pos) from None
    rows = []
    offset = len(text) - len(body)
    for line in body.splitlines(keepends=True):
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            try:
                rows.append([float(v) for v in stripped.split(",")])
            except ValueError:
                raise FormatError(f"unparsable CSV row {stripped!r}", offset) from None
        offset += len(line)
    if not rows or len({len(r) for r in rows}) != 1:
        raise FormatError("CSV rows are empty or ragged", len(text) - len(body))
    values = np.asarray(rows, dtype=float)
    if header is not None:
        if int(np.prod(header["shape"])) != values.size:
            raise FormatError("CSV value count does not match header shape", 0)
        return SampledFunction(values.reshape(header["shape"]), tuple(header["origin"]),
                               header["spacing"], header["meta"])
    if values.shape[1] == 1:
        values = values[:, 0]
    dim = values.ndim
    origin = (0.0,) * dim if origin is None else origin
    return SampledFunction(values, origin, spacing, {"generator": "csv"})
