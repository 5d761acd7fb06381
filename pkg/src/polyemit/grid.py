"""Sampled Green-tensor grids: load, save, validate, interpolate.

Externally computed environments arrive as rectilinear grids of the
imaginary part of the Green tensor at coincident points, optionally with
derivative blocks. On-disk format is a UTF-8 JSON document:

    {"format_version": 1,
     "frequency_rad_per_s": 2.4e15,
     "length_unit": "nm",                  # "nm" | "um" | "m"
     "value_unit_exponent": -1,            # value ~ unit^exp, d1 ~ unit^(exp-1)
     "derivative_semantics": "split",      # "split" | "total", mandatory
     "symmetry_rtol": 1e-6,                # optional, default 1e-6
     "provenance": ...,                    # optional free-form metadata
     "axes": {"x": [...], "y": [...], "z": [...] or fixed scalar},
     "blocks": {"value": [...], "d1_x": [...], ...}}

Each block is a flat node-major list (row-major over x, y, z; z fastest)
of 3x3 tensors whose entries are serialized as [re, im]. The physical
content is Im G, which is real; a nonzero imaginary residue is tolerated
on load and flagged by validate_grid. Axis coordinates are in
length_unit; everything is converted to SI on access.

The derivative_semantics declaration fixes what the d1/d2 blocks mean:

    "split":  d1_a      field-point gradient       dG/dr_a
              d1_a_src  source-point gradient      dG/dr'_a
              d2_ab     mixed second derivative    d2 G / dr_a dr'_b
    "total":  d1_a, d2_ab differentiate the coincident map r -> G(r, r),
              i.e. field and source point displaced together.

Split grids feed the full multipole machinery. A total derivative cannot
be decomposed into the separate field/source gradients that the
beyond-dipole contractions need, so total-semantics grids serve
dipole-only queries: jets carry the value block and nothing else.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np

from .errors import GridDomainError, GridFormatError, InputError
from .homogeneous import Medium, coincident_im_jet, eval_homogeneous
from .jets import GreensJet

__all__ = [
    "TensorGrid", "CheckResult", "GridValidationReport",
    "load_grid", "save_grid", "jet_at", "validate_grid",
    "finite_difference_blocks", "grid_from_homogeneous",
]

_METERS_PER_UNIT = {"nm": 1e-9, "um": 1e-6, "m": 1.0}
_AXES = "xyz"
_D1_KEYS = tuple(f"d1_{a}" for a in _AXES)
_D1_SRC_KEYS = tuple(f"d1_{a}_src" for a in _AXES)
_D2_KEYS = tuple(f"d2_{a}{b}" for a in _AXES for b in _AXES)


def _derivative_order(key: str) -> int:
    if key == "value":
        return 0
    return 1 if key.startswith("d1") else 2


def _allowed_keys(semantics: str) -> set:
    keys = {"value", *_D1_KEYS, *_D2_KEYS}
    if semantics == "split":
        keys |= set(_D1_SRC_KEYS)
    return keys


@dataclass(frozen=True, eq=False)
class TensorGrid:
    """Immutable rectilinear grid of Im-G tensor blocks.

    Coordinates and block entries are stored exactly as declared (in
    length_unit powers); SI views are computed on access, which keeps a
    save/load cycle bitwise faithful. x and y are always coordinate
    arrays; z may be a fixed scalar for planar data (fixed_axes records
    which). All queries are pure and safe for concurrent use.
    """

    frequency: float
    length_unit: str
    value_unit_exponent: int
    derivative_semantics: str
    axes: tuple
    fixed_axes: tuple
    blocks: dict
    symmetry_tol: float = 1e-6
    provenance: Any = None

    def __post_init__(self):
        freq = float(self.frequency)
        if not (math.isfinite(freq) and freq > 0.0):
            raise GridFormatError("frequency_rad_per_s must be finite and > 0")
        object.__setattr__(self, "frequency", freq)
        if self.length_unit not in _METERS_PER_UNIT:
            raise GridFormatError(
                f"length_unit {self.length_unit!r} is not one of 'nm', 'um', 'm'")
        exp = self.value_unit_exponent
        if isinstance(exp, bool) or not isinstance(exp, (int, np.integer)):
            raise GridFormatError("value_unit_exponent must be an integer")
        object.__setattr__(self, "value_unit_exponent", int(exp))
        if self.derivative_semantics not in ("total", "split"):
            raise GridFormatError(
                "derivative_semantics must be declared 'total' or 'split', "
                f"got {self.derivative_semantics!r}")
        tol = float(self.symmetry_tol)
        if not (math.isfinite(tol) and tol > 0.0):
            raise GridFormatError("symmetry tolerance must be finite and > 0")
        object.__setattr__(self, "symmetry_tol", tol)

        if len(self.axes) != 3 or len(self.fixed_axes) != 3:
            raise GridFormatError("axes and fixed_axes must give x, y and z")
        fixed = tuple(bool(f) for f in self.fixed_axes)
        if fixed[0] or fixed[1]:
            raise GridFormatError(
                "x and y must be coordinate arrays; only z may be fixed")
        axes = []
        for name, ax, fx in zip(_AXES, self.axes, fixed):
            arr = np.atleast_1d(np.asarray(ax, dtype=float)).copy()
            if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
                raise GridFormatError(
                    f"axes.{name} must be a nonempty finite 1-D array")
            if fx and arr.size != 1:
                raise GridFormatError(
                    f"axes.{name} is declared fixed but carries {arr.size} values")
            if arr.size > 1 and not np.all(np.diff(arr) > 0.0):
                raise GridFormatError(f"axes.{name} must be strictly increasing")
            arr.flags.writeable = False
            axes.append(arr)
        object.__setattr__(self, "axes", tuple(axes))
        object.__setattr__(self, "fixed_axes", fixed)

        if not isinstance(self.blocks, dict) or "value" not in self.blocks:
            raise GridFormatError("blocks must be a mapping with a 'value' block")
        want = tuple(a.size for a in axes) + (3, 3)
        allowed = _allowed_keys(self.derivative_semantics)
        norm = {}
        for key in sorted(self.blocks):
            if key not in allowed:
                raise GridFormatError(
                    f"blocks.{key}: unrecognized under "
                    f"{self.derivative_semantics!r} semantics")
            arr = np.asarray(self.blocks[key], dtype=complex).copy()
            if arr.shape != want:
                raise GridFormatError(
                    f"blocks.{key}: shape {arr.shape} does not match grid {want}")
            if not np.all(np.isfinite(arr)):
                raise GridFormatError(f"blocks.{key}: non-finite entries")
            arr.flags.writeable = False
            norm[key] = arr
        object.__setattr__(self, "blocks", norm)

    @property
    def meters_per_unit(self) -> float:
        return _METERS_PER_UNIT[self.length_unit]

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    def axes_si(self) -> tuple:
        m = self.meters_per_unit
        return tuple(a * m for a in self.axes)

    def block_si(self, key: str) -> np.ndarray:
        """One block converted to SI (m^(exponent - derivative order))."""
        if key not in self.blocks:
            raise GridDomainError(f"grid has no {key!r} block")
        scale = self.meters_per_unit ** (
            self.value_unit_exponent - _derivative_order(key))
        return self.blocks[key] * scale

    def node_points(self) -> np.ndarray:
        """All grid nodes as an (N, 3) SI array, row-major (z fastest)."""
        gx, gy, gz = np.meshgrid(*self.axes_si(), indexing="ij")
        return np.stack([gx, gy, gz], axis=-1).reshape(-1, 3)

    def _locate(self, point) -> list:
        p = np.asarray(point, dtype=float).reshape(-1)
        if p.shape != (3,) or not np.all(np.isfinite(p)):
            raise InputError("query point must be a finite 3-vector (m)")
        axes = self.axes_si()
        span = max(a[-1] - a[0] for a in axes)
        scale = max(span, max(np.abs(a).max() for a in axes))
        tol = 1e-9 * (scale if scale > 0.0 else 1.0)
        locs = []
        for name, a, c in zip(_AXES, axes, p):
            if a.size == 1:
                if abs(c - a[0]) > tol:
                    raise GridDomainError(
                        f"point {name}={c:.9g} m is off the grid plane "
                        f"{name}={a[0]:.9g} m")
                locs.append((0, 0, 0.0))
                continue
            if c < a[0] - tol or c > a[-1] + tol:
                raise GridDomainError(
                    f"point {name}={c:.9g} m outside the grid range "
                    f"[{a[0]:.9g}, {a[-1]:.9g}] m")
            hi = int(np.searchsorted(a, c))
            hi = min(max(hi, 1), a.size - 1)
            lo = hi - 1
            t = (c - a[lo]) / (a[hi] - a[lo])
            locs.append((lo, hi, min(max(t, 0.0), 1.0)))
        return locs

    def _interp(self, key: str, locs: list) -> np.ndarray:
        arr = self.block_si(key)
        for lo, hi, t in locs:
            # exact node hits keep the stored tensor bit-identical
            if t == 0.0:
                arr = arr[lo]
            elif t == 1.0:
                arr = arr[hi]
            else:
                arr = (1.0 - t) * arr[lo] + t * arr[hi]
        return arr

    def jet_at(self, point, require_derivatives: bool = False) -> GreensJet:
        """Multilinear imaginary-part jet at an SI point inside the hull.

        Split-semantics grids populate every derivative block the file
        carries; total-semantics grids yield value-only jets, since a
        total derivative cannot be separated into the field/source
        gradients the contraction machinery consumes. With
        require_derivatives=True a jet that would come back incomplete
        raises instead.
        """
        locs = self._locate(point)
        value = self._interp("value", locs).real

        d_obs = d_src = d_mixed = None
        missing = []
        if self.derivative_semantics == "split":
            if all(k in self.blocks for k in _D1_KEYS):
                d_obs = np.stack(
                    [self._interp(k, locs).real for k in _D1_KEYS], axis=-1)
            else:
                missing += [k for k in _D1_KEYS if k not in self.blocks]
            if all(k in self.blocks for k in _D1_SRC_KEYS):
                d_src = np.stack(
                    [self._interp(k, locs).real for k in _D1_SRC_KEYS], axis=-1)
            else:
                missing += [k for k in _D1_SRC_KEYS if k not in self.blocks]
            if all(k in self.blocks for k in _D2_KEYS):
                d_mixed = np.stack(
                    [np.stack([self._interp(f"d2_{a}{b}", locs).real
                               for b in _AXES], axis=-1)
                     for a in _AXES], axis=2)
            else:
                missing += [k for k in _D2_KEYS if k not in self.blocks]
        else:
            missing.append("field/source-split blocks (grid declares "
                           "'total' derivative semantics)")
        if require_derivatives and missing:
            raise GridDomainError(
                "grid cannot supply the derivative data needed for "
                "second-order channels: missing " + ", ".join(missing))
        return GreensJet(value=value, d_obs=d_obs, d_src=d_src,
                         d_mixed=d_mixed, part="imag")

    def equals(self, other: "TensorGrid") -> bool:
        """Exact equality of metadata, axes, and block arrays."""
        if not isinstance(other, TensorGrid):
            return False
        if (self.frequency, self.length_unit, self.value_unit_exponent,
                self.derivative_semantics, self.fixed_axes, self.symmetry_tol,
                self.provenance) != (
                other.frequency, other.length_unit, other.value_unit_exponent,
                other.derivative_semantics, other.fixed_axes,
                other.symmetry_tol, other.provenance):
            return False
        if any(not np.array_equal(a, b) for a, b in zip(self.axes, other.axes)):
            return False
        if sorted(self.blocks) != sorted(other.blocks):
            return False
        return all(np.array_equal(self.blocks[k], other.blocks[k])
                   for k in self.blocks)


def jet_at(grid: TensorGrid, point, require_derivatives: bool = False) -> GreensJet:
    return grid.jet_at(point, require_derivatives=require_derivatives)


# ---------------------------------------------------------------------------
# serialization

def _reject_constant(token: str):
    raise GridFormatError(f"non-finite number {token!r} in grid file")


def _block_payload(arr: np.ndarray) -> list:
    flat = arr.reshape(-1, 3, 3)
    return [[[[float(e.real), float(e.imag)] for e in row] for row in node]
            for node in flat]


def save_grid(grid: TensorGrid) -> bytes:
    """Serialize to canonical UTF-8 JSON bytes.

    Canonical means sorted keys, compact separators, shortest
    round-trip decimals; the same grid always produces the same bytes,
    and load_grid(save_grid(g)) reproduces g exactly.
    """
    doc = {
        "format_version": 1,
        "frequency_rad_per_s": grid.frequency,
        "length_unit": grid.length_unit,
        "value_unit_exponent": grid.value_unit_exponent,
        "derivative_semantics": grid.derivative_semantics,
        "symmetry_rtol": grid.symmetry_tol,
        "axes": {name: (float(arr[0]) if fx else [float(v) for v in arr])
                 for name, arr, fx in zip(_AXES, grid.axes, grid.fixed_axes)},
        "blocks": {k: _block_payload(grid.blocks[k]) for k in sorted(grid.blocks)},
    }
    if grid.provenance is not None:
        doc["provenance"] = grid.provenance
    try:
        text = json.dumps(doc, ensure_ascii=False, sort_keys=True,
                          separators=(",", ":"), allow_nan=False)
    except (TypeError, ValueError) as exc:
        raise GridFormatError(f"grid is not serializable: {exc}") from None
    return text.encode("utf-8")


def _locate_block_defect(key: str, payload, n_nodes: int):
    """Pinpoint why a block payload failed the fast vectorized parse."""
    if len(payload) != n_nodes:
        raise GridFormatError(
            f"blocks.{key}: expected {n_nodes} nodes, got {len(payload)}")
    for i, node in enumerate(payload):
        if not isinstance(node, list) or len(node) != 3:
            raise GridFormatError(f"blocks.{key}[{i}]: expected 3 rows")
        for j, row in enumerate(node):
            if not isinstance(row, list) or len(row) != 3:
                raise GridFormatError(
                    f"blocks.{key}[{i}][{j}]: expected 3 entries")
            for k, entry in enumerate(row):
                ok = (isinstance(entry, list) and len(entry) == 2
                      and all(isinstance(v, (int, float))
                              and not isinstance(v, bool) for v in entry))
                if not ok:
                    raise GridFormatError(
                        f"blocks.{key}[{i}][{j}][{k}]: expected [re, im]")
    raise GridFormatError(f"blocks.{key}: malformed block data")


def _parse_block(key: str, payload, n_nodes: int, shape: tuple) -> np.ndarray:
    if not isinstance(payload, list):
        raise GridFormatError(f"blocks.{key}: expected a list of nodes")
    try:
        arr = np.asarray(payload, dtype=float)
    except (TypeError, ValueError):
        arr = None
    if arr is None or arr.shape != (n_nodes, 3, 3, 2):
        _locate_block_defect(key, payload, n_nodes)
    if not np.all(np.isfinite(arr)):
        raise GridFormatError(f"blocks.{key}: non-finite entries")
    return (arr[..., 0] + 1j * arr[..., 1]).reshape(shape + (3, 3))


def load_grid(source) -> TensorGrid:
    """Parse a grid file into a fully validated, unit-aware TensorGrid.

    Accepts bytes, str, or a binary file-like object. Structural
    problems (malformed header, missing semantics declaration,
    non-monotone axes, ragged or non-finite blocks) are rejected with
    a diagnostic naming the offending field.
    """
    if hasattr(source, "read"):
        source = source.read()
    if isinstance(source, (bytes, bytearray, memoryview)):
        try:
            source = bytes(source).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise GridFormatError(f"grid file is not UTF-8: {exc}") from None
    if not isinstance(source, str):
        raise InputError(
            "load_grid expects bytes, str, or a binary file-like object")
    try:
        doc = json.loads(source, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise GridFormatError(f"grid file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise GridFormatError("grid file top level must be a JSON object")

    version = doc.get("format_version")
    if version != 1:
        raise GridFormatError(f"format_version: expected 1, got {version!r}")
    freq = doc.get("frequency_rad_per_s")
    if isinstance(freq, bool) or not isinstance(freq, (int, float)):
        raise GridFormatError("frequency_rad_per_s: expected a number")

    axes_doc = doc.get("axes")
    if not isinstance(axes_doc, dict):
        raise GridFormatError("axes: expected an object with x, y, z")
    axes, fixed = [], []
    for name in _AXES:
        if name not in axes_doc:
            raise GridFormatError(f"axes.{name}: required")
        ax = axes_doc[name]
        if isinstance(ax, (int, float)) and not isinstance(ax, bool):
            if name != "z":
                raise GridFormatError(
                    f"axes.{name}: only z may be a fixed scalar")
            axes.append([float(ax)])
            fixed.append(True)
            continue
        if not isinstance(ax, list) or not ax or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool)
                for v in ax):
            raise GridFormatError(
                f"axes.{name}: expected a nonempty number array "
                "(or a fixed scalar for z)")
        axes.append([float(v) for v in ax])
        fixed.append(False)

    blocks_doc = doc.get("blocks")
    if not isinstance(blocks_doc, dict) or "value" not in blocks_doc:
        raise GridFormatError("blocks: expected an object with a 'value' block")
    shape = tuple(len(a) for a in axes)
    n_nodes = int(np.prod(shape))
    blocks = {key: _parse_block(key, payload, n_nodes, shape)
              for key, payload in blocks_doc.items()}

    tol = doc.get("symmetry_rtol", 1e-6)
    if isinstance(tol, bool) or not isinstance(tol, (int, float)):
        raise GridFormatError("symmetry_rtol: expected a number")

    return TensorGrid(
        frequency=freq,
        length_unit=doc.get("length_unit"),
        value_unit_exponent=doc.get("value_unit_exponent"),
        derivative_semantics=doc.get("derivative_semantics"),
        axes=tuple(axes),
        fixed_axes=tuple(fixed),
        blocks=blocks,
        symmetry_tol=float(tol),
        provenance=doc.get("provenance"),
    )


# ---------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    residual: float
    detail: str = ""


@dataclass(frozen=True)
class GridValidationReport:
    """Deterministic per-check outcomes for one grid.

    missing_blocks lists derivative blocks the grid could carry but does
    not; absence is permitted, so it never fails the report by itself.
    """

    checks: tuple
    missing_blocks: tuple

    @property
    def all_pass(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "all_pass": self.all_pass,
            "missing_blocks": list(self.missing_blocks),
            "checks": [{"name": c.name, "passed": c.passed,
                        "residual": c.residual, "detail": c.detail}
                       for c in self.checks],
        }


def _symmetry_residual(value: np.ndarray) -> tuple:
    mats = value.reshape(-1, 3, 3)
    scale = np.abs(mats).max(axis=(1, 2))
    asym = np.abs(mats - np.transpose(mats, (0, 2, 1))).max(axis=(1, 2))
    rel = asym / np.where(scale > 0.0, scale, 1.0)
    worst = int(np.argmax(rel))
    return float(rel[worst]), worst


def validate_grid(grid: TensorGrid, derivative_rtol: float = 0.05,
                  imag_rtol: float = 1e-6) -> GridValidationReport:
    """Run the grid invariant checks and report pass/fail per check.

    Checks: header/unit sanity, node-wise value symmetry (tolerance from
    the grid header), imaginary residue of the stored tensors (the
    physical content is real), and consistency of declared first
    derivative blocks with finite differences of the value block along
    axes with at least three nodes. The derivative cross-check compares
    at interior nodes only and is limited by the solver's own truncation
    error, hence the loose default tolerance.
    """
    checks = []

    checks.append(CheckResult(
        "unit-sanity", True, 0.0,
        f"length_unit={grid.length_unit}, value_unit_exponent="
        f"{grid.value_unit_exponent}, frequency={grid.frequency:g} rad/s"))

    rel, node = _symmetry_residual(grid.blocks["value"])
    checks.append(CheckResult(
        "value-symmetry", rel <= grid.symmetry_tol, rel,
        f"worst node {node} (flat index), tolerance {grid.symmetry_tol:g}"))

    worst_imag = 0.0
    worst_key = "value"
    for key, arr in grid.blocks.items():
        scale = float(np.abs(arr).max())
        if scale == 0.0:
            continue
        res = float(np.abs(arr.imag).max()) / scale
        if res > worst_imag:
            worst_imag, worst_key = res, key
    checks.append(CheckResult(
        "imaginary-residue", worst_imag <= imag_rtol, worst_imag,
        f"worst block {worst_key!r}; stored tensors should be real"))

    # declared first derivatives vs finite differences of the value field
    worst_fd = 0.0
    compared = []
    axes = grid.axes_si()
    value = grid.block_si("value").real
    vmax = float(np.abs(value).max())

    def _fd_residual(declared, fd, interior_axes, floor):
        sl = [slice(None)] * 3
        for ai in interior_axes:
            sl[ai] = slice(1, -1)
        sl = tuple(sl)
        # the floor keeps roundoff noise on flat fields from being
        # compared against an exactly-zero declared block
        scale = max(float(np.abs(declared[sl]).max()),
                    float(np.abs(fd[sl]).max()), floor)
        if scale == 0.0:
            return 0.0
        return float(np.abs(fd[sl] - declared[sl]).max()) / scale

    for ai, name in enumerate(_AXES):
        if axes[ai].size < 3:
            continue
        if grid.derivative_semantics == "split":
            keys = (f"d1_{name}", f"d1_{name}_src")
        else:
            keys = (f"d1_{name}",)
        if any(k not in grid.blocks for k in keys):
            continue
        declared = sum(grid.block_si(k).real for k in keys)
        fd = np.gradient(value, axes[ai], axis=ai, edge_order=2)
        span = float(axes[ai][-1] - axes[ai][0])
        res = _fd_residual(declared, fd, (ai,), vmax / span)
        compared.append(name)
        worst_fd = max(worst_fd, res)
    if grid.derivative_semantics == "total":
        # a total second derivative is again an FD of the node data
        for ai, a in enumerate(_AXES):
            for bi, b in enumerate(_AXES):
                key = f"d2_{a}{b}"
                if key not in grid.blocks:
                    continue
                if axes[ai].size < 3 or axes[bi].size < 3:
                    continue
                fd2 = np.gradient(
                    np.gradient(value, axes[ai], axis=ai, edge_order=2),
                    axes[bi], axis=bi, edge_order=2)
                declared = grid.block_si(key).real
                span_a = float(axes[ai][-1] - axes[ai][0])
                span_b = float(axes[bi][-1] - axes[bi][0])
                res = _fd_residual(declared, fd2, (ai, bi),
                                   vmax / (span_a * span_b))
                compared.append(key)
                worst_fd = max(worst_fd, res)
    detail = ("cross-checked " + ", ".join(compared)) if compared else \
        "no derivative blocks with enough nodes to cross-check"
    checks.append(CheckResult(
        "derivative-consistency", worst_fd <= derivative_rtol, worst_fd, detail))

    missing = tuple(sorted(_allowed_keys(grid.derivative_semantics)
                           - {"value"} - set(grid.blocks)))
    return GridValidationReport(checks=tuple(checks), missing_blocks=missing)


# ---------------------------------------------------------------------------
# finite differences

def _d1_stencil(x: float, lo: float, hi: float, h: float, fuzz: float):
    if x - h >= lo - fuzz and x + h <= hi + fuzz:
        return ((-h, -0.5 / h), (h, 0.5 / h))
    if x + 2.0 * h <= hi + fuzz:
        return ((0.0, -1.5 / h), (h, 2.0 / h), (2.0 * h, -0.5 / h))
    if x - 2.0 * h >= lo - fuzz:
        return ((0.0, 1.5 / h), (-h, -2.0 / h), (-2.0 * h, 0.5 / h))
    raise InputError(
        "finite-difference step too large relative to the grid hull")


def _d2_stencil(x: float, lo: float, hi: float, h: float, fuzz: float):
    h2 = h * h
    if x - h >= lo - fuzz and x + h <= hi + fuzz:
        return ((-h, 1.0 / h2), (0.0, -2.0 / h2), (h, 1.0 / h2))
    if x + 3.0 * h <= hi + fuzz:
        return ((0.0, 2.0 / h2), (h, -5.0 / h2),
                (2.0 * h, 4.0 / h2), (3.0 * h, -1.0 / h2))
    if x - 3.0 * h >= lo - fuzz:
        return ((0.0, 2.0 / h2), (-h, -5.0 / h2),
                (-2.0 * h, 4.0 / h2), (-3.0 * h, -1.0 / h2))
    return None  # not enough room for a second-order stencil


def finite_difference_blocks(sampler: Callable, axes, step: float) -> dict:
    """Derivative blocks of a sampled tensor field on grid nodes.

    sampler maps an SI 3-point to a real 3x3 array; axes are three 1-D
    SI coordinate arrays (scalars are promoted to single-node axes,
    which get no derivative blocks along their direction); step is the
    stencil spacing in m and must not exceed half the smallest node
    spacing. Evaluation points never leave the axes' bounding box:
    central second-order stencils where they fit, one-sided second-order
    stencils at hull boundaries. First derivatives need an axis extent
    of 2*step and diagonal second derivatives 3*step; a d2 block that
    cannot be formed at some node is omitted entirely.

    Returns {"d1_x": ..., "d2_xy": ..., ...} with arrays shaped like the
    grid plus trailing (3, 3). Cross blocks nest two first-derivative
    stencils; d2_ab and d2_ba are numerically identical for a sampled
    field and both keys are returned.
    """
    if not (isinstance(step, (int, float)) and math.isfinite(step) and step > 0):
        raise InputError("finite-difference step must be a positive number")
    step = float(step)
    axs = []
    for name, ax in zip(_AXES, axes):
        arr = np.atleast_1d(np.asarray(ax, dtype=float))
        if arr.ndim != 1 or arr.size == 0 or not np.all(np.isfinite(arr)):
            raise InputError(f"axis {name} must be a finite 1-D array")
        if arr.size > 1 and not np.all(np.diff(arr) > 0.0):
            raise InputError(f"axis {name} must be strictly increasing")
        axs.append(arr)
    multi = [i for i in range(3) if axs[i].size >= 2]
    if not multi:
        raise InputError("axes carry no extent; nothing to differentiate")
    min_spacing = min(float(np.diff(axs[i]).min()) for i in multi)
    if step > 0.5 * min_spacing * (1.0 + 1e-12):
        raise InputError(
            f"step {step:g} m exceeds half the minimum node spacing "
            f"{min_spacing:g} m")

    hulls = []
    for i in range(3):
        lo, hi = float(axs[i][0]), float(axs[i][-1])
        hulls.append((lo, hi, 1e-9 * max(hi - lo, step)))

    cache = {}

    def ev(q: np.ndarray) -> np.ndarray:
        key = q.tobytes()
        hit = cache.get(key)
        if hit is not None:
            return hit
        try:
            v = np.asarray(sampler(q), dtype=float)
        except (TypeError, ValueError) as exc:
            raise InputError(f"sampler must return a real 3x3 array: {exc}") \
                from None
        if v.shape != (3, 3) or not np.all(np.isfinite(v)):
            raise InputError("sampler must return a finite real 3x3 array")
        cache[key] = v
        return v

    shape = tuple(a.size for a in axs)
    nodes = [(idx, np.array([axs[0][idx[0]], axs[1][idx[1]], axs[2][idx[2]]]))
             for idx in np.ndindex(shape)]

    def apply_1d(p, axis, stencil):
        acc = np.zeros((3, 3))
        for off, w in stencil:
            q = p.copy()
            q[axis] += off
            acc += w * ev(q)
        return acc

    out = {}
    for ai in multi:
        arr = np.empty(shape + (3, 3))
        for idx, p in nodes:
            st = _d1_stencil(p[ai], *hulls[ai][:2], step, hulls[ai][2])
            arr[idx] = apply_1d(p, ai, st)
        out[f"d1_{_AXES[ai]}"] = arr

    for ai in multi:
        # diagonal term: direct second-derivative stencil
        arr = np.empty(shape + (3, 3))
        ok = True
        for idx, p in nodes:
            st = _d2_stencil(p[ai], *hulls[ai][:2], step, hulls[ai][2])
            if st is None:
                ok = False
                break
            arr[idx] = apply_1d(p, ai, st)
        if ok:
            out[f"d2_{_AXES[ai]}{_AXES[ai]}"] = arr
        for bi in multi:
            if bi <= ai:
                continue
            arr = np.empty(shape + (3, 3))
            for idx, p in nodes:
                sa = _d1_stencil(p[ai], *hulls[ai][:2], step, hulls[ai][2])
                sb = _d1_stencil(p[bi], *hulls[bi][:2], step, hulls[bi][2])
                acc = np.zeros((3, 3))
                for oa, wa in sa:
                    for ob, wb in sb:
                        q = p.copy()
                        q[ai] += oa
                        q[bi] += ob
                        acc += (wa * wb) * ev(q)
                arr[idx] = acc
            out[f"d2_{_AXES[ai]}{_AXES[bi]}"] = arr
            out[f"d2_{_AXES[bi]}{_AXES[ai]}"] = arr.copy()
    return out


# ---------------------------------------------------------------------------
# producing grids from the analytic uniform medium

def grid_from_homogeneous(medium: Medium, frequency: float, axes,
                          fd_step: Optional[float] = None,
                          symmetry_tol: float = 1e-6,
                          provenance: Any = None) -> TensorGrid:
    """Split-semantics grid of the uniform-medium coincident Im-G jet.

    axes give three SI coordinate specs (arrays; a scalar z marks a
    fixed plane). With fd_step=None all blocks are analytic. With a step
    given, the derivative blocks at every node are instead rebuilt with
    finite_difference_blocks on a local 3x3x3 patch around the node,
    differencing the field p -> Im G(p, node); field-point derivatives
    convert to source-point and mixed blocks by translation invariance
    (each source-point derivative contributes one sign flip).
    """
    ax_arrays, fixed = [], []
    for name, ax in zip(_AXES, axes):
        scalar = np.ndim(ax) == 0
        ax_arrays.append(np.atleast_1d(np.asarray(ax, dtype=float)))
        fixed.append(scalar and name == "z")
    jet0 = coincident_im_jet(frequency, medium)
    shape = tuple(a.size for a in ax_arrays)

    def tile(block: np.ndarray) -> np.ndarray:
        return np.broadcast_to(block, shape + block.shape).copy()

    blocks = {"value": tile(jet0.value)}
    if fd_step is None:
        zero = np.zeros(shape + (3, 3))
        for a in range(3):
            blocks[f"d1_{_AXES[a]}"] = zero.copy()
            blocks[f"d1_{_AXES[a]}_src"] = zero.copy()
            for b in range(3):
                blocks[f"d2_{_AXES[a]}{_AXES[b]}"] = tile(jet0.d_mixed[:, :, a, b])
    else:
        if not (math.isfinite(fd_step) and fd_step > 0):
            raise InputError("fd_step must be a positive length in m")
        h = float(fd_step)
        for key in (*_D1_KEYS, *_D1_SRC_KEYS, *_D2_KEYS):
            blocks[key] = np.empty(shape + (3, 3))
        for idx in np.ndindex(shape):
            r0 = np.array([ax_arrays[0][idx[0]], ax_arrays[1][idx[1]],
                           ax_arrays[2][idx[2]]])

            def sample(p, _r0=r0):
                R = p - _r0
                if not np.any(R):
                    return jet0.value
                return np.ascontiguousarray(
                    eval_homogeneous(R, frequency, medium).imag)

            local = tuple(np.array([c - 2.0 * h, c, c + 2.0 * h]) for c in r0)
            fd = finite_difference_blocks(sample, local, h)
            center = (1, 1, 1)
            for a in range(3):
                d1 = fd[f"d1_{_AXES[a]}"][center]
                blocks[f"d1_{_AXES[a]}"][idx] = d1
                blocks[f"d1_{_AXES[a]}_src"][idx] = -d1
                for b in range(3):
                    # one source-slot derivative: flip the sign of the
                    # sampled field-field second derivative
                    blocks[f"d2_{_AXES[a]}{_AXES[b]}"][idx] = \
                        -fd[f"d2_{_AXES[a]}{_AXES[b]}"][center]
    if provenance is None:
        provenance = {"generator": "uniform-medium analytic sampler",
                      "fd_step_m": fd_step}
    return TensorGrid(
        frequency=float(frequency), length_unit="m", value_unit_exponent=-1,
        derivative_semantics="split", axes=tuple(ax_arrays),
        fixed_axes=tuple(fixed), blocks=blocks, symmetry_tol=symmetry_tol,
        provenance=provenance)
