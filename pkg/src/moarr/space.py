"""Cell-stacking search space: catalog, architecture codes, encoding, sampling.

An architecture is described by a small discrete code: how many normal cells
each of the first three stages stacks, whether stage 4 carries a third
reduction cell, the initial channel width, per-stage width growth ratios, the
named cell used in each stage, and the global pooling flavor.  Cells are
opaque catalog entries carrying only bookkeeping metadata (graph size and
cost-model coefficients).
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, fields as dataclass_fields, replace
from functools import cached_property
from importlib import resources
from typing import Iterator, Sequence

import numpy as np
import yaml

__all__ = [
    "DEPTH_OPTIONS",
    "BASE_WIDTH_OPTIONS",
    "GROWTH_OPTIONS",
    "CellEntry",
    "CellCatalog",
    "CatalogError",
    "ArchitectureCode",
    "FIELD_NAMES",
    "field_options",
    "block_layout",
    "vector_length",
    "canonicalize",
    "validate_code",
    "invalid_fields",
    "stage_widths",
    "random_code",
    "mutate_field",
    "code_to_vector",
    "vector_to_code",
    "structural_attributes",
    "space_cardinality",
    "iter_codes",
    "code_to_string",
    "code_from_string",
    "load_catalog",
    "save_catalog",
    "default_catalog",
]

DEPTH_OPTIONS = (4, 5, 6, 7)
BASE_WIDTH_OPTIONS = (112, 128, 144)
GROWTH_OPTIONS = (1.5, 2.0, 2.5)

# Inactive stage-4 fields are pinned to these values so that code equality is
# equality of canonical forms.
PINNED_GROWTH = GROWTH_OPTIONS[0]

_NAME_RE = re.compile(r"^[a-z0-9_]+$")


class CatalogError(ValueError):
    """Raised for malformed catalog definitions or files."""


@dataclass(frozen=True)
class CellEntry:
    """One catalog entry: an opaque cell with bookkeeping metadata.

    ``node_count``/``edge_count`` describe the cell's internal graph size and
    feed the density attribute; the two coefficients weight the surrogate
    cost model.  All values are configuration, not measurements.
    """

    name: str
    node_count: int
    edge_count: int
    param_coefficient: float
    flop_coefficient: float

    def __post_init__(self) -> None:
        if not _NAME_RE.match(self.name):
            raise CatalogError(f"cell name {self.name!r} must match [a-z0-9_]+")
        if self.node_count < 2:
            raise CatalogError(f"{self.name}: node_count must be >= 2")
        if self.edge_count < 1:
            raise CatalogError(f"{self.name}: edge_count must be >= 1")
        if self.param_coefficient < 0 or self.flop_coefficient < 0:
            raise CatalogError(f"{self.name}: cost coefficients must be >= 0")


@dataclass(frozen=True)
class CellCatalog:
    """The available normal cells, reduction cells, and pooling operators."""

    normal_cells: tuple[CellEntry, ...]
    reduction_cells: tuple[CellEntry, ...]
    pooling_ops: tuple[CellEntry, ...]

    def __post_init__(self) -> None:
        for label, entries in (
            ("normal_cells", self.normal_cells),
            ("reduction_cells", self.reduction_cells),
            ("pooling_ops", self.pooling_ops),
        ):
            names = [e.name for e in entries]
            if len(set(names)) != len(names):
                raise CatalogError(f"duplicate names in {label}")

    @cached_property
    def _by_name(self) -> dict[str, CellEntry]:
        table: dict[str, CellEntry] = {}
        for entry in self.normal_cells + self.reduction_cells + self.pooling_ops:
            table[entry.name] = entry
        return table

    def normal(self, name: str) -> CellEntry:
        return self._lookup(name, self.normal_cells, "normal cell")

    def reduction(self, name: str) -> CellEntry:
        return self._lookup(name, self.reduction_cells, "reduction cell")

    def pooling(self, name: str) -> CellEntry:
        return self._lookup(name, self.pooling_ops, "pooling op")

    def _lookup(self, name: str, entries: tuple[CellEntry, ...], kind: str) -> CellEntry:
        entry = self._by_name.get(name)
        if entry is None or entry not in entries:
            raise KeyError(f"unknown {kind} {name!r}")
        return entry


@dataclass(frozen=True)
class ArchitectureCode:
    """One point of the search space, always handled in canonical form.

    ``depth1``..``depth3`` count the normal cells stacked in stages 1-3;
    ``use_stage4`` toggles the third reduction cell; widths follow
    ``base_width`` times the cumulative growth ratios.  When ``use_stage4``
    is false the canonical form pins ``growth4``/``reduce4``.
    """

    depth1: int
    depth2: int
    depth3: int
    use_stage4: bool
    base_width: int
    growth2: float
    growth3: float
    growth4: float
    normal1: str
    normal2: str
    normal3: str
    reduce2: str
    reduce3: str
    reduce4: str
    pooling: str


FIELD_NAMES: tuple[str, ...] = tuple(f.name for f in dataclass_fields(ArchitectureCode))


def field_options(catalog: CellCatalog, field: str) -> tuple:
    """Option set of one code field, ordered as encoded in vectors."""
    if field in ("depth1", "depth2", "depth3"):
        return DEPTH_OPTIONS
    if field == "use_stage4":
        return (False, True)
    if field == "base_width":
        return BASE_WIDTH_OPTIONS
    if field in ("growth2", "growth3", "growth4"):
        return GROWTH_OPTIONS
    if field in ("normal1", "normal2", "normal3"):
        return tuple(e.name for e in catalog.normal_cells)
    if field in ("reduce2", "reduce3", "reduce4"):
        return tuple(e.name for e in catalog.reduction_cells)
    if field == "pooling":
        return tuple(e.name for e in catalog.pooling_ops)
    raise KeyError(f"unknown code field {field!r}")


def block_layout(catalog: CellCatalog) -> tuple[tuple[str, tuple], ...]:
    """Ordered (field, options) blocks of the one-hot vector encoding."""
    return tuple((name, field_options(catalog, name)) for name in FIELD_NAMES)


def vector_length(catalog: CellCatalog) -> int:
    return sum(len(opts) for _, opts in block_layout(catalog))


def canonicalize(code: ArchitectureCode, catalog: CellCatalog) -> ArchitectureCode:
    """Pin the inactive stage-4 fields so equal architectures compare equal."""
    if code.use_stage4:
        return code
    if not catalog.reduction_cells:
        raise CatalogError("catalog has no reduction cells")
    return replace(
        code,
        growth4=PINNED_GROWTH,
        reduce4=catalog.reduction_cells[0].name,
    )


def invalid_fields(code: ArchitectureCode, catalog: CellCatalog) -> list[str]:
    """Names of fields violating option membership or canonical pinning."""
    bad = []
    for name in FIELD_NAMES:
        if getattr(code, name) not in field_options(catalog, name):
            bad.append(name)
    if not code.use_stage4 and catalog.reduction_cells:
        if code.reduce4 != catalog.reduction_cells[0].name and "reduce4" not in bad:
            bad.append("reduce4")
        if code.growth4 != PINNED_GROWTH and "growth4" not in bad:
            bad.append("growth4")
    return bad


def validate_code(code: ArchitectureCode, catalog: CellCatalog) -> bool:
    """Total membership check: every field in its option set, canonical form."""
    return not invalid_fields(code, catalog)


def stage_widths(code: ArchitectureCode) -> list[int]:
    """Channel widths of the four stages.

    Width multiplies by the growth ratio at each active reduction; with the
    stage-4 reduction absent the last width repeats stage 3.  All option
    combinations yield exact integers (multiples of 1/8 times a multiple of
    16), which is asserted.
    """
    w1 = float(code.base_width)
    w2 = w1 * code.growth2
    w3 = w2 * code.growth3
    w4 = w3 * code.growth4 if code.use_stage4 else w3
    widths = []
    for w in (w1, w2, w3, w4):
        if w <= 0 or w != int(w):
            raise ValueError(f"non-integral stage width {w} for {code}")
        widths.append(int(w))
    return widths


def _cardinality_terms(catalog: CellCatalog) -> tuple[int, int]:
    n = len(catalog.normal_cells)
    r = len(catalog.reduction_cells)
    g = len(catalog.pooling_ops)
    if n == 0 or r == 0 or g == 0:
        return 0, 0
    depth_width = len(DEPTH_OPTIONS) ** 3 * len(BASE_WIDTH_OPTIONS)
    with_stage4 = depth_width * len(GROWTH_OPTIONS) ** 3 * n**3 * r**3 * g
    without_stage4 = depth_width * len(GROWTH_OPTIONS) ** 2 * n**3 * r**2 * g
    return with_stage4, without_stage4


def space_cardinality(catalog: CellCatalog) -> int:
    """Number of canonical codes expressible with this catalog.

    Counts the stage-4-active codes (all fields free) plus the inactive ones
    (``growth4``/``reduce4`` pinned).  Zero when any option list is empty.
    """
    with_stage4, without_stage4 = _cardinality_terms(catalog)
    return with_stage4 + without_stage4


def random_code(rng: np.random.Generator, catalog: CellCatalog) -> ArchitectureCode:
    """Draw one code uniformly over the canonical space.

    The two stage-4 strata have different sizes, so the toggle is drawn with
    stratum weights rather than a fair coin; all remaining fields are uniform
    and independent.  Deterministic for a given generator state.
    """
    with_stage4, without_stage4 = _cardinality_terms(catalog)
    if with_stage4 + without_stage4 == 0:
        raise CatalogError("catalog spans an empty search space")
    use_stage4 = bool(rng.random() >= without_stage4 / (with_stage4 + without_stage4))

    def pick(field: str):
        opts = field_options(catalog, field)
        return opts[int(rng.integers(len(opts)))]

    code = ArchitectureCode(
        depth1=pick("depth1"),
        depth2=pick("depth2"),
        depth3=pick("depth3"),
        use_stage4=use_stage4,
        base_width=pick("base_width"),
        growth2=pick("growth2"),
        growth3=pick("growth3"),
        growth4=pick("growth4") if use_stage4 else PINNED_GROWTH,
        normal1=pick("normal1"),
        normal2=pick("normal2"),
        normal3=pick("normal3"),
        reduce2=pick("reduce2"),
        reduce3=pick("reduce3"),
        reduce4=pick("reduce4") if use_stage4 else catalog.reduction_cells[0].name,
        pooling=pick("pooling"),
    )
    return code


def mutate_field(
    code: ArchitectureCode, rng: np.random.Generator, catalog: CellCatalog
) -> ArchitectureCode:
    """Flip a single uniformly chosen field to a different option."""
    candidates = [f for f in FIELD_NAMES if len(field_options(catalog, f)) > 1]
    if not candidates:
        return code
    field = candidates[int(rng.integers(len(candidates)))]
    opts = field_options(catalog, field)
    current = getattr(code, field)
    others = [o for o in opts if o != current]
    value = others[int(rng.integers(len(others)))]
    return canonicalize(replace(code, **{field: value}), catalog)


def code_to_vector(code: ArchitectureCode, catalog: CellCatalog) -> np.ndarray:
    """Encode a canonical code as concatenated one-hot blocks."""
    layout = block_layout(catalog)
    vec = np.zeros(sum(len(opts) for _, opts in layout))
    offset = 0
    for name, opts in layout:
        vec[offset + opts.index(getattr(code, name))] = 1.0
        offset += len(opts)
    return vec


def vector_to_code(vec: np.ndarray, catalog: CellCatalog) -> ArchitectureCode:
    """Decode a (possibly relaxed) vector by per-block argmax.

    Ties resolve to the lowest option index, then the result is
    canonicalized, so decoding is deterministic for any non-negative input.
    """
    layout = block_layout(catalog)
    total = sum(len(opts) for _, opts in layout)
    vec = np.asarray(vec, dtype=float).reshape(-1)
    if vec.shape[0] != total:
        raise ValueError(f"expected vector of length {total}, got {vec.shape[0]}")
    values = {}
    offset = 0
    for name, opts in layout:
        block = vec[offset : offset + len(opts)]
        values[name] = opts[int(np.argmax(block))]
        offset += len(opts)
    return canonicalize(ArchitectureCode(**values), catalog)


def structural_attributes(
    code: ArchitectureCode, catalog: CellCatalog
) -> tuple[float, int, int]:
    """(density, layer_count, reduction_count) of the assembled network.

    Stage ``s`` places its normal cell ``depth_s`` times plus one reduction
    cell per active downsampling stage; density is total edge count over
    total node count across all placed cells.
    """
    reduction_count = 2 + (1 if code.use_stage4 else 0)
    layer_count = code.depth1 + code.depth2 + code.depth3 + reduction_count
    placed = [
        (catalog.normal(code.normal1), code.depth1),
        (catalog.normal(code.normal2), code.depth2),
        (catalog.normal(code.normal3), code.depth3),
        (catalog.reduction(code.reduce2), 1),
        (catalog.reduction(code.reduce3), 1),
    ]
    if code.use_stage4:
        placed.append((catalog.reduction(code.reduce4), 1))
    edges = sum(e.edge_count * k for e, k in placed)
    nodes = sum(e.node_count * k for e, k in placed)
    return edges / nodes, layer_count, reduction_count


def iter_codes(catalog: CellCatalog) -> Iterator[ArchitectureCode]:
    """Enumerate every canonical code (intended for shrunk catalogs)."""
    normals = tuple(e.name for e in catalog.normal_cells)
    reductions = tuple(e.name for e in catalog.reduction_cells)
    poolings = tuple(e.name for e in catalog.pooling_ops)
    for use_stage4 in (True, False):
        growth4_opts = GROWTH_OPTIONS if use_stage4 else (PINNED_GROWTH,)
        reduce4_opts = reductions if use_stage4 else (reductions[0],) if reductions else ()
        for combo in itertools.product(
            DEPTH_OPTIONS,
            DEPTH_OPTIONS,
            DEPTH_OPTIONS,
            BASE_WIDTH_OPTIONS,
            GROWTH_OPTIONS,
            GROWTH_OPTIONS,
            growth4_opts,
            normals,
            normals,
            normals,
            reductions,
            reductions,
            reduce4_opts,
            poolings,
        ):
            d1, d2, d3, bw, g2, g3, g4, n1, n2, n3, r2, r3, r4, gp = combo
            yield ArchitectureCode(
                depth1=d1, depth2=d2, depth3=d3, use_stage4=use_stage4,
                base_width=bw, growth2=g2, growth3=g3, growth4=g4,
                normal1=n1, normal2=n2, normal3=n3,
                reduce2=r2, reduce3=r3, reduce4=r4, pooling=gp,
            )


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


def code_to_string(code: ArchitectureCode) -> str:
    """Compact ``field=value`` pairs joined by ``;`` (stable field order)."""
    return ";".join(f"{name}={_format_value(getattr(code, name))}" for name in FIELD_NAMES)


def code_from_string(text: str, catalog: CellCatalog) -> ArchitectureCode:
    """Parse and validate a code string, naming the offending field on error."""
    values: dict[str, object] = {}
    for chunk in text.strip().split(";"):
        if not chunk:
            continue
        if "=" not in chunk:
            raise ValueError(f"malformed field assignment {chunk!r}")
        key, raw = chunk.split("=", 1)
        key = key.strip()
        raw = raw.strip()
        if key not in FIELD_NAMES:
            raise ValueError(f"field {key!r}: unknown field")
        try:
            if key.startswith("depth") or key == "base_width":
                values[key] = int(raw)
            elif key == "use_stage4":
                if raw.lower() not in ("true", "false"):
                    raise ValueError
                values[key] = raw.lower() == "true"
            elif key.startswith("growth"):
                values[key] = float(raw)
            else:
                values[key] = raw
        except ValueError:
            raise ValueError(f"field {key!r}: cannot parse value {raw!r}") from None
    missing = [name for name in FIELD_NAMES if name not in values]
    if missing:
        raise ValueError(f"field {missing[0]!r}: missing")
    code = canonicalize(ArchitectureCode(**values), catalog)  # type: ignore[arg-type]
    bad = invalid_fields(code, catalog)
    if bad:
        raise ValueError(f"field {bad[0]!r}: value {getattr(code, bad[0])!r} not in catalog options")
    return code


def _entry_from_mapping(raw: dict, context: str) -> CellEntry:
    required = ("name", "node_count", "edge_count", "param_coefficient", "flop_coefficient")
    if not isinstance(raw, dict):
        raise CatalogError(f"{context}: entry must be a mapping")
    for key in required:
        if key not in raw:
            raise CatalogError(f"{context}: missing key {key!r}")
    try:
        return CellEntry(
            name=str(raw["name"]),
            node_count=int(raw["node_count"]),
            edge_count=int(raw["edge_count"]),
            param_coefficient=float(raw["param_coefficient"]),
            flop_coefficient=float(raw["flop_coefficient"]),
        )
    except (TypeError, ValueError) as exc:
        raise CatalogError(f"{context}: {exc}") from exc


def load_catalog(path, *, strict_counts: bool = True) -> CellCatalog:
    """Load a catalog file; with ``strict_counts`` enforce the 10/10/3 shape."""
    with open(path, "r", encoding="utf-8") as handle:
        raw = yaml.safe_load(handle)
    if not isinstance(raw, dict):
        raise CatalogError(f"{path}: catalog file must be a mapping")
    lists = {}
    for key, expected in (("normal_cells", 10), ("reduction_cells", 10), ("pooling_ops", 3)):
        entries = raw.get(key)
        if not isinstance(entries, list) or not entries:
            raise CatalogError(f"{path}: {key} must be a non-empty list")
        if strict_counts and len(entries) != expected:
            raise CatalogError(
                f"{path}: {key} must list exactly {expected} entries, found {len(entries)}"
            )
        lists[key] = tuple(
            _entry_from_mapping(item, f"{path}:{key}[{i}]") for i, item in enumerate(entries)
        )
        if strict_counts:
            for entry in lists[key]:
                if entry.param_coefficient <= 0 or entry.flop_coefficient <= 0:
                    raise CatalogError(
                        f"{path}: {entry.name}: cost coefficients must be positive"
                    )
    return CellCatalog(**lists)


def save_catalog(catalog: CellCatalog, path) -> None:
    doc = {
        key: [
            {
                "name": e.name,
                "node_count": e.node_count,
                "edge_count": e.edge_count,
                "param_coefficient": e.param_coefficient,
                "flop_coefficient": e.flop_coefficient,
            }
            for e in getattr(catalog, key)
        ]
        for key in ("normal_cells", "reduction_cells", "pooling_ops")
    }
    with open(path, "w", encoding="utf-8") as handle:
        yaml.safe_dump(doc, handle, sort_keys=False)


def default_catalog() -> CellCatalog:
    """The packaged ten-normal / ten-reduction / three-pooling catalog."""
    source = resources.files("moarr.data").joinpath("default_catalog.yaml")
    with resources.as_file(source) as path:
        return load_catalog(path)
