"""CSV ingestion and emission for every supported outcome space.

Schemas (header first, one unit per row unless noted):
  compositional, compositional-zeros  unit_id,D,S,y1,...,yk
  distribution                        unit_id,D,S,value   (one row per draw)
  interval                            unit_id,D,S,lower,upper
  network, spd                        unit_id,D,S,m,e1,...,e(m*m)   (row-major)
  scalar                              unit_id,D,S,y
Outcome cells are empty exactly when S = 0. An optional covariate column, named
in the run configuration, may appear anywhere after S.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from config_loader import RunConfig
from embeddings import ObjectSpace, make_space
from errors import DimensionMismatch, EmbeddingError, SchemaError
from selection_core import EmbeddedDataset

logger = logging.getLogger(__name__)

KEY_COLUMNS = ["unit_id", "D", "S"]
# header line is row 1
FIRST_DATA_ROW = 2


@dataclass(frozen=True, eq=False)
class RawDataset:
    """
    Units in their original object form.

    ``outcomes[i]`` is None for unselected units, else a float array: the parts
    of a composition, the draws of a distribution, (lower, upper), the
    row-major entries of a matrix, or a length-1 array for scalars.
    """

    unit_ids: Tuple[str, ...]
    treated: np.ndarray
    selected: np.ndarray
    outcomes: Tuple[Optional[np.ndarray], ...]
    strata: Optional[np.ndarray] = None
    rows: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "treated", np.asarray(self.treated, dtype=bool))
        object.__setattr__(self, "selected", np.asarray(self.selected, dtype=bool))
        n = len(self.unit_ids)
        if self.treated.shape != (n,) or self.selected.shape != (n,) or len(self.outcomes) != n:
            raise SchemaError("unit ids, flags and outcomes differ in length")

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    def row_of(self, index: int) -> Optional[int]:
        return None if self.rows is None else self.rows[index]


def space_for(config: RunConfig) -> ObjectSpace:
    """Space adapter described by a run configuration."""
    return make_space(
        config.space,
        eval_grid=config.eval_grid,
        sphere_mu=config.sphere_mu,
        spd_mode=config.spd_mode,
        spd_power=config.spd_power,
        max_weight=np.inf if config.max_weight is None else config.max_weight,
    )


def _outcome_columns(space_name: str, columns: Sequence[str]) -> List[str]:
    if space_name in ("compositional", "compositional-zeros"):
        parts = [c for c in columns if c.startswith("y")]
        if parts != [f"y{j + 1}" for j in range(len(parts))] or len(parts) < 2:
            raise SchemaError("compositional data needs columns y1, ..., yk with k >= 2", 1)
        return parts
    if space_name == "distribution":
        expected = ["value"]
    elif space_name == "interval":
        expected = ["lower", "upper"]
    elif space_name == "scalar":
        expected = ["y"]
    elif space_name in ("network", "spd"):
        entries = [c for c in columns if c.startswith("e")]
        if "m" not in columns or entries != [f"e{j + 1}" for j in range(len(entries))]:
            raise SchemaError("matrix data needs columns m, e1, ..., e(m*m)", 1)
        return ["m"] + entries
    else:
        raise SchemaError(f"no CSV schema for space {space_name!r}")
    missing = [c for c in expected if c not in columns]
    if missing:
        raise SchemaError(f"missing columns: {', '.join(missing)}", 1)
    return expected


def _flag(value, name: str, row: int) -> bool:
    try:
        number = float(value)
    except (TypeError, ValueError):
        number = np.nan
    if number not in (0.0, 1.0):
        raise SchemaError(f"{name} must be 0 or 1, got {value!r}", row)
    return number == 1.0


def _matrix_entries(values: np.ndarray, row: int) -> np.ndarray:
    m = values[0]
    if not float(m).is_integer() or m < 1:
        raise SchemaError(f"matrix size m must be a positive integer, got {m}", row)
    m = int(m)
    entries = values[1:]
    if entries.size < m * m or np.any(np.isnan(entries[: m * m])):
        raise SchemaError(f"expected {m * m} matrix entries", row)
    if np.any(~np.isnan(entries[m * m :])):
        raise SchemaError(f"more than {m * m} matrix entries", row)
    return entries[: m * m]


def read_raw(path: str, space_name: str, covariate: Optional[str] = None) -> RawDataset:
    """
    Parse a CSV file into a RawDataset without embedding it.

    Raises:
        SchemaError: With the offending file row on any layout violation
    """
    try:
        frame = pd.read_csv(
            path, dtype={"unit_id": str}, float_precision="round_trip", keep_default_na=True
        )
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise SchemaError(f"cannot parse {path}: {e}") from e
    columns = list(frame.columns)
    if columns[:3] != KEY_COLUMNS:
        raise SchemaError(f"header must start with {','.join(KEY_COLUMNS)}", 1)
    if covariate is not None and covariate not in columns:
        raise SchemaError(f"covariate column {covariate!r} not found", 1)
    candidates = [c for c in columns[3:] if c != covariate]
    outcome_columns = _outcome_columns(space_name, candidates)
    extra = sorted(set(candidates) - set(outcome_columns))
    if extra:
        raise SchemaError(f"unexpected columns: {', '.join(extra)}", 1)
    try:
        values = frame[outcome_columns].to_numpy(dtype=float)
    except ValueError as e:
        raise SchemaError(f"outcome cells must be numeric: {e}") from e

    if space_name == "distribution":
        raw = _read_long(frame, values[:, 0], covariate)
    else:
        raw = _read_wide(frame, values, space_name, covariate)
    logger.debug(f"Read {raw.n} units from {path}")
    return raw


def _read_wide(frame, values, space_name, covariate) -> RawDataset:
    ids, treated, selected, outcomes, strata, rows = [], [], [], [], [], []
    for i, record in enumerate(frame.itertuples(index=False)):
        row = i + FIRST_DATA_ROW
        is_selected = _flag(record[2], "S", row)
        cells = values[i]
        if is_selected:
            if space_name in ("network", "spd"):
                outcome = _matrix_entries(cells, row)
            elif np.any(np.isnan(cells)):
                raise SchemaError("selected unit has missing outcome cells", row)
            else:
                outcome = cells.copy()
        else:
            if np.any(~np.isnan(cells)):
                raise SchemaError("unselected unit has outcome values", row)
            outcome = None
        ids.append(str(record[0]))
        treated.append(_flag(record[1], "D", row))
        selected.append(is_selected)
        outcomes.append(outcome)
        rows.append(row)
        if covariate is not None:
            strata.append(str(frame[covariate].iloc[i]))
    if len(set(ids)) != len(ids):
        raise SchemaError("unit_id values must be unique")
    return RawDataset(
        tuple(ids),
        np.array(treated),
        np.array(selected),
        tuple(outcomes),
        np.array(strata, dtype=object) if covariate is not None else None,
        tuple(rows),
    )


def _read_long(frame, draws, covariate) -> RawDataset:
    """Group one-row-per-draw records by unit in order of first appearance."""
    order: List[str] = []
    units = {}
    for i, record in enumerate(frame.itertuples(index=False)):
        row = i + FIRST_DATA_ROW
        uid = str(record[0])
        d, s = _flag(record[1], "D", row), _flag(record[2], "S", row)
        label = str(frame[covariate].iloc[i]) if covariate is not None else None
        if uid not in units:
            order.append(uid)
            units[uid] = {"D": d, "S": s, "x": label, "row": row, "draws": []}
        unit = units[uid]
        if (unit["D"], unit["S"], unit["x"]) != (d, s, label):
            raise SchemaError(f"unit {uid} changes D, S or covariate between rows", row)
        if s and np.isnan(draws[i]):
            raise SchemaError("selected unit has an empty value row", row)
        if not s and not np.isnan(draws[i]):
            raise SchemaError("unselected unit has outcome values", row)
        if s:
            unit["draws"].append(draws[i])
    return RawDataset(
        tuple(order),
        np.array([units[u]["D"] for u in order], dtype=bool),
        np.array([units[u]["S"] for u in order], dtype=bool),
        tuple(np.array(units[u]["draws"]) if units[u]["S"] else None for u in order),
        np.array([units[u]["x"] for u in order], dtype=object) if covariate else None,
        tuple(units[u]["row"] for u in order),
    )


def embed_raw(raw: RawDataset, space: ObjectSpace) -> EmbeddedDataset:
    """
    Apply the space's embedding to every selected unit.

    Raises:
        EmbeddingError: Same class as the failure, prefixed with the file row
        SchemaError: If embedded dimensions differ between units
    """
    vectors: List[Optional[np.ndarray]] = []
    for i, outcome in enumerate(raw.outcomes):
        if outcome is None:
            vectors.append(None)
            continue
        try:
            vectors.append(np.asarray(space.embed(outcome), dtype=float))
        except EmbeddingError as e:
            row = raw.row_of(i)
            where = f"row {row}" if row is not None else f"unit {raw.unit_ids[i]}"
            raise type(e)(f"{where}: {e}") from e
    dims = {v.size for v in vectors if v is not None}
    if len(dims) > 1:
        raise SchemaError(f"units embed to different dimensions: {sorted(dims)}")
    if not dims:
        raise SchemaError("no selected unit to embed")
    dim = dims.pop()
    outcomes = np.full((raw.n, dim), np.nan)
    for i, vector in enumerate(vectors):
        if vector is not None:
            outcomes[i] = vector
    return EmbeddedDataset(
        raw.treated, raw.selected, outcomes, unit_ids=raw.unit_ids, strata=raw.strata
    )


def read_dataset(path: str, config: RunConfig) -> EmbeddedDataset:
    """
    Read and embed a dataset according to the configured space.

    Raises:
        SchemaError: With row number on layout violations
        EmbeddingError: With row number when an object cannot be embedded
    """
    raw = read_raw(path, config.space, config.covariate)
    return embed_raw(raw, space_for(config))


def write_dataset(
    raw: RawDataset, path: str, space_name: str, covariate: str = "x"
) -> None:
    """Write a RawDataset in the schema that ``read_raw`` parses."""
    records = []
    width = 0
    if space_name in ("network", "spd"):
        width = max((o.size for o in raw.outcomes if o is not None), default=1)
    for i, uid in enumerate(raw.unit_ids):
        base = {"unit_id": uid, "D": int(raw.treated[i]), "S": int(raw.selected[i])}
        if raw.strata is not None:
            base[covariate] = raw.strata[i]
        outcome = raw.outcomes[i]
        if space_name == "distribution":
            draws = outcome if outcome is not None else [np.nan]
            records.extend({**base, "value": float(v)} for v in draws)
            continue
        if space_name in ("compositional", "compositional-zeros"):
            k = len(outcome) if outcome is not None else _parts(raw)
            names = [f"y{j + 1}" for j in range(k)]
        elif space_name == "interval":
            names = ["lower", "upper"]
        elif space_name == "scalar":
            names = ["y"]
        elif space_name in ("network", "spd"):
            names = ["m"] + [f"e{j + 1}" for j in range(width)]
            if outcome is not None:
                m = int(round(np.sqrt(outcome.size)))
                outcome = np.concatenate([[m], outcome, np.full(width - outcome.size, np.nan)])
        else:
            raise SchemaError(f"no CSV schema for space {space_name!r}")
        cells = outcome if outcome is not None else [np.nan] * len(names)
        records.append({**base, **{name: float(v) for name, v in zip(names, cells)}})

    frame = pd.DataFrame.from_records(records)
    if "m" in frame.columns:
        frame["m"] = frame["m"].astype("Int64")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep="")
    logger.debug(f"Wrote {raw.n} units to {path}")


def _parts(raw: RawDataset) -> int:
    for outcome in raw.outcomes:
        if outcome is not None:
            return len(outcome)
    raise DimensionMismatch("cannot infer the number of parts without a selected unit")
