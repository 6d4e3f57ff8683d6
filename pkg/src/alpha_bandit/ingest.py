"""Adult-format parsing and encoding into context vectors and binary labels.

Continuous columns are standardized, categorical columns one-hot encoded
(unseen levels encode as an all-zeros block) and ``?`` cells imputed with
the median or mode of the fitting records.
"""

import io
import logging
import os
from dataclasses import dataclass
from typing import (
    BinaryIO,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Optional,
    Sequence,
    TextIO,
    Tuple,
    Union,
)

import numpy as np
import pandas as pd

from alpha_bandit.bandit_core import as_context

logger = logging.getLogger("alpha-bandit.ingest")

MISSING_LEVEL = "<missing>"
COMMENT_PREFIX = "|"

Source = Union[str, os.PathLike, BinaryIO, TextIO]


class ParseError(ValueError):
    """Raised for a malformed input line."""

    def __init__(self, message: str, line_number: int):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EncodeError(ValueError):
    """Raised when a record cannot be encoded."""


@dataclass(frozen=True)
class TabularSchema:
    """Feature columns in file order followed by one label column."""

    columns: Tuple[str, ...]
    continuous: FrozenSet[str]
    label_column: str
    positive_label: str
    missing_marker: str = "?"

    @property
    def field_count(self) -> int:
        return len(self.columns) + 1

    def is_continuous(self, column: str) -> bool:
        return column in self.continuous


ADULT_SCHEMA = TabularSchema(
    columns=(
        "age",
        "workclass",
        "fnlwgt",
        "education",
        "education-num",
        "marital-status",
        "occupation",
        "relationship",
        "race",
        "sex",
        "capital-gain",
        "capital-loss",
        "hours-per-week",
        "native-country",
    ),
    continuous=frozenset(
        {
            "age",
            "fnlwgt",
            "education-num",
            "capital-gain",
            "capital-loss",
            "hours-per-week",
        }
    ),
    label_column="income",
    positive_label=">50K",
)


@dataclass(frozen=True)
class RawRecord:
    values: Tuple[str, ...]
    label: str
    line_number: int = 0


@dataclass(frozen=True)
class ContinuousColumn:
    name: str
    mean: float
    sd: float
    fill: float


@dataclass(frozen=True)
class CategoricalColumn:
    name: str
    levels: Tuple[str, ...]
    fill: str


@dataclass(frozen=True)
class EncoderSpec:
    schema: TabularSchema
    columns: Tuple[Union[ContinuousColumn, CategoricalColumn], ...]

    @property
    def dim(self) -> int:
        return sum(
            1 if isinstance(column, ContinuousColumn) else len(column.levels)
            for column in self.columns
        )

    def column_names(self) -> List[str]:
        names: List[str] = []
        for column in self.columns:
            if isinstance(column, ContinuousColumn):
                names.append(f"continuous:{column.name}")
            else:
                names.extend(f"onehot:{column.name}={level}" for level in column.levels)
        return names


@dataclass(frozen=True)
class EncodedDataset:
    contexts: np.ndarray
    labels: np.ndarray
    column_names: Tuple[str, ...]

    @property
    def d(self) -> int:
        return self.contexts.shape[1]

    def __len__(self) -> int:
        return len(self.labels)


def _lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as handle:
            yield from _lines(handle)
        return
    for raw in source:
        yield raw.decode("utf-8") if isinstance(raw, bytes) else raw


def parse_adult(
    source: Source, schema: TabularSchema = ADULT_SCHEMA
) -> Iterator[RawRecord]:
    """Yield records in file order.

    Blank lines and ``|`` comment lines are skipped; a line with the wrong
    number of fields raises ``ParseError`` naming its line number.
    """
    for line_number, line in enumerate(_lines(source), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(COMMENT_PREFIX):
            continue
        fields = [part.strip() for part in stripped.split(",")]
        if len(fields) != schema.field_count:
            raise ParseError(
                f"expected {schema.field_count} fields, found {len(fields)}",
                line_number,
            )
        yield RawRecord(tuple(fields[:-1]), fields[-1], line_number)


def normalize_label(label: str) -> str:
    """Drop the trailing period used by the published test split."""
    label = label.strip()
    return label[:-1] if label.endswith(".") else label


def encode_label(schema: TabularSchema, label: str) -> int:
    return int(normalize_label(label) == schema.positive_label)


def _frame(records: Sequence[RawRecord], schema: TabularSchema) -> pd.DataFrame:
    frame = pd.DataFrame([record.values for record in records], columns=list(schema.columns), dtype=object)
    return frame.where(frame != schema.missing_marker)


def _numeric(series: pd.Series, column: str) -> pd.Series:
    try:
        values = pd.to_numeric(series, errors="raise").astype(float)
    except (TypeError, ValueError) as e:
        raise EncodeError(f"Column {column!r} has a non-numeric value: {e}") from e
    # missing cells are NaN here and imputed later; anything else must be finite
    bad = series.notna() & ~np.isfinite(values)
    if bad.any():
        raise EncodeError(f"Column {column!r} has a non-finite value {series[bad].iloc[0]!r}")
    return values


def fit_encoder(
    records: Sequence[RawRecord], schema: TabularSchema = ADULT_SCHEMA
) -> EncoderSpec:
    """Compute standardization, level lists, and imputation values from ``records``."""
    if not records:
        raise ValueError("Encoder fitting needs at least one record")
    frame = _frame(records, schema)
    columns: List[Union[ContinuousColumn, CategoricalColumn]] = []
    for name in schema.columns:
        if schema.is_continuous(name):
            values = _numeric(frame[name], name)
            median = float(values.median()) if values.notna().any() else 0.0
            filled = values.fillna(median)
            mean = float(filled.mean())
            sd = float(filled.std(ddof=0))
            if not sd > 0:
                logger.warning(
                    "Continuous column has zero variance; using unit scale",
                    extra={"column": name},
                )
                sd = 1.0
            columns.append(ContinuousColumn(name, mean, sd, median))
        else:
            observed = frame[name].dropna()
            if observed.empty:
                columns.append(CategoricalColumn(name, (MISSING_LEVEL,), MISSING_LEVEL))
                continue
            levels = tuple(sorted(str(level) for level in observed.unique()))
            mode = str(observed.mode().sort_values().iloc[0])
            columns.append(CategoricalColumn(name, levels, mode))
    return EncoderSpec(schema=schema, columns=tuple(columns))


def encode(spec: EncoderSpec, record: RawRecord) -> Tuple[np.ndarray, int]:
    """Encode one record into ``(context, label)``."""
    schema = spec.schema
    if len(record.values) != len(spec.columns):
        raise EncodeError(
            f"Record has {len(record.values)} values, schema expects {len(spec.columns)}"
        )
    parts: List[np.ndarray] = []
    for column, raw in zip(spec.columns, record.values):
        missing = raw == schema.missing_marker
        if isinstance(column, ContinuousColumn):
            try:
                value = column.fill if missing else float(raw)
            except ValueError as e:
                raise EncodeError(
                    f"Column {column.name!r} has a non-numeric value {raw!r}"
                ) from e
            if not np.isfinite(value):
                raise EncodeError(f"Column {column.name!r} has a non-finite value {raw!r}")
            parts.append(np.array([(value - column.mean) / column.sd]))
        else:
            level = column.fill if missing else raw
            block = np.zeros(len(column.levels))
            if level in column.levels:
                block[column.levels.index(level)] = 1.0
            parts.append(block)
    return as_context(np.concatenate(parts), spec.dim), encode_label(schema, record.label)


def encode_dataset(spec: EncoderSpec, records: Sequence[RawRecord]) -> EncodedDataset:
    """Vectorized ``encode`` over ``records``."""
    schema = spec.schema
    frame = _frame(records, schema)
    blocks: List[np.ndarray] = []
    for column in spec.columns:
        if isinstance(column, ContinuousColumn):
            values = _numeric(frame[column.name], column.name).fillna(column.fill)
            blocks.append(((values - column.mean) / column.sd).to_numpy()[:, None])
        else:
            values = frame[column.name].fillna(column.fill)
            categories = pd.Categorical(values, categories=list(column.levels))
            dummies = pd.get_dummies(categories, dtype=float)
            blocks.append(dummies.to_numpy())
    contexts = np.hstack(blocks) if records else np.empty((0, spec.dim))
    labels = np.array([encode_label(schema, record.label) for record in records], dtype=np.int64)
    return EncodedDataset(contexts, labels, tuple(spec.column_names()))


def load_records(paths: Iterable[Source], schema: TabularSchema = ADULT_SCHEMA) -> List[RawRecord]:
    records: List[RawRecord] = []
    for path in paths:
        records.extend(parse_adult(path, schema))
    return records


def load_dataset(
    paths: Sequence[Source],
    encoder_rows: Optional[int] = None,
    schema: TabularSchema = ADULT_SCHEMA,
) -> Tuple[EncodedDataset, EncoderSpec]:
    """Parse ``paths`` in order, fit the encoder, and encode every row.

    The encoder is fitted on the first ``encoder_rows`` records, or on the
    whole first file when ``encoder_rows`` is ``None``.
    """
    if not paths:
        raise ValueError("At least one dataset path is required")
    first = list(parse_adult(paths[0], schema))
    records = first + load_records(paths[1:], schema)
    fitting = first if encoder_rows is None else records[:encoder_rows]
    spec = fit_encoder(fitting, schema)
    dataset = encode_dataset(spec, records)
    logger.info(
        "Encoded dataset",
        extra={"rows": len(dataset), "d": dataset.d, "encoder_rows": len(fitting)},
    )
    return dataset, spec


LABEL_HEADER = "label:label"


def write_cache(dataset: EncodedDataset, path: Union[str, os.PathLike]) -> None:
    """Write the encoded dataset as CSV with ``kind:name`` headers."""
    frame = pd.DataFrame(dataset.contexts, columns=list(dataset.column_names))
    frame[LABEL_HEADER] = dataset.labels
    frame.to_csv(path, index=False, float_format="%.17g")


def read_cache(path: Union[str, os.PathLike]) -> EncodedDataset:
    frame = pd.read_csv(path)
    if frame.columns[-1] != LABEL_HEADER:
        raise EncodeError(f"Cache {path} does not end with a {LABEL_HEADER!r} column")
    feature_columns = tuple(frame.columns[:-1])
    bad = [name for name in feature_columns if not name.startswith(("continuous:", "onehot:"))]
    if bad:
        raise EncodeError(f"Cache {path} has unknown column kinds: {bad}")
    return EncodedDataset(
        frame[list(feature_columns)].to_numpy(dtype=float),
        frame[LABEL_HEADER].to_numpy(dtype=np.int64),
        feature_columns,
    )


def records_from_text(text: str, schema: TabularSchema = ADULT_SCHEMA) -> List[RawRecord]:
    return list(parse_adult(io.StringIO(text), schema))
