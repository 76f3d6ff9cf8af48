"""Loading, validation and classical summaries of cognitive social structures.

A CSS is stored as an ``(I, I, I)`` integer array ``values[i, i2, j]`` holding
perceiver ``j``'s report of a tie from sender ``i`` to receiver ``i2``.  The
sender == receiver cells do not exist; they are kept at zero in the array and
masked everywhere downstream.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "CssFormatError",
    "CssTensor",
    "DyadCovariates",
    "DegreeProfile",
    "load_css",
    "dump_css",
    "threshold_consensus",
    "degree_profiles",
    "load_attributes",
    "build_dyadic_covariates",
    "intercept_only",
]

FORMATS = ("long_csv", "matrix_stack", "json")


class CssFormatError(ValueError):
    """Raised when a CSS source cannot be parsed into a complete tensor."""


def offdiag_mask(n: int) -> np.ndarray:
    return ~np.eye(n, dtype=bool)


@dataclass(frozen=True)
class CssTensor:
    values: np.ndarray
    actor_labels: tuple = ()

    def __post_init__(self):
        y = np.asarray(self.values)
        if y.ndim != 3 or not (y.shape[0] == y.shape[1] == y.shape[2]):
            raise CssFormatError(f"expected an (I, I, I) array, got shape {y.shape}")
        n = y.shape[0]
        if n < 2:
            raise CssFormatError("incomplete tensor: at least two actors are needed")
        if not np.isin(y, (0, 1)).all():
            raise CssFormatError("non-binary value in CSS tensor")
        y = y.astype(np.int8, copy=True)
        idx = np.arange(n)
        if y[idx, idx, :].any():
            raise CssFormatError("diagonal (sender == receiver) cell present")
        y.setflags(write=False)
        object.__setattr__(self, "values", y)
        labels = tuple(str(a) for a in self.actor_labels) or tuple(
            str(k + 1) for k in range(n))
        if len(labels) != n:
            raise CssFormatError(f"{len(labels)} labels for {n} actors")
        object.__setattr__(self, "actor_labels", labels)

    @property
    def n_actors(self) -> int:
        return self.values.shape[0]

    @property
    def n_cells(self) -> int:
        n = self.n_actors
        return n * (n - 1) * n

    def tie(self, sender: int, receiver: int, perceiver: int) -> int:
        """Return ``y[sender, receiver, perceiver]`` (0-based indices)."""
        if sender == receiver:
            raise IndexError("sender == receiver cells are structurally absent")
        return int(self.values[sender, receiver, perceiver])

    def slice(self, perceiver: int) -> np.ndarray:
        """Perceiver's sociomatrix (diagonal zero)."""
        return np.array(self.values[:, :, perceiver])

    def densities(self) -> np.ndarray:
        """Per-perceiver fraction of reported ties."""
        n = self.n_actors
        return self.values.sum(axis=(0, 1)) / (n * (n - 1))

    def permuted(self, perm: Sequence[int]) -> "CssTensor":
        """Relabel actors: new actor ``k`` is old actor ``perm[k]``, on all three axes."""
        p = np.asarray(perm)
        y = self.values[np.ix_(p, p, p)]
        return CssTensor(y, tuple(self.actor_labels[k] for k in p))

    def __eq__(self, other):
        if not isinstance(other, CssTensor):
            return NotImplemented
        return (self.actor_labels == other.actor_labels
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash((self.values.tobytes(), self.actor_labels))


def _as_text(source) -> str:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source).decode("utf-8")
    if isinstance(source, str):
        return source
    data = source.read()
    return data.decode("utf-8") if isinstance(data, bytes) else data


def _assemble(n: int, records, labels=()) -> CssTensor:
    if n < 2:
        raise CssFormatError("incomplete tensor: no dyads exist for fewer than two actors")
    y = np.zeros((n, n, n), dtype=np.int8)
    seen = np.zeros((n, n, n), dtype=bool)
    for lineno, (j, i, i2, v) in records:
        for name, k in (("perceiver", j), ("sender", i), ("receiver", i2)):
            if not 1 <= k <= n:
                raise CssFormatError(f"record {lineno}: {name} index {k} out of range 1..{n}")
        if i == i2:
            raise CssFormatError(f"record {lineno}: diagonal cell ({i},{i}) present")
        if v not in (0, 1):
            raise CssFormatError(f"record {lineno}: non-binary value {v!r}")
        if seen[i - 1, i2 - 1, j - 1]:
            raise CssFormatError(f"record {lineno}: duplicate cell ({j},{i},{i2})")
        seen[i - 1, i2 - 1, j - 1] = True
        y[i - 1, i2 - 1, j - 1] = v
    missing = n * (n - 1) * n - int(seen.sum())
    if missing:
        raise CssFormatError(f"incomplete tensor: {missing} cells missing")
    return CssTensor(y, tuple(labels))


def _int(tok, lineno):
    try:
        f = float(tok)
    except (TypeError, ValueError):
        raise CssFormatError(f"record {lineno}: malformed value {tok!r}") from None
    if f != int(f):
        raise CssFormatError(f"record {lineno}: non-integer value {tok!r}")
    return int(f)


def _parse_long_csv(text):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["perceiver", "sender", "receiver", "value"]:
        raise CssFormatError("long_csv header must be perceiver,sender,receiver,value")
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise CssFormatError(f"record {lineno}: expected 4 fields, got {len(row)}")
        records.append((lineno, tuple(_int(c.strip(), lineno) for c in row)))
    if not records:
        raise CssFormatError("incomplete tensor: no records")
    n = max(max(r[0], r[1], r[2]) for _, r in records)
    return _assemble(n, records)


def _parse_matrix_stack(text):
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            rows.append((lineno, line.split()))
    if not rows:
        raise CssFormatError("incomplete tensor: empty matrix stack")
    n = len(rows[0][1])
    if len(rows) != n * n:
        raise CssFormatError(f"matrix_stack: expected {n * n} rows of {n} entries, got {len(rows)} rows")
    y = np.zeros((n, n, n), dtype=np.int64)
    for r, (lineno, toks) in enumerate(rows):
        if len(toks) != n:
            raise CssFormatError(f"record {lineno}: expected {n} entries, got {len(toks)}")
        j, i = divmod(r, n)
        for i2, tok in enumerate(toks):
            v = _int(tok, lineno)
            if v not in (0, 1):
                raise CssFormatError(f"record {lineno}: non-binary value {tok!r}")
            if i == i2 and v != 0:
                raise CssFormatError(f"record {lineno}: diagonal cell must be 0")
            y[i, i2, j] = v
    if n < 2:
        raise CssFormatError("incomplete tensor: no dyads exist for fewer than two actors")
    return CssTensor(y)


def _parse_json(text):
    try:
        doc = json.loads(text)
        n = int(doc["n_actors"])
        ties = doc["ties"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CssFormatError(f"malformed json CSS: {exc}") from None
    records = []
    for k, t in enumerate(ties):
        if not isinstance(t, (list, tuple)) or len(t) != 4:
            raise CssFormatError(f"record {k}: expected [j, i, i', v]")
        records.append((k, tuple(_int(c, k) for c in t)))
    return _assemble(n, records, doc.get("labels") or ())


def load_css(source, format: str = "long_csv") -> CssTensor:
    """Parse a complete CSS from a path-free text/byte source.

    ``source`` may be ``bytes``, ``str`` or a file object.  Indices in every
    format are 1-based; incomplete tensors are rejected.
    """
    parsers = {"long_csv": _parse_long_csv, "matrix_stack": _parse_matrix_stack,
               "json": _parse_json}
    if format not in parsers:
        raise ValueError(f"unknown CSS format {format!r}; expected one of {FORMATS}")
    return parsers[format](_as_text(source))


def dump_css(Y: CssTensor, format: str = "long_csv") -> str:
    """Serialize ``Y``; ``load_css(dump_css(Y, f), f) == Y`` for every format."""
    n = Y.n_actors
    y = Y.values
    if format == "long_csv":
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["perceiver", "sender", "receiver", "value"])
        for j in range(n):
            for i in range(n):
                for i2 in range(n):
                    if i != i2:
                        w.writerow([j + 1, i + 1, i2 + 1, int(y[i, i2, j])])
        return out.getvalue()
    if format == "matrix_stack":
        lines = []
        for j in range(n):
            for i in range(n):
                lines.append(" ".join(str(int(y[i, i2, j])) for i2 in range(n)))
        return "\n".join(lines) + "\n"
    if format == "json":
        ties = [[j + 1, i + 1, i2 + 1, int(y[i, i2, j])]
                for j in range(n) for i in range(n) for i2 in range(n) if i != i2]
        return json.dumps({"n_actors": n, "labels": list(Y.actor_labels), "ties": ties})
    raise ValueError(f"unknown CSS format {format!r}")


def threshold_consensus(Y: CssTensor, delta0: float) -> np.ndarray:
    """Classical consensus network: a tie is kept when the share of perceivers
    reporting it is strictly greater than ``delta0``.  Diagonal is zero."""
    share = Y.values.mean(axis=2)
    out = (share > delta0).astype(np.int8)
    np.fill_diagonal(out, 0)
    return out


@dataclass
class DegreeProfile:
    """Normalized degrees per (actor, perceiver) and for a consensus network.

    ``row_degree[i, j]`` sums ties sent by ``i`` in perceiver ``j``'s network,
    ``col_degree[i, j]`` sums ties received by ``i``.  The source labels the
    receiver sum ``d_out`` and the sender sum ``d_in``; the names here are
    orientation-neutral on purpose.
    """

    row_degree: np.ndarray
    col_degree: np.ndarray
    consensus_row_degree: np.ndarray
    consensus_col_degree: np.ndarray
    delta0: float

    @property
    def self_row_degree(self) -> np.ndarray:
        return np.diag(self.row_degree).copy()

    @property
    def self_col_degree(self) -> np.ndarray:
        return np.diag(self.col_degree).copy()


def degree_profiles(Y: CssTensor, delta0: float = 0.5) -> DegreeProfile:
    n = Y.n_actors
    y = Y.values.astype(float)
    row = y.sum(axis=1) / (n - 1)          # [i, j]: sum over receivers
    col = y.sum(axis=0) / (n - 1)          # [i2, j]: sum over senders
    ytil = threshold_consensus(Y, delta0).astype(float)
    return DegreeProfile(row, col, ytil.sum(axis=1) / (n - 1),
                         ytil.sum(axis=0) / (n - 1), float(delta0))


# -- dyadic covariates -----------------------------------------------------

@dataclass
class DyadCovariates:
    """Per-dyad predictors ``x[i, i2, :]``; coordinate 0 is the intercept.

    Diagonal rows are filled with the intercept and zeros and never used.
    """

    x: np.ndarray
    names: tuple = ("intercept",)
    standardized: bool = False
    means: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scales: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 3 or x.shape[0] != x.shape[1]:
            raise ValueError(f"covariates must have shape (I, I, p), got {x.shape}")
        mask = offdiag_mask(x.shape[0])
        if not np.all(x[mask][:, 0] == 1.0):
            raise ValueError("first covariate coordinate must be the intercept (all ones)")
        self.x = x
        self.names = tuple(self.names)
        if len(self.names) != x.shape[2]:
            self.names = ("intercept",) + tuple(f"x{k}" for k in range(1, x.shape[2]))

    @property
    def p(self) -> int:
        return self.x.shape[2]

    @property
    def n_actors(self) -> int:
        return self.x.shape[0]

    def dyads(self) -> np.ndarray:
        """``(I*(I-1), p)`` matrix of off-diagonal rows in row-major (i, i2) order."""
        return self.x[offdiag_mask(self.n_actors)]


def intercept_only(n_actors: int) -> DyadCovariates:
    return DyadCovariates(np.ones((n_actors, n_actors, 1)))


def load_attributes(source) -> dict:
    """Read an ``actor,<field>...`` CSV into ``{"actor": [...], field: [...]}``.

    Columns whose every entry parses as a float are converted to floats.
    """
    reader = csv.DictReader(io.StringIO(_as_text(source)))
    if reader.fieldnames is None or reader.fieldnames[0].strip() != "actor":
        raise ValueError("attribute table must start with an 'actor' column")
    rows = list(reader)
    table = {}
    for name in reader.fieldnames:
        col = [r[name].strip() for r in rows]
        try:
            table[name.strip()] = [float(c) for c in col] if name != "actor" else col
        except ValueError:
            table[name.strip()] = col
    return table


def _parse_recipe(recipe):
    out = []
    for item in recipe:
        if isinstance(item, str):
            kind, _, fld = item.partition(":")
        else:
            kind, fld = item
        kind = {"same": "same_category", "absdiff": "abs_difference"}.get(kind, kind)
        if kind not in ("same_category", "abs_difference") or not fld:
            raise ValueError(f"bad recipe entry {item!r}")
        out.append((kind, fld))
    return out


def build_dyadic_covariates(attributes: dict, recipe, standardize: bool = True) -> DyadCovariates:
    """Dyadic predictors from nodal attributes.

    ``recipe`` entries are ``("same_category", field)`` / ``("abs_difference",
    field)`` pairs or the shorthand strings ``"same:field"`` / ``"absdiff:field"``.
    Non-intercept coordinates are standardized over the ``I*(I-1)`` ordered
    dyads with the n-1 standard deviation.
    """
    steps = _parse_recipe(recipe)
    n = None
    cols = []
    names = ["intercept"]
    for kind, fld in steps:
        if fld not in attributes:
            raise KeyError(f"unknown attribute field {fld!r}")
        vals = list(attributes[fld])
        n = len(vals) if n is None else n
        if len(vals) != n:
            raise ValueError("attribute columns have different lengths")
        if kind == "abs_difference":
            if not all(isinstance(a, (int, float, np.integer, np.floating)) for a in vals):
                raise TypeError(f"abs_difference needs a numeric field, {fld!r} is not")
            a = np.asarray(vals, dtype=float)
            cols.append(np.abs(a[:, None] - a[None, :]))
        else:
            if all(isinstance(a, (float, np.floating)) and not float(a).is_integer() for a in vals):
                raise TypeError(f"same_category needs a categorical field, {fld!r} is continuous")
            a = np.asarray(vals, dtype=object)
            cols.append((a[:, None] == a[None, :]).astype(float))
        names.append(f"{kind}({fld})")
    if n is None:
        n = len(attributes.get("actor", ()))
    if n < 2:
        raise ValueError("need at least two actors")
    x = np.ones((n, n, 1 + len(cols)))
    for k, c in enumerate(cols, start=1):
        x[:, :, k] = c
    means = np.zeros(len(cols))
    scales = np.ones(len(cols))
    if standardize and cols:
        mask = offdiag_mask(n)
        for k in range(1, x.shape[2]):
            d = x[:, :, k][mask]
            means[k - 1] = d.mean()
            sd = d.std(ddof=1)
            scales[k - 1] = sd if sd > 0 else 1.0
            x[:, :, k] = (x[:, :, k] - means[k - 1]) / scales[k - 1]
    idx = np.arange(n)
    x[idx, idx, 1:] = 0.0
    return DyadCovariates(x, tuple(names), bool(standardize and cols), means, scales)
