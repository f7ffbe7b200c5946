"""JSON input/output for cost matrices, hierarchies and run manifests.

Input documents: {"labels": ["a", ...], "V": [[number|null, ...], ...]}
with null meaning "no finite-cost transition" and the diagonal ignored.
An optional "expected" block carries claimed rank-1 characteristics and
metastable answers for the validate command to check.

All emitted JSON uses sorted keys and never contains NaN/Infinity:
infinite rates are serialised as null.
"""

from __future__ import annotations

import hashlib
import json
import math
import time

from . import __version__
from .hierarchy import INF, Hierarchy, QuasiPotentialMatrix


class SchemaError(ValueError):
    """Input document does not match the cost-matrix schema."""


def _num(v):
    """JSON-safe number: infinities map to null."""
    if v is None:
        return None
    f = float(v)
    if math.isinf(f):
        return None
    return f


def parse_cost_document(doc) -> QuasiPotentialMatrix:
    if not isinstance(doc, dict):
        raise SchemaError("top level must be an object")
    labels = doc.get("labels")
    rows = doc.get("V")
    if not isinstance(rows, list) or not rows:
        raise SchemaError("'V' must be a non-empty array of rows")
    n = len(rows)
    if labels is None:
        labels = [str(i + 1) for i in range(n)]
    if (
        not isinstance(labels, list)
        or len(labels) != n
        or any(not isinstance(s, str) for s in labels)
    ):
        raise SchemaError("'labels' must be an array of strings matching V")
    if len(set(labels)) != n:
        raise SchemaError("labels must be unique")
    cost = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise SchemaError(f"row {i} must have {n} entries")
        out = []
        for j, v in enumerate(row):
            if v is None:
                out.append(INF)
            elif isinstance(v, (int, float)) and not isinstance(v, bool):
                if math.isnan(v):
                    raise SchemaError(f"V[{i}][{j}] is NaN")
                out.append(float(v))
            else:
                raise SchemaError(f"V[{i}][{j}] must be a number or null")
        cost.append(out)
    from .hierarchy import RowAllInfinite

    try:
        return QuasiPotentialMatrix.from_rows(cost, labels=labels)
    except RowAllInfinite:
        raise
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc


def load_cost_file(path):
    """Returns (matrix, expected-block-or-None, content digest)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    digest = hashlib.sha256(blob).hexdigest()
    try:
        doc = json.loads(blob.decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(
            f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    matrix = parse_cost_document(doc)
    expected = doc.get("expected")
    if expected is not None and not isinstance(expected, dict):
        raise SchemaError("'expected' must be an object when present")
    return matrix, expected, digest


def chain_to_dict(hier: Hierarchy, chain) -> dict:
    labels = hier.matrix.labels
    rank = chain.rank

    def unit_name(u):
        if rank == 1:
            return labels[u]
        return f"rank{rank - 1}:{u}"

    return {
        "rank": rank,
        "members": [unit_name(u) for u in chain.members],
        "covers": sorted(labels[i] for i in hier.chain_labels(chain)),
        "alphas": {unit_name(u): _num(a) for u, a in zip(chain.members, chain.alphas)},
        "depth_rate": _num(chain.depth_rate),
        "mixing_rate": _num(chain.mixing_rate),
        "measure_rates": {
            unit_name(u): _num(m)
            for u, m in zip(chain.members, chain.measure_rates)
        },
        "exit_rate": _num(chain.exit_rate),
        "exit_set": sorted(unit_name(u) for u in chain.exit_set),
        "landing_set": sorted(unit_name(u) for u in chain.landing_set),
        "main_subset": sorted(unit_name(u) for u in chain.main_subset),
        "main_labels": sorted(labels[i] for i in hier.chain_flatten_main(chain)),
    }


def hierarchy_to_dict(hier: Hierarchy) -> dict:
    return {
        "schema": "metachain.hierarchy/1",
        "labels": list(hier.matrix.labels),
        "depth": hier.depth,
        "levels": [
            {
                "rank": level.rank,
                "alphas": [_num(a) for a in level.alphas],
                "chains": [chain_to_dict(hier, c) for c in level.chains],
            }
            for level in hier.levels
        ],
    }


def result_to_dict(hier: Hierarchy, res) -> dict:
    labels = hier.matrix.labels
    return {
        "schema": "metachain.metastable/1",
        "labels": sorted(labels[i] for i in res.labels),
        "certainty": res.certainty.value,
        "rule": res.path.rule,
        "rank": res.path.rank,
        "visited": [labels[i] for i in res.path.visited],
    }


def regimes_to_csv(hier: Hierarchy, rows) -> str:
    labels = hier.matrix.labels
    lines = ["lambda_lo,lambda_hi,labels,certainty"]
    for row in rows:
        hi = "" if row.lam_hi == INF else repr(float(row.lam_hi))
        names = "|".join(sorted(labels[i] for i in row.result.labels))
        lines.append(
            f"{float(row.lam_lo)!r},{hi},{names},{row.result.certainty.value}"
        )
    return "\n".join(lines) + "\n"


def make_manifest(command: str, digest: str, seed, parameters: dict) -> dict:
    return {
        "command": command,
        "input_digest": digest,
        "seed": seed,
        "version": __version__,
        "parameters": {k: parameters[k] for k in sorted(parameters)},
    }


def digest_of_parameters(parameters: dict) -> str:
    blob = json.dumps(parameters, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def dumps_stable(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False)


class Stopwatch:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
