"""
This module writes and reads the run artifacts: the iteration ledger as
JSON lines, the catalog of chosen elements and the run summary as JSON.
"""

import json
import os

from Scripts.utils.geometry_utils import (
    DEFAULT_BOUNDS,
    PolyIndex,
    TesseroidBounds,
    element_from_dict,
    element_to_dict,
)


def _ensure_parent(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


# _________________________________________________________________________________________________


def write_ledger(rows: list[dict], path: str) -> None:
    """Write one JSON object per ledger row."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, sort_keys=True) + "\n")


def load_ledger(path: str) -> list[dict]:
    """Read a ledger written by write_ledger."""
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


# _________________________________________________________________________________________________


def write_elements_catalog(expansion, path: str) -> None:
    """
    Write the chosen elements in selection order with their coefficients.

    Args:
        expansion: Object with `terms`, a list of (alpha, element).
        path (str): Output JSON file.
    """
    catalog = {
        "n_terms": len(expansion.terms),
        "n_polynomials": sum(isinstance(d, PolyIndex) for _, d in expansion.terms),
        "terms": [
            {"iteration": n, "alpha": alpha, **element_to_dict(d)}
            for n, (alpha, d) in enumerate(expansion.terms, start=1)
        ],
    }
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(catalog, f, indent=4)


def load_elements_catalog(
    path: str, bounds: TesseroidBounds = DEFAULT_BOUNDS
) -> list[tuple[float, object]]:
    """
    Read a catalog back into (alpha, element) terms.

    Returns:
        list[tuple[float, DictionaryElement]]: Terms in selection order.
    """
    with open(path, "r", encoding="utf-8") as f:
        catalog = json.load(f)
    return [
        (float(term["alpha"]), element_from_dict(term, bounds))
        for term in catalog["terms"]
    ]


# _________________________________________________________________________________________________


def write_summary(summary: dict, path: str) -> None:
    """Write the run summary with sorted keys."""
    _ensure_parent(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=4, sort_keys=True)


def load_summary(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
