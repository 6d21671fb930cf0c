"""Named registry of backend suites.

A suite is selected by name (built-in or registered via a directory of
JSON suite files) or by a direct path to a suite file. Suite files compose
registered component kinds with parameters:

.. code-block:: json

    {
      "image_encoder": {"kind": "mean-color", "palette": {"tomato": [220, 30, 30]}},
      "text_encoder": {"kind": "hashing"},
      "canonical_proposer": {"kind": "grid", "rows": 2, "cols": 2},
      "grounded_proposer": {"kind": "fixed", "boxes": [[0, 0, 32, 32]]},
      "mask_refiner": {"kind": "shrink", "shrink": 0.1, "quality": 0.9}
    }

The environment variable ``CROPSCOUT_BACKENDS_DIR`` overrides the suite
directory; every ``*.json`` file there registers a suite under its stem.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Callable, Mapping

from ..embeddings import EMBEDDING_DIM
from ..errors import DataFormatError
from .interfaces import BackendSuite, ProposalSource
from .stubs import (
    EmptyMaskRefiner,
    EmptyProposer,
    FixedProposer,
    GridProposer,
    HashingTextEncoder,
    IdentityMaskRefiner,
    MeanColorImageEncoder,
    ShrinkMaskRefiner,
)

__all__ = [
    "BACKENDS_DIR_ENV",
    "available_suites",
    "build_suite",
    "resolve_suite",
    "register_backend_kind",
]

BACKENDS_DIR_ENV = "CROPSCOUT_BACKENDS_DIR"

_ROLES = (
    "image_encoder",
    "text_encoder",
    "canonical_proposer",
    "grounded_proposer",
    "mask_refiner",
)

# Extension point for real-model adapters: factories keyed by (role, kind),
# called as factory(params, seed, embedding_dim). Register before building
# the service app (or at import time in the server process).
_EXTENSIONS: dict[tuple[str, str], Callable[[dict[str, Any], int, int], Any]] = {}


def register_backend_kind(
    role: str, kind: str, factory: Callable[[dict[str, Any], int, int], Any]
) -> None:
    """Make a custom component constructible from suite specs."""
    if role not in _ROLES:
        raise ValueError(f"unknown backend role {role!r}; roles: {_ROLES}")
    _EXTENSIONS[(role, kind)] = factory


def _extension(role: str, params: dict[str, Any], seed: int, dim: int):
    factory = _EXTENSIONS.get((role, params["kind"]))
    if factory is None:
        return None
    kind_params = dict(params)
    kind_params.pop("kind")
    return factory(kind_params, seed, dim)


def _build_image_encoder(params: dict[str, Any], seed: int, dim: int):
    extension = _extension("image_encoder", params, seed, dim)
    if extension is not None:
        return extension
    kind = params.pop("kind")
    if kind == "mean-color":
        return MeanColorImageEncoder(
            dim=int(params.pop("dim", dim)),
            seed=int(params.pop("seed", seed)),
            palette=params.pop("palette", None),
        )
    raise ValueError(f"unknown image encoder kind {kind!r}")


def _build_text_encoder(params: dict[str, Any], seed: int, dim: int):
    extension = _extension("text_encoder", params, seed, dim)
    if extension is not None:
        return extension
    kind = params.pop("kind")
    if kind == "hashing":
        return HashingTextEncoder(
            dim=int(params.pop("dim", dim)), seed=int(params.pop("seed", seed))
        )
    raise ValueError(f"unknown text encoder kind {kind!r}")


def _build_proposer(
    params: dict[str, Any], default_source: ProposalSource, role: str, seed: int, dim: int
):
    extension = _extension(role, params, seed, dim)
    if extension is not None:
        return extension
    kind = params.pop("kind")
    source = ProposalSource(params.pop("source", default_source))
    if kind == "grid":
        return GridProposer(
            rows=int(params.pop("rows", 2)), cols=int(params.pop("cols", 2)), source=source
        )
    if kind == "fixed":
        return FixedProposer(boxes=params.pop("boxes"), source=source)
    if kind == "empty":
        return EmptyProposer(source=source)
    raise ValueError(f"unknown proposer kind {kind!r}")


def _build_mask_refiner(params: dict[str, Any], seed: int, dim: int):
    extension = _extension("mask_refiner", params, seed, dim)
    if extension is not None:
        return extension
    kind = params.pop("kind")
    if kind == "shrink":
        return ShrinkMaskRefiner(
            shrink=float(params.pop("shrink", 0.1)), quality=float(params.pop("quality", 0.9))
        )
    if kind == "empty":
        return EmptyMaskRefiner()
    if kind == "identity":
        return IdentityMaskRefiner(quality=float(params.pop("quality", 1.0)))
    raise ValueError(f"unknown mask refiner kind {kind!r}")


def build_suite(
    spec: Mapping[str, Any], seed: int = 0, embedding_dim: int = EMBEDDING_DIM
) -> BackendSuite:
    """Instantiate a suite from a component spec mapping.

    Components without an explicit ``seed`` parameter inherit ``seed``, so
    one run-level seed makes the whole suite reproducible.
    """
    missing = [role for role in _ROLES if role not in spec]
    if missing:
        raise ValueError(f"backend suite spec missing roles: {missing}")
    for role in _ROLES:
        if not isinstance(spec[role], Mapping) or "kind" not in spec[role]:
            raise ValueError(f"backend suite role {role!r} must be an object with a 'kind'")

    def params(role: str) -> dict[str, Any]:
        return dict(spec[role])

    return BackendSuite(
        image_encoder=_build_image_encoder(params("image_encoder"), seed, embedding_dim),
        text_encoder=_build_text_encoder(params("text_encoder"), seed, embedding_dim),
        canonical_proposer=_build_proposer(
            params("canonical_proposer"),
            ProposalSource.CANONICAL_UNKNOWN,
            "canonical_proposer",
            seed,
            embedding_dim,
        ),
        grounded_proposer=_build_proposer(
            params("grounded_proposer"),
            ProposalSource.GROUNDED,
            "grounded_proposer",
            seed,
            embedding_dim,
        ),
        mask_refiner=_build_mask_refiner(params("mask_refiner"), seed, embedding_dim),
    )


_BUILTIN_SUITES: dict[str, dict[str, Any]] = {
    "stub": {
        "image_encoder": {"kind": "mean-color"},
        "text_encoder": {"kind": "hashing"},
        "canonical_proposer": {"kind": "grid", "rows": 2, "cols": 2},
        "grounded_proposer": {"kind": "grid", "rows": 1, "cols": 1},
        "mask_refiner": {"kind": "shrink"},
    },
    "stub-empty-mask": {
        "image_encoder": {"kind": "mean-color"},
        "text_encoder": {"kind": "hashing"},
        "canonical_proposer": {"kind": "grid", "rows": 2, "cols": 2},
        "grounded_proposer": {"kind": "empty", "source": "grounded"},
        "mask_refiner": {"kind": "empty"},
    },
    "stub-identity-mask": {
        "image_encoder": {"kind": "mean-color"},
        "text_encoder": {"kind": "hashing"},
        "canonical_proposer": {"kind": "grid", "rows": 2, "cols": 2},
        "grounded_proposer": {"kind": "empty", "source": "grounded"},
        "mask_refiner": {"kind": "identity"},
    },
}


def _suites_dir() -> Path | None:
    value = os.environ.get(BACKENDS_DIR_ENV)
    return Path(value) if value else None


def available_suites() -> list[str]:
    """Built-in suite names plus any registered via the suites directory."""
    names = set(_BUILTIN_SUITES)
    directory = _suites_dir()
    if directory is not None and directory.is_dir():
        names.update(p.stem for p in directory.glob("*.json"))
    return sorted(names)


def _load_suite_file(path: Path) -> dict[str, Any]:
    try:
        spec = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataFormatError(f"cannot read backend suite file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"invalid JSON in backend suite file {path}: {exc}") from exc
    if not isinstance(spec, dict):
        raise DataFormatError(f"backend suite file {path} must contain a JSON object")
    return spec


def resolve_suite(
    identifier: str, seed: int = 0, embedding_dim: int = EMBEDDING_DIM
) -> BackendSuite:
    """Resolve a suite by built-in name, registered name, or file path."""
    if identifier in _BUILTIN_SUITES:
        return build_suite(_BUILTIN_SUITES[identifier], seed=seed, embedding_dim=embedding_dim)

    directory = _suites_dir()
    if directory is not None:
        candidate = directory / f"{identifier}.json"
        if candidate.is_file():
            return build_suite(
                _load_suite_file(candidate), seed=seed, embedding_dim=embedding_dim
            )

    as_path = Path(identifier)
    if identifier.endswith(".json") or as_path.is_file():
        if not as_path.is_file():
            raise ValueError(f"backend suite file not found: {identifier}")
        return build_suite(_load_suite_file(as_path), seed=seed, embedding_dim=embedding_dim)

    raise ValueError(
        f"unknown backend suite {identifier!r}; available: {', '.join(available_suites())}"
    )
