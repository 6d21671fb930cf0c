"""Pluggable model backends: interfaces, deterministic stubs, registry."""

from .interfaces import (
    BackendSuite,
    CanonicalProposer,
    GroundedProposer,
    ImageEncoder,
    MaskRefiner,
    Proposal,
    ProposalSource,
    RefinementResult,
    TextEncoder,
)
from .registry import (
    BACKENDS_DIR_ENV,
    available_suites,
    build_suite,
    register_backend_kind,
    resolve_suite,
)
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
    "BackendSuite",
    "CanonicalProposer",
    "GroundedProposer",
    "ImageEncoder",
    "MaskRefiner",
    "Proposal",
    "ProposalSource",
    "RefinementResult",
    "TextEncoder",
    "BACKENDS_DIR_ENV",
    "available_suites",
    "build_suite",
    "register_backend_kind",
    "resolve_suite",
    "EmptyMaskRefiner",
    "EmptyProposer",
    "FixedProposer",
    "GridProposer",
    "HashingTextEncoder",
    "IdentityMaskRefiner",
    "MeanColorImageEncoder",
    "ShrinkMaskRefiner",
]
